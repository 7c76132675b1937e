use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clusterenum::clustering::{EmConfig, KMeansConfig};
use clusterenum::criteria::Criterion;
use clusterenum::enumeration::{enumerate, CandidateFamily, Clusterer, EnumConfig, EnumError};
use clusterenum::harness::{
    curves_csv, ingest_csv, report_csv, report_json, run_monte_carlo, write_file, DataSource, HarnessError, McConfig,
    Normalize,
};
use clusterenum::stream::derive_stream;
use clusterenum::synthdata::{data1_spec, data2_spec, sample_mixture, MixtureSpec};

#[derive(Parser)]
#[command(name = "clusterenum", version, about = "Estimate the number of clusters with BIC-type criteria")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic dataset and write it as CSV (plus a JSON sidecar).
    Generate(GenerateArgs),
    /// Enumerate candidate models on one dataset.
    Enumerate(EnumerateArgs),
    /// Monte Carlo benchmark over repeated draws or initializations.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Synthetic {
    Data1,
    Data2,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchData {
    Data1,
    Data2,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    None,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    dataset: Synthetic,
    /// Size multiplier for data1.
    #[arg(long, default_value_t = 1)]
    gamma: usize,
    /// Points per cluster for data2.
    #[arg(long, default_value_t = 100)]
    nk: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnumFlags {
    #[arg(long)]
    lmin: Option<usize>,
    #[arg(long)]
    lmax: Option<usize>,
    #[arg(long, default_value = "em")]
    clusterer: String,
    #[arg(long, default_value = "bic-n,bic-o", value_delimiter = ',')]
    criteria: Vec<String>,
    /// Also select by the knee point of each curve.
    #[arg(long)]
    knee: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// EM convergence tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Covariance ridge, relative to trace(Σ)/r.
    #[arg(long, default_value_t = 1e-8)]
    reg_eps: f64,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Counts and covariances scored by the Gaussian criteria:
    /// mixture, mixture-hard or partition.
    #[arg(long, default_value = "mixture")]
    estimates: String,
    /// Swaps per candidate for rs-em and rs-kmeans.
    #[arg(long, default_value_t = 20)]
    swaps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    input: PathBuf,
    /// The last column holds class labels.
    #[arg(long)]
    labels: bool,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormArg,
    /// Rough guess of K, used for the default family 1..=2·guess.
    #[arg(long)]
    guess: Option<usize>,
    #[command(flatten)]
    flags: EnumFlags,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    dataset: BenchData,
    #[arg(long, default_value_t = 100)]
    mc: usize,
    #[arg(long, default_value_t = 1)]
    gamma: usize,
    #[arg(long, default_value_t = 100)]
    nk: usize,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    labels: bool,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormArg,
    /// True number of clusters for unlabeled files.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    flags: EnumFlags,
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Enum(EnumError::AllCandidatesInvalid(_)) => Failure::Numerical(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<EnumError> for Failure {
    fn from(e: EnumError) -> Self {
        HarnessError::from(e).into()
    }
}

fn normalize(n: NormArg) -> Normalize {
    match n {
        NormArg::None => Normalize::None,
        NormArg::Mean => Normalize::Mean,
    }
}

impl EnumFlags {
    fn clusterer(&self) -> Result<Clusterer, Failure> {
        self.clusterer.parse().map_err(Failure::Input)
    }

    fn criteria(&self) -> Result<Vec<Criterion>, Failure> {
        let mut out = Vec::new();
        for s in &self.criteria {
            let c: Criterion = s.parse().map_err(|e: clusterenum::criteria::CriteriaError| Failure::Input(e.to_string()))?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
        if out.is_empty() {
            return Err(Failure::Input("no criteria given".into()));
        }
        Ok(out)
    }

    fn config(&self) -> Result<EnumConfig, Failure> {
        if !(self.tol >= 0.0) || !(self.reg_eps >= 0.0) {
            return Err(Failure::Input("--tol and --reg-eps must be non-negative".into()));
        }
        Ok(EnumConfig {
            em: EmConfig { max_iter: self.max_iter, tol: self.tol, reg_scale: self.reg_eps },
            kmeans: KMeansConfig::default(),
            replicates: self.replicates.max(1),
            n_swaps: self.swaps,
            knee: self.knee,
            estimates: self.estimates.parse().map_err(Failure::Input)?,
        })
    }

    fn family(&self, guess: Option<usize>, n: usize) -> Result<Option<CandidateFamily>, Failure> {
        match (self.lmin, self.lmax, guess) {
            (None, None, None) => Ok(None),
            (None, None, Some(g)) => Ok(Some(CandidateFamily::around(g, n)?)),
            (lo, Some(hi), _) => Ok(Some(CandidateFamily::new(lo.unwrap_or(1), hi)?)),
            (Some(_), None, _) => Err(Failure::Input("--lmin needs --lmax".into())),
        }
    }

    fn emit(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(p) => write_file(p, text).map_err(Failure::from),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    dataset: &'a str,
    seed: u64,
    spec: &'a MixtureSpec,
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let (name, spec) = match a.dataset {
        Synthetic::Data1 if a.gamma >= 1 => ("data1", data1_spec(a.gamma)),
        Synthetic::Data2 if a.nk >= 1 => ("data2", data2_spec(a.nk)),
        _ => return Err(Failure::Input("--gamma and --nk must be at least 1".into())),
    };
    let draw = sample_mixture(&spec, &mut derive_stream(a.seed, &[])).map_err(|e| Failure::Input(e.to_string()))?;
    let r = draw.data.r();
    let mut s: String = (1..=r).map(|j| format!("f{j},")).collect();
    s.push_str("label\n");
    for (x, l) in draw.data.rows().zip(&draw.labels) {
        for v in x {
            s.push_str(&format!("{v:?},"));
        }
        s.push_str(&format!("{}\n", l + 1));
    }
    write_file(&a.out, &s)?;
    let side = Sidecar { dataset: name, seed: a.seed, spec: &spec };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Failure::Input(e.to_string()))?;
    let mut side_path = a.out.clone().into_os_string();
    side_path.push(".json");
    write_file(&PathBuf::from(side_path), &json)?;
    Ok(())
}

fn run_enumerate(a: EnumerateArgs) -> Result<(), Failure> {
    let ing = ingest_csv(&a.input, a.labels, normalize(a.normalize))?;
    let n = ing.data.n();
    let guess = a.guess.or(ing.n_labels());
    let family = match a.flags.family(guess, n)? {
        Some(f) => f,
        None => return Err(Failure::Input("give --lmin/--lmax, --guess, or a labeled file".into())),
    };
    let report = enumerate(
        &ing.data,
        &a.input.display().to_string(),
        family,
        a.flags.clusterer()?,
        &a.flags.criteria()?,
        &a.flags.config()?,
        a.flags.seed,
    )?;
    let text = match a.flags.format {
        Format::Csv => curves_csv(&report),
        Format::Json => serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.to_string()))?,
    };
    a.flags.emit(&text)
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let source = match a.dataset {
        BenchData::Data1 => DataSource::Data1 { gamma: a.gamma.max(1) },
        BenchData::Data2 => DataSource::Data2 { n_k: a.nk.max(1) },
        BenchData::File => DataSource::File {
            path: a.input.clone().ok_or_else(|| Failure::Input("--dataset file needs --input".into()))?,
            labels: a.labels,
            normalize: normalize(a.normalize),
            k: a.k,
        },
    };
    let family = a.flags.family(None, usize::MAX)?;
    let cfg = McConfig {
        mc: a.mc,
        seed: a.flags.seed,
        family,
        clusterer: a.flags.clusterer()?,
        criteria: a.flags.criteria()?,
        source,
        enum_config: a.flags.config()?,
    };
    let result = run_monte_carlo(&cfg)?;
    if result.criteria.iter().all(|c| c.invalid == cfg.mc) {
        return Err(Failure::Numerical("every trial had only invalid candidates".into()));
    }
    let text = match a.flags.format {
        Format::Csv => report_csv(&result),
        Format::Json => report_json(&result)?,
    };
    a.flags.emit(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Enumerate(a) => run_enumerate(a),
        Cmd::Bench(a) => bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
