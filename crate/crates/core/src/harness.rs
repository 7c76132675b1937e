//! CSV ingestion, the Monte Carlo driver, detection metrics and reports.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, DataSet};
use crate::criteria::{penalty_of, Criterion, ModelDims};
use crate::enumeration::{enumerate_curves, CandidateFamily, Clusterer, EnumConfig, EnumError, EnumerationReport};
use crate::stream::{derive_seed, derive_stream};
use crate::synthdata::{gen_data1, gen_data2, LabeledDraw};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("column {0} has zero mean and cannot be mean-normalized")]
    ZeroMeanColumn(usize),
    #[error("input has no data rows")]
    Empty,
    #[error("true number of clusters unknown: pass labels or an explicit K")]
    UnknownK,
    #[error("Monte Carlo count must be at least 1")]
    ZeroTrials,
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalize {
    #[default]
    None,
    /// Divide every feature by its column mean.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: DataSet,
    /// 0-based label ids in order of first appearance.
    pub labels: Option<Vec<usize>>,
    pub label_names: Vec<String>,
    pub header: Option<Vec<String>>,
}

impl Ingested {
    pub fn n_labels(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.label_names.len())
    }
}

/// Reads a rectangular CSV. The first record is a header when none of its
/// cells parses as a number. With `has_labels`, the last column holds the
/// class labels (numbers or strings).
pub fn ingest_reader<R: Read>(reader: R, has_labels: bool, normalize: Normalize) -> Result<Ingested, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Parse { row: i + 1, col: 0, msg: e.to_string() })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if i == 0 && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(HarnessError::Parse {
                row: i + 1,
                col: rec.len().min(w) + 1,
                msg: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let n_feat = if has_labels { w.saturating_sub(1) } else { w };
        if n_feat == 0 {
            return Err(HarnessError::Parse { row: i + 1, col: 1, msg: "no feature columns".into() });
        }
        let mut row = Vec::with_capacity(n_feat);
        for (j, cell) in rec.iter().take(n_feat).enumerate() {
            let v: f64 = cell.parse().map_err(|_| HarnessError::Parse {
                row: i + 1,
                col: j + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(HarnessError::Parse { row: i + 1, col: j + 1, msg: format!("non-finite value {cell:?}") });
            }
            row.push(v);
        }
        if has_labels {
            raw_labels.push(rec[w - 1].to_string());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(HarnessError::Empty);
    }
    if normalize == Normalize::Mean {
        let r = rows[0].len();
        let n = rows.len() as f64;
        for j in 0..r {
            let mean = rows.iter().map(|x| x[j]).sum::<f64>() / n;
            if mean == 0.0 {
                return Err(HarnessError::ZeroMeanColumn(j + 1));
            }
            rows.iter_mut().for_each(|x| x[j] /= mean);
        }
    }
    let (labels, label_names) = if has_labels {
        let mut names: Vec<String> = Vec::new();
        let ids = raw_labels
            .into_iter()
            .map(|s| match names.iter().position(|n| *n == s) {
                Some(p) => p,
                None => {
                    names.push(s);
                    names.len() - 1
                }
            })
            .collect();
        (Some(ids), names)
    } else {
        (None, Vec::new())
    };
    Ok(Ingested { data: DataSet::new(rows)?, labels, label_names, header })
}

pub fn ingest_csv(path: &Path, has_labels: bool, normalize: Normalize) -> Result<Ingested, HarnessError> {
    ingest_reader(std::fs::File::open(path)?, has_labels, normalize)
}

/// Where each Monte Carlo trial gets its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Data1 { gamma: usize },
    Data2 { n_k: usize },
    /// Fixed dataset; only the initialization varies between trials.
    File { path: PathBuf, labels: bool, normalize: Normalize, k: Option<usize> },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Data1 { gamma } => format!("data1(gamma={gamma})"),
            DataSource::Data2 { n_k } => format!("data2(n_k={n_k})"),
            DataSource::File { path, .. } => path.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub mc: usize,
    pub seed: u64,
    /// Defaults to `1..=min(2K, N−1)`.
    pub family: Option<CandidateFamily>,
    pub clusterer: Clusterer,
    pub criteria: Vec<Criterion>,
    pub source: DataSource,
    pub enum_config: EnumConfig,
}

/// Summary of one criterion (and selection rule) over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    /// Criterion id, with a `_knee` suffix for knee-point selection.
    pub key: String,
    pub criterion: Criterion,
    pub knee: bool,
    pub p_det: f64,
    pub p_under: f64,
    pub p_over: f64,
    /// Mean |K − K̂| over trials with a valid selection; NaN if there are none.
    #[serde(with = "crate::float_serde")]
    pub mae: f64,
    /// `(l, count)` for `l = L_min..=L_max`.
    pub histogram: Vec<(usize, usize)>,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// K̂ per entry of `McResult::criteria`, None when no candidate was valid.
    pub k_hat: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub config: McConfig,
    pub true_k: usize,
    pub family: CandidateFamily,
    pub criteria: Vec<CriterionResult>,
    pub trials: Vec<TrialRecord>,
    pub wall_clock_secs: f64,
}

impl McResult {
    pub fn get(&self, key: &str) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.key == key)
    }

    /// K̂ of every trial for `key`.
    pub fn k_hats(&self, key: &str) -> Vec<Option<usize>> {
        let Some(j) = self.criteria.iter().position(|c| c.key == key) else {
            return Vec::new();
        };
        self.trials.iter().map(|t| t.k_hat[j]).collect()
    }

    /// Copy with the timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> McResult {
        McResult { wall_clock_secs: 0.0, ..self.clone() }
    }
}

/// Fraction of estimates equal to `k`.
pub fn metric_p_det(k_hats: &[usize], k: usize) -> f64 {
    k_hats.iter().filter(|&&x| x == k).count() as f64 / k_hats.len() as f64
}

/// Fraction of estimates below `k`.
pub fn metric_p_under(k_hats: &[usize], k: usize) -> f64 {
    k_hats.iter().filter(|&&x| x < k).count() as f64 / k_hats.len() as f64
}

/// Mean of `|k − K̂|`.
pub fn metric_mae(k_hats: &[usize], k: usize) -> f64 {
    k_hats.iter().map(|&x| x.abs_diff(k) as f64).sum::<f64>() / k_hats.len() as f64
}

fn summarize(key: String, criterion: Criterion, knee: bool, picks: &[Option<usize>], k: usize, family: CandidateFamily) -> CriterionResult {
    let mc = picks.len() as f64;
    let valid: Vec<usize> = picks.iter().flatten().copied().collect();
    let count = |f: &dyn Fn(usize) -> bool| valid.iter().filter(|&&x| f(x)).count() as f64 / mc;
    CriterionResult {
        key,
        criterion,
        knee,
        p_det: count(&|x| x == k),
        p_under: count(&|x| x < k),
        p_over: count(&|x| x > k),
        mae: if valid.is_empty() { f64::NAN } else { metric_mae(&valid, k) },
        histogram: family.iter().map(|l| (l, valid.iter().filter(|&&x| x == l).count())).collect(),
        invalid: picks.len() - valid.len(),
    }
}

fn trial_data(source: &DataSource, seed: u64, trial: usize) -> LabeledDraw {
    let mut rng = derive_stream(seed, &[trial as u64, u64::MAX]);
    match source {
        DataSource::Data1 { gamma } => gen_data1(*gamma, &mut rng),
        DataSource::Data2 { n_k } => gen_data2(*n_k, &mut rng),
        DataSource::File { .. } => unreachable!("file sources are loaded once"),
    }
}

/// Entry keys in result order: every criterion, then its knee variant when enabled.
fn entry_keys(cfg: &McConfig) -> Vec<(String, Criterion, bool)> {
    let mut keys: Vec<_> = cfg.criteria.iter().map(|&c| (c.id().to_string(), c, false)).collect();
    if cfg.enum_config.knee {
        keys.extend(cfg.criteria.iter().map(|&c| (format!("{}_knee", c.id()), c, true)));
    }
    keys
}

fn picks_of(report: &EnumerationReport, keys: &[(String, Criterion, bool)]) -> Vec<Option<usize>> {
    keys.iter()
        .map(|(_, c, knee)| report.curve(*c).and_then(|cv| if *knee { cv.knee } else { cv.argmax }))
        .collect()
}

/// Runs `cfg.mc` trials. Trial `i` enumerates with seed `(seed, i)`; synthetic
/// sources draw a fresh dataset per trial, file sources reuse one dataset.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McResult, HarnessError> {
    match &cfg.source {
        DataSource::File { path, labels, normalize, k } => {
            let ing = ingest_csv(path, *labels, *normalize)?;
            let k = k.or(ing.n_labels()).ok_or(HarnessError::UnknownK)?;
            run_monte_carlo_on(cfg, &ing.data, k)
        }
        _ => run_trials(cfg, None),
    }
}

/// Monte Carlo over a fixed, already loaded dataset with known `k`.
pub fn run_monte_carlo_on(cfg: &McConfig, data: &DataSet, k: usize) -> Result<McResult, HarnessError> {
    run_trials(cfg, Some((data, k)))
}

fn run_trials(cfg: &McConfig, fixed: Option<(&DataSet, usize)>) -> Result<McResult, HarnessError> {
    if cfg.mc == 0 {
        return Err(HarnessError::ZeroTrials);
    }
    if cfg.criteria.is_empty() {
        return Err(EnumError::NoCriteria.into());
    }
    let start = Instant::now();
    let keys = entry_keys(cfg);
    let (true_k, n) = match (fixed, &cfg.source) {
        (Some((d, k)), _) => (k, d.n()),
        (None, DataSource::Data1 { gamma }) => (3, 350 * gamma),
        (None, DataSource::Data2 { n_k }) => (10, 10 * n_k),
        (None, DataSource::File { .. }) => unreachable!(),
    };
    let family = match cfg.family {
        Some(f) => CandidateFamily::new(f.l_min, f.l_max)?,
        None => CandidateFamily::around(true_k, n)?,
    };
    let label = cfg.source.describe();
    let trials: Vec<Result<TrialRecord, HarnessError>> = (0..cfg.mc)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, &[i as u64]);
            let report = match fixed {
                Some((d, _)) => enumerate_curves(d, &label, family, cfg.clusterer, &cfg.criteria, &cfg.enum_config, seed)?,
                None => {
                    let draw = trial_data(&cfg.source, cfg.seed, i);
                    enumerate_curves(&draw.data, &label, family, cfg.clusterer, &cfg.criteria, &cfg.enum_config, seed)?
                }
            };
            Ok(TrialRecord { trial: i, k_hat: picks_of(&report, &keys) })
        })
        .collect();
    let trials = trials.into_iter().collect::<Result<Vec<_>, _>>()?;
    let criteria = keys
        .iter()
        .enumerate()
        .map(|(j, (key, c, knee))| {
            let picks: Vec<Option<usize>> = trials.iter().map(|t| t.k_hat[j]).collect();
            summarize(key.clone(), *c, *knee, &picks, true_k, family)
        })
        .collect();
    Ok(McResult {
        config: cfg.clone(),
        true_k,
        family,
        criteria,
        trials,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Two CSV sections: the selection histogram `criterion,l,selection_count`
/// (with an `invalid` bin when some trials had no valid candidate) and the
/// summary `criterion,p_det,p_under,mae`.
pub fn report_csv(result: &McResult) -> String {
    let mut s = String::from("criterion,l,selection_count\n");
    for c in &result.criteria {
        for (l, count) in &c.histogram {
            let _ = writeln!(s, "{},{},{}", c.key, l, count);
        }
        if c.invalid > 0 {
            let _ = writeln!(s, "{},invalid,{}", c.key, c.invalid);
        }
    }
    s.push('\n');
    s.push_str("criterion,p_det,p_under,mae\n");
    for c in &result.criteria {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", c.key, c.p_det, c.p_under, c.mae);
    }
    s
}

pub fn report_json(result: &McResult) -> Result<String, HarnessError> {
    Ok(serde_json::to_string_pretty(result)?)
}

pub fn parse_report_json(s: &str) -> Result<McResult, HarnessError> {
    Ok(serde_json::from_str(s)?)
}

/// Per-candidate curves of one enumeration run:
/// `criterion,l,total,data_fidelity,penalty,valid`.
pub fn curves_csv(report: &EnumerationReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut s = String::from("criterion,l,total,data_fidelity,penalty,valid\n");
    for c in &report.curves {
        for sc in &c.scores {
            let _ = writeln!(s, "{},{},{:?},{},{},{}", c.criterion, sc.l, sc.total, opt(sc.data_fidelity), opt(sc.penalty), sc.valid);
        }
    }
    s.push('\n');
    s.push_str("criterion,argmax,knee,selected\n");
    for c in &report.curves {
        let o = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", c.criterion, o(c.argmax), o(c.knee), o(c.selected));
    }
    s
}

/// Recomputes the penalty of every valid count-only score from its cluster
/// counts and returns the largest absolute discrepancy.
pub fn penalty_bookkeeping_error(report: &EnumerationReport) -> f64 {
    let dims = ModelDims::new(report.r);
    let mut worst: f64 = 0.0;
    for c in &report.curves {
        for s in c.scores.iter().filter(|s| s.valid) {
            let counts: Vec<usize> = s.clusters.iter().map(|t| t.count).collect();
            if let (Ok(p), Some(stored)) = (penalty_of(c.criterion, &counts, report.n, &dims), s.penalty) {
                worst = worst.max((p - stored).abs());
            }
        }
    }
    worst
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}
