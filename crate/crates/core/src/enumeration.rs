//! Two-step cluster enumeration: for every candidate `l`, fit a clustering,
//! hard-assign, score with each criterion, then select `K̂`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    em_fit, hard_assign, init_gmm_from_centroids, kmeans, kmeanspp_init, random_swap_em, random_swap_kmeans,
    rows_at, ClusterError, DataSet, EmConfig, EmFit, FitDiagnostics, GmmParams, HardPartition, KMeansConfig,
    KMeansFit,
};
use crate::criteria::{score, CandidateScore, Criterion, Estimates, ModelDims};
use crate::stream::{derive_stream, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnumError {
    #[error("invalid candidate family: L_min = {l_min}, L_max = {l_max}")]
    InvalidFamily { l_min: usize, l_max: usize },
    #[error("no criteria requested")]
    NoCriteria,
    #[error("every candidate is invalid under {0}")]
    AllCandidatesInvalid(Criterion),
    #[error("no valid candidate to select from")]
    NoValidCandidate,
    #[error("knee point needs three consecutive valid candidates")]
    CurveTooShort,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFamily {
    pub l_min: usize,
    pub l_max: usize,
}

impl CandidateFamily {
    pub fn new(l_min: usize, l_max: usize) -> Result<Self, EnumError> {
        if l_min == 0 || l_min > l_max {
            return Err(EnumError::InvalidFamily { l_min, l_max });
        }
        Ok(Self { l_min, l_max })
    }

    /// `1..=min(2·guess, N−1)`, the usual bracket when only a rough guess of K is known.
    pub fn around(guess: usize, n: usize) -> Result<Self, EnumError> {
        Self::new(1, (2 * guess).min(n.saturating_sub(1)))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.l_min..=self.l_max
    }

    pub fn len(&self) -> usize {
        self.l_max - self.l_min + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clusterer {
    Em,
    Kmeans,
    RsEm,
    RsKmeans,
}

impl Clusterer {
    pub fn id(self) -> &'static str {
        match self {
            Clusterer::Em => "em",
            Clusterer::Kmeans => "kmeans",
            Clusterer::RsEm => "rs-em",
            Clusterer::RsKmeans => "rs-kmeans",
        }
    }

    fn uses_em(self) -> bool {
        matches!(self, Clusterer::Em | Clusterer::RsEm)
    }

    fn swaps(self) -> bool {
        matches!(self, Clusterer::RsEm | Clusterer::RsKmeans)
    }
}

impl fmt::Display for Clusterer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Clusterer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "em" => Ok(Clusterer::Em),
            "kmeans" | "k-means" => Ok(Clusterer::Kmeans),
            "rs-em" | "rsem" => Ok(Clusterer::RsEm),
            "rs-kmeans" | "rs-k-means" => Ok(Clusterer::RsKmeans),
            other => Err(format!("unknown clusterer {other:?}")),
        }
    }
}

/// Counts and covariances scored by the Gaussian criteria. The mixture
/// variants apply to EM clusterers only; K-means fits always use the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    /// Mixture covariances, counts `round(N τ̂_m)`.
    #[default]
    Mixture,
    /// Mixture covariances, counts of the hard clusters.
    MixtureHard,
    /// Hard-cluster counts and sample covariances.
    Partition,
}

impl FromStr for EstimateSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mixture" => Ok(EstimateSource::Mixture),
            "mixture-hard" => Ok(EstimateSource::MixtureHard),
            "partition" => Ok(EstimateSource::Partition),
            other => Err(format!("unknown estimate source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumConfig {
    pub em: EmConfig,
    pub kmeans: KMeansConfig,
    /// Independent K-means++ starts per candidate; the best objective is kept.
    pub replicates: usize,
    /// Swaps per candidate for the random-swap clusterers.
    pub n_swaps: usize,
    /// Also compute the knee point of every curve and use it for selection.
    pub knee: bool,
    pub estimates: EstimateSource,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            kmeans: KMeansConfig::default(),
            replicates: 1,
            n_swaps: 20,
            knee: false,
            estimates: EstimateSource::Mixture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Argmax,
    Knee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCurve {
    pub criterion: Criterion,
    /// One score per candidate, `l = L_min..=L_max`.
    pub scores: Vec<CandidateScore>,
    pub argmax: Option<usize>,
    pub knee: Option<usize>,
    /// `K̂` under `rule`; None when every candidate is invalid.
    pub selected: Option<usize>,
    pub rule: SelectionRule,
}

impl BicCurve {
    pub fn from_scores(criterion: Criterion, scores: Vec<CandidateScore>, use_knee: bool) -> Self {
        let argmax = select_k(&scores).ok();
        let knee = if use_knee { knee_point(&scores).ok() } else { None };
        let (selected, rule) = match knee {
            Some(k) => (Some(k), SelectionRule::Knee),
            None => (argmax, SelectionRule::Argmax),
        };
        Self { criterion, scores, argmax, knee, selected, rule }
    }

    pub fn score_at(&self, l: usize) -> Option<&CandidateScore> {
        self.scores.iter().find(|s| s.l == l)
    }
}

/// Fit diagnostics of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDiagnostics {
    pub l: usize,
    pub em: Option<FitDiagnostics>,
    pub kmeans: Option<FitDiagnostics>,
    pub em_reseeds: usize,
    pub swaps_accepted: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub criterion: Criterion,
    pub l: usize,
    /// Mixture fitted by EM for that candidate (None for K-means fits).
    pub params: Option<GmmParams>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub dataset: String,
    pub n: usize,
    pub r: usize,
    pub seed: u64,
    pub family: CandidateFamily,
    pub clusterer: Clusterer,
    pub config: EnumConfig,
    pub curves: Vec<BicCurve>,
    /// Model chosen by the first requested criterion.
    pub selected_model: Option<SelectedModel>,
    pub diagnostics: Vec<CandidateDiagnostics>,
}

impl EnumerationReport {
    pub fn curve(&self, criterion: Criterion) -> Option<&BicCurve> {
        self.curves.iter().find(|c| c.criterion == criterion)
    }

    pub fn k_hat(&self, criterion: Criterion) -> Option<usize> {
        self.curve(criterion).and_then(|c| c.selected)
    }
}

/// `argmax` over valid candidates; ties go to the smallest `l`.
pub fn select_k(scores: &[CandidateScore]) -> Result<usize, EnumError> {
    let mut best: Option<&CandidateScore> = None;
    for s in scores.iter().filter(|s| s.valid && s.total.is_finite()) {
        match best {
            Some(b) if !(s.total > b.total || (s.total == b.total && s.l < b.l)) => {}
            _ => best = Some(s),
        }
    }
    best.map(|s| s.l).ok_or(EnumError::NoValidCandidate)
}

/// Knee of a criterion curve: the interior candidate with the most negative
/// second difference `BIC(l−1) − 2 BIC(l) + BIC(l+1)`, i.e. where a rising
/// curve bends over most sharply. Only candidates whose neighbours at `l ± 1`
/// are valid take part; ties go to the smallest `l`.
pub fn knee_point(scores: &[CandidateScore]) -> Result<usize, EnumError> {
    let mut sorted: Vec<&CandidateScore> = scores.iter().collect();
    sorted.sort_by_key(|s| s.l);
    let ok = |s: &CandidateScore| s.valid && s.total.is_finite();
    let mut best: Option<(f64, usize)> = None;
    for w in sorted.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        if !(ok(a) && ok(b) && ok(c)) || a.l + 1 != b.l || b.l + 1 != c.l {
            continue;
        }
        let d2 = a.total - 2.0 * b.total + c.total;
        if best.is_none_or(|(v, _)| d2 < v) {
            best = Some((d2, b.l));
        }
    }
    best.map(|(_, l)| l).ok_or(EnumError::CurveTooShort)
}

struct CandidateFit {
    em: Option<EmFit>,
    kmeans: Option<KMeansFit>,
    em_partition: Option<HardPartition>,
    diagnostics: CandidateDiagnostics,
}

fn fit_kmeans(data: &DataSet, seeds: &[Vec<usize>], cfg: &EnumConfig, rng: &mut Stream) -> Result<(KMeansFit, usize), ClusterError> {
    let mut best: Option<KMeansFit> = None;
    for s in seeds {
        let fit = kmeans(data, rows_at(data, s), &cfg.kmeans)?;
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    let base = best.expect("at least one replicate");
    if cfg.n_swaps > 0 {
        let out = random_swap_kmeans(data, base, cfg.n_swaps, &cfg.kmeans, rng)?;
        Ok((out.best, out.accepted.len()))
    } else {
        Ok((base, 0))
    }
}

fn fit_em(data: &DataSet, seeds: &[Vec<usize>], cfg: &EnumConfig, swaps: bool, rng: &mut Stream) -> Result<(EmFit, usize), ClusterError> {
    let mut best: Option<EmFit> = None;
    let mut last_err = None;
    for s in seeds {
        let init = init_gmm_from_centroids(data, &rows_at(data, s), cfg.em.reg_scale)?;
        match em_fit(data, init, &cfg.em) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.loglik() > b.loglik()) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let base = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one replicate"),
    };
    if swaps && cfg.n_swaps > 0 {
        let out = random_swap_em(data, base, cfg.n_swaps, &cfg.em, rng)?;
        Ok((out.best, out.accepted.len()))
    } else {
        Ok((base, 0))
    }
}

fn fit_candidate(data: &DataSet, l: usize, clusterer: Clusterer, criteria: &[Criterion], cfg: &EnumConfig, seed: u64) -> CandidateFit {
    let mut rng = derive_stream(seed, &[l as u64]);
    let mut diag = CandidateDiagnostics { l, em: None, kmeans: None, em_reseeds: 0, swaps_accepted: 0, errors: Vec::new() };
    let mut out = CandidateFit { em: None, kmeans: None, em_partition: None, diagnostics: diag.clone() };
    // every fit of this candidate starts from the same K-means++ seedings
    let seeds: Result<Vec<Vec<usize>>, ClusterError> =
        (0..cfg.replicates.max(1)).map(|_| kmeanspp_init(data, l, &mut rng)).collect();
    let seeds = match seeds {
        Ok(s) => s,
        Err(e) => {
            diag.errors.push(e.to_string());
            out.diagnostics = diag;
            return out;
        }
    };
    let need_em = clusterer.uses_em() && criteria.iter().any(|c| !c.is_spherical());
    let need_km = !clusterer.uses_em() || criteria.iter().any(|c| c.is_spherical());
    if need_em {
        let mut swap_rng = derive_stream(seed, &[l as u64, 1]);
        match fit_em(data, &seeds, cfg, clusterer.swaps(), &mut swap_rng) {
            Ok((fit, acc)) => {
                diag.em = Some(fit.diagnostics.clone());
                diag.em_reseeds = fit.reseed_at.len();
                diag.swaps_accepted += acc;
                match hard_assign(&fit.responsibilities, data) {
                    Ok(p) => out.em_partition = Some(p),
                    Err(e) => diag.errors.push(format!("em: {e}")),
                }
                out.em = Some(fit);
            }
            Err(e) => diag.errors.push(format!("em: {e}")),
        }
    }
    if need_km {
        let mut km_cfg = *cfg;
        if !clusterer.swaps() {
            km_cfg.n_swaps = 0;
        }
        let mut swap_rng = derive_stream(seed, &[l as u64, 2]);
        match fit_kmeans(data, &seeds, &km_cfg, &mut swap_rng) {
            Ok((fit, acc)) => {
                diag.kmeans = Some(fit.diagnostics.clone());
                diag.swaps_accepted += acc;
                out.kmeans = Some(fit);
            }
            Err(e) => diag.errors.push(format!("kmeans: {e}")),
        }
    }
    out.diagnostics = diag;
    out
}

/// Runs the enumeration and keeps curves whose candidates are all invalid
/// (their `selected` is None) instead of failing.
pub fn enumerate_curves(
    data: &DataSet,
    dataset: &str,
    family: CandidateFamily,
    clusterer: Clusterer,
    criteria: &[Criterion],
    cfg: &EnumConfig,
    seed: u64,
) -> Result<EnumerationReport, EnumError> {
    if criteria.is_empty() {
        return Err(EnumError::NoCriteria);
    }
    CandidateFamily::new(family.l_min, family.l_max)?;
    let dims = ModelDims::new(data.r());
    let ls: Vec<usize> = family.iter().collect();
    let fits: Vec<CandidateFit> =
        ls.par_iter().map(|&l| fit_candidate(data, l, clusterer, criteria, cfg, seed)).collect();

    let curves: Vec<BicCurve> = criteria
        .iter()
        .map(|&c| {
            let scores = fits
                .iter()
                .zip(&ls)
                .map(|(f, &l)| {
                    let partition = if clusterer.uses_em() && !c.is_spherical() {
                        f.em_partition.as_ref()
                    } else {
                        f.kmeans.as_ref().map(|k| &k.partition)
                    };
                    let params = if clusterer.uses_em() { f.em.as_ref().map(|e| &e.params) } else { None };
                    let est = match (cfg.estimates, params) {
                        (EstimateSource::Mixture, Some(p)) => Estimates::Mixture(p),
                        (EstimateSource::MixtureHard, Some(p)) => Estimates::MixtureHard(p),
                        _ => Estimates::Partition,
                    };
                    match partition {
                        Some(p) => score(c, p, est, &dims),
                        None => CandidateScore::invalid(l, c, f.diagnostics.errors.join("; ")),
                    }
                })
                .collect();
            BicCurve::from_scores(c, scores, cfg.knee)
        })
        .collect();

    let selected_model = curves[0].selected.map(|l| {
        let f = &fits[l - family.l_min];
        let c = curves[0].criterion;
        let from_em = clusterer.uses_em() && !c.is_spherical();
        let counts = if from_em {
            f.em_partition.as_ref().map(|p| p.counts().to_vec())
        } else {
            f.kmeans.as_ref().map(|k| k.partition.counts().to_vec())
        };
        SelectedModel {
            criterion: c,
            l,
            params: if from_em { f.em.as_ref().map(|e| e.params.clone()) } else { None },
            counts: counts.unwrap_or_default(),
        }
    });

    Ok(EnumerationReport {
        dataset: dataset.to_string(),
        n: data.n(),
        r: data.r(),
        seed,
        family,
        clusterer,
        config: *cfg,
        curves,
        selected_model,
        diagnostics: fits.into_iter().map(|f| f.diagnostics).collect(),
    })
}

/// Fits every candidate in `family`, scores it with each criterion and
/// selects `K̂` per criterion.
///
/// Candidate `l` draws its randomness from `(seed, l)` only, so enlarging the
/// family never changes existing scores. Gaussian criteria score the EM fit
/// (mixture covariances and expected counts unless `cfg.estimates` says
/// otherwise) when the clusterer is EM-based; spherical criteria always score
/// the K-means fit, which starts from the same K-means++ seeding.
pub fn enumerate(
    data: &DataSet,
    dataset: &str,
    family: CandidateFamily,
    clusterer: Clusterer,
    criteria: &[Criterion],
    cfg: &EnumConfig,
    seed: u64,
) -> Result<EnumerationReport, EnumError> {
    let report = enumerate_curves(data, dataset, family, clusterer, criteria, cfg, seed)?;
    if let Some(c) = report.curves.iter().find(|c| c.selected.is_none()) {
        return Err(EnumError::AllCandidatesInvalid(c.criterion));
    }
    Ok(report)
}
