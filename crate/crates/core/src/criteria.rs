//! Bayesian cluster-enumeration criteria.
//!
//! Every criterion scores one hard partition of the data. All of them share
//! the common form `2 log L − η`: a data-fidelity term (twice the maximized
//! log-likelihood) and a penalty η. A [`CandidateScore`] stores both terms
//! together with the scale and the model-independent offset needed to
//! reconstruct the criterion's total:
//!
//! ```text
//! total = scale · (data_fidelity − penalty) + offset
//! ```
//!
//! | criterion | penalty η              | scale |
//! |-----------|------------------------|-------|
//! | `bic_n`   | q Σ log N_m            | 1/2   |
//! | `bic_o`   | q l log N              | 1     |
//! | `bic_os`  | (rl + 1) log N         | 1     |
//! | `bic_ns`  | (r + 1) Σ log N_m      | 1/2   |
//! | `bic_g`   | Σ log|J_m| − lq log 2π | 1/2   |
//!
//! with `q = r(r+3)/2` free parameters per Gaussian cluster.
//!
//! Gaussian criteria (`bic_n`, `bic_o`, `bic_g`) take the cluster counts `N_m`
//! from the hard partition and the covariance estimates `Σ̂_m` either from the
//! fitted mixture or, without one, from the partition itself (`Δ_m / N_m`).
//! Their shared data-fidelity term is twice the maximized cluster
//! log-likelihood, in which `tr(Σ̂_m⁻¹ Δ_m)` takes its maximum-likelihood value
//! `r N_m`. The spherical criteria (`bic_os`, `bic_ns`) use the pooled
//! variance `σ̂² = Σ_m tr(Δ_m) / (rN)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{GmmParams, HardPartition};
use crate::numkernel::{cholesky, duplication_matrix, kron, Matrix, NumError, SpdFactor};

/// Smallest pooled variance the spherical criteria accept.
pub const MIN_POOLED_VARIANCE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("unknown criterion {0:?}")]
    UnknownCriterion(String),
    #[error("cluster {0} is empty")]
    InvalidCluster(usize),
    #[error("pooled variance is zero (all points coincide with their centroids)")]
    ZeroVariance,
    #[error("penalty of {0} depends on the fitted covariances, not only on counts")]
    PenaltyNeedsFit(Criterion),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    BicN,
    BicO,
    BicOs,
    BicNs,
    BicG,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [Criterion::BicN, Criterion::BicO, Criterion::BicOs, Criterion::BicNs, Criterion::BicG];

    pub fn id(self) -> &'static str {
        match self {
            Criterion::BicN => "bic_n",
            Criterion::BicO => "bic_o",
            Criterion::BicOs => "bic_os",
            Criterion::BicNs => "bic_ns",
            Criterion::BicG => "bic_g",
        }
    }

    /// Spherical criteria score the K-means partition.
    pub fn is_spherical(self) -> bool {
        matches!(self, Criterion::BicOs | Criterion::BicNs)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Criterion {
    type Err = CriteriaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Criterion::ALL
            .into_iter()
            .find(|c| c.id() == key)
            .ok_or_else(|| CriteriaError::UnknownCriterion(s.to_string()))
    }
}

/// Dimension-derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub r: usize,
    /// Free parameters of one Gaussian cluster, `r(r+3)/2`.
    pub q: usize,
}

impl ModelDims {
    pub fn new(r: usize) -> Self {
        Self { r, q: r * (r + 3) / 2 }
    }

    /// Parameter count of the spherical identical-variance model with `l` clusters.
    pub fn alpha_os(&self, l: usize) -> usize {
        self.r * l + 1
    }

    /// Per-cluster parameter count used by `bic_ns`.
    pub fn alpha_ns(&self) -> usize {
        self.r + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTerm {
    pub count: usize,
    /// `N_m log N_m`
    pub n_log_n: f64,
    /// `log |Σ̂_m|` (None for the spherical criteria)
    pub log_det_sigma: Option<f64>,
}

/// Score of one candidate model under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub l: usize,
    pub criterion: Criterion,
    /// `-inf` when the candidate is invalid.
    #[serde(with = "crate::float_serde")]
    pub total: f64,
    pub data_fidelity: Option<f64>,
    pub penalty: Option<f64>,
    pub scale: f64,
    pub offset: f64,
    pub valid: bool,
    pub reason: Option<String>,
    pub clusters: Vec<ClusterTerm>,
}

impl CandidateScore {
    pub fn invalid(l: usize, criterion: Criterion, reason: impl Into<String>) -> Self {
        Self {
            l,
            criterion,
            total: f64::NEG_INFINITY,
            data_fidelity: None,
            penalty: None,
            scale: 0.0,
            offset: 0.0,
            valid: false,
            reason: Some(reason.into()),
            clusters: Vec::new(),
        }
    }

    /// `scale · (data_fidelity − penalty) + offset`, recomputed from the stored terms.
    pub fn reconstructed_total(&self) -> Option<f64> {
        Some(self.scale * (self.data_fidelity? - self.penalty?) + self.offset)
    }
}

fn n_log_n(n: usize) -> f64 {
    let x = n as f64;
    x * x.ln()
}

/// Log-likelihood of the points in one cluster under `N(mu, Σ)`, counting the
/// cluster's share `N_m / N` of the data:
///
/// `N_m log(N_m/N) − (r N_m/2) log 2π − (N_m/2) log|Σ| − ½ tr(Σ⁻¹ Δ)`
///
/// where `Δ = Σ (x − mu)(x − mu)ᵀ` over the cluster, obtained from the
/// cluster's sample mean and scatter.
pub fn loglik_cluster(
    count: usize,
    sample_mean: &[f64],
    scatter: &Matrix,
    mu: &[f64],
    sigma: &SpdFactor,
    n_total: usize,
) -> Result<f64, CriteriaError> {
    if count == 0 {
        return Err(CriteriaError::InvalidCluster(0));
    }
    let r = sigma.dim();
    if sample_mean.len() != r || mu.len() != r || scatter.rows() != r {
        return Err(NumError::DimMismatch { expected: r, got: mu.len() }.into());
    }
    let nm = count as f64;
    let trace = trace_solve(sigma, scatter) + nm * sigma.mahalanobis_sq(sample_mean, mu);
    Ok(nm * (nm / n_total as f64).ln()
        - 0.5 * r as f64 * nm * (2.0 * PI).ln()
        - 0.5 * nm * sigma.log_det()
        - 0.5 * trace)
}

/// `tr(A⁻¹ B)` with `A` given by its factor.
fn trace_solve(a: &SpdFactor, b: &Matrix) -> f64 {
    let r = a.dim();
    let mut col = vec![0.0; r];
    let mut t = 0.0;
    for j in 0..r {
        for i in 0..r {
            col[i] = b[(i, j)];
        }
        let x = a.solve(&col);
        t += x[j];
    }
    t
}

/// Maximized cluster log-likelihood: [`loglik_cluster`] with the quadratic
/// term at its maximum-likelihood value, `½ tr(Σ̂⁻¹ Δ) = r N_m / 2`.
pub fn loglik_at_estimate(count: usize, log_det_sigma: f64, r: usize, n_total: usize) -> f64 {
    let nm = count as f64;
    let r = r as f64;
    nm * (nm / n_total as f64).ln() - 0.5 * r * nm * (2.0 * PI).ln() - 0.5 * nm * log_det_sigma - 0.5 * r * nm
}

/// Source of the cluster counts `N_m` and covariances `Σ̂_m` scored by the
/// Gaussian criteria.
#[derive(Debug, Clone, Copy)]
pub enum Estimates<'a> {
    /// Hard-cluster counts and maximum-likelihood covariances.
    Partition,
    /// Mixture covariances with the hard-cluster counts.
    MixtureHard(&'a GmmParams),
    /// Mixture covariances with the expected counts `N τ̂_m`, rounded.
    Mixture(&'a GmmParams),
}

impl<'a> Estimates<'a> {
    pub fn params(&self) -> Option<&'a GmmParams> {
        match *self {
            Estimates::Partition => None,
            Estimates::MixtureHard(p) | Estimates::Mixture(p) => Some(p),
        }
    }
}

/// `round(N τ̂_m)` per component; a component whose share rounds to zero
/// gets count 0 and makes the candidate invalid.
pub fn expected_counts(params: &GmmParams, n: usize) -> Vec<usize> {
    params.weights().iter().map(|w| (w * n as f64).round() as usize).collect()
}

/// Per-cluster Gaussian quantities shared by `bic_n`, `bic_o` and `bic_g`.
struct GaussianTerms {
    counts: Vec<usize>,
    log_dets: Vec<f64>,
    covariances: Vec<Matrix>,
    /// `2 Σ_m log L(θ̂_m | X_m)`
    fidelity: f64,
    logliks: Vec<f64>,
}

fn gaussian_terms(partition: &HardPartition, est: Estimates<'_>) -> Result<GaussianTerms, String> {
    let n = partition.n();
    let l = partition.l();
    let counts = match est {
        Estimates::Mixture(p) => expected_counts(p, n),
        _ => partition.counts().to_vec(),
    };
    if let Some(m) = counts.iter().position(|&c| c == 0) {
        return Err(format!("cluster {m} is empty"));
    }
    if let Some(p) = est.params() {
        if p.l() != l || p.r() != partition.means()[0].len() {
            return Err("mixture and partition disagree in shape".into());
        }
    }
    let mut t = GaussianTerms {
        counts,
        log_dets: Vec::with_capacity(l),
        covariances: Vec::with_capacity(l),
        fidelity: 0.0,
        logliks: Vec::with_capacity(l),
    };
    for m in 0..l {
        let sigma = match est.params() {
            Some(p) => p.covariances()[m].clone(),
            None => partition.covariance(m).expect("non-empty cluster"),
        };
        let factor = cholesky(&sigma, 0.0).map_err(|_| format!("covariance of cluster {m} is singular"))?;
        let r = sigma.rows();
        t.log_dets.push(factor.log_det());
        t.logliks.push(loglik_at_estimate(t.counts[m], factor.log_det(), r, n));
        t.covariances.push(sigma);
    }
    t.fidelity = 2.0 * t.logliks.iter().sum::<f64>();
    Ok(t)
}

fn gaussian_cluster_terms(t: &GaussianTerms) -> Vec<ClusterTerm> {
    t.counts
        .iter()
        .zip(&t.log_dets)
        .map(|(&c, &d)| ClusterTerm { count: c, n_log_n: n_log_n(c), log_det_sigma: Some(d) })
        .collect()
}

/// Constant separating the half-scale criteria from `½(2 log L − η)`, where
/// `counted = Σ N_m` (equal to `n` unless the counts are rounded expectations).
fn gaussian_offset(counted: usize, n: usize, r: usize) -> f64 {
    let (c, n, r) = (counted as f64, n as f64, r as f64);
    c * n.ln() + 0.5 * r * c * (2.0 * PI).ln() + 0.5 * r * c
}

/// Proposed criterion:
/// `Σ N_m log N_m − Σ (N_m/2) log|Σ̂_m| − (q/2) Σ log N_m`.
pub fn bic_n(partition: &HardPartition, est: Estimates<'_>, dims: &ModelDims) -> CandidateScore {
    let l = partition.l();
    let t = match gaussian_terms(partition, est) {
        Ok(t) => t,
        Err(reason) => return CandidateScore::invalid(l, Criterion::BicN, reason),
    };
    let q = dims.q as f64;
    let sum_nlogn: f64 = t.counts.iter().map(|&c| n_log_n(c)).sum();
    let sum_logdet: f64 = t.counts.iter().zip(&t.log_dets).map(|(&c, d)| 0.5 * c as f64 * d).sum();
    let sum_logn: f64 = t.counts.iter().map(|&c| (c as f64).ln()).sum();
    CandidateScore {
        l,
        criterion: Criterion::BicN,
        total: sum_nlogn - sum_logdet - 0.5 * q * sum_logn,
        data_fidelity: Some(t.fidelity),
        penalty: Some(q * sum_logn),
        scale: 0.5,
        offset: gaussian_offset(t.counts.iter().sum(), partition.n(), dims.r),
        valid: true,
        reason: None,
        clusters: gaussian_cluster_terms(&t),
    }
}

/// Original BIC: `2 log L(Θ̂_l | X) − q l log N`.
pub fn bic_o(partition: &HardPartition, est: Estimates<'_>, dims: &ModelDims) -> CandidateScore {
    let l = partition.l();
    let t = match gaussian_terms(partition, est) {
        Ok(t) => t,
        Err(reason) => return CandidateScore::invalid(l, Criterion::BicO, reason),
    };
    let penalty = (dims.q * l) as f64 * (partition.n() as f64).ln();
    CandidateScore {
        l,
        criterion: Criterion::BicO,
        total: t.fidelity - penalty,
        data_fidelity: Some(t.fidelity),
        penalty: Some(penalty),
        scale: 1.0,
        offset: 0.0,
        valid: true,
        reason: None,
        clusters: gaussian_cluster_terms(&t),
    }
}

/// Pooled variance estimate `σ̂² = Σ_m tr(Δ_m) / (rN)`.
pub fn pooled_variance(partition: &HardPartition, r: usize) -> f64 {
    partition.sse() / (r * partition.n()) as f64
}

struct SphericalTerms {
    counts: Vec<usize>,
    sigma2: f64,
    /// twice the spherical log-likelihood
    fidelity: f64,
}

fn spherical_terms(partition: &HardPartition, dims: &ModelDims) -> Result<SphericalTerms, String> {
    if let Some(m) = partition.empty_clusters().first() {
        return Err(format!("cluster {m} is empty"));
    }
    let sigma2 = pooled_variance(partition, dims.r);
    if !(sigma2 >= MIN_POOLED_VARIANCE) {
        return Err(CriteriaError::ZeroVariance.to_string());
    }
    let n = partition.n() as f64;
    let r = dims.r as f64;
    let counts = partition.counts().to_vec();
    let share: f64 = counts.iter().map(|&c| c as f64 * (c as f64 / n).ln()).sum();
    let fidelity = 2.0 * share - r * n * (2.0 * PI).ln() - r * n * sigma2.ln() - r * n;
    Ok(SphericalTerms { counts, sigma2, fidelity })
}

fn spherical_cluster_terms(t: &SphericalTerms) -> Vec<ClusterTerm> {
    t.counts.iter().map(|&c| ClusterTerm { count: c, n_log_n: n_log_n(c), log_det_sigma: None }).collect()
}

/// Original BIC for spherical clusters with a common variance:
/// `2 Σ N_m log N_m − rN log σ̂² − (rl + 1) log N`.
pub fn bic_os(partition: &HardPartition, dims: &ModelDims) -> CandidateScore {
    let l = partition.l();
    let t = match spherical_terms(partition, dims) {
        Ok(t) => t,
        Err(reason) => return CandidateScore::invalid(l, Criterion::BicOs, reason),
    };
    let n = partition.n() as f64;
    let r = dims.r as f64;
    let penalty = dims.alpha_os(l) as f64 * n.ln();
    let sum_nlogn: f64 = t.counts.iter().map(|&c| n_log_n(c)).sum();
    CandidateScore {
        l,
        criterion: Criterion::BicOs,
        total: 2.0 * sum_nlogn - r * n * t.sigma2.ln() - penalty,
        data_fidelity: Some(t.fidelity),
        penalty: Some(penalty),
        scale: 1.0,
        offset: 2.0 * gaussian_offset(partition.n(), partition.n(), dims.r),
        valid: true,
        reason: None,
        clusters: spherical_cluster_terms(&t),
    }
}

/// Proposed criterion for spherical clusters with a common variance:
/// `Σ N_m log N_m − (Nr/2) log σ̂² − ((r+1)/2) Σ log N_m`.
pub fn bic_ns(partition: &HardPartition, dims: &ModelDims) -> CandidateScore {
    let l = partition.l();
    let t = match spherical_terms(partition, dims) {
        Ok(t) => t,
        Err(reason) => return CandidateScore::invalid(l, Criterion::BicNs, reason),
    };
    let n = partition.n() as f64;
    let r = dims.r as f64;
    let alpha = dims.alpha_ns() as f64;
    let sum_logn: f64 = t.counts.iter().map(|&c| (c as f64).ln()).sum();
    let sum_nlogn: f64 = t.counts.iter().map(|&c| n_log_n(c)).sum();
    CandidateScore {
        l,
        criterion: Criterion::BicNs,
        total: sum_nlogn - 0.5 * n * r * t.sigma2.ln() - 0.5 * alpha * sum_logn,
        data_fidelity: Some(t.fidelity),
        penalty: Some(alpha * sum_logn),
        scale: 0.5,
        offset: gaussian_offset(partition.n(), partition.n(), dims.r),
        valid: true,
        reason: None,
        clusters: spherical_cluster_terms(&t),
    }
}

/// Fisher information of one Gaussian cluster with its log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct Fim {
    /// q × q matrix over the coordinates `(μ, vech(Σ))`.
    pub matrix: Matrix,
    pub log_det: f64,
}

/// Negative Hessian of the cluster log-likelihood with respect to
/// `(μ, vech(Σ))` at an arbitrary parameter point.
///
/// `delta` is the scatter about `mu`, and `mean_offset = x̄ − mu`. The blocks are
///
/// ```text
/// [ N Σ⁻¹      N Zᵀ D      ]      Z = Σ⁻¹(x̄ − μ) ⊗ Σ⁻¹
/// [ N Dᵀ Z    −(N/2) Dᵀ F D ]      F = Σ⁻¹ ⊗ (Σ⁻¹ − (2/N) Σ⁻¹ Δ Σ⁻¹)
/// ```
pub fn observed_information(count: usize, sigma: &SpdFactor, delta: &Matrix, mean_offset: &[f64]) -> Matrix {
    let r = sigma.dim();
    let u = r * (r + 1) / 2;
    let nm = count as f64;
    let inv = sigma.inverse();
    let d = duplication_matrix(r);
    let inner = inv.matmul(delta).and_then(|m| m.matmul(&inv)).expect("square");
    let f = kron(&inv, &inv.sub(&inner.scale(2.0 / nm)).expect("same shape"));
    let dt = d.transpose();
    let bottom = dt.matmul(&f).and_then(|m| m.matmul(&d)).expect("conformable").scale(-0.5 * nm);
    let a = inv.matvec(mean_offset).expect("dims");
    let z = kron(&Matrix::from_row_major(r, 1, a), &inv);
    let cross = dt.matmul(&z).expect("conformable").scale(nm);

    let mut j = Matrix::zeros(r + u, r + u);
    for i in 0..r {
        for k in 0..r {
            j[(i, k)] = nm * inv[(i, k)];
        }
    }
    for i in 0..u {
        for k in 0..r {
            j[(r + i, k)] = cross[(i, k)];
            j[(k, r + i)] = cross[(i, k)];
        }
        for k in 0..u {
            j[(r + i, r + k)] = bottom[(i, k)];
        }
    }
    j
}

/// Fisher information of a Gaussian cluster at its MLE (`Δ = N Σ̂`, `μ̂ = x̄`).
///
/// The cross blocks vanish there, so the log-determinant is the sum of the
/// log-determinants of `N Σ̂⁻¹` and `(N/2) Dᵀ(Σ̂⁻¹ ⊗ Σ̂⁻¹)D`.
pub fn fim_gaussian(count: usize, sigma_hat: &Matrix) -> Result<Fim, CriteriaError> {
    if count == 0 {
        return Err(CriteriaError::InvalidCluster(0));
    }
    let r = sigma_hat.rows();
    let factor = cholesky(sigma_hat, 0.0)?;
    let delta = sigma_hat.scale(count as f64);
    let matrix = observed_information(count, &factor, &delta, &vec![0.0; r]);
    let u = r * (r + 1) / 2;
    let top = cholesky(&matrix.block(0, 0, r, r), 0.0)?;
    let bottom = cholesky(&symmetrized(&matrix.block(r, r, u, u)), 0.0)?;
    Ok(Fim { log_det: top.log_det() + bottom.log_det(), matrix })
}

fn symmetrized(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).expect("square").scale(0.5)
}

/// Generic criterion specialized to Gaussian clusters with the exact FIM:
/// `Σ_m log L(θ̂_m | X_m) + (lq/2) log 2π − ½ Σ_m log|Ĵ_m| + log_prior`.
pub fn bic_g(partition: &HardPartition, est: Estimates<'_>, dims: &ModelDims, log_prior: f64) -> CandidateScore {
    let l = partition.l();
    let t = match gaussian_terms(partition, est) {
        Ok(t) => t,
        Err(reason) => return CandidateScore::invalid(l, Criterion::BicG, reason),
    };
    let mut sum_logdet_j = 0.0;
    for m in 0..l {
        match fim_gaussian(t.counts[m], &t.covariances[m]) {
            Ok(f) => sum_logdet_j += f.log_det,
            Err(e) => return CandidateScore::invalid(l, Criterion::BicG, format!("FIM of cluster {m}: {e}")),
        }
    }
    let lq = (l * dims.q) as f64;
    let penalty = sum_logdet_j - lq * (2.0 * PI).ln();
    CandidateScore {
        l,
        criterion: Criterion::BicG,
        total: t.logliks.iter().sum::<f64>() + 0.5 * lq * (2.0 * PI).ln() - 0.5 * sum_logdet_j + log_prior,
        data_fidelity: Some(t.fidelity),
        penalty: Some(penalty),
        scale: 0.5,
        offset: log_prior,
        valid: true,
        reason: None,
        clusters: gaussian_cluster_terms(&t),
    }
}

/// Scores `partition` with `criterion` (log-prior 0 for `bic_g`). `est` is
/// ignored by the spherical criteria.
pub fn score(criterion: Criterion, partition: &HardPartition, est: Estimates<'_>, dims: &ModelDims) -> CandidateScore {
    match criterion {
        Criterion::BicN => bic_n(partition, est, dims),
        Criterion::BicO => bic_o(partition, est, dims),
        Criterion::BicOs => bic_os(partition, dims),
        Criterion::BicNs => bic_ns(partition, dims),
        Criterion::BicG => bic_g(partition, est, dims, 0.0),
    }
}

/// Penalty term η from the cluster counts and the data-set size `n`.
pub fn penalty_of(criterion: Criterion, counts: &[usize], n: usize, dims: &ModelDims) -> Result<f64, CriteriaError> {
    if let Some(m) = counts.iter().position(|&c| c == 0) {
        return Err(CriteriaError::InvalidCluster(m));
    }
    let l = counts.len();
    let sum_logn: f64 = counts.iter().map(|&c| (c as f64).ln()).sum();
    let ln_n = (n as f64).ln();
    match criterion {
        Criterion::BicN => Ok(dims.q as f64 * sum_logn),
        Criterion::BicO => Ok((dims.q * l) as f64 * ln_n),
        Criterion::BicOs => Ok(dims.alpha_os(l) as f64 * ln_n),
        Criterion::BicNs => Ok(dims.alpha_ns() as f64 * sum_logn),
        Criterion::BicG => Err(CriteriaError::PenaltyNeedsFit(criterion)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::DataSet;

    fn two_points() -> (DataSet, HardPartition) {
        let d = DataSet::new(vec![vec![0.0], vec![2.0]]).unwrap();
        let p = HardPartition::from_labels(&d, vec![0, 0], 1).unwrap();
        (d, p)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn parse_criteria() {
        assert_eq!("bic-n".parse::<Criterion>().unwrap(), Criterion::BicN);
        assert_eq!("BIC_OS".parse::<Criterion>().unwrap(), Criterion::BicOs);
        assert!(matches!("aic".parse::<Criterion>(), Err(CriteriaError::UnknownCriterion(_))));
        assert_eq!(Criterion::BicNs.to_string(), "bic_ns");
    }

    #[test]
    fn dims() {
        assert_eq!(ModelDims::new(1).q, 2);
        assert_eq!(ModelDims::new(2).q, 5);
        assert_eq!(ModelDims::new(4).q, 14);
        let d = ModelDims::new(3);
        assert_eq!(d.alpha_os(2) + 3, d.alpha_os(3));
        assert_eq!(d.alpha_ns(), 4);
    }

    #[test]
    fn loglik_cluster_hand_value() {
        let (_, p) = two_points();
        let sigma = cholesky(&p.covariance(0).unwrap(), 0.0).unwrap();
        let v = loglik_cluster(2, &p.means()[0], &p.scatters()[0], &p.means()[0], &sigma, 2).unwrap();
        let expect = -(2.0 * PI).ln() - 1.0;
        assert!(close(v, expect, 1e-14));
        assert!(close(v, -2.8378770664, 1e-9));
    }

    #[test]
    fn loglik_cluster_trace_term_at_mle() {
        // at the MLE the quadratic term equals r N_m / 2
        let d = DataSet::new(vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 3.0], vec![-1.0, 0.0]]).unwrap();
        let p = HardPartition::from_labels(&d, vec![0; 4], 1).unwrap();
        let sigma = cholesky(&p.covariance(0).unwrap(), 0.0).unwrap();
        let v = loglik_cluster(4, &p.means()[0], &p.scatters()[0], &p.means()[0], &sigma, 8).unwrap();
        let expect = 4.0 * 0.5f64.ln() - 4.0 * (2.0 * PI).ln() - 2.0 * sigma.log_det() - 4.0;
        assert!(close(v, expect, 1e-12));
    }

    #[test]
    fn maximized_loglik_matches_exact_at_mle() {
        let d = DataSet::new(vec![vec![0.0, 1.0], vec![2.0, 0.5], vec![1.0, 3.0], vec![-1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let p = HardPartition::from_labels(&d, vec![0; 5], 1).unwrap();
        let f = cholesky(&p.covariance(0).unwrap(), 0.0).unwrap();
        let exact = loglik_cluster(5, &p.means()[0], &p.scatters()[0], &p.means()[0], &f, 9).unwrap();
        assert!(close(loglik_at_estimate(5, f.log_det(), 2, 9), exact, 1e-13));
    }

    #[test]
    fn mixture_covariances_replace_partition_estimates() {
        let d = DataSet::new(vec![vec![0.0], vec![2.0], vec![10.0], vec![11.0]]).unwrap();
        let p = HardPartition::from_labels(&d, vec![0, 0, 1, 1], 2).unwrap();
        let gm = GmmParams::new(
            vec![0.5, 0.5],
            vec![vec![1.0], vec![10.5]],
            vec![Matrix::diag(&[2.0]), Matrix::diag(&[0.5])],
            0.0,
        )
        .unwrap();
        let dims = ModelDims::new(1);
        let s = bic_n(&p, Estimates::MixtureHard(&gm), &dims);
        let expect = 2.0 * n_log_n(2) - (2f64.ln() + 0.5f64.ln()) - 2.0 * 2f64.ln();
        assert!(close(s.total, expect, 1e-14));
        assert!(close(s.clusters[0].log_det_sigma.unwrap(), 2f64.ln(), 1e-15));
        assert_eq!(bic_o(&p, Estimates::MixtureHard(&gm), &dims).data_fidelity, s.data_fidelity);
        assert!(close(s.reconstructed_total().unwrap(), s.total, 1e-12));
    }

    #[test]
    fn expected_counts_keep_bookkeeping() {
        let (_, p) = two_points();
        let gm = GmmParams::new(vec![1.0], vec![vec![1.0]], vec![Matrix::identity(1)], 1e-8).unwrap();
        let dims = ModelDims::new(1);
        let hard = bic_n(&p, Estimates::MixtureHard(&gm), &dims);
        let soft = bic_n(&p, Estimates::Mixture(&gm), &dims);
        assert_eq!(hard.total, soft.total);
        assert_eq!(expected_counts(&gm, 7), vec![7]);
        for s in [&hard, &soft] {
            assert!(close(s.reconstructed_total().unwrap(), s.total, 1e-12));
        }
    }

    #[test]
    fn loglik_cluster_scaling_data() {
        let (_, p) = two_points();
        let d2 = DataSet::new(vec![vec![-1.0], vec![3.0]]).unwrap();
        let p2 = HardPartition::from_labels(&d2, vec![0, 0], 1).unwrap();
        assert_eq!(p2.scatters()[0].as_slice()[0], 4.0 * p.scatters()[0].as_slice()[0]);
        let f1 = cholesky(&p.covariance(0).unwrap(), 0.0).unwrap();
        let f2 = cholesky(&p2.covariance(0).unwrap(), 0.0).unwrap();
        let v1 = loglik_cluster(2, &p.means()[0], &p.scatters()[0], &p.means()[0], &f1, 2).unwrap();
        let v2 = loglik_cluster(2, &p2.means()[0], &p2.scatters()[0], &p2.means()[0], &f2, 2).unwrap();
        assert!(close(v2 - v1, -(4f64).ln(), 1e-13));
    }

    #[test]
    fn criteria_on_two_points() {
        let (_, p) = two_points();
        let dims = ModelDims::new(1);
        let ln2 = 2f64.ln();
        let n = bic_n(&p, Estimates::Partition, &dims);
        assert!(close(n.total, ln2, 1e-14));
        assert!(close(n.penalty.unwrap(), 2.0 * ln2, 1e-14));

        let o = bic_o(&p, Estimates::Partition, &dims);
        let ll = -(2.0 * PI).ln() - 1.0;
        assert!(close(o.total, 2.0 * ll - 2.0 * ln2, 1e-14));
        assert_eq!(o.data_fidelity, n.data_fidelity);

        let os = bic_os(&p, &dims);
        assert!(close(os.total, 2.0 * ln2, 1e-14));
        let ns = bic_ns(&p, &dims);
        assert!(close(ns.total, ln2, 1e-14));

        let g = bic_g(&p, Estimates::Partition, &dims, 0.0);
        assert!(close(g.total, ll + (2.0 * PI).ln() - 0.5 * ln2, 1e-13));

        for s in [&n, &o, &os, &ns, &g] {
            assert!(close(s.reconstructed_total().unwrap(), s.total, 1e-12), "{}", s.criterion);
        }
    }

    #[test]
    fn fim_scalar_case() {
        let f = fim_gaussian(2, &Matrix::identity(1)).unwrap();
        assert!(close(f.matrix[(0, 0)], 2.0, 1e-14));
        assert!(close(f.matrix[(1, 1)], 1.0, 1e-14));
        assert_eq!(f.matrix[(0, 1)], 0.0);
        assert!(close(f.log_det, 2f64.ln(), 1e-14));
    }

    #[test]
    fn fim_log_det_closed_form() {
        // |Dᵀ(A⊗A)D| = 2^{r(r-1)/2} |A|^{r+1}
        let s = Matrix::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.0, -0.2], vec![0.1, -0.2, 0.5]]);
        let nm = 40usize;
        let f = fim_gaussian(nm, &s).unwrap();
        let ld = cholesky(&s, 0.0).unwrap().log_det();
        let (r, u) = (3.0, 6.0);
        let n = nm as f64;
        let expect = (r * n.ln() - ld) + (u * (n / 2.0).ln() + 3.0 * 2f64.ln() - (r + 1.0) * ld);
        assert!(close(f.log_det, expect, 1e-12));
    }

    #[test]
    fn fim_scale_invariance() {
        let s = Matrix::from_rows(&[vec![0.5, 0.25], vec![0.25, 0.5]]);
        let q = 5.0;
        let a = fim_gaussian(100, &s).unwrap().log_det - q * 100f64.ln();
        let b = fim_gaussian(10_000, &s).unwrap().log_det - q * 10_000f64.ln();
        assert!(close(a, b, 1e-12));
    }

    #[test]
    fn invalid_partitions() {
        let d = DataSet::new(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let p = HardPartition::from_labels(&d, vec![0, 0, 0], 2).unwrap();
        let dims = ModelDims::new(1);
        for c in Criterion::ALL {
            let s = score(c, &p, Estimates::Partition, &dims);
            assert!(!s.valid);
            assert_eq!(s.total, f64::NEG_INFINITY);
        }
        // singleton cluster has zero covariance
        let p = HardPartition::from_labels(&d, vec![0, 0, 1], 2).unwrap();
        assert!(!bic_n(&p, Estimates::Partition, &dims).valid);
        assert!(bic_os(&p, &dims).valid);

        let same = DataSet::new(vec![vec![1.0], vec![1.0]]).unwrap();
        let p = HardPartition::from_labels(&same, vec![0, 1], 2).unwrap();
        let s = bic_os(&p, &dims);
        assert!(!s.valid);
        assert!(s.reason.unwrap().contains("variance"));
    }

    #[test]
    fn penalty_examples() {
        let d2 = ModelDims::new(2);
        let v = penalty_of(Criterion::BicN, &[50, 100, 200], 350, &d2).unwrap();
        assert!(close(v, 5.0 * (50f64.ln() + 100f64.ln() + 200f64.ln()), 1e-14));
        let v = penalty_of(Criterion::BicO, &[50, 100, 200], 350, &d2).unwrap();
        assert!(close(v, 15.0 * 350f64.ln(), 1e-14));
        let v = penalty_of(Criterion::BicOs, &[50, 100, 200], 350, &d2).unwrap();
        assert!(close(v, 7.0 * 350f64.ln(), 1e-14));
        assert!(penalty_of(Criterion::BicG, &[3], 3, &d2).is_err());
        assert_eq!(penalty_of(Criterion::BicN, &[3, 0], 3, &d2), Err(CriteriaError::InvalidCluster(1)));
    }

    #[test]
    fn balanced_bic_ns_penalty() {
        let dims = ModelDims::new(2);
        let v = penalty_of(Criterion::BicNs, &[40; 5], 200, &dims).unwrap();
        assert!(close(0.5 * v, 0.5 * 3.0 * 5.0 * 40f64.ln(), 1e-14));
    }
}
