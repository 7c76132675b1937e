//! Model-based clustering for one candidate model.
//!
//! Provides K-means++ seeding, Lloyd's K-means, EM for full-covariance
//! Gaussian mixtures, hard assignment of EM responsibilities, and random-swap
//! refinement around either fitter. Cluster indices are 0-based throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkernel::{
    accumulate_outer, cholesky, default_reg_eps, mirror_lower, mvn_logpdf_unchecked, squared_distance, Matrix,
    NumError, SpdFactor, DEFAULT_REG_SCALE,
};
use crate::stream::Stream;

/// Row sums of a responsibility matrix must be 1 within this tolerance.
pub const RESP_SUM_TOL: f64 = 1e-9;

/// Mixing weights below this are treated as a dead component.
pub const MIN_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("requested {l} clusters but the data set has only {n} rows")]
    TooManyClusters { l: usize, n: usize },
    #[error("number of clusters must be at least 1")]
    NoClusters,
    #[error("invalid data set: {0}")]
    InvalidData(String),
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),
    #[error("responsibility row {row} sums to {sum}, not 1")]
    NotNormalized { row: usize, sum: f64 },
    #[error("EM degenerated for l = {l}: {reason}")]
    Degenerate { l: usize, reason: String },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// N × r feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    n: usize,
    r: usize,
    values: Vec<f64>,
}

impl DataSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let n = rows.len();
        if n == 0 {
            return Err(ClusterError::InvalidData("no rows".into()));
        }
        let r = rows[0].len();
        if r == 0 {
            return Err(ClusterError::InvalidData("zero feature dimension".into()));
        }
        let mut values = Vec::with_capacity(n * r);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != r {
                return Err(ClusterError::InvalidData(format!("row {i} has {} features, expected {r}", row.len())));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(ClusterError::InvalidData(format!("non-finite value at row {i}, column {j}")));
            }
            values.extend(row);
        }
        Ok(Self { n, r, values })
    }

    pub fn from_row_major(n: usize, r: usize, values: Vec<f64>) -> Result<Self, ClusterError> {
        if n == 0 || r == 0 || values.len() != n * r {
            return Err(ClusterError::InvalidData(format!("buffer of {} values does not fit {n} x {r}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::InvalidData("non-finite value".into()));
        }
        Ok(Self { n, r, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.r..(i + 1) * self.r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.r)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.r];
        for x in self.rows() {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Maximum-likelihood covariance of all rows.
    pub fn covariance(&self) -> Matrix {
        let mean = self.mean();
        let mut s = crate::numkernel::scatter_matrix(self.rows(), &mean).expect("non-empty data set");
        s = s.scale(1.0 / self.n as f64);
        s
    }
}

/// Mixture parameters `(τ, μ_1..l, Σ_1..l)` with cached Cholesky factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Matrix>,
    factors: Vec<SpdFactor>,
}

impl GmmParams {
    /// Validates weights and factors each covariance, regularizing with the
    /// escalating ridge scaled by `reg_scale · trace(Σ)/r`.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Matrix>,
        reg_scale: f64,
    ) -> Result<Self, ClusterError> {
        let l = weights.len();
        if l == 0 {
            return Err(ClusterError::NoClusters);
        }
        if means.len() != l || covariances.len() != l {
            return Err(ClusterError::InvalidParams("weights, means and covariances differ in length".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(ClusterError::InvalidParams("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ClusterError::InvalidParams(format!("weights sum to {total}")));
        }
        let r = means[0].len();
        if means.iter().any(|m| m.len() != r) || covariances.iter().any(|c| c.rows() != r || c.cols() != r) {
            return Err(ClusterError::InvalidParams("inconsistent dimensions".into()));
        }
        let factors = covariances
            .iter()
            .map(|c| cholesky(c, default_reg_eps(c, reg_scale)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { weights, means, covariances, factors })
    }

    pub fn l(&self) -> usize {
        self.weights.len()
    }

    pub fn r(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Matrix] {
        &self.covariances
    }

    pub fn factors(&self) -> &[SpdFactor] {
        &self.factors
    }

    pub fn regularized_components(&self) -> usize {
        self.factors.iter().filter(|f| f.was_regularized()).count()
    }

    /// Mixture log-likelihood `Σ_n log Σ_m τ_m g(x_n; μ_m, Σ_m)`.
    pub fn log_likelihood(&self, data: &DataSet) -> f64 {
        let mut buf = vec![0.0; self.l()];
        data.rows().map(|x| self.log_density_row(x, &mut buf)).sum()
    }

    /// Fills `buf` with `log τ_m + log g(x; μ_m, Σ_m)` and returns the log mixture density.
    #[inline]
    fn log_density_row(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for m in 0..self.l() {
            let v = self.weights[m].ln() + mvn_logpdf_unchecked(x, &self.means[m], &self.factors[m]);
            buf[m] = v;
            if v > max {
                max = v;
            }
        }
        let s: f64 = buf.iter().map(|v| (v - max).exp()).sum();
        max + s.ln()
    }

    fn max_abs_change(&self, other: &GmmParams) -> f64 {
        let mut d = 0.0_f64;
        for m in 0..self.l() {
            d = d.max((self.weights[m] - other.weights[m]).abs());
            for (a, b) in self.means[m].iter().zip(&other.means[m]) {
                d = d.max((a - b).abs());
            }
            for (a, b) in self.covariances[m].as_slice().iter().zip(other.covariances[m].as_slice()) {
                d = d.max((a - b).abs());
            }
        }
        d
    }
}

/// N × l matrix of posterior cluster probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n: usize,
    l: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    /// Validates entries in `[0, 1]` and unit row sums.
    pub fn new(n: usize, l: usize, values: Vec<f64>) -> Result<Self, ClusterError> {
        if l == 0 {
            return Err(ClusterError::NoClusters);
        }
        if values.len() != n * l {
            return Err(ClusterError::InvalidParams("responsibility buffer has wrong size".into()));
        }
        for (row, chunk) in values.chunks_exact(l).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > RESP_SUM_TOL {
                return Err(ClusterError::NotNormalized { row, sum });
            }
        }
        Ok(Self { n, l, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.l..(i + 1) * self.l]
    }
}

/// Exclusive assignment of every row to one of `l` clusters, with per-cluster statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardPartition {
    labels: Vec<usize>,
    counts: Vec<usize>,
    means: Vec<Vec<f64>>,
    scatters: Vec<Matrix>,
}

impl HardPartition {
    /// Builds counts, sample means and scatter matrices (about the sample means).
    /// Empty clusters get zero mean and zero scatter.
    pub fn from_labels(data: &DataSet, labels: Vec<usize>, l: usize) -> Result<Self, ClusterError> {
        if labels.len() != data.n() {
            return Err(ClusterError::InvalidParams("label count differs from row count".into()));
        }
        if l == 0 {
            return Err(ClusterError::NoClusters);
        }
        let r = data.r();
        let mut counts = vec![0usize; l];
        let mut means = vec![vec![0.0; r]; l];
        for (x, &c) in data.rows().zip(&labels) {
            if c >= l {
                return Err(ClusterError::InvalidParams(format!("label {c} out of range for l = {l}")));
            }
            counts[c] += 1;
            for (a, b) in means[c].iter_mut().zip(x) {
                *a += b;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let mut scatters = vec![Matrix::zeros(r, r); l];
        let mut dev = vec![0.0; r];
        for (x, &c) in data.rows().zip(&labels) {
            for ((d, a), b) in dev.iter_mut().zip(x).zip(&means[c]) {
                *d = a - b;
            }
            accumulate_outer(&mut scatters[c], &dev, 1.0);
        }
        scatters.iter_mut().for_each(mirror_lower);
        Ok(Self { labels, counts, means, scatters })
    }

    pub fn l(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn scatters(&self) -> &[Matrix] {
        &self.scatters
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.counts.iter().enumerate().filter(|(_, &c)| c == 0).map(|(i, _)| i).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.counts.iter().all(|&c| c > 0)
    }

    /// Within-cluster sum of squared distances to the cluster means.
    pub fn sse(&self) -> f64 {
        self.scatters.iter().map(Matrix::trace).sum()
    }

    /// Maximum-likelihood covariance `Δ_m / N_m` of cluster `m` (None when empty).
    pub fn covariance(&self, m: usize) -> Option<Matrix> {
        (self.counts[m] > 0).then(|| self.scatters[m].scale(1.0 / self.counts[m] as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergedBy {
    ParameterChange,
    LoglikChange,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    /// Mixture log-likelihood at the returned parameters (EM only).
    pub final_loglik: Option<f64>,
    pub converged_by: ConvergedBy,
    pub regularization_events: usize,
    pub empty_cluster_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change (and absolute parameter change) threshold.
    pub tol: f64,
    /// Relative ridge scale for covariance regularization.
    pub reg_scale: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, reg_scale: DEFAULT_REG_SCALE }
    }
}

/// K-means++ seeding. Returns the row indices of the `l` chosen centroids.
pub fn kmeanspp_init(data: &DataSet, l: usize, rng: &mut Stream) -> Result<Vec<usize>, ClusterError> {
    let n = data.n();
    if l == 0 {
        return Err(ClusterError::NoClusters);
    }
    if l > n {
        return Err(ClusterError::TooManyClusters { l, n });
    }
    let mut chosen = Vec::with_capacity(l);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = data.rows().map(|x| squared_distance(x, data.row(first))).collect();
    d2[first] = 0.0;
    while chosen.len() < l {
        let total: f64 = d2.iter().enumerate().filter(|(i, _)| !taken[*i]).map(|(_, v)| v).sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = None;
            for i in 0..n {
                if taken[i] || d2[i] <= 0.0 {
                    continue;
                }
                acc += d2[i];
                last_positive = Some(i);
                if acc > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.or(last_positive).expect("positive total weight")
        } else {
            // remaining rows all coincide with chosen centroids
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        let c = data.row(next);
        for (i, x) in data.rows().enumerate() {
            let d = if taken[i] { 0.0 } else { squared_distance(x, c) };
            if d < d2[i] {
                d2[i] = d;
            }
        }
        d2[next] = 0.0;
    }
    Ok(chosen)
}

pub fn rows_at(data: &DataSet, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| data.row(i).to_vec()).collect()
}

/// Index of the nearest centroid; ties go to the smallest index.
#[inline]
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub partition: HardPartition,
    pub centroids: Vec<Vec<f64>>,
    pub sse: f64,
    pub diagnostics: FitDiagnostics,
}

/// Lloyd iterations from the given centroids.
///
/// A cluster that loses all its points is re-seeded with the row farthest
/// from its current centroid.
pub fn kmeans(data: &DataSet, init: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Result<KMeansFit, ClusterError> {
    let l = init.len();
    if l == 0 {
        return Err(ClusterError::NoClusters);
    }
    if l > data.n() {
        return Err(ClusterError::TooManyClusters { l, n: data.n() });
    }
    if init.iter().any(|c| c.len() != data.r()) {
        return Err(ClusterError::InvalidParams("centroid dimension differs from data".into()));
    }
    let r = data.r();
    let mut centroids = init;
    let mut labels = vec![0usize; data.n()];
    let mut dists = vec![0.0; data.n()];
    let mut empty_events = 0;
    let mut iterations = 0;
    let mut converged_by = ConvergedBy::MaxIter;
    for _ in 0..cfg.max_iter.max(1) {
        iterations += 1;
        for (i, x) in data.rows().enumerate() {
            let (j, d) = nearest(x, &centroids);
            labels[i] = j;
            dists[i] = d;
        }
        let mut counts = vec![0usize; l];
        labels.iter().for_each(|&j| counts[j] += 1);
        for j in 0..l {
            if counts[j] == 0 {
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| counts[labels[*i]] > 1)
                    .fold((usize::MAX, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
                if far == usize::MAX {
                    continue;
                }
                counts[labels[far]] -= 1;
                labels[far] = j;
                dists[far] = 0.0;
                counts[j] = 1;
                empty_events += 1;
            }
        }
        let mut next = vec![vec![0.0; r]; l];
        for (x, &j) in data.rows().zip(&labels) {
            for (a, b) in next[j].iter_mut().zip(x) {
                *a += b;
            }
        }
        let mut shift = 0.0_f64;
        for j in 0..l {
            if counts[j] == 0 {
                next[j] = centroids[j].clone();
            } else {
                next[j].iter_mut().for_each(|v| *v /= counts[j] as f64);
            }
            shift = shift.max(squared_distance(&next[j], &centroids[j]).sqrt());
        }
        centroids = next;
        if shift <= cfg.tol {
            converged_by = ConvergedBy::ParameterChange;
            break;
        }
    }
    let partition = HardPartition::from_labels(data, labels, l)?;
    let sse = partition.sse();
    Ok(KMeansFit {
        diagnostics: FitDiagnostics {
            iterations,
            final_loglik: None,
            converged_by,
            regularization_events: 0,
            empty_cluster_events: empty_events,
        },
        partition,
        centroids,
        sse,
    })
}

/// Initial mixture from centroids: nearest-centroid partition, per-cluster
/// covariance about the centroid and weights `N_m / N`.
///
/// Clusters with too few points for a full-rank covariance (N_m ≤ r), or
/// whose covariance cannot be factored, start from the data covariance.
pub fn init_gmm_from_centroids(
    data: &DataSet,
    centroids: &[Vec<f64>],
    reg_scale: f64,
) -> Result<GmmParams, ClusterError> {
    let l = centroids.len();
    let r = data.r();
    let n = data.n();
    let mut counts = vec![0usize; l];
    let mut scatters = vec![Matrix::zeros(r, r); l];
    let mut dev = vec![0.0; r];
    for x in data.rows() {
        let (j, _) = nearest(x, centroids);
        counts[j] += 1;
        for ((d, a), b) in dev.iter_mut().zip(x).zip(&centroids[j]) {
            *d = a - b;
        }
        accumulate_outer(&mut scatters[j], &dev, 1.0);
    }
    let global = data.covariance();
    let mut covs = Vec::with_capacity(l);
    for j in 0..l {
        mirror_lower(&mut scatters[j]);
        let cov = if counts[j] > r {
            let c = scatters[j].scale(1.0 / counts[j] as f64);
            if cholesky(&c, default_reg_eps(&c, reg_scale)).is_ok() {
                c
            } else {
                global.clone()
            }
        } else {
            global.clone()
        };
        covs.push(cov);
    }
    // a centroid that is a data row always attracts at least that row, but
    // duplicate centroids can leave a count at zero
    let floor = 1.0 / n as f64;
    let mut weights: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).max(floor)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GmmParams::new(weights, centroids.to_vec(), covs, reg_scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub params: GmmParams,
    pub responsibilities: Responsibilities,
    /// Log-likelihood after every E step.
    pub loglik_trace: Vec<f64>,
    /// Trace indices at which a dead component was re-seeded; monotonicity
    /// of the trace holds between these points.
    pub reseed_at: Vec<usize>,
    /// Trace indices whose parameters needed a covariance ridge. The ascent
    /// property does not cover these steps.
    pub regularized_at: Vec<usize>,
    pub diagnostics: FitDiagnostics,
}

impl EmFit {
    pub fn loglik(&self) -> f64 {
        self.diagnostics.final_loglik.expect("EM fits always record a log-likelihood")
    }
}

fn e_step(params: &GmmParams, data: &DataSet, resp: &mut [f64]) -> f64 {
    let l = params.l();
    let mut buf = vec![0.0; l];
    let mut ll = 0.0;
    for (x, out) in data.rows().zip(resp.chunks_exact_mut(l)) {
        let lse = params.log_density_row(x, &mut buf);
        ll += lse;
        let mut s = 0.0;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = (b - lse).exp();
            s += *o;
        }
        out.iter_mut().for_each(|v| *v /= s);
    }
    ll
}

enum MStep {
    Ok(GmmParams, usize),
    Dead(usize),
}

fn m_step(data: &DataSet, resp: &[f64], l: usize, reg_scale: f64) -> MStep {
    let r = data.r();
    let n = data.n();
    let mut mass = vec![0.0; l];
    let mut means = vec![vec![0.0; r]; l];
    for (x, w) in data.rows().zip(resp.chunks_exact(l)) {
        for m in 0..l {
            mass[m] += w[m];
            for (a, b) in means[m].iter_mut().zip(x) {
                *a += w[m] * b;
            }
        }
    }
    for m in 0..l {
        if mass[m] / (n as f64) < MIN_WEIGHT {
            return MStep::Dead(m);
        }
        means[m].iter_mut().for_each(|v| *v /= mass[m]);
    }
    let mut covs = vec![Matrix::zeros(r, r); l];
    let mut dev = vec![0.0; r];
    for (x, w) in data.rows().zip(resp.chunks_exact(l)) {
        for m in 0..l {
            if w[m] == 0.0 {
                continue;
            }
            for ((d, a), b) in dev.iter_mut().zip(x).zip(&means[m]) {
                *d = a - b;
            }
            accumulate_outer(&mut covs[m], &dev, w[m]);
        }
    }
    for m in 0..l {
        mirror_lower(&mut covs[m]);
        covs[m] = covs[m].scale(1.0 / mass[m]);
    }
    let weights: Vec<f64> = mass.iter().map(|v| v / n as f64).collect();
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    let mut factors = Vec::with_capacity(l);
    for (m, c) in covs.iter().enumerate() {
        match cholesky(c, default_reg_eps(c, reg_scale)) {
            Ok(f) => factors.push(f),
            Err(_) => return MStep::Dead(m),
        }
    }
    let regularized = factors.iter().filter(|f| f.was_regularized()).count();
    MStep::Ok(GmmParams { weights, means, covariances: covs, factors }, regularized)
}

/// Replaces component `dead` by a fresh one centered on the row with the
/// lowest mixture density.
fn reseed(params: &GmmParams, data: &DataSet, dead: usize, reg_scale: f64) -> Result<GmmParams, ClusterError> {
    let mut buf = vec![0.0; params.l()];
    let worst = data
        .rows()
        .enumerate()
        .map(|(i, x)| (i, params.log_density_row(x, &mut buf)))
        .fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b })
        .0;
    let l = params.l();
    let mut weights = params.weights.clone();
    weights[dead] = 1.0 / l as f64;
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut means = params.means.clone();
    means[dead] = data.row(worst).to_vec();
    let mut covs = params.covariances.clone();
    covs[dead] = data.covariance();
    GmmParams::new(weights, means, covs, reg_scale)
}

/// EM for a full-covariance Gaussian mixture starting from `init`.
///
/// Stops when the relative log-likelihood change or the largest parameter
/// change drops to `cfg.tol`, or after `cfg.max_iter` E steps. A component
/// whose weight underflows (or whose covariance cannot be factored) is
/// re-seeded once; a second failure is reported as [`ClusterError::Degenerate`].
pub fn em_fit(data: &DataSet, init: GmmParams, cfg: &EmConfig) -> Result<EmFit, ClusterError> {
    let l = init.l();
    if l > data.n() {
        return Err(ClusterError::TooManyClusters { l, n: data.n() });
    }
    if init.r() != data.r() {
        return Err(ClusterError::InvalidParams("parameter dimension differs from data".into()));
    }
    let mut params = init;
    let mut resp = vec![0.0; data.n() * l];
    let mut trace = Vec::new();
    let mut reseed_at = Vec::new();
    let mut regularized_at = Vec::new();
    let mut reg_events = params.regularized_components();
    let mut empty_events = 0;
    let mut converged_by = ConvergedBy::MaxIter;
    let max_iter = cfg.max_iter.max(1);
    let mut ll = e_step(&params, data, &mut resp);
    trace.push(ll);
    while trace.len() < max_iter {
        let next = match m_step(data, &resp, l, cfg.reg_scale) {
            MStep::Ok(p, reg) => {
                reg_events += reg;
                if reg > 0 {
                    regularized_at.push(trace.len());
                }
                p
            }
            MStep::Dead(m) => {
                empty_events += 1;
                if empty_events > 1 {
                    return Err(ClusterError::Degenerate { l, reason: format!("component {m} collapsed twice") });
                }
                let p = reseed(&params, data, m, cfg.reg_scale)?;
                reseed_at.push(trace.len());
                p
            }
        };
        let change = next.max_abs_change(&params);
        params = next;
        let prev = ll;
        ll = e_step(&params, data, &mut resp);
        trace.push(ll);
        if reseed_at.last() == Some(&(trace.len() - 1)) {
            continue;
        }
        if (ll - prev).abs() <= cfg.tol * ll.abs() {
            converged_by = ConvergedBy::LoglikChange;
            break;
        }
        if change <= cfg.tol {
            converged_by = ConvergedBy::ParameterChange;
            break;
        }
    }
    let responsibilities = Responsibilities { n: data.n(), l, values: resp };
    Ok(EmFit {
        diagnostics: FitDiagnostics {
            iterations: trace.len(),
            final_loglik: Some(ll),
            converged_by,
            regularization_events: reg_events,
            empty_cluster_events: empty_events,
        },
        params,
        responsibilities,
        loglik_trace: trace,
        reseed_at,
        regularized_at,
    })
}

/// Hard clustering: each row goes to its maximum-responsibility cluster
/// (ties to the smallest index). Empty clusters are flagged through
/// [`HardPartition::empty_clusters`], not reported as errors.
pub fn hard_assign(resp: &Responsibilities, data: &DataSet) -> Result<HardPartition, ClusterError> {
    if resp.n() != data.n() {
        return Err(ClusterError::InvalidParams("responsibility rows differ from data rows".into()));
    }
    let l = resp.l();
    let mut labels = Vec::with_capacity(resp.n());
    for i in 0..resp.n() {
        let row = resp.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > RESP_SUM_TOL {
            return Err(ClusterError::NotNormalized { row: i, sum });
        }
        let mut best = 0;
        for m in 1..l {
            if row[m] > row[best] {
                best = m;
            }
        }
        labels.push(best);
    }
    HardPartition::from_labels(data, labels, l)
}

/// Result of random-swap refinement: the best fit and which swaps were accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome<T> {
    pub best: T,
    pub accepted: Vec<usize>,
}

/// Random swap around K-means: replace one centroid by a random row,
/// re-run Lloyd, keep the result only if the SSE decreases.
pub fn random_swap_kmeans(
    data: &DataSet,
    base: KMeansFit,
    n_swaps: usize,
    cfg: &KMeansConfig,
    rng: &mut Stream,
) -> Result<SwapOutcome<KMeansFit>, ClusterError> {
    let mut best = base;
    let mut accepted = Vec::new();
    let l = best.centroids.len();
    for s in 0..n_swaps {
        let j = rng.random_range(0..l);
        let i = rng.random_range(0..data.n());
        let mut init = best.centroids.clone();
        init[j] = data.row(i).to_vec();
        let fit = kmeans(data, init, cfg)?;
        if fit.sse < best.sse {
            best = fit;
            accepted.push(s);
        }
    }
    Ok(SwapOutcome { best, accepted })
}

/// Random swap around EM: replace one mean by a random row (weights and
/// covariances kept), re-run EM, keep the result only if the log-likelihood
/// increases. Swaps whose EM run degenerates are rejected.
pub fn random_swap_em(
    data: &DataSet,
    base: EmFit,
    n_swaps: usize,
    cfg: &EmConfig,
    rng: &mut Stream,
) -> Result<SwapOutcome<EmFit>, ClusterError> {
    let mut best = base;
    let mut accepted = Vec::new();
    let l = best.params.l();
    for s in 0..n_swaps {
        let j = rng.random_range(0..l);
        let i = rng.random_range(0..data.n());
        let p = &best.params;
        let mut means = p.means.clone();
        means[j] = data.row(i).to_vec();
        let init = GmmParams::new(p.weights.clone(), means, p.covariances.clone(), cfg.reg_scale)?;
        match em_fit(data, init, cfg) {
            Ok(fit) if fit.loglik() > best.loglik() => {
                best = fit;
                accepted.push(s);
            }
            _ => {}
        }
    }
    Ok(SwapOutcome { best, accepted })
}
