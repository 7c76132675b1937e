//! Seeded Gaussian-mixture generators, including the two synthetic
//! benchmark sets (`data1`, `data2`).

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::DataSet;
use crate::numkernel::{cholesky, Matrix, NumError};
use crate::stream::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub count: usize,
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// Ground truth of a mixture with fixed per-cluster counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
}

impl MixtureSpec {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn r(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn total(&self) -> usize {
        self.components.iter().map(|c| c.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDraw {
    pub data: DataSet,
    /// 0-based cluster index of each row.
    pub labels: Vec<usize>,
    pub k: usize,
}

/// `n` draws `x = mu + L z` with `L Lᵀ = sigma` and `z` standard normal.
pub fn sample_mvn(n: usize, mu: &[f64], sigma: &Matrix, rng: &mut Stream) -> Result<Vec<Vec<f64>>, NumError> {
    let r = mu.len();
    if sigma.rows() != r || !sigma.is_square() {
        return Err(NumError::DimMismatch { expected: r, got: sigma.rows() });
    }
    let lower = cholesky(sigma, 0.0)?.lower().clone();
    let mut z = vec![0.0; r];
    let out = (0..n)
        .map(|_| {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            (0..r).map(|i| mu[i] + (0..=i).map(|j| lower[(i, j)] * z[j]).sum::<f64>()).collect()
        })
        .collect();
    Ok(out)
}

/// Draws every component in order, exactly `count` points each.
pub fn sample_mixture(spec: &MixtureSpec, rng: &mut Stream) -> Result<LabeledDraw, NumError> {
    let mut rows = Vec::with_capacity(spec.total());
    let mut labels = Vec::with_capacity(spec.total());
    for (k, c) in spec.components.iter().enumerate() {
        rows.extend(sample_mvn(c.count, &c.mean, &c.covariance, rng)?);
        labels.extend(std::iter::repeat_n(k, c.count));
    }
    let data = DataSet::new(rows).map_err(|_| NumError::NonFinite)?;
    Ok(LabeledDraw { data, labels, k: spec.k() })
}

fn comp(count: usize, mean: [f64; 2], cov: [[f64; 2]; 2]) -> Component {
    Component { count, mean: mean.to_vec(), covariance: Matrix::from_rows(&[cov[0].to_vec(), cov[1].to_vec()]) }
}

/// Three elliptical clusters with counts `γ·(50, 100, 200)`.
pub fn data1_spec(gamma: usize) -> MixtureSpec {
    MixtureSpec {
        components: vec![
            comp(50 * gamma, [2.0, 3.5], [[0.2, 0.1], [0.1, 0.75]]),
            comp(100 * gamma, [6.0, 2.7], [[0.5, 0.25], [0.25, 0.5]]),
            comp(200 * gamma, [9.0, 4.0], [[1.0, 0.5], [0.5, 1.0]]),
        ],
    }
}

/// Ten clusters of `n_k` points: two elliptical, eight spherical with variance 0.1.
pub fn data2_spec(n_k: usize) -> MixtureSpec {
    let sph = [[0.1, 0.0], [0.0, 0.1]];
    MixtureSpec {
        components: vec![
            comp(n_k, [0.0, 0.0], [[0.25, -0.15], [-0.15, 0.15]]),
            comp(n_k, [3.0, -2.5], [[0.5, 0.0], [0.0, 0.15]]),
            comp(n_k, [3.0, 1.0], sph),
            comp(n_k, [-1.0, -3.0], sph),
            comp(n_k, [-4.0, 0.0], sph),
            comp(n_k, [-1.0, 1.0], sph),
            comp(n_k, [-3.0, 3.0], sph),
            comp(n_k, [2.5, 4.0], sph),
            comp(n_k, [-3.5, -2.5], sph),
            comp(n_k, [0.0, 3.0], sph),
        ],
    }
}

pub fn gen_data1(gamma: usize, rng: &mut Stream) -> LabeledDraw {
    assert!(gamma >= 1, "gamma must be at least 1");
    sample_mixture(&data1_spec(gamma), rng).expect("fixed covariances are SPD")
}

pub fn gen_data2(n_k: usize, rng: &mut Stream) -> LabeledDraw {
    assert!(n_k >= 1, "n_k must be at least 1");
    sample_mixture(&data2_spec(n_k), rng).expect("fixed covariances are SPD")
}
