//! Finite-difference check of the Gaussian Fisher information.

use clusterenum::clustering::{DataSet, HardPartition};
use clusterenum::criteria::{fim_gaussian, loglik_cluster, observed_information};
use clusterenum::numkernel::{cholesky, unique_len, unvech, vech, Matrix};
use clusterenum::stream::derive_stream;
use clusterenum::synthdata::sample_mvn;

struct Cluster {
    count: usize,
    mean: Vec<f64>,
    scatter: Matrix,
}

fn draw(r: usize, count: usize, seed: u64) -> Cluster {
    let (mu, sigma) = match r {
        1 => (vec![1.5], Matrix::from_rows(&[vec![0.7]])),
        _ => (vec![2.0, 3.5], Matrix::from_rows(&[vec![0.2, 0.1], vec![0.1, 0.75]])),
    };
    let rows = sample_mvn(count, &mu, &sigma, &mut derive_stream(seed, &[r as u64, count as u64])).unwrap();
    let data = DataSet::new(rows).unwrap();
    let p = HardPartition::from_labels(&data, vec![0; count], 1).unwrap();
    Cluster { count, mean: p.means()[0].clone(), scatter: p.scatters()[0].clone() }
}

fn loglik(c: &Cluster, theta: &[f64], r: usize) -> f64 {
    let sigma = unvech(r, &theta[r..]);
    let f = cholesky(&sigma, 0.0).unwrap();
    loglik_cluster(c.count, &c.mean, &c.scatter, &theta[..r], &f, c.count).unwrap()
}

/// Negative Hessian by central differences.
fn fd_information(c: &Cluster, theta: &[f64], r: usize) -> Matrix {
    let q = theta.len();
    let mut h = Matrix::zeros(q, q);
    let step: Vec<f64> = theta.iter().map(|t| 1e-4 * t.abs().max(0.1)).collect();
    for i in 0..q {
        for j in 0..q {
            let eval = |si: f64, sj: f64| {
                let mut t = theta.to_vec();
                t[i] += si * step[i];
                t[j] += sj * step[j];
                loglik(c, &t, r)
            };
            let d = eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0);
            h[(i, j)] = -d / (4.0 * step[i] * step[j]);
        }
    }
    h
}

fn mle(c: &Cluster) -> (Vec<f64>, Matrix) {
    let sigma = c.scatter.scale(1.0 / c.count as f64);
    let mut theta = c.mean.clone();
    theta.extend(vech(&sigma));
    (theta, sigma)
}

#[test]
fn fim_matches_finite_difference_hessian() {
    for r in [1, 2] {
        for count in [50, 500] {
            let c = draw(r, count, 7);
            let (theta, sigma) = mle(&c);
            let fim = fim_gaussian(count, &sigma).unwrap();
            let fd = fd_information(&c, &theta, r);
            let rel = fd.sub(&fim.matrix).unwrap().frobenius_norm() / fim.matrix.frobenius_norm();
            assert!(rel < 1e-4, "r={r} N={count}: relative error {rel:e}");

            let u = unique_len(r);
            let cross = fim.matrix.block(r, 0, u, r);
            assert!(cross.max_abs() < 1e-6, "analytic cross block {:e}", cross.max_abs());
            let fd_cross = fd.block(r, 0, u, r).max_abs() / fim.matrix.max_abs();
            assert!(fd_cross < 1e-6, "finite-difference cross block {fd_cross:e}");
        }
    }
}

#[test]
fn observed_information_away_from_the_estimate() {
    let r = 2;
    let c = draw(r, 200, 9);
    let (mut theta, _) = mle(&c);
    theta[0] += 0.3;
    theta[1] -= 0.2;
    theta[r] *= 1.4;
    theta[r + 1] += 0.05;
    let sigma = unvech(r, &theta[r..]);
    let mu = &theta[..r];
    let offset: Vec<f64> = c.mean.iter().zip(mu).map(|(a, b)| a - b).collect();
    let mut delta = c.scatter.clone();
    for i in 0..r {
        for j in 0..r {
            delta[(i, j)] += c.count as f64 * offset[i] * offset[j];
        }
    }
    let analytic = observed_information(c.count, &cholesky(&sigma, 0.0).unwrap(), &delta, &offset);
    let fd = fd_information(&c, &theta, r);
    let rel = fd.sub(&analytic).unwrap().frobenius_norm() / analytic.frobenius_norm();
    assert!(rel < 1e-4, "relative error {rel:e}");
    assert!(analytic.block(r, 0, unique_len(r), r).max_abs() > 1.0);
}

#[test]
fn fim_log_det_closed_form_univariate() {
    // J = diag(N/σ², N/(2σ⁴))
    let (n, s2) = (40usize, 2.5f64);
    let fim = fim_gaussian(n, &Matrix::from_rows(&[vec![s2]])).unwrap();
    let n = n as f64;
    let expected = (n / s2).ln() + (n / (2.0 * s2 * s2)).ln();
    assert!((fim.log_det - expected).abs() < 1e-12);
}
