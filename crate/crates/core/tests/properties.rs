use std::f64::consts::PI;

use proptest::prelude::*;

use clusterenum::clustering::{DataSet, GmmParams, HardPartition};
use clusterenum::criteria::{
    bic_n, bic_o, expected_counts, penalty_of, score, CandidateScore, Criterion, Estimates, ModelDims,
};
use clusterenum::enumeration::{knee_point, select_k};
use clusterenum::numkernel::{unique_len, unvech, vech, Matrix};
use clusterenum::stream::{derive_seed, derive_stream};
use rand::Rng;

fn curve(totals: &[f64]) -> Vec<CandidateScore> {
    totals
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if t.is_finite() {
                CandidateScore {
                    l: i + 1,
                    criterion: Criterion::BicN,
                    total: t,
                    data_fidelity: Some(t),
                    penalty: Some(0.0),
                    scale: 1.0,
                    offset: 0.0,
                    valid: true,
                    reason: None,
                    clusters: Vec::new(),
                }
            } else {
                CandidateScore::invalid(i + 1, Criterion::BicN, "test")
            }
        })
        .collect()
}

/// Random 2-d data with a random labelling in which every cluster has at least three points.
fn labelled(seed: u64, n: usize, l: usize) -> (DataSet, HardPartition) {
    let mut rng = derive_stream(seed, &[]);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
    let data = DataSet::new(rows).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| if i < 3 * l { i % l } else { rng.random_range(0..l) }).collect();
    let p = HardPartition::from_labels(&data, labels, l).unwrap();
    (data, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penalty_gap_balanced(l in 2usize..=10, r in 1usize..=4, big in any::<bool>()) {
        let n = if big { 10_000 } else { 100 };
        let per = n / l;
        let counts: Vec<usize> = (0..l).map(|m| if m == 0 { n - per * (l - 1) } else { per }).collect();
        let dims = ModelDims::new(r);
        let gap = penalty_of(Criterion::BicO, &counts, n, &dims).unwrap() - penalty_of(Criterion::BicN, &counts, n, &dims).unwrap();
        if n % l == 0 {
            let expect = (dims.q * l) as f64 * (l as f64).ln();
            prop_assert!((gap - expect).abs() <= 1e-9 * expect.max(1.0));
        } else {
            // uneven split: the gap is still at least q·l·log l
            prop_assert!(gap >= (dims.q * l) as f64 * (l as f64).ln() - 1e-9);
        }
    }

    #[test]
    fn shared_fidelity_and_stored_terms(seed in any::<u64>(), n in 30usize..120, l in 1usize..5) {
        let (_, p) = labelled(seed, n, l);
        let dims = ModelDims::new(2);
        let sn = bic_n(&p, Estimates::Partition, &dims);
        let so = bic_o(&p, Estimates::Partition, &dims);
        prop_assert!(sn.valid && so.valid);
        prop_assert_eq!(sn.data_fidelity, so.data_fidelity);
        for c in Criterion::ALL {
            let s = score(c, &p, Estimates::Partition, &dims);
            prop_assert!(s.valid);
            let back = s.reconstructed_total().unwrap();
            prop_assert!((back - s.total).abs() <= 1e-9 * s.total.abs().max(1.0), "{} {} {}", c, back, s.total);
        }
        let gap = (so.total - so.offset) - 2.0 * (sn.total - sn.offset);
        let eta = sn.penalty.unwrap() - so.penalty.unwrap();
        prop_assert!((gap - eta).abs() <= 1e-9 * so.total.abs().max(1.0));
    }

    #[test]
    fn rounded_expected_counts_keep_totals_consistent(seed in any::<u64>(), w in 0.05f64..0.95) {
        let (_, p) = labelled(seed, 41, 2);
        let covs = vec![Matrix::identity(2), Matrix::diag(&[2.0, 0.5])];
        let gm = GmmParams::new(vec![w, 1.0 - w], p.means().to_vec(), covs, 1e-8).unwrap();
        let counts = expected_counts(&gm, 41);
        let dims = ModelDims::new(2);
        let s = bic_n(&p, Estimates::Mixture(&gm), &dims);
        prop_assert_eq!(s.clusters.iter().map(|c| c.count).collect::<Vec<_>>(), counts);
        prop_assert!((s.reconstructed_total().unwrap() - s.total).abs() < 1e-9 * s.total.abs().max(1.0));
        let o = bic_o(&p, Estimates::Mixture(&gm), &dims);
        prop_assert_eq!(o.data_fidelity, s.data_fidelity);
    }

    #[test]
    fn argmax_invariant_under_affine_maps(
        totals in prop::collection::vec(-1e3f64..1e3, 1..12),
        a in 1e-3f64..1e3,
        b in -1e4f64..1e4,
    ) {
        let k = select_k(&curve(&totals)).unwrap();
        let mapped: Vec<f64> = totals.iter().map(|t| a * t + b).collect();
        let k2 = select_k(&curve(&mapped)).unwrap();
        // rounding in the map can only create ties, which resolve to a no-larger l
        if k2 != k {
            prop_assert!((mapped[k2 - 1] - mapped[k - 1]).abs() <= 1e-9 * mapped[k - 1].abs().max(1.0));
        }
        prop_assert!(totals[k - 1] >= totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn argmax_skips_invalid(totals in prop::collection::vec(-1e3f64..1e3, 2..10)) {
        let k = select_k(&curve(&totals)).unwrap();
        let mut holed = totals.clone();
        holed[k - 1] = f64::NEG_INFINITY;
        let k2 = select_k(&curve(&holed)).unwrap();
        prop_assert_ne!(k, k2);
        prop_assert!(totals[k2 - 1] <= totals[k - 1]);
    }

    #[test]
    fn knee_is_interior(totals in prop::collection::vec(-1e3f64..1e3, 3..12)) {
        let k = knee_point(&curve(&totals)).unwrap();
        prop_assert!(k > 1 && k < totals.len());
    }

    #[test]
    fn vech_round_trip(r in 1usize..6, vals in prop::collection::vec(-10.0f64..10.0, 21)) {
        let u = &vals[..unique_len(r)];
        prop_assert_eq!(vech(&unvech(r, u)), u.to_vec());
    }

    #[test]
    fn derived_streams_are_reproducible(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let x: u64 = derive_stream(seed, &[a, b]).random();
        let y: u64 = derive_stream(seed, &[a, b]).random();
        prop_assert_eq!(x, y);
        if a != b {
            prop_assert_ne!(derive_seed(seed, &[a, b]), derive_seed(seed, &[b, a]));
        }
    }
}

#[test]
fn select_examples() {
    assert_eq!(select_k(&curve(&[-10.0, -5.0, -7.0])).unwrap(), 2);
    assert_eq!(select_k(&curve(&[-5.0, -5.0])).unwrap(), 1);
    assert_eq!(select_k(&curve(&[-10.0, f64::NEG_INFINITY, -7.0])).unwrap(), 3);
    assert!(select_k(&curve(&[f64::NEG_INFINITY])).is_err());
    assert_eq!(knee_point(&curve(&[0.0, 10.0, 11.0, 11.5])).unwrap(), 2);
    assert_eq!(knee_point(&curve(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 2);
    assert!(knee_point(&curve(&[1.0, 2.0])).is_err());
}

#[test]
fn two_point_hand_values() {
    let data = DataSet::new(vec![vec![0.0], vec![2.0]]).unwrap();
    let p = HardPartition::from_labels(&data, vec![0, 0], 1).unwrap();
    let dims = ModelDims::new(1);
    let ln2 = 2f64.ln();
    let ll = -(2.0 * PI).ln() - 1.0;
    let expect = [
        (Criterion::BicN, ln2),
        (Criterion::BicO, 2.0 * ll - 2.0 * ln2),
        (Criterion::BicOs, 2.0 * ln2),
        (Criterion::BicNs, ln2),
    ];
    for (c, v) in expect {
        let s = score(c, &p, Estimates::Partition, &dims);
        assert!((s.total - v).abs() < 1e-12, "{c}: {} vs {v}", s.total);
    }
}
