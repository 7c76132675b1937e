use std::path::PathBuf;

use clusterenum::criteria::Criterion;
use clusterenum::enumeration::{enumerate, CandidateFamily, Clusterer, EnumConfig, EnumerationReport, EstimateSource};
use clusterenum::harness::{
    ingest_csv, parse_report_json, penalty_bookkeeping_error, report_json, run_monte_carlo, DataSource, McConfig,
    Normalize,
};
use clusterenum::numkernel::Matrix;
use clusterenum::stream::derive_stream;
use clusterenum::synthdata::{gen_data1, gen_data2, sample_mvn};
use clusterenum::clustering::DataSet;

const GAUSSIAN: [Criterion; 3] = [Criterion::BicN, Criterion::BicO, Criterion::BicG];

fn run(data: &DataSet, family: CandidateFamily, clusterer: Clusterer, criteria: &[Criterion], seed: u64) -> EnumerationReport {
    enumerate(data, "test", family, clusterer, criteria, &EnumConfig::default(), seed).unwrap()
}

fn iris() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/iris.csv")
}

#[test]
fn reports_are_reproducible() {
    let d = gen_data1(1, &mut derive_stream(5, &[]));
    let fam = CandidateFamily::new(1, 5).unwrap();
    for clusterer in [Clusterer::Em, Clusterer::Kmeans, Clusterer::RsEm, Clusterer::RsKmeans] {
        let a = run(&d.data, fam, clusterer, &Criterion::ALL, 9);
        let b = run(&d.data, fam, clusterer, &Criterion::ALL, 9);
        assert_eq!(a, b, "{clusterer:?}");
    }
}

#[test]
fn enlarging_the_family_keeps_existing_scores() {
    let d = gen_data2(20, &mut derive_stream(2, &[]));
    let small = run(&d.data, CandidateFamily::new(2, 6).unwrap(), Clusterer::Em, &Criterion::ALL, 4);
    let big = run(&d.data, CandidateFamily::new(1, 9).unwrap(), Clusterer::Em, &Criterion::ALL, 4);
    for c in Criterion::ALL {
        for s in &small.curve(c).unwrap().scores {
            assert_eq!(Some(s), big.curve(c).unwrap().score_at(s.l), "{c} l={}", s.l);
        }
    }
}

#[test]
fn criteria_share_one_fit_per_candidate() {
    let d = gen_data1(1, &mut derive_stream(3, &[]));
    let rep = run(&d.data, CandidateFamily::new(1, 6).unwrap(), Clusterer::Em, &GAUSSIAN, 3);
    let n = rep.curve(Criterion::BicN).unwrap();
    for other in [Criterion::BicO, Criterion::BicG] {
        for (a, b) in n.scores.iter().zip(&rep.curve(other).unwrap().scores) {
            assert_eq!(a.data_fidelity, b.data_fidelity);
            assert_eq!(a.clusters, b.clusters);
        }
    }
    assert!(penalty_bookkeeping_error(&rep) < 1e-9);
}

#[test]
fn single_candidate_family() {
    let d = gen_data1(1, &mut derive_stream(1, &[]));
    let rep = run(&d.data, CandidateFamily::new(3, 3).unwrap(), Clusterer::Em, &Criterion::ALL, 1);
    for c in Criterion::ALL {
        assert_eq!(rep.k_hat(c), Some(3));
    }
}

#[test]
fn single_blob_selects_one() {
    let sigma = Matrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 0.8]]);
    let fam = CandidateFamily::new(1, 4).unwrap();
    let mut hits = 0;
    for seed in 0..100u64 {
        let rows = sample_mvn(200, &[0.0, 0.0], &sigma, &mut derive_stream(seed, &[7])).unwrap();
        let d = DataSet::new(rows).unwrap();
        let rep = run(&d, fam, Clusterer::Em, &[Criterion::BicN], seed);
        hits += usize::from(rep.k_hat(Criterion::BicN) == Some(1));
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn large_data1_draw() {
    let d = gen_data1(48, &mut derive_stream(0, &[]));
    let rep = run(&d.data, CandidateFamily::new(1, 6).unwrap(), Clusterer::Em, &[Criterion::BicN, Criterion::BicO], 0);
    assert_eq!(rep.k_hat(Criterion::BicN), Some(3));
    assert_eq!(rep.k_hat(Criterion::BicO), Some(3));
}

#[test]
fn estimate_sources_agree_on_fidelity_identity() {
    let d = gen_data1(1, &mut derive_stream(6, &[]));
    for estimates in [EstimateSource::Mixture, EstimateSource::MixtureHard, EstimateSource::Partition] {
        let cfg = EnumConfig { estimates, ..EnumConfig::default() };
        let rep = enumerate(&d.data, "d", CandidateFamily::new(1, 6).unwrap(), Clusterer::Em, &GAUSSIAN, &cfg, 2).unwrap();
        let (n, o) = (rep.curve(Criterion::BicN).unwrap(), rep.curve(Criterion::BicO).unwrap());
        for (a, b) in n.scores.iter().zip(&o.scores) {
            assert_eq!(a.data_fidelity, b.data_fidelity);
            if let (Some(x), Some(y)) = (a.reconstructed_total(), b.reconstructed_total()) {
                assert!((x - a.total).abs() < 1e-9 * a.total.abs().max(1.0));
                assert!((y - b.total).abs() < 1e-9 * b.total.abs().max(1.0));
            }
        }
    }
}

#[test]
fn report_json_round_trip() {
    let d = gen_data1(1, &mut derive_stream(8, &[]));
    let rep = run(&d.data, CandidateFamily::new(1, 4).unwrap(), Clusterer::RsEm, &Criterion::ALL, 8);
    let s = serde_json::to_string(&rep).unwrap();
    let back: EnumerationReport = serde_json::from_str(&s).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn monte_carlo_is_reproducible_and_round_trips() {
    let cfg = McConfig {
        mc: 4,
        seed: 11,
        family: None,
        clusterer: Clusterer::Em,
        criteria: vec![Criterion::BicN, Criterion::BicOs],
        source: DataSource::Data1 { gamma: 1 },
        enum_config: EnumConfig { knee: true, ..EnumConfig::default() },
    };
    let a = run_monte_carlo(&cfg).unwrap();
    let b = run_monte_carlo(&cfg).unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
    assert_eq!(a.family, CandidateFamily::new(1, 6).unwrap());
    assert!(a.get("bic_os_knee").is_some());
    let back = parse_report_json(&report_json(&a).unwrap()).unwrap();
    assert_eq!(back, a);
    for c in &a.criteria {
        assert!((c.p_det + c.p_under + c.p_over - 1.0).abs() < 1e-12 || c.invalid > 0);
        assert_eq!(c.histogram.iter().map(|h| h.1).sum::<usize>() + c.invalid, 4);
    }
}

#[test]
fn iris_ingest() {
    let ing = ingest_csv(&iris(), true, Normalize::Mean).unwrap();
    assert_eq!((ing.data.n(), ing.data.r()), (150, 4));
    assert_eq!(ing.n_labels(), Some(3));
    let mean = ing.data.mean();
    for m in mean {
        assert!((m - 1.0).abs() < 1e-12);
    }
}
