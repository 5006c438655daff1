use funcanova::inference::{f_cdf, f_quantile, TestMethod};
use funcanova::pipeline::{self, accuracy, AnalysisConfig, TrainedClassifier};
use funcanova::simulate::{gen_dataset, noise_sweep, sample_dataset, zone_match_rate, SimulationConfig};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

fn low_noise() -> SimulationConfig {
    SimulationConfig {
        sd: 0.05,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn f_quantile_matches_reference_distribution() {
    for (d1, d2) in [(1.0, 10.0), (1.0, 60.0), (1.0, 120.0), (3.0, 7.0), (1.0, 1.0), (12.0, 400.0)] {
        let reference = FisherSnedecor::new(d1, d2).unwrap();
        for p in [0.01, 0.1, 0.5, 0.9, 0.95, 0.999] {
            let q = f_quantile(d1, d2, p).unwrap();
            let want = reference.inverse_cdf(p);
            assert!((q - want).abs() <= 1e-6 * want, "F({d1},{d2}) p={p}: {q} vs {want}");
            assert!((f_cdf(d1, d2, q).unwrap() - p).abs() <= 1e-10);
        }
    }
    assert!((f_quantile(1.0, 1.0, 0.5).unwrap() - 1.0).abs() <= 1e-12);
}

#[test]
fn classic_and_permutation_zones_agree_for_strong_effects() {
    let cfg = low_noise();
    let (ds, _) = gen_dataset(&cfg).unwrap();
    let classic = pipeline::analyze(&ds, &cfg.analysis).unwrap();
    let perm_cfg = AnalysisConfig {
        method: TestMethod::Permutation,
        ..cfg.analysis.clone()
    };
    let perm = pipeline::analyze(&ds, &perm_cfg).unwrap();
    for (a, b) in classic.reports.iter().zip(&perm.reports) {
        assert_eq!(a.contrast, b.contrast);
        let j = zone_match_rate(&a.zones, &b.zones);
        assert!(j >= 0.8, "contrast {:?}: Jaccard {j}", a.contrast);
    }
}

#[test]
fn low_noise_classification() {
    let cfg = low_noise();
    let (train, truth) = gen_dataset(&cfg).unwrap();
    let a = pipeline::analyze(&train, &cfg.analysis).unwrap();
    let clf = TrainedClassifier::fit(&a, &train, &cfg.analysis).unwrap();
    let on_train = accuracy(&clf.predict(&train.labeled_units()).unwrap()).unwrap();
    assert!(on_train >= 0.9, "training accuracy {on_train}");

    let (fit_part, held_out) = train.split_units(0.7).unwrap();
    let a = pipeline::analyze(&fit_part, &cfg.analysis).unwrap();
    let clf = TrainedClassifier::fit(&a, &fit_part, &cfg.analysis).unwrap();
    let held = accuracy(&clf.predict(&held_out).unwrap()).unwrap();
    assert!(held >= 0.85, "held-out accuracy {held}");

    let fresh = sample_dataset(&cfg, &truth, 10, 99, 1).unwrap();
    let acc = accuracy(&clf.predict(&fresh.labeled_units()).unwrap()).unwrap();
    assert!(acc >= 0.85, "fresh-sample accuracy {acc}");
}

#[test]
fn sweep_is_reproducible_and_shaped() {
    let cfg = SimulationConfig {
        seed: 17,
        ..Default::default()
    };
    let methods = [TestMethod::Classic, TestMethod::Permutation];
    let one = noise_sweep(&cfg, &[0.5], 1, &methods).unwrap();
    assert_eq!(one.rows.len(), 2);
    assert_eq!(one.summary().len(), 2);

    let a = noise_sweep(&cfg, &[0.05, 1.0], 3, &methods).unwrap();
    let b = noise_sweep(&cfg, &[0.05, 1.0], 3, &methods).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let low: Vec<_> = a.summary().into_iter().filter(|s| s.sd == 0.05).collect();
    for s in low {
        assert!(s.dissimilarity <= 0.1, "{s:?}");
        assert!(s.match_rate >= 0.9, "{s:?}");
    }
}
