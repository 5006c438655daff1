use std::fs;

use funcanova::funcdata::{load_dataset, write_dataset, LoadOptions};
use funcanova::simulate::{gen_dataset, ravdess_like, write_openface_fixture, FixtureConfig, SimulationConfig};
use funcanova::Error;

#[test]
fn canonical_layout_round_trips_bit_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, _) = gen_dataset(&SimulationConfig {
        units: 5,
        sd: 0.7,
        ..Default::default()
    })
    .unwrap();
    let manifest = write_dataset(&ds, tmp.path()).unwrap();
    let back = load_dataset(&manifest, tmp.path(), &LoadOptions::default()).unwrap();
    assert_eq!(back, ds);
    for (a, b) in back.samples().iter().zip(ds.samples()) {
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    // writing the reloaded dataset again gives the same bytes
    let again = tempfile::tempdir().unwrap();
    write_dataset(&back, again.path()).unwrap();
    for e in fs::read_dir(tmp.path()).unwrap() {
        let p = e.unwrap().path();
        let q = again.path().join(p.file_name().unwrap());
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{}", p.display());
    }
}

#[test]
fn mixed_lengths_resample_to_the_shortest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut long = String::from("frame,AU12\n");
    for i in 0..110 {
        long.push_str(&format!("{},{}\n", i + 1, (i as f64 * 0.1).sin() + 2.0));
    }
    let mut short = String::from("frame,AU12\n");
    for i in 0..108 {
        short.push_str(&format!("{},{}\n", i + 1, (i as f64) * 0.01));
    }
    fs::write(d.join("a.csv"), &long).unwrap();
    fs::write(d.join("b.csv"), &short).unwrap();
    fs::write(d.join("c.csv"), &long).unwrap();
    fs::write(d.join("e.csv"), &short).unwrap();
    fs::write(d.join("manifest.csv"), "file,unit,group\na.csv,u1,neutral\nc.csv,u2,neutral\nb.csv,u1,happy\ne.csv,u2,happy\n").unwrap();
    let ds = load_dataset(&d.join("manifest.csv"), d, &LoadOptions::default()).unwrap();
    assert_eq!(ds.grid().len(), 108);

    let a = ds.curve(0, 0, 0);
    let orig = |i: usize| (i as f64 * 0.1).sin() + 2.0;
    // endpoints are kept
    assert_eq!(a[0], orig(0));
    assert_eq!(a[107], orig(109));
    // hand-computed interpolation at three probe points: target t_j = j/107,
    // source position s = t_j·109
    for j in [1usize, 50, 106] {
        let s = j as f64 / 107.0 * 109.0;
        let lo = s.floor() as usize;
        let w = s - lo as f64;
        let want = orig(lo) + w * (orig(lo + 1) - orig(lo));
        assert!((a[j] - want).abs() < 1e-12, "probe {j}: {} vs {want}", a[j]);
    }
    // the 108-frame series lands on its own samples
    let b = ds.curve(1, 0, 0);
    for (i, v) in b.iter().enumerate() {
        assert!((v - i as f64 * 0.01).abs() < 1e-12);
    }
}

#[test]
fn missing_recording_is_named_in_the_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("manifest.csv"), "file,unit,group\nnope.csv,u1,a\n").unwrap();
    let err = load_dataset(&tmp.path().join("manifest.csv"), tmp.path(), &LoadOptions::default()).unwrap_err();
    assert!(!err.is_numeric());
    assert!(err.to_string().contains("nope.csv"), "{err}");
}

#[test]
fn unbalanced_manifest_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "time,v\n0,1\n1,2\n2,3\n3,4\n";
    for f in ["a.csv", "b.csv", "c.csv"] {
        fs::write(tmp.path().join(f), body).unwrap();
    }
    fs::write(tmp.path().join("manifest.csv"), "file,unit,group\na.csv,u1,x\nb.csv,u2,x\nc.csv,u1,y\n").unwrap();
    let err = load_dataset(&tmp.path().join("manifest.csv"), tmp.path(), &LoadOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Unbalanced(_)), "{err}");
}

#[test]
fn openface_fixture_loads_with_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FixtureConfig::default();
    let manifest = write_openface_fixture(&cfg, tmp.path()).unwrap();
    let ds = load_dataset(&manifest, tmp.path(), &LoadOptions::default()).unwrap();
    assert_eq!(ds.n_treatments(), 7);
    assert_eq!(ds.n_variates(), 17);
    assert_eq!(ds.units_per_group(), 24);
    assert_eq!(ds.group_labels()[0], "neutral");
    assert!((105..=110).contains(&ds.grid().len()));

    let direct = ravdess_like(&cfg).unwrap();
    assert_eq!(direct.grid().len(), 110);
    assert_eq!(direct.variate_labels(), ds.variate_labels());
}
