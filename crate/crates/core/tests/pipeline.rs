use std::fs;

use sqzdistill::pipeline::{run_pipeline, PipelineConfig, SourceSpec};
use sqzdistill::temporal::SynthConfig;
use sqzdistill::tomography::MaxLikOptions;

fn small(n: usize) -> PipelineConfig {
    PipelineConfig {
        windows: SynthConfig { n_windows: n, ..SynthConfig::default() },
        maxlik: MaxLikOptions { max_iters: 20, ..MaxLikOptions::default() },
        wigner_points: 21,
        ..PipelineConfig::default()
    }
}

#[test]
fn identity_pipeline_recovers_source_squeezing() {
    let r = 0.3466;
    let cfg = PipelineConfig {
        source: SourceSpec::Explicit { r, eta: 1.0, delta_sq: 0.0, subtract: false },
        windows: SynthConfig { n_windows: 400_000, ..SynthConfig::default() },
        offset: Some(2),
        gaussify: vec![],
        tomography: false,
        ..PipelineConfig::default()
    };
    let rep = run_pipeline(&cfg).unwrap();
    let want = -10.0 * (-2.0 * r).exp().log10();
    let initial = rep.stage("initial").unwrap();
    assert!((initial.squeezing_db - want).abs() < 1e-6);
    let got = rep.stage("recovered").unwrap().squeezing_db;
    assert!((got - want).abs() < 0.05, "{got} dB vs {want} dB");
    assert!(rep.mode.overlap > 0.99);
}

#[test]
fn same_seed_gives_identical_bundle() {
    let cfg = small(12_000);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_pipeline(&cfg).unwrap().write_bundle(d.path()).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let expected = ["eigenvalues.csv", "mode.csv", "report.json", "rho.json", "traces.csv", "wigner.csv"];
    assert_eq!(names, expected.map(std::ffi::OsString::from));
    for n in &names {
        let a = fs::read(dirs[0].path().join(n)).unwrap();
        let b = fs::read(dirs[1].path().join(n)).unwrap();
        assert!(a == b, "{n:?} differs");
    }

    let other = run_pipeline(&PipelineConfig { seed: 2, ..cfg }).unwrap();
    let d = tempfile::tempdir().unwrap();
    other.write_bundle(d.path()).unwrap();
    assert_ne!(
        fs::read(d.path().join("report.json")).unwrap(),
        fs::read(dirs[0].path().join("report.json")).unwrap()
    );
}

#[test]
fn report_carries_convention_and_stages() {
    let rep = run_pipeline(&small(12_000)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
    assert!(v["convention"].as_str().unwrap().contains("-10 log10(varY)"));
    let names: Vec<&str> = rep.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["initial", "subtracted-exact", "subtracted", "gaussify-1", "tomography"]);
    let g = rep.stage("gaussify-1").unwrap();
    assert!(g.p_svv.unwrap() <= 0.5);
    assert_eq!(rep.mode.top_eigenvalues.len(), 10);
    assert!(rep.mode.top_eigenvalues.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn failures_name_their_stage() {
    let bad_source = PipelineConfig {
        source: SourceSpec::Explicit { r: 0.3, eta: 1.5, delta_sq: 0.0, subtract: true },
        ..small(12_000)
    };
    assert_eq!(run_pipeline(&bad_source).unwrap_err().stage, "source");

    let few = small(5_000);
    let e = run_pipeline(&few).unwrap_err();
    assert_eq!(e.stage, "mode");
    assert!(e.to_string().starts_with("stage mode: "));

    let starved = PipelineConfig { gaussify: vec![1e-12], ..small(12_000) };
    assert_eq!(run_pipeline(&starved).unwrap_err().stage, "gaussify");

    let far = PipelineConfig { offset: Some(100), ..small(12_000) };
    assert_eq!(run_pipeline(&far).unwrap_err().stage, "integrate");
}
