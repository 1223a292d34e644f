use umi_core::pipeline::{run_pipeline, sweep_lambda, synthetic_config_text, PipelineConfig, SweepConfig};
use umi_core::synth::SyntheticSpec;

fn small() -> SyntheticSpec {
    SyntheticSpec {
        rings: 8,
        segments: 10,
        n_ad: 16,
        n_cu: 16,
        n_mci: 24,
        ..SyntheticSpec::default()
    }
}

#[test]
fn synthetic_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = synthetic_config_text(&small(), "out").replace("folds = 0", "folds = 3");
    let cfg = PipelineConfig::parse(&text, dir.path()).unwrap();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.manifest["status"], "ok");
    let out = dir.path().join("out");
    for f in [
        "manifest.json",
        "roi.csv",
        "roi_overlay.txt",
        "template.json",
        "umi.csv",
        "stats.json",
        "stability_low_rank.csv",
        "decompose_ad.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    let auc = stats["roc"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    let hashes = report.manifest["outputs"].as_object().unwrap();
    assert!(hashes.contains_key("umi.csv"));
}

#[test]
fn bad_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let good = synthetic_config_text(&small(), "out");
    for bad in [
        good.replace("[roi]", "[roi]\nbogus = 1"),
        good.replace("alpha = 1.1", "alpha = 3"),
        good.replace("n_perm = 5000", "n_perm = 10"),
        "[nonsense]\nx = 1\n".to_string(),
    ] {
        let err = PipelineConfig::parse(&bad, dir.path())
            .and_then(|c| run_pipeline(&c).map(|_| ()))
            .expect_err("config should be rejected");
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn sweep_reports_every_grid_point() {
    let cfg = SweepConfig {
        spec: small(),
        repeats: 2,
        grid: vec![0.004, 0.008, 0.012],
        ..SweepConfig::default()
    };
    let res = sweep_lambda(&cfg).unwrap();
    assert_eq!(res.points.len(), 3);
    assert!(res.points.windows(2).all(|w| w[0].lambda < w[1].lambda));
    assert!(res.points.iter().all(|p| (0.0..=1.0).contains(&p.classification_error)));
    assert_eq!(res.to_csv().lines().count(), 4);
    assert!(res.best() < 3);
}
