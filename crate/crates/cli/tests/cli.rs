use std::path::Path;
use std::process::{Command, Output};

use umi_core::cohort::{Group, Timepoint};
use umi_core::matrix::MatrixFormat;
use umi_core::synth::{generate_synthetic, SyntheticSpec};

fn umi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umi"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn umi")
}

fn small_sets() -> Vec<&'static str> {
    vec![
        "--set", "rings=8", "--set", "segments=10", "--set", "n_ad=16", "--set", "n_cu=16", "--set", "n_mci=24",
    ]
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_then_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate"];
    args.extend(small_sets());
    args.extend(["--out", "sim"]);
    let o = umi(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["features.csv", "cohort.csv", "mesh.txt", "truth.json", "pipeline.cfg"] {
        assert!(dir.path().join("sim").join(f).is_file(), "{f} missing");
    }
    let a = umi(&["run", "sim/pipeline.cfg", "--out", "r1"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = umi(&["run", "sim/pipeline.cfg", "--out", "r2"], dir.path());
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    for f in ["umi.csv", "template.json", "stats.json", "roi.csv"] {
        let x = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        rings: 8,
        segments: 10,
        n_ad: 16,
        n_cu: 16,
        n_mci: 4,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec).unwrap();
    let p = dir.path();
    syn.matrix(Group::AD, Timepoint::Baseline).save(&p.join("ad.csv"), MatrixFormat::Csv).unwrap();
    syn.matrix(Group::CU, Timepoint::Baseline).save(&p.join("cu.csv"), MatrixFormat::Csv).unwrap();
    syn.mesh.save(&p.join("mesh.txt")).unwrap();

    for g in ["ad", "cu"] {
        let input = format!("{g}.csv");
        let out = format!("d_{g}");
        let o = umi(&["decompose", "--input", &input, "--mesh", "mesh.txt", "--out", &out], p);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(p.join(&out).join("low_rank.csv").is_file());
        assert!(p.join(&out).join("diagnostics.json").is_file());
    }
    let o = umi(
        &[
            "roi", "--group-a", "d_ad/low_rank.csv", "--group-b", "d_cu/low_rank.csv", "--mesh", "mesh.txt",
            "--n-perm", "500", "--p-thresh", "0.01", "--out", "roi",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let overlay = std::fs::read_to_string(p.join("roi/roi_overlay.txt")).unwrap();
    assert!(!overlay.is_empty());
    let o = umi(
        &[
            "template", "--low-rank-ad", "d_ad/low_rank.csv", "--low-rank-cu", "d_cu/low_rank.csv", "--roi",
            "roi/roi.csv", "--out", "t.json",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = umi(&["umi", "--template", "t.json", "--features", "ad.csv"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("subject_id,umi"));
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let syn = generate_synthetic(&SyntheticSpec {
        rings: 8,
        segments: 10,
        n_ad: 6,
        n_cu: 6,
        n_mci: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    syn.matrix(Group::AD, Timepoint::Baseline).save(&p.join("ad.csv"), MatrixFormat::Csv).unwrap();
    syn.matrix(Group::CU, Timepoint::Baseline).save(&p.join("cu.csv"), MatrixFormat::Csv).unwrap();
    syn.mesh.save(&p.join("mesh.txt")).unwrap();

    // unattainable threshold
    let o = umi(
        &[
            "roi", "--group-a", "ad.csv", "--group-b", "cu.csv", "--mesh", "mesh.txt", "--n-perm", "5000",
            "--p-thresh", "1e-5", "--out", "roi",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1/5001"), "{}", stderr(&o));

    // iteration limit: outputs are still written
    let o = umi(
        &["--format", "bin", "decompose", "--input", "ad.csv", "--mesh", "mesh.txt", "--max-iters", "2", "--out", "d"],
        p,
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(p.join("d/low_rank.bin").is_file());

    // missing file, unknown synthetic parameter, malformed mesh
    assert_eq!(umi(&["umi", "--template", "no.json", "--features", "ad.csv"], p).status.code(), Some(2));
    assert_eq!(umi(&["simulate", "--set", "bogus=1", "--out", "s"], p).status.code(), Some(2));
    std::fs::write(p.join("bad_mesh.txt"), "not a mesh\n").unwrap();
    assert_eq!(
        umi(&["decompose", "--input", "ad.csv", "--mesh", "bad_mesh.txt", "--out", "x"], p).status.code(),
        Some(2)
    );
}

#[test]
fn stats_subcommands_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = umi(&["stats", "power"], p);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["constant"].as_f64().unwrap() - 15.698).abs() < 1e-3);

    std::fs::write(p.join("roc.csv"), "score,label\n1,1\n2,1\n0.5,0\n1.5,0\n").unwrap();
    let o = umi(&["stats", "roc", "--input", "roc.csv", "--points", "pts.csv", "--out", "roc.json"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("roc.json")).unwrap()).unwrap();
    assert_eq!(v["auc"].as_f64(), Some(0.75));
    assert!(std::fs::read_to_string(p.join("pts.csv")).unwrap().starts_with("threshold,sensitivity,specificity"));

    std::fs::write(p.join("s.csv"), "time,event,marker\n5,1,1\n8,0,1\n3,1,0\n9,1,0\n12,0,0\n4,1,1\n").unwrap();
    let o = umi(&["stats", "km", "--input", "s.csv", "--steps", "km"], p);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(p.join("km/km_positive.csv").is_file());

    let o = umi(&["stats", "chi2", "--table", "1,2,3"], p);
    assert_eq!(o.status.code(), Some(2));
}
