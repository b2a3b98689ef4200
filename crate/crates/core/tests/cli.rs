mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bidb::config::RunConfig;
use bidb::nn::TrainConfig;
use bidb::scoring::ScoreMatrix;

fn bidb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidb"))
        .args(args)
        .env_remove("BIDB_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bidb(args);
    assert!(
        out.status.success(),
        "bidb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let cfg = RunConfig {
        world: common::tiny_world(3),
        train: TrainConfig {
            epochs: 3,
            learning_rate: 1e-3,
            batch_size: 16,
            ..TrainConfig::default()
        },
        attribute_train: None,
    };
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    let world = d.join("world");
    ok(&["synth", "--config", s(&cfg), "--out", s(&world)]);
    for f in ["manifest.csv", "train.csv", "gallery.csv", "probe.csv", "annotations.csv", "run.json", "config.toml"] {
        assert!(world.join(f).is_file(), "{f}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(world.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "synth");
    assert_eq!(run["seed"], 3);

    let train = world.join("train.csv");
    let (attr, nl, lc) = (d.join("attr.bidh"), d.join("nl.bidh"), d.join("lc.bidh"));
    ok(&["train", "--kind", "attribute", "--manifest", s(&train), "--config", s(&cfg), "--out", s(&attr)]);
    ok(&["train", "--kind", "identity", "--manifest", s(&train), "--config", s(&cfg), "--out", s(&nl)]);
    ok(&[
        "train", "--kind", "identity", "--manifest", s(&train), "--config", s(&cfg), "--init", s(&attr), "--out", s(&lc),
    ]);
    let loss = std::fs::read_to_string(d.join("nl.bidh.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    assert!(d.join("lc.bidh.run.json").is_file());

    let (gallery, probes) = (world.join("gallery.csv"), world.join("probe.csv"));
    let (m_nl, m_lc, m_f) = (d.join("nl.csv"), d.join("lc.csv"), d.join("fused.csv"));
    ok(&["score", "--gallery", s(&gallery), "--probes", s(&probes), "--head", s(&nl), "--out", s(&m_nl)]);
    ok(&["score", "--gallery", s(&gallery), "--probes", s(&probes), "--head", s(&lc), "--out", s(&m_lc), "--threads", "2"]);
    ok(&["fuse", s(&m_lc), s(&m_nl), "--out", s(&m_f)]);
    let csv = ScoreMatrix::load(&m_f).unwrap();
    assert_eq!(csv, ScoreMatrix::load(&d.join("fused.bids")).unwrap());
    assert_eq!(csv.gallery_len(), 8);
    assert_eq!(csv.mated_count(), 6 * 4);

    let verify = ok(&["verify", s(&m_f)]);
    let lines = String::from_utf8(verify.stdout).unwrap();
    assert!(lines.lines().all(|l| l.starts_with("PASS")), "{lines}");

    let report = d.join("report");
    let arg = |name: &str, p: &Path| format!("{name}={}", s(p));
    let out = ok(&[
        "report",
        "--matrix", &arg("NLCRIM", &m_nl),
        "--matrix", &arg("LCRIM", &m_lc),
        "--matrix", &arg("Fused", &m_f),
        "--probes", s(&probes),
        "--out", s(&report),
    ]);
    let table = std::fs::read_to_string(report.join("rank_table.csv")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), table);
    let mut rows = table.lines();
    let header = rows.next().unwrap();
    assert!(header.starts_with("model,All Distances rank-1"), "{header}");
    assert_eq!(rows.map(|r| r.split(',').next().unwrap()).collect::<Vec<_>>(), ["NLCRIM", "LCRIM", "Fused"]);
    let cmc = std::fs::read_to_string(report.join("cmc.svg")).unwrap();
    assert_eq!(cmc.matches("<path class=\"curve\"").count(), 3 * 5);
    assert!(report.join("roc.svg").is_file());
    let curve = std::fs::read_to_string(report.join("curves/cmc-Fused-close.csv")).unwrap();
    assert!(curve.starts_with("rank,hit_rate\n1,"));
    let roc = std::fs::read_to_string(report.join("curves/roc-Fused-All_Distances.csv")).unwrap();
    assert!(roc.starts_with("threshold,far,tar\n-inf,"), "{}", &roc[..40]);

    let templates = d.join("templates.csv");
    ok(&["embed", "--manifest", s(&gallery), "--head", s(&nl), "--out", s(&templates), "--by-identity"]);
    let t = std::fs::read_to_string(&templates).unwrap();
    assert!(t.starts_with("owner_id,source_count,e_0,"));
    assert_eq!(t.lines().count(), 1 + 8);
}

#[test]
fn synth_refuses_non_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("w");
    ok(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    let again = bidb(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(again.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    ok(&["synth", "--config", s(&cfg), "--out", s(&out), "--force"]);
}

#[test]
fn seed_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("w");
    let status = Command::new(env!("CARGO_BIN_EXE_bidb"))
        .args(["synth", "--config", s(&cfg), "--out", s(&out)])
        .env("BIDB_SEED", "17")
        .status()
        .unwrap();
    assert!(status.success());
    let run = std::fs::read_to_string(out.join("run.json")).unwrap();
    assert!(run.contains("\"seed\": 17"), "{run}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bidb(&[]).status.code(), Some(2));
    assert_eq!(bidb(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bidb(&["synth"]).status.code(), Some(2));
    assert_eq!(bidb(&["train", "--kind", "neither", "--manifest", "m", "--out", "o"]).status.code(), Some(2));
    assert_eq!(bidb(&["score", "--gallery", "g", "--probes", "p", "--head", "h", "--out", "o", "--threads", "0"]).status.code(), Some(2));
    assert_eq!(bidb(&["report", "--matrix", "noequals", "--probes", "p", "--out", "o"]).status.code(), Some(2));
    assert_eq!(bidb(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_3_and_name_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[world]\nfeature_dimension = 10\n").unwrap();
    let out = bidb(&["synth", "--config", s(&cfg), "--out", s(&tmp.path().join("w"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feature_dimension"));

    std::fs::write(&cfg, "[train]\nlearning_rate = -1.0\n").unwrap();
    let out = bidb(&["synth", "--config", s(&cfg), "--out", s(&tmp.path().join("w"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let m = tmp.path().join("m.csv");
    std::fs::write(&m, "probe_id,gallery_id,score,is_mated\np,g,1.5,\n").unwrap();
    assert_eq!(bidb(&["verify", s(&m)]).status.code(), Some(3));
    assert_eq!(bidb(&["verify", s(&tmp.path().join("missing.bids"))]).status.code(), Some(3));
}

#[test]
fn matrix_without_ground_truth_skips_metric_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let m = ScoreMatrix::new(vec!["p".into()], vec!["A".into(), "B".into()], vec![0.5, -0.25], None).unwrap();
    let path = tmp.path().join("m.bids");
    m.save_bids(&path).unwrap();
    let out = ok(&["verify", s(&path)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("SKIP")));
    assert!(!text.contains("FAIL"));
}

#[test]
fn zero_epochs_warns_and_writes_initial_head() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write_config(d);
    let world = d.join("w");
    ok(&["synth", "--config", s(&cfg), "--out", s(&world)]);
    let head = d.join("h.bidh");
    let out = ok(&[
        "train", "--kind", "identity", "--manifest", s(&world.join("train.csv")), "--config", s(&cfg), "--epochs", "0",
        "--out", s(&head),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(head.is_file());
    let loss = std::fs::read_to_string(d.join("h.bidh.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1);
}
