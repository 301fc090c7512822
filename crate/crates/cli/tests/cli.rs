use std::path::Path;
use std::process::{Command, Output};

const SMALL_GEN: &str = r#"{
  "num_samples": 500,
  "planted_pairs": [
    {"b": 0, "c": 1, "exclusive_fraction": 0.1, "cooccur_count": 135, "exclusive_count": 15},
    {"b": 2, "c": 3, "exclusive_fraction": 0.1, "cooccur_count": 135, "exclusive_count": 15}
  ]
}"#;
const SHORT: [&str; 4] = ["--set", "stage1_epochs=3", "--set", "stage2_epochs=2"];

fn debias(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_debias")).args(args).current_dir(dir).env_remove("DEBIAS_SEED").output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = debias(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn provenance(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("provenance.json")).unwrap()).unwrap()
}

/// Generates train and test sets from `SMALL_GEN` in `dir`.
fn small_data(dir: &Path) {
    std::fs::write(dir.join("gen.json"), SMALL_GEN).unwrap();
    ok(&["gen", "--config", "gen.json", "--out", "train", "--seed", "2"], dir);
    ok(&["gen", "--config", "gen.json", "--out", "test", "--split", "test", "--seed", "2"], dir);
}

fn train_eval(dir: &Path, method: &str, tag: &str) {
    let model = format!("{tag}_model");
    let mut args = vec!["train", "--data", "train", "--out", &model, "--method", method, "--planted"];
    args.extend(SHORT);
    ok(&args, dir);
    ok(&["eval", "--model", &model, "--test", "test", "--out", &format!("{tag}_eval")], dir);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_writes_provenance_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_data(dir);
    train_eval(dir, "standard", "std");
    train_eval(dir, "feature-split", "fs");
    for sub in ["train", "test", "std_model", "std_eval", "fs_model", "fs_eval"] {
        assert!(dir.join(sub).join("provenance.json").is_file(), "{sub}");
    }
    assert_eq!(provenance(&dir.join("fs_model"))["config"]["method"], "ours_feature_split");
    assert_eq!(provenance(&dir.join("train"))["seed"], 2);
    assert_eq!(provenance(&dir.join("train"))["config"]["num_samples"], 500);

    let out = ok(&["report", "std_eval", "fs_eval"], dir);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "biased,context,bias,exclusive_standard,cooccur_standard,exclusive_ours_feature_split,cooccur_ours_feature_split");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));

    ok(&["report", "std_eval", "fs_eval", "--out", "merged"], dir);
    assert_eq!(std::fs::read_to_string(dir.join("merged/comparison.csv")).unwrap(), csv);
    assert!(dir.join("merged/provenance.json").is_file());
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        small_data(dir);
        train_eval(dir, "cam", "cam");
    }
    for sub in ["train", "test", "cam_model", "cam_eval"] {
        assert_eq!(read_all(&a.path().join(sub)), read_all(&b.path().join(sub)), "{sub}");
    }
}

#[test]
fn seed_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("gen.json"), SMALL_GEN).unwrap();
    let run = |out: &str, extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_debias"));
        cmd.args(["gen", "--config", "gen.json", "--out", out]).args(extra).current_dir(dir).env_remove("DEBIAS_SEED");
        if let Some(v) = env {
            cmd.env("DEBIAS_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        provenance(&dir.join(out))["seed"].as_u64().unwrap()
    };
    assert_eq!(run("plain", &[], None), 0);
    assert_eq!(run("env", &[], Some("17")), 17);
    assert_eq!(run("flag", &["--seed", "5"], Some("17")), 5);
}

#[test]
fn audit_ranks_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut labels = String::from("id,ski,person,dog\n");
    let mut preds = String::from("id,person,dog,ski\n");
    for i in 0..40 {
        let (ski, person) = (i % 2 == 0, i % 4 < 2);
        labels.push_str(&format!("s{i},{},{},{}\n", u8::from(ski), u8::from(person), u8::from(i % 5 == 0)));
        preds.push_str(&format!("s{i},0.5,0.3,{}\n", if person { 0.8 } else { 0.2 }));
    }
    std::fs::write(dir.join("labels.csv"), labels).unwrap();
    std::fs::write(dir.join("preds.csv"), preds).unwrap();
    let out = ok(&["audit", "--labels", "labels.csv", "--preds", "preds.csv", "--k", "2"], dir);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let first = &doc["pairs"][0];
    assert_eq!((first["biased"].as_str(), first["context"].as_str()), (Some("ski"), Some("person")));
    assert!((first["bias"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(first["rank"], 1);

    ok(&["audit", "--labels", "labels.csv", "--preds", "preds.csv", "--out", "audit"], dir);
    assert!(dir.join("audit/bias_pairs.json").is_file());
    assert!(dir.join("audit/provenance.json").is_file());
}

#[test]
fn sweep_emits_trend_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("gen.json"), SMALL_GEN).unwrap();
    let mut args = vec!["sweep", "--config", "gen.json", "--fractions", "0.1,0.2", "--methods", "standard,feature-split"];
    args.extend(["--seeds", "3", "--out", "sweep"]);
    args.extend(SHORT);
    ok(&args, dir);
    let trend = std::fs::read_to_string(dir.join("sweep/trend.csv")).unwrap();
    let lines: Vec<&str> = trend.lines().collect();
    assert_eq!(lines[0], "fraction,method,seed,exclusive_map,cooccur_map,mean_cosine");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.1,standard,3,"));
    assert!(lines[4].starts_with("0.2,ours_feature_split,3,"));
    assert!(dir.join("sweep/provenance.json").is_file());
    let run = dir.join("sweep/fraction_0.2/seed_3/ours_feature_split");
    assert!(run.join("eval.json").is_file() && run.join("provenance.json").is_file());
    ok(&["report", run.to_str().unwrap()], dir);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&debias(&["--help"], dir)), 0);

    let out = debias(&["train", "--bogus"], dir);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&debias(&[], dir)), 1);
    assert_eq!(code(&debias(&["sweep", "--out", "s", "--methods", "magic"], dir)), 1);

    small_data(dir);
    let one_line = |out: &Output| {
        let err = String::from_utf8_lossy(&out.stderr).into_owned();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        code(out)
    };
    assert_eq!(one_line(&debias(&["train", "--data", "train", "--out", "m", "--set", "bogus=1"], dir)), 2);
    assert_eq!(one_line(&debias(&["train", "--data", "train", "--out", "m", "--set", "batch_size=0"], dir)), 2);
    assert_eq!(one_line(&debias(&["train", "--data", "nowhere", "--out", "m"], dir)), 2);
    assert_eq!(one_line(&debias(&["gen", "--out", "g", "--exclusive-fraction", "1.5"], dir)), 2);
    std::fs::create_dir(dir.join("bare")).unwrap();
    std::fs::write(dir.join("bare/eval.json"), "{}").unwrap();
    let out = debias(&["report", "bare"], dir);
    assert_eq!(one_line(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("provenance"));

    let mut cmd = Command::new(env!("CARGO_BIN_EXE_debias"));
    cmd.args(["gen", "--out", "g"]).current_dir(dir).env("DEBIAS_SEED", "x");
    assert_eq!(code(&cmd.output().unwrap()), 2);

    std::fs::write(dir.join("blocker"), "").unwrap();
    let out = debias(&["gen", "--config", "gen.json", "--out", "blocker/sub"], dir);
    assert_eq!(one_line(&out), 3);
}
