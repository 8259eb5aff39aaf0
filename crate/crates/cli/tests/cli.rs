use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

const TINY: &str = "\
embed_dim = 8
filter_widths = [2, 3]
feature_maps = 4
attention_dim = 4
max_epochs = 2
pretrain_epochs = 1
lambda_grid = []
folds = 2
";

fn clt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clt"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A workspace holding `tiny.toml` and a small synthetic corpus pair in `syn/`.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let o = clt(
        &["synth", "--out", "syn", "-s", "num_short=120", "-s", "num_long=120", "--seed", "5"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

fn transfer(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "transfer",
        "-c",
        "tiny.toml",
        "--source",
        "syn/long.tsv",
        "--target",
        "syn/short.tsv",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    clt(&args, dir)
}

fn token_counts(p: &Path) -> Vec<usize> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.split_once('\t').unwrap().1.split(' ').count())
        .collect()
}

#[test]
fn synth_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = clt(&["synth", "--out", out, "--seed", "11"], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("short: 2000 texts"));
    }
    for f in ["short.tsv", "long.tsv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let hashes = |d: &str| -> Vec<serde_json::Value> {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(d).join("manifest.json")).unwrap()).unwrap();
        m["outputs"].as_array().unwrap().iter().map(|o| o["blob_sha256"].clone()).collect()
    };
    assert_eq!(hashes("a"), hashes("b"));
    assert_eq!(token_counts(&dir.path().join("a/short.tsv")).len(), 2000);
}

#[test]
fn synth_single_segment_longs_look_like_shorts() {
    let dir = tempfile::tempdir().unwrap();
    let o = clt(&["synth", "--out", "s", "-s", "segments_per_long=[1, 1]"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let short = token_counts(&dir.path().join("s/short.tsv"));
    let long = token_counts(&dir.path().join("s/long.tsv"));
    let range = |v: &[usize]| (*v.iter().min().unwrap(), *v.iter().max().unwrap());
    assert_eq!(range(&short), range(&long));
    let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
    assert!((mean(&short) - mean(&long)).abs() < 0.3);
}

#[test]
fn synth_rejects_bad_ranges_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = clt(&["synth", "-s", "short_len=[9, 2]"], dir.path());
    assert_eq!(code(&o), 2);
    let o = clt(&["synth", "-s", "colour=1"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn gradcheck_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = clt(&["gradcheck"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!(stdout(&o).matches(" ok").count(), 6);
}

#[test]
fn gradcheck_tolerance_and_dropout() {
    let dir = tempfile::tempdir().unwrap();
    let o = clt(&["gradcheck", "--tolerance", "1e-12", "--probes", "40"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL"));
    assert!(stdout(&o).contains("relative error"));
    let o = clt(&["gradcheck", "--dropout", "0.5"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dropout"));
}

#[test]
fn transfer_writes_reports_and_manifest() {
    let ws = workspace();
    let o = transfer(ws.path(), "run", &["--model", "letranets"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = ws.path().join("run");
    for f in ["report.json", "report.txt", "epochs.jsonl", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["direction"], "long2short");
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["blob_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["embed_dim"], 8);
    let lines = fs::read_to_string(run.join("epochs.jsonl")).unwrap();
    assert!(lines.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(lines.contains("CNN/in-channel/short"));
}

#[test]
fn transfer_is_byte_reproducible() {
    let ws = workspace();
    for out in ["r1", "r2"] {
        let o = transfer(ws.path(), out, &["--model", "bagged", "--seed", "3"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["report.json", "epochs.jsonl"] {
        let a = fs::read(ws.path().join("r1").join(f)).unwrap();
        let b = fs::read(ws.path().join("r2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn ablation_writes_one_report_per_row() {
    let ws = workspace();
    let o = transfer(ws.path(), "abl", &["--ablate", "jt,pr,sp"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for v in ["jt", "pr", "sp", "all"] {
        assert!(ws.path().join(format!("abl/report-{v}.json")).is_file(), "{v}");
    }
    let text = fs::read_to_string(ws.path().join("abl/report.txt")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("Mechanism"))
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(rows, vec!["JT", "PR", "SP", "All"]);

    let o = clt(&["report", "abl"], ws.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("LeTraNets (JT)"));
    assert!(stdout(&o).contains("Mechanism"));
}

#[test]
fn ablation_needs_letranets() {
    let ws = workspace();
    let o = transfer(ws.path(), "x", &["--model", "cnn", "--ablate", "jt"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_names_the_path() {
    let ws = workspace();
    let o = clt(
        &["transfer", "--source", "absent_long.tsv", "--target", "syn/short.tsv"],
        ws.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent_long.tsv"));
    let o = clt(&["transfer", "--target", "syn/short.tsv"], ws.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("source"));
}

#[test]
fn unknown_keys_fail_before_any_work() {
    let ws = workspace();
    let o = transfer(ws.path(), "u", &["-s", "lamda=0.1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lamda"));
    assert!(!ws.path().join("u").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_clt"))
        .args(["transfer", "-c", "tiny.toml"])
        .current_dir(ws.path())
        .env("CLT_BOGUS_KEY", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus_key"));
}

#[test]
fn flags_override_environment_override_file() {
    let ws = workspace();
    let run = |out: &str, env_seed: Option<&str>, flag_seed: Option<&str>| -> u64 {
        let mut args = vec![
            "transfer", "-c", "tiny.toml", "--model", "cnn", "--source", "syn/long.tsv", "--target",
            "syn/short.tsv", "--out", out,
        ];
        if let Some(s) = flag_seed {
            args.extend(["--seed", s]);
        }
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_clt"));
        cmd.args(&args).current_dir(ws.path());
        if let Some(s) = env_seed {
            cmd.env("CLT_SEED", s);
        }
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let r: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(ws.path().join(out).join("report.json")).unwrap()).unwrap();
        r["seed"].as_u64().unwrap()
    };
    fs::write(ws.path().join("tiny.toml"), format!("{TINY}seed = 1\n")).unwrap();
    assert_eq!(run("f", None, None), 1);
    assert_eq!(run("e", Some("2"), None), 2);
    assert_eq!(run("g", Some("2"), Some("3")), 3);
}

#[test]
fn divergence_exits_with_three() {
    let ws = workspace();
    let mut vocab = std::collections::BTreeSet::new();
    for f in ["syn/long.tsv", "syn/short.tsv"] {
        for l in fs::read_to_string(ws.path().join(f)).unwrap().lines() {
            vocab.extend(l.split_once('\t').unwrap().1.split(' ').map(str::to_owned));
        }
    }
    let row = ["1e308"; 8].join(" ");
    let vectors: String = vocab.iter().map(|t| format!("{t} {row}\n")).collect();
    fs::write(ws.path().join("huge.vec"), vectors).unwrap();
    let o = transfer(ws.path(), "d", &["--embeddings", "huge.vec"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn train_then_eval() {
    let ws = workspace();
    let o = clt(
        &[
            "train", "-c", "tiny.toml", "--model", "letranets", "--direction", "short2long", "--source",
            "syn/short.tsv", "--out", "m",
        ],
        ws.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ckpt: PathBuf = ws.path().join("m/model.ckpt");
    assert!(ckpt.is_file() && ws.path().join("m/vocab.txt").is_file());
    let o = clt(
        &[
            "eval", "--direction", "short2long", "--checkpoint", "m/model.ckpt", "--target", "syn/long.tsv",
            "--out", "ev",
        ],
        ws.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("ev/eval.json")).unwrap()).unwrap();
    assert_eq!(r["num_texts"], 120);
    let acc = r["accuracy"].as_f64().unwrap();
    assert!((acc + r["error"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let counts: u64 = r["per_length"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["count"].as_u64().unwrap())
        .sum();
    assert_eq!(counts, 120);
}

#[test]
fn report_rejects_non_reports() {
    let ws = workspace();
    let o = clt(&["report", "syn/manifest.json"], ws.path());
    assert_eq!(code(&o), 2);
    let o = clt(&["report", "syn"], ws.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no transfer reports"));
}
