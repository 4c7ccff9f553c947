use serde_json::Value;
use sgrpo::synth::{render_structured_completion, RenderStyle};
use sgrpo::SubScoreVector;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sgrpo(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgrpo"))
        .args(args)
        .env("SGRPO_RUN_ROOT", root)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Asserts a single-line error with the given exit code and returns it.
fn failed(out: &Output, code: i32) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(out.status.code(), Some(code), "stderr: {err}");
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error kind="), "stderr: {err}");
    assert!(err.contains(&format!("code={code}:")), "stderr: {err}");
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let n = n.to_string();
    let seed = seed.to_string();
    ok(&sgrpo(&["gen-data", "--n", &n, "--seed", &seed, "--out", p(&out)], dir));
    out
}

fn sha256_file(path: &Path) -> String {
    sgrpo::train::sha256_hex(&std::fs::read(path).unwrap())
}

#[test]
fn gen_data_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&sgrpo(
            &["gen-data", "--n", "1000", "--tiers", "0.33,0.33,0.34", "--seed", "7", "--out", p(&out)],
            dir.path(),
        ));
        out
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1000);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["corpus_checksum"], sha256_file(&a));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["n"], 1000);
    assert_eq!(manifest["code_version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["finished_at_unix"].as_u64().unwrap() >= manifest["started_at_unix"].as_u64().unwrap());

    let tiers: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["tier"].as_str().unwrap().to_string())
        .collect();
    for (tier, want) in [("high", 330), ("medium", 330), ("low", 340)] {
        let got = tiers.iter().filter(|t| *t == tier).count() as i64;
        assert!((got - want).abs() <= 1, "{tier}: {got}");
    }
}

#[test]
fn gen_data_defaults_to_the_run_root() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sgrpo(&["gen-data", "--n", "5"], dir.path()));
    assert!(dir.path().join("corpus.jsonl").exists());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let e = failed(&sgrpo(&["gen-data", "--tiers", "0.5,0.5,0.5"], dir.path()), 2);
    assert!(e.contains("kind=validation") && e.contains("tier"));
    failed(&sgrpo(&["gen-data", "--noise", "abc"], dir.path()), 2);
    failed(&sgrpo(&["frobnicate"], dir.path()), 2);
    failed(&sgrpo(&["train"], dir.path()), 2);
}

#[test]
fn train_writes_artifacts_and_lists_every_config_problem() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 40, 1);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nsteps = 70\ngroup_size = 4\nsdw_interval = 32\n").unwrap();
    let out = dir.path().join("run");
    ok(&sgrpo(&["train", "--corpus", p(&corpus), "--config", p(&cfg), "--out-dir", p(&out)], dir.path()));

    let log = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.iter().filter(|r| r["kind"] == "step").count(), 70);
    assert_eq!(records.iter().filter(|r| r["kind"] == "weights").count(), 2);
    let ck: Value = serde_json::from_str(&std::fs::read_to_string(out.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ck["step"], 70);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["group_size"], 4);
    assert_eq!(manifest["config"]["kl_coeff"], 0.04);
    assert_eq!(manifest["corpus_checksum"], sha256_file(&corpus));
    assert!(std::fs::read_to_string(out.join("resolved.cfg")).unwrap().contains("learning_rate = 0.01"));

    std::fs::write(&cfg, "learning_rate = -0.5\nbogus = 1\ngroup_size = x\nsigma = -1\n").unwrap();
    let e = failed(&sgrpo(&["train", "--corpus", p(&corpus), "--config", p(&cfg)], dir.path()), 2);
    for needle in ["bogus", "group_size", "sigma", "learning_rate"] {
        assert!(e.contains(needle), "{needle} missing from {e}");
    }
}

#[test]
fn ablation_flags_reach_the_trainer() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 30, 2);
    let out = dir.path().join("plain");
    ok(&sgrpo(
        &["train", "--corpus", p(&corpus), "--out-dir", p(&out), "--steps", "80", "--no-sdw", "--no-mgas"],
        dir.path(),
    ));
    let log = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    for line in log.lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["kind"], "step");
        assert!(r["weights"].as_array().unwrap().iter().all(|w| w == 1.0));
        assert_eq!(r["s_max"], 1.0);
    }
}

#[test]
fn resumed_run_reproduces_the_uninterrupted_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 30, 3);
    let full = dir.path().join("full");
    let part = dir.path().join("part");
    let cfg = dir.path().join("r.cfg");
    std::fs::write(&cfg, "sdw_interval = 16\n").unwrap();
    let train = |out: &Path, steps: &str, extra: &[&str]| {
        let mut args = vec!["train", "--corpus", p(&corpus), "--config", p(&cfg), "--out-dir", p(out), "--steps", steps];
        args.extend_from_slice(extra);
        ok(&sgrpo(&args, dir.path()));
    };
    train(&full, "120", &[]);
    train(&part, "120", &["--checkpoint-every", "50"]);
    // Simulate a crash after step 100: keep the step-100 checkpoint and a log
    // that ran ahead of it.
    train(&part, "100", &[]);
    let saved = dir.path().join("ck100.json");
    std::fs::copy(part.join("checkpoint.json"), &saved).unwrap();
    let mut log = std::fs::read_to_string(full.join("metrics.jsonl")).unwrap();
    log.truncate(log.len() - 1);
    std::fs::write(part.join("metrics.jsonl"), log).unwrap();
    train(&part, "120", &["--resume", p(&saved)]);
    assert_eq!(
        std::fs::read(full.join("metrics.jsonl")).unwrap(),
        std::fs::read(part.join("metrics.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(full.join("checkpoint.json")).unwrap(),
        std::fs::read(part.join("checkpoint.json")).unwrap()
    );
}

fn write_lines(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|l| l.to_string() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn score_rewards_each_completion_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let v = SubScoreVector([1, 0, 2, 0, 0, 3]);
    let completions = [
        ("c", render_structured_completion(&v, RenderStyle::Full)),
        ("a", render_structured_completion(&v, RenderStyle::Malformed)),
        ("b", render_structured_completion(&v, RenderStyle::TagsOnly)),
    ];
    let comp = dir.path().join("comp.jsonl");
    write_lines(&comp, &completions.iter().map(|(id, t)| serde_json::json!({"id": id, "text": t})).collect::<Vec<_>>());
    let truth = dir.path().join("truth.jsonl");
    write_lines(
        &truth,
        &["a", "b", "c"].iter().map(|id| serde_json::json!({"id": id, "counts": v.0})).collect::<Vec<_>>(),
    );
    let stdout = ok(&sgrpo(&["score", "--completions", p(&comp), "--truth", p(&truth)], dir.path()));
    let recs: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 3);
    assert_eq!(recs.iter().map(|r| r["id"].as_str().unwrap()).collect::<Vec<_>>(), ["c", "a", "b"]);
    assert_eq!(recs[0]["reward"]["r_final"], 4.0);
    assert_eq!(recs[0]["counts"], serde_json::json!(v.0));
    assert_eq!(recs[1]["reward"]["r_format"], 0.0);
    assert_eq!(recs[1]["parsed"]["format_valid"], false);
    assert_eq!(recs[2]["reward"]["r_reasoning"], 0.0);
    assert_eq!(recs[2]["reward"]["r_format"], 1.0);

    let weighted = ok(&sgrpo(
        &["score", "--completions", p(&comp), "--truth", p(&truth), "--weights", "1.5,1,1,1,1,1.5"],
        dir.path(),
    ));
    let first: Value = serde_json::from_str(weighted.lines().next().unwrap()).unwrap();
    assert!((first["reward"]["r_sub_dyn"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-12);

    write_lines(&truth, &[serde_json::json!({"id": "a", "counts": v.0}), serde_json::json!({"id": "z", "counts": v.0})]);
    let e = failed(&sgrpo(&["score", "--completions", p(&comp), "--truth", p(&truth)], dir.path()), 4);
    assert!(e.contains("b, c") || (e.contains('b') && e.contains('c')));
    assert!(e.contains('z'));

    std::fs::write(&truth, "{\"id\": \"a\", \"counts\": [1, 2]}\n").unwrap();
    let e = failed(&sgrpo(&["score", "--completions", p(&comp), "--truth", p(&truth)], dir.path()), 4);
    assert!(e.contains("line 1"), "{e}");
    failed(&sgrpo(&["score", "--completions", p(&comp), "--truth", p(&truth), "--sigma", "0"], dir.path()), 2);
}

#[test]
fn eval_corr_from_label_files() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<Value> = (0..12u32)
        .map(|i| serde_json::json!({"id": format!("x{i}"), "counts": [i % 5, (i * 3) % 5, i % 2, (i + 1) % 3, i % 4, (i * 7) % 5]}))
        .collect();
    let preds = dir.path().join("preds.jsonl");
    let annots = dir.path().join("annots.jsonl");
    let mut shuffled = labels.clone();
    shuffled.reverse();
    write_lines(&preds, &labels);
    write_lines(&annots, &shuffled);
    let json = dir.path().join("report.json");
    let table = dir.path().join("report.txt");
    let stdout = ok(&sgrpo(
        &["eval-corr", "--preds", p(&preds), "--annots", p(&annots), "--out-json", p(&json), "--out-table", p(&table)],
        dir.path(),
    ));
    assert_eq!(stdout, std::fs::read_to_string(&table).unwrap());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for row in rep["rows"].as_array().unwrap() {
        assert_eq!(row["kendall_tau"], 1.0);
        assert_eq!(row["spearman_rho"], 1.0);
    }

    write_lines(&preds, &labels[..1]);
    write_lines(&annots, &labels[..1]);
    let e = failed(&sgrpo(&["eval-corr", "--preds", p(&preds), "--annots", p(&annots)], dir.path()), 4);
    assert!(e.contains("undefined"), "{e}");
}

#[test]
fn eval_corr_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "train.jsonl", 60, 4);
    let out = dir.path().join("run");
    ok(&sgrpo(&["train", "--corpus", p(&corpus), "--out-dir", p(&out), "--steps", "400"], dir.path()));
    let held = dir.path().join("held.jsonl");
    ok(&sgrpo(&["gen-data", "--n", "90", "--seed", "99", "--noise", "0,0.3,1.0", "--out", p(&held)], dir.path()));
    let json = dir.path().join("rep.json");
    ok(&sgrpo(
        &[
            "eval-corr",
            "--checkpoint",
            p(&out.join("checkpoint.json")),
            "--corpus",
            p(&held),
            "--max-noise",
            "0",
            "--out-json",
            p(&json),
        ],
        dir.path(),
    ));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let total = rep["rows"].as_array().unwrap().last().unwrap();
    assert_eq!(total["label"], "total");
    assert_eq!(total["n"], 30);
    assert!(total["kendall_tau"].as_f64().unwrap() > 0.0);
    assert_eq!(rep["corpus_id"], sha256_file(&held));

    let other = gen(dir.path(), "other.jsonl", 10, 5);
    let scalar = dir.path().join("scalar.jsonl");
    ok(&sgrpo(&["gen-data", "--n", "10", "--encoding", "scalar", "--out", p(&scalar)], dir.path()));
    failed(
        &sgrpo(&["eval-corr", "--checkpoint", p(&out.join("checkpoint.json")), "--corpus", p(&scalar)], dir.path()),
        2,
    );
    // Resuming against a different corpus is refused.
    let e = failed(
        &sgrpo(
            &["train", "--corpus", p(&other), "--out-dir", p(&dir.path().join("x")), "--resume", p(&out.join("checkpoint.json"))],
            dir.path(),
        ),
        2,
    );
    assert!(e.contains("checksum"));
}
