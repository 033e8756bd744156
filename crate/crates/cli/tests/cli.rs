use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tagsum::acceptance::toy::toy_corpus;
use tagsum::corpus::{generate_synthetic, write_jsonl, SyntheticConfig};

fn tagsum(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagsum"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = tagsum(args, cwd);
    assert!(
        out.status.success(),
        "tagsum {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn synthetic_files(dir: &Path) {
    let corpus = generate_synthetic(&SyntheticConfig {
        topics: 2,
        vocab_words: 30,
        n_docs: 60,
        doc_len: 24,
        sum_len: 4,
        seed: 3,
    })
    .unwrap();
    write_jsonl(dir.join("train.jsonl"), &corpus.pairs[..50]).unwrap();
    write_jsonl(dir.join("test.jsonl"), &corpus.pairs[50..]).unwrap();
}

const SMALL_RUN: &str = "\
# tiny TAG+Cov run
train = train.jsonl
mode = tag
coverage = true
k = 2
lda_alpha = 0.1
lda_iters = 30
embed_dim = 8
hidden_dim = 8
attn_dim = 8
switch_hidden = 8
epochs = 2
";

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_files(dir.path());
    let k0 = tagsum(
        &[
            "fit-lda",
            "--train",
            "train.jsonl",
            "--k",
            "0",
            "--out",
            "lda",
        ],
        dir.path(),
    );
    assert_eq!(k0.status.code(), Some(2));
    let missing = tagsum(
        &[
            "fit-lda",
            "--train",
            "nope.jsonl",
            "--k",
            "2",
            "--out",
            "lda",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    fs::write(
        dir.path().join("bad.cfg"),
        "train = train.jsonl\nepochs = many\n",
    )
    .unwrap();
    let bad = tagsum(
        &["train", "--config", "bad.cfg", "--out", "run"],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    let same = tagsum(
        &[
            "train",
            "--config",
            "bad.cfg",
            "--epochs",
            "1",
            "--val",
            "train.jsonl",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(
        same.status.code(),
        Some(2),
        "LDA must never see validation data"
    );
    assert!(!dir.path().join("run").exists());
}

#[test]
fn runtime_errors_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.jsonl"), "{not json}\n").unwrap();
    let out = tagsum(
        &[
            "fit-lda",
            "--train",
            "broken.jsonl",
            "--k",
            "2",
            "--out",
            "lda",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.jsonl:1"));
}

#[test]
fn fit_lda_separates_planted_topics_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_files(dir.path());
    let args = |out: &'static str| {
        [
            "fit-lda",
            "--train",
            "train.jsonl",
            "--k",
            "2",
            "--alpha",
            "0.1",
            "--seed",
            "5",
            "--out",
            out,
        ]
    };
    let stdout = ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    for f in [
        "topic_model.json",
        "topic_model.bin",
        "vocab.txt",
        "manifest.json",
    ] {
        assert_eq!(
            read(&dir.path().join("a"), f),
            read(&dir.path().join("b"), f),
            "{f}"
        );
    }
    let tops: Vec<Vec<&str>> = stdout
        .lines()
        .map(|l| l.split_once(": ").unwrap().1.split(' ').collect())
        .collect();
    assert_eq!(tops.len(), 2);
    assert!(tops.iter().all(|t| t.len() == 10));
    let shared = tops[0].iter().filter(|w| tops[1].contains(w)).count();
    assert!(shared <= 2, "top words overlap: {tops:?}");
}

#[test]
fn pipeline_commands_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic_files(d);
    fs::write(d.join("run.cfg"), SMALL_RUN).unwrap();
    for tag in ["a", "b"] {
        let run = format!("run_{tag}");
        ok(
            &["train", "--config", "run.cfg", "--seed", "9", "--out", &run],
            d,
        );
        let ckpt = format!("{run}/checkpoints/final.json");
        let sum = format!("sum_{tag}");
        ok(
            &[
                "summarize",
                "--ckpt",
                &ckpt,
                "--input",
                "test.jsonl",
                "--beam",
                "3",
                "--out",
                &sum,
            ],
            d,
        );
        let cands = format!("TAG={sum}/summaries.jsonl");
        let topics = format!("{run}/topic_model");
        ok(
            &[
                "evaluate",
                "--candidates",
                &cands,
                "--references",
                "test.jsonl",
                "--topic-model",
                &topics,
                "--out",
                &format!("eval_{tag}"),
            ],
            d,
        );
    }
    let pairs = [
        ("run", "loss.csv"),
        ("run", "vocab.txt"),
        ("run", "manifest.json"),
        ("run", "checkpoints/epoch_001.bin"),
        ("run", "checkpoints/final.json"),
        ("run", "checkpoints/final.bin"),
        ("run", "topic_model/topic_model.bin"),
        ("eval", "report.json"),
        ("eval", "per_pair.csv"),
    ];
    for (stem, file) in pairs {
        let (a, b) = (d.join(format!("{stem}_a")), d.join(format!("{stem}_b")));
        assert_eq!(read(&a, file), read(&b, file), "{stem}/{file}");
    }
    assert_eq!(
        read(&d.join("sum_a"), "summaries.jsonl"),
        read(&d.join("sum_b"), "summaries.jsonl")
    );
    let csv = String::from_utf8(read(&d.join("run_a"), "loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic_files(d);
    fs::write(d.join("run.cfg"), SMALL_RUN).unwrap();
    ok(
        &[
            "train", "--config", "run.cfg", "--epochs", "1", "--set", "mode=pg", "--out", "run",
        ],
        d,
    );
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&d.join("run"), "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["epochs"], 1);
    assert_eq!(manifest["config"]["mode"], "pg");
    assert_eq!(manifest["format_versions"]["checkpoint"], 1);
    assert!(d.join("run/checkpoints/epoch_001.json").exists());
    assert!(!d.join("run/checkpoints/epoch_002.json").exists());
    // PG runs fit no topic model
    assert!(!d.join("run/topic_model").exists());
}

#[test]
fn evaluating_references_against_themselves_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synthetic_files(d);
    let pairs = tagsum::corpus::load_jsonl(d.join("test.jsonl")).unwrap();
    let rows: Vec<_> = pairs
        .iter()
        .map(|p| tagsum::decoding::SummaryRow {
            id: p.id.clone(),
            summary: p.summary.join(" "),
            score: 0.0,
        })
        .collect();
    tagsum::decoding::write_summaries(d.join("oracle.jsonl"), &rows).unwrap();
    ok(
        &[
            "evaluate",
            "--candidates",
            "oracle.jsonl",
            "--references",
            "test.jsonl",
            "--out",
            "ev",
        ],
        d,
    );
    let report: serde_json::Value =
        serde_json::from_slice(&read(&d.join("ev"), "report.json")).unwrap();
    for metric in ["rouge1", "rouge2", "rougeL"] {
        assert_eq!(report["oracle"][metric], 1.0, "{metric}");
    }
    assert!(report["oracle"]["kl_median"].is_null());
    assert!(report.get("Lead-3").is_some(), "Lead-3 row missing");
    let csv = String::from_utf8(read(&d.join("ev"), "per_pair.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * pairs.len());
}

#[test]
fn training_on_the_toy_corpus_then_summarizing_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy = toy_corpus();
    write_jsonl(d.join("toy.jsonl"), &toy).unwrap();
    let cfg = "\
train = toy.jsonl
mode = tag
k = 2
lda_alpha = 0.1
embed_dim = 32
hidden_dim = 32
attn_dim = 32
switch_hidden = 32
learning_rate = 0.01
batch_size = 2
epochs = 120
";
    fs::write(d.join("toy.cfg"), cfg).unwrap();
    ok(&["train", "--config", "toy.cfg", "--out", "run"], d);
    ok(
        &[
            "summarize",
            "--ckpt",
            "run/checkpoints/final.json",
            "--input",
            "toy.jsonl",
            "--beam",
            "1",
            "--out",
            "sum",
        ],
        d,
    );
    let rows = tagsum::decoding::read_summaries(d.join("sum/summaries.jsonl")).unwrap();
    for (row, pair) in rows.iter().zip(&toy) {
        assert_eq!(row.summary, pair.summary.join(" "), "{}", pair.id);
    }
}

#[test]
fn acceptance_rejects_missing_out() {
    let out = tagsum(&["acceptance"], Path::new("."));
    assert_eq!(out.status.code(), Some(2));
}
