mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use tagsum::acceptance::criteria::run_all;
use tagsum::corpus::{load_jsonl, tokenize, DocumentPair, Vocabulary};
use tagsum::decoding::{read_summaries, summarize, write_summaries, DecodeConfig, SummaryRow};
use tagsum::metrics::{evaluate_systems, lead3, TopicInputs};
use tagsum::model::{Mode, ModelConfig, ModelParams, CHECKPOINT_FORMAT_VERSION};
use tagsum::topic_model::{
    default_alpha, fit_lda, lda_document, LdaConfig, TopicModel, DEFAULT_ETA, DEFAULT_TRAIN_SWEEPS,
    TOPIC_MODEL_FORMAT_VERSION,
};
use tagsum::training::{history_csv, prepare_examples, train};

use config::{parse_pairs, read_pairs, RunConfig};

const SUMMARIES_FORMAT_VERSION: u32 = 1;
const REPORT_FORMAT_VERSION: u32 = 1;
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Parser)]
#[command(
    name = "tagsum",
    version,
    about = "Topic-augmented pointer-generator summarization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit LDA on the articles of a training JSONL file.
    FitLda(FitLdaArgs),
    /// Train a PG or TAG model from a key-value config file.
    Train(TrainArgs),
    /// Decode summaries for every article of a JSONL file.
    Summarize(SummarizeArgs),
    /// Score candidate summaries with ROUGE and topic coherence.
    Evaluate(EvaluateArgs),
    /// Run the acceptance criteria and write a pass/fail report.
    Acceptance(AcceptanceArgs),
}

#[derive(Args)]
struct FitLdaArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Document-topic prior; defaults to 50/K.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_SWEEPS)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    val: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    coverage: Option<bool>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Any config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Checkpoint manifest written by `train` (`<run>/checkpoints/*.json`).
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = tagsum::decoding::DEFAULT_BEAM_SIZE)]
    beam: usize,
    #[arg(long, default_value_t = tagsum::decoding::DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = tagsum::decoding::DEFAULT_MIN_LEN)]
    min_len: usize,
    #[arg(long)]
    no_length_norm: bool,
    #[arg(long)]
    disable_topic_channel: bool,
    #[arg(long, default_value_t = 100)]
    max_src_len: usize,
    /// Defaults to `vocab.txt` in the run directory.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Defaults to `topic_model/` in the run directory.
    #[arg(long)]
    topic_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Summaries JSONL, as `NAME=PATH` or `PATH` (named after the file stem).
    #[arg(long, required = true)]
    candidates: Vec<String>,
    /// Document pairs whose summaries are the references.
    #[arg(long)]
    references: PathBuf,
    /// Topic model directory; enables the coherence columns.
    #[arg(long)]
    topic_model: Option<PathBuf>,
    /// Document pairs whose articles feed Lead-3 and coherence; defaults to
    /// the references file.
    #[arg(long)]
    documents: Option<PathBuf>,
    /// Defaults to `vocab.txt` inside the topic model directory.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    no_lead3: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AcceptanceArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    /// Bad arguments or config; exit code 2.
    Usage(String),
    /// Anything that went wrong while running; exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<tagsum::Error> for Failure {
    fn from(e: tagsum::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FitLda(a) => fit_lda_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Acceptance(a) => acceptance_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{}: no such file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{}: no such directory",
            path.display()
        )))
    }
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `manifest.json` under `out`: command, config, seed and format versions.
fn write_manifest(out: &Path, command: &str, config: Value, seed: u64) -> anyhow::Result<()> {
    let formats: BTreeMap<&str, u32> = [
        ("checkpoint", CHECKPOINT_FORMAT_VERSION),
        ("topic_model", TOPIC_MODEL_FORMAT_VERSION),
        ("summaries", SUMMARIES_FORMAT_VERSION),
        ("report", REPORT_FORMAT_VERSION),
    ]
    .into();
    let manifest = json!({
        "tool": "tagsum",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
        "format_versions": formats,
    });
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn fit_topics(
    train: &[DocumentPair],
    vocab: &Vocabulary,
    cfg: &LdaConfig,
) -> anyhow::Result<TopicModel> {
    let docs: Vec<Vec<usize>> = train
        .iter()
        .map(|p| lda_document(vocab, &p.article))
        .collect();
    Ok(fit_lda(
        &docs,
        vocab.len() - tagsum::corpus::NUM_SPECIALS,
        cfg,
    )?)
}

fn save_topics(dir: &Path, model: &TopicModel, vocab: &Vocabulary) -> anyhow::Result<()> {
    model.save(dir)?;
    vocab.write(dir.join(VOCAB_FILE))?;
    Ok(())
}

fn fit_lda_cmd(a: FitLdaArgs) -> CmdResult {
    require_file(&a.train)?;
    let k = a.k as usize;
    let alpha = a.alpha.unwrap_or_else(|| default_alpha(k));
    if !(alpha > 0.0 && a.eta > 0.0) {
        return Err(Failure::Usage("--alpha and --eta must be positive".into()));
    }
    let train = load_jsonl(&a.train)?;
    let vocab = Vocabulary::build(&train, a.vocab_size, a.min_freq)?;
    let lda = LdaConfig {
        topics: k,
        alpha,
        eta: a.eta,
        sweeps: a.iters,
        seed: a.seed,
    };
    let model = fit_topics(&train, &vocab, &lda)?;
    create_out(&a.out)?;
    save_topics(&a.out, &model, &vocab)?;
    let config = json!({
        "train": a.train, "k": k, "alpha": alpha, "eta": a.eta, "iters": a.iters,
        "vocab_size": a.vocab_size, "min_freq": a.min_freq,
    });
    write_manifest(&a.out, "fit-lda", config, a.seed)?;
    for t in 0..k {
        println!("topic {t}: {}", model.top_words(&vocab, t, 10)?.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let mut pairs = match &a.config {
        Some(p) => {
            require_file(p)?;
            read_pairs(p).map_err(Failure::Usage)?
        }
        None => BTreeMap::new(),
    };
    let flags = [
        ("train", &a.train),
        ("val", &a.val),
        ("mode", &a.mode),
        ("k", &a.k),
        ("epochs", &a.epochs),
        ("seed", &a.seed),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            pairs.insert(key.to_string(), v.clone());
        }
    }
    if let Some(c) = a.coverage {
        pairs.insert("coverage".into(), c.to_string());
    }
    for s in &a.set {
        pairs.extend(parse_pairs(s, "--set").map_err(Failure::Usage)?);
    }
    let cfg = RunConfig::from_pairs(&pairs).map_err(Failure::Usage)?;
    require_file(&cfg.train)?;
    if let Some(v) = &cfg.val {
        require_file(v)?;
    }
    if let Some(t) = &cfg.topic_model {
        require_dir(t)?;
        require_file(&t.join(VOCAB_FILE))?;
    }

    let tc = cfg.train_config.to_train_config();
    let train_pairs = load_jsonl(&cfg.train)?;
    let val_pairs = match &cfg.val {
        Some(v) => load_jsonl(v)?,
        None => Vec::new(),
    };
    // LDA only ever sees the training file's articles.
    let (vocab, topics) = match &cfg.topic_model {
        Some(dir) => {
            let vocab = Vocabulary::read(dir.join(VOCAB_FILE))?;
            let tm = TopicModel::load(dir)?;
            tm.check_vocab(&vocab)?;
            (vocab, Some(tm))
        }
        None => {
            let vocab = Vocabulary::build(&train_pairs, cfg.vocab_size, cfg.min_freq)?;
            let tm = if tc.mode == Mode::Tag {
                let lda = LdaConfig {
                    topics: cfg.k,
                    alpha: cfg.lda_alpha,
                    eta: cfg.lda_eta,
                    sweeps: cfg.lda_iters,
                    seed: tc.seed,
                };
                Some(fit_topics(&train_pairs, &vocab, &lda)?)
            } else {
                None
            };
            (vocab, tm)
        }
    };
    let tm = topics.as_ref().filter(|_| tc.mode == Mode::Tag);
    let model_cfg = ModelConfig {
        embed_dim: cfg.embed_dim,
        hidden_dim: cfg.hidden_dim,
        attn_dim: cfg.attn_dim,
        switch_hidden: cfg.switch_hidden,
        ..ModelConfig::new(
            vocab.len(),
            tm.map_or(cfg.k, TopicModel::topics),
            tc.mode,
            tc.use_coverage,
        )
    };
    model_cfg
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let params = ModelParams::init(model_cfg, tc.seed, tm)?;
    let examples = prepare_examples(
        &train_pairs,
        &vocab,
        tm,
        tc.max_src_len,
        tc.max_tgt_len,
        tc.seed,
    )?;
    let val_examples = prepare_examples(
        &val_pairs,
        &vocab,
        tm,
        tc.max_src_len,
        tc.max_tgt_len,
        tc.seed,
    )?;

    create_out(&a.out)?;
    vocab.write(a.out.join(VOCAB_FILE))?;
    if let Some(tm) = &topics {
        save_topics(&a.out.join("topic_model"), tm, &vocab)?;
    }
    let ckpt_dir = a.out.join("checkpoints");
    let mut best = f64::INFINITY;
    let outcome = train(
        params,
        &examples,
        &val_examples,
        &tc,
        |epoch, p, history| {
            p.save(&ckpt_dir, &format!("epoch_{epoch:03}"))?;
            if let Some(v) = history.last().filter(|h| h.split == "val") {
                if v.mean_nll < best {
                    best = v.mean_nll;
                    p.save(&ckpt_dir, "best")?;
                }
            }
            let last: Vec<String> = history
                .iter()
                .filter(|h| h.epoch == epoch)
                .map(|h| format!("{} {:.4}", h.split, h.mean_nll))
                .collect();
            println!("epoch {epoch}: {}", last.join(", "));
            Ok(ControlFlow::Continue(()))
        },
    )?;
    outcome.params.save(&ckpt_dir, "final")?;
    let csv = a.out.join("loss.csv");
    fs::write(&csv, history_csv(&outcome.history))
        .with_context(|| format!("writing {}", csv.display()))?;
    let seed = tc.seed;
    write_manifest(
        &a.out,
        "train",
        serde_json::to_value(&cfg).map_err(anyhow::Error::from)?,
        seed,
    )?;
    Ok(ExitCode::SUCCESS)
}

/// `<run>/checkpoints/x.json` → `<run>`.
fn run_dir(ckpt: &Path) -> PathBuf {
    ckpt.parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn summarize_cmd(a: SummarizeArgs) -> CmdResult {
    require_file(&a.ckpt)?;
    require_file(&a.input)?;
    let run = run_dir(&a.ckpt);
    let vocab_path = a.vocab.clone().unwrap_or_else(|| run.join(VOCAB_FILE));
    require_file(&vocab_path)?;
    let cfg = DecodeConfig {
        beam_size: a.beam,
        max_len: a.max_len,
        min_len: a.min_len,
        length_norm: !a.no_length_norm,
        disable_topic_channel: a.disable_topic_channel,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let params = ModelParams::load(&a.ckpt)?;
    let vocab = Vocabulary::read(&vocab_path)?;
    let topics = if params.config().mode == Mode::Tag {
        let dir = a
            .topic_model
            .clone()
            .unwrap_or_else(|| run.join("topic_model"));
        require_dir(&dir)?;
        let tm = TopicModel::load(&dir)?;
        tm.check_vocab(&vocab)?;
        Some(tm)
    } else {
        None
    };
    let docs = load_jsonl(&a.input)?;
    let rows: Vec<SummaryRow> = summarize(
        &params,
        &vocab,
        topics.as_ref(),
        &docs,
        a.max_src_len,
        &cfg,
        a.seed,
    )?
    .into_iter()
    .map(|(row, _)| row)
    .collect();
    create_out(&a.out)?;
    write_summaries(a.out.join("summaries.jsonl"), &rows)?;
    let config = json!({
        "ckpt": a.ckpt, "input": a.input, "vocab": vocab_path, "beam": a.beam,
        "max_len": a.max_len, "min_len": a.min_len, "length_norm": cfg.length_norm,
        "disable_topic_channel": a.disable_topic_channel, "max_src_len": a.max_src_len,
        "mode": params.config().mode,
    });
    write_manifest(&a.out, "summarize", config, a.seed)?;
    Ok(ExitCode::SUCCESS)
}

fn candidate_spec(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, path)
        }
    }
}

fn evaluate_cmd(a: EvaluateArgs) -> CmdResult {
    let specs: Vec<(String, PathBuf)> = a.candidates.iter().map(|s| candidate_spec(s)).collect();
    for (_, p) in &specs {
        require_file(p)?;
    }
    require_file(&a.references)?;
    let doc_path = a.documents.clone().unwrap_or_else(|| a.references.clone());
    require_file(&doc_path)?;
    let vocab_path = match (&a.vocab, &a.topic_model) {
        (Some(v), _) => Some(v.clone()),
        (None, Some(t)) => Some(t.join(VOCAB_FILE)),
        (None, None) => None,
    };
    if let Some(t) = &a.topic_model {
        require_dir(t)?;
    }
    if let Some(v) = &vocab_path {
        require_file(v)?;
    }
    let mut names: Vec<&str> = specs.iter().map(|(n, _)| n.as_str()).collect();
    if !a.no_lead3 {
        names.push(LEAD3);
    }
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Failure::Usage("system names must be distinct".into()));
    }

    let refs = load_jsonl(&a.references)?;
    let ids: Vec<String> = refs.iter().map(|p| p.id.clone()).collect();
    let references: Vec<Vec<String>> = refs.iter().map(|p| p.summary.clone()).collect();
    let docs_by_id: HashMap<String, DocumentPair> = load_jsonl(&doc_path)?
        .into_iter()
        .map(|p| (p.id.clone(), p))
        .collect();
    let documents: Vec<Vec<String>> = ids
        .iter()
        .map(|id| {
            docs_by_id
                .get(id)
                .map(|p| p.article.clone())
                .ok_or_else(|| anyhow!("{}: no document with id `{id}`", doc_path.display()))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut systems = Vec::new();
    for (name, path) in &specs {
        let rows: HashMap<String, SummaryRow> = read_summaries(path)?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect();
        let outputs = ids
            .iter()
            .map(|id| match rows.get(id) {
                Some(r) => Ok(tokenize(&r.summary)),
                None => bail!("{}: no summary for id `{id}`", path.display()),
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        systems.push((name.clone(), outputs));
    }
    if !a.no_lead3 {
        systems.push((
            LEAD3.to_string(),
            documents.iter().map(|d| lead3(d)).collect(),
        ));
    }

    let loaded = match (&a.topic_model, &vocab_path) {
        (Some(dir), Some(v)) => {
            let vocab = Vocabulary::read(v)?;
            let tm = TopicModel::load(dir)?;
            tm.check_vocab(&vocab)?;
            Some((tm, vocab))
        }
        _ => None,
    };
    let topics = loaded.as_ref().map(|(model, vocab)| TopicInputs {
        model,
        vocab,
        documents: &documents,
        seed: a.seed,
    });
    let report = evaluate_systems(&ids, &references, &systems, topics)?;
    create_out(&a.out)?;
    report.write(&a.out)?;
    let config = json!({
        "candidates": specs.iter().map(|(n, p)| json!({"name": n, "path": p})).collect::<Vec<_>>(),
        "references": a.references, "documents": doc_path, "topic_model": a.topic_model,
        "vocab": vocab_path, "lead3": !a.no_lead3,
    });
    write_manifest(&a.out, "evaluate", config, a.seed)?;
    print!("{}", report.summary_json());
    println!();
    Ok(ExitCode::SUCCESS)
}

const LEAD3: &str = "Lead-3";

fn acceptance_cmd(a: AcceptanceArgs) -> CmdResult {
    create_out(&a.out)?;
    let report = run_all(a.seed, &a.out.join("work"));
    let text = report.text();
    fs::write(a.out.join("acceptance.txt"), &text).context("writing acceptance.txt")?;
    fs::write(a.out.join("acceptance.json"), report.json()).context("writing acceptance.json")?;
    write_manifest(&a.out, "acceptance", json!({}), a.seed)?;
    print!("{text}");
    Ok(if report.passed() == report.criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
