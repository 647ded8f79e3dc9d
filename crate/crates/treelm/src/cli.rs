//! Command-line interface: preprocess, transform, mask-dump, train,
//! eval-ppl, rerank, sg-eval, sample, compare, grad-check.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Every subcommand is deterministic under a fixed `--seed`.

use std::ffi::OsString;
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsuite::{
    compare_logprobs, corpus_ppl, doc_marginal, load_proposals, load_sg_suites, match_counts,
    rerank, sg_score, JointScorer, ProposalSet,
};
use crate::maskgen::{
    encode_document, encode_tree, stack_compose_mask, causal_mask, AttentionKind, InputView,
    MaskBundle, MaskMode, PositionScheme, StepKind, StepSeq,
};
use crate::model::{
    grad_check, load_checkpoint, sample_tree, save_checkpoint, train, Model, ModelConfig,
    TrainConfig, TreeScorer,
};
use crate::segmenter::{DEFAULT_MEMORY_LEN, DEFAULT_SEGMENT_LEN};
use crate::synth;
use crate::treebank::{
    build_vocab, linearize, parse_bracketed, read_documents, read_trees, reverse_structure,
    to_left_branching, to_right_branching, write_trees, ActionKind, Tree, Vocabulary,
};

#[derive(Parser)]
#[command(name = "treelm", version, about = "Syntactic language modeling over linearized trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker-thread cap (TG_THREADS is the fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a tree file into a binary token-id corpus plus vocabulary.
    Preprocess(PreprocessArgs),
    /// Apply a structural transform to every tree in a file.
    Transform(TransformArgs),
    /// Print the attention mask, depths, and relative positions of a tree.
    MaskDump(MaskDumpArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Word perplexity via marginalization over proposal trees.
    EvalPpl(EvalPplArgs),
    /// Select the highest-scoring proposal per sentence; score against gold.
    Rerank(RerankArgs),
    /// Run inequality-based test suites.
    SgEval(SgEvalArgs),
    /// Sample trees from a trained model.
    Sample(SampleArgs),
    /// Per-token log-probability differences between two models.
    Compare(CompareArgs),
    /// Finite-difference check of the analytic gradients.
    GradCheck(GradCheckArgs),
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("TG_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }

    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => 3,
                _ => 2,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Transform(a) => cmd_transform(a),
        Command::MaskDump(a) => cmd_mask_dump(a),
        Command::Train(a) => cmd_train(a, seed),
        Command::EvalPpl(a) => cmd_eval_ppl(a),
        Command::Rerank(a) => cmd_rerank(a),
        Command::SgEval(a) => cmd_sg_eval(a),
        Command::Sample(a) => cmd_sample(a, seed),
        Command::Compare(a) => cmd_compare(a),
        Command::GradCheck(a) => cmd_grad_check(a, seed),
    }
}

// ---------------------------------------------------------------------------
// preprocess

#[derive(Args)]
struct PreprocessArgs {
    /// Input tree file (one bracketed tree per line; blank lines separate
    /// documents when --docs is set).
    #[arg(long)]
    trees: PathBuf,
    /// Reuse an existing vocabulary instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long)]
    corpus_out: PathBuf,
    /// Terminals seen fewer times map to the unknown id.
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long, value_enum, default_value_t = InputView::DuplicatedTrees)]
    view: InputView,
    /// Treat blank-line-separated blocks as documents, concatenating their
    /// sentences into one sequence.
    #[arg(long)]
    docs: bool,
}

const CORPUS_MAGIC: &[u8; 4] = b"TLMD";

fn kind_code(kind: StepKind) -> u8 {
    match kind {
        StepKind::Open => 0,
        StepKind::Terminal => 1,
        StepKind::Close => 2,
        StepKind::CloseCompose => 3,
        StepKind::CloseStack => 4,
        StepKind::Bos => 5,
        StepKind::Pad => 6,
    }
}

fn kind_from_code(code: u8) -> Result<StepKind> {
    Ok(match code {
        0 => StepKind::Open,
        1 => StepKind::Terminal,
        2 => StepKind::Close,
        3 => StepKind::CloseCompose,
        4 => StepKind::CloseStack,
        5 => StepKind::Bos,
        6 => StepKind::Pad,
        other => return Err(Error::data(format!("bad kind code {other}"))),
    })
}

/// Binary corpus: magic, version, view tag, record count, then per record a
/// length-prefixed run of (id: u32, kind: u8, depth: u32), all little-endian.
pub fn write_corpus(path: impl AsRef<Path>, view: InputView, seqs: &[StepSeq]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CORPUS_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    let view_tag: u32 = match view {
        InputView::DuplicatedTrees => 0,
        InputView::RawTrees => 1,
        InputView::TerminalsOnly => 2,
    };
    out.extend_from_slice(&view_tag.to_le_bytes());
    out.extend_from_slice(&(seqs.len() as u64).to_le_bytes());
    for seq in seqs {
        out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for i in 0..seq.len() {
            out.extend_from_slice(&seq.ids[i].to_le_bytes());
            out.push(kind_code(seq.kinds[i]));
            out.extend_from_slice(&seq.depth(i).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<(InputView, Vec<StepSeq>)> {
    let bytes = fs::read(&path)?;
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > bytes.len() {
            return Err(Error::data("truncated corpus file"));
        }
        let s = &bytes[at..at + n];
        at += n;
        Ok(s)
    };
    if take(4)? != CORPUS_MAGIC {
        return Err(Error::data("not a corpus file"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != 1 {
        return Err(Error::data(format!("unsupported corpus version {version}")));
    }
    let view = match u32::from_le_bytes(take(4)?.try_into().unwrap()) {
        0 => InputView::DuplicatedTrees,
        1 => InputView::RawTrees,
        2 => InputView::TerminalsOnly,
        other => return Err(Error::data(format!("bad view tag {other}"))),
    };
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut seqs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut ids = Vec::with_capacity(len);
        let mut kinds = Vec::with_capacity(len);
        let mut depths = Vec::with_capacity(len);
        for _ in 0..len {
            ids.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
            kinds.push(kind_from_code(take(1)?[0])?);
            depths.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
        }
        seqs.push(StepSeq::new(ids, kinds, Some(depths)));
    }
    Ok((view, seqs))
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let docs: Vec<Vec<Tree>> = if a.docs {
        read_documents(&a.trees)?
    } else {
        read_trees(&a.trees)?.into_iter().map(|t| vec![t]).collect()
    };
    let vocab = match &a.vocab {
        Some(path) => Vocabulary::load(path)?,
        None => build_vocab(docs.iter().flatten(), a.min_count)?,
    };
    if let Some(path) = &a.vocab_out {
        vocab.save(path)?;
    }
    let seqs: Vec<StepSeq> = docs
        .iter()
        .map(|doc| encode_document(doc, &vocab, a.view))
        .collect::<Result<_>>()?;
    write_corpus(&a.corpus_out, a.view, &seqs)?;
    println!(
        "wrote {} sequences ({} tokens) to {}",
        seqs.len(),
        seqs.iter().map(|s| s.len()).sum::<usize>(),
        a.corpus_out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// transform

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum TransformMode {
    LeftBranching,
    RightBranching,
    Reversed,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long, value_enum)]
    mode: TransformMode,
    #[arg(long)]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let trees = read_trees(&a.input)?;
    let transformed: Vec<Tree> = trees
        .iter()
        .map(|t| match a.mode {
            TransformMode::LeftBranching => to_left_branching(t),
            TransformMode::RightBranching => to_right_branching(t),
            TransformMode::Reversed => reverse_structure(t),
        })
        .collect();
    match &a.output {
        Some(path) => write_trees(path, &transformed)?,
        None => {
            for t in &transformed {
                println!("{t}");
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mask-dump

#[derive(Args)]
struct MaskDumpArgs {
    /// Bracketed tree given inline.
    #[arg(long, conflicts_with = "input")]
    tree: Option<String>,
    /// Tree file; --line picks the (1-based) line.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    line: usize,
    #[arg(long, value_enum, default_value_t = PositionScheme::TreeDepth)]
    positions: PositionScheme,
    /// Dump the plain causal mask over the raw sequence instead.
    #[arg(long)]
    causal: bool,
    /// Clamp bound for relative positions.
    #[arg(long, default_value_t = crate::maskgen::DEFAULT_POS_CLAMP)]
    clamp: i32,
}

pub fn render_mask_dump(
    tree: &Tree,
    causal: bool,
    positions: PositionScheme,
    clamp: i32,
) -> Result<String> {
    let seq = if causal {
        linearize(tree)
    } else {
        linearize(tree).duplicate_closing()?
    };
    let vocab = build_vocab([tree], 1)?;
    let steps = StepSeq::from_actions(&seq, &vocab)?;
    let bundle: MaskBundle = if causal {
        causal_mask(&steps, positions, clamp)?
    } else {
        stack_compose_mask(&steps, positions, clamp)?
    };
    let kind_name = |k: ActionKind| match k {
        ActionKind::Open => "open",
        ActionKind::Terminal => "terminal",
        ActionKind::Close => "close",
        ActionKind::CloseCompose => "close-compose",
        ActionKind::CloseStack => "close-stack",
    };
    let mut out = String::new();
    out.push_str(&format!("tokens: {}\n", seq.symbols().join(" ")));
    out.push_str(&format!(
        "kinds: {}\n",
        seq.kinds()
            .iter()
            .map(|&k| kind_name(k))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    out.push_str(&format!(
        "depths: {}\n",
        seq.depths()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    out.push_str(&format!(
        "stack: {}\n",
        bundle
            .stack_trace()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    out.push_str("mask:\n");
    out.push_str(&bundle.render_grid());
    out.push_str("rel:\n");
    out.push_str(&bundle.render_rel());
    Ok(out)
}

fn cmd_mask_dump(a: MaskDumpArgs) -> Result<()> {
    let tree = match (&a.tree, &a.input) {
        (Some(text), _) => parse_bracketed(text)?,
        (None, Some(path)) => {
            let trees = read_trees(path)?;
            trees
                .get(a.line.saturating_sub(1))
                .cloned()
                .ok_or_else(|| Error::data(format!("no tree at line {}", a.line)))?
        }
        (None, None) => return Err(Error::data("provide --tree or --input")),
    };
    print!("{}", render_mask_dump(&tree, a.causal, a.positions, a.clamp)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct FileConfig {
    #[serde(default)]
    model: PartialModelConfig,
    #[serde(default)]
    train: PartialTrainConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct PartialModelConfig {
    d_model: Option<usize>,
    n_layers: Option<usize>,
    n_heads: Option<usize>,
    d_ff: Option<usize>,
    attention: Option<AttentionKind>,
    positions: Option<PositionScheme>,
    view: Option<InputView>,
    seg_len: Option<usize>,
    mem_len: Option<usize>,
    pos_clamp: Option<i32>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct PartialTrainConfig {
    lr: Option<f64>,
    lr_min: Option<f64>,
    warmup_steps: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    clip_norm: Option<f64>,
    eval_every: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: a binary corpus from `preprocess` or a tree file.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory (checkpoint.bin, metrics.jsonl, config.json).
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags override it, defaults fill the rest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long, value_enum)]
    attention: Option<AttentionKind>,
    #[arg(long, value_enum)]
    positions: Option<PositionScheme>,
    #[arg(long, value_enum)]
    view: Option<InputView>,
    #[arg(long)]
    seg_len: Option<usize>,
    #[arg(long)]
    mem_len: Option<usize>,
    #[arg(long)]
    pos_clamp: Option<i32>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
}

/// Flags > config file > defaults.
fn resolve_configs(a: &TrainArgs, vocab_size: usize, seed: u64) -> Result<(ModelConfig, TrainConfig)> {
    let file: FileConfig = match &a.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    let m = &file.model;
    let mode = MaskMode {
        attention: a
            .attention
            .or(m.attention)
            .unwrap_or(AttentionKind::StackCompose),
        positions: a
            .positions
            .or(m.positions)
            .unwrap_or(PositionScheme::TreeDepth),
        view: a.view.or(m.view).unwrap_or(InputView::DuplicatedTrees),
    };
    let cfg = ModelConfig {
        d_model: a.d_model.or(m.d_model).unwrap_or(64),
        n_layers: a.n_layers.or(m.n_layers).unwrap_or(4),
        n_heads: a.n_heads.or(m.n_heads).unwrap_or(4),
        d_ff: a.d_ff.or(m.d_ff).unwrap_or(256),
        vocab_size,
        mode,
        seg_len: a.seg_len.or(m.seg_len).unwrap_or(DEFAULT_SEGMENT_LEN),
        mem_len: a.mem_len.or(m.mem_len).unwrap_or(DEFAULT_MEMORY_LEN),
        pos_clamp: a
            .pos_clamp
            .or(m.pos_clamp)
            .unwrap_or(crate::maskgen::DEFAULT_POS_CLAMP),
        seed,
    };
    let t = &file.train;
    let d = TrainConfig::default();
    let tcfg = TrainConfig {
        lr: a.lr.or(t.lr).unwrap_or(d.lr),
        lr_min: a.lr_min.or(t.lr_min).unwrap_or(d.lr_min),
        warmup_steps: a.warmup_steps.or(t.warmup_steps).unwrap_or(d.warmup_steps),
        epochs: a.epochs.or(t.epochs).unwrap_or(d.epochs),
        batch_size: a.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
        clip_norm: a.clip_norm.or(t.clip_norm).unwrap_or(d.clip_norm),
        eval_every: a.eval_every.or(t.eval_every).unwrap_or(d.eval_every),
    };
    Ok((cfg, tcfg))
}

/// Loads sequences from a binary corpus or encodes a tree file on the fly.
fn load_sequences(path: &Path, vocab: &Vocabulary, view: InputView) -> Result<Vec<StepSeq>> {
    let mut magic = [0u8; 4];
    let is_corpus = fs::File::open(path)?
        .read_exact(&mut magic)
        .map(|_| &magic == CORPUS_MAGIC)
        .unwrap_or(false);
    if is_corpus {
        let (file_view, seqs) = read_corpus(path)?;
        if file_view != view {
            return Err(Error::data(format!(
                "corpus {} was preprocessed with a different input view",
                path.display()
            )));
        }
        Ok(seqs)
    } else {
        read_trees(path)?
            .iter()
            .map(|t| encode_tree(t, vocab, view))
            .collect()
    }
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (cfg, tcfg) = resolve_configs(&a, vocab.len(), seed)?;
    cfg.validate()?;
    let train_seqs = load_sequences(&a.train, &vocab, cfg.mode.view)?;
    let valid_seqs = load_sequences(&a.valid, &vocab, cfg.mode.view)?;

    fs::create_dir_all(&a.out)?;
    let effective = serde_json::json!({ "model": cfg, "train": tcfg });
    fs::write(
        a.out.join("config.json"),
        serde_json::to_string_pretty(&effective)?,
    )?;

    let mut metrics_file = fs::File::create(a.out.join("metrics.jsonl"))?;
    writeln!(
        metrics_file,
        "{}",
        serde_json::json!({ "event": "config", "config": effective })
    )?;

    let (model, summary) = train::<f32>(cfg.clone(), &tcfg, &train_seqs, &valid_seqs, |rec| {
        let line = serde_json::to_string(rec).expect("metric record serializes");
        let _ = writeln!(metrics_file, "{line}");
        eprintln!(
            "step {:>6} {:<5} nll {:.4} ppl {:.3}",
            rec.step, rec.split, rec.nll, rec.ppl
        );
    })?;

    save_checkpoint(a.out.join("checkpoint.bin"), &cfg, &model.params)?;
    println!(
        "trained {} steps; best validation nll {:.4} at step {}; checkpoint written to {}",
        summary.steps,
        summary.best_val_nll,
        summary.best_step,
        a.out.join("checkpoint.bin").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval-ppl

#[derive(Args)]
struct EvalPplArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Tree file (sentence per line) or document file with --document-level.
    #[arg(long)]
    data: PathBuf,
    /// Proposal file (JSON-lines); optional for terminal-only models.
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Score blank-line-separated documents with the greedy prefix rule.
    #[arg(long)]
    document_level: bool,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn load_model64(checkpoint: &Path) -> Result<(ModelConfig, Model<f64>)> {
    let (cfg, params32) = load_checkpoint(checkpoint)?;
    let model = Model::from_params(cfg.clone(), params32.cast::<f64>())?;
    Ok((cfg, model))
}

fn sentence_items(trees: &[Tree]) -> Vec<(String, Tree)> {
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("s{i}"), t.clone()))
        .collect()
}

fn write_json_report(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    if let Some(path) = path {
        fs::write(path, serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn cmd_eval_ppl(a: EvalPplArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (cfg, model) = load_model64(&a.checkpoint)?;
    let scorer = TreeScorer::new(&model, &vocab)?;
    let proposals = match &a.proposals {
        Some(path) => load_proposals(path)?,
        None => Vec::new(),
    };

    if a.document_level {
        let docs = read_documents(&a.data)?;
        let by_id: std::collections::HashMap<&str, &ProposalSet> =
            proposals.iter().map(|p| (p.id.as_str(), p)).collect();
        let mut total_nll = 0.0;
        let mut n_words = 0usize;
        let mut doc_scores = Vec::new();
        for (di, doc) in docs.iter().enumerate() {
            let sets: Vec<ProposalSet> = doc
                .iter()
                .enumerate()
                .map(|(si, tree)| {
                    let id = format!("d{di}:s{si}");
                    match by_id.get(id.as_str()) {
                        Some(set) => Ok((*set).clone()),
                        None if scorer.exact_over_strings() => {
                            ProposalSet::new(id, vec![tree.clone()])
                        }
                        None => Err(Error::data(format!("missing proposals for {id}"))),
                    }
                })
                .collect::<Result<_>>()?;
            let score = doc_marginal(&scorer, &sets)?;
            total_nll -= score;
            let words: usize = doc.iter().map(|t| t.terminals().len()).sum();
            n_words += words;
            doc_scores.push(serde_json::json!({
                "id": format!("d{di}"), "logprob": score, "n_words": words
            }));
        }
        let ppl = (total_nll / n_words as f64).exp();
        println!("documents: {}", docs.len());
        println!("words: {n_words}");
        println!("total nll: {total_nll:.4}");
        println!("perplexity: {ppl:.4}");
        let report = serde_json::json!({
            "config": cfg,
            "document_level": true,
            "corpus_ppl": ppl,
            "total_nll": total_nll,
            "n_words": n_words,
            "documents": doc_scores,
        });
        write_json_report(&a.json, &report)?;
        return Ok(());
    }

    let trees = read_trees(&a.data)?;
    let dataset = sentence_items(&trees);
    let report = corpus_ppl(&scorer, &dataset, &proposals)?;
    println!("sentences: {}", report.sentences.len());
    println!("words: {}", report.n_words);
    println!("total nll: {:.4}", report.total_nll);
    println!("perplexity: {:.4}", report.corpus_ppl);
    let json = serde_json::json!({ "config": cfg, "document_level": false, "report": report });
    write_json_report(&a.json, &json)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rerank

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    proposals: PathBuf,
    /// Gold trees aligned with the proposal file for bracketing scores.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Write the selected trees here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn cmd_rerank(a: RerankArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (cfg, model) = load_model64(&a.checkpoint)?;
    let scorer = TreeScorer::new(&model, &vocab)?;
    let sets = load_proposals(&a.proposals)?;
    let mut selected = Vec::with_capacity(sets.len());
    for set in &sets {
        let idx = rerank(&scorer, set)?;
        selected.push(set.trees[idx].clone());
    }
    if let Some(path) = &a.out {
        write_trees(path, &selected)?;
    }

    let mut json = serde_json::json!({ "config": cfg, "n_sentences": sets.len() });
    if let Some(gold_path) = &a.gold {
        let gold = read_trees(gold_path)?;
        if gold.len() != selected.len() {
            return Err(Error::data(format!(
                "gold file has {} trees, proposals have {}",
                gold.len(),
                selected.len()
            )));
        }
        let mut matched = 0usize;
        let mut n_gold = 0usize;
        let mut n_pred = 0usize;
        for (g, p) in gold.iter().zip(&selected) {
            let (m, ng, np) = match_counts(g, p)?;
            matched += m;
            n_gold += ng;
            n_pred += np;
        }
        let precision = 100.0 * matched as f64 / n_pred as f64;
        let recall = 100.0 * matched as f64 / n_gold as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        println!("sentences: {}", sets.len());
        println!("bracketing precision: {precision:.2}");
        println!("bracketing recall: {recall:.2}");
        println!("bracketing f1: {f1:.2}");
        json["precision"] = serde_json::json!(precision);
        json["recall"] = serde_json::json!(recall);
        json["f1"] = serde_json::json!(f1);
    } else {
        println!("selected {} trees", selected.len());
    }
    write_json_report(&a.json, &json)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sg-eval

#[derive(Args)]
struct SgEvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Suite file (JSON).
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn cmd_sg_eval(a: SgEvalArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (cfg, model) = load_model64(&a.checkpoint)?;
    let scorer = TreeScorer::new(&model, &vocab)?;
    let suites = load_sg_suites(&a.suite)?;
    let report = sg_score(&scorer, &suites)?;
    for s in &report.suites {
        println!(
            "{:<24} {:>6.2}% ({} items)",
            s.suite,
            100.0 * s.accuracy,
            s.n_items
        );
    }
    println!("mean accuracy: {:.2}%", 100.0 * report.mean_accuracy);
    let json = serde_json::json!({ "config": cfg, "report": report });
    write_json_report(&a.json, &json)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sample

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(short = 'n', long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 120)]
    max_len: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Drop the well-formedness constraints.
    #[arg(long)]
    unconstrained: bool,
    /// Maximum open-constituent depth under constraints.
    #[arg(long, default_value_t = 32)]
    depth_cap: u32,
}

fn cmd_sample(a: SampleArgs, seed: u64) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (cfg, params32) = load_checkpoint(&a.checkpoint)?;
    let model = Model::from_params(cfg, params32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..a.count {
        let s = sample_tree(
            &model,
            &vocab,
            &mut rng,
            a.max_len,
            a.temperature,
            !a.unconstrained,
            a.depth_cap,
        )?;
        match s.tree {
            Some(tree) => println!("{tree}"),
            None => println!("# ill-formed: {}", s.symbols.join(" ")),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    checkpoint_a: PathBuf,
    #[arg(long)]
    checkpoint_b: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Tree file (one sentence per line) or document file with --docs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    docs: bool,
    /// Output JSON-lines file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let vocab = Vocabulary::load(&a.vocab)?;
    let (_, model_a) = load_model64(&a.checkpoint_a)?;
    let (_, model_b) = load_model64(&a.checkpoint_b)?;
    let scorer_a = TreeScorer::new(&model_a, &vocab)?;
    let scorer_b = TreeScorer::new(&model_b, &vocab)?;

    let docs: Vec<(String, Vec<Tree>)> = if a.docs {
        read_documents(&a.data)?
            .into_iter()
            .enumerate()
            .map(|(i, d)| (format!("d{i}"), d))
            .collect()
    } else {
        read_trees(&a.data)?
            .into_iter()
            .enumerate()
            .map(|(i, t)| (format!("s{i}"), vec![t]))
            .collect()
    };
    let records = compare_logprobs(&scorer_a, &scorer_b, &docs)?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    eprintln!("wrote {} records", records.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// grad-check

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    n_layers: usize,
    #[arg(long, default_value_t = 2)]
    n_heads: usize,
    #[arg(long, default_value_t = 24)]
    d_ff: usize,
    /// Number of random trees in the batch.
    #[arg(long, default_value_t = 5)]
    batches: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, value_enum)]
    attention: Option<AttentionKind>,
    #[arg(long, value_enum)]
    positions: Option<PositionScheme>,
    #[arg(long, value_enum)]
    view: Option<InputView>,
}

fn cmd_grad_check(a: GradCheckArgs, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees: Vec<Tree> = (0..a.batches.max(1))
        .map(|_| synth::random_tree(&mut rng, 24))
        .collect();
    let vocab = build_vocab(trees.iter(), 1)?;
    let mode = MaskMode {
        attention: a.attention.unwrap_or(AttentionKind::StackCompose),
        positions: a.positions.unwrap_or(PositionScheme::TreeDepth),
        view: a.view.unwrap_or(InputView::DuplicatedTrees),
    };
    let cfg = ModelConfig {
        d_model: a.d_model,
        n_layers: a.n_layers,
        n_heads: a.n_heads,
        d_ff: a.d_ff,
        vocab_size: vocab.len(),
        mode,
        seg_len: 256,
        mem_len: 256,
        pos_clamp: crate::maskgen::DEFAULT_POS_CLAMP,
        seed,
    };
    let mut model: Model<f64> = Model::new(cfg.clone())?;
    model.params.randomize(&mut rng, 0.4);
    if model.params.n_params() > 10_000 {
        return Err(Error::data(format!(
            "gradient check is limited to 10000 parameters, got {}",
            model.params.n_params()
        )));
    }
    let preps = trees
        .iter()
        .map(|t| {
            let steps = encode_tree(t, &vocab, cfg.mode.view)?;
            model.prepare(&steps)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = grad_check(&model, &preps, a.eps)?;
    println!(
        "checked {} parameters; max relative error {:.3e} at {}",
        report.n_checked, report.max_rel_err, report.worst_param
    );
    if report.max_rel_err > a.tolerance {
        return Err(Error::numeric(format!(
            "gradient check failed: {:.3e} > {:.3e}",
            report.max_rel_err, a.tolerance
        )));
    }
    Ok(())
}

