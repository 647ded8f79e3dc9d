//! Trains a small model on a synthetic agreement corpus and reports the
//! validation loss curve.
//!
//! ```text
//! cargo run --example train_toy
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::maskgen::{encode_tree, MaskMode, StepSeq};
use treelm::model::{train, ModelConfig, TrainConfig};
use treelm::synth::agreement_grammar;
use treelm::treebank::{build_vocab, Tree, Vocabulary};

fn encode(trees: &[Tree], vocab: &Vocabulary, mode: &MaskMode) -> Vec<StepSeq> {
    trees
        .iter()
        .map(|t| encode_tree(t, vocab, mode.view).unwrap())
        .collect()
}

fn main() {
    let grammar = agreement_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let train_trees = grammar.sample_corpus(&mut rng, 1500, 60).unwrap();
    let valid_trees = grammar.sample_corpus(&mut rng, 200, 60).unwrap();
    let vocab = build_vocab(train_trees.iter(), 1).unwrap();
    println!(
        "corpus: {} train / {} valid sentences, vocabulary {}",
        train_trees.len(),
        valid_trees.len(),
        vocab.len()
    );

    let mode = MaskMode::stack_compose();
    let cfg = ModelConfig {
        d_model: 48,
        n_layers: 3,
        n_heads: 4,
        d_ff: 128,
        vocab_size: vocab.len(),
        mode,
        seg_len: 256,
        mem_len: 256,
        pos_clamp: 16,
        seed: 11,
    };
    let tcfg = TrainConfig {
        lr: 1e-3,
        epochs: 2,
        batch_size: 32,
        eval_every: 20,
        ..TrainConfig::default()
    };

    let train_seqs = encode(&train_trees, &vocab, &cfg.mode);
    let valid_seqs = encode(&valid_trees, &vocab, &cfg.mode);
    let t0 = std::time::Instant::now();
    let (_model, summary) = train::<f32>(cfg, &tcfg, &train_seqs, &valid_seqs, |rec| {
        println!(
            "step {:>5} {:<5} nll {:.4} (action ppl {:.2})",
            rec.step, rec.split, rec.nll, rec.ppl
        );
    })
    .unwrap();
    println!(
        "done in {:.1}s: best validation nll {:.4} at step {}",
        t0.elapsed().as_secs_f64(),
        summary.best_val_nll,
        summary.best_step
    );
}
