//! Overfits a tiny model on a handful of sentences, then samples trees with
//! the well-formedness constraints on and off.
//!
//! ```text
//! cargo run --example sample_trees
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::maskgen::{encode_tree, MaskMode};
use treelm::model::{sample_tree, train, ModelConfig, TrainConfig};
use treelm::synth::agreement_grammar;
use treelm::treebank::build_vocab;

fn main() {
    let grammar = agreement_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trees = grammar.sample_corpus(&mut rng, 400, 50).unwrap();
    let vocab = build_vocab(trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let seqs: Vec<_> = trees
        .iter()
        .map(|t| encode_tree(t, &vocab, mode.view).unwrap())
        .collect();

    let cfg = ModelConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        d_ff: 64,
        vocab_size: vocab.len(),
        mode,
        seg_len: 128,
        mem_len: 128,
        pos_clamp: 16,
        seed: 5,
    };
    let tcfg = TrainConfig {
        lr: 2e-3,
        epochs: 3,
        batch_size: 16,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let (model, _) = train::<f32>(cfg, &tcfg, &seqs, &seqs[..40].to_vec(), |_| {}).unwrap();

    println!("constrained samples (always parse):");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let s = sample_tree(&model, &vocab, &mut rng, 80, 1.0, true, 16).unwrap();
        println!("  {}", s.tree.unwrap());
    }

    println!("unconstrained samples (may be ill-formed):");
    for _ in 0..5 {
        let s = sample_tree(&model, &vocab, &mut rng, 80, 1.0, false, 16).unwrap();
        match s.tree {
            Some(t) => println!("  {t}"),
            None => println!("  # ill-formed: {}", s.symbols.join(" ")),
        }
    }
}
