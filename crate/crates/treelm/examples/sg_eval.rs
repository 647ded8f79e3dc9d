//! Inequality-based syntactic evaluation: minimal agreement pairs scored by
//! word surprisal at the verb, marginalized over candidate parses.
//!
//! ```text
//! cargo run --example sg_eval
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::evalsuite::sg_score;
use treelm::maskgen::{encode_tree, MaskMode};
use treelm::model::{train, ModelConfig, TrainConfig, TreeScorer};
use treelm::synth::{agreement_grammar, agreement_suites};
use treelm::treebank::build_vocab;

fn main() {
    let grammar = agreement_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trees = grammar.sample_corpus(&mut rng, 1200, 60).unwrap();
    let vocab = build_vocab(trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let seqs: Vec<_> = trees
        .iter()
        .map(|t| encode_tree(t, &vocab, mode.view).unwrap())
        .collect();

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
        seed: 5,
    };
    let tcfg = TrainConfig {
        lr: 1e-3,
        epochs: 2,
        batch_size: 32,
        eval_every: 40,
        ..TrainConfig::default()
    };
    println!("training on {} agreement sentences ...", seqs.len());
    let (model, summary) =
        train::<f32>(cfg, &tcfg, &seqs, &seqs[..100].to_vec(), |_| {}).unwrap();
    println!("best validation nll {:.4}", summary.best_val_nll);

    let suites = agreement_suites(&mut rng, 40, 10);
    let model64 = model.cast::<f64>();
    let scorer = TreeScorer::new(&model64, &vocab).unwrap();
    let report = sg_score(&scorer, &suites).unwrap();
    for s in &report.suites {
        println!(
            "{:<16} {:>6.1}% over {} items",
            s.suite,
            100.0 * s.accuracy,
            s.n_items
        );
    }
    println!("mean accuracy: {:.1}%", 100.0 * report.mean_accuracy);
}
