//! Finite-difference validation of the analytic gradients on a tiny model.
//!
//! ```text
//! cargo run --example grad_check
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::maskgen::{encode_tree, MaskMode};
use treelm::model::{grad_check, Model, ModelConfig};
use treelm::synth::random_tree;
use treelm::treebank::build_vocab;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let trees: Vec<_> = (0..5).map(|_| random_tree(&mut rng, 24)).collect();
    let vocab = build_vocab(trees.iter(), 1).unwrap();

    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 24,
        vocab_size: vocab.len(),
        mode: MaskMode::stack_compose(),
        seg_len: 128,
        mem_len: 128,
        pos_clamp: 16,
        seed: 42,
    };
    let mut model: Model<f64> = Model::new(cfg.clone()).unwrap();
    model.params.randomize(&mut rng, 0.4);
    println!("model: {} parameters", model.params.n_params());

    let preps: Vec<_> = trees
        .iter()
        .map(|t| {
            let steps = encode_tree(t, &vocab, cfg.mode.view).unwrap();
            model.prepare(&steps).unwrap()
        })
        .collect();

    let t0 = std::time::Instant::now();
    let report = grad_check(&model, &preps, 1e-5).unwrap();
    println!(
        "checked {} parameters in {:.1}s",
        report.n_checked,
        t0.elapsed().as_secs_f64()
    );
    println!(
        "max relative error {:.3e} at {}",
        report.max_rel_err, report.worst_param
    );
    assert!(report.max_rel_err < 1e-4);
}
