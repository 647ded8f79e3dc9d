use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::evalsuite::{marginal_lower_bound, rerank, JointScorer, ProposalSet};
use treelm::maskgen::{encode_tree, MaskMode, StepSeq};
use treelm::model::{sample_tree, train, Model, ModelConfig, TrainConfig, TreeScorer};
use treelm::synth::nesting_grammar;
use treelm::treebank::{build_vocab, linearize, parse_bracketed, Tree, Vocabulary};

fn encode_corpus(trees: &[Tree], vocab: &Vocabulary, mode: &MaskMode) -> Vec<StepSeq> {
    trees
        .iter()
        .map(|t| encode_tree(t, vocab, mode.view).unwrap())
        .collect()
}

fn small_cfg(vocab_size: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        vocab_size,
        mode: MaskMode::stack_compose(),
        seg_len: 64,
        mem_len: 64,
        pos_clamp: 8,
        seed,
    }
}

#[test]
fn validation_loss_decreases_over_first_five_evals() {
    let grammar = nesting_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let train_trees = grammar.sample_corpus(&mut rng, 400, 40).unwrap();
    let valid_trees = grammar.sample_corpus(&mut rng, 100, 40).unwrap();
    let vocab = build_vocab(train_trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let train_seqs = encode_corpus(&train_trees, &vocab, &mode);
    let valid_seqs = encode_corpus(&valid_trees, &vocab, &mode);

    let cfg = small_cfg(vocab.len(), 100);
    let tcfg = TrainConfig {
        lr: 3e-3,
        warmup_steps: 5,
        epochs: 1,
        batch_size: 16,
        eval_every: 5,
        ..TrainConfig::default()
    };
    let (_, summary) = train::<f32>(cfg, &tcfg, &train_seqs, &valid_seqs, |_| {}).unwrap();
    let valid_nll: Vec<f64> = summary
        .metrics
        .iter()
        .filter(|m| m.split == "valid")
        .map(|m| m.nll)
        .collect();
    assert!(valid_nll.len() >= 5, "expected at least 5 evaluations");
    for w in valid_nll[..5].windows(2) {
        assert!(w[1] < w[0], "validation NLL not decreasing: {valid_nll:?}");
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let grammar = nesting_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trees = grammar.sample_corpus(&mut rng, 8, 40).unwrap();
    let vocab = build_vocab(trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let seqs = encode_corpus(&trees, &vocab, &mode);

    let cfg = small_cfg(vocab.len(), 7);
    let tcfg = TrainConfig {
        lr: 0.0,
        lr_min: 0.0,
        warmup_steps: 0,
        epochs: 1,
        batch_size: 4,
        eval_every: 1,
        ..TrainConfig::default()
    };
    let (trained, _) = train::<f32>(cfg.clone(), &tcfg, &seqs, &seqs, |_| {}).unwrap();
    let fresh: Model<f32> = Model::new(cfg).unwrap();
    for ((_, a), (_, b)) in trained.params.iter().zip(fresh.params.iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn fixed_seed_reproduces_metrics_bitwise() {
    let grammar = nesting_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trees = grammar.sample_corpus(&mut rng, 64, 40).unwrap();
    let vocab = build_vocab(trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let seqs = encode_corpus(&trees, &vocab, &mode);

    let cfg = small_cfg(vocab.len(), 8);
    let tcfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        eval_every: 4,
        ..TrainConfig::default()
    };
    let (ma, sa) = train::<f32>(cfg.clone(), &tcfg, &seqs, &seqs, |_| {}).unwrap();
    let (mb, sb) = train::<f32>(cfg, &tcfg, &seqs, &seqs, |_| {}).unwrap();
    assert_eq!(sa.metrics.len(), sb.metrics.len());
    for (x, y) in sa.metrics.iter().zip(&sb.metrics) {
        assert_eq!(x.step, y.step);
        assert_eq!(x.split, y.split);
        assert_eq!(x.nll.to_bits(), y.nll.to_bits());
    }
    for ((_, a), (_, b)) in ma.params.iter().zip(mb.params.iter()) {
        assert_eq!(a, b);
    }
}

/// Overfit a single tree, then check memorization-dependent behaviors.
fn overfit_single_tree() -> (Model<f32>, Vocabulary, Tree) {
    let tree = parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap();
    let vocab = build_vocab([&tree], 1).unwrap();
    let mode = MaskMode::stack_compose();
    let seqs = encode_corpus(std::slice::from_ref(&tree), &vocab, &mode);

    let cfg = ModelConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        d_ff: 64,
        vocab_size: vocab.len(),
        mode,
        seg_len: 64,
        mem_len: 64,
        pos_clamp: 8,
        seed: 21,
    };
    let tcfg = TrainConfig {
        lr: 1e-2,
        lr_min: 1e-3,
        warmup_steps: 10,
        epochs: 300,
        batch_size: 1,
        eval_every: 100,
        ..TrainConfig::default()
    };
    let (model, _) = train::<f32>(cfg, &tcfg, &seqs, &seqs, |_| {}).unwrap();
    (model, vocab, tree)
}

#[test]
fn overfit_memorizes_and_reranks_gold_first() {
    let (model, vocab, tree) = overfit_single_tree();
    let steps = encode_tree(&tree, &vocab, model.cfg.mode.view).unwrap();
    let prep = model.prepare(&steps).unwrap();
    let loss = model.loss(&prep).unwrap();
    assert!(loss < 0.01, "overfit loss {loss}");

    // the memorized tree's joint log probability is near zero
    let model64: Model<f64> = model.cast();
    let scorer = TreeScorer::new(&model64, &vocab).unwrap();
    let joint = scorer.joint_logprob(&[], &tree).unwrap();
    assert!(joint > -0.2, "joint {joint}");

    // reranking picks the gold tree out of decoys over the same words
    let decoys = vec![
        tree.clone(),
        parse_bracketed("(S (NP the NP) (VP blue bird sings VP) S)").unwrap(),
        parse_bracketed("(S the blue bird sings S)").unwrap(),
    ];
    let set = ProposalSet::new("gold", decoys).unwrap();
    assert_eq!(rerank(&scorer, &set).unwrap(), 0);

    // temperature zero sampling reproduces the memorized sequence
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample = sample_tree(&model, &vocab, &mut rng, 40, 0.0, true, 16).unwrap();
    assert!(sample.well_formed);
    assert_eq!(sample.tree.as_ref().unwrap(), &tree);

    // the bound with the single gold proposal equals its joint log prob
    let single = ProposalSet::new("g", vec![tree.clone()]).unwrap();
    let bound = marginal_lower_bound(&scorer, &single).unwrap();
    assert!((bound - joint).abs() < 1e-12);
}

#[test]
fn constrained_samples_always_parse() {
    let tree = parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap();
    let vocab = build_vocab([&tree], 1).unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        vocab_size: vocab.len(),
        mode: MaskMode::stack_compose(),
        seg_len: 64,
        mem_len: 64,
        pos_clamp: 8,
        seed: 3,
    };
    let model: Model<f32> = Model::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let s = sample_tree(&model, &vocab, &mut rng, 48, 1.0, true, 8).unwrap();
        assert!(s.well_formed, "constrained sample failed: {:?}", s.symbols);
        let t = s.tree.unwrap();
        t.validate().unwrap();
        // the duplicated sequence matches the tree's own linearization
        let dup = linearize(&t).duplicate_closing().unwrap();
        assert_eq!(
            dup.symbols(),
            s.symbols.iter().map(|x| x.as_str()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn unconstrained_samples_from_untrained_model_misbehave() {
    let tree = parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap();
    let vocab = build_vocab([&tree], 1).unwrap();
    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        vocab_size: vocab.len(),
        mode: MaskMode::stack_compose(),
        seg_len: 96,
        mem_len: 96,
        pos_clamp: 8,
        seed: 3,
    };
    let model: Model<f32> = Model::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ill_formed = 0;
    for _ in 0..30 {
        let s = sample_tree(&model, &vocab, &mut rng, 80, 1.0, false, 8).unwrap();
        if !s.well_formed {
            ill_formed += 1;
        }
    }
    assert!(ill_formed > 0, "expected some ill-formed samples");
}
