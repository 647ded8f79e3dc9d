// scratch probe: direct verb-preference vs the suite-scoring route
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treelm::evalsuite::{sg_score, PrefixScorer, SgSuite};
use treelm::maskgen::{encode_tree, MaskMode};
use treelm::model::{train, Model, ModelConfig, TrainConfig, TreeScorer};
use treelm::synth::{agreement_grammar, agreement_suites};
use treelm::treebank::{build_vocab, parse_bracketed, Tree, Vocabulary};

fn main() {
    let g = agreement_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let train_trees = g.sample_corpus(&mut rng, 2000, 60).unwrap();
    let valid_trees = g.sample_corpus(&mut rng, 200, 60).unwrap();
    let vocab = build_vocab(train_trees.iter(), 1).unwrap();
    let mode = MaskMode::stack_compose();
    let enc = |ts: &[Tree]| -> Vec<_> { ts.iter().map(|t| encode_tree(t, &vocab, mode.view).unwrap()).collect() };
    let cfg = ModelConfig { d_model: 48, n_layers: 3, n_heads: 4, d_ff: 96, vocab_size: vocab.len(), mode, seg_len: 256, mem_len: 256, pos_clamp: 16, seed: 1 };
    let tcfg = TrainConfig { lr: 2e-3, lr_min: 1e-4, warmup_steps: 50, epochs: 2, batch_size: 32, clip_norm: 1.0, eval_every: 100 };
    let (m, s) = train::<f32>(cfg, &tcfg, &enc(&train_trees), &enc(&valid_trees), |_| {}).unwrap();
    eprintln!("val nll {:.4}", s.best_val_nll);

    // direct route: logits at the verb-predicting position of a gram tree
    let gram = parse_bracketed("(S (NP the dog (PP near (NP the cats NP) PP) NP) (VP runs VP) S)").unwrap();
    let m64: Model<f64> = m.cast();
    let steps = encode_tree(&gram, &vocab, mode.view).unwrap();
    let prep = m64.prepare(&steps).unwrap();
    let logits = m64.forward_logits(&prep).unwrap();
    // find the input position whose target is the verb terminal
    let full = prep.plan.steps();
    let runs_id = vocab.terminal_id("runs");
    let run_id = vocab.terminal_id("run");
    let verb_pos = (0..prep.plan.real_len()).find(|&p| full.ids[p] == runs_id).unwrap();
    let pred_pos = verb_pos - 1;
    let row = logits.row(pred_pos);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
    let p_runs = ((row[runs_id as usize] - max).exp()) / z;
    let p_run = ((row[run_id as usize] - max).exp()) / z;
    println!("direct: p(runs|sg ctx) = {p_runs:.4}, p(run|sg ctx) = {p_run:.4}");

    // suite route on the same minimal pair
    let scorer = TreeScorer::new(&m64, &vocab).unwrap();
    let wp_gram = scorer.word_prefix_logprobs(&gram).unwrap();
    let ungram = parse_bracketed("(S (NP the dog (PP near (NP the cats NP) PP) NP) (VP run VP) S)").unwrap();
    let wp_ungram = scorer.word_prefix_logprobs(&ungram).unwrap();
    println!("gram prefixes:   {:?}", wp_gram.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("ungram prefixes: {:?}", wp_ungram.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    let sg_diff = (wp_gram[5] - wp_gram[4]) - (wp_ungram[5] - wp_ungram[4]);
    println!("suite-route verb logprob diff (gram - ungram): {sg_diff:.4}");

    // and the full suite accuracies
    let mut srng = ChaCha8Rng::seed_from_u64(408);
    let suites: Vec<SgSuite> = agreement_suites(&mut srng, 30, 10);
    let rep = sg_score(&scorer, &suites).unwrap();
    println!("suite accuracies: {:?}", rep.suites.iter().map(|s| (s.suite.clone(), s.accuracy)).collect::<Vec<_>>());
}
