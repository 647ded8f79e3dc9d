//! Regenerates the bundled toy corpus under `data/toy/`: an agreement
//! grammar with embedded clauses, proposal sets enumerated from its
//! number-agnostic cover grammar, and a pair of minimal-pair test suites.
//!
//! ```text
//! cargo run --example make_toy_data [out_dir]
//! ```

use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelm::evalsuite::{save_proposals, ProposalSet};
use treelm::synth::{agreement_cover_grammar, agreement_grammar, agreement_suites};
use treelm::treebank::write_trees;

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/toy".to_string())
        .into();
    fs::create_dir_all(&out).expect("create output directory");

    let grammar = agreement_grammar();
    let cover = agreement_cover_grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let train = grammar.sample_corpus(&mut rng, 1200, 60).unwrap();
    let valid = grammar.sample_corpus(&mut rng, 200, 60).unwrap();
    write_trees(out.join("train.trees"), &train).unwrap();
    write_trees(out.join("valid.trees"), &valid).unwrap();

    let proposals: Vec<ProposalSet> = valid
        .iter()
        .enumerate()
        .map(|(i, tree)| {
            let words = tree.terminals();
            let parses = cover.enumerate_parses(&words, 10);
            ProposalSet::new(
                format!("s{i}"),
                parses.into_iter().map(|(t, _)| t).collect(),
            )
            .unwrap()
        })
        .collect();
    save_proposals(out.join("valid.proposals.jsonl"), &proposals).unwrap();

    let suites = agreement_suites(&mut rng, 30, 10);
    fs::write(
        out.join("sg_suite.json"),
        serde_json::to_string_pretty(&suites).unwrap(),
    )
    .unwrap();

    println!(
        "wrote {} train, {} valid sentences, {} proposal sets, {} suites to {}",
        train.len(),
        valid.len(),
        proposals.len(),
        suites.len(),
        out.display()
    );
}
