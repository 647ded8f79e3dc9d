//! Parse reranking and labeled bracketing F1: select the highest-scoring
//! candidate per sentence under a grammar scorer and compare to gold.
//!
//! ```text
//! cargo run --example rerank_f1
//! ```

use treelm::evalsuite::{bracket_f1, labeled_spans, rerank, ProposalSet};
use treelm::synth::{ambiguous_grammar, PcfgScorer};
use treelm::treebank::parse_bracketed;

fn main() {
    let grammar = ambiguous_grammar();
    let scorer = PcfgScorer(&grammar);

    let words = ["the", "man", "saw", "the", "dog", "with", "the", "telescope"];
    let parses = grammar.enumerate_parses(&words, 50);
    let set = ProposalSet::new("s0", parses.iter().map(|(t, _)| t.clone()).collect()).unwrap();
    let picked = rerank(&scorer, &set).unwrap();
    println!("candidates:");
    for (i, (t, lp)) in parses.iter().enumerate() {
        let marker = if i == picked { "->" } else { "  " };
        println!("{marker} {lp:>9.4}  {t}");
    }

    let gold = &parses[0].0;
    println!("\ngold spans:");
    for (label, start, end) in labeled_spans(gold) {
        println!("  {label}({start},{end})");
    }
    for (i, (t, _)) in parses.iter().enumerate() {
        let score = bracket_f1(gold, t).unwrap();
        println!(
            "candidate {i}: precision {:.1} recall {:.1} f1 {:.1}",
            score.precision, score.recall, score.f1
        );
    }

    // worked example: a flat gold tree against its left-branching transform
    let fig = parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap();
    let lb = treelm::treebank::to_left_branching(&fig);
    let score = bracket_f1(&fig, &lb).unwrap();
    println!(
        "\nflat vs left-branching: precision {:.1} recall {:.1} f1 {:.1}",
        score.precision, score.recall, score.f1
    );
}
