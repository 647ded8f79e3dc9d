//! Marginalized word perplexity: lower-bounds the string probability by
//! summing the joint over enumerated candidate parses, and compares the
//! bound against the exact marginal under a grammar whose parses are fully
//! enumerable.
//!
//! ```text
//! cargo run --example perplexity
//! ```

use treelm::evalsuite::{corpus_ppl, marginal_lower_bound, ProposalSet};
use treelm::synth::{ambiguous_grammar, PcfgScorer};

fn main() {
    let grammar = ambiguous_grammar();
    let scorer = PcfgScorer(&grammar);

    let sentence = ["the", "man", "saw", "the", "dog", "in", "the", "park"];
    let parses = grammar.enumerate_parses(&sentence, 50);
    println!("sentence: {}", sentence.join(" "));
    println!("parses: {}", parses.len());
    for (t, lp) in &parses {
        println!("  {lp:>9.4}  {t}");
    }

    // exact marginal by direct summation over all parses
    let exact: f64 = parses.iter().map(|(_, lp)| lp.exp()).sum();
    println!("exact marginal: {:.6e}", exact);

    // the bound over the full parse set equals the exact marginal; any
    // strict subset falls below it
    let full = ProposalSet::new("s0", parses.iter().map(|(t, _)| t.clone()).collect()).unwrap();
    let bound = marginal_lower_bound(&scorer, &full).unwrap();
    println!("bound (all parses): {:.6e}", bound.exp());
    let partial = ProposalSet::new("s0", vec![parses[0].0.clone()]).unwrap();
    let partial_bound = marginal_lower_bound(&scorer, &partial).unwrap();
    println!("bound (one parse):  {:.6e}", partial_bound.exp());

    // corpus-level word perplexity over a few sentences
    let sentences = [
        vec!["the", "man", "walked"],
        vec!["the", "dog", "saw", "the", "man"],
        sentence.to_vec(),
    ];
    let mut dataset = Vec::new();
    let mut proposals = Vec::new();
    for (i, words) in sentences.iter().enumerate() {
        let parses = grammar.enumerate_parses(words, 50);
        let id = format!("s{i}");
        dataset.push((id.clone(), parses[0].0.clone()));
        proposals
            .push(ProposalSet::new(id, parses.into_iter().map(|(t, _)| t).collect()).unwrap());
    }
    let report = corpus_ppl(&scorer, &dataset, &proposals).unwrap();
    println!(
        "\ncorpus: {} sentences, {} words, perplexity {:.3}",
        report.sentences.len(),
        report.n_words,
        report.corpus_ppl
    );
}
