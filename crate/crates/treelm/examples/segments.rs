//! Segmentation and the pruned memory: how a long sequence is split into
//! fixed-length segments and which positions the memory retains.
//!
//! ```text
//! cargo run --example segments
//! ```

use treelm::maskgen::{encode_document, InputView, MaskMode};
use treelm::segmenter::{advance_slots, segment_mask, MemorySlots, SegmentPlan};
use treelm::treebank::{build_vocab, parse_bracketed};

fn main() {
    // a two-sentence document: the first sentence's composed root stays on
    // the stack while the second one is processed
    let trees = vec![
        parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap(),
        parse_bracketed("(S (NP the cat NP) (VP sleeps VP) S)").unwrap(),
    ];
    let vocab = build_vocab(trees.iter(), 1).unwrap();
    let steps = encode_document(&trees, &vocab, InputView::DuplicatedTrees).unwrap();
    println!("document sequence: {} tokens", steps.len());

    let seg_len = 9;
    let mem_cap = 16;
    let mode = MaskMode::stack_compose();
    let plan = SegmentPlan::new(steps, seg_len, mem_cap, vocab.pad_id());
    println!("segments: {} of length {seg_len}, memory capacity {mem_cap}\n", plan.n_segments());

    let mut slots = MemorySlots::empty();
    for t in 0..plan.n_segments() {
        let seg = plan.segment(t);
        let symbols: Vec<&str> = seg.ids.iter().map(|&id| vocab.symbol(id)).collect();
        println!("segment {t}: {}", symbols.join(" "));
        println!("  memory slots on entry (original positions): {:?}", slots.origins());

        let bundle = segment_mask(&plan, t, &slots, &mode, 16).unwrap();
        for local in 0..plan.real_in_segment(t) {
            let attended: Vec<usize> = bundle
                .row(local)
                .map(|(c, _)| bundle.col_origins()[c])
                .collect();
            println!(
                "    position {:>2} attends {:?}",
                t * seg_len + local,
                attended
            );
        }

        let (next, dropped) = advance_slots(&slots, &plan, t, &mode).unwrap();
        slots = next;
        println!("  retained after segment: {:?} (dropped {dropped})\n", slots.origins());
    }
}
