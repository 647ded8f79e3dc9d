//! The stack/compose attention mask of a sentence, as a textual grid, with
//! tree-depth relative positions and the attendable set over time.
//!
//! ```text
//! cargo run --example mask_grid [bracketed-tree]
//! ```

use treelm::maskgen::{attendable_set, encode_tree, stack_compose_mask, InputView, PositionScheme};
use treelm::treebank::{build_vocab, parse_bracketed};

fn main() {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "(S (NP the blue bird NP) (VP sings VP) S)".to_string());
    let tree = parse_bracketed(&text).unwrap();
    let vocab = build_vocab([&tree], 1).unwrap();
    let steps = encode_tree(&tree, &vocab, InputView::DuplicatedTrees).unwrap();

    let bundle = stack_compose_mask(&steps, PositionScheme::TreeDepth, 16).unwrap();
    println!("tokens:");
    for (i, &id) in steps.ids.iter().enumerate() {
        println!(
            "  {i:>3} {:<8} depth {} kind {:?}",
            vocab.symbol(id),
            steps.depth(i),
            steps.kinds[i]
        );
    }
    println!("\nmask (rows attend, 1 = visible):");
    print!("{}", bundle.render_grid());
    println!("relative positions (depth deltas, '.' = masked):");
    print!("{}", bundle.render_rel());

    println!("attendable set after each position (the stack):");
    for i in 0..steps.len() {
        println!("  after {i:>3}: {:?}", attendable_set(&steps, i).unwrap());
    }
}
