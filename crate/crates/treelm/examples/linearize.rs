//! Trees to action sequences and back: parsing, linearization, closing
//! duplication, and the three structural transforms.
//!
//! ```text
//! cargo run --example linearize
//! ```

use treelm::treebank::{
    linearize, parse_bracketed, reverse_structure, to_left_branching, to_right_branching,
};

fn main() {
    let tree = parse_bracketed("(S (NP the blue bird NP) (VP sings VP) S)").unwrap();
    println!("tree:        {tree}");
    println!("sentence:    {}", tree.sentence());

    let raw = linearize(&tree);
    println!("actions:     {}", raw.symbols().join(" "));
    println!(
        "kinds:       {}",
        raw.kinds()
            .iter()
            .map(|k| format!("{k:?}"))
            .collect::<Vec<_>>()
            .join(" ")
    );

    let dup = raw.duplicate_closing().unwrap();
    println!("duplicated:  {}", dup.symbols().join(" "));
    println!(
        "depths:      {}",
        dup.depths()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("lengths:     raw {} -> duplicated {}", raw.len(), dup.len());

    println!();
    println!("left-branching:  {}", to_left_branching(&tree));
    println!("right-branching: {}", to_right_branching(&tree));
    println!("reversed:        {}", reverse_structure(&tree));

    // the duplicated sequence reconstructs the original tree
    assert_eq!(dup.reconstruct().unwrap(), tree);
}
