use crate::treebank::Tree;

/// Nonterminal labels in linearization (pre-order) order.
fn labels_preorder(tree: &Tree) -> Vec<String> {
    let mut out = Vec::new();
    fn rec(t: &Tree, out: &mut Vec<String>) {
        if let Tree::Internal { label, children } = t {
            out.push(label.clone());
            for c in children {
                rec(c, out);
            }
        }
    }
    rec(tree, &mut out);
    out
}

/// Binary spine over the terminals, `left == true` nesting at the front.
/// The original labels are reused outermost-first, cyclically when the spine
/// needs more nodes than the source tree had.
fn branching(tree: &Tree, left: bool) -> Tree {
    let words: Vec<String> = tree.terminals().iter().map(|w| w.to_string()).collect();
    let n = words.len();
    if n < 2 {
        return tree.clone();
    }
    let labels = labels_preorder(tree);
    let label = |i: usize| labels[i % labels.len()].clone();

    let spine = n - 1;
    if left {
        // innermost node holds the first two terminals
        let mut node = Tree::node(
            label(spine - 1),
            vec![Tree::leaf(&words[0]), Tree::leaf(&words[1])],
        );
        for j in (0..spine - 1).rev() {
            node = Tree::node(label(j), vec![node, Tree::leaf(&words[spine - j])]);
        }
        node
    } else {
        // innermost node holds the last two terminals
        let mut node = Tree::node(
            label(spine - 1),
            vec![Tree::leaf(&words[n - 2]), Tree::leaf(&words[n - 1])],
        );
        for j in (0..spine - 1).rev() {
            node = Tree::node(label(j), vec![Tree::leaf(&words[j]), node]);
        }
        node
    }
}

/// Binary left-branching tree over the same terminal string.
pub fn to_left_branching(tree: &Tree) -> Tree {
    branching(tree, true)
}

/// Binary right-branching tree over the same terminal string.
pub fn to_right_branching(tree: &Tree) -> Tree {
    branching(tree, false)
}

/// Reverses the child order at every node, then refills the leaves
/// left-to-right with the original terminal string, so the words keep their
/// order while the structure above them is mirrored.
pub fn reverse_structure(tree: &Tree) -> Tree {
    fn mirror(t: &Tree) -> Tree {
        match t {
            Tree::Leaf { word } => Tree::leaf(word),
            Tree::Internal { label, children } => Tree::Internal {
                label: label.clone(),
                children: children.iter().rev().map(mirror).collect(),
            },
        }
    }
    fn refill<'a>(t: &mut Tree, words: &mut impl Iterator<Item = &'a str>) {
        match t {
            Tree::Leaf { word } => *word = words.next().expect("leaf count unchanged").to_string(),
            Tree::Internal { children, .. } => {
                for c in children {
                    refill(c, words);
                }
            }
        }
    }
    let words: Vec<&str> = tree.terminals();
    let mut out = mirror(tree);
    refill(&mut out, &mut words.into_iter());
    out
}
