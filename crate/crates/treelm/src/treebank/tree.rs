use std::fmt;

use crate::error::{Error, Result};

/// A labeled phrase-structure tree over a terminal string.
///
/// Every internal node has at least one child; leaves carry terminal words.
/// The in-order concatenation of the leaves is the source sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tree {
    Internal { label: String, children: Vec<Tree> },
    Leaf { word: String },
}

impl Tree {
    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Tree {
        Tree::Internal {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(word: impl Into<String>) -> Tree {
        Tree::Leaf { word: word.into() }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf { .. })
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            Tree::Internal { label, .. } => Some(label),
            Tree::Leaf { .. } => None,
        }
    }

    /// Leaves in left-to-right order.
    pub fn terminals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_terminals(&mut out);
        out
    }

    fn collect_terminals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Tree::Leaf { word } => out.push(word),
            Tree::Internal { children, .. } => {
                for c in children {
                    c.collect_terminals(out);
                }
            }
        }
    }

    pub fn sentence(&self) -> String {
        self.terminals().join(" ")
    }

    pub fn internal_count(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Internal { children, .. } => {
                1 + children.iter().map(Tree::internal_count).sum::<usize>()
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 1,
            Tree::Internal { children, .. } => {
                1 + children.iter().map(Tree::node_count).sum::<usize>()
            }
        }
    }

    /// Height of the tree: a root whose children are all leaves has height 1.
    pub fn height(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Internal { children, .. } => {
                1 + children.iter().map(Tree::height).max().unwrap_or(0)
            }
        }
    }

    /// Checks the structural invariants: internal nodes are nonempty, labels
    /// and words are representable in the bracketed format.
    pub fn validate(&self) -> Result<()> {
        match self {
            Tree::Leaf { word } => check_symbol(word, "terminal"),
            Tree::Internal { label, children } => {
                check_symbol(label, "label")?;
                if children.is_empty() {
                    return Err(Error::data(format!("empty constituent {label:?}")));
                }
                if self.is_leaf() {
                    unreachable!()
                }
                children.iter().try_for_each(Tree::validate)
            }
        }
    }
}

fn check_symbol(s: &str, what: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::data(format!("empty {what}")));
    }
    if s.contains(['(', ')']) || s.contains(char::is_whitespace) {
        return Err(Error::data(format!(
            "{what} {s:?} contains parentheses or whitespace"
        )));
    }
    Ok(())
}

impl fmt::Display for Tree {
    /// Canonical bracketed form: whitespace-separated tokens with labeled
    /// closings, e.g. `(S (NP the blue bird NP) (VP sings VP) S)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf { word } => f.write_str(word),
            Tree::Internal { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, " {label})")
            }
        }
    }
}

/// Parses one bracketed tree from a line.
///
/// Tokens are whitespace-separated: `(X` opens a constituent labeled `X`,
/// `X)` closes the innermost open constituent (the label must match), a bare
/// `)` closes it without a label check, and anything else is a terminal word.
pub fn parse_bracketed(line: &str) -> Result<Tree> {
    let mut open: Vec<(String, Vec<Tree>, usize)> = Vec::new();
    let mut root: Option<Tree> = None;

    for (tok, col) in tokens(line) {
        if root.is_some() {
            return Err(Error::parse_at(0, col, "trailing tokens after tree"));
        }
        if let Some(label) = tok.strip_prefix('(') {
            if label.is_empty() || label.contains(['(', ')']) {
                return Err(Error::parse_at(0, col, format!("bad opening {tok:?}")));
            }
            open.push((label.to_string(), Vec::new(), col));
        } else if let Some(label) = tok.strip_suffix(')') {
            if label.contains(['(', ')']) {
                return Err(Error::parse_at(0, col, format!("bad closing {tok:?}")));
            }
            let Some((open_label, children, open_col)) = open.pop() else {
                return Err(Error::parse_at(0, col, "unbalanced: closing with no open constituent"));
            };
            if !label.is_empty() && label != open_label {
                return Err(Error::parse_at(
                    0,
                    col,
                    format!("closing {label:?} does not match open {open_label:?}"),
                ));
            }
            if children.is_empty() {
                return Err(Error::parse_at(0, open_col, format!("empty constituent {open_label:?}")));
            }
            let node = Tree::Internal {
                label: open_label,
                children,
            };
            match open.last_mut() {
                Some((_, siblings, _)) => siblings.push(node),
                None => root = Some(node),
            }
        } else {
            match open.last_mut() {
                Some((_, children, _)) => children.push(Tree::leaf(tok)),
                None => {
                    return Err(Error::parse_at(0, col, "terminal outside any constituent"));
                }
            }
        }
    }

    if let Some((label, _, col)) = open.last() {
        return Err(Error::parse_at(
            0,
            *col,
            format!("unbalanced: constituent {label:?} never closed"),
        ));
    }
    root.ok_or_else(|| Error::parse_at(0, 1, "empty input"))
}

/// Whitespace-separated tokens with 1-based starting columns.
fn tokens(line: &str) -> impl Iterator<Item = (&str, usize)> {
    let mut rest = line;
    let mut offset = 0usize;
    std::iter::from_fn(move || {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            return None;
        }
        let end = trimmed
            .find(char::is_whitespace)
            .unwrap_or(trimmed.len());
        let tok = &trimmed[..end];
        let col = offset + 1;
        rest = &trimmed[end..];
        offset += end;
        Some((tok, col))
    })
}
