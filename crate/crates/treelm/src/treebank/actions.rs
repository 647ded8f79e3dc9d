use crate::error::{Error, Result};
use crate::treebank::Tree;

/// Kinds of linearized actions.
///
/// Raw sequences use `Open`/`Terminal`/`Close`. Duplicated sequences replace
/// each `Close` with a `CloseCompose` (first copy, drives the composition
/// step) followed by a `CloseStack` (second copy, pushes the composed
/// representation forward). Both copies share one vocabulary symbol; the
/// kind is positional metadata only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Open,
    Terminal,
    Close,
    CloseCompose,
    CloseStack,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    /// Vocabulary symbol: `(X` for openings, `X)` for closings, the word
    /// itself for terminals.
    pub symbol: String,
    pub kind: ActionKind,
    /// Tree depth: ancestor count of the node the action belongs to. An
    /// opening and its closings share the depth of their node; a terminal
    /// carries its leaf's ancestor count.
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSequence {
    actions: Vec<Action>,
    duplicated: bool,
}

pub fn open_symbol(label: &str) -> String {
    format!("({label}")
}

pub fn close_symbol(label: &str) -> String {
    format!("{label})")
}

/// Top-down, left-to-right linearization of a tree into a raw action
/// sequence: an opening for each node, its children in order, then one
/// closing.
pub fn linearize(tree: &Tree) -> ActionSequence {
    let mut actions = Vec::new();
    walk(tree, 0, &mut actions);
    ActionSequence {
        actions,
        duplicated: false,
    }
}

fn walk(tree: &Tree, depth: u32, out: &mut Vec<Action>) {
    match tree {
        Tree::Leaf { word } => out.push(Action {
            symbol: word.clone(),
            kind: ActionKind::Terminal,
            depth,
        }),
        Tree::Internal { label, children } => {
            out.push(Action {
                symbol: open_symbol(label),
                kind: ActionKind::Open,
                depth,
            });
            for c in children {
                walk(c, depth + 1, out);
            }
            out.push(Action {
                symbol: close_symbol(label),
                kind: ActionKind::Close,
                depth,
            });
        }
    }
}

/// The terminal-only view of a tree: just its words, with leaf depths kept
/// for completeness.
pub fn terminals_sequence(tree: &Tree) -> ActionSequence {
    let raw = linearize(tree);
    ActionSequence {
        actions: raw
            .actions
            .into_iter()
            .filter(|a| a.kind == ActionKind::Terminal)
            .collect(),
        duplicated: false,
    }
}

impl ActionSequence {
    pub fn from_parts(actions: Vec<Action>, duplicated: bool) -> ActionSequence {
        ActionSequence {
            actions,
            duplicated,
        }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_duplicated(&self) -> bool {
        self.duplicated
    }

    pub fn kinds(&self) -> Vec<ActionKind> {
        self.actions.iter().map(|a| a.kind).collect()
    }

    pub fn symbols(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.symbol.as_str()).collect()
    }

    pub fn depths(&self) -> Vec<u32> {
        self.actions.iter().map(|a| a.depth).collect()
    }

    /// Replaces every closing with two copies of the same symbol: a compose
    /// step followed by a stack step. The result has length `T + #closings`.
    pub fn duplicate_closing(&self) -> Result<ActionSequence> {
        if self.duplicated {
            return Err(Error::data("sequence already has duplicated closings"));
        }
        let mut actions = Vec::with_capacity(self.actions.len() * 2);
        for a in &self.actions {
            match a.kind {
                ActionKind::Close => {
                    actions.push(Action {
                        kind: ActionKind::CloseCompose,
                        ..a.clone()
                    });
                    actions.push(Action {
                        kind: ActionKind::CloseStack,
                        ..a.clone()
                    });
                }
                ActionKind::CloseCompose | ActionKind::CloseStack => {
                    return Err(Error::data("sequence already has duplicated closings"));
                }
                _ => actions.push(a.clone()),
            }
        }
        Ok(ActionSequence {
            actions,
            duplicated: true,
        })
    }

    /// Concatenates sequences (document modeling): no separator tokens.
    pub fn concat(parts: &[ActionSequence]) -> Result<ActionSequence> {
        let mut actions = Vec::new();
        let mut duplicated = None;
        for p in parts {
            match duplicated {
                None => duplicated = Some(p.duplicated),
                Some(d) if d != p.duplicated => {
                    return Err(Error::data("cannot concatenate raw and duplicated sequences"))
                }
                _ => {}
            }
            actions.extend(p.actions.iter().cloned());
        }
        Ok(ActionSequence {
            actions,
            duplicated: duplicated.unwrap_or(false),
        })
    }

    /// Rebuilds the tree from a sequence covering exactly one tree. Works on
    /// raw and duplicated sequences (the stack copies are skipped).
    pub fn reconstruct(&self) -> Result<Tree> {
        let mut open: Vec<(String, Vec<Tree>)> = Vec::new();
        let mut root = None;
        for (i, a) in self.actions.iter().enumerate() {
            // the second closing copy has no structural effect, even after
            // the root constituent closes
            if a.kind == ActionKind::CloseStack {
                continue;
            }
            if root.is_some() {
                return Err(Error::data(format!("trailing action at index {i}")));
            }
            match a.kind {
                ActionKind::Open => {
                    open.push((a.symbol[1..].to_string(), Vec::new()));
                }
                ActionKind::Terminal => match open.last_mut() {
                    Some((_, children)) => children.push(Tree::leaf(a.symbol.clone())),
                    None => return Err(Error::data(format!("terminal outside tree at index {i}"))),
                },
                ActionKind::Close | ActionKind::CloseCompose => {
                    let Some((label, children)) = open.pop() else {
                        return Err(Error::data(format!("unbalanced closing at index {i}")));
                    };
                    if children.is_empty() {
                        return Err(Error::data(format!("empty constituent at index {i}")));
                    }
                    let node = Tree::Internal { label, children };
                    match open.last_mut() {
                        Some((_, siblings)) => siblings.push(node),
                        None => root = Some(node),
                    }
                }
                ActionKind::CloseStack => {}
            }
        }
        if !open.is_empty() {
            return Err(Error::data("unbalanced sequence: open constituents remain"));
        }
        root.ok_or_else(|| Error::data("empty action sequence"))
    }

    /// Balance check: closings never exceed openings in any prefix, and the
    /// totals match. For duplicated sequences also checks that each stack
    /// copy immediately follows a compose copy with the same symbol.
    pub fn check_balanced(&self) -> Result<()> {
        let mut opens = 0i64;
        let mut closes = 0i64;
        let mut prev: Option<&Action> = None;
        for (i, a) in self.actions.iter().enumerate() {
            match a.kind {
                ActionKind::Open => opens += 1,
                ActionKind::Close | ActionKind::CloseCompose => {
                    closes += 1;
                    if closes > opens {
                        return Err(Error::data(format!(
                            "unbalanced: closing at index {i} exceeds openings"
                        )));
                    }
                }
                ActionKind::CloseStack => match prev {
                    Some(p) if p.kind == ActionKind::CloseCompose && p.symbol == a.symbol => {}
                    _ => {
                        return Err(Error::data(format!(
                            "stack copy at index {i} does not follow its compose copy"
                        )))
                    }
                },
                ActionKind::Terminal => {}
            }
            prev = Some(a);
        }
        if opens != closes {
            return Err(Error::data(format!(
                "unbalanced: {opens} openings vs {closes} closings"
            )));
        }
        Ok(())
    }
}
