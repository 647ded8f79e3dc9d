use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::treebank::{parse_bracketed, Tree};

/// Reads a tree file: UTF-8, one bracketed tree per line. Blank lines are
/// skipped. Parse errors carry the 1-based line number.
pub fn read_trees(path: impl AsRef<Path>) -> Result<Vec<Tree>> {
    let text = fs::read_to_string(&path)?;
    let mut trees = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        trees.push(parse_bracketed(line).map_err(|e| e.with_line(i + 1))?);
    }
    Ok(trees)
}

/// Reads a document file: trees grouped into blank-line-separated blocks.
pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Vec<Tree>>> {
    let text = fs::read_to_string(&path)?;
    let mut docs = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(parse_bracketed(line).map_err(|e| e.with_line(i + 1))?);
        }
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

pub fn write_trees(path: impl AsRef<Path>, trees: &[Tree]) -> Result<()> {
    let mut out = String::new();
    for t in trees {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
