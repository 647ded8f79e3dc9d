use std::fs;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

use crate::error::{Error, Result};
use crate::evalsuite::{ProposalSet, SgSuite};
use crate::treebank::{parse_bracketed, Tree};

pub(crate) fn trees_to_strings<S: Serializer>(
    trees: &[Tree],
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    ser.collect_seq(trees.iter().map(|t| t.to_string()))
}

pub(crate) fn trees_from_strings<'de, D: Deserializer<'de>>(
    de: D,
) -> std::result::Result<Vec<Tree>, D::Error> {
    let raw: Vec<String> = Vec::deserialize(de)?;
    raw.iter()
        .map(|s| parse_bracketed(s).map_err(|e| D::Error::custom(e.to_string())))
        .collect()
}

/// Proposal file: JSON-lines, one `{id, sentence, trees: [bracketed...]}`
/// object per sentence.
pub fn load_proposals(path: impl AsRef<Path>) -> Result<Vec<ProposalSet>> {
    let text = fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let set: ProposalSet = serde_json::from_str(line)
            .map_err(|e| Error::data(format!("proposal line {}: {e}", i + 1)))?;
        set.validate()?;
        out.push(set);
    }
    Ok(out)
}

pub fn save_proposals(path: impl AsRef<Path>, sets: &[ProposalSet]) -> Result<()> {
    let mut text = String::new();
    for set in sets {
        text.push_str(&serde_json::to_string(set)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Suite file: a JSON array of suites (or a single suite object), each
/// `{suite, items: [{conditions: {name: {trees, region}}, criterion}]}`.
pub fn load_sg_suites(path: impl AsRef<Path>) -> Result<Vec<SgSuite>> {
    let text = fs::read_to_string(&path)?;
    let suites: Vec<SgSuite> = match serde_json::from_str::<Vec<SgSuite>>(&text) {
        Ok(v) => v,
        Err(_) => vec![serde_json::from_str::<SgSuite>(&text)?],
    };
    for s in &suites {
        for item in &s.items {
            for cond in item.conditions.values() {
                if cond.trees.is_empty() {
                    return Err(Error::data(format!(
                        "suite {}: condition without proposal trees",
                        s.suite
                    )));
                }
            }
        }
    }
    Ok(suites)
}
