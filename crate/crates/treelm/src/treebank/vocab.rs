use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::treebank::actions::{close_symbol, open_symbol};
use crate::treebank::Tree;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const UNK: &str = "<unk>";

/// Fixed ids of the special symbols; every vocabulary places them first.
pub mod vocab_ids {
    pub const PAD: u32 = 0;
    pub const BOS: u32 = 1;
    pub const UNK: u32 = 2;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolClass {
    Special,
    /// Opening nonterminal `(X`, one id per label.
    Open,
    /// Closing nonterminal `X)`, one id per label shared by both duplicated
    /// copies.
    Close,
    Terminal,
}

impl fmt::Display for SymbolClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymbolClass::Special => "special",
            SymbolClass::Open => "open",
            SymbolClass::Close => "close",
            SymbolClass::Terminal => "terminal",
        })
    }
}

impl std::str::FromStr for SymbolClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "special" => Ok(SymbolClass::Special),
            "open" => Ok(SymbolClass::Open),
            "close" => Ok(SymbolClass::Close),
            "terminal" => Ok(SymbolClass::Terminal),
            other => Err(Error::data(format!("unknown symbol class {other:?}"))),
        }
    }
}

/// Bidirectional symbol/id map with dense ids, partitioned by class.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    classes: Vec<SymbolClass>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn bos_id(&self) -> u32 {
        1
    }

    pub fn unk_id(&self) -> u32 {
        2
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    /// Terminal lookup with the unknown-word fallback.
    pub fn terminal_id(&self, word: &str) -> u32 {
        match self.index.get(word) {
            Some(&id) if self.classes[id as usize] == SymbolClass::Terminal => id,
            _ => self.unk_id(),
        }
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn class(&self, id: u32) -> SymbolClass {
        self.classes[id as usize]
    }

    pub fn count_of(&self, class: SymbolClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn ids_of(&self, class: SymbolClass) -> Vec<u32> {
        (0..self.len() as u32)
            .filter(|&id| self.classes[id as usize] == class)
            .collect()
    }

    pub fn open_id(&self, label: &str) -> Result<u32> {
        self.id(&open_symbol(label))
            .ok_or_else(|| Error::data(format!("unknown nonterminal label {label:?}")))
    }

    pub fn close_id(&self, label: &str) -> Result<u32> {
        self.id(&close_symbol(label))
            .ok_or_else(|| Error::data(format!("unknown nonterminal label {label:?}")))
    }

    /// Line-oriented `symbol<TAB>id<TAB>class` serialization.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for (id, (sym, class)) in self.symbols.iter().zip(&self.classes).enumerate() {
            out.push_str(&format!("{sym}\t{id}\t{class}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let text = fs::read_to_string(&path)?;
        let mut rows: Vec<(String, u32, SymbolClass)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(sym), Some(id), Some(class)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::data(format!(
                    "vocabulary line {} is not symbol<TAB>id<TAB>class",
                    lineno + 1
                )));
            };
            let id: u32 = id
                .parse()
                .map_err(|_| Error::data(format!("bad id on vocabulary line {}", lineno + 1)))?;
            rows.push((sym.to_string(), id, class.parse()?));
        }
        rows.sort_by_key(|(_, id, _)| *id);
        for (want, (_, id, _)) in rows.iter().enumerate() {
            if *id as usize != want {
                return Err(Error::data(format!("vocabulary ids are not dense at {id}")));
            }
        }
        let symbols: Vec<String> = rows.iter().map(|(s, _, _)| s.clone()).collect();
        let classes: Vec<SymbolClass> = rows.iter().map(|(_, _, c)| *c).collect();
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            symbols,
            classes,
            index,
        })
    }
}

/// Builds a vocabulary over a tree corpus.
///
/// Terminals seen fewer than `min_count` times are dropped (they will map to
/// the unknown id at encode time); nonterminal labels are always kept. Ids
/// are assigned deterministically: specials, then openings and closings by
/// sorted label, then terminals by descending count and lexicographic order.
pub fn build_vocab<'a>(corpus: impl IntoIterator<Item = &'a Tree>, min_count: usize) -> Result<Vocabulary> {
    let mut term_counts: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut seen_labels: HashMap<String, ()> = HashMap::new();
    let mut nonempty = false;

    fn visit(
        t: &Tree,
        term_counts: &mut HashMap<String, usize>,
        labels: &mut Vec<String>,
        seen: &mut HashMap<String, ()>,
    ) {
        match t {
            Tree::Leaf { word } => *term_counts.entry(word.clone()).or_insert(0) += 1,
            Tree::Internal { label, children } => {
                if seen.insert(label.clone(), ()).is_none() {
                    labels.push(label.clone());
                }
                for c in children {
                    visit(c, term_counts, labels, seen);
                }
            }
        }
    }

    for tree in corpus {
        nonempty = true;
        visit(tree, &mut term_counts, &mut labels, &mut seen_labels);
    }
    if !nonempty {
        return Err(Error::data("empty corpus"));
    }

    labels.sort();

    let mut terms: Vec<(String, usize)> = term_counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut symbols = vec![PAD.to_string(), BOS.to_string(), UNK.to_string()];
    let mut classes = vec![SymbolClass::Special; 3];
    for l in &labels {
        symbols.push(open_symbol(l));
        classes.push(SymbolClass::Open);
    }
    for l in &labels {
        symbols.push(close_symbol(l));
        classes.push(SymbolClass::Close);
    }
    for (w, _) in &terms {
        symbols.push(w.clone());
        classes.push(SymbolClass::Terminal);
    }
    let index = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        symbols,
        classes,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;

    const FIG_TREE: &str = "(S (NP the blue bird NP) (VP sings VP) S)";

    #[test]
    fn counts_per_class() {
        let tree = parse_bracketed(FIG_TREE).unwrap();
        let v = build_vocab([&tree], 1).unwrap();
        assert_eq!(v.count_of(SymbolClass::Terminal), 4);
        assert_eq!(v.count_of(SymbolClass::Open), 3);
        assert_eq!(v.count_of(SymbolClass::Close), 3);
        assert_eq!(v.count_of(SymbolClass::Special), 3);
        assert_eq!(v.len(), 13);
    }

    #[test]
    fn high_min_count_maps_everything_to_unk() {
        let tree = parse_bracketed(FIG_TREE).unwrap();
        let v = build_vocab([&tree], 1_000_000_000).unwrap();
        assert_eq!(v.count_of(SymbolClass::Terminal), 0);
        for w in ["the", "blue", "bird", "sings"] {
            assert_eq!(v.terminal_id(w), v.unk_id());
        }
        // labels survive regardless of count
        assert!(v.open_id("NP").is_ok());
        assert!(v.close_id("VP").is_ok());
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(build_vocab(std::iter::empty::<&Tree>(), 1).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let tree = parse_bracketed(FIG_TREE).unwrap();
        let v = build_vocab([&tree], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded, v);
    }

    #[test]
    fn open_and_close_share_label_but_not_id() {
        let tree = parse_bracketed(FIG_TREE).unwrap();
        let v = build_vocab([&tree], 1).unwrap();
        let open = v.open_id("NP").unwrap();
        let close = v.close_id("NP").unwrap();
        assert_ne!(open, close);
        assert_eq!(v.symbol(open), "(NP");
        assert_eq!(v.symbol(close), "NP)");
    }
}
