//! Motif fragmentation and the frequency-filtered motif vocabulary.

mod brics;
mod canon;

pub use brics::{compatible, environments, COMPATIBLE_PAIRS};
pub use canon::canonical_key;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::smiles::{parse_smiles, to_smiles, BondOrder, MolGraph};

/// Key string reserved for the empty motif at vocabulary index 0.
pub const EMPTY_KEY: &str = "EMPTY";

/// Which bonds count as cleavable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CleavageRules {
    /// Every acyclic single bond whose endpoints both have degree ≥ 2.
    Simple,
    /// Acyclic single bonds whose endpoints match a compatible pair of the
    /// sixteen documented chemical environments (see [`environments`]).
    Brics16,
}

impl fmt::Display for CleavageRules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CleavageRules::Simple => write!(f, "simple"),
            CleavageRules::Brics16 => write!(f, "brics16"),
        }
    }
}

impl FromStr for CleavageRules {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(CleavageRules::Simple),
            "brics16" => Ok(CleavageRules::Brics16),
            other => Err(format!("unknown rule set {other:?} (use simple or brics16)")),
        }
    }
}

/// A connected fragment cut out of a parent molecule.
#[derive(Debug, Clone)]
pub struct Motif {
    /// Induced subgraph with the cut bonds removed; attributes inherited.
    pub subgraph: MolGraph,
    /// Canonical key; identical for isomorphic fragments.
    pub key: String,
    /// Original atom indices in the parent molecule, ascending.
    pub parent_atoms: Vec<usize>,
}

/// Bond indices that the rule set would cut. Ring flags must be up to date
/// (the parser always leaves them so).
pub fn find_cleavage_bonds(g: &MolGraph, rules: CleavageRules) -> Vec<usize> {
    let mut out = Vec::new();
    for (bi, bond) in g.bonds.iter().enumerate() {
        if bond.in_ring || bond.order != BondOrder::Single {
            continue;
        }
        let ok = match rules {
            CleavageRules::Simple => g.degree(bond.a) >= 2 && g.degree(bond.b) >= 2,
            CleavageRules::Brics16 => {
                compatible(environments(g, bond.a), environments(g, bond.b))
            }
        };
        if ok {
            out.push(bi);
        }
    }
    out
}

/// Cuts all cleavable bonds; each connected component of the remainder is one
/// motif. Motifs partition the atom set and are ordered by smallest parent
/// atom index.
pub fn fragment_molecule(g: &MolGraph, rules: CleavageRules) -> Vec<Motif> {
    let cut = find_cleavage_bonds(g, rules);
    let mut skip = vec![false; g.bond_count()];
    for bi in cut {
        skip[bi] = true;
    }
    g.components_without(&skip)
        .into_iter()
        .map(|atoms| {
            let (mut subgraph, parent_atoms) = g.induced_subgraph(&atoms);
            // the induced subgraph keeps every surviving bond, but bonds cut
            // away can turn ring bonds into bridges only if rings were cut,
            // which neither rule set does — still, recompute for safety
            crate::smiles::ring_flags(&mut subgraph);
            let key = canonical_key(&subgraph);
            Motif {
                subgraph,
                key,
                parent_atoms,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct VocabEntry {
    pub key: String,
    /// Number of distinct corpus molecules containing the motif.
    pub frequency: usize,
    /// One concrete fragment graph for this key; `None` only for EMPTY.
    pub representative: Option<MolGraph>,
}

/// Ordered motif vocabulary; index 0 is always the empty motif.
#[derive(Debug, Clone)]
pub struct MotifVocabulary {
    entries: Vec<VocabEntry>,
    by_key: HashMap<String, usize>,
    pub threshold_t: usize,
    pub ruleset: CleavageRules,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("vocabulary line {line}: representative does not reproduce its key")]
    KeyMismatch { line: usize },
}

impl MotifVocabulary {
    /// Builds the vocabulary for a corpus: fragment every molecule, count for
    /// each key the number of distinct molecules containing it, drop keys
    /// below the threshold, sort by descending frequency then key, and put
    /// the empty motif first.
    pub fn build(corpus: &[MolGraph], rules: CleavageRules, t: usize) -> MotifVocabulary {
        let mut frequency: HashMap<String, usize> = HashMap::new();
        let mut representative: HashMap<String, MolGraph> = HashMap::new();
        for mol in corpus {
            let mut seen = HashSet::new();
            for motif in fragment_molecule(mol, rules) {
                if seen.insert(motif.key.clone()) {
                    *frequency.entry(motif.key.clone()).or_insert(0) += 1;
                    representative
                        .entry(motif.key)
                        .or_insert(motif.subgraph);
                }
            }
        }
        let mut kept: Vec<(String, usize)> = frequency
            .into_iter()
            .filter(|&(_, f)| f >= t)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut entries = vec![VocabEntry {
            key: EMPTY_KEY.to_string(),
            frequency: 0,
            representative: None,
        }];
        for (key, freq) in kept {
            let rep = representative.remove(&key);
            entries.push(VocabEntry {
                key,
                frequency: freq,
                representative: rep,
            });
        }
        Self::from_entries(entries, rules, t)
    }

    fn from_entries(
        entries: Vec<VocabEntry>,
        ruleset: CleavageRules,
        threshold_t: usize,
    ) -> MotifVocabulary {
        let by_key = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.clone(), i))
            .collect();
        MotifVocabulary {
            entries,
            by_key,
            threshold_t,
            ruleset,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false // index 0 always exists
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &VocabEntry {
        &self.entries[index]
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.by_key.get(key).copied()
    }

    /// One line per entry: `index<TAB>key<TAB>frequency<TAB>representative_smiles`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let smiles = e
                .representative
                .as_ref()
                .map(to_smiles)
                .unwrap_or_default();
            out.push_str(&format!("{i}\t{}\t{}\t{smiles}\n", e.key, e.frequency));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(
        text: &str,
        ruleset: CleavageRules,
        threshold_t: usize,
    ) -> Result<MotifVocabulary, VocabError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(VocabError::Format {
                    line: lineno + 1,
                    msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let index: usize = fields[0].parse().map_err(|_| VocabError::Format {
                line: lineno + 1,
                msg: "bad index".into(),
            })?;
            if index != entries.len() {
                return Err(VocabError::Format {
                    line: lineno + 1,
                    msg: format!("index {index} out of order"),
                });
            }
            let key = fields[1].to_string();
            let frequency: usize = fields[2].parse().map_err(|_| VocabError::Format {
                line: lineno + 1,
                msg: "bad frequency".into(),
            })?;
            if index == 0 {
                if key != EMPTY_KEY || !fields[3].is_empty() {
                    return Err(VocabError::Format {
                        line: lineno + 1,
                        msg: "entry 0 must be the empty motif".into(),
                    });
                }
                entries.push(VocabEntry {
                    key,
                    frequency,
                    representative: None,
                });
                continue;
            }
            let graph = parse_smiles(fields[3]).map_err(|e| VocabError::Format {
                line: lineno + 1,
                msg: format!("bad representative: {e}"),
            })?;
            if canonical_key(&graph) != key {
                return Err(VocabError::KeyMismatch { line: lineno + 1 });
            }
            entries.push(VocabEntry {
                key,
                frequency,
                representative: Some(graph),
            });
        }
        if entries.is_empty() {
            return Err(VocabError::Format {
                line: 1,
                msg: "vocabulary file has no entries".into(),
            });
        }
        Ok(Self::from_entries(entries, ruleset, threshold_t))
    }

    pub fn load(
        path: &Path,
        ruleset: CleavageRules,
        threshold_t: usize,
    ) -> Result<MotifVocabulary, VocabError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, ruleset, threshold_t)
    }
}

/// Vocabulary indices of the motifs present in `g`, deduplicated and
/// ascending. A molecule with no frequent motif maps to exactly `[0]`, the
/// empty motif.
pub fn motifs_of(g: &MolGraph, vocab: &MotifVocabulary, rules: CleavageRules) -> Vec<usize> {
    let mut found: Vec<usize> = fragment_molecule(g, rules)
        .into_iter()
        .filter_map(|m| vocab.index_of(&m.key))
        .collect();
    found.sort_unstable();
    found.dedup();
    if found.is_empty() {
        vec![0]
    } else {
        found
    }
}
