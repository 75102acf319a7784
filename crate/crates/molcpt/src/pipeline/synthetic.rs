//! Synthetic planted-signal benchmark data.
//!
//! Every molecule is `decoration + lead ring + linker + partner ring`; the
//! binary label is whether the lead ring is benzene. Negatives use other
//! rings (including pyridine, so "contains any aromatic ring" does not leak
//! the label). Scaffold = lead + linker + partner, so each (lead, linker,
//! partner) combination forms one scaffold group; group sizes strictly
//! alternate between the classes in decreasing order, which keeps the greedy
//! scaffold split from handing any split a single class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Attachable lead ring of every positive molecule.
const POSITIVE_LEAD: &str = "c1ccccc1";
/// Lead rings of negative molecules. Pyridine and the eight-membered
/// aromatic carbocycle keep atom-count summaries from separating the
/// classes: aromatic-carbon counts run 0, 5, and 8 among negatives but are
/// pinned at 6 for the positive lead, so no linear function of atom counts
/// matches the benzene label and the motif itself has to be recognized.
const NEGATIVE_LEADS: [&str; 5] = [
    "C1CCCCC1",
    "C1CCCC1",
    "c1ccncc1",
    "C1CCOCC1",
    "c1ccccccc1",
];
const LINKERS: [&str; 5] = ["C", "CC", "CCC", "COC", "CNC"];
/// Partner rings, shared by both classes (pyridine included, so aromatic
/// nitrogen appears on both sides of the label too).
const PARTNERS: [&str; 6] = [
    "C1CCCCC1",
    "C1CCCC1",
    "C1CCOC1",
    "C1CCNC1",
    "C1CCCCCC1",
    "c1ccncc1",
];
/// Rings reserved for the smallest scaffold groups — the ones the greedy
/// scaffold split pushes into validation and test. Ranking molecules built
/// from rings never seen with a label forces genuine generalization: motif
/// presence still transfers, while memorized whole-molecule features do not.
/// Thiolane sits in both pools so sulfur appears on both sides of the label.
const NOVEL_PARTNERS: [&str; 3] = ["C1CCSC1", "C1CCNCC1", "C1COCCO1"];
const NOVEL_LEADS: [&str; 3] = ["C1CCCCCCC1", "C1CCSC1", "C1COCCO1"];
/// Groups of at most this many molecules draw from the novel pools.
const NOVEL_SIZE_MAX: usize = 9;

/// Pendant decorations; pruned away by scaffold extraction. Each is empty or
/// at least two atoms, so its bond to the ring joins two degree-2+ atoms and
/// fragmentation detaches it cleanly, leaving the bare lead ring as a motif.
fn decorations() -> Vec<String> {
    let heads = ["", "O", "N", "Cl"];
    let chains = ["C", "CC", "CCC", "CCCC", "CCCCC"];
    let mut out = vec![String::new()];
    for h in heads {
        for c in chains {
            let atoms = usize::from(!h.is_empty()) + c.len();
            if atoms >= 2 {
                out.push(format!("{h}{c}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    /// Total molecule count, split evenly between the classes.
    pub molecules: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            molecules: 200,
            seed: 0,
        }
    }
}

/// Labeled SMILES corpus; exactly `molecules/2` positives.
pub fn planted_corpus(spec: &PlantedSpec) -> Vec<(String, bool)> {
    let per_class = spec.molecules / 2;
    let decorations = decorations();

    let mut rows = Vec::with_capacity(spec.molecules);
    let mut pos_left = per_class;
    let mut neg_left = spec.molecules - per_class;
    let mut pos_group = 0usize;
    let mut neg_group = 0usize;
    let mut size = decorations.len(); // strictly decreasing group sizes
    let mut positive_turn = true;
    while pos_left > 0 || neg_left > 0 {
        let take_positive = if pos_left == 0 {
            false
        } else if neg_left == 0 {
            true
        } else {
            positive_turn
        };
        if take_positive {
            let n = size.min(pos_left).max(1);
            let g = pos_group;
            let linker = LINKERS[g % LINKERS.len()];
            let partner = if n <= NOVEL_SIZE_MAX {
                NOVEL_PARTNERS[g % NOVEL_PARTNERS.len()]
            } else {
                PARTNERS[g % PARTNERS.len()]
            };
            for m in 0..n {
                let deco = &decorations[m % decorations.len()];
                rows.push((format!("{deco}{POSITIVE_LEAD}{linker}{partner}"), true));
            }
            pos_left -= n;
            pos_group += 1;
        } else {
            let n = size.min(neg_left).max(1);
            let g = neg_group;
            let lead = if n <= NOVEL_SIZE_MAX {
                NOVEL_LEADS[g % NOVEL_LEADS.len()]
            } else {
                NEGATIVE_LEADS[g % NEGATIVE_LEADS.len()]
            };
            let linker = LINKERS[g % LINKERS.len()];
            let partner = PARTNERS[g % PARTNERS.len()];
            for m in 0..n {
                let deco = &decorations[m % decorations.len()];
                rows.push((format!("{deco}{lead}{linker}{partner}"), false));
            }
            neg_left -= n;
            neg_group += 1;
        }
        size = size.saturating_sub(1).max(1);
        positive_turn = !positive_turn;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rows.shuffle(&mut rng);
    rows
}

/// The corpus rendered as a loadable CSV with task column `planted`.
pub fn planted_csv(spec: &PlantedSpec) -> String {
    let mut out = String::from("smiles,planted\n");
    for (smiles, label) in planted_corpus(spec) {
        out.push_str(&format!("{smiles},{}\n", u8::from(label)));
    }
    out
}
