//! Scaffold-based dataset splitting.
//!
//! A molecule's scaffold is what survives deleting atoms of degree ≤ 1 until
//! a fixpoint: ring systems plus the linkers between them. Molecules sharing
//! a scaffold (by canonical key) always land in the same split, so
//! structurally similar molecules never straddle split boundaries.

use std::collections::HashMap;

use crate::fragment::{canonical_key, EMPTY_KEY};
use crate::smiles::MolGraph;

use super::dataset::{SplitAssignment, TaskDataset};

/// The scaffold subgraph, or `None` for acyclic molecules (everything gets
/// pruned).
pub fn scaffold_graph(g: &MolGraph) -> Option<MolGraph> {
    let n = g.atom_count();
    let mut alive = vec![true; n];
    loop {
        let mut degree = vec![0usize; n];
        for bond in &g.bonds {
            if alive[bond.a] && alive[bond.b] {
                degree[bond.a] += 1;
                degree[bond.b] += 1;
            }
        }
        let mut changed = false;
        for v in 0..n {
            if alive[v] && degree[v] <= 1 {
                alive[v] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let kept: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    if kept.is_empty() {
        return None;
    }
    let (mut sub, _) = g.induced_subgraph(&kept);
    crate::smiles::ring_flags(&mut sub);
    Some(sub)
}

/// Canonical key of the scaffold; acyclic molecules share the EMPTY key.
pub fn scaffold_key(g: &MolGraph) -> String {
    match scaffold_graph(g) {
        Some(s) => canonical_key(&s),
        None => EMPTY_KEY.to_string(),
    }
}

/// Groups records by scaffold key, orders groups by size descending (ties by
/// key ascending, EMPTY-scaffold group always last), then fills train, valid,
/// and test greedily against the fraction quotas. Whole groups are assigned,
/// so no scaffold key ever appears in two splits.
pub fn scaffold_split(ds: &TaskDataset, fractions: (f64, f64, f64)) -> SplitAssignment {
    let (ft, fv, fe) = fractions;
    assert!(
        (ft + fv + fe - 1.0).abs() <= 1e-9,
        "fractions must sum to 1, got {fractions:?}"
    );
    assert!(ft >= 0.0 && fv >= 0.0 && fe >= 0.0);

    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, rec) in ds.records.iter().enumerate() {
        groups.entry(scaffold_key(&rec.graph)).or_default().push(i);
    }
    let mut ordered: Vec<(String, Vec<usize>)> = groups.into_iter().collect();
    ordered.sort_by(|(ka, va), (kb, vb)| {
        let empty_a = ka == EMPTY_KEY;
        let empty_b = kb == EMPTY_KEY;
        empty_a
            .cmp(&empty_b) // EMPTY last
            .then(vb.len().cmp(&va.len())) // size descending
            .then(ka.cmp(kb)) // key ascending
    });

    let n = ds.records.len() as f64;
    let train_quota = (ft * n).round() as usize;
    let valid_quota = (fv * n).round() as usize;
    let mut split = SplitAssignment::default();
    for (_, members) in ordered {
        let bucket = if split.train.len() < train_quota {
            &mut split.train
        } else if split.valid.len() < valid_quota {
            &mut split.valid
        } else {
            &mut split.test
        };
        bucket.extend(members);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    split
}
