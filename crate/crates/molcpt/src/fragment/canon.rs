//! Canonical string keys for fragments.
//!
//! Two fragments get the same key exactly when they are isomorphic as
//! attributed graphs over (element, aromatic flag, formal charge, bond
//! orders). Hydrogen counts are deliberately ignored: cutting a bond removes
//! a neighbor but keeps the stored H count, and a phenyl cut out of a larger
//! molecule should unify with benzene.
//!
//! Algorithm: Morgan-style color refinement seeded by local attributes, then
//! individualization of the first smallest non-singleton color class when
//! refinement stalls. Each discrete coloring yields a total atom order and a
//! full serialization of the graph; the lexicographically smallest
//! serialization over all branches is the key. Equal keys therefore imply
//! isomorphism by construction, and trying every member of the split class
//! makes the smallest serialization invariant under relabeling.

use crate::smiles::{BondOrder, MolGraph};

fn order_code(o: BondOrder) -> u8 {
    match o {
        BondOrder::Single => b's',
        BondOrder::Double => b'd',
        BondOrder::Triple => b't',
        BondOrder::Aromatic => b'a',
    }
}

/// Initial color: rank of (element, aromatic, charge, sorted incident orders).
fn seed_colors(g: &MolGraph) -> Vec<usize> {
    let mut sigs: Vec<(u8, bool, i8, Vec<u8>)> = (0..g.atom_count())
        .map(|v| {
            let a = &g.atoms[v];
            let mut orders: Vec<u8> = g.adjacency[v]
                .iter()
                .map(|&(_, bi)| order_code(g.bonds[bi].order))
                .collect();
            orders.sort_unstable();
            (a.element, a.aromatic, a.formal_charge, orders)
        })
        .collect();
    rank(&mut sigs)
}

/// Ranks signatures: equal signatures share a rank, ranks follow sort order.
fn rank<T: Ord + Clone>(sigs: &mut [T]) -> Vec<usize> {
    let original: Vec<T> = sigs.to_vec();
    let mut sorted: Vec<&T> = original.iter().collect();
    sorted.sort();
    sorted.dedup();
    original
        .iter()
        .map(|s| sorted.binary_search(&s).unwrap())
        .collect()
}

/// One refinement sweep; new colors always refine the old partition.
fn refine(g: &MolGraph, mut colors: Vec<usize>) -> Vec<usize> {
    loop {
        let classes = colors.iter().collect::<std::collections::HashSet<_>>().len();
        let mut sigs: Vec<(usize, Vec<(u8, usize)>)> = (0..g.atom_count())
            .map(|v| {
                let mut nbrs: Vec<(u8, usize)> = g.adjacency[v]
                    .iter()
                    .map(|&(u, bi)| (order_code(g.bonds[bi].order), colors[u]))
                    .collect();
                nbrs.sort_unstable();
                (colors[v], nbrs)
            })
            .collect();
        colors = rank(&mut sigs);
        let new_classes = colors.iter().collect::<std::collections::HashSet<_>>().len();
        if new_classes == classes {
            return colors;
        }
    }
}

fn discrete(colors: &[usize]) -> bool {
    let mut seen = vec![false; colors.len()];
    for &c in colors {
        if seen[c] {
            return false;
        }
        seen[c] = true;
    }
    true
}

/// Serializes the graph under the total order given by a discrete coloring.
fn serialize(g: &MolGraph, colors: &[usize]) -> String {
    let n = g.atom_count();
    let mut position = vec![0usize; n]; // atom -> slot
    for (atom, &c) in colors.iter().enumerate() {
        position[atom] = c;
    }
    let mut atoms = vec![String::new(); n];
    for v in 0..n {
        let a = &g.atoms[v];
        atoms[position[v]] = format!(
            "{}{}{}",
            a.element,
            if a.aromatic { "a" } else { "A" },
            a.formal_charge
        );
    }
    let mut edges: Vec<(usize, usize, u8)> = g
        .bonds
        .iter()
        .map(|b| {
            let (x, y) = (position[b.a], position[b.b]);
            (x.min(y), x.max(y), order_code(b.order))
        })
        .collect();
    edges.sort_unstable();
    let edge_text: Vec<String> = edges
        .iter()
        .map(|&(x, y, o)| format!("{}{}{}", x, o as char, y))
        .collect();
    format!("n{}|{}|{}", n, atoms.join(","), edge_text.join(","))
}

/// Splits atom `v` away from its color class, then re-ranks.
fn individualize(g: &MolGraph, colors: &[usize], v: usize) -> Vec<usize> {
    let mut sigs: Vec<(usize, u8)> = colors.iter().map(|&c| (c, 1u8)).collect();
    sigs[v].1 = 0;
    refine(g, rank(&mut sigs))
}

fn search(g: &MolGraph, colors: Vec<usize>, best: &mut Option<String>) {
    if discrete(&colors) {
        let s = serialize(g, &colors);
        if best.as_ref().map_or(true, |b| s < *b) {
            *best = Some(s);
        }
        return;
    }
    // First smallest non-singleton class.
    let mut counts = vec![0usize; colors.len()];
    for &c in &colors {
        counts[c] += 1;
    }
    let target = counts.iter().position(|&c| c > 1).unwrap();
    for v in 0..colors.len() {
        if colors[v] == target {
            search(g, individualize(g, &colors, v), best);
        }
    }
}

/// Canonical key of a connected fragment.
pub fn canonical_key(g: &MolGraph) -> String {
    assert!(
        g.atom_count() > 0,
        "canonical_key needs at least one atom; the empty motif has the fixed key EMPTY"
    );
    let colors = refine(g, seed_colors(g));
    let mut best = None;
    search(g, colors, &mut best);
    best.unwrap()
}
