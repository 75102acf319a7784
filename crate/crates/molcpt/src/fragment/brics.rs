//! The BRICS16 cleavage rule set.
//!
//! Sixteen local chemical environments, L1..L16, are assigned to bond
//! endpoints from (element, aromaticity, ring membership, neighbor pattern)
//! alone, and an acyclic single bond is cleavable when its endpoint
//! environments form one of the compatible pairs below. The table follows
//! the retrosynthetic spirit of the published BRICS environments but is
//! deliberately local: every predicate reads only the atom, its bonds, and
//! its immediate neighbors.
//!
//! Environments
//! - L1  acyl carbon: acyclic non-aromatic C, degree ≥ 2, with a double bond to O.
//! - L2  aryl amine nitrogen: acyclic non-aromatic N, degree ≥ 2, only single
//!        bonds, at least one aromatic neighbor.
//! - L3  ether/ester oxygen: acyclic non-aromatic O, degree 2, only single bonds.
//! - L4  saturated carbon: non-aromatic C, degree ≥ 2, only single bonds
//!        (ring membership allowed).
//! - L5  aliphatic amine nitrogen: acyclic non-aromatic N, degree ≥ 2, only
//!        single bonds, no aromatic neighbor, neighbors restricted to C and S.
//! - L6  alpha carbon: acyclic non-aromatic C, degree ≥ 2, adjacent to an
//!        acyl carbon (an L1 atom).
//! - L7  alkene carbon: non-aromatic C with a double bond to another C.
//! - L8  chain carbon: acyclic non-aromatic C, degree ≥ 2, only single bonds.
//! - L9  aromatic ring nitrogen: aromatic N in a ring, both ring neighbors
//!        aromatic.
//! - L10 lactam nitrogen: non-aromatic ring N whose ring neighborhood contains
//!        a carbonyl carbon.
//! - L11 thioether sulfur: acyclic non-aromatic S, degree 2, only single bonds.
//! - L12 sulfonyl sulfur: S with degree 4 and two double bonds to O.
//! - L13 hetero-ring carbon: non-aromatic ring C with an in-ring N, O or S
//!        neighbor.
//! - L14 hetero-aromatic carbon: aromatic ring C with an aromatic N, O or S
//!        neighbor.
//! - L15 carbocyclic carbon: non-aromatic ring C with an in-ring non-aromatic
//!        C neighbor.
//! - L16 aryl carbon: aromatic ring C with at least two aromatic C neighbors.
//!
//! Compatible pairs (unordered): (1,3) ester, (1,5) amide, (1,10) imide edge,
//! (2,12)..(2,16) aryl amines to sulfonyl/ring systems, (3,4) and
//! (3,13)..(3,16) ethers, (4,5) and (4,11) carbon–heteroatom chains, (5,12)
//! sulfonamide, (5,13)..(5,16) amine–ring, (6,13)..(6,16) alpha-carbon–ring,
//! (7,7) diene linkage, (8,9), (8,10), (8,13)..(8,16) chain–ring,
//! (9,13)..(9,16), (10,13)..(10,16), (11,13)..(11,16), (13,14)..(13,16),
//! (14,14)..(14,16), (15,16), (16,16) ring–ring biaryl and fused-system
//! linkers.

use crate::smiles::{BondOrder, MolGraph};

/// Unordered compatible environment pairs; entries are (low, high).
pub const COMPATIBLE_PAIRS: &[(u8, u8)] = &[
    (1, 3),
    (1, 5),
    (1, 10),
    (2, 12),
    (2, 13),
    (2, 14),
    (2, 15),
    (2, 16),
    (3, 4),
    (3, 13),
    (3, 14),
    (3, 15),
    (3, 16),
    (4, 5),
    (4, 11),
    (5, 12),
    (5, 13),
    (5, 14),
    (5, 15),
    (5, 16),
    (6, 13),
    (6, 14),
    (6, 15),
    (6, 16),
    (7, 7),
    (8, 9),
    (8, 10),
    (8, 13),
    (8, 14),
    (8, 15),
    (8, 16),
    (9, 13),
    (9, 14),
    (9, 15),
    (9, 16),
    (10, 13),
    (10, 14),
    (10, 15),
    (10, 16),
    (11, 13),
    (11, 14),
    (11, 15),
    (11, 16),
    (13, 14),
    (13, 15),
    (13, 16),
    (14, 14),
    (14, 15),
    (14, 16),
    (15, 16),
    (16, 16),
];

fn has_double_bond_to(g: &MolGraph, v: usize, element: u8) -> bool {
    g.adjacency[v].iter().any(|&(u, bi)| {
        g.bonds[bi].order == BondOrder::Double && g.atoms[u].element == element
    })
}

fn only_single_bonds(g: &MolGraph, v: usize) -> bool {
    g.adjacency[v]
        .iter()
        .all(|&(_, bi)| g.bonds[bi].order == BondOrder::Single)
}

/// Bitmask of environments L1..=L16 that atom `v` belongs to (bit i-1 = Li).
pub fn environments(g: &MolGraph, v: usize) -> u16 {
    let atom = &g.atoms[v];
    let deg = g.degree(v);
    let mut mask = 0u16;
    let set = |mask: &mut u16, label: u8| *mask |= 1 << (label - 1);

    let acyclic = !atom.in_ring;
    let aromatic_neighbor = g.adjacency[v].iter().any(|&(u, _)| g.atoms[u].aromatic);

    match atom.element {
        6 if !atom.aromatic => {
            if acyclic && deg >= 2 && has_double_bond_to(g, v, 8) {
                set(&mut mask, 1); // L1 acyl
            }
            if deg >= 2 && only_single_bonds(g, v) {
                set(&mut mask, 4); // L4 saturated
                if acyclic {
                    set(&mut mask, 8); // L8 chain
                }
            }
            if acyclic
                && deg >= 2
                && g.adjacency[v].iter().any(|&(u, _)| {
                    !g.atoms[u].aromatic
                        && g.atoms[u].element == 6
                        && !g.atoms[u].in_ring
                        && g.degree(u) >= 2
                        && has_double_bond_to(g, u, 8)
                })
            {
                set(&mut mask, 6); // L6 alpha to acyl
            }
            if has_double_bond_to(g, v, 6) {
                set(&mut mask, 7); // L7 alkene
            }
            if atom.in_ring
                && g.adjacency[v].iter().any(|&(u, bi)| {
                    g.bonds[bi].in_ring && matches!(g.atoms[u].element, 7 | 8 | 16)
                })
            {
                set(&mut mask, 13); // L13 hetero-ring
            }
            if atom.in_ring
                && g.adjacency[v].iter().any(|&(u, bi)| {
                    g.bonds[bi].in_ring && g.atoms[u].element == 6 && !g.atoms[u].aromatic
                })
            {
                set(&mut mask, 15); // L15 carbocyclic
            }
        }
        6 => {
            // aromatic carbon
            if atom.in_ring
                && g.adjacency[v]
                    .iter()
                    .any(|&(u, _)| g.atoms[u].aromatic && matches!(g.atoms[u].element, 7 | 8 | 16))
            {
                set(&mut mask, 14); // L14 hetero-aromatic
            }
            let aromatic_c_neighbors = g.adjacency[v]
                .iter()
                .filter(|&&(u, _)| g.atoms[u].aromatic && g.atoms[u].element == 6)
                .count();
            if atom.in_ring && aromatic_c_neighbors >= 2 {
                set(&mut mask, 16); // L16 aryl
            }
        }
        7 if !atom.aromatic => {
            if acyclic && deg >= 2 && only_single_bonds(g, v) {
                if aromatic_neighbor {
                    set(&mut mask, 2); // L2 aryl amine
                } else if g.adjacency[v]
                    .iter()
                    .all(|&(u, _)| matches!(g.atoms[u].element, 6 | 16))
                {
                    set(&mut mask, 5); // L5 aliphatic amine
                }
            }
            if atom.in_ring
                && g.adjacency[v].iter().any(|&(u, bi)| {
                    g.bonds[bi].in_ring && g.atoms[u].element == 6 && has_double_bond_to(g, u, 8)
                })
            {
                set(&mut mask, 10); // L10 lactam
            }
        }
        7 => {
            // aromatic nitrogen
            let aromatic_ring_neighbors = g.adjacency[v]
                .iter()
                .filter(|&&(u, bi)| g.bonds[bi].in_ring && g.atoms[u].aromatic)
                .count();
            if atom.in_ring && aromatic_ring_neighbors >= 2 {
                set(&mut mask, 9); // L9 aromatic N
            }
        }
        8 if !atom.aromatic => {
            if acyclic && deg == 2 && only_single_bonds(g, v) {
                set(&mut mask, 3); // L3 ether/ester
            }
        }
        16 if !atom.aromatic => {
            if acyclic && deg == 2 && only_single_bonds(g, v) {
                set(&mut mask, 11); // L11 thioether
            }
            let double_o = g.adjacency[v]
                .iter()
                .filter(|&&(u, bi)| {
                    g.bonds[bi].order == BondOrder::Double && g.atoms[u].element == 8
                })
                .count();
            if deg == 4 && double_o >= 2 {
                set(&mut mask, 12); // L12 sulfonyl
            }
        }
        _ => {}
    }
    mask
}

/// True when some environment of `a` pairs with some environment of `b`.
pub fn compatible(env_a: u16, env_b: u16) -> bool {
    COMPATIBLE_PAIRS.iter().any(|&(x, y)| {
        let (xb, yb) = (1u16 << (x - 1), 1u16 << (y - 1));
        (env_a & xb != 0 && env_b & yb != 0) || (env_a & yb != 0 && env_b & xb != 0)
    })
}
