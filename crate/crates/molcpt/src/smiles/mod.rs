//! SMILES parsing and attributed molecular graphs.
//!
//! The parser covers the organic subset (`B C N O P S F Cl Br I`, aromatic
//! lowercase forms), bracket atoms with charge and hydrogen count, bond
//! symbols `- = # :`, branches, and ring closures (`1`-`9`, `%nn`).
//! Stereo markers are accepted and dropped. Implicit hydrogens are counted
//! on the heavy atom but never materialized as graph nodes.

mod parser;
mod writer;

pub use parser::parse_smiles;
pub use writer::to_smiles;

use thiserror::Error;

/// Chemical element symbols indexed by atomic number minus one.
pub const ELEMENT_SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Look up an element symbol, returning its atomic number (1-based).
pub fn element_number(symbol: &str) -> Option<u8> {
    ELEMENT_SYMBOLS
        .iter()
        .position(|&s| s == symbol)
        .map(|i| (i + 1) as u8)
}

/// Symbol for an atomic number; panics outside 1..=118.
pub fn element_symbol(number: u8) -> &'static str {
    ELEMENT_SYMBOLS[number as usize - 1]
}

/// Default valence used for implicit-hydrogen counting (organic subset only).
pub(crate) fn default_valence(element: u8) -> Option<usize> {
    match element {
        5 | 7 | 15 => Some(3),           // B N P
        6 => Some(4),                    // C
        8 | 16 => Some(2),               // O S
        9 | 17 | 35 | 53 => Some(1),     // F Cl Br I
        _ => None,
    }
}

/// Elements that may carry the aromatic flag (lowercase SMILES forms).
pub(crate) fn aromatic_element(element: u8) -> bool {
    matches!(element, 5 | 6 | 7 | 8 | 15 | 16)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmilesError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unmatched ring-closure {label} opened at {pos}")]
    UnmatchedRingClosure { label: u16, pos: usize },
    #[error("unmatched parenthesis at {pos}")]
    UnmatchedParen { pos: usize },
    #[error("unknown element symbol {symbol:?} at {pos}")]
    UnknownElement { symbol: String, pos: usize },
    #[error("empty SMILES input")]
    Empty,
}

/// Bond order, treated downstream as a categorical feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Stable index into the encoder's bond embedding table.
    pub fn index(self) -> usize {
        match self {
            BondOrder::Single => 0,
            BondOrder::Double => 1,
            BondOrder::Triple => 2,
            BondOrder::Aromatic => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<BondOrder> {
        match i {
            0 => Some(BondOrder::Single),
            1 => Some(BondOrder::Double),
            2 => Some(BondOrder::Triple),
            3 => Some(BondOrder::Aromatic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Atomic number, 1..=118.
    pub element: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogens attached to this heavy atom (implicit-counted or from brackets).
    pub explicit_h: u8,
    pub in_ring: bool,
    /// Set by attribute-masking augmentation; the encoder substitutes the MASK row.
    pub masked: bool,
}

impl Atom {
    pub fn new(element: u8, aromatic: bool) -> Atom {
        Atom {
            element,
            aromatic,
            formal_charge: 0,
            explicit_h: 0,
            in_ring: false,
            masked: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

/// Attributed molecular graph. Undirected; hydrogens implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Per-atom list of (neighbor atom index, bond index).
    pub adjacency: Vec<Vec<(usize, usize)>>,
    pub source_smiles: String,
    /// Set when implicit-H counting found a bond-order sum over the standard valence.
    pub valence_warning: bool,
}

impl MolGraph {
    pub fn new() -> MolGraph {
        MolGraph {
            atoms: Vec::new(),
            bonds: Vec::new(),
            adjacency: Vec::new(),
            source_smiles: String::new(),
            valence_warning: false,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Adds an undirected bond. Panics on self-loops or duplicates; the parser
    /// reports those as syntax errors before calling this.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> usize {
        assert!(a != b, "self-loop bond");
        assert!(
            self.bond_between(a, b).is_none(),
            "duplicate bond {a}-{b}"
        );
        let idx = self.bonds.len();
        self.bonds.push(Bond {
            a,
            b,
            order,
            in_ring: false,
        });
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        idx
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| bi)
    }

    /// Connected components over atoms, with bonds in `skip_bond` removed.
    /// Components are listed in order of their smallest atom index, atoms ascending.
    pub fn components_without(&self, skip_bond: &[bool]) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(u, bi) in &self.adjacency[v] {
                    if skip_bond.get(bi).copied().unwrap_or(false) || seen[u] {
                        continue;
                    }
                    seen[u] = true;
                    comp.push(u);
                    stack.push(u);
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_without(&vec![false; self.bonds.len()])
    }

    /// Induced subgraph on `atoms` (ascending original indices), dropping bonds
    /// that leave the set. Returns the subgraph and the original index of each
    /// new atom.
    pub fn induced_subgraph(&self, atoms: &[usize]) -> (MolGraph, Vec<usize>) {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut order: Vec<usize> = atoms.to_vec();
        order.sort_unstable();
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        let mut sub = MolGraph::new();
        for &old in &order {
            sub.add_atom(self.atoms[old].clone());
        }
        for bond in &self.bonds {
            if map[bond.a] != usize::MAX && map[bond.b] != usize::MAX {
                let bi = sub.add_bond(map[bond.a], map[bond.b], bond.order);
                sub.bonds[bi].in_ring = bond.in_ring;
            }
        }
        sub.valence_warning = self.valence_warning;
        (sub, order)
    }

    /// Relabels atoms so new index `i` holds old atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        assert_eq!(perm.len(), self.atoms.len());
        let mut inverse = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut out = MolGraph::new();
        for &old in perm {
            out.add_atom(self.atoms[old].clone());
        }
        for bond in &self.bonds {
            let bi = out.add_bond(inverse[bond.a], inverse[bond.b], bond.order);
            out.bonds[bi].in_ring = bond.in_ring;
        }
        out.source_smiles = self.source_smiles.clone();
        out.valence_warning = self.valence_warning;
        out
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn validate(&self) -> Result<(), String> {
        if self.atoms.is_empty() {
            return Err("graph has no atoms".into());
        }
        if self.adjacency.len() != self.atoms.len() {
            return Err("adjacency length mismatch".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, bond) in self.bonds.iter().enumerate() {
            if bond.a >= self.atoms.len() || bond.b >= self.atoms.len() {
                return Err(format!("bond {i} endpoint out of range"));
            }
            if bond.a == bond.b {
                return Err(format!("bond {i} is a self-loop"));
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(format!("duplicate bond {:?}", key));
            }
        }
        for (v, nbrs) in self.adjacency.iter().enumerate() {
            for &(u, bi) in nbrs {
                let bond = &self.bonds[bi];
                let ok = (bond.a == v && bond.b == u) || (bond.a == u && bond.b == v);
                if !ok {
                    return Err(format!("adjacency of atom {v} disagrees with bond {bi}"));
                }
                if self.adjacency[u].iter().all(|&(w, _)| w != v) {
                    return Err(format!("adjacency not symmetric between {v} and {u}"));
                }
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.element == 0 || atom.element > 118 {
                return Err(format!("atom {i} element {} out of range", atom.element));
            }
        }
        Ok(())
    }
}

impl Default for MolGraph {
    fn default() -> Self {
        MolGraph::new()
    }
}

/// Marks `in_ring` on atoms and bonds: a bond is in a ring iff it is not a
/// bridge, and an atom iff it touches a ring bond.
pub fn ring_flags(g: &mut MolGraph) {
    let bridges = find_bridges(g);
    for (bi, bond) in g.bonds.iter_mut().enumerate() {
        bond.in_ring = !bridges[bi];
    }
    for atom in g.atoms.iter_mut() {
        atom.in_ring = false;
    }
    for bond in &g.bonds {
        if bond.in_ring {
            g.atoms[bond.a].in_ring = true;
            g.atoms[bond.b].in_ring = true;
        }
    }
}

/// Bridge detection via DFS low-link; `result[bi]` is true iff bond `bi` is a bridge.
fn find_bridges(g: &MolGraph) -> Vec<bool> {
    let n = g.atoms.len();
    let mut bridges = vec![false; g.bonds.len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0usize;

    // Iterative DFS; frames are (vertex, incoming bond, neighbor cursor).
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(&mut (v, in_bond, ref mut cursor)) = stack.last_mut() {
            if *cursor < g.adjacency[v].len() {
                let (u, bi) = g.adjacency[v][*cursor];
                *cursor += 1;
                if bi == in_bond {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, bi, 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if let Some(&mut (parent, _, _)) = stack.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        bridges[in_bond] = true;
                    }
                }
            }
        }
    }
    bridges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> MolGraph {
        let mut g = MolGraph::new();
        for _ in 0..n {
            g.add_atom(Atom::new(6, false));
        }
        for i in 1..n {
            g.add_bond(i - 1, i, BondOrder::Single);
        }
        g
    }

    #[test]
    fn path_has_no_rings() {
        let mut g = path_graph(4);
        ring_flags(&mut g);
        assert!(g.bonds.iter().all(|b| !b.in_ring));
        assert!(g.atoms.iter().all(|a| !a.in_ring));
    }

    #[test]
    fn triangle_is_all_ring() {
        let mut g = path_graph(3);
        g.add_bond(2, 0, BondOrder::Single);
        ring_flags(&mut g);
        assert!(g.bonds.iter().all(|b| b.in_ring));
        assert!(g.atoms.iter().all(|a| a.in_ring));
    }

    #[test]
    fn ring_with_tail() {
        // C1CC1C: 3 ring bonds plus one bridge.
        let mut g = path_graph(3);
        g.add_bond(2, 0, BondOrder::Single);
        let tail = g.add_atom(Atom::new(6, false));
        g.add_bond(2, tail, BondOrder::Single);
        ring_flags(&mut g);
        let ring_bonds = g.bonds.iter().filter(|b| b.in_ring).count();
        assert_eq!(ring_bonds, 3);
        assert_eq!(g.bonds.len() - ring_bonds, 1);
        assert!(!g.atoms[tail].in_ring);
    }

    /// Delete-and-test oracle: a bond is a bridge iff removing it disconnects
    /// its endpoints.
    fn brute_force_bridges(g: &MolGraph) -> Vec<bool> {
        (0..g.bonds.len())
            .map(|bi| {
                let mut skip = vec![false; g.bonds.len()];
                skip[bi] = true;
                let comps = g.components_without(&skip);
                let (a, b) = (g.bonds[bi].a, g.bonds[bi].b);
                !comps.iter().any(|c| c.contains(&a) && c.contains(&b))
            })
            .collect()
    }

    #[test]
    fn bridges_match_delete_and_test_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(2..=12);
            let mut g = MolGraph::new();
            for _ in 0..n {
                g.add_atom(Atom::new(6, false));
            }
            // random spanning tree plus extra edges
            for i in 1..n {
                let j = rng.gen_range(0..i);
                g.add_bond(i, j, BondOrder::Single);
            }
            for _ in 0..rng.gen_range(0..=n / 2) {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a != b && g.bond_between(a, b).is_none() {
                    g.add_bond(a, b, BondOrder::Single);
                }
            }
            let fast = find_bridges(&g);
            let slow = brute_force_bridges(&g);
            assert_eq!(fast, slow);
            // |bridges| + |ring edges| covers every edge
            ring_flags(&mut g);
            let rings = g.bonds.iter().filter(|b| b.in_ring).count();
            let bridge_count = fast.iter().filter(|&&x| x).count();
            assert_eq!(rings + bridge_count, g.bonds.len());
        }
    }

    #[test]
    fn induced_subgraph_keeps_attributes() {
        let mut g = path_graph(4);
        g.atoms[1].element = 7;
        g.bonds[1].order = BondOrder::Double;
        let (sub, orig) = g.induced_subgraph(&[1, 2, 3]);
        assert_eq!(orig, vec![1, 2, 3]);
        assert_eq!(sub.atoms[0].element, 7);
        assert_eq!(sub.bonds.len(), 2);
        assert_eq!(sub.bonds[0].order, BondOrder::Double);
        sub.validate().unwrap();
    }

    #[test]
    fn permuted_preserves_structure() {
        let mut g = path_graph(4);
        g.atoms[0].element = 8;
        let p = g.permuted(&[3, 1, 0, 2]);
        p.validate().unwrap();
        assert_eq!(p.atoms[2].element, 8);
        assert_eq!(p.bond_count(), 3);
        // old edge 0-1 maps to new 2-1
        assert!(p.bond_between(2, 1).is_some());
    }
}
