//! Render a molecular graph back to SMILES text.
//!
//! Output is not canonical — atom order follows a depth-first walk from the
//! lowest atom index — but it reparses to an equivalent graph, including
//! hydrogen counts, charges and aromatic bonds.

use super::{aromatic_element, default_valence, element_symbol, BondOrder, MolGraph};

fn organic_subset(element: u8) -> bool {
    matches!(element, 5 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 35 | 53)
}

/// The hydrogen count the parser would infer for this atom written bare.
fn predicted_h(g: &MolGraph, v: usize) -> usize {
    let atom = &g.atoms[v];
    let valence = match default_valence(atom.element) {
        Some(v) => v,
        None => return usize::MAX,
    };
    if atom.aromatic {
        valence.saturating_sub(g.adjacency[v].len() + 1)
    } else {
        let used: usize = g.adjacency[v]
            .iter()
            .map(|&(_, bi)| match g.bonds[bi].order {
                BondOrder::Single | BondOrder::Aromatic => 1,
                BondOrder::Double => 2,
                BondOrder::Triple => 3,
            })
            .sum();
        valence.saturating_sub(used)
    }
}

fn atom_token(g: &MolGraph, v: usize) -> String {
    let atom = &g.atoms[v];
    let symbol = element_symbol(atom.element);
    let lower = symbol.to_ascii_lowercase();
    let written = if atom.aromatic && aromatic_element(atom.element) {
        lower.as_str()
    } else {
        symbol
    };
    let bare_ok = organic_subset(atom.element)
        && atom.formal_charge == 0
        && (!atom.aromatic || aromatic_element(atom.element))
        && predicted_h(g, v) == atom.explicit_h as usize;
    if bare_ok {
        return written.to_string();
    }
    let mut out = String::from("[");
    out.push_str(written);
    match atom.explicit_h {
        0 => {}
        1 => out.push('H'),
        n => out.push_str(&format!("H{n}")),
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

fn bond_token(g: &MolGraph, bi: usize, ring_bond: &[bool]) -> &'static str {
    let bond = &g.bonds[bi];
    let both_aromatic = g.atoms[bond.a].aromatic && g.atoms[bond.b].aromatic;
    match bond.order {
        BondOrder::Single => {
            if both_aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => {
            if both_aromatic && ring_bond[bi] {
                ""
            } else {
                ":"
            }
        }
    }
}

struct Writer<'a> {
    g: &'a MolGraph,
    ring_bond: Vec<bool>,
    visited: Vec<bool>,
    /// Ring-closure labels to emit at each atom: (label, bond index, opener?).
    closures: Vec<Vec<(u16, usize, bool)>>,
    out: String,
}

struct PlanState {
    visited: Vec<bool>,
    rank: Vec<usize>,
    counter: usize,
    next_label: u16,
    back_seen: Vec<bool>,
}

impl<'a> Writer<'a> {
    /// First pass: depth-first walk in adjacency order, assigning a ring
    /// label to every non-tree edge. The second pass repeats the identical
    /// walk, so tree edges here are exactly the bonds it will traverse.
    fn plan(&mut self, root: usize) {
        let mut st = PlanState {
            visited: vec![false; self.g.atom_count()],
            rank: vec![usize::MAX; self.g.atom_count()],
            counter: 0,
            next_label: 1,
            back_seen: vec![false; self.g.bond_count()],
        };
        self.plan_dfs(&mut st, root, usize::MAX);
    }

    fn plan_dfs(&mut self, st: &mut PlanState, v: usize, in_bond: usize) {
        st.visited[v] = true;
        st.rank[v] = st.counter;
        st.counter += 1;
        for i in 0..self.g.adjacency[v].len() {
            let (u, bi) = self.g.adjacency[v][i];
            if bi == in_bond {
                continue;
            }
            if st.visited[u] {
                if !st.back_seen[bi] {
                    st.back_seen[bi] = true;
                    let (opener, closer) = if st.rank[u] < st.rank[v] {
                        (u, v)
                    } else {
                        (v, u)
                    };
                    let label = st.next_label;
                    assert!(label < 100, "more than 99 open rings");
                    st.next_label += 1;
                    self.closures[opener].push((label, bi, true));
                    self.closures[closer].push((label, bi, false));
                }
            } else {
                self.plan_dfs(st, u, bi);
            }
        }
    }

    /// Second pass: emit text along the same walk.
    fn emit(&mut self, root: usize) {
        self.emit_atom(root, usize::MAX);
    }

    fn emit_atom(&mut self, v: usize, in_bond: usize) {
        self.visited[v] = true;
        self.out.push_str(&atom_token(self.g, v));
        for &(label, bi, opener) in &self.closures[v].clone() {
            if opener {
                self.out.push_str(bond_token(self.g, bi, &self.ring_bond));
            }
            if label < 10 {
                self.out.push_str(&label.to_string());
            } else {
                self.out.push_str(&format!("%{label:02}"));
            }
        }
        let children: Vec<(usize, usize)> = self.g.adjacency[v]
            .iter()
            .filter(|&&(u, bi)| bi != in_bond && !self.visited[u] && !self.is_closure(v, bi))
            .copied()
            .collect();
        for (i, &(u, bi)) in children.iter().enumerate() {
            if self.visited[u] {
                continue; // reached through a later sibling's ring
            }
            let last = i + 1 == children.len();
            if !last {
                self.out.push('(');
            }
            self.out.push_str(bond_token(self.g, bi, &self.ring_bond));
            self.emit_atom(u, bi);
            if !last {
                self.out.push(')');
            }
        }
    }

    fn is_closure(&self, v: usize, bi: usize) -> bool {
        self.closures[v].iter().any(|&(_, b, _)| b == bi)
    }
}

/// Writes SMILES for `g`. Connected components are joined with `.` (a graph
/// straight from the parser always has exactly one).
pub fn to_smiles(g: &MolGraph) -> String {
    // Recompute ring membership instead of trusting stored flags.
    let mut ring = g.clone();
    super::ring_flags(&mut ring);
    let ring_bond: Vec<bool> = ring.bonds.iter().map(|b| b.in_ring).collect();

    let mut w = Writer {
        g,
        ring_bond,
        visited: vec![false; g.atom_count()],
        closures: vec![Vec::new(); g.atom_count()],
        out: String::new(),
    };
    let mut first = true;
    for comp in g.components() {
        let root = comp[0];
        if !first {
            w.out.push('.');
        }
        first = false;
        w.plan(root);
        w.emit(root);
    }
    w.out
}
