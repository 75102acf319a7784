//! Recursive-descent SMILES reader.

use std::collections::HashMap;

use super::{default_valence, element_number, ring_flags, Atom, BondOrder, MolGraph, SmilesError};

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    g: MolGraph,
    prev: Option<usize>,
    pending_bond: Option<BondOrder>,
    /// (attachment atom, byte position of the '(').
    branch_stack: Vec<(usize, usize)>,
    /// Open ring labels: label -> (atom, bond symbol if given, byte position).
    ring_open: HashMap<u16, (usize, Option<BondOrder>, usize)>,
    /// Bonds written without a symbol between two aromatic atoms; the order is
    /// settled after ring perception.
    deferred_aromatic: Vec<usize>,
    /// Which atoms came from bracket notation (their H count is literal).
    bracketed: Vec<bool>,
}

impl<'a> Parser<'a> {
    fn syntax(&self, msg: &str) -> SmilesError {
        SmilesError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn run(mut self) -> Result<MolGraph, SmilesError> {
        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if self.pending_bond.is_some() {
                        return Err(self.syntax("bond symbol before '('"));
                    }
                    match self.prev {
                        Some(p) => self.branch_stack.push((p, self.pos)),
                        None => return Err(self.syntax("branch opens before any atom")),
                    }
                    self.pos += 1;
                }
                b')' => {
                    if self.pending_bond.is_some() {
                        return Err(self.syntax("dangling bond before ')'"));
                    }
                    match self.branch_stack.pop() {
                        Some((p, _)) => self.prev = Some(p),
                        None => return Err(SmilesError::UnmatchedParen { pos: self.pos }),
                    }
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending_bond.is_some() {
                        return Err(self.syntax("two bond symbols in a row"));
                    }
                    if self.prev.is_none() {
                        return Err(self.syntax("bond symbol before any atom"));
                    }
                    self.pending_bond = Some(match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        // '-' plus the stereo markers '/' and '\' all mean single here
                        _ => BondOrder::Single,
                    });
                    self.pos += 1;
                }
                b'.' => return Err(self.syntax("dot-separated components are not supported")),
                b'0'..=b'9' => {
                    let label = (c - b'0') as u16;
                    self.pos += 1;
                    self.ring_digit(label)?;
                }
                b'%' => {
                    self.pos += 1;
                    let d1 = self.bump();
                    let d2 = self.bump();
                    match (d1, d2) {
                        (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            let label = ((a - b'0') as u16) * 10 + (b - b'0') as u16;
                            self.ring_digit(label)?;
                        }
                        _ => return Err(self.syntax("'%' needs two digits")),
                    }
                }
                b'[' => {
                    self.pos += 1;
                    let atom = self.bracket_atom()?;
                    self.attach(atom, true)?;
                }
                b'A'..=b'Z' => {
                    let atom = self.organic_atom()?;
                    self.attach(atom, false)?;
                }
                b'a'..=b'z' => {
                    let atom = self.aromatic_organic_atom()?;
                    self.attach(atom, false)?;
                }
                _ => return Err(self.syntax("unexpected character")),
            }
        }

        if self.pending_bond.is_some() {
            return Err(self.syntax("dangling bond at end of input"));
        }
        if let Some(&(_, pos)) = self.branch_stack.first() {
            return Err(SmilesError::UnmatchedParen { pos });
        }
        if let Some((&label, &(_, _, pos))) = self
            .ring_open
            .iter()
            .min_by_key(|&(_, &(_, _, pos))| pos)
            .map(|(l, v)| (l, v))
        {
            return Err(SmilesError::UnmatchedRingClosure { label, pos });
        }
        if self.g.atoms.is_empty() {
            return Err(SmilesError::Empty);
        }

        self.finish()
    }

    /// Parse a bare organic-subset atom starting at an uppercase letter.
    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bump().unwrap();
        // Two-letter subset symbols first.
        if let Some(next) = self.peek() {
            let two = [c, next];
            if &two == b"Cl" || &two == b"Br" {
                self.pos += 1;
                let sym = std::str::from_utf8(&two).unwrap();
                return Ok(Atom::new(element_number(sym).unwrap(), false));
            }
        }
        let element = match c {
            b'B' => 5,
            b'C' => 6,
            b'N' => 7,
            b'O' => 8,
            b'P' => 15,
            b'S' => 16,
            b'F' => 9,
            b'I' => 53,
            _ => {
                return Err(SmilesError::UnknownElement {
                    symbol: (c as char).to_string(),
                    pos: start,
                })
            }
        };
        Ok(Atom::new(element, false))
    }

    /// Parse a bare aromatic atom: one of b c n o p s.
    fn aromatic_organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let start = self.pos;
        let c = self.bump().unwrap();
        let element = match c {
            b'b' => 5,
            b'c' => 6,
            b'n' => 7,
            b'o' => 8,
            b'p' => 15,
            b's' => 16,
            _ => {
                return Err(SmilesError::UnknownElement {
                    symbol: (c as char).to_string(),
                    pos: start,
                })
            }
        };
        Ok(Atom::new(element, true))
    }

    /// Parse the interior of a bracket atom; `self.pos` is just past '['.
    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        // isotope, accepted and dropped
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }

        let sym_pos = self.pos;
        let first = self.bump().ok_or_else(|| self.syntax("unterminated bracket"))?;
        let mut atom = if first.is_ascii_lowercase() {
            let mut a = Atom::new(0, true);
            a.element = match first {
                b'b' => 5,
                b'c' => 6,
                b'n' => 7,
                b'o' => 8,
                b'p' => 15,
                b's' => 16,
                _ => {
                    return Err(SmilesError::UnknownElement {
                        symbol: (first as char).to_string(),
                        pos: sym_pos,
                    })
                }
            };
            a
        } else if first.is_ascii_uppercase() {
            // Case-sensitive longest match: a two-letter symbol needs a
            // lowercase second letter that forms a real element.
            let mut symbol = (first as char).to_string();
            if let Some(next) = self.peek() {
                if next.is_ascii_lowercase() {
                    let two = format!("{}{}", first as char, next as char);
                    if element_number(&two).is_some() {
                        symbol = two;
                        self.pos += 1;
                    }
                }
            }
            match element_number(&symbol) {
                Some(z) => Atom::new(z, false),
                None => {
                    return Err(SmilesError::UnknownElement {
                        symbol,
                        pos: sym_pos,
                    })
                }
            }
        } else {
            return Err(self.syntax("expected element symbol in bracket"));
        };

        // chirality, accepted and dropped
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }

        // hydrogen count
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let mut count = 1u8;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                count = d - b'0';
                self.pos += 1;
            }
            atom.explicit_h = count;
        }

        // charge: '+'/'-' optionally followed by digits or repeated signs
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let mut magnitude: i8 = 1;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                magnitude = (d - b'0') as i8;
                self.pos += 1;
            } else {
                while self.peek() == Some(sign) {
                    magnitude += 1;
                    self.pos += 1;
                }
            }
            atom.formal_charge = if sign == b'+' { magnitude } else { -magnitude };
        }

        // atom class, accepted and dropped
        if self.peek() == Some(b':') {
            self.pos += 1;
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return Err(self.syntax("atom class needs digits"));
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }

        if self.bump() != Some(b']') {
            return Err(self.syntax("expected ']'"));
        }
        Ok(atom)
    }

    /// Add a freshly parsed atom and connect it to the previous one.
    fn attach(&mut self, atom: Atom, from_bracket: bool) -> Result<(), SmilesError> {
        let idx = self.g.add_atom(atom);
        self.bracketed.push(from_bracket);
        let bond = self.pending_bond.take();
        if let Some(p) = self.prev {
            self.make_bond(p, idx, bond)?;
        } else if bond.is_some() {
            return Err(self.syntax("bond symbol before any atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn make_bond(
        &mut self,
        a: usize,
        b: usize,
        symbol: Option<BondOrder>,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(self.syntax("bond connects an atom to itself"));
        }
        if self.g.bond_between(a, b).is_some() {
            return Err(self.syntax("duplicate bond between the same atoms"));
        }
        match symbol {
            Some(order) => {
                self.g.add_bond(a, b, order);
            }
            None => {
                let bi = self.g.add_bond(a, b, BondOrder::Single);
                if self.g.atoms[a].aromatic && self.g.atoms[b].aromatic {
                    self.deferred_aromatic.push(bi);
                }
            }
        }
        Ok(())
    }

    fn ring_digit(&mut self, label: u16) -> Result<(), SmilesError> {
        let here = match self.prev {
            Some(p) => p,
            None => return Err(self.syntax("ring closure before any atom")),
        };
        let symbol = self.pending_bond.take();
        if let Some((other, open_symbol, _)) = self.ring_open.remove(&label) {
            let merged = match (open_symbol, symbol) {
                (Some(x), Some(y)) if x != y => {
                    return Err(self.syntax("conflicting bond symbols on ring closure"))
                }
                (x, y) => x.or(y),
            };
            self.make_bond(other, here, merged)
        } else {
            self.ring_open.insert(label, (here, symbol, self.pos - 1));
            Ok(())
        }
    }

    /// Ring perception, deferred aromatic bonds, implicit hydrogens.
    fn finish(mut self) -> Result<MolGraph, SmilesError> {
        ring_flags(&mut self.g);
        for bi in self.deferred_aromatic {
            if self.g.bonds[bi].in_ring {
                self.g.bonds[bi].order = BondOrder::Aromatic;
            }
        }

        let mut hydrogens = vec![None; self.g.atoms.len()];
        let mut warning = false;
        for (i, atom) in self.g.atoms.iter().enumerate() {
            if self.bracketed[i] {
                continue; // bracket H counts are literal
            }
            let valence = default_valence(atom.element)
                .expect("organic-subset atoms always have a default valence");
            let h = if atom.aromatic {
                // One valence is absorbed by the aromatic system.
                valence.saturating_sub(self.g.adjacency[i].len() + 1)
            } else {
                let used: usize = self.g.adjacency[i]
                    .iter()
                    .map(|&(_, bi)| match self.g.bonds[bi].order {
                        BondOrder::Single | BondOrder::Aromatic => 1,
                        BondOrder::Double => 2,
                        BondOrder::Triple => 3,
                    })
                    .sum();
                if used > valence {
                    warning = true;
                    0
                } else {
                    valence - used
                }
            };
            hydrogens[i] = Some(h as u8);
        }
        for (atom, h) in self.g.atoms.iter_mut().zip(hydrogens) {
            if let Some(h) = h {
                atom.explicit_h = h;
            }
        }
        self.g.valence_warning = warning;

        debug_assert!(self.g.validate().is_ok(), "{:?}", self.g.validate());
        Ok(self.g)
    }
}

/// Parses one SMILES string into an attributed molecular graph.
///
/// Aromatic atoms marked by lowercase letters keep an `aromatic` flag rather
/// than being kekulized. Bonds written without a symbol between two aromatic
/// atoms become aromatic when ring perception places them in a ring, single
/// otherwise. Hypervalent organic-subset atoms set `valence_warning` instead
/// of failing.
pub fn parse_smiles(input: &str) -> Result<MolGraph, SmilesError> {
    let trimmed = input.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::Empty);
    }
    let parser = Parser {
        s: trimmed.as_bytes(),
        pos: 0,
        g: MolGraph::new(),
        prev: None,
        pending_bond: None,
        branch_stack: Vec::new(),
        ring_open: HashMap::new(),
        deferred_aromatic: Vec::new(),
        bracketed: Vec::new(),
    };
    let mut g = parser.run()?;
    g.source_smiles = trimmed.to_string();
    Ok(g)
}
