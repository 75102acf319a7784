//! Shared helpers for the integration suites: seeded random molecule
//! generators that stay within the parser's comfort zone (single bonds,
//! small rings, two aromatic templates).

#![allow(dead_code)]

use molcpt::smiles::{parse_smiles, MolGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random linear chain of heavy atoms with occasional carbon branches.
/// `len == 0` yields the empty string.
fn random_chain(rng: &mut ChaCha8Rng, len: usize) -> String {
    const ATOMS: [&str; 6] = ["C", "C", "C", "N", "O", "S"];
    let mut s = String::new();
    let mut left = len;
    while left > 0 {
        let a = ATOMS[rng.gen_range(0..ATOMS.len())];
        s.push_str(a);
        left -= 1;
        // Branch only off carbon so every atom stays within normal valence.
        if a == "C" && left >= 2 && rng.gen_bool(0.25) {
            s.push_str("(C)");
            left -= 1;
        }
    }
    s
}

/// Random single-component SMILES with at most `max_atoms` heavy atoms.
/// Mixes plain chains, saturated rings of size 3–6 with O/N substitutions,
/// and two aromatic six-rings, optionally with an aliphatic tail.
pub fn random_smiles(rng: &mut ChaCha8Rng, max_atoms: usize) -> String {
    let max = max_atoms.max(1);
    if max >= 6 && rng.gen_bool(0.25) {
        let core = if rng.gen_bool(0.5) {
            "c1ccccc1"
        } else {
            "c1ccncc1"
        };
        let tail_len = rng.gen_range(0..=max - 6);
        let tail = random_chain(rng, tail_len);
        return format!("{tail}{core}");
    }
    if max >= 3 && rng.gen_bool(0.45) {
        const MIDDLES: [&str; 5] = ["C", "C", "C", "N", "O"];
        let k = rng.gen_range(3..=max.min(6));
        let mut ring = String::from("C1");
        for _ in 0..k - 2 {
            ring.push_str(MIDDLES[rng.gen_range(0..MIDDLES.len())]);
        }
        ring.push_str("C1");
        let tail_len = rng.gen_range(0..=max - k);
        let tail = random_chain(rng, tail_len);
        return format!("{tail}{ring}");
    }
    let len = rng.gen_range(1..=max);
    random_chain(rng, len)
}

/// Random parsed molecule with at most `max_atoms` heavy atoms.
pub fn random_molecule(rng: &mut ChaCha8Rng, max_atoms: usize) -> MolGraph {
    let s = random_smiles(rng, max_atoms);
    parse_smiles(&s).expect("generated SMILES parses")
}

/// Seeded corpus of random molecules.
pub fn random_corpus(seed: u64, count: usize, max_atoms: usize) -> Vec<MolGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_molecule(&mut rng, max_atoms)).collect()
}
