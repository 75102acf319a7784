//! Generates the synthetic planted-signal benchmark as a CSV.
//!
//! Each molecule is two rings joined by a short linker, with an optional
//! pendant decoration. The binary task `planted` marks whether the first ring
//! is benzene — a label that fragmentation can rediscover, because cleaving
//! the linker frees the benzene ring as a standalone motif.
//!
//! Usage: `cargo run --example make_planted_dataset [-- <path> [count] [seed]]`

use molcpt::fragment::{fragment_molecule, CleavageRules};
use molcpt::pipeline::{planted_corpus, planted_csv, PlantedSpec};
use molcpt::smiles::parse_smiles;
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "planted.csv".to_string());
    let molecules: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let spec = PlantedSpec { molecules, seed };
    let rows = planted_corpus(&spec);
    std::fs::write(&path, planted_csv(&spec))?;

    let positives = rows.iter().filter(|(_, label)| *label).count();
    println!("wrote {} molecules to {path}", rows.len());
    println!("positives (benzene-bearing): {positives}");
    println!("negatives: {}", rows.len() - positives);

    // Show how often each motif key appears, confirming the planted signal:
    // the benzene key should appear in exactly the positive molecules.
    let mut motif_molecules: BTreeMap<String, usize> = BTreeMap::new();
    for (smiles, _) in &rows {
        let g = parse_smiles(smiles)?;
        let mut seen: Vec<String> = fragment_molecule(&g, CleavageRules::Simple)
            .into_iter()
            .map(|m| m.key)
            .collect();
        seen.sort();
        seen.dedup();
        for key in seen {
            *motif_molecules.entry(key).or_default() += 1;
        }
    }
    let mut counts: Vec<(usize, String)> = motif_molecules
        .into_iter()
        .map(|(k, v)| (v, k))
        .collect();
    counts.sort_by(|a, b| b.cmp(a));
    println!("\nmost common motifs (molecules containing them):");
    for (count, key) in counts.iter().take(8) {
        println!("  {count:>4}  {key}");
    }
    Ok(())
}
