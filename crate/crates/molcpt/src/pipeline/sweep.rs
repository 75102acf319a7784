//! Hyperparameter sweeps over vocabulary threshold, attention heads,
//! answer-ensemble size, and orthogonality weight.
//!
//! The full grid is the cartesian product of the four axes. When it exceeds
//! the budget, a seeded shuffle picks the subset, so a rerun with the same
//! seed explores the same configurations. Head counts that do not divide the
//! embedding width are dropped up front. Every configuration rebuilds the
//! motif vocabulary from the training molecules at its own threshold and then
//! fine-tunes from the shared pretrained encoder and head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncoderParams;
use crate::fragment::{CleavageRules, MotifVocabulary};
use crate::pipeline::dataset::TaskDataset;
use crate::pipeline::model::PromptModel;
use crate::pipeline::train::{finetune_run, RunConfig, RunError};
use crate::pretrain::OutputHead;
use crate::smiles::MolGraph;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Vocabulary frequency thresholds.
    pub t_values: Vec<usize>,
    /// Attention head counts; entries not dividing the width are skipped.
    pub head_values: Vec<usize>,
    /// Answer rows per label.
    pub ensemble_values: Vec<usize>,
    /// Orthogonality penalty weights.
    pub lambda_values: Vec<f64>,
    /// Maximum number of configurations to run.
    pub budget: usize,
    /// Seed for subsampling an oversized grid.
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            t_values: (0..=100).step_by(10).collect(),
            head_values: vec![2, 4, 8],
            ensemble_values: (0..=50).step_by(5).collect(),
            lambda_values: (0..=20).map(|i| i as f64 * 5e-6).collect(),
            budget: 50,
            seed: 0,
        }
    }
}

/// Outcome of one swept configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: usize,
    pub heads: usize,
    pub ensemble: usize,
    pub lambda_orth: f64,
    /// Mean over seeds of the best validation ROC-AUC.
    pub valid_auc: f64,
    /// Mean over seeds of the selected-epoch test ROC-AUC.
    pub test_auc: f64,
}

fn tie_key(r: &SweepRow) -> (usize, usize, usize, u64) {
    (r.t, r.heads, r.ensemble, r.lambda_orth.to_bits())
}

/// Best validation first; NaN sinks to the bottom; ties break on the axes.
fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| match (a.valid_auc.is_nan(), b.valid_auc.is_nan()) {
        (true, true) => tie_key(a).cmp(&tie_key(b)),
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        (false, false) => b
            .valid_auc
            .partial_cmp(&a.valid_auc)
            .unwrap()
            .then(tie_key(a).cmp(&tie_key(b))),
    });
}

/// Run the sweep; rows come back sorted by validation ROC-AUC, best first.
pub fn sweep(
    ds: &TaskDataset,
    encoder: &EncoderParams,
    head: &OutputHead,
    rules: CleavageRules,
    base: &RunConfig,
    sc: &SweepConfig,
) -> Result<Vec<SweepRow>, RunError> {
    let mut grid: Vec<(usize, usize, usize, f64)> = Vec::new();
    for &t in &sc.t_values {
        for &h in &sc.head_values {
            if h == 0 || encoder.dim() % h != 0 {
                continue;
            }
            for &e in &sc.ensemble_values {
                for &l in &sc.lambda_values {
                    grid.push((t, h, e, l));
                }
            }
        }
    }
    if grid.len() > sc.budget {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        grid.shuffle(&mut rng);
        grid.truncate(sc.budget);
    }

    let train_graphs: Vec<MolGraph> = ds
        .graphs_of(&ds.split.train)
        .into_iter()
        .cloned()
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &(t, h, e, l)) in grid.iter().enumerate() {
        let vocab = MotifVocabulary::build(&train_graphs, rules, t);
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed ^ (i as u64).wrapping_mul(0x9E37_79B9));
        let model = PromptModel::new(
            encoder.clone(),
            head.clone(),
            &vocab,
            h,
            base.with_ffn,
            ds.task_count,
            &mut rng,
        )?;
        let mut cfg = base.clone();
        cfg.heads = h;
        cfg.ensemble = e;
        cfg.lambda_orth = l;
        let out = finetune_run(ds, &vocab, &model, &cfg)?;
        let valid = out.per_seed.iter().map(|s| s.best_valid_auc).sum::<f64>()
            / out.per_seed.len() as f64;
        rows.push(SweepRow {
            t,
            heads: h,
            ensemble: e,
            lambda_orth: l,
            valid_auc: valid,
            test_auc: out.test_mean,
        });
    }

    sort_rows(&mut rows);
    Ok(rows)
}

fn auc_field(v: f64) -> String {
    if v.is_nan() {
        "na".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Render sweep rows as a TSV table, preserving their order.
pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("t\theads\tensemble\tlambda_orth\tvalid_roc_auc\ttest_roc_auc\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:e}\t{}\t{}\n",
            r.t,
            r.heads,
            r.ensemble,
            r.lambda_orth,
            auc_field(r.valid_auc),
            auc_field(r.test_auc),
        ));
    }
    out
}
