//! Answer banks: learnable per-label answer vectors scored against model
//! outputs by inner product.
//!
//! A bank stores `k · E` rows (`k` labels, ensemble size `E`); label `i` owns
//! the contiguous row block `i·E .. (i+1)·E`. Training draws one of a label's
//! rows uniformly (seeded), inference averages the block. Scores are
//! temperature-scaled inner products, turned into probabilities by softmax,
//! and trained with cross-entropy plus an orthogonality penalty
//! `λ‖ŶŶᵀ − I‖²` on the row-normalized bank.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ndiff::{DiffError, Tape, Tensor, Var};
use crate::pretrain::normalize_rows;

/// Default similarity temperature: raw inner products.
pub const DEFAULT_TAU_ANS: f64 = 1.0;

/// Mixes a label into a seed so distinct labels draw independent ensemble
/// indices from the same step seed.
const LABEL_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// How a bank aggregates a label's ensemble rows into one answer vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerMode {
    /// Sample one of the E rows uniformly (seeded).
    Train,
    /// Average the E rows; deterministic.
    Infer,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnswerError {
    #[error("label {label} is out of range for a bank over {labels} labels")]
    UnknownLabel { label: usize, labels: usize },
    #[error("output vector has {got} entries but the bank stores {expected}-dimensional answers")]
    DimMismatch { expected: usize, got: usize },
}

/// Similarities and the softmax probabilities over the k labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    /// Inner products divided by the temperature, one per label.
    pub sims: Vec<f64>,
    /// softmax(sims); sums to 1 (±1e-12).
    pub probs: Vec<f64>,
}

/// Argmax label plus the binary ranking score `s_1 − s_0`.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub label: usize,
    /// For binary tasks: `sims[1] − sims[0]`; 0 when the task has one label.
    pub ranking_score: f64,
    pub scores: ScoreVector,
}

/// One task's answer matrix with its layout metadata.
#[derive(Debug, Clone)]
pub struct AnswerBank {
    rows: Tensor,
    labels: usize,
    ensemble: usize,
    /// Weight of the orthogonality penalty inside [`AnswerBank::answer_loss`].
    pub lambda_orth: f64,
    /// Similarity temperature; scores are inner products divided by this.
    pub tau_ans: f64,
    empty_labels: Vec<usize>,
}

impl AnswerBank {
    /// Wraps an existing `(labels·ensemble) × d` matrix.
    pub fn from_rows(rows: Tensor, labels: usize, ensemble: usize, lambda_orth: f64) -> AnswerBank {
        assert!(labels >= 1, "a bank needs at least one label");
        assert!(ensemble >= 1, "ensemble size must be at least 1");
        assert_eq!(rows.shape.len(), 2, "answer rows must form a matrix");
        assert_eq!(
            rows.shape[0],
            labels * ensemble,
            "expected {labels}·{ensemble} answer rows, got {}",
            rows.shape[0]
        );
        AnswerBank {
            rows,
            labels,
            ensemble,
            lambda_orth,
            tau_ans: DEFAULT_TAU_ANS,
            empty_labels: Vec::new(),
        }
    }

    /// Seeded random bank (used when no example-driven initialization exists).
    pub fn random(
        labels: usize,
        ensemble: usize,
        dim: usize,
        lambda_orth: f64,
        rng: &mut impl Rng,
    ) -> AnswerBank {
        let rows = Tensor::randn(&[labels * ensemble.max(1), dim], 0.1, rng);
        AnswerBank::from_rows(rows, labels, ensemble.max(1), lambda_orth)
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn ensemble(&self) -> usize {
        self.ensemble
    }

    /// Answer dimensionality (d for the contrastive head, c for masking).
    pub fn dim(&self) -> usize {
        self.rows.shape[1]
    }

    pub fn row_count(&self) -> usize {
        self.rows.shape[0]
    }

    /// Which label owns a given answer row.
    pub fn label_of(&self, row: usize) -> usize {
        assert!(row < self.row_count(), "row {row} out of range");
        row / self.ensemble
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    /// Labels whose rows were zero-initialized for lack of training examples.
    pub fn empty_labels(&self) -> &[usize] {
        &self.empty_labels
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.rows]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.rows]
    }

    /// Puts the answer matrix on a tape.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Var {
        let mut t = self.rows.clone();
        t.requires_grad = trainable;
        tape.leaf(t)
    }

    fn draw_index(&self, label: usize, seed: u64) -> usize {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (label as u64).wrapping_mul(LABEL_SEED_MIX));
        rng.gen_range(0..self.ensemble)
    }

    /// One answer vector for `label`: a seeded uniform row draw in train mode,
    /// the ensemble mean in infer mode (the seed is then ignored).
    pub fn practical_answer(
        &self,
        label: usize,
        mode: AnswerMode,
        seed: u64,
    ) -> Result<Vec<f64>, AnswerError> {
        if label >= self.labels {
            return Err(AnswerError::UnknownLabel {
                label,
                labels: self.labels,
            });
        }
        let d = self.dim();
        let base = label * self.ensemble;
        match mode {
            AnswerMode::Train => {
                let row = base + self.draw_index(label, seed);
                Ok(self.rows.data[row * d..(row + 1) * d].to_vec())
            }
            AnswerMode::Infer => {
                // Accumulate (1/E)·row terms in row order, matching the
                // selection-matrix product used on the tape bit for bit.
                let inv = 1.0 / self.ensemble as f64;
                let mut out = vec![0.0; d];
                for e in 0..self.ensemble {
                    let row = base + e;
                    for (o, v) in out.iter_mut().zip(&self.rows.data[row * d..(row + 1) * d]) {
                        *o += inv * v;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Temperature-scaled inner products of `y` with one practical answer per
    /// label, plus their softmax.
    pub fn score(&self, y: &[f64], mode: AnswerMode, seed: u64) -> Result<ScoreVector, AnswerError> {
        if y.len() != self.dim() {
            return Err(AnswerError::DimMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        let mut sims = Vec::with_capacity(self.labels);
        for label in 0..self.labels {
            let answer = self.practical_answer(label, mode, seed)?;
            let dot: f64 = answer.iter().zip(y).map(|(a, b)| a * b).sum();
            sims.push(dot / self.tau_ans);
        }
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = sims.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs = exps.iter().map(|e| e / z).collect();
        Ok(ScoreVector { sims, probs })
    }

    /// Infer-mode argmax over labels; ties break to the lowest index.
    pub fn predict(&self, y: &[f64]) -> Result<Prediction, AnswerError> {
        let scores = self.score(y, AnswerMode::Infer, 0)?;
        let mut label = 0;
        for (i, &s) in scores.sims.iter().enumerate().skip(1) {
            if s > scores.sims[label] {
                label = i;
            }
        }
        let ranking_score = if self.labels >= 2 {
            scores.sims[1] - scores.sims[0]
        } else {
            0.0
        };
        Ok(Prediction {
            label,
            ranking_score,
            scores,
        })
    }

    /// Differentiable similarity logits `[1, k]` for one output vector.
    ///
    /// `rows` must be this bank's matrix registered on `tape`; `y_prime` holds
    /// `dim()` values in any rank-1 or rank-2 arrangement. Train mode bakes a
    /// seeded row draw per label into a constant selection matrix, infer mode
    /// averages each label's block; gradients flow to `rows` and `y_prime`.
    pub fn scores_on_tape(
        &self,
        tape: &mut Tape,
        rows: Var,
        y_prime: Var,
        mode: AnswerMode,
        seed: u64,
    ) -> Result<Var, DiffError> {
        let d = self.dim();
        let k = self.labels;
        let m = self.row_count();
        let mut sel = vec![0.0; k * m];
        for label in 0..k {
            let base = label * self.ensemble;
            match mode {
                AnswerMode::Train => sel[label * m + base + self.draw_index(label, seed)] = 1.0,
                AnswerMode::Infer => {
                    let inv = 1.0 / self.ensemble as f64;
                    for e in 0..self.ensemble {
                        sel[label * m + base + e] = inv;
                    }
                }
            }
        }
        let sel = tape.constant(Tensor::new(vec![k, m], sel));
        let answers = tape.matmul(sel, rows)?;
        let y_col = tape.reshape(y_prime, &[d, 1])?;
        let sims = tape.matmul(answers, y_col)?;
        let row = tape.reshape(sims, &[1, k])?;
        tape.scalar_mul(row, 1.0 / self.tau_ans)
    }

    /// `‖ŶŶᵀ − I‖²` over the row-normalized answer matrix; 0 iff the rows
    /// are orthonormal. Unweighted — [`AnswerBank::answer_loss`] applies λ.
    pub fn orthogonality_penalty(&self, tape: &mut Tape, rows: Var) -> Result<Var, DiffError> {
        let m = self.row_count();
        let unit = normalize_rows(tape, rows)?;
        let unit_t = tape.transpose(unit)?;
        let gram = tape.matmul(unit, unit_t)?;
        let mut neg_eye = vec![0.0; m * m];
        for i in 0..m {
            neg_eye[i * m + i] = -1.0;
        }
        let neg_eye = tape.constant(Tensor::new(vec![m, m], neg_eye));
        let diff = tape.add(gram, neg_eye)?;
        tape.frob_sq(diff)
    }

    /// Cross-entropy of the softmax scores at `label`, plus
    /// `lambda_orth · orthogonality_penalty`.
    pub fn answer_loss(
        &self,
        tape: &mut Tape,
        rows: Var,
        y_prime: Var,
        label: usize,
        mode: AnswerMode,
        seed: u64,
    ) -> Result<Var, DiffError> {
        assert!(
            label < self.labels,
            "label {label} out of range for a bank over {} labels",
            self.labels
        );
        let logits = self.scores_on_tape(tape, rows, y_prime, mode, seed)?;
        let probs = tape.softmax(logits)?;
        let mut hot = vec![0.0; self.labels];
        hot[label] = 1.0;
        let hot = tape.constant(Tensor::new(vec![1, self.labels], hot));
        let picked = tape.mul(probs, hot)?;
        let p = tape.sum_all(picked)?;
        let log_p = tape.log(p)?;
        let mut loss = tape.scalar_mul(log_p, -1.0)?;
        if self.lambda_orth != 0.0 {
            let penalty = self.orthogonality_penalty(tape, rows)?;
            let weighted = tape.scalar_mul(penalty, self.lambda_orth)?;
            loss = tape.add(loss, weighted)?;
        }
        Ok(loss)
    }
}

/// Builds a bank from labeled model outputs: for each label, the examples are
/// shuffled (seeded), dealt round-robin into `ensemble` groups, and each
/// answer row becomes its group's mean. `ensemble = 1` therefore yields plain
/// class means. A label with no examples gets zero rows and a warning; a
/// group left empty because the label has fewer than `ensemble` examples
/// falls back to the class mean. `ensemble = 0` stands for "no data-driven
/// answers" and produces a seeded random single-row bank per label.
pub fn init_answers(
    outputs: &[(Vec<f64>, usize)],
    labels: usize,
    ensemble: usize,
    dim: usize,
    lambda_orth: f64,
    seed: u64,
) -> Result<AnswerBank, AnswerError> {
    assert!(labels >= 1, "a bank needs at least one label");
    for (y, label) in outputs {
        if y.len() != dim {
            return Err(AnswerError::DimMismatch {
                expected: dim,
                got: y.len(),
            });
        }
        if *label >= labels {
            return Err(AnswerError::UnknownLabel {
                label: *label,
                labels,
            });
        }
    }
    if ensemble == 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(AnswerBank::random(labels, 1, dim, lambda_orth, &mut rng));
    }

    let mut data = vec![0.0; labels * ensemble * dim];
    let mut empty_labels = Vec::new();
    for label in 0..labels {
        let members: Vec<&[f64]> = outputs
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(y, _)| y.as_slice())
            .collect();
        if members.is_empty() {
            empty_labels.push(label);
            eprintln!(
                "warning: label {label} has no training examples; its answer rows start at zero"
            );
            continue;
        }
        let mut class_mean = vec![0.0; dim];
        for y in &members {
            for (m, v) in class_mean.iter_mut().zip(*y) {
                *m += v;
            }
        }
        for m in class_mean.iter_mut() {
            *m /= members.len() as f64;
        }

        let mut order: Vec<usize> = (0..members.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (label as u64).wrapping_mul(LABEL_SEED_MIX));
        order.shuffle(&mut rng);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ensemble];
        for (slot, &member) in order.iter().enumerate() {
            groups[slot % ensemble].push(member);
        }
        for (g, group) in groups.iter().enumerate() {
            let row = label * ensemble + g;
            let out = &mut data[row * dim..(row + 1) * dim];
            if group.is_empty() {
                out.copy_from_slice(&class_mean);
            } else {
                for &member in group {
                    for (o, v) in out.iter_mut().zip(members[member]) {
                        *o += v;
                    }
                }
                for o in out.iter_mut() {
                    *o /= group.len() as f64;
                }
            }
        }
    }
    let mut bank = AnswerBank::from_rows(
        Tensor::new(vec![labels * ensemble, dim], data),
        labels,
        ensemble,
        lambda_orth,
    );
    bank.empty_labels = empty_labels;
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndiff::grad_check;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_group_init_is_the_class_mean() {
        let outputs = vec![
            (vec![1.0, 3.0], 0),
            (vec![3.0, 5.0], 0),
            (vec![-2.0, 0.5], 1),
        ];
        let bank = init_answers(&outputs, 2, 1, 2, 0.0, 7).unwrap();
        assert_eq!(bank.rows().shape, vec![2, 2]);
        assert_eq!(&bank.rows().data[0..2], &[2.0, 4.0]);
        assert_eq!(&bank.rows().data[2..4], &[-2.0, 0.5]);
        assert!(bank.empty_labels().is_empty());
    }

    #[test]
    fn two_groups_over_two_examples_are_the_individual_outputs() {
        let u = vec![1.0, 0.0, 2.0];
        let v = vec![0.0, 4.0, -1.0];
        let outputs = vec![(u.clone(), 0), (v.clone(), 0)];
        let bank = init_answers(&outputs, 1, 2, 3, 0.0, 13).unwrap();
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|r| bank.rows().data[r * 3..(r + 1) * 3].to_vec())
            .collect();
        assert!(
            (rows[0] == u && rows[1] == v) || (rows[0] == v && rows[1] == u),
            "singleton groups must recover the two outputs, got {rows:?}"
        );
    }

    #[test]
    fn identical_outputs_give_identical_answers_for_any_ensemble() {
        let y = vec![0.5, -1.5, 2.5];
        for ensemble in [1, 2, 3, 7] {
            let outputs: Vec<_> = (0..5).map(|_| (y.clone(), 0)).collect();
            let bank = init_answers(&outputs, 1, ensemble, 3, 0.0, 3).unwrap();
            for r in 0..bank.row_count() {
                assert_eq!(&bank.rows().data[r * 3..(r + 1) * 3], y.as_slice());
            }
        }
    }

    #[test]
    fn label_without_examples_gets_zero_rows() {
        let outputs = vec![(vec![1.0, 2.0], 0), (vec![3.0, 4.0], 0)];
        let bank = init_answers(&outputs, 2, 2, 2, 0.0, 5).unwrap();
        assert_eq!(bank.empty_labels(), &[1]);
        assert!(bank.rows().data[4..8].iter().all(|&v| v == 0.0));
        assert!(bank.rows().data[0..4].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn ensemble_zero_builds_a_seeded_random_single_row_bank() {
        let outputs = vec![(vec![1.0, 2.0], 0), (vec![3.0, 4.0], 1)];
        let a = init_answers(&outputs, 2, 0, 2, 0.0, 11).unwrap();
        let b = init_answers(&outputs, 2, 0, 2, 0.0, 11).unwrap();
        let c = init_answers(&outputs, 2, 0, 2, 0.0, 12).unwrap();
        assert_eq!(a.ensemble(), 1);
        assert!(a.rows().data.iter().any(|&v| v != 0.0));
        assert_eq!(a.rows().data, b.rows().data);
        assert_ne!(a.rows().data, c.rows().data);
    }

    #[test]
    fn practical_answer_modes() {
        // E = 1: both modes return the single row.
        let bank = AnswerBank::from_rows(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]), 2, 1, 0.0);
        for seed in [0, 1, 99] {
            assert_eq!(
                bank.practical_answer(0, AnswerMode::Train, seed).unwrap(),
                bank.practical_answer(0, AnswerMode::Infer, seed).unwrap()
            );
        }
        // E = 2 inference: the row mean.
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 6.0]),
            1,
            2,
            0.0,
        );
        assert_eq!(
            bank.practical_answer(0, AnswerMode::Infer, 0).unwrap(),
            vec![2.0, 4.0]
        );
        // Unknown label.
        assert_eq!(
            bank.practical_answer(3, AnswerMode::Infer, 0),
            Err(AnswerError::UnknownLabel { label: 3, labels: 1 })
        );
    }

    #[test]
    fn train_draws_are_uniform_over_the_ensemble() {
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 1], vec![10.0, 20.0]),
            1,
            2,
            0.0,
        );
        let mut first = 0usize;
        let draws = 10_000;
        for seed in 0..draws {
            let row = bank.practical_answer(0, AnswerMode::Train, seed).unwrap();
            if row[0] == 10.0 {
                first += 1;
            }
        }
        let freq = first as f64 / draws as f64;
        assert!(
            (freq - 0.5).abs() <= 0.02,
            "row 0 frequency {freq} strays more than 2% from 50/50"
        );
    }

    #[test]
    fn score_matches_hand_inner_products() {
        // y' = (1,0) against answers y⁰ = (0,1), y¹ = (2,0).
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![0.0, 1.0, 2.0, 0.0]),
            2,
            1,
            0.0,
        );
        let sv = bank.score(&[1.0, 0.0], AnswerMode::Infer, 0).unwrap();
        assert_eq!(sv.sims, vec![0.0, 2.0]);
        let p = bank.predict(&[1.0, 0.0]).unwrap();
        assert_eq!(p.label, 1);
        assert_eq!(p.ranking_score, 2.0);
    }

    #[test]
    fn orthogonal_output_scores_uniformly() {
        // Answers live in the xy-plane; y' points along z.
        let bank = AnswerBank::from_rows(
            Tensor::new(
                vec![3, 3],
                vec![1.0, 0.0, 0.0, 0.5, 2.0, 0.0, -1.0, 3.0, 0.0],
            ),
            3,
            1,
            0.0,
        );
        let sv = bank.score(&[0.0, 0.0, 5.0], AnswerMode::Infer, 0).unwrap();
        for p in &sv.probs {
            assert!(close(*p, 1.0 / 3.0, 1e-12), "probs {:?}", sv.probs);
        }
    }

    #[test]
    fn three_label_probabilities_match_hand_softmax() {
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![3, 2], vec![1.0, 0.5, -0.5, 2.0, 0.25, -1.0]),
            3,
            1,
            0.0,
        );
        let y = [0.8, -0.6];
        let sv = bank.score(&y, AnswerMode::Infer, 0).unwrap();
        let hand: Vec<f64> = vec![
            1.0 * 0.8 + 0.5 * -0.6,
            -0.5 * 0.8 + 2.0 * -0.6,
            0.25 * 0.8 + -1.0 * -0.6,
        ];
        let z: f64 = hand.iter().map(|s| s.exp()).sum();
        for (i, s) in hand.iter().enumerate() {
            assert!(close(sv.sims[i], *s, 1e-12));
            assert!(close(sv.probs[i], s.exp() / z, 1e-12));
        }
        let total: f64 = sv.probs.iter().sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn temperature_rescales_similarities() {
        let mut bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![0.0, 1.0, 2.0, 0.0]),
            2,
            1,
            0.0,
        );
        bank.tau_ans = 4.0;
        let sv = bank.score(&[1.0, 0.0], AnswerMode::Infer, 0).unwrap();
        assert_eq!(sv.sims, vec![0.0, 0.5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let bank = AnswerBank::from_rows(Tensor::new(vec![2, 2], vec![0.0; 4]), 2, 1, 0.0);
        assert_eq!(
            bank.score(&[1.0, 2.0, 3.0], AnswerMode::Infer, 0),
            Err(AnswerError::DimMismatch {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn confident_correct_scores_give_vanishing_loss() {
        // sims = (+30, −30) for label 0 → CE = ln(1 + e^{−60}) ≈ 8.8e−27.
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![30.0, 0.0, -30.0, 0.0]),
            2,
            1,
            0.0,
        );
        let mut tape = Tape::new();
        let rows = bank.register(&mut tape, false);
        let y = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 0.0]));
        let loss = bank
            .answer_loss(&mut tape, rows, y, 0, AnswerMode::Infer, 0)
            .unwrap();
        assert!(tape.value(loss).data[0] <= 1e-9);
    }

    #[test]
    fn uniform_probabilities_cost_ln_two() {
        // Identical answers ⇒ identical sims ⇒ uniform softmax over k = 2.
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![0.7, -0.2, 0.7, -0.2]),
            2,
            1,
            0.0,
        );
        let mut tape = Tape::new();
        let rows = bank.register(&mut tape, false);
        let y = tape.constant(Tensor::new(vec![1, 2], vec![3.0, 1.0]));
        let loss = bank
            .answer_loss(&mut tape, rows, y, 1, AnswerMode::Infer, 0)
            .unwrap();
        assert!(close(tape.value(loss).data[0], 2f64.ln(), 1e-12));
    }

    #[test]
    fn orthonormal_rows_have_zero_penalty() {
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]),
            2,
            1,
            0.0,
        );
        let mut tape = Tape::new();
        let rows = bank.register(&mut tape, false);
        let pen = bank.orthogonality_penalty(&mut tape, rows).unwrap();
        assert!(tape.value(pen).data[0].abs() <= 1e-18);
    }

    #[test]
    fn penalty_is_positive_for_correlated_rows_and_never_negative() {
        // Two identical rows: Ŷ Ŷᵀ = all-ones, ‖ones − I‖² = 2.
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]),
            2,
            1,
            0.0,
        );
        let mut tape = Tape::new();
        let rows = bank.register(&mut tape, false);
        let pen = bank.orthogonality_penalty(&mut tape, rows).unwrap();
        assert!(close(tape.value(pen).data[0], 2.0, 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let bank =
                AnswerBank::from_rows(Tensor::randn(&[4, 3], 1.0, &mut rng), 2, 2, 0.0);
            let mut tape = Tape::new();
            let rows = bank.register(&mut tape, false);
            let pen = bank.orthogonality_penalty(&mut tape, rows).unwrap();
            assert!(tape.value(pen).data[0] >= 0.0);
        }
    }

    #[test]
    fn answer_loss_passes_finite_difference_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(411);
        for &mode in &[AnswerMode::Train, AnswerMode::Infer] {
            let rows = Tensor::randn(&[6, 4], 0.7, &mut rng);
            let y = Tensor::randn(&[1, 4], 0.9, &mut rng);
            let bank = AnswerBank::from_rows(rows.clone(), 3, 2, 3e-5);
            for target in 0..2 {
                let rows_c = rows.clone();
                let y_c = y.clone();
                let bank_ref = &bank;
                let mut f = |tape: &mut Tape, probe: Var| {
                    let (rv, yv) = if target == 0 {
                        let yv = tape.constant(y_c.clone());
                        (probe, yv)
                    } else {
                        let rv = tape.constant(rows_c.clone());
                        (rv, probe)
                    };
                    bank_ref.answer_loss(tape, rv, yv, 1, mode, 99)
                };
                let x = if target == 0 { rows.clone() } else { y.clone() };
                let err = grad_check(&mut f, &x, 1e-5).unwrap();
                assert!(
                    err <= 1e-4,
                    "answer loss gradient check failed (mode {mode:?}, target {target}): {err}"
                );
            }
        }
    }

    #[test]
    fn tape_scores_match_plain_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let rows = Tensor::randn(&[6, 5], 1.0, &mut rng);
        let mut bank = AnswerBank::from_rows(rows, 3, 2, 0.0);
        bank.tau_ans = 2.0;
        let y: Vec<f64> = (0..5).map(|i| (i as f64) * 0.3 - 0.6).collect();
        for &(mode, seed) in &[
            (AnswerMode::Train, 7u64),
            (AnswerMode::Train, 8),
            (AnswerMode::Infer, 0),
        ] {
            let plain = bank.score(&y, mode, seed).unwrap();
            let mut tape = Tape::new();
            let rv = bank.register(&mut tape, false);
            let yv = tape.constant(Tensor::new(vec![1, 5], y.clone()));
            let logits = bank.scores_on_tape(&mut tape, rv, yv, mode, seed).unwrap();
            let got = &tape.value(logits).data;
            for (a, b) in got.iter().zip(&plain.sims) {
                assert!(close(*a, *b, 1e-12), "tape {got:?} vs plain {:?}", plain.sims);
            }
        }
    }

    #[test]
    fn argmax_is_invariant_under_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let rows = Tensor::randn(&[6, 4], 1.0, &mut rng);
        let bank = AnswerBank::from_rows(rows.clone(), 3, 2, 0.0);
        let mut scaled_rows = rows.clone();
        for v in scaled_rows.data.iter_mut() {
            *v *= 3.7;
        }
        let scaled = AnswerBank::from_rows(scaled_rows, 3, 2, 0.0);
        for _ in 0..50 {
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert_eq!(
                bank.predict(&y).unwrap().label,
                scaled.predict(&y).unwrap().label
            );
        }
    }

    #[test]
    fn ties_break_to_the_lowest_label_index() {
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![3, 2], vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
            3,
            1,
            0.0,
        );
        assert_eq!(bank.predict(&[0.4, -0.4]).unwrap().label, 0);
    }

    #[test]
    fn prediction_reports_the_binary_ranking_score() {
        // sims = (0.2, 0.9) → label 1, ranking score 0.7.
        let bank = AnswerBank::from_rows(
            Tensor::new(vec![2, 2], vec![0.2, 0.0, 0.9, 0.0]),
            2,
            1,
            0.0,
        );
        let p = bank.predict(&[1.0, 0.0]).unwrap();
        assert_eq!(p.label, 1);
        assert!(close(p.ranking_score, 0.7, 1e-12));
    }

    #[test]
    fn single_row_inference_reproduces_training_scores_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let bank = AnswerBank::from_rows(Tensor::randn(&[2, 6], 1.0, &mut rng), 2, 1, 0.0);
        let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for seed in [0u64, 17, 123_456] {
            let train = bank.score(&y, AnswerMode::Train, seed).unwrap();
            let infer = bank.score(&y, AnswerMode::Infer, 0).unwrap();
            assert_eq!(train.sims, infer.sims);
        }
    }

    #[test]
    fn row_to_label_map_follows_block_layout() {
        let bank = AnswerBank::from_rows(Tensor::new(vec![6, 1], vec![0.0; 6]), 3, 2, 0.0);
        let labels: Vec<usize> = (0..6).map(|r| bank.label_of(r)).collect();
        assert_eq!(labels, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn init_rejects_bad_dimensions_and_labels() {
        let outputs = vec![(vec![1.0, 2.0, 3.0], 0)];
        assert!(matches!(
            init_answers(&outputs, 2, 1, 2, 0.0, 0),
            Err(AnswerError::DimMismatch {
                expected: 2,
                got: 3
            })
        ));
        let outputs = vec![(vec![1.0, 2.0], 5)];
        assert!(matches!(
            init_answers(&outputs, 2, 1, 2, 0.0, 0),
            Err(AnswerError::UnknownLabel { label: 5, labels: 2 })
        ));
    }
}
