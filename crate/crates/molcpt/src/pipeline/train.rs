//! Fine-tuning regimes, evaluation, and model selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::answer::{init_answers, AnswerError, AnswerMode};
use crate::fragment::MotifVocabulary;
use crate::ndiff::{AdamState, DiffError, Tape, Tensor, Var};
use crate::prompt::AttentionParams;

use super::dataset::TaskDataset;
use super::metrics::{mean_std, multi_task_auc, MetricsRow};
use super::model::{PromptModel, Trainability};

/// The four ways to use a pretrained model downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Linear classifier on the frozen graph embedding h_G.
    Probe,
    /// Full fine-tuning: encoder, motif table, attention, answers.
    Molcpt,
    /// Same, but the encoder (and output head) stay fixed.
    Frozen,
    /// Answer initialization only; zero gradient steps.
    Zeroshot,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Probe => "probe",
            Regime::Molcpt => "molcpt",
            Regime::Frozen => "frozen",
            Regime::Zeroshot => "zeroshot",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "probe" => Ok(Regime::Probe),
            "molcpt" => Ok(Regime::Molcpt),
            "frozen" => Ok(Regime::Frozen),
            "zeroshot" => Ok(Regime::Zeroshot),
            other => Err(format!(
                "unknown regime {other:?} (use probe, molcpt, frozen, or zeroshot)"
            )),
        }
    }
}

/// Hyper-parameters of one fine-tuning run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub regime: Regime,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Attention heads H; must divide the embedding width.
    pub heads: usize,
    /// Answer rows per label E; 0 means a random single-row bank.
    pub ensemble: usize,
    pub lambda_orth: f64,
    pub tau_ans: f64,
    pub seeds: Vec<u64>,
    pub include_empty: bool,
    /// Update the output head when (and only when) the encoder trains.
    pub tune_output_head: bool,
    pub with_ffn: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            regime: Regime::Molcpt,
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
            heads: 4,
            ensemble: 1,
            lambda_orth: 1e-5,
            tau_ans: 1.0,
            seeds: vec![0],
            include_empty: false,
            tune_output_head: true,
            with_ffn: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("attention heads ({heads}) must divide the embedding width ({dim})")]
    BadHeads { heads: usize, dim: usize },
    #[error("no seeds configured")]
    NoSeeds,
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: DiffError },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
}

/// One seed's training trace and selected-model results.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_valid_auc: f64,
    /// Test ROC-AUC of the model selected at `best_epoch`.
    pub test_auc: f64,
    pub metrics: Vec<MetricsRow>,
}

/// Aggregate over seeds plus the overall best model.
#[derive(Debug)]
pub struct RunOutcome {
    pub per_seed: Vec<SeedOutcome>,
    pub test_mean: f64,
    pub test_std: f64,
    /// All seeds' metric rows, concatenated in seed order.
    pub metrics: Vec<MetricsRow>,
    /// Best-validation model across seeds.
    pub model: PromptModel,
}

/// Loss and ROC-AUC of one split under the current model.
fn eval_split(
    model: &PromptModel,
    vocab: &MotifVocabulary,
    ds: &TaskDataset,
    indices: &[usize],
    regime: Regime,
) -> Result<(f64, f64), RunError> {
    let graphs = ds.graphs_of(indices);
    let tasks = ds.task_count;
    let mut per_task: Vec<(Vec<f64>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); tasks];
    let mut ce_sum = 0.0;
    let mut ce_count = 0usize;

    if regime == Regime::Probe {
        for (&idx, g) in indices.iter().zip(&graphs) {
            for task in 0..tasks {
                let Some(label) = ds.records[idx].labels[task] else {
                    continue;
                };
                let logits = model.eval_probe_logits(task, g)?;
                let score = logits[1] - logits[0];
                per_task[task].0.push(score);
                per_task[task].1.push(label);
                let max = logits[0].max(logits[1]);
                let z = (logits[0] - max).exp() + (logits[1] - max).exp();
                let p = (logits[usize::from(label)] - max).exp() / z;
                ce_sum += -p.max(1e-300).ln();
                ce_count += 1;
            }
        }
    } else {
        let outputs = model.eval_outputs(vocab, &graphs)?;
        for ((&idx, _), y) in indices.iter().zip(&graphs).zip(&outputs) {
            for task in 0..tasks {
                let Some(label) = ds.records[idx].labels[task] else {
                    continue;
                };
                let bank = &model.banks[task];
                let sv = bank.score(y, AnswerMode::Infer, 0)?;
                per_task[task].0.push(sv.sims[1] - sv.sims[0]);
                per_task[task].1.push(label);
                ce_sum += -sv.probs[usize::from(label)].max(1e-300).ln();
                ce_count += 1;
            }
        }
    }
    let loss = if ce_count == 0 {
        f64::NAN
    } else {
        ce_sum / ce_count as f64
    };
    let (auc, _) = multi_task_auc(&per_task);
    Ok((loss, auc.unwrap_or(f64::NAN)))
}

/// Initializes one answer bank per task from the training split.
fn init_banks(
    model: &mut PromptModel,
    vocab: &MotifVocabulary,
    ds: &TaskDataset,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(), RunError> {
    let graphs = ds.graphs_of(&ds.split.train);
    let outputs = model.eval_outputs(vocab, &graphs)?;
    let dim = model.output_dim();
    let mut banks = Vec::with_capacity(ds.task_count);
    for task in 0..ds.task_count {
        let labeled: Vec<(Vec<f64>, usize)> = ds
            .split
            .train
            .iter()
            .zip(&outputs)
            .filter_map(|(&idx, y)| {
                ds.records[idx].labels[task].map(|l| (y.clone(), usize::from(l)))
            })
            .collect();
        let mut bank = init_answers(
            &labeled,
            2,
            cfg.ensemble,
            dim,
            cfg.lambda_orth,
            seed.wrapping_add(task as u64),
        )?;
        bank.tau_ans = cfg.tau_ans;
        banks.push(bank);
    }
    model.banks = banks;
    Ok(())
}

/// Index of the motif-table gradient inside the fixed trainable order, when
/// the table trains (the encoder block precedes it when unfrozen).
fn table_grad_position(model: &PromptModel, t: Trainability) -> Option<usize> {
    if !t.table {
        return None;
    }
    Some(if t.encoder {
        3 + 2 * model.encoder.cfg.layers
    } else {
        0
    })
}

struct BatchOutcome {
    loss: f64,
    grads: Vec<Tensor>,
}

/// One optimizer step over a batch of record indices. Returns `None` when the
/// batch contributes no labeled (molecule, task) pairs.
fn run_batch(
    model: &PromptModel,
    vocab: &MotifVocabulary,
    ds: &TaskDataset,
    batch: &[usize],
    t: Trainability,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<BatchOutcome>, DiffError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, t);
    let mut terms: Vec<Var> = Vec::new();

    for &idx in batch {
        let g = &ds.records[idx].graph;
        let draw_seed = rng.gen::<u64>();
        match cfg.regime {
            Regime::Probe => {
                let mut h: Option<Var> = None;
                for task in 0..ds.task_count {
                    let Some(label) = ds.records[idx].labels[task] else {
                        continue;
                    };
                    let h = match h {
                        Some(h) => h,
                        None => {
                            let v = model.forward_h_g(&mut tape, &vars, g)?;
                            h = Some(v);
                            v
                        }
                    };
                    let logits = tape.matmul(h, vars.probes[task])?;
                    let probs = tape.softmax(logits)?;
                    let mut hot = vec![0.0; 2];
                    hot[usize::from(label)] = 1.0;
                    let hot = tape.constant(Tensor::new(vec![1, 2], hot));
                    let picked = tape.mul(probs, hot)?;
                    let p = tape.sum_all(picked)?;
                    let lp = tape.log(p)?;
                    terms.push(tape.scalar_mul(lp, -1.0)?);
                }
            }
            Regime::Molcpt | Regime::Frozen => {
                let mut y: Option<Var> = None;
                for task in 0..ds.task_count {
                    let Some(label) = ds.records[idx].labels[task] else {
                        continue;
                    };
                    let y = match y {
                        Some(y) => y,
                        None => {
                            let v = model.forward_output(&mut tape, &vars, vocab, g)?;
                            y = Some(v);
                            v
                        }
                    };
                    let loss = model.banks[task].answer_loss(
                        &mut tape,
                        vars.banks[task],
                        y,
                        usize::from(label),
                        AnswerMode::Train,
                        draw_seed.wrapping_add(task as u64),
                    )?;
                    terms.push(loss);
                }
            }
            Regime::Zeroshot => unreachable!("zeroshot takes no gradient steps"),
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let mut total = terms[0];
    for &term in &terms[1..] {
        total = tape.add(total, term)?;
    }
    let loss = tape.scalar_mul(total, 1.0 / terms.len() as f64)?;
    let loss_value = tape.value(loss).data[0];
    if !loss_value.is_finite() {
        return Err(DiffError::NonFinite { op: "batch_loss" });
    }

    let grads = tape.backward(loss)?;
    let ordered: Vec<Tensor> = PromptModel::trainable_vars(&vars, t)
        .into_iter()
        .map(|v| grads.wrt(v).clone())
        .collect();
    Ok(Some(BatchOutcome {
        loss: loss_value,
        grads: ordered,
    }))
}

fn run_one_seed(
    base: &PromptModel,
    vocab: &MotifVocabulary,
    ds: &TaskDataset,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(SeedOutcome, PromptModel), RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = base.clone();
    model.include_empty = cfg.include_empty;
    if cfg.regime != Regime::Probe {
        // Fresh attention per seed (the pretrained checkpoint carries no
        // task-specific attention), then data-driven answer initialization.
        model.attn = AttentionParams::init(model.dim(), cfg.heads, cfg.with_ffn, &mut rng);
        init_banks(&mut model, vocab, ds, cfg, seed)?;
    } else {
        model.probes = vec![Tensor::zeros(&[model.dim(), 2]); ds.task_count];
    }

    let t = PromptModel::trainability(cfg.regime, cfg.tune_output_head);
    let mut metrics = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_valid = f64::NEG_INFINITY;
    let mut best_test = f64::NAN;
    let mut best_model = model.clone();

    let record = |model: &PromptModel,
                  epoch: usize,
                  train_loss: Option<f64>,
                  metrics: &mut Vec<MetricsRow>|
     -> Result<(f64, f64), RunError> {
        let (tl, ta) = eval_split(model, vocab, ds, &ds.split.train, cfg.regime)?;
        let (vl, va) = eval_split(model, vocab, ds, &ds.split.valid, cfg.regime)?;
        let (el, ea) = eval_split(model, vocab, ds, &ds.split.test, cfg.regime)?;
        metrics.push(MetricsRow {
            epoch,
            split: "train".into(),
            loss: train_loss.unwrap_or(tl),
            roc_auc: ta,
        });
        metrics.push(MetricsRow {
            epoch,
            split: "valid".into(),
            loss: vl,
            roc_auc: va,
        });
        metrics.push(MetricsRow {
            epoch,
            split: "test".into(),
            loss: el,
            roc_auc: ea,
        });
        Ok((va, ea))
    };

    // Epoch 0 = state before any gradient step (all of zeroshot's output).
    let (va, ea) = record(&model, 0, None, &mut metrics)?;
    if va.is_nan() || va > best_valid {
        best_valid = va;
        best_test = ea;
        best_model = model.clone();
    }

    let epochs = if cfg.regime == Regime::Zeroshot {
        0
    } else {
        cfg.epochs
    };
    let mut adam = AdamState::new(&model.trainable_tensors(t), cfg.lr);
    for epoch in 1..=epochs {
        let mut order = ds.split.train.to_vec();
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let step = run_batch(&model, vocab, ds, batch, t, cfg, &mut rng)
                .map_err(|source| RunError::Diverged { epoch, source })?;
            let Some(mut step) = step else { continue };
            if let Some(pos) = table_grad_position(&model, t) {
                model.table.mask_frozen_grad(&mut step.grads[pos]);
            }
            batch_losses.push(step.loss);
            let grad_refs: Vec<&Tensor> = step.grads.iter().collect();
            let mut params = model.trainable_tensors_mut(t);
            adam.step_refs(&mut params, &grad_refs)
                .map_err(|source| RunError::Diverged { epoch, source })?;
        }
        let train_loss = if batch_losses.is_empty() {
            None
        } else {
            Some(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64)
        };
        let (va, ea) = record(&model, epoch, train_loss, &mut metrics)?;
        if !va.is_nan() && va > best_valid {
            best_valid = va;
            best_test = ea;
            best_epoch = epoch;
            best_model = model.clone();
        }
    }

    Ok((
        SeedOutcome {
            seed,
            best_epoch,
            best_valid_auc: best_valid,
            test_auc: best_test,
            metrics,
        },
        best_model,
    ))
}

/// Trains (or, for zeroshot, merely initializes) `base` on the dataset under
/// every configured seed. Model selection picks the epoch with the best
/// validation ROC-AUC; reported test numbers come from the selected epoch.
pub fn finetune_run(
    ds: &TaskDataset,
    vocab: &MotifVocabulary,
    base: &PromptModel,
    cfg: &RunConfig,
) -> Result<RunOutcome, RunError> {
    if cfg.seeds.is_empty() {
        return Err(RunError::NoSeeds);
    }
    if ds.split.train.is_empty() {
        return Err(RunError::EmptySplit("train"));
    }
    if ds.split.test.is_empty() {
        return Err(RunError::EmptySplit("test"));
    }
    if cfg.regime != Regime::Probe && base.dim() % cfg.heads.max(1) != 0 {
        return Err(RunError::BadHeads {
            heads: cfg.heads,
            dim: base.dim(),
        });
    }

    let mut per_seed = Vec::new();
    let mut all_metrics = Vec::new();
    let mut best: Option<(f64, PromptModel)> = None;
    for &seed in &cfg.seeds {
        let (outcome, model) = run_one_seed(base, vocab, ds, cfg, seed)?;
        all_metrics.extend(outcome.metrics.iter().cloned());
        let better = match &best {
            None => true,
            Some((v, _)) => outcome.best_valid_auc > *v,
        };
        if better {
            best = Some((outcome.best_valid_auc, model));
        }
        per_seed.push(outcome);
    }
    let tests: Vec<f64> = per_seed
        .iter()
        .map(|s| s.test_auc)
        .filter(|v| !v.is_nan())
        .collect();
    let (test_mean, test_std) = if tests.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_std(&tests)
    };
    Ok(RunOutcome {
        per_seed,
        test_mean,
        test_std,
        metrics: all_metrics,
        model: best.expect("at least one seed ran").1,
    })
}

/// Answer-search zero-shot evaluation: class-mean initialization, no steps.
pub fn zeroshot_run(
    ds: &TaskDataset,
    vocab: &MotifVocabulary,
    base: &PromptModel,
    cfg: &RunConfig,
) -> Result<RunOutcome, RunError> {
    let mut cfg = cfg.clone();
    cfg.regime = Regime::Zeroshot;
    finetune_run(ds, vocab, base, &cfg)
}
