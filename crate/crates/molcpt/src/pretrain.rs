//! Self-supervised pretraining: cross-view graph contrastive learning and
//! atom-attribute masking. Both objectives train the encoder plus a small
//! output head that downstream answer search reuses.

use crate::encoder::{encode_graph, EncoderConfig, EncoderParams, EncoderVars, ELEM_CLASSES};
use crate::ndiff::{AdamState, DiffError, Tape, Tensor, Var};
use crate::smiles::{ring_flags, MolGraph};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Projection / probe head sitting on top of the encoder.
#[derive(Debug, Clone)]
pub enum OutputHead {
    /// Two bias-free d×d layers with a relu between: the contrastive
    /// projection into the space where agreement is maximized.
    Contrastive { w1: Tensor, w2: Tensor },
    /// Bias-free d×c logit map used to predict masked element classes.
    Masking { w: Tensor },
}

/// Tape handles for a registered [`OutputHead`].
#[derive(Debug, Clone, Copy)]
pub enum HeadVars {
    Contrastive { w1: Var, w2: Var },
    Masking { w: Var },
}

impl OutputHead {
    pub fn contrastive(dim: usize, rng: &mut impl Rng) -> OutputHead {
        OutputHead::Contrastive {
            w1: crate::encoder::xavier_uniform(&[dim, dim], rng),
            w2: crate::encoder::xavier_uniform(&[dim, dim], rng),
        }
    }

    pub fn masking(dim: usize, rng: &mut impl Rng) -> OutputHead {
        OutputHead::Masking {
            w: crate::encoder::xavier_uniform(&[dim, ELEM_CLASSES], rng),
        }
    }

    /// Output width: d for the contrastive head, c for the masking head.
    pub fn out_dim(&self) -> usize {
        match self {
            OutputHead::Contrastive { w2, .. } => w2.shape[1],
            OutputHead::Masking { w } => w.shape[1],
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            OutputHead::Contrastive { w1, w2 } => vec![w1, w2],
            OutputHead::Masking { w } => vec![w],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            OutputHead::Contrastive { w1, w2 } => vec![w1, w2],
            OutputHead::Masking { w } => vec![w],
        }
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> HeadVars {
        let mut reg = |t: &Tensor| {
            let mut c = t.clone();
            c.requires_grad = trainable;
            tape.leaf(c)
        };
        match self {
            OutputHead::Contrastive { w1, w2 } => HeadVars::Contrastive {
                w1: reg(w1),
                w2: reg(w2),
            },
            OutputHead::Masking { w } => HeadVars::Masking { w: reg(w) },
        }
    }
}

/// Applies a head to a rows×d matrix.
pub fn apply_head(tape: &mut Tape, head: HeadVars, x: Var) -> Result<Var, DiffError> {
    match head {
        HeadVars::Contrastive { w1, w2 } => {
            let h = tape.matmul(x, w1)?;
            let h = tape.relu(h)?;
            tape.matmul(h, w2)
        }
        HeadVars::Masking { w } => tape.matmul(x, w),
    }
}

/// Graph augmentation kinds for contrastive view construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    NodeDrop,
    EdgeDrop,
    AttrMask,
}

/// Picks `k` distinct indices out of `0..n`, deterministically for a seeded RNG.
fn choose(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Produces one perturbed view of `g`. `node_drop` deletes ⌊ratio·|V|⌋ atoms
/// and keeps the largest remaining component; `edge_drop` deletes
/// ⌊ratio·|E|⌋ bonds, preferring non-ring bonds; `attr_mask` marks
/// ⌊ratio·|V|⌋ atoms as masked. The result always keeps at least one atom,
/// and ratio 0 returns the graph unchanged.
pub fn augment(g: &MolGraph, kind: AugmentKind, ratio: f64, seed: u64) -> MolGraph {
    assert!((0.0..1.0).contains(&ratio), "ratio must be in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.atom_count();
    match kind {
        AugmentKind::NodeDrop => {
            let k = ((ratio * n as f64).floor() as usize).min(n.saturating_sub(1));
            if k == 0 {
                return g.clone();
            }
            let removed = choose(n, k, &mut rng);
            let keep: Vec<usize> = (0..n).filter(|v| !removed.contains(v)).collect();
            let (sub, _) = g.induced_subgraph(&keep);
            let comps = sub.components();
            let largest = comps
                .iter()
                .max_by_key(|c| c.len())
                .expect("at least one atom survives");
            let (mut out, _) = sub.induced_subgraph(largest);
            ring_flags(&mut out);
            out
        }
        AugmentKind::EdgeDrop => {
            let e = g.bonds.len();
            let k = (ratio * e as f64).floor() as usize;
            if k == 0 {
                return g.clone();
            }
            let mut non_ring: Vec<usize> = (0..e).filter(|&b| !g.bonds[b].in_ring).collect();
            let mut ring: Vec<usize> = (0..e).filter(|&b| g.bonds[b].in_ring).collect();
            non_ring.shuffle(&mut rng);
            ring.shuffle(&mut rng);
            let removed: std::collections::HashSet<usize> =
                non_ring.into_iter().chain(ring).take(k).collect();
            let mut out = MolGraph::new();
            for atom in &g.atoms {
                out.add_atom(atom.clone());
            }
            for (bi, bond) in g.bonds.iter().enumerate() {
                if !removed.contains(&bi) {
                    out.add_bond(bond.a, bond.b, bond.order);
                }
            }
            ring_flags(&mut out);
            out.source_smiles = g.source_smiles.clone();
            out
        }
        AugmentKind::AttrMask => {
            let k = (ratio * n as f64).floor() as usize;
            let mut out = g.clone();
            for v in choose(n, k, &mut rng) {
                out.atoms[v].masked = true;
            }
            out
        }
    }
}

/// Normalizes rows of `z` (2-D) to unit length, guarding zero rows.
pub(crate) fn normalize_rows(tape: &mut Tape, z: Var) -> Result<Var, DiffError> {
    let rows = tape.value(z).shape[0];
    let sq = tape.mul(z, z)?;
    let sums = tape.sum_axis(sq, 1)?;
    let norms = tape.sqrt(sums)?;
    let eps = tape.constant(Tensor::scalar(1e-12));
    let norms = tape.add(norms, eps)?;
    let col = tape.reshape(norms, &[rows, 1])?;
    tape.div(z, col)
}

/// Normalized-temperature cross entropy over two aligned view batches.
///
/// All 2·batch projected rows form the candidate pool; for each anchor the
/// positive is its partner view and the negatives are every other row. The
/// loss is the mean cross entropy over all anchors and is always ≥ 0.
pub fn ntxent_loss(tape: &mut Tape, z1: Var, z2: Var, tau: f64) -> Result<Var, DiffError> {
    let (n1, d1) = tape.value(z1).dims2();
    let (n2, d2) = tape.value(z2).dims2();
    assert!(n1 == n2 && d1 == d2, "view batches must align");
    assert!(n1 >= 2, "contrastive batch needs at least two molecules");
    assert!(tau > 0.0, "temperature must be positive");
    let n = n1;

    let z = tape.concat(&[z1, z2], 0)?;
    let zn = normalize_rows(tape, z)?;
    let znt = tape.transpose(zn)?;
    let sims = tape.matmul(zn, znt)?;
    let logits = tape.scalar_mul(sims, 1.0 / tau)?;

    // bar each anchor from matching itself
    let mut diag = Tensor::zeros(&[2 * n, 2 * n]);
    for i in 0..2 * n {
        diag.data[i * 2 * n + i] = -1e9;
    }
    let diag = tape.constant(diag);
    let masked = tape.add(logits, diag)?;
    let probs = tape.softmax(masked)?;

    // pick each anchor's positive: row i pairs with row (i+n) mod 2n
    let mut onehot = Tensor::zeros(&[2 * n, 2 * n]);
    for i in 0..2 * n {
        let partner = (i + n) % (2 * n);
        onehot.data[i * 2 * n + partner] = 1.0;
    }
    let onehot = tape.constant(onehot);
    let picked = tape.mul(probs, onehot)?;
    let p_pos = tape.sum_axis(picked, 1)?;
    let logp = tape.log(p_pos)?;
    let mean = tape.mean_all(logp)?;
    tape.scalar_mul(mean, -1.0)
}

/// Attribute-masking loss for one molecule: mask ⌊ratio·|V|⌋ atoms (at least
/// one), encode, and score the masked nodes' logits against their true
/// element classes with mean cross entropy.
pub fn attrmask_loss(
    tape: &mut Tape,
    enc: &EncoderVars,
    head: HeadVars,
    g: &MolGraph,
    mask_ratio: f64,
    seed: u64,
) -> Result<Var, DiffError> {
    assert!(
        matches!(head, HeadVars::Masking { .. }),
        "attribute masking needs the masking head"
    );
    let n = g.atom_count();
    let k = ((mask_ratio * n as f64).floor() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = choose(n, k, &mut rng);

    let mut masked_g = g.clone();
    for &v in &chosen {
        masked_g.atoms[v].masked = true;
    }
    let encoding = encode_graph(tape, enc, &masked_g)?;
    let rows = tape.gather(encoding.nodes, &chosen)?;
    let logits = apply_head(tape, head, rows)?;
    let probs = tape.softmax(logits)?;

    let mut onehot = Tensor::zeros(&[k, ELEM_CLASSES]);
    for (i, &v) in chosen.iter().enumerate() {
        onehot.data[i * ELEM_CLASSES + g.atoms[v].element as usize] = 1.0;
    }
    let onehot = tape.constant(onehot);
    let picked = tape.mul(probs, onehot)?;
    let p_true = tape.sum_axis(picked, 1)?;
    let logp = tape.log(p_true)?;
    let mean = tape.mean_all(logp)?;
    tape.scalar_mul(mean, -1.0)
}

/// Fraction of atoms whose element the masking head recovers when each atom
/// of `g` is masked on its own.
pub fn attrmask_accuracy(params: &EncoderParams, head: &OutputHead, g: &MolGraph) -> f64 {
    let n = g.atom_count();
    let mut correct = 0usize;
    for v in 0..n {
        let mut masked_g = g.clone();
        masked_g.atoms[v].masked = true;
        let mut tape = Tape::new();
        let enc = params.register(&mut tape, false);
        let hv = head.register(&mut tape, false);
        let encoding = encode_graph(&mut tape, &enc, &masked_g).expect("forward pass");
        let rows = tape.gather(encoding.nodes, &[v]).expect("gather");
        let logits = apply_head(&mut tape, hv, rows).expect("head");
        let row = tape.value(logits);
        let argmax = row
            .data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == g.atoms[v].element as usize {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainTask {
    Contrastive,
    AttrMask,
}

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub encoder: EncoderConfig,
    pub lr: f64,
    pub batch_size: usize,
    /// Contrastive temperature.
    pub tau: f64,
    /// Fraction of atoms hidden by the masking objective.
    pub mask_ratio: f64,
    pub augment_kind: AugmentKind,
    pub augment_ratio: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            encoder: EncoderConfig::default(),
            lr: 1e-3,
            batch_size: 32,
            tau: 0.1,
            mask_ratio: 0.15,
            augment_kind: AugmentKind::NodeDrop,
            augment_ratio: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub params: EncoderParams,
    pub head: OutputHead,
    /// Mean batch loss per epoch, in order.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("pretraining corpus is empty")]
    EmptyCorpus,
    #[error("contrastive pretraining needs at least two molecules")]
    CorpusTooSmall,
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged { epoch: usize, source: DiffError },
}

/// Trains encoder and head with Adam over the corpus. Deterministic for a
/// fixed seed; aborts with [`PretrainError::Diverged`] if any loss stops
/// being finite.
pub fn pretrain_run(
    corpus: &[MolGraph],
    task: PretrainTask,
    epochs: usize,
    config: &PretrainConfig,
) -> Result<PretrainOutcome, PretrainError> {
    if corpus.is_empty() {
        return Err(PretrainError::EmptyCorpus);
    }
    if task == PretrainTask::Contrastive && corpus.len() < 2 {
        return Err(PretrainError::CorpusTooSmall);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = EncoderParams::init(config.encoder, &mut rng);
    let mut head = match task {
        PretrainTask::Contrastive => OutputHead::contrastive(config.encoder.dim, &mut rng),
        PretrainTask::AttrMask => OutputHead::masking(config.encoder.dim, &mut rng),
    };

    let all: Vec<Tensor> = params
        .tensors()
        .into_iter()
        .chain(head.tensors())
        .cloned()
        .collect();
    let mut adam = AdamState::new(&all, config.lr);
    let mut epoch_losses = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();

        for chunk in order.chunks(config.batch_size.max(1)) {
            if task == PretrainTask::Contrastive && chunk.len() < 2 {
                continue; // a singleton batch has no negatives
            }
            let step = run_batch(corpus, chunk, task, config, &params, &head, &mut rng)
                .map_err(|source| PretrainError::Diverged { epoch, source })?;
            batch_losses.push(step.loss);

            let grads: Vec<&Tensor> = step.grads.iter().collect();
            let mut refs: Vec<&mut Tensor> = params
                .tensors_mut()
                .into_iter()
                .chain(head.tensors_mut())
                .collect();
            adam.step_refs(&mut refs, &grads)
                .map_err(|source| PretrainError::Diverged { epoch, source })?;
        }
        let mean = batch_losses.iter().sum::<f64>() / batch_losses.len().max(1) as f64;
        if !mean.is_finite() {
            return Err(PretrainError::Diverged {
                epoch,
                source: DiffError::NonFinite { op: "epoch_loss" },
            });
        }
        epoch_losses.push(mean);
    }
    Ok(PretrainOutcome {
        params,
        head,
        epoch_losses,
    })
}

struct BatchStep {
    loss: f64,
    grads: Vec<Tensor>,
}

fn run_batch(
    corpus: &[MolGraph],
    chunk: &[usize],
    task: PretrainTask,
    config: &PretrainConfig,
    params: &EncoderParams,
    head: &OutputHead,
    rng: &mut ChaCha8Rng,
) -> Result<BatchStep, DiffError> {
    let mut tape = Tape::new();
    let enc = params.register(&mut tape, true);
    let hv = head.register(&mut tape, true);
    let d = params.dim();

    let loss = match task {
        PretrainTask::Contrastive => {
            let mut rows1 = Vec::new();
            let mut rows2 = Vec::new();
            for &i in chunk {
                for rows in [&mut rows1, &mut rows2] {
                    let view = augment(&corpus[i], config.augment_kind, config.augment_ratio, rng.gen());
                    let h = encode_graph(&mut tape, &enc, &view)?.graph;
                    rows.push(tape.reshape(h, &[1, d])?);
                }
            }
            let z1 = tape.concat(&rows1, 0)?;
            let z2 = tape.concat(&rows2, 0)?;
            let p1 = apply_head(&mut tape, hv, z1)?;
            let p2 = apply_head(&mut tape, hv, z2)?;
            ntxent_loss(&mut tape, p1, p2, config.tau)?
        }
        PretrainTask::AttrMask => {
            let mut total: Option<Var> = None;
            for &i in chunk {
                let li = attrmask_loss(&mut tape, &enc, hv, &corpus[i], config.mask_ratio, rng.gen())?;
                total = Some(match total {
                    Some(acc) => tape.add(acc, li)?,
                    None => li,
                });
            }
            let total = total.expect("non-empty chunk");
            tape.scalar_mul(total, 1.0 / chunk.len() as f64)?
        }
    };

    let loss_value = tape.value(loss).item();
    let grads_all = tape.backward(loss)?;
    let mut vars: Vec<Var> = vec![enc.elem_table, enc.arom_table, enc.bond_table];
    for &(w1, w2) in &enc.layers {
        vars.push(w1);
        vars.push(w2);
    }
    match hv {
        HeadVars::Contrastive { w1, w2 } => {
            vars.push(w1);
            vars.push(w2);
        }
        HeadVars::Masking { w } => vars.push(w),
    }
    let grads = vars.iter().map(|&v| grads_all.wrt(v).clone()).collect();
    Ok(BatchStep {
        loss: loss_value,
        grads,
    })
}
