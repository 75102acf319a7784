//! K-layer GIN message-passing encoder with mean readout.
//!
//! Node features start as `elem_table[element] + arom_table[aromatic]`; a
//! masked atom (attribute-masking pretraining) uses the reserved MASK row 0
//! of the element table instead of its element row, keeping its aromatic
//! term. Each layer computes `m_v = x_v + Σ_{u∈N_v} (x_u + bond_table[order])`
//! followed by a bias-free two-layer MLP with hidden width 2d. The graph
//! embedding is the mean of the final node rows.

use crate::fragment::Motif;
use crate::ndiff::{DiffError, Tape, Tensor, Var};
use crate::smiles::MolGraph;

/// Element-table rows: MASK at 0, then atomic numbers 1..=118. This is also
/// the class count `c` of the attribute-masking head.
pub const ELEM_CLASSES: usize = 119;
/// Reserved element-table row used for masked atoms.
pub const MASK_ROW: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Message-passing depth K; 0 means readout of the initial features.
    pub layers: usize,
    /// Hidden width d.
    pub dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { layers: 5, dim: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct GinLayer {
    /// d × 2d.
    pub w1: Tensor,
    /// 2d × d.
    pub w2: Tensor,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub cfg: EncoderConfig,
    /// ELEM_CLASSES × d; row 0 = MASK.
    pub elem_table: Tensor,
    /// 2 × d, indexed by the aromatic flag.
    pub arom_table: Tensor,
    /// 4 × d, indexed by bond order.
    pub bond_table: Tensor,
    pub layers: Vec<GinLayer>,
}

/// Tape handles for registered encoder parameters.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub elem_table: Var,
    pub arom_table: Var,
    pub bond_table: Var,
    pub layers: Vec<(Var, Var)>,
}

/// Xavier-uniform init for a rank-2 tensor.
pub fn xavier_uniform(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor {
    assert_eq!(shape.len(), 2);
    let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    let data = (0..shape.iter().product())
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

impl EncoderParams {
    pub fn init(cfg: EncoderConfig, rng: &mut impl rand::Rng) -> EncoderParams {
        assert!(cfg.dim >= 1, "width must be positive");
        let d = cfg.dim;
        EncoderParams {
            cfg,
            elem_table: xavier_uniform(&[ELEM_CLASSES, d], rng),
            arom_table: xavier_uniform(&[2, d], rng),
            bond_table: xavier_uniform(&[4, d], rng),
            layers: (0..cfg.layers)
                .map(|_| GinLayer {
                    w1: xavier_uniform(&[d, 2 * d], rng),
                    w2: xavier_uniform(&[2 * d, d], rng),
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// All parameter tensors in a fixed, documented order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.elem_table, &self.arom_table, &self.bond_table];
        for l in &self.layers {
            out.push(&l.w1);
            out.push(&l.w2);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.elem_table,
            &mut self.arom_table,
            &mut self.bond_table,
        ];
        for l in &mut self.layers {
            out.push(&mut l.w1);
            out.push(&mut l.w2);
        }
        out
    }

    /// Registers every parameter on a tape. `trainable` decides whether
    /// gradients flow (frozen-encoder regimes register with `false`).
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let mut reg = |t: &Tensor| {
            let mut c = t.clone();
            c.requires_grad = trainable;
            tape.leaf(c)
        };
        EncoderVars {
            elem_table: reg(&self.elem_table),
            arom_table: reg(&self.arom_table),
            bond_table: reg(&self.bond_table),
            layers: self
                .layers
                .iter()
                .map(|l| (reg(&l.w1), reg(&l.w2)))
                .collect(),
        }
    }
}

/// Initial node features: x_v = elem_table[element or MASK] + arom_table[flag].
pub fn init_features(
    tape: &mut Tape,
    vars: &EncoderVars,
    g: &MolGraph,
) -> Result<Var, DiffError> {
    let elem_idx: Vec<usize> = g
        .atoms
        .iter()
        .map(|a| if a.masked { MASK_ROW } else { a.element as usize })
        .collect();
    let arom_idx: Vec<usize> = g.atoms.iter().map(|a| a.aromatic as usize).collect();
    let e = tape.gather(vars.elem_table, &elem_idx)?;
    let a = tape.gather(vars.arom_table, &arom_idx)?;
    tape.add(e, a)
}

/// Constant neighbor-sum matrix S (S·x sums neighbor rows) and bond-count
/// matrix B (B·bond_table sums the incident bond-order embeddings).
fn message_constants(tape: &mut Tape, g: &MolGraph) -> (Var, Var) {
    let n = g.atom_count();
    let mut s = Tensor::zeros(&[n, n]);
    let mut b = Tensor::zeros(&[n, 4]);
    for (v, nbrs) in g.adjacency.iter().enumerate() {
        for &(u, bi) in nbrs {
            s.data[v * n + u] += 1.0;
            b.data[v * 4 + g.bonds[bi].order.index()] += 1.0;
        }
    }
    (tape.constant(s), tape.constant(b))
}

/// One GIN layer: MLP_k(x_v + Σ_u (x_u + bond_table[order(u,v)])).
pub fn gin_layer(
    tape: &mut Tape,
    vars: &EncoderVars,
    g: &MolGraph,
    layer: usize,
    x: Var,
) -> Result<Var, DiffError> {
    let (s, b) = message_constants(tape, g);
    gin_layer_with(tape, vars, layer, x, s, b)
}

fn gin_layer_with(
    tape: &mut Tape,
    vars: &EncoderVars,
    layer: usize,
    x: Var,
    s: Var,
    b: Var,
) -> Result<Var, DiffError> {
    let (w1, w2) = vars.layers[layer];
    let neighbor_sum = tape.matmul(s, x)?;
    let bond_sum = tape.matmul(b, vars.bond_table)?;
    let m = tape.add(x, neighbor_sum)?;
    let m = tape.add(m, bond_sum)?;
    let h = tape.matmul(m, w1)?;
    let h = tape.relu(h)?;
    tape.matmul(h, w2)
}

/// Output of [`encode_graph`]: mean-pooled graph vector and the per-node
/// matrix (kept for the masking objective).
#[derive(Debug, Clone, Copy)]
pub struct GraphEncoding {
    /// Shape (d,).
    pub graph: Var,
    /// Shape |V| × d.
    pub nodes: Var,
}

/// Runs K layers and mean-pools the node rows.
pub fn encode_graph(
    tape: &mut Tape,
    vars: &EncoderVars,
    g: &MolGraph,
) -> Result<GraphEncoding, DiffError> {
    let mut x = init_features(tape, vars, g)?;
    if !vars.layers.is_empty() {
        let (s, b) = message_constants(tape, g);
        for layer in 0..vars.layers.len() {
            x = gin_layer_with(tape, vars, layer, x, s, b)?;
        }
    }
    let graph = tape.mean_axis(x, 0)?;
    Ok(GraphEncoding { graph, nodes: x })
}

/// Motif embedding: the fragment encoded as a standalone graph. The empty
/// motif never reaches the encoder (the prompt table holds its zero row).
pub fn encode_motif(
    tape: &mut Tape,
    vars: &EncoderVars,
    motif: &Motif,
) -> Result<Var, DiffError> {
    assert!(
        motif.subgraph.atom_count() > 0,
        "the empty motif has no graph to encode"
    );
    Ok(encode_graph(tape, vars, &motif.subgraph)?.graph)
}
