//! Continuous prompting: the trainable motif embedding table, the
//! molecule–motif cross attention, and the residual prompt composition
//! h'_G = h_G + e_cpt.
//!
//! The attention treats the (gradient-stopped) molecule embedding as the
//! query and the rows of the matched motifs as keys and values. Row 0 of the
//! table is the empty motif: an all-zero vector standing for "no frequent
//! motif", which makes the prompt vanish exactly for unmatched molecules.

use crate::encoder::{encode_graph, xavier_uniform, EncoderParams, EncoderVars};
use crate::fragment::{motifs_of, MotifVocabulary};
use crate::ndiff::{DiffError, Tape, Tensor, Var};
use crate::smiles::MolGraph;
use rand::Rng;

/// Trainable motif embedding table, |M|×d, row 0 = empty motif.
#[derive(Debug, Clone)]
pub struct MotifTable {
    pub rows: Tensor,
    /// Keep row 0 pinned at zero during training (stricter reading of the
    /// zero-initialization; off by default).
    pub freeze_empty: bool,
}

impl MotifTable {
    pub fn vocab_size(&self) -> usize {
        self.rows.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.rows.shape[1]
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Var {
        let mut t = self.rows.clone();
        t.requires_grad = trainable;
        tape.leaf(t)
    }

    /// Zeroes the empty-motif row of a gradient when the row is frozen.
    pub fn mask_frozen_grad(&self, grad: &mut Tensor) {
        if self.freeze_empty {
            let d = self.dim();
            for c in 0..d {
                grad.data[c] = 0.0;
            }
        }
    }
}

/// Initializes the table from the pretrained encoder: row j ≥ 1 is the
/// encoder's embedding of entry j's representative fragment; row 0 is zero.
pub fn init_motif_table(
    vocab: &MotifVocabulary,
    encoder: &EncoderParams,
) -> Result<MotifTable, DiffError> {
    let d = encoder.dim();
    let mut rows = Tensor::zeros(&[vocab.len(), d]);
    for (j, entry) in vocab.entries().iter().enumerate().skip(1) {
        let rep = entry
            .representative
            .as_ref()
            .expect("non-empty entries carry a representative");
        let mut tape = Tape::new();
        let vars = encoder.register(&mut tape, false);
        let h = encode_graph(&mut tape, &vars, rep)?.graph;
        rows.data[j * d..(j + 1) * d].copy_from_slice(&tape.value(h).data);
    }
    Ok(MotifTable {
        rows,
        freeze_empty: false,
    })
}

/// Ablation initialization: Xavier-uniform rows, except row 0 stays zero.
pub fn init_motif_table_random(
    vocab_size: usize,
    dim: usize,
    rng: &mut impl Rng,
) -> MotifTable {
    let mut rows = xavier_uniform(&[vocab_size, dim], rng);
    for c in 0..dim {
        rows.data[c] = 0.0;
    }
    MotifTable {
        rows,
        freeze_empty: false,
    }
}

/// Optional post-attention feedforward sublayer (residual + parameter-free
/// layer normalization), off by default.
#[derive(Debug, Clone)]
pub struct FfnParams {
    /// d × 2d.
    pub w1: Tensor,
    /// 2d × d.
    pub w2: Tensor,
}

/// Multi-head cross-attention parameters; H·d_h = d, all maps bias-free.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: usize,
    /// Per head, d × d_h.
    pub w_q: Vec<Tensor>,
    pub w_k: Vec<Tensor>,
    pub w_v: Vec<Tensor>,
    /// d × d output projection.
    pub w_o: Tensor,
    pub ffn: Option<FfnParams>,
}

/// Tape handles for registered attention parameters.
#[derive(Debug, Clone)]
pub struct AttentionVars {
    pub heads: usize,
    pub w_q: Vec<Var>,
    pub w_k: Vec<Var>,
    pub w_v: Vec<Var>,
    pub w_o: Var,
    pub ffn: Option<(Var, Var)>,
}

impl AttentionParams {
    pub fn init(dim: usize, heads: usize, with_ffn: bool, rng: &mut impl Rng) -> AttentionParams {
        assert!(heads >= 1 && dim % heads == 0, "width must divide by heads");
        let dh = dim / heads;
        let mut w_q = Vec::with_capacity(heads);
        let mut w_k = Vec::with_capacity(heads);
        let mut w_v = Vec::with_capacity(heads);
        for _ in 0..heads {
            w_q.push(xavier_uniform(&[dim, dh], rng));
        }
        for _ in 0..heads {
            w_k.push(xavier_uniform(&[dim, dh], rng));
        }
        for _ in 0..heads {
            w_v.push(xavier_uniform(&[dim, dh], rng));
        }
        AttentionParams {
            heads,
            w_q,
            w_k,
            w_v,
            w_o: xavier_uniform(&[dim, dim], rng),
            ffn: if with_ffn {
                Some(FfnParams {
                    w1: xavier_uniform(&[dim, 2 * dim], rng),
                    w2: xavier_uniform(&[2 * dim, dim], rng),
                })
            } else {
                None
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.w_o.shape[0]
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        out.extend(self.w_q.iter());
        out.extend(self.w_k.iter());
        out.extend(self.w_v.iter());
        out.push(&self.w_o);
        if let Some(f) = &self.ffn {
            out.push(&f.w1);
            out.push(&f.w2);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.w_q.iter_mut());
        out.extend(self.w_k.iter_mut());
        out.extend(self.w_v.iter_mut());
        out.push(&mut self.w_o);
        if let Some(f) = &mut self.ffn {
            out.push(&mut f.w1);
            out.push(&mut f.w2);
        }
        out
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> AttentionVars {
        let mut reg = |t: &Tensor| {
            let mut c = t.clone();
            c.requires_grad = trainable;
            tape.leaf(c)
        };
        AttentionVars {
            heads: self.heads,
            w_q: self.w_q.iter().map(&mut reg).collect(),
            w_k: self.w_k.iter().map(&mut reg).collect(),
            w_v: self.w_v.iter().map(&mut reg).collect(),
            w_o: reg(&self.w_o),
            ffn: self.ffn.as_ref().map(|f| (reg(&f.w1), reg(&f.w2))),
        }
    }
}

/// Cross-attention output: the prompt vector and per-head attention weights
/// (each a 1×n probability row, kept for diagnostics).
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub e_cpt: Var,
    pub alphas: Vec<Var>,
}

/// Attends from the molecule embedding (query) over motif rows (keys and
/// values). The query passes through stop_gradient here, so no gradient ever
/// reaches the encoder through the attention path; per head,
/// α = softmax(qᵀK/√d_h) and the concatenated head outputs go through W_o.
pub fn cross_attention(
    tape: &mut Tape,
    attn: &AttentionVars,
    h_g: Var,
    motif_rows: Var,
) -> Result<Var, DiffError> {
    Ok(cross_attention_full(tape, attn, h_g, motif_rows)?.e_cpt)
}

pub fn cross_attention_full(
    tape: &mut Tape,
    attn: &AttentionVars,
    h_g: Var,
    motif_rows: Var,
) -> Result<CrossAttention, DiffError> {
    let d = tape.value(h_g).numel();
    let (n, dm) = tape.value(motif_rows).dims2();
    if dm != d {
        return Err(DiffError::ShapeMismatch {
            op: "cross_attention",
            lhs: vec![d],
            rhs: vec![n, dm],
        });
    }
    let dh = d / attn.heads;

    let stopped = tape.stop_gradient(h_g)?;
    let query = tape.reshape(stopped, &[1, d])?;

    let mut heads = Vec::with_capacity(attn.heads);
    let mut alphas = Vec::with_capacity(attn.heads);
    for h in 0..attn.heads {
        let q = tape.matmul(query, attn.w_q[h])?; // 1×d_h
        let k = tape.matmul(motif_rows, attn.w_k[h])?; // n×d_h
        let v = tape.matmul(motif_rows, attn.w_v[h])?; // n×d_h
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?; // 1×n
        let scaled = tape.scalar_mul(scores, 1.0 / (dh as f64).sqrt())?;
        let alpha = tape.softmax(scaled)?;
        let out = tape.matmul(alpha, v)?; // 1×d_h
        heads.push(out);
        alphas.push(alpha);
    }
    let concat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat(&heads, 1)?
    };
    let mut e = tape.matmul(concat, attn.w_o)?; // 1×d

    if let Some((w1, w2)) = attn.ffn {
        // residual feedforward followed by parameter-free layer norm
        let f = tape.matmul(e, w1)?;
        let f = tape.relu(f)?;
        let f = tape.matmul(f, w2)?;
        let sum = tape.add(e, f)?;
        e = layer_norm(tape, sum)?;
    }
    let e_cpt = tape.reshape(e, &[d])?;
    Ok(CrossAttention { e_cpt, alphas })
}

/// Parameter-free layer normalization of a 1×d row: zero mean, unit variance.
fn layer_norm(tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
    let mean = tape.mean_all(x)?;
    let centered = tape.sub(x, mean)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_all(sq)?;
    let eps = tape.constant(Tensor::scalar(1e-8));
    let var = tape.add(var, eps)?;
    let std = tape.sqrt(var)?;
    tape.div(centered, std)
}

/// Vocabulary rows to attend over for `g`: the matched motif indices, or
/// `[0]` (the empty motif) when nothing matches. With `include_empty`, row 0
/// joins the matches instead of being reserved for the no-match case.
pub fn select_motifs(
    g: &MolGraph,
    vocab: &MotifVocabulary,
    include_empty: bool,
) -> Vec<usize> {
    let found = motifs_of(g, vocab, vocab.ruleset);
    if include_empty && found != [0] {
        let mut with = vec![0];
        with.extend(found);
        with
    } else {
        found
    }
}

/// Prompted embedding of one molecule.
#[derive(Debug, Clone)]
pub struct PromptEmbedding {
    /// h'_G = h_G + e_cpt.
    pub h_prime: Var,
    pub h_g: Var,
    pub e_cpt: Var,
    /// Per-head attention rows (1×n probability vectors).
    pub alphas: Vec<Var>,
    /// Vocabulary indices the attention ranged over.
    pub motif_indices: Vec<usize>,
}

/// Encodes `g`, gathers its motif rows, attends, and composes the residual
/// prompt. The encoder gradient flows only through the h_G residual term.
pub fn prompt_embed(
    tape: &mut Tape,
    enc: &EncoderVars,
    table: Var,
    attn: &AttentionVars,
    vocab: &MotifVocabulary,
    g: &MolGraph,
    include_empty: bool,
) -> Result<PromptEmbedding, DiffError> {
    let h_g = encode_graph(tape, enc, g)?.graph;
    let motif_indices = select_motifs(g, vocab, include_empty);
    let rows = tape.gather(table, &motif_indices)?;
    let ca = cross_attention_full(tape, attn, h_g, rows)?;
    let h_prime = tape.add(h_g, ca.e_cpt)?;
    Ok(PromptEmbedding {
        h_prime,
        h_g,
        e_cpt: ca.e_cpt,
        alphas: ca.alphas,
        motif_indices,
    })
}
