//! The full trainable model: encoder, motif table, cross attention, output
//! head, per-task answer banks, and per-task linear probe classifiers.

use crate::answer::AnswerBank;
use crate::encoder::{encode_graph, EncoderParams};
use crate::fragment::MotifVocabulary;
use crate::ndiff::{DiffError, Tape, Tensor, Var};
use crate::pretrain::{apply_head, HeadVars, OutputHead};
use crate::prompt::{init_motif_table, prompt_embed, AttentionParams, AttentionVars, MotifTable};
use crate::smiles::MolGraph;

use super::train::Regime;

/// Number of evaluation worker threads: `MOLCPT_THREADS` if set (minimum 1),
/// otherwise the machine's available parallelism.
pub fn eval_threads() -> usize {
    match std::env::var("MOLCPT_THREADS") {
        Ok(v) => v.trim().parse::<usize>().unwrap_or(1).max(1),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

/// All trainable state of one run.
#[derive(Debug, Clone)]
pub struct PromptModel {
    pub encoder: EncoderParams,
    pub table: MotifTable,
    pub attn: AttentionParams,
    pub head: OutputHead,
    /// One answer bank per task; empty until initialized.
    pub banks: Vec<AnswerBank>,
    /// One zero-initialized d×2 linear classifier per task (the baseline).
    pub probes: Vec<Tensor>,
    /// Whether the empty motif participates in attention.
    pub include_empty: bool,
}

/// Tape handles for the model's tensors; `None` entries were not registered.
pub struct ModelVars {
    pub enc: crate::encoder::EncoderVars,
    pub table: Var,
    pub attn: AttentionVars,
    pub head: HeadVars,
    pub banks: Vec<Var>,
    pub probes: Vec<Var>,
}

impl PromptModel {
    /// Assembles a model around a (typically pretrained) encoder and head.
    /// The motif table starts at the encoder's embeddings of the vocabulary
    /// representatives; probes start at zero.
    pub fn new(
        encoder: EncoderParams,
        head: OutputHead,
        vocab: &MotifVocabulary,
        attn_heads: usize,
        with_ffn: bool,
        task_count: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<PromptModel, DiffError> {
        let table = init_motif_table(vocab, &encoder)?;
        let attn = AttentionParams::init(encoder.dim(), attn_heads, with_ffn, rng);
        let probes = vec![Tensor::zeros(&[encoder.dim(), 2]); task_count];
        Ok(PromptModel {
            encoder,
            table,
            attn,
            head,
            banks: Vec::new(),
            probes,
            include_empty: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    /// Output dimensionality of `f_output`.
    pub fn output_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn task_count(&self) -> usize {
        self.probes.len()
    }

    /// Whether a parameter family trains under `regime`.
    /// `tune_output_head` only applies when the encoder itself is unfrozen.
    pub fn trainability(regime: Regime, tune_output_head: bool) -> Trainability {
        match regime {
            Regime::Probe => Trainability {
                encoder: false,
                table: false,
                attn: false,
                head: false,
                banks: false,
                probes: true,
            },
            Regime::Molcpt => Trainability {
                encoder: true,
                table: true,
                attn: true,
                head: tune_output_head,
                banks: true,
                probes: false,
            },
            Regime::Frozen => Trainability {
                encoder: false,
                table: true,
                attn: true,
                head: false,
                banks: true,
                probes: false,
            },
            Regime::Zeroshot => Trainability {
                encoder: false,
                table: false,
                attn: false,
                head: false,
                banks: false,
                probes: false,
            },
        }
    }

    /// Registers every tensor on `tape` with the regime's trainable flags.
    pub fn register(&self, tape: &mut Tape, t: Trainability) -> ModelVars {
        let enc = self.encoder.register(tape, t.encoder);
        let table = self.table.register(tape, t.table);
        let attn = self.attn.register(tape, t.attn);
        let head = self.head.register(tape, t.head);
        let banks = self
            .banks
            .iter()
            .map(|b| b.register(tape, t.banks))
            .collect();
        let probes = self
            .probes
            .iter()
            .map(|p| {
                let mut c = p.clone();
                c.requires_grad = t.probes;
                tape.leaf(c)
            })
            .collect();
        ModelVars {
            enc,
            table,
            attn,
            head,
            banks,
            probes,
        }
    }

    /// Tape vars of the trainable families, in the fixed parameter order
    /// (encoder, table, attention, head, banks, probes).
    pub fn trainable_vars(vars: &ModelVars, t: Trainability) -> Vec<Var> {
        let mut out = Vec::new();
        if t.encoder {
            out.extend([vars.enc.elem_table, vars.enc.arom_table, vars.enc.bond_table]);
            for &(w1, w2) in &vars.enc.layers {
                out.push(w1);
                out.push(w2);
            }
        }
        if t.table {
            out.push(vars.table);
        }
        if t.attn {
            out.extend(vars.attn.w_q.iter().copied());
            out.extend(vars.attn.w_k.iter().copied());
            out.extend(vars.attn.w_v.iter().copied());
            out.push(vars.attn.w_o);
            if let Some((w1, w2)) = vars.attn.ffn {
                out.push(w1);
                out.push(w2);
            }
        }
        if t.head {
            match vars.head {
                HeadVars::Contrastive { w1, w2 } => out.extend([w1, w2]),
                HeadVars::Masking { w } => out.push(w),
            }
        }
        if t.banks {
            out.extend(vars.banks.iter().copied());
        }
        if t.probes {
            out.extend(vars.probes.iter().copied());
        }
        out
    }

    /// Mutable references to the same tensors, in the same order as
    /// [`PromptModel::trainable_vars`]; feeds the optimizer.
    pub fn trainable_tensors_mut(&mut self, t: Trainability) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        if t.encoder {
            out.extend(self.encoder.tensors_mut());
        }
        if t.table {
            out.push(&mut self.table.rows);
        }
        if t.attn {
            out.extend(self.attn.tensors_mut());
        }
        if t.head {
            out.extend(self.head.tensors_mut());
        }
        if t.banks {
            for b in &mut self.banks {
                out.extend(b.tensors_mut());
            }
        }
        if t.probes {
            out.extend(self.probes.iter_mut());
        }
        out
    }

    /// Snapshot of the trainable tensors for optimizer sizing.
    pub fn trainable_tensors(&self, t: Trainability) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = Vec::new();
        if t.encoder {
            out.extend(self.encoder.tensors().into_iter().cloned());
        }
        if t.table {
            out.push(self.table.rows.clone());
        }
        if t.attn {
            out.extend(self.attn.tensors().into_iter().cloned());
        }
        if t.head {
            out.extend(self.head.tensors().into_iter().cloned());
        }
        if t.banks {
            for b in &self.banks {
                out.extend(b.tensors().into_iter().cloned());
            }
        }
        if t.probes {
            out.extend(self.probes.iter().cloned());
        }
        out
    }

    /// Prompted model output y' for one molecule on an existing tape:
    /// `f_output(h_G + e_cpt)` as a 1×out_dim row.
    pub fn forward_output(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        vocab: &MotifVocabulary,
        g: &MolGraph,
    ) -> Result<Var, DiffError> {
        let pe = prompt_embed(
            tape,
            &vars.enc,
            vars.table,
            &vars.attn,
            vocab,
            g,
            self.include_empty,
        )?;
        let row = tape.reshape(pe.h_prime, &[1, self.dim()])?;
        apply_head(tape, vars.head, row)
    }

    /// Plain graph embedding h_G as a 1×d row (the probe's input).
    pub fn forward_h_g(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        g: &MolGraph,
    ) -> Result<Var, DiffError> {
        let h = encode_graph(tape, &vars.enc, g)?.graph;
        tape.reshape(h, &[1, self.dim()])
    }

    /// Evaluates y' for one molecule without building gradients.
    pub fn eval_output(&self, vocab: &MotifVocabulary, g: &MolGraph) -> Result<Vec<f64>, DiffError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, Self::trainability(Regime::Zeroshot, false));
        let y = self.forward_output(&mut tape, &vars, vocab, g)?;
        Ok(tape.value(y).data.clone())
    }

    /// Probe logits (length 2) for one molecule and task.
    pub fn eval_probe_logits(&self, task: usize, g: &MolGraph) -> Result<Vec<f64>, DiffError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, Self::trainability(Regime::Zeroshot, false));
        let h = self.forward_h_g(&mut tape, &vars, g)?;
        let logits = tape.matmul(h, vars.probes[task])?;
        Ok(tape.value(logits).data.clone())
    }

    /// y' for many molecules, fanned out over [`eval_threads`] workers.
    /// Results are ordered like the input regardless of thread count.
    pub fn eval_outputs(
        &self,
        vocab: &MotifVocabulary,
        graphs: &[&MolGraph],
    ) -> Result<Vec<Vec<f64>>, DiffError> {
        let threads = eval_threads().min(graphs.len().max(1));
        if threads <= 1 {
            return graphs.iter().map(|g| self.eval_output(vocab, g)).collect();
        }
        let chunk = graphs.len().div_ceil(threads);
        let mut out: Vec<Result<Vec<Vec<f64>>, DiffError>> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for piece in graphs.chunks(chunk) {
                handles.push(scope.spawn(move || {
                    piece
                        .iter()
                        .map(|g| self.eval_output(vocab, g))
                        .collect::<Result<Vec<_>, _>>()
                }));
            }
            for h in handles {
                out.push(h.join().expect("evaluation worker panicked"));
            }
        });
        let mut flat = Vec::with_capacity(graphs.len());
        for piece in out {
            flat.extend(piece?);
        }
        Ok(flat)
    }
}

/// Per-family trainable flags; see [`PromptModel::trainability`].
#[derive(Debug, Clone, Copy)]
pub struct Trainability {
    pub encoder: bool,
    pub table: bool,
    pub attn: bool,
    pub head: bool,
    pub banks: bool,
    pub probes: bool,
}
