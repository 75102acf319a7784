//! Binary model checkpoints.
//!
//! Layout: magic bytes `MCPT`, a 32-bit little-endian format version, then a
//! sequence of named sections (`u32` name length, UTF-8 name, `u64` payload
//! length, payload). Tensors are stored as `u32` rank, `u32` dimensions, and
//! row-major 64-bit little-endian floats. A checkpoint may be bound to a
//! motif vocabulary via a SHA-256 hash of its text form; loading against a
//! different vocabulary fails.

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::AnswerBank;
use crate::encoder::{EncoderConfig, EncoderParams, GinLayer};
use crate::fragment::{CleavageRules, MotifVocabulary};
use crate::ndiff::Tensor;
use crate::pretrain::OutputHead;
use crate::prompt::{AttentionParams, FfnParams, MotifTable};

use super::model::PromptModel;

const MAGIC: &[u8; 4] = b"MCPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint file is truncated")]
    Truncated,
    #[error("checkpoint is missing section {0:?}")]
    MissingSection(String),
    #[error("section {0:?} is malformed")]
    MalformedSection(String),
    #[error("checkpoint was saved against a different motif vocabulary")]
    VocabHashMismatch,
}

/// SHA-256 of the vocabulary's canonical text form.
pub fn vocab_hash(vocab: &MotifVocabulary) -> [u8; 32] {
    let digest = Sha256::digest(vocab.to_text().as_bytes());
    digest.into()
}

/// A model plus its vocabulary binding and originating seed.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: PromptModel,
    /// All zeros when the model is not bound to a vocabulary (pretraining
    /// stage); otherwise [`vocab_hash`] of the vocabulary it was built with.
    pub vocab_hash: [u8; 32],
    pub seed: u64,
}

impl Checkpoint {
    /// Vocabulary-free checkpoint (encoder + head from pretraining).
    pub fn unbound(model: PromptModel, seed: u64) -> Checkpoint {
        Checkpoint {
            model,
            vocab_hash: [0u8; 32],
            seed,
        }
    }

    /// Checkpoint bound to the vocabulary its motif table was built from.
    pub fn bound(model: PromptModel, vocab: &MotifVocabulary, seed: u64) -> Checkpoint {
        Checkpoint {
            model,
            vocab_hash: vocab_hash(vocab),
            seed,
        }
    }

    pub fn is_bound(&self) -> bool {
        self.vocab_hash != [0u8; 32]
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_section(buf: &mut Vec<u8>, name: &str, payload: &[u8]) {
    push_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    push_u64(buf, payload.len() as u64);
    buf.extend_from_slice(payload);
}

fn tensor_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.shape.len() + 8 * t.data.len());
    push_u32(&mut out, t.shape.len() as u32);
    for &d in &t.shape {
        push_u32(&mut out, d as u32);
    }
    for &v in &t.data {
        push_f64(&mut out, v);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Reader<'a> {
        Reader { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn parse_tensor(name: &str, payload: &[u8]) -> Result<Tensor, CheckpointError> {
    let mut r = Reader::new(payload);
    let malformed = || CheckpointError::MalformedSection(name.to_string());
    let rank = r.u32()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(r.f64()?);
    }
    if !r.done() {
        return Err(malformed());
    }
    Ok(Tensor::new(shape, data))
}

struct Meta {
    layers: usize,
    dim: usize,
    heads: usize,
    ensemble: usize,
    task_count: usize,
    bank_count: usize,
    rules: CleavageRules,
    include_empty: bool,
    freeze_empty: bool,
    head_is_masking: bool,
    with_ffn: bool,
    seed: u64,
    lambda_orth: f64,
    tau_ans: f64,
}

fn meta_bytes(ck: &Checkpoint, rules: CleavageRules) -> Vec<u8> {
    let m = &ck.model;
    let ensemble = m.banks.first().map(|b| b.ensemble()).unwrap_or(1);
    let lambda = m.banks.first().map(|b| b.lambda_orth).unwrap_or(0.0);
    let tau = m.banks.first().map(|b| b.tau_ans).unwrap_or(1.0);
    let mut out = Vec::new();
    push_u32(&mut out, m.encoder.cfg.layers as u32);
    push_u32(&mut out, m.encoder.cfg.dim as u32);
    push_u32(&mut out, m.attn.heads as u32);
    push_u32(&mut out, ensemble as u32);
    push_u32(&mut out, m.output_dim() as u32);
    push_u32(&mut out, m.task_count() as u32);
    push_u32(&mut out, m.banks.len() as u32);
    out.push(match rules {
        CleavageRules::Simple => 0,
        CleavageRules::Brics16 => 1,
    });
    out.push(u8::from(m.include_empty));
    out.push(u8::from(m.table.freeze_empty));
    out.push(u8::from(matches!(m.head, OutputHead::Masking { .. })));
    out.push(u8::from(m.attn.ffn.is_some()));
    out.push(u8::from(ck.is_bound()));
    push_u64(&mut out, ck.seed);
    push_f64(&mut out, lambda);
    push_f64(&mut out, tau);
    out
}

fn parse_meta(payload: &[u8]) -> Result<Meta, CheckpointError> {
    let mut r = Reader::new(payload);
    let layers = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let heads = r.u32()? as usize;
    let ensemble = r.u32()? as usize;
    let _out_dim = r.u32()? as usize;
    let task_count = r.u32()? as usize;
    let bank_count = r.u32()? as usize;
    let rules = if r.u8()? == 1 {
        CleavageRules::Brics16
    } else {
        CleavageRules::Simple
    };
    let include_empty = r.u8()? != 0;
    let freeze_empty = r.u8()? != 0;
    let head_is_masking = r.u8()? != 0;
    let with_ffn = r.u8()? != 0;
    let _bound = r.u8()? != 0;
    let seed = r.u64()?;
    let lambda_orth = r.f64()?;
    let tau_ans = r.f64()?;
    if !r.done() {
        return Err(CheckpointError::MalformedSection("meta".to_string()));
    }
    Ok(Meta {
        layers,
        dim,
        heads,
        ensemble,
        task_count,
        bank_count,
        rules,
        include_empty,
        freeze_empty,
        head_is_masking,
        with_ffn,
        seed,
        lambda_orth,
        tau_ans,
    })
}

/// Serializes the checkpoint; `rules` records which cleavage rule set the
/// bound vocabulary (if any) was built with.
pub fn save_checkpoint(
    ck: &Checkpoint,
    rules: CleavageRules,
    path: &Path,
) -> Result<(), CheckpointError> {
    let m = &ck.model;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);

    push_section(&mut buf, "meta", &meta_bytes(ck, rules));
    push_section(&mut buf, "vocab_hash", &ck.vocab_hash);

    push_section(&mut buf, "enc.elem", &tensor_bytes(&m.encoder.elem_table));
    push_section(&mut buf, "enc.arom", &tensor_bytes(&m.encoder.arom_table));
    push_section(&mut buf, "enc.bond", &tensor_bytes(&m.encoder.bond_table));
    for (i, layer) in m.encoder.layers.iter().enumerate() {
        push_section(&mut buf, &format!("enc.layer{i}.w1"), &tensor_bytes(&layer.w1));
        push_section(&mut buf, &format!("enc.layer{i}.w2"), &tensor_bytes(&layer.w2));
    }
    push_section(&mut buf, "table", &tensor_bytes(&m.table.rows));
    for h in 0..m.attn.heads {
        push_section(&mut buf, &format!("attn.q{h}"), &tensor_bytes(&m.attn.w_q[h]));
        push_section(&mut buf, &format!("attn.k{h}"), &tensor_bytes(&m.attn.w_k[h]));
        push_section(&mut buf, &format!("attn.v{h}"), &tensor_bytes(&m.attn.w_v[h]));
    }
    push_section(&mut buf, "attn.o", &tensor_bytes(&m.attn.w_o));
    if let Some(ffn) = &m.attn.ffn {
        push_section(&mut buf, "attn.ffn1", &tensor_bytes(&ffn.w1));
        push_section(&mut buf, "attn.ffn2", &tensor_bytes(&ffn.w2));
    }
    match &m.head {
        OutputHead::Contrastive { w1, w2 } => {
            push_section(&mut buf, "head.w1", &tensor_bytes(w1));
            push_section(&mut buf, "head.w2", &tensor_bytes(w2));
        }
        OutputHead::Masking { w } => {
            push_section(&mut buf, "head.w", &tensor_bytes(w));
        }
    }
    for (i, bank) in m.banks.iter().enumerate() {
        push_section(&mut buf, &format!("bank{i}"), &tensor_bytes(bank.rows()));
    }
    for (i, probe) in m.probes.iter().enumerate() {
        push_section(&mut buf, &format!("probe{i}"), &tensor_bytes(probe));
    }

    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a checkpoint back. When `expect_vocab` is given and the checkpoint
/// is vocabulary-bound, the hash must match. Returns the checkpoint and the
/// rule set recorded at save time.
pub fn load_checkpoint(
    path: &Path,
    expect_vocab: Option<&MotifVocabulary>,
) -> Result<(Checkpoint, CleavageRules), CheckpointError> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut sections: HashMap<String, &[u8]> = HashMap::new();
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::MalformedSection("<name>".to_string()))?
            .to_string();
        let payload_len = r.u64()? as usize;
        let payload = r.take(payload_len)?;
        sections.insert(name, payload);
    }
    let section = |name: &str| -> Result<&[u8], CheckpointError> {
        sections
            .get(name)
            .copied()
            .ok_or_else(|| CheckpointError::MissingSection(name.to_string()))
    };
    let tensor = |name: &str| -> Result<Tensor, CheckpointError> {
        parse_tensor(name, section(name)?)
    };

    let meta = parse_meta(section("meta")?)?;
    let hash_bytes = section("vocab_hash")?;
    let vocab_hash: [u8; 32] = hash_bytes
        .try_into()
        .map_err(|_| CheckpointError::MalformedSection("vocab_hash".to_string()))?;

    let mut layers = Vec::with_capacity(meta.layers);
    for i in 0..meta.layers {
        layers.push(GinLayer {
            w1: tensor(&format!("enc.layer{i}.w1"))?,
            w2: tensor(&format!("enc.layer{i}.w2"))?,
        });
    }
    let encoder = EncoderParams {
        cfg: EncoderConfig {
            layers: meta.layers,
            dim: meta.dim,
        },
        elem_table: tensor("enc.elem")?,
        arom_table: tensor("enc.arom")?,
        bond_table: tensor("enc.bond")?,
        layers,
    };
    let table = MotifTable {
        rows: tensor("table")?,
        freeze_empty: meta.freeze_empty,
    };
    let mut w_q = Vec::with_capacity(meta.heads);
    let mut w_k = Vec::with_capacity(meta.heads);
    let mut w_v = Vec::with_capacity(meta.heads);
    for h in 0..meta.heads {
        w_q.push(tensor(&format!("attn.q{h}"))?);
        w_k.push(tensor(&format!("attn.k{h}"))?);
        w_v.push(tensor(&format!("attn.v{h}"))?);
    }
    let ffn = if meta.with_ffn {
        Some(FfnParams {
            w1: tensor("attn.ffn1")?,
            w2: tensor("attn.ffn2")?,
        })
    } else {
        None
    };
    let attn = AttentionParams {
        heads: meta.heads,
        w_q,
        w_k,
        w_v,
        w_o: tensor("attn.o")?,
        ffn,
    };
    let head = if meta.head_is_masking {
        OutputHead::Masking {
            w: tensor("head.w")?,
        }
    } else {
        OutputHead::Contrastive {
            w1: tensor("head.w1")?,
            w2: tensor("head.w2")?,
        }
    };
    let mut banks = Vec::with_capacity(meta.bank_count);
    for i in 0..meta.bank_count {
        let rows = tensor(&format!("bank{i}"))?;
        let mut bank = AnswerBank::from_rows(rows, 2, meta.ensemble, meta.lambda_orth);
        bank.tau_ans = meta.tau_ans;
        banks.push(bank);
    }
    let mut probes = Vec::with_capacity(meta.task_count);
    for i in 0..meta.task_count {
        probes.push(tensor(&format!("probe{i}"))?);
    }

    let model = PromptModel {
        encoder,
        table,
        attn,
        head,
        banks,
        probes,
        include_empty: meta.include_empty,
    };
    let ck = Checkpoint {
        model,
        vocab_hash,
        seed: meta.seed,
    };

    if let (true, Some(vocab)) = (ck.is_bound(), expect_vocab) {
        if vocab_hash != self::vocab_hash(vocab) {
            return Err(CheckpointError::VocabHashMismatch);
        }
    }
    Ok((ck, meta.rules))
}
