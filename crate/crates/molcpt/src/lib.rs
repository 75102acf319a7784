//! Motif-prompted molecular property prediction.
//!
//! The crate covers the whole pipeline: SMILES parsing into attributed
//! graphs, motif extraction and vocabularies, a small reverse-mode autodiff
//! engine, a graph isomorphism network encoder, self-supervised pretraining,
//! continuous motif prompts injected through cross attention, a
//! differentiable answer table, and the dataset/training/evaluation plumbing
//! that ties them together.
//!
//! Start with the examples: each one exercises a single capability end to
//! end. `examples/planted_end_to_end.rs` walks the full
//! pretrain → prompt → fine-tune path on synthetic data in a few minutes.

pub mod answer;
pub mod encoder;
pub mod fragment;
pub mod ndiff;
pub mod pipeline;
pub mod pretrain;
pub mod prompt;
pub mod smiles;
