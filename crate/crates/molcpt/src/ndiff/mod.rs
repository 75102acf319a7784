//! Dense-tensor reverse-mode automatic differentiation.
//!
//! Everything trainable in the crate runs on this engine: 64-bit dense
//! tensors, a [`Tape`] that records primitive applications, reverse-mode
//! [`Tape::backward`], a finite-difference [`grad_check`], and a
//! bias-corrected Adam optimizer. No parallelism inside a tape; independent
//! tapes may run on separate threads.

mod adam;
mod tape;

pub use adam::AdamState;
pub use tape::{grad_check, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    BadAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: non-finite value in checked mode")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}

/// Dense row-major tensor of 64-bit floats. Scalars have an empty shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not hold {} values",
            data.len()
        );
        Tensor {
            shape,
            data,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::new(shape.to_vec(), vec![0.0; shape.iter().product()])
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::new(shape.to_vec(), vec![1.0; shape.iter().product()])
    }

    pub fn vector(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec())
    }

    /// Row-major matrix from nested slices; rows must share a length.
    pub fn matrix(rows: &[Vec<f64>]) -> Tensor {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    /// Marks the tensor as trainable (used when registering leaves).
    pub fn requiring_grad(mut self) -> Tensor {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    /// Rows × columns of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.rank(), 2, "dims2 on shape {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fills with N(0, scale²) samples.
    pub fn randn(shape: &[usize], scale: f64, rng: &mut impl rand::Rng) -> Tensor {
        use rand::prelude::Distribution;
        let normal = rand_distr::Normal::new(0.0, scale).expect("scale must be finite");
        let data = (0..shape.iter().product())
            .map(|_| normal.sample(rng))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// Elementwise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
