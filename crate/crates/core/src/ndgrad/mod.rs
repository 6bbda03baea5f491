//! Minimal dense reverse-mode autodiff: matrices, a recording tape, Adam, and
//! a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod matrix;
mod tape;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use matrix::Matrix;
pub use tape::{Gradients, Segments, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradError {
    #[error("{op}: shape mismatch between {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: index {index} out of bounds for {len} rows")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("segment {0} is empty or malformed")]
    InvalidSegment(usize),
    #[error("backward needs a 1x1 loss, got {}x{}", .0.0, .0.1)]
    NotScalar((usize, usize)),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter {0:?}")]
    DuplicateParam(String),
}

/// Ordered, named parameter arrays. Slot ids are insertion indices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<usize, GradError> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(GradError::DuplicateParam(name));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.id(name).map(|i| &mut self.values[i])
    }

    pub fn require(&self, name: &str) -> Result<&Matrix, GradError> {
        self.get(name).ok_or_else(|| GradError::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Records every parameter as a tape leaf, in slot order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().enumerate().map(|(i, v)| tape.param(i, v.clone())).collect()
    }

    /// Per-slot gradients; parameters the loss never touched get zeros.
    pub fn collect_grads(&self, grads: &Gradients, vars: &[Var]) -> Vec<Matrix> {
        self.values
            .iter()
            .zip(vars)
            .map(|(v, &var)| grads.wrt(var).cloned().unwrap_or_else(|| Matrix::zeros(v.rows(), v.cols())))
            .collect()
    }
}

/// Glorot-uniform `fan_in x fan_out` matrix.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("glorot shape")
}
