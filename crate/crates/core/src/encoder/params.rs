use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Mat, Real};
use crate::error::{Error, Result};

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T> {
    names: Vec<String>,
    tensors: Vec<Mat<T>>,
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Mat<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Mat<T> {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Mat<T> {
        &mut self.tensors[i]
    }

    pub fn tensors(&self) -> &[Mat<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat<T>] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Mat::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.fill(T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x *= factor;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Mat::cast).collect(),
        }
    }

    /// Copy data from `other`, which must have identical names and shapes.
    pub fn assign_from(&mut self, other: Params<T>) -> Result<()> {
        if other.names != self.names {
            return Err(Error::format(
                "checkpoint",
                "tensor names do not match the model layout",
            ));
        }
        for (i, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(Error::format(
                    "checkpoint",
                    format!(
                        "tensor {} has shape {}x{}, expected {}x{}",
                        self.names[i], b.rows, b.cols, a.rows, a.cols
                    ),
                ));
            }
        }
        self.tensors = other.tensors;
        Ok(())
    }
}

/// How a freshly registered tensor is filled.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn,
}

impl Init {
    pub fn make<T: Real, R: Rng>(self, rows: usize, cols: usize, rng: Option<&mut R>) -> Mat<T> {
        let Some(rng) = rng else {
            return match self {
                Init::Ones => Mat::filled(rows, cols, T::one()),
                _ => Mat::zeros(rows, cols),
            };
        };
        match self {
            Init::Zeros => Mat::zeros(rows, cols),
            Init::Ones => Mat::filled(rows, cols, T::one()),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("valid std");
                Mat::from_vec(
                    rows,
                    cols,
                    (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect(),
                )
            }
            Init::FanIn => {
                let bound = 1.0 / (rows as f64).sqrt();
                Mat::from_vec(
                    rows,
                    cols,
                    (0..rows * cols)
                        .map(|_| T::of(rng.gen_range(-bound..=bound)))
                        .collect(),
                )
            }
        }
    }
}
