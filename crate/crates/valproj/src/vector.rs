//! Finite-valued vectors with checked construction.
//!
//! [`Vector`] is the single value type flowing through operators, solvers
//! and metrics. Construction rejects empty data and non-finite entries, so
//! downstream code can assume both invariants; arithmetic helpers preserve
//! them (debug builds re-check).

use crate::error::{Error, Result};

/// Dense vector of finite `f64` values, never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Checked constructor: rejects empty input and NaN/inf entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "vector must have positive length".into(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "vector construction",
            });
        }
        Ok(Self { data })
    }

    /// Zero vector of length `n`. Panics if `n == 0` (caller bug).
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "zero-length vector");
        Self { data: vec![0.0; n] }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(f).collect())
    }

    /// Internal constructor for values produced by trusted kernels.
    /// Only checks invariants in debug builds.
    pub(crate) fn wrap(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite result");
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction forbids empty vectors
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot of mismatched lengths");
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "add of mismatched lengths");
        Vector::wrap(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub of mismatched lengths");
        Vector::wrap(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::wrap(self.data.iter().map(|a| a * s).collect())
    }

    /// `self += alpha * other`, in place.
    pub fn axpy(&mut self, alpha: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy of mismatched lengths");
        axpy(&mut self.data, alpha, &other.data);
        debug_assert!(self.data.iter().all(|v| v.is_finite()));
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

// Slice kernels shared by the iterative solvers. They skip invariant checks
// and never allocate; callers own buffer management.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = x` elementwise copy.
pub(crate) fn assign(y: &mut [f64], x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    y.copy_from_slice(x);
}
