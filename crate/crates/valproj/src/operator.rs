//! Linear forward operators with exact adjoints.
//!
//! Every operator stores whatever it needs to apply both `A` and `A^T` as
//! plain matrix actions; `adjoint_apply` is always the action of the exact
//! transpose of the stored matrix, never an approximation. This is what the
//! conjugate-gradient kernels rely on: `<A u, v> == <u, A^T v>` up to
//! rounding for all `u, v`.
//!
//! Kinds:
//! - dense matrices (row-major storage plus a transposed copy so both
//!   directions stream memory contiguously),
//! - seeded Gaussian sensing matrices (i.i.d. standard normal entries drawn
//!   row-major from a ChaCha8 stream, so a seed pins the matrix exactly,
//!   bit for bit, across platforms),
//! - a sparse Radon (tomography) matrix assembled from exact ray/pixel
//!   intersection lengths,
//! - identity and zero (mostly for tests and degenerate configurations).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Sparse matrix in compressed-sparse-row layout. Column indices are `u32`
/// (image sizes here stay far below 2^32 pixels).
#[derive(Debug, Clone)]
struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            out[r] = acc;
        }
    }

    /// Exact transpose, built by counting sort over column indices.
    fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let nnz = self.values.len();
        let mut col_idx = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut next = counts;
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k] as usize;
                let dst = next[c];
                next[c] += 1;
                col_idx[dst] = r as u32;
                values[dst] = self.values[k];
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Row-major `a` plus row-major transpose `at`.
    Dense { a: Vec<f64>, at: Vec<f64> },
    /// CSR forward matrix plus its CSR transpose.
    Sparse { a: Csr, at: Csr },
    Identity,
    Zero,
}

/// A linear map `R^cols -> R^rows` with an exact adjoint.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    rows: usize,
    cols: usize,
    repr: Repr,
}

impl LinearOperator {
    /// Dense operator from row-major entries (`entries[i * cols + j]`).
    pub fn dense(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: format!("rows and cols must be positive, got {rows}x{cols}"),
            });
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
                context: "dense operator entries",
            });
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dense operator entries",
            });
        }
        let at = transpose_dense(&entries, rows, cols);
        Ok(Self {
            rows,
            cols,
            repr: Repr::Dense { a: entries, at },
        })
    }

    /// Dense diagonal-style convenience: square operator with the given
    /// diagonal, zeros elsewhere.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut entries = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self::dense(n, n, entries)
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "identity needs positive dimension".into(),
            });
        }
        Ok(Self {
            rows: n,
            cols: n,
            repr: Repr::Identity,
        })
    }

    pub fn zero(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: "zero operator needs positive dimensions".into(),
            });
        }
        Ok(Self {
            rows,
            cols,
            repr: Repr::Zero,
        })
    }

    /// Compressed sensing matrix with i.i.d. standard normal entries (no
    /// column or row normalization). Entries are drawn row-major from
    /// `ChaCha8Rng::seed_from_u64(seed)`, which makes the matrix a pure
    /// function of `(seed, rows, cols)` on every platform.
    pub fn gaussian_sensing(seed: u64, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter {
                name: "shape",
                reason: "sensing matrix needs positive dimensions".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let entries: Vec<f64> = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        let at = transpose_dense(&entries, rows, cols);
        Ok(Self {
            rows,
            cols,
            repr: Repr::Dense { a: entries, at },
        })
    }

    /// Sparse Radon (parallel-beam tomography) matrix.
    ///
    /// The image is a `side x side` grid of unit pixels covering the square
    /// `[-side/2, side/2]^2`; `n_angles` view angles are evenly spaced over
    /// `[0, pi)`, each with `side` detector bins at offsets
    /// `d - (side-1)/2`. Row `a * side + d` integrates the image along the
    /// matching line; the stored weight of pixel `p` on a row is the exact
    /// length of the ray segment inside `p`, so each row sums to the chord
    /// length of the ray through the image square.
    pub fn radon_sparse(image_side: usize, n_angles: usize) -> Result<Self> {
        if image_side < 2 {
            return Err(Error::InvalidParameter {
                name: "image_side",
                reason: "need at least a 2x2 image".into(),
            });
        }
        if n_angles == 0 {
            return Err(Error::InvalidParameter {
                name: "n_angles",
                reason: "need at least one view angle".into(),
            });
        }
        let a = assemble_radon(image_side, n_angles);
        let at = a.transpose();
        Ok(Self {
            rows: a.rows,
            cols: a.cols,
            repr: Repr::Sparse { a, at },
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `A x`. Errors on length mismatch; output finiteness is inherited
    /// from the finite-entry invariants.
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
                context: "operator apply",
            });
        }
        let mut out = vec![0.0; self.rows];
        self.apply_into(x.as_slice(), &mut out);
        Ok(Vector::wrap(out))
    }

    /// `A^T v`, the exact transpose action.
    pub fn adjoint_apply(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: v.len(),
                context: "operator adjoint",
            });
        }
        let mut out = vec![0.0; self.cols];
        self.adjoint_into(v.as_slice(), &mut out);
        Ok(Vector::wrap(out))
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        match &self.repr {
            Repr::Dense { a, .. } => dense_matvec(a, self.rows, self.cols, x, out),
            Repr::Sparse { a, .. } => a.matvec_into(x, out),
            Repr::Identity => out.copy_from_slice(x),
            Repr::Zero => out.fill(0.0),
        }
    }

    pub(crate) fn adjoint_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        match &self.repr {
            Repr::Dense { at, .. } => dense_matvec(at, self.cols, self.rows, v, out),
            Repr::Sparse { at, .. } => at.matvec_into(v, out),
            Repr::Identity => out.copy_from_slice(v),
            Repr::Zero => out.fill(0.0),
        }
    }

    /// Materializes the matrix row-major. Meant for small operators in
    /// tests and direct-solve cross-checks; cost is O(rows * cols).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        match &self.repr {
            Repr::Dense { a, .. } => out.copy_from_slice(a),
            Repr::Sparse { a, .. } => {
                for r in 0..a.rows {
                    for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                        out[r * self.cols + a.col_idx[k] as usize] = a.values[k];
                    }
                }
            }
            Repr::Identity => {
                for i in 0..self.rows {
                    out[i * self.cols + i] = 1.0;
                }
            }
            Repr::Zero => {}
        }
        out
    }

    /// Number of stored nonzeros (dense kinds count every entry).
    pub fn nnz(&self) -> usize {
        match &self.repr {
            Repr::Dense { a, .. } => a.len(),
            Repr::Sparse { a, .. } => a.values.len(),
            Repr::Identity => self.rows,
            Repr::Zero => 0,
        }
    }
}

fn dense_matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        out[r] = crate::vector::dot(row, x);
    }
}

fn transpose_dense(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut at = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            at[j * rows + i] = a[i * cols + j];
        }
    }
    at
}

/// One tomography ray: origin offset `t` along the detector axis
/// `(cos theta, sin theta)`, direction `(-sin theta, cos theta)`.
/// Returns the (pixel, intersection length) pairs inside the image square,
/// computed by walking the sorted grid-line crossings of the ray.
fn trace_ray(side: usize, theta: f64, t: f64) -> Vec<(u32, f64)> {
    let s = side as f64;
    let half = s / 2.0;
    let (sin_t, cos_t) = theta.sin_cos();
    let ox = t * cos_t;
    let oy = t * sin_t;
    let dx = -sin_t;
    let dy = cos_t;

    // Clip the ray against the square to get the parameter window.
    let mut tau_min = f64::NEG_INFINITY;
    let mut tau_max = f64::INFINITY;
    for (o, d) in [(ox, dx), (oy, dy)] {
        if d.abs() < 1e-14 {
            if o <= -half || o >= half {
                return Vec::new();
            }
        } else {
            let t1 = (-half - o) / d;
            let t2 = (half - o) / d;
            tau_min = tau_min.max(t1.min(t2));
            tau_max = tau_max.min(t1.max(t2));
        }
    }
    if tau_min >= tau_max - 1e-12 {
        return Vec::new();
    }

    // All grid-line crossings inside the window, plus the endpoints.
    let mut taus = Vec::with_capacity(2 * side + 2);
    taus.push(tau_min);
    taus.push(tau_max);
    for (o, d) in [(ox, dx), (oy, dy)] {
        if d.abs() >= 1e-14 {
            for g in 0..=side {
                let line = -half + g as f64;
                let tau = (line - o) / d;
                if tau > tau_min + 1e-12 && tau < tau_max - 1e-12 {
                    taus.push(tau);
                }
            }
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut weights = Vec::with_capacity(taus.len());
    for w in taus.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-12 {
            continue; // duplicate crossing (corner hit)
        }
        let mid = 0.5 * (w[0] + w[1]);
        let px = ox + mid * dx;
        let py = oy + mid * dy;
        // Row 0 is the top of the image (largest y).
        let j = (px + half).floor() as isize;
        let i = (half - py).floor() as isize;
        if i < 0 || j < 0 || i >= side as isize || j >= side as isize {
            continue;
        }
        weights.push(((i as usize * side + j as usize) as u32, len));
    }
    weights.sort_by_key(|&(c, _)| c);
    weights
}

fn assemble_radon(side: usize, n_angles: usize) -> Csr {
    let n_rays = n_angles * side;
    let mut row_ptr = Vec::with_capacity(n_rays + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for a in 0..n_angles {
        let theta = a as f64 * std::f64::consts::PI / n_angles as f64;
        for d in 0..side {
            let t = d as f64 - (side as f64 - 1.0) / 2.0;
            for (c, w) in trace_ray(side, theta, t) {
                col_idx.push(c);
                values.push(w);
            }
            row_ptr.push(col_idx.len());
        }
    }
    Csr {
        rows: n_rays,
        cols: side * side,
        row_ptr,
        col_idx,
        values,
    }
}
