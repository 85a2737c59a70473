//! Conjugate gradients for the regularized normal equations.
//!
//! The projection and the quadratic solvers repeatedly need
//! `x = (I + mu A^T A)^{-1} b` for varying `mu`. The system matrix is
//! symmetric positive definite for every `mu >= 0`, so plain CG applies;
//! the matrix is never materialized, each iteration costs one `A` and one
//! `A^T` application. A warm-start entry point exists because callers solve
//! long sequences of nearby systems (the root find on `mu` changes the
//! matrix only slightly between evaluations).

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::vector::{self, Vector};

/// Stopping rule for CG: iterate until `||residual|| <= tol * ||b||` or
/// `max_iter` iterations, whichever comes first.
#[derive(Debug, Clone)]
pub struct CgConfig {
    /// Relative residual tolerance, must lie in (0, 1).
    pub tol: f64,
    /// Iteration cap; `None` means `10 * n` for an `n`-dimensional system.
    pub max_iter: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl CgConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "cg.tol",
                reason: format!("must be in (0, 1), got {}", self.tol),
            });
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidParameter {
                name: "cg.max_iter",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(10 * n)
    }
}

/// Solves `(I + mu A^T A) x = b` from a zero initial guess.
pub fn cg_solve_normal(a: &LinearOperator, mu: f64, b: &Vector, cfg: &CgConfig) -> Result<Vector> {
    cg_solve_normal_warm(a, mu, b, None, cfg)
}

/// Solves `(I + mu A^T A) x = b`, optionally starting from `x0`.
///
/// `mu == 0` short-circuits to `b` (the system is the identity). Returns a
/// convergence error carrying the last relative residual if the iteration
/// cap is hit.
pub fn cg_solve_normal_warm(
    a: &LinearOperator,
    mu: f64,
    b: &Vector,
    x0: Option<&Vector>,
    cfg: &CgConfig,
) -> Result<Vector> {
    cfg.validate()?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: format!("must be finite and nonnegative, got {mu}"),
        });
    }
    if b.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: b.len(),
            context: "cg right-hand side",
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                got: x0.len(),
                context: "cg warm start",
            });
        }
    }
    if mu == 0.0 {
        return Ok(b.clone());
    }

    let n = a.cols();
    let mut scratch = vec![0.0; a.rows()];
    let mut op = |x: &[f64], out: &mut [f64]| {
        a.apply_into(x, &mut scratch);
        a.adjoint_into(&scratch, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + mu * *o;
        }
    };
    let (x, _iters) = cg_spd(
        &mut op,
        b.as_slice(),
        x0.map(|v| v.as_slice()),
        cfg.tol,
        cfg.cap(n),
    )?;
    Ok(Vector::wrap(x))
}

/// CG on a general SPD operator given as a matrix-free action.
/// Returns the solution and the number of operator applications used.
pub(crate) fn cg_spd(
    op: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let b_norm = vector::norm(b);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    op(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    vector::assign(&mut p, &r);
    let mut rs = vector::dot(&r, &r);

    for iter in 0..=max_iter {
        let rel = rs.sqrt() / b_norm;
        if rel <= tol {
            return Ok((x, iter));
        }
        if iter == max_iter {
            break;
        }
        op(&p, &mut ap);
        let pap = vector::dot(&p, &ap);
        if !(pap > 0.0) {
            // SPD breakdown: only reachable through rounding at convergence.
            return Err(Error::CgDidNotConverge {
                iterations: iter,
                residual: rel,
            });
        }
        let alpha = rs / pap;
        vector::axpy(&mut x, alpha, &p);
        vector::axpy(&mut r, -alpha, &ap);
        let rs_new = vector::dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::CgDidNotConverge {
        iterations: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mu_zero_returns_rhs() {
        let a = LinearOperator::gaussian_sensing(0, 4, 6).unwrap();
        let b = Vector::new(vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        let x = cg_solve_normal(&a, 0.0, &b, &CgConfig::default()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn identity_operator_has_closed_form() {
        // (1 + mu) x = b  =>  x = b / (1 + mu)
        let a = LinearOperator::identity(5).unwrap();
        let b = Vector::new(vec![2.0, -4.0, 6.0, 8.0, -10.0]).unwrap();
        let mu = 3.0;
        let x = cg_solve_normal(&a, mu, &b, &CgConfig::default()).unwrap();
        for i in 0..5 {
            assert!((x[i] - b[i] / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_meets_relative_tolerance() {
        let a = LinearOperator::gaussian_sensing(11, 12, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Vector::from_fn(20, |_| rng.random_range(-1.0..1.0)).unwrap();
        let mu = 7.5;
        let cfg = CgConfig::default();
        let x = cg_solve_normal(&a, mu, &b, &cfg).unwrap();
        let ax = a.apply(&x).unwrap();
        let atax = a.adjoint_apply(&ax).unwrap();
        let mut lhs = x.clone();
        lhs.axpy(mu, &atax);
        let res = lhs.sub(&b).norm();
        assert!(res <= cfg.tol * b.norm() * 1.01, "residual {res}");
    }

    #[test]
    fn matches_dense_direct_solve() {
        let m = 9;
        let n = 14;
        let a = LinearOperator::gaussian_sensing(5, m, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Vector::from_fn(n, |_| rng.random_range(-2.0..2.0)).unwrap();
        let mu = 2.75;

        let dense = a.to_dense();
        let a_mat = nalgebra::DMatrix::from_row_slice(m, n, &dense);
        let sys = nalgebra::DMatrix::identity(n, n) + mu * a_mat.transpose() * &a_mat;
        let rhs = nalgebra::DVector::from_column_slice(b.as_slice());
        let oracle = sys.lu().solve(&rhs).unwrap();

        let x = cg_solve_normal(&a, mu, &b, &CgConfig::default()).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() <= 1e-8, "component {i}");
        }
    }

    #[test]
    fn warm_start_converges_to_same_solution() {
        let a = LinearOperator::gaussian_sensing(8, 10, 12).unwrap();
        let b = Vector::from_fn(12, |i| (i as f64 * 0.7).sin()).unwrap();
        let cfg = CgConfig::default();
        let cold = cg_solve_normal(&a, 4.0, &b, &cfg).unwrap();
        // Warm start from the solution of a nearby system.
        let near = cg_solve_normal(&a, 4.1, &b, &cfg).unwrap();
        let warm = cg_solve_normal_warm(&a, 4.0, &b, Some(&near), &cfg).unwrap();
        assert!(cold.max_abs_diff(&warm) <= 1e-8);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let a = LinearOperator::gaussian_sensing(30, 40, 40).unwrap();
        let b = Vector::from_fn(40, |i| 1.0 + i as f64).unwrap();
        let cfg = CgConfig {
            tol: 1e-14,
            max_iter: Some(2),
        };
        match cg_solve_normal(&a, 100.0, &b, &cfg) {
            Err(Error::CgDidNotConverge {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let a = LinearOperator::identity(3).unwrap();
        let b = Vector::zeros(3);
        let bad_tol = CgConfig {
            tol: 1.0,
            max_iter: None,
        };
        assert!(cg_solve_normal(&a, 1.0, &b, &bad_tol).is_err());
        let bad_iter = CgConfig {
            tol: 1e-10,
            max_iter: Some(0),
        };
        assert!(cg_solve_normal(&a, 1.0, &b, &bad_iter).is_err());
        assert!(cg_solve_normal(&a, -1.0, &b, &CgConfig::default()).is_err());
    }

    #[test]
    fn zero_rhs_returns_zero_exactly() {
        let a = LinearOperator::gaussian_sensing(1, 6, 6).unwrap();
        let b = Vector::zeros(6);
        let x = cg_solve_normal(&a, 5.0, &b, &CgConfig::default()).unwrap();
        assert_eq!(x.as_slice(), &[0.0; 6]);
    }
}
