//! Tikhonov regularization with discrepancy-principle weight selection.
//!
//! For a regularization operator `L` the weighted least-squares problem
//!
//! ```text
//! x(mu) = argmin_x  mu/2 ||A x - y||^2 + ||L x||^2
//! ```
//!
//! has the normal equations `(2 L^T L + mu A^T A) x = mu A^T y`, solved
//! matrix-free by CG. The discrepancy principle picks `mu` so the residual
//! `||A x(mu) - y||` equals the noise level `delta`; the residual is
//! non-increasing in `mu`, so the same bracketing/bisection as the valid-set
//! projection applies. With `L = I` and starting point zero, the solution
//! coincides with the projection of the origin onto the valid set (the two
//! objectives differ only by a reparametrization of `mu`), which the tests
//! cross-check.

use crate::cg::{cg_spd, CgConfig};
use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::projection::{decreasing_residual_root, ValidSet};
use crate::vector::Vector;

/// Settings for [`tikhonov_morozov`]. `l = None` means `L = I`.
#[derive(Debug, Clone)]
pub struct TikhonovConfig {
    pub l: Option<LinearOperator>,
    /// Relative discrepancy tolerance `| ||Ax - y|| - delta | / delta`.
    pub morozov_tol: f64,
    pub mu0: f64,
    pub max_outer: usize,
    pub cg: CgConfig,
}

impl Default for TikhonovConfig {
    fn default() -> Self {
        Self {
            l: None,
            morozov_tol: 1e-3,
            mu0: 1.0,
            max_outer: 128,
            cg: CgConfig::default(),
        }
    }
}

/// Solves the Tikhonov problem with `mu` chosen by the discrepancy
/// principle. Returns `(x, mu)`.
///
/// If `delta >= ||y||` the zero vector already satisfies the discrepancy,
/// so `(0, 0)` is returned. An unreachable `delta` (below the smallest
/// attainable residual) surfaces as an unbracketable error.
pub fn tikhonov_morozov(v: &ValidSet, cfg: &TikhonovConfig) -> Result<(Vector, f64)> {
    if !(cfg.morozov_tol > 0.0 && cfg.morozov_tol < 1.0) {
        return Err(Error::InvalidParameter {
            name: "morozov_tol",
            reason: format!("must be in (0, 1), got {}", cfg.morozov_tol),
        });
    }
    if !(cfg.mu0.is_finite() && cfg.mu0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "mu0",
            reason: format!("must be positive, got {}", cfg.mu0),
        });
    }
    cfg.cg.validate()?;
    let a = v.operator();
    let n = a.cols();
    if let Some(l) = &cfg.l {
        if l.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: l.cols(),
                context: "regularization operator columns",
            });
        }
    }

    let y = v.y_delta();
    if v.delta() >= y.norm() {
        return Ok((Vector::zeros(n), 0.0));
    }

    let aty = a.adjoint_apply(y)?;
    let max_cg = cfg.cg.max_iter.unwrap_or(10 * n);
    let mut warm: Option<Vec<f64>> = None;

    let eval = |mu: f64, warm: &mut Option<Vec<f64>>| -> Result<(f64, Vector)> {
        // System operator z -> 2 L^T L z + mu A^T A z.
        let mut a_buf = vec![0.0; a.rows()];
        let mut l_buf = cfg.l.as_ref().map(|l| (vec![0.0; l.rows()], vec![0.0; n]));
        let mut op = |z: &[f64], out: &mut [f64]| {
            a.apply_into(z, &mut a_buf);
            a.adjoint_into(&a_buf, out);
            match (&cfg.l, &mut l_buf) {
                (Some(l), Some((lz, ltlz))) => {
                    l.apply_into(z, lz);
                    l.adjoint_into(lz, ltlz);
                    for i in 0..n {
                        out[i] = 2.0 * ltlz[i] + mu * out[i];
                    }
                }
                _ => {
                    for (o, zi) in out.iter_mut().zip(z) {
                        *o = 2.0 * zi + mu * *o;
                    }
                }
            }
        };
        let rhs: Vec<f64> = aty.as_slice().iter().map(|t| mu * t).collect();
        let (x, _) = cg_spd(&mut op, &rhs, warm.as_deref(), cfg.cg.tol, max_cg)?;
        let xv = Vector::wrap(x.clone());
        let r = v.residual_norm(&xv)?;
        *warm = Some(x);
        Ok((r, xv))
    };

    let root = decreasing_residual_root(
        |mu| eval(mu, &mut warm),
        v.delta(),
        cfg.morozov_tol,
        cfg.mu0,
        cfg.max_outer,
    )?;
    Ok((root.state, root.mu))
}
