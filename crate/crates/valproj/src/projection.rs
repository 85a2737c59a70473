//! Projection onto the set of measurement-consistent solutions.
//!
//! The valid set for an operator `A`, data `y` and noise level `delta > 0`
//! is `V = { x : ||A x - y|| <= delta }`. For a point `x*` outside `V` the
//! Euclidean projection is the minimizer of `||x - x*||` subject to
//! `||A x - y|| = delta`; by Lagrange duality it has the closed form
//!
//! ```text
//! x(mu) = (I + mu A^T A)^{-1} (mu A^T y + x*)
//! ```
//!
//! for the unique multiplier `mu >= 0` with `||A x(mu) - y|| = delta`. The
//! residual is strictly decreasing in `mu`, so `mu` is found by exponential
//! bracketing followed by bisection on `phi(mu) = ||A x(mu) - y||^2 -
//! delta^2`; each evaluation is one conjugate-gradient solve, warm-started
//! from the previous evaluation. Iteration stops on the scale-free gap
//! `| ||A x(mu) - y|| - delta | / delta <= rel_residual_tol`.
//!
//! The projection is differentiable in `x*` wherever `x*` is strictly
//! outside `V`. Differentiating the stationarity system
//! `(I + mu A^T A) x = mu A^T y + x*`, `||A x - y|| = delta` by the
//! implicit function theorem gives the symmetric Jacobian
//!
//! ```text
//! d x / d x* = B^{-1} - (B^{-1} w)(B^{-1} w)^T / <w, B^{-1} w>,
//! B = I + mu A^T A,   w = x* - x,
//! ```
//!
//! which [`project_valid_vjp`] applies to a cotangent with two CG solves.
//! For `A = I` this collapses to `(I - u u^T)/(1 + mu)` with
//! `u = w/||w||`: the tangent space is damped by `1/(1+mu)` and the radial
//! direction is annihilated. Inside `V` the projection is the identity and
//! so is its VJP.

use std::sync::Arc;

use crate::cg::{cg_solve_normal_warm, CgConfig};
use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::vector::Vector;

/// Hard cap on exponential bracketing steps; growth is 2^200, so hitting
/// the cap means the target residual is unreachable, not slow.
const MAX_BRACKET_STEPS: usize = 200;

/// The measurement-consistency set `{ x : ||A x - y_delta|| <= delta }`.
///
/// The operator is reference-counted, so sets sharing one operator with
/// different measurements (a training set, for instance) are cheap to
/// build via [`ValidSet::with_measurement`].
#[derive(Debug, Clone)]
pub struct ValidSet {
    a: Arc<LinearOperator>,
    y_delta: Vector,
    delta: f64,
}

impl ValidSet {
    pub fn new(a: LinearOperator, y_delta: Vector, delta: f64) -> Result<Self> {
        Self::shared(Arc::new(a), y_delta, delta)
    }

    /// Builds a set around an already shared operator.
    pub fn shared(a: Arc<LinearOperator>, y_delta: Vector, delta: f64) -> Result<Self> {
        if y_delta.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: y_delta.len(),
                context: "valid set measurement",
            });
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("noise level must be positive and finite, got {delta}"),
            });
        }
        Ok(Self { a, y_delta, delta })
    }

    /// A set with the same operator but different data and noise level.
    pub fn with_measurement(&self, y_delta: Vector, delta: f64) -> Result<Self> {
        Self::shared(Arc::clone(&self.a), y_delta, delta)
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.a
    }

    pub fn y_delta(&self) -> &Vector {
        &self.y_delta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `||A x - y_delta||`.
    pub fn residual_norm(&self, x: &Vector) -> Result<f64> {
        let ax = self.a.apply(x)?;
        Ok(ax.sub(&self.y_delta).norm())
    }

    /// Scale-free distance of the residual from the noise level.
    pub fn residual_gap(&self, x: &Vector) -> Result<f64> {
        Ok((self.residual_norm(x)? - self.delta).abs() / self.delta)
    }

    /// Membership in the relaxed set, with the same slack the projection
    /// uses for its interior test.
    pub fn contains(&self, x: &Vector, rel_tol: f64) -> Result<bool> {
        Ok(self.residual_norm(x)? <= self.delta * (1.0 + rel_tol))
    }
}

/// Stopping and bracketing parameters for [`project_valid`].
#[derive(Debug, Clone)]
pub struct ProjectionConfig {
    /// Stop once `| ||A x - y|| - delta | / delta` falls below this.
    pub rel_residual_tol: f64,
    /// Initial multiplier guess for the bracketing phase.
    pub mu0: f64,
    /// Cap on bisection evaluations (each one is a CG solve).
    pub max_outer: usize,
    pub cg: CgConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            rel_residual_tol: 1e-2,
            mu0: 1.0,
            max_outer: 64,
            cg: CgConfig::default(),
        }
    }
}

impl ProjectionConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rel_residual_tol > 0.0 && self.rel_residual_tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rel_residual_tol",
                reason: format!("must be in (0, 1), got {}", self.rel_residual_tol),
            });
        }
        if !(self.mu0.is_finite() && self.mu0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "mu0",
                reason: format!("must be positive, got {}", self.mu0),
            });
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter {
                name: "max_outer",
                reason: "must be positive".into(),
            });
        }
        self.cg.validate()
    }
}

/// Outcome of a projection: the projected point, the multiplier that
/// produced it, and stopping diagnostics.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub x_proj: Vector,
    /// Lagrange multiplier of the residual constraint; 0 for interior input.
    pub mu: f64,
    /// Number of multiplier evaluations (CG solves) spent.
    pub outer_iters: usize,
    /// `| ||A x_proj - y|| - delta | / delta` at the returned point.
    pub residual_gap: f64,
    /// True if the input was already in the valid set and returned as is.
    pub inside: bool,
}

/// Projects `x_star` onto the valid set.
///
/// Points already satisfying `||A x* - y|| <= delta (1 + tol)` are returned
/// unchanged with `inside = true`. Otherwise the returned point sits on the
/// residual sphere up to `rel_residual_tol` and `mu > 0` is its multiplier.
pub fn project_valid(
    x_star: &Vector,
    v: &ValidSet,
    cfg: &ProjectionConfig,
) -> Result<ProjectionResult> {
    cfg.validate()?;
    if x_star.len() != v.a.cols() {
        return Err(Error::DimensionMismatch {
            expected: v.a.cols(),
            got: x_star.len(),
            context: "projection input",
        });
    }

    let r0 = v.residual_norm(x_star)?;
    if r0 <= v.delta * (1.0 + cfg.rel_residual_tol) {
        return Ok(ProjectionResult {
            x_proj: x_star.clone(),
            mu: 0.0,
            outer_iters: 0,
            residual_gap: (r0 - v.delta).abs() / v.delta,
            inside: true,
        });
    }

    // One multiplier evaluation = one warm-started CG solve for x(mu)
    // followed by a residual norm.
    let aty = v.a.adjoint_apply(&v.y_delta)?;
    let mut warm: Option<Vector> = None;
    let eval = |mu: f64, warm: &mut Option<Vector>| -> Result<(f64, Vector)> {
        let mut b = x_star.clone();
        b.axpy(mu, &aty);
        let x = cg_solve_normal_warm(&v.a, mu, &b, warm.as_ref(), &cfg.cg)?;
        let r = v.residual_norm(&x)?;
        *warm = Some(x.clone());
        Ok((r, x))
    };

    let root = decreasing_residual_root(
        |mu| eval(mu, &mut warm),
        v.delta,
        cfg.rel_residual_tol,
        cfg.mu0,
        cfg.max_outer,
    )?;
    Ok(ProjectionResult {
        x_proj: root.state,
        mu: root.mu,
        outer_iters: root.evals,
        residual_gap: (root.r - v.delta).abs() / v.delta,
        inside: false,
    })
}

/// Result of the shared multiplier search: the accepted `mu`, the residual
/// norm there, caller-defined per-evaluation state (the iterate), and the
/// number of evaluations spent.
pub(crate) struct RootFind<T> {
    pub mu: f64,
    pub r: f64,
    pub state: T,
    pub evals: usize,
}

/// Finds `mu > 0` with `|r(mu) - delta| / delta <= rel_tol` for a residual
/// map `r` that is non-increasing in `mu`: exponential bracketing from
/// `mu0` (doubling while the residual is above `delta`, halving while
/// below), then bisection. Shared by the projection and the Tikhonov
/// discrepancy solver.
pub(crate) fn decreasing_residual_root<T>(
    mut eval: impl FnMut(f64) -> Result<(f64, T)>,
    delta: f64,
    rel_tol: f64,
    mu0: f64,
    max_outer: usize,
) -> Result<RootFind<T>> {
    let within = |r: f64| (r - delta).abs() / delta <= rel_tol;
    let mut evals = 0usize;
    let mut run = |mu: f64, evals: &mut usize| -> Result<(f64, T)> {
        *evals += 1;
        eval(mu)
    };

    let mut mu = mu0;
    let (mut r, mut state) = run(mu, &mut evals)?;
    if within(r) {
        return Ok(RootFind { mu, r, state, evals });
    }

    // Bracket: mu_lo keeps the residual above delta, mu_hi at or below.
    let mut mu_lo;
    let mut mu_hi;
    if r > delta {
        let mut steps = 0;
        loop {
            mu_lo = mu;
            mu *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(Error::Unbracketable {
                    doublings: MAX_BRACKET_STEPS,
                    last_mu: mu,
                });
            }
            (r, state) = run(mu, &mut evals)?;
            if within(r) {
                return Ok(RootFind { mu, r, state, evals });
            }
            if r <= delta {
                mu_hi = mu;
                break;
            }
        }
    } else {
        let mut steps = 0;
        loop {
            mu_hi = mu;
            mu /= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(Error::Unbracketable {
                    doublings: MAX_BRACKET_STEPS,
                    last_mu: mu,
                });
            }
            (r, state) = run(mu, &mut evals)?;
            if within(r) {
                return Ok(RootFind { mu, r, state, evals });
            }
            if r > delta {
                mu_lo = mu;
                break;
            }
        }
    }

    // Bisection on [mu_lo, mu_hi], budgeted by total evaluations.
    loop {
        if evals >= max_outer {
            return Err(Error::ProjectionDidNotConverge {
                max_outer,
                gap: (r - delta).abs() / delta,
            });
        }
        mu = 0.5 * (mu_lo + mu_hi);
        (r, state) = run(mu, &mut evals)?;
        if within(r) {
            return Ok(RootFind { mu, r, state, evals });
        }
        if r > delta {
            mu_lo = mu;
        } else {
            mu_hi = mu;
        }
    }
}

/// Recovers the multiplier from a projected pair via the stationarity
/// identity `mu = ||x - x*|| / ||A^T (A x - y)||`, independent of how the
/// projection was computed.
pub fn recover_mu(x_star: &Vector, x_proj: &Vector, v: &ValidSet) -> Result<f64> {
    if x_proj.len() != v.a.cols() || x_star.len() != v.a.cols() {
        return Err(Error::DimensionMismatch {
            expected: v.a.cols(),
            got: x_proj.len(),
            context: "recover_mu input",
        });
    }
    let num = x_proj.sub(x_star).norm();
    let ax = v.a.apply(x_proj)?;
    let den = v.a.adjoint_apply(&ax.sub(&v.y_delta))?.norm();
    if den == 0.0 {
        return Err(Error::ZeroDenominator {
            context: "recover_mu (interior point or exact data fit)",
        });
    }
    Ok(num / den)
}

/// Vector-Jacobian product of the projection at `x_star`.
///
/// `result` must come from `project_valid(x_star, v, ..)`. For interior
/// inputs the projection is the identity, so `g` is returned unchanged.
/// Otherwise, with `B = I + mu A^T A` and `w = x* - x`, this returns
///
/// ```text
/// B^{-1} g - (B^{-1} w) <w, B^{-1} g> / <w, B^{-1} w>
/// ```
///
/// via two CG solves. The Jacobian is symmetric, so the same code serves
/// forward- and reverse-mode products.
pub fn project_valid_vjp(
    g: &Vector,
    x_star: &Vector,
    result: &ProjectionResult,
    v: &ValidSet,
    cg: &CgConfig,
) -> Result<Vector> {
    if g.len() != x_star.len() || g.len() != result.x_proj.len() {
        return Err(Error::DimensionMismatch {
            expected: x_star.len(),
            got: g.len(),
            context: "projection vjp cotangent",
        });
    }
    if result.inside {
        return Ok(g.clone());
    }
    let w = x_star.sub(&result.x_proj);
    if w.norm() == 0.0 {
        return Err(Error::ZeroDenominator {
            context: "projection vjp radial direction",
        });
    }
    let z = cg_solve_normal_warm(&v.a, result.mu, g, None, cg)?;
    let t = cg_solve_normal_warm(&v.a, result.mu, &w, None, cg)?;
    let wt = w.dot(&t); // positive: B is SPD and w != 0
    let mut out = z.clone();
    out.axpy(-w.dot(&z) / wt, &t);
    Ok(out)
}
