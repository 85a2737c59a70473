//! Reconstruction loops built on the valid-set projection.
//!
//! Both iterations alternate a prior step with a data step from `x_0 = 0`:
//!
//! - [`pm_solve`]: `x_{k+1} = P_V(denoiser(x_k))` with the projection
//!   choosing its multiplier per step, so every iterate (and in particular
//!   the returned one) is measurement-consistent by construction.
//! - [`red_solve`]: `x_{k+1} = (I + mu A^T A)^{-1} (mu A^T y + denoiser(x_k))`
//!   with a fixed multiplier. The same update as the projection's inner
//!   solve, but without the root find; consistency at the end is not
//!   guaranteed.
//!
//! [`red_pm_equivalence_check`] makes the relationship exact: a PM step
//! equals a RED step whose multiplier is set to the one the projection
//! chose.

use std::time::Instant;

use crate::cg::{cg_solve_normal_warm, CgConfig};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::operator::LinearOperator;
use crate::projection::{project_valid, ProjectionConfig, ValidSet};
use crate::trace::{RunTrace, TraceRecord};
use crate::vector::Vector;

/// Shared settings for the iterative solvers.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub max_iters: usize,
    pub denoiser: Denoiser,
    pub projection: ProjectionConfig,
    /// Fixed multiplier for [`red_solve`]; unused by [`pm_solve`].
    pub red_mu: Option<f64>,
    /// Trace every k-th iteration (the last one is always recorded).
    pub record_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            denoiser: Denoiser::Identity,
            projection: ProjectionConfig::default(),
            red_mu: None,
            record_every: 1,
        }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "record_every",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Reference signal for trace metrics, with the conventions the metrics
/// need: `data_range` for PSNR and an optional square-image side for SSIM.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: Vector,
    /// Set for image signals; enables SSIM on the trace.
    pub image_side: Option<usize>,
    pub data_range: f64,
}

impl GroundTruth {
    /// Image ground truth in `[0, 1]`, the usual phantom setting.
    pub fn image(x: Vector, side: usize) -> Self {
        Self {
            x,
            image_side: Some(side),
            data_range: 1.0,
        }
    }

    /// Non-image signal; the trace carries PSNR but no SSIM.
    pub fn signal(x: Vector, data_range: f64) -> Self {
        Self {
            x,
            image_side: None,
            data_range,
        }
    }
}

/// Precomputed per-run metric context: the clean measurement for the
/// relative measurement error, plus validated ground-truth shape.
pub(crate) struct MetricsCtx<'a> {
    gt: &'a GroundTruth,
    y_clean: Vector,
    y_norm: f64,
}

impl<'a> MetricsCtx<'a> {
    pub(crate) fn new(a: &LinearOperator, gt: &'a GroundTruth) -> Result<Self> {
        if gt.x.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.cols(),
                got: gt.x.len(),
                context: "ground truth",
            });
        }
        if let Some(side) = gt.image_side {
            if side * side != gt.x.len() || side < 11 {
                return Err(Error::InvalidParameter {
                    name: "image_side",
                    reason: format!("side {side} incompatible with length {}", gt.x.len()),
                });
            }
        }
        let y_clean = a.apply(&gt.x)?;
        let y_norm = y_clean.norm();
        if y_norm == 0.0 {
            return Err(Error::InvalidParameter {
                name: "ground truth",
                reason: "clean measurement is zero; relative errors undefined".into(),
            });
        }
        Ok(Self { gt, y_clean, y_norm })
    }

    /// `(psnr, ssim, rel_meas_err)` of an iterate.
    pub(crate) fn eval(
        &self,
        a: &LinearOperator,
        x: &Vector,
    ) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
        let p = psnr(x, &self.gt.x, self.gt.data_range)?;
        let s = match self.gt.image_side {
            Some(_) => Some(ssim(x, &self.gt.x)?),
            None => None,
        };
        let rel = a.apply(x)?.sub(&self.y_clean).norm() / self.y_norm;
        Ok((Some(p), s, Some(rel)))
    }
}

pub(crate) fn optional_metrics(
    ctx: &Option<MetricsCtx<'_>>,
    a: &LinearOperator,
    x: &Vector,
) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    match ctx {
        Some(c) => c.eval(a, x),
        None => Ok((None, None, None)),
    }
}

/// [`pm_solve`] with a per-record callback; the callback sees every iterate
/// that lands in the trace, which is how callers keep best-so-far copies
/// without the solver holding extra snapshots.
pub fn pm_solve_with(
    v: &ValidSet,
    cfg: &SolveConfig,
    gt: Option<&GroundTruth>,
    mut on_record: impl FnMut(usize, &Vector, &TraceRecord),
) -> Result<(Vector, RunTrace)> {
    cfg.validate()?;
    let a = v.operator();
    let ctx = gt.map(|g| MetricsCtx::new(a, g)).transpose()?;
    let start = Instant::now();
    let mut trace = RunTrace::new();
    let mut x = Vector::zeros(a.cols());
    for k in 1..=cfg.max_iters {
        let wrap = |e: Error| e.at_iteration(k);
        let denoised = cfg.denoiser.apply(&x).map_err(wrap)?;
        let proj = project_valid(&denoised, v, &cfg.projection).map_err(wrap)?;
        x = proj.x_proj;
        if k % cfg.record_every == 0 || k == cfg.max_iters {
            let (p, s, rel) = optional_metrics(&ctx, a, &x).map_err(wrap)?;
            let record = TraceRecord {
                iter: k,
                wall_seconds: start.elapsed().as_secs_f64(),
                psnr: p,
                ssim: s,
                rel_meas_err: rel,
                mu: proj.mu,
                outer_iters: proj.outer_iters,
                residual_gap: proj.residual_gap,
            };
            trace.push(record.clone()).map_err(wrap)?;
            on_record(k, &x, &record);
        }
    }
    Ok((x, trace))
}

/// Projected denoising iteration `x_{k+1} = P_V(denoiser(x_k))` from
/// `x_0 = 0`. The returned iterate satisfies the validity gap of the
/// projection tolerance because the projection runs last.
pub fn pm_solve(
    v: &ValidSet,
    cfg: &SolveConfig,
    gt: Option<&GroundTruth>,
) -> Result<(Vector, RunTrace)> {
    pm_solve_with(v, cfg, gt, |_, _, _| {})
}

/// One fixed-multiplier update `(I + mu A^T A)^{-1}(mu A^T y + denoiser(x))`.
pub fn red_step(
    v: &ValidSet,
    denoiser: &Denoiser,
    red_mu: f64,
    x: &Vector,
    cg: &CgConfig,
) -> Result<Vector> {
    if !(red_mu.is_finite() && red_mu > 0.0) {
        return Err(Error::InvalidParameter {
            name: "red_mu",
            reason: format!("must be positive, got {red_mu}"),
        });
    }
    let mut b = v.operator().adjoint_apply(v.y_delta())?.scale(red_mu);
    b = b.add(&denoiser.apply(x)?);
    cg_solve_normal_warm(v.operator(), red_mu, &b, Some(x), cg)
}

/// [`red_solve`] with a per-record callback, mirroring [`pm_solve_with`].
pub fn red_solve_with(
    v: &ValidSet,
    cfg: &SolveConfig,
    gt: Option<&GroundTruth>,
    mut on_record: impl FnMut(usize, &Vector, &TraceRecord),
) -> Result<(Vector, RunTrace)> {
    cfg.validate()?;
    let red_mu = cfg.red_mu.ok_or(Error::InvalidParameter {
        name: "red_mu",
        reason: "red_solve needs a fixed multiplier".into(),
    })?;
    let a = v.operator();
    let ctx = gt.map(|g| MetricsCtx::new(a, g)).transpose()?;
    let start = Instant::now();
    let mut trace = RunTrace::new();
    let mut x = Vector::zeros(a.cols());
    for k in 1..=cfg.max_iters {
        let wrap = |e: Error| e.at_iteration(k);
        x = red_step(v, &cfg.denoiser, red_mu, &x, &cfg.projection.cg).map_err(wrap)?;
        if k % cfg.record_every == 0 || k == cfg.max_iters {
            let (p, s, rel) = optional_metrics(&ctx, a, &x).map_err(wrap)?;
            let record = TraceRecord {
                iter: k,
                wall_seconds: start.elapsed().as_secs_f64(),
                psnr: p,
                ssim: s,
                rel_meas_err: rel,
                mu: red_mu,
                outer_iters: 0,
                residual_gap: v.residual_gap(&x).map_err(wrap)?,
            };
            trace.push(record.clone()).map_err(wrap)?;
            on_record(k, &x, &record);
        }
    }
    Ok((x, trace))
}

/// Fixed-multiplier denoising iteration from `x_0 = 0`.
pub fn red_solve(
    v: &ValidSet,
    cfg: &SolveConfig,
    gt: Option<&GroundTruth>,
) -> Result<(Vector, RunTrace)> {
    red_solve_with(v, cfg, gt, |_, _, _| {})
}

/// Outcome of [`red_pm_equivalence_check`].
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    /// Multiplier the projection chose (0 when the denoised point was
    /// already valid).
    pub mu: f64,
    /// `||x_red - x_pm||` with the multiplier matched.
    pub diff: f64,
    pub inside: bool,
}

/// Runs one PM step and one RED step from the same iterate, with RED's
/// multiplier set to the one the PM projection chose. Both then solve the
/// same linear system, so the difference is at solver-accuracy level; a
/// large value indicates the two updates have drifted apart.
pub fn red_pm_equivalence_check(
    v: &ValidSet,
    cfg: &SolveConfig,
    x_k: &Vector,
) -> Result<EquivalenceReport> {
    let denoised = cfg.denoiser.apply(x_k)?;
    let proj = project_valid(&denoised, v, &cfg.projection)?;
    let x_red = if proj.inside {
        // mu = 0: the RED update degenerates to the denoised point itself.
        denoised.clone()
    } else {
        let mut b = v.operator().adjoint_apply(v.y_delta())?.scale(proj.mu);
        b = b.add(&denoised);
        cg_solve_normal_warm(v.operator(), proj.mu, &b, None, &cfg.projection.cg)?
    };
    Ok(EquivalenceReport {
        mu: proj.mu,
        diff: x_red.sub(&proj.x_proj).norm(),
        inside: proj.inside,
    })
}
