//! Untrained-generator reconstruction at desk scale.
//!
//! A fixed random code `z` is pushed through a small dense generator whose
//! parameters are optimized by Adam against one of two losses:
//!
//! - plain: `L = 1/2 ||A G(z) - y||^2`, which keeps improving the data fit
//!   past the noise level and eventually fits noise (visible as PSNR decay
//!   late in training);
//! - noise-aware: `L = (||A G(z) - y||^2 - delta^2)^2`, whose minimum is a
//!   residual norm of exactly `delta`, so optimization stalls at the noise
//!   level instead of overfitting.
//!
//! The reconstruction is the generator output, never a projected point;
//! data consistency is only as good as the achieved loss.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::{adam_step, AdamState, DenseNet, Grads};
use crate::projection::ValidSet;
use crate::solvers::{optional_metrics, GroundTruth, MetricsCtx};
use crate::trace::{RunTrace, TraceRecord};
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipLoss {
    /// `1/2 ||A G(z) - y||^2`.
    Dip,
    /// `(||A G(z) - y||^2 - delta^2)^2`.
    DipDelta,
}

#[derive(Debug, Clone)]
pub struct DipConfig {
    pub loss: DipLoss,
    pub iters: usize,
    pub lr: f64,
    pub record_every: usize,
    /// Seed for the fixed code vector `z`, drawn once per run.
    pub z_seed: u64,
}

impl DipConfig {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter {
                name: "dip config",
                reason: "iters and record_every must be at least 1".into(),
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lr",
                reason: format!("must be positive, got {}", self.lr),
            });
        }
        Ok(())
    }
}

/// Loss and parameter gradients at the current generator weights.
///
/// Both losses chain the measurement residual `r = A G(z) - y` through the
/// generator: the cotangent at the output is `A^T r` for the plain loss and
/// `4 (||r||^2 - delta^2) A^T r` for the noise-aware one. A non-finite loss
/// is reported before any gradient is formed.
pub fn dip_loss_and_grads(
    v: &ValidSet,
    net: &DenseNet,
    z: &Vector,
    loss: DipLoss,
) -> Result<(f64, Grads)> {
    if net.out_dim() != v.operator().cols() {
        return Err(Error::DimensionMismatch {
            expected: v.operator().cols(),
            got: net.out_dim(),
            context: "generator output",
        });
    }
    let (out, tape) = net.forward(z)?;
    let r = v.operator().apply(&out)?.sub(v.y_delta());
    let rn2 = r.dot(&r);
    let delta2 = v.delta() * v.delta();
    let loss_value = match loss {
        DipLoss::Dip => 0.5 * rn2,
        DipLoss::DipDelta => (rn2 - delta2) * (rn2 - delta2),
    };
    if !loss_value.is_finite() {
        return Err(Error::NonFinite { context: "dip loss" });
    }
    let scale = match loss {
        DipLoss::Dip => 1.0,
        DipLoss::DipDelta => 4.0 * (rn2 - delta2),
    };
    let cotangent = v.operator().adjoint_apply(&r)?.scale(scale);
    let (grads, _) = net.backward(&tape, &cotangent)?;
    Ok((loss_value, grads))
}

/// [`dip_run`] with a per-record callback over recorded reconstructions.
pub fn dip_run_with(
    v: &ValidSet,
    net: &mut DenseNet,
    cfg: &DipConfig,
    gt: Option<&GroundTruth>,
    mut on_record: impl FnMut(usize, &Vector, &TraceRecord),
) -> Result<(Vector, RunTrace)> {
    cfg.validate()?;
    let a = v.operator();
    let ctx = gt.map(|g| MetricsCtx::new(a, g)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.z_seed);
    let z = Vector::from_fn(net.in_dim(), |_| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    })?;

    let start = Instant::now();
    let mut adam = AdamState::new(net.param_count(), cfg.lr);
    let mut trace = RunTrace::new();
    let mut x = Vector::zeros(net.out_dim());
    for k in 1..=cfg.iters {
        let step = dip_loss_and_grads(v, net, &z, cfg.loss).and_then(|(loss, grads)| {
            adam_step(net, &grads, &mut adam)?;
            Ok(loss)
        });
        if let Err(e) = step {
            return Err(match e {
                Error::NonFinite { context: "dip loss" } => Error::NonFiniteLoss { iter: k },
                other => other.at_iteration(k),
            });
        }
        if k % cfg.record_every == 0 || k == cfg.iters {
            let wrap = |e: Error| e.at_iteration(k);
            x = net.forward(&z).map_err(wrap)?.0;
            let (p, s, rel) = optional_metrics(&ctx, a, &x).map_err(wrap)?;
            let record = TraceRecord {
                iter: k,
                wall_seconds: start.elapsed().as_secs_f64(),
                psnr: p,
                ssim: s,
                rel_meas_err: rel,
                mu: 0.0,
                outer_iters: 0,
                residual_gap: v.residual_gap(&x).map_err(wrap)?,
            };
            trace.push(record.clone()).map_err(wrap)?;
            on_record(k, &x, &record);
        }
    }
    Ok((x, trace))
}

/// Optimizes the generator in place and returns its final output with the
/// run trace. The last iteration is always recorded, so the trace's last
/// row describes the returned reconstruction.
pub fn dip_run(
    v: &ValidSet,
    net: &mut DenseNet,
    cfg: &DipConfig,
    gt: Option<&GroundTruth>,
) -> Result<(Vector, RunTrace)> {
    dip_run_with(v, net, cfg, gt, |_, _, _| {})
}
