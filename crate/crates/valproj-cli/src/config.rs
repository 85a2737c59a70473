//! TOML run configuration: flat key=value fields grouped in sections.
//!
//! Unknown keys are rejected so typos surface as parse errors (exit code 2)
//! instead of silently falling back to defaults.

use serde::Deserialize;
use std::path::PathBuf;

use valproj::cg::CgConfig;
use valproj::projection::ProjectionConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    pub dip: Option<DipSection>,
    pub vnpa: Option<VnpaSection>,
    pub project: Option<ProjectSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    /// "radon" (phantom image) or "gaussian" (random sensing of a 1-D test function).
    pub kind: String,
    pub side: Option<usize>,
    pub angles: Option<usize>,
    /// "modified" (default) or "classical" phantom intensity variant.
    pub phantom: Option<String>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub operator_seed: Option<u64>,
    /// Single noise level, or several via noise_pcts; exactly one must be set.
    pub noise_pct: Option<f64>,
    pub noise_pcts: Option<Vec<f64>>,
    /// Replica seeds; each (noise_pct, seed) pair runs independently.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iters: usize,
    pub record_every: usize,
    /// "wavelet", "box-clip", or "identity".
    pub denoiser: String,
    pub levels: Option<usize>,
    /// "soft" or "hard" wavelet thresholding.
    pub threshold: String,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub red_mu: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_iters: 300,
            record_every: 1,
            denoiser: "wavelet".into(),
            levels: None,
            threshold: "soft".into(),
            clip_lo: 0.0,
            clip_hi: 1.0,
            red_mu: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSection {
    pub rel_residual_tol: f64,
    pub mu0: f64,
    pub max_outer: usize,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        let p = ProjectionConfig::default();
        Self {
            rel_residual_tol: p.rel_residual_tol,
            mu0: p.mu0,
            max_outer: p.max_outer,
            cg_tol: p.cg.tol,
            cg_max_iter: p.cg.max_iter,
        }
    }
}

impl ProjectionSection {
    pub fn to_config(&self) -> ProjectionConfig {
        ProjectionConfig {
            rel_residual_tol: self.rel_residual_tol,
            mu0: self.mu0,
            max_outer: self.max_outer,
            cg: CgConfig {
                tol: self.cg_tol,
                max_iter: self.cg_max_iter,
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DipSection {
    /// "dip" or "dip-delta".
    pub loss: String,
    pub iters: usize,
    pub lr: f64,
    pub record_every: usize,
    pub z_seed: u64,
    pub net_seed: u64,
}

impl Default for DipSection {
    fn default() -> Self {
        Self {
            loss: "dip-delta".into(),
            iters: 20_000,
            lr: 1e-3,
            record_every: 100,
            z_seed: 5,
            net_seed: 77,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VnpaSection {
    pub n: usize,
    pub widths: Vec<usize>,
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_count: usize,
    pub eval_count: usize,
    pub model_seed: u64,
    /// Required for vnpa-eval: checkpoint written by a vnpa-train run.
    pub checkpoint: Option<PathBuf>,
}

impl Default for VnpaSection {
    fn default() -> Self {
        Self {
            n: 4,
            widths: vec![128, 64, 32, 64, 128],
            batches: 2000,
            batch_size: 32,
            lr: 1e-2,
            train_count: 64_000,
            eval_count: 16,
            model_seed: 5,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectSection {
    /// PMVEC1 file with the point to project; zeros when absent.
    pub input: Option<PathBuf>,
}

impl Default for ProjectSection {
    fn default() -> Self {
        Self { input: None }
    }
}

impl RunConfig {
    /// Noise levels for the replica grid; exactly one of the two keys.
    pub fn noise_levels(&self) -> Result<Vec<f64>, String> {
        match (&self.instance.noise_pct, &self.instance.noise_pcts) {
            (Some(p), None) => Ok(vec![*p]),
            (None, Some(list)) if !list.is_empty() => Ok(list.clone()),
            (None, Some(_)) => Err("instance.noise_pcts is empty".into()),
            (Some(_), Some(_)) => {
                Err("set instance.noise_pct or instance.noise_pcts, not both".into())
            }
            (None, None) => Err("missing instance.noise_pct".into()),
        }
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let cfg: RunConfig =
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    if cfg.instance.seeds.is_empty() {
        return Err(format!("config {}: instance.seeds is empty", path.display()));
    }
    let p = &cfg.projection;
    if !(p.rel_residual_tol > 0.0 && p.rel_residual_tol < 1.0) {
        return Err(format!(
            "config {}: projection.rel_residual_tol must be in (0, 1), got {}",
            path.display(),
            p.rel_residual_tol
        ));
    }
    if !(p.mu0.is_finite() && p.mu0 > 0.0) {
        return Err(format!(
            "config {}: projection.mu0 must be positive, got {}",
            path.display(),
            p.mu0
        ));
    }
    if p.max_outer == 0 {
        return Err(format!(
            "config {}: projection.max_outer must be at least 1",
            path.display()
        ));
    }
    if !(p.cg_tol > 0.0) {
        return Err(format!(
            "config {}: projection.cg_tol must be positive, got {}",
            path.display(),
            p.cg_tol
        ));
    }
    Ok(cfg)
}
