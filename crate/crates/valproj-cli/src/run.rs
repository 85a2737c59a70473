//! Experiment execution: replica grid, solver dispatch, and output files.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use valproj::data::{add_noise, gen_test_function, shepp_logan_variant, PhantomVariant, TEST_FUNCTION_LEN};
use valproj::denoise::{default_levels, Denoiser, ThresholdMode};
use valproj::dip::{dip_run_with, DipConfig, DipLoss};
use valproj::io;
use valproj::metrics::{psnr, ssim};
use valproj::net::{Activation, DenseNet};
use valproj::operator::LinearOperator;
use valproj::projection::{project_valid, ValidSet};
use valproj::solvers::{pm_solve_with, red_solve_with, GroundTruth, SolveConfig};
use valproj::tikhonov::{tikhonov_morozov, TikhonovConfig};
use valproj::trace::TraceRecord;
use valproj::vnpa::{
    load_checkpoint, make_dataset, save_checkpoint, vnpa_forward, vnpa_train, VnpaModel,
    VnpaTrainConfig,
};
use valproj::Vector;

use crate::config::RunConfig;

/// Input-class failures (bad config, unreadable or unwritable paths) exit
/// with code 2; numerical failures inside a run exit with code 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical { stage: String, source: valproj::Error },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::Numerical { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Project,
    Pm,
    Red,
    RedVsPm,
    Dip,
    VnpaTrain,
    VnpaEval,
    Tikhonov,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Project => "project",
            Experiment::Pm => "pm",
            Experiment::Red => "red",
            Experiment::RedVsPm => "red-vs-pm",
            Experiment::Dip => "dip",
            Experiment::VnpaTrain => "vnpa-train",
            Experiment::VnpaEval => "vnpa-eval",
            Experiment::Tikhonov => "tikhonov",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Replica {
    pct: f64,
    seed: u64,
}

/// One measured instance: operator shared so vNPA can build per-sample sets.
struct Instance {
    a: Arc<LinearOperator>,
    v: ValidSet,
    gt: GroundTruth,
    image_side: Option<usize>,
}

fn build_operator(cfg: &RunConfig) -> Result<(Arc<LinearOperator>, Option<usize>), CliError> {
    let inst = &cfg.instance;
    match inst.kind.as_str() {
        "radon" => {
            let side = inst
                .side
                .ok_or_else(|| CliError::input("radon instance needs instance.side"))?;
            let angles = inst
                .angles
                .ok_or_else(|| CliError::input("radon instance needs instance.angles"))?;
            let a = LinearOperator::radon_sparse(side, angles)
                .map_err(|e| CliError::input(format!("instance: {e}")))?;
            Ok((Arc::new(a), Some(side)))
        }
        "gaussian" => {
            let rows = inst
                .rows
                .ok_or_else(|| CliError::input("gaussian instance needs instance.rows"))?;
            let cols = inst
                .cols
                .ok_or_else(|| CliError::input("gaussian instance needs instance.cols"))?;
            if cols != TEST_FUNCTION_LEN {
                return Err(CliError::input(format!(
                    "gaussian instances measure {TEST_FUNCTION_LEN}-sample test functions; instance.cols must be {TEST_FUNCTION_LEN}, got {cols}"
                )));
            }
            let op_seed = inst.operator_seed.unwrap_or(7);
            let a = LinearOperator::gaussian_sensing(op_seed, rows, cols)
                .map_err(|e| CliError::input(format!("instance: {e}")))?;
            Ok((Arc::new(a), None))
        }
        other => Err(CliError::input(format!(
            "unknown instance.kind {other:?} (expected \"radon\" or \"gaussian\")"
        ))),
    }
}

fn phantom_variant(cfg: &RunConfig) -> Result<PhantomVariant, CliError> {
    match cfg.instance.phantom.as_deref() {
        None | Some("modified") => Ok(PhantomVariant::Modified),
        Some("original") => Ok(PhantomVariant::Original),
        Some(other) => Err(CliError::input(format!(
            "unknown instance.phantom {other:?} (expected \"modified\" or \"original\")"
        ))),
    }
}

/// Ground truth, clean measurement, and exact-norm noise for one replica.
/// The replica seed drives the noise draw and, for gaussian instances, the
/// test-function draw feeding it.
fn build_instance(cfg: &RunConfig, rep: Replica) -> Result<Instance, CliError> {
    let (a, image_side) = build_operator(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rep.seed);
    let (x_true, gt) = match image_side {
        Some(side) => {
            let phantom = shepp_logan_variant(side, phantom_variant(cfg)?);
            (phantom.pixels.clone(), GroundTruth::image(phantom.pixels, side))
        }
        None => {
            let tf = gen_test_function(&mut rng);
            (tf.samples.clone(), GroundTruth::signal(tf.samples, 1.0))
        }
    };
    let y = a
        .apply(&x_true)
        .map_err(|e| CliError::input(format!("instance: {e}")))?;
    let (y_delta, delta) = add_noise(&y, rep.pct, &mut rng)
        .map_err(|e| CliError::input(format!("instance noise: {e}")))?;
    let v = ValidSet::shared(Arc::clone(&a), y_delta, delta)
        .map_err(|e| CliError::input(format!("instance: {e}")))?;
    Ok(Instance {
        a,
        v,
        gt,
        image_side,
    })
}

fn build_denoiser(cfg: &RunConfig, image_side: Option<usize>) -> Result<Denoiser, CliError> {
    let s = &cfg.solver;
    let mode = match s.threshold.as_str() {
        "soft" => ThresholdMode::Soft,
        "hard" => ThresholdMode::Hard,
        other => {
            return Err(CliError::input(format!(
                "unknown solver.threshold {other:?} (expected \"soft\" or \"hard\")"
            )))
        }
    };
    match s.denoiser.as_str() {
        "identity" => Ok(Denoiser::Identity),
        "box-clip" => Ok(Denoiser::BoxClip {
            lo: s.clip_lo,
            hi: s.clip_hi,
        }),
        "wavelet" => Ok(match image_side {
            Some(side) => Denoiser::Wavelet2d {
                side,
                levels: s.levels.unwrap_or_else(|| default_levels(side)),
                mode,
            },
            None => Denoiser::Wavelet1d {
                levels: s.levels.unwrap_or_else(|| default_levels(TEST_FUNCTION_LEN)),
                mode,
            },
        }),
        other => Err(CliError::input(format!(
            "unknown solver.denoiser {other:?} (expected \"wavelet\", \"box-clip\", or \"identity\")"
        ))),
    }
}

fn solve_config(cfg: &RunConfig, image_side: Option<usize>) -> Result<SolveConfig, CliError> {
    Ok(SolveConfig {
        max_iters: cfg.solver.max_iters,
        denoiser: build_denoiser(cfg, image_side)?,
        projection: cfg.projection.to_config(),
        red_mu: cfg.solver.red_mu,
        record_every: cfg.solver.record_every,
    })
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("cannot write {}: {e}", path.display()))
}

fn save_vector(dir: &Path, name: &str, x: &Vector, image_side: Option<usize>) -> Result<(), CliError> {
    let pmvec = dir.join(format!("{name}.pmvec"));
    io::write_pmvec(&pmvec, x).map_err(|e| write_err(&pmvec, e))?;
    if let Some(side) = image_side {
        let pgm = dir.join(format!("{name}.pgm"));
        io::write_pgm(&pgm, side, x).map_err(|e| write_err(&pgm, e))?;
    }
    Ok(())
}

/// Keeps the best-metric iterates while a solve streams records.
#[derive(Default)]
struct BestTracker {
    psnr: Option<(f64, Vector)>,
    ssim: Option<(f64, Vector)>,
}

impl BestTracker {
    fn observe(&mut self, x: &Vector, rec: &TraceRecord) {
        if let Some(p) = rec.psnr {
            if self.psnr.as_ref().is_none_or(|(best, _)| p > *best) {
                self.psnr = Some((p, x.clone()));
            }
        }
        if let Some(s) = rec.ssim {
            if self.ssim.as_ref().is_none_or(|(best, _)| s > *best) {
                self.ssim = Some((s, x.clone()));
            }
        }
    }

    fn save(&self, dir: &Path, image_side: Option<usize>) -> Result<(), CliError> {
        if let Some((_, x)) = &self.psnr {
            save_vector(dir, "best_psnr", x, image_side)?;
        }
        if let Some((_, x)) = &self.ssim {
            save_vector(dir, "best_ssim", x, image_side)?;
        }
        Ok(())
    }
}

fn metric_suffix(inst: &Instance, x: &Vector) -> String {
    let p = psnr(x, &inst.gt.x, inst.gt.data_range).unwrap_or(f64::NAN);
    match inst.image_side {
        Some(_) => {
            let s = ssim(x, &inst.gt.x).unwrap_or(f64::NAN);
            format!(" psnr={p:.2} ssim={s:.4}")
        }
        None => format!(" psnr={p:.2}"),
    }
}

fn stage(exp: Experiment, rep: Replica) -> String {
    format!("{} p={} s={}", exp.name(), rep.pct, rep.seed)
}

fn numerical(exp: Experiment, rep: Replica) -> impl Fn(valproj::Error) -> CliError {
    move |source| CliError::Numerical {
        stage: stage(exp, rep),
        source,
    }
}

fn run_solver(
    exp: Experiment,
    cfg: &RunConfig,
    rep: Replica,
    dir: &Path,
) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    let solve_cfg = solve_config(cfg, inst.image_side)?;
    save_vector(dir, "measurement", inst.v.y_delta(), None)?;

    // red-vs-pm shares one instance and config so the traces align by iter.
    let mut passes: Vec<(&str, bool)> = Vec::new();
    match exp {
        Experiment::Pm => passes.push(("", false)),
        Experiment::Red => passes.push(("", true)),
        Experiment::RedVsPm => {
            passes.push(("_red", true));
            passes.push(("_pm", false));
        }
        _ => unreachable!("run_solver handles pm/red/red-vs-pm"),
    }

    let mut summaries = Vec::new();
    for (suffix, is_red) in passes {
        if is_red && solve_cfg.red_mu.is_none() {
            return Err(CliError::input("red runs need solver.red_mu"));
        }
        let mut best = BestTracker::default();
        let t0 = Instant::now();
        let result = if is_red {
            red_solve_with(&inst.v, &solve_cfg, Some(&inst.gt), |_, x, rec| {
                best.observe(x, rec)
            })
        } else {
            pm_solve_with(&inst.v, &solve_cfg, Some(&inst.gt), |_, x, rec| {
                best.observe(x, rec)
            })
        };
        let (x_final, trace) = result.map_err(&numerical(exp, rep))?;
        let wall = t0.elapsed().as_secs_f64();

        let trace_path = dir.join(format!("trace{suffix}.csv"));
        std::fs::write(&trace_path, trace.to_csv()).map_err(|e| write_err(&trace_path, e))?;
        save_vector(dir, &format!("final{suffix}"), &x_final, inst.image_side)?;
        best.save(dir, inst.image_side)?;

        let gap = inst.v.residual_gap(&x_final).map_err(&numerical(exp, rep))?;
        let label = if is_red { "red" } else { "pm" };
        summaries.push(format!(
            "{label} p={} s={}: iters={}{} gap={gap:.3e} wall={wall:.1}s",
            rep.pct,
            rep.seed,
            solve_cfg.max_iters,
            metric_suffix(&inst, &x_final),
        ));
    }
    Ok(summaries)
}

fn run_project(cfg: &RunConfig, rep: Replica, dir: &Path) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    let n = inst.a.cols();
    let x_star = match cfg.project.as_ref().and_then(|p| p.input.as_ref()) {
        Some(path) => {
            let x = io::read_pmvec(path)
                .map_err(|e| CliError::input(format!("project.input {}: {e}", path.display())))?;
            if x.len() != n {
                return Err(CliError::input(format!(
                    "project.input has {} entries, operator expects {n}",
                    x.len()
                )));
            }
            x
        }
        None => Vector::zeros(n),
    };
    save_vector(dir, "measurement", inst.v.y_delta(), None)?;

    let t0 = Instant::now();
    let result = project_valid(&x_star, &inst.v, &cfg.projection.to_config())
        .map_err(&numerical(Experiment::Project, rep))?;
    let wall = t0.elapsed().as_secs_f64();
    let gap = inst
        .v
        .residual_gap(&result.x_proj)
        .map_err(&numerical(Experiment::Project, rep))?;
    save_vector(dir, "projected", &result.x_proj, inst.image_side)?;

    Ok(vec![format!(
        "project p={} s={}: mu={:.4e} outer_iters={} gap={gap:.3e} inside={}{} wall={wall:.1}s",
        rep.pct,
        rep.seed,
        result.mu,
        result.outer_iters,
        result.inside,
        metric_suffix(&inst, &result.x_proj),
    )])
}

fn run_tikhonov(cfg: &RunConfig, rep: Replica, dir: &Path) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    save_vector(dir, "measurement", inst.v.y_delta(), None)?;
    let p = &cfg.projection;
    let tik = TikhonovConfig {
        l: None,
        morozov_tol: p.rel_residual_tol,
        mu0: p.mu0,
        max_outer: p.max_outer,
        cg: p.to_config().cg,
    };
    let t0 = Instant::now();
    let (x, mu) = tikhonov_morozov(&inst.v, &tik).map_err(&numerical(Experiment::Tikhonov, rep))?;
    let wall = t0.elapsed().as_secs_f64();
    let gap = inst
        .v
        .residual_gap(&x)
        .map_err(&numerical(Experiment::Tikhonov, rep))?;
    save_vector(dir, "final", &x, inst.image_side)?;
    Ok(vec![format!(
        "tikhonov p={} s={}: mu={mu:.4e} gap={gap:.3e}{} wall={wall:.1}s",
        rep.pct,
        rep.seed,
        metric_suffix(&inst, &x),
    )])
}

fn run_dip(cfg: &RunConfig, rep: Replica, dir: &Path) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    let side = inst
        .image_side
        .ok_or_else(|| CliError::input("dip runs use the radon image instance"))?;
    let dip = cfg.dip.clone().unwrap_or_default();
    let loss = match dip.loss.as_str() {
        "dip" => DipLoss::Dip,
        "dip-delta" => DipLoss::DipDelta,
        other => {
            return Err(CliError::input(format!(
                "unknown dip.loss {other:?} (expected \"dip\" or \"dip-delta\")"
            )))
        }
    };
    // Fixed generator shape: latent 64 through 256 and 1024 to the image.
    let mut net_rng = ChaCha8Rng::seed_from_u64(dip.net_seed);
    let mut net = DenseNet::new(
        &[64, 256, 1024, side * side],
        &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
        &mut net_rng,
    )
    .map_err(|e| CliError::input(format!("dip generator: {e}")))?;
    let dcfg = DipConfig {
        loss,
        iters: dip.iters,
        lr: dip.lr,
        record_every: dip.record_every,
        z_seed: dip.z_seed,
    };
    save_vector(dir, "measurement", inst.v.y_delta(), None)?;

    let mut best = BestTracker::default();
    let t0 = Instant::now();
    let (x_final, trace) = dip_run_with(&inst.v, &mut net, &dcfg, Some(&inst.gt), |_, x, rec| {
        best.observe(x, rec)
    })
    .map_err(&numerical(Experiment::Dip, rep))?;
    let wall = t0.elapsed().as_secs_f64();

    let trace_path = dir.join("trace.csv");
    std::fs::write(&trace_path, trace.to_csv()).map_err(|e| write_err(&trace_path, e))?;
    save_vector(dir, "final", &x_final, Some(side))?;
    best.save(dir, Some(side))?;
    let gap = inst
        .v
        .residual_gap(&x_final)
        .map_err(&numerical(Experiment::Dip, rep))?;
    Ok(vec![format!(
        "dip({}) p={} s={}: iters={}{} gap={gap:.3e} wall={wall:.1}s",
        dip.loss,
        rep.pct,
        rep.seed,
        dip.iters,
        metric_suffix(&inst, &x_final),
    )])
}

fn run_vnpa_train(cfg: &RunConfig, rep: Replica, dir: &Path) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    if inst.image_side.is_some() {
        return Err(CliError::input(
            "vnpa experiments use the gaussian instance (learned test-function prior)",
        ));
    }
    let vn = cfg.vnpa.clone().unwrap_or_default();
    let mut data_rng = ChaCha8Rng::seed_from_u64(rep.seed);
    let train = make_dataset(&inst.a, rep.pct, vn.train_count, &mut data_rng)
        .map_err(|e| CliError::input(format!("vnpa dataset: {e}")))?;
    let mut model_rng = ChaCha8Rng::seed_from_u64(vn.model_seed);
    let mut model = VnpaModel::autoencoder_stack(vn.n, &vn.widths, &mut model_rng)
        .map_err(|e| CliError::input(format!("vnpa model: {e}")))?;
    if model.dim() != inst.a.cols() {
        return Err(CliError::input(format!(
            "vnpa.widths endpoints ({}) must match instance.cols ({})",
            model.dim(),
            inst.a.cols()
        )));
    }
    let tcfg = VnpaTrainConfig {
        batches: vn.batches,
        batch_size: vn.batch_size,
        lr: vn.lr,
        projection: cfg.projection.to_config(),
        // batch sampling stream kept distinct from the data draw
        seed: rep.seed.wrapping_add(1),
    };
    let t0 = Instant::now();
    let curve = vnpa_train(&mut model, &inst.a, &train, &tcfg)
        .map_err(&numerical(Experiment::VnpaTrain, rep))?;
    let wall = t0.elapsed().as_secs_f64();

    let ckpt = dir.join("checkpoint.vnpa");
    save_checkpoint(&ckpt, &model).map_err(|e| write_err(&ckpt, e))?;
    let loss_path = dir.join("loss.csv");
    let mut csv = String::from("batch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{i},{l:.12e}\n"));
    }
    std::fs::write(&loss_path, csv).map_err(|e| write_err(&loss_path, e))?;

    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    Ok(vec![format!(
        "vnpa-train p={} s={}: batches={} loss {first:.4e} -> {last:.4e} params={} wall={wall:.1}s",
        rep.pct,
        rep.seed,
        curve.len(),
        model.param_count(),
    )])
}

fn run_vnpa_eval(cfg: &RunConfig, rep: Replica, dir: &Path) -> Result<Vec<String>, CliError> {
    let inst = build_instance(cfg, rep)?;
    if inst.image_side.is_some() {
        return Err(CliError::input(
            "vnpa experiments use the gaussian instance (learned test-function prior)",
        ));
    }
    let vn = cfg.vnpa.clone().unwrap_or_default();
    let ckpt = vn
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::input("vnpa-eval needs vnpa.checkpoint"))?;
    let model = load_checkpoint(ckpt)
        .map_err(|e| CliError::input(format!("checkpoint {}: {e}", ckpt.display())))?;
    if model.dim() != inst.a.cols() {
        return Err(CliError::input(format!(
            "checkpoint dimension {} does not match instance.cols {}",
            model.dim(),
            inst.a.cols()
        )));
    }
    let mut data_rng = ChaCha8Rng::seed_from_u64(rep.seed);
    let samples = make_dataset(&inst.a, rep.pct, vn.eval_count, &mut data_rng)
        .map_err(|e| CliError::input(format!("vnpa dataset: {e}")))?;

    let proj = cfg.projection.to_config();
    let x0 = Vector::zeros(model.dim());
    let mut lines = Vec::with_capacity(samples.len() + 1);
    let mut csv = String::from("sample,rel_err,gap\n");
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let vs = ValidSet::shared(Arc::clone(&inst.a), s.y_delta.clone(), s.delta)
            .map_err(&numerical(Experiment::VnpaEval, rep))?;
        let (out, _) = vnpa_forward(&model, &vs, &x0, &proj)
            .map_err(&numerical(Experiment::VnpaEval, rep))?;
        let gap = vs
            .residual_gap(&out)
            .map_err(&numerical(Experiment::VnpaEval, rep))?;
        let rel = out.sub(&s.x).norm() / s.x.norm();
        total += rel;
        save_vector(dir, &format!("recon_{i:02}"), &out, None)?;
        lines.push(format!("sample {i:02} rel_err={rel:.4e} gap={gap:.3e}"));
        csv.push_str(&format!("{i},{rel:.12e},{gap:.12e}\n"));
    }
    let mean = total / samples.len() as f64;
    lines.push(format!(
        "vnpa-eval p={} s={}: mean rel_err={mean:.4e} over {} samples",
        rep.pct,
        rep.seed,
        samples.len()
    ));
    let csv_path = dir.join("eval.csv");
    std::fs::write(&csv_path, csv).map_err(|e| write_err(&csv_path, e))?;
    Ok(lines)
}

fn run_replica(
    exp: Experiment,
    cfg: &RunConfig,
    rep: Replica,
    out_root: &Path,
) -> Result<Vec<String>, CliError> {
    let dir = out_root.join(format!("run-p{}-s{}", rep.pct, rep.seed));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    match exp {
        Experiment::Pm | Experiment::Red | Experiment::RedVsPm => run_solver(exp, cfg, rep, &dir),
        Experiment::Project => run_project(cfg, rep, &dir),
        Experiment::Tikhonov => run_tikhonov(cfg, rep, &dir),
        Experiment::Dip => run_dip(cfg, rep, &dir),
        Experiment::VnpaTrain => run_vnpa_train(cfg, rep, &dir),
        Experiment::VnpaEval => run_vnpa_eval(cfg, rep, &dir),
    }
}

/// Runs the (noise, seed) replica grid, fanning out over `jobs` workers.
/// Summaries come back in grid order regardless of completion order.
pub fn run_experiment(
    exp: Experiment,
    cfg: &RunConfig,
    out_root: &Path,
    jobs: usize,
) -> Result<Vec<String>, CliError> {
    let mut seeds = cfg.instance.seeds.clone();
    if let Ok(raw) = std::env::var("VALPROJ_SEED") {
        let seed: u64 = raw
            .parse()
            .map_err(|_| CliError::input(format!("VALPROJ_SEED {raw:?} is not an integer")))?;
        seeds = vec![seed];
    }
    let mut replicas = Vec::new();
    for &pct in &cfg.noise_levels().map_err(CliError::Input)? {
        for &seed in &seeds {
            replicas.push(Replica { pct, seed });
        }
    }

    let workers = jobs.max(1).min(replicas.len());
    if workers <= 1 {
        let mut out = Vec::new();
        for rep in replicas {
            out.extend(run_replica(exp, cfg, rep, out_root)?);
        }
        return Ok(out);
    }

    let mut slots: Vec<Option<Result<Vec<String>, CliError>>> =
        (0..replicas.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let reps = &replicas;
            handles.push(scope.spawn(move || {
                let mut results = Vec::new();
                for (i, rep) in reps.iter().enumerate() {
                    if i % workers == w {
                        results.push((i, run_replica(exp, cfg, *rep, out_root)));
                    }
                }
                results
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });

    let mut out = Vec::new();
    for slot in slots {
        out.extend(slot.expect("replica never ran")?);
    }
    Ok(out)
}
