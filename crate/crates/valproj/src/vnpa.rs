//! Learned maps interleaved with valid-set projections, trained end to end
//! through the projection's vector-Jacobian product.
//!
//! The model applies `n + 1` projections around `n` networks:
//!
//! ```text
//! x_out = P ( g_{n-1} ( P ( ... g_0 ( P (x_0) ) ... ) ) )
//! ```
//!
//! so the output is measurement-consistent within the projection tolerance
//! no matter what the networks do - before, during and after training.
//! Training minimizes the mean squared error against ground-truth signals;
//! gradients flow through every stage, the projections contributing their
//! implicit-function-theorem VJP.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cg::CgConfig;
use crate::data::{add_noise, gen_test_function};
use crate::error::{Error, Result};
use crate::io;
use crate::net::{adam_step, Activation, AdamState, DenseNet, Grads, Layer, Tape};
use crate::operator::LinearOperator;
use crate::projection::{project_valid, ProjectionConfig, ProjectionResult, ValidSet};
use crate::vector::Vector;

/// A stack of signal-space networks sharing one signal dimension.
#[derive(Debug, Clone)]
pub struct VnpaModel {
    dim: usize,
    nets: Vec<DenseNet>,
}

impl VnpaModel {
    /// `nets` may be empty (the model degenerates to a single projection);
    /// every net must map the signal space to itself.
    pub fn new(dim: usize, nets: Vec<DenseNet>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "signal dimension must be positive".into(),
            });
        }
        for (i, net) in nets.iter().enumerate() {
            if net.in_dim() != dim || net.out_dim() != dim {
                return Err(Error::InvalidParameter {
                    name: "nets",
                    reason: format!(
                        "net {i} maps {}->{}; the model needs {dim}->{dim}",
                        net.in_dim(),
                        net.out_dim()
                    ),
                });
            }
        }
        Ok(Self { dim, nets })
    }

    /// The default stack: `n` separate autoencoders with the given widths
    /// (first == last == signal dimension), all layers ReLU except a final
    /// Sigmoid.
    pub fn autoencoder_stack<R: Rng>(n: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.first() != widths.last() {
            return Err(Error::InvalidParameter {
                name: "widths",
                reason: "autoencoder widths must start and end at the signal dimension".into(),
            });
        }
        let mut acts = vec![Activation::Relu; widths.len() - 1];
        *acts.last_mut().unwrap() = Activation::Sigmoid;
        let nets = (0..n)
            .map(|_| DenseNet::new(widths, &acts, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths[0], nets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.nets.len()
    }

    pub fn nets(&self) -> &[DenseNet] {
        &self.nets
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(DenseNet::param_count).sum()
    }
}

/// Activation record of one forward pass: `n + 1` projection stages and
/// `n` net stages, in application order.
#[derive(Debug, Clone)]
pub struct VnpaTape {
    stages: Vec<VnpaStage>,
}

#[derive(Debug, Clone)]
enum VnpaStage {
    Projection {
        x_star: Vector,
        result: ProjectionResult,
    },
    Net {
        index: usize,
        tape: Tape,
    },
}

/// Runs the full stack. Stages are numbered `0..=2n` in application order
/// (even: projection, odd: network); errors carry the failing stage index.
pub fn vnpa_forward(
    model: &VnpaModel,
    v: &ValidSet,
    x0: &Vector,
    cfg: &ProjectionConfig,
) -> Result<(Vector, VnpaTape)> {
    if x0.len() != model.dim || v.operator().cols() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: x0.len(),
            context: "model input",
        });
    }
    let mut stages = Vec::with_capacity(2 * model.n() + 1);
    let mut cur = x0.clone();
    let mut stage = 0usize;
    let project = |cur: &Vector, stage: usize| -> Result<ProjectionResult> {
        project_valid(cur, v, cfg).map_err(|e| e.at_iteration(stage))
    };
    let result = project(&cur, stage)?;
    cur = result.x_proj.clone();
    stages.push(VnpaStage::Projection {
        x_star: x0.clone(),
        result,
    });
    for (i, net) in model.nets.iter().enumerate() {
        stage += 1;
        let (out, tape) = net.forward(&cur).map_err(|e| e.at_iteration(stage))?;
        stages.push(VnpaStage::Net { index: i, tape });
        stage += 1;
        let result = project(&out, stage)?;
        cur = result.x_proj.clone();
        stages.push(VnpaStage::Projection { x_star: out, result });
    }
    Ok((cur, VnpaTape { stages }))
}

/// Chains the cotangent backwards through all `2n + 1` stages; returns one
/// gradient set per network plus the gradient at `x_0`.
pub fn vnpa_backward(
    model: &VnpaModel,
    v: &ValidSet,
    tape: &VnpaTape,
    grad_out: &Vector,
    cg: &CgConfig,
) -> Result<(Vec<Grads>, Vector)> {
    if tape.stages.len() != 2 * model.n() + 1 {
        return Err(Error::InvalidParameter {
            name: "tape",
            reason: format!(
                "tape has {} stages for an n={} model",
                tape.stages.len(),
                model.n()
            ),
        });
    }
    let mut grads: Vec<Option<Grads>> = vec![None; model.n()];
    let mut g = grad_out.clone();
    for (stage, item) in tape.stages.iter().enumerate().rev() {
        let wrap = |e: Error| e.at_iteration(stage);
        match item {
            VnpaStage::Projection { x_star, result } => {
                g = crate::projection::project_valid_vjp(&g, x_star, result, v, cg)
                    .map_err(wrap)?;
            }
            VnpaStage::Net { index, tape } => {
                let (net_grads, g_in) = model.nets[*index].backward(tape, &g).map_err(wrap)?;
                grads[*index] = Some(net_grads);
                g = g_in;
            }
        }
    }
    Ok((grads.into_iter().map(Option::unwrap).collect(), g))
}

/// One supervised example: clean signal, noisy measurement, noise level.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub x: Vector,
    pub y_delta: Vector,
    pub delta: f64,
}

/// Draws `count` random test functions, measures them through `a`, and
/// adds exact-norm noise. Noise is drawn once here and then fixed, keeping
/// training runs reproducible.
pub fn make_dataset<R: Rng>(
    a: &LinearOperator,
    noise_pct: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TrainSample>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let tf = gen_test_function(rng);
        if tf.samples.len() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.cols(),
                got: tf.samples.len(),
                context: "dataset signal",
            });
        }
        let y = a.apply(&tf.samples)?;
        let (y_delta, delta) = add_noise(&y, noise_pct, rng)?;
        out.push(TrainSample {
            x: tf.samples,
            y_delta,
            delta,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct VnpaTrainConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub projection: ProjectionConfig,
    /// Seed for batch sampling only; data and initial weights come from
    /// the caller.
    pub seed: u64,
}

impl Default for VnpaTrainConfig {
    fn default() -> Self {
        Self {
            batches: 2000,
            batch_size: 32,
            lr: 1e-2,
            projection: ProjectionConfig::default(),
            seed: 0,
        }
    }
}

/// Mean squared error over components and its output cotangent.
fn mse_and_cotangent(out: &Vector, target: &Vector) -> (f64, Vector) {
    let dim = out.len() as f64;
    let diff = out.sub(target);
    let loss = diff.dot(&diff) / dim;
    (loss, diff.scale(2.0 / dim))
}

/// Trains the stack by stochastic gradient batches of MSE against the
/// ground truth, one Adam state per network. Returns the per-batch loss
/// curve. Aborts when the loss exceeds 1000x its initial value.
pub fn vnpa_train(
    model: &mut VnpaModel,
    a: &Arc<LinearOperator>,
    train: &[TrainSample],
    cfg: &VnpaTrainConfig,
) -> Result<Vec<f64>> {
    if cfg.batches == 0 {
        return Ok(Vec::new());
    }
    if train.is_empty() || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: "training set",
            reason: "need at least one sample and a positive batch size".into(),
        });
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lr",
            reason: format!("must be positive, got {}", cfg.lr),
        });
    }
    let sets: Vec<ValidSet> = train
        .iter()
        .map(|s| ValidSet::shared(Arc::clone(a), s.y_delta.clone(), s.delta))
        .collect::<Result<_>>()?;
    let x0 = Vector::zeros(model.dim);
    let mut adams: Vec<AdamState> = model
        .nets
        .iter()
        .map(|n| AdamState::new(n.param_count(), cfg.lr))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.batches);
    let mut initial = f64::NAN;
    for batch in 0..cfg.batches {
        let mut batch_grads: Vec<Grads> =
            model.nets.iter().map(Grads::zeros_like).collect();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..train.len());
            let wrap = |e: Error| e.at_iteration(batch);
            let (out, tape) =
                vnpa_forward(model, &sets[idx], &x0, &cfg.projection).map_err(wrap)?;
            let (loss, cotangent) = mse_and_cotangent(&out, &train[idx].x);
            batch_loss += loss;
            let (grads, _) =
                vnpa_backward(model, &sets[idx], &tape, &cotangent, &cfg.projection.cg)
                    .map_err(wrap)?;
            for (acc, g) in batch_grads.iter_mut().zip(&grads) {
                acc.accumulate(g);
            }
        }
        batch_loss /= cfg.batch_size as f64;
        if batch == 0 {
            initial = batch_loss;
        }
        if !batch_loss.is_finite() || batch_loss > 1e3 * initial {
            return Err(Error::Diverged {
                batch,
                loss: batch_loss,
                initial,
            });
        }
        let scale = 1.0 / cfg.batch_size as f64;
        for ((net, grads), adam) in model
            .nets
            .iter_mut()
            .zip(batch_grads.iter_mut())
            .zip(adams.iter_mut())
        {
            grads.scale(scale);
            adam_step(net, grads, adam)?;
        }
        curve.push(batch_loss);
    }
    Ok(curve)
}

/// Relative reconstruction errors `||x_hat - x|| / ||x||` over a sample
/// set, reconstructing each from its own measurement with `x_0 = 0`.
pub fn vnpa_eval(
    model: &VnpaModel,
    a: &Arc<LinearOperator>,
    samples: &[TrainSample],
    cfg: &ProjectionConfig,
) -> Result<Vec<f64>> {
    let x0 = Vector::zeros(model.dim);
    samples
        .iter()
        .map(|s| {
            let v = ValidSet::shared(Arc::clone(a), s.y_delta.clone(), s.delta)?;
            let (out, _) = vnpa_forward(model, &v, &x0, cfg)?;
            Ok(out.sub(&s.x).norm() / s.x.norm())
        })
        .collect()
}

const CHECKPOINT_MAGIC: &str = "VNPACKPT1";

/// Serializes the model: a text descriptor (dimensions and activations per
/// net), a `params` marker, then one PMVEC1 block per weight matrix and
/// bias vector in fixed layer order.
pub fn save_checkpoint(path: &Path, model: &VnpaModel) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(
        format!("{CHECKPOINT_MAGIC} nets={} dim={}\n", model.n(), model.dim).as_bytes(),
    );
    for net in &model.nets {
        let dims: Vec<String> = std::iter::once(net.in_dim())
            .chain(net.layers().iter().map(|l| l.out_dim()))
            .map(|d| d.to_string())
            .collect();
        let acts: Vec<&str> = net.layers().iter().map(|l| l.activation().name()).collect();
        bytes.extend_from_slice(
            format!("net dims={} acts={}\n", dims.join(","), acts.join(",")).as_bytes(),
        );
    }
    bytes.extend_from_slice(b"params\n");
    for net in &model.nets {
        for layer in net.layers() {
            bytes.extend_from_slice(&io::to_pmvec_bytes(&Vector::new(layer.w.clone())?));
            bytes.extend_from_slice(&io::to_pmvec_bytes(&Vector::new(layer.b.clone())?));
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn checkpoint_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "checkpoint",
        reason: reason.into(),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<VnpaModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let marker = b"params\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| checkpoint_err("missing params marker"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| checkpoint_err("descriptor is not UTF-8"))?;
    let mut blocks = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    let first = lines.next().ok_or_else(|| checkpoint_err("empty descriptor"))?;
    let mut head = first.split_whitespace();
    if head.next() != Some(CHECKPOINT_MAGIC) {
        return Err(checkpoint_err(format!("bad magic line {first:?}")));
    }
    let kv = |part: Option<&str>, key: &str| -> Result<usize> {
        part.and_then(|p| p.strip_prefix(&format!("{key}=")))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| checkpoint_err(format!("missing {key}= in header")))
    };
    let n = kv(head.next(), "nets")?;
    let dim = kv(head.next(), "dim")?;

    let mut next_block = |what: &str| -> Result<Vector> {
        let (v, used) = io::split_pmvec(blocks)
            .map_err(|e| checkpoint_err(format!("{what}: {e}")))?;
        blocks = &blocks[used..];
        Ok(v)
    };

    let mut nets = Vec::with_capacity(n);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| checkpoint_err(format!("missing descriptor for net {i}")))?;
        let rest = line
            .strip_prefix("net dims=")
            .ok_or_else(|| checkpoint_err(format!("bad net line {line:?}")))?;
        let (dims_s, acts_s) = rest
            .split_once(" acts=")
            .ok_or_else(|| checkpoint_err(format!("bad net line {line:?}")))?;
        let dims: Vec<usize> = dims_s
            .split(',')
            .map(|d| d.parse().map_err(|_| checkpoint_err(format!("bad dim {d:?}"))))
            .collect::<Result<_>>()?;
        let acts: Vec<Activation> = acts_s
            .split(',')
            .map(Activation::from_name)
            .collect::<Result<_>>()?;
        if dims.len() != acts.len() + 1 {
            return Err(checkpoint_err(format!(
                "net {i}: {} dims vs {} activations",
                dims.len(),
                acts.len()
            )));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (j, &act) in acts.iter().enumerate() {
            let w = next_block("weights")?;
            let b = next_block("bias")?;
            layers.push(Layer::new(
                dims[j],
                dims[j + 1],
                w.into_vec(),
                b.into_vec(),
                act,
            )?);
        }
        nets.push(DenseNet::from_layers(layers)?);
    }
    if lines.next().is_some() {
        return Err(checkpoint_err("trailing descriptor lines"));
    }
    if !blocks.is_empty() {
        return Err(checkpoint_err(format!(
            "{} trailing parameter bytes",
            blocks.len()
        )));
    }
    VnpaModel::new(dim, nets)
}
