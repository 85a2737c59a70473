//! Minimal dense networks: forward with an activation tape, exact reverse
//! mode, and Adam. Sized for the toy generators and autoencoders in this
//! crate, not for general deep learning.

use rand::Rng;

use crate::error::{Error, Result};
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// No nonlinearity.
    None,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => {
                // Branch on the sign so the exponential never overflows.
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::None => z,
        }
    }

    /// Derivative expressed through the activation output; all three
    /// activations admit this form, which keeps the tape to two vectors
    /// per layer.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::None => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "none" => Ok(Activation::None),
            other => Err(Error::InvalidParameter {
                name: "activation",
                reason: format!("unknown activation {other:?}"),
            }),
        }
    }
}

/// One dense layer: `a = act(W x + b)` with `W` stored row-major out x in.
#[derive(Debug, Clone)]
pub struct Layer {
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) act: Activation,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, w: Vec<f64>, b: Vec<f64>, act: Activation) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || w.len() != in_dim * out_dim || b.len() != out_dim {
            return Err(Error::InvalidParameter {
                name: "layer",
                reason: format!(
                    "shape mismatch: {out_dim}x{in_dim} layer with {} weights, {} biases",
                    w.len(),
                    b.len()
                ),
            });
        }
        if !(w.iter().chain(&b).all(|v| v.is_finite())) {
            return Err(Error::NonFinite {
                context: "layer parameters",
            });
        }
        Ok(Self { w, b, act, in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.act
    }
}

/// A feedforward stack of dense layers with chained dimensions.
#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Per-layer activation cache from one forward pass; inputs to each layer
/// plus its post-activation output, enough for exact reverse mode.
#[derive(Debug, Clone)]
pub struct Tape {
    stages: Vec<(Vector, Vector)>,
}

/// Parameter gradients mirroring the layer shapes.
#[derive(Debug, Clone)]
pub struct Grads {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DenseNet {
    /// Random network: weights and biases i.i.d. uniform on
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng>(dims: &[usize], acts: &[Activation], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(Error::InvalidParameter {
                name: "net shape",
                reason: format!(
                    "need one activation per layer: {} dims, {} activations",
                    dims.len(),
                    acts.len()
                ),
            });
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (i, &act) in acts.iter().enumerate() {
            let (in_dim, out_dim) = (dims[i], dims[i + 1]);
            if in_dim == 0 || out_dim == 0 {
                return Err(Error::InvalidParameter {
                    name: "net shape",
                    reason: "zero-width layer".into(),
                });
            }
            let bound = 1.0 / (in_dim as f64).sqrt();
            let w = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let b = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(Layer::new(in_dim, out_dim, w, b, act)?);
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter {
                name: "layers",
                reason: "network needs at least one layer".into(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                    context: "layer chaining",
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters as one flat vector, layer by layer, weights before
    /// biases. The fixed order is part of the checkpoint format.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
                context: "flat parameters",
            });
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "flat parameters",
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vector) -> Result<(Vector, Tape)> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
                context: "net forward",
            });
        }
        let mut stages = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let mut out = vec![0.0; l.out_dim];
            let xin = cur.as_slice();
            for (r, o) in out.iter_mut().enumerate() {
                let row = &l.w[r * l.in_dim..(r + 1) * l.in_dim];
                let mut acc = l.b[r];
                for (wv, xv) in row.iter().zip(xin) {
                    acc += wv * xv;
                }
                *o = l.act.apply(acc);
            }
            let out = Vector::wrap(out);
            stages.push((cur, out.clone()));
            cur = out;
        }
        Ok((cur, Tape { stages }))
    }

    /// Exact gradients of `<grad_out, forward(x)>` with respect to all
    /// parameters and to the input.
    pub fn backward(&self, tape: &Tape, grad_out: &Vector) -> Result<(Grads, Vector)> {
        if tape.stages.len() != self.layers.len() {
            return Err(Error::InvalidParameter {
                name: "tape",
                reason: format!(
                    "tape has {} stages for a {}-layer network",
                    tape.stages.len(),
                    self.layers.len()
                ),
            });
        }
        if grad_out.len() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                got: grad_out.len(),
                context: "net backward cotangent",
            });
        }
        let mut grads = Grads::zeros_like(self);
        let mut ga = grad_out.clone();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let (xin, aout) = &tape.stages[idx];
            if xin.len() != l.in_dim || aout.len() != l.out_dim {
                return Err(Error::DimensionMismatch {
                    expected: l.in_dim,
                    got: xin.len(),
                    context: "tape stage",
                });
            }
            let (gw, gb) = &mut grads.layers[idx];
            let mut gx = vec![0.0; l.in_dim];
            let xin_s = xin.as_slice();
            for r in 0..l.out_dim {
                let gz = ga[r] * l.act.derivative_from_output(aout[r]);
                gb[r] = gz;
                let wrow = &l.w[r * l.in_dim..(r + 1) * l.in_dim];
                let gwrow = &mut gw[r * l.in_dim..(r + 1) * l.in_dim];
                for c in 0..l.in_dim {
                    gwrow[c] = gz * xin_s[c];
                    gx[c] += wrow[c] * gz;
                }
            }
            ga = Vector::wrap(gx);
        }
        Ok((grads, ga))
    }
}

impl Grads {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    /// `self += other`, for batch accumulation in fixed index order.
    pub fn accumulate(&mut self, other: &Grads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, o) in w.iter_mut().zip(ow) {
                *a += o;
            }
            for (a, o) in b.iter_mut().zip(ob) {
                *a += o;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in self.layers.iter_mut() {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v *= s;
            }
        }
    }

    /// Flat view in the same fixed order as [`DenseNet::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Adam optimizer state over one network's flat parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn update_slice(&mut self, offset: usize, params: &mut [f64], grads: &[f64], corr1: f64, corr2: f64) {
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One bias-corrected Adam step applied in place to the network.
pub fn adam_step(net: &mut DenseNet, grads: &Grads, state: &mut AdamState) -> Result<()> {
    if state.m.len() != net.param_count() || grads.layers.len() != net.layers.len() {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            got: state.m.len(),
            context: "adam state",
        });
    }
    state.t += 1;
    let corr1 = 1.0 - state.beta1.powi(state.t as i32);
    let corr2 = 1.0 - state.beta2.powi(state.t as i32);
    let mut off = 0;
    for (l, (gw, gb)) in net.layers.iter_mut().zip(&grads.layers) {
        state.update_slice(off, &mut l.w, gw, corr1, corr2);
        off += l.w.len();
        state.update_slice(off, &mut l.b, gb, corr1, corr2);
        off += l.b.len();
    }
    Ok(())
}
