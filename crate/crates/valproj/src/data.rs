//! Ground-truth generators and noise injection.
//!
//! - [`shepp_logan`]: the classical 10-ellipse head phantom rasterized on a
//!   square pixel grid, in the usual modified (high-contrast) intensities
//!   or the original ones, clamped to `[0, 1]`.
//! - [`gen_test_function`]: random smooth functions on 128 samples whose
//!   tail turns into an affine ramp ending at 1 - low-frequency Fourier
//!   synthesis, min-max normalization, then the ramp overwrite.
//! - [`add_noise`]: Gaussian noise rescaled so its norm equals the noise
//!   level exactly, which puts the clean signal exactly on the residual
//!   sphere of the valid set.
//!
//! All randomness comes from caller-provided RNGs, so outputs are pure
//! functions of the seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Which intensity column of the Shepp-Logan table to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomVariant {
    /// High-contrast intensities (1.0 head, 0.2/0.3 interior features);
    /// the common choice for reconstruction benchmarks.
    Modified,
    /// The original intensities (2.0 head, 0.01 features); after clamping
    /// to [0, 1] the interior saturates.
    Original,
}

/// A rasterized phantom: `side x side` pixels, row-major, values in [0, 1].
#[derive(Debug, Clone)]
pub struct Phantom {
    pub side: usize,
    pub pixels: Vector,
}

/// Shepp-Logan ellipse table: (x0, y0, semi-axes a, b, rotation degrees,
/// modified intensity, original intensity).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64, f64); 10] = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0, 2.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8, -0.98),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2, -0.02),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2, -0.02),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1, 0.01),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1, 0.01),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1, 0.01),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1, 0.01),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.1, 0.01),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1, 0.01),
];

fn phantom_value(x: f64, y: f64, variant: PhantomVariant) -> f64 {
    let mut v = 0.0;
    for &(x0, y0, a, b, phi_deg, modified, original) in SHEPP_LOGAN.iter() {
        let phi = phi_deg.to_radians();
        let (sin_p, cos_p) = phi.sin_cos();
        let dx = x - x0;
        let dy = y - y0;
        let xr = dx * cos_p + dy * sin_p;
        let yr = -dx * sin_p + dy * cos_p;
        if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
            v += match variant {
                PhantomVariant::Modified => modified,
                PhantomVariant::Original => original,
            };
        }
    }
    v.clamp(0.0, 1.0)
}

/// Rasterizes the phantom by sampling ellipse membership at pixel centers
/// of the square `[-1, 1]^2`; row 0 is the top of the image.
pub fn shepp_logan_variant(side: usize, variant: PhantomVariant) -> Phantom {
    assert!(side >= 16, "phantom needs side >= 16");
    let mut pixels = vec![0.0; side * side];
    let step = 2.0 / side as f64;
    for i in 0..side {
        let y = 1.0 - (i as f64 + 0.5) * step;
        for j in 0..side {
            let x = -1.0 + (j as f64 + 0.5) * step;
            pixels[i * side + j] = phantom_value(x, y, variant);
        }
    }
    Phantom {
        side,
        pixels: Vector::wrap(pixels),
    }
}

/// The modified-intensity phantom (the default benchmark image).
pub fn shepp_logan(side: usize) -> Phantom {
    shepp_logan_variant(side, PhantomVariant::Modified)
}

/// A random test signal: 128 samples in [0, 1] whose tail is an affine
/// ramp ending at exactly 1.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub samples: Vector,
    /// First index of the affine tail, in [64, 127].
    pub start_lin: usize,
}

pub const TEST_FUNCTION_LEN: usize = 128;

/// Inverse real Fourier transform of a one-sided real spectrum of length
/// `K + 1` into `2K` samples:
/// `f[t] = (c_0 + 2 sum_{k=1}^{K-1} c_k cos(2 pi k t / 2K) + c_K (-1)^t) / 2K`.
/// Direct O(n^2) evaluation; the sizes here never warrant an FFT.
pub fn irfft_real(coeffs: &[f64]) -> Vec<f64> {
    assert!(coeffs.len() >= 2, "need at least two coefficients");
    let k_max = coeffs.len() - 1;
    let n = 2 * k_max;
    let mut out = vec![0.0; n];
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = coeffs[0];
        for (k, &c) in coeffs.iter().enumerate().take(k_max).skip(1) {
            acc += 2.0 * c * (2.0 * std::f64::consts::PI * k as f64 * t as f64 / n as f64).cos();
        }
        acc += coeffs[k_max] * if t % 2 == 0 { 1.0 } else { -1.0 };
        *o = acc / n as f64;
    }
    out
}

/// Draws one random test function. Consumes 129 standard-normal draws and
/// one uniform draw from `rng` (plus redraws in the probability-zero case
/// of a degenerate normalization).
pub fn gen_test_function<R: Rng>(rng: &mut R) -> TestFunction {
    let n = TEST_FUNCTION_LEN;
    loop {
        // Random amplitudes with a geometric taper from 1 to 1e-8, so the
        // synthesized signal is dominated by low frequencies.
        let mut freq = vec![0.0; n + 1];
        for (k, f) in freq.iter_mut().enumerate() {
            let amp: f64 = StandardNormal.sample(rng);
            *f = amp * 10f64.powf(-8.0 * k as f64 / n as f64);
        }
        let full = irfft_real(&freq);
        let mut f = full[..n].to_vec();

        let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            continue; // degenerate normalization; redraw
        }
        for v in f.iter_mut() {
            *v = (*v - min) / (max - min);
        }

        let u: f64 = rng.random();
        let start_lin = (u * 64.0 + 64.0) as usize; // in [64, 127]
        let count = n - start_lin;
        let a = f[start_lin];
        if count > 1 {
            for k in 0..count {
                f[start_lin + k] = a + (1.0 - a) * k as f64 / (count - 1) as f64;
            }
        }
        f[n - 1] = 1.0; // endpoint written exactly, independent of rounding

        return TestFunction {
            samples: Vector::wrap(f),
            start_lin,
        };
    }
}

/// Adds Gaussian noise rescaled to norm exactly `delta = pct * ||y||`.
/// Returns the noisy vector and `delta`.
pub fn add_noise<R: Rng>(y: &Vector, pct: f64, rng: &mut R) -> Result<(Vector, f64)> {
    if !(pct > 0.0 && pct < 1.0) {
        return Err(Error::InvalidParameter {
            name: "noise_pct",
            reason: format!("must lie in (0, 1), got {pct}"),
        });
    }
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Err(Error::InvalidParameter {
            name: "y",
            reason: "cannot scale noise relative to a zero measurement".into(),
        });
    }
    let delta = pct * y_norm;
    loop {
        let eta: Vec<f64> = (0..y.len())
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let eta_norm = crate::vector::norm(&eta);
        if eta_norm == 0.0 {
            continue; // probability-zero redraw
        }
        let scale = delta / eta_norm;
        let noisy: Vec<f64> = y
            .as_slice()
            .iter()
            .zip(&eta)
            .map(|(yi, ei)| yi + scale * ei)
            .collect();
        return Ok((Vector::wrap(noisy), delta));
    }
}
