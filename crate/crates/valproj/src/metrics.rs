//! Reconstruction quality metrics: PSNR and SSIM.

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Peak signal-to-noise ratio in dB, `10 log10(range^2 / mse)`, capped at
/// 200 so identical inputs produce a finite score.
pub fn psnr(x: &Vector, reference: &Vector, data_range: f64) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: x.len(),
            context: "psnr",
        });
    }
    if !(data_range > 0.0) {
        return Err(Error::InvalidParameter {
            name: "data_range",
            reason: format!("must be positive, got {data_range}"),
        });
    }
    let mse = x
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(200.0);
    }
    Ok((10.0 * (data_range * data_range / mse).log10()).min(200.0))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// 11x11 Gaussian window with sigma 1.5, normalized to unit sum.
fn gaussian_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            total += *v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    w
}

/// Structural similarity between two square images stored row-major.
///
/// The side length is inferred from the vector length, which must be a
/// perfect square of at least the 11-pixel window. Windowed means and
/// variances use the Gaussian window above; only fully interior windows
/// contribute (no padding). The stabilization constants are derived from
/// the combined value range of both images, which keeps the score exactly
/// symmetric in its arguments.
pub fn ssim(a: &Vector, b: &Vector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "ssim",
        });
    }
    let side = (a.len() as f64).sqrt().round() as usize;
    if side * side != a.len() {
        return Err(Error::InvalidParameter {
            name: "image",
            reason: format!("length {} is not a perfect square", a.len()),
        });
    }
    if side < SSIM_WINDOW {
        return Err(Error::InvalidParameter {
            name: "image",
            reason: format!("side {side} is smaller than the {SSIM_WINDOW}-pixel window"),
        });
    }

    let lo = a
        .as_slice()
        .iter()
        .chain(b.as_slice())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = a
        .as_slice()
        .iter()
        .chain(b.as_slice())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range == 0.0 {
        return Ok(1.0); // both images are the same constant
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let w = gaussian_window();
    let av = a.as_slice();
    let bv = b.as_slice();
    let valid = side - SSIM_WINDOW + 1;
    let mut acc = 0.0;
    for i0 in 0..valid {
        for j0 in 0..valid {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for (di, wrow) in w.iter().enumerate() {
                let row = (i0 + di) * side + j0;
                for (dj, &wv) in wrow.iter().enumerate() {
                    let x = av[row + dj];
                    let y = bv[row + dj];
                    mu_a += wv * x;
                    mu_b += wv * y;
                    aa += wv * x * x;
                    bb += wv * y * y;
                    ab += wv * x * y;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            acc += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    Ok(acc / (valid * valid) as f64)
}
