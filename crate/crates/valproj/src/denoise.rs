//! Plug-and-play prior maps: wavelet shrinkage, box clipping, identity.
//!
//! The wavelet denoiser is a multi-level orthonormal Haar transform with
//! per-subband soft thresholding. Thresholds follow the BayesShrink rule:
//! the noise level is estimated from the finest detail band as
//! `sigma = median(|d|) / 0.6745`, each band's signal deviation is
//! `sigma_x = sqrt(max(E[d^2] - sigma^2, 0))`, and the band threshold is
//! `T = sigma^2 / sigma_x` (the band's absolute maximum when `sigma_x = 0`,
//! which kills the band). For images the noise estimate uses the finest
//! diagonal band and every detail band is thresholded independently.
//!
//! Box clipping is the exact Euclidean projection onto the box `[lo, hi]^n`
//! and serves as a convex prior whose projection is known in closed form.

use crate::error::{Error, Result};
use crate::vector::Vector;

const MEDIAN_TO_SIGMA: f64 = 0.6745;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Soft,
    Hard,
}

/// A prior map `f: R^n -> R^n` standing in for the projection onto the set
/// of plausible signals.
#[derive(Debug, Clone)]
pub enum Denoiser {
    Identity,
    /// Componentwise clamp onto `[lo, hi]^n`.
    BoxClip { lo: f64, hi: f64 },
    /// Haar shrinkage of a 1-d signal.
    Wavelet1d { levels: usize, mode: ThresholdMode },
    /// Haar shrinkage of a square image given row-major.
    Wavelet2d {
        side: usize,
        levels: usize,
        mode: ThresholdMode,
    },
}

impl Denoiser {
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        match *self {
            Denoiser::Identity => Ok(x.clone()),
            Denoiser::BoxClip { lo, hi } => box_clip(x, lo, hi),
            Denoiser::Wavelet1d { levels, mode } => wavelet_denoise_1d(x, levels, mode),
            Denoiser::Wavelet2d { side, levels, mode } => {
                wavelet_denoise_2d(x, side, levels, mode)
            }
        }
    }
}

/// Default decomposition depth for a dyadic side length: `log2(side) - 2`,
/// at least 1.
pub fn default_levels(side: usize) -> usize {
    let log2 = (usize::BITS - 1 - side.leading_zeros()) as usize;
    log2.saturating_sub(2).max(1)
}

/// Componentwise clamp; the exact projection onto the box.
pub fn box_clip(x: &Vector, lo: f64, hi: f64) -> Result<Vector> {
    if !(lo <= hi) {
        return Err(Error::InvalidParameter {
            name: "box_clip bounds",
            reason: format!("need lo <= hi, got [{lo}, {hi}]"),
        });
    }
    Ok(Vector::wrap(
        x.as_slice().iter().map(|&v| v.clamp(lo, hi)).collect(),
    ))
}

fn check_dyadic(len: usize, levels: usize) -> Result<()> {
    if levels >= usize::BITS as usize || len % (1usize << levels) != 0 {
        return Err(Error::NonDyadic { len, levels });
    }
    Ok(())
}

/// One Haar analysis step on the first `len` entries: pairwise averages to
/// the front half, differences to the back half, both scaled by 1/sqrt(2).
fn haar_step_forward(x: &mut [f64], len: usize, scratch: &mut [f64]) {
    let half = len / 2;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..half {
        scratch[i] = (x[2 * i] + x[2 * i + 1]) * inv_sqrt2;
        scratch[half + i] = (x[2 * i] - x[2 * i + 1]) * inv_sqrt2;
    }
    x[..len].copy_from_slice(&scratch[..len]);
}

fn haar_step_inverse(x: &mut [f64], len: usize, scratch: &mut [f64]) {
    let half = len / 2;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..half {
        scratch[2 * i] = (x[i] + x[half + i]) * inv_sqrt2;
        scratch[2 * i + 1] = (x[i] - x[half + i]) * inv_sqrt2;
    }
    x[..len].copy_from_slice(&scratch[..len]);
}

/// In-place multi-level 1-d Haar transform. Layout after `L` levels:
/// `[approx_L | detail_L | detail_{L-1} | ... | detail_1]`.
pub fn haar_forward_1d(x: &mut [f64], levels: usize) -> Result<()> {
    check_dyadic(x.len(), levels)?;
    let mut scratch = vec![0.0; x.len()];
    let mut len = x.len();
    for _ in 0..levels {
        haar_step_forward(x, len, &mut scratch);
        len /= 2;
    }
    Ok(())
}

pub fn haar_inverse_1d(x: &mut [f64], levels: usize) -> Result<()> {
    check_dyadic(x.len(), levels)?;
    let mut scratch = vec![0.0; x.len()];
    let mut len = x.len() >> levels;
    for _ in 0..levels {
        len *= 2;
        haar_step_inverse(x, len, &mut scratch);
    }
    Ok(())
}

/// In-place multi-level 2-d Haar transform of a row-major `side x side`
/// image: rows then columns per level, recursing on the top-left block.
pub fn haar_forward_2d(img: &mut [f64], side: usize, levels: usize) -> Result<()> {
    if img.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: img.len(),
            context: "2d wavelet input",
        });
    }
    check_dyadic(side, levels)?;
    let mut scratch = vec![0.0; side];
    let mut col = vec![0.0; side];
    let mut cur = side;
    for _ in 0..levels {
        for r in 0..cur {
            haar_step_forward(&mut img[r * side..r * side + cur], cur, &mut scratch);
        }
        for c in 0..cur {
            for r in 0..cur {
                col[r] = img[r * side + c];
            }
            haar_step_forward(&mut col, cur, &mut scratch);
            for r in 0..cur {
                img[r * side + c] = col[r];
            }
        }
        cur /= 2;
    }
    Ok(())
}

pub fn haar_inverse_2d(img: &mut [f64], side: usize, levels: usize) -> Result<()> {
    if img.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: img.len(),
            context: "2d wavelet input",
        });
    }
    check_dyadic(side, levels)?;
    let mut scratch = vec![0.0; side];
    let mut col = vec![0.0; side];
    let mut cur = side >> levels;
    for _ in 0..levels {
        cur *= 2;
        for c in 0..cur {
            for r in 0..cur {
                col[r] = img[r * side + c];
            }
            haar_step_inverse(&mut col, cur, &mut scratch);
            for r in 0..cur {
                img[r * side + c] = col[r];
            }
        }
        for r in 0..cur {
            haar_step_inverse(&mut img[r * side..r * side + cur], cur, &mut scratch);
        }
    }
    Ok(())
}

fn median_abs(band: &[f64]) -> f64 {
    debug_assert!(!band.is_empty());
    let mut v: Vec<f64> = band.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// BayesShrink threshold for one detail band given the noise estimate.
/// The band variance is the second moment about zero (details of a noisy
/// signal are modelled as zero-mean).
fn bayes_threshold(band: &[f64], sigma: f64) -> f64 {
    let n = band.len() as f64;
    let second_moment: f64 = band.iter().map(|d| d * d).sum::<f64>() / n;
    let sigma_x = (second_moment - sigma * sigma).max(0.0).sqrt();
    if sigma_x == 0.0 {
        band.iter().fold(0.0, |m, d| m.max(d.abs()))
    } else {
        sigma * sigma / sigma_x
    }
}

fn shrink(band: &mut [f64], t: f64, mode: ThresholdMode) {
    match mode {
        ThresholdMode::Soft => {
            for d in band.iter_mut() {
                *d = d.signum() * (d.abs() - t).max(0.0);
            }
        }
        ThresholdMode::Hard => {
            for d in band.iter_mut() {
                if d.abs() <= t {
                    *d = 0.0;
                }
            }
        }
    }
}

/// Haar/BayesShrink denoising of a 1-d signal. `levels == 0` is a no-op.
pub fn wavelet_denoise_1d(x: &Vector, levels: usize, mode: ThresholdMode) -> Result<Vector> {
    if levels == 0 {
        return Ok(x.clone());
    }
    let mut buf = x.as_slice().to_vec();
    let n = buf.len();
    haar_forward_1d(&mut buf, levels)?;
    // Finest detail band is the back half.
    let sigma = median_abs(&buf[n / 2..]) / MEDIAN_TO_SIGMA;
    // Bands: [n/2^L, n/2^{L-1}) is detail_L, ..., [n/2, n) is detail_1.
    for level in (1..=levels).rev() {
        let lo = n >> level;
        let hi = n >> (level - 1);
        let t = bayes_threshold(&buf[lo..hi], sigma);
        shrink(&mut buf[lo..hi], t, mode);
    }
    haar_inverse_1d(&mut buf, levels)?;
    Vector::new(buf)
}

/// Haar/BayesShrink denoising of a row-major square image.
pub fn wavelet_denoise_2d(
    x: &Vector,
    side: usize,
    levels: usize,
    mode: ThresholdMode,
) -> Result<Vector> {
    if x.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: x.len(),
            context: "2d wavelet input",
        });
    }
    if levels == 0 {
        return Ok(x.clone());
    }
    let mut buf = x.as_slice().to_vec();
    haar_forward_2d(&mut buf, side, levels)?;

    // Noise estimate from the finest diagonal band (bottom-right quadrant).
    let half = side / 2;
    let mut diag = Vec::with_capacity(half * half);
    for r in half..side {
        for c in half..side {
            diag.push(buf[r * side + c]);
        }
    }
    let sigma = median_abs(&diag) / MEDIAN_TO_SIGMA;

    // Threshold each of the three detail bands of every level.
    fn collect(
        buf: &[f64],
        side: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Vec<f64> {
        let mut band = Vec::with_capacity(rows.len() * cols.len());
        for r in rows {
            for c in cols.clone() {
                band.push(buf[r * side + c]);
            }
        }
        band
    }
    for level in 1..=levels {
        let block = side >> (level - 1);
        let h = block / 2;
        for (rows, cols) in [
            (0..h, h..block),       // horizontal-detail band
            (h..block, 0..h),       // vertical-detail band
            (h..block, h..block),   // diagonal band
        ] {
            let mut band = collect(&buf, side, rows.clone(), cols.clone());
            let t = bayes_threshold(&band, sigma);
            shrink(&mut band, t, mode);
            let mut k = 0;
            for r in rows {
                for c in cols.clone() {
                    buf[r * side + c] = band[k];
                    k += 1;
                }
            }
        }
    }

    haar_inverse_2d(&mut buf, side, levels)?;
    Vector::new(buf)
}
