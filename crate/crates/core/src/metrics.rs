//! Evaluation quantities: label error, scalar error, recovery correctness,
//! PSNR and SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::{exclusion_set, RecoveryResult, RecoveryStatus};
use crate::tensor::Tensor;
use crate::victim::AugmentedLabel;

/// Default L_r tolerance for counting a recovery as correct.
pub const DEFAULT_LR_TOLERANCE: f64 = 1e-2;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub l_r: f64,
    pub correct: bool,
    pub status: RecoveryStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

/// `Σ|ŷ_i - y*_i|`.
pub fn l_r(recovered: &[f64], truth: &[f64]) -> Result<f64> {
    if recovered.len() != truth.len() {
        return Err(Error::Shape(format!(
            "label lengths {} and {} differ",
            recovered.len(),
            truth.len()
        )));
    }
    Ok(recovered.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum())
}

/// `|λ - λ*|`.
pub fn l_s(lambda: f64, oracle: f64) -> f64 {
    (lambda - oracle).abs()
}

/// A recovery counts as correct when it ended in `Success` (or the resolved
/// zero-gradient case), picks out the same top classes as the truth, and is
/// within `tolerance` in L_r.
pub fn is_correct(result: &RecoveryResult, truth: &AugmentedLabel, tolerance: f64) -> bool {
    if !matches!(
        result.status,
        RecoveryStatus::Success | RecoveryStatus::DegenerateOneHotResolved
    ) {
        return false;
    }
    let k = truth.kind().exclusion_size();
    if exclusion_set(result.label.data(), k) != exclusion_set(truth.values(), k) {
        return false;
    }
    l_r(result.label.data(), truth.values()).is_ok_and(|e| e <= tolerance)
}

pub fn label_metrics(result: &RecoveryResult, truth: &AugmentedLabel, tolerance: f64) -> LabelMetrics {
    LabelMetrics {
        l_r: l_r(result.label.data(), truth.values()).unwrap_or(f64::INFINITY),
        correct: is_correct(result, truth, tolerance),
        status: result.status,
    }
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Side of the Gaussian window used for an `h × w` image: 11, or the largest
/// odd size that fits when the image is smaller.
pub fn ssim_window_size(h: usize, w: usize) -> usize {
    let mut n = SSIM_WINDOW.min(h).min(w);
    if n.is_multiple_of(2) {
        n -= 1;
    }
    n.max(1)
}

/// Normalised 1-D Gaussian taps (σ = 1.5) of length `n`.
pub fn ssim_kernel(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 and dynamic range 1, averaged over all window positions that
/// fit inside the image. Tensors are `[H, W]` or `[C, H, W]`; channels are
/// averaged. Images smaller than the window use a reduced centred window
/// (see [`ssim_window_size`]).
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (channels, h, w) = match *a.shape() {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        [n] => (1, 1, n),
        _ => {
            return Err(Error::Shape(format!(
                "SSIM expects [H, W] or [C, H, W], got {:?}",
                a.shape()
            )))
        }
    };
    let plane = h * w;
    let total: f64 = (0..channels)
        .map(|c| {
            let range = c * plane..(c + 1) * plane;
            ssim_plane(&a.data()[range.clone()], &b.data()[range], h, w)
        })
        .sum();
    Ok(total / channels as f64)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let n = ssim_window_size(h, w);
    let kernel = ssim_kernel(n);
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let products = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..h * w).map(f).collect() };
    let maps = [
        products(&|i| a[i]),
        products(&|i| b[i]),
        products(&|i| a[i] * a[i]),
        products(&|i| b[i] * b[i]),
        products(&|i| a[i] * b[i]),
    ];
    let filtered: Vec<Vec<f64>> = maps.iter().map(|m| filter_valid(m, h, w, &kernel)).collect();
    let count = filtered[0].len();
    let mut sum = 0.0;
    for k in 0..count {
        let (mu_a, mu_b) = (filtered[0][k], filtered[1][k]);
        let var_a = filtered[2][k] - mu_a * mu_a;
        let var_b = filtered[3][k] - mu_b * mu_b;
        let cov = filtered[4][k] - mu_a * mu_b;
        sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
            / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
    sum / count as f64
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(img: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|k| kernel[k] * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| kernel[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}
