//! Restoration quality metrics in Hounsfield units, plus the comparison
//! report across methods.

use crate::corruption::PixelMask;
use crate::error::{MarError, Result};
use crate::tomo::Image2D;

fn check_pair(a: &Image2D, b: &Image2D) -> Result<()> {
    if a.size() != b.size() {
        return Err(MarError::dim(format!(
            "image sizes {} vs {}",
            a.size(),
            b.size()
        )));
    }
    Ok(())
}

/// Mean absolute error over the roi, in HU.
pub fn mae(a: &Image2D, b: &Image2D, roi: &PixelMask) -> Result<f64> {
    check_pair(a, b)?;
    if roi.size() != a.size() {
        return Err(MarError::dim("roi size mismatch".into()));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((&x, &y), &m) in a.pixels().iter().zip(b.pixels()).zip(roi.bits()) {
        if m {
            acc += (x - y).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MarError::EmptyRoi);
    }
    Ok(acc / n as f64)
}

/// Mean squared error over the roi, in HU^2.
pub fn mse(a: &Image2D, b: &Image2D, roi: &PixelMask) -> Result<f64> {
    check_pair(a, b)?;
    if roi.size() != a.size() {
        return Err(MarError::dim("roi size mismatch".into()));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((&x, &y), &m) in a.pixels().iter().zip(b.pixels()).zip(roi.bits()) {
        if m {
            acc += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 {
        return Err(MarError::EmptyRoi);
    }
    Ok(acc / n as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let g = (-((x as f64 - c).powi(2) + (y as f64 - c).powi(2))
                / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
                .exp();
            w[y * SSIM_WINDOW + x] = g;
            sum += g;
        }
    }
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), averaged over window positions fully inside the image.
/// `dynamic_range` is the intensity span L used in the stabilizers.
pub fn ssim(a: &Image2D, b: &Image2D, dynamic_range: f64) -> Result<f64> {
    check_pair(a, b)?;
    if dynamic_range <= 0.0 {
        return Err(MarError::config("dynamic_range must be positive"));
    }
    let size = a.size();
    if size < SSIM_WINDOW {
        return Err(MarError::config(format!(
            "image side {size} smaller than the {SSIM_WINDOW}-pixel window"
        )));
    }
    let w = gaussian_window();
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let valid = size - SSIM_WINDOW + 1;
    let mut acc = 0.0;
    for wy in 0..valid {
        for wx in 0..valid {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut ea2 = 0.0;
            let mut eb2 = 0.0;
            let mut eab = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let weight = w[ky * SSIM_WINDOW + kx];
                    let va = a.get(wy + ky, wx + kx);
                    let vb = b.get(wy + ky, wx + kx);
                    mu_a += weight * va;
                    mu_b += weight * vb;
                    ea2 += weight * va * va;
                    eb2 += weight * vb * vb;
                    eab += weight * va * vb;
                }
            }
            let var_a = ea2 - mu_a * mu_a;
            let var_b = eb2 - mu_b * mu_b;
            let cov = eab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
        }
    }
    Ok(acc / (valid * valid) as f64)
}

/// Relative MSE change against a baseline, in percent; negative means the
/// method improves on the baseline.
pub fn relative_mse_drop(method_mse: f64, baseline_mse: f64) -> Result<f64> {
    if baseline_mse <= 0.0 {
        return Err(MarError::config("baseline MSE must be positive"));
    }
    Ok(100.0 * (method_mse - baseline_mse) / baseline_mse)
}

/// Aggregated per-method metrics over a test set.
#[derive(Debug, Clone)]
pub struct VariantMetrics {
    pub variant: String,
    pub mae: f64,
    pub mse: f64,
    pub ssim: f64,
    /// Relative MSE drop vs the baseline row, when one is present.
    pub mse_drop_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rows: Vec<VariantMetrics>,
    pub n_slices: usize,
}

impl MetricsReport {
    /// Delimited text table (one row per method, plus the drop column).
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("slices evaluated: {}\n", self.n_slices));
        out.push_str(&format!(
            "{:<16} {:>12} {:>14} {:>8} {:>12}\n",
            "method", "MAE (HU)", "MSE (HU^2)", "SSIM", "MSE drop"
        ));
        for r in &self.rows {
            let drop = r
                .mse_drop_vs_baseline
                .map(|d| format!("{d:+.1}%"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<16} {:>12.2} {:>14.1} {:>8.4} {:>12}\n",
                r.variant, r.mae, r.mse, r.ssim, drop
            ));
        }
        out
    }

    /// Machine-readable key=value lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("eval.n_slices={}\n", self.n_slices));
        for r in &self.rows {
            out.push_str(&format!("eval.{}.mae={:.6}\n", r.variant, r.mae));
            out.push_str(&format!("eval.{}.mse={:.6}\n", r.variant, r.mse));
            out.push_str(&format!("eval.{}.ssim={:.6}\n", r.variant, r.ssim));
            if let Some(d) = r.mse_drop_vs_baseline {
                out.push_str(&format!("eval.{}.mse_drop_pct={:.3}\n", r.variant, d));
            }
        }
        out
    }
}
