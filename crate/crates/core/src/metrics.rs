//! Evaluation metrics: PSNR, SSIM and the mean perceptual score (MPS).
//!
//! SSIM shares its implementation with [`crate::losses::ssim_loss`] but is
//! always evaluated in double precision. LPIPS is not computed here; it is
//! supplied by the caller when an MPS is wanted.

use std::io::Write;

use crate::error::Result;
use crate::losses::{self, LossConfig};
use crate::tensor::{Graph, Real, Tensor};

/// Peak signal-to-noise ratio in dB. Identical inputs give `f64::INFINITY`.
pub fn psnr<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, peak: f64) -> Result<f64> {
    pred.check_same_shape("psnr", target)?;
    if !(peak > 0.0) {
        return Err(crate::error::invalid("psnr", format!("peak must be positive, got {peak}")));
    }
    let mse = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Loss-path SSIM loss evaluated in double precision.
pub fn ssim_loss_value<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let p = g.constant(pred.cast());
    let t = g.constant(target.cast());
    let l = losses::ssim_loss(&mut g, p, t, cfg)?;
    g.value(l).item()
}

/// Mean SSIM; exactly `1 - ssim_loss_value` on the same inputs.
pub fn ssim_metric<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<f64> {
    Ok(1.0 - ssim_loss_value(pred, target, cfg)?)
}

/// Mean perceptual score `0.5 * (S + (1 - L))`.
pub fn mps(ssim: f64, lpips: f64) -> f64 {
    0.5 * (ssim + (1.0 - lpips))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
    pub mps: Option<f64>,
}

impl MetricsReport {
    pub fn new(psnr_db: f64, ssim: f64, lpips: Option<f64>) -> Self {
        MetricsReport {
            psnr_db,
            ssim,
            lpips,
            mps: lpips.map(|l| mps(ssim, l)),
        }
    }

    pub fn evaluate<T: Real>(
        pred: &Tensor<T>,
        target: &Tensor<T>,
        cfg: &LossConfig,
        lpips: Option<f64>,
    ) -> Result<Self> {
        Ok(Self::new(
            psnr(pred, target, cfg.data_range)?,
            ssim_metric(pred, target, cfg)?,
            lpips,
        ))
    }
}

pub const REPORT_HEADER: &str = "name,psnr_db,ssim,lpips,mps";

/// Writes the evaluation CSV. Rows with `None` metrics (failed files) get
/// empty cells.
pub fn write_report<W: Write>(
    mut out: W,
    rows: &[(String, Option<MetricsReport>)],
    cfg: &LossConfig,
) -> std::io::Result<()> {
    writeln!(
        out,
        "# ssim: per-channel mean over {}x{} gaussian windows (sigma {}), valid region only",
        cfg.ssim_window, cfg.ssim_window, cfg.ssim_sigma
    )?;
    writeln!(out, "{REPORT_HEADER}")?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, report) in rows {
        match report {
            Some(r) => writeln!(
                out,
                "{name},{},{},{},{}",
                r.psnr_db,
                r.ssim,
                cell(r.lpips),
                cell(r.mps)
            )?,
            None => writeln!(out, "{name},,,,")?,
        }
    }
    Ok(())
}

/// Average of the successful rows; PSNR averages finite values only (and is
/// infinite when every row is).
pub fn aggregate(rows: &[MetricsReport]) -> Option<MetricsReport> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let finite: Vec<f64> = rows.iter().map(|r| r.psnr_db).filter(|v| v.is_finite()).collect();
    let psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
    let lpips = if rows.iter().all(|r| r.lpips.is_some()) {
        Some(rows.iter().filter_map(|r| r.lpips).sum::<f64>() / n)
    } else {
        None
    };
    Some(MetricsReport::new(psnr, ssim, lpips))
}
