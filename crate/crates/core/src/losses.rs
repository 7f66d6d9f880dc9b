//! Training losses: L1 (MAE), SSIM and the blurred-grayscale "gray" loss,
//! plus their weighted sum.

use crate::error::{invalid, Result};
use crate::tensor::{Graph, Padding, Real, Shape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Standard deviation of the gray-loss blur, in pixels.
    pub blur_sigma: f64,
    pub blur_kernel: usize,
    pub gray_weights: [f64; 3],
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub data_range: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            blur_sigma: 5.0,
            blur_kernel: 21,
            gray_weights: [0.299, 0.587, 0.114],
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_k1: 0.01,
            ssim_k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "loss config";
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(op, format!("{name} must be a finite weight >= 0, got {w}")));
            }
        }
        let wsum: f64 = self.gray_weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(invalid(op, format!("gray weights sum to {wsum}, expected 1")));
        }
        for (name, k) in [("blur_kernel", self.blur_kernel), ("ssim_window", self.ssim_window)] {
            if k % 2 == 0 {
                return Err(invalid(op, format!("{name} must be odd, got {k}")));
            }
        }
        if !(self.blur_sigma > 0.0 && self.ssim_sigma > 0.0 && self.data_range > 0.0) {
            return Err(invalid(op, "sigmas and data range must be positive"));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.ssim_k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.ssim_k2 * self.data_range).powi(2)
    }
}

/// Row-major `size x size` samples of `exp(-(x^2 + y^2) / (2 sigma^2))` on the
/// centered integer grid, normalized to unit sum.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(invalid("gaussian_kernel", format!("size must be odd, got {size}")));
    }
    if !(sigma > 0.0) {
        return Err(invalid("gaussian_kernel", format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let mut k = Vec::with_capacity(size * size);
    for y in -r..=r {
        for x in -r..=r {
            k.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

fn cast_kernel<T: Real>(k: &[f64]) -> Vec<T> {
    k.iter().map(|&v| T::of(v)).collect()
}

/// Mean absolute error over every element (and the batch).
pub fn mae_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

/// Grayscale conversion followed by a reflect-padded Gaussian blur that
/// preserves the spatial extent.
pub fn blurred_gray<T: Real>(g: &mut Graph<T>, img: Var, cfg: &LossConfig) -> Result<Var> {
    let s = g.shape(img);
    if s.channels != 3 {
        return Err(invalid("gray_loss", format!("expected 3-channel input, got {s}")));
    }
    let w = Tensor::from_vec(
        Shape::new(1, 1, 3, 1)?,
        cfg.gray_weights.iter().map(|&v| T::of(v)).collect(),
    )?;
    let w = g.constant(w);
    let b = g.constant(Tensor::zeros(Shape::vector(1)?));
    let gray = g.conv2d(img, w, b, 1, Padding::Valid)?;
    let k = cfg.blur_kernel;
    let kernel = cast_kernel::<T>(&gaussian_kernel(k, cfg.blur_sigma)?);
    let padded = g.pad_reflect(gray, k / 2)?;
    g.depthwise_filter(padded, &kernel, k)
}

pub fn gray_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    let (ps, ts) = (g.shape(pred), g.shape(target));
    if ps != ts {
        return Err(crate::Error::ShapeMismatch {
            op: "gray_loss",
            left: ps,
            right: ts,
        });
    }
    let bp = blurred_gray(g, pred, cfg)?;
    let bt = blurred_gray(g, target, cfg)?;
    let d = g.sub(bt, bp)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

/// Mean of the SSIM map, with Gaussian-windowed local statistics taken per
/// channel over fully-covered windows only.
pub fn ssim_mean<T: Real>(g: &mut Graph<T>, x: Var, y: Var, cfg: &LossConfig) -> Result<Var> {
    let (xs, ys) = (g.shape(x), g.shape(y));
    if xs != ys {
        return Err(crate::Error::ShapeMismatch {
            op: "ssim",
            left: xs,
            right: ys,
        });
    }
    let k = cfg.ssim_window;
    if xs.height < k || xs.width < k {
        return Err(invalid(
            "ssim",
            format!("image {xs} is smaller than the {k}x{k} window"),
        ));
    }
    let win = cast_kernel::<T>(&gaussian_kernel(k, cfg.ssim_sigma)?);
    let (c1, c2) = (T::of(cfg.c1()), T::of(cfg.c2()));
    let two = T::of(2.0);

    let xx = g.mul(x, x)?;
    let yy = g.mul(y, y)?;
    let xy = g.mul(x, y)?;
    let mu_x = g.depthwise_filter(x, &win, k)?;
    let mu_y = g.depthwise_filter(y, &win, k)?;
    let e_xx = g.depthwise_filter(xx, &win, k)?;
    let e_yy = g.depthwise_filter(yy, &win, k)?;
    let e_xy = g.depthwise_filter(xy, &win, k)?;

    let mu_xx = g.mul(mu_x, mu_x)?;
    let mu_yy = g.mul(mu_y, mu_y)?;
    let mu_xy = g.mul(mu_x, mu_y)?;
    let var_x = g.sub(e_xx, mu_xx)?;
    let var_y = g.sub(e_yy, mu_yy)?;
    let cov = g.sub(e_xy, mu_xy)?;

    let lum_num = g.scalar_mul(mu_xy, two);
    let lum_num = g.add_scalar(lum_num, c1);
    let cs_num = g.scalar_mul(cov, two);
    let cs_num = g.add_scalar(cs_num, c2);
    let lum_den = g.add(mu_xx, mu_yy)?;
    let lum_den = g.add_scalar(lum_den, c1);
    let cs_den = g.add(var_x, var_y)?;
    let cs_den = g.add_scalar(cs_den, c2);

    let num = g.mul(lum_num, cs_num)?;
    let den = g.mul(lum_den, cs_den)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// `1 - SSIM(pred, target)`.
pub fn ssim_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var, cfg: &LossConfig) -> Result<Var> {
    let s = ssim_mean(g, pred, target, cfg)?;
    let neg = g.scalar_mul(s, -T::one());
    Ok(g.add_scalar(neg, T::one()))
}

/// Handles to the three loss components and their weighted sum.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub mae: Var,
    pub ssim: Var,
    pub gray: Var,
    pub total: Var,
}

pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    pred: Var,
    target: Var,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let mae = mae_loss(g, pred, target)?;
    let ssim = ssim_loss(g, pred, target, cfg)?;
    let gray = gray_loss(g, pred, target, cfg)?;
    let total = weighted_sum(g, [(mae, cfg.alpha), (ssim, cfg.beta), (gray, cfg.gamma)])?;
    Ok(LossTerms {
        mae,
        ssim,
        gray,
        total,
    })
}

fn weighted_sum<T: Real>(g: &mut Graph<T>, terms: [(Var, f64); 3]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (v, w) in terms {
        let t = g.scalar_mul(v, T::of(w));
        acc = Some(match acc {
            None => t,
            Some(a) => g.add(a, t)?,
        });
    }
    Ok(acc.expect("three terms"))
}

/// Loss component values as plain numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub mae: f64,
    pub ssim: f64,
    pub gray: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossValues {
        let v = |x: Var| g.value(x).data()[0].as_f64();
        LossValues {
            mae: v(self.mae),
            ssim: v(self.ssim),
            gray: v(self.gray),
            total: v(self.total),
        }
    }
}
