//! Raw NHWC convolution kernels. Weights are `[kh, kw, c_in, c_out]` so the
//! innermost loops run over contiguous output channels.

use super::{Real, Shape, Tensor};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2` on every side; requires odd kernels.
    Same,
    /// No padding.
    Valid,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_y: usize,
    pub pad_x: usize,
}

impl ConvGeom {
    pub fn conv2d(input: Shape, weights: Shape, stride: usize, padding: Padding) -> Result<Self> {
        let [kh, kw, cin, cout] = weights.dims();
        if input.channels != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: input,
                right: weights,
            });
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be >= 1"));
        }
        let (pad_y, pad_x) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(invalid(
                        "conv2d",
                        format!("`same` padding needs odd kernel extents, got {kh}x{kw}"),
                    ));
                }
                (kh / 2, kw / 2)
            }
            Padding::Valid => (0, 0),
        };
        let span_y = input.height + 2 * pad_y;
        let span_x = input.width + 2 * pad_x;
        if span_y < kh || span_x < kw {
            return Err(invalid(
                "conv2d",
                format!("kernel {kh}x{kw} larger than input {input}"),
            ));
        }
        let output = Shape::new(
            input.batch,
            (span_y - kh) / stride + 1,
            (span_x - kw) / stride + 1,
            cout,
        )?;
        Ok(ConvGeom {
            input,
            output,
            kh,
            kw,
            stride,
            pad_y,
            pad_x,
        })
    }

    /// Input row/column feeding output `o` through kernel tap `k`, if in bounds.
    #[inline]
    fn src(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        let p = o * self.stride + k;
        if p < pad || p - pad >= extent {
            None
        } else {
            Some(p - pad)
        }
    }
}

pub(crate) fn check_bias(op: &'static str, bias: Shape, cout: usize) -> Result<()> {
    if bias != Shape::vector(cout)? {
        return Err(Error::ShapeMismatch {
            op,
            left: bias,
            right: Shape::vector(cout)?,
        });
    }
    Ok(())
}

pub(crate) fn conv2d_forward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let (is, os) = (g.input, g.output);
    let (cin, cout) = (is.channels, os.channels);
    let mut out = vec![T::zero(); os.len()];
    for n in 0..os.batch {
        for oy in 0..os.height {
            for ox in 0..os.width {
                let o0 = os.index(n, oy, ox, 0);
                let o = &mut out[o0..o0 + cout];
                o.copy_from_slice(b);
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.pad_y, is.height) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.pad_x, is.width) else {
                            continue;
                        };
                        let i0 = is.index(n, iy, ix, 0);
                        let wbase = (ky * g.kw + kx) * cin * cout;
                        for (ci, &xv) in x[i0..i0 + cin].iter().enumerate() {
                            if xv == T::zero() {
                                continue;
                            }
                            let row = &w[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (acc, &wv) in o.iter_mut().zip(row) {
                                *acc += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates gradients w.r.t. input, weights and bias for `conv2d_forward`.
pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    gout: &[T],
    gx: Option<&mut [T]>,
    gw: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let (is, os) = (g.input, g.output);
    let (cin, cout) = (is.channels, os.channels);
    let mut gx = gx;
    let mut gw = gw;
    if let Some(gb) = gb {
        for go in gout.chunks_exact(cout) {
            for (acc, &v) in gb.iter_mut().zip(go) {
                *acc += v;
            }
        }
    }
    if gx.is_none() && gw.is_none() {
        return;
    }
    for n in 0..os.batch {
        for oy in 0..os.height {
            for ox in 0..os.width {
                let o0 = os.index(n, oy, ox, 0);
                let go = &gout[o0..o0 + cout];
                if go.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                for ky in 0..g.kh {
                    let Some(iy) = g.src(oy, ky, g.pad_y, is.height) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = g.src(ox, kx, g.pad_x, is.width) else {
                            continue;
                        };
                        let i0 = is.index(n, iy, ix, 0);
                        let wbase = (ky * g.kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let r0 = wbase + ci * cout;
                            if let Some(gx) = gx.as_deref_mut() {
                                let row = &w[r0..r0 + cout];
                                let mut s = T::zero();
                                for (&a, &b) in row.iter().zip(go) {
                                    s += a * b;
                                }
                                gx[i0 + ci] += s;
                            }
                            if let Some(gw) = gw.as_deref_mut() {
                                let xv = x[i0 + ci];
                                if xv != T::zero() {
                                    for (acc, &v) in gw[r0..r0 + cout].iter_mut().zip(go) {
                                        *acc += xv * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Geometry of an unpadded transposed convolution: output extent
/// `(in - 1) * stride + k`.
pub(crate) fn conv_transpose_output(input: Shape, weights: Shape, stride: usize) -> Result<Shape> {
    let [kh, kw, cin, cout] = weights.dims();
    if input.channels != cin {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d",
            left: input,
            right: weights,
        });
    }
    if stride == 0 {
        return Err(invalid("conv_transpose2d", "stride must be >= 1"));
    }
    Shape::new(
        input.batch,
        (input.height - 1) * stride + kh,
        (input.width - 1) * stride + kw,
        cout,
    )
}

pub(crate) fn conv_transpose2d_forward<T: Real>(
    is: Shape,
    ws: Shape,
    os: Shape,
    stride: usize,
    x: &[T],
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let [kh, kw, cin, cout] = ws.dims();
    let mut out = Vec::with_capacity(os.len());
    for _ in 0..os.len() / cout {
        out.extend_from_slice(b);
    }
    for n in 0..is.batch {
        for iy in 0..is.height {
            for ix in 0..is.width {
                let i0 = is.index(n, iy, ix, 0);
                let xin = &x[i0..i0 + cin];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let o0 = os.index(n, iy * stride + ky, ix * stride + kx, 0);
                        let wbase = (ky * kw + kx) * cin * cout;
                        let o = &mut out[o0..o0 + cout];
                        for (ci, &xv) in xin.iter().enumerate() {
                            if xv == T::zero() {
                                continue;
                            }
                            let row = &w[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (acc, &wv) in o.iter_mut().zip(row) {
                                *acc += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward<T: Real>(
    is: Shape,
    ws: Shape,
    os: Shape,
    stride: usize,
    x: &[T],
    w: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let [kh, kw, cin, cout] = ws.dims();
    if let Some(gb) = gb {
        for go in gout.chunks_exact(cout) {
            for (acc, &v) in gb.iter_mut().zip(go) {
                *acc += v;
            }
        }
    }
    for n in 0..is.batch {
        for iy in 0..is.height {
            for ix in 0..is.width {
                let i0 = is.index(n, iy, ix, 0);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let o0 = os.index(n, iy * stride + ky, ix * stride + kx, 0);
                        let go = &gout[o0..o0 + cout];
                        let wbase = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let r0 = wbase + ci * cout;
                            if let Some(gx) = gx.as_deref_mut() {
                                let mut s = T::zero();
                                for (&a, &b) in w[r0..r0 + cout].iter().zip(go) {
                                    s += a * b;
                                }
                                gx[i0 + ci] += s;
                            }
                            if let Some(gw) = gw.as_deref_mut() {
                                let xv = x[i0 + ci];
                                for (acc, &v) in gw[r0..r0 + cout].iter_mut().zip(go) {
                                    *acc += xv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Valid-mode filtering of every channel independently with one fixed 2-D
/// kernel (row-major `k x k`).
pub(crate) fn depthwise_forward<T: Real>(x: &Tensor<T>, kernel: &[T], k: usize) -> Result<Tensor<T>> {
    let is = x.shape();
    if is.height < k || is.width < k {
        return Err(invalid(
            "depthwise_filter",
            format!("input {is} is smaller than the {k}x{k} window"),
        ));
    }
    let os = Shape::new(is.batch, is.height - k + 1, is.width - k + 1, is.channels)?;
    let c = is.channels;
    let xd = x.data();
    let mut out = vec![T::zero(); os.len()];
    for n in 0..os.batch {
        for oy in 0..os.height {
            for ox in 0..os.width {
                let o0 = os.index(n, oy, ox, 0);
                let o = &mut out[o0..o0 + c];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kernel[ky * k + kx];
                        let i0 = is.index(n, oy + ky, ox + kx, 0);
                        for (acc, &xv) in o.iter_mut().zip(&xd[i0..i0 + c]) {
                            *acc += wv * xv;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::raw(os, out))
}

pub(crate) fn depthwise_backward<T: Real>(
    is: Shape,
    os: Shape,
    kernel: &[T],
    k: usize,
    gout: &[T],
    gx: &mut [T],
) {
    let c = is.channels;
    for n in 0..os.batch {
        for oy in 0..os.height {
            for ox in 0..os.width {
                let o0 = os.index(n, oy, ox, 0);
                let go = &gout[o0..o0 + c];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = kernel[ky * k + kx];
                        let i0 = is.index(n, oy + ky, ox + kx, 0);
                        for (acc, &g) in gx[i0..i0 + c].iter_mut().zip(go) {
                            *acc += wv * g;
                        }
                    }
                }
            }
        }
    }
}

/// Maps a padded coordinate onto `0..n` with half-sample symmetric
/// reflection (`d c b a | a b c d | d c b a`); valid for any pad width.
#[inline]
pub(crate) fn reflect_index(p: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = p.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

pub(crate) fn pad_reflect_forward<T: Real>(x: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let is = x.shape();
    let os = Shape::new(is.batch, is.height + 2 * pad, is.width + 2 * pad, is.channels)?;
    let c = is.channels;
    let xd = x.data();
    let mut out = Vec::with_capacity(os.len());
    for n in 0..os.batch {
        for oy in 0..os.height {
            let iy = reflect_index(oy as isize - pad as isize, is.height);
            for ox in 0..os.width {
                let ix = reflect_index(ox as isize - pad as isize, is.width);
                let i0 = is.index(n, iy, ix, 0);
                out.extend_from_slice(&xd[i0..i0 + c]);
            }
        }
    }
    Ok(Tensor::raw(os, out))
}

pub(crate) fn pad_reflect_backward<T: Real>(is: Shape, os: Shape, pad: usize, gout: &[T], gx: &mut [T]) {
    let c = is.channels;
    for n in 0..os.batch {
        for oy in 0..os.height {
            let iy = reflect_index(oy as isize - pad as isize, is.height);
            for ox in 0..os.width {
                let ix = reflect_index(ox as isize - pad as isize, is.width);
                let i0 = is.index(n, iy, ix, 0);
                let o0 = os.index(n, oy, ox, 0);
                for (acc, &g) in gx[i0..i0 + c].iter_mut().zip(&gout[o0..o0 + c]) {
                    *acc += g;
                }
            }
        }
    }
}
