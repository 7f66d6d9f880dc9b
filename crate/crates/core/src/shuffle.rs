//! Pixel shufflers. Block `(dy, dx)` of channel `c` lands on output channel
//! `c * r^2 + dy * r + dx`.

use crate::error::{invalid, Result};
use crate::tensor::{Real, Shape, Tensor};

pub fn space_to_depth<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.height.is_multiple_of(r) || !s.width.is_multiple_of(r) {
        return Err(invalid(
            "space_to_depth",
            format!("extents of {s} not divisible by block size {r}"),
        ));
    }
    let os = Shape::new(s.batch, s.height / r, s.width / r, s.channels * r * r)?;
    let xd = x.data();
    let mut out = vec![T::zero(); os.len()];
    for n in 0..s.batch {
        for y in 0..s.height {
            for xx in 0..s.width {
                let (i, dy) = (y / r, y % r);
                let (j, dx) = (xx / r, xx % r);
                let src = s.index(n, y, xx, 0);
                let dst = os.index(n, i, j, 0) + dy * r + dx;
                for c in 0..s.channels {
                    out[dst + c * r * r] = xd[src + c];
                }
            }
        }
    }
    Tensor::from_vec(os, out)
}

pub fn depth_to_space<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.channels.is_multiple_of(r * r) {
        return Err(invalid(
            "depth_to_space",
            format!("channels of {s} not divisible by {}", r * r),
        ));
    }
    let c_out = s.channels / (r * r);
    let os = Shape::new(s.batch, s.height * r, s.width * r, c_out)?;
    let xd = x.data();
    let mut out = vec![T::zero(); os.len()];
    for n in 0..os.batch {
        for y in 0..os.height {
            for xx in 0..os.width {
                let (i, dy) = (y / r, y % r);
                let (j, dx) = (xx / r, xx % r);
                let src = s.index(n, i, j, 0) + dy * r + dx;
                let dst = os.index(n, y, xx, 0);
                for c in 0..c_out {
                    out[dst + c] = xd[src + c * r * r];
                }
            }
        }
    }
    Tensor::from_vec(os, out)
}
