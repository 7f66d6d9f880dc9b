//! Single-level orthonormal 2-D Haar analysis and synthesis.
//!
//! For each 2x2 block `[[a, b], [c, d]]` and channel:
//!
//! ```text
//! LL = (a + b + c + d) / 2    LH = (a + b - c - d) / 2
//! HL = (a - b + c - d) / 2    HH = (a - b - c + d) / 2
//! ```
//!
//! Sub-bands are stored as four consecutive channel groups `[LL, LH, HL, HH]`,
//! each as wide as the input, so output channel `band * C + c`. The transform
//! matrix is orthogonal and symmetric, which makes the synthesis both the
//! inverse and the adjoint of the analysis.

use crate::error::{invalid, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Sub-band groups in channel order.
pub const BANDS: [&str; 4] = ["LL", "LH", "HL", "HH"];

pub fn dwt2_haar<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(invalid(
            "dwt2_haar",
            format!("spatial extents must be even, got {s}"),
        ));
    }
    let c = s.channels;
    let os = Shape::new(s.batch, s.height / 2, s.width / 2, 4 * c)?;
    let half = T::of(0.5);
    let xd = x.data();
    let mut out = vec![T::zero(); os.len()];
    for n in 0..os.batch {
        for y in 0..os.height {
            for xx in 0..os.width {
                let ia = s.index(n, 2 * y, 2 * xx, 0);
                let ib = s.index(n, 2 * y, 2 * xx + 1, 0);
                let ic = s.index(n, 2 * y + 1, 2 * xx, 0);
                let id = s.index(n, 2 * y + 1, 2 * xx + 1, 0);
                let o = os.index(n, y, xx, 0);
                for ch in 0..c {
                    let (a, b, cc, d) = (xd[ia + ch], xd[ib + ch], xd[ic + ch], xd[id + ch]);
                    out[o + ch] = (a + b + cc + d) * half;
                    out[o + c + ch] = (a + b - cc - d) * half;
                    out[o + 2 * c + ch] = (a - b + cc - d) * half;
                    out[o + 3 * c + ch] = (a - b - cc + d) * half;
                }
            }
        }
    }
    Tensor::from_vec(os, out)
}

pub fn idwt2_haar<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.channels.is_multiple_of(4) {
        return Err(invalid(
            "idwt2_haar",
            format!("channel count must be divisible by 4, got {s}"),
        ));
    }
    let c = s.channels / 4;
    let os = Shape::new(s.batch, s.height * 2, s.width * 2, c)?;
    let half = T::of(0.5);
    let xd = x.data();
    let mut out = vec![T::zero(); os.len()];
    for n in 0..s.batch {
        for y in 0..s.height {
            for xx in 0..s.width {
                let i = s.index(n, y, xx, 0);
                let oa = os.index(n, 2 * y, 2 * xx, 0);
                let ob = os.index(n, 2 * y, 2 * xx + 1, 0);
                let oc = os.index(n, 2 * y + 1, 2 * xx, 0);
                let od = os.index(n, 2 * y + 1, 2 * xx + 1, 0);
                for ch in 0..c {
                    let (ll, lh, hl, hh) = (xd[i + ch], xd[i + c + ch], xd[i + 2 * c + ch], xd[i + 3 * c + ch]);
                    out[oa + ch] = (ll + lh + hl + hh) * half;
                    out[ob + ch] = (ll + lh - hl - hh) * half;
                    out[oc + ch] = (ll - lh + hl - hh) * half;
                    out[od + ch] = (ll - lh - hl + hh) * half;
                }
            }
        }
    }
    Tensor::from_vec(os, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random<T: Real>(shape: Shape, seed: u64) -> Tensor<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| T::of(rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn constant_image_only_has_ll() {
        let x = Tensor::<f32>::full(Shape::new(1, 4, 6, 2).unwrap(), 0.7);
        let y = dwt2_haar(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 3, 8).unwrap());
        for (k, &v) in y.data().iter().enumerate() {
            if k % 8 < 2 {
                assert!((v - 1.4).abs() < 1e-6);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn single_block() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 2, 2, 1).unwrap(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = dwt2_haar(&x).unwrap();
        assert_eq!(y.data(), &[5.0, -2.0, -1.0, 0.0]);
    }

    #[test]
    fn odd_extent_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 1).unwrap());
        assert!(dwt2_haar(&x).is_err());
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 2, 6).unwrap());
        assert!(idwt2_haar(&x).is_err());
    }

    #[test]
    fn synthesis_examples() {
        let z = Tensor::<f32>::zeros(Shape::new(1, 3, 3, 8).unwrap());
        assert!(idwt2_haar(&z).unwrap().data().iter().all(|&v| v == 0.0));
        let ll = Tensor::<f32>::from_fn(Shape::new(1, 2, 2, 4).unwrap(), |_, _, _, c| if c == 0 { 2.0 } else { 0.0 });
        let img = idwt2_haar(&ll).unwrap();
        assert_eq!(img.shape(), Shape::new(1, 4, 4, 1).unwrap());
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn energy_preserved() {
        let x = random::<f32>(Shape::new(1, 8, 8, 3).unwrap(), 3);
        let y = dwt2_haar(&x).unwrap();
        let e = |t: &Tensor<f32>| t.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        assert!((e(&x) - e(&y)).abs() / e(&x) < 1e-5);
    }

    #[test]
    fn backward_is_the_inverse_transform() {
        let x = random::<f64>(Shape::new(2, 4, 6, 3).unwrap(), 11);
        let r = random::<f64>(Shape::new(2, 2, 3, 12).unwrap(), 12);
        let mut g = Graph::new();
        let xv = g.param(x);
        let rv = g.constant(r.clone());
        let y = g.dwt2(xv).unwrap();
        let p = g.mul(y, rv).unwrap();
        let l = g.mean(p);
        g.backward(l).unwrap();
        // d mean(y * r) / dy = r / len
        let upstream = r.map(|v| v / r.len() as f64);
        let expected = idwt2_haar(&upstream).unwrap();
        assert!(g.grad(xv).unwrap().max_abs_diff(&expected).unwrap() < 1e-15);
    }

    proptest! {
        #[test]
        fn round_trips(h in 1usize..6, w in 1usize..6, c in 1usize..4, seed in any::<u64>()) {
            let x = random::<f64>(Shape::new(1, 2 * h, 2 * w, c).unwrap(), seed);
            let back = idwt2_haar(&dwt2_haar(&x).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&x).unwrap() < 1e-12);
            let y = random::<f64>(Shape::new(1, h, w, 4 * c).unwrap(), seed ^ 1);
            let fwd = dwt2_haar(&idwt2_haar(&y).unwrap()).unwrap();
            prop_assert!(fwd.max_abs_diff(&y).unwrap() < 1e-12);
        }

        #[test]
        fn linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in any::<u64>()) {
            let s = Shape::new(1, 4, 4, 2).unwrap();
            let (x, y) = (random::<f64>(s, seed), random::<f64>(s, seed.wrapping_add(7)));
            let mix = Tensor::from_vec(s, x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
            let lhs = dwt2_haar(&mix).unwrap();
            let (dx, dy) = (dwt2_haar(&x).unwrap(), dwt2_haar(&y).unwrap());
            for ((l, a), b) in lhs.data().iter().zip(dx.data()).zip(dy.data()) {
                prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-12);
            }
        }
    }
}
