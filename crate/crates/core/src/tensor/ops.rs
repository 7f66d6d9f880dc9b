use super::{Real, Tensor};
use crate::error::Result;

pub(crate) fn zip_map<T: Real>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    a.check_same_shape(op, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Ok(Tensor::raw(a.shape(), data))
}

pub(crate) fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean with a left-to-right summation order, accumulated in f64.
pub(crate) fn mean<T: Real>(a: &Tensor<T>) -> T {
    let s: f64 = a.data().iter().map(|v| v.as_f64()).sum();
    T::of(s / a.len() as f64)
}
