use super::{Real, Tensor};

/// Central-difference gradient of `f` at `at`, evaluated in double precision.
pub fn finite_diff_grad<F>(f: F, at: &Tensor<f64>, eps: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let all: Vec<usize> = (0..at.len()).collect();
    let g = finite_diff_grad_at(f, at, eps, &all);
    Tensor::raw(at.shape(), g)
}

/// Central differences for the listed flat indices only.
pub fn finite_diff_grad_at<F>(mut f: F, at: &Tensor<f64>, eps: f64, indices: &[usize]) -> Vec<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = at.clone();
    indices
        .iter()
        .map(|&i| {
            let x0 = at.data()[i];
            probe.data_mut()[i] = x0 + eps;
            let up = f(&probe);
            probe.data_mut()[i] = x0 - eps;
            let down = f(&probe);
            probe.data_mut()[i] = x0;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Norm-wise relative error `|a - b|_2 / max(|a|_2, |b|_2)`; zero when both
/// vectors vanish.
pub fn rel_error<A: Real, B: Real>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let scale = na.max(nb).sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
