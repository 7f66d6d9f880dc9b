use crate::error::{Error, Result};
use crate::model::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, in `ParameterSet` order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ParameterSet<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        AdamState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn matches(&self, params: &ParameterSet<f32>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, p), (m, v))| m.len() == p.len() && v.len() == p.len())
    }
}

/// One Adam update from the gradients stored on `params`. The recurrence runs
/// in `f64`; moments and parameters are stored in `f32`.
pub fn adam_step(params: &mut ParameterSet<f32>, state: &mut AdamState, lr: f64, hp: &AdamParams) -> Result<()> {
    if !state.matches(params) {
        return Err(crate::error::invalid("adam_step", "optimizer state does not match the parameters"));
    }
    if let Some((name, _)) = params.iter().find(|(_, p)| p.grad.as_ref().is_none_or(|g| g.len() != p.len())) {
        return Err(Error::MissingGradient(name.to_string()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for ((_, p), (m, v)) in params.iter_mut().zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let grad = p.grad.take().expect("checked above");
        for (((w, g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = *g as f64;
            let mn = hp.beta1 * *mi as f64 + (1.0 - hp.beta1) * g;
            let vn = hp.beta2 * *vi as f64 + (1.0 - hp.beta2) * g * g;
            let m_hat = mn / c1;
            let v_hat = vn / c2;
            *w = (*w as f64 - lr * m_hat / (v_hat.sqrt() + hp.eps)) as f32;
            *mi = mn as f32;
            *vi = vn as f32;
        }
        p.grad = Some(grad);
    }
    Ok(())
}
