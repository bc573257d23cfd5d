use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

/// Rectified Adam (Liu et al., "On the Variance of the Adaptive Learning Rate and Beyond").
#[derive(Debug, Clone, PartialEq)]
pub struct RadamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl RadamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = |p: &ParamSet| {
            (0..p.len())
                .map(|i| {
                    let (r, c) = p.tensor(i).shape();
                    Matrix::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Length of the approximated simple moving average, `rho_inf`.
    pub fn rho_inf(&self) -> f64 {
        2.0 / (1.0 - self.beta2) - 1.0
    }

    /// `rho_t` for step `t` (1-based).
    pub fn rho(&self, t: u64) -> f64 {
        let b2t = self.beta2.powi(t as i32);
        self.rho_inf() - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }
}

/// One RAdam update using the gradients currently held in `params`.
pub fn radam_step(params: &mut ParamSet, state: &mut RadamState, lr: f64) -> Result<()> {
    if params.is_empty() {
        return Err(Error::Empty("radam_step parameters"));
    }
    if state.m.len() != params.len()
        || state
            .m
            .iter()
            .enumerate()
            .any(|(i, m)| m.shape() != params.tensor(i).shape())
    {
        return Err(Error::shape(
            "radam_step",
            "optimizer state does not match parameter shapes",
        ));
    }
    if !(lr >= 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }

    state.step += 1;
    let t = state.step;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bias1 = 1.0 - b1.powi(t as i32);
    let bias2 = 1.0 - b2.powi(t as i32);
    let rho_inf = state.rho_inf();
    let rho_t = state.rho(t);
    let rect = if rho_t > 4.0 {
        Some(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt(),
        )
    } else {
        None
    };

    let (values, grads) = params.values_and_grads_mut();
    for (((w, g), m), v) in values
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((wi, &gi), mi), vi) in w
            .values_mut()
            .iter_mut()
            .zip(g.values())
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bias1;
            match rect {
                Some(r) => {
                    let v_hat = (*vi / bias2).sqrt();
                    *wi -= lr * r * m_hat / (v_hat + eps);
                }
                None => *wi -= lr * m_hat,
            }
        }
    }
    Ok(())
}
