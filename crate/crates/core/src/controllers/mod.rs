//! The four controller architectures.
//!
//! * NNet: `s-5-u` with a `tanh` hidden layer.
//! * NNetV2: `s-200-200-10-u`, ReLU hidden layers, dropout after the two wide layers.
//! * ANNet: an attention network `A: s'-64-64-m` whose softmax mask multiplies the
//!   input elementwise before the NNetV2-shaped `F`: `u = F(s ⊙ m)`.
//! * DANNet: `A` emits `<m, m_u>`, each softmax-normalized on its own; the output
//!   mask gates `F`'s pre-activation: `u = tanh(m_u ⊙ u')`.
//!
//! All outputs pass through `tanh`, so every control lies in `[-1, 1]`.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC};
pub use network::{
    build_controller, Batch, ControlOutput, ControllerParams, ForwardVars, Regularization, DROPOUT_P,
};
pub use spec::{ControllerKind, ControllerSpec, A_HIDDEN, CONTROL_DIM, F_HIDDEN, NNET_HIDDEN};

use crate::error::Result;
use crate::numerics::{finite_diff_grad, relative_error, Matrix, RngState};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub kind: ControllerKind,
    pub params_checked: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// A random network-space batch matching `spec`.
pub fn random_batch(spec: &ControllerSpec, rows: usize, rng: &mut RngState) -> Batch {
    let mut draw = |c: usize| {
        let v = (0..rows * c).map(|_| rng.normal()).collect();
        Matrix::from_vec(rows, c, v).expect("sized")
    };
    let s = draw(spec.input_dim);
    let s_att = spec.attention_input_dim.map(&mut draw);
    let u_vals = (0..rows * CONTROL_DIM).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
    Batch {
        s,
        s_att,
        u: Matrix::from_vec(rows, CONTROL_DIM, u_vals).expect("sized"),
    }
}

/// Gradient check of the eval-mode MSE for a random instance of `spec`.
///
/// The analytic side is the tape's reverse sweep; the numeric side perturbs each
/// scalar and re-evaluates through the tape-free [`ControllerParams::forward_batch`].
pub fn gradient_check(spec: ControllerSpec, seed: u64, rows: usize, h: f64) -> Result<GradCheckReport> {
    let mut rng = RngState::new(seed);
    let mut params = build_controller(spec, &mut rng)?;
    // Non-zero biases so every term of the gradient is exercised.
    for set in params.param_sets_mut() {
        for k in 0..set.scalar_count() {
            if set.names()[locate_tensor(set, k)].contains(".b") {
                set.set_scalar(k, 0.1 * rng.normal());
            }
        }
    }
    let batch = random_batch(&spec, rows, &mut rng);

    params.zero_grad();
    params.loss_and_grad(&batch, &mut Regularization::eval())?;
    let analytic: Vec<f64> = params.param_sets().iter().flat_map(|s| s.flat_grads()).collect();

    let eval_loss = |theta: &crate::numerics::ParamSet, psi: Option<&crate::numerics::ParamSet>| -> f64 {
        let (u, _, _) =
            network::forward_with(&spec, theta, psi, &batch.s, batch.s_att.as_ref()).expect("shapes checked");
        let sq: f64 = u.values().iter().zip(batch.u.values()).map(|(a, b)| (a - b) * (a - b)).sum();
        sq / rows as f64
    };

    let mut theta = params.theta.clone();
    let mut numeric = finite_diff_grad(|t| eval_loss(t, params.psi.as_ref()), &mut theta, h);
    if let Some(mut psi) = params.psi.clone() {
        numeric.extend(finite_diff_grad(|p| eval_loss(&params.theta, Some(p)), &mut psi, h));
    }

    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradCheckReport {
        kind: spec.kind,
        params_checked: analytic.len(),
        max_relative_error,
        worst_index,
    })
}

fn locate_tensor(set: &crate::numerics::ParamSet, mut k: usize) -> usize {
    for i in 0..set.len() {
        let n = set.tensor(i).len();
        if k < n {
            return i;
        }
        k -= n;
    }
    set.len() - 1
}
