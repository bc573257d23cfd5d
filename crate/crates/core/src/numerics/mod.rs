//! Dense-network numerics: matrices, activations, a reverse-mode tape,
//! Kaiming initialization and the RAdam optimizer. Everything is `f64`.

mod gradcheck;
mod matrix;
mod ops;
mod params;
mod radam;
mod rng;
mod tape;

pub use gradcheck::{finite_diff_grad, relative_error, RELATIVE_ERROR_FLOOR};
pub use matrix::Matrix;
pub use ops::{dot, dropout, linear_forward, mse_loss, relu, softmax, tanh_op, Mode};
pub(crate) use ops::softmax_into as softmax_rows_into;
pub(crate) use ops::check_dropout_p;
pub use params::{kaiming_init, kaiming_std, ParamSet};
pub use radam::{radam_step, RadamState};
pub use rng::RngState;
pub use tape::{Tape, Var};
