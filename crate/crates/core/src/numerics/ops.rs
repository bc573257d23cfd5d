//! Single-vector forms of the network primitives.
//!
//! The tape in [`super::tape`] evaluates the same maps on row-batches; these
//! helpers are the reference definitions and the inference path.

use super::{Matrix, RngState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dot product with independent partial sums, so the adds pipeline.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().sum::<f64>() + tail
}

/// `y = W x + b`.
pub fn linear_forward(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.cols() || b.len() != w.rows() {
        return Err(Error::shape(
            "linear_forward",
            format!(
                "x has {} entries, W is {}x{}, b has {} entries",
                x.len(),
                w.rows(),
                w.cols(),
                b.len()
            ),
        ));
    }
    Ok((0..w.rows())
        .map(|i| {
            w.row_slice(i)
                .iter()
                .zip(x)
                .fold(b[i], |acc, (wij, xj)| acc + wij * xj)
        })
        .collect())
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn tanh_op(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Max-shifted softmax.
pub fn softmax(f: &[f64]) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = vec![0.0; f.len()];
    softmax_into(f, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(f: &[f64], out: &mut [f64]) {
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(f) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` so eval mode is the identity.
pub fn dropout(x: &[f64], p: f64, mode: Mode, rng: &mut RngState) -> Result<Vec<f64>> {
    check_dropout_p(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok(x.to_vec());
    }
    let scale = 1.0 / (1.0 - p);
    Ok(x.iter()
        .map(|&v| if rng.uniform() < p { 0.0 } else { v * scale })
        .collect())
}

pub(crate) fn check_dropout_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    Ok(())
}

/// `(1/T) * sum_i ||pred_i - target_i||^2` over a batch of row vectors.
pub fn mse_loss(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("mse_loss batch"));
    }
    if pred.len() != target.len() {
        return Err(Error::shape(
            "mse_loss",
            format!("{} predictions vs {} targets", pred.len(), target.len()),
        ));
    }
    let mut total = 0.0;
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        if p.len() != t.len() {
            return Err(Error::shape(
                "mse_loss",
                format!("sample {i}: {} vs {} components", p.len(), t.len()),
            ));
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_examples() {
        let id = Matrix::identity(2);
        assert_eq!(linear_forward(&[1.0, 0.0], &id, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);

        let w = Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 0.0]]).unwrap();
        assert_eq!(linear_forward(&[1.0, 2.0], &w, &[0.5, -0.5]).unwrap(), vec![3.5, 1.5]);

        let w = Matrix::from_rows(&[&[0.3, -2.0, 9.0], &[1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(linear_forward(&[0.0; 3], &w, &[7.0, 7.0]).unwrap(), vec![7.0, 7.0]);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let w = Matrix::identity(2);
        let err = linear_forward(&[1.0, 2.0, 3.0], &w, &[0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("x has 3 entries"));
        assert!(linear_forward(&[1.0, 2.0], &w, &[0.0]).is_err());
    }

    #[test]
    fn relu_and_tanh_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(relu(&[3.5]), vec![3.5]);

        assert_eq!(tanh_op(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
        let big = tanh_op(&[5.0])[0];
        assert!(big < 1.0 && big > 0.999);
        assert_abs_diff_eq!(tanh_op(&[1.0])[0], 0.761594155955765, epsilon = 1e-15);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0; 4]).unwrap();
        assert!(u.iter().all(|&v| v == 0.25));

        let e = std::f64::consts::E;
        let m = softmax(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        let hi = e / (2.0 * e + 2.0);
        let lo = 1.0 / (2.0 * e + 2.0);
        assert_abs_diff_eq!(hi, 0.365_529_289_3, epsilon = 1e-10);
        assert_abs_diff_eq!(lo, 0.134_470_710_7, epsilon = 1e-10);
        for (got, want) in m.iter().zip([hi, hi, lo, lo]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_non_finite_and_empty() {
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(Error::NonFinite(_))));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = RngState::new(3);
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.35, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean_in_expectation() {
        let mut rng = RngState::new(11);
        let x = vec![1.0; 100_000];
        let y = dropout(&x, 0.35, Mode::Train, &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        let dropped = y.iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((dropped - 0.35).abs() < 0.01);
    }

    #[test]
    fn mse_examples() {
        let p = vec![vec![0.2, 0.3, -0.1]];
        assert_eq!(mse_loss(&p, &p).unwrap(), 0.0);

        let diff = mse_loss(&[vec![1.0, 1.0, 1.0]], &[vec![0.0; 3]]).unwrap();
        assert_eq!(diff, 3.0);

        let two = mse_loss(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0]],
            &[vec![0.0; 3], vec![0.0; 3]],
        )
        .unwrap();
        assert_eq!(two, 2.5);

        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[vec![0.0]], &[vec![0.0, 1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(f in prop::collection::vec(-50.0f64..50.0, 1..16)) {
            let m = softmax(&f).unwrap();
            let s: f64 = m.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(m.iter().all(|&v| v > 0.0 && v <= 1.0));
            // The dominant entry rounds to exactly 1.0 once the others fall
            // below half an ulp; below that spread it stays strictly inside.
            let spread = f.iter().cloned().fold(f64::MIN, f64::max)
                - f.iter().cloned().fold(f64::MAX, f64::min);
            if f.len() > 1 && spread < 30.0 {
                prop_assert!(m.iter().all(|&v| v < 1.0));
            }
        }

        #[test]
        fn softmax_shift_invariant(
            f in prop::collection::vec(-50.0f64..50.0, 1..16),
            c in -100.0f64..100.0,
        ) {
            let a = softmax(&f).unwrap();
            let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn mse_is_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..20),
            seed in any::<u64>(),
        ) {
            let pred: Vec<Vec<f64>> = rows.iter().map(|r| r[..3].to_vec()).collect();
            let target: Vec<Vec<f64>> = rows.iter().map(|r| r[3..].to_vec()).collect();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            RngState::new(seed).shuffle(&mut order);
            let p2: Vec<_> = order.iter().map(|&i| pred[i].clone()).collect();
            let t2: Vec<_> = order.iter().map(|&i| target[i].clone()).collect();
            let a = mse_loss(&pred, &target).unwrap();
            let b = mse_loss(&p2, &t2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
