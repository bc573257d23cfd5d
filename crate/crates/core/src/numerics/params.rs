use super::{Matrix, RngState, Tape, Var};
use crate::error::{Error, Result};

/// Ordered, named parameter tensors with matching gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &Matrix {
        &self.values[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.values[i]
    }

    pub fn grad(&self, i: usize) -> &Matrix {
        &self.grads[i]
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Registers every tensor on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    /// Adds the tape's gradients for `vars` (as returned by [`ParamSet::bind`]) into the buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &[Var]) -> Result<()> {
        if vars.len() != self.values.len() {
            return Err(Error::shape(
                "accumulate_grads",
                format!("{} vars for {} tensors", vars.len(), self.values.len()),
            ));
        }
        for (g, &v) in self.grads.iter_mut().zip(vars) {
            let tg = tape
                .grad(v)
                .ok_or_else(|| Error::NoForward("no gradients recorded".into()))?;
            if tg.shape() != g.shape() {
                return Err(Error::shape(
                    "accumulate_grads",
                    format!("gradient {:?} vs buffer {:?}", tg.shape(), g.shape()),
                ));
            }
            g.add_assign(tg);
        }
        Ok(())
    }

    /// Flat view of all parameters in declaration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|m| m.values().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads
            .iter()
            .flat_map(|m| m.values().iter().copied())
            .collect()
    }

    /// Reads / writes the scalar at flat position `k`.
    pub fn scalar(&self, k: usize) -> f64 {
        let (t, i) = self.locate(k);
        self.values[t].values()[i]
    }

    pub fn set_scalar(&mut self, k: usize, v: f64) {
        let (t, i) = self.locate(k);
        self.values[t].values_mut()[i] = v;
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (t, m) in self.values.iter().enumerate() {
            if k < m.len() {
                return (t, k);
            }
            k -= m.len();
        }
        panic!("flat parameter index out of range");
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> (&mut [Matrix], &[Matrix]) {
        (&mut self.values, &self.grads)
    }

    pub fn set_grad(&mut self, i: usize, grad: Matrix) -> Result<()> {
        if grad.shape() != self.values[i].shape() {
            return Err(Error::shape(
                "set_grad",
                format!("{:?} vs {:?}", grad.shape(), self.values[i].shape()),
            ));
        }
        self.grads[i] = grad;
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// He/Kaiming normal initialization in fan-in mode: `N(0, 2 / cols)`.
pub fn kaiming_init(rows: usize, cols: usize, rng: &mut RngState) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "kaiming_init needs positive dimensions, got {rows}x{cols}"
        )));
    }
    let std = kaiming_std(cols);
    let values = (0..rows * cols).map(|_| rng.normal() * std).collect();
    Matrix::from_vec(rows, cols, values)
}

pub fn kaiming_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kaiming_std_closed_form() {
        assert!((kaiming_std(4) - 0.707_106_781_186_547_5).abs() < 1e-15);
        assert!((kaiming_std(64) - 0.176_776_695_296_636_9).abs() < 1e-15);
    }

    #[test]
    fn kaiming_empirical_std_within_five_percent() {
        let mut rng = RngState::new(2024);
        let m = kaiming_init(100, 64, &mut rng).unwrap();
        assert_eq!(m.len(), 6400);
        let big = kaiming_init(157, 64, &mut rng).unwrap();
        let vals: Vec<f64> = m.values().iter().chain(big.values()).copied().collect();
        assert!(vals.len() >= 10_000);
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = kaiming_std(64);
        assert!((std - target).abs() / target < 0.05, "std {std}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn kaiming_deterministic_and_validated() {
        let a = kaiming_init(3, 5, &mut RngState::new(9)).unwrap();
        let b = kaiming_init(3, 5, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(kaiming_init(0, 5, &mut RngState::new(9)).is_err());
    }

    #[test]
    fn flat_indexing_walks_tensors_in_order() {
        let mut p = ParamSet::new();
        p.push("a", Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap());
        p.push("b", Matrix::from_vec(2, 1, vec![3.0, 4.0]).unwrap());
        assert_eq!(p.scalar_count(), 4);
        assert_eq!(p.scalar(2), 3.0);
        p.set_scalar(3, 9.0);
        assert_eq!(p.flat_values(), vec![1.0, 2.0, 3.0, 9.0]);
        assert_eq!(p.grad(1).shape(), (2, 1));
    }
}
