use super::spec::{ControllerKind, ControllerSpec, CONTROL_DIM};
use crate::error::{Error, Result};
use crate::numerics::{kaiming_init, Matrix, Mode, ParamSet, RngState, Tape, Var};
use crate::signals::{ControlVector, ExtendedSensorVector, NormStats};

/// Dropout probability on the regularized hidden layers.
pub const DROPOUT_P: f64 = 0.35;

/// Trained or freshly initialized controller: `F` parameters `theta`, attention
/// parameters `psi` (attention kinds only), and optional input normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub spec: ControllerSpec,
    pub theta: ParamSet,
    pub psi: Option<ParamSet>,
    pub norm: Option<NormStats>,
}

/// Network-space mini-batch: inputs already selected and normalized.
#[derive(Debug, Clone)]
pub struct Batch {
    pub s: Matrix,
    pub s_att: Option<Matrix>,
    pub u: Matrix,
}

/// Nodes produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub u: Var,
    /// `F` output before the final `tanh`.
    pub pre: Var,
    pub mask: Option<Var>,
    pub mask_u: Option<Var>,
}

/// Single-sample controller output with masks for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: ControlVector,
    pub mask: Option<Vec<f64>>,
    pub mask_u: Option<[f64; 3]>,
}

/// Dropout configuration for a forward pass.
pub struct Regularization<'a> {
    pub mode: Mode,
    pub p: f64,
    pub rng: Option<&'a mut RngState>,
}

impl Regularization<'_> {
    pub fn eval() -> Self {
        Regularization {
            mode: Mode::Eval,
            p: 0.0,
            rng: None,
        }
    }
}

fn dense_params(prefix: &str, widths: &[usize], rng: &mut RngState) -> Result<ParamSet> {
    let mut p = ParamSet::new();
    for (l, w) in widths.windows(2).enumerate() {
        p.push(format!("{prefix}.w{}", l + 1), kaiming_init(w[1], w[0], rng)?);
        p.push(format!("{prefix}.b{}", l + 1), Matrix::zeros(1, w[1]));
    }
    Ok(p)
}

fn zero_dense(prefix: &str, widths: &[usize]) -> ParamSet {
    let mut p = ParamSet::new();
    for (l, w) in widths.windows(2).enumerate() {
        p.push(format!("{prefix}.w{}", l + 1), Matrix::zeros(w[1], w[0]));
        p.push(format!("{prefix}.b{}", l + 1), Matrix::zeros(1, w[1]));
    }
    p
}

/// Kaiming-initialized weights, zero biases.
pub fn build_controller(spec: ControllerSpec, rng: &mut RngState) -> Result<ControllerParams> {
    spec.validate()?;
    let theta = dense_params("f", &spec.controller_widths(), rng)?;
    let psi = match spec.attention_widths() {
        Some(w) => Some(dense_params("a", &w, rng)?),
        None => None,
    };
    Ok(ControllerParams {
        spec,
        theta,
        psi,
        norm: None,
    })
}

impl ControllerParams {
    /// All-zero parameters with the shapes of `spec`.
    pub fn zeros(spec: ControllerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            theta: zero_dense("f", &spec.controller_widths()),
            psi: spec.attention_widths().map(|w| zero_dense("a", &w)),
            norm: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.theta.scalar_count() + self.psi.as_ref().map_or(0, ParamSet::scalar_count)
    }

    /// Parameter sets in a fixed order: `theta`, then `psi`.
    pub fn param_sets(&self) -> Vec<&ParamSet> {
        std::iter::once(&self.theta).chain(self.psi.as_ref()).collect()
    }

    pub fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        std::iter::once(&mut self.theta).chain(self.psi.as_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.param_sets_mut().into_iter().for_each(ParamSet::zero_grad);
    }

    /// Records the forward pass on `tape`. `theta_vars`/`psi_vars` come from [`ParamSet::bind`].
    #[allow(clippy::too_many_arguments)]
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        theta_vars: &[Var],
        psi_vars: Option<&[Var]>,
        s: Var,
        s_att: Option<Var>,
        reg: &mut Regularization<'_>,
    ) -> Result<ForwardVars> {
        let spec = &self.spec;
        if tape.value(s).cols() != spec.input_dim {
            return Err(Error::shape(
                "controller forward",
                format!("input has {} columns, spec expects {}", tape.value(s).cols(), spec.input_dim),
            ));
        }

        let (mut mask, mut mask_u) = (None, None);
        let mut x = s;
        if spec.kind.has_attention() {
            let psi_vars = psi_vars.ok_or_else(|| Error::InvalidArgument("missing attention parameters".into()))?;
            let s_att = s_att.ok_or_else(|| Error::InvalidArgument("missing attention input".into()))?;
            let att_dim = spec.attention_input_dim.unwrap_or(spec.input_dim);
            if tape.value(s_att).cols() != att_dim || tape.value(s_att).rows() != tape.value(s).rows() {
                return Err(Error::shape(
                    "attention forward",
                    format!(
                        "attention input {:?}, expected {} rows x {att_dim} columns",
                        tape.value(s_att).shape(),
                        tape.value(s).rows()
                    ),
                ));
            }
            let features = attention_features(tape, psi_vars, s_att, reg)?;
            let m = if spec.kind == ControllerKind::Dannet {
                let f_in = tape.columns(features, 0, spec.input_dim)?;
                let f_out = tape.columns(features, spec.input_dim, CONTROL_DIM)?;
                mask_u = Some(tape.softmax(f_out)?);
                tape.softmax(f_in)?
            } else {
                tape.softmax(features)?
            };
            mask = Some(m);
            x = tape.mul(s, m)?;
        }

        let pre = match spec.kind {
            ControllerKind::Nnet => {
                let h = tape.affine(x, theta_vars[0], theta_vars[1])?;
                let h = tape.tanh(h);
                tape.affine(h, theta_vars[2], theta_vars[3])?
            }
            _ => {
                let mut h = x;
                for layer in 0..3 {
                    h = tape.affine(h, theta_vars[2 * layer], theta_vars[2 * layer + 1])?;
                    h = tape.relu(h);
                    if layer < 2 {
                        h = dropout_node(tape, h, reg)?;
                    }
                }
                tape.affine(h, theta_vars[6], theta_vars[7])?
            }
        };
        let u = match mask_u {
            Some(mu) => {
                let gated = tape.mul(mu, pre)?;
                tape.tanh(gated)
            }
            None => tape.tanh(pre),
        };
        Ok(ForwardVars { u, pre, mask, mask_u })
    }

    /// Eval-mode forward over network-space batches; returns `(u, mask, mask_u)` matrices.
    ///
    /// Runs directly on the weight matrices without recording a tape.
    pub fn forward_batch(
        &self,
        s: &Matrix,
        s_att: Option<&Matrix>,
    ) -> Result<(Matrix, Option<Matrix>, Option<Matrix>)> {
        forward_with(&self.spec, &self.theta, self.psi.as_ref(), s, s_att)
    }


    fn forward_one(&self, s: &[f64], s_att: Option<&[f64]>) -> Result<ControlOutput> {
        let sm = Matrix::row(s);
        let am = s_att.map(Matrix::row);
        let (u, m, mu) = self.forward_batch(&sm, am.as_ref())?;
        let uv = u.values();
        Ok(ControlOutput {
            u: ControlVector::new(uv[0], uv[1], uv[2]),
            mask: m.map(Matrix::into_values),
            mask_u: mu.map(|m| {
                let v = m.values();
                [v[0], v[1], v[2]]
            }),
        })
    }

    /// NNet / NNetV2 forward in eval mode.
    pub fn forward_plain(&self, s: &[f64]) -> Result<ControlVector> {
        if self.spec.kind.has_attention() {
            return Err(Error::InvalidArgument(format!(
                "forward_plain called on {}",
                self.spec.kind
            )));
        }
        Ok(self.forward_one(s, None)?.u)
    }

    /// `softmax(A(s_att))`: the full attention head output, normalized per head.
    /// For DANNet this is `m` followed by `m_u`.
    pub fn attention_forward(&self, s_att: &[f64]) -> Result<Vec<f64>> {
        let psi = self
            .psi
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no attention module", self.spec.kind)))?;
        let att_dim = self.spec.attention_input_dim.unwrap_or(self.spec.input_dim);
        if s_att.len() != att_dim {
            return Err(Error::shape(
                "attention_forward",
                format!("attention input has {} entries, expected {att_dim}", s_att.len()),
            ));
        }
        let mut tape = Tape::new();
        let pv = psi.bind(&mut tape);
        let a = tape.leaf(Matrix::row(s_att));
        let f = attention_features(&mut tape, &pv, a, &mut Regularization::eval())?;
        if self.spec.kind == ControllerKind::Dannet {
            let d = self.spec.input_dim;
            let fi = tape.columns(f, 0, d)?;
            let fo = tape.columns(f, d, CONTROL_DIM)?;
            let mi = tape.softmax(fi)?;
            let mo = tape.softmax(fo)?;
            let mut out = tape.value(mi).values().to_vec();
            out.extend_from_slice(tape.value(mo).values());
            Ok(out)
        } else {
            let m = tape.softmax(f)?;
            Ok(tape.value(m).values().to_vec())
        }
    }

    /// ANNet forward: `u = F(s ⊙ m)`.
    pub fn forward_annet(&self, s: &[f64], s_att: &[f64]) -> Result<ControlVector> {
        if self.spec.kind != ControllerKind::Annet {
            return Err(Error::InvalidArgument(format!("forward_annet called on {}", self.spec.kind)));
        }
        Ok(self.forward_one(s, Some(s_att))?.u)
    }

    /// DANNet forward: `u = tanh(m_u ⊙ u')` with `u' = F(s ⊙ m)` before its final nonlinearity.
    pub fn forward_dannet(&self, s: &[f64], s_att: &[f64]) -> Result<ControlOutput> {
        if self.spec.kind != ControllerKind::Dannet {
            return Err(Error::InvalidArgument(format!("forward_dannet called on {}", self.spec.kind)));
        }
        self.forward_one(s, Some(s_att))
    }

    /// Any kind, network-space inputs.
    pub fn forward(&self, s: &[f64], s_att: Option<&[f64]>) -> Result<ControlOutput> {
        self.forward_one(s, s_att)
    }

    /// Raw observation to network-space `(s, s_att)`: channel selection then normalization.
    pub fn prepare(&self, obs: &ExtendedSensorVector) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let z = match &self.norm {
            Some(n) => n.normalize(obs),
            None => *obs,
        };
        let s = z.select(&self.spec.input_channels()?);
        let a = self.spec.attention_channels()?.map(|c| z.select(&c));
        Ok((s, a))
    }

    /// Eval-mode policy on a raw observation.
    pub fn act(&self, obs: &ExtendedSensorVector) -> Result<ControlOutput> {
        let (s, a) = self.prepare(obs)?;
        self.forward_one(&s, a.as_deref())
    }

    fn record_loss(&self, batch: &Batch, reg: &mut Regularization<'_>) -> Result<LossTape> {
        if batch.u.rows() == 0 {
            return Err(Error::Empty("controller_loss batch"));
        }
        let mut tape = Tape::new();
        let theta = self.theta.bind(&mut tape);
        let psi = self.psi.as_ref().map(|p| p.bind(&mut tape));
        let sv = tape.leaf(batch.s.clone());
        let av = batch.s_att.as_ref().map(|a| tape.leaf(a.clone()));
        let target = tape.leaf(batch.u.clone());
        let out = self.forward_tape(&mut tape, &theta, psi.as_deref(), sv, av, reg)?;
        let loss = tape.mse(out.u, target)?;
        Ok(LossTape {
            tape,
            theta,
            psi,
            loss,
        })
    }

    /// Batch MSE under `reg`; gradients are added to the parameter buffers.
    pub fn loss_and_grad(&mut self, batch: &Batch, reg: &mut Regularization<'_>) -> Result<f64> {
        let LossTape {
            mut tape,
            theta,
            psi,
            loss,
        } = self.record_loss(batch, reg)?;
        tape.backward(loss)?;
        self.theta.accumulate_grads(&tape, &theta)?;
        if let (Some(set), Some(vars)) = (self.psi.as_mut(), psi.as_ref()) {
            set.accumulate_grads(&tape, vars)?;
        }
        Ok(tape.value(loss).values()[0])
    }

    /// Eval-mode batch MSE.
    pub fn controller_loss(&self, batch: &Batch) -> Result<f64> {
        let lt = self.record_loss(batch, &mut Regularization::eval())?;
        Ok(lt.tape.value(lt.loss).values()[0])
    }
}

struct LossTape {
    tape: Tape,
    theta: Vec<Var>,
    psi: Option<Vec<Var>>,
    loss: Var,
}

/// Tape-free eval-mode forward for explicit parameter sets.
pub fn forward_with(
    spec: &ControllerSpec,
    theta: &ParamSet,
    psi: Option<&ParamSet>,
    s: &Matrix,
    s_att: Option<&Matrix>,
) -> Result<(Matrix, Option<Matrix>, Option<Matrix>)> {
    if s.cols() != spec.input_dim {
        return Err(Error::shape(
            "controller forward",
            format!("input has {} columns, spec expects {}", s.cols(), spec.input_dim),
        ));
    }
    let (mut mask, mut mask_u) = (None, None);
    let mut x = s.clone();
    if let Some(psi) = psi {
        let a = s_att.ok_or_else(|| Error::InvalidArgument("missing attention input".into()))?;
        let att_dim = spec.attention_input_dim.unwrap_or(spec.input_dim);
        if a.cols() != att_dim || a.rows() != s.rows() {
            return Err(Error::shape(
                "attention forward",
                format!("attention input {:?}, expected {} rows x {att_dim} columns", a.shape(), s.rows()),
            ));
        }
        let mut h = a.clone();
        for layer in 0..2 {
            h = dense_eval(&h, psi.tensor(2 * layer), psi.tensor(2 * layer + 1));
            relu_in_place(&mut h);
        }
        let f = dense_eval(&h, psi.tensor(4), psi.tensor(5));
        let m = if spec.kind == ControllerKind::Dannet {
            let d = spec.input_dim;
            mask_u = Some(row_softmax(&f, d, CONTROL_DIM));
            row_softmax(&f, 0, d)
        } else {
            row_softmax(&f, 0, f.cols())
        };
        for (xv, mv) in x.values_mut().iter_mut().zip(m.values()) {
            *xv *= mv;
        }
        mask = Some(m);
    }
    let th = theta;
    let mut pre = match spec.kind {
        ControllerKind::Nnet => {
            let h = dense_eval(&x, th.tensor(0), th.tensor(1)).map(f64::tanh);
            dense_eval(&h, th.tensor(2), th.tensor(3))
        }
        _ => {
            let mut h = x;
            for layer in 0..3 {
                h = dense_eval(&h, th.tensor(2 * layer), th.tensor(2 * layer + 1));
                relu_in_place(&mut h);
            }
            dense_eval(&h, th.tensor(6), th.tensor(7))
        }
    };
    if let Some(mu) = &mask_u {
        for (p, g) in pre.values_mut().iter_mut().zip(mu.values()) {
            *p *= g;
        }
    }
    let u = pre.map(f64::tanh);
    Ok((u, mask, mask_u))
}

fn dense_eval(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for r in 0..x.rows() {
        out.row_slice_mut(r).copy_from_slice(b.values());
    }
    if x.rows() <= SMALL_BATCH {
        // GEMM packing dominates for a handful of rows.
        for r in 0..x.rows() {
            let xr = x.row_slice(r);
            for (o, i) in out.row_slice_mut(r).iter_mut().zip(0..w.rows()) {
                *o += crate::numerics::dot(w.row_slice(i), xr);
            }
        }
    } else {
        Matrix::gemm(x, false, w, true, &mut out, true);
    }
    out
}

const SMALL_BATCH: usize = 4;

fn relu_in_place(m: &mut Matrix) {
    m.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

fn row_softmax(f: &Matrix, start: usize, len: usize) -> Matrix {
    let mut out = Matrix::zeros(f.rows(), len);
    for r in 0..f.rows() {
        crate::numerics::softmax_rows_into(&f.row_slice(r)[start..start + len], out.row_slice_mut(r));
    }
    out
}

fn dropout_node(tape: &mut Tape, x: Var, reg: &mut Regularization<'_>) -> Result<Var> {
    match (reg.mode, reg.rng.as_deref_mut()) {
        (Mode::Train, Some(rng)) if reg.p > 0.0 => tape.dropout(x, reg.p, Mode::Train, rng),
        (Mode::Train, None) if reg.p > 0.0 => Err(Error::InvalidArgument(
            "train-mode dropout needs an RngState".into(),
        )),
        _ => Ok(x),
    }
}

fn attention_features(tape: &mut Tape, psi: &[Var], s_att: Var, reg: &mut Regularization<'_>) -> Result<Var> {
    let mut h = s_att;
    for layer in 0..2 {
        h = tape.affine(h, psi[2 * layer], psi[2 * layer + 1])?;
        h = tape.relu(h);
        h = dropout_node(tape, h, reg)?;
    }
    tape.affine(h, psi[4], psi[5])
}
