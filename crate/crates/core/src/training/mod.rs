//! Supervised training, offline validation, the multi-trial study and the
//! experiment grids.

mod grid;
mod manifest;
mod trace;
mod trial;

pub use grid::{
    run_experiment_grid, CellResult, CorpusSource, ExperimentGrid, GridCell, GridOutcome, TableLayout,
};
pub use manifest::{content_hash, RunManifest};
pub use trace::{trace_comparison, trace_rows, TraceRow};
pub use trial::{multi_trial, MultiTrialResult};

use crate::controllers::{build_controller, Batch, ControllerParams, ControllerSpec, Regularization, DROPOUT_P};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{check_dropout_p, radam_step, Matrix, Mode, RadamState, RngState};
use crate::signals::NormStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout_p: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 512,
            lr: 0.001,
            dropout_p: DROPOUT_P,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} invalid", self.lr)));
        }
        check_dropout_p(self.dropout_p)?;
        Ok(())
    }

    /// `epochs=… batch=… lr=… dropout=… seed=…` echo line.
    pub fn summary(&self) -> String {
        format!(
            "epochs={} batch={} lr={} dropout={} seed={} shuffle={}",
            self.epochs, self.batch_size, self.lr, self.dropout_p, self.seed, self.shuffle
        )
    }
}

/// Per-epoch losses. `val` is empty when training ran without a validation set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    /// Sample-weighted mean of the train-mode minibatch losses.
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (e, t) in self.train.iter().enumerate() {
            let v = self.val.get(e).map_or_else(String::new, |v| v.to_string());
            out.push_str(&format!("{},{t},{v}\n", e + 1));
        }
        out
    }
}

/// Whole dataset in network space for one spec and normalization.
pub fn dataset_batch(spec: &ControllerSpec, norm: Option<&NormStats>, data: &Dataset) -> Result<Batch> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let ch = spec.input_channels()?;
    let att = spec.attention_channels()?;
    let n = data.len();
    let mut s = Vec::with_capacity(n * ch.len());
    let mut a = Vec::with_capacity(n * att.as_ref().map_or(0, Vec::len));
    let mut u = Vec::with_capacity(n * 3);
    for smp in &data.samples {
        let z = norm.map_or(smp.obs, |st| st.normalize(&smp.obs));
        s.extend(ch.iter().map(|&c| z.0[c]));
        if let Some(ac) = &att {
            a.extend(ac.iter().map(|&c| z.0[c]));
        }
        u.extend(smp.u.to_array());
    }
    Ok(Batch {
        s: Matrix::from_vec(n, ch.len(), s)?,
        s_att: att.map(|ac| Matrix::from_vec(n, ac.len(), a)).transpose()?,
        u: Matrix::from_vec(n, 3, u)?,
    })
}

fn gather(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut v = Vec::with_capacity(rows.len() * m.cols());
    for &r in rows {
        v.extend_from_slice(m.row_slice(r));
    }
    Matrix::from_vec(rows.len(), m.cols(), v).expect("gathered rows")
}

fn sub_batch(b: &Batch, rows: &[usize]) -> Batch {
    Batch {
        s: gather(&b.s, rows),
        s_att: b.s_att.as_ref().map(|a| gather(a, rows)),
        u: gather(&b.u, rows),
    }
}

/// Trains a fresh controller. Inputs are z-scored with the training set's
/// statistics, which are stored in the returned parameters.
pub fn train(spec: ControllerSpec, dataset: &Dataset, config: &TrainConfig) -> Result<(ControllerParams, LossCurve)> {
    train_with_validation(spec, dataset, None, config)
}

/// As [`train`], additionally recording the eval-mode loss on `val` after every epoch.
pub fn train_with_validation(
    spec: ControllerSpec,
    dataset: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(ControllerParams, LossCurve)> {
    spec.validate()?;
    config.validate()?;
    let root = RngState::new(config.seed);
    let mut params = build_controller(spec, &mut root.derive(1))?;
    params.norm = Some(dataset.norm_stats.clone());
    let data = dataset_batch(&spec, params.norm.as_ref(), dataset)?;
    let val_batch = val
        .map(|v| dataset_batch(&spec, params.norm.as_ref(), v))
        .transpose()?;

    let mut shuffle_rng = root.derive(2);
    let mut dropout_rng = root.derive(3);
    let mut opt: Vec<RadamState> = params.param_sets().into_iter().map(RadamState::new).collect();
    let n = dataset.len();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = LossCurve::default();
    for epoch in 0..config.epochs {
        if config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for rows in order.chunks(bs) {
            let batch = sub_batch(&data, rows);
            params.zero_grad();
            let mut reg = Regularization {
                mode: Mode::Train,
                p: config.dropout_p,
                rng: Some(&mut dropout_rng),
            };
            let loss = params.loss_and_grad(&batch, &mut reg)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            total += loss * rows.len() as f64;
            for (set, st) in params.param_sets_mut().into_iter().zip(&mut opt) {
                radam_step(set, st, config.lr)?;
            }
        }
        curve.train.push(total / n as f64);
        if let Some(vb) = &val_batch {
            curve.val.push(params.controller_loss(vb)?);
        }
        log::debug!("epoch {} train {:.6e}", epoch + 1, curve.train[epoch]);
    }
    Ok((params, curve))
}

/// Eval-mode MSE of `params` over `val`, using the parameters' own normalization.
pub fn validate(params: &ControllerParams, val: &Dataset) -> Result<f64> {
    let batch = dataset_batch(&params.spec, params.norm.as_ref(), val)?;
    params.controller_loss(&batch)
}
