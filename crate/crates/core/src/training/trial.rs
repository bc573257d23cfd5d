use super::{train_with_validation, LossCurve, TrainConfig};
use crate::controllers::ControllerSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrialResult {
    pub seeds: Vec<u64>,
    pub curves: Vec<LossCurve>,
    /// Per-epoch mean of the validation loss over trials.
    pub mean: Vec<f64>,
    /// Per-epoch sample standard deviation (n - 1) of the validation loss.
    pub std: Vec<f64>,
}

impl MultiTrialResult {
    pub fn from_curves(seeds: Vec<u64>, curves: Vec<LossCurve>) -> Result<Self> {
        let n = curves.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("multi-trial needs at least 2 trials, got {n}")));
        }
        let epochs = curves[0].val.len();
        if curves.iter().any(|c| c.val.len() != epochs) {
            return Err(Error::InvalidArgument("validation curves differ in length".into()));
        }
        let mut mean = vec![0.0; epochs];
        let mut std = vec![0.0; epochs];
        for e in 0..epochs {
            let m = curves.iter().map(|c| c.val[e]).sum::<f64>() / n as f64;
            let ss: f64 = curves.iter().map(|c| (c.val[e] - m).powi(2)).sum();
            mean[e] = m;
            std[e] = (ss / (n - 1) as f64).sqrt();
        }
        Ok(Self {
            seeds,
            curves,
            mean,
            std,
        })
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(f64::NAN)
    }

    /// `epoch,mean_val_loss,std_val_loss,trial_<seed>…`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_val_loss,std_val_loss");
        for s in &self.seeds {
            out.push_str(&format!(",trial_{s}"));
        }
        out.push('\n');
        for e in 0..self.mean.len() {
            out.push_str(&format!("{},{},{}", e + 1, self.mean[e], self.std[e]));
            for c in &self.curves {
                out.push_str(&format!(",{}", c.val[e]));
            }
            out.push('\n');
        }
        out
    }
}

/// Independent trainings differing only in seed, each validated on `val` after every epoch.
pub fn multi_trial(
    spec: ControllerSpec,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<MultiTrialResult> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-trial needs at least 2 trials, got {}",
            seeds.len()
        )));
    }
    let mut curves = Vec::with_capacity(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = TrainConfig { seed, ..*config };
        let (_, curve) = train_with_validation(spec, train_set, Some(val_set), &cfg)?;
        log::info!(
            "{} trial {}/{} seed {seed}: final val {:.6e}",
            spec.kind,
            i + 1,
            seeds.len(),
            curve.val.last().copied().unwrap_or(f64::NAN)
        );
        curves.push(curve);
    }
    MultiTrialResult::from_curves(seeds.to_vec(), curves)
}
