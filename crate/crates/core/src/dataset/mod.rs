//! Demonstrations and the training sets built from them.
//!
//! `D_I` keeps every demonstration at its native logging rate. `D_II` keeps
//! only demonstrations that end with a full bucket and decimates them to
//! 20 Hz (every k-th record, no averaging).

mod io;

pub use io::{
    load_demonstrations, read_dataset, read_demonstration, write_dataset, write_demonstration,
    DEMO_CSV_HEADER,
};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::signals::{ControlVector, ExtendedSensorVector, NormStats};

/// One logged tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub obs: ExtendedSensorVector,
    pub u: ControlVector,
    pub fill: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: String,
    pub sample_rate_hz: f64,
    pub records: Vec<Record>,
}

impl Demonstration {
    /// Bucket fill on the last record.
    pub fn final_fill(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.fill)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks time ordering, spacing against the sample rate, and control range.
    /// Errors carry the 1-based data row.
    pub fn validate(&self) -> Result<()> {
        let dt = 1.0 / self.sample_rate_hz;
        let err = |row: usize, msg: String| Error::Parse {
            path: self.id.clone().into(),
            row,
            msg,
        };
        for (i, r) in self.records.iter().enumerate() {
            if !r.obs.is_finite() || !r.u.is_finite() || !r.t.is_finite() || !r.fill.is_finite() {
                return Err(err(i + 1, "non-finite value".into()));
            }
            if !r.u.in_range() {
                return Err(err(i + 1, format!("control {:?} outside [-1, 1]", r.u.to_array())));
            }
            if !(0.0..=1.0).contains(&r.fill) {
                return Err(err(i + 1, format!("fill {} outside [0, 1]", r.fill)));
            }
            if i > 0 {
                let step = r.t - self.records[i - 1].t;
                if step <= 0.0 {
                    return Err(err(i + 1, format!("time not strictly increasing ({step} s step)")));
                }
                if (step - dt).abs() > 0.01 * dt {
                    return Err(err(
                        i + 1,
                        format!("time step {step} s inconsistent with {} Hz", self.sample_rate_hz),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Keeps records `0, k, 2k, …` with `k = sample_rate_hz / target_hz`.
pub fn decimate(demo: &Demonstration, target_hz: f64) -> Result<Demonstration> {
    let k = decimation_factor(demo.sample_rate_hz, target_hz)?;
    Ok(Demonstration {
        id: demo.id.clone(),
        sample_rate_hz: target_hz,
        records: demo.records.iter().step_by(k).cloned().collect(),
    })
}

pub fn decimation_factor(source_hz: f64, target_hz: f64) -> Result<usize> {
    if !(target_hz > 0.0) || target_hz > source_hz {
        return Err(Error::InvalidArgument(format!(
            "cannot decimate {source_hz} Hz to {target_hz} Hz"
        )));
    }
    let ratio = source_hz / target_hz;
    let k = ratio.round();
    if (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "{target_hz} Hz does not divide {source_hz} Hz (ratio {ratio})"
        )));
    }
    Ok(k as usize)
}

/// Demonstrations whose final fill reaches `threshold`.
pub fn filter_ideal(demos: &[Demonstration], threshold: f64) -> Vec<Demonstration> {
    demos
        .iter()
        .filter(|d| d.final_fill() >= threshold)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// All demonstrations at the native rate.
    DI,
    /// Ideal demonstrations only, decimated.
    DII,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::DI => "D_I",
            Variant::DII => "D_II",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DI => "d1",
            Variant::DII => "d2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "d1" | "di" => Ok(Variant::DI),
            "d2" | "dii" => Ok(Variant::DII),
            other => Err(Error::InvalidArgument(format!("unknown dataset variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub variant: Variant,
    pub ideal_fill_threshold: f64,
    /// Target rate for `D_II`; ignored for `D_I`.
    pub target_rate_hz: f64,
}

impl DatasetSpec {
    pub fn d1() -> Self {
        Self {
            variant: Variant::DI,
            ideal_fill_threshold: 0.99,
            target_rate_hz: 20.0,
        }
    }

    pub fn d2() -> Self {
        Self {
            variant: Variant::DII,
            ..Self::d1()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::DI => Self::d1(),
            Variant::DII => Self::d2(),
        }
    }
}

/// Observation-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub obs: ExtendedSensorVector,
    pub u: ControlVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub variant: Variant,
    /// Source demonstration ids with their sample ranges, in order.
    pub demos: Vec<(String, Range<usize>)>,
    pub norm_stats: NormStats,
}

impl Dataset {
    /// Builds from per-demonstration sample runs; stats are computed from exactly these samples.
    pub fn from_parts(variant: Variant, parts: Vec<(String, Vec<Sample>)>) -> Result<Self> {
        let mut samples = Vec::new();
        let mut demos = Vec::new();
        for (id, s) in parts {
            let start = samples.len();
            samples.extend(s);
            demos.push((id, start..samples.len()));
        }
        if samples.is_empty() {
            return Err(Error::Empty("dataset samples"));
        }
        let norm_stats = NormStats::from_samples(samples.iter().map(|s| &s.obs))?;
        Ok(Self {
            samples,
            variant,
            demos,
            norm_stats,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn demo_ids(&self) -> Vec<&str> {
        self.demos.iter().map(|(id, _)| id.as_str()).collect()
    }

    fn part(&self, i: usize) -> (String, Vec<Sample>) {
        let (id, r) = &self.demos[i];
        (id.clone(), self.samples[r.clone()].to_vec())
    }
}

pub fn build_dataset(demos: &[Demonstration], spec: &DatasetSpec) -> Result<Dataset> {
    if demos.is_empty() {
        return Err(Error::Empty("demonstrations"));
    }
    let selected: Vec<Demonstration> = match spec.variant {
        Variant::DI => demos.to_vec(),
        Variant::DII => filter_ideal(demos, spec.ideal_fill_threshold)
            .iter()
            .map(|d| decimate(d, spec.target_rate_hz))
            .collect::<Result<_>>()?,
    };
    let parts = selected
        .into_iter()
        .filter(|d| !d.is_empty())
        .map(|d| {
            let s = d.records.iter().map(|r| Sample { obs: r.obs, u: r.u }).collect();
            (d.id, s)
        })
        .collect();
    Dataset::from_parts(spec.variant, parts)
}

/// Fraction of samples with exactly one control component above `epsilon` in magnitude.
pub fn single_action_fraction(dataset: &Dataset, epsilon: f64) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let single = dataset
        .samples
        .iter()
        .filter(|s| s.u.active_count(epsilon) == 1)
        .count();
    single as f64 / dataset.len() as f64
}

/// Default activity threshold for [`single_action_fraction`].
pub const SINGLE_ACTION_EPSILON: f64 = 0.05;

/// Demonstration-level split: whole demonstrations go to one side.
pub fn split(dataset: &Dataset, val_fraction: f64, rng: &mut RngState) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {val_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.demos.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 demonstrations to split, have {n}"
        )));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    let build = |idx: &[usize]| Dataset::from_parts(dataset.variant, idx.iter().map(|&i| dataset.part(i)).collect());
    Ok((build(&train_idx)?, build(&val_idx)?))
}

/// Concatenates datasets of the same variant; stats are recomputed.
pub fn merge(sets: &[&Dataset]) -> Result<Dataset> {
    let variant = sets.first().ok_or(Error::Empty("datasets to merge"))?.variant;
    let parts = sets
        .iter()
        .flat_map(|d| (0..d.demos.len()).map(|i| d.part(i)))
        .collect();
    Dataset::from_parts(variant, parts)
}

#[cfg(test)]
mod tests;
