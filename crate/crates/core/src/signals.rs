//! Sensor and control signal vectors shared by every module.

use crate::error::{Error, Result};

/// Number of channels in an [`ExtendedSensorVector`].
pub const EXTENDED_DIM: usize = 7;

/// Channel names in storage order.
pub const CHANNEL_NAMES: [&str; EXTENDED_DIM] = ["theta1", "theta2", "p_d", "p_t", "p_l", "p_b", "a"];

pub const THETA1: usize = 0;
pub const THETA2: usize = 1;
pub const P_D: usize = 2;
pub const P_T: usize = 3;
pub const P_L: usize = 4;
pub const P_B: usize = 5;
pub const PUMP: usize = 6;

/// Channels of the additional attention signals `s'`.
pub const ATTENTION_EXTRA: [usize; 3] = [P_L, P_B, PUMP];

/// Full machine observation: boom and bucket angles (rad), drive, telescope,
/// boom and bucket pressures (bar), and the normalized HST pump angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExtendedSensorVector(pub [f64; EXTENDED_DIM]);

impl ExtendedSensorVector {
    pub fn theta1(&self) -> f64 {
        self.0[THETA1]
    }
    pub fn theta2(&self) -> f64 {
        self.0[THETA2]
    }
    pub fn p_d(&self) -> f64 {
        self.0[P_D]
    }
    pub fn p_t(&self) -> f64 {
        self.0[P_T]
    }
    pub fn p_l(&self) -> f64 {
        self.0[P_L]
    }
    pub fn p_b(&self) -> f64 {
        self.0[P_B]
    }
    pub fn pump(&self) -> f64 {
        self.0[PUMP]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Picks `channels` in order.
    pub fn select(&self, channels: &[usize]) -> Vec<f64> {
        channels.iter().map(|&c| self.0[c]).collect()
    }
}

/// Boom, bucket and throttle commands, each a normalized delta velocity in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlVector {
    pub boom: f64,
    pub bucket: f64,
    pub gas: f64,
}

impl ControlVector {
    pub const ZERO: ControlVector = ControlVector {
        boom: 0.0,
        bucket: 0.0,
        gas: 0.0,
    };

    pub fn new(boom: f64, bucket: f64, gas: f64) -> Self {
        Self { boom, bucket, gas }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.boom, self.bucket, self.gas]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn in_range(&self) -> bool {
        self.to_array().iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn clamped(self) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Self::new(c(self.boom), c(self.bucket), c(self.gas))
    }

    /// Number of components whose magnitude exceeds `epsilon`.
    pub fn active_count(&self, epsilon: f64) -> usize {
        self.to_array().iter().filter(|v| v.abs() > epsilon).count()
    }
}

/// Per-channel z-score statistics over the extended sensor vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: [f64; EXTENDED_DIM],
    pub std: [f64; EXTENDED_DIM],
}

/// Standard deviations below this are replaced by it (constant channels).
pub const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; EXTENDED_DIM],
            std: [1.0; EXTENDED_DIM],
        }
    }

    /// Population mean/std over the given observations, with [`STD_FLOOR`] applied.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a ExtendedSensorVector>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; EXTENDED_DIM];
        let rows: Vec<&ExtendedSensorVector> = samples.into_iter().collect();
        for s in &rows {
            n += 1;
            for (acc, v) in sum.iter_mut().zip(s.0) {
                *acc += v;
            }
        }
        if n == 0 {
            return Err(Error::Empty("normalization samples"));
        }
        let mean = sum.map(|s| s / n as f64);
        let mut var = [0.0; EXTENDED_DIM];
        for s in &rows {
            for c in 0..EXTENDED_DIM {
                let d = s.0[c] - mean[c];
                var[c] += d * d;
            }
        }
        let std = var.map(|v| (v / n as f64).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, s: &ExtendedSensorVector) -> ExtendedSensorVector {
        let mut out = [0.0; EXTENDED_DIM];
        for c in 0..EXTENDED_DIM {
            out[c] = (s.0[c] - self.mean[c]) / self.std[c];
        }
        ExtendedSensorVector(out)
    }
}
