use super::ConditionProfile;
use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::signals::{ControlVector, ExtendedSensorVector, EXTENDED_DIM};

pub const THETA1_LIMITS: [f64; 2] = [0.0, 1.2];
pub const THETA2_LIMITS: [f64; 2] = [-0.4, 1.0];
pub const THETA1_START: f64 = 0.0;
pub const THETA2_START: f64 = -0.2;

/// Joint speeds at full command (rad/s).
pub const BOOM_RATE: f64 = 0.3;
pub const BUCKET_RATE: f64 = 0.5;
pub const V_MAX: f64 = 1.5;
/// Forward acceleration at full throttle (m/s²).
pub const DRIVE_GAIN: f64 = 1.5;
/// Deceleration per unit of pile load.
pub const PILE_RESISTANCE: f64 = 1.5;
/// Fill per radian of bucket curl at full depth with the boom down.
pub const CURL_FILL: f64 = 1.0;
/// Fill per radian of boom raise once the bucket holds material.
pub const LIFT_FILL: f64 = 0.7;
/// Penetration at which filling reaches full efficiency (m).
pub const FULL_DEPTH: f64 = 0.3;
pub const LOADED: f64 = 0.05;
/// Fill counted as a full bucket.
pub const FULL_FILL: f64 = 0.99;
/// Largest integration sub-step (s).
pub const MAX_SUBSTEP: f64 = 0.01;
pub const CONTROL_DT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoaderState {
    /// Distance to the pile face; negative once inside the pile.
    pub x: f64,
    pub v: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub fill: f64,
    pub internal_load: f64,
}

impl LoaderState {
    pub fn at_distance(x: f64) -> Self {
        Self {
            x,
            v: 0.0,
            theta1: THETA1_START,
            theta2: THETA2_START,
            fill: 0.0,
            internal_load: 0.0,
        }
    }

    pub fn depth(&self) -> f64 {
        (-self.x).max(0.0)
    }

    /// Largest per-field difference, used for stall detection.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.x - other.x,
            self.v - other.v,
            self.theta1 - other.theta1,
            self.theta2 - other.theta2,
            self.fill - other.fill,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

fn unit(v: f64, [lo, hi]: [f64; 2]) -> f64 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Curling harder makes the bucket harder to push.
pub fn curl_penalty(theta2: f64) -> f64 {
    1.0 + 0.5 * unit(theta2, THETA2_LIMITS)
}

/// Curl effectiveness drops as the boom lifts the bucket out of the pile.
pub fn curl_efficiency(theta1: f64) -> f64 {
    (1.0 - theta1 / THETA1_LIMITS[1]).clamp(0.0, 1.0)
}

/// Material the bucket can retain at boom angle `theta1`.
pub fn fill_capacity(theta1: f64) -> f64 {
    0.4 + 0.6 * (theta1 / 0.8).clamp(0.0, 1.0)
}

pub fn pile_load(depth: f64, theta2: f64, cond: &ConditionProfile) -> f64 {
    cond.material_stiffness * depth * curl_penalty(theta2)
}

/// Advances the loader by `dt` seconds, sub-stepping at most [`MAX_SUBSTEP`].
pub fn step(state: &LoaderState, u: ControlVector, cond: &ConditionProfile, dt: f64) -> Result<LoaderState> {
    if !u.is_finite() {
        return Err(Error::NonFinite("control vector"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    let u = u.clamped();
    let n = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = *state;
    for _ in 0..n {
        let load = pile_load(s.depth(), s.theta2, cond);
        let accel = DRIVE_GAIN * u.gas - cond.surface_drag * s.v - PILE_RESISTANCE * load;
        s.v = (s.v + h * accel).clamp(0.0, V_MAX);
        s.x -= h * s.v;

        let w1 = BOOM_RATE * u.boom;
        let w2 = BUCKET_RATE * u.bucket;
        let t1 = (s.theta1 + h * w1).clamp(THETA1_LIMITS[0], THETA1_LIMITS[1]);
        let t2 = (s.theta2 + h * w2).clamp(THETA2_LIMITS[0], THETA2_LIMITS[1]);
        let (d1, d2) = (t1 - s.theta1, t2 - s.theta2);

        let depth = s.depth();
        if depth > 0.0 {
            let reach = (depth / FULL_DEPTH).min(1.0);
            let mut gain = CURL_FILL * curl_efficiency(s.theta1) * d2.max(0.0);
            if s.fill > LOADED {
                gain += LIFT_FILL * d1.max(0.0);
            }
            let cap = fill_capacity(t1);
            if s.fill < cap {
                s.fill = (s.fill + reach * gain).min(cap);
            }
        }
        s.theta1 = t1;
        s.theta2 = t2;
        s.internal_load = pile_load(s.depth(), s.theta2, cond);
    }
    Ok(s)
}

/// Noise-free sensor model. `p_t` never sees `slip`.
pub fn sense_clean(state: &LoaderState, cond: &ConditionProfile) -> ExtendedSensorVector {
    let load = state.internal_load;
    let p_d = (20.0 + 30.0 * state.v + 120.0 * load) * (1.0 - cond.slip);
    let p_t = 40.0 + 90.0 * load + 15.0 * state.theta1;
    let p_l = 30.0 + 80.0 * state.fill + 20.0 * load;
    let p_b = 20.0 + 50.0 * state.fill + 40.0 * load * unit(state.theta2, THETA2_LIMITS);
    ExtendedSensorVector([state.theta1, state.theta2, p_d, p_t, p_l, p_b, state.v / V_MAX])
}

pub fn sense(state: &LoaderState, cond: &ConditionProfile, rng: &mut RngState) -> ExtendedSensorVector {
    let mut s = sense_clean(state, cond);
    for c in 0..EXTENDED_DIM {
        let sd = cond.sensor_noise_std[c];
        if sd > 0.0 {
            s.0[c] += sd * rng.normal();
        }
    }
    s
}
