//! Desk-scale wheel loader in front of a pile.
//!
//! The model is deliberately minimal: a 1-D approach, boom and bucket joints,
//! and a scalar bucket fill. Pushing into the pile builds an internal load that
//! shows up in the drive and telescope pressures. Wheel slip scales the drive
//! pressure reading by `1 - slip` and leaves the telescope pressure alone.
//!
//! Filling needs penetration and bucket curl while the boom is still low, and
//! the bucket only retains a full load once the boom is raised. Never raising
//! the boom caps the fill at 0.4; raising it too early starves the curl.

mod dynamics;
mod expert;
mod profile;
mod rollout;

pub use dynamics::{
    curl_efficiency, curl_penalty, fill_capacity, pile_load, sense, sense_clean, step, LoaderState, BOOM_RATE,
    BUCKET_RATE, CONTROL_DT, FULL_FILL, MAX_SUBSTEP, THETA1_LIMITS, THETA2_LIMITS, V_MAX,
};
pub use expert::{scripted_expert, ExpertParams, Phase, ScriptedExpert};
pub use profile::ConditionProfile;
pub use rollout::{
    generate_demonstrations, rollout, rollout_from, success_rate, success_rate_detailed, DemoConfig, Policy,
    RolloutConfig, RolloutResult, Termination, TrajectoryPoint, ZeroPolicy, DEFAULT_MAX_STEPS, STALL_STEPS,
    STALL_TOLERANCE, SUCCESS_FILL,
};

#[cfg(test)]
mod tests;
