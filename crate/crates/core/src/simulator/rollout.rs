use super::dynamics::{sense, step, LoaderState, CONTROL_DT, FULL_FILL};
use super::expert::{ExpertParams, ScriptedExpert};
use super::ConditionProfile;
use crate::controllers::ControllerParams;
use crate::dataset::{Demonstration, Record};
use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::signals::{ControlVector, ExtendedSensorVector};

/// Anything that maps observations to commands in closed loop.
pub trait Policy {
    fn reset(&mut self) {}
    fn act(&mut self, obs: &ExtendedSensorVector, dt: f64) -> Result<ControlVector>;
}

impl Policy for ControllerParams {
    fn act(&mut self, obs: &ExtendedSensorVector, _dt: f64) -> Result<ControlVector> {
        Ok(ControllerParams::act(self, obs)?.u)
    }
}

impl Policy for ScriptedExpert {
    fn reset(&mut self) {
        ScriptedExpert::reset(self);
    }

    fn act(&mut self, obs: &ExtendedSensorVector, dt: f64) -> Result<ControlVector> {
        Ok(ScriptedExpert::act(self, obs, dt))
    }
}

/// Always outputs zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &ExtendedSensorVector, _: f64) -> Result<ControlVector> {
        Ok(ControlVector::ZERO)
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn reset(&mut self) {
        (**self).reset();
    }
    fn act(&mut self, obs: &ExtendedSensorVector, dt: f64) -> Result<ControlVector> {
        (**self).act(obs, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Filled,
    Timeout,
    Stalled,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Filled => "filled",
            Termination::Timeout => "timeout",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub state: LoaderState,
    pub obs: ExtendedSensorVector,
    pub u: ControlVector,
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trajectory: Vec<TrajectoryPoint>,
    /// State after the last applied command.
    pub final_state: LoaderState,
    pub success: bool,
    pub steps: usize,
    pub termination: Termination,
}

impl RolloutResult {
    pub fn final_fill(&self) -> f64 {
        self.final_state.fill
    }
}

/// Half a bucket counts as a successful scoop.
pub const SUCCESS_FILL: f64 = 0.5;
/// Consecutive unchanged steps before a rollout counts as stalled.
pub const STALL_STEPS: usize = 30;
/// Largest state change still counted as "unchanged".
pub const STALL_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_STEPS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub max_steps: usize,
    pub dt: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            dt: CONTROL_DT,
        }
    }
}

/// Closed loop from a random pile distance: sense, act, step.
pub fn rollout(
    policy: &mut dyn Policy,
    cond: &ConditionProfile,
    config: RolloutConfig,
    rng: &mut RngState,
) -> Result<RolloutResult> {
    let [lo, hi] = cond.pile_distance_range;
    let start = LoaderState::at_distance(rng.uniform_range(lo, hi));
    rollout_from(policy, cond, start, config, rng)
}

pub fn rollout_from(
    policy: &mut dyn Policy,
    cond: &ConditionProfile,
    start: LoaderState,
    config: RolloutConfig,
    rng: &mut RngState,
) -> Result<RolloutResult> {
    policy.reset();
    let mut state = start;
    let mut trajectory = Vec::with_capacity(config.max_steps);
    let mut still = 0;
    let mut termination = Termination::Timeout;
    while trajectory.len() < config.max_steps {
        let obs = sense(&state, cond, rng);
        let u = policy.act(&obs, config.dt)?;
        let next = step(&state, u, cond, config.dt)?;
        trajectory.push(TrajectoryPoint { state, obs, u });
        still = if next.max_abs_diff(&state) < STALL_TOLERANCE { still + 1 } else { 0 };
        state = next;
        if state.fill >= FULL_FILL {
            termination = Termination::Filled;
            break;
        }
        if still >= STALL_STEPS {
            termination = Termination::Stalled;
            break;
        }
    }
    Ok(RolloutResult {
        steps: trajectory.len(),
        trajectory,
        success: state.fill >= SUCCESS_FILL,
        final_state: state,
        termination,
    })
}

/// Percentage of `n` rollouts ending with at least half a bucket.
/// Rollout `i` draws from `rng.derive(i)`.
pub fn success_rate(
    policy: &mut dyn Policy,
    cond: &ConditionProfile,
    n: usize,
    config: RolloutConfig,
    rng: &RngState,
) -> Result<f64> {
    Ok(success_rate_detailed(policy, cond, n, config, rng)?.0)
}

pub fn success_rate_detailed(
    policy: &mut dyn Policy,
    cond: &ConditionProfile,
    n: usize,
    config: RolloutConfig,
    rng: &RngState,
) -> Result<(f64, Vec<RolloutResult>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("success rate needs at least one rollout".into()));
    }
    let results = (0..n)
        .map(|i| rollout(policy, cond, config, &mut rng.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let ok = results.iter().filter(|r| r.success).count();
    Ok((100.0 * ok as f64 / n as f64, results))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub n: usize,
    pub rate_hz: f64,
    /// Fraction of demonstrations driven to a full bucket; the rest stop early.
    pub full_fraction: f64,
    pub max_duration_s: f64,
    /// Range of the fill at which a partial demonstration stops.
    pub partial_fill_range: [f64; 2],
    /// Jitter the expert's habits per demonstration.
    pub perturb_expert: bool,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n: 72,
            rate_hz: 500.0,
            full_fraction: 52.0 / 72.0,
            max_duration_s: 60.0,
            partial_fill_range: [0.3, 0.9],
            perturb_expert: true,
        }
    }
}

/// Expert demonstrations logged every tick at `rate_hz`. Exactly
/// `round(n * full_fraction)` are driven to a full bucket.
pub fn generate_demonstrations(
    config: &DemoConfig,
    cond: &ConditionProfile,
    rng: &mut RngState,
) -> Result<Vec<Demonstration>> {
    if config.n == 0 {
        return Err(Error::InvalidArgument("need at least one demonstration".into()));
    }
    if !(config.rate_hz > 0.0) || !(0.0..=1.0).contains(&config.full_fraction) {
        return Err(Error::InvalidArgument(format!(
            "bad demonstration config (rate {} Hz, full fraction {})",
            config.rate_hz, config.full_fraction
        )));
    }
    cond.validate()?;
    let n_full = (config.n as f64 * config.full_fraction).round() as usize;
    let mut full: Vec<bool> = (0..config.n).map(|i| i < n_full).collect();
    rng.shuffle(&mut full);
    let width = config.n.to_string().len().max(3);
    full.iter()
        .enumerate()
        .map(|(i, &is_full)| {
            let mut r = rng.derive(i as u64);
            let stop = if is_full {
                FULL_FILL
            } else {
                let [a, b] = config.partial_fill_range;
                r.uniform_range(a, b)
            };
            let mut d = record_demonstration(config, cond, stop, &mut r)?;
            d.id = format!("demo_{i:0width$}");
            Ok(d)
        })
        .collect()
}

fn record_demonstration(
    config: &DemoConfig,
    cond: &ConditionProfile,
    stop_fill: f64,
    rng: &mut RngState,
) -> Result<Demonstration> {
    let dt = 1.0 / config.rate_hz;
    let params = if config.perturb_expert {
        ExpertParams::perturbed(rng)
    } else {
        ExpertParams::default()
    };
    let mut expert = ScriptedExpert::new(params);
    let [lo, hi] = cond.pile_distance_range;
    let mut state = LoaderState::at_distance(rng.uniform_range(lo, hi));
    let max_ticks = (config.max_duration_s * config.rate_hz).ceil() as usize;
    let mut records = Vec::new();
    for i in 0..max_ticks {
        let obs = sense(&state, cond, rng);
        let u = expert.act(&obs, dt);
        records.push(Record {
            t: i as f64 / config.rate_hz,
            obs,
            u,
            fill: state.fill,
        });
        if state.fill >= stop_fill {
            break;
        }
        state = step(&state, u, cond, dt)?;
    }
    Ok(Demonstration {
        id: String::new(),
        sample_rate_hz: config.rate_hz,
        records,
    })
}
