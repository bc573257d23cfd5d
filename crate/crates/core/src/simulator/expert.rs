use crate::numerics::RngState;
use crate::signals::{ControlVector, ExtendedSensorVector};

/// Phases of the scripted operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Curl(usize),
    Lift(usize),
    Done,
}

/// Tunable operator habits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub gas: f64,
    /// Telescope pressure (bar) read as impact with the pile.
    pub impact_p_t: f64,
    /// Bucket angle targets for the successive curl strokes.
    pub curl_targets: [f64; 3],
    /// Boom angle targets for the successive lifts.
    pub lift_targets: [f64; 3],
    pub magnitude: f64,
    /// Command smoothing time constant (s).
    pub tau: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            gas: 0.9,
            impact_p_t: 100.0,
            curl_targets: [0.25, 0.6, 0.95],
            lift_targets: [0.3, 0.6, 0.95],
            magnitude: 1.0,
            tau: 0.08,
        }
    }
}

impl ExpertParams {
    /// Per-demonstration variation around the defaults.
    pub fn perturbed(rng: &mut RngState) -> Self {
        let d = Self::default();
        let mut j = |v: f64, w: f64| v + rng.uniform_range(-w, w);
        Self {
            gas: j(d.gas, 0.1),
            impact_p_t: j(d.impact_p_t, 10.0),
            curl_targets: [j(0.25, 0.05), j(0.6, 0.05), j(0.95, 0.03)],
            lift_targets: [j(0.3, 0.05), j(0.6, 0.05), j(0.97, 0.03)],
            magnitude: j(0.925, 0.075),
            tau: d.tau,
        }
    }
}

/// Approach until the telescope pressure shows impact, then alternate bucket
/// curls and boom lifts, one joint at a time.
#[derive(Debug, Clone)]
pub struct ScriptedExpert {
    pub params: ExpertParams,
    pub phase: Phase,
    out: ControlVector,
}

impl ScriptedExpert {
    pub fn new(params: ExpertParams) -> Self {
        Self {
            params,
            phase: Phase::Approach,
            out: ControlVector::ZERO,
        }
    }

    pub fn reset(&mut self) {
        self.phase = Phase::Approach;
        self.out = ControlVector::ZERO;
    }

    fn advance(&mut self, s: &ExtendedSensorVector) {
        let p = &self.params;
        loop {
            let next = match self.phase {
                Phase::Approach if s.p_t() > p.impact_p_t => Phase::Curl(0),
                Phase::Curl(k) if s.theta2() >= p.curl_targets[k] => Phase::Lift(k),
                Phase::Lift(k) if s.theta1() >= p.lift_targets[k] => {
                    if k + 1 < p.curl_targets.len() {
                        Phase::Curl(k + 1)
                    } else {
                        Phase::Done
                    }
                }
                _ => return,
            };
            self.phase = next;
        }
    }

    /// Raw command of the current phase, before smoothing.
    pub fn target(&self) -> ControlVector {
        let m = self.params.magnitude;
        match self.phase {
            Phase::Approach => ControlVector::new(0.0, 0.0, self.params.gas),
            Phase::Curl(_) => ControlVector::new(0.0, m, 0.0),
            Phase::Lift(_) => ControlVector::new(m, 0.0, 0.0),
            Phase::Done => ControlVector::ZERO,
        }
    }

    pub fn act(&mut self, s: &ExtendedSensorVector, dt: f64) -> ControlVector {
        self.advance(s);
        let target = self.target().to_array();
        let alpha = 1.0 - (-dt / self.params.tau).exp();
        let mut out = self.out.to_array();
        for (o, t) in out.iter_mut().zip(target) {
            *o += alpha * (t - *o);
            // snap the tail so released joints read as inactive
            if t == 0.0 && o.abs() < 1e-3 {
                *o = 0.0;
            }
        }
        self.out = ControlVector::from_array(out);
        self.out
    }
}

/// Unsmoothed expert command for `s`, advancing the phase memory.
pub fn scripted_expert(s: &ExtendedSensorVector, phase: &mut Phase, params: &ExpertParams) -> ControlVector {
    let mut e = ScriptedExpert {
        params: params.clone(),
        phase: *phase,
        out: ControlVector::ZERO,
    };
    e.advance(s);
    *phase = e.phase;
    e.target()
}
