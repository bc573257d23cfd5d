use super::*;
use crate::dataset::{build_dataset, single_action_fraction, DatasetSpec, SINGLE_ACTION_EPSILON};
use crate::error::Result;
use crate::numerics::RngState;
use crate::signals::{ControlVector, ExtendedSensorVector};
use proptest::prelude::*;

fn quiet() -> ConditionProfile {
    ConditionProfile::summer().without_noise()
}

#[test]
fn zero_input_is_a_fixed_point() {
    let cond = quiet();
    let s = LoaderState::at_distance(3.0);
    assert_eq!(step(&s, ControlVector::ZERO, &cond, CONTROL_DT).unwrap(), s);
    // also inside the pile with a standing load
    let mut inside = LoaderState::at_distance(-0.4);
    inside.internal_load = pile_load(0.4, inside.theta2, &cond);
    assert_eq!(step(&inside, ControlVector::ZERO, &cond, CONTROL_DT).unwrap(), inside);
}

#[test]
fn gas_moves_toward_pile() {
    let s = LoaderState::at_distance(3.0);
    let n = step(&s, ControlVector::new(0.0, 0.0, 0.8), &quiet(), CONTROL_DT).unwrap();
    assert!(n.x < s.x);
    assert!(n.v > 0.0);
}

#[test]
fn step_rejects_bad_input() {
    let s = LoaderState::at_distance(1.0);
    assert!(step(&s, ControlVector::new(f64::NAN, 0.0, 0.0), &quiet(), 0.1).is_err());
    assert!(step(&s, ControlVector::ZERO, &quiet(), 0.0).is_err());
}

#[test]
fn angles_clamped_to_limits() {
    let mut s = LoaderState::at_distance(1.0);
    for _ in 0..50 {
        s = step(&s, ControlVector::new(1.0, -1.0, 0.0), &quiet(), 1.0).unwrap();
    }
    assert_eq!((s.theta1, s.theta2), (THETA1_LIMITS[1], THETA2_LIMITS[0]));
}

#[test]
fn idle_sensor_baselines() {
    let s = LoaderState::at_distance(2.0);
    let z = sense_clean(&s, &ConditionProfile::summer());
    assert_eq!((z.p_d(), z.p_t()), (20.0, 40.0));
    let mut a = RngState::new(1);
    let mut b = RngState::new(2);
    assert_eq!(sense(&s, &quiet(), &mut a), sense(&s, &quiet(), &mut b));
}

#[test]
fn slip_scales_drive_pressure_only() {
    let mut s = LoaderState::at_distance(-0.5);
    s.v = 0.3;
    s.theta1 = 0.4;
    s.internal_load = 1.7;
    let summer = sense_clean(&s, &ConditionProfile::summer());
    let ice = ConditionProfile::winter_ice();
    let winter = sense_clean(&s, &ice);
    assert_eq!(winter.p_d(), summer.p_d() * (1.0 - ice.slip));
    assert_eq!(winter.p_t().to_bits(), summer.p_t().to_bits());
}

#[test]
fn expert_approaches_when_far() {
    let mut phase = Phase::Approach;
    let obs = sense_clean(&LoaderState::at_distance(4.0), &quiet());
    let u = scripted_expert(&obs, &mut phase, &ExpertParams::default());
    assert_eq!((u.boom, u.bucket), (0.0, 0.0));
    assert!(u.gas > 0.0);
    assert_eq!(phase, Phase::Approach);
}

#[test]
fn expert_succeeds_in_summer() {
    let mut e = ScriptedExpert::new(ExpertParams::default());
    let cond = ConditionProfile::summer();
    let (rate, results) =
        success_rate_detailed(&mut e, &cond, 30, RolloutConfig::default(), &RngState::new(10)).unwrap();
    assert_eq!(rate, 100.0);
    assert!(results.iter().all(|r| r.termination == Termination::Filled && r.final_fill() >= FULL_FILL));
}

#[test]
fn zero_policy_stalls() {
    let r = rollout(&mut ZeroPolicy, &ConditionProfile::summer(), RolloutConfig::default(), &mut RngState::new(1))
        .unwrap();
    assert_eq!(r.termination, Termination::Stalled);
    assert_eq!(r.steps, STALL_STEPS);
    assert!(!r.success);
}

/// Scripted command sequences for the failure modes.
struct Script(fn(&ExtendedSensorVector) -> ControlVector);

impl Policy for Script {
    fn act(&mut self, obs: &ExtendedSensorVector, _: f64) -> Result<ControlVector> {
        Ok((self.0)(obs))
    }
}

#[test]
fn never_raising_the_boom_fails() {
    let mut p = Script(|s| {
        if s.p_t() < 100.0 && s.theta2() < -0.1 {
            ControlVector::new(0.0, 0.0, 0.9)
        } else {
            ControlVector::new(0.0, 1.0, 0.0)
        }
    });
    let r = rollout(&mut p, &quiet(), RolloutConfig::default(), &mut RngState::new(3)).unwrap();
    assert!(r.final_fill() <= 0.4 + 1e-12);
    assert!(!r.success);
}

#[test]
fn early_boom_rise_fails() {
    let mut p = Script(|s| {
        if s.theta1() < 1.15 {
            ControlVector::new(1.0, 0.0, 0.0)
        } else if s.p_t() < 100.0 && s.theta2() < -0.1 {
            ControlVector::new(0.0, 0.0, 0.9)
        } else {
            ControlVector::new(0.0, 1.0, 0.0)
        }
    });
    let r = rollout(&mut p, &quiet(), RolloutConfig::default(), &mut RngState::new(3)).unwrap();
    assert!(!r.success, "fill {}", r.final_fill());
}

/// Succeeds on the first `k` rollouts, then does nothing.
struct FirstK {
    k: usize,
    seen: usize,
    expert: ScriptedExpert,
}

impl Policy for FirstK {
    fn reset(&mut self) {
        self.seen += 1;
        self.expert.reset();
    }
    fn act(&mut self, obs: &ExtendedSensorVector, dt: f64) -> Result<ControlVector> {
        if self.seen <= self.k {
            Ok(self.expert.act(obs, dt))
        } else {
            Ok(ControlVector::ZERO)
        }
    }
}

#[test]
fn success_rate_is_a_percentage() {
    let mut p = FirstK {
        k: 12,
        seen: 0,
        expert: ScriptedExpert::new(ExpertParams::default()),
    };
    let rate = success_rate(&mut p, &ConditionProfile::summer(), 15, RolloutConfig::default(), &RngState::new(4))
        .unwrap();
    assert_eq!(rate, 80.0);
    assert!(success_rate(&mut ZeroPolicy, &quiet(), 0, RolloutConfig::default(), &RngState::new(4)).is_err());
}

#[test]
fn success_rate_deterministic() {
    let cond = ConditionProfile::winter_snow();
    let run = || {
        let mut e = ScriptedExpert::new(ExpertParams::default());
        success_rate_detailed(&mut e, &cond, 5, RolloutConfig::default(), &RngState::new(8))
            .unwrap()
            .1
            .iter()
            .map(|r| r.trajectory.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn demonstration_corpus() {
    let cfg = DemoConfig {
        n: 18,
        rate_hz: 100.0,
        full_fraction: 13.0 / 18.0,
        ..Default::default()
    };
    let cond = ConditionProfile::summer();
    let demos = generate_demonstrations(&cfg, &cond, &mut RngState::new(5)).unwrap();
    assert_eq!(demos, generate_demonstrations(&cfg, &cond, &mut RngState::new(5)).unwrap());
    assert_eq!(demos.iter().filter(|d| d.final_fill() >= 0.99).count(), 13);
    for d in &demos {
        d.validate().unwrap();
        assert!(d.records.windows(2).all(|w| w[1].fill >= w[0].fill));
    }
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    assert!(single_action_fraction(&ds, SINGLE_ACTION_EPSILON) >= 0.8);
    assert!(generate_demonstrations(&DemoConfig { n: 0, ..cfg }, &cond, &mut RngState::new(5)).is_err());
}

#[test]
fn profiles_round_trip_and_validate() {
    for name in ConditionProfile::BUILTIN {
        let p = ConditionProfile::builtin(name).unwrap();
        p.validate().unwrap();
        assert_eq!(ConditionProfile::from_toml(&p.to_toml()).unwrap(), p);
        assert_eq!(p.slip == 0.0, name == "summer");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.toml");
    let mut p = ConditionProfile::winter_ice();
    p.name = "custom".into();
    p.save(&path).unwrap();
    assert_eq!(ConditionProfile::resolve(path.to_str().unwrap()).unwrap(), p);
    let bad = p.to_toml().replace("slip = 0.6", "slip = 1.0");
    assert!(ConditionProfile::from_toml(&bad).is_err());
    assert!(ConditionProfile::builtin("autumn").is_err());
}

fn arb_control() -> impl Strategy<Value = ControlVector> {
    (-1.0f64..=1.0, -1.0f64..=1.0, -1.0f64..=1.0).prop_map(|(a, b, c)| ControlVector::new(a, b, c))
}

/// Random commands for a fixed number of steps.
struct Replay(Vec<ControlVector>, usize);

impl Policy for Replay {
    fn reset(&mut self) {
        self.1 = 0;
    }
    fn act(&mut self, _: &ExtendedSensorVector, _: f64) -> Result<ControlVector> {
        self.1 += 1;
        Ok(self.0[(self.1 - 1) % self.0.len()])
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fill_monotone_and_bounded(x0 in -1.0f64..5.0, us in prop::collection::vec(arb_control(), 1..80)) {
        let cond = ConditionProfile::winter_snow();
        let mut s = LoaderState::at_distance(x0);
        for u in us {
            let n = step(&s, u, &cond, CONTROL_DT).unwrap();
            prop_assert!(n.fill >= s.fill);
            prop_assert!((0.0..=1.0).contains(&n.fill));
            prop_assert!(n.v >= 0.0 && n.internal_load >= 0.0);
            prop_assert!((THETA1_LIMITS[0]..=THETA1_LIMITS[1]).contains(&n.theta1));
            prop_assert!((THETA2_LIMITS[0]..=THETA2_LIMITS[1]).contains(&n.theta2));
            s = n;
        }
    }

    #[test]
    fn slip_monotone_in_drive_pressure(load in 0.0f64..5.0, v in 0.0f64..1.5, a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let mut s = LoaderState::at_distance(-0.2);
        s.internal_load = load;
        s.v = v;
        let mut lo = ConditionProfile::summer();
        let mut hi = ConditionProfile::summer();
        lo.slip = a.min(b);
        hi.slip = a.max(b);
        let (x, y) = (sense_clean(&s, &lo), sense_clean(&s, &hi));
        prop_assert!(y.p_d() <= x.p_d());
        prop_assert_eq!(y.p_t().to_bits(), x.p_t().to_bits());
    }

    #[test]
    fn rollout_replays_and_scores_consistently(
        us in prop::collection::vec(arb_control(), 1..20),
        max_steps in 1usize..150,
        seed in any::<u64>(),
    ) {
        let cond = ConditionProfile::summer();
        let cfg = RolloutConfig { max_steps, ..Default::default() };
        let r = rollout(&mut Replay(us, 0), &cond, cfg, &mut RngState::new(seed)).unwrap();
        prop_assert!(r.steps <= max_steps);
        prop_assert_eq!(r.steps, r.trajectory.len());
        // replay the stored commands through the deterministic dynamics
        let mut s = r.trajectory[0].state;
        for (k, p) in r.trajectory.iter().enumerate() {
            prop_assert_eq!(p.state, s);
            s = step(&s, p.u, &cond, cfg.dt).unwrap();
            prop_assert!(k + 1 == r.steps || s.fill < FULL_FILL);
        }
        prop_assert_eq!(s, r.final_state);
        prop_assert_eq!(r.success, s.fill >= 0.5);
    }
}
