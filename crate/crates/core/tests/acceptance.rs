//! End-to-end acceptance checks. Every criterion runs in sequence inside one
//! test so the timing budgets are measured on an otherwise idle core, and each
//! prints a single PASS/FAIL line to stderr.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use pilectl::controllers::{
    build_controller, encode_checkpoint, gradient_check, ControllerKind, ControllerParams, ControllerSpec,
};
use pilectl::dataset::{
    build_dataset, filter_ideal, single_action_fraction, DatasetSpec, Demonstration, SINGLE_ACTION_EPSILON,
};
use pilectl::numerics::RngState;
use pilectl::signals::{ExtendedSensorVector, EXTENDED_DIM};
use pilectl::simulator::{
    generate_demonstrations, sense, success_rate, ConditionProfile, DemoConfig, LoaderState, RolloutConfig,
    ScriptedExpert,
};
use pilectl::training::{
    multi_trial, run_experiment_grid, train, validate, CorpusSource, ExperimentGrid, TableLayout, TrainConfig,
};

const ACCEPTANCE_SEED: u64 = 2024;

fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

/// `ACCEPTANCE_ONLY=5,9` runs a subset.
fn selected(n: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim() == n.to_string()),
        Err(_) => true,
    }
}

fn criterion(n: usize, name: &str, f: impl FnOnce() -> String) -> bool {
    if !selected(n) {
        report(&format!("criterion {n:>2} SKIP  {name}"));
        return true;
    }
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f));
    let secs = t.elapsed().as_secs_f64();
    match out {
        Ok(detail) => {
            report(&format!("criterion {n:>2} PASS  {name} ({secs:.1}s) {detail}"));
            true
        }
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            report(&format!("criterion {n:>2} FAIL  {name} ({secs:.1}s) {msg}"));
            false
        }
    }
}

fn pt_spec(kind: ControllerKind) -> ControllerSpec {
    ControllerSpec::from_sensors(kind, true, false).unwrap()
}

fn gradients() -> String {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for kind in ControllerKind::ALL {
        let att = kind.has_attention().then_some(4);
        let spec = ControllerSpec::new(kind, 4, att).unwrap();
        for seed in 0..2 {
            let r = gradient_check(spec, ACCEPTANCE_SEED + seed, 3, 1e-6).unwrap();
            assert!(r.passed(1e-5), "{kind} seed {seed}: rel err {:e} at {}", r.max_relative_error, r.worst_index);
            worst = worst.max(r.max_relative_error);
        }
    }
    assert!(t.elapsed() < Duration::from_secs(60), "took {:?}", t.elapsed());
    format!("max rel err {worst:.2e}")
}

fn param_counts() -> String {
    let count = |kind, att| {
        let spec = ControllerSpec::new(kind, 4, att).unwrap();
        build_controller(spec, &mut RngState::new(0)).unwrap().param_count()
    };
    let nnet = count(ControllerKind::Nnet, None);
    let v2 = count(ControllerKind::NnetV2, None);
    let annet = count(ControllerKind::Annet, Some(4));
    // 4-200-200-10-3, 4-5-3 and the 4-64-64-4 head, each weight plus bias.
    let layers = |w: &[usize]| w.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>();
    assert_eq!(v2, layers(&[4, 200, 200, 10, 3]));
    assert_eq!(v2, 43_243);
    assert_eq!(nnet, layers(&[4, 5, 3]));
    assert_eq!(nnet, 43);
    let head = annet - v2;
    assert_eq!(head, layers(&[4, 64, 64, 4]));
    assert_eq!(head, 4_740);
    let ratio = v2 as f64 / nnet as f64;
    assert!((2.5..3.5).contains(&ratio.log10()), "ratio {ratio}");
    format!("NNetV2 {v2}, NNet {nnet}, head {head}, ratio {ratio:.0}")
}

fn random_obs(rng: &mut RngState) -> ExtendedSensorVector {
    let hi = [2.0, 2.0, 400.0, 400.0, 300.0, 300.0, 3.0];
    let mut s = [0.0; EXTENDED_DIM];
    for c in 0..EXTENDED_DIM {
        s[c] = rng.uniform_range(-hi[c], hi[c]);
    }
    ExtendedSensorVector(s)
}

fn check_invariants(p: &ControllerParams, rng: &mut RngState) -> usize {
    let mut masks = 0;
    for _ in 0..10_000 {
        let out = p.act(&random_obs(rng)).unwrap();
        assert!(out.u.to_array().iter().all(|v| (-1.0..=1.0).contains(v)), "{:?}", out.u);
        let mut sets: Vec<Vec<f64>> = out.mask.into_iter().collect();
        sets.extend(out.mask_u.map(|m| m.to_vec()));
        for m in sets {
            assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "{m:?}");
            assert!(m.iter().all(|&v| v > 0.0 && v < 1.0), "{m:?}");
            masks += 1;
        }
    }
    masks
}

fn attention_invariants() -> String {
    let demos = generate_demonstrations(
        &DemoConfig {
            n: 6,
            rate_hz: 20.0,
            ..Default::default()
        },
        &ConditionProfile::summer(),
        &mut RngState::new(ACCEPTANCE_SEED),
    )
    .unwrap();
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 64,
        seed: ACCEPTANCE_SEED,
        ..Default::default()
    };
    let mut rng = RngState::new(ACCEPTANCE_SEED).derive(3);
    let mut masks = 0;
    for kind in ControllerKind::ALL {
        for extended in [false, true] {
            let Ok(spec) = ControllerSpec::from_sensors(kind, true, extended) else { continue };
            let (p, _) = train(spec, &ds, &cfg).unwrap();
            masks += check_invariants(&p, &mut rng);
        }
    }
    format!("{masks} masks checked")
}

fn reproducibility() -> String {
    let c = TrainConfig::default();
    assert_eq!((c.epochs, c.batch_size, c.lr, c.dropout_p), (150, 512, 0.001, 0.35));
    let demos = generate_demonstrations(
        &DemoConfig {
            n: 3,
            rate_hz: 20.0,
            ..Default::default()
        },
        &ConditionProfile::summer(),
        &mut RngState::new(ACCEPTANCE_SEED),
    )
    .unwrap();
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    let cfg = TrainConfig {
        seed: ACCEPTANCE_SEED,
        ..TrainConfig::default()
    };
    let mut sizes = 0;
    for kind in [ControllerKind::NnetV2, ControllerKind::Dannet] {
        let a = encode_checkpoint(&train(pt_spec(kind), &ds, &cfg).unwrap().0);
        let b = encode_checkpoint(&train(pt_spec(kind), &ds, &cfg).unwrap().0);
        assert!(a == b, "{kind} checkpoints differ");
        sizes += a.len();
    }
    format!("{}; {sizes} checkpoint bytes identical", c.summary())
}

fn overfit() -> String {
    let cfg = DemoConfig {
        n: 10,
        full_fraction: 1.0,
        perturb_expert: false,
        ..Default::default()
    };
    let cond = ConditionProfile::summer().without_noise();
    let demos = generate_demonstrations(&cfg, &cond, &mut RngState::new(1)).unwrap();
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    let t = Instant::now();
    let train_cfg = TrainConfig {
        dropout_p: 0.0,
        seed: ACCEPTANCE_SEED,
        ..Default::default()
    };
    let (p, _) = train(pt_spec(ControllerKind::NnetV2), &ds, &train_cfg).unwrap();
    let elapsed = t.elapsed();
    let mse = validate(&p, &ds).unwrap();
    assert!(mse < 1e-3, "training MSE {mse:e}");
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    format!("{} samples, training MSE {mse:.2e} in {:.0}s", ds.len(), elapsed.as_secs_f64())
}

fn dataset_construction() -> String {
    let corpus =
        generate_demonstrations(&DemoConfig::default(), &ConditionProfile::summer(), &mut RngState::new(ACCEPTANCE_SEED))
            .unwrap();
    assert_eq!(corpus.len(), 72);
    let ideal = filter_ideal(&corpus, 0.99);
    assert_eq!(ideal.len(), 52);
    let d2 = build_dataset(&corpus, &DatasetSpec::d2()).unwrap();
    let ids = d2.demo_ids();
    let ideal_ids: Vec<&str> = ideal.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, ideal_ids);
    let expected: usize = ideal.iter().map(|d: &Demonstration| d.len().div_ceil(25)).sum();
    assert_eq!(d2.len(), expected);
    let d1 = build_dataset(&corpus, &DatasetSpec::d1()).unwrap();
    let frac = single_action_fraction(&d1, SINGLE_ACTION_EPSILON);
    assert!(frac >= 0.8, "single-action fraction {frac}");
    format!("52/72 ideal, {} D_II samples, single-action {:.1}%", d2.len(), 100.0 * frac)
}

fn observability() -> String {
    let summer = ConditionProfile::summer().without_noise();
    let ice = ConditionProfile::winter_ice().without_noise();
    let mut rng = RngState::new(ACCEPTANCE_SEED);
    for _ in 0..1000 {
        let state = LoaderState {
            v: rng.uniform_range(0.0, 1.5),
            theta1: rng.uniform_range(0.0, 1.2),
            theta2: rng.uniform_range(-0.4, 1.0),
            fill: rng.uniform_range(0.0, 1.0),
            internal_load: rng.uniform_range(0.0, 3.0),
            ..LoaderState::at_distance(-0.2)
        };
        let s = sense(&state, &summer, &mut rng.clone());
        let w = sense(&state, &ice, &mut rng.clone());
        assert_eq!(w.p_d(), s.p_d() * (1.0 - ice.slip));
        assert_eq!(w.p_t().to_bits(), s.p_t().to_bits());
    }
    format!("p_d scaled by {}, p_t bit-identical over 1000 states", 1.0 - ice.slip)
}

fn experiment_four() -> String {
    let t = Instant::now();
    let train_demos = generate_demonstrations(
        &DemoConfig {
            n: 20,
            ..Default::default()
        },
        &ConditionProfile::summer(),
        &mut RngState::new(ACCEPTANCE_SEED),
    )
    .unwrap();
    let val_demos = generate_demonstrations(
        &DemoConfig {
            n: 10,
            full_fraction: 1.0,
            ..Default::default()
        },
        &ConditionProfile::winter_ice(),
        &mut RngState::new(ACCEPTANCE_SEED + 1),
    )
    .unwrap();
    let tr = build_dataset(&train_demos, &DatasetSpec::d2()).unwrap();
    let va = build_dataset(&val_demos, &DatasetSpec::d2()).unwrap();
    let seeds: Vec<u64> = (0..20).map(|i| ACCEPTANCE_SEED + 100 + i).collect();
    let cfg = TrainConfig::default();
    let mut finals = Vec::new();
    for kind in [ControllerKind::NnetV2, ControllerKind::Annet, ControllerKind::Dannet] {
        let r = multi_trial(pt_spec(kind), &tr, &va, &cfg, &seeds).unwrap();
        // Re-run the first trial and compare its curve bit for bit.
        let again = pilectl::training::train_with_validation(
            pt_spec(kind),
            &tr,
            Some(&va),
            &TrainConfig { seed: seeds[0], ..cfg },
        )
        .unwrap()
        .1;
        assert!(again == r.curves[0], "{kind} curve not reproduced");
        finals.push((kind, r.final_mean(), r.final_std()));
    }
    let elapsed = t.elapsed();
    assert!(elapsed < Duration::from_secs(15 * 60), "took {elapsed:?}");
    let base = finals[0].1;
    let mut parts = vec![format!("{} train / {} val samples", tr.len(), va.len())];
    for (kind, m, s) in &finals {
        parts.push(format!("{kind} {m:.4}±{s:.4}"));
    }
    for (kind, m, _) in &finals[1..] {
        let holds = if *m < base { "holds" } else { "fails" };
        parts.push(format!("{kind}<NNETV2 {holds} (margin {:+.4})", base - m));
    }
    parts.join("; ")
}

fn tiny_grid(layout: TableLayout) -> ExperimentGrid {
    let mut g = ExperimentGrid::preset(layout).unwrap();
    g.rollouts = 1;
    g.train = TrainConfig {
        epochs: 1,
        batch_size: 64,
        ..g.train
    };
    g.corpus = CorpusSource::Generate {
        config: DemoConfig {
            n: 4,
            rate_hz: 40.0,
            ..Default::default()
        },
        condition: "summer".into(),
    };
    g.rollout.max_steps = 5;
    g
}

fn tables() -> String {
    let shape = |layout| {
        let csv = run_experiment_grid(&tiny_grid(layout)).unwrap().table_csv;
        let rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
        rows
    };
    let t2 = shape(TableLayout::Table2);
    assert_eq!(t2[0], ["test", "NNet", "NNetV2"]);
    assert_eq!(t2.iter().skip(1).map(|r| r[0].as_str()).collect::<Vec<_>>(), ["summer", "winter_ice"]);

    let t3 = shape(TableLayout::Table3);
    assert_eq!(t3[0], ["controller", "p_t", "D_II", "D_I"]);
    let keys: Vec<(&str, &str)> = t3[1..].iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(keys, [("NNet", "no"), ("NNet", "yes"), ("NNetV2", "no"), ("NNetV2", "yes")]);

    let t4 = shape(TableLayout::Table4);
    assert_eq!(t4[0], ["controller", "p_t", "s_prime", "D_I", "D_II"]);
    assert_eq!(t4.len(), 10);
    for (i, (pt, sp)) in [("no", "no"), ("yes", "no"), ("yes", "yes")].iter().enumerate() {
        let block: Vec<(&str, &str, &str)> =
            t4[1 + 3 * i..4 + 3 * i].iter().map(|r| (r[0].as_str(), r[1].as_str(), r[2].as_str())).collect();
        assert_eq!(block, [("NNetV2", *pt, *sp), ("ANNet", *pt, *sp), ("DANNet", *pt, *sp)]);
    }
    for t in [&t2, &t3, &t4] {
        assert!(t.iter().all(|r| r.len() == t[0].len()));
    }
    "tables II/III/IV shapes 3x3, 5x4, 10x5".into()
}

fn closed_loop() -> String {
    let summer = ConditionProfile::summer();
    let eval_rng = RngState::new(ACCEPTANCE_SEED).derive(10);
    let mut expert = ScriptedExpert::new(Default::default());
    let expert_rate = success_rate(&mut expert, &summer, 30, RolloutConfig::default(), &eval_rng).unwrap();
    assert_eq!(expert_rate, 100.0, "expert {expert_rate}%");

    let demos = generate_demonstrations(
        &DemoConfig {
            n: 20,
            rate_hz: 60.0,
            ..Default::default()
        },
        &summer,
        &mut RngState::new(ACCEPTANCE_SEED).derive(11),
    )
    .unwrap();
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    let cfg = TrainConfig {
        seed: ACCEPTANCE_SEED,
        ..Default::default()
    };
    let (mut p, _) = train(pt_spec(ControllerKind::Dannet), &ds, &cfg).unwrap();
    let rate = success_rate(&mut p, &summer, 30, RolloutConfig::default(), &eval_rng).unwrap();
    assert!(rate >= 80.0, "DANNet {rate}%");
    format!("expert {expert_rate:.0}%, DANNet {rate:.1}% over 30 summer rollouts")
}

#[test]
fn acceptance() {
    let results = [
        criterion(1, "gradient correctness", gradients),
        criterion(2, "architecture fidelity", param_counts),
        criterion(3, "attention invariants", attention_invariants),
        criterion(4, "recipe reproducibility", reproducibility),
        criterion(5, "overfit sanity", overfit),
        criterion(6, "dataset construction", dataset_construction),
        criterion(7, "observability", observability),
        criterion(8, "multi-trial shifted validation", experiment_four),
        criterion(9, "experiment tables", tables),
        criterion(10, "closed-loop sanity", closed_loop),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
