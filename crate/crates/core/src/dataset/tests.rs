use super::*;
use proptest::prelude::*;

fn demo(id: &str, n: usize, rate: f64, final_fill: f64) -> Demonstration {
    let records = (0..n)
        .map(|i| {
            let x = i as f64;
            Record {
                t: x / rate,
                obs: ExtendedSensorVector([0.01 * x, -0.2, 30.0 + x, 40.0, 5.0, 2.0, 0.5]),
                u: ControlVector::new(0.0, 0.0, if i % 3 == 0 { 0.0 } else { 0.8 }),
                fill: if i + 1 == n { final_fill } else { final_fill * x / n as f64 },
            }
        })
        .collect();
    Demonstration {
        id: id.into(),
        sample_rate_hz: rate,
        records,
    }
}

#[test]
fn decimate_keeps_every_kth_from_zero() {
    let d = demo("a", 100, 500.0, 1.0);
    let out = decimate(&d, 20.0).unwrap();
    assert_eq!(out.len(), 4);
    let kept: Vec<f64> = out.records.iter().map(|r| r.t).collect();
    assert_eq!(kept, vec![0.0, 25.0 / 500.0, 50.0 / 500.0, 75.0 / 500.0]);
    assert_eq!(out.sample_rate_hz, 20.0);
    assert_eq!(decimate(&d, 500.0).unwrap(), d);
    assert!(decimate(&d, 30.0).is_err());
    assert!(decimate(&d, 1000.0).is_err());
}

#[test]
fn filter_ideal_threshold() {
    let demos = vec![demo("a", 10, 500.0, 1.0), demo("b", 10, 500.0, 0.5)];
    let kept = filter_ideal(&demos, 0.99);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].id, "a");
}

#[test]
fn build_dataset_examples() {
    let d = demo("a", 50, 500.0, 1.0);
    assert_eq!(build_dataset(&[d.clone()], &DatasetSpec::d1()).unwrap().len(), 50);
    let d2 = build_dataset(&[d], &DatasetSpec::d2()).unwrap();
    assert_eq!(d2.len(), 2);
    assert_eq!(d2.norm_stats.mean[1], -0.2);
    assert_eq!(d2.norm_stats.std[1], crate::signals::STD_FLOOR);
    // no ideal demonstrations left
    assert!(build_dataset(&[demo("b", 50, 500.0, 0.4)], &DatasetSpec::d2()).is_err());
    assert!(build_dataset(&[], &DatasetSpec::d1()).is_err());
}

#[test]
fn single_action_examples() {
    let mk = |us: &[[f64; 3]]| {
        let s = us
            .iter()
            .map(|u| Sample {
                obs: ExtendedSensorVector::default(),
                u: ControlVector::from_array(*u),
            })
            .collect();
        Dataset::from_parts(Variant::DI, vec![("x".into(), s)]).unwrap()
    };
    assert_eq!(single_action_fraction(&mk(&[[1.0, 0.0, 0.0], [0.0, -0.5, 0.0]]), 0.05), 1.0);
    assert_eq!(single_action_fraction(&mk(&[[0.0; 3], [0.0; 3]]), 0.05), 0.0);
    assert_eq!(single_action_fraction(&mk(&[[0.3, 0.3, 0.0], [0.0, 0.0, 0.9]]), 0.05), 0.5);
}

#[test]
fn split_examples() {
    let demos: Vec<_> = (0..10).map(|i| demo(&format!("d{i:02}"), 20, 100.0, 1.0)).collect();
    let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
    let (tr, va) = split(&ds, 0.2, &mut RngState::new(9)).unwrap();
    assert_eq!((tr.demos.len(), va.demos.len()), (8, 2));
    let (tr2, va2) = split(&ds, 0.2, &mut RngState::new(9)).unwrap();
    assert_eq!(tr, tr2);
    assert_eq!(va, va2);
    let mut ids: Vec<&str> = tr.demo_ids().into_iter().chain(va.demo_ids()).collect();
    ids.sort_unstable();
    assert_eq!(ids, ds.demo_ids());
    assert!(va.demo_ids().iter().all(|id| !tr.demo_ids().contains(id)));
    let one = build_dataset(&demos[..1], &DatasetSpec::d1()).unwrap();
    assert!(split(&one, 0.2, &mut RngState::new(1)).is_err());
    assert!(split(&ds, 1.0, &mut RngState::new(1)).is_err());
}

#[test]
fn csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_demonstrations(dir.path()).unwrap().is_empty());
    let mut a = demo("b_demo", 30, 500.0, 0.995);
    a.records[3].obs.0[2] = 1.0 / 3.0;
    let c = demo("a_demo", 12, 20.0, 0.4);
    write_demonstration(&a, dir.path().join("b_demo.csv")).unwrap();
    write_demonstration(&c, dir.path().join("a_demo.csv")).unwrap();
    let loaded = load_demonstrations(dir.path()).unwrap();
    assert_eq!(loaded, vec![c, a.clone()]);

    let bad = dir.path().join("bad.csv");
    let text = std::fs::read_to_string(dir.path().join("b_demo.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[4].split(',').map(String::from).collect();
    fields[10] = "1.5".into();
    lines[4] = fields.join(",");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    match read_demonstration(&bad) {
        Err(Error::Parse { row, .. }) => assert_eq!(row, 4),
        other => panic!("unexpected {other:?}"),
    }

    lines.swap(6, 7);
    lines[4] = text.lines().nth(4).unwrap().to_string();
    std::fs::write(&bad, lines.join("\n")).unwrap();
    assert!(matches!(read_demonstration(&bad), Err(Error::Parse { .. })));
    std::fs::write(&bad, format!("{}\n0,1,2\n", DEMO_CSV_HEADER.join(","))).unwrap();
    assert!(read_demonstration(&bad).is_err());
}

#[test]
fn dataset_store_round_trip() {
    let demos: Vec<_> = (0..3).map(|i| demo(&format!("d{i}"), 40, 500.0, 1.0)).collect();
    let ds = build_dataset(&demos, &DatasetSpec::d2()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("variant = d2\ndemos = d0,d1,d2\ndemo_samples = 2,2,2\nsamples = 6\n"));
}

fn arb_demo() -> impl Strategy<Value = Demonstration> {
    (1usize..120, prop::sample::select(vec![20.0, 100.0, 500.0]), 0.0f64..=1.0, any::<u64>()).prop_map(
        |(n, rate, fill, seed)| {
            let mut rng = RngState::new(seed);
            let records = (0..n)
                .map(|i| Record {
                    t: i as f64 / rate,
                    obs: ExtendedSensorVector(std::array::from_fn(|_| rng.normal() * 10.0)),
                    u: ControlVector::from_array(std::array::from_fn(|_| {
                        if rng.uniform() < 0.5 {
                            0.0
                        } else {
                            rng.uniform_range(-1.0, 1.0)
                        }
                    })),
                    fill: fill * (i + 1) as f64 / n as f64,
                })
                .collect();
            Demonstration {
                id: format!("p{seed}"),
                sample_rate_hz: rate,
                records,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decimate_native_rate_is_identity(d in arb_demo()) {
        prop_assert_eq!(decimate(&d, d.sample_rate_hz).unwrap(), d);
    }

    #[test]
    fn d2_count_is_sum_of_ceil(demos in prop::collection::vec(arb_demo(), 1..6)) {
        let demos: Vec<_> = demos
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| { d.id = format!("{i}"); d })
            .collect();
        let spec = DatasetSpec::d2();
        let expected: usize = demos
            .iter()
            .filter(|d| d.final_fill() >= 0.99)
            .map(|d| d.len().div_ceil(decimation_factor(d.sample_rate_hz, 20.0).unwrap()))
            .sum();
        match build_dataset(&demos, &spec) {
            Ok(ds) => prop_assert_eq!(ds.len(), expected),
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn normalized_channels_are_standard(d in arb_demo()) {
        prop_assume!(d.len() >= 2);
        let ds = build_dataset(&[d], &DatasetSpec::d1()).unwrap();
        let n = ds.len() as f64;
        for c in 0..crate::signals::EXTENDED_DIM {
            let z: Vec<f64> = ds.samples.iter().map(|s| ds.norm_stats.normalize(&s.obs).0[c]).collect();
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_action_matches_recount(d in arb_demo()) {
        let ds = build_dataset(&[d.clone()], &DatasetSpec::d1()).unwrap();
        let mut count = 0;
        for r in &d.records {
            let [a, b, c] = r.u.to_array();
            let active = (a.abs() > 0.05) as u32 + (b.abs() > 0.05) as u32 + (c.abs() > 0.05) as u32;
            if active == 1 { count += 1; }
        }
        let f = single_action_fraction(&ds, 0.05);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(f, count as f64 / d.len() as f64);
    }

    #[test]
    fn splits_disjoint_and_exhaustive(demos in prop::collection::vec(arb_demo(), 2..9), seed in any::<u64>(), frac in 0.05f64..0.95) {
        let demos: Vec<_> = demos
            .into_iter()
            .enumerate()
            .map(|(i, mut d)| { d.id = format!("{i}"); d })
            .collect();
        let ds = build_dataset(&demos, &DatasetSpec::d1()).unwrap();
        let (tr, va) = split(&ds, frac, &mut RngState::new(seed)).unwrap();
        prop_assert_eq!(tr.len() + va.len(), ds.len());
        let mut ids: Vec<&str> = tr.demo_ids().into_iter().chain(va.demo_ids()).collect();
        ids.sort_unstable();
        let mut all = ds.demo_ids();
        all.sort_unstable();
        prop_assert_eq!(ids, all);
    }
}
