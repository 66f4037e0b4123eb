use castline::actions::{mirror_action, Action, Vec2};
use castline::cablesim::{rollout, RecordMeta, RolloutOptions, SimParams, Source, TrajectoryRecord};
use castline::pipeline::ExperimentConfig;
use castline::policy::{is_feasible, quantile};
use castline::regress::{Normalization, RegressionDataset};
use castline::sysid::{differential_evolution, DeSettings};
use proptest::prelude::*;

fn action() -> impl Strategy<Value = Action> {
    (-1.4f64..1.4, 0.55f64..0.9, -1.4f64..1.4, 0.55f64..0.9, -1.0f64..1.0, 1.0f64..3.0)
        .prop_map(|(a, b, c, d, e, f)| Action::new(a, b, c, d, e, f))
}

fn point() -> impl Strategy<Value = Vec2> {
    (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #[test]
    fn mirror_is_an_involution(a in action()) {
        let back = mirror_action(&mirror_action(&a));
        prop_assert_eq!(back.to_array().map(f64::to_bits), a.to_array().map(f64::to_bits));
    }

    #[test]
    fn record_json_round_trips_bit_exact(
        a in action(),
        wps in prop::collection::vec(point(), 0..12),
        end in point(),
        extra_ms in 0u64..100,
        seed in prop::option::of(any::<u64>()),
    ) {
        let n_wps = wps.len() as u64;
        let rec = TrajectoryRecord {
            action: a,
            waypoints: wps,
            final_pos: end,
            duration_ms: n_wps * 100 + extra_ms,
            meta: RecordMeta { params_hash: "00ff".into(), seed, source: Source::Simulated, settled: true },
        };
        let back = TrajectoryRecord::from_json_line(&rec.to_json_line().unwrap()).unwrap();
        prop_assert_eq!(back, rec);
    }

    #[test]
    fn de_stays_in_bounds_and_best_never_rises(
        lo in -5.0f64..0.0,
        width in 0.1f64..4.0,
        seed in any::<u64>(),
    ) {
        let bounds = [(lo, lo + width), (0.0, 1.0)];
        let s = DeSettings { popsize_factor: 4, max_generations: 15, seed, ..DeSettings::default() };
        let r = differential_evolution(|x: &[f64]| (x[0] - 0.3).powi(2) + x[1].sin(), &bounds, &s).unwrap();
        for (x, (l, h)) in r.x.iter().zip(bounds) {
            prop_assert!(*x >= l && *x <= h);
        }
        for w in r.history.windows(2) {
            prop_assert!(w[1].best <= w[0].best);
        }
    }

    #[test]
    fn quantiles_are_ordered(mut v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
        v.sort_by(f64::total_cmp);
        let q: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&p| quantile(&v, p)).collect();
        prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(q[0], v[0]);
        prop_assert_eq!(q[4], v[v.len() - 1]);
    }

    #[test]
    fn normalization_round_trips(rows in prop::collection::vec((action(), point()), 2..20)) {
        let mut d = RegressionDataset::default();
        for (a, p) in &rows {
            d.push(a.to_array(), *p, 1.0, Source::Simulated);
        }
        let n = Normalization::fit(&d).unwrap();
        for (a, p) in &rows {
            let x = a.to_array();
            let back = n.denormalize_input(&n.normalize_input(&x));
            for (u, v) in back.iter().zip(x) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
            let t = n.denormalize_target(n.normalize_target(*p));
            prop_assert!(t.distance(*p) <= 1e-12);
        }
    }

    #[test]
    fn config_hash_ignores_formatting(seed in 0..i64::MAX as u64, trials in 1usize..10, noise in 0.0f64..0.01) {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.eval.trials = trials;
        cfg.eval.noise = noise;
        let text = cfg.to_toml().unwrap();
        let spaced = text.replace(" = ", "   =   ");
        let back = ExperimentConfig::from_toml(&spaced).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn waypoint_count_follows_duration(a in action()) {
        let opts = RolloutOptions::default();
        prop_assume!(is_feasible(&a, &opts));
        let rec = rollout(&a, &SimParams::default(), &opts).unwrap();
        prop_assert_eq!(rec.waypoints.len() as u64, rec.duration_ms / 100);
    }

    #[test]
    fn mirrored_cast_lands_mirrored(a in action()) {
        let opts = RolloutOptions::default();
        prop_assume!(is_feasible(&a, &opts));
        let p = SimParams::default();
        let x = rollout(&a, &p, &opts).unwrap().final_pos;
        let y = rollout(&mirror_action(&a), &p, &opts).unwrap().final_pos;
        prop_assert!(x.reflect().distance(y) < 1e-6);
    }
}
