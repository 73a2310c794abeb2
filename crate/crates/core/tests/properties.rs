use fdmimo::altqcp::{init_precoders, DesignProblem, InitMode, SolverOptions};
use fdmimo::baselines::{run_baseline, BaselineMode, Objective, SiThreshold};
use fdmimo::channel::{cn, cn_matrix, draw_channels, perturb_csi, rng_for, ChannelStats, PerturbMode};
use fdmimo::config::{SystemConfig, UniformParams};
use fdmimo::harness::{ExperimentSpec, SweepParam};
use fdmimo::linalg::{c, hermitian_eigen, identity};
use fdmimo::model::{power_usage, TransceiverDesign};
use fdmimo::robust::{dual_bound, worst_case_error, QuadraticErrorForm};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn config(zeta: f64) -> SystemConfig {
    SystemConfig::uniform(&UniformParams { zeta, ..Default::default() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csi_errors_stay_in_their_balls(seed in 0u64..10_000, zeta in 0.0f64..1.0, boundary in any::<bool>()) {
        let cfg = config(zeta);
        let mut ch = draw_channels(&cfg, &ChannelStats::default(), seed);
        let mode = if boundary { PerturbMode::Boundary } else { PerturbMode::Interior };
        let set = perturb_csi(&mut ch, seed, mode).unwrap();
        for ((i, j, k), delta) in set.errors.iter() {
            let norm = (&ch.shaping[i][j][k] * delta).norm();
            let r = ch.radius[i][j][k];
            prop_assert!(norm <= r * (1.0 + 1e-12));
            if boundary {
                prop_assert!((norm - r).abs() <= 1e-12 * r.max(1.0));
            }
            let h = ch.truth.get(i, j, k) - ch.estimate.get(i, j, k);
            prop_assert!((h - delta).norm() <= 1e-12);
        }
    }

    #[test]
    fn seeds_reproduce_and_split(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        let x: Vec<u64> = (0..4).map(|_| rng_for(seed, a).random()).collect();
        let y: Vec<u64> = (0..4).map(|_| rng_for(seed, a).random()).collect();
        let z: Vec<u64> = (0..4).map(|_| rng_for(seed, b).random()).collect();
        prop_assert_eq!(&x, &y);
        prop_assert_ne!(&x, &z);
    }

    #[test]
    fn oracle_duality(seed in any::<u64>(), dim in 1usize..=4, rows in 1usize..=4, zeta in 0.01f64..3.0) {
        let mut rng = rng_for(seed, 0);
        let a = cn_matrix(&mut rng, rows, dim, 1.0);
        let cv = DVector::from_fn(rows, |_, _| cn(&mut rng, 1.0));
        let form = QuadraticErrorForm::from_parts(a, cv, identity(dim) + cn_matrix(&mut rng, dim, dim, 0.1), (dim, 1));
        let r = worst_case_error(&form, zeta);
        let op = form.operator();
        let big_m = op.adjoint() * &op;
        let m = op.adjoint() * &form.c_vec;
        let lmax = *hermitian_eigen(&big_m).0.last().unwrap();
        prop_assert!(r.rho_star >= lmax - 1e-10);
        let stat = (identity(dim) * c(r.rho_star, 0.0) - &big_m) * &r.b_star - &m;
        prop_assert!(stat.norm() < 1e-8 * m.norm().max(1e-300));
        prop_assert!((r.b_star.norm() - zeta).abs() < 1e-8 * zeta.max(1.0));
        for s in 1..10 {
            let rho = lmax + 0.01 * 2f64.powi(s);
            prop_assert!(r.value <= dual_bound(&form, zeta, rho) + 1e-8 * r.value.max(1.0));
        }
    }

    #[test]
    fn altqcp_half_steps_descend(seed in 0u64..10_000) {
        let cfg = config(0.0);
        let ch = draw_channels(&cfg, &ChannelStats::default(), seed);
        let problem = DesignProblem::nominal(&ch.estimate, &cfg);
        let mut d = TransceiverDesign::with_precoders(init_precoders(&ch.estimate, &cfg, InitMode::Random(seed)), &cfg);
        d.decoders = problem.update_receivers(&d.precoders).unwrap();
        let mut prev = problem.objective(&d).unwrap();
        for _ in 0..8 {
            d.precoders = problem.update_precoders(&d.decoders, &d.weights, 1e-10).unwrap().0;
            let after_v = problem.objective(&d).unwrap();
            d.decoders = problem.update_receivers(&d.precoders).unwrap();
            let after_u = problem.objective(&d).unwrap();
            prop_assert!(after_v <= prev + 1e-9 && after_u <= after_v + 1e-9);
            prop_assert!(after_u >= 0.0);
            prev = after_u;
        }
    }

    #[test]
    fn baselines_respect_power(seed in 0u64..10_000, which in 0usize..6) {
        let cfg = config(0.0);
        let ch = draw_channels(&cfg, &ChannelStats::default(), seed);
        let mode = [
            BaselineMode::HalfDuplex,
            BaselineMode::Kappa0,
            BaselineMode::SingleCarrier,
            BaselineMode::PowerThreshold(SiThreshold::Infinite),
            BaselineMode::PowerThreshold(SiThreshold::High),
            BaselineMode::PowerThreshold(SiThreshold::Low),
        ][which];
        let opts = SolverOptions { max_iters: 20, ..SolverOptions::from_config(&cfg) };
        let (d, report) = run_baseline(mode, Objective::SumMse, &ch, &cfg, &opts).unwrap();
        for i in 0..2 {
            // blind designs budget power without transmit distortion
            let theta = if which == 0 || which == 2 { cfg.theta_tx[i].clone() } else { vec![0.0; cfg.n(i)] };
            let p = power_usage(&d.precoders[i], &theta, cfg.k());
            prop_assert!(p <= cfg.max_power[i] * (1.0 + 1e-6), "{mode:?}: {p}");
            prop_assert!(report.mse[i].len() == cfg.k() && report.rate[i].len() == cfg.k());
        }
    }

    #[test]
    fn db_levels_round_trip(tenths in -900i32..300) {
        let db = f64::from(tenths) / 10.0;
        let json = format!(
            r#"{{"algorithms": ["altqcp"], "sweep": {{"param": "kappa_db", "values": ["{db}dB"]}}, "system": {{"noise": "{db}dB"}}}}"#
        );
        let spec = ExperimentSpec::from_json(&json).unwrap();
        prop_assert_eq!(spec.points()[0].value_text(), format!("{db:.6}"));
        prop_assert_eq!(fdmimo::config::format_db(spec.system.noise.0), format!("{db:.6}"));
        prop_assert_eq!(SweepParam::KappaDb.format_value(spec.points()[0].value), format!("{db:.6}"));
    }
}
