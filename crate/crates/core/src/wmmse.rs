//! Weighted sum-rate maximization through the WMMSE surrogate. Each outer
//! iteration reuses the AltQCP precoder and receiver updates and then resets
//! the MSE weights to `S = E⁻¹`.

use std::f64::consts::LN_2;
use std::time::Instant;

use crate::altqcp::{DesignProblem, SolverOptions};
use crate::channel::ChannelRealization;
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, inv_hpd, ln_det_hpd, real_trace, CMat};
use crate::model::{
    covariances, evaluate, mse_matrices, rate, ChannelView, PerformanceReport, Scenario, TransceiverDesign,
};

/// `S_i^k = (E_i^k)⁻¹` for the current precoders and receivers.
pub fn update_weights(design: &TransceiverDesign, scen: Scenario<'_>, config: &SystemConfig) -> Result<[Vec<CMat>; 2]> {
    let e = mse_matrices(design, scen, config)?;
    let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
    for (o, ei) in out.iter_mut().zip(e) {
        for ek in ei {
            o.push(inv_hpd(&ek, "MSE matrix")?);
        }
    }
    Ok(out)
}

/// `Σ_i ω_i Σ_k (ln|S_i^k| + d_i − tr(S_i^k E_i^k))` in nats.
pub fn surrogate_objective(design: &TransceiverDesign, scen: Scenario<'_>, config: &SystemConfig) -> Result<f64> {
    let e = mse_matrices(design, scen, config)?;
    let mut total = 0.0;
    for i in 0..DIRECTIONS {
        let mut dir = 0.0;
        for (s, ek) in design.weights[i].iter().zip(&e[i]) {
            dir += ln_det_hpd(s, "surrogate weight")? + config.d(i) as f64 - real_trace(&(s * ek));
        }
        total += config.rate_weights[i] * dir;
    }
    Ok(total)
}

/// `Σ_i ω_i Σ_k log2|I + Vᴴ Hᴴ Σ⁻¹ H V|`.
pub fn weighted_sum_rate(precoders: &[Vec<CMat>; 2], scen: Scenario<'_>, config: &SystemConfig) -> Result<f64> {
    let sig = covariances(precoders, scen, config)?;
    let mut total = 0.0;
    for i in 0..DIRECTIONS {
        for k in 0..config.k() {
            total += config.rate_weights[i] * rate(&precoders[i][k], &sig[i][k], scen.desired(i, k))?;
        }
    }
    Ok(total)
}

fn folded(weights: &[Vec<CMat>; 2], config: &SystemConfig) -> [Vec<CMat>; 2] {
    let mut out = weights.clone();
    for (i, o) in out.iter_mut().enumerate() {
        o.iter_mut().for_each(|s| *s *= c(config.rate_weights[i], 0.0));
    }
    out
}

/// Runs the WMMSE iteration on the first scenario of `problem`, starting from
/// `init`. The report's objective trace holds the weighted sum rate in bits.
pub fn wmmse_on(
    problem: &DesignProblem<'_>,
    init: [Vec<CMat>; 2],
    options: &SolverOptions,
) -> Result<(TransceiverDesign, PerformanceReport)> {
    let cfg = problem.config;
    let scen = problem.scenarios[0];
    let mut design = TransceiverDesign::with_precoders(init, cfg);
    design.decoders = problem.update_receivers(&design.precoders)?;
    design.weights = update_weights(&design, scen, cfg)?;
    let mut report =
        PerformanceReport { initial_objective: weighted_sum_rate(&design.precoders, scen, cfg)?, ..Default::default() };
    let mut prev = surrogate_objective(&design, scen, cfg)?;
    for it in 0..options.max_iters {
        let start = Instant::now();
        let (v, duals) = problem.update_precoders(&design.decoders, &folded(&design.weights, cfg), options.dual_tol)?;
        design.precoders = v;
        design.duals = duals;
        design.decoders = problem.update_receivers(&design.precoders)?;
        design.weights = update_weights(&design, scen, cfg)?;
        let sur = surrogate_objective(&design, scen, cfg)?;
        if !sur.is_finite() {
            return Err(Error::Numerical(format!("surrogate became {sur} at iteration {it}")));
        }
        report.objective_trace.push(sur / LN_2);
        report.iteration_seconds.push(start.elapsed().as_secs_f64());
        let change = (sur - prev).abs();
        prev = sur;
        if change <= options.rel_tol * sur.abs().max(f64::MIN_POSITIVE) {
            report.converged = true;
            break;
        }
    }
    let eval = evaluate(&design, scen, cfg, false)?;
    report.mse = eval.mse;
    report.rate = eval.rate;
    report.power = eval.power;
    Ok((design, report))
}

/// Weighted sum-rate design on the estimated channels.
pub fn run_wmmse(
    channels: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
) -> Result<(TransceiverDesign, PerformanceReport)> {
    let problem = DesignProblem {
        scenarios: vec![channels.scenario(ChannelView::Estimated)],
        config,
        si_limit: None,
    };
    wmmse_on(&problem, problem.initial_precoders(options.init), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::altqcp::InitMode;
    use crate::channel::{draw_channels, rng_for, ChannelStats};
    use crate::linalg::{identity, max_abs_diff};
    use crate::testutil::*;

    fn fixture(seed: u64) -> (SystemConfig, ChannelRealization) {
        let mut cfg = default_config();
        cfg.rate_weights = [1.0, 0.6];
        let ch = draw_channels(&cfg, &ChannelStats::default(), seed);
        (cfg, ch)
    }

    fn mmse_design(cfg: &SystemConfig, ch: &ChannelRealization, mode: InitMode) -> TransceiverDesign {
        let problem = DesignProblem::nominal(&ch.estimate, cfg);
        let mut d = TransceiverDesign::with_precoders(problem.initial_precoders(mode), cfg);
        d.decoders = problem.update_receivers(&d.precoders).unwrap();
        d
    }

    #[test]
    fn identity_error_gives_identity_weight() {
        let cfg = default_config();
        let ch = draw_channels(&cfg, &ChannelStats::default(), 0);
        let d = TransceiverDesign::zeros(&cfg);
        let s = update_weights(&d, Scenario::nominal(&ch.estimate), &cfg).unwrap();
        for sk in s.iter().flatten() {
            assert!(max_abs_diff(sk, &identity(1)) < 1e-15);
        }
        let mut d = d;
        d.weights = s;
        assert_eq!(surrogate_objective(&d, Scenario::nominal(&ch.estimate), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn scalar_weight_identity() {
        let cfg = scalar_config(0.0, 0.0, 1.0);
        let ch = scalar_channels(&cfg, [1.0, 1.0], [0.0, 0.0]);
        let scen = Scenario::nominal(&ch);
        let mut d = TransceiverDesign::with_precoders([vec![scalar(1.0, 0.0)], vec![scalar(0.0, 0.0)]], &cfg);
        d.decoders = [vec![scalar(0.5, 0.0)], vec![scalar(0.0, 0.0)]];
        d.weights = update_weights(&d, scen, &cfg).unwrap();
        assert!((d.weights[0][0][(0, 0)].re - 2.0).abs() < 1e-14);
        // direction 1 carries nothing: E = 1, S = 1, zero contribution
        let sur = surrogate_objective(&d, scen, &cfg).unwrap();
        assert!((sur - 2f64.ln()).abs() < 1e-14);
    }

    fn hermitian_direction(d: usize, rng: &mut impl rand::Rng) -> CMat {
        let a = crate::channel::cn_matrix(rng, d, d, 1.0);
        (&a + a.adjoint()) * c(0.5, 0.0)
    }

    #[test]
    fn weights_maximize_surrogate() {
        let mut cfg = default_config();
        cfg.streams = [2, 2];
        let ch = draw_channels(&cfg, &ChannelStats::default(), 3);
        let scen = Scenario::nominal(&ch.estimate);
        let mut d = mmse_design(&cfg, &ch, InitMode::Random(3));
        // decoders perturbed away from MMSE so E is generic
        let noise = random_matrices(&cfg, 4, |i| cfg.m(i), 0.01);
        for i in 0..2 {
            for k in 0..cfg.k() {
                d.decoders[i][k] += &noise[i][k];
            }
        }
        d.weights = update_weights(&d, scen, &cfg).unwrap();
        let best = surrogate_objective(&d, scen, &cfg).unwrap();
        let mut rng = rng_for(5, 0);
        for _ in 0..50 {
            let mut p = d.clone();
            let i = rand::Rng::random_range(&mut rng, 0..2);
            let k = rand::Rng::random_range(&mut rng, 0..cfg.k());
            let dir = hermitian_direction(cfg.d(i), &mut rng);
            let dir = &dir * c(1e-4 / dir.norm(), 0.0);
            for sign in [1.0, -1.0] {
                p.weights[i][k] = &d.weights[i][k] + &dir * c(sign, 0.0);
                assert!(surrogate_objective(&p, scen, &cfg).unwrap() <= best + 1e-15);
            }
        }
    }

    #[test]
    fn surrogate_is_tight_at_optimum() {
        for seed in 0..5 {
            let (cfg, ch) = fixture(seed);
            let scen = Scenario::nominal(&ch.estimate);
            let mut d = mmse_design(&cfg, &ch, InitMode::Random(seed));
            d.weights = update_weights(&d, scen, &cfg).unwrap();
            let wsr = weighted_sum_rate(&d.precoders, scen, &cfg).unwrap();
            let sur = surrogate_objective(&d, scen, &cfg).unwrap();
            assert!((sur - LN_2 * wsr).abs() <= 1e-8 * sur.abs().max(1.0));

            // away from the closed-form receiver the surrogate is strictly lower
            let noise = random_matrices(&cfg, seed, |i| cfg.m(i), 0.05);
            for i in 0..2 {
                for k in 0..cfg.k() {
                    d.decoders[i][k] += &noise[i][k];
                }
            }
            d.weights = update_weights(&d, scen, &cfg).unwrap();
            assert!(surrogate_objective(&d, scen, &cfg).unwrap() < LN_2 * wsr - 1e-12);
        }
    }

    #[test]
    fn surrogate_never_drops_across_blocks() {
        for seed in 0..10 {
            let (cfg, ch) = fixture(20 + seed);
            let scen = Scenario::nominal(&ch.estimate);
            let problem = DesignProblem::nominal(&ch.estimate, &cfg);
            let mut d = mmse_design(&cfg, &ch, InitMode::Rsm);
            d.weights = update_weights(&d, scen, &cfg).unwrap();
            let mut prev = surrogate_objective(&d, scen, &cfg).unwrap();
            for _ in 0..15 {
                for block in 0..3 {
                    match block {
                        0 => d.precoders = problem.update_precoders(&d.decoders, &folded(&d.weights, &cfg), 1e-9).unwrap().0,
                        1 => d.decoders = problem.update_receivers(&d.precoders).unwrap(),
                        _ => d.weights = update_weights(&d, scen, &cfg).unwrap(),
                    }
                    let now = surrogate_objective(&d, scen, &cfg).unwrap();
                    assert!(now >= prev - 1e-9 * prev.abs().max(1.0), "block {block}: {now} < {prev}");
                    prev = now;
                }
            }
        }
    }

    #[test]
    fn scalar_capacity() {
        let mut cfg = scalar_config(0.0, 0.0, 0.5);
        cfg.max_power = [2.0, 0.0];
        let h = 0.8;
        let ch = draw_channels(&cfg, &ChannelStats::default(), 0);
        let ch = ChannelRealization::perfect(
            crate::channel::ChannelSet::from_fn(&cfg, |i, j, _| if i == j { scalar(h, 0.3) } else { ch.truth.get(i, j, 0).clone() }),
            &cfg,
        );
        let opts = SolverOptions { rel_tol: 1e-12, max_iters: 200, ..Default::default() };
        let (d, report) = run_wmmse(&ch, &cfg, &opts).unwrap();
        let gain = h * h + 0.09;
        let cap = (1.0 + 2.0 * gain / 0.5).log2();
        assert!((report.rate[0][0] - cap).abs() < 1e-9);
        assert!((d.precoders[0][0].norm_squared() - 2.0).abs() < 1e-9);
        assert!((report.objective_trace.last().unwrap() - cap).abs() < 1e-9);
    }

    #[test]
    fn rate_trace_non_decreasing() {
        for seed in 0..20 {
            let (cfg, ch) = fixture(40 + seed);
            let (_, report) = run_wmmse(&ch, &cfg, &SolverOptions::from_config(&cfg)).unwrap();
            let mut prev = report.initial_objective;
            for &r in &report.objective_trace {
                assert!(r >= prev - 1e-8, "seed {seed}: {r} after {prev}");
                prev = r;
            }
        }
    }

    #[test]
    fn common_weight_scale_leaves_iterates() {
        let (cfg, ch) = fixture(7);
        let mut scaled = cfg.clone();
        scaled.rate_weights = cfg.rate_weights.map(|w| 3.5 * w);
        let opts = SolverOptions { max_iters: 10, rel_tol: 0.0, ..Default::default() };
        let (a, ra) = run_wmmse(&ch, &cfg, &opts).unwrap();
        let (b, rb) = run_wmmse(&ch, &scaled, &opts).unwrap();
        for (x, y) in a.precoders.iter().flatten().zip(b.precoders.iter().flatten()) {
            assert!(max_abs_diff(x, y) < 1e-10);
        }
        for (x, y) in ra.objective_trace.iter().zip(&rb.objective_trace) {
            assert!((3.5 * x - y).abs() < 1e-9 * y.abs());
        }
    }
}
