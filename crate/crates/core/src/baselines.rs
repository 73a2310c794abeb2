//! Comparison designs, each computed under its own simplified assumptions and
//! then evaluated on the true channels with the true distortion levels.

use crate::altqcp::{identity_weights, DesignProblem, SiLimit, SolverOptions};
use crate::channel::{ChannelRealization, ChannelSet};
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::model::{evaluate, ChannelView, PerformanceReport, Scenario, TransceiverDesign};
use crate::wmmse::wmmse_on;

/// Self-interference limit of the power-threshold baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SiThreshold {
    /// No limit.
    Infinite,
    /// `P_i`
    High,
    /// `P_i / 10`
    Low,
    Absolute(f64),
}

impl SiThreshold {
    fn per_direction(self, config: &SystemConfig) -> [f64; 2] {
        match self {
            SiThreshold::Infinite => [f64::INFINITY; 2],
            SiThreshold::High => config.max_power,
            SiThreshold::Low => config.max_power.map(|p| p / 10.0),
            SiThreshold::Absolute(t) => [t; 2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaselineMode {
    /// Time-division half duplex: no self-interference, half the time each.
    HalfDuplex,
    /// Distortion-blind design.
    Kappa0,
    /// One design on the subcarrier-averaged channel, reused on every subcarrier.
    SingleCarrier,
    /// Distortion-blind design with a self-interference power limit.
    PowerThreshold(SiThreshold),
}

/// What the underlying solver optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    SumMse,
    SumRate,
}

fn solve(problem: &DesignProblem<'_>, objective: Objective, options: &SolverOptions) -> Result<(TransceiverDesign, PerformanceReport)> {
    let init = problem.initial_precoders(options.init);
    match objective {
        Objective::SumMse => problem.run(init, identity_weights(problem.config), options),
        Objective::SumRate => wmmse_on(problem, init, options),
    }
}

/// Re-evaluates `design` on the true channels; the design-time convergence
/// record is kept.
fn on_truth(
    design: TransceiverDesign,
    design_report: PerformanceReport,
    channels: &ChannelRealization,
    config: &SystemConfig,
) -> Result<(TransceiverDesign, PerformanceReport)> {
    let eval = evaluate(&design, channels.scenario(ChannelView::True), config, false)?;
    Ok((design, PerformanceReport { mse: eval.mse, rate: eval.rate, power: eval.power, ..design_report }))
}

fn single_carrier_config(config: &SystemConfig) -> SystemConfig {
    let k = config.k() as f64;
    let mut sc = config.clone();
    sc.subcarriers = 1;
    for i in 0..DIRECTIONS {
        // κ_l/K per subcarrier becomes κ_l on a single carrier
        sc.theta_tx[i] = config.theta_tx[i].iter().map(|t| t * k).collect();
        sc.theta_rx[i] = config.theta_rx[i].iter().map(|t| t * k).collect();
        sc.noise[i] = vec![config.noise[i].iter().sum::<f64>() / k];
        sc.max_power[i] = config.max_power[i] / k;
        for j in 0..DIRECTIONS {
            let r = &config.csi_radius[i][j];
            sc.csi_radius[i][j] = vec![r.iter().sum::<f64>() / k];
        }
    }
    sc
}

fn replicate(mats: &[Vec<CMat>; 2], k: usize) -> [Vec<CMat>; 2] {
    std::array::from_fn(|i| vec![mats[i][0].clone(); k])
}

/// Runs one baseline and reports its performance under the true model.
pub fn run_baseline(
    mode: BaselineMode,
    objective: Objective,
    channels: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
) -> Result<(TransceiverDesign, PerformanceReport)> {
    match mode {
        BaselineMode::HalfDuplex => {
            let hd = channels.half_duplex();
            let problem = DesignProblem::nominal(&hd.estimate, config);
            let (design, report) = solve(&problem, objective, options)?;
            let (design, mut report) = on_truth(design, report, &hd, config)?;
            for r in report.rate.iter_mut().flatten() {
                *r *= 0.5;
            }
            Ok((design, report))
        }
        BaselineMode::Kappa0 => {
            let blind = config.without_distortion().without_csi_error();
            let problem = DesignProblem::nominal(&channels.estimate, &blind);
            let (design, report) = solve(&problem, objective, options)?;
            on_truth(design, report, channels, config)
        }
        BaselineMode::SingleCarrier => {
            let sc = single_carrier_config(config);
            let k = config.k() as f64;
            let averaged = ChannelSet::from_fn(&sc, |i, j, _| {
                let sum: CMat = (0..config.k()).map(|kk| channels.estimate.get(i, j, kk).clone()).sum();
                sum * c(1.0 / k, 0.0)
            });
            let problem = DesignProblem::nominal(&averaged, &sc);
            let (one, report) = solve(&problem, objective, options)?;
            let design = TransceiverDesign {
                precoders: replicate(&one.precoders, config.k()),
                decoders: replicate(&one.decoders, config.k()),
                weights: replicate(&one.weights, config.k()),
                duals: one.duals,
            };
            on_truth(design, report, channels, config)
        }
        BaselineMode::PowerThreshold(level) => {
            let threshold = level.per_direction(config);
            if threshold.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::InvalidSpec(format!("SI threshold must be positive, got {threshold:?}")));
            }
            let blind = config.without_distortion().without_csi_error();
            let problem = DesignProblem {
                scenarios: vec![Scenario::nominal(&channels.estimate)],
                config: &blind,
                si_limit: Some(SiLimit { threshold }),
            };
            match solve(&problem, objective, options) {
                Ok((design, report)) => on_truth(design, report, channels, config),
                Err(Error::InfeasibleThreshold { .. }) => {
                    on_truth(TransceiverDesign::zeros(config), PerformanceReport::default(), channels, config)
                }
                Err(e) => Err(e),
            }
        }
    }
}
