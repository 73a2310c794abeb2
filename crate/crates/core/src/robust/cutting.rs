use std::time::Instant;

use log::debug;

use super::oracle::worst_case_errors;
use crate::altqcp::{identity_weights, DesignProblem, SolverOptions};
use crate::channel::{ChannelRealization, ChannelSet};
use crate::config::SystemConfig;
use crate::error::Result;
use crate::model::{evaluate, weighted_mse_objective, PerformanceReport, Scenario, TransceiverDesign};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CuttingSetOptions {
    pub solver: SolverOptions,
    pub max_cuts: usize,
    /// Stop once `(worst case − design-time value) / worst case` falls below this.
    pub rel_tol: f64,
}

impl Default for CuttingSetOptions {
    fn default() -> Self {
        CuttingSetOptions { solver: SolverOptions::default(), max_cuts: 10, rel_tol: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct CuttingSetOutcome {
    /// Design with the lowest worst-case MSE among all cuts.
    pub design: TransceiverDesign,
    /// Evaluated on the estimated channels; `objective_trace` holds the
    /// worst-case MSE after every cut.
    pub report: PerformanceReport,
    /// Worst-case MSE minus the scenario-averaged objective the cut was
    /// designed for.
    pub gaps: Vec<f64>,
    pub worst_case: f64,
}

/// Cutting-set robust design: AltQCP on the scenario-averaged MSE over the
/// estimate and the accumulated worst-case channels, each cut adding one
/// scenario that applies every per-matrix worst-case error at once.
pub fn run_cutting_set(
    channels: &ChannelRealization,
    config: &SystemConfig,
    options: &CuttingSetOptions,
) -> Result<CuttingSetOutcome> {
    let est = &channels.estimate;
    let mut cuts: Vec<ChannelSet> = Vec::new();
    let mut best: Option<(f64, TransceiverDesign)> = None;
    let mut gaps = Vec::new();
    let mut trace = Vec::new();
    let mut seconds = Vec::new();
    let mut init: Option<[Vec<_>; 2]> = None;

    for cut in 0..options.max_cuts.max(1) {
        let start = Instant::now();
        let mut scenarios = vec![Scenario::nominal(est)];
        scenarios.extend(cuts.iter().map(|set| Scenario { propagation: set, cancellation: est }));
        let problem = DesignProblem { scenarios, config, si_limit: None };
        let start_v = init.take().unwrap_or_else(|| problem.initial_precoders(options.solver.init));
        let (design, _) = problem.run(start_v, identity_weights(config), &options.solver)?;

        let found = worst_case_errors(&design, channels, config)?;
        let nominal = weighted_mse_objective(&design, Scenario::nominal(est), config, true)?;
        let wc = nominal + found.iter().map(|(_, f, r)| (r.value - f.c_vec.norm_squared()).max(0.0)).sum::<f64>();
        let design_time = problem.objective(&design)?;
        let gap = wc - design_time;
        debug!("cut {cut}: worst case {wc:.6e}, gap {gap:.3e}");
        gaps.push(gap);
        trace.push(wc);
        seconds.push(start.elapsed().as_secs_f64());
        if best.as_ref().is_none_or(|(v, _)| wc < *v) {
            best = Some((wc, design.clone()));
        }
        if found.is_empty() || gap <= options.rel_tol * wc.abs() {
            break;
        }
        let mut next = est.clone();
        for ((i, j, k), _, r) in &found {
            *next.get_mut(*i, *j, *k) += &r.delta_star;
        }
        cuts.push(next);
        init = Some(design.precoders);
    }

    let (worst_case, design) = best.expect("at least one cut");
    let eval = evaluate(&design, Scenario::nominal(est), config, true)?;
    let report = PerformanceReport {
        mse: eval.mse,
        rate: eval.rate,
        power: eval.power,
        initial_objective: trace[0],
        objective_trace: trace,
        iteration_seconds: seconds,
        converged: gaps.last().is_some_and(|g| *g <= options.rel_tol * worst_case.abs()),
    };
    Ok(CuttingSetOutcome { design, report, gaps, worst_case })
}
