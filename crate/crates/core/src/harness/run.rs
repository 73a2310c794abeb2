use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{Algorithm, ExperimentSpec, SweepPoint};
use crate::altqcp::{run_altqcp, SolverOptions};
use crate::baselines::run_baseline;
use crate::channel::{draw_channels_with, perturb_csi_with, rng_for, ChannelRealization};
use crate::config::format_db;
use crate::error::{Error, Result};
use crate::model::{evaluate, ChannelView, PerformanceReport, TransceiverDesign};
use crate::robust::{run_cutting_set, worst_case_mse, CuttingSetOptions};
use crate::wmmse::run_wmmse;

pub const METRIC_SUM_MSE: &str = "sum_mse";
pub const METRIC_WC_MSE: &str = "wc_mse";
pub const METRIC_SUM_RATE: &str = "sum_rate";
pub const METRIC_ITERATIONS: &str = "iterations";
pub const METRIC_OBJECTIVE: &str = "objective";

/// One long-format row of the results table. `iteration` is only set for
/// objective-trace rows, where 0 is the initial point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub trial: usize,
    pub algorithm: String,
    pub metric: String,
    pub iteration: Option<usize>,
    pub value: f64,
    pub channel_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub trial: usize,
    pub algorithm: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

impl ExperimentResults {
    /// Values of one metric for one algorithm at one sweep value, in trial order.
    pub fn values(&self, algorithm: &str, metric: &str, sweep_value: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && r.metric == metric && r.sweep_value == sweep_value)
            .map(|r| r.value)
            .collect()
    }
}

/// Draws the trial's channels. The same generator then feeds the CSI error,
/// so every algorithm and every sweep value of a trial share one realization
/// whenever the dimensions agree.
pub fn trial_channels(spec: &ExperimentSpec, point: &SweepPoint, trial: usize) -> Result<ChannelRealization> {
    let mut rng = rng_for(spec.seed, trial as u64);
    let mut ch = draw_channels_with(&point.config, &spec.stats(), &mut rng);
    if let Some(mode) = spec.perturb_mode() {
        perturb_csi_with(&mut ch, &mut rng, mode)?;
    }
    Ok(ch)
}

struct Outcome {
    design: TransceiverDesign,
    report: PerformanceReport,
    /// Realization the worst case is taken over.
    half_duplex: bool,
}

fn run_one(
    alg: Algorithm,
    spec: &ExperimentSpec,
    ch: &ChannelRealization,
    point: &SweepPoint,
) -> Result<Outcome> {
    let cfg = &point.config;
    let opts = SolverOptions::from_config(cfg);
    let on_truth = |design: TransceiverDesign, mut report: PerformanceReport| -> Result<Outcome> {
        let eval = evaluate(&design, ch.scenario(ChannelView::True), cfg, false)?;
        report.mse = eval.mse;
        report.rate = eval.rate;
        report.power = eval.power;
        Ok(Outcome { design, report, half_duplex: false })
    };
    match alg {
        Algorithm::Altqcp => {
            let (d, r) = run_altqcp(ch, cfg, &opts)?;
            on_truth(d, r)
        }
        Algorithm::Wmmse => {
            let (d, r) = run_wmmse(ch, cfg, &opts)?;
            on_truth(d, r)
        }
        Algorithm::CuttingSet => {
            let cs = CuttingSetOptions {
                solver: opts,
                max_cuts: spec.cutting_set.max_cuts,
                rel_tol: spec.cutting_set.rel_tol,
            };
            let out = run_cutting_set(ch, cfg, &cs)?;
            on_truth(out.design, out.report)
        }
        other => {
            let mode = other.baseline().expect("remaining algorithms are baselines");
            let (design, report) = run_baseline(mode, spec.objective(), ch, cfg, &opts)?;
            Ok(Outcome { design, report, half_duplex: other == Algorithm::Hd })
        }
    }
}

fn run_trial(spec: &ExperimentSpec, point: &SweepPoint, trial: usize) -> Result<ExperimentResults> {
    let ch = trial_channels(spec, point, trial)?;
    let hash = ch.digest();
    let cfg = &point.config;
    let mut out = ExperimentResults::default();
    for &alg in &spec.algorithms {
        let start = Instant::now();
        let o = run_one(alg, spec, &ch, point)?;
        let seconds = start.elapsed().as_secs_f64();
        let wc = if o.half_duplex {
            worst_case_mse(&o.design, &ch.half_duplex(), cfg)?
        } else {
            worst_case_mse(&o.design, &ch, cfg)?
        };
        let row = |metric: &str, iteration: Option<usize>, value: f64| ResultRow {
            sweep_param: point.param_name().to_string(),
            sweep_value: point.value_text(),
            trial,
            algorithm: alg.name().to_string(),
            metric: metric.to_string(),
            iteration,
            value,
            channel_hash: hash.clone(),
        };
        let r = &o.report;
        let scalars = [
            (METRIC_SUM_MSE, r.sum_mse()),
            (METRIC_WC_MSE, wc),
            (METRIC_SUM_RATE, r.weighted_sum_rate(cfg.rate_weights)),
            (METRIC_ITERATIONS, r.iterations() as f64),
        ];
        for (metric, value) in scalars {
            if !value.is_finite() {
                return Err(Error::Numerical(format!("{alg} produced {metric} = {value} in trial {trial}")));
            }
            out.rows.push(row(metric, None, value));
        }
        let trace = std::iter::once(r.initial_objective).chain(r.objective_trace.iter().copied());
        out.rows.extend(trace.enumerate().map(|(it, v)| row(METRIC_OBJECTIVE, Some(it), v)));
        out.timings.push(TimingRow {
            sweep_param: point.param_name().to_string(),
            sweep_value: point.value_text(),
            trial,
            algorithm: alg.name().to_string(),
            seconds,
        });
    }
    Ok(out)
}

/// Runs every (sweep value, trial) pair, in parallel on the current rayon
/// pool, and concatenates the results in sweep-then-trial order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let points = spec.points();
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..spec.n_trials).map(move |t| (p, t))).collect();
    info!("running {} trials over {} sweep points", spec.n_trials, points.len());
    let parts: Vec<ExperimentResults> =
        jobs.par_iter().map(|&(p, t)| run_trial(spec, &points[p], t)).collect::<Result<_>>()?;
    let mut all = ExperimentResults::default();
    for part in parts {
        all.rows.extend(part.rows);
        all.timings.extend(part.timings);
    }
    Ok(all)
}

/// First line of `results.csv`.
pub fn header_comment(spec: &ExperimentSpec) -> String {
    format!("# spec_hash={} seed={} kappa_db={}", spec.digest(), spec.seed, format_db(spec.system.kappa.0))
}

pub fn write_rows<T: Serialize>(path: &Path, comment: Option<&str>, rows: &[T]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    if let Some(c) = comment {
        writeln!(file, "{c}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` pairs of the leading comment line of a results file.
pub fn read_header(path: &Path) -> Result<Vec<(String, String)>> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(first
        .strip_prefix('#')
        .map(|rest| {
            rest.split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .unwrap_or_default())
}

/// Reads a results table, skipping `#` comment lines.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `results.csv` and `timings.csv` into `dir`, returning the results
/// path. Only the timings file depends on the machine.
pub fn write_experiment(spec: &ExperimentSpec, results: &ExperimentResults, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("results.csv");
    write_rows(&path, Some(&header_comment(spec)), &results.rows)?;
    write_rows(&dir.join("timings.csv"), None, &results.timings)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(algs: &str) -> ExperimentSpec {
        ExperimentSpec::from_json(&format!(
            r#"{{"system": {{"subcarriers": 2, "max_iters": 20}},
                "sweep": {{"param": "kappa_db", "values": [-40, -20]}},
                "algorithms": {algs}, "n_trials": 2, "seed": 11}}"#
        ))
        .unwrap()
    }

    #[test]
    fn channels_shared_within_trial() {
        let spec = tiny(r#"["altqcp", "wmmse", "kappa0"]"#);
        let res = run_experiment(&spec).unwrap();
        for trial in 0..2 {
            let hashes: std::collections::BTreeSet<_> =
                res.rows.iter().filter(|r| r.trial == trial).map(|r| r.channel_hash.as_str()).collect();
            assert_eq!(hashes.len(), 1);
        }
        let t0: Vec<_> = res.rows.iter().filter(|r| r.trial == 0).map(|r| &r.channel_hash).collect();
        let t1: Vec<_> = res.rows.iter().filter(|r| r.trial == 1).map(|r| &r.channel_hash).collect();
        assert_ne!(t0[0], t1[0]);
    }

    #[test]
    fn rows_are_canonically_ordered_and_complete() {
        let spec = tiny(r#"["altqcp", "hd"]"#);
        let res = run_experiment(&spec).unwrap();
        let scalar: Vec<_> = res.rows.iter().filter(|r| r.iteration.is_none()).collect();
        assert_eq!(scalar.len(), 2 * 2 * 2 * 4);
        assert_eq!(scalar[0].sweep_value, "-40.000000");
        assert_eq!(scalar.last().unwrap().sweep_value, "-20.000000");
        assert!(res.rows.iter().all(|r| r.value.is_finite()));
        let iters: f64 = ["-40.000000", "-20.000000"]
            .iter()
            .flat_map(|x| res.values("altqcp", METRIC_ITERATIONS, x))
            .sum();
        let objective = res.rows.iter().filter(|r| r.algorithm == "altqcp" && r.metric == METRIC_OBJECTIVE);
        assert_eq!(objective.count(), 2 * 2 + iters as usize);
    }

    #[test]
    fn parallel_matches_serial() {
        let spec = tiny(r#"["wmmse"]"#);
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_experiment(&spec)).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_experiment(&spec)).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
