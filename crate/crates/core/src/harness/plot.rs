use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use super::run::{ResultRow, METRIC_OBJECTIVE, METRIC_SUM_RATE, METRIC_WC_MSE};
use super::summary::summarize;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Convergence,
    WcmseVsKappa,
    WcmseVsZeta,
    WcmseVsNoise,
    SrVsKappa,
    SrVsNoise,
    SrVsPower,
}

impl Figure {
    pub const ALL: [Figure; 7] = [
        Figure::Convergence,
        Figure::WcmseVsKappa,
        Figure::WcmseVsZeta,
        Figure::WcmseVsNoise,
        Figure::SrVsKappa,
        Figure::SrVsNoise,
        Figure::SrVsPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Convergence => "convergence",
            Figure::WcmseVsKappa => "wcmse_vs_kappa",
            Figure::WcmseVsZeta => "wcmse_vs_zeta",
            Figure::WcmseVsNoise => "wcmse_vs_noise",
            Figure::SrVsKappa => "sr_vs_kappa",
            Figure::SrVsNoise => "sr_vs_noise",
            Figure::SrVsPower => "sr_vs_power",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|f| f.name()).collect();
            Error::InvalidSpec(format!("unknown figure {name:?}; expected one of {}", names.join(", ")))
        })
    }

    /// Sweep parameter and metric of the swept figures.
    fn axes(self) -> Option<(&'static str, &'static str)> {
        Some(match self {
            Figure::Convergence => return None,
            Figure::WcmseVsKappa => ("kappa_db", METRIC_WC_MSE),
            Figure::WcmseVsZeta => ("zeta_db", METRIC_WC_MSE),
            Figure::WcmseVsNoise => ("sigma2_db", METRIC_WC_MSE),
            Figure::SrVsKappa => ("kappa_db", METRIC_SUM_RATE),
            Figure::SrVsNoise => ("sigma2_db", METRIC_SUM_RATE),
            Figure::SrVsPower => ("pmax", METRIC_SUM_RATE),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub iteration: usize,
    pub algorithm: String,
    pub kappa_db: String,
    pub objective_mean: f64,
    pub objective_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub x: f64,
    pub series: String,
    pub y: f64,
    pub y_std: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlotData {
    Convergence(Vec<ConvergenceRow>),
    Series(Vec<SeriesRow>),
}

impl PlotData {
    pub fn len(&self) -> usize {
        match self {
            PlotData::Convergence(r) => r.len(),
            PlotData::Series(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            PlotData::Convergence(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
            PlotData::Series(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        }
        w.flush()?;
        Ok(())
    }
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Objective traces averaged over trials. Traces that stopped early are
/// extended with their final value. `base_kappa_db` labels rows of an
/// experiment that does not sweep κ.
fn convergence(rows: &[ResultRow], base_kappa_db: &str) -> Result<Vec<ConvergenceRow>> {
    let obj: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == METRIC_OBJECTIVE).collect();
    if obj.is_empty() {
        return Err(Error::InvalidSpec("results contain no objective traces".into()));
    }
    let kappa = |r: &ResultRow| if r.sweep_param == "kappa_db" { r.sweep_value.clone() } else { base_kappa_db.to_string() };
    // (algorithm, kappa) -> trial -> trace
    let mut traces: Vec<((String, String), Vec<(usize, Vec<f64>)>)> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for r in obj {
        let key = (r.algorithm.clone(), kappa(r));
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            traces.push((key, Vec::new()));
            traces.len() - 1
        });
        let per_trial = &mut traces[slot].1;
        match per_trial.iter_mut().find(|(t, _)| *t == r.trial) {
            Some((_, tr)) => tr.push(r.value),
            None => per_trial.push((r.trial, vec![r.value])),
        }
    }
    let len = traces.iter().flat_map(|(_, ts)| ts.iter().map(|(_, t)| t.len())).max().unwrap_or(0);
    let mut out = Vec::new();
    for it in 0..len {
        for ((alg, kappa), ts) in &traces {
            let at: Vec<f64> = ts.iter().map(|(_, t)| t.get(it).copied().unwrap_or(t[t.len() - 1])).collect();
            out.push(ConvergenceRow {
                iteration: it,
                algorithm: alg.clone(),
                kappa_db: kappa.clone(),
                objective_mean: at.iter().sum::<f64>() / at.len() as f64,
                objective_min: at.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
    }
    Ok(out)
}

fn series(rows: &[ResultRow], param: &str, metric: &str) -> Result<Vec<SeriesRow>> {
    let picked: Vec<ResultRow> =
        rows.iter().filter(|r| r.sweep_param == param && r.metric == metric).cloned().collect();
    if picked.is_empty() {
        return Err(Error::InvalidSpec(format!("results hold no {metric} rows for a {param} sweep")));
    }
    let by = vec!["sweep_value".to_string(), "algorithm".to_string()];
    let aggs = summarize(&picked, &by)?;
    let xs = first_seen(picked.iter().map(|r| r.sweep_value.as_str()));
    let names = first_seen(picked.iter().map(|r| r.algorithm.as_str()));
    let mut out = Vec::with_capacity(xs.len() * names.len());
    for x in &xs {
        let xv: f64 = x.parse().map_err(|_| Error::InvalidSpec(format!("sweep value {x:?} is not numeric")))?;
        for s in &names {
            let a = aggs
                .iter()
                .find(|a| &a.key[0] == x && &a.key[1] == s)
                .ok_or_else(|| Error::InvalidSpec(format!("series {s} has no {metric} value at {param} = {x}")))?;
            out.push(SeriesRow { x: xv, series: s.clone(), y: a.mean, y_std: a.std, count: a.count });
        }
    }
    Ok(out)
}

/// Builds the table of one figure from raw result rows.
pub fn emit_plot_data(rows: &[ResultRow], figure: Figure, base_kappa_db: &str) -> Result<PlotData> {
    match figure.axes() {
        None => convergence(rows, base_kappa_db).map(PlotData::Convergence),
        Some((param, metric)) => series(rows, param, metric).map(PlotData::Series),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value_x: &str, trial: usize, alg: &str, metric: &str, it: Option<usize>, v: f64) -> ResultRow {
        ResultRow {
            sweep_param: "kappa_db".into(),
            sweep_value: value_x.into(),
            trial,
            algorithm: alg.into(),
            metric: metric.into(),
            iteration: it,
            value: v,
            channel_hash: String::new(),
        }
    }

    #[test]
    fn series_row_count() {
        let mut rows = Vec::new();
        for (xi, x) in ["-60.000000", "-40.000000", "-20.000000"].iter().enumerate() {
            for t in 0..4 {
                for alg in ["altqcp", "kappa0"] {
                    rows.push(row(x, t, alg, METRIC_WC_MSE, None, (xi + t) as f64));
                }
            }
        }
        let data = emit_plot_data(&rows, Figure::WcmseVsKappa, "-30.000000").unwrap();
        assert_eq!(data.len(), 3 * 2);
        let PlotData::Series(s) = data else { panic!() };
        assert_eq!((s[0].x, s[0].y, s[5].x, s[5].y), (-60.0, 1.5, -20.0, 3.5));
        assert!(emit_plot_data(&rows, Figure::SrVsKappa, "").is_err());
        assert!(emit_plot_data(&rows, Figure::WcmseVsZeta, "").is_err());
        rows.retain(|r| !(r.algorithm == "kappa0" && r.sweep_value == "-20.000000"));
        let err = emit_plot_data(&rows, Figure::WcmseVsKappa, "").unwrap_err();
        assert!(err.to_string().contains("kappa0"), "{err}");
    }

    #[test]
    fn convergence_pads_short_traces() {
        let rows = vec![
            row("-30.000000", 0, "altqcp", METRIC_OBJECTIVE, Some(0), 4.0),
            row("-30.000000", 0, "altqcp", METRIC_OBJECTIVE, Some(1), 2.0),
            row("-30.000000", 1, "altqcp", METRIC_OBJECTIVE, Some(0), 6.0),
            row("-30.000000", 1, "altqcp", METRIC_OBJECTIVE, Some(1), 3.0),
            row("-30.000000", 1, "altqcp", METRIC_OBJECTIVE, Some(2), 1.0),
        ];
        let PlotData::Convergence(c) = emit_plot_data(&rows, Figure::Convergence, "x").unwrap() else { panic!() };
        assert_eq!(c.len(), 3);
        assert_eq!((c[2].objective_mean, c[2].objective_min), (1.5, 1.0));
        assert_eq!(c[0].kappa_db, "-30.000000");
        let mut out = Vec::new();
        PlotData::Convergence(c).write(&mut out).unwrap();
        let header = String::from_utf8(out).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "iteration,algorithm,kappa_db,objective_mean,objective_min");
    }

    #[test]
    fn names_round_trip() {
        for f in Figure::ALL {
            assert_eq!(Figure::parse(f.name()).unwrap(), f);
        }
        assert_eq!(Figure::parse("fig9").unwrap_err().exit_code(), 2);
    }
}
