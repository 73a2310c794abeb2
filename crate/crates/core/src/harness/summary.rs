use std::collections::HashMap;
use std::io::Write;

use super::run::ResultRow;
use crate::error::{Error, Result};

/// Columns a results table can be grouped by. `metric` and `iteration` are
/// always part of the key.
pub const GROUP_COLUMNS: [&str; 5] = ["sweep_param", "sweep_value", "trial", "algorithm", "channel_hash"];

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    /// Values of the requested group-by columns, in request order.
    pub key: Vec<String>,
    pub metric: String,
    pub iteration: Option<usize>,
    pub mean: f64,
    /// Sample standard deviation, 0 for a single value.
    pub std: f64,
    pub count: usize,
}

fn column(row: &ResultRow, name: &str) -> String {
    match name {
        "sweep_param" => row.sweep_param.clone(),
        "sweep_value" => row.sweep_value.clone(),
        "trial" => row.trial.to_string(),
        "algorithm" => row.algorithm.clone(),
        "channel_hash" => row.channel_hash.clone(),
        _ => unreachable!("column names are checked up front"),
    }
}

pub fn parse_columns(list: &str) -> Result<Vec<String>> {
    let cols: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    for c in &cols {
        if c == "metric" || c == "iteration" {
            continue;
        }
        if !GROUP_COLUMNS.contains(&c.as_str()) {
            return Err(Error::InvalidSpec(format!(
                "cannot group by {c:?}; expected some of {}",
                GROUP_COLUMNS.join(", ")
            )));
        }
    }
    Ok(cols.into_iter().filter(|c| c != "metric" && c != "iteration").collect())
}

/// Mean, standard deviation and count per group. Groups appear in order of
/// their first row.
pub fn summarize(rows: &[ResultRow], by: &[String]) -> Result<Vec<Aggregate>> {
    for c in by {
        if !GROUP_COLUMNS.contains(&c.as_str()) {
            return Err(Error::InvalidSpec(format!("unknown group-by column {c:?}")));
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidSpec("results table has no rows to summarize".into()));
    }
    type Key = (Vec<String>, String, Option<usize>);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<(Key, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (by.iter().map(|c| column(r, c)).collect(), r.metric.clone(), r.iteration);
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r.value);
    }
    groups
        .into_iter()
        .map(|((key, metric, iteration), values)| {
            let n = values.len();
            let constant = values.iter().all(|&v| v == values[0]);
            let mean = if constant { values[0] } else { values.iter().sum::<f64>() / n as f64 };
            let std = if n > 1 && !constant {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            if !mean.is_finite() || !std.is_finite() {
                return Err(Error::Numerical(format!("non-finite aggregate for {metric} at {key:?}")));
            }
            Ok(Aggregate { key, metric, iteration, mean, std, count: n })
        })
        .collect()
}

pub fn write_aggregates<W: Write>(out: W, by: &[String], aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = by.iter().map(String::as_str).collect();
    header.extend(["metric", "iteration", "mean", "std", "count"]);
    w.write_record(&header)?;
    for a in aggs {
        let mut rec = a.key.clone();
        rec.push(a.metric.clone());
        rec.push(a.iteration.map(|i| i.to_string()).unwrap_or_default());
        rec.push(a.mean.to_string());
        rec.push(a.std.to_string());
        rec.push(a.count.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
