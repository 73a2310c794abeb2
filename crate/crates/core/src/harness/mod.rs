//! Monte Carlo experiment runner: JSON experiment specs, seeded trials over
//! parameter sweeps, CSV results, aggregation and per-figure plot tables.

mod plot;
mod run;
mod spec;
mod summary;
mod validate;

pub use plot::{emit_plot_data, ConvergenceRow, Figure, PlotData, SeriesRow};
pub use run::{
    header_comment, read_header, read_rows, run_experiment, trial_channels, write_experiment, write_rows,
    ExperimentResults, ResultRow, TimingRow, METRIC_ITERATIONS, METRIC_OBJECTIVE, METRIC_SUM_MSE, METRIC_SUM_RATE,
    METRIC_WC_MSE,
};
pub use spec::{
    Algorithm, ChannelSpec, CsiErrorSpec, CuttingSetSpec, ExperimentSpec, ObjectiveSpec, Sweep, SweepParam,
    SweepPoint, SweepValue, SystemSpec,
};
pub use summary::{parse_columns, summarize, write_aggregates, Aggregate, GROUP_COLUMNS};
pub use validate::{validate_model, ModelValidation, ValidationTolerances};
