//! Robustness against bounded CSI errors: per-error quadratic forms of the
//! weighted MSE, their worst case over the feasible ball, and a cutting-set
//! design loop built on top.

mod cutting;
mod form;
mod oracle;

pub use cutting::{run_cutting_set, CuttingSetOptions, CuttingSetOutcome};
pub use form::{build_quadratic_form, QuadraticErrorForm};
pub use oracle::{dual_bound, worst_case_error, worst_case_errors, worst_case_mse, WorstCaseResult};
