use nalgebra::DVector;
use rayon::prelude::*;

use super::form::{build_quadratic_form, QuadraticErrorForm};
use crate::channel::ChannelRealization;
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::Result;
use crate::linalg::{c, hermitian_eigen, identity, CMat, C64};
use crate::model::{weighted_mse_objective, Scenario, TransceiverDesign};

/// Relative size below which the top-eigenspace part of `m` counts as zero.
const HARD_CASE_TOL: f64 = 1e-10;
const MAX_SECULAR_STEPS: usize = 200;

#[derive(Clone, Debug)]
pub struct WorstCaseResult {
    pub b_star: DVector<C64>,
    /// Ball multiplier; infinite when the radius is zero.
    pub rho_star: f64,
    pub value: f64,
    pub delta_star: CMat,
}

/// `−g(ρ) = mᴴ(ρI − M)⁻¹m + ‖c‖² + ρζ²`, an upper bound on the worst-case
/// value for every `ρ > λ_max(M)`.
pub fn dual_bound(form: &QuadraticErrorForm, zeta: f64, rho: f64) -> f64 {
    let a = form.operator();
    let big_m = a.adjoint() * &a;
    let m = a.adjoint() * &form.c_vec;
    let shifted = identity(big_m.nrows()) * c(rho, 0.0) - big_m;
    let x = shifted.lu().solve(&m).unwrap_or_else(|| DVector::from_element(m.len(), c(f64::INFINITY, 0.0)));
    m.dotc(&x).re + form.c_vec.norm_squared() + rho * zeta * zeta
}

/// Maximizes `‖C D̃ b + c‖²` over `‖b‖ <= ζ` through the secular equation
/// `‖(ρI − M)⁻¹ m‖ = ζ`, `ρ > λ_max(M)`.
pub fn worst_case_error(form: &QuadraticErrorForm, zeta: f64) -> WorstCaseResult {
    let a = form.operator();
    let dim = a.ncols();
    let finish = |b: DVector<C64>, rho: f64| {
        let value = (&a * &b + &form.c_vec).norm_squared();
        WorstCaseResult { delta_star: form.delta(&b), b_star: b, rho_star: rho, value }
    };
    if zeta <= 0.0 || dim == 0 {
        return finish(DVector::zeros(dim), f64::INFINITY);
    }
    let big_m = a.adjoint() * &a;
    let m = a.adjoint() * &form.c_vec;
    let (lambda, q) = hermitian_eigen(&big_m);
    let mt = q.adjoint() * &m;
    let energy: Vec<f64> = mt.iter().map(|z| z.norm_sqr()).collect();
    let lmax = *lambda.last().expect("non-empty spectrum");
    let scale = lmax.abs().max(lambda[0].abs()).max(f64::MIN_POSITIVE);
    let top: Vec<usize> = (0..dim).filter(|&n| lmax - lambda[n] <= HARD_CASE_TOL * scale).collect();
    let m_norm = m.norm();
    let top_part = top.iter().map(|&n| energy[n]).sum::<f64>().sqrt();
    let b_at = |rho: f64| {
        let coef = DVector::from_fn(dim, |n, _| {
            let gap = rho - lambda[n];
            if gap > 0.0 { mt[n] / gap } else { c(0.0, 0.0) }
        });
        &q * coef
    };

    if top_part <= HARD_CASE_TOL * m_norm.max(f64::MIN_POSITIVE) || m_norm == 0.0 {
        let partial = b_at(lmax);
        let pn = partial.norm();
        if pn <= zeta {
            let fill = (zeta * zeta - pn * pn).max(0.0).sqrt();
            let b = partial + q.column(top[0]).into_owned() * c(fill, 0.0);
            return finish(b, lmax);
        }
    }

    // φ(ρ) = 1/‖b(ρ)‖ − 1/ζ is increasing and nearly linear on (λmax, ∞)
    let norm2 = |rho: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut dv = 0.0;
        for (l, e) in lambda.iter().zip(&energy) {
            let gap = rho - l;
            v += e / (gap * gap);
            dv -= 2.0 * e / (gap * gap * gap);
        }
        (v, dv)
    };
    let mut lo = lmax;
    let mut hi = lmax + m_norm / zeta;
    let mut rho = hi;
    for _ in 0..MAX_SECULAR_STEPS {
        let (v, dv) = norm2(rho);
        let nb = v.sqrt();
        if nb > zeta {
            lo = rho;
        } else {
            hi = rho;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        let phi = 1.0 / nb - 1.0 / zeta;
        let dphi = -0.5 * dv / (v * nb);
        let mut next = rho - phi / dphi;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - rho).abs() <= 1e-15 * rho.abs().max(1.0) {
            rho = next;
            break;
        }
        rho = next;
    }
    finish(b_at(rho), rho)
}

/// Worst case of every error matrix with a positive radius, computed
/// independently, in `(i, j, k)` order.
pub fn worst_case_errors(
    design: &TransceiverDesign,
    channels: &ChannelRealization,
    config: &SystemConfig,
) -> Result<Vec<((usize, usize, usize), QuadraticErrorForm, WorstCaseResult)>> {
    let mut keys = Vec::new();
    for i in 0..DIRECTIONS {
        for j in 0..DIRECTIONS {
            for k in 0..config.k() {
                if channels.radius[i][j][k] > 0.0 {
                    keys.push((i, j, k));
                }
            }
        }
    }
    keys.into_par_iter()
        .map(|(i, j, k)| {
            let form = build_quadratic_form(design, channels, config, i, j, k)?;
            let wc = worst_case_error(&form, channels.radius[i][j][k]);
            Ok(((i, j, k), form, wc))
        })
        .collect()
}

/// Nominal sum MSE plus the worst-case increment of each error matrix taken
/// alone.
pub fn worst_case_mse(design: &TransceiverDesign, channels: &ChannelRealization, config: &SystemConfig) -> Result<f64> {
    let mut plain = design.clone();
    for (i, w) in plain.weights.iter_mut().enumerate() {
        *w = vec![identity(config.d(i)); config.k()];
    }
    let nominal = weighted_mse_objective(&plain, Scenario::nominal(&channels.estimate), config, true)?;
    let extra: f64 = worst_case_errors(&plain, channels, config)?
        .iter()
        .map(|(_, form, wc)| (wc.value - form.c_vec.norm_squared()).max(0.0))
        .sum();
    Ok(nominal + extra)
}
