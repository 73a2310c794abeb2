//! Alternating weighted-MSE minimization: closed-form MMSE receivers,
//! closed-form precoders under the distortion-aware power constraint, and a
//! scalar dual bisection per direction.

use std::time::Instant;

use log::debug;
use nalgebra::SVD;

use crate::channel::{cn_matrix, rng_for, ChannelRealization, ChannelSet};
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, diag_real, hermitian_eigen, hermitian_part, identity, solve_hpd, CMat};
use crate::model::{
    covariances, evaluate, power_usage, weighted_mse_objective, ChannelView, PerformanceReport, Scenario,
    TransceiverDesign,
};

/// Cap on bracket doublings in every dual search.
const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// Dominant right singular vectors of the desired channels.
    Rsm,
    Random(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Relative tolerance on the power-constraint residual.
    pub dual_tol: f64,
    pub init: InitMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iters: 100, rel_tol: 1e-6, dual_tol: 1e-9, init: InitMode::Rsm }
    }
}

impl SolverOptions {
    pub fn from_config(config: &SystemConfig) -> Self {
        SolverOptions { max_iters: config.max_iters, rel_tol: config.rel_tol, ..Default::default() }
    }
}

/// Initial precoders scaled so that every direction uses its full power.
pub fn init_precoders(channels: &ChannelSet, config: &SystemConfig, mode: InitMode) -> [Vec<CMat>; 2] {
    let mut rng = match mode {
        InitMode::Random(seed) => Some(rng_for(seed, 7)),
        InitMode::Rsm => None,
    };
    let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
    for i in 0..DIRECTIONS {
        let (n, d) = (config.n(i), config.d(i));
        for k in 0..config.k() {
            let v = match rng.as_mut() {
                Some(r) => cn_matrix(r, n, d, 1.0),
                None => {
                    let svd = SVD::new(channels.get(i, i, k).clone(), false, true);
                    let vt = svd.v_t.expect("right singular vectors requested");
                    // rows of vᴴ are the right singular vectors, sorted by singular value
                    let mut v = CMat::zeros(n, d);
                    for col in 0..d.min(vt.nrows()) {
                        for r in 0..n {
                            v[(r, col)] = vt[(col, r)].conj();
                        }
                    }
                    v
                }
            };
            out[i].push(v);
        }
        let used = power_usage(&out[i], &config.theta_tx[i], config.k());
        let scale = if used > 0.0 { (config.max_power[i] / used).sqrt() } else { 0.0 };
        out[i].iter_mut().for_each(|v| *v *= c(scale, 0.0));
    }
    out
}

/// Leakage term `J_i^k` collecting the inter-carrier distortion seen through
/// every receiver.
pub fn leakage_matrix(
    decoders: &[Vec<CMat>; 2],
    weights: &[Vec<CMat>; 2],
    channels: &ChannelSet,
    config: &SystemConfig,
    i: usize,
    k: usize,
) -> CMat {
    let n = config.n(i);
    let mut j_mat = CMat::zeros(n, n);
    for j in 0..DIRECTIONS {
        // Σ_l diag(U S Uᴴ) at receiver j, scaled per chain by Θ_rx,j
        let mut rx_diag = vec![0.0; config.m(j)];
        let mut tx_diag = vec![0.0; n];
        for l in 0..config.k() {
            let usu = &decoders[j][l] * &weights[j][l] * decoders[j][l].adjoint();
            for (r, v) in rx_diag.iter_mut().enumerate() {
                *v += usu[(r, r)].re * config.theta_rx[j][r];
            }
            let h = channels.get(j, i, l);
            let g = h.adjoint() * &usu * h;
            for (r, v) in tx_diag.iter_mut().enumerate() {
                *v += g[(r, r)].re * config.theta_tx[i][r];
            }
        }
        let h = channels.get(j, i, k);
        j_mat += h.adjoint() * diag_real(&rx_diag) * h + diag_real(&tx_diag);
    }
    hermitian_part(&j_mat)
}

/// Self-interference power limit imposed on every transmitter:
/// `Σ_k tr(H_ji^k V_i^k V_i^kᴴ H_ji^kᴴ) <= threshold[i]`. Infinite entries
/// leave that transmitter unconstrained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiLimit {
    pub threshold: [f64; 2],
}

/// A weighted-MSE design problem averaged over one or more channel scenarios.
#[derive(Clone, Debug)]
pub struct DesignProblem<'a> {
    pub scenarios: Vec<Scenario<'a>>,
    pub config: &'a SystemConfig,
    pub si_limit: Option<SiLimit>,
}

/// Per-subcarrier quadratic model `tr(Vᴴ Q V) − 2 Re tr(Vᴴ B)` of the
/// objective in the precoder of one direction.
struct Quadratic {
    q: CMat,
    b: CMat,
}

/// Spectral form of `V(ι) = (Q + ι D)⁻¹ B` in `D^{1/2}`-scaled coordinates.
struct Spectral {
    lambda: Vec<f64>,
    basis: CMat,
    rhs: CMat,
    row_energy: Vec<f64>,
}

fn spectral(quad: &Quadratic, d_sqrt_inv: &[f64]) -> Spectral {
    let scale = diag_real(d_sqrt_inv);
    let (lambda, basis) = hermitian_eigen(&(&scale * &quad.q * &scale));
    let rhs = basis.adjoint() * &scale * &quad.b;
    let row_energy = (0..rhs.nrows()).map(|r| rhs.row(r).iter().map(|z| z.norm_sqr()).sum()).collect();
    Spectral { lambda, basis, rhs, row_energy }
}

/// Eigenvalue floor: relative ridge for rank-deficient quadratic terms at ι = 0.
fn floor_of(specs: &[Spectral]) -> f64 {
    let top = specs.iter().flat_map(|s| s.lambda.iter()).fold(0.0f64, |a, &b| a.max(b));
    crate::linalg::RIDGE * top.max(f64::MIN_POSITIVE)
}

fn power_at(specs: &[Spectral], floor: f64, iota: f64) -> f64 {
    specs
        .iter()
        .flat_map(|s| s.lambda.iter().zip(&s.row_energy))
        .map(|(&l, &e)| if e == 0.0 { 0.0 } else { e / (l.max(floor) + iota).powi(2) })
        .sum()
}

fn precoder_at(spec: &Spectral, d_sqrt_inv: &[f64], floor: f64, iota: f64) -> CMat {
    let inv: Vec<f64> = spec.lambda.iter().map(|&l| 1.0 / (l.max(floor) + iota)).collect();
    diag_real(d_sqrt_inv) * &spec.basis * diag_real(&inv) * &spec.rhs
}

/// Smallest ι >= 0 with `power(ι) <= budget` (to bisection precision).
fn bisect_dual(power: impl Fn(f64) -> f64, budget: f64, direction: usize) -> Result<f64> {
    if power(0.0) <= budget {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while power(hi) > budget {
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::DualSearch { direction });
        }
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if power(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

impl<'a> DesignProblem<'a> {
    pub fn nominal(channels: &'a ChannelSet, config: &'a SystemConfig) -> Self {
        DesignProblem { scenarios: vec![Scenario::nominal(channels)], config, si_limit: None }
    }

    fn init_channels(&self) -> &'a ChannelSet {
        self.scenarios[0].cancellation
    }

    fn check(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Dimension("design problem without scenarios".into()));
        }
        self.config.validate()?;
        for s in &self.scenarios {
            s.propagation.check(self.config)?;
            s.cancellation.check(self.config)?;
        }
        Ok(())
    }

    /// Scenario-averaged weighted MSE.
    pub fn objective(&self, design: &TransceiverDesign) -> Result<f64> {
        let mut total = 0.0;
        for s in &self.scenarios {
            total += weighted_mse_objective(design, *s, self.config, true)?;
        }
        Ok(total / self.scenarios.len() as f64)
    }

    /// MMSE receivers for the scenario-averaged MSE.
    pub fn update_receivers(&self, precoders: &[Vec<CMat>; 2]) -> Result<[Vec<CMat>; 2]> {
        let cfg = self.config;
        let sigmas = self
            .scenarios
            .iter()
            .map(|s| covariances(precoders, *s, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
        for i in 0..DIRECTIONS {
            for k in 0..cfg.k() {
                let mut lhs = CMat::zeros(cfg.m(i), cfg.m(i));
                let mut rhs = CMat::zeros(cfg.m(i), cfg.d(i));
                for (s, sig) in self.scenarios.iter().zip(&sigmas) {
                    let hv = s.desired(i, k) * &precoders[i][k];
                    lhs += &sig[i][k] + &hv * hv.adjoint();
                    rhs += hv;
                }
                out[i].push(solve_hpd(&lhs, &rhs, "receiver normal matrix")?);
            }
        }
        Ok(out)
    }

    fn quadratic(&self, decoders: &[Vec<CMat>; 2], weights: &[Vec<CMat>; 2], i: usize, k: usize) -> Quadratic {
        let cfg = self.config;
        let n = cfg.n(i);
        let mut q = CMat::zeros(n, n);
        let mut b = CMat::zeros(n, cfg.d(i));
        for s in &self.scenarios {
            let h = s.desired(i, k);
            let hu = h.adjoint() * &decoders[i][k];
            q += leakage_matrix(decoders, weights, s.propagation, cfg, i, k);
            q += &hu * &weights[i][k] * hu.adjoint();
            b += &hu * &weights[i][k];
            let j = 1 - i;
            let resid = s.propagation.get(j, i, k) - s.cancellation.get(j, i, k);
            if resid.iter().any(|z| z.norm_sqr() > 0.0) {
                let ru = resid.adjoint() * &decoders[j][k];
                q += &ru * &weights[j][k] * ru.adjoint();
            }
        }
        let t = c(1.0 / self.scenarios.len() as f64, 0.0);
        Quadratic { q: hermitian_part(&(q * t)), b: b * t }
    }

    /// Closed-form precoders with the power dual found by bisection. Returns
    /// the precoders and `ι_i` per direction.
    pub fn update_precoders(
        &self,
        decoders: &[Vec<CMat>; 2],
        weights: &[Vec<CMat>; 2],
        dual_tol: f64,
    ) -> Result<([Vec<CMat>; 2], [f64; 2])> {
        let cfg = self.config;
        let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
        let mut duals = [0.0; 2];
        for i in 0..DIRECTIONS {
            let quads: Vec<Quadratic> = (0..cfg.k()).map(|k| self.quadratic(decoders, weights, i, k)).collect();
            let (v, iota) = match self.si_limit {
                Some(lim) if lim.threshold[i].is_finite() => self.solve_with_si_limit(&quads, i, lim.threshold[i], dual_tol)?,
                _ => self.solve_power_only(&quads, i, dual_tol)?,
            };
            out[i] = v;
            duals[i] = iota;
        }
        Ok((out, duals))
    }

    fn d_sqrt_inv(&self, i: usize) -> Vec<f64> {
        let k = self.config.k() as f64;
        self.config.theta_tx[i].iter().map(|t| 1.0 / (1.0 + k * t).sqrt()).collect()
    }

    fn solve_power_only(&self, quads: &[Quadratic], i: usize, dual_tol: f64) -> Result<(Vec<CMat>, f64)> {
        let cfg = self.config;
        let budget = cfg.max_power[i];
        if budget == 0.0 {
            return Ok((vec![CMat::zeros(cfg.n(i), cfg.d(i)); cfg.k()], 0.0));
        }
        let dsi = self.d_sqrt_inv(i);
        let specs: Vec<Spectral> = quads.iter().map(|q| spectral(q, &dsi)).collect();
        let floor = floor_of(&specs);
        let iota = bisect_dual(|x| power_at(&specs, floor, x), budget, i)?;
        let used = power_at(&specs, floor, iota);
        if iota > 0.0 && (used - budget).abs() > dual_tol * budget.max(1.0) {
            debug!("direction {i}: dual residual {} above tolerance", used - budget);
        }
        Ok((specs.iter().map(|s| precoder_at(s, &dsi, floor, iota)).collect(), iota))
    }

    fn si_power(&self, precoders: &[CMat], i: usize) -> f64 {
        let j = 1 - i;
        let h = self.scenarios[0].propagation;
        precoders.iter().enumerate().map(|(k, v)| (h.get(j, i, k) * v).norm_squared()).sum()
    }

    /// Nested bisection: outer over the interference dual μ, inner over ι.
    /// The partial dual maximum is concave in μ with derivative
    /// `SI(μ) − threshold`, so the outer sign test is monotone.
    fn solve_with_si_limit(
        &self,
        quads: &[Quadratic],
        i: usize,
        threshold: f64,
        dual_tol: f64,
    ) -> Result<(Vec<CMat>, f64)> {
        let j = 1 - i;
        let h = self.scenarios[0].propagation;
        let at_mu = |mu: f64| -> Result<(Vec<CMat>, f64)> {
            let shifted: Vec<Quadratic> = quads
                .iter()
                .enumerate()
                .map(|(k, q)| {
                    let g = h.get(j, i, k);
                    Quadratic { q: hermitian_part(&(&q.q + g.adjoint() * g * c(mu, 0.0))), b: q.b.clone() }
                })
                .collect();
            self.solve_power_only(&shifted, i, dual_tol)
        };
        let si_at = |mu: f64| -> Result<f64> { Ok(self.si_power(&at_mu(mu)?.0, i)) };

        if si_at(0.0)? <= threshold {
            return at_mu(0.0);
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while si_at(hi)? > threshold {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::InfeasibleThreshold { threshold });
            }
        }
        let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= 1e-13 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if si_at(mid)? > threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at_mu(hi)
    }

    /// Alternates precoder and receiver updates from `init` with fixed weights.
    pub fn run(
        &self,
        init: [Vec<CMat>; 2],
        weights: [Vec<CMat>; 2],
        options: &SolverOptions,
    ) -> Result<(TransceiverDesign, PerformanceReport)> {
        self.check()?;
        let mut design = TransceiverDesign::with_precoders(init, self.config);
        design.weights = weights;
        design.decoders = self.update_receivers(&design.precoders)?;
        let mut report = PerformanceReport { initial_objective: self.objective(&design)?, ..Default::default() };
        let mut prev = report.initial_objective;
        for it in 0..options.max_iters {
            let start = Instant::now();
            let (v, duals) = self.update_precoders(&design.decoders, &design.weights, options.dual_tol)?;
            design.precoders = v;
            design.duals = duals;
            design.decoders = self.update_receivers(&design.precoders)?;
            let obj = self.objective(&design)?;
            if !obj.is_finite() {
                return Err(Error::Numerical(format!("objective became {obj} at iteration {it}")));
            }
            report.objective_trace.push(obj);
            report.iteration_seconds.push(start.elapsed().as_secs_f64());
            let change = (prev - obj).abs();
            prev = obj;
            if change <= options.rel_tol * obj.abs().max(f64::MIN_POSITIVE) {
                report.converged = true;
                break;
            }
        }
        let eval = evaluate(&design, self.scenarios[0], self.config, true)?;
        report.mse = eval.mse;
        report.rate = eval.rate;
        report.power = eval.power;
        Ok((design, report))
    }

    pub fn initial_precoders(&self, mode: InitMode) -> [Vec<CMat>; 2] {
        init_precoders(self.init_channels(), self.config, mode)
    }
}

pub(crate) fn identity_weights(config: &SystemConfig) -> [Vec<CMat>; 2] {
    [vec![identity(config.d(0)); config.k()], vec![identity(config.d(1)); config.k()]]
}

/// MMSE receivers `U = (Σ + HVVᴴHᴴ)⁻¹ H V` for every direction and subcarrier.
pub fn update_receivers(
    precoders: &[Vec<CMat>; 2],
    scen: Scenario<'_>,
    config: &SystemConfig,
) -> Result<[Vec<CMat>; 2]> {
    DesignProblem { scenarios: vec![scen], config, si_limit: None }.update_receivers(precoders)
}

/// Precoders minimizing the weighted MSE under the power constraints.
pub fn update_precoders(
    decoders: &[Vec<CMat>; 2],
    weights: &[Vec<CMat>; 2],
    scen: Scenario<'_>,
    config: &SystemConfig,
    dual_tol: f64,
) -> Result<([Vec<CMat>; 2], [f64; 2])> {
    DesignProblem { scenarios: vec![scen], config, si_limit: None }.update_precoders(decoders, weights, dual_tol)
}

/// Weighted sum-MSE design on the estimated channels with identity weights.
pub fn run_altqcp(
    channels: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
) -> Result<(TransceiverDesign, PerformanceReport)> {
    run_altqcp_weighted(channels, config, options, identity_weights(config))
}

pub fn run_altqcp_weighted(
    channels: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
    weights: [Vec<CMat>; 2],
) -> Result<(TransceiverDesign, PerformanceReport)> {
    let problem = DesignProblem {
        scenarios: vec![channels.scenario(ChannelView::Estimated)],
        config,
        si_limit: None,
    };
    problem.run(problem.initial_precoders(options.init), weights, options)
}
