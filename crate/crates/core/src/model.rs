//! Domain types of a transceiver design and the closed-form performance
//! expressions: interference-plus-noise covariance, MSE matrix, rate and
//! power usage.

use std::f64::consts::LN_2;

use crate::channel::{ChannelRealization, ChannelSet};
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, cholesky, diag_real, hermitian_part, identity, inv_hpd, ln_det_hpd, real_trace, CMat};

/// Precoders, decoders, MSE weights and power duals for both directions,
/// indexed `[direction][subcarrier]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransceiverDesign {
    /// `N_i x d_i`
    pub precoders: [Vec<CMat>; 2],
    /// `M_i x d_i`
    pub decoders: [Vec<CMat>; 2],
    /// Hermitian positive definite `d_i x d_i`.
    pub weights: [Vec<CMat>; 2],
    pub duals: [f64; 2],
}

impl TransceiverDesign {
    /// All-zero precoders and decoders with identity weights.
    pub fn zeros(config: &SystemConfig) -> Self {
        let per = |f: &dyn Fn(usize) -> CMat| [vec![f(0); config.k()], vec![f(1); config.k()]];
        TransceiverDesign {
            precoders: per(&|i| CMat::zeros(config.n(i), config.d(i))),
            decoders: per(&|i| CMat::zeros(config.m(i), config.d(i))),
            weights: per(&|i| identity(config.d(i))),
            duals: [0.0; 2],
        }
    }

    pub fn with_precoders(precoders: [Vec<CMat>; 2], config: &SystemConfig) -> Self {
        TransceiverDesign { precoders, ..Self::zeros(config) }
    }

    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        check_precoders(&self.precoders, config)?;
        for i in 0..DIRECTIONS {
            let d = config.d(i);
            if self.decoders[i].len() != config.k() || self.weights[i].len() != config.k() {
                return Err(Error::Dimension(format!("direction {i}: expected {} subcarriers", config.k())));
            }
            for k in 0..config.k() {
                if self.decoders[i][k].shape() != (config.m(i), d) || self.weights[i][k].shape() != (d, d) {
                    return Err(Error::Dimension(format!("direction {i}, subcarrier {k}: decoder/weight shape")));
                }
            }
        }
        Ok(())
    }
}

pub fn check_precoders(precoders: &[Vec<CMat>; 2], config: &SystemConfig) -> Result<()> {
    for i in 0..DIRECTIONS {
        if precoders[i].len() != config.k() {
            return Err(Error::Dimension(format!("direction {i}: expected {} precoders", config.k())));
        }
        for (k, v) in precoders[i].iter().enumerate() {
            if v.shape() != (config.n(i), config.d(i)) {
                return Err(Error::Dimension(format!(
                    "precoder ({i},{k}) is {:?}, expected {:?}",
                    v.shape(),
                    (config.n(i), config.d(i))
                )));
            }
        }
    }
    Ok(())
}

/// Per-run performance summary. Rates are in bits per channel use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerformanceReport {
    pub mse: [Vec<f64>; 2],
    pub rate: [Vec<f64>; 2],
    pub power: [f64; 2],
    /// Objective before the first iteration.
    pub initial_objective: f64,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub iteration_seconds: Vec<f64>,
    pub converged: bool,
}

impl PerformanceReport {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len()
    }

    pub fn sum_mse(&self) -> f64 {
        self.mse.iter().flatten().sum()
    }

    pub fn weighted_sum_rate(&self, weights: [f64; 2]) -> f64 {
        (0..DIRECTIONS).map(|i| weights[i] * self.rate[i].iter().sum::<f64>()).sum()
    }
}

/// A pair of channel sets: `propagation` carries the signals, `cancellation`
/// is what the SIC stage subtracts with. Their cross-channel difference leaves
/// a residual self-interference term.
#[derive(Clone, Copy, Debug)]
pub struct Scenario<'a> {
    pub propagation: &'a ChannelSet,
    pub cancellation: &'a ChannelSet,
}

impl<'a> Scenario<'a> {
    /// Perfect SIC: the same channels propagate and cancel.
    pub fn nominal(channels: &'a ChannelSet) -> Self {
        Scenario { propagation: channels, cancellation: channels }
    }

    pub fn desired(&self, i: usize, k: usize) -> &'a CMat {
        self.propagation.get(i, i, k)
    }

    fn has_residual(&self) -> bool {
        !std::ptr::eq(self.propagation, self.cancellation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelView {
    /// Design-time view on the estimated channels with perfect SIC.
    Estimated,
    /// True channels, with SIC performed through the estimates.
    True,
}

impl ChannelRealization {
    pub fn scenario(&self, view: ChannelView) -> Scenario<'_> {
        match view {
            ChannelView::Estimated => Scenario::nominal(&self.estimate),
            ChannelView::True => Scenario { propagation: &self.truth, cancellation: &self.estimate },
        }
    }
}

/// `Σ_l diag(V^l V^lᴴ)` as a vector over chains.
pub fn chain_powers(precoders: &[CMat]) -> Vec<f64> {
    let n = precoders.first().map_or(0, |v| v.nrows());
    let mut p = vec![0.0; n];
    for v in precoders {
        for (r, pr) in p.iter_mut().enumerate() {
            *pr += v.row(r).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    p
}

/// Interference-plus-noise covariances `Σ_i^k` for all directions and
/// subcarriers, first order in the distortion coefficients.
pub fn covariances(precoders: &[Vec<CMat>; 2], scen: Scenario<'_>, config: &SystemConfig) -> Result<[Vec<CMat>; 2]> {
    check_precoders(precoders, config)?;
    scen.propagation.check(config)?;
    let k_count = config.k();
    let tx_pow = [chain_powers(&precoders[0]), chain_powers(&precoders[1])];

    let mut out: [Vec<CMat>; 2] = [Vec::with_capacity(k_count), Vec::with_capacity(k_count)];
    for i in 0..DIRECTIONS {
        let m = config.m(i);
        // received undistorted power per chain, summed over subcarriers
        let mut rx_pow = vec![0.0; m];
        for l in 0..k_count {
            for (r, p) in rx_pow.iter_mut().enumerate() {
                *p += config.noise[i][l];
                for j in 0..DIRECTIONS {
                    let hv = scen.propagation.get(i, j, l).row(r) * &precoders[j][l];
                    *p += hv.iter().map(|z| z.norm_sqr()).sum::<f64>();
                }
            }
        }
        let rx_term: Vec<f64> = rx_pow.iter().zip(&config.theta_rx[i]).map(|(p, t)| p * t).collect();
        for k in 0..k_count {
            let mut sigma = diag_real(&rx_term);
            for r in 0..m {
                sigma[(r, r)] += c(config.noise[i][k], 0.0);
            }
            for j in 0..DIRECTIONS {
                let h = scen.propagation.get(i, j, k);
                let scale: Vec<f64> = tx_pow[j].iter().zip(&config.theta_tx[j]).map(|(p, t)| p * t).collect();
                sigma += h * diag_real(&scale) * h.adjoint();
            }
            if scen.has_residual() {
                let j = 1 - i;
                let resid = scen.propagation.get(i, j, k) - scen.cancellation.get(i, j, k);
                let rv = resid * &precoders[j][k];
                sigma += &rv * rv.adjoint();
            }
            out[i].push(hermitian_part(&sigma));
        }
    }
    Ok(out)
}

/// `Σ_i^k` for one direction and subcarrier.
pub fn aggregate_covariance(
    precoders: &[Vec<CMat>; 2],
    scen: Scenario<'_>,
    config: &SystemConfig,
    i: usize,
    k: usize,
) -> Result<CMat> {
    if i >= DIRECTIONS || k >= config.k() {
        return Err(Error::Dimension(format!("no covariance ({i},{k})")));
    }
    let mut all = covariances(precoders, scen, config)?;
    Ok(all[i].swap_remove(k))
}

/// `E = (UᴴHV − I)(UᴴHV − I)ᴴ + UᴴΣU`.
pub fn mse_matrix(u: &CMat, v: &CMat, sigma: &CMat, h: &CMat) -> Result<CMat> {
    let (m, n) = h.shape();
    let d = v.ncols();
    if u.shape() != (m, d) || v.nrows() != n || sigma.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "mse_matrix: U {:?}, V {:?}, Sigma {:?}, H {:?}",
            u.shape(),
            v.shape(),
            sigma.shape(),
            h.shape()
        )));
    }
    let g = u.adjoint() * h * v - identity(d);
    Ok(hermitian_part(&(&g * g.adjoint() + u.adjoint() * sigma * u)))
}

/// `I + VᴴHᴴΣ⁻¹HV`
fn information_matrix(v: &CMat, sigma: &CMat, h: &CMat) -> Result<CMat> {
    if sigma.shape() != (h.nrows(), h.nrows()) || v.nrows() != h.ncols() {
        return Err(Error::Dimension("rate: Sigma/H/V shapes".into()));
    }
    let hv = h * v;
    let whitened = cholesky(sigma, "interference covariance")?.solve(&hv);
    Ok(hermitian_part(&(identity(v.ncols()) + hv.adjoint() * whitened)))
}

/// Achievable rate in nats, `ln|I + VᴴHᴴΣ⁻¹HV|`.
pub fn rate_nats(v: &CMat, sigma: &CMat, h: &CMat) -> Result<f64> {
    ln_det_hpd(&information_matrix(v, sigma, h)?, "rate information matrix")
}

/// Achievable rate in bits per channel use.
pub fn rate(v: &CMat, sigma: &CMat, h: &CMat) -> Result<f64> {
    Ok(rate_nats(v, sigma, h)? / LN_2)
}

/// MSE matrix of the MMSE receiver, `(I + VᴴHᴴΣ⁻¹HV)⁻¹`.
pub fn mmse_error(v: &CMat, sigma: &CMat, h: &CMat) -> Result<CMat> {
    inv_hpd(&information_matrix(v, sigma, h)?, "MMSE error matrix")
}

/// Power constraint left-hand side `tr((I + K Θ_tx) Σ_l V^l V^lᴴ)`.
pub fn power_usage(precoders: &[CMat], theta_tx: &[f64], subcarriers: usize) -> f64 {
    chain_powers(precoders)
        .iter()
        .zip(theta_tx)
        .map(|(p, t)| p * (1.0 + subcarriers as f64 * t))
        .sum()
}

/// Per-(i,k) MSE matrices of a design in a scenario.
pub fn mse_matrices(design: &TransceiverDesign, scen: Scenario<'_>, config: &SystemConfig) -> Result<[Vec<CMat>; 2]> {
    design.check(config)?;
    let sig = covariances(&design.precoders, scen, config)?;
    let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
    for i in 0..DIRECTIONS {
        for k in 0..config.k() {
            out[i].push(mse_matrix(
                &design.decoders[i][k],
                &design.precoders[i][k],
                &sig[i][k],
                scen.desired(i, k),
            )?);
        }
    }
    Ok(out)
}

/// `Σ_i Σ_k tr(S_i^k E_i^k)`; with `use_weights == false` every `S` is the identity.
pub fn weighted_mse_objective(
    design: &TransceiverDesign,
    scen: Scenario<'_>,
    config: &SystemConfig,
    use_weights: bool,
) -> Result<f64> {
    let e = mse_matrices(design, scen, config)?;
    let mut total = 0.0;
    for i in 0..DIRECTIONS {
        for (k, ek) in e[i].iter().enumerate() {
            total += if use_weights { real_trace(&(&design.weights[i][k] * ek)) } else { real_trace(ek) };
        }
    }
    Ok(total)
}

/// Evaluates MSE, rate and power of `design` in `scen`.
pub fn evaluate(
    design: &TransceiverDesign,
    scen: Scenario<'_>,
    config: &SystemConfig,
    use_weights: bool,
) -> Result<PerformanceReport> {
    let e = mse_matrices(design, scen, config)?;
    let sig = covariances(&design.precoders, scen, config)?;
    let mut report = PerformanceReport::default();
    for i in 0..DIRECTIONS {
        for k in 0..config.k() {
            let ek = &e[i][k];
            report.mse[i].push(if use_weights { real_trace(&(&design.weights[i][k] * ek)) } else { real_trace(ek) });
            report.rate[i].push(rate(&design.precoders[i][k], &sig[i][k], scen.desired(i, k))?.max(0.0));
        }
        report.power[i] = power_usage(&design.precoders[i], &config.theta_tx[i], config.k());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cn_matrix, draw_channels, rng_for, ChannelStats};
    use crate::config::UniformParams;
    use crate::linalg::{max_abs_diff, C64};
    use proptest::prelude::*;

    fn scalar_config(kappa: f64, beta: f64, sigma2: f64) -> SystemConfig {
        SystemConfig::uniform(&UniformParams {
            subcarriers: 1,
            antennas: 1,
            streams: 1,
            noise: sigma2,
            kappa,
            beta,
            zeta: 0.0,
            ..UniformParams::default()
        })
    }

    fn s(z: C64) -> CMat {
        CMat::from_element(1, 1, z)
    }

    fn random_design(config: &SystemConfig, seed: u64) -> TransceiverDesign {
        let mut rng = rng_for(seed, 42);
        let mut d = TransceiverDesign::zeros(config);
        for i in 0..DIRECTIONS {
            for k in 0..config.k() {
                d.precoders[i][k] = cn_matrix(&mut rng, config.n(i), config.d(i), 0.2);
                d.decoders[i][k] = cn_matrix(&mut rng, config.m(i), config.d(i), 3.0);
                let a = cn_matrix(&mut rng, config.d(i), config.d(i), 1.0);
                d.weights[i][k] = &a * a.adjoint() + identity(config.d(i));
            }
        }
        d
    }

    #[test]
    fn covariance_is_noise_without_distortion() {
        let cfg = SystemConfig::uniform(&UniformParams { kappa: 0.0, beta: 0.0, zeta: 0.0, ..Default::default() });
        let ch = draw_channels(&cfg, &ChannelStats::default(), 3);
        let d = random_design(&cfg, 3);
        for i in 0..2 {
            for k in 0..cfg.k() {
                let s = aggregate_covariance(&d.precoders, Scenario::nominal(&ch.estimate), &cfg, i, k).unwrap();
                assert!(max_abs_diff(&s, &(identity(2) * c(cfg.noise[i][k], 0.0))) < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_covariance_hand_expansion() {
        let (kappa, beta, sigma2) = (0.03, 0.02, 0.5);
        let cfg = scalar_config(kappa, beta, sigma2);
        let (hii, hij, vi, vj) = (c(0.7, -0.2), c(1.1, 0.4), c(0.3, 0.9), c(-0.5, 0.25));
        let ch = ChannelSet::from_fn(&cfg, |i, j, _| s(if i == j { if i == 0 { hii } else { c(9.0, 0.0) } } else if i == 0 { hij } else { c(0.0, 0.0) }));
        let prec = [vec![s(vi)], vec![s(vj)]];
        let got = aggregate_covariance(&prec, Scenario::nominal(&ch), &cfg, 0, 0).unwrap()[(0, 0)];
        let want = kappa * hii.norm_sqr() * vi.norm_sqr()
            + kappa * hij.norm_sqr() * vj.norm_sqr()
            + beta * (sigma2 + (hii * vi).norm_sqr() + (hij * vj).norm_sqr())
            + sigma2;
        assert!((got.re - want).abs() < 1e-14 && got.im.abs() < 1e-15);
    }

    #[test]
    fn covariance_hermitian_and_bounded_below() {
        let cfg = SystemConfig::uniform(&UniformParams { kappa: 0.1, beta: 0.05, ..Default::default() });
        for seed in 0..20 {
            let ch = draw_channels(&cfg, &ChannelStats::default(), seed);
            let d = random_design(&cfg, seed);
            let all = covariances(&d.precoders, ch.scenario(ChannelView::True), &cfg).unwrap();
            for (i, per) in all.iter().enumerate() {
                for (k, s) in per.iter().enumerate() {
                    assert!(max_abs_diff(s, &s.adjoint()) < 1e-12);
                    let (vals, _) = crate::linalg::hermitian_eigen(s);
                    assert!(vals[0] >= cfg.noise[i][k] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn mse_special_cases() {
        let h = CMat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.2, 0.0), c(-0.3, 0.1), c(0.8, -0.4)]);
        let v = CMat::from_row_slice(2, 1, &[c(0.6, 0.0), c(0.1, 0.3)]);
        let sigma = identity(2) * c(0.1, 0.0);
        let e = mse_matrix(&CMat::zeros(2, 1), &v, &sigma, &h).unwrap();
        assert!(max_abs_diff(&e, &identity(1)) < 1e-15);

        // UᴴHV = I: pick U along HV scaled so the product is one
        let hv = &h * &v;
        let u = &hv * c(1.0 / hv.norm_squared(), 0.0);
        let e = mse_matrix(&u, &v, &sigma, &h).unwrap();
        let want = u.adjoint() * &u * c(0.1, 0.0);
        assert!(max_abs_diff(&e, &want) < 1e-14);
        assert!(mse_matrix(&CMat::zeros(3, 1), &v, &sigma, &h).is_err());
    }

    #[test]
    fn rate_scalar_and_zero() {
        let one = s(c(1.0, 0.0));
        assert!((rate(&one, &one, &one).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rate(&s(c(0.0, 0.0)), &one, &one).unwrap(), 0.0);
    }

    #[test]
    fn power_usage_cases() {
        assert_eq!(power_usage(&[CMat::zeros(2, 1)], &[0.1, 0.1], 4), 0.0);
        // uniform kappa 0.01 over K = 4, Frobenius sum 3.0
        let k = 4;
        let theta = vec![0.01 / k as f64; 2];
        let v = CMat::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.5f64.sqrt(), 0.0)]);
        let set = vec![v; 2];
        assert!((power_usage(&set, &theta, k) - 3.03).abs() < 1e-12);

        // per-chain kappa (0.1, 0) with row norms 1 and 2: direct matrix oracle
        let v = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(2.0, 0.0), c(0.0, 0.0)]);
        let theta = [0.1, 0.0];
        let direct = real_trace(&(diag_real(&[1.1, 1.0]) * &v * v.adjoint()));
        assert!((power_usage(&[v], &theta, 1) - direct).abs() < 1e-14);
        assert!((direct - (1.1 + 4.0)).abs() < 1e-14);
    }

    #[test]
    fn objective_cases() {
        let cfg = SystemConfig::uniform(&UniformParams::default());
        let ch = draw_channels(&cfg, &ChannelStats::default(), 5);
        let scen = Scenario::nominal(&ch.estimate);
        let mut d = random_design(&cfg, 5);

        // compositional oracle: sum of per-(i,k) traces
        let sig = covariances(&d.precoders, scen, &cfg).unwrap();
        let mut direct = 0.0;
        for i in 0..2 {
            for k in 0..cfg.k() {
                let e = mse_matrix(&d.decoders[i][k], &d.precoders[i][k], &sig[i][k], ch.estimate.get(i, i, k)).unwrap();
                direct += real_trace(&(&d.weights[i][k] * e));
            }
        }
        let got = weighted_mse_objective(&d, scen, &cfg, true).unwrap();
        assert!((got - direct).abs() <= 1e-12 * direct.abs());

        let scaled = {
            let mut s = d.clone();
            s.weights.iter_mut().flatten().for_each(|w| *w *= c(2.5, 0.0));
            s
        };
        let got2 = weighted_mse_objective(&scaled, scen, &cfg, true).unwrap();
        assert!((got2 - 2.5 * got).abs() <= 1e-12 * got2);

        d.decoders.iter_mut().flatten().for_each(|u| u.fill(c(0.0, 0.0)));
        let zero = weighted_mse_objective(&d, scen, &cfg, false).unwrap();
        assert!((zero - cfg.total_streams() as f64).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn power_invariant_under_unitary_rotation(seed in 0u64..1000, angle in 0.0f64..6.28, phase in 0.0f64..6.28) {
            let cfg = SystemConfig::uniform(&UniformParams { streams: 2, ..Default::default() });
            let mut rng = rng_for(seed, 0);
            let vs: Vec<CMat> = (0..cfg.k()).map(|_| cn_matrix(&mut rng, 2, 2, 1.0)).collect();
            let q = CMat::from_row_slice(2, 2, &[
                c(angle.cos(), 0.0), C64::from_polar(-angle.sin(), phase),
                c(angle.sin(), 0.0), C64::from_polar(angle.cos(), phase),
            ]);
            let rotated: Vec<CMat> = vs.iter().map(|v| v * &q).collect();
            let a = power_usage(&vs, &cfg.theta_tx[0], cfg.k());
            let b = power_usage(&rotated, &cfg.theta_tx[0], cfg.k());
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn mse_matrix_hermitian_psd(seed in 0u64..1000) {
            let cfg = SystemConfig::uniform(&UniformParams { streams: 2, ..Default::default() });
            let ch = draw_channels(&cfg, &ChannelStats::default(), seed);
            let d = random_design(&cfg, seed);
            for per in mse_matrices(&d, ch.scenario(ChannelView::True), &cfg).unwrap() {
                for e in per {
                    prop_assert!(max_abs_diff(&e, &e.adjoint()) < 1e-10);
                    let (vals, _) = crate::linalg::hermitian_eigen(&e);
                    prop_assert!(vals[0] >= -1e-10);
                }
            }
        }
    }
}
