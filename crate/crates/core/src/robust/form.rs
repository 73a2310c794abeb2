use nalgebra::DVector;

use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{c, cholesky, identity, unvec, CMat, C64};
use crate::model::{chain_powers, weighted_mse_objective, Scenario, TransceiverDesign};

/// `f(Δ) = ‖C D̃ b + c‖² + remainder` with `vec(Δ) = D̃ b`, where `f` is the
/// weighted MSE of the design when only `Δ_ij^k` is added to the estimate.
#[derive(Clone, Debug)]
pub struct QuadraticErrorForm {
    pub c_mat: CMat,
    pub c_vec: DVector<C64>,
    /// `I_N ⊗ D⁻¹`, mapping the ball coordinates `b` to `vec(Δ)`.
    pub d_tilde: CMat,
    /// Part of the objective that does not depend on `Δ`.
    pub remainder: f64,
    /// `(M_i, N_j)`
    pub dims: (usize, usize),
}

impl QuadraticErrorForm {
    pub fn from_parts(c_mat: CMat, c_vec: DVector<C64>, d_tilde: CMat, dims: (usize, usize)) -> Self {
        QuadraticErrorForm { c_mat, c_vec, d_tilde, remainder: 0.0, dims }
    }

    /// `C D̃`
    pub fn operator(&self) -> CMat {
        &self.c_mat * &self.d_tilde
    }

    /// `‖C D̃ b + c‖²`
    pub fn value(&self, b: &DVector<C64>) -> f64 {
        (self.operator() * b + &self.c_vec).norm_squared()
    }

    pub fn delta(&self, b: &DVector<C64>) -> CMat {
        let v = &self.d_tilde * b;
        unvec(v.as_slice(), self.dims.0, self.dims.1)
    }
}

/// Affine residual `r(Δ)` with `‖r(Δ)‖²` collecting every MSE term that
/// involves `H_ij^k`. `lw[k]` is `Lᴴ` for `S_i^k = L Lᴴ` and `gain[m]` is
/// `Σ_k' [U S Uᴴ]_mm` at receiver `i`.
struct Residual<'a> {
    design: &'a TransceiverDesign,
    config: &'a SystemConfig,
    base: &'a CMat,
    lw: CMat,
    gain: Vec<f64>,
    tx_scale: CMat,
    i: usize,
    j: usize,
    k: usize,
}

impl Residual<'_> {
    fn eval(&self, delta: &CMat) -> Vec<C64> {
        let (i, j, k) = (self.i, self.j, self.k);
        let h = self.base + delta;
        let u = &self.design.decoders[i][k];
        let v = &self.design.precoders[j][k];
        let lu = &self.lw * u.adjoint();
        let mut out: Vec<C64> = Vec::new();
        if i == j {
            // desired-signal error
            let g = &lu * &h * v - &self.lw;
            out.extend(g.iter());
        }
        // transmit distortion of direction j through H_ij^k
        out.extend((&lu * &h * &self.tx_scale).iter());
        // receive distortion at every chain, spread over all subcarriers
        for (m, &g) in self.gain.iter().enumerate() {
            let w = (self.config.theta_rx[i][m] * g).sqrt();
            out.extend((h.rows(m, 1) * v * c(w, 0.0)).iter());
        }
        if i != j {
            // residual self-interference after cancellation with the estimate
            out.extend((&lu * delta * v).iter());
        }
        out
    }
}

/// Quadratic form of the weighted MSE `Σ tr(Lᴴ E L)` (`S = L Lᴴ` taken from
/// `design.weights`) in the single error matrix `Δ_ij^k`, the other errors
/// held at zero, around the estimated channels.
pub fn build_quadratic_form(
    design: &TransceiverDesign,
    channels: &ChannelRealization,
    config: &SystemConfig,
    i: usize,
    j: usize,
    k: usize,
) -> Result<QuadraticErrorForm> {
    design.check(config)?;
    if i > 1 || j > 1 || k >= config.k() {
        return Err(Error::Dimension(format!("no error matrix ({i},{j},{k})")));
    }
    let est = &channels.estimate;
    let (m, n) = (config.m(i), config.n(j));
    let chol = cholesky(&design.weights[i][k], "MSE weight")?;
    let mut gain = vec![0.0; m];
    for kk in 0..config.k() {
        let us = &design.decoders[i][kk] * &design.weights[i][kk] * design.decoders[i][kk].adjoint();
        for (r, g) in gain.iter_mut().enumerate() {
            *g += us[(r, r)].re;
        }
    }
    let tx: Vec<C64> = chain_powers(&design.precoders[j])
        .iter()
        .zip(&config.theta_tx[j])
        .map(|(p, t)| c((p * t).sqrt(), 0.0))
        .collect();
    let res = Residual {
        design,
        config,
        base: est.get(i, j, k),
        lw: chol.l().adjoint(),
        gain,
        tx_scale: CMat::from_diagonal(&DVector::from_vec(tx)),
        i,
        j,
        k,
    };
    let c0 = res.eval(&CMat::zeros(m, n));
    let dim = m * n;
    let mut c_mat = CMat::zeros(c0.len(), dim);
    for p in 0..dim {
        let mut e = CMat::zeros(m, n);
        e[(p % m, p / m)] = c(1.0, 0.0);
        for (r, (a, b)) in res.eval(&e).iter().zip(&c0).enumerate() {
            c_mat[(r, p)] = a - b;
        }
    }
    let d_inv = channels.shaping[i][j][k].clone().try_inverse().ok_or(Error::Singular("CSI shaping matrix"))?;
    let d_tilde = identity(n).kronecker(&d_inv);
    let c_vec = DVector::from_vec(c0);
    let nominal = weighted_mse_objective(design, Scenario::nominal(est), config, true)?;
    let remainder = nominal - c_vec.norm_squared();
    Ok(QuadraticErrorForm { c_mat, c_vec, d_tilde, remainder, dims: (m, n) })
}
