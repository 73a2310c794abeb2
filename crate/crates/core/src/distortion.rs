//! Time-domain Monte Carlo of the limited-dynamic-range transceivers. Blocks
//! are OFDM symbols without cyclic prefix: precoded symbols are taken to the
//! time domain with a unitary inverse DFT, distorted per chain, propagated per
//! subcarrier through the true channels, distorted again at the receiver and
//! brought back with the unitary DFT, after which SIC subtracts the known
//! transmit signal through the estimated SI channel.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::channel::{cn, cn_matrix, rng_for, ChannelRealization};
use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_part, CMat, C64};
use crate::model::{chain_powers, TransceiverDesign};

/// Blocks per independently seeded chunk of the simulation.
const CHUNK: usize = 2048;

/// Unitary DFT pair along the rows of a `chains × K` matrix.
#[derive(Clone)]
pub struct Ofdm {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Ofdm {
    pub fn new(subcarriers: usize) -> Self {
        let mut planner = FftPlanner::new();
        Ofdm {
            fwd: planner.plan_fft_forward(subcarriers),
            inv: planner.plan_fft_inverse(subcarriers),
            scale: 1.0 / (subcarriers as f64).sqrt(),
        }
    }

    fn apply(&self, fft: &Arc<dyn Fft<f64>>, m: &CMat) -> CMat {
        let mut out = m.clone();
        let mut row: Vec<C64> = Vec::with_capacity(m.ncols());
        for r in 0..m.nrows() {
            row.clear();
            row.extend(m.row(r).iter());
            fft.process(&mut row);
            for (k, z) in row.iter().enumerate() {
                out[(r, k)] = z * self.scale;
            }
        }
        out
    }

    /// Time samples to subcarriers.
    pub fn dft(&self, time: &CMat) -> CMat {
        self.apply(&self.fwd, time)
    }

    /// Subcarriers to time samples.
    pub fn idft(&self, freq: &CMat) -> CMat {
        self.apply(&self.inv, freq)
    }
}

/// One simulated block. Time-domain matrices are `chains × K` with column `t`
/// holding sample `t`; frequency-domain matrices hold subcarrier `k` in column
/// `k`. Index 0/1 is the direction.
#[derive(Clone, Debug)]
pub struct BlockSample {
    pub v_time: [CMat; 2],
    pub e_t_time: [CMat; 2],
    pub u_time: [CMat; 2],
    pub e_r_time: [CMat; 2],
    pub n_time: [CMat; 2],
    pub v_freq: [CMat; 2],
    pub e_t_freq: [CMat; 2],
    pub u_freq: [CMat; 2],
    pub e_r_freq: [CMat; 2],
    /// Aggregate interference plus noise after SIC and desired-signal removal.
    pub nu: [CMat; 2],
}

/// Per-chain time-domain distortion variances implied by the design:
/// `κ_l E|v_l(t)|²` at the transmitters and `β_l E|u_l(t)|²` at the receivers.
struct Levels {
    tx: [Vec<f64>; 2],
    rx: [Vec<f64>; 2],
}

fn levels(design: &TransceiverDesign, channels: &ChannelRealization, config: &SystemConfig) -> Levels {
    let k_count = config.k();
    let kf = k_count as f64;
    // κ_l E|v_l(t)|² = κ_l (1/K) Σ_k ‖row_l V^k‖² = θ_l Σ_k ‖row_l V^k‖²
    let tx: [Vec<f64>; 2] = std::array::from_fn(|i| freq_distortion_variance(&design.precoders[i], &config.theta_tx[i]));
    let rx = std::array::from_fn(|i| {
        let mut power = vec![0.0; config.m(i)];
        for k in 0..k_count {
            let mut cov = CMat::identity(config.m(i), config.m(i)) * c(config.noise[i][k], 0.0);
            for j in 0..DIRECTIONS {
                let h = channels.truth.get(i, j, k);
                let v = &design.precoders[j][k];
                cov += h * v * v.adjoint() * h.adjoint();
                cov += h * crate::linalg::diag_real(&tx[j]) * h.adjoint();
            }
            for (r, p) in power.iter_mut().enumerate() {
                *p += cov[(r, r)].re / kf;
            }
        }
        // β_l = K θ_rx,l
        power.iter().zip(&config.theta_rx[i]).map(|(p, t)| kf * t * p).collect()
    });
    Levels { tx, rx }
}

fn white<R: Rng + ?Sized>(rng: &mut R, var: &[f64], samples: usize) -> CMat {
    let mut m = CMat::zeros(var.len(), samples);
    for t in 0..samples {
        for (l, &v) in var.iter().enumerate() {
            m[(l, t)] = cn(rng, v);
        }
    }
    m
}

/// Simulates a single block.
pub fn simulate_block<R: Rng + ?Sized>(
    design: &TransceiverDesign,
    channels: &ChannelRealization,
    config: &SystemConfig,
    ofdm: &Ofdm,
    rng: &mut R,
) -> BlockSample {
    let lv = levels(design, channels, config);
    block_with(design, channels, config, ofdm, &lv, rng)
}

fn block_with<R: Rng + ?Sized>(
    design: &TransceiverDesign,
    channels: &ChannelRealization,
    config: &SystemConfig,
    ofdm: &Ofdm,
    lv: &Levels,
    rng: &mut R,
) -> BlockSample {
    let k_count = config.k();
    let mut v_freq: [CMat; 2] = std::array::from_fn(|i| CMat::zeros(config.n(i), k_count));
    for (i, vf) in v_freq.iter_mut().enumerate() {
        for k in 0..k_count {
            let s = cn_matrix(rng, config.d(i), 1, 1.0);
            vf.columns_mut(k, 1).copy_from(&(&design.precoders[i][k] * s));
        }
    }
    let v_time: [CMat; 2] = std::array::from_fn(|i| ofdm.idft(&v_freq[i]));
    let e_t_time: [CMat; 2] = std::array::from_fn(|i| white(rng, &lv.tx[i], k_count));
    let e_t_freq: [CMat; 2] = std::array::from_fn(|i| ofdm.dft(&e_t_time[i]));
    let x_freq: [CMat; 2] = std::array::from_fn(|i| ofdm.dft(&(&v_time[i] + &e_t_time[i])));

    let mut n_freq: [CMat; 2] = std::array::from_fn(|i| CMat::zeros(config.m(i), k_count));
    let mut u_freq: [CMat; 2] = std::array::from_fn(|i| CMat::zeros(config.m(i), k_count));
    for i in 0..DIRECTIONS {
        for k in 0..k_count {
            let noise = cn_matrix(rng, config.m(i), 1, config.noise[i][k]);
            let mut u = noise.clone();
            for (j, x) in x_freq.iter().enumerate() {
                u += channels.truth.get(i, j, k) * x.column(k);
            }
            n_freq[i].columns_mut(k, 1).copy_from(&noise);
            u_freq[i].columns_mut(k, 1).copy_from(&u);
        }
    }
    let n_time: [CMat; 2] = std::array::from_fn(|i| ofdm.idft(&n_freq[i]));
    let u_time: [CMat; 2] = std::array::from_fn(|i| ofdm.idft(&u_freq[i]));
    let e_r_time: [CMat; 2] = std::array::from_fn(|i| white(rng, &lv.rx[i], k_count));
    let e_r_freq: [CMat; 2] = std::array::from_fn(|i| ofdm.dft(&e_r_time[i]));
    let nu = std::array::from_fn(|i| {
        let y = ofdm.dft(&(&u_time[i] + &e_r_time[i]));
        let j = 1 - i;
        let mut out = y;
        for k in 0..k_count {
            let sic = channels.estimate.get(i, j, k) * v_freq[j].column(k);
            let desired = channels.truth.get(i, i, k) * v_freq[i].column(k);
            let col = out.column(k) - sic - desired;
            out.set_column(k, &col);
        }
        out
    });
    BlockSample { v_time, e_t_time, u_time, e_r_time, n_time, v_freq, e_t_freq, u_freq, e_r_freq, nu }
}

/// Second-moment sums of a simulation run. Every field is a plain sum over
/// blocks, so partial results merge by addition.
#[derive(Clone, Debug)]
struct Moments {
    blocks: usize,
    /// `Σ ν νᴴ` per direction and subcarrier.
    nu: [Vec<CMat>; 2],
    /// `Σ z zᴴ` with `z = [e_t^k; v^k]` at transmitter `i`.
    tx_joint: [Vec<CMat>; 2],
    /// `Σ e_r e_rᴴ` at receiver `i`.
    e_r: [Vec<CMat>; 2],
}

impl Moments {
    fn zeros(config: &SystemConfig) -> Self {
        let per = |dim: usize| vec![CMat::zeros(dim, dim); config.k()];
        Moments {
            blocks: 0,
            nu: std::array::from_fn(|i| per(config.m(i))),
            tx_joint: std::array::from_fn(|i| per(2 * config.n(i))),
            e_r: std::array::from_fn(|i| per(config.m(i))),
        }
    }

    fn add(&mut self, b: &BlockSample) {
        self.blocks += 1;
        for i in 0..DIRECTIONS {
            for k in 0..self.nu[i].len() {
                let nu = b.nu[i].column(k);
                self.nu[i][k] += nu * nu.adjoint();
                let er = b.e_r_freq[i].column(k);
                self.e_r[i][k] += er * er.adjoint();
                let n = b.v_freq[i].nrows();
                let mut z = CMat::zeros(2 * n, 1);
                z.rows_mut(0, n).copy_from(&b.e_t_freq[i].column(k));
                z.rows_mut(n, n).copy_from(&b.v_freq[i].column(k));
                self.tx_joint[i][k] += &z * z.adjoint();
            }
        }
    }

    fn merge(mut self, other: Moments) -> Self {
        self.blocks += other.blocks;
        for i in 0..DIRECTIONS {
            for k in 0..self.nu[i].len() {
                self.nu[i][k] += &other.nu[i][k];
                self.e_r[i][k] += &other.e_r[i][k];
                self.tx_joint[i][k] += &other.tx_joint[i][k];
            }
        }
        self
    }
}

/// Empirical statistics from [`simulate_blocks`].
#[derive(Clone, Debug)]
pub struct SimulationStats {
    pub blocks: usize,
    /// Empirical `E{ν νᴴ}` per direction and subcarrier.
    pub nu_cov: [Vec<CMat>; 2],
    /// Empirical variance of `e_t,l^k`, indexed `[direction][chain][k]`.
    pub tx_distortion_var: [Vec<Vec<f64>>; 2],
    /// Empirical variance of `e_r,l^k`, indexed `[direction][chain][k]`.
    pub rx_distortion_var: [Vec<Vec<f64>>; 2],
    /// Largest normalized correlation between `e_t,l^k` and `v_l^k`.
    pub max_signal_correlation: f64,
    /// Largest normalized correlation between `e_t,l^k` and `e_t,l'^k`, `l ≠ l'`.
    pub max_chain_correlation: f64,
}

fn correlation(m: &CMat, a: usize, b: usize) -> f64 {
    let denom = (m[(a, a)].re * m[(b, b)].re).sqrt();
    if denom > 0.0 {
        m[(a, b)].norm() / denom
    } else {
        0.0
    }
}

/// Runs `n_blocks` independent blocks and returns sample second moments.
/// Chunks of blocks draw from separate streams of `seed` and are merged in
/// chunk order, so the result does not depend on the thread count.
pub fn simulate_blocks(
    design: &TransceiverDesign,
    channels: &ChannelRealization,
    config: &SystemConfig,
    n_blocks: usize,
    seed: u64,
) -> Result<SimulationStats> {
    if n_blocks == 0 {
        return Err(Error::Dimension("simulate_blocks needs at least one block".into()));
    }
    design.check(config)?;
    channels.truth.check(config)?;
    channels.estimate.check(config)?;
    let lv = levels(design, channels, config);
    let ofdm = Ofdm::new(config.k());
    let chunks = n_blocks.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = rng_for(seed, ci as u64);
            let mut acc = Moments::zeros(config);
            let count = CHUNK.min(n_blocks - ci * CHUNK);
            for _ in 0..count {
                acc.add(&block_with(design, channels, config, &ofdm, &lv, &mut rng));
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold(Moments::zeros(config), Moments::merge);

    let scale = c(1.0 / total.blocks as f64, 0.0);
    let mut stats = SimulationStats {
        blocks: total.blocks,
        nu_cov: std::array::from_fn(|i| total.nu[i].iter().map(|m| hermitian_part(&(m * scale))).collect()),
        tx_distortion_var: std::array::from_fn(|i| {
            (0..config.n(i)).map(|l| total.tx_joint[i].iter().map(|m| m[(l, l)].re * scale.re).collect()).collect()
        }),
        rx_distortion_var: std::array::from_fn(|i| {
            (0..config.m(i)).map(|l| total.e_r[i].iter().map(|m| m[(l, l)].re * scale.re).collect()).collect()
        }),
        max_signal_correlation: 0.0,
        max_chain_correlation: 0.0,
    };
    for i in 0..DIRECTIONS {
        let n = config.n(i);
        for m in &total.tx_joint[i] {
            for l in 0..n {
                stats.max_signal_correlation = stats.max_signal_correlation.max(correlation(m, l, n + l));
                for l2 in (l + 1)..n {
                    stats.max_chain_correlation = stats.max_chain_correlation.max(correlation(m, l, l2));
                }
            }
        }
    }
    Ok(stats)
}

/// Per-subcarrier distortion variance of each transmit chain,
/// `θ_l Σ_m ‖row_l V^m‖²` with `θ_l = κ_l / K`.
pub fn freq_distortion_variance(precoders: &[CMat], theta: &[f64]) -> Vec<f64> {
    chain_powers(precoders).iter().zip(theta).map(|(p, t)| p * t).collect()
}
