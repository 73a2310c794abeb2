use std::fmt;

use crate::altqcp::{init_precoders, InitMode};
use crate::channel::{draw_channels, ChannelStats};
use crate::config::{SystemConfig, DIRECTIONS};
use crate::distortion::{freq_distortion_variance, simulate_blocks};
use crate::error::Result;
use crate::linalg::{c, CMat};
use crate::model::{covariances, ChannelView, TransceiverDesign};

/// Tolerances of the covariance-model check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationTolerances {
    /// Relative Frobenius error against the model covariance.
    pub covariance: f64,
    /// Same, for the distortion-free run against `σ² I`.
    pub noise_only: f64,
    /// Spread `(max − min) / mean` of the transmit distortion variance over
    /// subcarriers, and its relative error against the predicted level.
    pub distortion: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances { covariance: 0.05, noise_only: 0.03, distortion: 0.03 }
    }
}

#[derive(Clone, Debug)]
pub struct ModelValidation {
    pub blocks: usize,
    pub tolerances: ValidationTolerances,
    /// Largest relative Frobenius error over (direction, subcarrier).
    pub covariance_error: f64,
    pub noise_only_error: f64,
    /// Largest spread over transmit chains.
    pub distortion_spread: f64,
    /// Largest relative error of a per-subcarrier variance against the
    /// predicted flat level.
    pub distortion_level_error: f64,
}

impl ModelValidation {
    pub fn covariance_ok(&self) -> bool {
        self.covariance_error < self.tolerances.covariance
    }

    pub fn noise_only_ok(&self) -> bool {
        self.noise_only_error < self.tolerances.noise_only
    }

    pub fn distortion_ok(&self) -> bool {
        self.distortion_spread < self.tolerances.distortion && self.distortion_level_error < self.tolerances.distortion
    }

    pub fn passed(&self) -> bool {
        self.covariance_ok() && self.noise_only_ok() && self.distortion_ok()
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

impl fmt::Display for ModelValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.tolerances;
        writeln!(f, "blocks: {}", self.blocks)?;
        writeln!(
            f,
            "{} covariance: max relative error {:.4} (limit {})",
            verdict(self.covariance_ok()),
            self.covariance_error,
            t.covariance
        )?;
        writeln!(
            f,
            "{} noise only: max relative error {:.4} (limit {})",
            verdict(self.noise_only_ok()),
            self.noise_only_error,
            t.noise_only
        )?;
        write!(
            f,
            "{} distortion: spread {:.4}, level error {:.4} (limit {})",
            verdict(self.distortion_ok()),
            self.distortion_spread,
            self.distortion_level_error,
            t.distortion
        )
    }
}

fn rel_fro(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}

/// Simulates `blocks` OFDM blocks of a random full-power design on one
/// perfect-CSI channel draw and compares the sample statistics with the
/// covariance model, once with `config` and once without distortion.
pub fn validate_model(
    config: &SystemConfig,
    stats: &ChannelStats,
    blocks: usize,
    seed: u64,
    tolerances: ValidationTolerances,
) -> Result<ModelValidation> {
    config.validate()?;
    let ch = draw_channels(config, stats, seed);
    let design = TransceiverDesign::with_precoders(init_precoders(&ch.estimate, config, InitMode::Random(seed)), config);

    let sim = simulate_blocks(&design, &ch, config, blocks, seed)?;
    let model = covariances(&design.precoders, ch.scenario(ChannelView::True), config)?;
    let mut covariance_error = 0.0f64;
    let mut distortion_spread = 0.0f64;
    let mut distortion_level_error = 0.0f64;
    for i in 0..DIRECTIONS {
        for k in 0..config.k() {
            covariance_error = covariance_error.max(rel_fro(&sim.nu_cov[i][k], &model[i][k]));
        }
        let predicted = freq_distortion_variance(&design.precoders[i], &config.theta_tx[i]);
        for (per_k, want) in sim.tx_distortion_var[i].iter().zip(&predicted) {
            if *want == 0.0 {
                continue;
            }
            let mean = per_k.iter().sum::<f64>() / per_k.len() as f64;
            let (lo, hi) = per_k.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            distortion_spread = distortion_spread.max((hi - lo) / mean);
            for x in per_k {
                distortion_level_error = distortion_level_error.max((x - want).abs() / want);
            }
        }
    }

    let clean = config.without_distortion();
    let sim0 = simulate_blocks(&design, &ch, &clean, blocks, seed.wrapping_add(1))?;
    let mut noise_only_error = 0.0f64;
    for i in 0..DIRECTIONS {
        for k in 0..config.k() {
            let want = CMat::identity(config.m(i), config.m(i)) * c(clean.noise[i][k], 0.0);
            noise_only_error = noise_only_error.max(rel_fro(&sim0.nu_cov[i][k], &want));
        }
    }

    Ok(ModelValidation {
        blocks,
        tolerances,
        covariance_error,
        noise_only_error,
        distortion_spread,
        distortion_level_error,
    })
}
