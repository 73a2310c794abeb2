//! System configuration and dB/linear level handling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of communication directions of the bidirectional link.
pub const DIRECTIONS: usize = 2;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Six-decimal dB rendering used in every emitted table.
pub fn format_db(linear: f64) -> String {
    format!("{:.6}", linear_to_db(linear))
}

/// A linear power-like quantity. Parses from a plain number (linear) or from a
/// string carrying a `dB` suffix, e.g. `"-20dB"`. Always serialized linear.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Level(pub f64);

impl Level {
    pub fn from_db(db: f64) -> Self {
        Level(db_to_linear(db))
    }

    pub fn linear(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        linear_to_db(self.0)
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // accept the unicode minus sign as well
        let t = s.trim().replace('\u{2212}', "-");
        let lower = t.to_ascii_lowercase();
        let value = if let Some(num) = lower.strip_suffix("db") {
            let db: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("cannot parse dB level {s:?}")))?;
            db_to_linear(db)
        } else {
            lower
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("cannot parse level {s:?}")))?
        };
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidSpec(format!("level {s:?} must be finite and non-negative")));
        }
        Ok(Level(value))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() && v >= 0.0 => Ok(Level(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "linear level {v} must be finite and non-negative"
            ))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Dimensions, powers, noise, distortion coefficients and CSI-error radii of
/// the link. All power-like fields are linear.
///
/// `theta_tx[i]` / `theta_rx[i]` hold the per-chain distortion coefficients
/// already divided by the subcarrier count, so `K * theta_tx[i][l]` is the
/// time-domain coefficient of transmit chain `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub subcarriers: usize,
    pub tx_antennas: [usize; 2],
    pub rx_antennas: [usize; 2],
    pub streams: [usize; 2],
    pub max_power: [f64; 2],
    /// `noise[i][k]`
    pub noise: [Vec<f64>; 2],
    pub theta_tx: [Vec<f64>; 2],
    pub theta_rx: [Vec<f64>; 2],
    pub rate_weights: [f64; 2],
    /// `csi_radius[i][j][k]`
    pub csi_radius: [[Vec<f64>; 2]; 2],
    pub max_iters: usize,
    pub rel_tol: f64,
}

/// Scalar parameters for a configuration that is uniform over chains,
/// directions and subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformParams {
    pub subcarriers: usize,
    pub antennas: usize,
    pub streams: usize,
    pub max_power: f64,
    pub noise: f64,
    pub kappa: f64,
    pub beta: f64,
    pub zeta: f64,
    pub rate_weights: [f64; 2],
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for UniformParams {
    fn default() -> Self {
        UniformParams {
            subcarriers: 4,
            antennas: 2,
            streams: 1,
            max_power: 1.0,
            noise: db_to_linear(-30.0),
            kappa: db_to_linear(-30.0),
            beta: db_to_linear(-30.0),
            zeta: db_to_linear(-15.0),
            rate_weights: [1.0, 1.0],
            max_iters: 100,
            rel_tol: 1e-6,
        }
    }
}

impl SystemConfig {
    pub fn uniform(p: &UniformParams) -> Self {
        let k = p.subcarriers;
        let m = p.antennas;
        let per_dir = |v: Vec<f64>| [v.clone(), v];
        SystemConfig {
            subcarriers: k,
            tx_antennas: [m, m],
            rx_antennas: [m, m],
            streams: [p.streams, p.streams],
            max_power: [p.max_power, p.max_power],
            noise: per_dir(vec![p.noise; k]),
            theta_tx: per_dir(vec![p.kappa / k as f64; m]),
            theta_rx: per_dir(vec![p.beta / k as f64; m]),
            rate_weights: p.rate_weights,
            csi_radius: [per_dir(vec![p.zeta; k]), per_dir(vec![p.zeta; k])],
            max_iters: p.max_iters,
            rel_tol: p.rel_tol,
        }
    }

    pub fn k(&self) -> usize {
        self.subcarriers
    }

    pub fn n(&self, i: usize) -> usize {
        self.tx_antennas[i]
    }

    pub fn m(&self, i: usize) -> usize {
        self.rx_antennas[i]
    }

    pub fn d(&self, i: usize) -> usize {
        self.streams[i]
    }

    /// `Σ_i K d_i`, the weighted MSE of an all-zero receiver.
    pub fn total_streams(&self) -> usize {
        (0..DIRECTIONS).map(|i| self.k() * self.d(i)).sum()
    }

    /// Copy with all transceiver distortion removed.
    pub fn without_distortion(&self) -> Self {
        let mut c = self.clone();
        for i in 0..DIRECTIONS {
            c.theta_tx[i].iter_mut().for_each(|t| *t = 0.0);
            c.theta_rx[i].iter_mut().for_each(|t| *t = 0.0);
        }
        c
    }

    /// Copy with all CSI-error radii set to zero.
    pub fn without_csi_error(&self) -> Self {
        let mut c = self.clone();
        for row in c.csi_radius.iter_mut() {
            for r in row.iter_mut() {
                r.iter_mut().for_each(|z| *z = 0.0);
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let k = self.k();
        if k == 0 {
            return bad("subcarrier count must be at least 1".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        for i in 0..DIRECTIONS {
            let (n, m, d) = (self.n(i), self.m(i), self.d(i));
            if n == 0 || m == 0 || d == 0 {
                return bad(format!("direction {i}: all dimensions must be at least 1"));
            }
            if d > n.min(m) {
                return bad(format!("direction {i}: streams {d} exceed min(N, M) = {}", n.min(m)));
            }
            if self.noise[i].len() != k {
                return bad(format!("direction {i}: expected {k} noise variances"));
            }
            if self.theta_tx[i].len() != n || self.theta_rx[i].len() != m {
                return bad(format!("direction {i}: distortion vectors must match antenna counts"));
            }
            let linear = self.noise[i]
                .iter()
                .chain(&self.theta_tx[i])
                .chain(&self.theta_rx[i])
                .chain(std::iter::once(&self.max_power[i]));
            for &v in linear {
                if !(v.is_finite() && v >= 0.0) {
                    return bad(format!("direction {i}: linear quantities must be finite and >= 0, got {v}"));
                }
            }
            if !(self.rate_weights[i] > 0.0 && self.rate_weights[i].is_finite()) {
                return bad(format!("direction {i}: rate weight must be positive"));
            }
            for j in 0..DIRECTIONS {
                let r = &self.csi_radius[i][j];
                if r.len() != k || r.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
                    return bad(format!("csi radius ({i},{j}) must hold {k} non-negative values"));
                }
            }
        }
        Ok(())
    }
}
