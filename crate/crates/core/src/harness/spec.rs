use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineMode, Objective, SiThreshold};
use crate::channel::{ChannelStats, PerturbMode};
use crate::config::{db_to_linear, Level, SystemConfig, UniformParams};
use crate::error::{Error, Result};

/// Link parameters, uniform over chains, directions and subcarriers. Any
/// power-like field accepts a linear number or a `"…dB"` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    pub subcarriers: usize,
    pub antennas: usize,
    pub streams: usize,
    pub max_power: Level,
    pub noise: Level,
    pub kappa: Level,
    /// Receive-side coefficient; follows `kappa` when absent.
    pub beta: Option<Level>,
    pub zeta: Level,
    pub rate_weights: [f64; 2],
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for SystemSpec {
    fn default() -> Self {
        let p = UniformParams::default();
        SystemSpec {
            subcarriers: p.subcarriers,
            antennas: p.antennas,
            streams: p.streams,
            max_power: Level(p.max_power),
            noise: Level(p.noise),
            kappa: Level(p.kappa),
            beta: None,
            zeta: Level(p.zeta),
            rate_weights: p.rate_weights,
            max_iters: p.max_iters,
            rel_tol: p.rel_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub rho: Level,
    pub rho_si: Level,
    pub rician_k: Level,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        let s = ChannelStats::default();
        ChannelSpec { rho: Level(s.rho), rho_si: Level(s.rho_si), rician_k: Level(s.rician_k) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Sets both κ and β, in dB.
    KappaDb,
    ZetaDb,
    Sigma2Db,
    /// Linear maximum transmit power.
    Pmax,
    #[serde(rename = "K")]
    Subcarriers,
    #[serde(rename = "M")]
    Antennas,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::KappaDb => "kappa_db",
            SweepParam::ZetaDb => "zeta_db",
            SweepParam::Sigma2Db => "sigma2_db",
            SweepParam::Pmax => "pmax",
            SweepParam::Subcarriers => "K",
            SweepParam::Antennas => "M",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Self::KappaDb, Self::ZetaDb, Self::Sigma2Db, Self::Pmax, Self::Subcarriers, Self::Antennas]
            .into_iter()
            .find(|p| p.name() == name)
    }

    fn is_db(self) -> bool {
        matches!(self, SweepParam::KappaDb | SweepParam::ZetaDb | SweepParam::Sigma2Db)
    }

    fn is_count(self) -> bool {
        matches!(self, SweepParam::Subcarriers | SweepParam::Antennas)
    }

    /// Canonical text of a sweep value in the results table.
    pub fn format_value(self, v: f64) -> String {
        if self.is_db() {
            format!("{v:.6}")
        } else {
            format!("{v}")
        }
    }
}

/// A sweep value: a plain number, or for the dB parameters also a `"…dB"`
/// string.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SweepValue(pub f64);

impl<'de> Deserialize<'de> for SweepValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SweepValue(v)),
            Raw::Text(t) => {
                let clean = t.trim().replace('\u{2212}', "-").to_ascii_lowercase();
                let num = clean.strip_suffix("db").unwrap_or(&clean).trim().to_string();
                num.parse().map(SweepValue).map_err(|_| serde::de::Error::custom(format!("bad sweep value {t:?}")))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<SweepValue>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Altqcp,
    Wmmse,
    Hd,
    Kappa0,
    Sc,
    PthInf,
    PthHigh,
    PthLow,
    CuttingSet,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Altqcp => "altqcp",
            Algorithm::Wmmse => "wmmse",
            Algorithm::Hd => "hd",
            Algorithm::Kappa0 => "kappa0",
            Algorithm::Sc => "sc",
            Algorithm::PthInf => "pth_inf",
            Algorithm::PthHigh => "pth_high",
            Algorithm::PthLow => "pth_low",
            Algorithm::CuttingSet => "cutting_set",
        }
    }

    pub fn baseline(self) -> Option<BaselineMode> {
        Some(match self {
            Algorithm::Hd => BaselineMode::HalfDuplex,
            Algorithm::Kappa0 => BaselineMode::Kappa0,
            Algorithm::Sc => BaselineMode::SingleCarrier,
            Algorithm::PthInf => BaselineMode::PowerThreshold(SiThreshold::Infinite),
            Algorithm::PthHigh => BaselineMode::PowerThreshold(SiThreshold::High),
            Algorithm::PthLow => BaselineMode::PowerThreshold(SiThreshold::Low),
            _ => return None,
        })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Mse,
    Rate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiErrorSpec {
    /// Estimates equal the true channels.
    None,
    Interior,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CuttingSetSpec {
    pub max_cuts: usize,
    pub rel_tol: f64,
}

impl Default for CuttingSetSpec {
    fn default() -> Self {
        CuttingSetSpec { max_cuts: 10, rel_tol: 1e-3 }
    }
}

fn default_trials() -> usize {
    100
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_csi() -> CsiErrorSpec {
    CsiErrorSpec::Interior
}

fn default_objective() -> ObjectiveSpec {
    ObjectiveSpec::Mse
}

/// A Monte Carlo experiment: base configuration, one optional sweep, the
/// algorithms to compare and the trial count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// What the baselines optimize before being evaluated.
    #[serde(default = "default_objective")]
    pub baseline_objective: ObjectiveSpec,
    /// How the estimated channels deviate from the true ones.
    #[serde(default = "default_csi")]
    pub csi_error: CsiErrorSpec,
    #[serde(default)]
    pub cutting_set: CuttingSetSpec,
}

/// One point of a sweep: the emitted value and the resulting configuration.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub param: Option<SweepParam>,
    pub value: f64,
    pub config: SystemConfig,
}

impl SweepPoint {
    pub fn param_name(&self) -> &'static str {
        self.param.map_or("none", SweepParam::name)
    }

    pub fn value_text(&self) -> String {
        self.param.map_or_else(|| "0".to_string(), |p| p.format_value(self.value))
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("spec does not parse: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn stats(&self) -> ChannelStats {
        ChannelStats { rho: self.channel.rho.0, rho_si: self.channel.rho_si.0, rician_k: self.channel.rician_k.0 }
    }

    pub fn perturb_mode(&self) -> Option<PerturbMode> {
        match self.csi_error {
            CsiErrorSpec::None => None,
            CsiErrorSpec::Interior => Some(PerturbMode::Interior),
            CsiErrorSpec::Boundary => Some(PerturbMode::Boundary),
        }
    }

    pub fn objective(&self) -> Objective {
        match self.baseline_objective {
            ObjectiveSpec::Mse => Objective::SumMse,
            ObjectiveSpec::Rate => Objective::SumRate,
        }
    }

    fn params(&self) -> UniformParams {
        let s = &self.system;
        UniformParams {
            subcarriers: s.subcarriers,
            antennas: s.antennas,
            streams: s.streams,
            max_power: s.max_power.0,
            noise: s.noise.0,
            kappa: s.kappa.0,
            beta: s.beta.unwrap_or(s.kappa).0,
            zeta: s.zeta.0,
            rate_weights: s.rate_weights,
            max_iters: s.max_iters,
            rel_tol: s.rel_tol,
        }
    }

    pub fn base_config(&self) -> SystemConfig {
        SystemConfig::uniform(&self.params())
    }

    /// Configurations of every sweep point, in sweep order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let Some(sweep) = &self.sweep else {
            return vec![SweepPoint { param: None, value: 0.0, config: self.base_config() }];
        };
        sweep
            .values
            .iter()
            .map(|&SweepValue(v)| {
                let mut p = self.params();
                match sweep.param {
                    SweepParam::KappaDb => {
                        p.kappa = db_to_linear(v);
                        p.beta = db_to_linear(v);
                    }
                    SweepParam::ZetaDb => p.zeta = db_to_linear(v),
                    SweepParam::Sigma2Db => p.noise = db_to_linear(v),
                    SweepParam::Pmax => p.max_power = v,
                    SweepParam::Subcarriers => p.subcarriers = v as usize,
                    SweepParam::Antennas => p.antennas = v as usize,
                }
                SweepPoint { param: Some(sweep.param), value: v, config: SystemConfig::uniform(&p) }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must name at least one algorithm".into());
        }
        for (n, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..n].contains(a) {
                return bad(format!("algorithm {a} listed twice"));
            }
        }
        if self.cutting_set.max_cuts == 0 || !(self.cutting_set.rel_tol >= 0.0) {
            return bad("cutting_set needs max_cuts >= 1 and rel_tol >= 0".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return bad(format!("sweep over {} has no values", sweep.param.name()));
            }
            for &SweepValue(v) in &sweep.values {
                if !v.is_finite() {
                    return bad(format!("sweep value {v} of {} is not finite", sweep.param.name()));
                }
                if sweep.param.is_count() && (v < 1.0 || v.fract() != 0.0) {
                    return bad(format!("sweep value {v} of {} must be a positive integer", sweep.param.name()));
                }
                if sweep.param == SweepParam::Pmax && v < 0.0 {
                    return bad(format!("sweep value {v} of pmax must be non-negative"));
                }
            }
        }
        for point in self.points() {
            point.config.validate().map_err(|e| match e {
                Error::InvalidSpec(m) => Error::InvalidSpec(format!("{} = {}: {m}", point.param_name(), point.value)),
                other => other,
            })?;
        }
        Ok(())
    }
}
