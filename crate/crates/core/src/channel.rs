//! Seeded generation of desired and self-interference channels, and of CSI
//! errors inside their Frobenius-ball feasible sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{SystemConfig, DIRECTIONS};
use crate::error::{Error, Result};
use crate::linalg::{c, fro2, identity, CMat, C64};

/// Deterministic generator for stream `stream` of master seed `master`.
/// Distinct streams are independent ChaCha sequences, so trials can be drawn
/// in any order or in parallel.
pub fn rng_for(master: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(s * re, s * im)
}

pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut m = CMat::zeros(rows, cols);
    for col in 0..cols {
        for r in 0..rows {
            m[(r, col)] = cn(rng, var);
        }
    }
    m
}

/// Statistics of the channel model: Rayleigh desired links of variance `rho`,
/// Rician self-interference links of strength `rho_si` and factor `rician_k`
/// around an all-ones mean matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub rho: f64,
    pub rho_si: f64,
    pub rician_k: f64,
}

impl Default for ChannelStats {
    fn default() -> Self {
        ChannelStats { rho: 0.01, rho_si: 1.0, rician_k: 10.0 }
    }
}

impl ChannelStats {
    /// Entry value of the deterministic SI mean `sqrt(rho_si K_R / (1 + K_R)) H_0`.
    pub fn si_mean_entry(&self) -> f64 {
        (self.rho_si * self.rician_k / (1.0 + self.rician_k)).sqrt()
    }

    pub fn si_residual_variance(&self) -> f64 {
        self.rho_si / (1.0 + self.rician_k)
    }
}

/// One matrix per (receiving direction `i`, transmitting direction `j`,
/// subcarrier `k`); entry `(i, j, k)` is `M_i x N_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    mats: [[Vec<CMat>; 2]; 2],
}

impl ChannelSet {
    pub fn zeros(config: &SystemConfig) -> Self {
        let mk = |i: usize, j: usize| vec![CMat::zeros(config.m(i), config.n(j)); config.k()];
        ChannelSet { mats: [[mk(0, 0), mk(0, 1)], [mk(1, 0), mk(1, 1)]] }
    }

    pub fn from_fn(config: &SystemConfig, mut f: impl FnMut(usize, usize, usize) -> CMat) -> Self {
        let mut set = Self::zeros(config);
        for i in 0..DIRECTIONS {
            for j in 0..DIRECTIONS {
                for k in 0..config.k() {
                    set.mats[i][j][k] = f(i, j, k);
                }
            }
        }
        set
    }

    pub fn subcarriers(&self) -> usize {
        self.mats[0][0].len()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &CMat {
        &self.mats[i][j][k]
    }

    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut CMat {
        &mut self.mats[i][j][k]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), &CMat)> {
        self.mats.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .flat_map(move |(j, ks)| ks.iter().enumerate().map(move |(k, m)| ((i, j, k), m)))
        })
    }

    pub fn zip_map(&self, other: &ChannelSet, f: impl Fn(&CMat, &CMat) -> CMat) -> ChannelSet {
        let mut out = self.clone();
        for i in 0..DIRECTIONS {
            for j in 0..DIRECTIONS {
                for k in 0..self.subcarriers() {
                    out.mats[i][j][k] = f(&self.mats[i][j][k], &other.mats[i][j][k]);
                }
            }
        }
        out
    }

    /// Copy with the cross-direction (self-interference) channels zeroed.
    pub fn without_cross(&self) -> ChannelSet {
        let mut out = self.clone();
        for i in 0..DIRECTIONS {
            for k in 0..self.subcarriers() {
                out.mats[i][1 - i][k].fill(c(0.0, 0.0));
            }
        }
        out
    }

    pub fn check(&self, config: &SystemConfig) -> Result<()> {
        if self.subcarriers() != config.k() {
            return Err(Error::Dimension(format!(
                "channel set has {} subcarriers, config {}",
                self.subcarriers(),
                config.k()
            )));
        }
        for ((i, j, k), m) in self.iter() {
            if m.shape() != (config.m(i), config.n(j)) {
                return Err(Error::Dimension(format!(
                    "channel ({i},{j},{k}) is {:?}, expected {:?}",
                    m.shape(),
                    (config.m(i), config.n(j))
                )));
            }
        }
        Ok(())
    }
}

/// True channels, their estimates, and the CSI-error feasible sets
/// `||D_ij^k Delta_ij^k||_F <= zeta_ij^k` with `Delta = H - Hest`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub truth: ChannelSet,
    pub estimate: ChannelSet,
    /// `shaping[i][j][k]` is `M_i x M_i`.
    pub shaping: [[Vec<CMat>; 2]; 2],
    pub radius: [[Vec<f64>; 2]; 2],
}

impl ChannelRealization {
    /// Realization with perfect CSI: `estimate == truth`, identity shaping.
    pub fn perfect(truth: ChannelSet, config: &SystemConfig) -> Self {
        let shape = |i: usize| vec![identity(config.m(i)); config.k()];
        ChannelRealization {
            estimate: truth.clone(),
            truth,
            shaping: [[shape(0), shape(0)], [shape(1), shape(1)]],
            radius: config.csi_radius.clone(),
        }
    }

    pub fn errors(&self) -> ChannelSet {
        self.truth.zip_map(&self.estimate, |h, e| h - e)
    }

    pub fn subcarriers(&self) -> usize {
        self.truth.subcarriers()
    }

    /// Time-division view: cross channels removed and their error radii zeroed.
    pub fn half_duplex(&self) -> Self {
        let mut out = self.clone();
        out.truth = self.truth.without_cross();
        out.estimate = self.estimate.without_cross();
        for i in 0..DIRECTIONS {
            out.radius[i][1 - i].iter_mut().for_each(|z| *z = 0.0);
        }
        out
    }

    /// Short hex digest of the true and estimated channels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for set in [&self.truth, &self.estimate] {
            for (_, m) in set.iter() {
                for z in m.iter() {
                    h.update(z.re.to_le_bytes());
                    h.update(z.im.to_le_bytes());
                }
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ChannelDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ChannelDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

type MatDoc = Vec<Vec<[f64; 2]>>;

fn mat_to_doc(m: &CMat) -> MatDoc {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}

fn mat_from_doc(d: &MatDoc) -> Result<CMat> {
    let rows = d.len();
    let cols = d.first().map_or(0, |r| r.len());
    if d.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged matrix in channel document".into()));
    }
    Ok(CMat::from_fn(rows, cols, |r, col| c(d[r][col][0], d[r][col][1])))
}

/// JSON exchange format: every matrix is a list of rows of `[re, im]` pairs,
/// nested as `[i][j][k]`.
#[derive(Serialize, Deserialize)]
struct ChannelDoc {
    truth: [[Vec<MatDoc>; 2]; 2],
    estimate: [[Vec<MatDoc>; 2]; 2],
    shaping: [[Vec<MatDoc>; 2]; 2],
    radius: [[Vec<f64>; 2]; 2],
}

fn nest_to_doc(n: &[[Vec<CMat>; 2]; 2]) -> [[Vec<MatDoc>; 2]; 2] {
    let f = |v: &Vec<CMat>| v.iter().map(mat_to_doc).collect::<Vec<_>>();
    [[f(&n[0][0]), f(&n[0][1])], [f(&n[1][0]), f(&n[1][1])]]
}

fn nest_from_doc(n: &[[Vec<MatDoc>; 2]; 2]) -> Result<[[Vec<CMat>; 2]; 2]> {
    let f = |v: &Vec<MatDoc>| v.iter().map(mat_from_doc).collect::<Result<Vec<_>>>();
    Ok([[f(&n[0][0])?, f(&n[0][1])?], [f(&n[1][0])?, f(&n[1][1])?]])
}

impl From<&ChannelRealization> for ChannelDoc {
    fn from(r: &ChannelRealization) -> Self {
        ChannelDoc {
            truth: nest_to_doc(&r.truth.mats),
            estimate: nest_to_doc(&r.estimate.mats),
            shaping: nest_to_doc(&r.shaping),
            radius: r.radius.clone(),
        }
    }
}

impl TryFrom<ChannelDoc> for ChannelRealization {
    type Error = Error;

    fn try_from(d: ChannelDoc) -> Result<Self> {
        Ok(ChannelRealization {
            truth: ChannelSet { mats: nest_from_doc(&d.truth)? },
            estimate: ChannelSet { mats: nest_from_doc(&d.estimate)? },
            shaping: nest_from_doc(&d.shaping)?,
            radius: d.radius,
        })
    }
}

/// Draws a perfect-CSI realization from `rng`.
pub fn draw_channels_with<R: Rng + ?Sized>(
    config: &SystemConfig,
    stats: &ChannelStats,
    rng: &mut R,
) -> ChannelRealization {
    let mean = stats.si_mean_entry();
    let si_var = stats.si_residual_variance();
    let mut truth = ChannelSet::zeros(config);
    for k in 0..config.k() {
        for i in 0..DIRECTIONS {
            for j in 0..DIRECTIONS {
                let (m, n) = (config.m(i), config.n(j));
                *truth.get_mut(i, j, k) = if i == j {
                    cn_matrix(rng, m, n, stats.rho)
                } else {
                    cn_matrix(rng, m, n, si_var).add_scalar(c(mean, 0.0))
                };
            }
        }
    }
    ChannelRealization::perfect(truth, config)
}

pub fn draw_channels(config: &SystemConfig, stats: &ChannelStats, seed: u64) -> ChannelRealization {
    draw_channels_with(config, stats, &mut rng_for(seed, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbMode {
    /// Uniform density over the feasible ball.
    Interior,
    /// Uniform on the boundary sphere.
    Boundary,
}

/// Concrete CSI errors `errors[(i,j,k)] = Delta_ij^k`.
#[derive(Clone, Debug)]
pub struct CsiErrorSet {
    pub errors: ChannelSet,
}

/// Samples `Delta_ij^k` in its feasible set and sets `estimate = truth - Delta`.
///
/// Interior mode: direction uniform on the unit sphere of `vec(D Delta)`,
/// radius `zeta * u^(1 / (2 N M))`.
pub fn perturb_csi_with<R: Rng + ?Sized>(
    channels: &mut ChannelRealization,
    rng: &mut R,
    mode: PerturbMode,
) -> Result<CsiErrorSet> {
    let mut errors = channels.truth.clone();
    let k_count = channels.subcarriers();
    for i in 0..DIRECTIONS {
        for j in 0..DIRECTIONS {
            for k in 0..k_count {
                let h = channels.truth.get(i, j, k);
                let (m, n) = h.shape();
                let zeta = channels.radius[i][j][k];
                let d_inv = channels.shaping[i][j][k]
                    .clone()
                    .try_inverse()
                    .ok_or(Error::Singular("CSI shaping matrix"))?;
                let delta = if zeta == 0.0 {
                    CMat::zeros(m, n)
                } else {
                    let dir = cn_matrix(rng, m, n, 1.0);
                    let norm = fro2(&dir).sqrt();
                    let r = match mode {
                        PerturbMode::Boundary => zeta,
                        PerturbMode::Interior => {
                            let u: f64 = rng.random();
                            zeta * u.powf(1.0 / (2 * n * m) as f64)
                        }
                    };
                    &d_inv * dir * c(r / norm, 0.0)
                };
                *channels.estimate.get_mut(i, j, k) = h - &delta;
                *errors.get_mut(i, j, k) = delta;
            }
        }
    }
    Ok(CsiErrorSet { errors })
}

pub fn perturb_csi(
    channels: &mut ChannelRealization,
    seed: u64,
    mode: PerturbMode,
) -> Result<CsiErrorSet> {
    perturb_csi_with(channels, &mut rng_for(seed, 1), mode)
}
