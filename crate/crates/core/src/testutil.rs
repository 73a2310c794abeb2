//! Shared fixtures and independent oracles for unit tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::channel::{cn_matrix, rng_for, ChannelSet};
use crate::config::{SystemConfig, UniformParams};
use crate::linalg::{c, identity, CMat};

pub fn default_config() -> SystemConfig {
    SystemConfig::uniform(&UniformParams::default())
}

pub fn scalar_config(kappa: f64, beta: f64, sigma2: f64) -> SystemConfig {
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

pub fn scalar(re: f64, im: f64) -> CMat {
    CMat::from_element(1, 1, c(re, im))
}

/// Scalar channel set with the given desired and cross gains.
pub fn scalar_channels(config: &SystemConfig, direct: [f64; 2], cross: [f64; 2]) -> ChannelSet {
    ChannelSet::from_fn(config, |i, j, _| if i == j { scalar(direct[i], 0.0) } else { scalar(cross[i], 0.0) })
}

pub fn random_matrices(config: &SystemConfig, seed: u64, rows: impl Fn(usize) -> usize, var: f64) -> [Vec<CMat>; 2] {
    let mut rng = rng_for(seed, 99);
    let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
    for (i, o) in out.iter_mut().enumerate() {
        for _ in 0..config.k() {
            o.push(cn_matrix(&mut rng, rows(i), config.d(i), var));
        }
    }
    out
}

pub fn random_weights(config: &SystemConfig, seed: u64) -> [Vec<CMat>; 2] {
    let mut rng = rng_for(seed, 98);
    let mut out: [Vec<CMat>; 2] = [Vec::new(), Vec::new()];
    for (i, o) in out.iter_mut().enumerate() {
        for _ in 0..config.k() {
            let a = cn_matrix(&mut rng, config.d(i), config.d(i), 1.0);
            o.push(&a * a.adjoint() + identity(config.d(i)));
        }
    }
    out
}

/// Real parametrization of a list of complex matrices.
pub fn flatten(mats: &[CMat]) -> Vec<f64> {
    mats.iter().flat_map(|m| m.iter().flat_map(|z| [z.re, z.im])).collect()
}

pub fn unflatten(x: &[f64], like: &[CMat]) -> Vec<CMat> {
    let mut idx = 0;
    like.iter()
        .map(|m| {
            let mut out = m.clone();
            for z in out.iter_mut() {
                *z = c(x[idx], x[idx + 1]);
                idx += 2;
            }
            out
        })
        .collect()
}

/// Recovers `f(x) = ½ xᵀ A x + gᵀ x + f0` from evaluations of an exactly
/// quadratic function, using unit probes around the origin.
pub fn probe_quadratic(dim: usize, f: impl Fn(&[f64]) -> f64) -> (DMatrix<f64>, DVector<f64>, f64) {
    let unit = |a: usize, s: f64| {
        let mut x = vec![0.0; dim];
        x[a] += s;
        x
    };
    let f0 = f(&vec![0.0; dim]);
    let f1: Vec<f64> = (0..dim).map(|a| f(&unit(a, 1.0))).collect();
    let mut hess = DMatrix::zeros(dim, dim);
    let mut grad = DVector::zeros(dim);
    for a in 0..dim {
        grad[a] = 0.5 * (f1[a] - f(&unit(a, -1.0)));
        hess[(a, a)] = f(&unit(a, 2.0)) - 2.0 * f1[a] + f0;
        for b in 0..a {
            let mut x = unit(a, 1.0);
            x[b] += 1.0;
            let v = f(&x) - f1[a] - f1[b] + f0;
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    (hess, grad, f0)
}

/// Accelerated projected gradient for `min ½ xᵀ A x + gᵀ x` with the
/// parameter blocks constrained to balls. Returns the best value over the
/// provided starting points.
pub fn projected_gradient(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    balls: &[(std::ops::Range<usize>, f64)],
    starts: &[DVector<f64>],
    iters: usize,
) -> (f64, DVector<f64>) {
    let lip = SymmetricEigen::new(hess.clone()).eigenvalues.max().max(1e-300);
    let project = |x: &mut DVector<f64>| {
        for (range, radius) in balls {
            let norm = x.rows(range.start, range.len()).norm();
            if norm > *radius {
                let s = radius / norm;
                x.rows_mut(range.start, range.len()).scale_mut(s);
            }
        }
    };
    let value = |x: &DVector<f64>| 0.5 * x.dot(&(hess * x)) + grad.dot(x);
    let mut best = (f64::INFINITY, starts[0].clone());
    for s in starts {
        let mut x = s.clone();
        project(&mut x);
        let mut y = x.clone();
        let mut t = 1.0f64;
        for _ in 0..iters {
            let mut nx = &y - (hess * &y + grad) / lip;
            project(&mut nx);
            let nt = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &nx + (&nx - &x) * ((t - 1.0) / nt);
            // restart momentum when the value goes up
            if value(&nx) > value(&x) {
                y = nx.clone();
                t = 1.0;
            } else {
                t = nt;
            }
            x = nx;
        }
        let v = value(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}
