//! Independent oracles shared by the integration tests. Nothing here calls
//! the library routine being checked; the Boltzmann tables are rebuilt from
//! explicit spin loops and derivatives come from central differences.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use varqbm::ansatz::ParamCircuit;
use varqbm::ising::IsingParams;
use varqbm::statevector::PauliSum;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_theta(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

pub fn random_u(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> IsingParams {
    let dim = n * (n - 1) / 2 + n;
    let u: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    IsingParams::from_flat(n, &u).unwrap()
}

/// Spin of unit `i` in basis state `z`; unit 0 is the most significant bit
/// and a clear bit means +1.
pub fn spin(n: usize, z: usize, i: usize) -> f64 {
    if (z >> (n - 1 - i)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `(couplings in pair order, fields)` read back from the flat vector.
fn split(n: usize, u: &[f64]) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut pairs = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, u[k]));
            k += 1;
        }
    }
    (pairs, u[k..].to_vec())
}

pub fn energy(n: usize, u: &[f64], z: usize) -> f64 {
    let (pairs, h) = split(n, u);
    let mut e = 0.0;
    for (i, j, v) in pairs {
        e -= v * spin(n, z, i) * spin(n, z, j);
    }
    for (i, hi) in h.iter().enumerate() {
        e -= hi * spin(n, z, i);
    }
    e
}

pub fn boltzmann(n: usize, u: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = (0..1 << n).map(|z| (-energy(n, u, z)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `∂H/∂u` at configuration `z`.
pub fn energy_gradient(n: usize, z: usize) -> Vec<f64> {
    let mut g = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            g.push(-spin(n, z, i) * spin(n, z, j));
        }
    }
    g.extend((0..n).map(|i| -spin(n, z, i)));
    g
}

pub fn thermal_gradient(n: usize, u: &[f64]) -> Vec<f64> {
    let p = boltzmann(n, u);
    let mut g = vec![0.0; u.len()];
    for (z, pz) in p.iter().enumerate() {
        for (gk, dk) in g.iter_mut().zip(energy_gradient(n, z)) {
            *gk += pz * dk;
        }
    }
    g
}

pub fn kld(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Normalized `e^{-Hτ}|++⋯+>` for diagonal `H`.
pub fn exact_flow(n: usize, u: &[f64], tau: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..1 << n).map(|z| (-energy(n, u, z) * tau).exp()).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.into_iter().map(|x| x / norm).collect()
}

pub fn overlap_sq(a: &[Complex64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, step: f64) -> f64 {
    let mut up = x.to_vec();
    let mut dn = x.to_vec();
    up[k] += step;
    dn[k] -= step;
    (f(&up) - f(&dn)) / (2.0 * step)
}

/// `Re <∂_k φ|∂_j φ>` from central differences of the prepared state.
pub fn fd_gram(circuit: &ParamCircuit, theta: &[f64], step: f64) -> DMatrix<f64> {
    let p = circuit.n_params();
    let d: Vec<Vec<Complex64>> = (0..p)
        .map(|k| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += step;
            dn[k] -= step;
            let a = circuit.prepare_state(&up).unwrap();
            let b = circuit.prepare_state(&dn).unwrap();
            a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y) / (2.0 * step)).collect()
        })
        .collect();
    DMatrix::from_fn(p, p, |k, j| d[k].iter().zip(&d[j]).map(|(a, b)| a.conj() * b).sum::<Complex64>().re)
}

pub fn fd_energy_gradient(circuit: &ParamCircuit, theta: &[f64], h: &PauliSum, step: f64) -> Vec<f64> {
    let f = |t: &[f64]| circuit.prepare_state(t).unwrap().expectation(h).unwrap();
    (0..circuit.n_params()).map(|k| central_difference(f, theta, k, step)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
