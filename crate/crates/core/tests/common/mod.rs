#![allow(dead_code)]

use lsmnet::network::{CompatibilityNetwork, NetworkParts};
use lsmnet::LsmParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random network with roughly `observed` of the edges kept.
pub fn random_network(n_d: usize, n_r: usize, observed: f64, seed: u64) -> CompatibilityNetwork {
    let mut r = rng(seed);
    let mut mask = DMatrix::from_fn(n_d, n_r, |_, _| r.random::<f64>() < observed);
    mask[(0, 0)] = true;
    CompatibilityNetwork::new(NetworkParts {
        donor_labels: (0..n_d).map(|i| format!("d{i}")).collect(),
        recipient_labels: (0..n_r).map(|j| format!("r{j}")).collect(),
        donor_weight: (0..n_d).map(|_| normal(&mut r)).collect(),
        donor_se: (0..n_d).map(|_| r.random_range(0.2..1.0)).collect(),
        recipient_weight: (0..n_r).map(|_| normal(&mut r)).collect(),
        recipient_se: (0..n_r).map(|_| r.random_range(0.2..1.0)).collect(),
        edge_weight: DMatrix::from_fn(n_d, n_r, |_, _| normal(&mut r)),
        edge_se: DMatrix::from_fn(n_d, n_r, |_, _| r.random_range(0.2..1.0)),
        edge_mask: mask,
    })
    .unwrap()
}

pub fn random_params(n_d: usize, n_r: usize, dim: usize, seed: u64) -> LsmParams {
    let mut r = rng(seed);
    LsmParams::new(
        DMatrix::from_fn(n_d, dim, |_, _| normal(&mut r)),
        DMatrix::from_fn(n_r, dim, |_, _| normal(&mut r)),
        normal(&mut r),
        (0.5 * normal(&mut r)).exp(),
        DVector::from_fn(n_d, |_, _| normal(&mut r)),
        DVector::from_fn(n_r, |_, _| normal(&mut r)),
    )
    .unwrap()
}

fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * sd * sd).ln() - (x - mean).powi(2) / (2.0 * sd * sd)
}

/// Term-by-term log-likelihood, written without any of the library's helpers.
pub fn naive_log_likelihood(p: &LsmParams, net: &CompatibilityNetwork) -> f64 {
    let mut total = 0.0;
    for i in 0..net.n_donors() {
        for j in 0..net.n_recipients() {
            if !net.edge_mask()[(i, j)] {
                continue;
            }
            let mut d2 = 0.0;
            for k in 0..p.z_d.ncols() {
                d2 += (p.z_d[(i, k)] - p.z_r[(j, k)]).powi(2);
            }
            let eta = p.alpha - p.beta * d2;
            total += log_normal(net.edge_weight()[(i, j)], eta, net.edge_se()[(i, j)]);
        }
    }
    for i in 0..net.n_donors() {
        total += log_normal(net.donor_weight()[i], p.delta[i], net.donor_se()[i]);
    }
    for j in 0..net.n_recipients() {
        total += log_normal(net.recipient_weight()[j], p.gamma[j], net.recipient_se()[j]);
    }
    total
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| normal(rng));
    a.qr().q()
}
