use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::evaluate;
use super::optim::{minimize, LbfgsOptions, Minimum};
use super::{pair_affinity, LsmParams};
use crate::error::{Error, Result};
use crate::mds::mds_init;
use crate::network::{compatibility, CompatibilityNetwork};
use crate::rng;

/// Log-likelihoods closer than this are treated as tied across restarts.
const TIE_TOL: f64 = 1e-12;
const RANDOM_INIT_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub dim: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Random restarts in addition to the first (MDS or user supplied) start.
    pub restarts: usize,
    pub seed: u64,
    /// Hold `beta` at its starting value.
    pub freeze_beta: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            max_iter: 500,
            grad_tol: 1e-6,
            restarts: 4,
            seed: 0,
            freeze_beta: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: LsmParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub restart_index: usize,
    pub converged: bool,
    /// Final log-likelihood of every start; `None` where the start diverged.
    pub start_log_likelihoods: Vec<Option<f64>>,
}

fn random_start(net: &CompatibilityNetwork, dim: usize, seed: u64, start: usize) -> LsmParams {
    let mut rng = rng::stream(seed.wrapping_add(start as u64), rng::RESTARTS);
    let mut draw = || RANDOM_INIT_SCALE * rng.sample::<f64, _>(StandardNormal);
    let (n_d, n_r) = (net.n_donors(), net.n_recipients());
    let z_d = DMatrix::from_fn(n_d, dim, |_, _| draw());
    let z_r = DMatrix::from_fn(n_r, dim, |_, _| draw());
    let delta = DVector::from_fn(n_d, |_, _| draw());
    let gamma = DVector::from_fn(n_r, |_, _| draw());
    LsmParams {
        z_d,
        z_r,
        alpha: 0.0,
        beta: 1.0,
        delta,
        gamma,
    }
}

fn mds_start(net: &CompatibilityNetwork, dim: usize) -> LsmParams {
    let (z_d, z_r) = mds_init(net, dim);
    LsmParams {
        z_d,
        z_r,
        alpha: 0.0,
        beta: 1.0,
        delta: DVector::from_column_slice(net.donor_weight()),
        gamma: DVector::from_column_slice(net.recipient_weight()),
    }
}

fn run_start(net: &CompatibilityNetwork, start: &LsmParams, config: &FitConfig) -> Option<Minimum> {
    let layout = start.layout();
    let frozen = config.freeze_beta.then(|| layout.log_beta());
    let objective = |x: &[f64], g: &mut [f64]| {
        let ll = evaluate(layout, x, net, Some(g));
        for gi in g.iter_mut() {
            *gi = -*gi;
        }
        if let Some(k) = frozen {
            g[k] = 0.0;
        }
        -ll
    };
    let opts = LbfgsOptions {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        ..Default::default()
    };
    minimize(objective, &start.pack(), &opts)
        .ok()
        .filter(|m| m.value.is_finite() && m.x.iter().all(|v| v.is_finite()))
}

/// Maximum likelihood fit with restarts.
///
/// Without `init`, start 0 uses MDS positions with `alpha = 0`, `beta = 1` and
/// node effects at their observed weights; starts `1..=restarts` are random.
/// With `init`, start 0 is `init`. The best final log-likelihood wins, ties
/// going to the lowest start index.
pub fn fit(
    net: &CompatibilityNetwork,
    config: &FitConfig,
    init: Option<&LsmParams>,
) -> Result<FitResult> {
    config.validate()?;
    if let Some(p) = init {
        p.validate()?;
        p.check_network(net)?;
        if p.dim() != config.dim {
            return Err(Error::DimensionMismatch(format!(
                "initial parameters have dim {}, config asks for {}",
                p.dim(),
                config.dim
            )));
        }
    }
    let n_starts = config.restarts + 1;
    let outcomes: Vec<Option<Minimum>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let start = match (k, init) {
                (0, Some(p)) => p.clone(),
                (0, None) => mds_start(net, config.dim),
                _ => random_start(net, config.dim, config.seed, k),
            };
            run_start(net, &start, config)
        })
        .collect();

    let start_log_likelihoods: Vec<Option<f64>> = outcomes
        .iter()
        .map(|m| m.as_ref().map(|m| -m.value))
        .collect();
    let mut best: Option<(usize, &Minimum)> = None;
    for (k, m) in outcomes.iter().enumerate() {
        let Some(m) = m else { continue };
        match best {
            Some((_, b)) if -m.value <= -b.value + TIE_TOL => {}
            _ => best = Some((k, m)),
        }
    }
    let (restart_index, m) = best.ok_or(Error::FitDiverged { starts: n_starts })?;
    let layout = crate::lsm::Layout {
        n_d: net.n_donors(),
        n_r: net.n_recipients(),
        dim: config.dim,
    };
    Ok(FitResult {
        params: LsmParams::unpack(layout, &m.x),
        log_likelihood: -m.value,
        iterations: m.iterations,
        grad_norm: m.grad_norm,
        restart_index,
        converged: m.grad_norm <= config.grad_tol,
        start_log_likelihoods,
    })
}

/// Model-based estimates for every donor/recipient pair, observed or not.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedEstimates {
    pub donor_labels: Vec<String>,
    pub recipient_labels: Vec<String>,
    pub mu: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl RefinedEstimates {
    /// Estimates that keep the network's node weights and replace its edge
    /// weights with `eta` (used by the matrix baselines).
    pub fn from_edge_matrix(net: &CompatibilityNetwork, eta: DMatrix<f64>) -> Result<Self> {
        if eta.shape() != (net.n_donors(), net.n_recipients()) {
            return Err(Error::DimensionMismatch("edge matrix shape".into()));
        }
        let delta = DVector::from_column_slice(net.donor_weight());
        let gamma = DVector::from_column_slice(net.recipient_weight());
        let mu = DMatrix::from_fn(eta.nrows(), eta.ncols(), |i, j| {
            compatibility(delta[i], gamma[j], eta[(i, j)])
        });
        Ok(Self {
            donor_labels: net.donor_labels().to_vec(),
            recipient_labels: net.recipient_labels().to_vec(),
            mu,
            eta,
            delta,
            gamma,
        })
    }

    /// The network's own observations as estimates (unobserved pairs are 0).
    pub fn raw(net: &CompatibilityNetwork) -> Self {
        Self::from_edge_matrix(net, net.edge_weight().clone()).expect("shape matches")
    }
}

pub fn refine_network(net: &CompatibilityNetwork, result: &FitResult) -> Result<RefinedEstimates> {
    let p = &result.params;
    p.check_network(net)?;
    let eta = DMatrix::from_fn(p.n_donors(), p.n_recipients(), |i, j| {
        pair_affinity(p, i, j)
    });
    let mu = DMatrix::from_fn(p.n_donors(), p.n_recipients(), |i, j| {
        compatibility(p.delta[i], p.gamma[j], eta[(i, j)])
    });
    Ok(RefinedEstimates {
        donor_labels: net.donor_labels().to_vec(),
        recipient_labels: net.recipient_labels().to_vec(),
        mu,
        eta,
        delta: p.delta.clone(),
        gamma: p.gamma.clone(),
    })
}
