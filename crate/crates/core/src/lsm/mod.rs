//! The latent space model for compatibility networks.
//!
//! Donors and recipients sit in a shared `d`-dimensional latent space. The
//! pair affinity is `eta_ij = alpha - beta * |z_d[i] - z_r[j]|^2` and the
//! full compatibility adds the node effects, `mu_ij = eta_ij + delta_i +
//! gamma_j`. Observed edge weights are Gaussian around `eta_ij` and observed
//! node weights around `delta_i` / `gamma_j`, each with its own plug-in
//! standard error.

mod fit;
mod likelihood;
pub mod optim;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{compatibility, CompatibilityNetwork};

pub use fit::{fit, refine_network, FitConfig, FitResult, RefinedEstimates};
pub use likelihood::{log_likelihood, log_likelihood_gradient, Gradient, SE_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct LsmParams {
    pub z_d: DMatrix<f64>,
    pub z_r: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub delta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl LsmParams {
    pub fn new(
        z_d: DMatrix<f64>,
        z_r: DMatrix<f64>,
        alpha: f64,
        beta: f64,
        delta: DVector<f64>,
        gamma: DVector<f64>,
    ) -> Result<Self> {
        let p = Self {
            z_d,
            z_r,
            alpha,
            beta,
            delta,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_d.ncols() != self.z_r.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "z_d has {} columns, z_r has {}",
                self.z_d.ncols(),
                self.z_r.ncols()
            )));
        }
        if self.z_d.nrows() != self.delta.len() || self.z_r.nrows() != self.gamma.len() {
            return Err(Error::DimensionMismatch(
                "node effect lengths must match position rows".into(),
            ));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        let finite = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.z_d.iter().all(|x| x.is_finite())
            && self.z_r.iter().all(|x| x.is_finite())
            && self.delta.iter().all(|x| x.is_finite())
            && self.gamma.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn n_donors(&self) -> usize {
        self.z_d.nrows()
    }

    pub fn n_recipients(&self) -> usize {
        self.z_r.nrows()
    }

    pub fn dim(&self) -> usize {
        self.z_d.ncols()
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        (0..self.dim())
            .map(|k| (self.z_d[(i, k)] - self.z_r[(j, k)]).powi(2))
            .sum()
    }

    pub(crate) fn check_network(&self, net: &CompatibilityNetwork) -> Result<()> {
        if self.n_donors() != net.n_donors() || self.n_recipients() != net.n_recipients() {
            return Err(Error::DimensionMismatch(format!(
                "parameters are {}x{}, network is {}x{}",
                self.n_donors(),
                self.n_recipients(),
                net.n_donors(),
                net.n_recipients()
            )));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout {
            n_d: self.n_donors(),
            n_r: self.n_recipients(),
            dim: self.dim(),
        }
    }

    /// Flattens into the unconstrained optimisation vector, with the slope
    /// stored as `ln(beta)`.
    pub(crate) fn pack(&self) -> Vec<f64> {
        let l = self.layout();
        let mut v = vec![0.0; l.len()];
        for i in 0..l.n_d {
            for k in 0..l.dim {
                v[l.z_d(i, k)] = self.z_d[(i, k)];
            }
        }
        for j in 0..l.n_r {
            for k in 0..l.dim {
                v[l.z_r(j, k)] = self.z_r[(j, k)];
            }
        }
        v[l.alpha()] = self.alpha;
        v[l.log_beta()] = self.beta.ln();
        for i in 0..l.n_d {
            v[l.delta(i)] = self.delta[i];
        }
        for j in 0..l.n_r {
            v[l.gamma(j)] = self.gamma[j];
        }
        v
    }

    pub(crate) fn unpack(l: Layout, v: &[f64]) -> Self {
        Self {
            z_d: DMatrix::from_fn(l.n_d, l.dim, |i, k| v[l.z_d(i, k)]),
            z_r: DMatrix::from_fn(l.n_r, l.dim, |j, k| v[l.z_r(j, k)]),
            alpha: v[l.alpha()],
            beta: v[l.log_beta()].exp(),
            delta: DVector::from_fn(l.n_d, |i, _| v[l.delta(i)]),
            gamma: DVector::from_fn(l.n_r, |j, _| v[l.gamma(j)]),
        }
    }
}

/// Index map of the packed parameter vector:
/// `[z_d (row-major), z_r (row-major), alpha, ln(beta), delta, gamma]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub n_d: usize,
    pub n_r: usize,
    pub dim: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        (self.n_d + self.n_r) * self.dim + 2 + self.n_d + self.n_r
    }
    pub fn z_d(&self, i: usize, k: usize) -> usize {
        i * self.dim + k
    }
    pub fn z_r(&self, j: usize, k: usize) -> usize {
        (self.n_d + j) * self.dim + k
    }
    pub fn alpha(&self) -> usize {
        (self.n_d + self.n_r) * self.dim
    }
    pub fn log_beta(&self) -> usize {
        self.alpha() + 1
    }
    pub fn delta(&self, i: usize) -> usize {
        self.alpha() + 2 + i
    }
    pub fn gamma(&self, j: usize) -> usize {
        self.alpha() + 2 + self.n_d + j
    }
}

/// `alpha - beta * |z_d[i] - z_r[j]|^2`.
pub fn pair_affinity(params: &LsmParams, i: usize, j: usize) -> f64 {
    params.alpha - params.beta * params.squared_distance(i, j)
}

/// Model compatibility `mu_ij = eta_ij + delta_i + gamma_j`.
pub fn predict_compatibility(params: &LsmParams, i: usize, j: usize) -> f64 {
    compatibility(
        params.delta[i],
        params.gamma[j],
        pair_affinity(params, i, j),
    )
}

/// JSON form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModelJson {
    pub alpha: f64,
    pub beta: f64,
    pub z_d: Vec<Vec<f64>>,
    pub z_r: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub dim: usize,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "position rows must have length {dim}"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, k| rows[i][k]))
}

impl FittedModelJson {
    pub fn from_result(result: &FitResult) -> Self {
        let p = &result.params;
        Self {
            alpha: p.alpha,
            beta: p.beta,
            z_d: rows(&p.z_d),
            z_r: rows(&p.z_r),
            delta: p.delta.iter().copied().collect(),
            gamma: p.gamma.iter().copied().collect(),
            dim: p.dim(),
            log_likelihood: result.log_likelihood,
            converged: result.converged,
        }
    }

    pub fn params(&self) -> Result<LsmParams> {
        LsmParams::new(
            from_rows(&self.z_d, self.dim)?,
            from_rows(&self.z_r, self.dim)?,
            self.alpha,
            self.beta,
            DVector::from_vec(self.delta.clone()),
            DVector::from_vec(self.gamma.clone()),
        )
    }
}
