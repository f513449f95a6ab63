//! Matrix refinement baselines: truncated PCA and non-negative matrix
//! tri-factorisation on the logistic scale.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mds::{logistic, logit};
use crate::rng;

/// Reconstructions are kept this far from 0 and 1 before taking the logit.
pub const PROB_CLAMP: f64 = 1e-9;
const DENOM_FLOOR: f64 = 1e-300;

/// Fills unobserved entries with their column mean over observed entries,
/// or the global observed mean for columns with no observations.
pub fn impute_missing(weights: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    assert_eq!(weights.shape(), mask.shape());
    let (mut total, mut count) = (0.0, 0usize);
    for (w, &m) in weights.iter().zip(mask.iter()) {
        if m {
            total += w;
            count += 1;
        }
    }
    let global = if count > 0 { total / count as f64 } else { 0.0 };
    let mut out = weights.clone();
    for j in 0..weights.ncols() {
        let (mut s, mut c) = (0.0, 0usize);
        for i in 0..weights.nrows() {
            if mask[(i, j)] {
                s += weights[(i, j)];
                c += 1;
            }
        }
        let fill = if c > 0 { s / c as f64 } else { global };
        for i in 0..weights.nrows() {
            if !mask[(i, j)] {
                out[(i, j)] = fill;
            }
        }
    }
    out
}

/// Reconstruction from the leading `dim` principal components of the
/// column-centred matrix.
pub fn pca_refine(weights: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let (n, m) = weights.shape();
    if dim == 0 || dim > n.min(m) {
        return Err(Error::InvalidConfig(format!(
            "PCA dim must be in 1..={}, got {dim}",
            n.min(m)
        )));
    }
    let means = weights.row_mean();
    let mut centered = weights.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let svd = centered.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(n, m);
    for &k in order.iter().take(dim) {
        out += svd.singular_values[k] * u.column(k) * v_t.row(k);
    }
    for mut row in out.row_iter_mut() {
        row += &means;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmtfConfig {
    pub rank: usize,
    pub max_iter: usize,
    /// Relative objective change below which iteration stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmtfConfig {
    fn default() -> Self {
        Self {
            rank: 2,
            max_iter: 2000,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// `V ~ F S G^T` with all three factors non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TriFactors {
    pub f: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Squared Frobenius error after initialisation and after every sweep.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl TriFactors {
    pub fn product(&self) -> DMatrix<f64> {
        &self.f * &self.s * self.g.transpose()
    }
}

fn objective(v: &DMatrix<f64>, f: &DMatrix<f64>, s: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    (v - f * s * g.transpose()).norm_squared()
}

fn multiplicative(x: &mut DMatrix<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>) {
    for ((xi, n), d) in x.iter_mut().zip(num.iter()).zip(den.iter()) {
        *xi *= n / d.max(DENOM_FLOOR);
    }
}

/// Multiplicative-update tri-factorisation of a non-negative matrix.
pub fn nmtf(v: &DMatrix<f64>, config: &NmtfConfig) -> Result<TriFactors> {
    let (n, m) = v.shape();
    let k = config.rank;
    if k == 0 || k > n.min(m) {
        return Err(Error::InvalidConfig(format!(
            "NMTF rank must be in 1..={}, got {k}",
            n.min(m)
        )));
    }
    if v.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidInput(
            "NMTF input must be non-negative".into(),
        ));
    }
    let mut rng = rng::stream(config.seed, rng::FACTORS);
    let mut uniform =
        |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(f64::EPSILON..1.0));
    let mut f = uniform(n, k);
    let mut s = uniform(k, k);
    let mut g = uniform(m, k);

    let mut trace = vec![objective(v, &f, &s, &g)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        // F <- F * (V G S^T) / (F S G^T G S^T)
        let gs_t = &g * s.transpose();
        let num = v * &gs_t;
        let den = &f * (s.clone() * g.transpose() * &gs_t);
        multiplicative(&mut f, &num, &den);

        // G <- G * (V^T F S) / (G S^T F^T F S)
        let fs = &f * &s;
        let num = v.transpose() * &fs;
        let den = &g * (s.transpose() * f.transpose() * &fs);
        multiplicative(&mut g, &num, &den);

        // S <- S * (F^T V G) / (F^T F S G^T G)
        let num = f.transpose() * v * &g;
        let den = f.transpose() * &f * &s * (g.transpose() * &g);
        multiplicative(&mut s, &num, &den);

        iterations += 1;
        let obj = objective(v, &f, &s, &g);
        let prev = *trace.last().expect("non-empty");
        trace.push(obj);
        if (prev - obj).abs() <= config.tol * prev.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(TriFactors {
        f,
        s,
        g,
        objective: trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmtfRefinement {
    /// Refined weights on the original (log hazard ratio) scale.
    pub reconstruction: DMatrix<f64>,
    pub factors: TriFactors,
}

/// Logistic transform, tri-factorisation, clamp, logit back.
pub fn nmtf_refine(weights: &DMatrix<f64>, config: &NmtfConfig) -> Result<NmtfRefinement> {
    let v = weights.map(logistic);
    let factors = nmtf(&v, config)?;
    let reconstruction = factors
        .product()
        .map(|p| logit(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)));
    Ok(NmtfRefinement {
        reconstruction,
        factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn imputation_uses_column_then_global_mean() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 5.0, 9.0, 3.0, 7.0, 9.0]);
        let mask = DMatrix::from_row_slice(2, 3, &[true, true, false, true, false, false]);
        let out = impute_missing(&w, &mask);
        assert_eq!(out[(1, 1)], 5.0);
        assert_eq!(out[(0, 2)], 3.0);
        assert_eq!(out[(1, 2)], 3.0);
        assert_eq!(out[(0, 0)], 1.0);
    }

    #[test]
    fn pca_rank_one_is_exact() {
        let a = nalgebra::DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0]);
        let b = nalgebra::RowDVector::from_row_slice(&[0.3, 1.0, -1.5]);
        let m = &a * &b;
        let r = pca_refine(&m, 1).unwrap();
        assert!((r - m).amax() < 1e-10);
    }

    #[test]
    fn pca_full_rank_is_identity() {
        let m = random(6, 5, 1);
        assert!((pca_refine(&m, 5).unwrap() - &m).amax() < 1e-10);
    }

    #[test]
    fn pca_error_decreases_with_dim() {
        let m = random(7, 6, 2);
        let errs: Vec<f64> = (1..=6)
            .map(|d| (pca_refine(&m, d).unwrap() - &m).norm())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn pca_rejects_bad_dim() {
        assert!(pca_refine(&random(3, 3, 0), 0).is_err());
        assert!(pca_refine(&random(3, 4, 0), 4).is_err());
    }

    #[test]
    fn logit_inverts_logistic() {
        // beyond |x| = 15 the probability is too close to 1 to round-trip
        for k in 0..=300 {
            let x = -15.0 + 0.1 * k as f64;
            assert!((logit(logistic(x)) - x).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn rank_one_product_is_recovered() {
        let f = DMatrix::from_column_slice(5, 1, &[0.2, 0.5, 0.9, 0.4, 0.7]);
        let g = DMatrix::from_column_slice(4, 1, &[0.3, 0.8, 0.6, 1.0]);
        let v = &f * DMatrix::from_element(1, 1, 0.9) * g.transpose();
        let out = nmtf(
            &v,
            &NmtfConfig {
                rank: 1,
                seed: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((out.product() - &v).norm() <= 1e-3);
    }

    #[test]
    fn factors_stay_non_negative_and_objective_monotone() {
        let v = random(8, 7, 9).map(logistic);
        let out = nmtf(
            &v,
            &NmtfConfig {
                rank: 3,
                max_iter: 300,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out
            .f
            .iter()
            .chain(out.s.iter())
            .chain(out.g.iter())
            .all(|x| *x >= 0.0));
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0]));
        }
    }

    #[test]
    fn refinement_is_seeded() {
        let w = random(6, 6, 3);
        let c = NmtfConfig {
            rank: 2,
            seed: 17,
            ..Default::default()
        };
        assert_eq!(nmtf_refine(&w, &c).unwrap(), nmtf_refine(&w, &c).unwrap());
    }
}
