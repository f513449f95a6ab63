//! Synthetic compatibility networks with known latent truth, and the
//! replicate harness that measures parameter recovery.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::procrustes_align;
use crate::error::{Error, Result};
use crate::lsm::{fit, pair_affinity, predict_compatibility, FitConfig, LsmParams};
use crate::network::{CompatibilityNetwork, NetworkParts};
use crate::rng;
use crate::stats::{mean, r_squared, rmse, std_error};

/// What the observed edge weights scatter around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMeanConvention {
    /// `eta_ij`, the mean used by the model likelihood.
    #[default]
    PairTermOnly,
    /// `mu_ij = eta_ij + delta_i + gamma_j`.
    FullCompatibility,
}

impl fmt::Display for EdgeMeanConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PairTermOnly => "pair-term-only",
            Self::FullCompatibility => "full-compatibility",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_d: usize,
    pub n_r: usize,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub pos_std: f64,
    pub effect_std: f64,
    pub sigma_w: f64,
    pub sigma_node: f64,
    pub edge_mean_convention: EdgeMeanConvention,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_d: 20,
            n_r: 20,
            dim: 2,
            alpha: 1.0,
            beta: 1.0,
            pos_std: 0.5f64.sqrt(),
            effect_std: 0.5f64.sqrt(),
            sigma_w: 0.15,
            sigma_node: 0.15,
            edge_mean_convention: EdgeMeanConvention::PairTermOnly,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_d == 0 || self.n_r == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "counts and dim must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("pos_std", self.pos_std),
            ("effect_std", self.effect_std),
            ("sigma_w", self.sigma_w),
            ("sigma_node", self.sigma_node),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("alpha must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedNetwork {
    pub truth: LsmParams,
    pub observed: CompatibilityNetwork,
}

pub fn donor_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("D{i}")).collect()
}

pub fn recipient_labels(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("R{j}")).collect()
}

/// Samples latent truth from `config`.
pub fn sample_truth<R: Rng>(config: &SimConfig, rng: &mut R) -> LsmParams {
    let mut normal = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let z_d = DMatrix::from_fn(config.n_d, config.dim, |_, _| normal(config.pos_std));
    let z_r = DMatrix::from_fn(config.n_r, config.dim, |_, _| normal(config.pos_std));
    let delta = DVector::from_fn(config.n_d, |_, _| normal(config.effect_std));
    let gamma = DVector::from_fn(config.n_r, |_, _| normal(config.effect_std));
    LsmParams {
        z_d,
        z_r,
        alpha: config.alpha,
        beta: config.beta,
        delta,
        gamma,
    }
}

/// True mean of edge `(i, j)` under `convention`.
pub fn true_edge_mean(
    truth: &LsmParams,
    convention: EdgeMeanConvention,
    i: usize,
    j: usize,
) -> f64 {
    match convention {
        EdgeMeanConvention::PairTermOnly => pair_affinity(truth, i, j),
        EdgeMeanConvention::FullCompatibility => predict_compatibility(truth, i, j),
    }
}

/// Draws a fully observed noisy network around `truth`.
pub fn observe<R: Rng>(
    truth: &LsmParams,
    config: &SimConfig,
    rng: &mut R,
) -> Result<CompatibilityNetwork> {
    let (n_d, n_r) = (truth.n_donors(), truth.n_recipients());
    let mut noise = |sd: f64| sd * rng.sample::<f64, _>(StandardNormal);
    let edge_weight = DMatrix::from_fn(n_d, n_r, |i, j| {
        true_edge_mean(truth, config.edge_mean_convention, i, j) + noise(config.sigma_w)
    });
    let donor_weight: Vec<f64> = truth
        .delta
        .iter()
        .map(|d| d + noise(config.sigma_node))
        .collect();
    let recipient_weight: Vec<f64> = truth
        .gamma
        .iter()
        .map(|g| g + noise(config.sigma_node))
        .collect();
    CompatibilityNetwork::new(NetworkParts {
        donor_labels: donor_labels(n_d),
        recipient_labels: recipient_labels(n_r),
        donor_weight,
        donor_se: vec![config.sigma_node; n_d],
        recipient_weight,
        recipient_se: vec![config.sigma_node; n_r],
        edge_weight,
        edge_se: DMatrix::from_element(n_d, n_r, config.sigma_w),
        edge_mask: DMatrix::from_element(n_d, n_r, true),
    })
}

pub fn simulate(config: &SimConfig) -> Result<SimulatedNetwork> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::SIMULATION);
    let truth = sample_truth(config, &mut rng);
    let observed = observe(&truth, config, &mut rng)?;
    Ok(SimulatedNetwork { truth, observed })
}

/// Two independent noisy observations of one truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSplit {
    pub truth: LsmParams,
    pub train: CompatibilityNetwork,
    pub test: CompatibilityNetwork,
}

/// Like [`simulate`], then draws a second network from the same truth. The
/// train network equals `simulate(config).observed`.
pub fn simulate_split(config: &SimConfig) -> Result<SimulatedSplit> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::SIMULATION);
    let truth = sample_truth(config, &mut rng);
    let train = observe(&truth, config, &mut rng)?;
    let test = observe(&truth, config, &mut rng)?;
    Ok(SimulatedSplit { truth, train, test })
}

/// Recovery errors of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub rmse_w: f64,
    pub rmse_z_d: f64,
    pub rmse_z_r: f64,
    pub rmse_delta: f64,
    pub rmse_gamma: f64,
    pub abs_err_alpha: f64,
    pub r2_w: f64,
    pub r2_z_d: f64,
    pub r2_z_r: f64,
    pub r2_delta: f64,
    pub r2_gamma: f64,
    pub converged: bool,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub seed: u64,
    pub metrics: Option<ReplicateMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            se: std_error(xs),
        }
    }
}

impl fmt::Display for MeanSe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub rmse_w: MeanSe,
    pub rmse_z_d: MeanSe,
    pub rmse_z_r: MeanSe,
    pub rmse_delta: MeanSe,
    pub rmse_gamma: MeanSe,
    pub abs_err_alpha: MeanSe,
    pub r2_w: MeanSe,
    pub r2_z_d: MeanSe,
    pub r2_z_r: MeanSe,
    pub r2_delta: MeanSe,
    pub r2_gamma: MeanSe,
    pub n_ok: usize,
    pub n_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub sim: SimConfig,
    pub fit: FitConfig,
    pub n_reps: usize,
    pub replicates: Vec<ReplicateOutcome>,
    pub summary: ReplicateSummary,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

/// Fits one simulated network and scores recovery against its truth.
pub fn score_replicate(sim: &SimulatedNetwork, fit_config: &FitConfig) -> Result<ReplicateMetrics> {
    let init = None;
    let result = fit(&sim.observed, fit_config, init)?;
    let est = &result.params;
    let truth = &sim.truth;
    let (n_d, n_r) = (truth.n_donors(), truth.n_recipients());

    // the likelihood's edge mean is eta
    let net = &sim.observed;
    let mut pred_w = Vec::with_capacity(n_d * n_r);
    let mut obs_w = Vec::with_capacity(n_d * n_r);
    for pair in net.observed_pairs() {
        pred_w.push(pair_affinity(est, pair.donor_index, pair.recipient_index));
        obs_w.push(net.edge_weight()[(pair.donor_index, pair.recipient_index)]);
    }

    let est_z = stack(&est.z_d, &est.z_r);
    let true_z = stack(&truth.z_d, &truth.z_r);
    let aligned = procrustes_align(&est_z, &true_z)?.aligned;
    let z_d_hat = aligned.rows(0, n_d).into_owned();
    let z_r_hat = aligned.rows(n_d, n_r).into_owned();
    let (zd_p, zd_t) = (flat(&z_d_hat), flat(&truth.z_d));
    let (zr_p, zr_t) = (flat(&z_r_hat), flat(&truth.z_r));
    let (d_p, d_t) = (est.delta.as_slice(), truth.delta.as_slice());
    let (g_p, g_t) = (est.gamma.as_slice(), truth.gamma.as_slice());

    Ok(ReplicateMetrics {
        rmse_w: rmse(&pred_w, &obs_w),
        rmse_z_d: rmse(&zd_p, &zd_t),
        rmse_z_r: rmse(&zr_p, &zr_t),
        rmse_delta: rmse(d_p, d_t),
        rmse_gamma: rmse(g_p, g_t),
        abs_err_alpha: (est.alpha - truth.alpha).abs(),
        r2_w: r_squared(&pred_w, &obs_w),
        r2_z_d: r_squared(&zd_p, &zd_t),
        r2_z_r: r_squared(&zr_p, &zr_t),
        r2_delta: r_squared(d_p, d_t),
        r2_gamma: r_squared(g_p, g_t),
        converged: result.converged,
        log_likelihood: result.log_likelihood,
    })
}

pub(crate) fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// Simulates, fits and scores `n_reps` networks. Replicate `k` uses
/// simulation seed `config.seed + k` and fit seed `fit_config.seed + k`.
pub fn run_replicates(
    config: &SimConfig,
    fit_config: &FitConfig,
    n_reps: usize,
) -> Result<ReplicateReport> {
    if n_reps == 0 {
        return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
    }
    config.validate()?;
    fit_config.validate()?;
    let replicates: Vec<ReplicateOutcome> = (0..n_reps)
        .into_par_iter()
        .map(|k| {
            let seed = config.seed.wrapping_add(k as u64);
            let sim_config = SimConfig { seed, ..*config };
            let fc = FitConfig {
                seed: fit_config.seed.wrapping_add(k as u64),
                ..*fit_config
            };
            let scored = simulate(&sim_config).and_then(|sim| score_replicate(&sim, &fc));
            match scored {
                Ok(m) => ReplicateOutcome {
                    replicate: k,
                    seed,
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => ReplicateOutcome {
                    replicate: k,
                    seed,
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<&ReplicateMetrics> = replicates
        .iter()
        .filter_map(|r| r.metrics.as_ref())
        .collect();
    let col =
        |f: fn(&ReplicateMetrics) -> f64| MeanSe::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let summary = ReplicateSummary {
        rmse_w: col(|m| m.rmse_w),
        rmse_z_d: col(|m| m.rmse_z_d),
        rmse_z_r: col(|m| m.rmse_z_r),
        rmse_delta: col(|m| m.rmse_delta),
        rmse_gamma: col(|m| m.rmse_gamma),
        abs_err_alpha: col(|m| m.abs_err_alpha),
        r2_w: col(|m| m.r2_w),
        r2_z_d: col(|m| m.r2_z_d),
        r2_z_r: col(|m| m.r2_z_r),
        r2_delta: col(|m| m.r2_delta),
        r2_gamma: col(|m| m.r2_gamma),
        n_ok: ok.len(),
        n_converged: ok.iter().filter(|m| m.converged).count(),
    };
    Ok(ReplicateReport {
        sim: *config,
        fit: *fit_config,
        n_reps,
        replicates,
        summary,
    })
}

/// Renders reports side by side in the layout of a recovery table: one row per
/// quantity, one column per report.
pub fn format_recovery_table(columns: &[(&str, &ReplicateSummary)]) -> String {
    type Getter = fn(&ReplicateSummary) -> MeanSe;
    let rows: [(&str, &str, Getter); 11] = [
        ("RMSE", "w", |s| s.rmse_w),
        ("RMSE", "z_d", |s| s.rmse_z_d),
        ("RMSE", "z_r", |s| s.rmse_z_r),
        ("RMSE", "delta", |s| s.rmse_delta),
        ("RMSE", "gamma", |s| s.rmse_gamma),
        ("RMSE", "alpha", |s| s.abs_err_alpha),
        ("R^2", "w", |s| s.r2_w),
        ("R^2", "z_d", |s| s.r2_z_d),
        ("R^2", "z_r", |s| s.r2_z_r),
        ("R^2", "delta", |s| s.r2_delta),
        ("R^2", "gamma", |s| s.r2_gamma),
    ];
    let width = columns
        .iter()
        .map(|(h, _)| h.len())
        .max()
        .unwrap_or(0)
        .max(15);
    let mut out = format!("{:<6} {:<10}", "", "Parameter");
    for (h, _) in columns {
        out.push_str(&format!(" {h:>width$}"));
    }
    out.push('\n');
    let mut last = "";
    for (metric, name, get) in rows {
        let label = if metric == last { "" } else { metric };
        last = metric;
        out.push_str(&format!("{label:<6} {name:<10}"));
        for (_, s) in columns {
            out.push_str(&format!(" {:>width$}", get(s).to_string()));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bitwise_identical() {
        let c = SimConfig {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(simulate(&c).unwrap(), simulate(&c).unwrap());
    }

    #[test]
    fn noise_level_matches_sigma_w() {
        // sample sd of 400 N(0, s^2) residuals: relative sd ~ 1/sqrt(800) = 3.5%,
        // so 20% is far beyond any chi-square quantile we could hit
        for seed in 0..5 {
            let c = SimConfig {
                seed,
                ..Default::default()
            };
            let sim = simulate(&c).unwrap();
            let res: Vec<f64> = sim
                .observed
                .observed_pairs()
                .iter()
                .map(|p| {
                    let (i, j) = (p.donor_index, p.recipient_index);
                    sim.observed.edge_weight()[(i, j)] - pair_affinity(&sim.truth, i, j)
                })
                .collect();
            let m = mean(&res);
            let sd =
                (res.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (res.len() - 1) as f64).sqrt();
            assert!((sd / 0.15 - 1.0).abs() < 0.2, "seed {seed}: sd {sd}");
        }
    }

    #[test]
    fn noiseless_limit() {
        let c = SimConfig {
            sigma_w: 1e-12,
            edge_mean_convention: EdgeMeanConvention::FullCompatibility,
            seed: 3,
            ..Default::default()
        };
        let sim = simulate(&c).unwrap();
        for p in sim.observed.observed_pairs() {
            let (i, j) = (p.donor_index, p.recipient_index);
            let want = predict_compatibility(&sim.truth, i, j);
            assert!((sim.observed.edge_weight()[(i, j)] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = SimConfig {
            sigma_w: 0.0,
            ..Default::default()
        };
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn single_replicate_has_zero_standard_errors() {
        let c = SimConfig {
            n_d: 8,
            n_r: 8,
            ..Default::default()
        };
        let fc = FitConfig {
            restarts: 1,
            freeze_beta: true,
            ..Default::default()
        };
        let r = run_replicates(&c, &fc, 1).unwrap();
        assert_eq!(r.summary.n_ok, 1);
        assert_eq!(r.summary.rmse_w.se, 0.0);
        assert_eq!(r.summary.r2_gamma.se, 0.0);
        let table = format_recovery_table(&[("low", &r.summary)]);
        assert_eq!(table.lines().count(), 12);
    }
}
