//! Prediction accuracy of refined compatibilities against held-out estimates.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsm::RefinedEstimates;
use crate::network::{CompatibilityNetwork, NetworkPair};
use crate::refine::{refine, Method, RefineSettings};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} entries, observation has {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty vectors".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    same_len(pred, obs)?;
    Ok(crate::stats::rmse(pred, obs))
}

/// Mean Gaussian log-density of each prediction under its observation and
/// standard error: a precision-weighted accuracy score.
pub fn mean_log_prob(pred: &[f64], obs: &[f64], obs_se: &[f64]) -> Result<f64> {
    same_len(pred, obs)?;
    same_len(obs, obs_se)?;
    let mut total = 0.0;
    for ((p, o), s) in pred.iter().zip(obs).zip(obs_se) {
        if !(*s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "non-positive standard error {s}"
            )));
        }
        total += -0.5 * (LN_2PI + (s * s).ln()) - (p - o).powi(2) / (2.0 * s * s);
    }
    Ok(total / pred.len() as f64)
}

/// Fraction of entries where prediction and observation fall on the same side
/// of zero; zero counts as positive.
pub fn sign_accuracy(pred: &[f64], obs: &[f64]) -> Result<f64> {
    same_len(pred, obs)?;
    let agree = pred
        .iter()
        .zip(obs)
        .filter(|(p, o)| (**p >= 0.0) == (**o >= 0.0))
        .count();
    Ok(agree as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mean_log_prob: f64,
    pub sign_accuracy: f64,
    pub n_pairs: usize,
}

impl EvalReport {
    pub fn compute(pred: &[f64], obs: &[f64], obs_se: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(pred, obs)?,
            mean_log_prob: mean_log_prob(pred, obs, obs_se)?,
            sign_accuracy: sign_accuracy(pred, obs)?,
            n_pairs: pred.len(),
        })
    }
}

/// Which quantity predictions and targets are compared on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalScale {
    /// `mu = delta + gamma + eta`.
    #[default]
    Compatibility,
    /// The pair term alone.
    PairTerm,
}

/// Pairs observed in both networks, donor-major.
pub fn common_pairs(
    a: &CompatibilityNetwork,
    b: &CompatibilityNetwork,
) -> Result<Vec<NetworkPair>> {
    if a.donor_labels() != b.donor_labels() || a.recipient_labels() != b.recipient_labels() {
        return Err(Error::DimensionMismatch(
            "train and test networks must share node labels in the same order".into(),
        ));
    }
    let pairs: Vec<NetworkPair> = a
        .observed_pairs()
        .into_iter()
        .filter(|p| b.is_observed(p.donor_index, p.recipient_index))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoCommonPairs);
    }
    Ok(pairs)
}

/// Scores refined estimates against a held-out network on `pairs`.
pub fn score_estimates(
    estimates: &RefinedEstimates,
    test: &CompatibilityNetwork,
    pairs: &[NetworkPair],
    scale: EvalScale,
) -> Result<EvalReport> {
    let mut pred = Vec::with_capacity(pairs.len());
    let mut obs = Vec::with_capacity(pairs.len());
    let mut se = Vec::with_capacity(pairs.len());
    for &p in pairs {
        let (i, j) = (p.donor_index, p.recipient_index);
        match scale {
            EvalScale::Compatibility => {
                pred.push(estimates.mu[(i, j)]);
                obs.push(test.observed_compatibility(p));
                se.push(test.compatibility_se(p));
            }
            EvalScale::PairTerm => {
                pred.push(estimates.eta[(i, j)]);
                obs.push(test.edge_weight()[(i, j)]);
                se.push(test.edge_se()[(i, j)]);
            }
        }
    }
    EvalReport::compute(&pred, &obs, &se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimReport {
    /// `None` for the raw estimates, which have no dimension.
    pub dim: Option<usize>,
    pub report: EvalReport,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEvaluation {
    pub method: Method,
    pub scale: EvalScale,
    pub per_dim: Vec<DimReport>,
    /// Dimension with the best mean log-probability.
    pub selected_dim: Option<usize>,
}

impl RefinementEvaluation {
    pub fn selected(&self) -> &DimReport {
        self.per_dim
            .iter()
            .find(|d| d.dim == self.selected_dim)
            .expect("selected dimension is in the sweep")
    }
}

/// Refines `train` with `method` at each dimension of `dim_grid` and scores
/// against `test` on pairs observed in both.
pub fn evaluate_refinement(
    train: &CompatibilityNetwork,
    test: &CompatibilityNetwork,
    method: Method,
    dim_grid: &[usize],
    settings: &RefineSettings,
    scale: EvalScale,
) -> Result<RefinementEvaluation> {
    let pairs = common_pairs(train, test)?;
    if method == Method::Raw {
        let est = refine(train, Method::Raw, 0, settings)?;
        let report = score_estimates(&est.estimates, test, &pairs, scale)?;
        return Ok(RefinementEvaluation {
            method,
            scale,
            per_dim: vec![DimReport {
                dim: None,
                report,
                converged: true,
            }],
            selected_dim: None,
        });
    }
    if dim_grid.is_empty() {
        return Err(Error::InvalidConfig("dimension grid is empty".into()));
    }
    let per_dim: Vec<DimReport> = dim_grid
        .par_iter()
        .map(|&dim| {
            let r = refine(train, method, dim, settings)?;
            Ok(DimReport {
                dim: Some(dim),
                report: score_estimates(&r.estimates, test, &pairs, scale)?,
                converged: r.converged,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = &per_dim[0];
    for d in &per_dim[1..] {
        if d.report.mean_log_prob > best.report.mean_log_prob {
            best = d;
        }
    }
    let selected_dim = best.dim;
    Ok(RefinementEvaluation {
        method,
        scale,
        per_dim,
        selected_dim,
    })
}

/// Metric-by-method comparison table for selected dimensions.
pub fn format_comparison_table(evals: &[RefinementEvaluation]) -> String {
    let mut out = format!("{:<16}", "Metric");
    for e in evals {
        let head = match e.selected_dim {
            Some(d) => format!("{} (d={d})", e.method),
            None => e.method.to_string(),
        };
        out.push_str(&format!(" {head:>14}"));
    }
    out.push('\n');
    type Get = fn(&EvalReport) -> f64;
    let rows: [(&str, Get); 3] = [
        ("RMSE", |r| r.rmse),
        ("Mean log-prob", |r| r.mean_log_prob),
        ("Sign accuracy", |r| r.sign_accuracy),
    ];
    for (name, get) in rows {
        out.push_str(&format!("{name:<16}"));
        for e in evals {
            out.push_str(&format!(" {:>14.4}", get(&e.selected().report)));
        }
        out.push('\n');
    }
    out
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rmse {:.4}  mean log-prob {:.4}  sign accuracy {:.4}  ({} pairs)",
            self.rmse, self.mean_log_prob, self.sign_accuracy, self.n_pairs
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[2.0, 3.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_log_prob_examples() {
        let v = mean_log_prob(&[0.3, -1.0], &[0.3, -1.0], &[1.0, 1.0]).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
        let se = [0.5, 2.0];
        let obs = [1.0, -1.0];
        let pred = [1.5, 1.0];
        let want = se
            .iter()
            .map(|s: &f64| -0.5 * (2.0 * std::f64::consts::PI * s * s).ln() - 0.5)
            .sum::<f64>()
            / 2.0;
        assert!((mean_log_prob(&pred, &obs, &se).unwrap() - want).abs() < 1e-12);
        assert!(mean_log_prob(&[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn sign_accuracy_examples() {
        assert_eq!(sign_accuracy(&[1.0, -1.0], &[2.0, -3.0]).unwrap(), 1.0);
        assert_eq!(sign_accuracy(&[1.0, -1.0], &[-2.0, -3.0]).unwrap(), 0.5);
        assert_eq!(sign_accuracy(&[0.0], &[0.1]).unwrap(), 1.0);
        assert!(sign_accuracy(&[0.0], &[]).is_err());
    }
}
