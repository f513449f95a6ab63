//! Cox coefficients -> compatibility network -> refinement -> substituted
//! coefficients -> test-set concordance.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cindex::c_index;
use super::cox::{cox_fit, tune_lambda, CoxModel, LambdaSelection};
use super::design::{design_matrix, ColumnKind};
use super::generate::{default_lambda_grid, simulate_transplants, TransplantGenConfig};
use super::TransplantDataset;
use crate::error::{Error, Result};
use crate::lsm::{FitConfig, RefinedEstimates};
use crate::network::{CompatibilityNetwork, NetworkParts};
use crate::refine::{refine, Method, RefineSettings};
use crate::stats::median;

/// Builds the compatibility network implied by a fitted Cox model: node and
/// edge weights are the negated type and pair coefficients, with their
/// standard errors. Pairs without a column are unobserved.
pub fn extract_network(model: &CoxModel) -> Result<CompatibilityNetwork> {
    let mut donors: Vec<(String, f64, f64)> = Vec::new();
    let mut recipients: Vec<(String, f64, f64)> = Vec::new();
    let mut pairs: Vec<(&str, &str, f64, f64)> = Vec::new();
    for (c, kind) in model.layout.columns.iter().enumerate() {
        let (coef, se) = (model.coefficients[c], model.std_errors[c]);
        match kind {
            ColumnKind::Basic { .. } => {}
            ColumnKind::Donor { label } => donors.push((label.clone(), -coef, se)),
            ColumnKind::Recipient { label } => recipients.push((label.clone(), -coef, se)),
            ColumnKind::Pair { donor, recipient } => pairs.push((donor, recipient, -coef, se)),
        }
    }
    let d_index: HashMap<&str, usize> = donors
        .iter()
        .enumerate()
        .map(|(i, d)| (d.0.as_str(), i))
        .collect();
    let r_index: HashMap<&str, usize> = recipients
        .iter()
        .enumerate()
        .map(|(j, r)| (r.0.as_str(), j))
        .collect();
    let (n_d, n_r) = (donors.len(), recipients.len());
    let mut edge_weight = DMatrix::zeros(n_d, n_r);
    let mut edge_se = DMatrix::zeros(n_d, n_r);
    let mut edge_mask = DMatrix::from_element(n_d, n_r, false);
    for (d, r, w, se) in pairs {
        let (Some(&i), Some(&j)) = (d_index.get(d), r_index.get(r)) else {
            continue;
        };
        edge_weight[(i, j)] = w;
        edge_se[(i, j)] = se;
        edge_mask[(i, j)] = true;
    }
    CompatibilityNetwork::new(NetworkParts {
        donor_labels: donors.iter().map(|d| d.0.clone()).collect(),
        recipient_labels: recipients.iter().map(|r| r.0.clone()).collect(),
        donor_weight: donors.iter().map(|d| d.1).collect(),
        donor_se: donors.iter().map(|d| d.2).collect(),
        recipient_weight: recipients.iter().map(|r| r.1).collect(),
        recipient_se: recipients.iter().map(|r| r.2).collect(),
        edge_weight,
        edge_se,
        edge_mask,
    })
}

/// Replaces type and pair coefficients with negated refined estimates.
/// Basic covariates are untouched and no columns are added.
pub fn substitute_coefficients(model: &CoxModel, refined: &RefinedEstimates) -> Result<CoxModel> {
    let index = |labels: &[String]| -> HashMap<String, usize> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect()
    };
    let d_index = index(&refined.donor_labels);
    let r_index = index(&refined.recipient_labels);
    let (n_d, n_r) = (d_index.len(), r_index.len());
    if refined.delta.len() != n_d || refined.gamma.len() != n_r || refined.eta.shape() != (n_d, n_r)
    {
        return Err(Error::DimensionMismatch(
            "refined estimates are inconsistent".into(),
        ));
    }
    let lookup = |map: &HashMap<String, usize>, label: &str| {
        map.get(label).copied().ok_or_else(|| {
            Error::DimensionMismatch(format!("refined estimates have no node {label:?}"))
        })
    };
    let mut out = model.clone();
    for (c, kind) in model.layout.columns.iter().enumerate() {
        out.coefficients[c] = match kind {
            ColumnKind::Basic { .. } => continue,
            ColumnKind::Donor { label } => -refined.delta[lookup(&d_index, label)?],
            ColumnKind::Recipient { label } => -refined.gamma[lookup(&r_index, label)?],
            ColumnKind::Pair { donor, recipient } => {
                -refined.eta[(lookup(&d_index, donor)?, lookup(&r_index, recipient)?)]
            }
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub generator: TransplantGenConfig,
    /// Minimum support for a type or pair column.
    pub min_count: usize,
    pub lambda_grid: Vec<f64>,
    pub refine: RefineSettings,
    pub lsm_dim: usize,
    pub pca_dim: usize,
    pub nmtf_rank: usize,
    pub methods: Vec<Method>,
    /// Substitute the raw estimates themselves (every delta must be zero).
    pub identity_refinement: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            generator: TransplantGenConfig::default(),
            min_count: 10,
            lambda_grid: default_lambda_grid(),
            refine: RefineSettings {
                fit: FitConfig::default(),
                ..Default::default()
            },
            lsm_dim: 2,
            pca_dim: 2,
            nmtf_rank: 2,
            methods: Method::REFINERS.to_vec(),
            identity_refinement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub c_index: f64,
    /// Refined minus raw test C-index.
    pub delta: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub lambda: LambdaSelection,
    pub train_censored_fraction: f64,
    pub network_donors: usize,
    pub network_recipients: usize,
    pub network_edges: usize,
    pub raw_c_index: f64,
    pub methods: Vec<MethodOutcome>,
}

impl PipelineOutcome {
    pub fn delta(&self, method: Method) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.method == method)
            .map(|m| m.delta)
    }
}

/// Runs the substitution pipeline on a given train/test split. `seed` drives
/// the cross-validation folds and the refiners' random starts.
pub fn pipeline_on_split(
    train: &TransplantDataset,
    test: &TransplantDataset,
    config: &PipelineConfig,
    seed: u64,
) -> Result<PipelineOutcome> {
    let design = design_matrix(train, config.min_count)?;
    let lambda = tune_lambda(
        &design,
        &train.time,
        &train.event,
        &config.lambda_grid,
        seed,
    )?;
    let model = cox_fit(&design, &train.time, &train.event, lambda.lambda)?;
    let net = extract_network(&model)?;
    let test_x = design.layout.apply(test)?.x;
    let score = |m: &CoxModel| c_index(&m.risk_scores(&test_x), &test.time, &test.event);
    let raw_c_index = score(&model)?;

    let mut settings = config.refine;
    settings.fit.seed = seed;
    settings.nmtf.seed = seed;
    let methods = config
        .methods
        .iter()
        .map(|&method| {
            let refinement = if config.identity_refinement {
                refine(&net, Method::Raw, 0, &settings)?
            } else {
                let dim = match method {
                    Method::Lsm => config.lsm_dim,
                    Method::Pca => config.pca_dim,
                    Method::Nmtf => config.nmtf_rank,
                    Method::Raw => 0,
                };
                refine(&net, method, dim, &settings)?
            };
            let substituted = substitute_coefficients(&model, &refinement.estimates)?;
            let c = score(&substituted)?;
            Ok(MethodOutcome {
                method,
                c_index: c,
                delta: c - raw_c_index,
                converged: refinement.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineOutcome {
        lambda,
        train_censored_fraction: train.censored_fraction(),
        network_donors: net.n_donors(),
        network_recipients: net.n_recipients(),
        network_edges: net.n_observed(),
        raw_c_index,
        methods,
    })
}

/// Generates a synthetic cohort from `config.generator` and runs the pipeline.
pub fn pipeline_end_to_end(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let sim = simulate_transplants(&config.generator)?;
    pipeline_on_split(&sim.train, &sim.test, config, config.generator.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub outcome: Option<PipelineOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_delta: f64,
    pub median_abs_delta: f64,
    pub fraction_improved: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seeds: Vec<SeedOutcome>,
    pub summary: Vec<MethodSummary>,
    pub median_raw_c_index: f64,
}

impl PipelineReport {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn format_table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>14} {:>16} {:>10} {:>6}\n",
            "method", "median dC", "median |dC|", "improved", "n"
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{:<8} {:>14.5} {:>16.5} {:>10.2} {:>6}\n",
                s.method.name(),
                s.median_delta,
                s.median_abs_delta,
                s.fraction_improved,
                s.n
            ));
        }
        out.push_str(&format!(
            "median raw C-index {:.4}\n",
            self.median_raw_c_index
        ));
        out
    }
}

/// Runs the synthetic pipeline for seeds `generator.seed + k`, `k < n_seeds`.
/// A failing seed is recorded and does not abort the others.
pub fn run_pipeline_seeds(config: &PipelineConfig, n_seeds: usize) -> PipelineReport {
    let seeds: Vec<SeedOutcome> = (0..n_seeds)
        .into_par_iter()
        .map(|k| {
            let seed = config.generator.seed.wrapping_add(k as u64);
            let mut c = config.clone();
            c.generator.seed = seed;
            match pipeline_end_to_end(&c) {
                Ok(o) => SeedOutcome {
                    seed,
                    outcome: Some(o),
                    error: None,
                },
                Err(e) => SeedOutcome {
                    seed,
                    outcome: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    summarize(seeds, &config.methods)
}

/// Runs the pipeline on `n_seeds` seeded 50/50 splits of a user dataset,
/// using seeds `generator.seed + k`. The generator settings are otherwise
/// unused.
pub fn run_pipeline_on_data(
    data: &TransplantDataset,
    config: &PipelineConfig,
    n_seeds: usize,
) -> PipelineReport {
    let seeds: Vec<SeedOutcome> = (0..n_seeds)
        .into_par_iter()
        .map(|k| {
            let seed = config.generator.seed.wrapping_add(k as u64);
            let (train, test) = data.split_half(seed);
            match pipeline_on_split(&train, &test, config, seed) {
                Ok(o) => SeedOutcome {
                    seed,
                    outcome: Some(o),
                    error: None,
                },
                Err(e) => SeedOutcome {
                    seed,
                    outcome: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    summarize(seeds, &config.methods)
}

fn summarize(seeds: Vec<SeedOutcome>, methods: &[Method]) -> PipelineReport {
    let ok: Vec<&PipelineOutcome> = seeds.iter().filter_map(|s| s.outcome.as_ref()).collect();
    let summary = methods
        .iter()
        .map(|&method| {
            let deltas: Vec<f64> = ok.iter().filter_map(|o| o.delta(method)).collect();
            let abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
            MethodSummary {
                method,
                median_delta: median(&deltas),
                median_abs_delta: median(&abs),
                fraction_improved: deltas.iter().filter(|d| **d > 0.0).count() as f64
                    / deltas.len().max(1) as f64,
                n: deltas.len(),
            }
        })
        .collect();
    let raws: Vec<f64> = ok.iter().map(|o| o.raw_c_index).collect();
    PipelineReport {
        seeds,
        summary,
        median_raw_c_index: median(&raws),
    }
}
