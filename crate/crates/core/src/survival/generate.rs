//! Synthetic transplant cohorts whose type and pair log hazard ratios are
//! negated compatibilities from a planted latent space model.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TransplantDataset;
use crate::error::{Error, Result};
use crate::lsm::{pair_affinity, LsmParams};
use crate::rng;
use crate::sim::{donor_labels, recipient_labels, sample_truth, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Pair effects come from latent distances.
    #[default]
    Planted,
    /// Pair effects are shuffled across pairs, keeping their distribution but
    /// destroying the geometry.
    Permuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransplantGenConfig {
    /// Subjects in each of the train and test splits.
    pub n_per_split: usize,
    pub n_donor_types: usize,
    pub n_recipient_types: usize,
    pub n_basic: usize,
    /// Latent structure; node counts are taken from the type counts and the
    /// observation noise fields are unused.
    pub latent: SimConfig,
    pub basic_coef_std: f64,
    /// Exponential baseline hazard rate.
    pub baseline_rate: f64,
    /// Expected censored fraction; the censoring rate is solved for it.
    pub censor_fraction: f64,
    pub structure: Structure,
    pub seed: u64,
}

impl Default for TransplantGenConfig {
    fn default() -> Self {
        Self {
            n_per_split: 4000,
            n_donor_types: 16,
            n_recipient_types: 16,
            n_basic: 4,
            latent: SimConfig {
                alpha: 0.5,
                beta: 1.0,
                pos_std: 0.3,
                effect_std: 0.3,
                ..SimConfig::default()
            },
            basic_coef_std: 0.3,
            baseline_rate: 0.1,
            censor_fraction: 0.75,
            structure: Structure::Planted,
            seed: 0,
        }
    }
}

impl TransplantGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_split < 2 || self.n_donor_types == 0 || self.n_recipient_types == 0 {
            return Err(Error::InvalidConfig(
                "need at least 2 subjects and 1 type per side".into(),
            ));
        }
        if !(self.baseline_rate > 0.0) || !(self.basic_coef_std >= 0.0) {
            return Err(Error::InvalidConfig(
                "rates and scales must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.censor_fraction) {
            return Err(Error::InvalidConfig(
                "censor_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Ten log-spaced ridge penalties from 1e-3 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10)
        .map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / 9.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub donor_labels: Vec<String>,
    pub recipient_labels: Vec<String>,
    pub latent: LsmParams,
    /// Log hazard ratios (negated compatibilities).
    pub donor_coef: DVector<f64>,
    pub recipient_coef: DVector<f64>,
    pub pair_coef: DMatrix<f64>,
    pub basic_coef: DVector<f64>,
    pub censoring_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransplantSimulation {
    pub train: TransplantDataset,
    pub test: TransplantDataset,
    pub truth: PlantedTruth,
}

struct Subject {
    x: Vec<f64>,
    donor: usize,
    recipient: usize,
    lp: f64,
}

/// Solves `mean(h / (h + c)) = event_fraction` for the censoring rate `c`.
fn censoring_rate(hazards: &[f64], event_fraction: f64) -> f64 {
    if event_fraction >= 1.0 {
        return 0.0;
    }
    let frac = |c: f64| hazards.iter().map(|h| h / (h + c)).sum::<f64>() / hazards.len() as f64;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frac(mid.exp()) > event_fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

pub fn simulate_transplants(config: &TransplantGenConfig) -> Result<TransplantSimulation> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::TRANSPLANTS);
    let latent_config = SimConfig {
        n_d: config.n_donor_types,
        n_r: config.n_recipient_types,
        ..config.latent
    };
    latent_config.validate()?;
    let latent = sample_truth(&latent_config, &mut rng);
    let (n_d, n_r) = (config.n_donor_types, config.n_recipient_types);
    let mut pair_coef = DMatrix::from_fn(n_d, n_r, |i, j| -pair_affinity(&latent, i, j));
    if config.structure == Structure::Permuted {
        let mut values: Vec<f64> = pair_coef.iter().copied().collect();
        values.shuffle(&mut rng);
        pair_coef = DMatrix::from_column_slice(n_d, n_r, &values);
    }
    let donor_coef = -latent.delta.clone();
    let recipient_coef = -latent.gamma.clone();
    let basic_coef = DVector::from_fn(config.n_basic, |_, _| {
        config.basic_coef_std * rng.sample::<f64, _>(StandardNormal)
    });

    let n_total = 2 * config.n_per_split;
    let subjects: Vec<Subject> = (0..n_total)
        .map(|_| {
            let x: Vec<f64> = (0..config.n_basic)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let donor = rng.random_range(0..n_d);
            let recipient = rng.random_range(0..n_r);
            let lp = x
                .iter()
                .zip(basic_coef.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + donor_coef[donor]
                + recipient_coef[recipient]
                + pair_coef[(donor, recipient)];
            Subject {
                x,
                donor,
                recipient,
                lp,
            }
        })
        .collect();
    let hazards: Vec<f64> = subjects
        .iter()
        .map(|s| config.baseline_rate * s.lp.exp())
        .collect();
    let c_rate = censoring_rate(&hazards, 1.0 - config.censor_fraction);

    let d_labels = donor_labels(n_d);
    let r_labels = recipient_labels(n_r);
    let mut times = Vec::with_capacity(n_total);
    let mut events = Vec::with_capacity(n_total);
    for h in &hazards {
        let t = Exp::new(*h).expect("positive hazard").sample(&mut rng);
        let c = if c_rate > 0.0 {
            Exp::new(c_rate).expect("positive rate").sample(&mut rng)
        } else {
            f64::INFINITY
        };
        times.push(t.min(c));
        events.push(t <= c);
    }
    let split = |range: std::ops::Range<usize>| {
        let idx: Vec<usize> = range.collect();
        TransplantDataset::new(
            DMatrix::from_fn(idx.len(), config.n_basic, |r, k| subjects[idx[r]].x[k]),
            idx.iter()
                .map(|&r| d_labels[subjects[r].donor].clone())
                .collect(),
            idx.iter()
                .map(|&r| r_labels[subjects[r].recipient].clone())
                .collect(),
            idx.iter().map(|&r| times[r]).collect(),
            idx.iter().map(|&r| events[r]).collect(),
        )
    };
    let train = split(0..config.n_per_split)?;
    let test = split(config.n_per_split..n_total)?;
    Ok(TransplantSimulation {
        train,
        test,
        truth: PlantedTruth {
            donor_labels: d_labels,
            recipient_labels: r_labels,
            latent,
            donor_coef,
            recipient_coef,
            pair_coef,
            basic_coef,
            censoring_rate: c_rate,
        },
    })
}
