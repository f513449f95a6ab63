//! Ridge-penalised Cox proportional hazards regression.
//!
//! Maximises the Breslow partial log-likelihood minus `lambda/2 * |w|^2` by
//! Newton's method with step halving. Rows are stored sparsely: a record has
//! its basic covariates plus at most three indicator columns, so the
//! per-subject part of the information matrix costs O(nnz^2) and only the
//! per-event-time outer products are dense.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{DesignLayout, DesignMatrix};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_NEWTON_ITER: usize = 100;
/// Convergence threshold on the infinity-norm of the penalised score.
pub const SCORE_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;
const MAX_FOLD_DRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub penalty: f64,
    pub column_names: Vec<String>,
    pub layout: DesignLayout,
    pub converged: bool,
    pub iterations: usize,
    /// Unpenalised partial log-likelihood at the estimate.
    pub log_partial_likelihood: f64,
}

impl CoxModel {
    /// Linear predictors `X w`.
    pub fn risk_scores(&self, x: &DMatrix<f64>) -> Vec<f64> {
        assert_eq!(x.ncols(), self.coefficients.len());
        (x * DVector::from_column_slice(&self.coefficients))
            .iter()
            .copied()
            .collect()
    }
}

/// Subjects sorted by time, grouped by distinct time, rows stored sparsely.
struct Problem {
    p: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// Subject indices per distinct time, latest time first.
    groups: Vec<Vec<usize>>,
    event: Vec<bool>,
}

impl Problem {
    fn new(x: &DMatrix<f64>, time: &[f64], event: &[bool]) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n || event.len() != n {
            return Err(Error::DimensionMismatch(
                "design, time and event lengths differ".into(),
            ));
        }
        if time.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("times must be finite".into()));
        }
        let rows = (0..n)
            .map(|r| {
                x.row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(c, v)| (c, *v))
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &k in &order {
            match groups.last_mut() {
                Some(g) if time[g[0]] == time[k] => g.push(k),
                _ => groups.push(vec![k]),
            }
        }
        Ok(Self {
            p: x.ncols(),
            rows,
            groups,
            event: event.to_vec(),
        })
    }

    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(c, v)| v * beta[c]).sum())
            .collect()
    }

    /// Partial log-likelihood, score and (optionally) observed information.
    fn evaluate(&self, beta: &[f64], with_info: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.p;
        let lp = self.linear_predictor(beta);
        let shift = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let w: Vec<f64> = lp.iter().map(|l| (l - shift).exp()).collect();

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut ll = 0.0;
        let mut score = vec![0.0; p];
        // per-group event count and 1/S0 for the information matrix
        let mut group_weight = vec![0.0; self.groups.len()];
        let mut a_rows: Vec<(f64, Vec<f64>)> = Vec::new();

        for (g, members) in self.groups.iter().enumerate() {
            for &k in members {
                s0 += w[k];
                for &(c, v) in &self.rows[k] {
                    s1[c] += w[k] * v;
                }
            }
            let deaths = members.iter().filter(|&&k| self.event[k]).count();
            if deaths == 0 {
                continue;
            }
            let d = deaths as f64;
            let log_s0 = s0.ln() + shift;
            for &k in members.iter().filter(|&&k| self.event[k]) {
                ll += lp[k] - log_s0;
                for &(c, v) in &self.rows[k] {
                    score[c] += v;
                }
            }
            for c in 0..p {
                score[c] -= d * s1[c] / s0;
            }
            if with_info {
                group_weight[g] = d / s0;
                a_rows.push((d, s1.iter().map(|v| v / s0).collect()));
            }
        }
        if !with_info {
            return (ll, score, None);
        }

        // sum over event times of S2/S0, regrouped per subject: subject k sits
        // in the risk set of every event time not after its own time
        let mut cum = 0.0;
        let mut info = DMatrix::zeros(p, p);
        for (g, members) in self.groups.iter().enumerate().rev() {
            cum += group_weight[g];
            for &k in members {
                let wk = w[k] * cum;
                if wk == 0.0 {
                    continue;
                }
                let row = &self.rows[k];
                for &(c1, v1) in row {
                    for &(c2, v2) in row {
                        info[(c1, c2)] += wk * v1 * v2;
                    }
                }
            }
        }
        let a = DMatrix::from_fn(a_rows.len(), p, |r, c| a_rows[r].0.sqrt() * a_rows[r].1[c]);
        info -= a.transpose() * a;
        (ll, score, Some(info))
    }
}

/// Breslow partial log-likelihood of `beta`.
pub fn partial_log_likelihood(
    x: &DMatrix<f64>,
    time: &[f64],
    event: &[bool],
    beta: &[f64],
) -> Result<f64> {
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch("coefficient length".into()));
    }
    Ok(Problem::new(x, time, event)?.evaluate(beta, false).0)
}

fn penalized(ll: f64, beta: &[f64], lambda: f64) -> f64 {
    ll - 0.5 * lambda * beta.iter().map(|b| b * b).sum::<f64>()
}

fn penalized_information(info: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut m = info.clone();
    for c in 0..m.nrows() {
        m[(c, c)] += lambda;
    }
    m
}

pub fn cox_fit(
    design: &DesignMatrix,
    time: &[f64],
    event: &[bool],
    lambda: f64,
) -> Result<CoxModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "ridge penalty must be non-negative, got {lambda}"
        )));
    }
    let problem = Problem::new(&design.x, time, event)?;
    if !event.iter().any(|&e| e) {
        return Err(Error::InvalidInput("no events".into()));
    }
    let p = problem.p;
    let mut beta = vec![0.0; p];
    let (mut ll, mut score, info) = problem.evaluate(&beta, true);
    let mut info = info.expect("requested");
    let mut objective = penalized(ll, &beta, lambda);
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let grad: Vec<f64> = score
            .iter()
            .zip(&beta)
            .map(|(s, b)| s - lambda * b)
            .collect();
        if grad.iter().all(|g| g.abs() <= SCORE_TOL) {
            converged = true;
            break;
        }
        if iterations >= MAX_NEWTON_ITER {
            break;
        }
        let chol = Cholesky::new(penalized_information(&info, lambda))
            .ok_or(Error::SingularInformation)?;
        let step = chol.solve(&DVector::from_vec(grad));
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let (tll, tscore, tinfo) = problem.evaluate(&trial, true);
            let tobj = penalized(tll, &trial, lambda);
            if tobj.is_finite() && tobj >= objective - 1e-12 * objective.abs() {
                accepted = Some((trial, tll, tscore, tinfo.expect("requested"), tobj));
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        let Some((b, l, s, i, o)) = accepted else {
            break;
        };
        let stalled = b == beta;
        (beta, ll, score, info, objective) = (b, l, s, i, o);
        if stalled {
            break;
        }
    }

    let chol =
        Cholesky::new(penalized_information(&info, lambda)).ok_or(Error::SingularInformation)?;
    let cov = chol.inverse();
    let std_errors: Vec<f64> = (0..p).map(|c| cov[(c, c)].max(0.0).sqrt()).collect();
    Ok(CoxModel {
        coefficients: beta,
        std_errors,
        penalty: lambda,
        column_names: design.layout.names(),
        layout: design.layout.clone(),
        converged,
        iterations,
        log_partial_likelihood: ll,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Summed held-out partial log-likelihood per grid value.
    pub scores: Vec<f64>,
}

fn subset(design: &DesignMatrix, rows: &[usize]) -> DesignMatrix {
    DesignMatrix {
        x: design.x.select_rows(rows),
        layout: design.layout.clone(),
    }
}

/// Two-fold cross-validation of the ridge penalty on held-out partial
/// log-likelihood. Ties go to the earlier grid value.
pub fn tune_lambda(
    design: &DesignMatrix,
    time: &[f64],
    event: &[bool],
    grid: &[f64],
    seed: u64,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if grid.len() == 1 {
        return Ok(LambdaSelection {
            lambda: grid[0],
            grid: grid.to_vec(),
            scores: vec![f64::NAN],
        });
    }
    let n = time.len();
    let mut rng = rng::stream(seed, rng::FOLDS);
    let mut folds = None;
    for _ in 0..MAX_FOLD_DRAWS {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let (a, b) = idx.split_at(n / 2);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        if a.iter().any(|&k| event[k]) && b.iter().any(|&k| event[k]) {
            a.sort_unstable();
            b.sort_unstable();
            folds = Some([a, b]);
            break;
        }
    }
    let folds = folds.ok_or(Error::FoldsWithoutEvents(MAX_FOLD_DRAWS))?;
    let pick = |rows: &[usize]| -> (DesignMatrix, Vec<f64>, Vec<bool>) {
        (
            subset(design, rows),
            rows.iter().map(|&k| time[k]).collect(),
            rows.iter().map(|&k| event[k]).collect(),
        )
    };
    let parts = [pick(&folds[0]), pick(&folds[1])];

    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| {
            let mut total = 0.0;
            for (train, test) in [(0, 1), (1, 0)] {
                let (dx, dt, de) = &parts[train];
                let (tx, tt, te) = &parts[test];
                let Ok(model) = cox_fit(dx, dt, de, lambda) else {
                    return f64::NEG_INFINITY;
                };
                match partial_log_likelihood(&tx.x, tt, te, &model.coefficients) {
                    Ok(v) if v.is_finite() => total += v,
                    _ => return f64::NEG_INFINITY,
                }
            }
            total
        })
        .collect();
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = k;
        }
    }
    Ok(LambdaSelection {
        lambda: grid[best],
        grid: grid.to_vec(),
        scores,
    })
}
