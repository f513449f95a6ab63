use std::path::Path;

use lsmnet::io::{write_atomic, write_json};
use lsmnet::metrics::{
    evaluate_refinement, format_comparison_table, EvalScale, RefinementEvaluation,
};
use lsmnet::network::{load_network_dir, save_network, CompatibilityNetwork};
use lsmnet::refine::{refine, Method, RefineSettings};
use lsmnet::sim::{
    format_recovery_table, run_replicates, simulate, simulate_split, EdgeMeanConvention,
    ReplicateReport, SimConfig,
};
use lsmnet::survival::{
    c_index, cox_fit, design_matrix, extract_network, run_pipeline_on_data, run_pipeline_seeds,
    simulate_transplants, tune_lambda, PipelineConfig, PipelineReport, TransplantDataset,
    TransplantGenConfig,
};
use lsmnet::{FitConfig, LsmParams, RefinedEstimates};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::job::Job;
use crate::CliError;

/// What a finished job produced.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub nonconverged: Vec<String>,
    pub failures: Vec<String>,
    pub report: String,
}

impl Outcome {
    fn json<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<(), CliError> {
        write_json(&out.join(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, out: &Path, name: &str, text: &str) -> Result<(), CliError> {
        write_atomic(&out.join(name), text.as_bytes())?;
        self.artifacts.push(name.to_string());
        self.report.push_str(text);
        Ok(())
    }

    fn network(
        &mut self,
        out: &Path,
        sub: &str,
        net: &CompatibilityNetwork,
    ) -> Result<(), CliError> {
        let dir = if sub.is_empty() {
            out.to_path_buf()
        } else {
            out.join(sub)
        };
        save_network(net, &dir)?;
        for f in [
            lsmnet::network::EDGES_FILE,
            lsmnet::network::DONOR_NODES_FILE,
            lsmnet::network::RECIPIENT_NODES_FILE,
        ] {
            self.artifacts.push(if sub.is_empty() {
                f.to_string()
            } else {
                format!("{sub}/{f}")
            });
        }
        Ok(())
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct LatentJson {
    alpha: f64,
    beta: f64,
    z_d: Vec<Vec<f64>>,
    z_r: Vec<Vec<f64>>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
}

impl From<&LsmParams> for LatentJson {
    fn from(p: &LsmParams) -> Self {
        Self {
            alpha: p.alpha,
            beta: p.beta,
            z_d: rows(&p.z_d),
            z_r: rows(&p.z_r),
            delta: vec(&p.delta),
            gamma: vec(&p.gamma),
        }
    }
}

#[derive(Serialize)]
struct EstimatesJson<'a> {
    donor_labels: &'a [String],
    recipient_labels: &'a [String],
    mu: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
}

impl<'a> From<&'a RefinedEstimates> for EstimatesJson<'a> {
    fn from(e: &'a RefinedEstimates) -> Self {
        Self {
            donor_labels: &e.donor_labels,
            recipient_labels: &e.recipient_labels,
            mu: rows(&e.mu),
            eta: rows(&e.eta),
            delta: vec(&e.delta),
            gamma: vec(&e.gamma),
        }
    }
}

pub fn execute(job: &Job, out: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    match job {
        Job::SimulateNetwork { sim, holdout } => simulate_network(sim, *holdout, out, &mut o)?,
        Job::SimulateTransplants { generator } => simulate_cohort(generator, out, &mut o)?,
        Job::Fit {
            network,
            test,
            method,
            dim_grid,
            scale,
            refine,
        } => fit(
            network,
            test.as_deref(),
            *method,
            dim_grid,
            *scale,
            refine,
            out,
            &mut o,
        )?,
        Job::Eval {
            train,
            test,
            methods,
            dim_grid,
            scale,
            refine,
        } => eval(train, test, methods, dim_grid, *scale, refine, out, &mut o)?,
        Job::Table1 {
            reps,
            sigmas,
            conventions,
            sim,
            fit,
        } => table1(*reps, sigmas, conventions, sim, fit, out, &mut o)?,
        Job::Coxph {
            data,
            test,
            min_count,
            lambda_grid,
            seed,
        } => coxph(
            data,
            test.as_deref(),
            *min_count,
            lambda_grid,
            *seed,
            out,
            &mut o,
        )?,
        Job::Pipeline {
            seeds,
            data,
            config,
        } => pipeline(*seeds, data.as_deref(), config, out, &mut o)?,
    }
    Ok(o)
}

fn simulate_network(
    sim: &SimConfig,
    holdout: bool,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    if holdout {
        let split = simulate_split(sim)?;
        o.network(out, "", &split.train)?;
        o.network(out, "holdout", &split.test)?;
        o.json(out, "truth.json", &LatentJson::from(&split.truth))?;
    } else {
        let s = simulate(sim)?;
        o.network(out, "", &s.observed)?;
        o.json(out, "truth.json", &LatentJson::from(&s.truth))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CohortTruthJson {
    donor_labels: Vec<String>,
    recipient_labels: Vec<String>,
    latent: LatentJson,
    donor_coef: Vec<f64>,
    recipient_coef: Vec<f64>,
    pair_coef: Vec<Vec<f64>>,
    basic_coef: Vec<f64>,
    censoring_rate: f64,
}

fn simulate_cohort(
    generator: &TransplantGenConfig,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    let sim = simulate_transplants(generator)?;
    for (name, data) in [("train.csv", &sim.train), ("test.csv", &sim.test)] {
        data.save(&out.join(name))?;
        o.artifacts.push(name.into());
    }
    let t = &sim.truth;
    o.json(
        out,
        "truth.json",
        &CohortTruthJson {
            donor_labels: t.donor_labels.clone(),
            recipient_labels: t.recipient_labels.clone(),
            latent: LatentJson::from(&t.latent),
            donor_coef: vec(&t.donor_coef),
            recipient_coef: vec(&t.recipient_coef),
            pair_coef: rows(&t.pair_coef),
            basic_coef: vec(&t.basic_coef),
            censoring_rate: t.censoring_rate,
        },
    )?;
    o.report = format!(
        "train censored {:.3}, test censored {:.3}\n",
        sim.train.censored_fraction(),
        sim.test.censored_fraction()
    );
    Ok(())
}

fn note_nonconverged(eval: &RefinementEvaluation, o: &mut Outcome) {
    for d in eval.per_dim.iter().filter(|d| !d.converged) {
        o.nonconverged.push(format!(
            "{} at dimension {}",
            eval.method,
            d.dim.unwrap_or(0)
        ));
    }
}

#[allow(clippy::too_many_arguments)]
fn fit(
    network: &Path,
    test: Option<&Path>,
    method: Method,
    dim_grid: &[usize],
    scale: EvalScale,
    settings: &RefineSettings,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    let train = load_network_dir(network)?;
    let test = match test {
        Some(p) => load_network_dir(p)?,
        None => train.clone(),
    };
    let eval = evaluate_refinement(&train, &test, method, dim_grid, settings, scale)?;
    note_nonconverged(&eval, o);
    let refined = refine(&train, method, eval.selected_dim.unwrap_or(0), settings)?;
    o.json(out, "metrics.json", &eval)?;
    o.json(
        out,
        "refined.json",
        &EstimatesJson::from(&refined.estimates),
    )?;
    if let Some(model) = &refined.model {
        o.json(out, "model.json", model)?;
    }
    let mut text = String::new();
    for d in &eval.per_dim {
        let dim = d.dim.map_or("-".to_string(), |k| k.to_string());
        text.push_str(&format!("{method} d={dim}: {}\n", d.report));
    }
    if let Some(d) = eval.selected_dim {
        text.push_str(&format!("selected dimension {d}\n"));
    }
    o.text(out, "metrics.txt", &text)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    train: &Path,
    test: &Path,
    methods: &[Method],
    dim_grid: &[usize],
    scale: EvalScale,
    settings: &RefineSettings,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    let train = load_network_dir(train)?;
    let test = load_network_dir(test)?;
    let evals = methods
        .iter()
        .map(|&m| evaluate_refinement(&train, &test, m, dim_grid, settings, scale))
        .collect::<lsmnet::Result<Vec<_>>>()?;
    for e in &evals {
        note_nonconverged(e, o);
    }
    o.json(out, "eval.json", &evals)?;
    o.text(out, "eval.txt", &format_comparison_table(&evals))
}

#[derive(Serialize)]
struct Table1Entry {
    sigma_w: f64,
    convention: EdgeMeanConvention,
    report: ReplicateReport,
}

fn table1(
    reps: usize,
    sigmas: &[f64],
    conventions: &[EdgeMeanConvention],
    sim: &SimConfig,
    fit: &FitConfig,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for &sigma_w in sigmas {
        for &convention in conventions {
            let config = SimConfig {
                sigma_w,
                edge_mean_convention: convention,
                ..*sim
            };
            let report = run_replicates(&config, fit, reps)?;
            for r in &report.replicates {
                let tag = format!("sigma_w {sigma_w} {convention} replicate {}", r.replicate);
                match (&r.metrics, &r.error) {
                    (Some(m), _) if !m.converged => o.nonconverged.push(tag),
                    (None, Some(e)) => o.failures.push(format!("{tag}: {e}")),
                    _ => {}
                }
            }
            entries.push(Table1Entry {
                sigma_w,
                convention,
                report,
            });
        }
    }
    let labels: Vec<String> = entries
        .iter()
        .map(|e| format!("sigma={} {}", e.sigma_w, e.convention))
        .collect();
    let columns: Vec<(&str, &lsmnet::sim::ReplicateSummary)> = labels
        .iter()
        .zip(&entries)
        .map(|(l, e)| (l.as_str(), &e.report.summary))
        .collect();
    o.json(out, "table1.json", &entries)?;
    o.text(out, "table1.txt", &format_recovery_table(&columns))
}

#[derive(Serialize)]
struct CoxMetrics {
    lambda: f64,
    n_train: usize,
    train_censored_fraction: f64,
    train_c_index: f64,
    test_c_index: Option<f64>,
}

fn coxph(
    data: &Path,
    test: Option<&Path>,
    min_count: usize,
    lambda_grid: &[f64],
    seed: u64,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    let train = TransplantDataset::load(data)?;
    let design = design_matrix(&train, min_count)?;
    let selection = tune_lambda(&design, &train.time, &train.event, lambda_grid, seed)?;
    let model = cox_fit(&design, &train.time, &train.event, selection.lambda)?;
    if !model.converged {
        o.nonconverged
            .push(format!("Cox model at lambda {}", selection.lambda));
    }
    let train_c = c_index(&model.risk_scores(&design.x), &train.time, &train.event)?;
    let test_c = match test {
        Some(p) => {
            let t = TransplantDataset::load(p)?;
            let x = design.layout.apply(&t)?.x;
            Some(c_index(&model.risk_scores(&x), &t.time, &t.event)?)
        }
        None => None,
    };
    o.json(out, "lambda.json", &selection)?;
    o.json(out, "model.json", &model)?;
    o.network(out, "network", &extract_network(&model)?)?;
    let metrics = CoxMetrics {
        lambda: selection.lambda,
        n_train: train.len(),
        train_censored_fraction: train.censored_fraction(),
        train_c_index: train_c,
        test_c_index: test_c,
    };
    o.json(out, "metrics.json", &metrics)?;
    let mut text = format!(
        "lambda {}  columns {}  train C-index {:.4}",
        selection.lambda,
        model.coefficients.len(),
        train_c
    );
    if let Some(c) = test_c {
        text.push_str(&format!("  test C-index {c:.4}"));
    }
    text.push('\n');
    o.text(out, "metrics.txt", &text)
}

fn pipeline(
    seeds: usize,
    data: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
    o: &mut Outcome,
) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    config.generator.validate()?;
    let report: PipelineReport = match data {
        Some(p) => run_pipeline_on_data(&TransplantDataset::load(p)?, config, seeds),
        None => run_pipeline_seeds(config, seeds),
    };
    for s in &report.seeds {
        match (&s.outcome, &s.error) {
            (Some(outcome), _) => {
                for m in outcome.methods.iter().filter(|m| !m.converged) {
                    o.nonconverged.push(format!("seed {} {}", s.seed, m.method));
                }
            }
            (None, Some(e)) => o.failures.push(format!("seed {}: {e}", s.seed)),
            (None, None) => {}
        }
    }
    o.json(out, "pipeline.json", &report)?;
    o.text(out, "pipeline.txt", &report.format_table())
}
