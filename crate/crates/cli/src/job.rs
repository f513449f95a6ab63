//! Fully resolved run descriptions. A job carries every setting a command
//! needs, so a manifest holding one can reproduce the run exactly.

use std::path::{Path, PathBuf};

use lsmnet::baselines::NmtfConfig;
use lsmnet::metrics::EvalScale;
use lsmnet::refine::{Method, RefineSettings};
use lsmnet::sim::{EdgeMeanConvention, SimConfig};
use lsmnet::survival::{default_lambda_grid, PipelineConfig, Structure, TransplantGenConfig};
use lsmnet::FitConfig;
use serde::{Deserialize, Serialize};

use crate::args::{
    CohortArgs, Command, CoxphArgs, EvalArgs, FitArgs, FitSettingsArgs, LatentArgs, PipelineArgs,
    SimulateNetworkArgs, SimulateTransplantsArgs, Table1Args,
};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    SimulateNetwork {
        sim: SimConfig,
        holdout: bool,
    },
    SimulateTransplants {
        generator: TransplantGenConfig,
    },
    Fit {
        network: PathBuf,
        test: Option<PathBuf>,
        method: Method,
        dim_grid: Vec<usize>,
        scale: EvalScale,
        refine: RefineSettings,
    },
    Eval {
        train: PathBuf,
        test: PathBuf,
        methods: Vec<Method>,
        dim_grid: Vec<usize>,
        scale: EvalScale,
        refine: RefineSettings,
    },
    Table1 {
        reps: usize,
        sigmas: Vec<f64>,
        conventions: Vec<EdgeMeanConvention>,
        sim: SimConfig,
        fit: FitConfig,
    },
    Coxph {
        data: PathBuf,
        test: Option<PathBuf>,
        min_count: usize,
        lambda_grid: Vec<f64>,
        seed: u64,
    },
    Pipeline {
        seeds: usize,
        data: Option<PathBuf>,
        config: PipelineConfig,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::SimulateNetwork { .. } => "simulate-network",
            Job::SimulateTransplants { .. } => "simulate-transplants",
            Job::Fit { .. } => "fit",
            Job::Eval { .. } => "eval",
            Job::Table1 { .. } => "table1",
            Job::Coxph { .. } => "coxph",
            Job::Pipeline { .. } => "pipeline",
        }
    }

    pub fn from_command(command: Command, seed: u64) -> Result<Self, CliError> {
        Ok(match command {
            Command::SimulateNetwork(a) => simulate_network(a, seed),
            Command::SimulateTransplants(a) => simulate_transplants(a, seed),
            Command::Fit(a) => fit(a, seed)?,
            Command::Eval(a) => eval(a, seed)?,
            Command::Table1(a) => table1(a, seed),
            Command::Coxph(a) => coxph(a, seed)?,
            Command::Pipeline(a) => pipeline(a, seed)?,
        })
    }
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn sim_config(a: &LatentArgs, sigma_w: f64, seed: u64) -> SimConfig {
    let d = SimConfig::default();
    SimConfig {
        n_d: a.n_d,
        n_r: a.n_r,
        dim: a.latent_dim,
        alpha: a.alpha,
        beta: a.beta,
        pos_std: a.pos_std.unwrap_or(d.pos_std),
        effect_std: a.effect_std.unwrap_or(d.effect_std),
        sigma_w,
        sigma_node: a.sigma_node,
        edge_mean_convention: a.edge_mean.into(),
        seed,
    }
}

fn refine_settings(a: &FitSettingsArgs, seed: u64) -> RefineSettings {
    RefineSettings {
        fit: FitConfig {
            max_iter: a.max_iter,
            grad_tol: a.grad_tol,
            restarts: a.restarts,
            seed,
            freeze_beta: a.freeze_beta,
            ..FitConfig::default()
        },
        nmtf: NmtfConfig {
            max_iter: a.nmtf_max_iter,
            seed,
            ..NmtfConfig::default()
        },
    }
}

fn generator(a: &CohortArgs, seed: u64) -> TransplantGenConfig {
    TransplantGenConfig {
        n_per_split: a.n_per_split,
        n_donor_types: a.donor_types,
        n_recipient_types: a.recipient_types,
        n_basic: a.n_basic,
        censor_fraction: a.censor_fraction,
        structure: if a.no_structure {
            Structure::Permuted
        } else {
            Structure::Planted
        },
        seed,
        ..TransplantGenConfig::default()
    }
}

fn simulate_network(a: SimulateNetworkArgs, seed: u64) -> Job {
    Job::SimulateNetwork {
        sim: sim_config(&a.latent, a.sigma_w, seed),
        holdout: a.holdout,
    }
}

fn simulate_transplants(a: SimulateTransplantsArgs, seed: u64) -> Job {
    Job::SimulateTransplants {
        generator: generator(&a.cohort, seed),
    }
}

fn fit(a: FitArgs, seed: u64) -> Result<Job, CliError> {
    Ok(Job::Fit {
        network: absolute(&a.network)?,
        test: a.test.as_deref().map(absolute).transpose()?,
        method: a.method.into(),
        dim_grid: a.dim_grid.unwrap_or_else(|| vec![a.dim]),
        scale: a.scale.into(),
        refine: refine_settings(&a.settings, seed),
    })
}

fn eval(a: EvalArgs, seed: u64) -> Result<Job, CliError> {
    Ok(Job::Eval {
        train: absolute(&a.train)?,
        test: absolute(&a.test)?,
        methods: a.methods.into_iter().map(Method::from).collect(),
        dim_grid: a.dim_grid,
        scale: a.scale.into(),
        refine: refine_settings(&a.settings, seed),
    })
}

fn table1(a: Table1Args, seed: u64) -> Job {
    Job::Table1 {
        reps: a.reps,
        sigmas: a.sigmas,
        conventions: vec![
            EdgeMeanConvention::PairTermOnly,
            EdgeMeanConvention::FullCompatibility,
        ],
        sim: sim_config(&a.latent, SimConfig::default().sigma_w, seed),
        fit: FitConfig {
            dim: a.latent.latent_dim,
            restarts: a.restarts,
            seed,
            freeze_beta: !a.free_beta,
            ..FitConfig::default()
        },
    }
}

fn coxph(a: CoxphArgs, seed: u64) -> Result<Job, CliError> {
    let lambda_grid = match (a.lambda, a.lambda_grid) {
        (Some(l), _) => vec![l],
        (None, Some(g)) => g,
        (None, None) => default_lambda_grid(),
    };
    Ok(Job::Coxph {
        data: absolute(&a.data)?,
        test: a.test.as_deref().map(absolute).transpose()?,
        min_count: a.min_count,
        lambda_grid,
        seed,
    })
}

fn pipeline(a: PipelineArgs, seed: u64) -> Result<Job, CliError> {
    let config = PipelineConfig {
        generator: generator(&a.cohort, seed),
        min_count: a.min_count,
        lambda_grid: a.lambda_grid.unwrap_or_else(default_lambda_grid),
        refine: refine_settings(&a.settings, seed),
        lsm_dim: a.lsm_dim,
        pca_dim: a.pca_dim,
        nmtf_rank: a.nmtf_rank,
        methods: a.methods.into_iter().map(Method::from).collect(),
        identity_refinement: a.identity_refinement,
    };
    Ok(Job::Pipeline {
        seeds: a.seeds,
        data: a.data.as_deref().map(absolute).transpose()?,
        config,
    })
}
