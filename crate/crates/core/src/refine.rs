//! One entry point for every way of refining a network's compatibilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{impute_missing, nmtf_refine, pca_refine, NmtfConfig};
use crate::error::{Error, Result};
use crate::lsm::{fit, refine_network, FitConfig, FittedModelJson, RefinedEstimates};
use crate::network::CompatibilityNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The observed estimates themselves.
    Raw,
    Lsm,
    Nmtf,
    Pca,
}

impl Method {
    pub const REFINERS: [Method; 3] = [Method::Lsm, Method::Nmtf, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Lsm => "lsm",
            Method::Nmtf => "nmtf",
            Method::Pca => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Method::Raw),
            "lsm" => Ok(Method::Lsm),
            "nmtf" => Ok(Method::Nmtf),
            "pca" => Ok(Method::Pca),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Settings for the refiners; the dimension itself is passed separately.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub fit: FitConfig,
    pub nmtf: NmtfConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub estimates: RefinedEstimates,
    /// Whether the underlying optimiser met its own convergence criterion.
    pub converged: bool,
    /// Present for [`Method::Lsm`].
    pub model: Option<FittedModelJson>,
}

pub fn refine(
    net: &CompatibilityNetwork,
    method: Method,
    dim: usize,
    settings: &RefineSettings,
) -> Result<Refinement> {
    let max_dim = net.n_donors().min(net.n_recipients());
    let dim_ok = match method {
        Method::Raw => true,
        Method::Lsm => dim >= 1,
        Method::Nmtf | Method::Pca => (1..=max_dim).contains(&dim),
    };
    if !dim_ok {
        return Err(Error::InvalidConfig(format!(
            "dimension {dim} is out of range for {method} on a {}x{} network",
            net.n_donors(),
            net.n_recipients()
        )));
    }
    match method {
        Method::Raw => Ok(Refinement {
            estimates: RefinedEstimates::raw(net),
            converged: true,
            model: None,
        }),
        Method::Lsm => {
            let config = FitConfig {
                dim,
                ..settings.fit
            };
            let result = fit(net, &config, None)?;
            Ok(Refinement {
                estimates: refine_network(net, &result)?,
                converged: result.converged,
                model: Some(FittedModelJson::from_result(&result)),
            })
        }
        Method::Pca => {
            let filled = impute_missing(net.edge_weight(), net.edge_mask());
            let eta = pca_refine(&filled, dim)?;
            Ok(Refinement {
                estimates: RefinedEstimates::from_edge_matrix(net, eta)?,
                converged: true,
                model: None,
            })
        }
        Method::Nmtf => {
            let filled = impute_missing(net.edge_weight(), net.edge_mask());
            let config = NmtfConfig {
                rank: dim,
                ..settings.nmtf
            };
            let out = nmtf_refine(&filled, &config)?;
            Ok(Refinement {
                estimates: RefinedEstimates::from_edge_matrix(net, out.reconstruction)?,
                converged: out.factors.converged,
                model: None,
            })
        }
    }
}
