//! Survival side of the pipeline: ridge Cox regression, concordance,
//! synthetic transplant cohorts, network extraction from fitted
//! coefficients and coefficient substitution.

mod cindex;
mod cox;
mod design;
mod generate;
mod pipeline;

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};
use crate::rng;

pub use cindex::c_index;
pub use cox::{
    cox_fit, partial_log_likelihood, tune_lambda, CoxModel, LambdaSelection, MAX_NEWTON_ITER,
    SCORE_TOL,
};
pub use design::{design_matrix, ColumnKind, DesignLayout, DesignMatrix};
pub use generate::{
    default_lambda_grid, simulate_transplants, PlantedTruth, Structure, TransplantGenConfig,
    TransplantSimulation,
};
pub use pipeline::{
    extract_network, pipeline_end_to_end, pipeline_on_split, run_pipeline_on_data,
    run_pipeline_seeds, substitute_coefficients, MethodOutcome, MethodSummary, PipelineConfig,
    PipelineOutcome, PipelineReport, SeedOutcome,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TransplantDataset {
    /// `n x p` basic covariates.
    pub covariates: DMatrix<f64>,
    pub donor_type: Vec<String>,
    pub recipient_type: Vec<String>,
    pub time: Vec<f64>,
    /// `true` when graft failure was observed, `false` when censored.
    pub event: Vec<bool>,
}

impl TransplantDataset {
    pub fn new(
        covariates: DMatrix<f64>,
        donor_type: Vec<String>,
        recipient_type: Vec<String>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = time.len();
        if covariates.nrows() != n
            || donor_type.len() != n
            || recipient_type.len() != n
            || event.len() != n
        {
            return Err(Error::DimensionMismatch(
                "dataset columns differ in length".into(),
            ));
        }
        if let Some(t) = time.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "times must be positive, got {t}"
            )));
        }
        if !event.iter().any(|&e| e) {
            return Err(Error::InvalidInput("dataset has no events".into()));
        }
        Ok(Self {
            covariates,
            donor_type,
            recipient_type,
            time,
            event,
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_basic(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn censored_fraction(&self) -> f64 {
        self.event.iter().filter(|&&e| !e).count() as f64 / self.len() as f64
    }

    /// Subset in the order of `rows`.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select_rows(rows),
            donor_type: rows.iter().map(|&r| self.donor_type[r].clone()).collect(),
            recipient_type: rows
                .iter()
                .map(|&r| self.recipient_type[r].clone())
                .collect(),
            time: rows.iter().map(|&r| self.time[r]).collect(),
            event: rows.iter().map(|&r| self.event[r]).collect(),
        }
    }

    /// Seeded random halves. The first half gets the extra record when the
    /// size is odd; each half keeps the original record order.
    pub fn split_half(&self, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, rng::SPLIT));
        let (a, b) = idx.split_at(self.len().div_ceil(2));
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        (self.select(&a), self.select(&b))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "id".to_string(),
            "time".into(),
            "event".into(),
            "donor_type".into(),
            "recipient_type".into(),
        ];
        header.extend((1..=self.n_basic()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for r in 0..self.len() {
            let mut rec = vec![
                (r + 1).to_string(),
                fmt_f64(self.time[r]),
                if self.event[r] {
                    "1".into()
                } else {
                    "0".into()
                },
                self.donor_type[r].clone(),
                self.recipient_type[r].clone(),
            ];
            rec.extend(self.covariates.row(r).iter().map(|&x| fmt_f64(x)));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::io(std::path::PathBuf::new(), e.into_error()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers()?.clone();
        let fixed = ["id", "time", "event", "donor_type", "recipient_type"];
        let bad_header = || Error::MalformedRow {
            file: path.to_path_buf(),
            row: 1,
            message: "expected header id,time,event,donor_type,recipient_type,x1..xp".into(),
        };
        if headers.len() < fixed.len() || headers.iter().zip(fixed).any(|(h, f)| h != f) {
            return Err(bad_header());
        }
        let p = headers.len() - fixed.len();
        for (k, h) in headers.iter().skip(fixed.len()).enumerate() {
            if h != format!("x{}", k + 1) {
                return Err(bad_header());
            }
        }
        let mut xs = Vec::new();
        let (mut donor, mut recipient, mut time, mut event) = (vec![], vec![], vec![], vec![]);
        for rec in reader.records() {
            let rec = rec?;
            let row = rec.position().map(|q| q.line()).unwrap_or(0);
            let bad = |msg: String| Error::MalformedRow {
                file: path.to_path_buf(),
                row,
                message: msg,
            };
            if rec.len() != headers.len() {
                return Err(bad(format!("expected {} fields", headers.len())));
            }
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("cannot parse {:?}", &rec[k])))
            };
            time.push(num(1)?);
            event.push(match &rec[2] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(bad(format!("event must be 0 or 1, got {other:?}"))),
            });
            donor.push(rec[3].to_string());
            recipient.push(rec[4].to_string());
            for k in 0..p {
                xs.push(num(5 + k)?);
            }
        }
        let n = time.len();
        Self::new(
            DMatrix::from_row_slice(n, p, &xs),
            donor,
            recipient,
            time,
            event,
        )
    }
}
