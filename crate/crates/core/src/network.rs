//! Indirectly observed bipartite compatibility networks.
//!
//! Node and edge weights are estimates on the log hazard ratio scale, each
//! with its own standard error. Unobserved donor/recipient pairs are carried
//! by an explicit mask; a zero weight is a legitimate observation.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};

pub const EDGES_FILE: &str = "edges.csv";
pub const DONOR_NODES_FILE: &str = "donor_nodes.csv";
pub const RECIPIENT_NODES_FILE: &str = "recipient_nodes.csv";

/// Compatibility of a donor type, a recipient type and their pair: the sum of
/// the three (negated) log hazard ratio contributions.
pub fn compatibility(delta: f64, gamma: f64, eta: f64) -> f64 {
    delta + gamma + eta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkPair {
    pub donor_index: usize,
    pub recipient_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityNetwork {
    donor_labels: Vec<String>,
    recipient_labels: Vec<String>,
    donor_weight: Vec<f64>,
    donor_se: Vec<f64>,
    recipient_weight: Vec<f64>,
    recipient_se: Vec<f64>,
    edge_weight: DMatrix<f64>,
    edge_se: DMatrix<f64>,
    edge_mask: DMatrix<bool>,
}

/// Owned field bundle used to construct a [`CompatibilityNetwork`].
#[derive(Debug, Clone)]
pub struct NetworkParts {
    pub donor_labels: Vec<String>,
    pub recipient_labels: Vec<String>,
    pub donor_weight: Vec<f64>,
    pub donor_se: Vec<f64>,
    pub recipient_weight: Vec<f64>,
    pub recipient_se: Vec<f64>,
    pub edge_weight: DMatrix<f64>,
    pub edge_se: DMatrix<f64>,
    pub edge_mask: DMatrix<bool>,
}

fn check_se(what: &str, se: f64) -> Result<()> {
    if !(se.is_finite() && se > 0.0) {
        return Err(Error::InvalidNetwork(format!(
            "{what}: standard error must be positive and finite, got {se}"
        )));
    }
    Ok(())
}

fn check_unique(side: &str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::InvalidNetwork(format!(
                "duplicate {side} label {l:?}"
            )));
        }
    }
    Ok(())
}

impl CompatibilityNetwork {
    /// Validates `parts` and builds the network. Entries outside the mask are
    /// normalised to zero so that equality only sees observed values.
    pub fn new(parts: NetworkParts) -> Result<Self> {
        let NetworkParts {
            donor_labels,
            recipient_labels,
            donor_weight,
            donor_se,
            recipient_weight,
            recipient_se,
            mut edge_weight,
            mut edge_se,
            edge_mask,
        } = parts;
        let n_d = donor_labels.len();
        let n_r = recipient_labels.len();
        if n_d == 0 || n_r == 0 {
            return Err(Error::InvalidNetwork(
                "network needs at least one donor and one recipient".into(),
            ));
        }
        check_unique("donor", &donor_labels)?;
        check_unique("recipient", &recipient_labels)?;
        for (name, len, want) in [
            ("donor_weight", donor_weight.len(), n_d),
            ("donor_se", donor_se.len(), n_d),
            ("recipient_weight", recipient_weight.len(), n_r),
            ("recipient_se", recipient_se.len(), n_r),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {len}, expected {want}"
                )));
            }
        }
        for (name, shape) in [
            ("edge_weight", edge_weight.shape()),
            ("edge_se", edge_se.shape()),
            ("edge_mask", edge_mask.shape()),
        ] {
            if shape != (n_d, n_r) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n_d}x{n_r}",
                    shape.0, shape.1
                )));
            }
        }
        for (i, (&w, &se)) in donor_weight.iter().zip(&donor_se).enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidNetwork(format!("donor {i}: weight {w}")));
            }
            check_se(&format!("donor {}", donor_labels[i]), se)?;
        }
        for (j, (&w, &se)) in recipient_weight.iter().zip(&recipient_se).enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidNetwork(format!("recipient {j}: weight {w}")));
            }
            check_se(&format!("recipient {}", recipient_labels[j]), se)?;
        }
        let mut observed = 0usize;
        for j in 0..n_r {
            for i in 0..n_d {
                if edge_mask[(i, j)] {
                    observed += 1;
                    let w = edge_weight[(i, j)];
                    if !w.is_finite() {
                        return Err(Error::InvalidNetwork(format!(
                            "edge ({i}, {j}): weight {w}"
                        )));
                    }
                    check_se(&format!("edge ({i}, {j})"), edge_se[(i, j)])?;
                } else {
                    edge_weight[(i, j)] = 0.0;
                    edge_se[(i, j)] = 0.0;
                }
            }
        }
        if observed == 0 {
            return Err(Error::InvalidNetwork("no observed edges".into()));
        }
        Ok(Self {
            donor_labels,
            recipient_labels,
            donor_weight,
            donor_se,
            recipient_weight,
            recipient_se,
            edge_weight,
            edge_se,
            edge_mask,
        })
    }

    pub fn n_donors(&self) -> usize {
        self.donor_labels.len()
    }

    pub fn n_recipients(&self) -> usize {
        self.recipient_labels.len()
    }

    pub fn donor_labels(&self) -> &[String] {
        &self.donor_labels
    }

    pub fn recipient_labels(&self) -> &[String] {
        &self.recipient_labels
    }

    pub fn donor_weight(&self) -> &[f64] {
        &self.donor_weight
    }

    pub fn donor_se(&self) -> &[f64] {
        &self.donor_se
    }

    pub fn recipient_weight(&self) -> &[f64] {
        &self.recipient_weight
    }

    pub fn recipient_se(&self) -> &[f64] {
        &self.recipient_se
    }

    pub fn edge_weight(&self) -> &DMatrix<f64> {
        &self.edge_weight
    }

    pub fn edge_se(&self) -> &DMatrix<f64> {
        &self.edge_se
    }

    pub fn edge_mask(&self) -> &DMatrix<bool> {
        &self.edge_mask
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.edge_mask[(i, j)]
    }

    pub fn n_observed(&self) -> usize {
        self.edge_mask.iter().filter(|&&m| m).count()
    }

    /// Observed pairs in donor-major order.
    pub fn observed_pairs(&self) -> Vec<NetworkPair> {
        let mut out = Vec::with_capacity(self.n_observed());
        for i in 0..self.n_donors() {
            for j in 0..self.n_recipients() {
                if self.edge_mask[(i, j)] {
                    out.push(NetworkPair {
                        donor_index: i,
                        recipient_index: j,
                    });
                }
            }
        }
        out
    }

    /// Observed compatibility `y_d + y_r + w` of an observed pair.
    pub fn observed_compatibility(&self, pair: NetworkPair) -> f64 {
        let NetworkPair {
            donor_index: i,
            recipient_index: j,
        } = pair;
        compatibility(
            self.donor_weight[i],
            self.recipient_weight[j],
            self.edge_weight[(i, j)],
        )
    }

    /// Standard error of the observed compatibility, treating the three
    /// estimates as independent.
    pub fn compatibility_se(&self, pair: NetworkPair) -> f64 {
        let NetworkPair {
            donor_index: i,
            recipient_index: j,
        } = pair;
        (self.donor_se[i].powi(2) + self.recipient_se[j].powi(2) + self.edge_se[(i, j)].powi(2))
            .sqrt()
    }

    pub fn into_parts(self) -> NetworkParts {
        NetworkParts {
            donor_labels: self.donor_labels,
            recipient_labels: self.recipient_labels,
            donor_weight: self.donor_weight,
            donor_se: self.donor_se,
            recipient_weight: self.recipient_weight,
            recipient_se: self.recipient_se,
            edge_weight: self.edge_weight,
            edge_se: self.edge_se,
            edge_mask: self.edge_mask,
        }
    }
}

#[derive(Debug, Deserialize)]
struct NodeRecord {
    node: String,
    weight: String,
    stderr: String,
}

#[derive(Debug, Deserialize)]
struct EdgeRecord {
    donor: String,
    recipient: String,
    weight: String,
    stderr: String,
}

fn parse_number(file: &Path, row: u64, field: &str, text: &str) -> Result<f64> {
    let value: f64 = text.trim().parse().map_err(|_| Error::MalformedRow {
        file: file.to_path_buf(),
        row,
        message: format!("{field}: cannot parse {text:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow {
            file: file.to_path_buf(),
            row,
            message: format!("{field}: non-finite value {text:?}"),
        });
    }
    Ok(value)
}

fn parse_stderr(file: &Path, row: u64, text: &str) -> Result<f64> {
    let se = parse_number(file, row, "stderr", text)?;
    if se <= 0.0 {
        return Err(Error::NonPositiveStdErr {
            file: file.to_path_buf(),
            row,
            value: se,
        });
    }
    Ok(se)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn malformed(file: &Path, err: csv::Error) -> Error {
    let row = err.position().map(|p| p.line()).unwrap_or(0);
    Error::MalformedRow {
        file: file.to_path_buf(),
        row,
        message: err.to_string(),
    }
}

fn load_nodes(path: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| malformed(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["node", "weight", "stderr"] {
        return Err(Error::MalformedRow {
            file: path.to_path_buf(),
            row: 1,
            message: "expected header node,weight,stderr".into(),
        });
    }
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let mut ses = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| malformed(path, e))?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let rec: NodeRecord = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(path, e))?;
        if !seen.insert(rec.node.clone()) {
            return Err(Error::MalformedRow {
                file: path.to_path_buf(),
                row,
                message: format!("duplicate node {:?}", rec.node),
            });
        }
        weights.push(parse_number(path, row, "weight", &rec.weight)?);
        ses.push(parse_stderr(path, row, &rec.stderr)?);
        labels.push(rec.node);
    }
    Ok((labels, weights, ses))
}

/// Loads a network from its three CSV files. Pairs absent from the edges file
/// are unobserved.
pub fn load_network(
    edges_path: &Path,
    donor_nodes_path: &Path,
    recipient_nodes_path: &Path,
) -> Result<CompatibilityNetwork> {
    let (donor_labels, donor_weight, donor_se) = load_nodes(donor_nodes_path)?;
    let (recipient_labels, recipient_weight, recipient_se) = load_nodes(recipient_nodes_path)?;
    let donor_index: HashMap<&str, usize> = donor_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let recipient_index: HashMap<&str, usize> = recipient_labels
        .iter()
        .enumerate()
        .map(|(j, l)| (l.as_str(), j))
        .collect();
    let (n_d, n_r) = (donor_labels.len(), recipient_labels.len());
    let mut edge_weight = DMatrix::zeros(n_d, n_r);
    let mut edge_se = DMatrix::zeros(n_d, n_r);
    let mut edge_mask = DMatrix::from_element(n_d, n_r, false);

    let mut reader = csv_reader(edges_path)?;
    let headers = reader
        .headers()
        .map_err(|e| malformed(edges_path, e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["donor", "recipient", "weight", "stderr"] {
        return Err(Error::MalformedRow {
            file: edges_path.to_path_buf(),
            row: 1,
            message: "expected header donor,recipient,weight,stderr".into(),
        });
    }
    for result in reader.records() {
        let record = result.map_err(|e| malformed(edges_path, e))?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        let rec: EdgeRecord = record
            .deserialize(Some(&headers))
            .map_err(|e| malformed(edges_path, e))?;
        let unknown = |label: &str| Error::UnknownLabel {
            file: edges_path.to_path_buf(),
            row,
            label: label.to_string(),
        };
        let i = *donor_index
            .get(rec.donor.as_str())
            .ok_or_else(|| unknown(&rec.donor))?;
        let j = *recipient_index
            .get(rec.recipient.as_str())
            .ok_or_else(|| unknown(&rec.recipient))?;
        if edge_mask[(i, j)] {
            return Err(Error::DuplicatePair {
                file: edges_path.to_path_buf(),
                row,
                donor: rec.donor,
                recipient: rec.recipient,
            });
        }
        edge_weight[(i, j)] = parse_number(edges_path, row, "weight", &rec.weight)?;
        edge_se[(i, j)] = parse_stderr(edges_path, row, &rec.stderr)?;
        edge_mask[(i, j)] = true;
    }
    CompatibilityNetwork::new(NetworkParts {
        donor_labels,
        recipient_labels,
        donor_weight,
        donor_se,
        recipient_weight,
        recipient_se,
        edge_weight,
        edge_se,
        edge_mask,
    })
}

/// Loads `edges.csv`, `donor_nodes.csv` and `recipient_nodes.csv` from `dir`.
pub fn load_network_dir(dir: &Path) -> Result<CompatibilityNetwork> {
    load_network(
        &dir.join(EDGES_FILE),
        &dir.join(DONOR_NODES_FILE),
        &dir.join(RECIPIENT_NODES_FILE),
    )
}

fn node_csv(labels: &[String], weights: &[f64], ses: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node", "weight", "stderr"])?;
    for ((l, &x), &s) in labels.iter().zip(weights).zip(ses) {
        w.write_record([l.as_str(), &fmt_f64(x), &fmt_f64(s)])?;
    }
    w.into_inner()
        .map_err(|e| Error::io(PathBuf::new(), e.into_error()))
}

/// Writes the network's three CSV files into `dir`, creating it if needed.
pub fn save_network(net: &CompatibilityNetwork, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["donor", "recipient", "weight", "stderr"])?;
    for pair in net.observed_pairs() {
        let (i, j) = (pair.donor_index, pair.recipient_index);
        w.write_record([
            net.donor_labels[i].as_str(),
            net.recipient_labels[j].as_str(),
            &fmt_f64(net.edge_weight[(i, j)]),
            &fmt_f64(net.edge_se[(i, j)]),
        ])?;
    }
    let edges = w
        .into_inner()
        .map_err(|e| Error::io(dir.join(EDGES_FILE), e.into_error()))?;
    write_atomic(&dir.join(EDGES_FILE), &edges)?;
    write_atomic(
        &dir.join(DONOR_NODES_FILE),
        &node_csv(&net.donor_labels, &net.donor_weight, &net.donor_se)?,
    )?;
    write_atomic(
        &dir.join(RECIPIENT_NODES_FILE),
        &node_csv(
            &net.recipient_labels,
            &net.recipient_weight,
            &net.recipient_se,
        )?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn files(edges: &str, donors: &str, recipients: &str) -> (tempfile::TempDir, [PathBuf; 3]) {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.csv", edges);
        let d = write(dir.path(), "d.csv", donors);
        let r = write(dir.path(), "r.csv", recipients);
        (dir, [e, d, r])
    }

    #[test]
    fn compatibility_sums_components() {
        assert!((compatibility(0.1, 0.2, -0.05) - 0.25).abs() < 1e-15);
        assert_eq!(compatibility(0.0, 0.0, 0.0), 0.0);
        assert_eq!(compatibility(-0.3, 0.3, 0.0), 0.0);
    }

    #[test]
    fn single_edge_parses() {
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,a1,0.25,0.10\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\n",
        );
        let net = load_network(&e, &d, &r).unwrap();
        assert_eq!((net.n_donors(), net.n_recipients()), (1, 1));
        assert_eq!(net.edge_weight()[(0, 0)], 0.25);
        assert_eq!(net.edge_se()[(0, 0)], 0.10);
    }

    #[test]
    fn missing_pair_is_masked() {
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,a1,0.25,0.10\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\na2,0.0,0.3\n",
        );
        let net = load_network(&e, &d, &r).unwrap();
        assert!(net.is_observed(0, 0));
        assert!(!net.is_observed(0, 1));
    }

    #[test]
    fn zero_stderr_is_rejected_with_row() {
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,a1,0.25,0.0\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\n",
        );
        match load_network(&e, &d, &r) {
            Err(Error::NonPositiveStdErr { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected NonPositiveStdErr, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_and_unknown_label() {
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,a1,0.25,0.1\nA1,a1,0.3,0.1\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\n",
        );
        assert!(matches!(
            load_network(&e, &d, &r),
            Err(Error::DuplicatePair { row: 3, .. })
        ));
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,zz,0.25,0.1\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\n",
        );
        assert!(matches!(
            load_network(&e, &d, &r),
            Err(Error::UnknownLabel { row: 2, ref label, .. }) if label == "zz"
        ));
    }

    #[test]
    fn malformed_number_reports_row() {
        let (_d, [e, d, r]) = files(
            "donor,recipient,weight,stderr\nA1,a1,abc,0.1\n",
            "node,weight,stderr\nA1,0.1,0.2\n",
            "node,weight,stderr\na1,-0.1,0.3\n",
        );
        assert!(matches!(
            load_network(&e, &d, &r),
            Err(Error::MalformedRow { row: 2, .. })
        ));
    }

    fn tiny_parts() -> NetworkParts {
        NetworkParts {
            donor_labels: vec!["A".into()],
            recipient_labels: vec!["a".into(), "b".into()],
            donor_weight: vec![0.0],
            donor_se: vec![1.0],
            recipient_weight: vec![0.0, 0.0],
            recipient_se: vec![1.0, 1.0],
            edge_weight: DMatrix::from_row_slice(1, 2, &[0.5, 9.0]),
            edge_se: DMatrix::from_row_slice(1, 2, &[0.1, -1.0]),
            edge_mask: DMatrix::from_row_slice(1, 2, &[true, false]),
        }
    }

    #[test]
    fn validation_ignores_unobserved_entries() {
        let net = CompatibilityNetwork::new(tiny_parts()).unwrap();
        assert_eq!(net.edge_weight()[(0, 1)], 0.0);
    }

    #[test]
    fn validation_rejects_invariant_violations() {
        let mut p = tiny_parts();
        p.edge_mask[(0, 0)] = false;
        assert!(CompatibilityNetwork::new(p).is_err());

        let mut p = tiny_parts();
        p.recipient_labels[1] = "a".into();
        assert!(CompatibilityNetwork::new(p).is_err());

        let mut p = tiny_parts();
        p.donor_se[0] = f64::INFINITY;
        assert!(CompatibilityNetwork::new(p).is_err());

        let mut p = tiny_parts();
        p.edge_se[(0, 0)] = 0.0;
        assert!(CompatibilityNetwork::new(p).is_err());

        let mut p = tiny_parts();
        p.donor_weight.push(1.0);
        assert!(matches!(
            CompatibilityNetwork::new(p),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn save_creates_directory() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested/out");
        let net = CompatibilityNetwork::new(tiny_parts()).unwrap();
        save_network(&net, &target).unwrap();
        assert!(target.join(EDGES_FILE).exists());
        assert_eq!(load_network_dir(&target).unwrap(), net);
    }
}
