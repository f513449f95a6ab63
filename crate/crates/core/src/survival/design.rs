use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TransplantDataset;
use crate::error::{Error, Result};

/// What a design-matrix column encodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Basic { index: usize },
    Donor { label: String },
    Recipient { label: String },
    Pair { donor: String, recipient: String },
}

impl ColumnKind {
    pub fn name(&self) -> String {
        match self {
            ColumnKind::Basic { index } => format!("x{}", index + 1),
            ColumnKind::Donor { label } => format!("donor:{label}"),
            ColumnKind::Recipient { label } => format!("recipient:{label}"),
            ColumnKind::Pair { donor, recipient } => format!("pair:{donor}|{recipient}"),
        }
    }
}

/// Column structure learnt on one dataset and reusable on another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<ColumnKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub layout: DesignLayout,
}

impl DesignLayout {
    pub fn n_basic(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| matches!(c, ColumnKind::Basic { .. }))
            .count()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(ColumnKind::name).collect()
    }

    /// Encodes `data` with these columns. Types or pairs the layout does not
    /// know simply activate nothing.
    pub fn apply(&self, data: &TransplantDataset) -> Result<DesignMatrix> {
        let n_basic = self.n_basic();
        if n_basic != data.n_basic() {
            return Err(Error::DimensionMismatch(format!(
                "layout has {n_basic} basic covariates, data has {}",
                data.n_basic()
            )));
        }
        let mut donor_col = HashMap::new();
        let mut recipient_col = HashMap::new();
        let mut pair_col = HashMap::new();
        for (c, kind) in self.columns.iter().enumerate() {
            match kind {
                ColumnKind::Basic { .. } => {}
                ColumnKind::Donor { label } => {
                    donor_col.insert(label.as_str(), c);
                }
                ColumnKind::Recipient { label } => {
                    recipient_col.insert(label.as_str(), c);
                }
                ColumnKind::Pair { donor, recipient } => {
                    pair_col.insert((donor.as_str(), recipient.as_str()), c);
                }
            }
        }
        let n = data.len();
        let mut x = DMatrix::zeros(n, self.columns.len());
        for r in 0..n {
            for (c, kind) in self.columns.iter().enumerate() {
                if let ColumnKind::Basic { index } = kind {
                    x[(r, c)] = data.covariates[(r, *index)];
                }
            }
            let (d, t) = (data.donor_type[r].as_str(), data.recipient_type[r].as_str());
            if let Some(&c) = donor_col.get(d) {
                x[(r, c)] = 1.0;
            }
            if let Some(&c) = recipient_col.get(t) {
                x[(r, c)] = 1.0;
            }
            if let Some(&c) = pair_col.get(&(d, t)) {
                x[(r, c)] = 1.0;
            }
        }
        Ok(DesignMatrix {
            x,
            layout: self.clone(),
        })
    }
}

impl DesignMatrix {
    /// Basic-covariate-only design for an arbitrary matrix.
    pub fn from_basic(x: DMatrix<f64>) -> Self {
        let columns = (0..x.ncols())
            .map(|index| ColumnKind::Basic { index })
            .collect();
        Self {
            x,
            layout: DesignLayout { columns },
        }
    }

    pub fn columns(&self) -> &[ColumnKind] {
        &self.layout.columns
    }
}

/// Basic covariates followed by one-hot donor types, one-hot recipient types
/// and donor-recipient pair indicators. Types and pairs seen in fewer than
/// `min_count` records get no column.
pub fn design_matrix(data: &TransplantDataset, min_count: usize) -> Result<DesignMatrix> {
    if min_count == 0 {
        return Err(Error::InvalidConfig("min_count must be at least 1".into()));
    }
    let mut donors: BTreeMap<&str, usize> = BTreeMap::new();
    let mut recipients: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in 0..data.len() {
        let (d, t) = (data.donor_type[r].as_str(), data.recipient_type[r].as_str());
        *donors.entry(d).or_default() += 1;
        *recipients.entry(t).or_default() += 1;
        *pairs.entry((d, t)).or_default() += 1;
    }
    let mut columns: Vec<ColumnKind> = (0..data.n_basic())
        .map(|index| ColumnKind::Basic { index })
        .collect();
    columns.extend(
        donors
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(l, _)| ColumnKind::Donor {
                label: l.to_string(),
            }),
    );
    columns.extend(
        recipients
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|(l, _)| ColumnKind::Recipient {
                label: l.to_string(),
            }),
    );
    columns.extend(
        pairs
            .iter()
            .filter(|(_, &c)| c >= min_count)
            .map(|((d, t), _)| ColumnKind::Pair {
                donor: d.to_string(),
                recipient: t.to_string(),
            }),
    );
    DesignLayout { columns }.apply(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[(&str, &str)]) -> TransplantDataset {
        let n = rows.len();
        TransplantDataset::new(
            DMatrix::from_fn(n, 1, |r, _| r as f64),
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1.to_string()).collect(),
            (1..=n).map(|t| t as f64).collect(),
            vec![true; n],
        )
        .unwrap()
    }

    #[test]
    fn all_frequent_counts_columns() {
        let rows: Vec<(&str, &str)> = [("A", "a"), ("A", "b"), ("B", "a"), ("B", "b")]
            .iter()
            .flat_map(|&p| std::iter::repeat_n(p, 3))
            .collect();
        let d = design_matrix(&dataset(&rows), 3).unwrap();
        assert_eq!(d.x.ncols(), 1 + 2 + 2 + 4);
    }

    #[test]
    fn rare_pair_is_dropped_but_types_kept() {
        let mut rows = vec![("A", "a"); 3];
        rows.extend([("A", "b"); 2]);
        rows.extend([("B", "b"); 3]);
        let d = design_matrix(&dataset(&rows), 3).unwrap();
        let names = d.layout.names();
        assert!(!names.contains(&"pair:A|b".to_string()));
        assert!(names.contains(&"donor:A".to_string()));
        assert!(names.contains(&"recipient:b".to_string()));
    }

    #[test]
    fn each_record_activates_one_donor_and_one_recipient_column() {
        let rows = [("A", "a"), ("B", "b"), ("A", "b"), ("B", "a")];
        let d = design_matrix(&dataset(&rows), 1).unwrap();
        for r in 0..rows.len() {
            let mut donors = 0;
            let mut recipients = 0;
            for (c, kind) in d.columns().iter().enumerate() {
                match kind {
                    ColumnKind::Donor { .. } => donors += d.x[(r, c)] as usize,
                    ColumnKind::Recipient { .. } => recipients += d.x[(r, c)] as usize,
                    _ => {}
                }
            }
            assert_eq!((donors, recipients), (1, 1));
        }
    }

    #[test]
    fn layout_applies_to_new_data() {
        let train = dataset(&[("A", "a"), ("B", "b")]);
        let test = dataset(&[("C", "a")]);
        let d = design_matrix(&train, 1).unwrap();
        let t = d.layout.apply(&test).unwrap();
        assert_eq!(t.x.ncols(), d.x.ncols());
        // only the recipient column and the basic covariate can be active
        assert_eq!(t.x.row(0).iter().filter(|v| **v != 0.0).count(), 1);
    }
}
