//! Classical MDS initialisation of latent positions.
//!
//! Cross-type dissimilarities come from the edge weights, `1 - logistic(w)`.
//! There are no donor-donor or recipient-recipient edges, so same-type
//! dissimilarities use `1 - logistic(rho)` with `rho` the Pearson correlation
//! of the two nodes' edge-weight profiles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::network::CompatibilityNetwork;
use crate::stats::pearson;

const LOGISTIC_CLAMP: f64 = 30.0;

pub fn logistic(x: f64) -> f64 {
    let x = x.clamp(-LOGISTIC_CLAMP, LOGISTIC_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Symmetric dissimilarities over donors followed by recipients.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    values: DMatrix<f64>,
}

impl DissimilarityMatrix {
    /// Wraps a square symmetric matrix with zero diagonal. Panics otherwise.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        assert!(values.is_square(), "dissimilarity matrix must be square");
        for i in 0..values.nrows() {
            assert_eq!(values[(i, i)], 0.0, "diagonal must be zero");
            for j in 0..i {
                assert!(
                    (values[(i, j)] - values[(j, i)]).abs() <= 1e-12,
                    "dissimilarity matrix must be symmetric"
                );
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

fn profile_correlation(a: &[(f64, bool)], b: &[(f64, bool)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter(|((_, ma), (_, mb))| *ma && *mb)
        .map(|((x, _), (y, _))| (*x, *y))
        .unzip();
    pearson(&xs, &ys).unwrap_or(0.0)
}

pub fn build_dissimilarity(net: &CompatibilityNetwork) -> DissimilarityMatrix {
    let (n_d, n_r) = (net.n_donors(), net.n_recipients());
    let w = net.edge_weight();
    let mask = net.edge_mask();
    let donor_rows: Vec<Vec<(f64, bool)>> = (0..n_d)
        .map(|i| (0..n_r).map(|j| (w[(i, j)], mask[(i, j)])).collect())
        .collect();
    let recipient_cols: Vec<Vec<(f64, bool)>> = (0..n_r)
        .map(|j| (0..n_d).map(|i| (w[(i, j)], mask[(i, j)])).collect())
        .collect();

    let n = n_d + n_r;
    let mut d = DMatrix::zeros(n, n);
    let mut set = |a: usize, b: usize, v: f64| {
        d[(a, b)] = v;
        d[(b, a)] = v;
    };
    for a in 0..n_d {
        for b in 0..a {
            set(
                a,
                b,
                1.0 - logistic(profile_correlation(&donor_rows[a], &donor_rows[b])),
            );
        }
    }
    for a in 0..n_r {
        for b in 0..a {
            let rho = profile_correlation(&recipient_cols[a], &recipient_cols[b]);
            set(n_d + a, n_d + b, 1.0 - logistic(rho));
        }
    }
    for i in 0..n_d {
        for j in 0..n_r {
            // unobserved pairs are imputed with the neutral weight 0
            let weight = if mask[(i, j)] { w[(i, j)] } else { 0.0 };
            set(i, n_d + j, 1.0 - logistic(weight));
        }
    }
    DissimilarityMatrix { values: d }
}

/// Classical (Torgerson) scaling: eigendecomposition of the double-centred
/// squared dissimilarities. Directions with negative eigenvalues get zero
/// coordinates.
pub fn classical_mds(diss: &DissimilarityMatrix, dim: usize) -> DMatrix<f64> {
    let n = diss.len();
    assert!(dim >= 1 && dim <= n, "dim must be in 1..=n");
    let d2 = diss.values.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut coords = DMatrix::zeros(n, dim);
    for (c, &k) in order.iter().take(dim).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * lambda.sqrt();
        for i in 0..n {
            coords[(i, c)] = scale * v[i];
        }
    }
    coords
}

/// MDS start positions `(z_d, z_r)` for a network.
pub fn mds_init(net: &CompatibilityNetwork, dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let diss = build_dissimilarity(net);
    let n_d = net.n_donors();
    let n = diss.len();
    let dim_eff = dim.min(n);
    let coords = classical_mds(&diss, dim_eff);
    let mut full = DMatrix::zeros(n, dim);
    full.view_mut((0, 0), (n, dim_eff)).copy_from(&coords);
    let z_d = full.rows(0, n_d).into_owned();
    let z_r = full.rows(n_d, n - n_d).into_owned();
    (z_d, z_r)
}
