//! Similarity Procrustes alignment of point configurations.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    /// Orthogonal `d x d` matrix; reflections are allowed.
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    pub translation: RowDVector<f64>,
    /// `scale * source * rotation + translation`.
    pub aligned: DMatrix<f64>,
    pub residual_rmse: f64,
}

fn centroid(m: &DMatrix<f64>) -> RowDVector<f64> {
    m.row_mean()
}

fn centered(m: &DMatrix<f64>, c: &RowDVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= c;
    }
    out
}

/// Root mean squared Euclidean distance between corresponding rows.
pub fn rms_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.nrows() as f64).sqrt()
}

/// Finds the scale, orthogonal map and translation taking `source` closest to
/// `target` in Frobenius norm.
pub fn procrustes_align(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<ProcrustesResult> {
    if source.shape() != target.shape() {
        return Err(Error::DimensionMismatch(format!(
            "source is {:?}, target is {:?}",
            source.shape(),
            target.shape()
        )));
    }
    let (n, d) = source.shape();
    if n < d || n == 0 {
        return Err(Error::InvalidInput(format!(
            "need at least as many points as dimensions, got {n} points in {d}"
        )));
    }
    let mu_s = centroid(source);
    let mu_t = centroid(target);
    let xs = centered(source, &mu_s);
    let xt = centered(target, &mu_t);
    let spread = xs.norm_squared();

    let (rotation, scale) = if spread <= f64::EPSILON * f64::EPSILON * (1.0 + mu_s.norm_squared()) {
        (DMatrix::identity(d, d), 1.0)
    } else {
        let svd = (xs.transpose() * &xt).svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let rotation = u * v_t;
        let trace: f64 = svd.singular_values.iter().sum();
        let scale = trace / spread;
        if scale > 0.0 {
            (rotation, scale)
        } else {
            (rotation, 1.0)
        }
    };
    let translation = &mu_t - scale * &mu_s * &rotation;
    let mut aligned = scale * source * &rotation;
    for mut row in aligned.row_iter_mut() {
        row += &translation;
    }
    let residual_rmse = rms_distance(&aligned, target);
    Ok(ProcrustesResult {
        rotation,
        scale,
        translation,
        aligned,
        residual_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn pts() -> DMatrix<f64> {
        DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 0.2, -0.3, 0.8, 0.5, -1.1, 2.0, 1.0])
    }

    #[test]
    fn identity_case() {
        let r = procrustes_align(&pts(), &pts()).unwrap();
        assert!(r.residual_rmse < 1e-12);
        assert!((r.scale - 1.0).abs() < 1e-12);
        assert!((&r.rotation - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn recovers_scale_rotation_translation() {
        let q = rot2(0.7);
        let mut target = 2.0 * pts() * &q;
        for mut row in target.row_iter_mut() {
            row += RowDVector::from_row_slice(&[3.0, -1.0]);
        }
        let r = procrustes_align(&pts(), &target).unwrap();
        assert!(r.residual_rmse < 1e-8);
        assert!((r.scale - 2.0).abs() < 1e-8);
        assert!((&r.rotation - q).amax() < 1e-8);
        let rtr = r.rotation.transpose() * &r.rotation;
        assert!((rtr - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn reflection_is_allowed() {
        let flip = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = procrustes_align(&pts(), &(pts() * flip)).unwrap();
        assert!(r.residual_rmse < 1e-10);
    }

    #[test]
    fn degenerate_source_moves_to_target_centroid() {
        let src = DMatrix::from_element(4, 2, 1.5);
        let r = procrustes_align(&src, &pts().rows(0, 4).into_owned()).unwrap();
        assert_eq!(r.scale, 1.0);
        assert_eq!(r.rotation, DMatrix::identity(2, 2));
        let c = centroid(&pts().rows(0, 4).into_owned());
        assert!((r.aligned.row(0) - &c).amax() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(procrustes_align(&pts(), &DMatrix::zeros(4, 2)).is_err());
        assert!(procrustes_align(&DMatrix::zeros(1, 2), &DMatrix::zeros(1, 2)).is_err());
    }
}
