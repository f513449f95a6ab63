use nalgebra::{DMatrix, DVector};

use super::{Layout, LsmParams};
use crate::error::Result;
use crate::network::CompatibilityNetwork;

/// Standard errors below this are raised to it before use as precisions.
pub const SE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn floored(se: f64) -> f64 {
    se.max(SE_FLOOR)
}

/// Gaussian log-density given the residual `x - mean`.
fn log_normal(residual: f64, se: f64) -> f64 {
    let var = se * se;
    -0.5 * (LN_2PI + var.ln()) - residual * residual / (2.0 * var)
}

/// `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `a * b = p + e` exactly.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `w - (alpha - beta * |z_d - z_r|^2)` carried in double-double precision
/// and rounded once. Residuals are small differences of O(1) quantities, and
/// rounding them naively leaves the summed objective noisy at the level of
/// its last bits. Also returns the squared distance.
fn edge_residual(
    w: f64,
    alpha: f64,
    beta: f64,
    v: &[f64],
    pairs: impl Iterator<Item = (usize, usize)>,
) -> (f64, f64) {
    let (mut hi, mut lo) = (0.0, 0.0);
    for (a, b) in pairs {
        let (dh, dl) = two_sum(v[a], -v[b]);
        let (sh, sl) = two_prod(dh, dh);
        let (t, e) = two_sum(hi, sh);
        hi = t;
        lo += e + sl + 2.0 * dh * dl;
    }
    let (ph, pl) = two_prod(beta, hi);
    let (a1, e1) = two_sum(w, -alpha);
    let (r, e2) = two_sum(a1, ph);
    (r + (e1 + e2 + pl + beta * lo), hi + lo)
}

/// Neumaier compensated sum. Near an optimum successive objective values
/// differ by far less than the rounding error of naive summation, and the
/// optimiser's monotone acceptance test needs them ordered correctly.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.carry += if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// Gradient of the log-likelihood with respect to every free parameter. The
/// slope is differentiated through `beta = exp(log_beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub z_d: DMatrix<f64>,
    pub z_r: DMatrix<f64>,
    pub alpha: f64,
    pub log_beta: f64,
    pub delta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl Gradient {
    pub fn inf_norm(&self) -> f64 {
        self.z_d
            .iter()
            .chain(self.z_r.iter())
            .chain(self.delta.iter())
            .chain(self.gamma.iter())
            .chain([self.alpha, self.log_beta].iter())
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }

    fn from_packed(l: Layout, g: &[f64]) -> Self {
        Self {
            z_d: DMatrix::from_fn(l.n_d, l.dim, |i, k| g[l.z_d(i, k)]),
            z_r: DMatrix::from_fn(l.n_r, l.dim, |j, k| g[l.z_r(j, k)]),
            alpha: g[l.alpha()],
            log_beta: g[l.log_beta()],
            delta: DVector::from_fn(l.n_d, |i, _| g[l.delta(i)]),
            gamma: DVector::from_fn(l.n_r, |j, _| g[l.gamma(j)]),
        }
    }
}

pub fn log_likelihood(params: &LsmParams, net: &CompatibilityNetwork) -> Result<f64> {
    params.check_network(net)?;
    Ok(evaluate(params.layout(), &params.pack(), net, None))
}

pub fn log_likelihood_gradient(params: &LsmParams, net: &CompatibilityNetwork) -> Result<Gradient> {
    params.check_network(net)?;
    let l = params.layout();
    let mut g = vec![0.0; l.len()];
    evaluate(l, &params.pack(), net, Some(&mut g));
    Ok(Gradient::from_packed(l, &g))
}

/// Log-likelihood at the packed point `v`; accumulates the gradient into
/// `grad` (which must be zeroed) when given.
pub(crate) fn evaluate(
    l: Layout,
    v: &[f64],
    net: &CompatibilityNetwork,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let alpha = v[l.alpha()];
    let beta = v[l.log_beta()].exp();
    let w = net.edge_weight();
    let se = net.edge_se();
    let mask = net.edge_mask();
    let mut ll = CompensatedSum::default();
    let mut diff = vec![0.0; l.dim];

    for i in 0..l.n_d {
        for j in 0..l.n_r {
            if !mask[(i, j)] {
                continue;
            }
            let (resid, dist2) = edge_residual(
                w[(i, j)],
                alpha,
                beta,
                v,
                (0..l.dim).map(|k| (l.z_d(i, k), l.z_r(j, k))),
            );
            let s = floored(se[(i, j)]);
            ll.add(log_normal(resid, s));
            if let Some(g) = grad.as_deref_mut() {
                for (k, d) in diff.iter_mut().enumerate() {
                    *d = v[l.z_d(i, k)] - v[l.z_r(j, k)];
                }
                // d ll / d eta
                let r = resid / (s * s);
                g[l.alpha()] += r;
                g[l.log_beta()] -= r * beta * dist2;
                for (k, d) in diff.iter().enumerate() {
                    let c = 2.0 * beta * r * d;
                    g[l.z_d(i, k)] -= c;
                    g[l.z_r(j, k)] += c;
                }
            }
        }
    }

    let y_d = net.donor_weight();
    let s_d = net.donor_se();
    for i in 0..l.n_d {
        let delta = v[l.delta(i)];
        let s = floored(s_d[i]);
        ll.add(log_normal(y_d[i] - delta, s));
        if let Some(g) = grad.as_deref_mut() {
            g[l.delta(i)] += (y_d[i] - delta) / (s * s);
        }
    }
    let y_r = net.recipient_weight();
    let s_r = net.recipient_se();
    for j in 0..l.n_r {
        let gamma = v[l.gamma(j)];
        let s = floored(s_r[j]);
        ll.add(log_normal(y_r[j] - gamma, s));
        if let Some(g) = grad.as_deref_mut() {
            g[l.gamma(j)] += (y_r[j] - gamma) / (s * s);
        }
    }
    ll.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkParts;

    fn one_edge(w: f64, se: f64) -> CompatibilityNetwork {
        CompatibilityNetwork::new(NetworkParts {
            donor_labels: vec!["A".into()],
            recipient_labels: vec!["a".into()],
            donor_weight: vec![0.0],
            donor_se: vec![1.0],
            recipient_weight: vec![0.0],
            recipient_se: vec![1.0],
            edge_weight: DMatrix::from_element(1, 1, w),
            edge_se: DMatrix::from_element(1, 1, se),
            edge_mask: DMatrix::from_element(1, 1, true),
        })
        .unwrap()
    }

    fn origin_params() -> LsmParams {
        // eta = 1 at zero distance; node effects at their observations
        LsmParams::new(
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 2),
            1.0,
            1.0,
            DVector::zeros(1),
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn edge_term_at_mean() {
        let node_terms = 2.0 * (-0.5 * LN_2PI);
        let ll = log_likelihood(&origin_params(), &one_edge(1.0, 1.0)).unwrap();
        assert!((ll - node_terms - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn edge_term_one_sigma_away() {
        let se = 0.3;
        let node_terms = 2.0 * (-0.5 * LN_2PI);
        let ll = log_likelihood(&origin_params(), &one_edge(1.0 + se, se)).unwrap();
        let want = -0.5 * (2.0 * std::f64::consts::PI * se * se).ln() - 0.5;
        assert!((ll - node_terms - want).abs() < 1e-12);
    }

    #[test]
    fn tiny_stderr_is_floored() {
        let a = log_likelihood(&origin_params(), &one_edge(1.0, 1e-12)).unwrap();
        let b = log_likelihood(&origin_params(), &one_edge(1.0, SE_FLOOR)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut p = origin_params();
        p.z_d = DMatrix::zeros(2, 2);
        p.delta = DVector::zeros(2);
        assert!(log_likelihood(&p, &one_edge(0.0, 1.0)).is_err());
    }
}
