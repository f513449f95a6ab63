mod common;

use common::{naive_log_likelihood, random_network, random_orthogonal, random_params, rng};
use lsmnet::lsm::optim::{minimize, LbfgsOptions};
use lsmnet::lsm::{
    log_likelihood, log_likelihood_gradient, pair_affinity, predict_compatibility, refine_network,
};
use lsmnet::network::{compatibility, CompatibilityNetwork, NetworkParts};
use lsmnet::{fit, FitConfig, FitResult, LsmParams};
use nalgebra::{DMatrix, RowDVector};
use proptest::prelude::*;

fn perturbed(p: &LsmParams, index: usize, h: f64) -> LsmParams {
    let mut q = p.clone();
    let (n_d, n_r, dim) = (p.n_donors(), p.n_recipients(), p.dim());
    let mut k = index;
    if k < n_d * dim {
        q.z_d[(k / dim, k % dim)] += h;
        return q;
    }
    k -= n_d * dim;
    if k < n_r * dim {
        q.z_r[(k / dim, k % dim)] += h;
        return q;
    }
    k -= n_r * dim;
    match k {
        0 => q.alpha += h,
        1 => q.beta = (q.beta.ln() + h).exp(),
        _ if k - 2 < n_d => q.delta[k - 2] += h,
        _ => q.gamma[k - 2 - n_d] += h,
    }
    q
}

fn flat_gradient(p: &LsmParams, net: &CompatibilityNetwork) -> Vec<f64> {
    let g = log_likelihood_gradient(p, net).unwrap();
    let mut out: Vec<f64> = Vec::new();
    for m in [&g.z_d, &g.z_r] {
        for i in 0..m.nrows() {
            out.extend(m.row(i).iter());
        }
    }
    out.push(g.alpha);
    out.push(g.log_beta);
    out.extend(g.delta.iter());
    out.extend(g.gamma.iter());
    out
}

#[test]
fn log_likelihood_matches_per_term_oracle() {
    for seed in 0..20 {
        let net = random_network(4, 3, 0.7, seed);
        let p = random_params(4, 3, 2, seed + 100);
        let ll = log_likelihood(&p, &net).unwrap();
        assert!((ll - naive_log_likelihood(&p, &net)).abs() <= 1e-12 * ll.abs().max(1.0));
    }
}

#[test]
fn single_edge_at_its_mean() {
    let net = CompatibilityNetwork::new(NetworkParts {
        donor_labels: vec!["a".into()],
        recipient_labels: vec!["b".into()],
        donor_weight: vec![0.0],
        donor_se: vec![1.0],
        recipient_weight: vec![0.0],
        recipient_se: vec![1.0],
        edge_weight: DMatrix::from_element(1, 1, 1.0),
        edge_se: DMatrix::from_element(1, 1, 1.0),
        edge_mask: DMatrix::from_element(1, 1, true),
    })
    .unwrap();
    let p = LsmParams::new(
        DMatrix::zeros(1, 2),
        DMatrix::zeros(1, 2),
        1.0,
        1.0,
        nalgebra::DVector::zeros(1),
        nalgebra::DVector::zeros(1),
    )
    .unwrap();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((log_likelihood(&p, &net).unwrap() + 3.0 * half_log_2pi).abs() < 1e-14);
}

#[test]
fn affinity_examples() {
    let p = |zd: [f64; 2], beta: f64, delta: f64, gamma: f64| {
        LsmParams::new(
            DMatrix::from_row_slice(1, 2, &zd),
            DMatrix::zeros(1, 2),
            1.0,
            beta,
            nalgebra::DVector::from_element(1, delta),
            nalgebra::DVector::from_element(1, gamma),
        )
        .unwrap()
    };
    assert_eq!(pair_affinity(&p([0.0, 0.0], 1.0, 0.0, 0.0), 0, 0), 1.0);
    assert_eq!(pair_affinity(&p([1.0, 0.0], 1.0, 0.0, 0.0), 0, 0), 0.0);
    assert_eq!(pair_affinity(&p([1.0, 1.0], 2.0, 0.0, 0.0), 0, 0), -3.0);
    assert_eq!(
        predict_compatibility(&p([1.0, 0.0], 1.0, 0.5, -0.5), 0, 0),
        0.0
    );
    assert!((predict_compatibility(&p([1.0, 1.0], 2.0, 0.1, 0.2), 0, 0) + 2.7).abs() < 1e-15);
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..30 {
        let net = random_network(5, 4, 0.7, seed);
        let p = random_params(5, 4, 2, seed + 1000);
        let g = flat_gradient(&p, &net);
        for (k, gk) in g.iter().enumerate() {
            let up = log_likelihood(&perturbed(&p, k, h), &net).unwrap();
            let down = log_likelihood(&perturbed(&p, k, -h), &net).unwrap();
            let fd = (up - down) / (2.0 * h);
            // relative error with a 1e-3 scale floor for near-zero components
            let rel = (gk - fd).abs() / gk.abs().max(fd.abs()).max(1e-3);
            assert!(rel <= 1e-5, "seed {seed} component {k}: {gk} vs {fd}");
        }
    }
}

#[test]
fn masked_donor_row_gets_node_gradient_only() {
    let mut parts = random_network(3, 4, 1.0, 5).into_parts();
    for j in 0..4 {
        parts.edge_mask[(1, j)] = false;
    }
    let net = CompatibilityNetwork::new(parts).unwrap();
    let p = random_params(3, 4, 2, 6);
    let g = log_likelihood_gradient(&p, &net).unwrap();
    assert!(g.z_d.row(1).iter().all(|&v| v == 0.0));
    let want = (net.donor_weight()[1] - p.delta[1]) / net.donor_se()[1].powi(2);
    assert!((g.delta[1] - want).abs() < 1e-12);
}

/// Network whose observations equal the model means of `p` exactly.
fn noiseless(p: &LsmParams, se: f64) -> CompatibilityNetwork {
    let (n_d, n_r) = (p.n_donors(), p.n_recipients());
    CompatibilityNetwork::new(NetworkParts {
        donor_labels: (0..n_d).map(|i| format!("d{i}")).collect(),
        recipient_labels: (0..n_r).map(|j| format!("r{j}")).collect(),
        donor_weight: p.delta.iter().copied().collect(),
        donor_se: vec![se; n_d],
        recipient_weight: p.gamma.iter().copied().collect(),
        recipient_se: vec![se; n_r],
        edge_weight: DMatrix::from_fn(n_d, n_r, |i, j| pair_affinity(p, i, j)),
        edge_se: DMatrix::from_element(n_d, n_r, se),
        edge_mask: DMatrix::from_element(n_d, n_r, true),
    })
    .unwrap()
}

#[test]
fn noiseless_truth_is_stationary_and_returned() {
    let p = random_params(6, 5, 2, 77);
    let net = noiseless(&p, 0.05);
    assert!(log_likelihood_gradient(&p, &net).unwrap().inf_norm() <= 1e-10);
    let config = FitConfig {
        restarts: 0,
        ..Default::default()
    };
    let r = fit(&net, &config, Some(&p)).unwrap();
    assert_eq!(r.restart_index, 0);
    let change = (&r.params.z_d - &p.z_d)
        .iter()
        .chain((&r.params.z_r - &p.z_r).iter())
        .chain((&r.params.delta - &p.delta).iter())
        .chain((&r.params.gamma - &p.gamma).iter())
        .chain([r.params.alpha - p.alpha, r.params.beta - p.beta].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(change <= 1e-8, "moved by {change}");
}

#[test]
fn fit_is_deterministic() {
    let net = random_network(7, 6, 0.8, 3);
    let config = FitConfig {
        seed: 9,
        ..Default::default()
    };
    assert_eq!(
        fit(&net, &config, None).unwrap(),
        fit(&net, &config, None).unwrap()
    );
}

#[test]
fn best_start_dominates_the_mds_start() {
    for seed in 0..5 {
        let net = random_network(8, 7, 0.8, seed);
        let config = FitConfig {
            seed,
            ..Default::default()
        };
        let r = fit(&net, &config, None).unwrap();
        assert_eq!(r.start_log_likelihoods.len(), config.restarts + 1);
        let mds_only = fit(
            &net,
            &FitConfig {
                restarts: 0,
                ..config
            },
            None,
        )
        .unwrap();
        assert!(r.log_likelihood >= mds_only.log_likelihood);
        assert_eq!(r.start_log_likelihoods[0], Some(mds_only.log_likelihood));
        for ll in r.start_log_likelihoods.iter().flatten() {
            assert!(r.log_likelihood >= *ll);
        }
        assert!(r.params.beta > 0.0);
    }
}

#[test]
fn frozen_beta_stays_put() {
    let net = random_network(6, 6, 1.0, 4);
    let r = fit(
        &net,
        &FitConfig {
            freeze_beta: true,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    assert_eq!(r.params.beta, 1.0);
}

#[test]
fn optimiser_trace_is_monotone_on_likelihood() {
    let net = random_network(6, 5, 0.8, 12);
    let p = random_params(6, 5, 2, 13);
    let x0: Vec<f64> = flat_params(&p);
    let layout_p = p.clone();
    let objective = |x: &[f64], g: &mut [f64]| {
        let q = unflat(&layout_p, x);
        let grad = flat_gradient(&q, &net);
        for (gi, v) in g.iter_mut().zip(grad) {
            *gi = -v;
        }
        -log_likelihood(&q, &net).unwrap()
    };
    let m = minimize(objective, &x0, &LbfgsOptions::default()).unwrap();
    assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
}

fn flat_params(p: &LsmParams) -> Vec<f64> {
    let mut out = Vec::new();
    for m in [&p.z_d, &p.z_r] {
        for i in 0..m.nrows() {
            out.extend(m.row(i).iter());
        }
    }
    out.push(p.alpha);
    out.push(p.beta.ln());
    out.extend(p.delta.iter());
    out.extend(p.gamma.iter());
    out
}

fn unflat(shape: &LsmParams, x: &[f64]) -> LsmParams {
    let (n_d, n_r, dim) = (shape.n_donors(), shape.n_recipients(), shape.dim());
    let mut k = 0;
    let mut take = |n: usize| {
        let s = &x[k..k + n];
        k += n;
        s.to_vec()
    };
    let z_d = DMatrix::from_row_slice(n_d, dim, &take(n_d * dim));
    let z_r = DMatrix::from_row_slice(n_r, dim, &take(n_r * dim));
    let ab = take(2);
    LsmParams {
        z_d,
        z_r,
        alpha: ab[0],
        beta: ab[1].exp(),
        delta: nalgebra::DVector::from_vec(take(n_d)),
        gamma: nalgebra::DVector::from_vec(take(n_r)),
    }
}

#[test]
fn refined_estimates_recompose() {
    let mut parts = random_network(5, 4, 1.0, 21).into_parts();
    parts.edge_mask[(2, 3)] = false;
    let net = CompatibilityNetwork::new(parts).unwrap();
    let r = fit(&net, &FitConfig::default(), None).unwrap();
    let est = refine_network(&net, &r).unwrap();
    for i in 0..5 {
        for j in 0..4 {
            assert_eq!(
                est.mu[(i, j)],
                compatibility(est.delta[i], est.gamma[j], est.eta[(i, j)])
            );
        }
    }
    assert!(est.mu[(2, 3)].is_finite());
    assert_eq!(est.mu[(2, 3)], predict_compatibility(&r.params, 2, 3));
}

#[test]
fn vanishing_slope_gives_constant_affinity() {
    let net = random_network(4, 4, 1.0, 2);
    let mut params = random_params(4, 4, 2, 3);
    params.beta = 1e-300;
    let result = FitResult {
        log_likelihood: log_likelihood(&params, &net).unwrap(),
        params: params.clone(),
        iterations: 0,
        grad_norm: 0.0,
        restart_index: 0,
        converged: true,
        start_log_likelihoods: vec![None],
    };
    let est = refine_network(&net, &result).unwrap();
    assert!(est.eta.iter().all(|&e| e == params.alpha));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn likelihood_is_invariant_to_rigid_motions(seed in 0u64..10_000, tx in -5.0..5.0f64, ty in -5.0..5.0f64) {
        let net = random_network(6, 5, 0.8, seed);
        let p = random_params(6, 5, 2, seed ^ 0xabc);
        let q = random_orthogonal(2, &mut rng(seed));
        let t = RowDVector::from_row_slice(&[tx, ty]);
        let mut moved = p.clone();
        moved.z_d = &p.z_d * &q;
        moved.z_r = &p.z_r * &q;
        for i in 0..moved.z_d.nrows() {
            let r = moved.z_d.row(i) + &t;
            moved.z_d.set_row(i, &r);
        }
        for j in 0..moved.z_r.nrows() {
            let r = moved.z_r.row(j) + &t;
            moved.z_r.set_row(j, &r);
        }
        let a = log_likelihood(&p, &net).unwrap();
        let b = log_likelihood(&moved, &net).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn likelihood_never_exceeds_perfect_fit(seed in 0u64..10_000) {
        // every Gaussian term is maximised at its mean
        let net = random_network(4, 4, 0.6, seed);
        let p = random_params(4, 4, 2, seed + 1);
        let bound: f64 = net.observed_pairs().iter()
            .map(|q| -0.5 * (2.0 * std::f64::consts::PI * net.edge_se()[(q.donor_index, q.recipient_index)].powi(2)).ln())
            .chain(net.donor_se().iter().chain(net.recipient_se()).map(|s| -0.5 * (2.0 * std::f64::consts::PI * s * s).ln()))
            .sum();
        prop_assert!(log_likelihood(&p, &net).unwrap() <= bound + 1e-12);
    }
}
