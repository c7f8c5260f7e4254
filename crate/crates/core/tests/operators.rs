mod common;

use common::*;
use micromaser::fock::{apply_damping, apply_generator, apply_pass_deexcited, apply_pass_excited, Operators};
use micromaser::propagator::{evolve_no_detection, propagate_unconditioned, Propagator};
use micromaser::steady::{steady_state, steady_state_at, trapping_angles};
use micromaser::{Channel, ChannelSplit, MaserParams, Numerics, PhotonDistribution};
use proptest::prelude::*;
use std::f64::consts::PI;

fn dense_apply(m: &nalgebra::DMatrix<f64>, p: &PhotonDistribution) -> Vec<f64> {
    (m * to_vec(p.weights())).iter().copied().collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn arb_params() -> impl Strategy<Value = MaserParams> {
    (1.0..20.0f64, 0.0..0.5f64, 0.0..10.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(n_ex, nu, phi, ea, eb)| {
        MaserParams {
            eta_a: ea,
            eta_b: eb,
            ..MaserParams::new(n_ex, nu, phi, 1.0)
        }
    })
}

/// States whose top entry is zero so that no emitted photon is clipped.
fn arb_state(n_max: usize) -> impl Strategy<Value = PhotonDistribution> {
    prop::collection::vec(0.0..1.0f64, n_max).prop_map(|mut w| {
        w.push(0.0);
        PhotonDistribution::from_weights(w)
    })
}

proptest! {
    #[test]
    fn matrix_free_operators_match_dense_reference(params in arb_params(), p in arb_state(24)) {
        let n_max = p.n_max();
        let scale = p.l1_norm();
        prop_assert!(max_diff(apply_damping(&p, &params).weights(), &dense_apply(&damping(&params, n_max), &p)) <= 1e-14 * scale);
        prop_assert!(max_diff(apply_pass_excited(&p, &params).weights(), &dense_apply(&excited(&params, n_max), &p)) <= 1e-14 * scale);
        prop_assert!(max_diff(apply_pass_deexcited(&p, &params).unwrap().weights(), &dense_apply(&deexcited(&params, n_max), &p)) <= 1e-14 * scale);
        prop_assert!(max_diff(apply_generator(&p, &params).unwrap().weights(), &dense_apply(&generator(&params, n_max), &p)) <= 1e-13 * scale);
        for ch in [Channel::A, Channel::B, Channel::AB] {
            let split = ChannelSplit::new(ch, params);
            prop_assert!(max_diff(split.apply_jump(&p).weights(), &dense_apply(&jump(&params, n_max, ch), &p)) <= 1e-14 * scale);
        }
    }

    #[test]
    fn banded_matrices_match_matrix_free(params in arb_params(), p in arb_state(24)) {
        let ops = Operators::new(params, p.n_max());
        let free = apply_generator(&p, &params).unwrap();
        let banded = ops.generator.mul_vec(p.weights());
        prop_assert!(max_diff(free.weights(), &banded) <= 1e-14 * free.max_abs().max(1.0));
    }

    #[test]
    fn linearity(params in arb_params(), p in arb_state(16), q in arb_state(16), alpha in -2.0..2.0f64, beta in -2.0..2.0f64) {
        let combined = p.combine(alpha, &q, beta);
        let lhs = apply_generator(&combined, &params).unwrap();
        let rhs = apply_generator(&p, &params).unwrap().combine(alpha, &apply_generator(&q, &params).unwrap(), beta);
        prop_assert!(lhs.l1_distance(&rhs) <= 1e-13 * (p.l1_norm() + q.l1_norm()) * 4.0);
    }

    #[test]
    fn steady_state_is_the_null_vector(n_ex in 1.0..20.0f64, nu in 0.01..0.5f64, phi in 0.1..10.0f64) {
        let params = MaserParams::new(n_ex, nu, phi, 0.4);
        let ss = steady_state(&params, &Numerics::default()).unwrap();
        prop_assert!(ss.residual < 1e-10);
        let reference = null_vector(&params, ss.n_max());
        let distance: f64 = ss.dist.weights().iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(distance < 1e-9, "L1 distance {}", distance);
    }
}

#[test]
fn thermal_limit_is_geometric() {
    let params = MaserParams::new(7.0, 0.3, 0.0, 0.4);
    let ss = steady_state(&params, &Numerics::default()).unwrap();
    let x: f64 = 0.3 / 1.3;
    for (n, w) in ss.dist.weights().iter().enumerate() {
        let expected = (1.0 - x) * x.powi(n as i32);
        assert!((w - expected).abs() <= 1e-13, "n = {n}: {w} vs {expected}");
    }
}

#[test]
fn vacuum_trapping_state() {
    let params = MaserParams::new(7.0, 0.0, PI, 0.4);
    let ss = steady_state(&params, &Numerics::default()).unwrap();
    // sin²(π) is of order 1e-32 in floating point.
    assert!((ss.dist.weights()[0] - 1.0).abs() < 1e-15);
    assert!(ss.dist.weights()[1..].iter().all(|w| *w < 1e-28));
}

#[test]
fn emission_from_fully_rotated_atom() {
    let params = MaserParams::new(7.0, 0.054, PI / 2.0, 0.4);
    let vacuum = PhotonDistribution::fock(0, 8);
    assert!((apply_pass_deexcited(&vacuum, &params).unwrap().weights()[1] - 1.0).abs() < 1e-15);
    let detected = ChannelSplit::new(Channel::B, params).apply_jump(&vacuum);
    assert!((detected.weights()[1] - 0.4).abs() < 1e-15);
}

#[test]
fn escape_rate_of_steady_state_equals_detection_rate() {
    let params = MaserParams::new(7.0, 0.054, PI / 2.0, 1.0);
    let ss = steady_state(&params, &Numerics::default()).unwrap();
    let split = ChannelSplit::new(Channel::AB, params);
    let escape: f64 = split.apply_no_detection(&ss.dist).unwrap().total();
    let n_max = ss.n_max();
    let rho = to_vec(ss.dist.weights());
    let detected = (jump(&params, n_max, Channel::AB) * rho).sum();
    assert!((escape + detected).abs() < 1e-12);
    // Every atom is seen with perfect detectors.
    assert!((detected - 1.0).abs() < 1e-12);
}

#[test]
fn trapping_angle_enumeration() {
    let list = trapping_angles(4, 10.0);
    for w in list.windows(2) {
        assert!(w[0].phi <= w[1].phi);
    }
    for n0 in 0..=4usize {
        let base = PI / ((n0 + 1) as f64).sqrt();
        let count = list.iter().filter(|t| t.n0 == n0).count();
        assert_eq!(count, (10.0 / base).floor() as usize, "n0 = {n0}");
        for q in 1..=count {
            let phi = q as f64 * base;
            assert!(list.iter().any(|t| t.n0 == n0 && t.q == q && (t.phi - phi).abs() < 1e-15));
        }
    }
    assert!((list[0].phi - PI / 5f64.sqrt()).abs() < 1e-15);
}

fn reference_point() -> (MaserParams, PhotonDistribution) {
    let params = MaserParams::new(7.0, 0.054, 1.0, 1.0);
    let ss = steady_state(&params, &Numerics::default()).unwrap();
    (params, ss.dist)
}

#[test]
fn no_detection_evolution_matches_matrix_exponential() {
    let (params, rho) = reference_point();
    let params = params.with_eta(0.4);
    let n_max = rho.n_max();
    for ch in [Channel::A, Channel::B, Channel::AB] {
        let out = evolve_no_detection(&ChannelSplit::new(ch, params), &rho, 2.5, 1e-12).unwrap();
        let reference = expm_apply(&no_detection(&params, n_max, ch), 2.5, &to_vec(rho.weights()));
        let diff: f64 = out.state.weights().iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 1e-9, "{}: {diff}", ch.name());
        assert!((out.u_final - reference.sum()).abs() < 1e-10);
    }
}

#[test]
fn exclusion_probability_is_monotone() {
    let (params, rho) = reference_point();
    let prop = Propagator::new(params.with_eta(0.4), rho.n_max(), Numerics::default()).unwrap();
    let times: Vec<f64> = (1..=40).map(|k| 0.25 * k as f64).collect();
    let u = prop.exclusion_curve(Channel::AB, &rho, &times).unwrap();
    assert!(u[0] <= 1.0 + 1e-9);
    for w in u.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn evolution_semigroup() {
    let (params, rho) = reference_point();
    let prop = Propagator::new(params.with_eta(0.4), rho.n_max(), Numerics::default()).unwrap();
    let whole = prop.evolve_no_detection(Channel::B, &rho, 3.0).unwrap().state;
    let half = prop.evolve_no_detection(Channel::B, &rho, 1.2).unwrap().state;
    let split = prop.evolve_no_detection(Channel::B, &half, 1.8).unwrap().state;
    assert!(whole.l1_distance(&split) < 10.0 * Numerics::default().ode_tol);
}

#[test]
fn unconditioned_evolution_relaxes_to_steady_state() {
    let (params, rho) = reference_point();
    let n_max = rho.n_max();
    let start = PhotonDistribution::fock(6, n_max);
    let early = propagate_unconditioned(&params, &start, 3.0, 1e-12).unwrap();
    assert!((early.total() - 1.0).abs() < 1e-10);
    let late = propagate_unconditioned(&params, &start, 400.0, 1e-12).unwrap();
    let reference = null_vector(&params, n_max);
    let distance: f64 = late.weights().iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).sum();
    assert!(distance < 1e-8, "{distance}");
    let still = propagate_unconditioned(&params, &rho, 10.0, 1e-12).unwrap();
    assert!(still.l1_distance(&rho) < 1e-10);
}

#[test]
fn blind_detectors_leave_steady_state_alone() {
    let (params, rho) = reference_point();
    let blind = params.with_eta(0.0);
    let out = evolve_no_detection(&ChannelSplit::new(Channel::AB, blind), &rho, 5.0, 1e-12).unwrap();
    assert!(out.state.l1_distance(&rho) < 1e-10);
    let zero = evolve_no_detection(&ChannelSplit::new(Channel::A, params), &rho, 0.0, 1e-12).unwrap();
    assert_eq!(zero.state, rho);
}

#[test]
fn closed_form_matches_explicit_truncation() {
    let params = MaserParams::new(10.0, 0.054, 2.3, 0.4);
    let ss = steady_state(&params, &Numerics::default()).unwrap();
    let wider = steady_state_at(&params, ss.n_max() + 40).unwrap();
    let diff = max_diff(ss.dist.weights(), &wider.dist.weights()[..ss.dist.dim()]);
    assert!(diff < 1e-12, "{diff}");
}
