mod common;

use common::*;
use micromaser::fano::Window;
use micromaser::propagator::{Horizon, LeftOperator};
use micromaser::statistics::{all_sequences, Model};
use micromaser::{Channel, MaserParams, Method, Numerics, TimeUnit};
use nalgebra::{DMatrix, DVector};

fn model(phi: f64, eta: f64) -> Model {
    Model::new(MaserParams::new(7.0, 0.054, phi, eta), Numerics::default()).unwrap()
}

struct Dense {
    params: MaserParams,
    n_max: usize,
    rho: DVector<f64>,
}

impl Dense {
    fn of(m: &Model) -> Self {
        let params = *m.params();
        let n_max = m.steady().n_max();
        Self {
            params,
            n_max,
            rho: null_vector(&params, n_max),
        }
    }

    fn jump(&self, ch: Channel) -> DMatrix<f64> {
        jump(&self.params, self.n_max, ch)
    }

    fn x(&self, ch: Channel) -> f64 {
        (self.jump(ch) * &self.rho).sum()
    }

    fn trace(&self, left: Channel, ch: Channel, power: u32, seed: &DVector<f64>) -> f64 {
        resolvent_trace(&self.params, self.n_max, &self.jump(left), ch, power, seed)
    }

    fn sequence(&self, seq: &str) -> f64 {
        let lu = (-no_detection(&self.params, self.n_max, Channel::AB)).lu();
        let mut v = self.rho.clone();
        for (i, c) in seq.chars().enumerate() {
            if i > 0 {
                v = lu.solve(&v).unwrap();
            }
            let ch = if c == 'A' { Channel::A } else { Channel::B };
            v = self.jump(ch) * v;
        }
        v.sum() / self.x(Channel::AB)
    }

    /// `Q(T)` for a window `tau` in `rt` from the block exponential
    /// `exp([[X, 1, 0], [0, 0, 1], [0, 0, 0]] τ)`, whose top-right block is
    /// `∫_0^τ e^{Xs} (τ - s) ds`.
    fn fano(&self, ch: Channel, tau: f64) -> f64 {
        let d = self.n_max + 1;
        let x = generator(&self.params, self.n_max);
        let mut big = DMatrix::zeros(3 * d, 3 * d);
        big.view_mut((0, 0), (d, d)).copy_from(&x);
        for i in 0..d {
            big[(i, d + i)] = 1.0;
            big[(d + i, 2 * d + i)] = 1.0;
        }
        let e = (big * tau).exp();
        let kernel = e.view((0, 2 * d), (d, d)).into_owned();
        let seed = self.fano_seed(ch);
        2.0 / tau * (self.jump(ch) * (kernel * seed)).sum()
    }

    fn fano_seed(&self, ch: Channel) -> DVector<f64> {
        self.jump(ch) * &self.rho / self.x(ch) - &self.rho
    }

    /// `Q(∞)` from the pseudo-inverse of the generator; the traceless
    /// solution is the integral of `e^{Xs} M ρ^ss`.
    fn fano_infinite(&self, ch: Channel) -> f64 {
        let x = generator(&self.params, self.n_max);
        let pinv = x.pseudo_inverse(1e-12).unwrap();
        let y = -(pinv * self.fano_seed(ch));
        let y = &y - &self.rho * y.sum();
        2.0 * (self.jump(ch) * y).sum()
    }
}

#[test]
fn rates_at_zero_angle() {
    let m = Model::new(MaserParams::new(7.0, 0.0, 0.0, 0.7), Numerics::default()).unwrap();
    let r = m.detection_rates();
    assert_eq!(r.b, 0.0);
    assert!((r.a - 0.7).abs() < 1e-15);
    let inv = m.atomic_inversion().unwrap();
    assert!((inv.per_atom + 0.7).abs() < 1e-15);
    assert!((inv.per_detection + 1.0).abs() < 1e-15);
}

#[test]
fn rates_and_inversion() {
    for phi in [0.4, 1.0, 2.2, 4.44, 7.9] {
        let m = model(phi, 1.0);
        let d = Dense::of(&m);
        let r = m.detection_rates();
        assert!((r.total() - 1.0).abs() < 1e-12);
        assert!((r.p_a().unwrap() + r.p_b().unwrap() - 1.0).abs() < 1e-12);
        let inv = m.atomic_inversion().unwrap();
        let reference = d.x(Channel::B) - d.x(Channel::A);
        assert!((inv.per_atom - reference).abs() < 1e-12);
        assert!((inv.per_detection - reference).abs() < 1e-12);
        // Injection-time unit gives rates per atom.
        let per_atom = Model::new(
            MaserParams {
                time_unit: TimeUnit::AtomInjection,
                ..*m.params()
            },
            Numerics::default(),
        )
        .unwrap();
        assert!((per_atom.detection_rates().r_a() * 7.0 - r.r_a()).abs() < 1e-12);
    }
}

#[test]
fn switch_probability_matches_dense_reference() {
    for phi in [0.7, 1.0, 3.3, 6.0] {
        let m = model(phi, 0.4);
        let d = Dense::of(&m);
        let s = m.gamma_switch().unwrap();
        let reference = d.trace(Channel::B, Channel::AB, 1, &(d.jump(Channel::A) * &d.rho));
        assert!(rel(s.gamma, reference) < 1e-9, "phi {phi}: {} vs {reference}", s.gamma);
        assert!(s.ordering_difference() < 1e-9);
        let p_ab = m.sequence_probability("AB").unwrap().value;
        assert!(rel(p_ab, s.gamma / m.detection_rates().total()) < 1e-9);
    }
}

#[test]
fn sequences_match_dense_reference() {
    let m = model(1.0, 0.4);
    let d = Dense::of(&m);
    for n in 1..=4 {
        for seq in all_sequences(n) {
            let v = m.sequence_probability(&seq).unwrap().value;
            assert!(rel(v, d.sequence(&seq)) < 1e-9, "{seq}");
        }
    }
}

#[test]
fn conditional_probability_factorizes() {
    let m = model(2.0, 0.4);
    let p_a = m.detection_rates().p_a().unwrap();
    let p_ab = m.sequence_probability("AB").unwrap().value;
    let cond = m.conditional_probability("A", "B").unwrap();
    assert!(rel(p_ab, p_a * cond) < 1e-9);
    let p_aa = m.sequence_probability("AA").unwrap().value;
    assert!((p_aa + p_ab - p_a).abs() < 1e-9);
}

#[test]
fn run_lengths() {
    for phi in [1.0, 2.5, 5.1] {
        let m = model(phi, 0.4);
        let runs = m.mean_successive().unwrap();
        let p_ab = m.sequence_probability("AB").unwrap().value;
        assert!(rel(runs.n_mean.raw, 1.0 / (2.0 * p_ab)) < 1e-9);
        assert!((runs.n_a.normalized - runs.n_mean.normalized).abs() < 1e-9);
        assert!((runs.n_b.normalized - runs.n_mean.normalized).abs() < 1e-9);
        let r = m.detection_rates();
        let (pa, pb) = (r.p_a().unwrap(), r.p_b().unwrap());
        assert!(rel(runs.n_mean.normalized, pa * pb / p_ab) < 1e-9);
    }
}

#[test]
fn waiting_times_match_dense_reference() {
    for (phi, eta) in [(1.0, 1.0), (1.0, 0.4), (3.7, 0.1)] {
        let m = model(phi, eta);
        let d = Dense::of(&m);
        let w = m.waiting_times().unwrap();
        let n_ex = m.params().n_ex;
        let (a, b) = (d.x(Channel::A), d.x(Channel::B));
        let xa = d.jump(Channel::A) * &d.rho;
        let xb = d.jump(Channel::B) * &d.rho;

        // Mean waits on one channel equal the inverse rate.
        assert!((w.t_aa.normalized - 1.0).abs() < 1e-8);
        assert!((w.t_bb.normalized - 1.0).abs() < 1e-8);
        assert!(rel(w.t_aa.raw, 1.0 / (n_ex * a)) < 1e-8);

        let t_ab = d.trace(Channel::B, Channel::B, 2, &xa) / a;
        assert!(rel(w.t_ab.raw, t_ab / n_ex) < 1e-9);
        let t_ba = d.trace(Channel::A, Channel::A, 2, &xb) / b;
        assert!(rel(w.t_ba.raw, t_ba / n_ex) < 1e-9);

        // Normalized A→B wait in its reduced form.
        let identity = DMatrix::identity(d.n_max + 1, d.n_max + 1);
        let reduced = b / a * d.trace_with(&identity, Channel::B, 1, &xa);
        assert!(rel(w.t_ab.normalized, reduced) < 1e-9, "{} vs {}", w.t_ab.normalized, reduced);

        let t2 = 2.0 * d.trace(Channel::A, Channel::A, 3, &xa) / a;
        assert!(rel(w.t2_aa.raw, t2 / (n_ex * n_ex)) < 1e-9);
        // Reduced second moment: (2/x) tr{(-1/X⁻) ρ^ss}.
        let t2_reduced = 2.0 / a * d.trace_with(&identity, Channel::A, 1, &d.rho);
        assert!(rel(w.t2_aa.raw, t2_reduced / (n_ex * n_ex)) < 1e-9);
        assert!((w.t2_aa.uncorrelated - 2.0 / (n_ex * a).powi(2)).abs() < 1e-9 * w.t2_aa.uncorrelated);
    }
}

impl Dense {
    fn trace_with(&self, left: &DMatrix<f64>, ch: Channel, power: u32, seed: &DVector<f64>) -> f64 {
        resolvent_trace(&self.params, self.n_max, left, ch, power, seed)
    }
}

#[test]
fn fano_matches_dense_reference() {
    for phi in [1.0, 2.0, 4.6] {
        let m = model(phi, 0.4);
        let d = Dense::of(&m);
        for ch in [Channel::A, Channel::B] {
            let seed = m.fano_seed(ch).unwrap();
            assert!(seed.total().abs() < 1e-12);
            let inf = m.fano_mandel(ch, Window::Infinite).unwrap();
            assert!((inf - d.fano_infinite(ch)).abs() < 1e-8 * inf.abs().max(1e-3), "phi {phi} {}", ch.name());
            // One cavity lifetime is N_ex injection intervals.
            let q1 = m.fano_mandel(ch, Window::Finite(1.0)).unwrap();
            let reference = d.fano(ch, 7.0);
            assert!((q1 - reference).abs() < 1e-8 * reference.abs().max(1e-3), "phi {phi} {}: {q1} vs {reference}", ch.name());
        }
    }
}

#[test]
fn fano_routes_agree() {
    let both = Numerics {
        method: Method::Both,
        ..Numerics::default()
    };
    for phi in [0.5, 1.0, 3.14, 7.5] {
        let m = Model::new(MaserParams::new(7.0, 0.054, phi, 0.4), both).unwrap();
        m.fano_mandel(Channel::B, Window::Infinite).unwrap();
    }
}

#[test]
fn fano_scales_with_efficiency() {
    for phi in [1.0, 2.7, 6.0] {
        let q = |eta: f64, ch| model(phi, eta).fano_mandel(ch, Window::Infinite).unwrap() / eta;
        for ch in [Channel::A, Channel::B] {
            let (hi, lo) = (q(1.0, ch), q(0.4, ch));
            assert!((hi - lo).abs() < 1e-8 * hi.abs().max(1.0), "phi {phi}: {hi} vs {lo}");
        }
    }
}

/// Sub-Poissonian points: the counting correlations have decayed after a
/// few cavity lifetimes, while the window function `Q(T)` approaches its
/// limit only as `1/T` and sits well short of it at `T = 1/γ`.
#[test]
fn sub_poissonian_fano_convergence() {
    let mut checked = 0;
    for k in 1..=40 {
        let phi = 0.25 * k as f64;
        let m = model(phi, 0.4);
        let inf = m.fano_mandel(Channel::B, Window::Infinite).unwrap();
        if inf >= 0.0 {
            continue;
        }
        checked += 1;
        let q: Vec<f64> = m.fano_series(Channel::B, &[1.0, 10.0]).unwrap();
        println!("phi {phi:5.2}: Q_B(1/γ) {:+.5}  Q_B(∞) {inf:+.5}  ratio {:.3}", q[0], q[0] / inf);
        assert!(q[0] < 0.0);
        assert!((q[1] - inf).abs() < 0.1 * inf.abs(), "phi {phi}: {} vs {inf}", q[1]);

        // Unit-weight correlation integral up to four lifetimes.
        let p = m.propagator();
        let seed = m.fano_seed(Channel::B).unwrap();
        let w = p.left_weights(LeftOperator::JumpB);
        let settled = 2.0 * p.moment_integrals(&p.operators().generator, &seed, &w, 0, Horizon::Checkpoints(&[28.0])).unwrap()[0][0];
        assert!((settled - inf).abs() < 0.04 * inf.abs(), "phi {phi}: {settled} vs {inf}");
    }
    assert!(checked > 0);
}

#[test]
fn normalized_values_approach_one_as_detection_weakens() {
    for phi in [1.0, 3.0] {
        let dev = |eta: f64| {
            let m = model(phi, eta);
            let runs = m.mean_successive().unwrap();
            let w = m.waiting_times().unwrap();
            ((runs.n_mean.normalized - 1.0).abs(), (w.t_ab.normalized - 1.0).abs())
        };
        let (a, b, c) = (dev(0.4), dev(0.1), dev(0.01));
        assert!(a.0 > b.0 && b.0 > c.0, "phi {phi}: {a:?} {b:?} {c:?}");
        assert!(a.1 > b.1 && b.1 > c.1, "phi {phi}: {a:?} {b:?} {c:?}");
    }
}

/// Scans for antibunched runs (normalized mean run length below one)
/// near φ = 9 and reports where they occur.
#[test]
fn antibunching_scan() {
    let mut found = Vec::new();
    for k in 0..=200 {
        let phi = 8.0 + 0.01 * k as f64;
        let m = model(phi, 0.4);
        let v = m.mean_successive().unwrap().n_mean.normalized;
        if v < 1.0 {
            found.push((phi, v));
        }
    }
    match (found.first(), found.last()) {
        (Some(a), Some(b)) => println!(
            "normalized run length below one at {} of 201 points in [{:.2}, {:.2}], minimum {:.6}",
            found.len(),
            a.0,
            b.0,
            found.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
        ),
        _ => println!("no antibunching in [8, 10]"),
    }
}
