//! Self-check suite: trace identities, steady-state certification, the
//! waiting-time identity, ordering symmetries, scaling invariances,
//! agreement of the two resolvent routes and agreement with Monte-Carlo
//! records.

use std::fmt;

use crate::config::Config;
use crate::error::{MaserError, Result};
use crate::fano::Window;
use crate::fock::{apply_damping, apply_generator, Channel, ChannelSplit, MaserParams, PhotonDistribution};
use crate::numerics::Method;
use crate::propagator::LeftOperator;
use crate::statistics::{all_sequences, Model};
use crate::steady::{steady_state, steady_state_by_solve, SteadyState};
use crate::trajectory::{estimate, simulate, Observable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable at these parameters (a channel is never detected).
    Degenerate,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Discrepancy (or z-score for Monte-Carlo checks).
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    fn bound(&mut self, name: &str, measured: f64, tolerance: f64) {
        let status = if measured <= tolerance { Status::Pass } else { Status::Fail };
        self.checks.push(Check {
            name: name.into(),
            status,
            measured,
            tolerance,
            detail: String::new(),
        });
    }

    /// Records `value`'s discrepancy, or the error that prevented it.
    fn bound_result(&mut self, name: &str, value: Result<f64>, tolerance: f64) {
        match value {
            Ok(v) => self.bound(name, v, tolerance),
            Err(MaserError::DegenerateChannel(msg)) => self.degenerate(name, &msg),
            Err(e) => self.checks.push(Check {
                name: name.into(),
                status: Status::Fail,
                measured: f64::NAN,
                tolerance,
                detail: e.to_string(),
            }),
        }
    }

    fn degenerate(&mut self, name: &str, why: &str) {
        self.checks.push(Check {
            name: name.into(),
            status: Status::Degenerate,
            measured: f64::NAN,
            tolerance: f64::NAN,
            detail: why.into(),
        });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{:<10} {:<34} measured {:>10.3e}  tol {:>9.2e}", c.status.name(), c.name, c.measured, c.tolerance)?;
            if !c.detail.is_empty() {
                write!(f, "  ({})", c.detail)?;
            }
            writeln!(f)?;
        }
        write!(f, "{} checks, {} failed", self.checks.len(), self.failures())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Atoms per Monte-Carlo record; 0 skips the Monte-Carlo checks.
    pub mc_atoms: usize,
    pub seed: u64,
    /// Perturb the steady state before checking it (negative control).
    pub inject_fault: bool,
}

/// Relative change applied to one steady-state weight by fault injection.
const FAULT_SIZE: f64 = 1e-3;

fn perturbed(ss: &SteadyState) -> SteadyState {
    let mut w = ss.dist.weights().to_vec();
    let peak = (0..w.len()).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap_or(0);
    w[peak] *= 1.0 + FAULT_SIZE;
    let total: f64 = w.iter().sum();
    let dist = PhotonDistribution::from_weights(w.into_iter().map(|x| x / total).collect());
    let residual = apply_generator(&dist, &ss.params).map_or(f64::INFINITY, |r| r.l1_norm());
    SteadyState {
        dist,
        residual,
        params: ss.params,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn trace_identities(report: &mut Report, params: &MaserParams, rho: &PhotonDistribution) {
    // A deterministic, non-stationary probe next to the steady state.
    let probe = PhotonDistribution::from_weights(
        (0..rho.dim()).map(|n| rho.weights()[n] + 0.5 * (-(n as f64)).exp()).collect(),
    );
    let norm = probe.l1_norm();
    report.bound("trace of damping", apply_damping(&probe, params).total().abs() / norm, 1e-12);
    match apply_generator(&probe, params) {
        Ok(x) => report.bound("trace of generator", x.total().abs() / norm, 1e-12),
        Err(e) => report.bound_result("trace of generator", Err(e), 1e-12),
    }
    let split = ChannelSplit::new(Channel::AB, *params);
    let consistency = (|| -> Result<f64> {
        let x = apply_generator(&probe, params)?;
        let sum = split.apply_jump(&probe).combine(1.0, &split.apply_no_detection(&probe)?, 1.0);
        Ok(sum.l1_distance(&x) / x.max_abs().max(f64::MIN_POSITIVE))
    })();
    report.bound_result("jump + no-detection = generator", consistency, 1e-14 * probe.dim() as f64);
}

pub fn verify(config: &Config, options: &VerifyOptions) -> Result<Report> {
    config.validate()?;
    let params = config.resolved_params();
    let numerics = config.numerics;
    let mut report = Report::default();

    let mut ss = steady_state(&params, &numerics)?;
    if options.inject_fault {
        ss = perturbed(&ss);
    }
    report.bound("steady-state residual", ss.residual, numerics.steady_tol);
    let null = steady_state_by_solve(&params, ss.n_max()).map(|d| d.l1_distance(&ss.dist));
    report.bound_result("steady state vs null space", null, 1e-10);
    trace_identities(&mut report, &params, &ss.dist);

    let model = Model::with_steady_state(ss, numerics)?;
    let rates = model.detection_rates();
    if rates.total() <= 0.0 {
        for name in [
            "waiting-time identity A",
            "waiting-time identity B",
            "switch ordering symmetry",
            "P[AB] = P[BA]",
            "sequence sums",
            "distributive property",
            "inversion scaling",
            "Q_A(inf)/eta_A scaling",
            "Q_B(inf)/eta_B scaling",
            "resolvent routes",
            "Monte-Carlo agreement",
        ] {
            report.degenerate(name, "no atom is ever detected");
        }
        return Ok(report);
    }

    for (name, ch) in [("waiting-time identity A", Channel::A), ("waiting-time identity B", Channel::B)] {
        let value = model
            .mean_waiting_injection(ch, ch)
            .map(|t| (t * model.jump_fraction(ch) - 1.0).abs());
        report.bound_result(name, value, 1e-8);
    }
    report.bound_result("switch ordering symmetry", model.gamma_switch().map(|s| s.ordering_difference()), 1e-9);
    let pab = (|| -> Result<f64> {
        Ok((model.sequence_probability("AB")?.value - model.sequence_probability("BA")?.value).abs())
    })();
    report.bound_result("P[AB] = P[BA]", pab, 1e-9);

    let sequences = (|| -> Result<(f64, f64)> {
        let mut worst_sum = 0.0_f64;
        let mut worst_split = 0.0_f64;
        for n in 1..=3 {
            let mut total = 0.0;
            for seq in all_sequences(n) {
                let p = model.sequence_probability(&seq)?.value;
                total += p;
                let children = model.sequence_probability(&format!("{seq}A"))?.value
                    + model.sequence_probability(&format!("{seq}B"))?.value;
                worst_split = worst_split.max((children - p).abs());
            }
            worst_sum = worst_sum.max((total - 1.0).abs());
        }
        Ok((worst_sum, worst_split))
    })();
    report.bound_result("sequence sums", sequences.clone().map(|s| s.0), 1e-8);
    report.bound_result("distributive property", sequences.map(|s| s.1), 1e-8);

    let scaled = |factor: f64| {
        let mut p = params;
        p.eta_a *= factor;
        p.eta_b *= factor;
        Model::with_steady_state(
            SteadyState {
                params: p,
                ..model.steady().clone()
            },
            numerics,
        )
    };
    let inversion = (|| -> Result<f64> {
        let other = scaled(0.5)?;
        Ok((model.atomic_inversion()?.per_detection - other.atomic_inversion()?.per_detection).abs())
    })();
    report.bound_result("inversion scaling", inversion, 1e-12);
    for (name, ch) in [("Q_A(inf)/eta_A scaling", Channel::A), ("Q_B(inf)/eta_B scaling", Channel::B)] {
        let value = (|| -> Result<f64> {
            let other = scaled(0.5)?;
            let eta = |m: &Model| if ch == Channel::A { m.params().eta_a } else { m.params().eta_b };
            let q = model.fano_mandel(ch, Window::Infinite)? / eta(&model);
            let q_half = other.fano_mandel(ch, Window::Infinite)? / eta(&other);
            Ok(relative(q, q_half))
        })();
        report.bound_result(name, value, 1e-8);
    }

    let routes = (|| -> Result<f64> {
        let prop = model.propagator();
        let xa = prop.apply_jump(Channel::A, model.rho());
        let xb = prop.apply_jump(Channel::B, model.rho());
        let mut worst = 0.0_f64;
        for (left, ch, k, seed) in [
            (LeftOperator::JumpB, Channel::AB, 1, &xa),
            (LeftOperator::JumpA, Channel::A, 2, &xa),
            (LeftOperator::Trace, Channel::B, 1, &xa),
            (LeftOperator::JumpB, Channel::B, 3, &xb),
        ] {
            let timed = prop.trace(left, ch, k, seed, Method::TimeIntegration)?;
            let direct = prop.trace_direct(left, ch, k, seed)?;
            worst = worst.max(relative(timed, direct));
        }
        Ok(worst)
    })();
    report.bound_result("resolvent routes", routes, numerics.cross_check_tol);

    if options.mc_atoms > 0 {
        monte_carlo(&mut report, &model, options)?;
    }
    Ok(report)
}

/// Observables compared against Monte-Carlo records, with analytic values
/// in the model's time unit.
pub fn monte_carlo_targets(model: &Model) -> Result<Vec<(&'static str, f64)>> {
    let rates = model.detection_rates();
    let successive = model.mean_successive()?;
    let waiting = model.waiting_times()?;
    let one_decay_time = model.params().time_unit.from_injection_time(model.params().n_ex, model.params().n_ex);
    Ok(vec![
        ("P[A]", rates.p_a()?),
        ("n_a", successive.n_a.raw),
        ("n_b", successive.n_b.raw),
        ("t_ab", waiting.t_ab.raw),
        ("t_ba", waiting.t_ba.raw),
        ("I", rates.b - rates.a),
        ("Q_B(1/gamma)", model.fano_mandel(Channel::B, Window::Finite(one_decay_time))?),
    ])
}

fn monte_carlo(report: &mut Report, model: &Model, options: &VerifyOptions) -> Result<()> {
    let targets = match monte_carlo_targets(model) {
        Ok(t) => t,
        Err(MaserError::DegenerateChannel(msg)) => {
            report.degenerate("Monte-Carlo agreement", &msg);
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let record = simulate(model.params(), options.mc_atoms, options.seed)?;
    let p = model.params();
    let one_decay_time = p.time_unit.from_injection_time(p.n_ex, p.n_ex);
    for (name, value) in targets {
        let obs = match name {
            "Q_B(1/gamma)" => Observable::FanoB(one_decay_time),
            other => Observable::parse(other)?,
        };
        let check = format!("Monte-Carlo {name}");
        match estimate(&record, &obs) {
            Ok(e) => {
                report.bound(&check, e.z_score(value), 3.0);
                if let Some(c) = report.checks.last_mut() {
                    c.detail = format!("analytic {value:.6e}, sampled {:.6e} ± {:.2e}", e.value, e.std_error);
                }
            }
            Err(e) => report.bound_result(&check, Err(e), 3.0),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn options(mc_atoms: usize, inject_fault: bool) -> VerifyOptions {
        VerifyOptions {
            mc_atoms,
            seed: Config::default().seed,
            inject_fault,
        }
    }

    #[test]
    fn default_point_passes() {
        let report = verify(&Config::default(), &options(200_000, false)).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().all(|c| c.status == Status::Pass));
    }

    #[test]
    fn blind_detectors_are_degenerate() {
        let mut c = Config::default();
        c.set("eta", "0").unwrap();
        let report = verify(&c, &options(10_000, false)).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().any(|c| c.status == Status::Degenerate));
    }

    #[test]
    fn injected_fault_is_caught() {
        let report = verify(&Config::default(), &options(0, true)).unwrap();
        assert!(!report.passed());
        let residual = &report.checks[0];
        assert_eq!(residual.name, "steady-state residual");
        assert_eq!(residual.status, Status::Fail);
    }
}
