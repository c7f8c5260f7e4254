//! Conditioned and unconditioned evolution, and resolvent traces
//! `tr{O₁ (-1/X⁻)^k seed}`.
//!
//! Two independent routes evaluate a resolvent trace:
//! - time integration of `ρ̇ = X⁻ρ` from the seed while accumulating
//!   `∫ τ^{k-1}/(k-1)! tr{O₁ ρ(τ)} dτ` out to an adaptively doubled horizon;
//! - `k` successive tridiagonal solves with `-X⁻`.

use crate::banded::{Tridiagonal, TridiagonalLu};
use crate::error::{MaserError, Result};
use crate::fock::{Channel, ChannelSplit, MaserParams, Operators, PhotonDistribution};
use crate::numerics::{Method, Numerics};
use crate::ode::{Integrator, Stepping};

/// Absolute tolerance of the conditioned state relative to the seed norm,
/// in units of the integrator tolerance.
const TAIL_ATOL_FACTOR: f64 = 1e-8;

/// Resolvent powers supported by [`TraceQuery`].
pub const MAX_RESOLVENT_POWER: u32 = 3;

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub state: PhotonDistribution,
    /// Exclusion probability `Σ state` when the initial state is normalized.
    pub u_final: f64,
    pub steps: usize,
    pub est_error: f64,
}

/// Operator applied before taking the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftOperator {
    JumpA,
    JumpB,
    JumpAB,
    /// Plain trace.
    Trace,
}

impl LeftOperator {
    pub fn jump(channel: Channel) -> Self {
        match channel {
            Channel::A => LeftOperator::JumpA,
            Channel::B => LeftOperator::JumpB,
            Channel::AB => LeftOperator::JumpAB,
        }
    }
}

/// `tr{left · (-1/X⁻_channel)^power · seed}`.
#[derive(Debug, Clone)]
pub struct TraceQuery {
    pub left: LeftOperator,
    pub resolvent_channel: ChannelSplit,
    pub resolvent_power: u32,
    pub seed: PhotonDistribution,
    pub method: Method,
}

/// Where time integration of trace functionals stops.
#[derive(Debug, Clone, Copy)]
pub enum Horizon<'a> {
    /// Adaptive horizon doubling until the integrals converge.
    Infinite,
    /// Report the integrals at each of these (increasing) times.
    Checkpoints(&'a [f64]),
}

/// Propagation engine for one parameter point and truncation. Holds the
/// operator matrices and the factorized `-X⁻` of every channel.
#[derive(Debug, Clone)]
pub struct Propagator {
    ops: Operators,
    numerics: Numerics,
    factors: [std::result::Result<TridiagonalLu, MaserError>; 3],
}

fn channel_index(channel: Channel) -> usize {
    match channel {
        Channel::A => 0,
        Channel::B => 1,
        Channel::AB => 2,
    }
}

impl Propagator {
    pub fn new(params: MaserParams, n_max: usize, numerics: Numerics) -> Result<Self> {
        params.validate()?;
        let ops = Operators::new(params, n_max);
        let factors = [Channel::A, Channel::B, Channel::AB].map(|ch| {
            let jump = ops.jump(ch);
            if jump.max_abs() == 0.0 {
                return Err(MaserError::SingularResolvent(format!(
                    "channel {} has no detections; X⁻ = X is not invertible",
                    ch.name()
                )));
            }
            ops.no_detection(ch).scaled(-1.0).factorize()
        });
        Ok(Self { ops, numerics, factors })
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn params(&self) -> &MaserParams {
        &self.ops.params
    }

    pub fn numerics(&self) -> &Numerics {
        &self.numerics
    }

    pub fn n_max(&self) -> usize {
        self.ops.n_max()
    }

    /// Row vector `w` with `tr{O₁ v} = w · v`.
    pub fn left_weights(&self, left: LeftOperator) -> Vec<f64> {
        match left {
            LeftOperator::JumpA => self.ops.jump(Channel::A).column_sums(),
            LeftOperator::JumpB => self.ops.jump(Channel::B).column_sums(),
            LeftOperator::JumpAB => self.ops.jump(Channel::AB).column_sums(),
            LeftOperator::Trace => vec![1.0; self.n_max() + 1],
        }
    }

    pub fn apply_jump(&self, channel: Channel, p: &PhotonDistribution) -> PhotonDistribution {
        PhotonDistribution::from_weights(self.ops.jump(channel).mul_vec(p.weights()))
    }

    /// `(-X⁻)^{-1} v`.
    pub fn solve_resolvent(&self, channel: Channel, v: &PhotonDistribution) -> Result<PhotonDistribution> {
        let lu = self.factors[channel_index(channel)].as_ref().map_err(Clone::clone)?;
        Ok(PhotonDistribution::from_weights(lu.solve(v.weights())))
    }

    fn stepping(&self, seed_norm: f64, accumulator_scale: &[f64]) -> Stepping {
        match self.numerics.fixed_step {
            Some(h) => Stepping::Fixed { h },
            None => {
                let tol = self.numerics.ode_tol;
                let dim = self.n_max() + 1;
                let atol = std::iter::repeat_n(tol * seed_norm.max(f64::MIN_POSITIVE), dim)
                    .chain(accumulator_scale.iter().map(|s| tol * s.max(f64::MIN_POSITIVE)))
                    .collect();
                Stepping::Adaptive { rtol: tol, atol }
            }
        }
    }

    fn evolve_matrix(&self, generator: &Tridiagonal, p0: &PhotonDistribution, duration: f64) -> Result<EvolutionResult> {
        assert!(duration >= 0.0, "duration must be nonnegative");
        let dim = p0.dim();
        assert_eq!(dim, generator.dim(), "state and operator truncations differ");
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| generator.mul_vec_into(y, dy);
        let mut ig = Integrator::new(rhs, 0.0, p0.weights().to_vec(), self.stepping(p0.l1_norm(), &[]));
        ig.advance_to(duration)?;
        let (steps, est_error) = (ig.steps(), ig.est_error());
        let state = PhotonDistribution::from_weights(ig.into_state());
        Ok(EvolutionResult {
            u_final: state.total(),
            state,
            steps,
            est_error,
        })
    }

    /// `e^{X⁻ τ} p0` for the given channel.
    pub fn evolve_no_detection(&self, channel: Channel, p0: &PhotonDistribution, duration: f64) -> Result<EvolutionResult> {
        self.evolve_matrix(&self.ops.no_detection(channel), p0, duration)
    }

    /// `e^{X τ} p0`.
    pub fn propagate_unconditioned(&self, p0: &PhotonDistribution, duration: f64) -> Result<PhotonDistribution> {
        Ok(self.evolve_matrix(&self.ops.generator, p0, duration)?.state)
    }

    /// Exclusion probability `u(τ)` at each checkpoint.
    pub fn exclusion_curve(&self, channel: Channel, p0: &PhotonDistribution, times: &[f64]) -> Result<Vec<f64>> {
        let generator = self.ops.no_detection(channel);
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| generator.mul_vec_into(y, dy);
        let mut ig = Integrator::new(rhs, 0.0, p0.weights().to_vec(), self.stepping(p0.l1_norm(), &[]));
        times
            .iter()
            .map(|&t| {
                ig.advance_to(t)?;
                Ok(ig.y().iter().sum())
            })
            .collect()
    }

    /// Moments `∫ τ^m/m! · (left · e^{G τ} seed) dτ`, `m = 0..=max_moment`,
    /// integrated from zero to each checkpoint or to infinity.
    pub fn moment_integrals(
        &self,
        generator: &Tridiagonal,
        seed: &PhotonDistribution,
        left: &[f64],
        max_moment: usize,
        horizon: Horizon<'_>,
    ) -> Result<Vec<Vec<f64>>> {
        let dim = seed.dim();
        let moments = max_moment + 1;
        let factorials: Vec<f64> = (0..moments)
            .scan(1.0, |f, m| {
                if m > 0 {
                    *f *= m as f64;
                }
                Some(*f)
            })
            .collect();
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            generator.mul_vec_into(&y[..dim], &mut dy[..dim]);
            let f: f64 = left.iter().zip(&y[..dim]).map(|(w, p)| w * p).sum();
            let mut tp = 1.0;
            for m in 0..moments {
                dy[dim + m] = tp / factorials[m] * f;
                tp *= t;
            }
        };
        let seed_norm = seed.l1_norm();
        let left_max = left.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
        let floor = (seed_norm * left_max).max(f64::MIN_POSITIVE);
        let mut y0 = seed.weights().to_vec();
        y0.extend(std::iter::repeat_n(0.0, moments));
        // Once the step size is stability-limited the state stalls near its
        // absolute tolerance, so that tolerance has to sit well below the
        // tail bound checked further down.
        let state_scale = seed_norm * TAIL_ATOL_FACTOR;
        let mut ig = Integrator::new(rhs, 0.0, y0, self.stepping(state_scale, &vec![floor; moments]));

        match horizon {
            Horizon::Checkpoints(times) => times
                .iter()
                .map(|&t| {
                    ig.advance_to(t)?;
                    Ok(ig.y()[dim..].to_vec())
                })
                .collect(),
            Horizon::Infinite => {
                let tol = self.numerics.ode_tol;
                // Below this the state is indistinguishable from zero at the
                // integrator's resolution (or, for trace-preserving
                // generators, from the round-off left in a traceless seed)
                // and its measured decay is noise.
                let noise = dim as f64 * (tol * state_scale).max(f64::EPSILON * seed_norm);
                let mut horizon = self.numerics.initial_horizon;
                let mut previous: Option<(f64, f64, Vec<f64>)> = None;
                loop {
                    ig.advance_to(horizon)?;
                    let current = ig.y()[dim..].to_vec();
                    let state_norm: f64 = ig.y()[..dim].iter().map(|x| x.abs()).sum();
                    if let Some((prev_horizon, prev_norm, prev)) = &previous {
                        let settled = current
                            .iter()
                            .zip(prev)
                            .all(|(c, p)| (c - p).abs() <= tol * (c.abs() + floor));
                        // Decay time of the state, measured over the last
                        // doubling and capped by the horizon itself.
                        let rate = (prev_norm / state_norm).ln() / (horizon - prev_horizon);
                        let decay_time = if rate > 0.0 { (1.0 / rate).min(horizon) } else { horizon };
                        let tail_ok = state_norm <= noise || current.iter().enumerate().all(|(m, c)| {
                            let tail: f64 = (0..=m)
                                .map(|j| horizon.powi((m - j) as i32) / factorials[m - j] * decay_time.powi(j as i32 + 1))
                                .sum();
                            left_max * state_norm * tail <= tol * (c.abs() + floor)
                        });
                        if settled && tail_ok {
                            return Ok(vec![current]);
                        }
                    }
                    previous = Some((horizon, state_norm, current));
                    horizon *= 2.0;
                    if horizon > self.numerics.max_horizon {
                        return Err(MaserError::NonDecayingTail { horizon });
                    }
                }
            }
        }
    }

    fn check_power(power: u32) {
        assert!(
            (1..=MAX_RESOLVENT_POWER).contains(&power),
            "resolvent power must lie in 1..={MAX_RESOLVENT_POWER}"
        );
    }

    /// `tr{left (-1/X⁻)^power seed}` by successive solves.
    pub fn trace_direct(&self, left: LeftOperator, channel: Channel, power: u32, seed: &PhotonDistribution) -> Result<f64> {
        Self::check_power(power);
        let mut v = seed.clone();
        for _ in 0..power {
            v = self.solve_resolvent(channel, &v)?;
        }
        Ok(dot(&self.left_weights(left), v.weights()))
    }

    /// `tr{left (-1/X⁻)^power seed}` by time integration.
    pub fn trace_time_integration(&self, left: LeftOperator, channel: Channel, power: u32, seed: &PhotonDistribution) -> Result<f64> {
        Self::check_power(power);
        if self.ops.jump(channel).max_abs() == 0.0 {
            return Err(MaserError::SingularResolvent(format!(
                "channel {} has no detections; the conditioned state never decays",
                channel.name()
            )));
        }
        let generator = self.ops.no_detection(channel);
        let left_w = self.left_weights(left);
        let k = (power - 1) as usize;
        let integrals = self.moment_integrals(&generator, seed, &left_w, k, Horizon::Infinite)?;
        Ok(integrals[0][k])
    }

    pub fn trace(&self, left: LeftOperator, channel: Channel, power: u32, seed: &PhotonDistribution, method: Method) -> Result<f64> {
        match method {
            Method::DirectSolve => self.trace_direct(left, channel, power, seed),
            Method::TimeIntegration => self.trace_time_integration(left, channel, power, seed),
            Method::Both => {
                let timed = self.trace_time_integration(left, channel, power, seed)?;
                let direct = self.trace_direct(left, channel, power, seed)?;
                let scale = direct.abs().max(timed.abs()).max(1e-300);
                let relative = (timed - direct).abs() / scale;
                if relative > self.numerics.cross_check_tol {
                    return Err(MaserError::CrossCheckMismatch {
                        time_integration: timed,
                        direct,
                        relative,
                    });
                }
                Ok(timed)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn stepping_for(tol: f64, numerics: &Numerics) -> Numerics {
    Numerics {
        ode_tol: tol,
        ..*numerics
    }
}

/// `e^{X⁻ τ} p0` with local error control at `tol`.
pub fn evolve_no_detection(split: &ChannelSplit, p0: &PhotonDistribution, duration: f64, tol: f64) -> Result<EvolutionResult> {
    let numerics = stepping_for(tol, &Numerics::default());
    let prop = Propagator::new(split.params, p0.n_max(), numerics)?;
    prop.evolve_no_detection(split.channel, p0, duration)
}

/// Trace-preserving evolution `e^{X τ} p0`.
pub fn propagate_unconditioned(params: &MaserParams, p0: &PhotonDistribution, duration: f64, tol: f64) -> Result<PhotonDistribution> {
    let numerics = stepping_for(tol, &Numerics::default());
    Propagator::new(*params, p0.n_max(), numerics)?.propagate_unconditioned(p0, duration)
}

/// Evaluates a [`TraceQuery`] at the truncation of its seed.
pub fn resolvent_trace(query: &TraceQuery, numerics: &Numerics) -> Result<f64> {
    let prop = Propagator::new(query.resolvent_channel.params, query.seed.n_max(), *numerics)?;
    prop.trace(
        query.left,
        query.resolvent_channel.channel,
        query.resolvent_power,
        &query.seed,
        query.method,
    )
}
