//! Detection statistics at one parameter point: rates, inversion,
//! sequence probabilities, switch probability, runs of successive
//! detections and waiting times.
//!
//! Internally every trace is a fraction of the injection rate `r` and every
//! duration is in `rt`; reported rates and times use the unit selected by
//! [`MaserParams::time_unit`].

use crate::error::{MaserError, Result};
use crate::fock::{Channel, MaserParams, PhotonDistribution, TimeUnit};
use crate::numerics::{Method, Numerics};
use crate::propagator::{LeftOperator, Propagator};
use crate::steady::{steady_state, SteadyState};

/// Numerical settings a value was produced with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub method: Method,
    pub n_max: usize,
    pub ode_tol: f64,
    pub cross_check_tol: f64,
    pub time_unit: TimeUnit,
}

/// A named observable with its uncorrelated baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub name: &'static str,
    pub raw: f64,
    pub uncorrelated: f64,
    /// `raw / uncorrelated`; NaN when the baseline vanishes.
    pub normalized: f64,
    pub provenance: Provenance,
}

impl StatReport {
    fn new(name: &'static str, raw: f64, uncorrelated: f64, provenance: Provenance) -> Self {
        let normalized = if uncorrelated != 0.0 { raw / uncorrelated } else { f64::NAN };
        Self {
            name,
            raw,
            uncorrelated,
            normalized,
            provenance,
        }
    }
}

/// Detection rates as fractions of the injection rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePair {
    /// `tr{X_A⁺ ρ^ss}`.
    pub a: f64,
    /// `tr{X_B⁺ ρ^ss}`.
    pub b: f64,
    n_ex: f64,
    unit: TimeUnit,
}

impl RatePair {
    pub fn r_a(&self) -> f64 {
        self.unit.rate_from_fraction(self.a, self.n_ex)
    }

    pub fn r_b(&self) -> f64 {
        self.unit.rate_from_fraction(self.b, self.n_ex)
    }

    pub fn total(&self) -> f64 {
        self.a + self.b
    }

    pub fn p_a(&self) -> Result<f64> {
        Ok(self.a / self.nonzero_total()?)
    }

    pub fn p_b(&self) -> Result<f64> {
        Ok(self.b / self.nonzero_total()?)
    }

    fn nonzero_total(&self) -> Result<f64> {
        let total = self.total();
        if total > 0.0 {
            Ok(total)
        } else {
            Err(MaserError::DegenerateChannel("no atom is ever detected".into()))
        }
    }
}

/// Atomic inversion per injected atom and per detected atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    /// `(r_B - r_A)/r`.
    pub per_atom: f64,
    /// `P[B] - P[A]`.
    pub per_detection: f64,
}

/// Switch probability `Γ` from both operator orderings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switch {
    pub gamma: f64,
    pub a_then_b: f64,
    pub b_then_a: f64,
}

impl Switch {
    pub fn ordering_difference(&self) -> f64 {
        (self.a_then_b - self.b_then_a).abs()
    }
}

/// Probability of a detection sequence, first detection leftmost.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceProb {
    pub sequence: String,
    pub value: f64,
}

/// Mean run lengths of successive detections.
#[derive(Debug, Clone, PartialEq)]
pub struct Successive {
    pub n_a: StatReport,
    pub n_b: StatReport,
    pub n_mean: StatReport,
}

/// Waiting-time statistics between detections.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingTimes {
    pub t_aa: StatReport,
    pub t_bb: StatReport,
    pub t2_aa: StatReport,
    pub t2_bb: StatReport,
    pub t_ab: StatReport,
    pub t_ba: StatReport,
}

impl WaitingTimes {
    pub fn reports(&self) -> [&StatReport; 6] {
        [&self.t_aa, &self.t_bb, &self.t2_aa, &self.t2_bb, &self.t_ab, &self.t_ba]
    }
}

pub(crate) fn parse_sequence(seq: &str, max_len: usize) -> Result<Vec<Channel>> {
    if seq.is_empty() || seq.len() > max_len {
        return Err(MaserError::InvalidParams(format!(
            "sequence `{seq}` must have between 1 and {max_len} symbols"
        )));
    }
    seq.chars()
        .map(|c| match c {
            'A' | 'a' => Ok(Channel::A),
            'B' | 'b' => Ok(Channel::B),
            _ => Err(MaserError::InvalidParams(format!("sequence `{seq}` contains `{c}`"))),
        })
        .collect()
}

/// All sequences of length `n` over `{A, B}` in lexicographic order.
pub fn all_sequences(n: usize) -> Vec<String> {
    (0..1usize << n)
        .map(|bits| {
            (0..n)
                .map(|i| if bits >> (n - 1 - i) & 1 == 0 { 'A' } else { 'B' })
                .collect()
        })
        .collect()
}

/// A parameter point with its certified steady state and factorized
/// resolvents.
#[derive(Debug, Clone)]
pub struct Model {
    steady: SteadyState,
    prop: Propagator,
}

impl Model {
    pub fn new(params: MaserParams, numerics: Numerics) -> Result<Self> {
        let steady = steady_state(&params, &numerics)?;
        Self::with_steady_state(steady, numerics)
    }

    /// Builds a model around a given steady state (not re-certified).
    pub fn with_steady_state(steady: SteadyState, numerics: Numerics) -> Result<Self> {
        let prop = Propagator::new(steady.params, steady.n_max(), numerics)?;
        Ok(Self { steady, prop })
    }

    pub fn params(&self) -> &MaserParams {
        &self.steady.params
    }

    pub fn numerics(&self) -> &Numerics {
        self.prop.numerics()
    }

    pub fn steady(&self) -> &SteadyState {
        &self.steady
    }

    pub fn rho(&self) -> &PhotonDistribution {
        &self.steady.dist
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn provenance(&self) -> Provenance {
        let n = self.numerics();
        Provenance {
            method: n.method,
            n_max: self.prop.n_max(),
            ode_tol: n.ode_tol,
            cross_check_tol: n.cross_check_tol,
            time_unit: self.params().time_unit,
        }
    }

    fn time(&self, tau: f64) -> f64 {
        self.params().time_unit.from_injection_time(tau, self.params().n_ex)
    }

    /// `tr{X⁺_channel ρ^ss}`.
    pub fn jump_fraction(&self, channel: Channel) -> f64 {
        self.prop.apply_jump(channel, self.rho()).total()
    }

    /// `tr{left (-1/X⁻_channel)^power seed}` with the configured method.
    pub fn trace(&self, left: LeftOperator, channel: Channel, power: u32, seed: &PhotonDistribution) -> Result<f64> {
        self.prop.trace(left, channel, power, seed, self.numerics().method)
    }

    pub fn detection_rates(&self) -> RatePair {
        RatePair {
            a: self.jump_fraction(Channel::A),
            b: self.jump_fraction(Channel::B),
            n_ex: self.params().n_ex,
            unit: self.params().time_unit,
        }
    }

    pub fn atomic_inversion(&self) -> Result<Inversion> {
        let rates = self.detection_rates();
        Ok(Inversion {
            per_atom: rates.b - rates.a,
            per_detection: rates.p_b()? - rates.p_a()?,
        })
    }

    pub fn gamma_switch(&self) -> Result<Switch> {
        let xa = self.prop.apply_jump(Channel::A, self.rho());
        let xb = self.prop.apply_jump(Channel::B, self.rho());
        let a_then_b = self.trace(LeftOperator::JumpB, Channel::AB, 1, &xa)?;
        let b_then_a = self.trace(LeftOperator::JumpA, Channel::AB, 1, &xb)?;
        Ok(Switch {
            gamma: 0.5 * (a_then_b + b_then_a),
            a_then_b,
            b_then_a,
        })
    }

    /// `tr{X⁺_{x_n} (-1/X_AB⁻) ⋯ X⁺_{x_1} seed}`; intermediate resolvents
    /// use the direct solve, the last one the configured method.
    fn chain(&self, symbols: &[Channel], seed: &PhotonDistribution) -> Result<f64> {
        let (&last, rest) = symbols.split_last().expect("nonempty sequence");
        if rest.is_empty() {
            return Ok(dot_left(&self.prop, last, seed));
        }
        let mut v = seed.clone();
        for (i, &s) in rest.iter().enumerate() {
            if i > 0 {
                v = self.prop.solve_resolvent(Channel::AB, &v)?;
            }
            v = self.prop.apply_jump(s, &v);
        }
        self.trace(LeftOperator::jump(last), Channel::AB, 1, &v)
    }

    pub fn sequence_probability(&self, seq: &str) -> Result<SequenceProb> {
        let symbols = parse_sequence(seq, self.numerics().max_sequence_len)?;
        let total = self.detection_rates().nonzero_total()?;
        Ok(SequenceProb {
            sequence: seq.to_ascii_uppercase(),
            value: self.chain(&symbols, self.rho())? / total,
        })
    }

    /// Probability that the detections following `given` realize `then`,
    /// conditioned on the last detection of `given`. For a single-symbol
    /// `given` the seed is `X⁺ρ^ss / tr{X⁺ρ^ss}`.
    pub fn conditional_probability(&self, given: &str, then: &str) -> Result<f64> {
        let max = self.numerics().max_sequence_len;
        let mut symbols = parse_sequence(given, max)?;
        let tail = parse_sequence(then, max)?;
        let denom = self.chain(&symbols, self.rho())?;
        if denom <= 0.0 {
            return Err(MaserError::DegenerateChannel(format!("sequence `{given}` never occurs")));
        }
        symbols.extend(tail);
        if symbols.len() > max {
            return Err(MaserError::InvalidParams(format!("combined sequence longer than {max}")));
        }
        Ok(self.chain(&symbols, self.rho())? / denom)
    }

    pub fn mean_successive(&self) -> Result<Successive> {
        let rates = self.detection_rates();
        let (p_a, p_b) = (rates.p_a()?, rates.p_b()?);
        let gamma = self.gamma_switch()?.gamma;
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(MaserError::DegenerateChannel("no switches between A and B detections".into()));
        }
        let prov = self.provenance();
        Ok(Successive {
            n_a: StatReport::new("n_a", rates.a / gamma, 1.0 / p_b, prov),
            n_b: StatReport::new("n_b", rates.b / gamma, 1.0 / p_a, prov),
            n_mean: StatReport::new("n_mean", rates.total() / (2.0 * gamma), 1.0 / (2.0 * p_a * p_b), prov),
        })
    }

    fn require_rate(&self, channel: Channel, fraction: f64) -> Result<()> {
        if fraction > 0.0 {
            Ok(())
        } else {
            Err(MaserError::DegenerateChannel(format!(
                "channel {} is never detected",
                channel.name()
            )))
        }
    }

    /// Mean time from a `from` detection to the next `to` detection, in `rt`:
    /// `(1/x_from) tr{X⁺_to (-1/X⁻_to)² X⁺_from ρ^ss}`.
    pub fn mean_waiting_injection(&self, from: Channel, to: Channel) -> Result<f64> {
        let x_from = self.jump_fraction(from);
        self.require_rate(from, x_from)?;
        self.require_rate(to, self.jump_fraction(to))?;
        let seed = self.prop.apply_jump(from, self.rho());
        Ok(self.trace(LeftOperator::jump(to), to, 2, &seed)? / x_from)
    }

    /// Second moment of the time between successive detections on one
    /// channel, in `(rt)²`: `(2/x) tr{X⁺ (-1/X⁻)³ X⁺ ρ^ss}`.
    pub fn second_moment_injection(&self, channel: Channel) -> Result<f64> {
        let x = self.jump_fraction(channel);
        self.require_rate(channel, x)?;
        let seed = self.prop.apply_jump(channel, self.rho());
        Ok(2.0 * self.trace(LeftOperator::jump(channel), channel, 3, &seed)? / x)
    }

    pub fn waiting_times(&self) -> Result<WaitingTimes> {
        let (a, b) = (self.jump_fraction(Channel::A), self.jump_fraction(Channel::B));
        let prov = self.provenance();
        let t = |tau: f64| self.time(tau);
        let t2 = |tau2: f64| self.time(self.time(tau2));
        let first = |name, from, to, to_rate: f64| -> Result<StatReport> {
            Ok(StatReport::new(name, t(self.mean_waiting_injection(from, to)?), t(1.0 / to_rate), prov))
        };
        let second = |name, ch, rate: f64| -> Result<StatReport> {
            Ok(StatReport::new(name, t2(self.second_moment_injection(ch)?), t2(2.0 / (rate * rate)), prov))
        };
        Ok(WaitingTimes {
            t_aa: first("t_aa", Channel::A, Channel::A, a)?,
            t_bb: first("t_bb", Channel::B, Channel::B, b)?,
            t2_aa: second("t2_aa", Channel::A, a)?,
            t2_bb: second("t2_bb", Channel::B, b)?,
            t_ab: first("t_ab", Channel::A, Channel::B, b)?,
            t_ba: first("t_ba", Channel::B, Channel::A, a)?,
        })
    }
}

fn dot_left(prop: &Propagator, channel: Channel, v: &PhotonDistribution) -> f64 {
    prop.apply_jump(channel, v).total()
}
