//! Diagonal cavity states on a truncated Fock space and the superoperators
//! acting on them.
//!
//! With every atom injected in the upper maser level the field stays
//! diagonal in the photon-number basis, so a state is a weight vector
//! `p_n`, `n = 0..=n_max`, and every superoperator is tridiagonal.
//! Time is the dimensionless injection time `rt` throughout.
//!
//! Boundary conventions at `n_max`:
//! - damping is reflecting (no thermal excitation out of `n_max`), so
//!   `Σ (L p) = 0` holds exactly;
//! - emission into `n_max + 1` by the de-exciting passage is clipped and
//!   reported as truncation loss.

use crate::banded::Tridiagonal;
use crate::error::{MaserError, Result};

/// Clipped emission mass tolerated, relative to `||p||₁`.
pub const TRUNCATION_LOSS_LIMIT: f64 = 1e-9;

/// Unit in which waiting times and rates are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    /// Times in units of `1/γ`, rates in units of `γ`.
    #[default]
    CavityDecay,
    /// Times in units of `1/r`, rates in units of `r`.
    AtomInjection,
}

impl TimeUnit {
    /// Converts a duration measured in `rt` to this unit.
    pub fn from_injection_time(self, tau: f64, n_ex: f64) -> f64 {
        match self {
            TimeUnit::CavityDecay => tau / n_ex,
            TimeUnit::AtomInjection => tau,
        }
    }

    /// Converts a duration in this unit to `rt`.
    pub fn to_injection_time(self, t: f64, n_ex: f64) -> f64 {
        match self {
            TimeUnit::CavityDecay => t * n_ex,
            TimeUnit::AtomInjection => t,
        }
    }

    /// Converts a rate given as a fraction of `r` to this unit.
    pub fn rate_from_fraction(self, fraction: f64, n_ex: f64) -> f64 {
        match self {
            TimeUnit::CavityDecay => fraction * n_ex,
            TimeUnit::AtomInjection => fraction,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeUnit::CavityDecay => "cavity_decay",
            TimeUnit::AtomInjection => "atom_injection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cavity_decay" | "gamma" => Some(TimeUnit::CavityDecay),
            "atom_injection" | "r" => Some(TimeUnit::AtomInjection),
            _ => None,
        }
    }
}

/// Physical configuration of the maser and its detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaserParams {
    /// Atoms per photon lifetime, `r/γ`.
    pub n_ex: f64,
    /// Mean thermal photon number.
    pub nu: f64,
    /// Accumulated Rabi angle in radians.
    pub phi: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub time_unit: TimeUnit,
}

impl Default for MaserParams {
    fn default() -> Self {
        Self {
            n_ex: 7.0,
            nu: 0.054,
            phi: 1.0,
            eta_a: 0.4,
            eta_b: 0.4,
            time_unit: TimeUnit::CavityDecay,
        }
    }
}

impl MaserParams {
    pub fn new(n_ex: f64, nu: f64, phi: f64, eta: f64) -> Self {
        Self {
            n_ex,
            nu,
            phi,
            eta_a: eta,
            eta_b: eta,
            time_unit: TimeUnit::CavityDecay,
        }
    }

    pub fn with_phi(self, phi: f64) -> Self {
        Self { phi, ..self }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self {
            eta_a: eta,
            eta_b: eta,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MaserError::InvalidParams(msg));
        if !(self.n_ex.is_finite() && self.n_ex > 0.0) {
            return bad(format!("n_ex must be positive, got {}", self.n_ex));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return bad(format!("nu must be nonnegative, got {}", self.nu));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return bad(format!("phi must be nonnegative, got {}", self.phi));
        }
        for (name, eta) in [("eta_a", self.eta_a), ("eta_b", self.eta_b)] {
            if !(0.0..=1.0).contains(&eta) {
                return bad(format!("{name} must lie in [0, 1], got {eta}"));
            }
        }
        Ok(())
    }

    /// Probability that an atom leaves excited from a field with `n` photons.
    pub fn stay_probability(&self, n: usize) -> f64 {
        let c = (self.phi * ((n + 1) as f64).sqrt()).cos();
        c * c
    }

    /// Probability that an atom emits into a field with `n` photons.
    pub fn emit_probability(&self, n: usize) -> f64 {
        let s = (self.phi * ((n + 1) as f64).sqrt()).sin();
        s * s
    }
}

/// Diagonal field state (possibly non-normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    weights: Vec<f64>,
}

impl PhotonDistribution {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        assert!(!weights.is_empty(), "photon distribution needs n_max >= 0");
        Self { weights }
    }

    pub fn zeros(n_max: usize) -> Self {
        Self::from_weights(vec![0.0; n_max + 1])
    }

    /// Fock state `|n><n|`.
    pub fn fock(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max);
        let mut p = Self::zeros(n_max);
        p.weights[n] = 1.0;
        p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn n_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `Σ p_n`; the exclusion probability for a conditioned state.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()))
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(n, w)| n as f64 * w)
            .sum::<f64>()
            / self.total()
    }

    /// `|p_{n_max}| / max |p_n|`, zero for the zero vector.
    pub fn tail_ratio(&self) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            0.0
        } else {
            self.weights[self.n_max()].abs() / max
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_weights(self.weights.iter().map(|w| alpha * w).collect())
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self::from_weights(
            self.weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// `L p` with reflecting boundary at `n_max`.
pub fn apply_damping(p: &PhotonDistribution, params: &MaserParams) -> PhotonDistribution {
    let w = p.weights();
    let top = p.n_max();
    let (nu, inv) = (params.nu, 1.0 / params.n_ex);
    let out = (0..=top)
        .map(|n| {
            let nf = n as f64;
            let above = if n < top { w[n + 1] } else { 0.0 };
            let below = if n > 0 { w[n - 1] } else { 0.0 };
            let up_loss = if n < top { (nf + 1.0) * w[n] } else { 0.0 };
            inv * ((nu + 1.0) * ((nf + 1.0) * above - nf * w[n]) + nu * (nf * below - up_loss))
        })
        .collect();
    PhotonDistribution::from_weights(out)
}

/// `A p`: atom leaves in the upper level.
pub fn apply_pass_excited(p: &PhotonDistribution, params: &MaserParams) -> PhotonDistribution {
    PhotonDistribution::from_weights(
        p.weights()
            .iter()
            .enumerate()
            .map(|(n, w)| params.stay_probability(n) * w)
            .collect(),
    )
}

/// `B p` together with the mass emitted past `n_max`.
pub fn pass_deexcited_clipped(p: &PhotonDistribution, params: &MaserParams) -> (PhotonDistribution, f64) {
    let w = p.weights();
    let top = p.n_max();
    let mut out = vec![0.0; top + 1];
    for n in 1..=top {
        out[n] = params.emit_probability(n - 1) * w[n - 1];
    }
    let clipped = params.emit_probability(top) * w[top];
    (PhotonDistribution::from_weights(out), clipped)
}

fn check_clipped(clipped: f64, p: &PhotonDistribution) -> Result<()> {
    let limit = TRUNCATION_LOSS_LIMIT * p.l1_norm();
    if clipped.abs() > limit {
        Err(MaserError::TruncationOverflow {
            clipped: clipped.abs(),
            limit,
        })
    } else {
        Ok(())
    }
}

/// `B p`: atom leaves in the lower level, adding one photon.
pub fn apply_pass_deexcited(p: &PhotonDistribution, params: &MaserParams) -> Result<PhotonDistribution> {
    let (out, clipped) = pass_deexcited_clipped(p, params);
    check_clipped(clipped, p)?;
    Ok(out)
}

/// `X p = (L + A + B - 1) p`.
pub fn apply_generator(p: &PhotonDistribution, params: &MaserParams) -> Result<PhotonDistribution> {
    let damped = apply_damping(p, params);
    let excited = apply_pass_excited(p, params);
    let deexcited = apply_pass_deexcited(p, params)?;
    Ok(PhotonDistribution::from_weights(
        (0..p.dim())
            .map(|n| damped.weights[n] + excited.weights[n] + deexcited.weights[n] - p.weights[n])
            .collect(),
    ))
}

/// Which detection events a conditioned evolution monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    A,
    B,
    AB,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::A => "A",
            Channel::B => "B",
            Channel::AB => "AB",
        }
    }
}

/// A detection channel bound to a parameter point: carries the jump part
/// `X⁺` and the no-detection generator `X⁻ = X - X⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSplit {
    pub channel: Channel,
    pub params: MaserParams,
}

impl ChannelSplit {
    pub fn new(channel: Channel, params: MaserParams) -> Self {
        Self { channel, params }
    }

    fn efficiencies(&self) -> (f64, f64) {
        let MaserParams { eta_a, eta_b, .. } = self.params;
        match self.channel {
            Channel::A => (eta_a, 0.0),
            Channel::B => (0.0, eta_b),
            Channel::AB => (eta_a, eta_b),
        }
    }

    /// `X⁺ p`. Emission past `n_max` is clipped without error.
    pub fn apply_jump(&self, p: &PhotonDistribution) -> PhotonDistribution {
        let (ea, eb) = self.efficiencies();
        let excited = apply_pass_excited(p, &self.params);
        let (deexcited, _) = pass_deexcited_clipped(p, &self.params);
        excited.combine(ea, &deexcited, eb)
    }

    /// `X⁻ p = X p - X⁺ p`.
    pub fn apply_no_detection(&self, p: &PhotonDistribution) -> Result<PhotonDistribution> {
        let full = apply_generator(p, &self.params)?;
        Ok(full.combine(1.0, &self.apply_jump(p), -1.0))
    }
}

/// Explicit tridiagonal matrices of the superoperators at one parameter
/// point and truncation.
#[derive(Debug, Clone)]
pub struct Operators {
    pub params: MaserParams,
    pub damping: Tridiagonal,
    pub excited: Tridiagonal,
    pub deexcited: Tridiagonal,
    pub generator: Tridiagonal,
}

impl Operators {
    pub fn new(params: MaserParams, n_max: usize) -> Self {
        let dim = n_max + 1;
        let (nu, inv) = (params.nu, 1.0 / params.n_ex);

        let mut damping = Tridiagonal::zeros(dim);
        for j in 0..dim {
            let jf = j as f64;
            if j > 0 {
                damping.upper[j - 1] = (nu + 1.0) * jf * inv;
            }
            let mut out = (nu + 1.0) * jf * inv;
            if j < n_max {
                let up = nu * (jf + 1.0) * inv;
                damping.lower[j] = up;
                out += up;
            }
            damping.diag[j] = -out;
        }

        let mut excited = Tridiagonal::zeros(dim);
        let mut deexcited = Tridiagonal::zeros(dim);
        for j in 0..dim {
            excited.diag[j] = params.stay_probability(j);
            if j < n_max {
                deexcited.lower[j] = params.emit_probability(j);
            }
        }

        let passage = excited.combine(1.0, &deexcited, 1.0);
        let generator = damping
            .combine(1.0, &passage, 1.0)
            .combine(1.0, &Tridiagonal::identity(dim), -1.0);

        Self {
            params,
            damping,
            excited,
            deexcited,
            generator,
        }
    }

    pub fn n_max(&self) -> usize {
        self.generator.dim() - 1
    }

    pub fn jump(&self, channel: Channel) -> Tridiagonal {
        let (ea, eb) = ChannelSplit::new(channel, self.params).efficiencies();
        self.excited.combine(ea, &self.deexcited, eb)
    }

    pub fn no_detection(&self, channel: Channel) -> Tridiagonal {
        self.generator.combine(1.0, &self.jump(channel), -1.0)
    }
}
