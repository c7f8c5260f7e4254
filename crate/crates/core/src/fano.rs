//! Fano–Mandel counting functions `Q_A(t)`, `Q_B(t)`.
//!
//! `Q(T) = 2 ∫_0^T (1 - τ/T) f(τ) dτ` with
//! `f(τ) = tr{X⁺ e^{Xτ} M ρ^ss}` and `M ρ^ss = X⁺ρ^ss / tr{X⁺ρ^ss} - ρ^ss`,
//! evaluated from the moments `∫ f` and `∫ τ f` of one trajectory.

use nalgebra::{DMatrix, DVector};

use crate::error::{MaserError, Result};
use crate::fock::{Channel, PhotonDistribution};
use crate::numerics::Method;
use crate::propagator::{Horizon, LeftOperator};
use crate::statistics::Model;

/// Observation window of a counting function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Window length in the model's time unit.
    Finite(f64),
    Infinite,
}

fn counting_channel(channel: Channel) -> Result<()> {
    match channel {
        Channel::A | Channel::B => Ok(()),
        Channel::AB => Err(MaserError::InvalidParams(
            "counting functions are defined for channel A or B".into(),
        )),
    }
}

impl Model {
    /// `M ρ^ss` for the channel; traceless.
    pub fn fano_seed(&self, channel: Channel) -> Result<PhotonDistribution> {
        counting_channel(channel)?;
        let jumped = self.propagator().apply_jump(channel, self.rho());
        let x = jumped.total();
        if x <= 0.0 {
            return Err(MaserError::DegenerateChannel(format!(
                "channel {} is never detected",
                channel.name()
            )));
        }
        Ok(jumped.combine(1.0 / x, self.rho(), -1.0))
    }

    /// `Q(T)` at several window lengths (model time unit, increasing).
    pub fn fano_series(&self, channel: Channel, windows: &[f64]) -> Result<Vec<f64>> {
        if windows.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(MaserError::InvalidParams("window lengths must be positive and finite".into()));
        }
        if windows.windows(2).any(|w| w[1] < w[0]) {
            return Err(MaserError::InvalidParams("window lengths must be increasing".into()));
        }
        let seed = self.fano_seed(channel)?;
        let p = self.params();
        let taus: Vec<f64> = windows.iter().map(|&t| p.time_unit.to_injection_time(t, p.n_ex)).collect();
        let prop = self.propagator();
        let moments = prop.moment_integrals(
            &prop.operators().generator,
            &seed,
            &prop.left_weights(LeftOperator::jump(channel)),
            1,
            Horizon::Checkpoints(&taus),
        )?;
        Ok(taus.iter().zip(moments).map(|(tau, m)| 2.0 * (m[0] - m[1] / tau)).collect())
    }

    fn fano_infinite_time(&self, channel: Channel) -> Result<f64> {
        let seed = self.fano_seed(channel)?;
        let prop = self.propagator();
        let m = prop.moment_integrals(
            &prop.operators().generator,
            &seed,
            &prop.left_weights(LeftOperator::jump(channel)),
            0,
            Horizon::Infinite,
        )?;
        Ok(2.0 * m[0][0])
    }

    /// `Q(∞)` from a dense solve of `(X - ρ^ss 1ᵀ) y = -M ρ^ss`; the
    /// rank-one term pins `tr y = 0` so the system is regular.
    pub fn fano_infinite_direct(&self, channel: Channel) -> Result<f64> {
        let seed = self.fano_seed(channel)?;
        let prop = self.propagator();
        let rows = prop.operators().generator.to_dense();
        let rho = self.rho().weights();
        let dim = rho.len();
        let z = DMatrix::from_fn(dim, dim, |i, j| rows[i][j] - rho[i]);
        let rhs = DVector::from_iterator(dim, seed.weights().iter().map(|s| -s));
        let y = z
            .lu()
            .solve(&rhs)
            .ok_or_else(|| MaserError::SingularResolvent("deflated generator is singular".into()))?;
        let w = prop.left_weights(LeftOperator::jump(channel));
        Ok(2.0 * w.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn fano_mandel(&self, channel: Channel, window: Window) -> Result<f64> {
        match window {
            Window::Finite(t) => Ok(self.fano_series(channel, &[t])?[0]),
            Window::Infinite => match self.numerics().method {
                Method::DirectSolve => self.fano_infinite_direct(channel),
                Method::TimeIntegration => self.fano_infinite_time(channel),
                Method::Both => {
                    let timed = self.fano_infinite_time(channel)?;
                    let direct = self.fano_infinite_direct(channel)?;
                    let scale = timed.abs().max(direct.abs()).max(1e-300);
                    let relative = (timed - direct).abs() / scale;
                    if relative > self.numerics().cross_check_tol {
                        return Err(MaserError::CrossCheckMismatch {
                            time_integration: timed,
                            direct,
                            relative,
                        });
                    }
                    Ok(timed)
                }
            },
        }
    }

    /// Mean of `Q(t)` over `points` equally spaced windows in `[t0, t1]`.
    pub fn fano_window_average(&self, channel: Channel, t0: f64, t1: f64, points: usize) -> Result<f64> {
        if points < 2 || !(t1 > t0) {
            return Err(MaserError::InvalidParams("averaging needs t1 > t0 and at least two points".into()));
        }
        let step = (t1 - t0) / (points - 1) as f64;
        let windows: Vec<f64> = (0..points).map(|i| t0 + step * i as f64).collect();
        let q = self.fano_series(channel, &windows)?;
        Ok(q.iter().sum::<f64>() / points as f64)
    }
}
