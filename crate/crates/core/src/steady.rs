//! Steady state of the standard micromaser and its trapping angles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{MaserError, Result};
use crate::fock::{apply_generator, MaserParams, Operators, PhotonDistribution};
use crate::numerics::Numerics;

/// Truncations never go below this many photons.
pub const MIN_N_MAX: usize = 32;

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub dist: PhotonDistribution,
    /// `||X ρ^ss||₁`.
    pub residual: f64,
    pub params: MaserParams,
}

impl SteadyState {
    pub fn n_max(&self) -> usize {
        self.dist.n_max()
    }
}

/// Ratio `p_n / p_{n-1}` of the closed-form steady state.
pub fn recurrence_factor(params: &MaserParams, n: usize) -> f64 {
    let nf = n as f64;
    let s = (params.phi * nf.sqrt()).sin();
    (params.nu + params.n_ex * s * s / nf) / (params.nu + 1.0)
}

/// Log-weights `ln p_n` (unnormalized) for `n = 0..=cap`; `-inf` past a
/// vanishing factor.
fn log_weights(params: &MaserParams, cap: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(cap + 1);
    let mut acc = 0.0_f64;
    out.push(acc);
    for n in 1..=cap {
        let f = recurrence_factor(params, n);
        acc += if f > 0.0 { f.ln() } else { f64::NEG_INFINITY };
        out.push(acc);
    }
    out
}

fn normalize_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log_w.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    log_w.iter().map(|l| (l - lse).exp()).collect()
}

/// Truncation for a parameter point: the smallest `n` whose closed-form
/// tail beyond it is below `tail_tol`, doubled, floored at [`MIN_N_MAX`]
/// and capped at `n_max_cap`.
pub fn truncation(params: &MaserParams, numerics: &Numerics) -> Result<usize> {
    params.validate()?;
    let cap = numerics.n_max_cap;
    let p = normalize_log(&log_weights(params, cap));
    let mut tail = 0.0;
    let mut n_tail = None;
    for n in (0..=cap).rev() {
        if tail >= numerics.tail_tol {
            break;
        }
        n_tail = Some(n);
        tail += p[n];
    }
    match n_tail {
        Some(n) if n < cap => Ok((2 * n).clamp(MIN_N_MAX, cap.max(MIN_N_MAX))),
        _ => Err(MaserError::NonConvergentTruncation {
            cap,
            tail_tol: numerics.tail_tol,
        }),
    }
}

/// Closed-form steady state at the given truncation.
pub fn steady_state_at(params: &MaserParams, n_max: usize) -> Result<SteadyState> {
    params.validate()?;
    let dist = PhotonDistribution::from_weights(normalize_log(&log_weights(params, n_max)));
    let residual = apply_generator(&dist, params)?.l1_norm();
    Ok(SteadyState {
        dist,
        residual,
        params: *params,
    })
}

/// Closed-form steady state with automatic truncation, certified against
/// the generator.
pub fn steady_state(params: &MaserParams, numerics: &Numerics) -> Result<SteadyState> {
    let n_max = truncation(params, numerics)?;
    let ss = steady_state_at(params, n_max)?;
    if ss.residual > numerics.steady_tol {
        return Err(MaserError::NonConvergentTruncation {
            cap: numerics.n_max_cap,
            tail_tol: numerics.tail_tol,
        });
    }
    Ok(ss)
}

/// Null vector of the truncated generator, normalized to unit trace, found
/// by a dense solve with the first equation replaced by `Σ p_n = 1`.
/// Independent of the closed form; used to cross-check it.
pub fn steady_state_by_solve(params: &MaserParams, n_max: usize) -> Result<PhotonDistribution> {
    params.validate()?;
    let ops = Operators::new(*params, n_max);
    let rows = ops.generator.to_dense();
    let dim = n_max + 1;
    let m = DMatrix::from_fn(dim, dim, |i, j| if i == 0 { 1.0 } else { rows[i][j] });
    let mut rhs = DVector::zeros(dim);
    rhs[0] = 1.0;
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| MaserError::SingularResolvent("generator null space is not one-dimensional".into()))?;
    Ok(PhotonDistribution::from_weights(x.iter().copied().collect()))
}

/// Angle at which an atom completes `q` Rabi cycles in a field of `n0`
/// photons.
pub fn trapping_angle(n0: usize, q: usize) -> f64 {
    q as f64 * PI / ((n0 + 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrappingAngle {
    pub n0: usize,
    pub q: usize,
    pub phi: f64,
}

/// All trapping angles with `n0 <= n0_max`, `q >= 1` and `phi <= phi_max`,
/// sorted by angle (ties broken by `n0`).
pub fn trapping_angles(n0_max: usize, phi_max: f64) -> Vec<TrappingAngle> {
    let mut out = Vec::new();
    for n0 in 0..=n0_max {
        let mut q = 1;
        loop {
            let phi = trapping_angle(n0, q);
            if phi > phi_max {
                break;
            }
            out.push(TrappingAngle { n0, q, phi });
            q += 1;
        }
    }
    out.sort_by(|a, b| a.phi.total_cmp(&b.phi).then(a.n0.cmp(&b.n0)));
    out
}
