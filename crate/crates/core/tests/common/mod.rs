//! Dense reference implementations built directly from the rate equations.
//! They share no code with the library beyond the parameter struct.

#![allow(dead_code)]

use micromaser::{Channel, MaserParams};
use nalgebra::{DMatrix, DVector};

pub fn stay(params: &MaserParams, n: usize) -> f64 {
    (params.phi * ((n + 1) as f64).sqrt()).cos().powi(2)
}

pub fn emit(params: &MaserParams, n: usize) -> f64 {
    (params.phi * ((n + 1) as f64).sqrt()).sin().powi(2)
}

/// Birth-death damping with no transitions above `n_max`.
pub fn damping(params: &MaserParams, n_max: usize) -> DMatrix<f64> {
    let dim = n_max + 1;
    let (down, up) = ((params.nu + 1.0) / params.n_ex, params.nu / params.n_ex);
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        let nf = n as f64;
        if n > 0 {
            m[(n - 1, n)] += down * nf;
            m[(n, n)] -= down * nf;
        }
        if n < n_max {
            m[(n + 1, n)] += up * (nf + 1.0);
            m[(n, n)] -= up * (nf + 1.0);
        }
    }
    m
}

pub fn excited(params: &MaserParams, n_max: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_max + 1, n_max + 1, |i, j| if i == j { stay(params, j) } else { 0.0 })
}

pub fn deexcited(params: &MaserParams, n_max: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_max + 1, n_max + 1, |i, j| if i == j + 1 { emit(params, j) } else { 0.0 })
}

pub fn generator(params: &MaserParams, n_max: usize) -> DMatrix<f64> {
    damping(params, n_max) + excited(params, n_max) + deexcited(params, n_max)
        - DMatrix::identity(n_max + 1, n_max + 1)
}

pub fn jump(params: &MaserParams, n_max: usize, channel: Channel) -> DMatrix<f64> {
    let a = excited(params, n_max) * params.eta_a;
    let b = deexcited(params, n_max) * params.eta_b;
    match channel {
        Channel::A => a,
        Channel::B => b,
        Channel::AB => a + b,
    }
}

pub fn no_detection(params: &MaserParams, n_max: usize, channel: Channel) -> DMatrix<f64> {
    generator(params, n_max) - jump(params, n_max, channel)
}

/// Unit-trace null vector of the generator via SVD.
pub fn null_vector(params: &MaserParams, n_max: usize) -> DVector<f64> {
    let x = generator(params, n_max);
    let svd = x.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let k = svd.singular_values.imin();
    let v: DVector<f64> = v_t.row(k).transpose();
    let s = v.sum();
    v / s
}

/// `tr{left · (-1/X⁻)^power · seed}` by dense LU.
pub fn resolvent_trace(
    params: &MaserParams,
    n_max: usize,
    left: &DMatrix<f64>,
    channel: Channel,
    power: u32,
    seed: &DVector<f64>,
) -> f64 {
    let lu = (-no_detection(params, n_max, channel)).lu();
    let mut v = seed.clone();
    for _ in 0..power {
        v = lu.solve(&v).unwrap();
    }
    (left * v).sum()
}

pub fn expm_apply(m: &DMatrix<f64>, t: f64, v: &DVector<f64>) -> DVector<f64> {
    (m * t).exp() * v
}

pub fn to_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
