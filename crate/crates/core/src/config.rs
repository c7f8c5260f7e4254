//! Flat `key = value` configuration covering physics, numerics, sweeps and
//! Monte-Carlo budgets. Every setting has a default and can be dumped, so
//! an emitted header reproduces the run.

use std::fmt::Write as _;

use crate::error::{MaserError, Result};
use crate::fock::{MaserParams, TimeUnit};
use crate::numerics::{Method, Numerics};

/// Interaction-angle conversion: `φ = g · t_int` with `g` in kHz and
/// `t_int` in μs.
pub fn phi_from_tint(g_khz: f64, t_int_us: f64) -> f64 {
    g_khz * 1e3 * t_int_us * 1e-6
}

pub fn tint_from_phi(g_khz: f64, phi: f64) -> f64 {
    phi / (g_khz * 1e3 * 1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Phi,
    Tint,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Phi => "phi",
            Axis::Tint => "t_int",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: MaserParams,
    pub numerics: Numerics,
    /// Atom–field coupling in kHz.
    pub g_khz: f64,
    /// Interaction time in μs; when set it overrides `phi`.
    pub t_int_us: Option<f64>,
    pub seed: u64,
    pub mc_atoms: usize,
    pub axis: Axis,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub observables: Vec<String>,
    /// Standard deviation of the interaction time in μs; 0 disables averaging.
    pub sigma_tint_us: f64,
    pub gauss_points: usize,
    /// Worker threads for sweeps; 0 uses all cores.
    pub workers: usize,
    /// Largest `n0` marked as a trapping state.
    pub trap_n0_max: usize,
    /// Observation windows for the averaged counting function, in the
    /// configured time unit.
    pub fano_avg_start: f64,
    pub fano_avg_stop: f64,
    pub fano_avg_points: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: MaserParams::default(),
            numerics: Numerics::default(),
            g_khz: 39.0,
            t_int_us: None,
            seed: 20_240_601,
            mc_atoms: 1_000_000,
            axis: Axis::Phi,
            start: 0.1,
            stop: 10.0,
            points: 200,
            observables: vec!["inversion".into(), "inversion_tilde".into()],
            sigma_tint_us: 0.0,
            gauss_points: 15,
            workers: 0,
            trap_n0_max: 4,
            fano_avg_start: 1.0,
            fano_avg_stop: 4.0,
            fano_avg_points: 16,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| MaserError::Config(format!("{key}: `{value}` is not a finite number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| MaserError::Config(format!("{key}: `{value}` is not a nonnegative integer")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<f64>> {
    match value {
        "" | "none" | "off" => Ok(None),
        v => parse_f64(key, v).map(Some),
    }
}

/// Shortest text that parses back to the same value; exponent form for
/// very small or large magnitudes.
fn fmt_f64(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn fmt_optional(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), fmt_f64)
}

impl Config {
    /// Parses `key = value` lines on top of the defaults; `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| MaserError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| MaserError::Config(format!("`{assignment}`: expected key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        let n = &mut self.numerics;
        match key {
            "n_ex" => p.n_ex = parse_f64(key, value)?,
            "nu" => p.nu = parse_f64(key, value)?,
            "phi" => {
                p.phi = parse_f64(key, value)?;
                self.t_int_us = None;
            }
            "eta_a" => p.eta_a = parse_f64(key, value)?,
            "eta_b" => p.eta_b = parse_f64(key, value)?,
            "eta" => {
                let eta = parse_f64(key, value)?;
                p.eta_a = eta;
                p.eta_b = eta;
            }
            "time_unit" => {
                p.time_unit = TimeUnit::parse(value)
                    .ok_or_else(|| MaserError::Config(format!("time_unit: unknown `{value}`")))?
            }
            "g_khz" => self.g_khz = parse_f64(key, value)?,
            "t_int_us" => self.t_int_us = parse_optional(key, value)?,
            "n_max_cap" => n.n_max_cap = parse_usize(key, value)?,
            "tail_tol" => n.tail_tol = parse_f64(key, value)?,
            "steady_tol" => n.steady_tol = parse_f64(key, value)?,
            "ode_tol" => n.ode_tol = parse_f64(key, value)?,
            "method" => {
                n.method = Method::parse(value).ok_or_else(|| MaserError::Config(format!("method: unknown `{value}`")))?
            }
            "fixed_step" => n.fixed_step = parse_optional(key, value)?,
            "initial_horizon" => n.initial_horizon = parse_f64(key, value)?,
            "max_horizon" => n.max_horizon = parse_f64(key, value)?,
            "cross_check_tol" => n.cross_check_tol = parse_f64(key, value)?,
            "max_sequence_len" => n.max_sequence_len = parse_usize(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| MaserError::Config(format!("seed: `{value}` is not an unsigned integer")))?
            }
            "mc_atoms" => self.mc_atoms = parse_usize(key, value)?,
            "axis" => {
                self.axis = match value {
                    "phi" => Axis::Phi,
                    "t_int" | "tint" => Axis::Tint,
                    _ => return Err(MaserError::Config(format!("axis: unknown `{value}`"))),
                }
            }
            "start" => self.start = parse_f64(key, value)?,
            "stop" => self.stop = parse_f64(key, value)?,
            "points" => self.points = parse_usize(key, value)?,
            "observables" => {
                self.observables = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            "sigma_tint_us" => self.sigma_tint_us = parse_f64(key, value)?,
            "gauss_points" => self.gauss_points = parse_usize(key, value)?,
            "workers" => self.workers = parse_usize(key, value)?,
            "trap_n0_max" => self.trap_n0_max = parse_usize(key, value)?,
            "fano_avg_start" => self.fano_avg_start = parse_f64(key, value)?,
            "fano_avg_stop" => self.fano_avg_stop = parse_f64(key, value)?,
            "fano_avg_points" => self.fano_avg_points = parse_usize(key, value)?,
            _ => return Err(MaserError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parameters with `phi` resolved from the interaction time if one is
    /// set.
    pub fn resolved_params(&self) -> MaserParams {
        match self.t_int_us {
            Some(t) => self.params.with_phi(phi_from_tint(self.g_khz, t)),
            None => self.params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MaserError::Config(msg));
        self.resolved_params()
            .validate()
            .map_err(|e| MaserError::Config(e.to_string()))?;
        let n = &self.numerics;
        if n.n_max_cap < 2 {
            return bad("n_max_cap must be at least 2".into());
        }
        for (name, v) in [
            ("tail_tol", n.tail_tol),
            ("steady_tol", n.steady_tol),
            ("ode_tol", n.ode_tol),
            ("initial_horizon", n.initial_horizon),
            ("cross_check_tol", n.cross_check_tol),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if n.max_horizon < n.initial_horizon {
            return bad("max_horizon must not be below initial_horizon".into());
        }
        if let Some(h) = n.fixed_step {
            if !(h > 0.0) {
                return bad("fixed_step must be positive".into());
            }
        }
        if !(self.g_khz > 0.0) {
            return bad("g_khz must be positive".into());
        }
        if self.t_int_us.is_some_and(|t| t < 0.0) {
            return bad("t_int_us must be nonnegative".into());
        }
        if !(self.start < self.stop) {
            return bad("sweep start must be below stop".into());
        }
        if self.start < 0.0 {
            return bad("sweep start must be nonnegative".into());
        }
        if self.points < 2 {
            return bad("a sweep needs at least two points".into());
        }
        if self.sigma_tint_us < 0.0 {
            return bad("sigma_tint_us must be nonnegative".into());
        }
        if self.sigma_tint_us > 0.0 && self.gauss_points < 3 {
            return bad("gauss_points must be at least 3 when averaging".into());
        }
        if !(self.fano_avg_start > 0.0 && self.fano_avg_start < self.fano_avg_stop) || self.fano_avg_points < 2 {
            return bad("fano averaging needs 0 < fano_avg_start < fano_avg_stop and at least two points".into());
        }
        Ok(())
    }

    /// Every setting as `key = value` lines, readable by [`Config::parse`].
    pub fn dump(&self) -> String {
        let p = &self.params;
        let n = &self.numerics;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("n_ex", fmt_f64(p.n_ex));
        line("nu", fmt_f64(p.nu));
        line("phi", fmt_f64(p.phi));
        line("t_int_us", fmt_optional(self.t_int_us));
        line("g_khz", fmt_f64(self.g_khz));
        line("eta_a", fmt_f64(p.eta_a));
        line("eta_b", fmt_f64(p.eta_b));
        line("time_unit", p.time_unit.name().to_string());
        line("n_max_cap", n.n_max_cap.to_string());
        line("tail_tol", fmt_f64(n.tail_tol));
        line("steady_tol", fmt_f64(n.steady_tol));
        line("ode_tol", fmt_f64(n.ode_tol));
        line("method", n.method.name().to_string());
        line("fixed_step", fmt_optional(n.fixed_step));
        line("initial_horizon", fmt_f64(n.initial_horizon));
        line("max_horizon", fmt_f64(n.max_horizon));
        line("cross_check_tol", fmt_f64(n.cross_check_tol));
        line("max_sequence_len", n.max_sequence_len.to_string());
        line("seed", self.seed.to_string());
        line("mc_atoms", self.mc_atoms.to_string());
        line("axis", self.axis.name().to_string());
        line("start", fmt_f64(self.start));
        line("stop", fmt_f64(self.stop));
        line("points", self.points.to_string());
        line("observables", self.observables.join(","));
        line("sigma_tint_us", fmt_f64(self.sigma_tint_us));
        line("gauss_points", self.gauss_points.to_string());
        line("workers", self.workers.to_string());
        line("trap_n0_max", self.trap_n0_max.to_string());
        line("fano_avg_start", fmt_f64(self.fano_avg_start));
        line("fano_avg_stop", fmt_f64(self.fano_avg_stop));
        line("fano_avg_points", self.fano_avg_points.to_string());
        out
    }

    /// The dump on a single line, for file headers.
    pub fn dump_inline(&self) -> String {
        self.dump()
            .lines()
            .map(|l| l.replace(" = ", "="))
            .filter(|l| !l.starts_with("workers="))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
