/// How resolvent traces `tr{O₁ (-1/X⁻)^k seed}` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Integrate the linear no-detection equation and accumulate the trace.
    TimeIntegration,
    /// `k` successive banded solves with `-X⁻`.
    #[default]
    DirectSolve,
    /// Time integration, cross-checked against the direct solve.
    Both,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TimeIntegration => "time_integration",
            Method::DirectSolve => "direct_solve",
            Method::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "time_integration" | "time" => Some(Method::TimeIntegration),
            "direct_solve" | "direct" => Some(Method::DirectSolve),
            "both" => Some(Method::Both),
            _ => None,
        }
    }
}

/// Numerical settings shared by every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// Largest admissible photon-number truncation.
    pub n_max_cap: usize,
    /// Steady-state tail mass that fixes the truncation before doubling.
    pub tail_tol: f64,
    /// Bound on `||X ρ^ss||₁`.
    pub steady_tol: f64,
    /// Local error tolerance of the time integrator.
    pub ode_tol: f64,
    pub method: Method,
    /// Fixed integration step in `rt`; `None` selects the adaptive pair.
    pub fixed_step: Option<f64>,
    /// First checkpoint of the horizon-doubling loop, in `rt`.
    pub initial_horizon: f64,
    pub max_horizon: f64,
    /// Relative disagreement allowed between the two resolvent routes.
    pub cross_check_tol: f64,
    pub max_sequence_len: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_max_cap: 512,
            tail_tol: 1e-12,
            steady_tol: 1e-10,
            ode_tol: 1e-12,
            method: Method::DirectSolve,
            fixed_step: None,
            initial_horizon: 8.0,
            max_horizon: 1e7,
            cross_check_tol: 1e-7,
            max_sequence_len: 8,
        }
    }
}
