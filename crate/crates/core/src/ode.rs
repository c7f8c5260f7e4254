//! Explicit Runge-Kutta integration for the linear master equations.
//!
//! The adaptive scheme is the Dormand-Prince 5(4) pair with first-same-as-
//! last reuse and an RMS error norm. The fixed-step fallback is classical
//! RK4, kept for bit-reproducible runs.

use crate::error::{MaserError, Result};

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (equal to the last row of `DP_A`).
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Difference between fifth- and fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 50_000_000;

/// Step-size policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Stepping {
    /// Error per step kept below `atol_i + rtol * |y_i|` in RMS norm.
    Adaptive { rtol: f64, atol: Vec<f64> },
    Fixed { h: f64 },
}

/// Integrates `y' = f(t, y)` forward, keeping its step size between calls
/// to [`Integrator::advance_to`].
pub struct Integrator<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rhs: F,
    stepping: Stepping,
    t: f64,
    y: Vec<f64>,
    h: Option<f64>,
    k: [Vec<f64>; 7],
    fsal_valid: bool,
    stage: Vec<f64>,
    y_new: Vec<f64>,
    steps: usize,
    rejected: usize,
    est_error: f64,
}

impl<F> Integrator<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(rhs: F, t0: f64, y0: Vec<f64>, stepping: Stepping) -> Self {
        let n = y0.len();
        if let Stepping::Adaptive { atol, .. } = &stepping {
            assert_eq!(atol.len(), n, "one absolute tolerance per component");
        }
        Self {
            rhs,
            stepping,
            t: t0,
            y: y0,
            h: None,
            k: std::array::from_fn(|_| vec![0.0; n]),
            fsal_valid: false,
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            steps: 0,
            rejected: 0,
            est_error: 0.0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn into_state(self) -> Vec<f64> {
        self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Accumulated absolute local error estimate (max-norm per step).
    pub fn est_error(&self) -> f64 {
        self.est_error
    }

    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        assert!(t_end >= self.t, "integration runs forward only");
        match self.stepping.clone() {
            Stepping::Fixed { h } => self.advance_fixed(t_end, h),
            Stepping::Adaptive { rtol, atol } => self.advance_adaptive(t_end, rtol, &atol),
        }
    }

    fn advance_fixed(&mut self, t_end: f64, h: f64) -> Result<()> {
        assert!(h > 0.0);
        while self.t < t_end {
            // Land exactly on t_end; the count of full steps is fixed by (t, h).
            let remaining = t_end - self.t;
            let (step, last) = if remaining <= h * (1.0 + 1e-12) {
                (remaining, true)
            } else {
                (h, false)
            };
            self.rk4_step(step);
            self.t = if last { t_end } else { self.t + step };
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(MaserError::StepSizeUnderflow { t: self.t, h });
            }
        }
        Ok(())
    }

    fn rk4_step(&mut self, h: f64) {
        let n = self.y.len();
        let t = self.t;
        let [k1, k2, k3, k4, ..] = &mut self.k;
        (self.rhs)(t, &self.y, k1);
        for i in 0..n {
            self.stage[i] = self.y[i] + 0.5 * h * k1[i];
        }
        (self.rhs)(t + 0.5 * h, &self.stage, k2);
        for i in 0..n {
            self.stage[i] = self.y[i] + 0.5 * h * k2[i];
        }
        (self.rhs)(t + 0.5 * h, &self.stage, k3);
        for i in 0..n {
            self.stage[i] = self.y[i] + h * k3[i];
        }
        (self.rhs)(t + h, &self.stage, k4);
        for i in 0..n {
            self.y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.fsal_valid = false;
    }

    fn initial_step(&mut self, rtol: f64, atol: &[f64]) -> f64 {
        // Hairer-Wanner heuristic: h ~ 0.01 ||y|| / ||f||.
        let n = self.y.len();
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..n {
            let sc = atol[i] + rtol * self.y[i].abs();
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n as f64).sqrt(), (d1 / n as f64).sqrt());
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    }

    fn advance_adaptive(&mut self, t_end: f64, rtol: f64, atol: &[f64]) -> Result<()> {
        let n = self.y.len();
        if !self.fsal_valid {
            let t = self.t;
            (self.rhs)(t, &self.y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(rtol, atol),
        };

        while self.t < t_end {
            let remaining = t_end - self.t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(MaserError::StepSizeUnderflow { t: self.t, h: step });
            }

            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for (j, a) in DP_A[s][..s].iter().enumerate() {
                        if *a != 0.0 {
                            acc += step * a * self.k[j][i];
                        }
                    }
                    self.stage[i] = acc;
                }
                let ts = self.t + DP_C[s] * step;
                (self.rhs)(ts, &self.stage, &mut self.k[s]);
            }
            // Stage 7 was evaluated at the fifth-order solution, which equals
            // the last stage input.
            let mut err_sq = 0.0;
            let mut err_max = 0.0_f64;
            for i in 0..n {
                let mut y5 = self.y[i];
                let mut e = 0.0;
                for s in 0..7 {
                    y5 += step * DP_B[s] * self.k[s][i];
                    e += step * DP_E[s] * self.k[s][i];
                }
                self.y_new[i] = y5;
                let sc = atol[i] + rtol * self.y[i].abs().max(y5.abs());
                err_sq += (e / sc).powi(2);
                err_max = err_max.max(e.abs());
            }
            let err = (err_sq / n as f64).sqrt();

            if err <= 1.0 {
                self.t = if last { t_end } else { self.t + step };
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.steps += 1;
                self.est_error += err_max;
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // Keep the controller's step when the last one was shortened
                // to hit t_end.
                h = if last { h.max(step * factor) } else { step * factor };
                if self.steps > MAX_STEPS {
                    return Err(MaserError::StepSizeUnderflow { t: self.t, h });
                }
            } else {
                self.rejected += 1;
                h = step * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                if h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(MaserError::StepSizeUnderflow { t: self.t, h });
                }
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(rate: f64) -> impl FnMut(f64, &[f64], &mut [f64]) {
        move |_, y, dy| dy[0] = -rate * y[0]
    }

    #[test]
    fn adaptive_exponential_decay() {
        let stepping = Stepping::Adaptive {
            rtol: 1e-12,
            atol: vec![1e-14],
        };
        let mut ig = Integrator::new(decay(1.7), 0.0, vec![1.0], stepping);
        ig.advance_to(3.0).unwrap();
        let exact = (-1.7f64 * 3.0).exp();
        assert!((ig.y()[0] - exact).abs() < 1e-12);
        assert_eq!(ig.t(), 3.0);
    }

    #[test]
    fn checkpoints_do_not_change_the_answer_much() {
        let stepping = Stepping::Adaptive {
            rtol: 1e-12,
            atol: vec![1e-14],
        };
        let mut ig = Integrator::new(decay(0.5), 0.0, vec![1.0], stepping);
        for t in [0.5, 1.0, 2.0, 4.0] {
            ig.advance_to(t).unwrap();
        }
        assert!((ig.y()[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn zero_duration_is_identity() {
        let stepping = Stepping::Adaptive {
            rtol: 1e-12,
            atol: vec![1e-14],
        };
        let mut ig = Integrator::new(decay(1.0), 2.0, vec![0.3], stepping);
        ig.advance_to(2.0).unwrap();
        assert_eq!(ig.y(), &[0.3]);
        assert_eq!(ig.steps(), 0);
    }

    #[test]
    fn fixed_rk4_is_fourth_order() {
        let run = |h: f64| {
            let mut ig = Integrator::new(decay(1.0), 0.0, vec![1.0], Stepping::Fixed { h });
            ig.advance_to(1.0).unwrap();
            (ig.y()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "error ratio {ratio}");
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = t, y(0) = 0 -> y = t²/2.
        let stepping = Stepping::Adaptive {
            rtol: 1e-12,
            atol: vec![1e-14],
        };
        let mut ig = Integrator::new(|t: f64, _: &[f64], dy: &mut [f64]| dy[0] = t, 0.0, vec![0.0], stepping);
        ig.advance_to(2.0).unwrap();
        assert!((ig.y()[0] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn oscillator_energy() {
        let stepping = Stepping::Adaptive {
            rtol: 1e-11,
            atol: vec![1e-13; 2],
        };
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut ig = Integrator::new(rhs, 0.0, vec![1.0, 0.0], stepping);
        ig.advance_to(10.0).unwrap();
        assert!((ig.y()[0] - 10f64.cos()).abs() < 1e-9);
        assert!((ig.y()[1] + 10f64.sin()).abs() < 1e-9);
    }
}
