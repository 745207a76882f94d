//! Adaptive Dormand–Prince 5(4) integrator for complex-valued systems, with
//! cubic Hermite interpolation over the last accepted step.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step as a fraction of the integration span.
    pub min_step_frac: f64,
    /// Largest admissible step; `f64::INFINITY` leaves it unbounded.
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, min_step_frac: 1e-12, max_step: f64::INFINITY }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub struct Dopri5<F> {
    f: F,
    t: f64,
    y: Vec<C64>,
    dy: Vec<C64>,
    h: f64,
    tol: Tolerances,
    min_step: f64,
    prev_t: f64,
    prev_y: Vec<C64>,
    prev_dy: Vec<C64>,
    k: [Vec<C64>; 5],
    scratch: Vec<C64>,
    y_new: Vec<C64>,
    dy_new: Vec<C64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F: FnMut(f64, &[C64], &mut [C64])> Dopri5<F> {
    /// Prepares integration from `(t0, y0)`; `span` sets the scale of the
    /// minimum-step guard.
    pub fn new(mut f: F, t0: f64, y0: Vec<C64>, span: f64, tol: Tolerances) -> Self {
        let n = y0.len();
        let mut dy = vec![C64::new(0.0, 0.0); n];
        f(t0, &y0, &mut dy);
        let ynorm = rms(&y0).max(tol.atol);
        let fnorm = rms(&dy);
        let mut h = if fnorm > 0.0 { 0.01 * ynorm / fnorm } else { span };
        h = h.min(span.abs()).min(tol.max_step).max(1e-14 * span.abs().max(1e-300));
        let zero = || vec![C64::new(0.0, 0.0); n];
        Self {
            f,
            t: t0,
            prev_t: t0,
            prev_y: y0.clone(),
            prev_dy: dy.clone(),
            y: y0,
            dy,
            h,
            tol,
            min_step: tol.min_step_frac * span.abs(),
            k: [zero(), zero(), zero(), zero(), zero()],
            scratch: zero(),
            y_new: zero(),
            dy_new: zero(),
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    /// Replaces the current state (e.g. after an instantaneous jump).
    pub fn reset_state(&mut self, y: &[C64]) {
        self.y.copy_from_slice(y);
        (self.f)(self.t, &self.y, &mut self.dy);
        self.prev_t = self.t;
        self.prev_y.copy_from_slice(&self.y);
        self.prev_dy.copy_from_slice(&self.dy);
    }

    /// Restarts from `(t, y)`, keeping the current step-size proposal.
    pub fn reset_at(&mut self, t: f64, y: &[C64]) {
        self.t = t;
        self.reset_state(y);
    }

    fn stage(&mut self, coeffs: &[(usize, f64)], h: f64) {
        for i in 0..self.y.len() {
            let mut acc = C64::new(0.0, 0.0);
            for &(j, a) in coeffs {
                let kj = if j == 0 { self.dy[i] } else { self.k[j - 1][i] };
                acc += kj * a;
            }
            self.scratch[i] = self.y[i] + acc * h;
        }
    }

    /// Takes one accepted step that does not pass `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        loop {
            let remaining = t_limit - self.t;
            let mut h = self.h.min(self.tol.max_step);
            let hitting = h >= remaining;
            if hitting {
                h = remaining;
            }
            if h < self.min_step && !hitting {
                return Err(Error::StiffnessFailure { time: self.t, step: h });
            }
            let t = self.t;
            self.stage(&[(0, A21)], h);
            (self.f)(t + C2 * h, &self.scratch, &mut self.k[0]);
            self.stage(&[(0, A31), (1, A32)], h);
            (self.f)(t + C3 * h, &self.scratch, &mut self.k[1]);
            self.stage(&[(0, A41), (1, A42), (2, A43)], h);
            (self.f)(t + C4 * h, &self.scratch, &mut self.k[2]);
            self.stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], h);
            (self.f)(t + C5 * h, &self.scratch, &mut self.k[3]);
            self.stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
            (self.f)(t + h, &self.scratch, &mut self.k[4]);
            self.stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], h);
            self.y_new.copy_from_slice(&self.scratch);
            (self.f)(t + h, &self.y_new, &mut self.dy_new);

            let mut err = 0.0;
            for i in 0..self.y.len() {
                let e = (self.dy[i] * E1
                    + self.k[1][i] * E3
                    + self.k[2][i] * E4
                    + self.k[3][i] * E5
                    + self.k[4][i] * E6
                    + self.dy_new[i] * E7)
                    * h;
                let sc = self.tol.atol + self.tol.rtol * self.y[i].norm().max(self.y_new[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / self.y.len().max(1) as f64).sqrt();
            if !err.is_finite() {
                self.h = h * 0.2;
                self.rejected += 1;
                if self.h < self.min_step {
                    return Err(Error::StiffnessFailure { time: self.t, step: self.h });
                }
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.prev_t = t;
                std::mem::swap(&mut self.prev_y, &mut self.y);
                std::mem::swap(&mut self.prev_dy, &mut self.dy);
                self.y.copy_from_slice(&self.y_new);
                self.dy.copy_from_slice(&self.dy_new);
                self.t = if hitting { t_limit } else { t + h };
                self.accepted += 1;
                // Keep the controller's proposal rather than the clipped step.
                if !hitting || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(());
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
            if self.h < self.min_step {
                return Err(Error::StiffnessFailure { time: self.t, step: self.h });
            }
        }
    }

    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t < t_target {
            self.step(t_target)?;
        }
        Ok(())
    }

    /// Cubic Hermite interpolant over the last accepted step at `t`.
    pub fn interpolate(&self, t: f64, out: &mut [C64]) {
        let h = self.t - self.prev_t;
        if h == 0.0 {
            out.copy_from_slice(&self.y);
            return;
        }
        let s = (t - self.prev_t) / h;
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        for i in 0..out.len() {
            out[i] = self.prev_y[i] * h00 + self.prev_dy[i] * (h10 * h) + self.y[i] * h01 + self.dy[i] * (h11 * h);
        }
    }

    pub fn previous_time(&self) -> f64 {
        self.prev_t
    }
}

fn rms(v: &[C64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x.norm_sqr()).sum::<f64>() / v.len() as f64).sqrt()
}

/// Integrates from `t0` through the ascending `times`, calling `visit` with the
/// state at each requested time.
pub fn integrate<F, V>(f: F, t0: f64, y0: Vec<C64>, times: &[f64], tol: Tolerances, mut visit: V) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    V: FnMut(usize, f64, &[C64]),
{
    let span = times.last().map(|&t| t - t0).unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let mut solver = Dopri5::new(f, t0, y0, span, tol);
    for (i, &t) in times.iter().enumerate() {
        solver.advance_to(t)?;
        visit(i, t, solver.y());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_oscillator_matches_exponential() {
        let w = C64::new(-0.3, 2.0);
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let mut max_err: f64 = 0.0;
        integrate(
            |_, y, dy| dy[0] = w * y[0],
            0.0,
            vec![C64::new(1.0, 0.0)],
            &times,
            Tolerances { rtol: 1e-11, atol: 1e-14, ..Default::default() },
            |_, t, y| max_err = max_err.max((y[0] - (w * t).exp()).norm()),
        )
        .unwrap();
        assert!(max_err < 1e-9, "max error {max_err}");
    }

    #[test]
    fn interpolation_is_third_order_accurate() {
        let mut s = Dopri5::new(|_, y: &[C64], dy: &mut [C64]| dy[0] = -y[0], 0.0, vec![C64::new(1.0, 0.0)], 1.0, Tolerances::default());
        s.step(1.0).unwrap();
        let mid = 0.5 * (s.previous_time() + s.t());
        let mut out = [C64::new(0.0, 0.0)];
        s.interpolate(mid, &mut out);
        let h = s.t() - s.previous_time();
        assert!((out[0].re - (-mid).exp()).abs() < 0.05 * h.powi(4) + 1e-9);
    }

    #[test]
    fn collapse_is_reported() {
        // Finite-time blow-up forces ever smaller steps.
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            vec![C64::new(1.0, 0.0)],
            &[2.0],
            Tolerances::default(),
            |_, _, _| {},
        );
        assert!(matches!(r, Err(Error::StiffnessFailure { .. })));
    }
}
