//! Semiclassical layer: factorized equations of motion for the field and both
//! atoms, steady states after adiabatic elimination of the cavity field, and
//! scaling of the bimodal steady state across the critical drive.

use std::f64::consts::SQRT_2;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::params::{
    effective_drive, free_space_steady, internal_polarization, neoclassical_atoms, Branch, SystemParams,
};

/// Mean values (⟨a⟩, ⟨σ1−⟩, ⟨σ1z⟩, ⟨σ2−⟩, ⟨σ2z⟩).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldState {
    pub alpha: C64,
    pub beta1: C64,
    pub zeta1: f64,
    pub beta2: C64,
    pub zeta2: f64,
}

const INVARIANT_SLACK: f64 = 1e-9;

impl MeanFieldState {
    /// Empty cavity, both atoms in the ground state.
    pub fn ground() -> Self {
        Self { alpha: C64::new(0.0, 0.0), beta1: C64::new(0.0, 0.0), zeta1: -1.0, beta2: C64::new(0.0, 0.0), zeta2: -1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.zeta1.abs() <= 1.0 + INVARIANT_SLACK
            && self.zeta2.abs() <= 1.0 + INVARIANT_SLACK
            && self.beta1.norm() <= 0.5 + INVARIANT_SLACK
            && self.beta2.norm() <= 0.5 + INVARIANT_SLACK
            && self.alpha.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("mean-field state outside the Bloch ball: {self:?}")))
        }
    }

    /// 4|β1|² + ζ1², conserved when γₛ = 0.
    pub fn pseudo_spin(&self) -> f64 {
        4.0 * self.beta1.norm_sqr() + self.zeta1 * self.zeta1
    }

    fn pack(&self) -> Vec<C64> {
        vec![self.alpha, self.beta1, C64::new(self.zeta1, 0.0), self.beta2, C64::new(self.zeta2, 0.0)]
    }

    fn unpack(y: &[C64]) -> Self {
        Self { alpha: y[0], beta1: y[1], zeta1: y[2].re, beta2: y[3], zeta2: y[4].re }
    }
}

/// Right-hand side of the factorized equations of motion.
pub fn meanfield_rhs(p: &SystemParams, s: &MeanFieldState) -> MeanFieldState {
    let k = (p.kappa * p.gamma * p.focusing).sqrt();
    let a = s.alpha;
    MeanFieldState {
        alpha: -p.kappa * a + p.g * s.beta1 + p.eps_d,
        beta1: -0.5 * p.gamma_s * s.beta1 + p.g * a * s.zeta1,
        zeta1: -p.gamma_s * (s.zeta1 + 1.0) - 4.0 * p.g * (a.conj() * s.beta1).re,
        beta2: -0.5 * p.gamma * s.beta2 + k * a * s.zeta2,
        zeta2: -p.gamma * (s.zeta2 + 1.0) - 4.0 * k * (a.conj() * s.beta2).re,
    }
}

/// Euclidean norm of the right-hand side at `s`.
pub fn fixed_point_residual(p: &SystemParams, s: &MeanFieldState) -> f64 {
    let d = meanfield_rhs(p, s);
    (d.alpha.norm_sqr() + d.beta1.norm_sqr() + d.zeta1.powi(2) + d.beta2.norm_sqr() + d.zeta2.powi(2)).sqrt()
}

pub fn meanfield_tolerances() -> Tolerances {
    Tolerances { rtol: 1e-12, atol: 1e-14, ..Default::default() }
}

/// Integrates the mean-field equations from `initial` at t = 0 through the
/// ascending `t_grid`.
pub fn integrate_meanfield(p: &SystemParams, initial: &MeanFieldState, t_grid: &[f64]) -> Result<Vec<MeanFieldState>> {
    p.validate()?;
    initial.validate()?;
    let mut out = Vec::with_capacity(t_grid.len());
    let rhs = |_: f64, y: &[C64], dy: &mut [C64]| {
        let d = meanfield_rhs(p, &MeanFieldState::unpack(y));
        dy.copy_from_slice(&d.pack());
    };
    ode::integrate(rhs, 0.0, initial.pack(), t_grid, meanfield_tolerances(), |_, _, y| {
        out.push(MeanFieldState::unpack(y))
    })?;
    Ok(out)
}

/// Steady state with the cavity field adiabatically eliminated and moments
/// factorized between the two atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdiabaticSteadyState {
    pub beta1: f64,
    pub zeta1: f64,
    pub beta2: f64,
    pub zeta2: f64,
    /// Ȳ = 2√2·gε_d/(κγₛ); absent when γₛ = 0.
    pub y_bar: Option<f64>,
    /// Ȳ′ = Ȳ/(1+2C) = 2√2·gε_d/(κγₛ + 2g²), finite as γₛ → 0.
    pub y_prime: f64,
    /// Drive of the external atom Ȳ″.
    pub y_pp: f64,
    /// Purcell factor g²/(κγₛ); absent when γₛ = 0.
    pub purcell_c: Option<f64>,
}

pub fn adiabatic_steady_state(p: &SystemParams) -> Result<AdiabaticSteadyState> {
    p.validate()?;
    let scale = p.eps_d.max(p.g).max(p.gamma_s / 2.0);
    if p.kappa < 10.0 * scale {
        log::warn!("adiabatic elimination outside the bad-cavity hierarchy: kappa = {}, max(eps_d, g, gamma_s/2) = {}", p.kappa, scale);
    }
    let denom = p.kappa * p.gamma_s + 2.0 * p.g * p.g;
    let y_prime = if denom > 0.0 { 2.0 * SQRT_2 * p.g * p.eps_d / denom } else { 0.0 };
    let beta1 = internal_polarization(p);
    let zeta1 = -1.0 / (1.0 + y_prime * y_prime);
    let y_pp = effective_drive(p, beta1);
    let (b2, zeta2) = free_space_steady(C64::new(y_pp, 0.0));
    let (purcell_c, y_bar) = if p.gamma_s > 0.0 {
        (Some(p.g * p.g / (p.kappa * p.gamma_s)), Some(2.0 * SQRT_2 * p.g * p.eps_d / (p.kappa * p.gamma_s)))
    } else {
        (None, None)
    };
    Ok(AdiabaticSteadyState { beta1, zeta1, beta2: b2.re, zeta2, y_bar, y_prime, y_pp, purcell_c })
}

/// Ȳ″ in the γₛ → 0 limit: 2ε_d√(2Γ/(κγ))[1 − 1/(1 + 2(ε_d/g)²)].
pub fn y_pp_gamma_s_zero(p: &SystemParams) -> f64 {
    if p.focusing == 0.0 || p.gamma == 0.0 {
        return 0.0;
    }
    let bracket = if p.g == 0.0 { 1.0 } else { 1.0 - 1.0 / (1.0 + 2.0 * (p.eps_d / p.g).powi(2)) };
    2.0 * p.eps_d * (2.0 * p.focusing / (p.kappa * p.gamma)).sqrt() * bracket
}

/// Time derivatives of the adiabatically eliminated Bloch equations for both
/// atoms, at (β1, ζ1, β2, ζ2).
pub fn adiabatic_rhs(p: &SystemParams, beta1: C64, zeta1: f64, beta2: C64, zeta2: f64) -> (C64, f64, C64, f64) {
    let ge = p.g * p.eps_d / p.kappa;
    let gg = p.g * p.g / p.kappa;
    let d_beta1 = -(0.5 * p.gamma_s + gg) * beta1 + ge * zeta1;
    let d_zeta1 = -(p.gamma_s + 2.0 * gg) * (zeta1 + 1.0) - 2.0 * ge * (beta1 + beta1.conj()).re;
    let k = if p.gamma > 0.0 { (p.gamma * p.focusing / p.kappa).sqrt() } else { 0.0 };
    let amp = p.eps_d + p.g * beta1;
    let d_beta2 = -0.5 * p.gamma * beta2 + k * amp * zeta2;
    let d_zeta2 = -p.gamma * (zeta2 + 1.0) - 4.0 * k * (amp.conj() * beta2).re;
    (d_beta1, d_zeta1, d_beta2, d_zeta2)
}

pub fn adiabatic_residual(p: &SystemParams, st: &AdiabaticSteadyState) -> f64 {
    let (a, b, c, d) = adiabatic_rhs(p, C64::new(st.beta1, 0.0), st.zeta1, C64::new(st.beta2, 0.0), st.zeta2);
    (a.norm_sqr() + b * b + c.norm_sqr() + d * d).sqrt()
}

/// Power-law fits of the bimodal steady state against |λ − λ_c|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub field_exponent: f64,
    pub beta2_exponent: f64,
    pub zeta2_exponent: f64,
    pub field_points: usize,
    pub external_points: usize,
    /// Largest |ζ1| over the above-threshold sweep.
    pub zeta1_max_abs: f64,
    /// Largest ||β1| − 1/2| over the above-threshold sweep.
    pub beta1_modulus_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingWindows {
    /// Field fit uses points with |λ − λ_c| at most this.
    pub field_window: f64,
    /// External-atom fits use points with |Y| at least this.
    pub min_abs_y: f64,
    pub min_points: usize,
}

impl Default for ScalingWindows {
    fn default() -> Self {
        Self { field_window: 0.05, min_abs_y: 10.0, min_points: 8 }
    }
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn critical_scaling(sweep: &[SystemParams]) -> Result<ScalingReport> {
    critical_scaling_with(sweep, &ScalingWindows::default())
}

pub fn critical_scaling_with(sweep: &[SystemParams], w: &ScalingWindows) -> Result<ScalingReport> {
    let mut field = (Vec::new(), Vec::new());
    let mut ext = (Vec::new(), Vec::new(), Vec::new());
    let mut zeta1_max_abs: f64 = 0.0;
    let mut beta1_modulus_dev: f64 = 0.0;
    for p in sweep {
        if p.g == 0.0 || !p.above_threshold() {
            continue;
        }
        let lambda = (p.g / (2.0 * p.eps_d)).powi(2);
        let dist = (lambda - 1.0).abs();
        if dist == 0.0 {
            continue;
        }
        let st = neoclassical_atoms(p, Branch::Plus)?;
        zeta1_max_abs = zeta1_max_abs.max(st.zeta1.abs());
        beta1_modulus_dev = beta1_modulus_dev.max((st.beta1.norm() - 0.5).abs());
        if dist <= w.field_window {
            field.0.push(dist);
            field.1.push(st.alpha.im.abs());
        }
        if st.y.norm() >= w.min_abs_y {
            ext.0.push(dist);
            ext.1.push(st.beta2.norm());
            ext.2.push(st.zeta2.abs());
        }
    }
    let needed = w.min_points;
    let short = field.0.len().min(ext.0.len());
    if short < needed {
        return Err(Error::InsufficientWindow { points: short, needed });
    }
    Ok(ScalingReport {
        field_exponent: loglog_slope(&field.0, &field.1),
        beta2_exponent: loglog_slope(&ext.0, &ext.1),
        zeta2_exponent: loglog_slope(&ext.0, &ext.2),
        field_points: field.0.len(),
        external_points: ext.0.len(),
        zeta1_max_abs,
        beta1_modulus_dev,
    })
}

/// Above-threshold sweep at fixed ε_d, varying g so that 1 − λ is
/// log-spaced over [lo, hi].
pub fn lambda_sweep(base: &SystemParams, lo: f64, hi: f64, n: usize) -> Vec<SystemParams> {
    (0..n)
        .map(|i| {
            let f = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            let dist = (lo.ln() + f * (hi.ln() - lo.ln())).exp();
            let lambda = 1.0 - dist;
            SystemParams { g: 2.0 * base.eps_d * lambda.sqrt(), ..*base }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, neoclassical_field, FieldBranches};

    fn strong(eps_ratio: f64, focusing: f64) -> SystemParams {
        SystemParams { g: 100.0, kappa: 1.0, gamma: 40.0, eps_d: eps_ratio * 100.0, focusing, ..Default::default() }
    }

    #[test]
    fn undriven_ground_state_is_fixed() {
        let p = SystemParams { g: 2.0, gamma: 1.0, gamma_s: 0.3, focusing: 0.5, ..Default::default() };
        let out = integrate_meanfield(&p, &MeanFieldState::ground(), &[1.0, 10.0]).unwrap();
        assert_eq!(out[1], MeanFieldState::ground());
    }

    #[test]
    fn empty_cavity_field_is_exact() {
        let p = SystemParams { kappa: 2.0, gamma: 1.0, eps_d: 0.7, focusing: 0.5, ..Default::default() };
        let ts: Vec<f64> = (1..=20).map(|k| k as f64 * 0.25).collect();
        let out = integrate_meanfield(&p, &MeanFieldState::ground(), &ts).unwrap();
        for (s, t) in out.iter().zip(&ts) {
            let exact = p.eps_d / p.kappa * (1.0 - (-p.kappa * t).exp());
            assert!((s.alpha - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn pseudo_spin_is_conserved_without_sideways_loss() {
        let p = SystemParams { g: 3.0, kappa: 1.0, gamma: 0.5, eps_d: 1.0, focusing: 0.7, ..Default::default() };
        let s0 = MeanFieldState { alpha: C64::new(0.0, 0.1), beta1: C64::new(0.2, 0.1), zeta1: -0.5, ..MeanFieldState::ground() };
        let l0 = s0.pseudo_spin();
        let ts: Vec<f64> = (1..=200).map(|k| k as f64 * 5.0).collect();
        let out = integrate_meanfield(&p, &s0, &ts).unwrap();
        let dev = out.iter().map(|s| (s.pseudo_spin() - l0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "pseudo-spin drift {dev}");
    }

    #[test]
    fn bimodal_branches_are_fixed_points() {
        for &(r, f) in &[(0.501, 0.1), (0.501, 0.9), (0.8, 0.5)] {
            let p = strong(r, f);
            for b in [Branch::Plus, Branch::Minus] {
                let st = neoclassical_atoms(&p, b).unwrap();
                let s = MeanFieldState { alpha: st.alpha, beta1: st.beta1, zeta1: st.zeta1, beta2: st.beta2, zeta2: st.zeta2 };
                assert!(fixed_point_residual(&p, &s) < 1e-10 * p.g.max(p.kappa));
            }
        }
    }

    #[test]
    fn bimodal_branch_is_stationary_under_integration() {
        let p = SystemParams { g: 4.0, kappa: 1.0, gamma: 1.0, eps_d: 3.0, focusing: 0.5, ..Default::default() };
        let FieldBranches::Bimodal { plus, .. } = neoclassical_field(&p) else { panic!("expected bimodal field") };
        let st = neoclassical_atoms(&p, Branch::Plus).unwrap();
        let s0 = MeanFieldState { alpha: st.alpha, beta1: st.beta1, zeta1: st.zeta1, beta2: st.beta2, zeta2: st.zeta2 };
        let out = integrate_meanfield(&p, &s0, &[10.0, 100.0]).unwrap();
        assert!((out[1].alpha - plus).norm() < 1e-8, "{}", out[1].alpha);
    }

    #[test]
    fn adiabatic_state_solves_eliminated_equations() {
        let cases = [
            SystemParams { g: 1.0, kappa: 100.0, gamma: 1.0, gamma_s: 0.5, eps_d: 2.0, focusing: 0.9, ..Default::default() },
            SystemParams { g: 0.5, kappa: 50.0, gamma: 0.0156, gamma_s: 0.25, eps_d: 1.0, focusing: 0.9, ..Default::default() },
            SystemParams { g: 1.0, kappa: 25.0, gamma: 0.0156, eps_d: 1.0, focusing: 0.9, ..Default::default() },
        ];
        for p in &cases {
            let st = adiabatic_steady_state(p).unwrap();
            assert!(adiabatic_residual(p, &st) < 1e-10, "{}", adiabatic_residual(p, &st));
            let (b, z) = free_space_steady(C64::new(st.y_prime, 0.0));
            assert!((b.re - st.beta1).abs() < 1e-14 && (z - st.zeta1).abs() < 1e-14);
            assert!((st.y_pp - derive(p).unwrap().y_pp).abs() < 1e-14);
        }
        let p = &cases[2];
        assert!((adiabatic_steady_state(p).unwrap().y_pp - y_pp_gamma_s_zero(p)).abs() < 1e-12);
    }

    #[test]
    fn effective_drive_limits() {
        let p = SystemParams { kappa: 100.0, gamma: 1.0, eps_d: 2.0, focusing: 0.9, ..Default::default() };
        let st = adiabatic_steady_state(&p).unwrap();
        assert!((st.y_pp - derive(&p).unwrap().y).abs() < 1e-14);
        let tiny = SystemParams { g: 1e3, ..p };
        assert!(y_pp_gamma_s_zero(&tiny) < 1e-5 * y_pp_gamma_s_zero(&SystemParams { g: 1e-3, ..p }));
    }

    #[test]
    fn scaling_exponents() {
        let base = SystemParams { kappa: 1.0, gamma: 40.0, eps_d: 50.0, focusing: 0.9, ..Default::default() };
        let sweep = lambda_sweep(&base, 1e-4, 0.99, 60);
        let r = critical_scaling(&sweep).unwrap();
        assert!((r.field_exponent - 0.5).abs() < 0.02, "{r:?}");
        assert!((r.beta2_exponent + 0.5).abs() < 0.05, "{r:?}");
        assert!((r.zeta2_exponent + 1.0).abs() < 0.05, "{r:?}");
        assert!(r.zeta1_max_abs == 0.0 && r.beta1_modulus_dev < 1e-14);
        let few = lambda_sweep(&base, 1e-4, 0.99, 6);
        assert!(matches!(critical_scaling(&few), Err(Error::InsufficientWindow { .. })));
    }
}
