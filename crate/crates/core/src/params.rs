//! Physical parameters of the cascaded source/target system and the
//! dimensionless combinations derived from them.
//!
//! All rates share one user-chosen unit. The coupled-system Hamiltonian is
//! taken in the interaction picture with every transition on resonance.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    /// Intracavity Jaynes-Cummings coupling.
    pub g: f64,
    /// Cavity field half-width; photons leave at rate 2κ.
    pub kappa: f64,
    /// Total spontaneous emission rate of the external atom.
    pub gamma: f64,
    /// Sideways emission rate of the intracavity atom.
    pub gamma_s: f64,
    /// Coherent drive amplitude.
    pub eps_d: f64,
    /// Degree of focusing Γ.
    pub focusing: f64,
    /// Collection times detection efficiency.
    pub eta: f64,
    /// Local-oscillator phase.
    pub theta: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { g: 0.0, kappa: 1.0, gamma: 0.0, gamma_s: 0.0, eps_d: 0.0, focusing: 0.0, eta: 1.0, theta: 0.0 }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("gamma_s", self.gamma_s),
            ("eps_d", self.eps_d),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.focusing) {
            return Err(Error::InvalidParams(format!("focusing = {} outside [0, 1]", self.focusing)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParams(format!("eta = {} outside (0, 1]", self.eta)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParams("theta must be finite".into()));
        }
        if self.kappa == 0.0 {
            return Err(Error::MissingCavity);
        }
        Ok(())
    }

    /// Multiplies every rate and the drive by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            g: self.g * s,
            kappa: self.kappa * s,
            gamma: self.gamma * s,
            gamma_s: self.gamma_s * s,
            eps_d: self.eps_d * s,
            ..*self
        }
    }

    /// Drive seen by the external atom for intracavity amplitude `alpha`:
    /// Y = 2√(2κΓ/γ)·α.
    pub fn drive_for_field(&self, alpha: C64) -> C64 {
        if alpha == C64::new(0.0, 0.0) || self.focusing == 0.0 {
            return C64::new(0.0, 0.0);
        }
        alpha * 2.0 * (2.0 * self.kappa * self.focusing / self.gamma).sqrt()
    }

    /// Empty-cavity steady amplitude ε_d/κ.
    pub fn empty_cavity_amplitude(&self) -> f64 {
        self.eps_d / self.kappa
    }

    pub fn above_threshold(&self) -> bool {
        self.g > 0.0 && self.eps_d >= self.g / 2.0
    }
}

/// Dimensionless quantities derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Drive of the external atom by the empty-cavity field ε_d/κ.
    pub y: f64,
    /// δ = (γ/4)√(1−8Y²), kept complex on both sides of the exceptional point.
    pub delta: C64,
    /// Mapping cooperativity Γ/[2(1−Γ)]; absent at Γ = 1.
    pub coop_c: Option<f64>,
    /// Mapped coupling ḡ = √(κΓγ/2).
    pub g_bar: f64,
    /// Mapped sideways rate γ̄ₛ = (1−Γ)γ.
    pub gamma_s_bar: f64,
    /// Purcell factor g²/(κγₛ); absent when γₛ = 0.
    pub purcell_c: Option<f64>,
    /// Internal-atom drive Ȳ = 2√2·gε_d/(κγₛ); absent when γₛ = 0.
    pub y_bar: Option<f64>,
    /// Effective external-atom drive Ȳ″ after adiabatic elimination of the field.
    pub y_pp: f64,
    /// λ = (g/2ε_d)².
    pub lambda_crit: f64,
}

impl DerivedParams {
    pub fn coop_c(&self) -> Result<f64> {
        self.coop_c.ok_or(Error::DivergentCooperativity)
    }
}

pub fn derive(p: &SystemParams) -> Result<DerivedParams> {
    p.validate()?;
    let alpha = p.empty_cavity_amplitude();
    let y = p.drive_for_field(C64::new(alpha, 0.0)).re;
    // δ² = γ²/16 − γ²Y²/2, with γ²Y² = 8κΓγα² finite even at γ = 0.
    let delta = C64::new(p.gamma * p.gamma / 16.0 - 4.0 * p.kappa * p.focusing * p.gamma * alpha * alpha, 0.0).sqrt();
    let coop_c = (p.focusing < 1.0).then(|| p.focusing / (2.0 * (1.0 - p.focusing)));
    let (purcell_c, y_bar) = if p.gamma_s > 0.0 {
        (
            Some(p.g * p.g / (p.kappa * p.gamma_s)),
            Some(2.0 * std::f64::consts::SQRT_2 * p.g * p.eps_d / (p.kappa * p.gamma_s)),
        )
    } else {
        (None, None)
    };
    let lambda_crit = if p.g == 0.0 { 0.0 } else { (p.g / (2.0 * p.eps_d)).powi(2) };
    Ok(DerivedParams {
        y,
        delta,
        coop_c,
        g_bar: (p.kappa * p.focusing * p.gamma / 2.0).sqrt(),
        gamma_s_bar: (1.0 - p.focusing) * p.gamma,
        purcell_c,
        y_bar,
        y_pp: effective_drive(p, internal_polarization(p)),
        lambda_crit,
    })
}

/// Steady polarization ⟨σ̃1±⟩ of the intracavity atom with the field
/// adiabatically eliminated. Uses the Purcell-enhanced Bloch form when γₛ > 0
/// and its γₛ → 0 limit otherwise.
pub(crate) fn internal_polarization(p: &SystemParams) -> f64 {
    if p.g == 0.0 {
        return 0.0;
    }
    if p.gamma_s > 0.0 {
        let c = p.g * p.g / (p.kappa * p.gamma_s);
        let yb = 2.0 * std::f64::consts::SQRT_2 * p.g * p.eps_d / (p.kappa * p.gamma_s);
        let d = 1.0 + 2.0 * c;
        -yb * d / (std::f64::consts::SQRT_2 * (d * d + yb * yb))
    } else {
        let r = p.eps_d / p.g;
        -r / (1.0 + 2.0 * r * r)
    }
}

/// Ȳ″ = 2ε_d√(2Γ/(κγ))·[1 + (g/ε_d)⟨σ̃1+⟩].
pub(crate) fn effective_drive(p: &SystemParams, sigma1: f64) -> f64 {
    let amp = p.eps_d + p.g * sigma1;
    if amp == 0.0 || p.focusing == 0.0 {
        return 0.0;
    }
    2.0 * amp * (2.0 * p.focusing / (p.kappa * p.gamma)).sqrt()
}

/// Free-space resonance-fluorescence Bloch vector for drive `y`:
/// β = −(1/√2)·y/(1+|y|²), ζ = −1/(1+|y|²).
pub fn free_space_steady(y: C64) -> (C64, f64) {
    let d = 1.0 + y.norm_sqr();
    (-y / (std::f64::consts::SQRT_2 * d), -1.0 / d)
}

/// Steady intracavity field of the neoclassical equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldBranches {
    /// Below threshold, or empty cavity.
    Single(C64),
    /// Above threshold; `plus` has non-negative imaginary part and `minus` is its conjugate.
    Bimodal { plus: C64, minus: C64 },
}

impl FieldBranches {
    pub fn amplitudes(&self) -> Vec<C64> {
        match *self {
            FieldBranches::Single(a) => vec![a],
            FieldBranches::Bimodal { plus, minus } => vec![plus, minus],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

pub fn neoclassical_field(p: &SystemParams) -> FieldBranches {
    if p.g == 0.0 {
        return FieldBranches::Single(C64::new(p.eps_d / p.kappa, 0.0));
    }
    if !p.above_threshold() {
        return FieldBranches::Single(C64::new(0.0, 0.0));
    }
    let lambda = (p.g / (2.0 * p.eps_d)).powi(2);
    let s = (1.0 - lambda).max(0.0).sqrt();
    let re = p.eps_d / p.kappa * (1.0 - lambda);
    let im = p.g / (2.0 * p.kappa) * s;
    FieldBranches::Bimodal { plus: C64::new(re, im), minus: C64::new(re, -im) }
}

/// Mean-field steady state (α, β1, ζ1, β2, ζ2) on one field branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeoclassicalAtoms {
    pub alpha: C64,
    pub beta1: C64,
    pub zeta1: f64,
    pub beta2: C64,
    pub zeta2: f64,
    /// Drive of the external atom on this branch.
    pub y: C64,
}

impl NeoclassicalAtoms {
    pub fn pseudo_spin(&self) -> f64 {
        4.0 * self.beta1.norm_sqr() + self.zeta1 * self.zeta1
    }
}

pub fn neoclassical_atoms(p: &SystemParams, branch: Branch) -> Result<NeoclassicalAtoms> {
    let (alpha, beta1, zeta1) = if p.g == 0.0 {
        (C64::new(p.eps_d / p.kappa, 0.0), C64::new(0.0, 0.0), -1.0)
    } else if p.above_threshold() {
        let lambda = (p.g / (2.0 * p.eps_d)).powi(2);
        let s = (1.0 - lambda).max(0.0).sqrt();
        let alpha = match neoclassical_field(p) {
            FieldBranches::Bimodal { plus, minus } => match branch {
                Branch::Plus => plus,
                Branch::Minus => minus,
            },
            FieldBranches::Single(a) => a,
        };
        let beta1 = C64::new(-p.g / (4.0 * p.eps_d), branch.sign() * 0.5 * s);
        (alpha, beta1, 0.0)
    } else {
        return Err(Error::BelowThreshold { eps_d: p.eps_d, half_g: p.g / 2.0 });
    };
    let y = p.drive_for_field(alpha);
    let (beta2, zeta2) = free_space_steady(y);
    Ok(NeoclassicalAtoms { alpha, beta1, zeta1, beta2, zeta2, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(focusing: f64) -> SystemParams {
        SystemParams { kappa: 200.0, gamma: 1.0, eps_d: 50.0, focusing, ..Default::default() }
    }

    #[test]
    fn drive_matches_direct_substitution() {
        let p = fig2(0.4);
        let d = derive(&p).unwrap();
        let alpha = p.eps_d / p.kappa;
        let direct = 2.0 * (2.0 * p.kappa * p.focusing / p.gamma).sqrt() * alpha;
        assert!((d.y - direct).abs() < 1e-12 * direct);
        let alt = 2.0 * std::f64::consts::SQRT_2 * p.eps_d * (p.focusing / (p.kappa * p.gamma)).sqrt();
        assert!((d.y - alt).abs() < 1e-12 * alt);
    }

    #[test]
    fn delta_vanishes_at_exceptional_point() {
        // Choose ε_d so that Y = 1/(2√2) with κ = γ = 1, Γ = 1/2.
        let y = 1.0 / (2.0 * std::f64::consts::SQRT_2);
        let eps = y / (2.0 * std::f64::consts::SQRT_2 * 0.5f64.sqrt());
        let p = SystemParams { gamma: 1.0, eps_d: eps, focusing: 0.5, ..Default::default() };
        let d = derive(&p).unwrap();
        assert!((d.y - y).abs() < 1e-15);
        assert!(d.delta.norm() < 1e-7);
        assert_eq!(d.coop_c().unwrap(), 0.5);
    }

    #[test]
    fn cooperativity_diverges_at_full_focusing() {
        let d = derive(&fig2(1.0)).unwrap();
        assert_eq!(d.coop_c(), Err(Error::DivergentCooperativity));
    }

    #[test]
    fn zero_kappa_is_rejected() {
        let p = SystemParams { kappa: 0.0, ..Default::default() };
        assert_eq!(derive(&p), Err(Error::MissingCavity));
    }

    #[test]
    fn field_at_threshold_and_empty_cavity() {
        let p = SystemParams { g: 2.0, eps_d: 1.0, ..Default::default() };
        for a in neoclassical_field(&p).amplitudes() {
            assert_eq!(a.norm(), 0.0);
        }
        let p = SystemParams { eps_d: 0.3, kappa: 2.0, ..Default::default() };
        assert_eq!(neoclassical_field(&p), FieldBranches::Single(C64::new(0.15, 0.0)));
    }

    #[test]
    fn neoclassical_photon_number_in_strong_coupling_regime() {
        // g/κ = 100, ε_d/g = 0.501: |α|² = (ε_d/κ)²(1−λ) ≈ 10, well below the
        // quantum mean photon number of that regime.
        let p = SystemParams { g: 100.0, eps_d: 50.1, gamma: 40.0, focusing: 0.9, ..Default::default() };
        let a = neoclassical_field(&p).amplitudes()[0];
        let lambda = (p.g / (2.0 * p.eps_d)).powi(2);
        assert!((a.norm_sqr() - 50.1f64.powi(2) * (1.0 - lambda)).abs() < 1e-9);
        assert!((a.norm_sqr() - 10.02).abs() < 0.01);
    }

    #[test]
    fn atoms_zero_drive_and_below_threshold() {
        let p = SystemParams { gamma: 1.0, focusing: 0.5, ..Default::default() };
        let s = neoclassical_atoms(&p, Branch::Plus).unwrap();
        assert_eq!((s.beta2, s.zeta2), (C64::new(0.0, 0.0), -1.0));
        let p = SystemParams { g: 1.0, eps_d: 0.3, ..Default::default() };
        assert!(matches!(neoclassical_atoms(&p, Branch::Plus), Err(Error::BelowThreshold { .. })));
    }

    #[test]
    fn above_threshold_atoms_are_consistent() {
        let p = SystemParams { g: 100.0, eps_d: 60.0, gamma: 0.4, focusing: 0.95, ..Default::default() };
        for b in [Branch::Plus, Branch::Minus] {
            let s = neoclassical_atoms(&p, b).unwrap();
            assert!((s.pseudo_spin() - 1.0).abs() < 1e-14);
            assert_eq!(s.zeta1, 0.0);
            assert_eq!(s.alpha.im.signum(), s.beta1.im.signum());
            assert_eq!(s.alpha.im.signum(), -s.beta2.im.signum());
            assert!((s.zeta2 + 1.0 / s.y.norm_sqr()).abs() < 1.0 / s.y.norm_sqr().powi(2));
        }
    }

    #[test]
    fn effective_drive_limits() {
        let p = SystemParams { g: 0.0, eps_d: 0.04, gamma: 0.04 * 0.0156, focusing: 0.9, ..Default::default() };
        let d = derive(&p).unwrap();
        assert!((d.y_pp - d.y).abs() < 1e-12 * d.y);
        let p = SystemParams { g: 100.0, ..p };
        assert!(derive(&p).unwrap().y_pp < 1e-3 * d.y);
        // γₛ → 0 continuity of the Purcell branch.
        let p0 = SystemParams { g: 0.04, ..p };
        let p1 = SystemParams { gamma_s: 1e-9, ..p0 };
        let (a, b) = (derive(&p0).unwrap().y_pp, derive(&p1).unwrap().y_pp);
        assert!((a - b).abs() < 1e-6 * a);
    }
}
