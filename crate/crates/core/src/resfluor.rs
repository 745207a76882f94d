//! Closed-form resonance fluorescence of the external atom driven by the
//! empty-cavity output: Bloch-matrix eigensystem, first- and second-order
//! correlators, incoherent and squeezing spectra, quadrature variances and
//! intensity correlations of both output channels.
//!
//! Time arguments are physical (τ in units of 1/γ scaled by the caller's γ);
//! spectral arguments are ω̄ = 2ω/γ measured from the atomic resonance.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Matrix2, Matrix3};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::params::{derive, SystemParams};

/// |1 − 8Y²| below this is treated as the exceptional point. Rounding in
/// 1 − 8Y² alone leaves |δ|/γ near 1e−9, so the test is made on δ²/(γ/4)².
pub const EXCEPTIONAL_TOL: f64 = 1e-12;
/// Below this |δ̄| the critical spectrum is used directly.
const CRITICAL_SPECTRUM_TOL: f64 = 1e-8;

/// `(cosh δτ, sinh(δτ)/δ)` for real δ² of either sign, continuous through δ = 0.
fn ep_pair(delta_sq: f64, tau: f64) -> (f64, f64) {
    let x2 = delta_sq * tau * tau;
    if x2.abs() < 1e-6 {
        let ch = 1.0 + x2 / 2.0 + x2 * x2 / 24.0 + x2 * x2 * x2 / 720.0;
        let sc = 1.0 + x2 / 6.0 + x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0;
        return (ch, tau * sc);
    }
    let s = delta_sq.abs().sqrt();
    if delta_sq > 0.0 {
        ((s * tau).cosh(), (s * tau).sinh() / s)
    } else {
        ((s * tau).cos(), (s * tau).sin() / s)
    }
}

/// `x/(x² + ω²)` for complex `x`.
fn lorentz(x: C64, w: f64) -> C64 {
    x / (x * x + w * w)
}

/// Two-time correlators of a resonantly driven two-level atom with drive `y`
/// and decay rate `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticCorrelators {
    pub gamma: f64,
    pub y: f64,
}

impl AnalyticCorrelators {
    pub fn new(gamma: f64, y: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
        }
        if !(y >= 0.0 && y.is_finite()) {
            return Err(Error::InvalidParams(format!("Y must be non-negative, got {y}")));
        }
        Ok(Self { gamma, y })
    }

    pub fn from_params(p: &SystemParams) -> Result<Self> {
        let d = derive(p)?;
        Self::new(p.gamma, d.y)
    }

    /// δ² = (γ/4)²(1 − 8Y²).
    pub fn delta_sq(&self) -> f64 {
        (self.gamma / 4.0).powi(2) * (1.0 - 8.0 * self.y * self.y)
    }

    pub fn delta(&self) -> C64 {
        C64::new(self.delta_sq(), 0.0).sqrt()
    }

    /// δ̄ = 2δ/γ.
    pub fn delta_bar(&self) -> C64 {
        C64::new(1.0 - 8.0 * self.y * self.y, 0.0).sqrt() / 2.0
    }

    /// Steady `(⟨σ̃±⟩, ⟨σz⟩)`.
    pub fn steady_bloch(&self) -> (f64, f64) {
        let d = 1.0 + self.y * self.y;
        (-self.y / (SQRT_2 * d), -1.0 / d)
    }

    /// ⟨σ+σ−⟩ in the steady state.
    pub fn excited_population(&self) -> f64 {
        let y2 = self.y * self.y;
        0.5 * y2 / (1.0 + y2)
    }

    /// `⟨Δσ̃+Δs⟩` at τ = 0 for s = (σ̃−, σ̃+, σz).
    pub fn initial_vector(&self) -> [f64; 3] {
        let y2 = self.y * self.y;
        let k = 0.5 * y2 / (1.0 + y2).powi(2);
        [k * y2, -k, k * SQRT_2 * self.y]
    }

    fn decay(&self, tau: f64) -> (f64, f64, f64) {
        let (ch, sh) = ep_pair(self.delta_sq(), tau);
        ((-0.75 * self.gamma * tau).exp(), ch, sh)
    }

    /// Shared decaying part of ⟨Δσ̃+Δσ̃∓(τ)⟩:
    /// [1−Y² ± (γ/4δ)(1−5Y²)]e^{−(3γ/4∓δ)τ} summed over both signs.
    fn pair_part(&self, tau: f64) -> f64 {
        let y2 = self.y * self.y;
        let (e, ch, sh) = self.decay(tau);
        e * (2.0 * (1.0 - y2) * ch + 0.5 * self.gamma * (1.0 - 5.0 * y2) * sh)
    }

    /// ⟨Δσ̃+(0)Δσ̃−(τ)⟩.
    pub fn pm(&self, tau: f64) -> f64 {
        let y2 = self.y * self.y;
        let d = 1.0 + y2;
        0.25 * y2 / d * (-0.5 * self.gamma * tau).exp() - 0.125 * y2 / (d * d) * self.pair_part(tau)
    }

    /// ⟨Δσ̃+(0)Δσ̃+(τ)⟩.
    pub fn pp(&self, tau: f64) -> f64 {
        let y2 = self.y * self.y;
        let d = 1.0 + y2;
        -0.25 * y2 / d * (-0.5 * self.gamma * tau).exp() - 0.125 * y2 / (d * d) * self.pair_part(tau)
    }

    fn pz_weighted(&self, tau: f64, weight: f64) -> f64 {
        let y = self.y;
        let (e, ch, sh) = self.decay(tau);
        y.powi(3) / (2.0 * SQRT_2 * (1.0 + y * y).powi(2)) * e * (2.0 * ch - 0.5 * self.gamma * weight * sh)
    }

    /// ⟨Δσ̃+(0)Δσz(τ)⟩, weight (2Y²−1) on the γ/4δ terms.
    pub fn pz(&self, tau: f64) -> f64 {
        self.pz_weighted(tau, 2.0 * self.y * self.y - 1.0)
    }

    /// ⟨Δσ̃+(0)Δσz(τ)⟩ with the weight written as (2−Y). Coincides with
    /// [`Self::pz`] only at Y = 1; kept for comparison.
    pub fn pz_literal(&self, tau: f64) -> f64 {
        self.pz_weighted(tau, 2.0 - self.y)
    }

    /// ⟨σ+(0)σz(τ)σ−(0)⟩.
    pub fn z_sandwich(&self, tau: f64) -> f64 {
        let y2 = self.y * self.y;
        let (e, ch, sh) = self.decay(tau);
        -0.5 * y2 / (1.0 + y2).powi(2) * (1.0 + y2 * e * (ch + 0.75 * self.gamma * sh))
    }

    /// ⟨σ+(0)σ̃±(τ)σ−(0)⟩ (both signs coincide on resonance).
    pub fn pm_sandwich(&self, tau: f64) -> f64 {
        let y = self.y;
        let d = 1.0 + y * y;
        let (e, ch, sh) = self.decay(tau);
        -y.powi(3) / (2.0 * SQRT_2 * d * d) * (1.0 - e * (ch + 0.75 * self.gamma * sh))
            - y.powi(3) / (SQRT_2 * d) * e * 0.25 * self.gamma * sh
    }

    /// Normalized intensity correlation g²(τ) of free-space fluorescence.
    pub fn g2_ss(&self, tau: f64) -> f64 {
        let (e, ch, sh) = self.decay(tau);
        1.0 - e * (ch + 0.75 * self.gamma * sh)
    }

    /// Unit-area incoherent spectrum at ω̄ (measured from resonance).
    pub fn incoherent_spectrum(&self, w: f64) -> Result<f64> {
        let y2 = self.y * self.y;
        if y2 <= 0.0 {
            return Err(Error::InvalidParams("incoherent spectrum needs Y > 0".into()));
        }
        let db = self.delta_bar();
        if db.norm() < CRITICAL_SPECTRUM_TOL {
            return Ok(critical_incoherent_spectrum(w));
        }
        let a = C64::new(1.5, 0.0);
        let (xp, xm) = (a - db, a + db);
        let sum = lorentz(xp, w) + lorentz(xm, w);
        // [L(x+) − L(x−)]/δ̄ written without the division.
        let diff = (xp * xm - w * w) * 2.0 / ((xp * xp + w * w) * (xm * xm + w * w));
        let pair = 0.5 * ((1.0 / y2 - 1.0) * sum + 0.5 * (1.0 / y2 - 5.0) * diff);
        Ok(((1.0 + y2) / y2 / (1.0 + w * w) - pair.re) / (2.0 * PI))
    }

    /// Incoherent spectrum evaluated term by term with complex δ̄; singular at
    /// the exceptional point. Returns the full complex value so the imaginary
    /// residue can be inspected.
    pub fn incoherent_spectrum_complex(&self, w: f64) -> C64 {
        let y2 = self.y * self.y;
        let db = self.delta_bar();
        let wp = C64::new(1.0 / y2 - 1.0, 0.0) + (1.0 / y2 - 5.0) / (2.0 * db);
        let wm = C64::new(1.0 / y2 - 1.0, 0.0) - (1.0 / y2 - 5.0) / (2.0 * db);
        let tp = (0.75 - db / 2.0) / ((1.5 - db).powi(2) + w * w);
        let tm = (0.75 + db / 2.0) / ((1.5 + db).powi(2) + w * w);
        ((1.0 + y2) / y2 / (1.0 + w * w) - wp * tp - wm * tm) / (2.0 * PI)
    }

    /// Squeezing spectrum for local-oscillator phase `theta`, per unit
    /// prefactor (8η/π)(Γγ/2); multiply by [`squeezing_prefactor`] for the
    /// physical value.
    pub fn squeezing_kernel(&self, theta: f64, w: f64) -> f64 {
        let c = theta.cos().powi(2);
        let s = theta.sin().powi(2);
        c * self.squeezing_kernel_in_phase(w) + s * self.squeezing_kernel_quadrature(w)
    }

    /// ∫cos(ω̄τ̄)(pm + pp)dτ̄.
    pub fn squeezing_kernel_in_phase(&self, w: f64) -> f64 {
        let y2 = self.y * self.y;
        let db = self.delta_bar();
        let a = C64::new(1.5, 0.0);
        let (xp, xm) = (a - db, a + db);
        let sum = lorentz(xp, w) + lorentz(xm, w);
        let diff = (xp * xm - w * w) * 2.0 / ((xp * xp + w * w) * (xm * xm + w * w));
        let braces = (1.0 - y2) * sum + 0.5 * (1.0 - 5.0 * y2) * diff;
        -0.25 * y2 / (1.0 + y2).powi(2) * braces.re
    }

    /// ∫cos(ω̄τ̄)(pm − pp)dτ̄.
    pub fn squeezing_kernel_quadrature(&self, w: f64) -> f64 {
        let y2 = self.y * self.y;
        0.5 * y2 / (1.0 + y2) / (1.0 + w * w)
    }

    /// Right-hand side of the incoherent/squeezing link, using the kernels
    /// directly: [S(θ) + S(θ+π/2)]/(16η⟨ΔC†ΔC⟩).
    pub fn sum_rule_spectrum(&self, theta: f64, w: f64) -> f64 {
        let y2 = self.y * self.y;
        let fluct = 0.5 * y2 * y2 / (1.0 + y2).powi(2);
        let total = self.squeezing_kernel(theta, w) + self.squeezing_kernel(theta + PI / 2.0, w);
        8.0 / PI * total / (16.0 * fluct)
    }

    /// Bloch-matrix eigensystem for the same (γ, Y).
    pub fn eigensystem(&self) -> BlochMatrix {
        BlochMatrix::new(self.gamma, self.y)
    }
}

/// Incoherent spectrum at the exceptional point Y² = 1/8.
pub fn critical_incoherent_spectrum(w: f64) -> f64 {
    let w2 = w * w;
    9.0 / (2.0 * PI) * (1.0 / (1.0 + w2) - (3.0 + w2) / (2.25 + w2).powi(2))
}

/// (8η/π)(Γγ/2).
pub fn squeezing_prefactor(p: &SystemParams) -> f64 {
    8.0 * p.eta / PI * (p.focusing * p.gamma / 2.0)
}

/// Eigenvector coefficients of the Bloch matrix away from the exceptional point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenCoefficients {
    pub a2: C64,
    pub a3: C64,
    pub a2p: C64,
    pub a3p: C64,
    pub c2c2p: C64,
    pub c3c3p: C64,
}

/// Bloch matrix M of the fluctuations (σ̃−, σ̃+, σz) and its eigensystem.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochMatrix {
    pub gamma: f64,
    pub y: f64,
    pub m: Matrix3<f64>,
    pub delta: C64,
    pub eigenvalues: [C64; 3],
    /// Absent at the exceptional point, where M is not diagonalizable.
    pub coefficients: Option<EigenCoefficients>,
}

impl BlochMatrix {
    pub fn new(gamma: f64, y: f64) -> Self {
        let r = y / SQRT_2;
        let m = Matrix3::new(1.0, 0.0, -r, 0.0, 1.0, -r, SQRT_2 * y, SQRT_2 * y, 2.0) * (-gamma / 2.0);
        let delta = C64::new((gamma / 4.0).powi(2) * (1.0 - 8.0 * y * y), 0.0).sqrt();
        let l23 = C64::new(-0.75 * gamma, 0.0);
        let eigenvalues = [C64::new(-gamma / 2.0, 0.0), l23 + delta, l23 - delta];
        let coefficients = ((1.0 - 8.0 * y * y).abs() >= EXCEPTIONAL_TOL && y > 0.0).then(|| {
            let q = gamma / 4.0;
            let s = 2.0 * SQRT_2 / (y * gamma);
            EigenCoefficients {
                a2: (delta - q) * s,
                a3: -(delta + q) * s,
                a2p: (q - delta) * (s / 2.0),
                a3p: (q + delta) * (s / 2.0),
                c2c2p: 0.25 * (1.0 + q / delta),
                c3c3p: 0.25 * (1.0 - q / delta),
            }
        });
        Self { gamma, y, m, delta, eigenvalues, coefficients }
    }

    pub fn from_params(p: &SystemParams) -> Result<Self> {
        let c = AnalyticCorrelators::from_params(p)?;
        Ok(Self::new(c.gamma, c.y))
    }

    pub fn is_exceptional(&self) -> bool {
        self.coefficients.is_none()
    }

    /// Residuals of A2A2′c2c2′ + A3A3′c3c3′ = 1 and A2′c2c2′ + A3′c3c3′ = 0.
    pub fn orthonormality_residuals(&self) -> Option<(f64, f64)> {
        self.coefficients.map(|c| {
            let r1 = c.a2 * c.a2p * c.c2c2p + c.a3 * c.a3p * c.c3c3p - 1.0;
            let r2 = c.a2p * c.c2c2p + c.a3p * c.c3c3p;
            (r1.norm(), r2.norm())
        })
    }

    /// exp(Mτ) assembled from the spectral projectors S⁻¹ e^{λτ} S.
    pub fn propagator(&self, tau: f64) -> Option<[[C64; 3]; 3]> {
        let c = self.coefficients?;
        let e1 = [C64::new(1.0 / SQRT_2, 0.0), C64::new(-1.0 / SQRT_2, 0.0), C64::new(0.0, 0.0)];
        let one = C64::new(1.0, 0.0);
        let r2 = [one, one, c.a2];
        let l2 = [one, one, c.a2p];
        let r3 = [one, one, c.a3];
        let l3 = [one, one, c.a3p];
        let x: Vec<C64> = self.eigenvalues.iter().map(|l| (l * tau).exp()).collect();
        let mut out = [[C64::new(0.0, 0.0); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = x[0] * e1[i] * e1[j] + x[1] * c.c2c2p * r2[i] * l2[j] + x[2] * c.c3c3p * r3[i] * l3[j];
            }
        }
        Some(out)
    }

    /// ⟨Δσ̃+(0)Δs(τ)⟩ through the eigenvector decomposition.
    pub fn fluctuation_vector(&self, tau: f64) -> Option<[C64; 3]> {
        let v = AnalyticCorrelators { gamma: self.gamma, y: self.y }.initial_vector();
        let u = self.propagator(tau)?;
        let mut out = [C64::new(0.0, 0.0); 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i] += u[i][j] * v[j];
            }
        }
        Some(out)
    }
}

pub fn bloch_eigensystem(p: &SystemParams) -> Result<BlochMatrix> {
    BlochMatrix::from_params(p)
}

pub fn analytic_first_order_correlators(p: &SystemParams) -> Result<AnalyticCorrelators> {
    AnalyticCorrelators::from_params(p)
}

/// Unit-area incoherent spectrum of either channel as a function of ω̄ − ω̄_A.
pub fn incoherent_spectrum(p: &SystemParams) -> Result<impl Fn(f64) -> f64> {
    let c = AnalyticCorrelators::from_params(p)?;
    if c.y <= 0.0 {
        return Err(Error::InvalidParams("incoherent spectrum needs Y > 0".into()));
    }
    Ok(move |w: f64| c.incoherent_spectrum(w).unwrap_or(f64::NAN))
}

/// Forwards-channel squeezing spectrum S(ω̄, θ) including the (8η/π)(Γγ/2) prefactor.
pub fn squeezing_spectrum(p: &SystemParams, theta: f64) -> Result<impl Fn(f64) -> f64> {
    let c = AnalyticCorrelators::from_params(p)?;
    let pref = squeezing_prefactor(p);
    Ok(move |w: f64| pref * c.squeezing_kernel(theta, w))
}

/// ⟨ΔC̃1†ΔC̃1⟩ = (Γγ/2)·½Y⁴/(1+Y²)².
pub fn forwards_fluctuation_flux(p: &SystemParams) -> Result<f64> {
    let y2 = derive(p)?.y.powi(2);
    Ok(p.focusing * p.gamma / 2.0 * 0.5 * y2 * y2 / (1.0 + y2).powi(2))
}

/// Normally ordered variances (X1, X2) of the forwards quadratures.
pub fn quadrature_variances(p: &SystemParams) -> Result<(f64, f64)> {
    let y2 = derive(p)?.y.powi(2);
    let pref = 0.25 * p.focusing * p.gamma / (4.0 * p.kappa) * y2 / (1.0 + y2).powi(2);
    Ok((pref * (y2 - 1.0), pref * (y2 + 1.0)))
}

/// Steady forwards photon flux ⟨C̃1†C̃1⟩.
pub fn forwards_flux_closed(p: &SystemParams) -> Result<f64> {
    let y2 = derive(p)?.y.powi(2);
    if p.focusing == 0.0 {
        return Ok(2.0 * p.eps_d * p.eps_d / p.kappa);
    }
    Ok(p.gamma / (4.0 * p.focusing) * y2 / (1.0 + y2) * ((1.0 - p.focusing).powi(2) + y2))
}

/// Steady density matrix of the external atom, basis (ground, excited).
pub fn steady_atom_density(y: f64) -> Matrix2<C64> {
    let y2 = y * y;
    let d = 1.0 + y2;
    let coh = C64::new(-y / (SQRT_2 * d), 0.0);
    Matrix2::new(C64::new(0.5 * (2.0 + y2) / d, 0.0), coh, coh, C64::new(0.5 * y2 / d, 0.0))
}

/// Forwards g² in the weak-excitation limit: [1 − (Γ/(1−Γ))² e^{−γτ/2}]².
/// Intended for Y ≪ 1; the drive strength is not checked.
pub fn g2_forwards_weak(p: &SystemParams, taus: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    if p.focusing >= 1.0 {
        return Err(Error::DivergentCooperativity);
    }
    let r = (p.focusing / (1.0 - p.focusing)).powi(2);
    Ok(taus.iter().map(|&t| (1.0 - r * (-0.5 * p.gamma * t).exp()).powi(2)).collect())
}

/// Delay of the weak-excitation minimum, γτ_m = 4 ln[Γ/(1−Γ)]; `None` for Γ < 0.5.
pub fn g2_forwards_weak_minimum(p: &SystemParams) -> Option<f64> {
    (p.focusing >= 0.5 && p.focusing < 1.0).then(|| 4.0 * (p.focusing / (1.0 - p.focusing)).ln() / p.gamma)
}

/// Forwards g² at arbitrary drive through the bad-cavity mapping with
/// C = Γ/[2(1−Γ)].
pub fn g2_forwards_badcavity(p: &SystemParams, taus: &[f64]) -> Result<Vec<f64>> {
    let d = derive(p)?;
    let c = d.coop_c()?;
    if p.kappa / p.gamma < 10.0 {
        log::debug!("forwards g2 evaluated outside the bad-cavity hierarchy (kappa/gamma = {})", p.kappa / p.gamma);
    }
    let y2 = d.y * d.y;
    let ac = AnalyticCorrelators::new(p.gamma, d.y)?;
    let b = 1.0 + 2.0 * c;
    let pref = -8.0 * c * c / (1.0 + y2 * b * b).powi(2);
    let wc = 1.0 - 2.0 * c * c - y2 * b * b;
    let ws = 1.0 + 2.0 * c * c - y2 * b * (5.0 + 2.0 * c);
    Ok(taus
        .iter()
        .map(|&t| {
            let (e, ch, sh) = ac.decay(t);
            1.0 + pref * e * (wc * ch + 0.25 * p.gamma * ws * sh)
        })
        .collect())
}

/// Sideways g², identical to free-space resonance fluorescence.
pub fn g2_sideways(p: &SystemParams, taus: &[f64]) -> Result<Vec<f64>> {
    let ac = AnalyticCorrelators::from_params(p)?;
    Ok(taus.iter().map(|&t| ac.g2_ss(t)).collect())
}

pub fn g2_ss_freespace(p: &SystemParams, taus: &[f64]) -> Result<Vec<f64>> {
    g2_sideways(p, taus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expm_vec(gamma: f64, y: f64, tau: f64, v: [f64; 3]) -> [f64; 3] {
        let b = BlochMatrix::new(gamma, y);
        let u = (b.m * tau).exp();
        let r = u * nalgebra::Vector3::new(v[0], v[1], v[2]);
        [r[0], r[1], r[2]]
    }

    #[test]
    fn steady_state_is_fixed_point_of_bloch_equations() {
        for &y in &[0.1, 0.35, 1.0, 4.0] {
            let ac = AnalyticCorrelators::new(2.0, y).unwrap();
            let (b, z) = ac.steady_bloch();
            let m = ac.eigensystem().m;
            let r = m * nalgebra::Vector3::new(b, b, z);
            // ds/dt = M s − (0, 0, γ) vanishes at the steady state.
            assert!(r[0].abs() < 1e-14 && r[1].abs() < 1e-14);
            assert!((r[2] - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn orthonormality_and_eigenvalues() {
        let b = BlochMatrix::new(1.0, 0.3);
        let (r1, r2) = b.orthonormality_residuals().unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
        let c = b.coefficients.unwrap();
        assert!((c.c2c2p - 1.0 / (2.0 + c.a2 * c.a2p)).norm() < 1e-12);
        let target = 0.3 / (4.0 * SQRT_2 * b.delta);
        assert!((c.a2p * c.c2c2p - target).norm() < 1e-12);
        assert!((c.a3p * c.c3c3p + target).norm() < 1e-12);
        for &y in &[0.1, 0.3, 0.6, 2.0] {
            let b = BlochMatrix::new(1.7, y);
            let mut num: Vec<C64> = b.m.complex_eigenvalues().iter().cloned().collect();
            let mut ana = b.eigenvalues.to_vec();
            let key = |z: &C64| (z.re * 1e6).round() as i64 * 1_000_000 + (z.im * 1e6).round() as i64;
            num.sort_by_key(key);
            ana.sort_by_key(key);
            for (a, n) in ana.iter().zip(&num) {
                assert!((a - n).norm() < 1e-10, "{a} vs {n}");
            }
        }
        let strong = BlochMatrix::new(1.0, 1.0);
        assert!((strong.eigenvalues[1] - strong.eigenvalues[2].conj()).norm() < 1e-14);
        assert!(strong.eigenvalues[1].im.abs() > 0.0);
        assert!(BlochMatrix::new(1.0, 1.0 / (2.0 * SQRT_2)).is_exceptional());
    }

    #[test]
    fn closed_forms_match_matrix_exponential() {
        for &y in &[0.05, 0.3, 1.0, 2.5] {
            let ac = AnalyticCorrelators::new(1.3, y).unwrap();
            let v = ac.initial_vector();
            for &t in &[0.0, 0.4, 1.7, 5.0] {
                let r = expm_vec(1.3, y, t, v);
                assert!((ac.pm(t) - r[0]).abs() < 1e-12);
                assert!((ac.pp(t) - r[1]).abs() < 1e-12);
                assert!((ac.pz(t) - r[2]).abs() < 1e-12);
                let e = ac.eigensystem().fluctuation_vector(t).unwrap();
                for k in 0..3 {
                    assert!((e[k] - r[k]).norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn two_minus_y_weight_disagrees_except_at_unity() {
        let ac = AnalyticCorrelators::new(1.0, 0.5).unwrap();
        let t = 1.0;
        let exact = expm_vec(1.0, 0.5, t, ac.initial_vector())[2];
        assert!((ac.pz_literal(t) - exact).abs() > 1e-3);
        let one = AnalyticCorrelators::new(1.0, 1.0).unwrap();
        assert!((one.pz_literal(t) - one.pz(t)).abs() < 1e-15);
    }

    #[test]
    fn sandwiches_match_regression_from_ground() {
        let gamma = 0.9;
        for &y in &[0.2, 1.0 / (2.0 * SQRT_2), 1.5] {
            let ac = AnalyticCorrelators::new(gamma, y).unwrap();
            let (b, z) = ac.steady_bloch();
            let pe = ac.excited_population();
            for &t in &[0.0, 0.8, 3.0, 12.0] {
                let d = expm_vec(gamma, y, t, [-b, -b, -1.0 - z]);
                assert!((ac.pm_sandwich(t) - pe * (b + d[0])).abs() < 1e-12);
                assert!((ac.z_sandwich(t) - pe * (z + d[2])).abs() < 1e-12);
                let g2 = (1.0 + z + d[2]) / 2.0 / pe;
                assert!((ac.g2_ss(t) - g2).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn exceptional_point_is_continuous() {
        let gamma = 1.0;
        let yc = 1.0 / (2.0 * SQRT_2);
        let at = AnalyticCorrelators::new(gamma, yc).unwrap();
        for &dy in &[1e-6f64, -1e-6] {
            // Shift Y so that |δ| ≈ 1e−6 γ.
            let y = (yc * yc - dy * dy.abs() * 2.0).sqrt();
            let near = AnalyticCorrelators::new(gamma, y).unwrap();
            assert!((near.delta().norm() - 1e-6).abs() < 1e-8);
            for &t in &[0.5, 2.0, 6.0] {
                assert!((near.g2_ss(t) - at.g2_ss(t)).abs() < 1e-5);
                assert!((near.pm(t) - at.pm(t)).abs() < 1e-5);
            }
            for &w in &[0.0, 1.0, 4.0] {
                assert!((near.incoherent_spectrum(w).unwrap() - at.incoherent_spectrum(w).unwrap()).abs() < 1e-5);
            }
        }
        let t: f64 = 1.3;
        let x = 0.75 * gamma * t;
        assert!((at.g2_ss(t) - (1.0 - (-x).exp() * (1.0 + x))).abs() < 1e-14);
    }

    #[test]
    fn critical_spectrum_is_the_confluent_limit() {
        let at = AnalyticCorrelators::new(1.0, 1.0 / (2.0 * SQRT_2)).unwrap();
        let near = AnalyticCorrelators::new(1.0, (0.125f64 - 1e-9).sqrt()).unwrap();
        for &w in &[0.0, 0.7, 2.0, 10.0] {
            assert_eq!(at.incoherent_spectrum(w).unwrap(), critical_incoherent_spectrum(w));
            assert!((near.incoherent_spectrum(w).unwrap() - critical_incoherent_spectrum(w)).abs() < 1e-7);
        }
    }

    #[test]
    fn stable_and_termwise_spectra_agree() {
        for &y in &[0.1, 0.3, 0.9, 3.0] {
            let ac = AnalyticCorrelators::new(1.0, y).unwrap();
            for &w in &[-8.0, -1.0, 0.0, 0.5, 3.0] {
                let a = ac.incoherent_spectrum(w).unwrap();
                let b = ac.incoherent_spectrum_complex(w);
                assert!(b.im.abs() < 1e-12);
                assert!((a - b.re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectra_have_unit_area_and_weak_limit() {
        let ac = AnalyticCorrelators::new(1.0, 1.4).unwrap();
        let h = 0.01;
        let area: f64 = (-200_000..=200_000).map(|k| ac.incoherent_spectrum(k as f64 * h).unwrap() * h).sum();
        assert!((area - 1.0).abs() < 2e-4, "area {area}");
        let weak = AnalyticCorrelators::new(1.0, 1e-4).unwrap();
        for &w in &[0.0, 1.0, 3.0] {
            let ratio = weak.incoherent_spectrum(w).unwrap() / (1.0 / (PI * (1.0 + w * w)));
            assert!(ratio > 0.0);
        }
    }

    #[test]
    fn sum_rule_reconstructs_incoherent_spectrum() {
        for &y in &[0.2, 0.5, 1.0 / (2.0 * SQRT_2), 2.0] {
            let ac = AnalyticCorrelators::new(1.0, y).unwrap();
            for &w in &[0.0, 0.3, 1.1, 7.0] {
                let a = ac.incoherent_spectrum(w).unwrap();
                assert!((ac.sum_rule_spectrum(0.0, w) - a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn squeezing_kernels_match_fourier_of_correlators() {
        let ac = AnalyticCorrelators::new(2.0, 0.6).unwrap();
        // τ̄ = γτ/2, so τ = τ̄ for γ = 2.
        let h = 1e-3;
        for &w in &[0.0, 1.5] {
            let f = |t: f64| (w * t).cos() * (ac.pm(t) + ac.pp(t));
            let g = |t: f64| (w * t).cos() * (ac.pm(t) - ac.pp(t));
            let n = 60_000;
            let simpson = |fun: &dyn Fn(f64) -> f64| {
                (0..n).map(|k| {
                    let a = k as f64 * h;
                    (fun(a) + 4.0 * fun(a + h / 2.0) + fun(a + h)) * h / 6.0
                })
                .sum::<f64>()
            };
            assert!((simpson(&f) - ac.squeezing_kernel_in_phase(w)).abs() < 1e-10);
            assert!((simpson(&g) - ac.squeezing_kernel_quadrature(w)).abs() < 1e-10);
        }
    }

    #[test]
    fn weak_drive_in_phase_squeezing_is_negative() {
        let ac = AnalyticCorrelators::new(1.0, 0.05).unwrap();
        for k in 0..200 {
            assert!(ac.squeezing_kernel_in_phase(k as f64 * 0.1) < 0.0);
        }
    }

    fn params(gamma: f64, kappa: f64, eps: f64, focusing: f64) -> SystemParams {
        SystemParams { gamma, kappa, eps_d: eps, focusing, ..Default::default() }
    }

    #[test]
    fn variances_and_flux() {
        // Y = 2√2·ε√(Γ/(κγ)): choose ε for Y = 1.
        let (gamma, kappa, f): (f64, f64, f64) = (1.0, 200.0, 0.4);
        let eps = 1.0 / (2.0 * SQRT_2 * (f / (kappa * gamma)).sqrt());
        let p = params(gamma, kappa, eps, f);
        let (x1, x2) = quadrature_variances(&p).unwrap();
        assert!(x1.abs() < 1e-15 && x2 > 0.0);
        let p = params(gamma, kappa, eps / 2.0, f);
        assert!(quadrature_variances(&p).unwrap().0 < 0.0);
        // Flux from C1 = √(2κ)α + √(Γγ/2)σ− with the Bloch steady state.
        let ac = AnalyticCorrelators::from_params(&p).unwrap();
        let (b, _) = ac.steady_bloch();
        let alpha = p.eps_d / p.kappa;
        let direct = 2.0 * kappa * alpha * alpha
            + 2.0 * (2.0 * kappa).sqrt() * alpha * (f * gamma / 2.0).sqrt() * b
            + f * gamma / 2.0 * ac.excited_population();
        assert!((forwards_flux_closed(&p).unwrap() - direct).abs() < 1e-12 * direct);
        let rho = steady_atom_density(ac.y);
        assert!((rho[(1, 0)].re - b).abs() < 1e-15);
        assert!((rho.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weak_forwards_g2() {
        let p = params(1.0, 100.0, 0.01, 0.7);
        let g = g2_forwards_weak(&p, &[0.0, 1e3]).unwrap();
        assert!((g[0] - (40.0f64 / 9.0).powi(2)).abs() < 1e-12);
        assert!((g[1] - 1.0).abs() < 1e-12);
        let p5 = params(1.0, 100.0, 0.01, 0.5);
        assert!(g2_forwards_weak(&p5, &[0.0]).unwrap()[0].abs() < 1e-15);
        assert_eq!(g2_forwards_weak(&params(1.0, 1.0, 0.1, 1.0), &[0.0]), Err(Error::DivergentCooperativity));
        for &f in &[0.55, 0.7, 0.8] {
            let p = params(2.0, 100.0, 0.01, f);
            let taus: Vec<f64> = (0..20_000).map(|k| k as f64 * 1e-3).collect();
            let g = g2_forwards_weak(&p, &taus).unwrap();
            let imin = (0..g.len()).min_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
            assert!((taus[imin] - g2_forwards_weak_minimum(&p).unwrap()).abs() <= 1e-3);
        }
    }

    #[test]
    fn bad_cavity_reduces_to_weak_limit() {
        let (gamma, kappa, f): (f64, f64, f64) = (1.0, 50.0, 0.6);
        let taus: Vec<f64> = (0..50).map(|k| k as f64 * 0.2).collect();
        // The gap is O(Y²) with a coefficient up to about 32 for Γ = 0.6.
        for &(y, tol) in &[(1e-3, 5e-5), (1e-4, 1e-6)] {
            let eps = y / (2.0 * SQRT_2 * (f / (kappa * gamma)).sqrt());
            let p = params(gamma, kappa, eps, f);
            let a = g2_forwards_badcavity(&p, &taus).unwrap();
            let b = g2_forwards_weak(&p, &taus).unwrap();
            for (x, z) in a.iter().zip(&b) {
                assert!((x - z).abs() < tol, "{x} vs {z}");
            }
        }
        // τ = 0: g² − 1 carries the sign of −[1−2C²−Y²(1+2C)²].
        let c = f / (2.0 * (1.0 - f));
        for &y in &[0.2, 0.8, 2.0] {
            let eps = y / (2.0 * SQRT_2 * (f / (kappa * gamma)).sqrt());
            let g0 = g2_forwards_badcavity(&params(gamma, kappa, eps, f), &[0.0]).unwrap()[0];
            let w = 1.0 - 2.0 * c * c - y * y * (1.0 + 2.0 * c).powi(2);
            assert_eq!((g0 - 1.0).signum(), -w.signum());
        }
    }

    #[test]
    fn sideways_g2_vanishes_at_zero_delay() {
        for &eps in &[0.01, 1.0, 5.0] {
            let p = params(1.0, 100.0, eps, 0.6);
            assert_eq!(g2_sideways(&p, &[0.0]).unwrap()[0], 0.0);
            assert_eq!(g2_ss_freespace(&p, &[0.7]).unwrap(), g2_sideways(&p, &[0.7]).unwrap());
        }
    }
}
