//! Master-equation pipelines shared by the figure commands, the validation
//! suite and the acceptance tests. Delays are given as γτ and converted to
//! physical time with the external-atom rate.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, SpaceLayout};
use crate::lindblad::{
    build_liouvillian, fluctuation_correlators, g2, squeezing_from_correlators, steady_state_with, ChannelKind,
    Liouvillian, SteadyStateOptions,
};
use crate::params::SystemParams;
use crate::resfluor::{self, AnalyticCorrelators};

/// Liouvillian and stationary state on the smallest layout the parameters allow.
pub fn stationary(p: &SystemParams, n_fock: usize, truncation_tol: f64) -> Result<(Liouvillian, DensityMatrix)> {
    let layout = SpaceLayout::for_params(p, n_fock)?;
    let l = build_liouvillian(p, layout)?;
    let rho = steady_state_with(&l, &SteadyStateOptions { truncation_tol, ..Default::default() })?;
    Ok((l, rho))
}

/// `γτ` samples converted to physical delays.
pub fn delays(p: &SystemParams, gamma_tau: &[f64]) -> Result<Vec<f64>> {
    if p.gamma <= 0.0 {
        return Err(Error::InvalidParams("delays in units of 1/gamma need gamma > 0".into()));
    }
    Ok(gamma_tau.iter().map(|x| x / p.gamma).collect())
}

/// Uniform grid of `n + 1` points on `[0, max]`.
pub fn linspace(max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| max * k as f64 / n as f64).collect()
}

/// Uniform grid of `n + 1` points on `[lo, hi]`.
pub fn span(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// Forwards-channel spectra on a common ω̄ grid, numeric and closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardsSpectra {
    pub omega: Vec<f64>,
    pub incoherent_numeric: Vec<f64>,
    pub incoherent_analytic: Vec<f64>,
    /// Normalized squeezing spectrum at the local-oscillator phase `theta`.
    pub squeezing_numeric: Vec<f64>,
    pub squeezing_analytic: Vec<f64>,
    /// [S(θ) + S(θ+π/2)]/(16η⟨ΔC†ΔC⟩) from the numeric correlators.
    pub sum_rule_numeric: Vec<f64>,
    pub sum_rule_analytic: Vec<f64>,
    /// Stationary ⟨ΔC1†ΔC1⟩ from the master equation.
    pub variance: f64,
}

pub fn forwards_spectra(p: &SystemParams, n_fock: usize, gamma_tau: &[f64], omega: &[f64]) -> Result<ForwardsSpectra> {
    let (l, rho) = stationary(p, n_fock, crate::hilbert::DEFAULT_TRUNCATION_TOL)?;
    let taus = delays(p, gamma_tau)?;
    let (pm, pp) = fluctuation_correlators(&l, &rho, &l.forwards(), &taus)?;
    let variance = pm.values[0].re;
    let incoherent_numeric = crate::lindblad::numeric_incoherent_spectrum(&pm, p.gamma, omega)?.values;
    let raw = squeezing_from_correlators(&pm, &pp, p.gamma, p.eta, &[p.theta, p.theta + PI / 2.0], omega)?;
    let norm = 16.0 * p.eta * variance;
    let squeezing_numeric: Vec<f64> = raw[0].values.iter().map(|v| v / norm).collect();
    let sum_rule_numeric = raw[0].values.iter().zip(&raw[1].values).map(|(a, b)| (a + b) / norm).collect();

    let ac = AnalyticCorrelators::from_params(p)?;
    let sq = resfluor::squeezing_spectrum(p, p.theta)?;
    let flux = resfluor::forwards_fluctuation_flux(p)?;
    let mut incoherent_analytic = Vec::with_capacity(omega.len());
    for &w in omega {
        incoherent_analytic.push(ac.incoherent_spectrum(w)?);
    }
    Ok(ForwardsSpectra {
        omega: omega.to_vec(),
        incoherent_numeric,
        incoherent_analytic,
        squeezing_numeric,
        squeezing_analytic: omega.iter().map(|&w| sq(w) / (16.0 * p.eta * flux)).collect(),
        sum_rule_numeric,
        sum_rule_analytic: omega.iter().map(|&w| ac.sum_rule_spectrum(p.theta, w)).collect(),
        variance,
    })
}

/// Stationary intensity correlation of one output channel on a γτ grid.
pub fn channel_g2(p: &SystemParams, n_fock: usize, kind: ChannelKind, gamma_tau: &[f64]) -> Result<Vec<f64>> {
    let (l, rho) = stationary(p, n_fock, crate::hilbert::DEFAULT_TRUNCATION_TOL)?;
    let cop = match kind {
        ChannelKind::Forwards => l.forwards(),
        ChannelKind::Sideways => l.sideways(),
        ChannelKind::Internal => l
            .channel(ChannelKind::Internal)
            .cloned()
            .ok_or_else(|| Error::InvalidParams("internal channel needs gamma_s > 0".into()))?,
    };
    g2(&l, &rho, &cop, &delays(p, gamma_tau)?)
}

/// Largest absolute pointwise difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// ∫ f(ω) dω over the real line via ω = tan u, midpoint rule in u with `n`
/// panels (the endpoints u = ±π/2 are never evaluated).
pub fn area_over_line(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = PI / n as f64;
    (0..n)
        .map(|k| {
            let u = -PI / 2.0 + (k as f64 + 0.5) * h;
            let c = u.cos();
            f(u.tan()) / (c * c)
        })
        .sum::<f64>()
        * h
}
