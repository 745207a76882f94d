//! Cascaded Liouvillian, stationary states, regression-formula correlators and
//! their numeric spectra.
//!
//! Density matrices are vectorized column by column, `vec(X)[i + j·d] = X[i, j]`,
//! so that `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{build_operators, DensityMatrix, OperatorSet, SpaceLayout, DEFAULT_TRUNCATION_TOL};
use crate::ode::{self, Tolerances};
use crate::params::SystemParams;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// Forwards channel: cavity output superposed with forwards scattering.
    Forwards,
    /// Backwards and sideways scattering of the external atom.
    Sideways,
    /// Sideways emission of the intracavity atom.
    Internal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub kind: ChannelKind,
    pub op: SparseMatrix,
}

#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub params: SystemParams,
    pub layout: SpaceLayout,
    pub ops: OperatorSet,
    pub hamiltonian: SparseMatrix,
    /// Active collapse channels (zero-rate channels are omitted).
    pub channels: Vec<Channel>,
    pub superop: SparseMatrix,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Forwards collapse operator C1 = √(2κ)a + √(Γγ/2)σ2−.
pub fn forwards_operator(p: &SystemParams, ops: &OperatorSet) -> SparseMatrix {
    ops.a
        .matrix
        .scale_real((2.0 * p.kappa).sqrt())
        .add(&ops.s2m.matrix.scale_real((p.focusing * p.gamma / 2.0).sqrt()))
}

/// Sideways collapse operator C2 = √((2−Γ)γ/2)σ2−.
pub fn sideways_operator(p: &SystemParams, ops: &OperatorSet) -> SparseMatrix {
    ops.s2m.matrix.scale_real(((2.0 - p.focusing) * p.gamma / 2.0).sqrt())
}

/// H = i[g(a†σ1− − aσ1+) + √(Γκγ/4)(a†σ2− − aσ2+) + ε_d(a† − a)].
pub fn hamiltonian(p: &SystemParams, ops: &OperatorSet) -> SparseMatrix {
    let (a, ad) = (&ops.a.matrix, &ops.ad.matrix);
    let jc = ad.matmul(&ops.s1m.matrix).sub(&a.matmul(&ops.s1p.matrix)).scale_real(p.g);
    let casc = ad
        .matmul(&ops.s2m.matrix)
        .sub(&a.matmul(&ops.s2p.matrix))
        .scale_real((p.focusing * p.kappa * p.gamma / 4.0).sqrt());
    let drive = ad.sub(a).scale_real(p.eps_d);
    jc.add(&casc).add(&drive).scale(C64::new(0.0, 1.0))
}

/// Superoperator of `-i[H, ·] + Σ_k D[C_k]` in the column-stacking convention.
pub fn superoperator(h: &SparseMatrix, collapse: &[&SparseMatrix]) -> SparseMatrix {
    let d = h.nrows();
    let id = SparseMatrix::identity(d);
    let mut l = id.kron(h).sub(&h.transpose().kron(&id)).scale(C64::new(0.0, -1.0));
    for cop in collapse {
        let cdc = cop.adjoint().matmul(cop);
        let term = cop
            .conj()
            .kron(cop)
            .sub(&id.kron(&cdc).scale_real(0.5))
            .sub(&cdc.transpose().kron(&id).scale_real(0.5));
        l = l.add(&term);
    }
    l
}

pub fn build_liouvillian(p: &SystemParams, layout: SpaceLayout) -> Result<Liouvillian> {
    p.validate()?;
    if !layout.internal_atom && (p.g != 0.0 || p.gamma_s != 0.0) {
        return Err(Error::Layout("the intracavity atom can only be removed when g = 0 and gamma_s = 0".into()));
    }
    let ops = build_operators(layout);
    let h = hamiltonian(p, &ops);
    let mut channels = vec![Channel { kind: ChannelKind::Forwards, op: forwards_operator(p, &ops) }];
    if p.gamma > 0.0 {
        channels.push(Channel { kind: ChannelKind::Sideways, op: sideways_operator(p, &ops) });
    }
    if p.gamma_s > 0.0 {
        channels.push(Channel { kind: ChannelKind::Internal, op: ops.s1m.matrix.scale_real(p.gamma_s.sqrt()) });
    }
    let refs: Vec<&SparseMatrix> = channels.iter().map(|ch| &ch.op).collect();
    let superop = superoperator(&h, &refs);
    Ok(Liouvillian { params: *p, layout, ops, hamiltonian: h, channels, superop })
}

pub fn vectorize(m: &DMatrix<C64>) -> Vec<C64> {
    // nalgebra stores column-major, which is exactly the stacking convention.
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64], d: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(d, d, v)
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn channel(&self, kind: ChannelKind) -> Option<&SparseMatrix> {
        self.channels.iter().find(|ch| ch.kind == kind).map(|ch| &ch.op)
    }

    pub fn forwards(&self) -> SparseMatrix {
        forwards_operator(&self.params, &self.ops)
    }

    pub fn sideways(&self) -> SparseMatrix {
        sideways_operator(&self.params, &self.ops)
    }

    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        unvectorize(&self.superop.matvec(&vectorize(x)), self.dim())
    }

    /// Largest modulus of `1ᵀ L`, which vanishes for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        let mut acc = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for (col, v) in self.superop.row(i + i * d) {
                acc[col] += v;
            }
        }
        acc.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Maximum population of the two highest Fock levels.
    pub truncation_tol: f64,
    /// Residual bound relative to ‖L‖∞.
    pub residual_tol: f64,
    /// Most negative eigenvalue tolerated.
    pub positivity_tol: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { truncation_tol: DEFAULT_TRUNCATION_TOL, residual_tol: 1e-10, positivity_tol: 1e-8 }
    }
}

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with(l, &SteadyStateOptions::default())
}

/// Solves L vec(ρ) = 0 with the equation for ρ₀₀ replaced by tr ρ = 1.
pub fn steady_state_with(l: &Liouvillian, opts: &SteadyStateOptions) -> Result<DensityMatrix> {
    let p = &l.params;
    if l.layout.internal_atom && p.g == 0.0 && p.gamma_s == 0.0 {
        return Err(Error::SingularSolve(
            "intracavity atom is decoupled and undamped, so the stationary manifold is degenerate".into(),
        ));
    }
    let d = l.dim();
    let n = d * d;
    let mut triplets: Vec<Triplet<usize, usize, C64>> = l
        .superop
        .triplets()
        .filter(|&(r, _, _)| r != 0)
        .map(|(r, col, v)| Triplet::new(r, col, v))
        .collect();
    triplets.extend((0..d).map(|i| Triplet::new(0, i + i * d, c(1.0))));
    let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SingularSolve(format!("assembly failed: {e:?}")))?;
    let lu = m.sp_lu().map_err(|e| Error::SingularSolve(format!("{e:?}")))?;
    let mut rhs = faer::Mat::<C64>::zeros(n, 1);
    rhs[(0, 0)] = c(1.0);
    let x = lu.solve(&rhs);
    let v: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularSolve("non-finite solution".into()));
    }
    let raw = unvectorize(&v, d);
    let mut rho = (&raw + raw.adjoint()) * c(0.5);
    let tr = rho.trace();
    rho /= tr;

    let resid = l.superop.matvec(&vectorize(&rho)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = l.superop.norm_inf();
    if resid > opts.residual_tol * scale {
        return Err(Error::SingularSolve(format!("residual {resid:.3e} exceeds {:.1e}·‖L‖", opts.residual_tol)));
    }
    let state = DensityMatrix::new(l.layout, rho)?;
    let min_eig = state.min_eigenvalue();
    if min_eig < -opts.positivity_tol {
        return Err(Error::SingularSolve(format!("stationary matrix has eigenvalue {min_eig:.3e}")));
    }
    state.check_truncation(opts.truncation_tol)?;
    Ok(state)
}

fn regression_tolerances(x0: &[C64]) -> Tolerances {
    let scale = x0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    Tolerances { rtol: 1e-9, atol: 1e-13 * scale, ..Default::default() }
}

/// Propagates `X(0)` under dX/dτ = L[X] and records `tr(B_k X(τ))` for each
/// observable on the ascending grid `taus` (starting at or after 0).
pub fn propagate_traces(
    l: &Liouvillian,
    x0: &DMatrix<C64>,
    observables: &[&SparseMatrix],
    taus: &[f64],
) -> Result<Vec<Vec<C64>>> {
    let d = l.dim();
    let y0 = vectorize(x0);
    let tol = regression_tolerances(&y0);
    let mut out = vec![Vec::with_capacity(taus.len()); observables.len()];
    ode::integrate(
        |_, y, dy| l.superop.matvec_into(y, dy),
        0.0,
        y0,
        taus,
        tol,
        |_, _, y| {
            for (k, b) in observables.iter().enumerate() {
                // tr(B X) = Σ_{ij} B_ij X_ji
                let mut acc = C64::new(0.0, 0.0);
                for (i, j, v) in b.triplets() {
                    acc += v * y[j + i * d];
                }
                out[k].push(acc);
            }
        },
    )?;
    Ok(out)
}

/// Propagates a density matrix and returns it at each requested time.
pub fn propagate(l: &Liouvillian, rho0: &DensityMatrix, times: &[f64]) -> Result<Vec<DensityMatrix>> {
    let d = l.dim();
    let y0 = vectorize(&rho0.data);
    let tol = regression_tolerances(&y0);
    let mut out = Vec::with_capacity(times.len());
    ode::integrate(|_, y, dy| l.superop.matvec_into(y, dy), 0.0, y0, times, tol, |_, _, y| {
        out.push(DensityMatrix { layout: l.layout, data: unvectorize(y, d) })
    })?;
    Ok(out)
}

/// Dense matrix-exponential propagation on a uniform grid `k·dt`, offered as
/// an independent check of the integrator for small spaces.
pub fn propagate_dense(l: &Liouvillian, x0: &DMatrix<C64>, dt: f64, steps: usize) -> Result<Vec<DMatrix<C64>>> {
    let d = l.dim();
    if d > 40 {
        return Err(Error::Layout(format!("dense propagation limited to total_dim <= 40, got {d}")));
    }
    let step = (l.superop.to_dense() * c(dt)).exp();
    let mut v = nalgebra::DVector::from_vec(vectorize(x0));
    let mut out = vec![x0.clone()];
    for _ in 0..steps {
        v = &step * v;
        out.push(unvectorize(v.as_slice(), d));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrelationKind {
    /// ⟨A(0) B(τ)⟩ from X(0) = ρA.
    FirstOrder,
    /// ⟨A†(0) B(τ) A(0)⟩ from X(0) = AρA†.
    SecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSeries {
    pub tau: Vec<f64>,
    pub values: Vec<C64>,
    pub kind: CorrelationKind,
}

pub fn regression_correlator(
    l: &Liouvillian,
    rho: &DensityMatrix,
    a: &SparseMatrix,
    b: &SparseMatrix,
    taus: &[f64],
    kind: CorrelationKind,
) -> Result<CorrelationSeries> {
    check_grid(taus)?;
    let x0 = match kind {
        CorrelationKind::FirstOrder => a.rmul_dense(&rho.data),
        CorrelationKind::SecondOrder => a.adjoint().rmul_dense(&a.mul_dense(&rho.data)),
    };
    let values = propagate_traces(l, &x0, &[b], taus)?.remove(0);
    Ok(CorrelationSeries { tau: taus.to_vec(), values, kind })
}

fn check_grid(taus: &[f64]) -> Result<()> {
    if taus.is_empty() || taus[0] < 0.0 || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("delay grid must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Normalized intensity correlation g²(τ) = ⟨C†(0)C†C(τ)C(0)⟩ / ⟨C†C⟩².
pub fn g2(l: &Liouvillian, rho: &DensityMatrix, cop: &SparseMatrix, taus: &[f64]) -> Result<Vec<f64>> {
    let n = cop.adjoint().matmul(cop);
    let mean = rho.expect(&n).re;
    let s = regression_correlator(l, rho, cop, &n, taus, CorrelationKind::SecondOrder)?;
    Ok(s.values.iter().map(|v| v.re / (mean * mean)).collect())
}

/// Fluctuation correlators ⟨ΔC†(0)ΔC(τ)⟩ and ⟨ΔC†(0)ΔC†(τ)⟩ from a single propagation.
pub fn fluctuation_correlators(
    l: &Liouvillian,
    rho: &DensityMatrix,
    cop: &SparseMatrix,
    taus: &[f64],
) -> Result<(CorrelationSeries, CorrelationSeries)> {
    check_grid(taus)?;
    let cd = cop.adjoint();
    let mean_c = rho.expect(cop);
    let mean_cd = rho.expect(&cd);
    let x0 = cd.rmul_dense(&rho.data);
    let mut traces = propagate_traces(l, &x0, &[cop, &cd], taus)?;
    let pp = traces.pop().unwrap().into_iter().map(|v| v - mean_cd * mean_cd).collect();
    let pm = traces.pop().unwrap().into_iter().map(|v| v - mean_cd * mean_c).collect();
    Ok((
        CorrelationSeries { tau: taus.to_vec(), values: pm, kind: CorrelationKind::FirstOrder },
        CorrelationSeries { tau: taus.to_vec(), values: pp, kind: CorrelationKind::FirstOrder },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// Incoherent spectrum normalized to unit area in ω̄.
    UnitArea,
    /// Squeezing spectrum in flux units including the (8η/π) prefactor.
    Raw,
    /// Squeezing spectrum divided by 16η⟨ΔC†ΔC⟩.
    Normalized,
}

/// Spectrum sampled against ω̄ − ω̄_A, with ω̄ = 2ω/γ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    /// Trapezoidal area over the sampled grid.
    pub fn area(&self) -> f64 {
        self.omega.windows(2).zip(self.values.windows(2)).map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1])).sum()
    }
}

/// ∫ e^{iωs} f(s) ds over the sampled grid, with `f` linear between samples
/// and the oscillatory kernel integrated exactly on each panel.
pub fn fourier_one_sided(s: &[f64], f: &[C64], omega: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..s.len().saturating_sub(1) {
        let h = s[k + 1] - s[k];
        let th = omega * h;
        // e0 = ∫₀^h e^{iωu} du / h, e1 = ∫₀^h u e^{iωu} du / h².
        let (e0, e1) = if th.abs() < 1e-3 {
            let i = C64::new(0.0, 1.0);
            (
                c(1.0) + i * (th / 2.0) - c(th * th / 6.0) - i * (th * th * th / 24.0),
                c(0.5) + i * (th / 3.0) - c(th * th / 8.0) - i * (th * th * th / 30.0),
            )
        } else {
            let eith = C64::new(0.0, th).exp();
            let i = C64::new(0.0, 1.0);
            let e0 = (eith - 1.0) / (i * th);
            let e1 = eith / (i * th) + (eith - 1.0) / (th * th);
            (e0, e1)
        };
        let phase = C64::new(0.0, omega * s[k]).exp();
        acc += phase * h * (f[k] * (e0 - e1) + f[k + 1] * e1);
    }
    acc
}

/// Ratio below which a correlator is considered decayed at the end of its grid.
pub const TAIL_TOL: f64 = 1e-6;

fn check_tail(values: &[C64]) -> Result<()> {
    let first = values[0].norm();
    let last = values[values.len() - 1].norm();
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    if ratio > TAIL_TOL {
        return Err(Error::UnconvergedTail { ratio });
    }
    Ok(())
}

/// S(ω̄) = (1/π)·Re ∫₀^∞ e^{iω̄τ̄}⟨ΔC†(0)ΔC(τ̄)⟩ dτ̄ / ⟨ΔC†ΔC⟩, with τ̄ = γτ/2.
/// The stationary variance is read from the τ = 0 sample.
pub fn numeric_incoherent_spectrum(series: &CorrelationSeries, gamma: f64, omega: &[f64]) -> Result<Spectrum> {
    check_tail(&series.values)?;
    if series.tau[0] != 0.0 {
        return Err(Error::InvalidParams("correlator grid must start at tau = 0".into()));
    }
    let s: Vec<f64> = series.tau.iter().map(|t| 0.5 * gamma * t).collect();
    let norm = series.values[0].re;
    let values = omega
        .iter()
        .map(|&w| fourier_one_sided(&s, &series.values, w).re / (std::f64::consts::PI * norm))
        .collect();
    Ok(Spectrum { omega: omega.to_vec(), values, normalization: Normalization::UnitArea })
}

/// Squeezing spectra S(ω̄, θ) = (8η/π)∫₀^∞ cos(ω̄τ̄) Re(⟨ΔC†ΔC(τ̄)⟩ + e^{2iθ}⟨ΔC†ΔC†(τ̄)⟩) dτ̄
/// for the forwards channel, one spectrum per angle.
pub fn numeric_squeezing_spectra(
    l: &Liouvillian,
    rho: &DensityMatrix,
    thetas: &[f64],
    taus: &[f64],
    omega: &[f64],
) -> Result<Vec<Spectrum>> {
    let (pm, pp) = fluctuation_correlators(l, rho, &l.forwards(), taus)?;
    squeezing_from_correlators(&pm, &pp, l.params.gamma, l.params.eta, thetas, omega)
}

pub fn squeezing_from_correlators(
    pm: &CorrelationSeries,
    pp: &CorrelationSeries,
    gamma: f64,
    eta: f64,
    thetas: &[f64],
    omega: &[f64],
) -> Result<Vec<Spectrum>> {
    check_tail(&pm.values)?;
    check_tail(&pp.values)?;
    let s: Vec<f64> = pm.tau.iter().map(|t| 0.5 * gamma * t).collect();
    Ok(thetas
        .iter()
        .map(|&theta| {
            let rot = C64::new(0.0, 2.0 * theta).exp();
            let f: Vec<C64> = pm.values.iter().zip(&pp.values).map(|(a, b)| c((a + rot * b).re)).collect();
            let values = omega
                .iter()
                .map(|&w| 8.0 * eta / std::f64::consts::PI * fourier_one_sided(&s, &f, w).re)
                .collect();
            Spectrum { omega: omega.to_vec(), values, normalization: Normalization::Raw }
        })
        .collect())
}

/// Divides a raw squeezing spectrum by 16η⟨ΔC†ΔC⟩.
pub fn normalize_squeezing(raw: &Spectrum, eta: f64, variance: f64) -> Spectrum {
    Spectrum {
        omega: raw.omega.clone(),
        values: raw.values.iter().map(|v| v / (16.0 * eta * variance)).collect(),
        normalization: Normalization::Normalized,
    }
}

/// Steady forwards photon flux tr(C1†C1 ρ).
pub fn forwards_flux(l: &Liouvillian, rho: &DensityMatrix) -> f64 {
    let c1 = l.forwards();
    rho.expect(&c1.adjoint().matmul(&c1)).re
}

/// Uniform grid `0, dt, …, n·dt`.
pub fn uniform_grid(dt: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, partial_trace_field, StateVector};

    fn small() -> SystemParams {
        SystemParams { g: 0.7, kappa: 1.0, gamma: 0.5, gamma_s: 0.2, eps_d: 0.4, focusing: 0.6, ..Default::default() }
    }

    #[test]
    fn generator_is_trace_preserving_and_hermiticity_preserving() {
        let l = build_liouvillian(&small(), SpaceLayout::new(3).unwrap()).unwrap();
        assert!(l.trace_defect() < 1e-12);
        let d = l.dim();
        let x = DMatrix::from_fn(d, d, |i, j| C64::new((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let h = &x + x.adjoint();
        let out = l.apply(&h);
        assert!((&out - out.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn undriven_ground_state_is_stationary() {
        let p = SystemParams { gamma: 1.0, focusing: 0.5, gamma_s: 0.3, ..Default::default() };
        let l = build_liouvillian(&p, SpaceLayout::new(3).unwrap()).unwrap();
        let rho = StateVector::fock_ground(l.layout, 0).to_density();
        assert!(l.apply(&rho.data).norm() < 1e-15);
    }

    #[test]
    fn empty_cavity_steady_state_is_coherent() {
        let p = SystemParams { kappa: 1.0, eps_d: 0.1, ..Default::default() };
        let layout = SpaceLayout::for_params(&p, 8).unwrap();
        let l = build_liouvillian(&p, layout).unwrap();
        let rho = steady_state(&l).unwrap();
        let rf = partial_trace_field(&rho);
        let v = coherent_state(C64::new(0.1, 0.0), 8);
        let fid = (v.adjoint() * &rf * &v)[(0, 0)].re;
        assert!(fid > 1.0 - 1e-8, "fidelity {fid}");
        assert!((rho.expect(&l.ops.a.matrix) - C64::new(0.1, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn decoupled_internal_atom_is_singular_on_full_layout() {
        let p = SystemParams { kappa: 1.0, eps_d: 0.1, gamma: 1.0, focusing: 0.5, ..Default::default() };
        let l = build_liouvillian(&p, SpaceLayout::new(3).unwrap()).unwrap();
        assert!(matches!(steady_state(&l), Err(Error::SingularSolve(_))));
    }

    #[test]
    fn truncation_is_detected() {
        let p = SystemParams { kappa: 1.0, eps_d: 1.5, ..Default::default() };
        let l = build_liouvillian(&p, SpaceLayout::for_params(&p, 4).unwrap()).unwrap();
        assert!(matches!(steady_state(&l), Err(Error::Truncation { .. })));
    }

    #[test]
    fn integrator_matches_dense_exponential() {
        let p = SystemParams { kappa: 1.0, gamma: 0.8, eps_d: 0.3, focusing: 0.6, ..Default::default() };
        let l = build_liouvillian(&p, SpaceLayout::for_params(&p, 4).unwrap()).unwrap();
        let rho0 = StateVector::fock_ground(l.layout, 1).to_density();
        let dense = propagate_dense(&l, &rho0.data, 0.5, 6).unwrap();
        let times = uniform_grid(0.5, 6);
        let ode = propagate(&l, &rho0, &times).unwrap();
        for (a, b) in dense.iter().zip(&ode) {
            assert!((a - &b.data).norm() < 1e-8);
            assert!((b.trace() - c(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn identity_correlator_is_constant() {
        let l = build_liouvillian(&small(), SpaceLayout::new(10).unwrap()).unwrap();
        let rho = steady_state(&l).unwrap();
        let id = &l.ops.id.matrix;
        let s = regression_correlator(&l, &rho, id, id, &uniform_grid(0.5, 8), CorrelationKind::FirstOrder).unwrap();
        for v in s.values {
            assert!((v - c(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn fourier_panel_rule_is_exact_for_linear_data() {
        let s = [0.0, 0.3, 1.0];
        let f = [c(1.0), c(0.7), c(0.0)];
        let w = 2.5;
        // Piecewise-linear f integrated exactly against e^{iws} by fine quadrature.
        let n = 200_000;
        let mut reference = C64::new(0.0, 0.0);
        for k in 0..n {
            let x = (k as f64 + 0.5) / n as f64;
            let fx = if x < 0.3 { 1.0 - x } else { 0.7 * (1.0 - x) / 0.7 };
            reference += C64::new(0.0, w * x).exp() * fx / n as f64;
        }
        assert!((fourier_one_sided(&s, &f, w) - reference).norm() < 1e-9);
        assert!((fourier_one_sided(&s, &f, 1e-5) - fourier_one_sided(&s, &f, 0.0)).norm() < 1e-5);
    }
}
