//! Stochastic unravelings of the cascaded master equation.
//!
//! Quantum state diffusion integrates
//! dψ = [−iH − ½Σ(C†C − 2⟨C†⟩C + |⟨C⟩|²)]ψ dt + Σ(C − ⟨C⟩)ψ dξ
//! with one complex Wiener increment per channel, E|dξ|² = dt, E dξ² = 0.
//! The drift is advanced by RK4 and the noise by a Milstein-type increment
//! without Lévy areas, whose norm drift is O(h^{3/2}); each coarse
//! sample interval is bisected along a Brownian tree until one step and two
//! half steps agree to the step tolerance. The jump scheme evolves under the
//! non-Hermitian Hamiltonian and collapses when the squared norm falls below a
//! uniform variate.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{build_operators, coherent_state, SpaceLayout, StateVector, DEFAULT_TRUNCATION_TOL};
use crate::lindblad::{forwards_operator, hamiltonian, sideways_operator, ChannelKind};
use crate::meanfield::adiabatic_steady_state;
use crate::noise::{NoiseTree, UniformStream, MAX_LEVEL};
use crate::ode::{Dopri5, Tolerances};
use crate::params::{neoclassical_field, FieldBranches, SystemParams};
use crate::sparse::SparseMatrix;

/// Environment variable fixing the ensemble worker count.
pub const THREADS_ENV: &str = "CASCADE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Diffusion,
    Jump,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" | "qsd" => Ok(Scheme::Diffusion),
            "jump" => Ok(Scheme::Jump),
            _ => Err(Error::InvalidParams(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Recordable expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// ⟨a⟩ (complex).
    A,
    /// ⟨a†a⟩.
    N,
    S1x,
    S1y,
    S1z,
    S2x,
    S2y,
    S2z,
    /// Excited-state probability of the intracavity atom.
    Pe1,
    /// Excited-state probability of the external atom.
    Pe2,
}

impl Observable {
    pub const ALL: [Observable; 10] = [
        Observable::A,
        Observable::N,
        Observable::S1x,
        Observable::S1y,
        Observable::S1z,
        Observable::S2x,
        Observable::S2y,
        Observable::S2z,
        Observable::Pe1,
        Observable::Pe2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Observable::A => "a",
            Observable::N => "n",
            Observable::S1x => "s1x",
            Observable::S1y => "s1y",
            Observable::S1z => "s1z",
            Observable::S2x => "s2x",
            Observable::S2y => "s2y",
            Observable::S2z => "s2z",
            Observable::Pe1 => "pe1",
            Observable::Pe2 => "pe2",
        }
    }

    pub fn is_hermitian(self) -> bool {
        self != Observable::A
    }

    fn external_only(self) -> bool {
        matches!(self, Observable::S2x | Observable::S2y | Observable::S2z | Observable::Pe2)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .iter()
            .copied()
            .find(|o| o.label() == s)
            .ok_or_else(|| Error::UnknownObservable(s.to_string()))
    }
}

/// Initial cavity state; both atoms start in the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    Fock { n: usize },
    Coherent { re: f64, im: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Fock { n: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryTolerances {
    /// Largest accepted distance between one step and two half steps.
    pub step_tol: f64,
    /// Largest accepted norm drift of a step before renormalization.
    pub norm_tol: f64,
    /// Deepest bisection level below one sample interval.
    pub max_level: u32,
    /// Population allowed in the two highest Fock levels.
    pub truncation_tol: f64,
    /// Relative tolerance of the jump-scheme integrator.
    pub ode_rtol: f64,
    /// Absolute tolerance of the jump-scheme integrator.
    pub ode_atol: f64,
}

impl Default for TrajectoryTolerances {
    fn default() -> Self {
        Self {
            step_tol: 1e-4,
            norm_tol: 1e-6,
            max_level: 30,
            truncation_tol: DEFAULT_TRUNCATION_TOL,
            ode_rtol: 1e-8,
            ode_atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub params: SystemParams,
    pub layout: SpaceLayout,
    pub scheme: Scheme,
    pub seed: u64,
    pub t_end: f64,
    pub sample_dt: f64,
    #[serde(default)]
    pub initial: InitialState,
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub tolerances: TrajectoryTolerances,
    /// Accumulate the field density over samples with t ≥ this time.
    #[serde(default)]
    pub field_average_from: Option<f64>,
}

impl TrajectoryConfig {
    pub fn new(params: SystemParams, layout: SpaceLayout) -> Self {
        Self {
            params,
            layout,
            scheme: Scheme::Diffusion,
            seed: 0,
            t_end: 10.0,
            sample_dt: 0.1,
            initial: InitialState::default(),
            observables: vec![Observable::Pe2, Observable::S1y, Observable::S2y, Observable::A, Observable::N],
            tolerances: TrajectoryTolerances::default(),
            field_average_from: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return Err(Error::InvalidParams(format!("sample_dt = {} must be positive", self.sample_dt)));
        }
        if !(self.t_end >= self.sample_dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!("t_end = {} must be at least sample_dt", self.t_end)));
        }
        let t = &self.tolerances;
        if !(t.step_tol > 0.0 && t.norm_tol > 0.0 && t.ode_rtol > 0.0 && t.ode_atol > 0.0) {
            return Err(Error::InvalidParams("trajectory tolerances must be positive".into()));
        }
        if t.max_level > MAX_LEVEL {
            return Err(Error::InvalidParams(format!("max_level {} exceeds {MAX_LEVEL}", t.max_level)));
        }
        if let InitialState::Fock { n } = self.initial {
            if n > self.layout.n_fock {
                return Err(Error::Layout(format!("initial Fock level {n} above n_fock = {}", self.layout.n_fock)));
            }
        }
        Ok(())
    }

    /// Number of sample intervals; samples sit at k·sample_dt.
    pub fn intervals(&self) -> usize {
        (self.t_end / self.sample_dt * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSeries {
    pub observable: Observable,
    pub values: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: ChannelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest norm drift of an accepted step before renormalization.
    pub max_norm_drift: f64,
    /// Largest |‖ψ‖ − 1| of a sampled state after renormalization.
    pub max_norm_error: f64,
    /// Largest imaginary part of a Hermitian expectation value.
    pub max_hermitian_imag: f64,
    /// Largest population of the two highest Fock levels at a sample.
    pub max_top_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub config: TrajectoryConfig,
    pub times: Vec<f64>,
    pub series: Vec<ObservableSeries>,
    pub events: Vec<JumpEvent>,
    pub stats: RunStats,
    /// Time-averaged conditional field density, when requested.
    #[serde(skip)]
    pub field_density: Option<DMatrix<C64>>,
}

impl TrajectoryRecord {
    pub fn series(&self, o: Observable) -> Option<&[C64]> {
        self.series.iter().find(|s| s.observable == o).map(|s| s.values.as_slice())
    }

    /// Real parts of a recorded series.
    pub fn real_series(&self, o: Observable) -> Result<Vec<f64>> {
        self.series(o)
            .map(|v| v.iter().map(|z| z.re).collect())
            .ok_or_else(|| Error::UnknownObservable(o.label().to_string()))
    }

    /// Column names: `t`, then one column per Hermitian observable and
    /// `_re`/`_im` pairs for complex ones.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        for s in &self.series {
            if s.observable.is_hermitian() {
                names.push(s.observable.label().to_string());
            } else {
                names.push(format!("{}_re", s.observable));
                names.push(format!("{}_im", s.observable));
            }
        }
        names
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|i| {
                let mut row = vec![self.times[i]];
                for s in &self.series {
                    row.push(s.values[i].re);
                    if !s.observable.is_hermitian() {
                        row.push(s.values[i].im);
                    }
                }
                row
            })
            .collect()
    }
}

/// Hamiltonian, collapse channels and observables of one unraveling.
#[derive(Debug, Clone)]
pub struct UnravelModel {
    pub dim: usize,
    pub hamiltonian: SparseMatrix,
    pub channels: Vec<(ChannelKind, SparseMatrix)>,
    /// −iH − ½ΣC†C.
    pub h_eff: SparseMatrix,
    pub observables: Vec<(Observable, SparseMatrix)>,
    /// Present when the model contains the cavity.
    pub layout: Option<SpaceLayout>,
}

fn noise_key(kind: ChannelKind) -> u64 {
    match kind {
        ChannelKind::Forwards => 0,
        ChannelKind::Sideways => 1,
        ChannelKind::Internal => 2,
    }
}

fn effective_hamiltonian(h: &SparseMatrix, channels: &[(ChannelKind, SparseMatrix)]) -> SparseMatrix {
    let mut m = h.scale(C64::new(0.0, -1.0));
    for (_, c) in channels {
        m = m.sub(&c.adjoint().matmul(c).scale_real(0.5));
    }
    m
}

impl UnravelModel {
    /// Full cascaded model on `layout`; zero-rate channels are omitted.
    pub fn cascaded(p: &SystemParams, layout: SpaceLayout, observables: &[Observable]) -> Result<Self> {
        p.validate()?;
        if !layout.internal_atom && (p.g != 0.0 || p.gamma_s != 0.0) {
            return Err(Error::Layout("the intracavity atom can only be removed when g = 0 and gamma_s = 0".into()));
        }
        let ops = build_operators(layout);
        let h = hamiltonian(p, &ops);
        let mut channels = vec![(ChannelKind::Forwards, forwards_operator(p, &ops))];
        if p.gamma > 0.0 {
            channels.push((ChannelKind::Sideways, sideways_operator(p, &ops)));
        }
        if p.gamma_s > 0.0 {
            channels.push((ChannelKind::Internal, ops.s1m.matrix.scale_real(p.gamma_s.sqrt())));
        }
        let (s1m, s1p, s2m, s2p) = (&ops.s1m.matrix, &ops.s1p.matrix, &ops.s2m.matrix, &ops.s2p.matrix);
        let obs = observables
            .iter()
            .map(|&o| {
                let m = match o {
                    Observable::A => ops.a.matrix.clone(),
                    Observable::N => ops.number(),
                    Observable::S1x => s1m.add(s1p),
                    Observable::S1y => ops.s1y(),
                    Observable::S1z => ops.s1z.matrix.clone(),
                    Observable::S2x => s2m.add(s2p),
                    Observable::S2y => ops.s2y(),
                    Observable::S2z => ops.s2z.matrix.clone(),
                    Observable::Pe1 => s1p.matmul(s1m),
                    Observable::Pe2 => s2p.matmul(s2m),
                };
                (o, m)
            })
            .collect();
        Ok(Self {
            dim: layout.total_dim(),
            h_eff: effective_hamiltonian(&h, &channels),
            hamiltonian: h,
            channels,
            observables: obs,
            layout: Some(layout),
        })
    }

    /// The external atom alone, driven by a coherent field of strength
    /// `y_drive` (in the normalization where the free-space steady state has
    /// p_e = ½Y²/(1+Y²)), with the forwards and sideways channels of the full
    /// model so that equal seeds feed equal noise.
    pub fn reduced_resonance_fluorescence(p: &SystemParams, y_drive: f64, observables: &[Observable]) -> Result<Self> {
        p.validate()?;
        let sm = SparseMatrix::from_triplets(2, 2, vec![(0, 1, C64::new(1.0, 0.0))]);
        let sp = sm.adjoint();
        let h = sm.sub(&sp).scale(C64::new(0.0, p.gamma * y_drive / (2.0 * std::f64::consts::SQRT_2)));
        let mut channels = Vec::new();
        if p.focusing > 0.0 && p.gamma > 0.0 {
            channels.push((ChannelKind::Forwards, sm.scale_real((p.focusing * p.gamma / 2.0).sqrt())));
        }
        if p.gamma > 0.0 {
            channels.push((ChannelKind::Sideways, sm.scale_real(((2.0 - p.focusing) * p.gamma / 2.0).sqrt())));
        }
        let obs = observables
            .iter()
            .map(|&o| {
                if !o.external_only() {
                    return Err(Error::UnknownObservable(o.label().to_string()));
                }
                let m = match o {
                    Observable::S2x => sm.add(&sp),
                    Observable::S2y => sm.sub(&sp).scale(C64::new(0.0, 1.0)),
                    Observable::S2z => SparseMatrix::diagonal(&[C64::new(-1.0, 0.0), C64::new(1.0, 0.0)]),
                    _ => sp.matmul(&sm),
                };
                Ok((o, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: 2,
            h_eff: effective_hamiltonian(&h, &channels),
            hamiltonian: h,
            channels,
            observables: obs,
            layout: None,
        })
    }

    fn initial_state(&self, init: InitialState) -> Vec<C64> {
        match self.layout {
            None => vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            Some(l) => {
                let field = match init {
                    InitialState::Fock { n } => {
                        let mut f = nalgebra::DVector::zeros(l.field_dim());
                        f[n] = C64::new(1.0, 0.0);
                        f
                    }
                    InitialState::Coherent { re, im } => {
                        let f = coherent_state(C64::new(re, im), l.n_fock);
                        let n = f.norm();
                        f / C64::new(n, 0.0)
                    }
                };
                StateVector::product(l, &field, 0, 0).data.as_slice().to_vec()
            }
        }
    }

    fn top_population(&self, psi: &[C64]) -> f64 {
        match self.layout {
            None => 0.0,
            Some(l) => {
                let start = (l.n_fock - 1) * l.atoms_dim();
                psi[start..].iter().map(|z| z.norm_sqr()).sum()
            }
        }
    }

    fn field_density(&self, psi: &[C64]) -> Option<DMatrix<C64>> {
        self.layout.map(|l| StateVector { layout: l, data: nalgebra::DVector::from_column_slice(psi) }.field_density())
    }
}

fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(x: &mut [C64]) -> f64 {
    let n = norm_sqr(x).sqrt();
    for z in x.iter_mut() {
        *z /= n;
    }
    n
}

/// Collects samples, statistics and the optional field average.
struct Recorder<'a> {
    model: &'a UnravelModel,
    cfg: &'a TrajectoryConfig,
    times: Vec<f64>,
    values: Vec<Vec<C64>>,
    stats: RunStats,
    field_sum: Option<DMatrix<C64>>,
    field_count: usize,
}

impl<'a> Recorder<'a> {
    fn new(model: &'a UnravelModel, cfg: &'a TrajectoryConfig) -> Self {
        let n = cfg.intervals() + 1;
        Self {
            model,
            cfg,
            times: Vec::with_capacity(n),
            values: vec![Vec::with_capacity(n); model.observables.len()],
            stats: RunStats::default(),
            field_sum: None,
            field_count: 0,
        }
    }

    /// Records the normalized state `psi` at time `t`.
    fn sample(&mut self, t: f64, psi: &[C64]) -> Result<()> {
        self.stats.max_norm_error = self.stats.max_norm_error.max((norm_sqr(psi).sqrt() - 1.0).abs());
        let top = self.model.top_population(psi);
        self.stats.max_top_population = self.stats.max_top_population.max(top);
        if top > self.cfg.tolerances.truncation_tol {
            return Err(Error::Truncation { population: top, tolerance: self.cfg.tolerances.truncation_tol });
        }
        self.times.push(t);
        for (k, (o, m)) in self.model.observables.iter().enumerate() {
            let mut v = m.expectation(psi);
            if o.is_hermitian() {
                self.stats.max_hermitian_imag = self.stats.max_hermitian_imag.max(v.im.abs());
                v.im = 0.0;
            }
            self.values[k].push(v);
        }
        if let Some(t0) = self.cfg.field_average_from {
            if t >= t0 - 1e-12 * self.cfg.sample_dt {
                if let Some(rho) = self.model.field_density(psi) {
                    match &mut self.field_sum {
                        Some(s) => *s += rho,
                        None => self.field_sum = Some(rho),
                    }
                    self.field_count += 1;
                }
            }
        }
        Ok(())
    }

    fn finish(self, events: Vec<JumpEvent>) -> TrajectoryRecord {
        let count = self.field_count;
        TrajectoryRecord {
            config: self.cfg.clone(),
            times: self.times,
            series: self
                .model
                .observables
                .iter()
                .zip(self.values)
                .map(|((o, _), values)| ObservableSeries { observable: *o, values })
                .collect(),
            events,
            stats: self.stats,
            field_density: self.field_sum.map(|s| s / C64::new(count as f64, 0.0)),
        }
    }
}

/// Workspace of the diffusion integrator.
struct Qsd<'a> {
    model: &'a UnravelModel,
    tree: NoiseTree,
    keys: Vec<u64>,
    cpsi: Vec<Vec<C64>>,
    k: [Vec<C64>; 4],
    stage: Vec<C64>,
    bvec: Vec<C64>,
    mb: Vec<C64>,
    means: Vec<C64>,
    full: Vec<C64>,
    half: Vec<C64>,
    two: Vec<C64>,
    psi: Vec<C64>,
    tol: TrajectoryTolerances,
    /// Shallowest level at which steps are currently attempted.
    level_hint: u32,
    stats: RunStats,
}

/// Drift of the diffusion equation at `psi` (not necessarily normalized).
fn qsd_drift(model: &UnravelModel, psi: &[C64], out: &mut [C64], cpsi: &mut [Vec<C64>]) {
    model.h_eff.matvec_into(psi, out);
    let n2 = norm_sqr(psi);
    for (k, (_, c)) in model.channels.iter().enumerate() {
        c.matvec_into(psi, &mut cpsi[k]);
        let e = dot(psi, &cpsi[k]) / n2;
        let shift = 0.5 * e.norm_sqr();
        let ec = e.conj();
        for i in 0..psi.len() {
            out[i] += ec * cpsi[k][i] - psi[i] * shift;
        }
    }
}

impl<'a> Qsd<'a> {
    fn new(model: &'a UnravelModel, seed: u64, tol: TrajectoryTolerances, psi: Vec<C64>) -> Self {
        let d = model.dim;
        let z = || vec![C64::new(0.0, 0.0); d];
        Self {
            model,
            tree: NoiseTree::new(seed),
            keys: model.channels.iter().map(|(k, _)| noise_key(*k)).collect(),
            cpsi: vec![z(); model.channels.len()],
            k: [z(), z(), z(), z()],
            stage: z(),
            bvec: z(),
            mb: z(),
            means: vec![C64::new(0.0, 0.0); model.channels.len()],
            full: z(),
            half: z(),
            two: z(),
            psi,
            tol,
            level_hint: 0,
            stats: RunStats::default(),
        }
    }

    /// One step of width `h` from `from` into `out` with increments `dw`;
    /// returns the norm drift before renormalization.
    fn step(&mut self, from: &[C64], h: f64, dw: &[C64], out: &mut [C64]) -> f64 {
        let m = self.model;
        let n = from.len();
        let n2 = norm_sqr(from);
        // Milstein-type increment: B = Σ b_k ΔW_k with b_k = (C_k − ⟨C_k⟩)ψ,
        // plus ½Σ ΔW_j ΔW_k ∂b_k·b_j (Lévy areas dropped) and the ψ*-derivative
        // term −½ψ(‖B‖² − hΣ‖b_k‖²), which removes the O(h) norm drift.
        self.bvec.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        self.mb.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let mut b_sq = 0.0;
        for (k, (_, c)) in m.channels.iter().enumerate() {
            c.matvec_into(from, &mut self.cpsi[k]);
            self.means[k] = dot(from, &self.cpsi[k]) / n2;
            let e = self.means[k];
            for i in 0..n {
                let b = self.cpsi[k][i] - e * from[i];
                b_sq += b.norm_sqr();
                self.bvec[i] += dw[k] * b;
            }
        }
        for (k, (_, c)) in m.channels.iter().enumerate() {
            c.matvec_acc(dw[k], &self.bvec, &mut self.mb);
            let s = dw[k] * self.means[k];
            for i in 0..n {
                self.mb[i] -= s * self.bvec[i];
            }
        }
        let proj = dot(from, &self.mb) / n2;
        let shrink = 0.5 * (norm_sqr(&self.bvec) - h * b_sq) / n2;
        for i in 0..n {
            out[i] = from[i] * (1.0 - shrink) + self.bvec[i] + (self.mb[i] - proj * from[i]) * 0.5;
        }
        let [k1, k2, k3, k4] = &mut self.k;
        qsd_drift(m, from, k1, &mut self.cpsi);
        for i in 0..n {
            self.stage[i] = from[i] + k1[i] * (0.5 * h);
        }
        qsd_drift(m, &self.stage, k2, &mut self.cpsi);
        for i in 0..n {
            self.stage[i] = from[i] + k2[i] * (0.5 * h);
        }
        qsd_drift(m, &self.stage, k3, &mut self.cpsi);
        for i in 0..n {
            self.stage[i] = from[i] + k3[i] * h;
        }
        qsd_drift(m, &self.stage, k4, &mut self.cpsi);
        for i in 0..n {
            out[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        let norm = normalize(out);
        (norm - 1.0).abs()
    }

    /// Advances `psi` across tree node (`level`, `index`) of width `h` whose
    /// channel increments are `dw`.
    fn advance(&mut self, level: u32, index: u64, dw: &[C64], h: f64, t0: f64) -> Result<()> {
        let halves: Vec<(C64, C64)> = self
            .keys
            .iter()
            .zip(dw)
            .map(|(&key, &d)| self.tree.split(key, level, index, d, h))
            .collect();
        let left: Vec<C64> = halves.iter().map(|p| p.0).collect();
        let right: Vec<C64> = halves.iter().map(|p| p.1).collect();
        if level >= self.level_hint || level >= self.tol.max_level {
            let psi = std::mem::take(&mut self.psi);
            let mut full = std::mem::take(&mut self.full);
            let mut half = std::mem::take(&mut self.half);
            let mut two = std::mem::take(&mut self.two);
            let d0 = self.step(&psi, h, dw, &mut full);
            let d1 = self.step(&psi, 0.5 * h, &left, &mut half);
            let d2 = self.step(&half, 0.5 * h, &right, &mut two);
            let err = full.iter().zip(&two).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let drift = d0.max(d1).max(d2);
            let ok = err <= self.tol.step_tol && drift <= self.tol.norm_tol;
            self.psi = psi;
            self.full = full;
            self.half = half;
            if ok {
                std::mem::swap(&mut self.psi, &mut two);
                self.two = two;
                self.stats.accepted += 1;
                self.stats.max_norm_drift = self.stats.max_norm_drift.max(d1.max(d2));
                let easy = err <= self.tol.step_tol / 16.0 && drift <= self.tol.norm_tol / 16.0;
                self.level_hint = if easy { level.saturating_sub(1) } else { level };
                return Ok(());
            }
            self.two = two;
            if level >= self.tol.max_level {
                return Err(Error::StiffnessFailure { time: t0, step: h });
            }
            self.stats.rejected += 1;
            self.level_hint = level + 1;
        }
        self.advance(level + 1, 2 * index, &left, 0.5 * h, t0)?;
        self.advance(level + 1, 2 * index + 1, &right, 0.5 * h, t0 + 0.5 * h)
    }
}

fn run_diffusion(model: &UnravelModel, cfg: &TrajectoryConfig, psi0: Vec<C64>) -> Result<TrajectoryRecord> {
    let mut rec = Recorder::new(model, cfg);
    let mut qsd = Qsd::new(model, cfg.seed, cfg.tolerances, psi0);
    rec.sample(0.0, &qsd.psi)?;
    let h = cfg.sample_dt;
    for k in 0..cfg.intervals() {
        let dw: Vec<C64> = qsd.keys.iter().map(|&key| qsd.tree.coarse(key, k as u64, h)).collect();
        let t0 = k as f64 * h;
        qsd.advance(0, k as u64, &dw, h, t0)?;
        rec.sample((k + 1) as f64 * h, &qsd.psi)?;
    }
    let RunStats { accepted, rejected, max_norm_drift, .. } = qsd.stats;
    rec.stats.accepted = accepted;
    rec.stats.rejected = rejected;
    rec.stats.max_norm_drift = max_norm_drift;
    Ok(rec.finish(Vec::new()))
}

fn run_jump(model: &UnravelModel, cfg: &TrajectoryConfig, psi0: Vec<C64>) -> Result<TrajectoryRecord> {
    let mut rec = Recorder::new(model, cfg);
    let mut uni = UniformStream::new(cfg.seed);
    let tol = Tolerances { rtol: cfg.tolerances.ode_rtol, atol: cfg.tolerances.ode_atol, ..Default::default() };
    let h_eff = &model.h_eff;
    let mut solver = Dopri5::new(|_, y: &[C64], dy: &mut [C64]| h_eff.matvec_into(y, dy), 0.0, psi0.clone(), cfg.t_end, tol);
    let mut events = Vec::new();
    let mut threshold = uni.next();
    let mut probe = vec![C64::new(0.0, 0.0); model.dim];
    let mut out = vec![C64::new(0.0, 0.0); model.dim];
    let mut psi = psi0;
    rec.sample(0.0, &psi)?;
    for k in 1..=cfg.intervals() {
        let target = k as f64 * cfg.sample_dt;
        while solver.t() < target {
            solver.step(target)?;
            if norm_sqr(solver.y()) > threshold {
                continue;
            }
            // Bisect the dense output for the time at which ‖ψ‖² = threshold.
            let (mut lo, mut hi) = (solver.previous_time(), solver.t());
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                solver.interpolate(mid, &mut probe);
                if norm_sqr(&probe) > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            solver.interpolate(hi, &mut probe);
            let weights: Vec<f64> = model
                .channels
                .iter()
                .map(|(_, c)| {
                    c.matvec_into(&probe, &mut out);
                    norm_sqr(&out)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                threshold = uni.next();
                solver.reset_at(hi, &probe);
                continue;
            }
            let r = uni.next() * total;
            let mut acc = 0.0;
            let mut chosen = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if r < acc {
                    chosen = i;
                    break;
                }
            }
            let (kind, c) = &model.channels[chosen];
            c.matvec_into(&probe, &mut out);
            normalize(&mut out);
            events.push(JumpEvent { time: hi, channel: *kind });
            solver.reset_at(hi, &out);
            threshold = uni.next();
        }
        psi.copy_from_slice(solver.y());
        normalize(&mut psi);
        rec.sample(target, &psi)?;
    }
    rec.stats.accepted = solver.accepted;
    rec.stats.rejected = solver.rejected;
    Ok(rec.finish(events))
}

/// Unravels `model` with the scheme, seed and grid of `cfg`.
pub fn run_model(model: &UnravelModel, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let psi0 = model.initial_state(cfg.initial);
    match cfg.scheme {
        Scheme::Diffusion => run_diffusion(model, cfg, psi0),
        Scheme::Jump => run_jump(model, cfg, psi0),
    }
}

pub fn run_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let model = UnravelModel::cascaded(&cfg.params, cfg.layout, &cfg.observables)?;
    run_model(&model, cfg)
}

/// Unravels the external atom alone, driven by Ȳ″ from the adiabatic steady
/// state of the source. Observables other than the external atom's are
/// rejected; the initial state is the ground state.
pub fn run_reduced_resfl_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let st = adiabatic_steady_state(&cfg.params)?;
    let model = UnravelModel::reduced_resonance_fluorescence(&cfg.params, st.y_pp, &cfg.observables)?;
    run_model(&model, cfg)
}

/// Runs one trajectory per seed in parallel; records are returned in seed
/// order. The worker count follows `CASCADE_THREADS` when set.
pub fn run_ensemble(cfg: &TrajectoryConfig, seeds: &[u64]) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    let model = UnravelModel::cascaded(&cfg.params, cfg.layout, &cfg.observables)?;
    run_model_ensemble(&model, cfg, seeds)
}

pub fn run_model_ensemble(model: &UnravelModel, cfg: &TrajectoryConfig, seeds: &[u64]) -> Result<Vec<TrajectoryRecord>> {
    let job = || {
        seeds
            .par_iter()
            .map(|&seed| run_model(model, &TrajectoryConfig { seed, ..cfg.clone() }))
            .collect::<Result<Vec<_>>>()
    };
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?
            .install(job),
        _ => job(),
    }
}

/// Ensemble mean and standard error of the mean of a real observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

pub fn ensemble_statistics(records: &[TrajectoryRecord], o: Observable) -> Result<EnsembleSeries> {
    let first = records.first().ok_or_else(|| Error::InvalidParams("empty ensemble".into()))?;
    let n = records.len() as f64;
    let len = first.times.len();
    let mut sum = vec![0.0; len];
    let mut sum2 = vec![0.0; len];
    for r in records {
        let v = r.real_series(o)?;
        if v.len() != len {
            return Err(Error::Layout("records have different time grids".into()));
        }
        for i in 0..len {
            sum[i] += v[i];
            sum2[i] += v[i] * v[i];
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = (0..len)
        .map(|i| {
            let var = if n > 1.0 { ((sum2[i] - n * mean[i] * mean[i]) / (n - 1.0)).max(0.0) } else { 0.0 };
            (var / n).sqrt()
        })
        .collect();
    Ok(EnsembleSeries { times: first.times.clone(), mean, std_err })
}

/// Signal used to label the two phase states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSignal {
    /// Im⟨a⟩.
    FieldImag,
    /// ⟨σ1y⟩, which carries the opposite sign of Im⟨a⟩.
    S1y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BistabilityOptions {
    pub signal: PhaseSignal,
    /// Hysteresis half-width: the label changes only once the signal crosses
    /// the opposite threshold.
    pub threshold: f64,
    /// Half-width of the window around a switch in which the external atom's
    /// ⟨σ2y⟩ sign is compared.
    pub coincidence_window: f64,
    /// Width of the centred moving average applied to the signal before
    /// thresholding; zero disables it.
    #[serde(default)]
    pub smoothing: f64,
}

impl BistabilityOptions {
    /// Thresholds at 0.1·|Im α_ss| above threshold; below threshold the
    /// intracavity polarization ⟨σ1y⟩ is used with a 0.1 band. The signal is
    /// averaged over 1/κ, which removes the fast Rabi-like oscillations of the
    /// conditional field.
    pub fn for_params(p: &SystemParams) -> Self {
        let window = 2.0 / p.kappa;
        match neoclassical_field(p) {
            FieldBranches::Bimodal { plus, .. } => {
                Self { signal: PhaseSignal::FieldImag, threshold: 0.1 * plus.im.abs(), coincidence_window: window, smoothing: 1.0 / p.kappa }
            }
            FieldBranches::Single(_) => {
                Self { signal: PhaseSignal::S1y, threshold: 0.1, coincidence_window: window, smoothing: 1.0 / p.kappa }
            }
        }
    }
}

/// One maximal run of constant phase label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellSegment {
    pub start: f64,
    pub end: f64,
    /// +1 for Im⟨a⟩ > 0.
    pub label: i8,
    /// False for the first and last segment of a record, whose true extent is
    /// unknown.
    pub complete: bool,
    pub mean_s1y: f64,
    pub mean_s2y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingReport {
    pub segments: Vec<DwellSegment>,
    pub switches: usize,
    /// Durations of the complete segments.
    pub dwell_times: Vec<f64>,
    /// Mean over complete segments, or over all segments (a lower bound) when
    /// none is complete.
    pub mean_dwell: f64,
    pub mean_dwell_censored: bool,
    /// Duration-weighted mean of sign(⟨σ1y⟩)·sign(⟨σ2y⟩) over segments.
    pub anti_correlation: f64,
    /// Fraction of switches across which the external atom's ⟨σ2y⟩ changes
    /// sign within the coincidence window.
    pub coincidence_rate: f64,
}

fn window_mean(times: &[f64], v: &[f64], lo: f64, hi: f64) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (t, x) in times.iter().zip(v) {
        if *t >= lo && *t <= hi {
            s += x;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Centred moving average over samples within ±width/2 of each time.
fn smooth(times: &[f64], v: &[f64], width: f64) -> Vec<f64> {
    if width <= 0.0 || v.is_empty() {
        return v.to_vec();
    }
    let mut prefix = vec![0.0; v.len() + 1];
    for (i, x) in v.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let (mut lo, mut hi) = (0, 0);
    times
        .iter()
        .map(|&t| {
            while times[lo] < t - 0.5 * width {
                lo += 1;
            }
            while hi < times.len() && times[hi] <= t + 0.5 * width {
                hi += 1;
            }
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dwell statistics of the phase-switching above (or near) threshold. Each
/// record must contain `a` (or `s1y`), `s1y` and `s2y`.
pub fn bistability_statistics(records: &[TrajectoryRecord], opts: &BistabilityOptions) -> Result<SwitchingReport> {
    let mut all = Vec::new();
    let mut coincidences = Vec::new();
    for r in records {
        let s1y = r.real_series(Observable::S1y)?;
        let s2y = r.real_series(Observable::S2y)?;
        let signal: Vec<f64> = match opts.signal {
            PhaseSignal::FieldImag => r
                .series(Observable::A)
                .ok_or_else(|| Error::UnknownObservable("a".into()))?
                .iter()
                .map(|z| z.im)
                .collect(),
            PhaseSignal::S1y => s1y.iter().map(|x| -x).collect(),
        };
        let t = &r.times;
        let signal = smooth(t, &signal, opts.smoothing);
        let mut label = 0i8;
        let mut start = 0.0;
        let mut local: Vec<DwellSegment> = Vec::new();
        let close = |local: &mut Vec<DwellSegment>, start: f64, end: f64, label: i8, complete: bool| {
            local.push(DwellSegment {
                start,
                end,
                label,
                complete,
                mean_s1y: window_mean(t, &s1y, start, end),
                mean_s2y: window_mean(t, &s2y, start, end),
            });
        };
        for (i, &x) in signal.iter().enumerate() {
            let next = if x > opts.threshold {
                1
            } else if x < -opts.threshold {
                -1
            } else {
                label
            };
            if next != label {
                if label != 0 {
                    let first = local.is_empty();
                    close(&mut local, start, t[i], label, !first);
                    let before = window_mean(t, &s2y, t[i] - opts.coincidence_window, t[i]);
                    let after = window_mean(t, &s2y, t[i], t[i] + opts.coincidence_window);
                    coincidences.push(sign(before) * sign(after) < 0.0);
                }
                label = next;
                start = t[i];
            }
        }
        if label != 0 {
            close(&mut local, start, *t.last().unwrap(), label, false);
        }
        all.extend(local);
    }
    let switches = coincidences.len();
    if switches == 0 {
        return Err(Error::NoSwitchesDetected);
    }
    let dwell_times: Vec<f64> = all.iter().filter(|s| s.complete).map(|s| s.end - s.start).collect();
    let (mean_dwell, censored) = if dwell_times.is_empty() {
        (all.iter().map(|s| s.end - s.start).sum::<f64>() / all.len() as f64, true)
    } else {
        (dwell_times.iter().sum::<f64>() / dwell_times.len() as f64, false)
    };
    let total: f64 = all.iter().map(|s| s.end - s.start).sum();
    let anti = all.iter().map(|s| (s.end - s.start) * sign(s.mean_s1y) * sign(s.mean_s2y)).sum::<f64>() / total;
    let coincidence_rate = coincidences.iter().filter(|&&c| c).count() as f64 / switches as f64;
    Ok(SwitchingReport {
        segments: all,
        switches,
        dwell_times,
        mean_dwell,
        mean_dwell_censored: censored,
        anti_correlation: anti,
        coincidence_rate,
    })
}
