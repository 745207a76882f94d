//! Composite Hilbert space: truncated cavity Fock space ⊗ intracavity qubit ⊗
//! external qubit, in that fixed order.
//!
//! Qubit basis: index 0 is the ground state, index 1 the excited state, so
//! σz = diag(−1, +1) and σ− = |0⟩⟨1|.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::sparse::SparseMatrix;

/// Population allowed in the two highest Fock levels before a state is deemed
/// truncated.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    /// Fock truncation N; the cavity factor has dimension N+1.
    pub n_fock: usize,
    /// When false the intracavity atom is removed and pinned to its ground
    /// state (σ1− = 0, σ1z = −1). Valid only if it is fully decoupled.
    pub internal_atom: bool,
}

impl SpaceLayout {
    pub fn new(n_fock: usize) -> Result<Self> {
        if n_fock < 2 {
            return Err(Error::Layout(format!("n_fock = {n_fock} must be at least 2")));
        }
        Ok(Self { n_fock, internal_atom: true })
    }

    pub fn without_internal_atom(n_fock: usize) -> Result<Self> {
        Ok(Self { internal_atom: false, ..Self::new(n_fock)? })
    }

    /// Full layout unless the intracavity atom is decoupled (g = 0) and
    /// undamped (γₛ = 0), in which case it never leaves its ground state and
    /// would make the stationary state degenerate.
    pub fn for_params(p: &SystemParams, n_fock: usize) -> Result<Self> {
        if p.g == 0.0 && p.gamma_s == 0.0 {
            Self::without_internal_atom(n_fock)
        } else {
            Self::new(n_fock)
        }
    }

    pub fn field_dim(&self) -> usize {
        self.n_fock + 1
    }

    pub fn atom1_dim(&self) -> usize {
        if self.internal_atom {
            2
        } else {
            1
        }
    }

    /// Dimension of the two atomic factors together.
    pub fn atoms_dim(&self) -> usize {
        2 * self.atom1_dim()
    }

    pub fn total_dim(&self) -> usize {
        self.field_dim() * self.atoms_dim()
    }

    /// Basis index of |n⟩⊗|q1⟩⊗|q2⟩. `q1` must be 0 without the internal atom.
    pub fn index(&self, n: usize, q1: usize, q2: usize) -> usize {
        debug_assert!(n <= self.n_fock && q1 < self.atom1_dim() && q2 < 2);
        (n * self.atom1_dim() + q1) * 2 + q2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpLabel {
    A,
    Ad,
    S1m,
    S1p,
    S1z,
    S2m,
    S2p,
    S2z,
    Identity,
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOperator {
    pub label: OpLabel,
    pub matrix: SparseMatrix,
}

impl QuantumOperator {
    pub fn new(label: OpLabel, matrix: SparseMatrix) -> Self {
        Self { label, matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        let label = match self.label {
            OpLabel::A => OpLabel::Ad,
            OpLabel::Ad => OpLabel::A,
            OpLabel::S1m => OpLabel::S1p,
            OpLabel::S1p => OpLabel::S1m,
            OpLabel::S2m => OpLabel::S2p,
            OpLabel::S2p => OpLabel::S2m,
            l => l,
        };
        Self::new(label, self.matrix.adjoint())
    }

    pub fn composite(matrix: SparseMatrix) -> Self {
        Self::new(OpLabel::Composite, matrix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub layout: SpaceLayout,
    pub a: QuantumOperator,
    pub ad: QuantumOperator,
    pub s1m: QuantumOperator,
    pub s1p: QuantumOperator,
    pub s1z: QuantumOperator,
    pub s2m: QuantumOperator,
    pub s2p: QuantumOperator,
    pub s2z: QuantumOperator,
    pub id: QuantumOperator,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn lowering_field(n_fock: usize) -> SparseMatrix {
    let t = (1..=n_fock).map(|n| (n - 1, n, c((n as f64).sqrt()))).collect();
    SparseMatrix::from_triplets(n_fock + 1, n_fock + 1, t)
}

fn qubit_lowering() -> SparseMatrix {
    SparseMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0))])
}

fn qubit_z() -> SparseMatrix {
    SparseMatrix::diagonal(&[c(-1.0), c(1.0)])
}

pub fn build_operators(layout: SpaceLayout) -> OperatorSet {
    let idf = SparseMatrix::identity(layout.field_dim());
    let id1 = SparseMatrix::identity(layout.atom1_dim());
    let id2 = SparseMatrix::identity(2);
    let dim = layout.total_dim();
    let embed = |f: &SparseMatrix, q1: &SparseMatrix, q2: &SparseMatrix| f.kron(q1).kron(q2);

    let a = embed(&lowering_field(layout.n_fock), &id1, &id2);
    let (s1m, s1z) = if layout.internal_atom {
        (embed(&idf, &qubit_lowering(), &id2), embed(&idf, &qubit_z(), &id2))
    } else {
        (SparseMatrix::zeros(dim, dim), SparseMatrix::identity(dim).scale_real(-1.0))
    };
    let s2m = embed(&idf, &id1, &qubit_lowering());
    let s2z = embed(&idf, &id1, &qubit_z());
    OperatorSet {
        layout,
        ad: QuantumOperator::new(OpLabel::Ad, a.adjoint()),
        a: QuantumOperator::new(OpLabel::A, a),
        s1p: QuantumOperator::new(OpLabel::S1p, s1m.adjoint()),
        s1m: QuantumOperator::new(OpLabel::S1m, s1m),
        s1z: QuantumOperator::new(OpLabel::S1z, s1z),
        s2p: QuantumOperator::new(OpLabel::S2p, s2m.adjoint()),
        s2m: QuantumOperator::new(OpLabel::S2m, s2m),
        s2z: QuantumOperator::new(OpLabel::S2z, s2z),
        id: QuantumOperator::new(OpLabel::Identity, SparseMatrix::identity(dim)),
    }
}

impl OperatorSet {
    pub fn number(&self) -> SparseMatrix {
        self.ad.matrix.matmul(&self.a.matrix)
    }

    /// σy = i(σ− − σ+) for the intracavity atom.
    pub fn s1y(&self) -> SparseMatrix {
        self.s1m.matrix.sub(&self.s1p.matrix).scale(C64::new(0.0, 1.0))
    }

    /// σy = i(σ− − σ+) for the external atom.
    pub fn s2y(&self) -> SparseMatrix {
        self.s2m.matrix.sub(&self.s2p.matrix).scale(C64::new(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub layout: SpaceLayout,
    pub data: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(layout: SpaceLayout, data: DMatrix<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::Layout(format!("matrix is {}x{}, layout needs {d}", data.nrows(), data.ncols())));
        }
        Ok(Self { layout, data })
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * c(0.5);
        h.symmetric_eigenvalues().min()
    }

    pub fn purity(&self) -> f64 {
        (&self.data * &self.data).trace().re
    }

    pub fn expect(&self, op: &SparseMatrix) -> C64 {
        op.trace_with(&self.data)
    }

    /// Combined population of the two highest Fock levels.
    pub fn top_fock_population(&self) -> f64 {
        top_levels(&partial_trace_field(self))
    }

    pub fn check_truncation(&self, tolerance: f64) -> Result<()> {
        let population = self.top_fock_population();
        if population > tolerance {
            return Err(Error::Truncation { population, tolerance });
        }
        Ok(())
    }
}

fn top_levels(rho_f: &DMatrix<C64>) -> f64 {
    let n = rho_f.nrows();
    rho_f[(n - 1, n - 1)].re + rho_f[(n - 2, n - 2)].re
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub layout: SpaceLayout,
    pub data: DVector<C64>,
}

impl StateVector {
    pub fn new(layout: SpaceLayout, data: DVector<C64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::Layout(format!("vector has length {}, layout needs {}", data.len(), layout.total_dim())));
        }
        Ok(Self { layout, data })
    }

    /// |field⟩ ⊗ |q1⟩ ⊗ |q2⟩ with qubit basis indices.
    pub fn product(layout: SpaceLayout, field: &DVector<C64>, q1: usize, q2: usize) -> Self {
        assert_eq!(field.len(), layout.field_dim());
        let mut v = DVector::zeros(layout.total_dim());
        for (n, amp) in field.iter().enumerate() {
            v[layout.index(n, q1, q2)] = *amp;
        }
        Self { layout, data: v }
    }

    /// Fock state |n⟩ with both atoms in the ground state.
    pub fn fock_ground(layout: SpaceLayout, n: usize) -> Self {
        let mut f = DVector::zeros(layout.field_dim());
        f[n] = c(1.0);
        Self::product(layout, &f, 0, 0)
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn expect(&self, op: &SparseMatrix) -> C64 {
        op.expectation(self.data.as_slice())
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { layout: self.layout, data: &self.data * self.data.adjoint() }
    }

    /// Field density matrix of this pure state.
    pub fn field_density(&self) -> DMatrix<C64> {
        let nf = self.layout.field_dim();
        let na = self.layout.atoms_dim();
        let m = DMatrix::from_fn(nf, na, |n, k| self.data[n * na + k]);
        &m * m.adjoint()
    }
}

/// Coherent state |α⟩ truncated to N+1 Fock levels (not renormalized).
pub fn coherent_state(alpha: C64, n_fock: usize) -> DVector<C64> {
    let mut v = DVector::zeros(n_fock + 1);
    let mut amp = c((-alpha.norm_sqr() / 2.0).exp());
    v[0] = amp;
    for n in 1..=n_fock {
        amp = amp * alpha / (n as f64).sqrt();
        v[n] = amp;
    }
    v
}

pub fn partial_trace_field(rho: &DensityMatrix) -> DMatrix<C64> {
    let nf = rho.layout.field_dim();
    let na = rho.layout.atoms_dim();
    DMatrix::from_fn(nf, nf, |n, m| (0..na).map(|k| rho.data[(n * na + k, m * na + k)]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Internal,
    External,
}

/// Reduced 2×2 density matrix of one atom (ground index 0).
pub fn reduced_atom(rho: &DensityMatrix, atom: Atom) -> DMatrix<C64> {
    let l = rho.layout;
    let mut out = DMatrix::zeros(2, 2);
    if atom == Atom::Internal && !l.internal_atom {
        let tr = rho.trace();
        out[(0, 0)] = tr;
        return out;
    }
    for n in 0..l.field_dim() {
        for q1 in 0..l.atom1_dim() {
            for q2 in 0..2 {
                for p in 0..2 {
                    let (i, j) = match atom {
                        Atom::Internal => (l.index(n, q1, q2), l.index(n, p, q2)),
                        Atom::External => (l.index(n, q1, q2), l.index(n, q1, p)),
                    };
                    let r = if atom == Atom::Internal { q1 } else { q2 };
                    out[(r, p)] += rho.data[(i, j)];
                }
            }
        }
    }
    out
}

/// ⟨β|ρ_f|β⟩ for a field density matrix.
pub fn coherent_fidelity(rho_field: &DMatrix<C64>, beta: C64) -> f64 {
    let v = coherent_state(beta, rho_field.nrows() - 1);
    (v.adjoint() * rho_field * &v)[(0, 0)].re
}

/// Rectangular sampling grid in the complex plane, α = x + iy.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhaseGrid {
    pub fn uniform(x_range: (f64, f64), y_range: (f64, f64), nx: usize, ny: usize) -> Self {
        let lin = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            (0..n).map(|i| a + (b - a) * i as f64 / (n.max(2) - 1) as f64).collect()
        };
        Self { x: lin(x_range, nx), y: lin(y_range, ny) }
    }

    pub fn point(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x[i], self.y[j])
    }
}

/// Husimi Q function sampled on a grid; `values[j * nx + i]` belongs to
/// (x[i], y[j]).
#[derive(Debug, Clone, PartialEq)]
pub struct HusimiMap {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    /// Set when a grid point has |α|² > n_fock/2, where the truncated
    /// coherent states are no longer faithful.
    pub truncation_warning: bool,
}

pub fn husimi_q(rho_field: &DMatrix<C64>, grid: &PhaseGrid) -> HusimiMap {
    let n_fock = rho_field.nrows() - 1;
    let mut values = Vec::with_capacity(grid.x.len() * grid.y.len());
    let mut warn = false;
    for j in 0..grid.y.len() {
        for i in 0..grid.x.len() {
            let alpha = grid.point(i, j);
            warn |= alpha.norm_sqr() > 0.5 * n_fock as f64;
            values.push(coherent_fidelity(rho_field, alpha).max(0.0) / std::f64::consts::PI);
        }
    }
    if warn {
        log::warn!("Husimi grid reaches |α|² > n_fock/2 = {}", 0.5 * n_fock as f64);
    }
    HusimiMap { grid: grid.clone(), values, truncation_warning: warn }
}

impl HusimiMap {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.x.len() + i]
    }

    /// Riemann sum of Q over the grid.
    pub fn integral(&self) -> f64 {
        let dx = (self.grid.x[1] - self.grid.x[0]).abs();
        let dy = (self.grid.y[1] - self.grid.y[0]).abs();
        self.values.iter().sum::<f64>() * dx * dy
    }

    /// Strict interior local maxima (against all eight neighbours) whose value
    /// exceeds `rel_floor` times the global maximum.
    pub fn local_maxima(&self, rel_floor: f64) -> Vec<(C64, f64)> {
        let (nx, ny) = (self.grid.x.len(), self.grid.y.len());
        let global = self.values.iter().cloned().fold(0.0, f64::max);
        let mut out = Vec::new();
        for j in 1..ny.saturating_sub(1) {
            for i in 1..nx.saturating_sub(1) {
                let v = self.value(i, j);
                if v <= rel_floor * global {
                    continue;
                }
                let is_max = (-1i64..=1)
                    .flat_map(|dj| (-1i64..=1).map(move |di| (di, dj)))
                    .filter(|&d| d != (0, 0))
                    .all(|(di, dj)| v > self.value((i as i64 + di) as usize, (j as i64 + dj) as usize));
                if is_max {
                    out.push((self.grid.point(i, j), v));
                }
            }
        }
        out
    }
}
