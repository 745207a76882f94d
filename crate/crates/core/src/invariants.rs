//! Property tests of structural invariants over random parameters and states.

use crate::hilbert::{partial_trace_field, DensityMatrix, SpaceLayout, StateVector};
use crate::lindblad::{build_liouvillian, propagate};
use crate::meanfield::{integrate_meanfield, MeanFieldState};
use crate::params::{derive, neoclassical_field, FieldBranches, SystemParams};
use crate::resfluor::{self, AnalyticCorrelators, BlochMatrix};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = SystemParams> {
    (0.0..2.0f64, 0.5..2.0f64, 0.1..2.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..0.95f64).prop_map(
        |(g, kappa, gamma, gamma_s, eps_d, focusing)| SystemParams { g, kappa, gamma, gamma_s, eps_d, focusing, ..Default::default() },
    )
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
}

fn pure_state(layout: SpaceLayout, amps: &[(f64, f64)]) -> StateVector {
    let v = DVector::from_iterator(amps.len(), amps.iter().map(|&(re, im)| C64::new(re, im)));
    let n = v.norm().max(1e-12);
    StateVector::new(layout, v / C64::new(n, 0.0)).unwrap()
}

fn mixture(layout: SpaceLayout, a: &[(f64, f64)], b: &[(f64, f64)], w: f64) -> DensityMatrix {
    let data = pure_state(layout, a).to_density().data * C64::new(w, 0.0) + pure_state(layout, b).to_density().data * C64::new(1.0 - w, 0.0);
    DensityMatrix::new(layout, data).unwrap()
}

fn general_matrix(d: usize, entries: &[(f64, f64)]) -> DMatrix<C64> {
    DMatrix::from_iterator(d, d, entries.iter().map(|&(re, im)| C64::new(re, im)))
}

const LAYOUT_FOCK: usize = 2;
const DIM: usize = 3 * 4;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evolution_keeps_a_density_matrix(p in params(), a in amplitudes(DIM), b in amplitudes(DIM), w in 0.0..1.0f64) {
        let layout = SpaceLayout::new(LAYOUT_FOCK).unwrap();
        let l = build_liouvillian(&p, layout).unwrap();
        let rho0 = mixture(layout, &a, &b, w);
        for rho in propagate(&l, &rho0, &[0.1, 0.5, 2.0]).unwrap() {
            prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-8);
            prop_assert!(rho.hermiticity_error() < 1e-8);
            prop_assert!(rho.min_eigenvalue() > -1e-7);
        }
    }

    #[test]
    fn superoperator_is_trace_free(p in params()) {
        let l = build_liouvillian(&p, SpaceLayout::new(3).unwrap()).unwrap();
        prop_assert!(l.trace_defect() < 1e-10);
    }
}

proptest! {
    #[test]
    fn partial_trace_is_linear_and_trace_preserving(
        x in amplitudes(DIM * DIM),
        y in amplitudes(DIM * DIM),
        s in -3.0..3.0f64,
    ) {
        let layout = SpaceLayout::new(LAYOUT_FOCK).unwrap();
        let (mx, my) = (general_matrix(DIM, &x), general_matrix(DIM, &y));
        let px = partial_trace_field(&DensityMatrix::new(layout, mx.clone()).unwrap());
        let py = partial_trace_field(&DensityMatrix::new(layout, my.clone()).unwrap());
        let sum = partial_trace_field(&DensityMatrix::new(layout, &mx * C64::new(s, 0.0) + &my).unwrap());
        let lin = (sum - (px.clone() * C64::new(s, 0.0) + py)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(lin < 1e-12);
        prop_assert!((px.trace() - mx.trace()).norm() < 1e-12);
    }

    #[test]
    fn dimensionless_groups_are_scale_free(p in params(), s in 0.01..100.0f64) {
        let (d0, d1) = (derive(&p).unwrap(), derive(&p.scaled(s)).unwrap());
        prop_assert!((d0.y - d1.y).abs() <= 1e-10 * (1.0 + d0.y.abs()));
        prop_assert!((d0.lambda_crit - d1.lambda_crit).abs() <= 1e-10 * (1.0 + d0.lambda_crit));
        prop_assert_eq!(d0.coop_c, d1.coop_c);
        prop_assert!((d0.y_pp - d1.y_pp).abs() <= 1e-10 * (1.0 + d0.y_pp.abs()));
    }

    #[test]
    fn delta_squared_identity(gamma in 0.01..10.0f64, y in 0.0..10.0f64) {
        let ac = AnalyticCorrelators::new(gamma, y).unwrap();
        let expected = gamma * gamma / 16.0 * (1.0 - 8.0 * y * y);
        prop_assert!((ac.delta_sq() - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        let d = BlochMatrix::new(gamma, y).delta;
        prop_assert!((d * d - C64::new(expected, 0.0)).norm() <= 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn bimodal_amplitudes_are_conjugate(kappa in 0.1..10.0f64, eps_d in 0.1..10.0f64, r in 0.01..0.999f64) {
        let p = SystemParams { kappa, eps_d, g: 2.0 * eps_d * r.sqrt(), gamma: 1.0, focusing: 0.5, ..Default::default() };
        match neoclassical_field(&p) {
            FieldBranches::Bimodal { plus, minus } => {
                prop_assert_eq!(minus, plus.conj());
                prop_assert!(plus.im > 0.0);
            }
            FieldBranches::Single(a) => prop_assert!(false, "expected two branches, got {}", a),
        }
    }

    #[test]
    fn in_phase_variance_changes_sign_at_unit_drive(kappa in 1.0..500.0f64, focusing in 0.05..0.95f64, y in 0.01..5.0f64) {
        let eps_d = y / (2.0 * (2.0 * focusing / kappa).sqrt());
        let p = SystemParams { kappa, eps_d, gamma: 1.0, focusing, ..Default::default() };
        let (x1, x2) = resfluor::quadrature_variances(&p).unwrap();
        prop_assert!(x2 > 0.0);
        if (y - 1.0).abs() > 1e-9 {
            prop_assert_eq!(x1 > 0.0, y > 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn meanfield_pseudo_spin_is_conserved(
        p in params(),
        are in -1.0..1.0f64, aim in -1.0..1.0f64,
        theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU,
    ) {
        let p = SystemParams { g: p.g + 0.1, gamma_s: 0.0, ..p };
        let beta1 = C64::from_polar(0.5 * theta.sin(), phi);
        let s0 = MeanFieldState { alpha: C64::new(are, aim), beta1, zeta1: -theta.cos(), ..MeanFieldState::ground() };
        let l0 = s0.pseudo_spin();
        for s in integrate_meanfield(&p, &s0, &[1.0, 5.0, 20.0]).unwrap() {
            prop_assert!((s.pseudo_spin() - l0).abs() < 1e-8);
        }
    }
}
