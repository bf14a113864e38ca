use covsim_core::estimators::{ala_ula, ala_upa, viaq, ShrinkageWeight};
use covsim_core::geometry::AntennaLayout;
use covsim_core::{c64, CovarianceMatrix};
use proptest::prelude::*;

fn hermitian(n: usize, entries: &[(f64, f64)]) -> CovarianceMatrix {
    CovarianceMatrix::hermitian_from_upper(n, |p, q| {
        let (re, im) = entries[(p * n + q) % entries.len()];
        c64::new(re, im)
    })
}

fn entries() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn upa_projection_is_idempotent_and_trace_preserving(
        rows in 1usize..5, cols in 1usize..6, e in entries()
    ) {
        let layout = AntennaLayout::upa(rows, cols).unwrap();
        let x = hermitian(rows * cols, &e);
        let ax = ala_upa(&x, &layout).unwrap();
        prop_assert!(ala_upa(&ax, &layout).unwrap().max_abs_diff(&ax) < 1e-10);
        prop_assert!((ax.trace() - x.trace()).norm() < 1e-9);
        prop_assert!(ax.is_hermitian(1e-12));
    }

    #[test]
    fn ula_projection_is_linear(n in 1usize..24, e in entries(), f in entries(), a in -3.0..3.0f64) {
        let x = hermitian(n, &e);
        let y = hermitian(n, &f);
        let mut combo = x.scaled(a);
        combo.add_scaled(&y, 1.0).unwrap();
        let mut expected = ala_ula(&x).scaled(a);
        expected.add_scaled(&ala_ula(&y), 1.0).unwrap();
        prop_assert!(ala_ula(&combo).max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn single_row_panel_matches_ula(n in 1usize..24, e in entries()) {
        let x = hermitian(n, &e);
        prop_assert_eq!(ala_upa(&x, &AntennaLayout::upa(1, n).unwrap()).unwrap(), ala_ula(&x));
    }

    #[test]
    fn viaq_keeps_diagonal(n in 1usize..16, e in entries(), k in 0.0..=1.0f64) {
        let x = hermitian(n, &e);
        let s = viaq(&x, ShrinkageWeight::new(k).unwrap());
        for i in 0..n {
            prop_assert!((s[(i, i)] - x[(i, i)]).norm() < 1e-12);
        }
    }
}
