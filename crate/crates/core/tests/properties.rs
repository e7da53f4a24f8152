use mapruin::kernel::KernelContext;
use mapruin::{fixtures, ladder, linalg, renewal, spectral};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ladder_solution_is_minimal_and_subrate(seed in 0u64..10_000) {
        let m = fixtures::random_model(seed);
        let s = ladder::solve_ladder(&m).unwrap();
        prop_assert!(ladder::ladder_residual(&m, &s.k, &s.l).unwrap() < 1e-11);
        for a in 0..s.k.nrows() {
            for b in 0..s.k.ncols() {
                prop_assert!(a == b || s.k[(a, b)] >= 0.0);
            }
        }
        prop_assert!(s.l.iter().all(|&x| x >= 0.0));
        prop_assert!(ladder::pi_relation_residual(&m, &s.k, &s.l).unwrap() < 1e-10);
        let k = s.kminus().unwrap();
        prop_assert!(k.iter().all(|&x| x > 0.0));
        prop_assert!((&s.k * k).amax() < 1e-10);
        // the dual ladder generator is conservative at negative drift
        let (q, r) = ladder::dual_ladder(&m, &s.k, &s.l).unwrap();
        prop_assert!((0..q.nrows()).all(|a| q.row(a).sum().abs() < 1e-10));
        prop_assert!((0..r.nrows()).all(|b| r.row(b).sum() <= 1.0 + 1e-10));
    }

    #[test]
    fn kappa_vanishes_at_zero_and_alpha(seed in 0u64..10_000) {
        let m = fixtures::random_model(seed);
        prop_assert!(spectral::kappa(&m, 0.0).unwrap().abs() < 1e-12);
        let alpha = spectral::decay_rate(&m).unwrap();
        prop_assert!(alpha > 0.0 && alpha < m.theta_max());
        prop_assert!(spectral::kappa(&m, alpha).unwrap().abs() < 1e-11);
        prop_assert!(spectral::kappa(&m, 0.5 * alpha).unwrap() < 0.0);
    }

    #[test]
    fn hitting_table_is_a_family_of_subprobabilities(seed in 0u64..10_000) {
        let m = fixtures::random_model(seed);
        let ctx = KernelContext::new(&m).unwrap();
        let t = renewal::solve_hitting(&ctx, 3.0, 0.05).unwrap();
        let mut prev = t.row_sums(0);
        for k in 0..t.grid.len() {
            let rs = t.row_sums(k);
            prop_assert!(t.psi[k].iter().all(|&p| p >= -1e-12));
            prop_assert!(rs.iter().all(|&s| s <= 1.0 + 1e-9));
            prop_assert!(rs.iter().zip(prev.iter()).all(|(a, b)| *a <= b + 1e-9));
            prev = rs;
        }
        prop_assert!(linalg::sup_norm(&(&t.psi[0] - ctx.gbar_at(0.0))) == 0.0);
    }

    #[test]
    fn asymptotic_quantities_are_positive(seed in 0u64..10_000) {
        let m = fixtures::random_model(seed);
        let a = renewal::asymptotics(&KernelContext::new(&m).unwrap()).unwrap();
        // ν vanishes exactly on rising states that cannot be entered at the running
        // maximum: no jump leads there and no switch from another rising state
        let hh = KernelContext::new(&m).unwrap().h_hat(a.alpha).unwrap();
        let v = m.v();
        for j in 0..m.n() {
            let switched = (0..m.n()).any(|i| i != j && v[i] > 0.0 && m.c()[(i, j)] > 0.0);
            let entered = v[j] < 0.0 || switched || m.d().column(j).iter().any(|&d| d > 0.0);
            prop_assert_eq!(entered, hh.column(j).amax() > 0.0, "state {}", j);
            let ok = if entered { a.nu[j] > 0.0 } else { a.nu[j].abs() < 1e-12 };
            prop_assert!(ok, "state {} nu {}", j, a.nu[j]);
        }
        prop_assert!(a.eta_alpha > 0.0 && a.eta_zero < 0.0);
        prop_assert!(a.prefactor_total.min() >= 0.0);
        prop_assert!(a.checks.nu_invariance < 1e-9 && a.checks.h_invariance < 1e-9);
        let f = renewal::fluid_tail(&m).unwrap();
        prop_assert!(f.coefficients.min() >= 0.0 && f.coefficients.sum() > 0.0);
        prop_assert!(f.beta_residual < 1e-10);
    }
}
