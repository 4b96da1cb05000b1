use horizon_lab::kim_omberg::{analytic_c, discriminant, solve_riccati, Explosive, KimOmbergModel, KimOmbergParams};
use proptest::prelude::*;

fn exploding() -> impl Strategy<Value = KimOmbergParams> {
    (0.0f64..0.2, -0.2f64..0.2, 0.5f64..1.5, -0.5f64..0.5, 0.3f64..0.8)
        .prop_map(|(k, th, b, m, p)| KimOmbergParams::new(k, th, b, m, p).unwrap())
        .prop_filter("negative discriminant", |p| discriminant(p) < 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn c_positive_and_increasing(params in exploding()) {
        let sol = solve_riccati(&params, 50.0, 1e-9).unwrap();
        prop_assert!(sol.explosion.is_some());
        prop_assert!(sol.c_vals.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(sol.c_vals[1..].iter().all(|c| *c > 0.0));
        let t = sol.explosion_time().unwrap();
        for (s, c) in sol.s_grid.iter().zip(&sol.c_vals) {
            if *s <= 0.95 * t {
                let a = analytic_c(&params, *s).unwrap().finite().unwrap();
                prop_assert!((a - c).abs() <= 1e-8 * c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn value_nondecreasing_and_homogeneous(params in exploding(), x in 0.1f64..10.0) {
        let m = KimOmbergModel::solve(params, 50.0, 1e-9).unwrap();
        let t = m.explosion_time().unwrap();
        prop_assert_eq!(m.value_e(0.0).unwrap(), Explosive::Finite(1.0));
        let mut prev = f64::NEG_INFINITY;
        let mut prev_u = f64::NEG_INFINITY;
        for i in 0..=40 {
            let k = 0.98 * t * i as f64 / 40.0;
            let e = m.value_e(k).unwrap().finite().unwrap();
            prop_assert!(e >= prev);
            prev = e;
            let u1 = m.primal_value(1.0, k).unwrap().finite().unwrap();
            let ux = m.primal_value(x, k).unwrap().finite().unwrap();
            prop_assert!(u1 >= prev_u);
            prev_u = u1;
            prop_assert!((ux - x.powf(params.p) * u1).abs() <= 1e-12 * ux.abs());
        }
        prop_assert!(m.value_e(t * 1.001).unwrap().is_exploded());
    }

    #[test]
    fn halving_tolerance_keeps_bracket(params in exploding()) {
        let tol = 1e-6;
        let a = solve_riccati(&params, 50.0, tol).unwrap().explosion.unwrap();
        let b = solve_riccati(&params, 50.0, tol / 2.0).unwrap().explosion.unwrap();
        prop_assert!((a.midpoint() - b.midpoint()).abs() < tol);
    }
}
