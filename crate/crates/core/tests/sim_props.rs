use horizon_lab::conditions::{cond_main_estimate, novikov_curve, ConditionVerdict};
use horizon_lab::kim_omberg::KimOmbergParams;
use horizon_lab::market_sim::{complete_market_value, simulate_paths, FellerCvParams, MarketModel};
use horizon_lab::UtilitySpec;
use proptest::prelude::*;

fn model() -> impl Strategy<Value = MarketModel> {
    prop_oneof![
        (0.0f64..0.1, -1.0f64..1.0, 0.05f64..0.5).prop_map(|(r, lambda, sigma)| MarketModel::Merton { r, lambda, sigma }),
        (0.0f64..1.0, -0.2f64..0.2, 0.1f64..1.0, -0.5f64..0.5)
            .prop_map(|(k, th, b, m)| MarketModel::KimOmberg(KimOmbergParams::new(k, th, b, m, 0.5).unwrap())),
        (0.5f64..3.0, 0.01f64..0.1, 0.1f64..0.4, -1.0f64..1.0, 0.01f64..0.1, 0.01f64..0.1).prop_map(
            |(kappa, theta, beta, rho, v0, c1)| MarketModel::FellerCv(FellerCvParams {
                kappa,
                theta,
                beta,
                rho,
                v0,
                c: [0.05, c1, 1.0, 0.0],
            })
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batch_columns(m in model(), seed in any::<u64>()) {
        let grid = [0.0, 0.1, 0.25, 0.5];
        let b = simulate_paths(&m, &grid, 64, seed).unwrap();
        let again = simulate_paths(&m, &grid, 64, seed).unwrap();
        prop_assert_eq!(&b, &again);
        for i in 0..b.n_paths {
            prop_assert_eq!(b.log_z(i)[0], 0.0);
            prop_assert_eq!(b.log_s0(i)[0], 0.0);
            prop_assert!(b.log_s0(i).windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(b.state(i).len(), grid.len());
            prop_assert!(b.log_z(i).iter().all(|z| z.is_finite()));
        }
    }

    #[test]
    fn budget_identity(r in 0.0f64..0.1, lambda in -1.0f64..1.0, p in -3.0f64..0.9, x in 0.1f64..10.0) {
        prop_assume!(p.abs() > 1e-3);
        let m = MarketModel::Merton { r, lambda, sigma: 0.2 };
        let u = UtilitySpec::power(p).unwrap();
        let v = complete_market_value(&m, &u, x, 1.0, 500, 7).unwrap();
        prop_assert!(v.budget_residual.abs() <= 1e-10 * x);
        prop_assert!(v.sample_reuse);
    }

    #[test]
    fn checkers_deterministic(delta in 0.01f64..1.0, gamma in -3.0f64..-0.01, seed in any::<u64>()) {
        let m = MarketModel::Merton { r: 0.01, lambda: 0.3, sigma: 0.2 };
        let grid = [0.8, 0.9, 1.0];
        prop_assert_eq!(novikov_curve(&m, delta, &grid, 200, seed).unwrap(), novikov_curve(&m, delta, &grid, 200, seed).unwrap());
        let a = cond_main_estimate(&m, gamma, 0.2, 1.0, &grid, 200, seed).unwrap();
        prop_assert_eq!(&a, &cond_main_estimate(&m, gamma, 0.2, 1.0, &grid, 200, seed).unwrap());
        let times: Vec<f64> = a.values.iter().map(|v| v.t).collect();
        prop_assert_eq!(times, grid.to_vec());
    }

    #[test]
    fn overflow_never_holds(lambda in 30.0f64..100.0, delta in 1.0f64..5.0) {
        let m = MarketModel::Merton { r: 0.0, lambda, sigma: 1.0 };
        let rep = novikov_curve(&m, delta, &[0.5, 1.0], 50, 1).unwrap();
        prop_assert_ne!(rep.verdict, ConditionVerdict::HoldsNumerically);
    }
}
