use proptest::prelude::*;
use sparse_dynfilt::theory::{error_bound_at, kappa_admissible_max, theorem_constants, TheoremInputs};

fn inputs() -> impl Strategy<Value = TheoremInputs> {
    (
        0.0f64..0.95,
        prop_oneof![Just(0.0), 0.0f64..2.0],
        0.001f64..1.0,
        0.05f64..1.5,
        1usize..10,
        0.0f64..0.5,
        0.0f64..0.5,
        0.0f64..5.0,
    )
        .prop_map(|(delta, kappa, gamma, f_star, q, eps_max, nu_max, e0)| TheoremInputs {
            delta,
            kappa,
            gamma,
            f_star,
            q,
            b: 10.0,
            eps_max,
            nu_max,
            e0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beta_vanishes_exactly_without_coupling(inp in inputs()) {
        let c = theorem_constants(&inp).unwrap();
        prop_assert_eq!(c.beta == 0.0, inp.kappa * inp.f_star == 0.0);
    }

    #[test]
    fn bound_moves_monotonically_toward_steady_state(inp in inputs()) {
        let c = theorem_constants(&inp).unwrap();
        prop_assume!(c.is_valid());
        let s = c.steady_state(&inp);
        let seq: Vec<f64> = (0..60).map(|n| error_bound_at(n, &inp, &c).unwrap()).collect();
        prop_assert!((seq[0] - inp.e0).abs() <= 1e-12 * (1.0 + inp.e0));
        let tol = 1e-12 * (1.0 + s + inp.e0);
        for w in seq.windows(2) {
            if inp.e0 >= s {
                prop_assert!(w[1] <= w[0] + tol);
            } else {
                prop_assert!(w[1] >= w[0] - tol);
            }
            prop_assert!(w[1] >= s.min(inp.e0) - tol && w[1] <= s.max(inp.e0) + tol);
        }
    }

    #[test]
    fn admissible_kappa_keeps_denominator_positive(inp in inputs()) {
        if let Some(k_max) = kappa_admissible_max(inp.delta, inp.f_star) {
            let c = theorem_constants(&TheoremInputs { kappa: 0.999 * k_max, ..inp }).unwrap();
            prop_assert!(c.denominator_positive && c.contractive);
        } else {
            prop_assert!(theorem_constants(&inp).unwrap().is_valid());
        }
    }
}
