mod common;

use kahler_ot::expr::{parse_spec, Expr};
use kahler_ot::kahler::kahler_curvature;
use kahler_ot::potentials::{catalog, parse};
use kahler_ot::transport::{
    cost_matrix, natural_to_simplex, simplex_to_natural, solve_exact, solve_sinkhorn, CostMatrix,
};
use kahler_ot::mtw::CostSpec;
use proptest::prelude::*;

use common::{brute_force_assignment, fd_tensors, rel_err};

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0usize..2).prop_map(Expr::var),
        (-3.0f64..3.0).prop_map(Expr::num),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            inner.clone().prop_map(|a| -a),
            inner.clone().prop_map(|a| a.cosh()),
            inner.clone().prop_map(|a| a.exp()),
            (inner, 1u8..4).prop_map(|(a, k)| a.pow(k as f64)),
        ]
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quartic_polynomials_are_differentiated_exactly(
        coeffs in proptest::collection::vec(-2.0f64..2.0, 15),
        x in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let mut terms = Vec::new();
        let mut c = coeffs.iter();
        for total in 0..=4 {
            for i in 0..=total {
                terms.push(format!("{} * u1^{} * u2^{}", c.next().unwrap(), i, total - i));
            }
        }
        let text = terms.join(" + ");
        let spec = parse(&text).unwrap();
        let b = spec.raw_bundle(&x).unwrap();
        let f = |u: &[f64]| spec.value(u).unwrap();
        // Extrapolated central differences are exact on quartics up to roundoff.
        let fd = fd_tensors(&f, &x, 0.5);
        let d2: Vec<f64> = b.d2.iter().copied().collect();
        prop_assert!(rel_err(&b.grad, &fd.grad, 1.0) < 1e-9);
        prop_assert!(rel_err(&d2, &fd.d2, 1.0) < 1e-9);
        prop_assert!(rel_err(b.d3.as_slice(), &fd.d3, 1.0) < 1e-9);
        prop_assert!(rel_err(b.d4.as_slice(), &fd.d4, 1.0) < 1e-9);
    }

    #[test]
    fn printed_expressions_parse_back(e in expr_tree(), x in proptest::collection::vec(-1.5f64..1.5, 2)) {
        let text = e.to_string();
        let back = parse_spec(&text).unwrap().body;
        let a: Option<f64> = e.eval(&x).ok().filter(|v: &f64| v.is_finite());
        let b: Option<f64> = back.eval(&x).ok().filter(|v: &f64| v.is_finite());
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!(close(a, b), "{text}: {a} vs {b}"),
            (None, None) => {}
            _ => prop_assert!(false, "{text}: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn simplex_coordinates_round_trip(w in proptest::collection::vec(0.01f64..1.0, 2..6)) {
        let s: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|v| v / s).collect();
        let back = natural_to_simplex(&simplex_to_natural(&p).unwrap()).unwrap();
        for (a, b) in p.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn plans_have_the_requested_marginals(
        n in 2usize..7,
        m in 2usize..7,
        seed in proptest::collection::vec(0.1f64..1.0, 12),
        pts in proptest::collection::vec(-1.0f64..1.0, 24),
    ) {
        let norm = |w: &[f64]| { let s: f64 = w.iter().sum(); w.iter().map(|v| v / s).collect::<Vec<f64>>() };
        let a = norm(&seed[..n]);
        let b = norm(&seed[6..6 + m]);
        let xs: Vec<Vec<f64>> = (0..n).map(|i| pts[2 * i..2 * i + 2].to_vec()).collect();
        let ys: Vec<Vec<f64>> = (0..m).map(|j| pts[12 + 2 * j..14 + 2 * j].to_vec()).collect();
        let c = cost_matrix(&CostSpec::psi(catalog("multinomial", &[]).unwrap()), &xs, &ys).unwrap();
        for plan in [solve_exact(&a, &b, &c).unwrap(), solve_sinkhorn(&a, &b, &c, 1e-3, 100_000).unwrap()] {
            prop_assert!(plan.entries.iter().all(|v| *v >= 0.0));
            prop_assert!(plan.marginal_violation(&a, &b) <= 1e-8);
        }
    }

    #[test]
    fn exact_cost_equals_best_permutation(pts in proptest::collection::vec(-1.0f64..1.0, 20)) {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| pts[2 * i..2 * i + 2].to_vec()).collect();
        let ys: Vec<Vec<f64>> = (0..5).map(|j| pts[10 + 2 * j..12 + 2 * j].to_vec()).collect();
        let c: CostMatrix = cost_matrix(&CostSpec::psi(catalog("quadratic", &[]).unwrap()), &xs, &ys).unwrap();
        let w = vec![0.2; 5];
        let plan = solve_exact(&w, &w, &c).unwrap();
        prop_assert!((plan.cost - brute_force_assignment(&c) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn kahler_blocks_satisfy_the_mixed_identity(u1 in -2.0f64..2.0, u2 in -2.0f64..2.0) {
        for name in ["multinomial", "log-cosh", "power"] {
            let k = kahler_curvature(&catalog(name, &[]).unwrap(), &[u1, u2]).unwrap();
            prop_assert!(k.block_identity_defect() < 1e-10);
        }
    }
}
