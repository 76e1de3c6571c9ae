use std::collections::HashMap;

use gism::poly::{jacobian, lie_bracket, monomial_basis, BasisFilter, Monomial, PolyVector, Polynomial, Var};
use proptest::prelude::*;

fn small_int_poly(nvars: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_deg, nvars), -5i32..=5),
        0..6,
    )
    .prop_map(move |terms| {
        Polynomial::from_terms(terms.into_iter().map(|(exps, c)| {
            let m = Monomial::from_pairs(exps.into_iter().enumerate().map(|(i, e)| (Var::x(i), e)));
            (m, c as f64)
        }))
    })
}

fn real_poly(nvars: usize, max_deg: u32) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, nvars), -3.0f64..3.0), 1..8)
        .prop_map(move |terms| {
            Polynomial::from_terms(terms.into_iter().map(|(exps, c)| {
                let m = Monomial::from_pairs(
                    exps.into_iter().enumerate().map(|(i, e)| (Var::x(i), e)),
                );
                (m, c)
            }))
        })
}

proptest! {
    #[test]
    fn ring_axioms(a in small_int_poly(3, 3), b in small_int_poly(3, 3), c in small_int_poly(3, 3)) {
        prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!(&a * &b, &b * &a);
    }

    #[test]
    fn render_parse_identity(a in real_poly(4, 3)) {
        let text = a.to_string();
        let back: Polynomial = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back, a);
    }

    #[test]
    fn jacobian_matches_central_differences(
        v in prop::collection::vec(real_poly(3, 2), 2..4),
        pt in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let v = PolyVector::new(v);
        let vars = [Var::x(0), Var::x(1), Var::x(2)];
        let jac = jacobian(&v, &vars);
        let h = 1e-5;
        for i in 0..v.len() {
            for j in 0..3 {
                let mut plus = pt.clone();
                let mut minus = pt.clone();
                plus[j] += h;
                minus[j] -= h;
                let fd = (v[i].eval_state(&plus, 0.0).unwrap() - v[i].eval_state(&minus, 0.0).unwrap()) / (2.0 * h);
                let exact = jac[(i, j)].eval_state(&pt, 0.0).unwrap();
                prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "fd {} exact {}", fd, exact);
            }
        }
    }

    #[test]
    fn lie_bracket_antisymmetry(f in prop::collection::vec(small_int_poly(3, 2), 3), g in prop::collection::vec(small_int_poly(3, 2), 3)) {
        let (f, g) = (PolyVector::new(f), PolyVector::new(g));
        let fg = lie_bracket(&f, &g).unwrap();
        let gf = lie_bracket(&g, &f).unwrap();
        prop_assert!(fg.add(&gf).iter().all(Polynomial::is_zero));
        prop_assert!(lie_bracket(&f, &f).unwrap().iter().all(Polynomial::is_zero));
    }

    #[test]
    fn basis_without_constant_vanishes_at_origin(n in 1usize..4, d in 1u32..4) {
        let vars: Vec<Var> = (0..n).map(Var::x).collect();
        let z = monomial_basis(&vars, d, &BasisFilter::All);
        prop_assert!(z.iter().all(|m| m.constant_term() == 0.0));
        prop_assert!(z.eval_state(&vec![0.0; n], 0.0).unwrap().iter().all(|&v| v == 0.0));
        // C(n+d, d) - 1 monomials.
        let binom = (1..=d as usize).fold(1usize, |acc, k| acc * (n + k) / k);
        prop_assert_eq!(z.len(), binom - 1);
    }

    #[test]
    fn evaluation_is_term_order_independent(a in real_poly(3, 3), pt in prop::collection::vec(-1.5f64..1.5, 3)) {
        let direct = a.eval_state(&pt, 0.0).unwrap();
        // Naive re-evaluation summing terms in reverse order through a map.
        let point: HashMap<Var, f64> = pt.iter().enumerate().map(|(i, &x)| (Var::x(i), x)).collect();
        let naive: f64 = a.terms().rev().map(|(m, c)| {
            c * m.pairs().iter().map(|&(v, e)| point[&v].powi(e as i32)).product::<f64>()
        }).sum();
        prop_assert!((direct - naive).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}
