use gism::expr::Expr;
use gism::poly::{PolyVector, Polynomial, Var};
use gism::recast::{recast_system, simulate_original, simulate_recast, MultiplierDegrees, RecastError};
use gism::sim::ExprMatrix;
use gism::sos::SosProgram;
use nalgebra::DVector;
use proptest::prelude::*;

fn e(s: &str) -> Expr {
    s.parse().unwrap()
}

fn p(s: &str) -> Polynomial {
    s.parse().unwrap()
}

fn column(items: &[&str]) -> ExprMatrix {
    ExprMatrix::try_from(items.iter().map(|s| vec![e(s)]).collect::<Vec<_>>()).unwrap()
}

fn example1() -> (Vec<Expr>, ExprMatrix) {
    let f = vec![
        e(r#""-x1^3 + x2""#),
        e(r#"(+ "-x1 - x2" (* 0.3 "x1" (cos "x1")) (* 0.01 "t"))"#),
        e(r#"(+ "-x3" (* 0.1 "x2" (sin "x1")))"#),
    ];
    let b = column(&[r#"(+ (powr "x3" 2 3) 1)"#, "0", "0"]);
    (f, b)
}

#[test]
fn example1_extended_system() {
    let (f, b) = example1();
    let rm = recast_system(&f, &b).unwrap();
    assert_eq!(rm.n_ext(), 8);
    assert_eq!(rm.f.0[0], p("-x1^3 + x2"));
    assert_eq!(rm.f.0[1], p("-x1 - x2 + 0.3*x1*x4 + 0.01*x6"));
    assert_eq!(rm.f.0[2], p("-x3 + 0.1*x2*x5"));
    assert_eq!(rm.f.0[3], p("-x5*(-x1^3 + x2)"));
    assert_eq!(rm.f.0[4], p("x4*(-x1^3 + x2)"));
    assert_eq!(rm.f.0[5], p("1"));
    let f7 = &(&p("x8^2") * &p("-x3 + 0.1*x2*x5")).scale(1.0 / 3.0) - &rm.f.0[6];
    assert!(f7.max_abs_coeff() < 1e-15);
    let f8 = &(&p("x8^4") * &p("-x3 + 0.1*x2*x5")).scale(-1.0 / 3.0) - &rm.f.0[7];
    assert!(f8.max_abs_coeff() < 1e-15);
    assert_eq!(rm.b.row(0).0[0], p("x7^2 + 1"));
    for i in [2, 5, 6, 7] {
        assert!(rm.b.row(i).0[0].is_zero(), "row {i}");
    }
    assert_eq!(rm.g1, vec![p("x4^2 + x5^2 - 1"), p("x7^3 - x3"), p("x7*x8 - 1")]);
    assert_eq!(rm.g2, vec![p("x6")]);
}

#[test]
fn slack_input_rows_follow_the_chain_rule() {
    // u enters x1, so cos x1 and sin x1 pick up −sin·B1 and cos·B1.
    let (f, b) = example1();
    let rm = recast_system(&f, &b).unwrap();
    assert_eq!(rm.b.row(3).0[0], p("-x5*(x7^2 + 1)"));
    assert_eq!(rm.b.row(4).0[0], p("x4*(x7^2 + 1)"));
}

#[test]
fn constraints_are_invariant() {
    let (f, b) = example1();
    let rm = recast_system(&f, &b).unwrap();
    let x = [0.3, -0.7, 1.4];
    let xe = rm.lift_state(&x, 0.8).unwrap();
    for (df, db) in rm.constraint_derivatives() {
        assert!(df.eval_state(&xe, 0.0).unwrap().abs() < 1e-12);
        for c in db {
            assert!(c.eval_state(&xe, 0.0).unwrap().abs() < 1e-12);
        }
    }
}

#[test]
fn polynomial_plants_pass_through() {
    let f = vec![e(r#""-x1 + x2""#), e(r#""-x2^3""#)];
    let rm = recast_system(&f, &column(&["0", "1"])).unwrap();
    assert!(rm.is_identity());
    assert_eq!(rm.f, PolyVector::parse(&["-x1 + x2", "-x2^3"]).unwrap());
}

#[test]
fn shared_arguments_share_slacks() {
    let f = vec![e(r#"(* (sin "x1") (cos "x1"))"#), e(r#"(/ "x1" "1 + x2^2")"#), e(r#"(exp "x2")"#)];
    let rm = recast_system(&f, &column(&["1", "0", "0"])).unwrap();
    // sin/cos pair, one inverse, one exponential.
    assert_eq!(rm.n_ext(), 3 + 4);
    assert_eq!(rm.g1.len(), 2);
    assert_eq!(rm.g2.len(), 1);
}

#[test]
fn unsupported_nodes_are_named() {
    let err = recast_system(&[e(r#"(abs "x1")"#)], &column(&["1"])).unwrap_err();
    match err {
        RecastError::Unsupported(s) => assert!(s.contains("abs")),
        other => panic!("unexpected {other:?}"),
    }
}

fn feedback(x: &[f64], t: f64) -> DVector<f64> {
    DVector::from_element(1, -0.5 * x[0] + 0.2 * (2.0 * t).sin())
}

#[test]
fn extended_trajectory_projects_onto_original() {
    let (f, b) = example1();
    let rm = recast_system(&f, &b).unwrap();
    let x0 = [0.5, -0.4, 0.8];
    let direct = simulate_original(&f, &b, &x0, 0.0, 5.0, 1e-3, &feedback).unwrap();
    let lifted = simulate_recast(&rm, &x0, 0.0, 5.0, 1e-3, &feedback, None).unwrap();
    let err = direct
        .iter()
        .zip(&lifted.x)
        .flat_map(|(a, b)| a.iter().zip(rm.project(b)).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "projection error {err}");
    let projected = simulate_recast(&rm, &x0, 0.0, 5.0, 1e-3, &feedback, Some(100)).unwrap();
    assert!(projected.max_drift < 1e-8, "drift {}", projected.max_drift);
}

/// ẋ1 = −x1 + 0.9·x1·cos x2, ẋ2 = −x2 with V = x1² + x2²: the decrease
/// condition is only provable once cos² + sin² = 1 is attached.
#[test]
fn multiplier_makes_trig_decrease_provable() {
    let f = vec![e(r#"(+ "-x1" (* 0.9 "x1" (cos "x2")))"#), e(r#""-x2""#)];
    let rm = recast_system(&f, &column(&["0", "0"])).unwrap();
    let v = p("x1^2 + x2^2");
    let vdot = rm.f.0.iter().enumerate().fold(Polynomial::zero(), |acc, (i, fi)| acc + &v.diff(Var::x(i)) * fi);
    let target = &vdot.scale(-1.0) - &p("0.1*x1^2 + 0.1*x2^2");

    let mut bare = SosProgram::new(rm.vars());
    bare.require_sos("decrease", target.clone().into());
    assert!(bare.solve().is_err());

    let mut prog = SosProgram::new(rm.vars());
    rm.attach_constraints(&mut prog, "decrease", &target.into(), &MultiplierDegrees::default());
    let sol = prog.solve().expect("feasible with multiplier");
    for c in &sol.certificates {
        assert!(c.report.passed, "{}: {:?}", c.constraint, c.report);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_points_satisfy_constraints(x1 in -3.0f64..3.0, x2 in -3.0f64..3.0, x3 in 0.05f64..4.0, t in 0.0f64..10.0) {
        let (f, b) = example1();
        let rm = recast_system(&f, &b).unwrap();
        let xe = rm.lift_state(&[x1, x2, x3], t).unwrap();
        let (eq, ineq) = rm.residuals(&xe).unwrap();
        prop_assert!(eq < 1e-12);
        prop_assert!(ineq >= 0.0);
        // Extended drift agrees with the original vector field on the lift.
        let fe = rm.f.eval_state(&xe, t).unwrap();
        for (i, fi) in f.iter().enumerate() {
            prop_assert!((fe[i] - fi.eval(&[x1, x2, x3], t).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn positive_part_encoding_selects_the_right_branch() {
    use gism::recast::positive_part;
    let a = p("x1 - 0.3");
    let pp = positive_part(&a, Var::x(1));
    for x1 in [-1.0, 0.0, 0.3, 0.7, 2.0] {
        let av: f64 = x1 - 0.3;
        // Exactly one admissible indicator value unless a = 0.
        let admissible: Vec<f64> = [-0.5, 0.5]
            .into_iter()
            .filter(|&s| pp.equality.eval_state(&[x1, s], 0.0).unwrap() == 0.0)
            .filter(|&s| pp.inequality.eval_state(&[x1, s], 0.0).unwrap() >= 0.0)
            .collect();
        assert!(!admissible.is_empty());
        for s in admissible {
            assert!((pp.value.eval_state(&[x1, s], 0.0).unwrap() - av.max(0.0)).abs() < 1e-15);
        }
    }
}
