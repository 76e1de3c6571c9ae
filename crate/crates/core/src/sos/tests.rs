use super::*;

fn p(s: &str) -> Polynomial {
    s.parse().unwrap()
}

fn x(k: usize) -> Var {
    Var::x(k)
}

#[test]
fn simple_squares_are_sos() {
    for s in ["x1^2 + 1", "x1^4 + 2*x1^2 + 1", "x1^2 + 2*x1*x2 + x2^2"] {
        let (ok, cert) = check_sos(&p(s), 1e-7);
        assert!(ok, "{s}");
        let cert = cert.unwrap();
        let r = verify_certificate(&p(s), &cert, CertTolerance::default());
        assert!(r.passed, "{s}: {r:?}");
    }
}

#[test]
fn gram_of_x2_plus_1_is_identity() {
    let (ok, cert) = check_sos(&p("x1^2 + 1"), 1e-7);
    assert!(ok);
    let g = cert.unwrap().gram;
    assert!((g - DMatrix::identity(2, 2)).amax() < 1e-7);
}

#[test]
fn non_sos_polynomials_are_rejected() {
    for s in ["x1 - 1", "-x1^2", "x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1"] {
        assert!(!check_sos(&p(s), 1e-7).0, "{s}");
    }
}

#[test]
fn odd_degree_is_infeasible_by_construction() {
    let mut prog = SosProgram::new(vec![x(0)]);
    prog.require_sos("odd", LinPoly::from(p("x1^3 + 1")));
    assert!(matches!(prog.compile(), Err(SosError::InfeasibleByConstruction { .. })));
}

#[test]
fn motzkin_infeasibility_names_the_constraint() {
    let mut prog = SosProgram::new(vec![x(0), x(1)]);
    prog.require_sos("motzkin", LinPoly::from(p("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1")));
    match prog.solve() {
        Err(SosError::Infeasible { family, .. }) => assert_eq!(family, "motzkin"),
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn matrix_constraints() {
    let (ok, _) = check_sos_matrix(&PolyMatrix::identity(2), 1e-7);
    assert!(ok);
    let rank_one = PolyMatrix::parse(&[&["1", "x1"], &["x1", "x1^2"]]).unwrap();
    let (ok, cert) = check_sos_matrix(&rank_one, 1e-7);
    assert!(ok);
    assert!(cert.unwrap().basis.len() >= 2);
    let bad = PolyMatrix::parse(&[&["1", "0"], &["0", "x1 - 1"]]).unwrap();
    assert!(!check_sos_matrix(&bad, 1e-7).0);
}

#[test]
fn asymmetric_matrix_is_rejected() {
    let mut prog = SosProgram::new(vec![x(0)]);
    let m = LinMatrix::from(&PolyMatrix::parse(&[&["1", "x1"], &["0", "1"]]).unwrap());
    assert_eq!(prog.require_sos_matrix("M", m), Err(SosError::Asymmetric("M".into())));
}

#[test]
fn quadratic_lyapunov_for_stable_linear_system() {
    // f = (-x1 + x2, -x2); find V with V − l ∈ Σ and −∇V·f − l ∈ Σ.
    let vars = vec![x(0), x(1)];
    let mut prog = SosProgram::new(vars.clone());
    let v = prog.free_poly_deg("V", &vars, 2, 2);
    let l = LinPoly::from(p("0.01*x1^2 + 0.01*x2^2"));
    prog.require_sos("V positive", v.sub(&l));
    let f = [p("-x1 + x2"), p("-x2")];
    let vdot = v.diff(x(0)).mul_poly(&f[0]).add(&v.diff(x(1)).mul_poly(&f[1]));
    prog.require_sos("V decreasing", vdot.scale(-1.0).sub(&l));
    let sol = prog.solve().unwrap();
    assert_eq!(sol.certificates.len(), 2);
    for c in &sol.certificates {
        assert!(c.report.max_residual < 1e-7);
    }
    let vv = &sol.decisions["V"];
    assert!(vv.eval_state(&[1.0, -0.5], 0.0).unwrap() > 0.0);
}

#[test]
fn s_procedure_containment_and_shifted_square() {
    // x² ≥ 0 on {x² ≥ 0}.
    let mut prog = SosProgram::new(vec![x(0)]);
    prog.s_procedure("self", &LinPoly::from(p("x1^2")), &[p("x1^2")], &[0]);
    assert!(prog.solve().is_ok());

    // x² − 2x + 2 = (x − 1)² + 1 > 0 on {x − 1 ≥ 0}. With a constant
    // multiplier s, (x − 1)² + 1 − s(x − 1) needs s² ≤ 4.
    let mut prog = SosProgram::new(vec![x(0)]);
    let mult = prog.s_procedure("shifted", &LinPoly::from(p("x1^2 - 2*x1 + 2")), &[p("x1 - 1")], &[0]);
    let sol = prog.solve().unwrap();
    let s = sol.poly(&mult[0]).constant_term();
    assert!((-1e-7..=2.0 + 1e-7).contains(&s), "multiplier {s}");
}

#[test]
fn lower_bound_scalar_and_objective() {
    // max t s.t. x² + 2x + 3 − t ∈ Σ has t = 2.
    let t = sos_lower_bound(&p("x1^2 + 2*x1 + 3")).unwrap();
    assert!((t - 2.0).abs() < 1e-6, "{t}");
    // Bounded scalar: minimize u subject to u ≥ 0.5.
    let mut prog = SosProgram::new(vec![x(0)]);
    let u = prog.scalar("u", Some(0.5));
    prog.require_sos("u x^2", LinPoly::unknown_term(u, 1.0, Monomial::from_pairs([(x(0), 2)])));
    prog.minimize(u, 1.0);
    let sol = prog.solve().unwrap();
    assert!((sol.scalars["u"] - 0.5).abs() < 1e-6);
}

#[test]
fn matrix_margin_of_constant_matrix_is_min_eigenvalue() {
    let m = PolyMatrix::from_constant(2, 2, &[2.0, 1.0, 1.0, 2.0]);
    let t = sos_matrix_margin(&m).unwrap();
    assert!((t - 1.0).abs() < 1e-6, "{t}");
}

#[test]
fn zero_constraints_pin_unknowns() {
    let mut prog = SosProgram::new(vec![x(0)]);
    let g = prog.free_poly_deg("g", &[x(0)], 0, 2);
    prog.require_zero("g = x^2 + 1", g.sub(&LinPoly::from(p("x1^2 + 1"))));
    prog.require_sos("g sos", g);
    let sol = prog.solve().unwrap();
    assert!((&sol.decisions["g"] - &p("x1^2 + 1")).max_abs_coeff() < 1e-7);
}

#[test]
fn outside_universe_is_rejected() {
    let mut prog = SosProgram::new(vec![x(0)]);
    prog.require_sos("stray", LinPoly::from(p("x2^2")));
    assert!(matches!(prog.compile(), Err(SosError::OutsideUniverse { .. })));
}

#[test]
fn json_round_trip_and_sdpa_dump() {
    let mut prog = SosProgram::new(vec![x(0)]);
    let v = prog.sos_poly("s", &[x(0)], 2);
    prog.require_zero("pin", v.sub(&LinPoly::from(p("x1^2 + 1"))));
    let back = SosProgram::from_json(&prog.to_json()).unwrap();
    assert_eq!(back, prog);
    let text = prog.export_sdpa().unwrap();
    let parsed = crate::sdp::parse_sdpa(&text).unwrap();
    assert_eq!(parsed.constraints.len(), prog.compile().unwrap().sdp.constraints.len());
}
