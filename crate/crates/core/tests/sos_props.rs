use gism::poly::{monomials_upto, LinPoly, Polynomial, Var};
use gism::sos::{check_sos, verify_certificate, CertTolerance, SosProgram};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [Var; 2] = [Var::x(0), Var::x(1)];

fn random_poly(rng: &mut ChaCha8Rng, degree: u32) -> Polynomial {
    Polynomial::from_terms(
        monomials_upto(&VARS, degree)
            .into_iter()
            .map(|m| (m, rng.gen_range(-1.0..1.0)))
            .collect::<Vec<_>>(),
    )
}

fn sum_of_squares(seed: u64) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=3);
    let d = rng.gen_range(1..=2);
    (0..k).fold(Polynomial::zero(), |acc, _| {
        let q = random_poly(&mut rng, d);
        &acc + &(&q * &q)
    })
}

/// A square sum perturbed by `a·m` for a random monomial `m`;
/// SOS for some draws and not for others.
fn perturbed(seed: u64) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let base = sum_of_squares(seed);
    let monos = monomials_upto(&VARS, base.degree());
    let m = monos[rng.gen_range(0..monos.len())].clone();
    &base + &Polynomial::term(rng.gen_range(-2.0..1.0), m)
}

fn feasible(p: &Polynomial, prune: bool) -> bool {
    let mut prog = SosProgram::new(VARS.to_vec());
    prog.options.prune = prune;
    prog.require_sos("p", LinPoly::from(p));
    prog.solve().is_ok()
}

fn config(cases: u32, seed: u64) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(30, 0x51))]

    #[test]
    fn sums_of_squares_are_certified_at_ten_times_solver_tolerance(seed in 0u64..1_000_000) {
        let p = sum_of_squares(seed);
        let (ok, cert) = check_sos(&p, 1e-7);
        prop_assert!(ok);
        let cert = cert.unwrap();
        let solver_tol = gism::sdp::SolverOptions::default().tol;
        let tol = CertTolerance { coeff: 10.0 * solver_tol * (1.0 + p.max_abs_coeff()), eig: 10.0 * solver_tol };
        let r = verify_certificate(&p, &cert, tol);
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn accepted_polynomials_are_nonnegative_at_random_points(seed in 0u64..1_000_000) {
        let p = perturbed(seed);
        let tol = 1e-7;
        if check_sos(&p, tol).0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = VARS.len() as f64;
            for _ in 0..1000 {
                let pt: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                let norm = (pt[0] * pt[0] + pt[1] * pt[1]).sqrt();
                let v = p.eval_state(&pt, 0.0).unwrap();
                prop_assert!(v >= -n * tol * (1.0 + norm.powi(p.degree() as i32)), "{p} at {pt:?} = {v}");
            }
        }
    }
}

proptest! {
    #![proptest_config(config(30, 0x52))]

    #[test]
    fn pruning_never_changes_feasibility(seed in 0u64..1_000_000) {
        let p = perturbed(seed);
        prop_assert_eq!(feasible(&p, true), feasible(&p, false), "{}", p);
    }

    #[test]
    fn s_procedure_is_monotone_in_multiplier_degree(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        c in -1.0f64..2.0,
    ) {
        // x⁴ + a·x³ + b·x² + c ≥ 0 on {x² − 1 ≥ 0}; remainders stay quartic
        // for multiplier degrees 0 and 2.
        let target: Polynomial = format!("x1^4 + {a}*x1^3 + {b}*x1^2 + {c}").parse().unwrap();
        let g: Polynomial = "x1^2 - 1".parse().unwrap();
        let feasible_at = |d: u32| {
            let mut prog = SosProgram::new(vec![Var::x(0)]);
            prog.s_procedure("containment", &LinPoly::from(&target), std::slice::from_ref(&g), &[d]);
            prog.solve().is_ok()
        };
        if feasible_at(0) {
            prop_assert!(feasible_at(2));
        }
    }
}
