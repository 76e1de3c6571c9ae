use gism::sdp::{check_kkt, solve, Constraint, Entry, SdpProblem, SdpStatus, SolverOptions};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Strictly feasible primal and dual by construction: `b = A(X0) + F x0` and
/// `C = Aᵀy0 + S0`, `c_f = Fᵀy0`.
fn random_problem(seed: u64) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nblocks = rng.gen_range(1..=3);
    let sizes: Vec<usize> = (0..nblocks).map(|_| rng.gen_range(1..=5)).collect();
    let nfree = rng.gen_range(0..=2);
    let mut p = SdpProblem::new(sizes.clone(), nfree);
    let dim: usize = sizes.iter().map(|n| n * (n + 1) / 2).sum();
    let m = rng.gen_range(1..=dim.max(1));
    for _ in 0..m {
        let mut c = Constraint::default();
        for (b, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                for j in i..n {
                    if rng.gen_bool(0.4) {
                        c.entries.push(Entry { block: b, i, j, value: rng.gen_range(-1.0..1.0) });
                    }
                }
            }
        }
        for f in 0..nfree {
            c.free.push((f, rng.gen_range(-1.0..1.0)));
        }
        p.constraints.push(c);
    }
    let x0: Vec<DMatrix<f64>> = sizes.iter().map(|&n| random_pd(&mut rng, n)).collect();
    let xf0 = DVector::from_fn(nfree, |_, _| rng.gen_range(-1.0..1.0));
    let b = p.apply(&x0, &xf0);
    for (c, bi) in p.constraints.iter_mut().zip(b.iter()) {
        c.rhs = *bi;
    }
    let y0 = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    let aty = p.adjoint(&y0);
    p.objective = aty
        .iter()
        .zip(&sizes)
        .map(|(a, &n)| a + random_pd(&mut rng, n))
        .collect();
    p.free_objective = p.free_adjoint(&y0).iter().copied().collect();
    p
}

#[test]
fn ten_random_feasible_problems_converge() {
    for seed in 0..10 {
        let p = random_problem(seed);
        p.validate().unwrap();
        let sol = solve(&p, &SolverOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal, "seed {seed}");
        let r = check_kkt(&p, &sol);
        assert!(r.max_residual() < 1e-7, "seed {seed}: {r:?}");
        assert!(r.min_eig_x > -1e-9 && r.min_eig_s > -1e-9, "seed {seed}: {r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 40,
        rng_seed: RngSeed::Fixed(0x5d9),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn optimal_solutions_satisfy_kkt_and_weak_duality(seed in 100u64..100_000) {
        let p = random_problem(seed);
        let opts = SolverOptions::default();
        let sol = solve(&p, &opts);
        prop_assert_eq!(sol.status, SdpStatus::Optimal);
        prop_assert!(sol.primal_residual <= 10.0 * opts.tol);
        prop_assert!(sol.dual_residual <= 10.0 * opts.tol);
        prop_assert!(sol.gap <= 10.0 * opts.tol);
        let r = check_kkt(&p, &sol);
        prop_assert!(r.min_eig_x >= -1e-9 && r.min_eig_s >= -1e-9);
        // Weak duality: pobj ≥ dobj up to the residual level.
        prop_assert!(sol.primal_objective >= sol.dual_objective - 1e-6);
    }

    #[test]
    fn solver_is_deterministic(seed in 0u64..1000) {
        let p = random_problem(seed);
        let a = solve(&p, &SolverOptions::default());
        let b = solve(&p, &SolverOptions::default());
        prop_assert_eq!(a, b);
    }
}
