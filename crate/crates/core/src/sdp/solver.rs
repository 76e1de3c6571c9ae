//! Infeasible-start primal-dual interior point method with the HKM search
//! direction and a Mehrotra predictor-corrector step.

use nalgebra::{Cholesky, DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use super::{Infeasibility, SdpProblem, SdpSolution, SdpStatus};

/// Environment variable that overrides the default iteration cap.
pub const MAX_ITER_ENV: &str = "GISM_SDP_MAX_ITER";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative tolerance on primal/dual residuals and duality gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterate norm beyond which a growing ray is read as infeasibility.
    pub ray_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let max_iter = std::env::var(MAX_ITER_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(100);
        SolverOptions { tol: 1e-9, max_iter, ray_threshold: 1e8 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Self::default() }
    }
}

const STEP_FRACTION: f64 = 0.95;
const REG: f64 = 1e-13;
const REFINE_PASSES: usize = 2;

/// Constraint entries expanded to full symmetric `(row, col, value)` form and
/// grouped per block.
struct Layout {
    per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    free: DMatrix<f64>,
}

impl Layout {
    fn new(p: &SdpProblem) -> Self {
        let nb = p.block_sizes.len();
        let mut per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); nb];
        let mut free = DMatrix::zeros(p.constraints.len(), p.num_free);
        for (k, c) in p.constraints.iter().enumerate() {
            let mut by_b: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nb];
            for e in &c.entries {
                by_b[e.block].push((e.i, e.j, e.value));
                if e.i != e.j {
                    by_b[e.block].push((e.j, e.i, e.value));
                }
            }
            for (b, ents) in by_b.into_iter().enumerate() {
                if !ents.is_empty() {
                    per_block[b].push((k, ents));
                }
            }
            for &(f, v) in &c.free {
                free[(k, f)] += v;
            }
        }
        Layout { per_block, free }
    }

    /// `M_ij = Σ_b <A_ib, X_b A_jb S_b⁻¹>`.
    fn schur(&self, m: usize, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m, m);
        for (b, cons) in self.per_block.iter().enumerate() {
            let n = x[b].nrows();
            for (j, aj) in cons {
                // G = X A_j S⁻¹, built from the columns A_j touches.
                let mut xa = DMatrix::<f64>::zeros(n, n);
                let mut cols = Vec::new();
                for &(r, c, v) in aj {
                    for t in 0..n {
                        xa[(t, c)] += v * x[b][(t, r)];
                    }
                    cols.push(c);
                }
                cols.sort_unstable();
                cols.dedup();
                let mut g = DMatrix::<f64>::zeros(n, n);
                for &c in &cols {
                    let col = xa.column(c);
                    let row = sinv[b].row(c);
                    g.ger(1.0, &col, &row.transpose(), 1.0);
                }
                for (i, ai) in cons {
                    let v: f64 = ai.iter().map(|&(r, c, a)| a * g[(c, r)]).sum();
                    out[(*i, *j)] += v;
                }
            }
        }
        (&out + out.transpose()) * 0.5
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Largest `α` with `X + α dX ⪰ 0` (may be infinite).
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        if xb.nrows() == 0 {
            continue;
        }
        let l = Cholesky::new(xb.clone())?.l();
        let t = l.solve_lower_triangular(db)?;
        let w = l.solve_lower_triangular(&t.transpose())?;
        let lam = super::min_eigenvalue(&w);
        if lam < 0.0 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    Some(alpha)
}

const STALL_STEP: f64 = 1e-10;

struct Snapshot {
    merit: f64,
    it: usize,
    x: Vec<DMatrix<f64>>,
    xf: DVector<f64>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    rel: (f64, f64, f64, f64, f64),
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let (p, scales) = problem.normalized();
    let layout = Layout::new(&p);
    let m = p.constraints.len();
    let k = p.num_free;
    let ntot: usize = p.block_sizes.iter().sum::<usize>().max(1);
    let b = p.rhs();
    let cf = DVector::from_column_slice(&p.free_objective);
    let c_norm = (frob(&p.objective).powi(2) + cf.norm_squared()).sqrt();
    let b_norm = b.norm();

    let mut x: Vec<DMatrix<f64>> =
        p.block_sizes.iter().map(|&n| DMatrix::identity(n, n)).collect();
    let mut s = x.clone();
    let mut y = DVector::zeros(m);
    let mut xf = DVector::zeros(k);

    let mut status = SdpStatus::MaxIter;
    let mut infeasibility = None;
    let mut iterations = 0;
    let (mut rel_p, mut rel_d, mut rel_gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut pobj, mut dobj) = (0.0, 0.0);
    let mut best: Option<Snapshot> = None;

    for it in 0..=opts.max_iter {
        iterations = it;
        let rp = &b - p.apply(&x, &xf);
        let aty = p.adjoint(&y);
        let rd: Vec<DMatrix<f64>> = p
            .objective
            .iter()
            .zip(&aty)
            .zip(&s)
            .map(|((c, a), sb)| c - a - sb)
            .collect();
        let rf = &cf - p.free_adjoint(&y);
        pobj = p.primal_objective(&x, &xf);
        dobj = b.dot(&y);
        let xs = inner(&x, &s);
        let mu = xs / ntot as f64;
        let denom = 1.0 + pobj.abs() + dobj.abs();
        rel_p = rp.norm() / (1.0 + b_norm);
        rel_d = (frob(&rd).powi(2) + rf.norm_squared()).sqrt() / (1.0 + c_norm);
        rel_gap = ((pobj - dobj).abs()).max(xs) / denom;
        let merit = rel_p.max(rel_d).max(rel_gap);
        if merit <= opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        if best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(Snapshot {
                merit,
                it,
                x: x.clone(),
                xf: xf.clone(),
                y: y.clone(),
                s: s.clone(),
                rel: (rel_p, rel_d, rel_gap, pobj, dobj),
            });
        }

        // Dual ray: bᵀy > 0 while Aᵀy ≼ (C − Rd), Fᵀy = c_f − r_f stay bounded.
        if dobj > 0.0 {
            let bounded = (frob(&p.objective.iter().zip(&rd).map(|(c, r)| c - r).collect::<Vec<_>>())
                + (&cf - &rf).norm())
                / dobj;
            if bounded < opts.tol || (y.amax() > opts.ray_threshold && bounded < 1e-6) {
                status = SdpStatus::Infeasible;
                infeasibility = Some(Infeasibility::Primal);
                break;
            }
        }
        // Primal ray: <C,X> < 0 while A(X) + F x_f = b − r_p stays bounded.
        if pobj < 0.0 {
            let bounded = (&b - &rp).norm() / -pobj;
            let big = x.iter().map(|m| m.amax()).fold(0.0, f64::max).max(xf.amax());
            if bounded < opts.tol || (big > opts.ray_threshold && bounded < 1e-6) {
                status = SdpStatus::Infeasible;
                infeasibility = Some(Infeasibility::Dual);
                break;
            }
        }
        if it == opts.max_iter {
            break;
        }

        let Some(sinv) = s
            .iter()
            .map(|sb| Cholesky::new(sb.clone()).map(|c| c.inverse()))
            .collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let schur = layout.schur(m, &x, &sinv);
        let mut kkt = DMatrix::zeros(m + k, m + k);
        kkt.view_mut((0, 0), (m, m)).copy_from(&schur);
        if k > 0 {
            kkt.view_mut((0, m), (m, k)).copy_from(&layout.free);
            kkt.view_mut((m, 0), (k, m)).copy_from(&layout.free.transpose());
        }
        // Tiny diagonal shift keeps dependent constraints factorizable; one
        // refinement pass against the exact system removes its bias.
        let mut shifted = kkt.clone();
        let reg = REG * (1.0 + schur.diagonal().amax());
        for i in 0..m {
            shifted[(i, i)] += reg;
        }
        for i in 0..k {
            shifted[(m + i, m + i)] -= REG;
        }
        let lu = LU::new(shifted);
        let kkt_solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            let mut sol = lu.solve(rhs)?;
            let corr = lu.solve(&(rhs - &kkt * &sol))?;
            sol += corr;
            sol.iter().all(|v| v.is_finite()).then_some(sol)
        };

        // HKM direction for the centering target σμI with second-order
        // correction `corr` (dX_aff·dS_aff). `−X` enters exactly rather than
        // as `X S S⁻¹`, which loses accuracy once S is ill-conditioned.
        let direction = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| -> Option<Direction> {
            let base = |i: usize, right: &DMatrix<f64>| -> DMatrix<f64> {
                let mut inner = &x[i] * right;
                if let Some(c) = corr {
                    inner += &c[i];
                }
                sym(&(&sinv[i] * sigma_mu - &x[i] - inner * &sinv[i]))
            };
            let t: Vec<DMatrix<f64>> = (0..x.len()).map(|i| base(i, &rd[i])).collect();
            let mut rhs = DVector::zeros(m + k);
            rhs.rows_mut(0, m).copy_from(&(&rp - p.apply(&t, &DVector::zeros(k))));
            rhs.rows_mut(m, k).copy_from(&rf);
            let sol = kkt_solve(&rhs)?;
            let dy = sol.rows(0, m).into_owned();
            let dxf = sol.rows(m, k).into_owned();
            let atdy = p.adjoint(&dy);
            let ds: Vec<DMatrix<f64>> = rd.iter().zip(&atdy).map(|(r, a)| r - a).collect();
            let mut dx: Vec<DMatrix<f64>> = (0..x.len()).map(|i| base(i, &ds[i])).collect();
            let (mut dy, mut dxf, mut ds) = (dy, dxf, ds);
            // Refine: cancellation in dX leaves a primal defect of order
            // eps·cond(S); correct it with a homogeneous Newton solve.
            for _ in 0..REFINE_PASSES {
                let mut rhs = DVector::zeros(m + k);
                rhs.rows_mut(0, m).copy_from(&(&rp - p.apply(&dx, &dxf)));
                rhs.rows_mut(m, k).copy_from(&(&rf - p.free_adjoint(&dy)));
                let fix = kkt_solve(&rhs)?;
                let fy = fix.rows(0, m).into_owned();
                dxf += fix.rows(m, k);
                for (i, a) in p.adjoint(&fy).into_iter().enumerate() {
                    dx[i] += sym(&(&x[i] * &a * &sinv[i]));
                    ds[i] -= a;
                }
                dy += fy;
            }
            Some(Direction { dx, dxf, dy, ds })
        };

        // Predictor.
        let Some(aff) = direction(0.0, None) else { break };
        let (Some(ap), Some(ad)) = (max_step(&x, &aff.dx), max_step(&s, &aff.ds)) else {
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let x_aff: Vec<DMatrix<f64>> = x.iter().zip(&aff.dx).map(|(a, d)| a + d * ap).collect();
        let s_aff: Vec<DMatrix<f64>> = s.iter().zip(&aff.ds).map(|(a, d)| a + d * ad).collect();
        let mu_aff = inner(&x_aff, &s_aff) / ntot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let corr: Vec<DMatrix<f64>> = aff.dx.iter().zip(&aff.ds).map(|(a, b)| a * b).collect();
        let Some(dir) = direction(sigma * mu, Some(&corr)) else { break };
        let (Some(ap), Some(ad)) = (max_step(&x, &dir.dx), max_step(&s, &dir.ds)) else {
            break;
        };
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        for (xb, d) in x.iter_mut().zip(&dir.dx) {
            *xb += d * ap;
        }
        xf += &dir.dxf * ap;
        for (sb, d) in s.iter_mut().zip(&dir.ds) {
            *sb += d * ad;
        }
        y += &dir.dy * ad;
        if ap.max(ad) < STALL_STEP {
            break;
        }
    }

    // Numerical trouble can make late iterates worse; fall back to the best
    // one seen.
    if status == SdpStatus::MaxIter {
        if let Some(b) = best {
            (x, xf, y, s) = (b.x, b.xf, b.y, b.s);
            (rel_p, rel_d, rel_gap, pobj, dobj) = b.rel;
            iterations = b.it;
        }
    }

    for (yi, sc) in y.iter_mut().zip(&scales) {
        *yi /= sc;
    }
    SdpSolution {
        x,
        x_free: xf,
        y,
        s,
        status,
        infeasibility,
        iterations,
        primal_residual: rel_p,
        dual_residual: rel_d,
        gap: rel_gap,
        primal_objective: pobj,
        dual_objective: dobj,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{check_kkt, Constraint, Entry};

    #[test]
    fn scalar_lower_bound() {
        // min x s.t. x = 2 + t, t ≥ 0 encoded as one 1×1 block and a free x.
        let mut p = SdpProblem::new(vec![1], 1);
        p.free_objective[0] = 1.0;
        p.constraints.push(Constraint {
            entries: vec![Entry { block: 0, i: 0, j: 0, value: -1.0 }],
            free: vec![(0, 1.0)],
            rhs: 2.0,
        });
        let sol = solve(&p, &SolverOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x_free[0] - 2.0).abs() < 1e-7, "{}", sol.x_free[0]);
        assert!(check_kkt(&p, &sol).max_residual() < 1e-7);
    }

    #[test]
    fn unit_trace_minimum() {
        // min x11 s.t. trace X = 1: optimum 0 at X = diag(0, 1).
        let mut p = SdpProblem::new(vec![2], 0);
        p.objective[0][(0, 0)] = 1.0;
        p.constraints.push(Constraint {
            entries: vec![
                Entry { block: 0, i: 0, j: 0, value: 1.0 },
                Entry { block: 0, i: 1, j: 1, value: 1.0 },
            ],
            free: vec![],
            rhs: 1.0,
        });
        let sol = solve(&p, &SolverOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.primal_objective.abs() < 1e-8);
        assert!((sol.x[0][(1, 1)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn unbounded_primal_is_flagged() {
        // min -x11 s.t. x22 = 1: x11 can grow without bound.
        let mut p = SdpProblem::new(vec![2], 0);
        p.objective[0][(0, 0)] = -1.0;
        p.constraints.push(Constraint {
            entries: vec![Entry { block: 0, i: 1, j: 1, value: 1.0 }],
            free: vec![],
            rhs: 1.0,
        });
        let sol = solve(&p, &SolverOptions::default());
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert_eq!(sol.infeasibility, Some(Infeasibility::Dual));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut p = SdpProblem::new(vec![3], 0);
        p.objective[0] = DMatrix::identity(3, 3);
        p.constraints.push(Constraint {
            entries: vec![Entry { block: 0, i: 0, j: 1, value: 1.0 }],
            free: vec![],
            rhs: 5.0,
        });
        let opts = SolverOptions { max_iter: 1, ..SolverOptions::default() };
        assert_eq!(solve(&p, &opts).status, SdpStatus::MaxIter);
    }
}
