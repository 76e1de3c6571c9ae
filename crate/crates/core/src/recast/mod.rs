//! Polynomial recasting of plants with elementary-function terms.
//!
//! Each `sin`/`cos`, `exp`, rational power, division by a non-constant and
//! explicit time becomes a slack state whose dynamics follow from the chain
//! rule, together with the algebraic constraints that tie it to the original
//! coordinates.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr};
use crate::poly::{LinPoly, PolyMatrix, PolyVector, Polynomial, Var};
use crate::sim::ExprMatrix;
use crate::sos::SosProgram;

#[derive(Debug, thiserror::Error)]
pub enum RecastError {
    #[error("cannot recast '{0}' into polynomial form")]
    Unsupported(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A slack state and the expression it stands for in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub var: Var,
    pub definition: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecastMap {
    pub n_orig: usize,
    pub slacks: Vec<Slack>,
    /// Extended drift and input matrix over original plus slack states.
    pub f: PolyVector,
    pub b: PolyMatrix,
    /// Equalities `G1 = 0` and inequalities `G2 ≥ 0`.
    pub g1: Vec<Polynomial>,
    pub g2: Vec<Polynomial>,
}

#[derive(Debug, Clone)]
enum Kind {
    /// `(cos a, sin a)` in creation order given by `cos_first`.
    Trig { cos_first: bool },
    Exp,
    /// `a^(1/q)` and `a^(−1/q)`.
    Root { q: u32 },
    Inverse,
    Time,
}

#[derive(Debug, Clone)]
struct Entry {
    kind: Kind,
    arg: Polynomial,
    vars: Vec<Var>,
}

struct Builder {
    n: usize,
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    slacks: Vec<Slack>,
}

impl Builder {
    fn fresh(&mut self, definition: Expr) -> Var {
        let v = Var::x(self.n + self.slacks.len());
        self.slacks.push(Slack { var: v, definition });
        v
    }

    fn time(&mut self) -> Var {
        let key = "time".to_string();
        if let Some(&i) = self.index.get(&key) {
            return self.entries[i].vars[0];
        }
        let v = self.fresh(Expr::poly(Polynomial::var(Var::t())));
        self.index.insert(key, self.entries.len());
        self.entries.push(Entry { kind: Kind::Time, arg: Polynomial::zero(), vars: vec![v] });
        v
    }

    fn lookup(&self, tag: &str, arg: &Polynomial) -> Option<&Entry> {
        self.index.get(&format!("{tag}|{arg}")).map(|&i| &self.entries[i])
    }

    fn register(&mut self, tag: &str, kind: Kind, arg: Polynomial, defs: Vec<Expr>) -> Vec<Var> {
        let vars: Vec<Var> = defs.into_iter().map(|d| self.fresh(d)).collect();
        self.index.insert(format!("{tag}|{arg}"), self.entries.len());
        self.entries.push(Entry { kind, arg, vars: vars.clone() });
        vars
    }

    fn trig(&mut self, a: &Expr, want_cos: bool) -> Result<Polynomial, RecastError> {
        let arg = self.poly(a)?;
        let vars = match self.lookup("trig", &arg) {
            Some(e) => e.vars.clone(),
            None => {
                let cos = Expr::Cos(Box::new(a.clone()));
                let sin = Expr::Sin(Box::new(a.clone()));
                let defs = if want_cos { vec![cos, sin] } else { vec![sin, cos] };
                self.register("trig", Kind::Trig { cos_first: want_cos }, arg.clone(), defs)
            }
        };
        let Some(Entry { kind: Kind::Trig { cos_first }, .. }) = self.lookup("trig", &arg) else {
            unreachable!("trig entry registered above")
        };
        let (c, s) = if *cos_first { (vars[0], vars[1]) } else { (vars[1], vars[0]) };
        Ok(Polynomial::var(if want_cos { c } else { s }))
    }

    fn inverse(&mut self, a: &Expr) -> Result<Polynomial, RecastError> {
        let arg = self.poly(a)?;
        if arg.is_constant() {
            let c = arg.constant_term();
            if c == 0.0 {
                return Err(RecastError::Unsupported(format!("division by zero in {a}")));
            }
            return Ok(Polynomial::constant(1.0 / c));
        }
        let v = match self.lookup("inv", &arg) {
            Some(e) => e.vars[0],
            None => {
                let def = Expr::Div(Box::new(Expr::c(1.0)), Box::new(a.clone()));
                self.register("inv", Kind::Inverse, arg, vec![def])[0]
            }
        };
        Ok(Polynomial::var(v))
    }

    fn power(&mut self, a: &Expr, p: i32, q: i32) -> Result<Polynomial, RecastError> {
        if q == 0 {
            return Err(RecastError::Unsupported(format!("zero root index in {a}")));
        }
        let (mut p, mut q) = (p, q);
        if q < 0 {
            p = -p;
            q = -q;
        }
        let g = gcd(p.unsigned_abs(), q as u32) as i32;
        let (p, q) = (p / g.max(1), q / g.max(1));
        if q == 1 {
            return if p >= 0 {
                Ok(self.poly(a)?.pow(p as u32))
            } else {
                Ok(self.inverse(a)?.pow((-p) as u32))
            };
        }
        let arg = self.poly(a)?;
        let vars = match self.lookup(&format!("root{q}"), &arg) {
            Some(e) => e.vars.clone(),
            None => {
                let defs = vec![
                    Expr::PowRational(Box::new(a.clone()), 1, q),
                    Expr::PowRational(Box::new(a.clone()), -1, q),
                ];
                self.register(&format!("root{q}"), Kind::Root { q: q as u32 }, arg, defs)
            }
        };
        Ok(if p >= 0 {
            Polynomial::var(vars[0]).pow(p as u32)
        } else {
            Polynomial::var(vars[1]).pow((-p) as u32)
        })
    }

    fn poly(&mut self, e: &Expr) -> Result<Polynomial, RecastError> {
        Ok(match e {
            Expr::Const(c) => Polynomial::constant(*c),
            Expr::Poly(p) => {
                if p.vars().contains(&Var::t()) {
                    let t = self.time();
                    p.substitute(&HashMap::from([(Var::t(), Polynomial::var(t))]))
                } else {
                    p.clone()
                }
            }
            Expr::Add(v) => {
                let mut acc = Polynomial::zero();
                for a in v {
                    acc = acc + self.poly(a)?;
                }
                acc
            }
            Expr::Mul(v) => {
                let mut acc = Polynomial::one();
                for a in v {
                    acc = &acc * &self.poly(a)?;
                }
                acc
            }
            Expr::Sub(a, b) => self.poly(a)? - self.poly(b)?,
            Expr::Neg(a) => self.poly(a)?.scale(-1.0),
            Expr::Div(a, b) => {
                let num = self.poly(a)?;
                &num * &self.inverse(b)?
            }
            Expr::Sin(a) => self.trig(a, false)?,
            Expr::Cos(a) => self.trig(a, true)?,
            Expr::Exp(a) => {
                let arg = self.poly(a)?;
                let v = match self.lookup("exp", &arg) {
                    Some(e) => e.vars[0],
                    None => self.register("exp", Kind::Exp, arg, vec![e.clone()])[0],
                };
                Polynomial::var(v)
            }
            Expr::PowRational(a, p, q) => self.power(a, *p, *q)?,
            Expr::Sqrt(a) => self.power(a, 1, 2)?,
            other => return Err(RecastError::Unsupported(other.to_string())),
        })
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Recast `ẋ = f(x, t) + B(x, t)·u` into a polynomial system.
pub fn recast_system(f: &[Expr], b: &ExprMatrix) -> Result<RecastMap, RecastError> {
    let n = f.len();
    if b.nrows() != n {
        return Err(RecastError::Dimension(format!("B has {} rows for {n} states", b.nrows())));
    }
    let m = b.ncols();
    let mut bld = Builder { n, entries: vec![], index: HashMap::new(), slacks: vec![] };
    let mut fx: Vec<Polynomial> = f.iter().map(|e| bld.poly(e)).collect::<Result<_, _>>()?;
    let rows: Vec<Vec<Expr>> = b.clone().into();
    let mut bx: Vec<Vec<Polynomial>> = rows
        .iter()
        .map(|r| r.iter().map(|e| bld.poly(e)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;

    // Slack rows in creation order; an argument only involves earlier states.
    let total = n + bld.slacks.len();
    fx.resize(total, Polynomial::zero());
    bx.resize(total, vec![Polynomial::zero(); m]);
    let (mut g1, mut g2) = (Vec::new(), Vec::new());
    for entry in &bld.entries {
        let (adot_f, adot_b) = chain(&entry.arg, &fx, &bx, m);
        let row = |v: Var| v.state_index().expect("slack is a state");
        let set = |v: Var, factor: Polynomial, fx: &mut Vec<Polynomial>, bx: &mut Vec<Vec<Polynomial>>| {
            let i = row(v);
            fx[i] = &factor * &adot_f;
            bx[i] = adot_b.iter().map(|p| &factor * p).collect();
        };
        match entry.kind {
            Kind::Time => {
                fx[row(entry.vars[0])] = Polynomial::one();
                g2.push(Polynomial::var(entry.vars[0]));
            }
            Kind::Trig { cos_first } => {
                let (c, s) = if cos_first { (entry.vars[0], entry.vars[1]) } else { (entry.vars[1], entry.vars[0]) };
                set(c, Polynomial::var(s).scale(-1.0), &mut fx, &mut bx);
                set(s, Polynomial::var(c), &mut fx, &mut bx);
                g1.push(Polynomial::var(c).pow(2) + Polynomial::var(s).pow(2) - Polynomial::one());
            }
            Kind::Exp => {
                let y = entry.vars[0];
                set(y, Polynomial::var(y), &mut fx, &mut bx);
                g2.push(Polynomial::var(y));
            }
            Kind::Inverse => {
                let r = entry.vars[0];
                set(r, Polynomial::var(r).pow(2).scale(-1.0), &mut fx, &mut bx);
                g1.push(&entry.arg * &Polynomial::var(r) - Polynomial::one());
            }
            Kind::Root { q } => {
                let (r, ri) = (entry.vars[0], entry.vars[1]);
                let qf = f64::from(q);
                set(r, Polynomial::var(ri).pow(q - 1).scale(1.0 / qf), &mut fx, &mut bx);
                set(ri, Polynomial::var(ri).pow(q + 1).scale(-1.0 / qf), &mut fx, &mut bx);
                g1.push(Polynomial::var(r).pow(q) - entry.arg.clone());
                g1.push(&Polynomial::var(r) * &Polynomial::var(ri) - Polynomial::one());
            }
        }
    }
    Ok(RecastMap {
        n_orig: n,
        slacks: bld.slacks,
        f: PolyVector::new(fx),
        b: PolyMatrix::from_rows(bx),
        g1,
        g2,
    })
}

/// `ȧ = ∇a·(f + B·u)` split into drift and input parts.
fn chain(a: &Polynomial, fx: &[Polynomial], bx: &[Vec<Polynomial>], m: usize) -> (Polynomial, Vec<Polynomial>) {
    let mut df = Polynomial::zero();
    let mut db = vec![Polynomial::zero(); m];
    for v in a.vars() {
        let Some(i) = v.state_index() else { continue };
        let da = a.diff(v);
        df = df + &da * &fx[i];
        for (j, dbj) in db.iter_mut().enumerate() {
            *dbj = dbj.clone() + &da * &bx[i][j];
        }
    }
    (df, db)
}

impl RecastMap {
    pub fn n_ext(&self) -> usize {
        self.n_orig + self.slacks.len()
    }

    pub fn vars(&self) -> Vec<Var> {
        (0..self.n_ext()).map(Var::x).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.slacks.is_empty()
    }

    /// Original state followed by the exact slack values.
    pub fn lift_state(&self, x: &[f64], t: f64) -> Result<Vec<f64>, RecastError> {
        if x.len() != self.n_orig {
            return Err(RecastError::Dimension(format!("expected {} states, got {}", self.n_orig, x.len())));
        }
        let mut out = x.to_vec();
        for s in &self.slacks {
            out.push(s.definition.eval(x, t)?);
        }
        Ok(out)
    }

    pub fn project<'a>(&self, xe: &'a [f64]) -> &'a [f64] {
        &xe[..self.n_orig]
    }

    /// Largest `|G1|` and most negative `G2` at an extended point.
    pub fn residuals(&self, xe: &[f64]) -> Result<(f64, f64), RecastError> {
        let eval = |p: &Polynomial| p.eval_state(xe, 0.0).map_err(|e| RecastError::Eval(e.into()));
        let mut eq: f64 = 0.0;
        for g in &self.g1 {
            eq = eq.max(eval(g)?.abs());
        }
        let mut ineq = f64::INFINITY;
        for g in &self.g2 {
            ineq = ineq.min(eval(g)?);
        }
        Ok((eq, ineq))
    }

    /// `d/dt G1` along the extended drift and each input column; all vanish
    /// on the constraint set by construction.
    pub fn constraint_derivatives(&self) -> Vec<(Polynomial, Vec<Polynomial>)> {
        self.g1.iter().map(|g| chain(g, &self.f.0, &rows_of(&self.b), self.b.ncols())).collect()
    }

    /// Require `p ≥ 0` on the constraint set: free multipliers `λ_i` on `G1`,
    /// SOS multipliers `σ_j` on `G2`, and `p + Σλ_i·G1_i − Σσ_j·G2_j ∈ Σ`.
    pub fn attach_constraints(
        &self,
        prog: &mut SosProgram,
        name: &str,
        p: &LinPoly,
        degrees: &MultiplierDegrees,
    ) {
        attach_constraint_sets(prog, name, p, &self.g1, &self.g2, &self.vars(), degrees);
    }
}

fn rows_of(b: &PolyMatrix) -> Vec<Vec<Polynomial>> {
    (0..b.nrows()).map(|i| b.row(i).0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplierDegrees {
    pub equality: u32,
    pub inequality: u32,
}

impl Default for MultiplierDegrees {
    fn default() -> Self {
        MultiplierDegrees { equality: 2, inequality: 2 }
    }
}

/// [`RecastMap::attach_constraints`] for arbitrary constraint sets, e.g.
/// parameter boxes written as `(θ − lo)(hi − θ) ≥ 0`.
pub fn attach_constraint_sets(
    prog: &mut SosProgram,
    name: &str,
    p: &LinPoly,
    equalities: &[Polynomial],
    inequalities: &[Polynomial],
    vars: &[Var],
    degrees: &MultiplierDegrees,
) {
    let mut rest = p.clone();
    for (i, g) in equalities.iter().enumerate() {
        let lam = prog.free_poly_deg(&format!("{name} lambda {}", i + 1), vars, 0, degrees.equality);
        rest = rest.add(&lam.mul_poly(g));
    }
    for (j, g) in inequalities.iter().enumerate() {
        let sig = prog.sos_poly(&format!("{name} sigma {}", j + 1), vars, degrees.inequality);
        rest = rest.sub(&sig.mul_poly(g));
    }
    prog.require_sos(name, rest);
}

/// Polynomial encoding of `a⁺ = max(a, 0)` through an indicator variable
/// `s ∈ {−1/2, 1/2}`: the value is `a·(s + 1/2)`, subject to
/// `(s + 1/2)(s − 1/2) = 0` and `s·a ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePart {
    pub value: Polynomial,
    pub equality: Polynomial,
    pub inequality: Polynomial,
}

pub fn positive_part(a: &Polynomial, indicator: Var) -> PositivePart {
    let s = Polynomial::var(indicator);
    let half = Polynomial::constant(0.5);
    PositivePart {
        value: a * &(&s + &half),
        equality: &(&s + &half) * &(&s - &half),
        inequality: &s * a,
    }
}

/// Extended-system trajectory with optional periodic re-lifting.
#[derive(Debug, Clone, PartialEq)]
pub struct RecastTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Largest `|G1|` seen before each projection and at the end.
    pub max_drift: f64,
}

/// RK4 on the extended system; `u` sees the projected original state.
/// With `project_every = Some(k)` the slacks are re-lifted every `k` steps.
pub fn simulate_recast(
    rm: &RecastMap,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
    u: &dyn Fn(&[f64], f64) -> DVector<f64>,
    project_every: Option<usize>,
) -> Result<RecastTrace, RecastError> {
    let mut y = DVector::from_vec(rm.lift_state(x0, t0)?);
    let rhs = |y: &DVector<f64>, t: f64| -> Result<DVector<f64>, RecastError> {
        let xs = y.as_slice();
        let uu = u(rm.project(xs), t);
        let f = DVector::from_vec(rm.f.eval_state(xs, t).map_err(|e| RecastError::Eval(e.into()))?);
        let b = rm.b.eval_state(xs, t).map_err(|e| RecastError::Eval(e.into()))?;
        Ok(f + b * uu)
    };
    let steps = ((t_end - t0) / dt).round() as usize;
    let mut tr = RecastTrace { t: vec![t0], x: vec![y.as_slice().to_vec()], max_drift: 0.0 };
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let k1 = rhs(&y, t)?;
        let k2 = rhs(&(&y + &k1 * (dt / 2.0)), t + dt / 2.0)?;
        let k3 = rhs(&(&y + &k2 * (dt / 2.0)), t + dt / 2.0)?;
        let k4 = rhs(&(&y + &k3 * dt), t + dt)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let tn = t + dt;
        if project_every.is_some_and(|p| p > 0 && (k + 1) % p == 0) {
            tr.max_drift = tr.max_drift.max(rm.residuals(y.as_slice())?.0);
            let lifted = rm.lift_state(rm.project(y.as_slice()), tn)?;
            y = DVector::from_vec(lifted);
        }
        tr.t.push(tn);
        tr.x.push(y.as_slice().to_vec());
    }
    tr.max_drift = tr.max_drift.max(rm.residuals(y.as_slice())?.0);
    Ok(tr)
}

/// RK4 on the original expression system, for comparison.
pub fn simulate_original(
    f: &[Expr],
    b: &ExprMatrix,
    x0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
    u: &dyn Fn(&[f64], f64) -> DVector<f64>,
) -> Result<Vec<Vec<f64>>, RecastError> {
    let rhs = |y: &DVector<f64>, t: f64| -> Result<DVector<f64>, RecastError> {
        let xs = y.as_slice();
        let fv: Vec<f64> = f.iter().map(|e| e.eval(xs, t)).collect::<Result<_, _>>()?;
        Ok(DVector::from_vec(fv) + b.eval(xs, t)? * u(xs, t))
    };
    let mut y = DVector::from_column_slice(x0);
    let steps = ((t_end - t0) / dt).round() as usize;
    let mut out = vec![x0.to_vec()];
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let k1 = rhs(&y, t)?;
        let k2 = rhs(&(&y + &k1 * (dt / 2.0)), t + dt / 2.0)?;
        let k3 = rhs(&(&y + &k2 * (dt / 2.0)), t + dt / 2.0)?;
        let k4 = rhs(&(&y + &k3 * dt), t + dt)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(y.as_slice().to_vec());
    }
    Ok(out)
}
