//! Scalar and vector expression trees over the state `x` and time `t`.
//!
//! Gains, perturbation bounds, rational feedback laws and non-polynomial
//! plant terms are all expressed with these trees. Their text form is an
//! s-expression in which polynomial leaves are quoted strings:
//!
//! ```text
//! (+ (* 0.1 (abs "x1")) 0.1)
//! (norm (solve (mat 1 2 "x1" "1") (mat 2 2 "2" "0" "0" "1") (vec "x1" "x2")))
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::poly::{PolyError, PolyMatrix, PolyVector, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("singular matrix in {0}")]
    Singular(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression syntax: {0}")]
pub struct ExprSyntaxError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Poly(Polynomial),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
    Sin(Box<Expr>),
    /// `sin(a)/a`, equal to 1 at 0.
    Sinc(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// `a^(p/q)`; negative bases are allowed when `q` is odd.
    PowRational(Box<Expr>, i32, i32),
    Max(Box<Expr>, Box<Expr>),
    /// Positive part `max(a, 0)`.
    Pos(Box<Expr>),
    /// Euclidean norm of a vector expression.
    Norm(Box<VecExpr>),
    /// Spectral norm of a polynomial matrix.
    MatNorm(PolyMatrix),
    /// Component `i` (zero-based) of a vector expression.
    At(Box<VecExpr>, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VecExpr {
    Components(Vec<Expr>),
    /// `M · v`
    MatMul(PolyMatrix, Box<VecExpr>),
    /// `left · mat⁻¹ · right`
    Solve { left: PolyMatrix, mat: PolyMatrix, right: Box<VecExpr> },
    Add(Box<VecExpr>, Box<VecExpr>),
    Scale(Box<Expr>, Box<VecExpr>),
}

fn bx<T>(v: T) -> Box<T> {
    Box::new(v)
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn poly(p: Polynomial) -> Expr {
        Expr::Poly(p)
    }

    pub fn add(self, o: Expr) -> Expr {
        Expr::Add(vec![self, o])
    }

    pub fn mul(self, o: Expr) -> Expr {
        Expr::Mul(vec![self, o])
    }

    pub fn div(self, o: Expr) -> Expr {
        Expr::Div(bx(self), bx(o))
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(bx(self))
    }

    pub fn norm(v: VecExpr) -> Expr {
        Expr::Norm(bx(v))
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        let e = |a: &Expr| a.eval(x, t);
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Poly(p) => p.eval_state(x, t)?,
            Expr::Add(v) => v.iter().map(e).sum::<Result<f64, _>>()?,
            Expr::Mul(v) => v.iter().map(e).product::<Result<f64, _>>()?,
            Expr::Sub(a, b) => e(a)? - e(b)?,
            Expr::Div(a, b) => {
                let d = e(b)?;
                if d == 0.0 {
                    return Err(EvalError::Singular("division".into()));
                }
                e(a)? / d
            }
            Expr::Neg(a) => -e(a)?,
            Expr::Abs(a) => e(a)?.abs(),
            Expr::Sqrt(a) => {
                let v = e(a)?;
                if v < 0.0 {
                    return Err(EvalError::Domain(format!("sqrt of {v}")));
                }
                v.sqrt()
            }
            Expr::Sin(a) => e(a)?.sin(),
            Expr::Sinc(a) => {
                let v = e(a)?;
                if v.abs() < 1e-4 {
                    1.0 - v * v / 6.0
                } else {
                    v.sin() / v
                }
            }
            Expr::Cos(a) => e(a)?.cos(),
            Expr::Exp(a) => e(a)?.exp(),
            Expr::PowRational(a, p, q) => rational_power(e(a)?, *p, *q)?,
            Expr::Max(a, b) => e(a)?.max(e(b)?),
            Expr::Pos(a) => e(a)?.max(0.0),
            Expr::Norm(v) => v.eval(x, t)?.norm(),
            Expr::MatNorm(m) => spectral_norm(&m.eval_state(x, t)?),
            Expr::At(v, i) => {
                let v = v.eval(x, t)?;
                *v.get(*i).ok_or_else(|| EvalError::Dimension(format!("index {i}")))?
            }
        })
    }
}

/// `a^(p/q)` with real odd roots of negative numbers.
pub fn rational_power(a: f64, p: i32, q: i32) -> Result<f64, EvalError> {
    if q == 0 {
        return Err(EvalError::Domain("zero denominator in exponent".into()));
    }
    let (p, q) = if q < 0 { (-p, -q) } else { (p, q) };
    if a == 0.0 && p < 0 {
        return Err(EvalError::Domain(format!("0^({p}/{q})")));
    }
    let root = if a >= 0.0 {
        a.powf(1.0 / q as f64)
    } else if q % 2 == 1 {
        -(-a).powf(1.0 / q as f64)
    } else {
        return Err(EvalError::Domain(format!("even root of {a}")));
    };
    Ok(root.powi(p))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

impl VecExpr {
    pub fn polys(v: &PolyVector) -> VecExpr {
        VecExpr::Components(v.iter().cloned().map(Expr::Poly).collect())
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<DVector<f64>, EvalError> {
        Ok(match self {
            VecExpr::Components(v) => {
                DVector::from_vec(v.iter().map(|e| e.eval(x, t)).collect::<Result<_, _>>()?)
            }
            VecExpr::MatMul(m, v) => {
                let (m, v) = (m.eval_state(x, t)?, v.eval(x, t)?);
                check_mul(&m, &v)?;
                m * v
            }
            VecExpr::Solve { left, mat, right } => {
                let (l, q, r) = (left.eval_state(x, t)?, mat.eval_state(x, t)?, right.eval(x, t)?);
                check_mul(&q, &r)?;
                let sol = q.lu().solve(&r).ok_or_else(|| EvalError::Singular("solve".into()))?;
                check_mul(&l, &sol)?;
                l * sol
            }
            VecExpr::Add(a, b) => {
                let (a, b) = (a.eval(x, t)?, b.eval(x, t)?);
                if a.len() != b.len() {
                    return Err(EvalError::Dimension(format!("{} + {}", a.len(), b.len())));
                }
                a + b
            }
            VecExpr::Scale(s, v) => v.eval(x, t)? * s.eval(x, t)?,
        })
    }
}

fn check_mul(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<(), EvalError> {
    if m.ncols() != v.len() {
        return Err(EvalError::Dimension(format!("{}x{} · {}", m.nrows(), m.ncols(), v.len())));
    }
    Ok(())
}

// ---- text form ----

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Result<Vec<Sexp>, ExprSyntaxError> {
    let chars: Vec<char> = s.chars().collect();
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                let done = stack.pop().filter(|_| !stack.is_empty());
                let done = done.ok_or_else(|| ExprSyntaxError("unbalanced ')'".into()))?;
                stack.last_mut().expect("outer level").push(Sexp::List(done));
            }
            '"' => {
                let start = i + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&c| c == '"')
                    .ok_or_else(|| ExprSyntaxError("unterminated string".into()))?;
                let text: String = chars[start..start + end].iter().collect();
                stack.last_mut().expect("level").push(Sexp::Str(text));
                i = start + end;
            }
            c if c.is_whitespace() => {}
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()\"".contains(chars[i]) {
                    i += 1;
                }
                stack.last_mut().expect("level").push(Sexp::Atom(chars[start..i].iter().collect()));
                continue;
            }
        }
        i += 1;
    }
    if stack.len() != 1 {
        return Err(ExprSyntaxError("unbalanced '('".into()));
    }
    Ok(stack.pop().expect("top level"))
}

fn single(s: &str) -> Result<Sexp, ExprSyntaxError> {
    let mut top = tokenize(s)?;
    if top.len() != 1 {
        return Err(ExprSyntaxError(format!("expected one expression, found {}", top.len())));
    }
    Ok(top.pop().expect("one item"))
}

fn err<T>(msg: impl Into<String>) -> Result<T, ExprSyntaxError> {
    Err(ExprSyntaxError(msg.into()))
}

fn parse_poly(s: &str) -> Result<Polynomial, ExprSyntaxError> {
    s.parse().map_err(|e: PolyError| ExprSyntaxError(format!("polynomial '{s}': {e}")))
}

fn atom_num<T: FromStr>(s: &Sexp) -> Result<T, ExprSyntaxError> {
    match s {
        Sexp::Atom(a) => a.parse().map_err(|_| ExprSyntaxError(format!("bad number '{a}'"))),
        _ => err("expected a number"),
    }
}

fn to_matrix(s: &Sexp) -> Result<PolyMatrix, ExprSyntaxError> {
    let Sexp::List(items) = s else { return err("expected (mat ...)") };
    match items.first() {
        Some(Sexp::Atom(h)) if h == "mat" => {}
        _ => return err("expected (mat rows cols ...)"),
    }
    if items.len() < 3 {
        return err("mat needs rows and cols");
    }
    let (r, c): (usize, usize) = (atom_num(&items[1])?, atom_num(&items[2])?);
    if items.len() != 3 + r * c {
        return err(format!("mat {r}x{c} needs {} entries", r * c));
    }
    let mut rows = Vec::with_capacity(r);
    for i in 0..r {
        let mut row = Vec::with_capacity(c);
        for j in 0..c {
            match &items[3 + i * c + j] {
                Sexp::Str(p) => row.push(parse_poly(p)?),
                Sexp::Atom(a) => row.push(parse_poly(a)?),
                _ => return err("matrix entries must be polynomials"),
            }
        }
        rows.push(row);
    }
    Ok(PolyMatrix::from_rows(rows))
}

fn to_expr(s: &Sexp) -> Result<Expr, ExprSyntaxError> {
    match s {
        Sexp::Atom(a) => a
            .parse::<f64>()
            .map(Expr::Const)
            .or_else(|_| parse_poly(a).map(Expr::Poly)),
        Sexp::Str(p) => parse_poly(p).map(Expr::Poly),
        Sexp::List(items) => {
            let Some(Sexp::Atom(head)) = items.first() else { return err("empty list") };
            let args = &items[1..];
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    err(format!("'{head}' takes {n} argument(s)"))
                }
            };
            let one = || -> Result<Box<Expr>, ExprSyntaxError> {
                arity(1)?;
                Ok(bx(to_expr(&args[0])?))
            };
            let two = || -> Result<(Box<Expr>, Box<Expr>), ExprSyntaxError> {
                arity(2)?;
                Ok((bx(to_expr(&args[0])?), bx(to_expr(&args[1])?)))
            };
            Ok(match head.as_str() {
                "+" => Expr::Add(args.iter().map(to_expr).collect::<Result<_, _>>()?),
                "*" => Expr::Mul(args.iter().map(to_expr).collect::<Result<_, _>>()?),
                "-" => {
                    let (a, b) = two()?;
                    Expr::Sub(a, b)
                }
                "/" => {
                    let (a, b) = two()?;
                    Expr::Div(a, b)
                }
                "max" => {
                    let (a, b) = two()?;
                    Expr::Max(a, b)
                }
                "neg" => Expr::Neg(one()?),
                "abs" => Expr::Abs(one()?),
                "sqrt" => Expr::Sqrt(one()?),
                "sin" => Expr::Sin(one()?),
                "sinc" => Expr::Sinc(one()?),
                "cos" => Expr::Cos(one()?),
                "exp" => Expr::Exp(one()?),
                "pos" => Expr::Pos(one()?),
                "powr" => {
                    arity(3)?;
                    Expr::PowRational(bx(to_expr(&args[0])?), atom_num(&args[1])?, atom_num(&args[2])?)
                }
                "norm" => {
                    arity(1)?;
                    Expr::Norm(bx(to_vec(&args[0])?))
                }
                "matnorm" => {
                    arity(1)?;
                    Expr::MatNorm(to_matrix(&args[0])?)
                }
                "at" => {
                    arity(2)?;
                    Expr::At(bx(to_vec(&args[0])?), atom_num(&args[1])?)
                }
                other => return err(format!("unknown operator '{other}'")),
            })
        }
    }
}

fn to_vec(s: &Sexp) -> Result<VecExpr, ExprSyntaxError> {
    let Sexp::List(items) = s else { return err("expected a vector expression") };
    let Some(Sexp::Atom(head)) = items.first() else { return err("empty list") };
    let args = &items[1..];
    let need = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            err(format!("'{head}' takes {n} argument(s)"))
        }
    };
    Ok(match head.as_str() {
        "vec" => VecExpr::Components(args.iter().map(to_expr).collect::<Result<_, _>>()?),
        "matmul" => {
            need(2)?;
            VecExpr::MatMul(to_matrix(&args[0])?, bx(to_vec(&args[1])?))
        }
        "solve" => {
            need(3)?;
            VecExpr::Solve {
                left: to_matrix(&args[0])?,
                mat: to_matrix(&args[1])?,
                right: bx(to_vec(&args[2])?),
            }
        }
        "vadd" => {
            need(2)?;
            VecExpr::Add(bx(to_vec(&args[0])?), bx(to_vec(&args[1])?))
        }
        "vscale" => {
            need(2)?;
            VecExpr::Scale(bx(to_expr(&args[0])?), bx(to_vec(&args[1])?))
        }
        other => return err(format!("unknown vector operator '{other}'")),
    })
}

struct MatFmt<'a>(&'a PolyMatrix);

impl fmt::Display for MatFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(mat {} {}", self.0.nrows(), self.0.ncols())?;
        for p in self.0.entries() {
            write!(f, " \"{p}\"")?;
        }
        write!(f, ")")
    }
}

fn list(f: &mut fmt::Formatter<'_>, head: &str, items: &[&dyn fmt::Display]) -> fmt::Result {
    write!(f, "({head}")?;
    for it in items {
        write!(f, " {it}")?;
    }
    write!(f, ")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Poly(p) => write!(f, "\"{p}\""),
            Expr::Add(v) | Expr::Mul(v) => {
                let head = if matches!(self, Expr::Add(_)) { "+" } else { "*" };
                let items: Vec<&dyn fmt::Display> = v.iter().map(|e| e as &dyn fmt::Display).collect();
                list(f, head, &items)
            }
            Expr::Sub(a, b) => list(f, "-", &[a, b]),
            Expr::Div(a, b) => list(f, "/", &[a, b]),
            Expr::Max(a, b) => list(f, "max", &[a, b]),
            Expr::Neg(a) => list(f, "neg", &[a]),
            Expr::Abs(a) => list(f, "abs", &[a]),
            Expr::Sqrt(a) => list(f, "sqrt", &[a]),
            Expr::Sin(a) => list(f, "sin", &[a]),
            Expr::Sinc(a) => list(f, "sinc", &[a]),
            Expr::Cos(a) => list(f, "cos", &[a]),
            Expr::Exp(a) => list(f, "exp", &[a]),
            Expr::Pos(a) => list(f, "pos", &[a]),
            Expr::PowRational(a, p, q) => list(f, "powr", &[a, p, q]),
            Expr::Norm(v) => list(f, "norm", &[v]),
            Expr::MatNorm(m) => list(f, "matnorm", &[&MatFmt(m)]),
            Expr::At(v, i) => list(f, "at", &[v, i]),
        }
    }
}

impl fmt::Display for VecExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VecExpr::Components(v) => {
                let items: Vec<&dyn fmt::Display> = v.iter().map(|e| e as &dyn fmt::Display).collect();
                list(f, "vec", &items)
            }
            VecExpr::MatMul(m, v) => list(f, "matmul", &[&MatFmt(m), v]),
            VecExpr::Solve { left, mat, right } => {
                list(f, "solve", &[&MatFmt(left), &MatFmt(mat), right])
            }
            VecExpr::Add(a, b) => list(f, "vadd", &[a, b]),
            VecExpr::Scale(s, v) => list(f, "vscale", &[s, v]),
        }
    }
}

impl FromStr for Expr {
    type Err = ExprSyntaxError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        to_expr(&single(s)?)
    }
}

impl FromStr for VecExpr {
    type Err = ExprSyntaxError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        to_vec(&single(s)?)
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(Expr);
string_serde!(VecExpr);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_gain_shape() {
        let e: Expr = "(+ (* 0.1 (abs \"x1\")) 0.1)".parse().unwrap();
        assert!((e.eval(&[-2.0, 0.0], 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn solve_node_matches_manual_inverse() {
        let v: VecExpr = "(solve (mat 1 2 \"x1\" \"1\") (mat 2 2 \"2\" \"0\" \"0\" \"4\") (vec \"x1\" \"x2\"))"
            .parse()
            .unwrap();
        let r = v.eval(&[3.0, 8.0], 0.0).unwrap();
        // [3, 1]·diag(1/2, 1/4)·[3, 8] = 4.5 + 2
        assert!((r[0] - 6.5).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        for s in [
            "(+ (sin \"x1\") (cos (* 2.0 \"t\")) (powr \"x3\" 2 3))",
            "(norm (vscale -1.5 (matmul (mat 2 1 \"x1\" \"0\") (vec 1.0))))",
            "(/ (matnorm (mat 1 1 \"x2 + 1\")) (max 0.5 (pos \"x1\")))",
            "(at (vadd (vec \"x1\") (vec 2.0)) 0)",
        ] {
            let e: Expr = s.parse().unwrap();
            let back: Expr = e.to_string().parse().unwrap();
            assert_eq!(back, e, "{s}");
        }
    }

    #[test]
    fn rational_powers_and_domains() {
        assert!((rational_power(-8.0, 1, 3).unwrap() + 2.0).abs() < 1e-12);
        assert!((rational_power(8.0, -1, 3).unwrap() - 0.5).abs() < 1e-12);
        assert!(rational_power(-4.0, 1, 2).is_err());
        assert!(matches!(
            "(/ 1.0 \"x1\")".parse::<Expr>().unwrap().eval(&[0.0], 0.0),
            Err(EvalError::Singular(_))
        ));
    }

    #[test]
    fn syntax_errors() {
        assert!("(+ 1".parse::<Expr>().is_err());
        assert!("(frob 1)".parse::<Expr>().is_err());
        assert!("(mat 1 1)".parse::<Expr>().is_err());
    }
}
