//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms are kept in a graded lexicographic order (total degree first, then
//! lexicographic with `x1 > x2 > ...`), so iteration, rendering and every
//! basis built from them is reproducible.

mod affine;
mod calculus;
mod parse;

pub use affine::{coefficient_equations, AffineCoeff, LinPoly, LinearEquation, Unknown};
pub use calculus::{
    involutivity_check, jacobian, lie_bracket, monomial_basis, monomials_upto, BasisFilter,
    Involutivity,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Coefficients with magnitude below this are dropped on canonicalization.
pub const COEFF_EPS: f64 = 1e-12;

const Y_BASE: u32 = 1000;
const T_ID: u32 = 3000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("no value assigned to variable {0}")]
    MissingVariable(Var),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown coefficients enter non-affinely (product of two unknown-carrying terms)")]
    NonAffine,
    #[error("column set is rank deficient at every sample point")]
    RankDeficient,
}

/// A polynomial variable.
///
/// Ids below 1000 render as `x1, x2, ...`; ids in `1000..3000` are auxiliary
/// `y1, y2, ...` variables (used when scalarizing matrix constraints); id 3000
/// is the time variable `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    /// The state variable `x{k+1}`.
    pub const fn x(k: usize) -> Var {
        Var(k as u32)
    }

    /// The auxiliary variable `y{k+1}`.
    pub const fn y(k: usize) -> Var {
        Var(Y_BASE + k as u32)
    }

    pub const fn t() -> Var {
        Var(T_ID)
    }

    /// Index into the state vector, if this is an `x` variable.
    pub fn state_index(self) -> Option<usize> {
        (self.0 < Y_BASE).then_some(self.0 as usize)
    }

    pub fn is_aux(self) -> bool {
        (Y_BASE..T_ID).contains(&self.0)
    }

    pub fn from_name(name: &str) -> Option<Var> {
        if name == "t" {
            return Some(Var::t());
        }
        let (head, digits) = name.split_at(1);
        let k: usize = digits.parse().ok()?;
        if k == 0 || digits.starts_with('0') {
            return None;
        }
        match head {
            "x" if k <= Y_BASE as usize => Some(Var::x(k - 1)),
            "y" if k <= (T_ID - Y_BASE) as usize => Some(Var::y(k - 1)),
            _ => None,
        }
    }
}

impl Serialize for Var {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Var {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Var::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown variable '{name}'")))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < Y_BASE {
            write!(f, "x{}", self.0 + 1)
        } else if self.0 < T_ID {
            write!(f, "y{}", self.0 - Y_BASE + 1)
        } else {
            write!(f, "t")
        }
    }
}

/// A monomial: sorted `(variable, exponent)` pairs with no zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(Var, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: Var) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, u32)>) -> Self {
        let mut acc: BTreeMap<Var, u32> = BTreeMap::new();
        for (v, e) in pairs {
            *acc.entry(v).or_default() += e;
        }
        Monomial(acc.into_iter().filter(|&(_, e)| e > 0).collect())
    }

    pub fn pairs(&self) -> &[(Var, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: Var) -> u32 {
        self.0
            .binary_search_by_key(&v, |&(w, _)| w)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    /// Degree restricted to variables satisfying `pred`.
    pub fn degree_in(&self, pred: impl Fn(Var) -> bool) -> u32 {
        self.0.iter().filter(|(v, _)| pred(*v)).map(|&(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            match a.0.cmp(&b.0) {
                Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// `self / other` when `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::new();
        let mut j = 0;
        for &(v, e) in &self.0 {
            let d = if j < other.0.len() && other.0[j].0 == v {
                j += 1;
                other.0[j - 1].1
            } else {
                0
            };
            if d > e {
                return None;
            }
            if e > d {
                out.push((v, e - d));
            }
        }
        (j == other.0.len()).then_some(Monomial(out))
    }

    /// Partial derivative: `(exponent, monomial with exponent decremented)`.
    pub fn diff(&self, v: Var) -> Option<(u32, Monomial)> {
        let idx = self.0.iter().position(|&(w, _)| w == v)?;
        let e = self.0[idx].1;
        let mut out = self.0.clone();
        if e == 1 {
            out.remove(idx);
        } else {
            out[idx].1 -= 1;
        }
        Some((e, Monomial(out)))
    }

    pub fn eval_with(&self, value: impl Fn(Var) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 1.0;
        for &(v, e) in &self.0 {
            let x = value(v).ok_or(PolyError::MissingVariable(v))?;
            acc *= x.powi(e as i32);
        }
        Ok(acc)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.iter().map(|&(v, _)| v)
    }
}

impl Serialize for Monomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Monomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let p: Polynomial = text.parse().map_err(serde::de::Error::custom)?;
        let mono = match p.terms().next() {
            Some((m, c)) if p.len() == 1 && c == 1.0 => Some(m.clone()),
            _ => None,
        };
        mono.ok_or_else(|| serde::de::Error::custom(format!("'{text}' is not a monomial")))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.degree().cmp(&other.degree());
        if d != Ordering::Equal {
            return d;
        }
        // Lexicographic with smaller variable ids more significant.
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.0.get(i), other.0.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => match va.cmp(&vb) {
                    Ordering::Less => return Ordering::Greater,
                    Ordering::Greater => return Ordering::Less,
                    Ordering::Equal => {
                        if ea != eb {
                            return ea.cmp(&eb);
                        }
                        i += 1;
                        j += 1;
                    }
                },
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, &(v, e)) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "*")?;
            }
            if e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

/// A real polynomial in canonical form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(v: Var) -> Self {
        Self::term(1.0, Monomial::var(v))
    }

    /// Shorthand for the state variable `x{k+1}`.
    pub fn x(k: usize) -> Self {
        Self::var(Var::x(k))
    }

    pub fn term(c: f64, m: Monomial) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Add `c·m`, dropping the term if it cancels below [`COEFF_EPS`].
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                if c.abs() >= COEFF_EPS {
                    v.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s.abs() < COEFF_EPS {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one())
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    /// Variables occurring in the support, ascending.
    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.terms.keys().flat_map(|m| m.vars()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, &c)| (m.clone(), c * s)))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn diff(&self, v: Var) -> Self {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            if let Some((e, dm)) = m.diff(v) {
                out.add_term(dm, c * e as f64);
            }
        }
        out
    }

    pub fn eval_with(&self, value: impl Fn(Var) -> Option<f64>) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, &c) in &self.terms {
            acc += c * m.eval_with(&value)?;
        }
        Ok(acc)
    }

    /// Evaluate at a point given as a variable map.
    pub fn evaluate(&self, point: &HashMap<Var, f64>) -> Result<f64, PolyError> {
        self.eval_with(|v| point.get(&v).copied())
    }

    /// Evaluate with `x[k]` bound to `x{k+1}`; `t`, if present, bound to `t`.
    pub fn eval_state(&self, x: &[f64], t: f64) -> Result<f64, PolyError> {
        self.eval_with(|v| {
            if v == Var::t() {
                Some(t)
            } else {
                v.state_index().and_then(|i| x.get(i).copied())
            }
        })
    }

    /// Substitute polynomials for variables; unlisted variables stay.
    pub fn substitute(&self, map: &HashMap<Var, Polynomial>) -> Self {
        let mut out = Self::zero();
        for (m, &c) in &self.terms {
            let mut acc = Self::constant(c);
            let mut rest = Vec::new();
            for &(v, e) in m.pairs() {
                match map.get(&v) {
                    Some(p) => acc = &acc * &p.pow(e),
                    None => rest.push((v, e)),
                }
            }
            let rest = Self::term(1.0, Monomial::from_pairs(rest));
            out = &out + &(&acc * &rest);
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Rebuild from `(monomial, coeff)` pairs without the zero threshold;
    /// used by tests that need exact representation of tiny coefficients.
    pub fn map_coeffs(&self, f: impl Fn(&Monomial, f64) -> f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(m, &c)| (m.clone(), f(m, c))))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write!(f, "{}", fmt_coeff(mag))?;
            } else if mag == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_coeff(mag))?;
            }
        }
        Ok(())
    }
}

/// Shortest round-trip decimal; exponent form for very large/small values.
fn fmt_coeff(c: f64) -> String {
    if c != 0.0 && !(1e-5..1e16).contains(&c) {
        format!("{c:e}")
    } else {
        format!("{c}")
    }
}

impl std::str::FromStr for Polynomial {
    type Err = PolyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse::parse_polynomial(s)
    }
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (a, &ca) in &self.terms {
            for (b, &cb) in &rhs.terms {
                *acc.entry(a.mul(b)).or_default() += ca * cb;
            }
        }
        Polynomial::from_terms(acc)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Which binary operation [`arith`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithKind {
    Add,
    Sub,
    Mul,
}

pub fn arith(a: &Polynomial, b: &Polynomial, kind: ArithKind) -> Polynomial {
    match kind {
        ArithKind::Add => a + b,
        ArithKind::Sub => a - b,
        ArithKind::Mul => a * b,
    }
}

/// An ordered list of polynomials.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolyVector(pub Vec<Polynomial>);

impl PolyVector {
    pub fn new(entries: Vec<Polynomial>) -> Self {
        PolyVector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        PolyVector(vec![Polynomial::zero(); n])
    }

    /// The state vector `[x1, ..., xn]`.
    pub fn states(n: usize) -> Self {
        PolyVector((0..n).map(Polynomial::x).collect())
    }

    pub fn parse(items: &[&str]) -> Result<Self, PolyError> {
        items.iter().map(|s| s.parse()).collect::<Result<_, _>>().map(PolyVector)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Polynomial> {
        self.0.iter()
    }

    pub fn eval_state(&self, x: &[f64], t: f64) -> Result<Vec<f64>, PolyError> {
        self.0.iter().map(|p| p.eval_state(x, t)).collect()
    }

    pub fn as_column(&self) -> PolyMatrix {
        PolyMatrix::from_rows(self.0.iter().map(|p| vec![p.clone()]).collect())
    }

    pub fn dot(&self, other: &PolyVector) -> Polynomial {
        self.0
            .iter()
            .zip(&other.0)
            .fold(Polynomial::zero(), |acc, (a, b)| acc + a * b)
    }

    pub fn add(&self, other: &PolyVector) -> PolyVector {
        PolyVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &PolyVector) -> PolyVector {
        PolyVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> PolyVector {
        PolyVector(self.0.iter().map(|p| p.scale(s)).collect())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.0.iter().flat_map(|p| p.vars()).collect();
        v.sort();
        v.dedup();
        v
    }
}

impl std::ops::Index<usize> for PolyVector {
    type Output = Polynomial;
    fn index(&self, i: usize) -> &Polynomial {
        &self.0[i]
    }
}

impl FromIterator<Polynomial> for PolyVector {
    fn from_iter<I: IntoIterator<Item = Polynomial>>(it: I) -> Self {
        PolyVector(it.into_iter().collect())
    }
}

/// A dense rectangular matrix of polynomials, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix { rows, cols, data: vec![Polynomial::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Polynomial::one();
        }
        m
    }

    pub fn from_constant(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        PolyMatrix { rows, cols, data: values.iter().map(|&c| Polynomial::constant(c)).collect() }
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<Polynomial>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged polynomial matrix");
        PolyMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn parse(rows: &[&[&str]]) -> Result<Self, PolyError> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let c = parsed.first().map_or(0, Vec::len);
        if parsed.iter().any(|r| r.len() != c) {
            return Err(PolyError::Dimension("ragged matrix rows".into()));
        }
        Ok(Self::from_rows(parsed))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> PolyVector {
        PolyVector(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn column(&self, j: usize) -> PolyVector {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn columns(&self) -> Vec<PolyVector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn mul(&self, rhs: &PolyMatrix) -> Result<Self, PolyError> {
        if self.cols != rhs.rows {
            return Err(PolyError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = Polynomial::zero();
                for k in 0..self.cols {
                    acc = acc + &self[(i, k)] * &rhs[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &PolyVector) -> Result<PolyVector, PolyError> {
        Ok(self.mul(&v.as_column())?.column(0))
    }

    pub fn add(&self, rhs: &PolyMatrix) -> Result<Self, PolyError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &PolyMatrix) -> Result<Self, PolyError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(
        &self,
        rhs: &PolyMatrix,
        f: impl Fn(&Polynomial, &Polynomial) -> Polynomial,
    ) -> Result<Self, PolyError> {
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(PolyError::Dimension("shape mismatch".into()));
        }
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|p| p.scale(s))
    }

    pub fn map(&self, f: impl Fn(&Polynomial) -> Polynomial) -> Self {
        PolyMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn is_constant(&self) -> bool {
        self.data.iter().all(Polynomial::is_constant)
    }

    pub fn degree(&self) -> u32 {
        self.data.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.data
    }

    pub fn eval_state(&self, x: &[f64], t: f64) -> Result<nalgebra::DMatrix<f64>, PolyError> {
        let vals =
            self.data.iter().map(|p| p.eval_state(x, t)).collect::<Result<Vec<_>, _>>()?;
        Ok(nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }

    pub fn diff(&self, v: Var) -> Self {
        self.map(|p| p.diff(v))
    }
}

impl std::ops::Index<(usize, usize)> for PolyMatrix {
    type Output = Polynomial;
    fn index(&self, (i, j): (usize, usize)) -> &Polynomial {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for PolyMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Polynomial {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Polynomial {
        s.parse().unwrap()
    }

    #[test]
    fn difference_of_squares() {
        assert_eq!(&p("x1 + 1") * &p("x1 - 1"), p("x1^2 - 1"));
    }

    #[test]
    fn additive_identity() {
        let a = p("3*x1^2*x2 - x2 + 0.5");
        assert_eq!(&a + &Polynomial::zero(), a);
    }

    #[test]
    fn scaled_square_matches_pointwise() {
        let g = p("0.982*x2");
        let sq = &g * &g;
        assert_eq!(sq.coeff(&Monomial::from_pairs([(Var::x(1), 2)])), 0.982 * 0.982);
        for &x2 in &[-1.3, -0.2, 0.0, 0.7, 2.5] {
            let lhs = sq.eval_state(&[0.0, x2], 0.0).unwrap();
            let rhs = g.eval_state(&[0.0, x2], 0.0).unwrap().powi(2);
            assert!((lhs - rhs).abs() < 1e-14);
        }
        assert!((0.964324 - 0.982f64 * 0.982).abs() < 1e-15);
    }

    #[test]
    fn evaluate_manifold_value() {
        let g = p("0.982*x2");
        let pt = HashMap::from([(Var::x(1), 0.5)]);
        assert!((g.evaluate(&pt).unwrap() - 0.491).abs() < 1e-15);
    }

    #[test]
    fn evaluate_at_origin_is_constant_term() {
        let q = p("-2.5 + x1*x2^3 - 7*x3");
        assert_eq!(q.eval_state(&[0.0, 0.0, 0.0], 0.0).unwrap(), -2.5);
    }

    #[test]
    fn missing_variable_is_an_error() {
        let q = p("x1 + x2");
        let pt = HashMap::from([(Var::x(0), 1.0)]);
        assert_eq!(q.evaluate(&pt), Err(PolyError::MissingVariable(Var::x(1))));
    }

    #[test]
    fn grlex_order_and_rendering() {
        let q = p("x2 + x1^2 + x1*x2 + 1 + x1");
        assert_eq!(q.to_string(), "x1^2 + x1*x2 + x1 + x2 + 1");
        assert_eq!(p("-x1^3 + x2").to_string(), "-x1^3 + x2");
    }

    #[test]
    fn tiny_coefficients_are_dropped() {
        let q = &p("x1 + 1") - &p("x1 + 0.9999999999999999");
        assert!(q.is_zero());
    }

    #[test]
    fn monomial_division() {
        let a = Monomial::from_pairs([(Var::x(0), 2), (Var::x(1), 1)]);
        let b = Monomial::var(Var::x(1));
        assert_eq!(a.div(&b), Some(Monomial::from_pairs([(Var::x(0), 2)])));
        assert_eq!(b.div(&a), None);
    }

    #[test]
    fn substitution() {
        let q = p("x1^2 + x2");
        let map = HashMap::from([(Var::x(0), p("x2 + 1"))]);
        assert_eq!(q.substitute(&map), p("x2^2 + 3*x2 + 1"));
    }
}
