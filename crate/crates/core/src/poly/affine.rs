//! Polynomials whose coefficients are affine in unknown decision variables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Monomial, PolyError, Polynomial, Var, COEFF_EPS};

/// Identifier of an unknown (decision) coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Unknown(pub u32);

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// `constant + Σ coeff·unknown`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineCoeff {
    pub constant: f64,
    pub linear: BTreeMap<Unknown, f64>,
}

impl AffineCoeff {
    pub fn constant(c: f64) -> Self {
        AffineCoeff { constant: c, linear: BTreeMap::new() }
    }

    pub fn unknown(u: Unknown, c: f64) -> Self {
        AffineCoeff { constant: 0.0, linear: BTreeMap::from([(u, c)]) }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.linear.is_empty()
    }

    pub fn has_unknowns(&self) -> bool {
        !self.linear.is_empty()
    }

    fn add_scaled(&mut self, other: &AffineCoeff, s: f64) {
        self.constant += s * other.constant;
        for (&u, &c) in &other.linear {
            let e = self.linear.entry(u).or_default();
            *e += s * c;
            if e.abs() < COEFF_EPS {
                self.linear.remove(&u);
            }
        }
        if self.constant.abs() < COEFF_EPS {
            self.constant = 0.0;
        }
    }

    pub fn value(&self, assign: &dyn Fn(Unknown) -> f64) -> f64 {
        self.constant + self.linear.iter().map(|(&u, &c)| c * assign(u)).sum::<f64>()
    }
}

/// A polynomial in state variables with affine-in-unknowns coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinPoly {
    #[serde(with = "terms_serde")]
    terms: BTreeMap<Monomial, AffineCoeff>,
}

mod terms_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        t: &BTreeMap<Monomial, AffineCoeff>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let v: Vec<(String, &AffineCoeff)> = t.iter().map(|(m, c)| (m.to_string(), c)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<Monomial, AffineCoeff>, D::Error> {
        let v: Vec<(String, AffineCoeff)> = Vec::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (m, c) in v {
            let p: Polynomial = m.parse().map_err(serde::de::Error::custom)?;
            let (mono, _) = p.terms().next().ok_or_else(|| serde::de::Error::custom("empty"))?;
            out.insert(mono.clone(), c);
        }
        Ok(out)
    }
}

impl From<&Polynomial> for LinPoly {
    fn from(p: &Polynomial) -> Self {
        LinPoly {
            terms: p.terms().map(|(m, c)| (m.clone(), AffineCoeff::constant(c))).collect(),
        }
    }
}

impl From<Polynomial> for LinPoly {
    fn from(p: Polynomial) -> Self {
        LinPoly::from(&p)
    }
}

impl LinPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `coeff · u · m`.
    pub fn unknown_term(u: Unknown, coeff: f64, m: Monomial) -> Self {
        let mut out = Self::zero();
        out.add_coeff(m, &AffineCoeff::unknown(u, coeff), 1.0);
        out
    }

    fn add_coeff(&mut self, m: Monomial, c: &AffineCoeff, s: f64) {
        let e = self.terms.entry(m.clone()).or_default();
        e.add_scaled(c, s);
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    /// The coefficient of `m`, as a constant `LinPoly`.
    pub fn coeff_of(&self, m: &Monomial) -> LinPoly {
        let mut out = Self::zero();
        if let Some(c) = self.terms.get(m) {
            out.add_coeff(Monomial::one(), c, 1.0);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineCoeff)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_unknowns(&self) -> bool {
        self.terms.values().any(AffineCoeff::has_unknowns)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn unknowns(&self) -> Vec<Unknown> {
        let mut v: Vec<Unknown> =
            self.terms.values().flat_map(|c| c.linear.keys().copied()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn add(&self, other: &LinPoly) -> LinPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_coeff(m.clone(), c, 1.0);
        }
        out
    }

    pub fn sub(&self, other: &LinPoly) -> LinPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_coeff(m.clone(), c, -1.0);
        }
        out
    }

    pub fn scale(&self, s: f64) -> LinPoly {
        let mut out = LinPoly::zero();
        for (m, c) in &self.terms {
            out.add_coeff(m.clone(), c, s);
        }
        out
    }

    /// Multiply by a known polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> LinPoly {
        let mut out = LinPoly::zero();
        for (m, c) in &self.terms {
            for (pm, pc) in p.terms() {
                out.add_coeff(m.mul(pm), c, pc);
            }
        }
        out
    }

    /// Product of two affine polynomials; fails when both carry unknowns.
    pub fn mul(&self, other: &LinPoly) -> Result<LinPoly, PolyError> {
        match (self.has_unknowns(), other.has_unknowns()) {
            (true, true) => Err(PolyError::NonAffine),
            (false, _) => Ok(other.mul_poly(&self.constant_part())),
            (true, false) => Ok(self.mul_poly(&other.constant_part())),
        }
    }

    /// The polynomial obtained by setting every unknown to zero.
    pub fn constant_part(&self) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), c.constant)))
    }

    pub fn diff(&self, v: Var) -> LinPoly {
        let mut out = LinPoly::zero();
        for (m, c) in &self.terms {
            if let Some((e, dm)) = m.diff(v) {
                out.add_coeff(dm, c, e as f64);
            }
        }
        out
    }

    /// Replace unknowns by values.
    pub fn resolve(&self, assign: &dyn Fn(Unknown) -> f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, c)| (m.clone(), c.value(assign))))
    }
}

/// `Σ coeffs·u = rhs`, one per monomial of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquation {
    pub monomial: Monomial,
    pub coeffs: BTreeMap<Unknown, f64>,
    pub rhs: f64,
}

/// Equate coefficients of `lhs − rhs` monomial by monomial.
pub fn coefficient_equations(lhs: &LinPoly, rhs: &LinPoly) -> Vec<LinearEquation> {
    lhs.sub(rhs)
        .terms
        .into_iter()
        .map(|(m, c)| LinearEquation { monomial: m, coeffs: c.linear, rhs: -c.constant })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Polynomial {
        s.parse().unwrap()
    }

    #[test]
    fn scalar_multiple_equation() {
        let a = Unknown(0);
        let lhs = LinPoly::unknown_term(a, 1.0, Monomial::var(Var::x(0)));
        let eqs = coefficient_equations(&lhs, &LinPoly::from(p("2*x1")));
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].coeffs, BTreeMap::from([(a, 1.0)]));
        assert_eq!(eqs[0].rhs, 2.0);
    }

    #[test]
    fn affine_zero_equation() {
        let (a, b) = (Unknown(0), Unknown(1));
        let lhs = LinPoly::unknown_term(a, 1.0, Monomial::var(Var::x(0)))
            .add(&LinPoly::unknown_term(b, 1.0, Monomial::one()));
        let eqs = coefficient_equations(&lhs, &LinPoly::zero());
        assert_eq!(eqs.len(), 2);
        assert!(eqs.iter().all(|e| e.rhs == 0.0 && e.coeffs.len() == 1));
    }

    #[test]
    fn integrability_forces_zero_partial() {
        // g = Σ c_k m_k of degree ≤ 2 in (x1, x2); M = ∂g/∂x must equal L·Bᵀ with
        // B = [0, 1]ᵀ and L = l (unknown constant). First column gives ∂g/∂x1 = 0.
        let monos = super::super::calculus::monomials_upto(&[Var::x(0), Var::x(1)], 2);
        let g = monos.iter().enumerate().fold(LinPoly::zero(), |acc, (k, m)| {
            acc.add(&LinPoly::unknown_term(Unknown(k as u32), 1.0, m.clone()))
        });
        let dg1 = g.diff(Var::x(0));
        let eqs = coefficient_equations(&dg1, &LinPoly::zero());
        // Every g-coefficient on a monomial containing x1 is forced to zero.
        let forced: Vec<Unknown> =
            eqs.iter().flat_map(|e| e.coeffs.keys().copied()).collect::<Vec<_>>();
        let x1_monos = monos.iter().filter(|m| m.exponent(Var::x(0)) > 0).count();
        assert_eq!(forced.len(), x1_monos);
        assert!(eqs.iter().all(|e| e.rhs == 0.0 && e.coeffs.len() == 1));
    }

    #[test]
    fn product_of_unknowns_is_rejected() {
        let a = LinPoly::unknown_term(Unknown(0), 1.0, Monomial::one());
        assert_eq!(a.mul(&a), Err(PolyError::NonAffine));
        let known = LinPoly::from(p("x1 + 2"));
        assert!(a.mul(&known).is_ok());
    }

    #[test]
    fn resolve_substitutes_values() {
        let a = LinPoly::unknown_term(Unknown(3), 2.0, Monomial::var(Var::x(1)))
            .add(&LinPoly::from(p("1")));
        assert_eq!(a.resolve(&|_| 0.25), p("0.5*x2 + 1"));
    }
}
