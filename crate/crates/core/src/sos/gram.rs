//! Gram-matrix representation of SOS polynomials and its independent check.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::{monomials_upto, Monomial, PolyVector, Polynomial, Var};
use crate::sdp::min_eigenvalue;

/// `zᵀ·gram·z` equals the target up to `residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramCertificate {
    pub basis: PolyVector,
    pub gram: DMatrix<f64>,
    /// `target − zᵀ·gram·z` at emission time.
    pub residual: Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertTolerance {
    /// Bound on `max |coefficient|` of the residual.
    pub coeff: f64,
    /// Smallest admissible Gram eigenvalue is `-eig`.
    pub eig: f64,
}

impl Default for CertTolerance {
    fn default() -> Self {
        CertTolerance { coeff: 1e-7, eig: 1e-8 }
    }
}

impl CertTolerance {
    pub fn scaled(self, k: f64) -> Self {
        CertTolerance { coeff: self.coeff * k, eig: self.eig * k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub max_residual: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl GramCertificate {
    /// Build from a basis of monomials and a Gram matrix, recording the
    /// residual against `target`.
    pub fn new(target: &Polynomial, basis: &[Monomial], gram: DMatrix<f64>) -> Self {
        let basis = PolyVector::new(basis.iter().map(|m| Polynomial::term(1.0, m.clone())).collect());
        let residual = target - &gram_expand(&basis, &gram);
        GramCertificate { basis, gram, residual }
    }
}

/// `zᵀ Q z`, computed symbolically.
pub fn gram_expand(basis: &PolyVector, gram: &DMatrix<f64>) -> Polynomial {
    let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
    let n = basis.len();
    for i in 0..n {
        for j in 0..n {
            let q = gram[(i, j)];
            if q == 0.0 {
                continue;
            }
            for (mi, ci) in basis[i].terms() {
                for (mj, cj) in basis[j].terms() {
                    *acc.entry(mi.mul(mj)).or_default() += q * ci * cj;
                }
            }
        }
    }
    Polynomial::from_terms(acc)
}

/// Recompute `target − zᵀQz` and the spectrum of `Q` from scratch.
pub fn verify_certificate(
    target: &Polynomial,
    cert: &GramCertificate,
    tol: CertTolerance,
) -> CertificateReport {
    let shapes_ok = cert.gram.nrows() == cert.basis.len() && cert.gram.ncols() == cert.basis.len();
    if !shapes_ok {
        return CertificateReport {
            max_residual: f64::INFINITY,
            min_eigenvalue: f64::NEG_INFINITY,
            passed: false,
        };
    }
    let max_residual = (target - &gram_expand(&cert.basis, &cert.gram)).max_abs_coeff();
    let asym = (&cert.gram - cert.gram.transpose()).amax();
    let min_eig = if cert.basis.is_empty() { 0.0 } else { min_eigenvalue(&cert.gram) };
    CertificateReport {
        max_residual,
        min_eigenvalue: min_eig,
        passed: max_residual <= tol.coeff && min_eig >= -tol.eig && asym <= tol.coeff,
    }
}

/// Per-variable exponent and total-degree ranges of a support set.
struct SupportBox {
    lo: BTreeMap<Var, u32>,
    hi: BTreeMap<Var, u32>,
    deg_lo: u32,
    deg_hi: u32,
}

impl SupportBox {
    fn of(support: &[Monomial], vars: &[Var]) -> Option<Self> {
        if support.is_empty() {
            return None;
        }
        let mut b = SupportBox {
            lo: vars.iter().map(|&v| (v, u32::MAX)).collect(),
            hi: vars.iter().map(|&v| (v, 0)).collect(),
            deg_lo: u32::MAX,
            deg_hi: 0,
        };
        for m in support {
            for &v in vars {
                let e = m.exponent(v);
                let lo = b.lo.get_mut(&v).expect("var in box");
                *lo = (*lo).min(e);
                let hi = b.hi.get_mut(&v).expect("var in box");
                *hi = (*hi).max(e);
            }
            b.deg_lo = b.deg_lo.min(m.degree());
            b.deg_hi = b.deg_hi.max(m.degree());
        }
        Some(b)
    }

    fn admits(&self, m: &Monomial) -> bool {
        let d = m.degree();
        if 2 * d < self.deg_lo || 2 * d > self.deg_hi {
            return false;
        }
        self.lo.iter().all(|(&v, &lo)| {
            let e = 2 * m.exponent(v);
            e >= lo && e <= self.hi[&v]
        })
    }
}

/// Half-degree monomials in `vars` that survive the Newton box test against
/// `support`: for every variable (and the total degree), twice the exponent
/// lies within the range attained on the support.
pub fn newton_box_basis(support: &[Monomial], vars: &[Var]) -> Vec<Monomial> {
    let Some(b) = SupportBox::of(support, vars) else {
        return Vec::new();
    };
    monomials_upto(vars, b.deg_hi / 2).into_iter().filter(|m| b.admits(m)).collect()
}

/// Every monomial in `vars` up to half the support's top degree.
pub fn full_basis(support: &[Monomial], vars: &[Var]) -> Vec<Monomial> {
    let top = support.iter().map(Monomial::degree).max().unwrap_or(0);
    monomials_upto(vars, top.div_ceil(2))
}
