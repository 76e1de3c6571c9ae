//! Sum-of-squares programs: decision polynomials, SOS and matrix-SOS
//! constraints, S-procedure multipliers and polynomial identities, compiled to
//! a block SDP and solved with independently verified Gram certificates.
//!
//! Matrix constraints `M(x) ⪰ 0` are relaxed to `yᵀM(x)y ∈ Σ` with auxiliary
//! variables `y`, using a basis of products `y_i·m(x)`.

mod gram;
mod matrix;

pub use gram::{
    full_basis, gram_expand, newton_box_basis, verify_certificate, CertTolerance,
    CertificateReport, GramCertificate,
};
pub use matrix::LinMatrix;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::{monomials_upto, LinPoly, Monomial, PolyMatrix, Polynomial, Unknown, Var};
use crate::sdp::{
    export_sdpa, solve, Constraint, Entry, Infeasibility, SdpError, SdpProblem, SdpStatus,
    SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    Free,
    Sos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoly {
    pub name: String,
    pub structure: Structure,
    pub poly: LinPoly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDecision {
    pub name: String,
    pub unknown: Unknown,
    pub lower: Option<f64>,
}

/// How the Gram basis of a constraint is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisChoice {
    /// Half-degree monomials pruned by the Newton box of the support.
    NewtonBox,
    /// Every monomial up to half the degree.
    Full,
    /// Caller-supplied monomials (scalar constraints only).
    Custom(Vec<Monomial>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SosConstraint {
    Sos { name: String, poly: LinPoly, basis: BasisChoice },
    SosMatrix { name: String, matrix: LinMatrix, basis: BasisChoice },
    Zero { name: String, poly: LinPoly },
}

impl SosConstraint {
    pub fn name(&self) -> &str {
        match self {
            SosConstraint::Sos { name, .. }
            | SosConstraint::SosMatrix { name, .. }
            | SosConstraint::Zero { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosOptions {
    pub solver: SolverOptions,
    pub cert: CertTolerance,
    /// When false, `NewtonBox` bases fall back to `Full`.
    pub prune: bool,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions { solver: SolverOptions::default(), cert: CertTolerance::default(), prune: true }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SosError {
    #[error("matrix constraint '{0}' is not symmetric")]
    Asymmetric(String),
    #[error("constraint '{constraint}' uses variable {var} outside the program universe")]
    OutsideUniverse { constraint: String, var: Var },
    #[error("constraint '{constraint}' cannot hold: {reason}")]
    InfeasibleByConstruction { constraint: String, reason: String },
    #[error("SOS program infeasible; dominant constraint family '{family}'")]
    Infeasible { family: String, weights: Vec<(String, f64)> },
    #[error("objective is unbounded below")]
    Unbounded,
    #[error(
        "certificate for '{constraint}' rejected (residual {residual:.3e}, min eigenvalue \
         {min_eigenvalue:.3e}, solver status {status:?})"
    )]
    NumericalFailure { constraint: String, residual: f64, min_eigenvalue: f64, status: SdpStatus },
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosProgram {
    pub universe: Vec<Var>,
    next_unknown: u32,
    pub decisions: Vec<DecisionPoly>,
    pub scalars: Vec<ScalarDecision>,
    pub constraints: Vec<SosConstraint>,
    /// Minimize `Σ coeff·unknown`.
    pub objective: Vec<(Unknown, f64)>,
    pub options: SosOptions,
}

/// Where each SDP block came from.
#[derive(Debug, Clone, PartialEq)]
enum BlockOrigin {
    Gram { constraint: usize, basis: Vec<Monomial>, target: LinPoly },
    /// A Gram constraint whose basis came out empty; it owns no SDP block and
    /// its target must vanish.
    EmptyGram { constraint: usize, target: LinPoly },
    Bound { scalar: usize },
    Dummy,
}

/// The SDP induced by a program plus the bookkeeping needed to map back.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSos {
    pub sdp: SdpProblem,
    blocks: Vec<BlockOrigin>,
    free_index: BTreeMap<Unknown, usize>,
    /// Owning family name of each SDP row.
    row_owner: Vec<String>,
}

impl CompiledSos {
    /// Gram basis sizes, one per SOS constraint, in constraint order.
    pub fn gram_sizes(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                BlockOrigin::Gram { basis, .. } => Some(basis.len()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCertificate {
    pub constraint: String,
    pub target: Polynomial,
    pub certificate: GramCertificate,
    pub report: CertificateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosSolution {
    pub values: BTreeMap<Unknown, f64>,
    pub decisions: BTreeMap<String, Polynomial>,
    pub scalars: BTreeMap<String, f64>,
    pub certificates: Vec<NamedCertificate>,
    pub objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
}

impl SosSolution {
    pub fn value(&self, u: Unknown) -> f64 {
        self.values.get(&u).copied().unwrap_or(0.0)
    }

    pub fn poly(&self, p: &LinPoly) -> Polynomial {
        p.resolve(&|u| self.value(u))
    }

    pub fn matrix(&self, m: &LinMatrix) -> PolyMatrix {
        m.resolve(&|u| self.value(u))
    }
}

fn linpoly_vars(p: &LinPoly) -> BTreeSet<Var> {
    p.terms().flat_map(|(m, _)| m.vars().collect::<Vec<_>>()).collect()
}

fn support(p: &LinPoly) -> Vec<Monomial> {
    p.terms().map(|(m, _)| m.clone()).collect()
}

impl SosProgram {
    pub fn new(universe: Vec<Var>) -> Self {
        SosProgram {
            universe,
            next_unknown: 0,
            decisions: Vec::new(),
            scalars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            options: SosOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SosOptions) -> Self {
        self.options = options;
        self
    }

    pub fn fresh_unknown(&mut self) -> Unknown {
        let u = Unknown(self.next_unknown);
        self.next_unknown += 1;
        u
    }

    /// `Σ c_k m_k` with fresh unknown coefficients.
    pub fn free_poly(&mut self, name: &str, monomials: &[Monomial]) -> LinPoly {
        let p = monomials.iter().fold(LinPoly::zero(), |acc, m| {
            let u = self.fresh_unknown();
            acc.add(&LinPoly::unknown_term(u, 1.0, m.clone()))
        });
        self.decisions.push(DecisionPoly {
            name: name.to_string(),
            structure: Structure::Free,
            poly: p.clone(),
        });
        p
    }

    /// Free polynomial in `vars` with all monomials of degree in `lo..=hi`.
    pub fn free_poly_deg(&mut self, name: &str, vars: &[Var], lo: u32, hi: u32) -> LinPoly {
        let monos: Vec<Monomial> =
            monomials_upto(vars, hi).into_iter().filter(|m| m.degree() >= lo).collect();
        self.free_poly(name, &monos)
    }

    /// A decision polynomial of degree `degree` in `vars` constrained to be SOS.
    pub fn sos_poly(&mut self, name: &str, vars: &[Var], degree: u32) -> LinPoly {
        let p = self.free_poly_deg(name, vars, 0, degree);
        if let Some(d) = self.decisions.last_mut() {
            d.structure = Structure::Sos;
        }
        self.require_sos(&format!("{name} is SOS"), p.clone());
        p
    }

    /// A scalar decision, optionally bounded below.
    pub fn scalar(&mut self, name: &str, lower: Option<f64>) -> Unknown {
        let u = self.fresh_unknown();
        self.scalars.push(ScalarDecision { name: name.to_string(), unknown: u, lower });
        u
    }

    pub fn require_sos(&mut self, name: &str, p: LinPoly) {
        self.require_sos_with_basis(name, p, BasisChoice::NewtonBox);
    }

    pub fn require_sos_with_basis(&mut self, name: &str, p: LinPoly, basis: BasisChoice) {
        self.constraints.push(SosConstraint::Sos { name: name.to_string(), poly: p, basis });
    }

    /// `M(x) ⪰ 0` through the `yᵀMy` relaxation.
    pub fn require_sos_matrix(&mut self, name: &str, m: LinMatrix) -> Result<(), SosError> {
        if !m.is_symmetric() {
            return Err(SosError::Asymmetric(name.to_string()));
        }
        self.constraints.push(SosConstraint::SosMatrix {
            name: name.to_string(),
            matrix: m,
            basis: BasisChoice::NewtonBox,
        });
        Ok(())
    }

    /// `M(x) ⪰ 0` on `{g_i ≥ 0}`: adds symmetric matrix-SOS multipliers
    /// `S_i` of the given degree and requires `M − Σ S_i·g_i` matrix-SOS.
    pub fn require_sos_matrix_on(
        &mut self,
        name: &str,
        m: LinMatrix,
        region: &[Polynomial],
        multiplier_degree: u32,
    ) -> Result<Vec<LinMatrix>, SosError> {
        if !m.is_symmetric() {
            return Err(SosError::Asymmetric(name.to_string()));
        }
        let vars = self.universe.clone();
        let k = m.nrows();
        let mut rest = m;
        let mut mults = Vec::with_capacity(region.len());
        for (i, g) in region.iter().enumerate() {
            let mut s = LinMatrix::zeros(k, k);
            for r in 0..k {
                for c in r..k {
                    let e = self.free_poly_deg(
                        &format!("{name} multiplier {} ({}, {})", i + 1, r + 1, c + 1),
                        &vars,
                        0,
                        multiplier_degree,
                    );
                    s.set(r, c, e.clone());
                    s.set(c, r, e);
                }
            }
            rest = rest.sub(&s.mul_scalar_poly(g)).expect("same shape");
            self.require_sos_matrix(&format!("{name} multiplier {}", i + 1), s.clone())?;
            mults.push(s);
        }
        self.require_sos_matrix(name, rest)?;
        Ok(mults)
    }

    /// `p ≡ 0` coefficientwise.
    pub fn require_zero(&mut self, name: &str, p: LinPoly) {
        self.constraints.push(SosConstraint::Zero { name: name.to_string(), poly: p });
    }

    pub fn minimize(&mut self, u: Unknown, coeff: f64) {
        self.objective.push((u, coeff));
    }

    /// Certify `p0 ≥ 0` on `{p_i ≥ 0}`: adds SOS multipliers `s_i` of the
    /// given degrees over the universe and requires `p0 − Σ s_i p_i ∈ Σ`.
    pub fn s_procedure(
        &mut self,
        name: &str,
        p0: &LinPoly,
        constraints: &[Polynomial],
        multiplier_degrees: &[u32],
    ) -> Vec<LinPoly> {
        let vars = self.universe.clone();
        let mut rest = p0.clone();
        let mut mults = Vec::with_capacity(constraints.len());
        for (k, (pi, &d)) in constraints.iter().zip(multiplier_degrees).enumerate() {
            let s = self.sos_poly(&format!("{name} multiplier {}", k + 1), &vars, d);
            rest = rest.sub(&s.mul_poly(pi));
            mults.push(s);
        }
        self.require_sos(name, rest);
        mults
    }

    fn check_universe(&self, name: &str, p: &LinPoly, allow_aux: bool) -> Result<(), SosError> {
        for v in linpoly_vars(p) {
            let ok = self.universe.contains(&v) || (allow_aux && v.is_aux());
            if !ok {
                return Err(SosError::OutsideUniverse { constraint: name.to_string(), var: v });
            }
        }
        Ok(())
    }

    fn resolve_choice<'a>(&self, c: &'a BasisChoice) -> &'a BasisChoice {
        match c {
            BasisChoice::NewtonBox if !self.options.prune => &BasisChoice::Full,
            other => other,
        }
    }

    fn scalar_basis(&self, p: &LinPoly, choice: &BasisChoice) -> Vec<Monomial> {
        let mut vars: BTreeSet<Var> = self.universe.iter().copied().collect();
        vars.extend(linpoly_vars(p));
        let vars: Vec<Var> = vars.into_iter().collect();
        let sup = support(p);
        match self.resolve_choice(choice) {
            BasisChoice::NewtonBox => newton_box_basis(&sup, &vars),
            BasisChoice::Full => full_basis(&sup, &vars),
            BasisChoice::Custom(b) => b.clone(),
        }
    }

    /// Basis `{y_i · m}` with `m` boxed against the support of `M_ii`.
    fn matrix_basis(&self, m: &LinMatrix, aux: &[Var], choice: &BasisChoice) -> Vec<Monomial> {
        let top: Vec<Monomial> = m.entries().iter().flat_map(support).collect();
        let mut out = Vec::new();
        for (i, &y) in aux.iter().enumerate() {
            let sup = support(m.get(i, i));
            let xb = match self.resolve_choice(choice) {
                BasisChoice::Full => full_basis(&top, &self.universe),
                _ => newton_box_basis(&sup, &self.universe),
            };
            if sup.is_empty() {
                continue;
            }
            out.extend(xb.into_iter().map(|b| Monomial::var(y).mul(&b)));
        }
        out
    }

    /// Translate to a block SDP. Every unknown becomes a free variable; every
    /// SOS constraint becomes one Gram block.
    pub fn compile(&self) -> Result<CompiledSos, SosError> {
        let tol = self.options.cert.coeff;
        // Origins follow SDP block order, except that empty Gram constraints
        // own no block.
        let mut blocks = Vec::new();
        let mut sizes = Vec::new();
        // (owner, entries, linear terms, rhs) with rows in `Σ entries − Σ c_u u = c0` form.
        let mut rows: Vec<Row> = Vec::new();

        for (ci, c) in self.constraints.iter().enumerate() {
            match c {
                SosConstraint::Sos { name, poly, basis } => {
                    self.check_universe(name, poly, true)?;
                    let b = self.scalar_basis(poly, basis);
                    push_gram(ci, name, b, poly.clone(), tol, &mut blocks, &mut sizes, &mut rows)?;
                }
                SosConstraint::SosMatrix { name, matrix, basis } => {
                    if !matrix.is_symmetric() {
                        return Err(SosError::Asymmetric(name.clone()));
                    }
                    for e in matrix.entries() {
                        self.check_universe(name, e, false)?;
                    }
                    let aux: Vec<Var> = (0..matrix.nrows()).map(Var::y).collect();
                    let target = matrix.quadratic_form(&aux);
                    let b = self.matrix_basis(matrix, &aux, basis);
                    push_gram(ci, name, b, target, tol, &mut blocks, &mut sizes, &mut rows)?;
                }
                SosConstraint::Zero { name, poly } => {
                    self.check_universe(name, poly, true)?;
                    for (m, coeff) in poly.terms() {
                        if coeff.linear.is_empty() {
                            if coeff.constant.abs() > tol {
                                return Err(SosError::InfeasibleByConstruction {
                                    constraint: name.clone(),
                                    reason: format!("fixed nonzero coefficient on {m}"),
                                });
                            }
                            continue;
                        }
                        let lin = coeff.linear.iter().map(|(&u, &v)| (u, -v)).collect();
                        rows.push((name.clone(), vec![], lin, coeff.constant));
                    }
                }
            }
        }
        for (si, s) in self.scalars.iter().enumerate() {
            if let Some(lb) = s.lower {
                // u − t = lb with t ⪰ 0.
                let block = sizes.len();
                sizes.push(1);
                blocks.push(BlockOrigin::Bound { scalar: si });
                rows.push((
                    format!("{} lower bound", s.name),
                    vec![Entry { block, i: 0, j: 0, value: -1.0 }],
                    vec![(s.unknown, 1.0)],
                    lb,
                ));
            }
        }
        let mut free_index = BTreeMap::new();
        for (_, _, lin, _) in &rows {
            for &(u, _) in lin {
                let n = free_index.len();
                free_index.entry(u).or_insert(n);
            }
        }
        for &(u, c) in &self.objective {
            if c != 0.0 && !free_index.contains_key(&u) {
                return Err(SosError::Unbounded);
            }
        }
        if sizes.is_empty() || rows.is_empty() {
            let block = sizes.len();
            sizes.push(1);
            blocks.push(BlockOrigin::Dummy);
            rows.push(("normalization".into(), vec![Entry { block, i: 0, j: 0, value: 1.0 }], vec![], 1.0));
        }
        let mut sdp = SdpProblem::new(sizes, free_index.len());
        for &(u, c) in &self.objective {
            sdp.free_objective[free_index[&u]] += c;
        }
        let mut row_owner = Vec::with_capacity(rows.len());
        for (owner, entries, lin, rhs) in rows {
            // Σ entries + Σ (−c_u) u = c0.
            let free = lin.iter().map(|&(u, c)| (free_index[&u], c)).collect();
            sdp.constraints.push(Constraint { entries, free, rhs });
            row_owner.push(owner);
        }
        sdp.validate()?;
        Ok(CompiledSos { sdp, blocks, free_index, row_owner })
    }

    /// The induced SDP in SDPA sparse format.
    pub fn export_sdpa(&self) -> Result<String, SosError> {
        Ok(export_sdpa(&self.compile()?.sdp))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Solve and re-verify every certificate before returning.
    pub fn solve(&self) -> Result<SosSolution, SosError> {
        let compiled = self.compile()?;
        let sol = solve(&compiled.sdp, &self.options.solver);
        if sol.status == SdpStatus::Infeasible {
            return Err(match sol.infeasibility {
                Some(Infeasibility::Dual) => SosError::Unbounded,
                _ => infeasibility_report(&compiled, &sol.y),
            });
        }
        let mut values = BTreeMap::new();
        for (&u, &k) in &compiled.free_index {
            values.insert(u, sol.x_free[k]);
        }
        let value = |u: Unknown| values.get(&u).copied().unwrap_or(0.0);
        let tol = self.options.cert;
        let fail = |constraint: &str, residual: f64, min_eigenvalue: f64| SosError::NumericalFailure {
            constraint: constraint.to_string(),
            residual,
            min_eigenvalue,
            status: sol.status,
        };

        let mut certificates = Vec::new();
        let mut next_block = 0;
        for origin in &compiled.blocks {
            let (constraint, basis, target, gram) = match origin {
                BlockOrigin::Gram { constraint, basis, target } => {
                    let x = &sol.x[next_block];
                    next_block += 1;
                    (constraint, basis.as_slice(), target, (x + x.transpose()) * 0.5)
                }
                BlockOrigin::EmptyGram { constraint, target } => {
                    (constraint, &[][..], target, DMatrix::zeros(0, 0))
                }
                BlockOrigin::Bound { scalar } => {
                    next_block += 1;
                    let s = &self.scalars[*scalar];
                    let lb = s.lower.unwrap_or(f64::NEG_INFINITY);
                    let v = value(s.unknown);
                    if v < lb - tol.coeff {
                        return Err(fail(&format!("{} lower bound", s.name), lb - v, 0.0));
                    }
                    continue;
                }
                BlockOrigin::Dummy => {
                    next_block += 1;
                    continue;
                }
            };
            let name = self.constraints[*constraint].name();
            let target = target.resolve(&value);
            let cert = GramCertificate::new(&target, basis, gram);
            let report = verify_certificate(&target, &cert, tol);
            if !report.passed {
                return Err(fail(name, report.max_residual, report.min_eigenvalue));
            }
            certificates.push(NamedCertificate {
                constraint: name.to_string(),
                target,
                certificate: cert,
                report,
            });
        }
        for c in &self.constraints {
            if let SosConstraint::Zero { name, poly } = c {
                let r = poly.resolve(&value).max_abs_coeff();
                if r > tol.coeff {
                    return Err(fail(name, r, 0.0));
                }
            }
        }
        let decisions =
            self.decisions.iter().map(|d| (d.name.clone(), d.poly.resolve(&value))).collect();
        let scalars = self.scalars.iter().map(|s| (s.name.clone(), value(s.unknown))).collect();
        let objective = self.objective.iter().map(|&(u, c)| c * value(u)).sum();
        Ok(SosSolution {
            values,
            decisions,
            scalars,
            certificates,
            objective,
            status: sol.status,
            iterations: sol.iterations,
        })
    }
}

type Row = (String, Vec<Entry>, Vec<(Unknown, f64)>, f64);

#[allow(clippy::too_many_arguments)]
fn push_gram(
    constraint: usize,
    name: &str,
    basis: Vec<Monomial>,
    target: LinPoly,
    tol: f64,
    blocks: &mut Vec<BlockOrigin>,
    sizes: &mut Vec<usize>,
    rows: &mut Vec<Row>,
) -> Result<(), SosError> {
    let block = sizes.len();
    gram_rows(name, block, &basis, &target, tol, rows)?;
    if basis.is_empty() {
        blocks.push(BlockOrigin::EmptyGram { constraint, target });
    } else {
        sizes.push(basis.len());
        blocks.push(BlockOrigin::Gram { constraint, basis, target });
    }
    Ok(())
}

/// One equation per monomial of `zᵀQz − target`.
fn gram_rows(
    name: &str,
    block: usize,
    basis: &[Monomial],
    target: &LinPoly,
    tol: f64,
    rows: &mut Vec<Row>,
) -> Result<(), SosError> {
    let mut pairs: BTreeMap<Monomial, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..basis.len() {
        for j in i..basis.len() {
            pairs.entry(basis[i].mul(&basis[j])).or_default().push((i, j));
        }
    }
    let coeffs: BTreeMap<&Monomial, _> = target.terms().collect();
    let monos: BTreeSet<&Monomial> = pairs.keys().chain(coeffs.keys().copied()).collect();
    for m in monos {
        let entries: Vec<Entry> = pairs
            .get(m)
            .map(|ps| ps.iter().map(|&(i, j)| Entry { block, i, j, value: 1.0 }).collect())
            .unwrap_or_default();
        let (c0, lin) = match coeffs.get(m) {
            Some(c) => (c.constant, c.linear.iter().map(|(&u, &v)| (u, -v)).collect::<Vec<_>>()),
            None => (0.0, vec![]),
        };
        if entries.is_empty() && lin.is_empty() {
            if c0.abs() > tol {
                let reason = if m.degree() % 2 == 1 && target.degree() == m.degree() {
                    format!("odd top degree {} (monomial {m})", m.degree())
                } else {
                    format!("monomial {m} lies outside the Gram basis products")
                };
                return Err(SosError::InfeasibleByConstruction { constraint: name.to_string(), reason });
            }
            continue;
        }
        rows.push((name.to_string(), entries, lin, c0));
    }
    Ok(())
}

/// Attribute a dual ray to constraint families by `|y_r|·‖row_r‖`.
fn infeasibility_report(c: &CompiledSos, y: &nalgebra::DVector<f64>) -> SosError {
    let mut w: BTreeMap<String, f64> = BTreeMap::new();
    for (r, owner) in c.row_owner.iter().enumerate() {
        let nrm = c.sdp.constraints[r].frobenius_sq().sqrt();
        *w.entry(owner.clone()).or_default() += y[r].abs() * nrm;
    }
    let total: f64 = w.values().sum::<f64>().max(f64::MIN_POSITIVE);
    let mut weights: Vec<(String, f64)> = w.into_iter().map(|(k, v)| (k, v / total)).collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let family = weights.first().map(|w| w.0.clone()).unwrap_or_default();
    SosError::Infeasible { family, weights }
}

/// Is `p` a sum of squares? Returns the verified certificate when it is.
pub fn check_sos(p: &Polynomial, tol: f64) -> (bool, Option<GramCertificate>) {
    let mut prog = SosProgram::new(p.vars());
    prog.options.cert.coeff = tol;
    prog.require_sos("p", LinPoly::from(p));
    match prog.solve() {
        Ok(mut s) => (true, s.certificates.pop().map(|c| c.certificate)),
        Err(_) => (false, None),
    }
}

/// Is `yᵀM(x)y` a sum of squares?
pub fn check_sos_matrix(m: &PolyMatrix, tol: f64) -> (bool, Option<GramCertificate>) {
    let mut prog = SosProgram::new(m.entries().iter().flat_map(Polynomial::vars).collect::<BTreeSet<_>>().into_iter().collect());
    prog.options.cert.coeff = tol;
    if prog.require_sos_matrix("M", LinMatrix::from(m)).is_err() {
        return (false, None);
    }
    match prog.solve() {
        Ok(mut s) => (true, s.certificates.pop().map(|c| c.certificate)),
        Err(_) => (false, None),
    }
}

/// Largest `t` with `M(x) − t·I` matrix-SOS, or `None` if the SDP fails.
pub fn sos_matrix_margin(m: &PolyMatrix) -> Option<f64> {
    let vars: Vec<Var> =
        m.entries().iter().flat_map(Polynomial::vars).collect::<BTreeSet<_>>().into_iter().collect();
    let mut prog = SosProgram::new(vars);
    let t = prog.scalar("t", None);
    let shift = LinMatrix::diagonal(m.nrows(), &LinPoly::unknown_term(t, 1.0, Monomial::one()));
    let lm = LinMatrix::from(m).sub(&shift).ok()?;
    prog.require_sos_matrix("M - t I", lm).ok()?;
    prog.minimize(t, -1.0);
    prog.solve().ok().map(|s| s.value(t))
}

/// The largest Gram-feasible `t` with `p − t ∈ Σ`, a lower bound on `min p`.
pub fn sos_lower_bound(p: &Polynomial) -> Option<f64> {
    let mut prog = SosProgram::new(p.vars());
    let t = prog.scalar("t", None);
    let lp = LinPoly::from(p).sub(&LinPoly::unknown_term(t, 1.0, Monomial::one()));
    prog.require_sos("p - t", lp);
    prog.minimize(t, -1.0);
    prog.solve().ok().map(|s| s.value(t))
}

#[cfg(test)]
mod tests;
