//! Matrices of affine-in-unknowns polynomials.

use serde::{Deserialize, Serialize};

use crate::poly::{LinPoly, Monomial, PolyError, PolyMatrix, Unknown, Var};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinMatrix {
    rows: usize,
    cols: usize,
    data: Vec<LinPoly>,
}

impl From<&PolyMatrix> for LinMatrix {
    fn from(m: &PolyMatrix) -> Self {
        LinMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.entries().iter().map(LinPoly::from).collect(),
        }
    }
}

impl LinMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinMatrix { rows, cols, data: vec![LinPoly::zero(); rows * cols] }
    }

    /// `p · I_n`.
    pub fn diagonal(n: usize, p: &LinPoly) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, p.clone());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> LinPoly) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        LinMatrix { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &LinPoly {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: LinPoly) {
        self.data[i * self.cols + j] = p;
    }

    fn check_same(&self, o: &LinMatrix) -> Result<(), PolyError> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(PolyError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, o: &LinMatrix) -> Result<LinMatrix, PolyError> {
        self.check_same(o)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).add(o.get(i, j))))
    }

    pub fn sub(&self, o: &LinMatrix) -> Result<LinMatrix, PolyError> {
        self.check_same(o)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).sub(o.get(i, j))))
    }

    pub fn scale(&self, s: f64) -> LinMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).scale(s))
    }

    pub fn transpose(&self) -> LinMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    /// `self · rhs` with a known right factor.
    pub fn mul_poly(&self, rhs: &PolyMatrix) -> Result<LinMatrix, PolyError> {
        if self.cols != rhs.nrows() {
            return Err(PolyError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows,
                self.cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        Ok(Self::from_fn(self.rows, rhs.ncols(), |i, j| {
            (0..self.cols).fold(LinPoly::zero(), |acc, k| {
                acc.add(&self.get(i, k).mul_poly(&rhs[(k, j)]))
            })
        }))
    }

    /// `lhs · self` with a known left factor.
    pub fn poly_mul(lhs: &PolyMatrix, m: &LinMatrix) -> Result<LinMatrix, PolyError> {
        Ok(m.transpose().mul_poly(&lhs.transpose())?.transpose())
    }

    /// Multiply every entry by a known polynomial.
    pub fn mul_scalar_poly(&self, p: &crate::poly::Polynomial) -> LinMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mul_poly(p))
    }

    pub fn diff(&self, v: Var) -> LinMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).diff(v))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (i + 1..self.cols).all(|j| self.get(i, j).sub(self.get(j, i)).is_zero()))
    }

    /// `(M + Mᵀ)/2`.
    pub fn symmetrize(&self) -> LinMatrix {
        let t = self.transpose();
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).add(t.get(i, j)).scale(0.5))
    }

    /// Stack blocks into one matrix; every row of blocks must agree in height
    /// and every column in width.
    pub fn from_blocks(blocks: &[Vec<LinMatrix>]) -> Result<LinMatrix, PolyError> {
        let heights: Vec<usize> = blocks.iter().map(|r| r.first().map_or(0, |b| b.rows)).collect();
        let widths: Vec<usize> = blocks.first().map_or(vec![], |r| r.iter().map(|b| b.cols).collect());
        for r in blocks {
            if r.len() != widths.len() {
                return Err(PolyError::Dimension("ragged block rows".into()));
            }
            for (b, &w) in r.iter().zip(&widths) {
                if b.rows != r[0].rows || b.cols != w {
                    return Err(PolyError::Dimension("inconsistent block shapes".into()));
                }
            }
        }
        let (rows, cols) = (heights.iter().sum(), widths.iter().sum());
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (br, h) in blocks.iter().zip(&heights) {
            let mut c0 = 0;
            for (b, w) in br.iter().zip(&widths) {
                for i in 0..*h {
                    for j in 0..*w {
                        out.set(r0 + i, c0 + j, b.get(i, j).clone());
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        Ok(out)
    }

    pub fn resolve(&self, assign: &dyn Fn(Unknown) -> f64) -> PolyMatrix {
        let rows = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).resolve(assign)).collect())
            .collect();
        PolyMatrix::from_rows(rows)
    }

    /// `yᵀ M y` with `y_i = aux[i]`.
    pub fn quadratic_form(&self, aux: &[Var]) -> LinPoly {
        let mut acc = LinPoly::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let yy = Monomial::var(aux[i]).mul(&Monomial::var(aux[j]));
                let y = crate::poly::Polynomial::term(1.0, yy);
                acc = acc.add(&self.get(i, j).mul_poly(&y));
            }
        }
        acc
    }

    pub fn degree(&self) -> u32 {
        self.data.iter().map(LinPoly::degree).max().unwrap_or(0)
    }

    pub fn entries(&self) -> &[LinPoly] {
        &self.data
    }
}
