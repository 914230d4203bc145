//! Exact linear algebra over the expression class.
//!
//! Matrices carry [`RatExpr`] entries; all decisions (zero tests, pivoting)
//! are made relative to a [`SignContext`] describing the cell, so the same
//! code serves constant rational matrices and base-parametric ones. Reduced
//! row echelon form is unique over a field, which makes every derived basis
//! (nullspaces, duals) canonical and bit-exact reproducible.

use crate::expr::{ExprError, RatExpr, SignContext};
use crate::rat::Rat;
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<RatExpr>,
}

impl ExprMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<RatExpr>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        ExprMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExprMatrix {
            rows,
            cols,
            data: vec![RatExpr::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, RatExpr::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> RatExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        ExprMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &RatExpr {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: RatExpr) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> Vec<RatExpr> {
        (0..self.cols).map(|c| self.get(r, c).clone()).collect()
    }

    pub fn transpose(&self) -> ExprMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn mul(&self, other: &ExprMatrix) -> ExprMatrix {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        Self::from_fn(self.rows, other.cols, |r, c| {
            let mut acc = RatExpr::zero();
            for k in 0..self.cols {
                acc = acc.add(&self.get(r, k).mul(other.get(k, c)));
            }
            acc
        })
    }

    pub fn add(&self, other: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c).add(other.get(r, c))
        })
    }

    pub fn sub(&self, other: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c).sub(other.get(r, c))
        })
    }

    pub fn mul_vec(&self, v: &[RatExpr]) -> Vec<RatExpr> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                let mut acc = RatExpr::zero();
                for c in 0..self.cols {
                    acc = acc.add(&self.get(r, c).mul(&v[c]));
                }
                acc
            })
            .collect()
    }

    pub fn is_zero_on(&self, ctx: &SignContext) -> bool {
        self.data.iter().all(|e| e.is_zero_on(ctx))
    }

    pub fn equals_on(&self, other: &ExprMatrix, ctx: &SignContext) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.rows).all(|r| {
                (0..self.cols).all(|c| self.get(r, c).equals_on(other.get(r, c), ctx))
            })
    }

    pub fn is_symmetric_on(&self, ctx: &SignContext) -> bool {
        self.rows == self.cols && self.equals_on(&self.transpose(), ctx)
    }

    /// Reduced row echelon form with left-to-right pivot order.
    /// Returns the reduced matrix and the pivot column indices.
    pub fn rref_on(&self, ctx: &SignContext) -> Result<(ExprMatrix, Vec<usize>), ExprError> {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut next_row = 0;
        for col in 0..m.cols {
            if next_row >= m.rows {
                break;
            }
            let mut pivot_row = None;
            for r in next_row..m.rows {
                if !m.get(r, col).is_zero_on(ctx) {
                    pivot_row = Some(r);
                    break;
                }
            }
            let Some(pr) = pivot_row else { continue };
            if pr != next_row {
                for c in 0..m.cols {
                    m.data.swap(next_row * m.cols + c, pr * m.cols + c);
                }
            }
            let inv = m.get(next_row, col).recip(ctx)?;
            for c in 0..m.cols {
                let v = m.get(next_row, c).mul(&inv).normalized(ctx);
                m.set(next_row, c, v);
            }
            for r in 0..m.rows {
                if r == next_row || m.get(r, col).is_zero_on(ctx) {
                    continue;
                }
                let factor = m.get(r, col).clone();
                for c in 0..m.cols {
                    let v = m
                        .get(r, c)
                        .sub(&factor.mul(m.get(next_row, c)))
                        .normalized(ctx);
                    m.set(r, c, v);
                }
            }
            pivots.push(col);
            next_row += 1;
        }
        Ok((m, pivots))
    }

    pub fn rank_on(&self, ctx: &SignContext) -> Result<usize, ExprError> {
        Ok(self.rref_on(ctx)?.1.len())
    }

    /// Canonical nullspace basis: one vector per free column, in increasing
    /// column order, with a one in the free coordinate.
    pub fn nullspace_on(&self, ctx: &SignContext) -> Result<Vec<Vec<RatExpr>>, ExprError> {
        let (r, pivots) = self.rref_on(ctx)?;
        let pivot_set: Vec<usize> = pivots.clone();
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if pivot_set.contains(&free) {
                continue;
            }
            let mut v = vec![RatExpr::zero(); self.cols];
            v[free] = RatExpr::one();
            for (i, &p) in pivot_set.iter().enumerate() {
                v[p] = r.get(i, free).neg().normalized(ctx);
            }
            basis.push(v);
        }
        Ok(basis)
    }

    /// Solves `self * x = rhs` exactly; `None` when inconsistent.
    pub fn solve_on(
        &self,
        rhs: &[RatExpr],
        ctx: &SignContext,
    ) -> Result<Option<Vec<RatExpr>>, ExprError> {
        assert_eq!(rhs.len(), self.rows);
        let mut aug = ExprMatrix::from_fn(self.rows, self.cols + 1, |r, c| {
            if c < self.cols {
                self.get(r, c).clone()
            } else {
                rhs[r].clone()
            }
        });
        let (red, pivots) = aug.rref_on(ctx)?;
        aug = red;
        if pivots.contains(&self.cols) {
            return Ok(None);
        }
        let mut x = vec![RatExpr::zero(); self.cols];
        for (i, &p) in pivots.iter().enumerate() {
            x[p] = aug.get(i, self.cols).clone();
        }
        Ok(Some(x))
    }

    pub fn inverse_on(&self, ctx: &SignContext) -> Result<Option<ExprMatrix>, ExprError> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let aug = ExprMatrix::from_fn(n, 2 * n, |r, c| {
            if c < n {
                self.get(r, c).clone()
            } else if c - n == r {
                RatExpr::one()
            } else {
                RatExpr::zero()
            }
        });
        let (red, pivots) = aug.rref_on(ctx)?;
        if pivots.len() != n || pivots.iter().enumerate().any(|(i, &p)| p != i) {
            return Ok(None);
        }
        Ok(Some(ExprMatrix::from_fn(n, n, |r, c| {
            red.get(r, c + n).clone()
        })))
    }

    /// Span inclusion of row spaces: every row of `self` solvable from
    /// the rows of `other`.
    pub fn rows_contained_in_span_of(
        &self,
        other: &ExprMatrix,
        ctx: &SignContext,
    ) -> Result<bool, ExprError> {
        assert_eq!(self.cols, other.cols);
        let ot = other.transpose();
        for r in 0..self.rows {
            let rhs = self.row(r);
            if ot.solve_on(&rhs, ctx)?.is_none() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn same_row_span(&self, other: &ExprMatrix, ctx: &SignContext) -> Result<bool, ExprError> {
        Ok(self.rows_contained_in_span_of(other, ctx)?
            && other.rows_contained_in_span_of(self, ctx)?)
    }

    /// Constant rational entries, if the whole matrix is constant.
    pub fn to_constant(&self) -> Option<Vec<Vec<Rat>>> {
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let mut row = Vec::with_capacity(self.cols);
            for c in 0..self.cols {
                row.push(self.get(r, c).is_constant()?);
            }
            out.push(row);
        }
        Some(out)
    }
}

/// Exact determinant of a rational matrix (Gaussian elimination over `Rat`).
pub fn det_rat(m: &[Vec<Rat>]) -> Rat {
    let n = m.len();
    if n == 0 {
        return Rat::from_integer(1.into());
    }
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut det = Rat::from_integer(1.into());
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero());
        let Some(p) = pivot else {
            return Rat::zero();
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        let pv = a[col][col].clone();
        det *= pv.clone();
        for r in col + 1..n {
            let factor = a[r][col].clone() / pv.clone();
            for c in col..n {
                let sub = factor.clone() * a[col][c].clone();
                a[r][c] -= sub;
            }
        }
    }
    det
}

/// Exact positive semi-definiteness for a symmetric rational matrix: all
/// sums of principal `k`-minors must be nonnegative (the coefficients of
/// the characteristic polynomial of a symmetric matrix alternate exactly
/// when all eigenvalues are nonnegative).
pub fn psd_constant(m: &[Vec<Rat>]) -> bool {
    let n = m.len();
    for k in 1..=n {
        let mut ek = Rat::zero();
        for subset in subsets_of_size(n, k) {
            let minor: Vec<Vec<Rat>> = subset
                .iter()
                .map(|&r| subset.iter().map(|&c| m[r][c].clone()).collect())
                .collect();
            ek += det_rat(&minor);
        }
        if ek < Rat::zero() {
            return false;
        }
    }
    true
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{AbsPoly, Sign, Var};
    use crate::rat::{rat_int, rat_zero};

    fn c(n: i64) -> RatExpr {
        RatExpr::constant(rat_int(n))
    }

    #[test]
    fn rref_and_nullspace_canonical() {
        let ctx = SignContext::empty();
        // x + y = 0 has nullspace spanned by (-1, 1)
        let m = ExprMatrix::new(1, 2, vec![c(1), c(1)]);
        let ns = m.nullspace_on(&ctx).unwrap();
        assert_eq!(ns.len(), 1);
        assert!(ns[0][0].equals_on(&c(-1), &ctx));
        assert!(ns[0][1].equals_on(&c(1), &ctx));
    }

    #[test]
    fn parametric_rank() {
        // [x 0; 0 x] has rank 2 on a cell where x has definite sign
        let x = Var::new("x");
        let ctx = SignContext::empty().with(x.clone(), Sign::Pos);
        let xe = RatExpr::from_poly(AbsPoly::var(&x));
        let m = ExprMatrix::new(2, 2, vec![xe.clone(), c(0), c(0), xe]);
        assert_eq!(m.rank_on(&ctx).unwrap(), 2);
    }

    #[test]
    fn solve_and_inverse() {
        let ctx = SignContext::empty();
        let m = ExprMatrix::new(2, 2, vec![c(2), c(1), c(1), c(1)]);
        let x = m.solve_on(&[c(3), c(2)], &ctx).unwrap().unwrap();
        assert!(x[0].equals_on(&c(1), &ctx));
        assert!(x[1].equals_on(&c(1), &ctx));
        let inv = m.inverse_on(&ctx).unwrap().unwrap();
        assert!(m.mul(&inv).equals_on(&ExprMatrix::identity(2), &ctx));
    }

    #[test]
    fn psd_by_principal_minors() {
        let one = rat_int(1);
        let two = rat_int(2);
        let id = vec![
            vec![one.clone(), rat_zero()],
            vec![rat_zero(), two.clone()],
        ];
        assert!(psd_constant(&id));
        let neg = vec![
            vec![-one.clone(), rat_zero()],
            vec![rat_zero(), one.clone()],
        ];
        assert!(!psd_constant(&neg));
        // rank-1 PSD
        let rk1 = vec![vec![one.clone(), one.clone()], vec![one.clone(), one]];
        assert!(psd_constant(&rk1));
        // symmetric indefinite with zero diagonal
        let indef = vec![
            vec![rat_zero(), rat_int(1)],
            vec![rat_int(1), rat_zero()],
        ];
        assert!(!psd_constant(&indef));
    }
}
