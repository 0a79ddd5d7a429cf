//! Small dense linear algebra over a finite field: echelon forms, kernels,
//! and solving, used by the eigenspace and subspace computations.

use crate::field::{Field, FqElem};

/// Dense matrix over F, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<FqElem>,
}

impl FMatrix {
    pub fn zero(f: &Field, rows: usize, cols: usize) -> FMatrix {
        FMatrix {
            rows,
            cols,
            data: vec![f.zero(); rows * cols],
        }
    }

    pub fn identity(f: &Field, n: usize) -> FMatrix {
        let mut m = FMatrix::zero(f, n, n);
        for i in 0..n {
            *m.at_mut(i, i) = f.one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<FqElem>>) -> FMatrix {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        FMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> &FqElem {
        &self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut FqElem {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[FqElem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul(&self, f: &Field, other: &FMatrix) -> FMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = FMatrix::zero(f, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if f.is_zero(a) {
                    continue;
                }
                for j in 0..other.cols {
                    let t = f.mul(a, other.at(k, j));
                    *out.at_mut(i, j) = f.add(out.at(i, j), &t);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, f: &Field, v: &[FqElem]) -> Vec<FqElem> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = f.zero();
                for j in 0..self.cols {
                    acc = f.add(&acc, &f.mul(self.at(i, j), &v[j]));
                }
                acc
            })
            .collect()
    }

    pub fn sub(&self, f: &Field, other: &FMatrix) -> FMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        FMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f.sub(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, f: &Field, s: &FqElem) -> FMatrix {
        FMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| f.mul(a, s)).collect(),
        }
    }

    /// Inverse, or None when singular.
    pub fn inverse(&self, f: &Field) -> Option<FMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = FMatrix::identity(f, n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| !f.is_zero(a.at(r, col)))?;
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                    inv.data.swap(col * n + j, pivot * n + j);
                }
            }
            let pinv = f.inv(a.at(col, col)).ok()?;
            for j in 0..n {
                *a.at_mut(col, j) = f.mul(a.at(col, j), &pinv);
                *inv.at_mut(col, j) = f.mul(inv.at(col, j), &pinv);
            }
            for r in 0..n {
                if r != col && !f.is_zero(a.at(r, col)) {
                    let factor = a.at(r, col).clone();
                    for j in 0..n {
                        let t = f.mul(&factor, a.at(col, j));
                        *a.at_mut(r, j) = f.sub(a.at(r, j), &t);
                        let t = f.mul(&factor, inv.at(col, j));
                        *inv.at_mut(r, j) = f.sub(inv.at(r, j), &t);
                    }
                }
            }
        }
        Some(inv)
    }
}

/// Reduced row echelon form in place; returns pivot column indices.
pub fn rref(f: &Field, m: &mut FMatrix) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols {
        if row >= m.rows {
            break;
        }
        let Some(p) = (row..m.rows).find(|&r| !f.is_zero(m.at(r, col))) else {
            continue;
        };
        if p != row {
            for j in 0..m.cols {
                m.data.swap(row * m.cols + j, p * m.cols + j);
            }
        }
        let pinv = f.inv(m.at(row, col)).expect("pivot nonzero");
        for j in 0..m.cols {
            *m.at_mut(row, j) = f.mul(m.at(row, j), &pinv);
        }
        for r in 0..m.rows {
            if r != row && !f.is_zero(m.at(r, col)) {
                let factor = m.at(r, col).clone();
                for j in 0..m.cols {
                    let t = f.mul(&factor, m.at(row, j));
                    *m.at_mut(r, j) = f.sub(m.at(r, j), &t);
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Echelonized basis of the row span: RREF rows restricted to nonzero rows.
pub fn row_basis(f: &Field, rows: Vec<Vec<FqElem>>) -> Vec<Vec<FqElem>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let mut m = FMatrix::from_rows(rows);
    let pivots = rref(f, &mut m);
    (0..pivots.len()).map(|r| m.row(r).to_vec()).collect()
}

pub fn rank(f: &Field, rows: Vec<Vec<FqElem>>) -> usize {
    row_basis(f, rows).len()
}

/// Basis of the right kernel of `m`.
pub fn kernel_basis(f: &Field, m: &FMatrix) -> Vec<Vec<FqElem>> {
    let mut a = m.clone();
    let pivots = rref(f, &mut a);
    let mut basis = Vec::new();
    let pivot_set: std::collections::HashSet<usize> = pivots.iter().copied().collect();
    for free in 0..m.cols {
        if pivot_set.contains(&free) {
            continue;
        }
        let mut v = vec![f.zero(); m.cols];
        v[free] = f.one();
        for (r, &pc) in pivots.iter().enumerate() {
            v[pc] = f.neg(a.at(r, free));
        }
        basis.push(v);
    }
    basis
}

/// Solves `m x = b`; None when inconsistent. Under-determined systems return
/// the solution with free variables set to zero.
pub fn solve(f: &Field, m: &FMatrix, b: &[FqElem]) -> Option<Vec<FqElem>> {
    assert_eq!(m.rows, b.len());
    let mut aug = FMatrix::zero(f, m.rows, m.cols + 1);
    for r in 0..m.rows {
        for c in 0..m.cols {
            *aug.at_mut(r, c) = m.at(r, c).clone();
        }
        *aug.at_mut(r, m.cols) = b[r].clone();
    }
    let pivots = rref(f, &mut aug);
    if pivots.contains(&m.cols) {
        return None; // pivot in the constant column
    }
    let mut x = vec![f.zero(); m.cols];
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = aug.at(r, m.cols).clone();
    }
    Some(x)
}

/// Whether `v` lies in the span of the given echelonized basis.
pub fn in_span(f: &Field, basis: &[Vec<FqElem>], v: &[FqElem]) -> bool {
    let mut rows: Vec<Vec<FqElem>> = basis.to_vec();
    let r0 = rows.len();
    rows.push(v.to_vec());
    rank(f, rows) == r0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f3() -> Field {
        Field::new(3, 1, None).unwrap()
    }

    #[test]
    fn rref_and_kernel() {
        let f = f3();
        let m = FMatrix::from_rows(vec![
            vec![f.from_int(1), f.from_int(1), f.from_int(0)],
            vec![f.from_int(0), f.from_int(2), f.from_int(0)],
        ]);
        let ker = kernel_basis(&f, &m);
        assert_eq!(ker.len(), 1);
        let img = m.mul_vec(&f, &ker[0]);
        assert!(img.iter().all(|c| f.is_zero(c)));
        // [[1,2],[2,1]] is singular over F_3: kernel of the padded matrix
        let sing = FMatrix::from_rows(vec![
            vec![f.from_int(1), f.from_int(2)],
            vec![f.from_int(2), f.from_int(1)],
        ]);
        assert_eq!(kernel_basis(&f, &sing).len(), 1);
    }

    #[test]
    fn inverse_roundtrip() {
        let f = f3();
        let m = FMatrix::from_rows(vec![
            vec![f.from_int(1), f.from_int(1)],
            vec![f.from_int(0), f.from_int(2)],
        ]);
        let inv = m.inverse(&f).unwrap();
        assert_eq!(m.mul(&f, &inv), FMatrix::identity(&f, 2));
        let sing = FMatrix::from_rows(vec![
            vec![f.from_int(1), f.from_int(2)],
            vec![f.from_int(2), f.from_int(1)],
        ]);
        assert!(sing.inverse(&f).is_none());
    }

    #[test]
    fn solve_consistent_and_not() {
        let f = f3();
        let m = FMatrix::from_rows(vec![
            vec![f.from_int(1), f.from_int(1)],
            vec![f.from_int(2), f.from_int(2)],
        ]);
        assert!(solve(&f, &m, &[f.from_int(1), f.from_int(2)]).is_some());
        assert!(solve(&f, &m, &[f.from_int(1), f.from_int(1)]).is_none());
    }
}
