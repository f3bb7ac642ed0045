//! Grid shapes, grid vectors and the block-tridiagonal five-point operator.
//!
//! Unknowns are flattened column-block by column-block:
//! `u = (u(1,1), …, u(m,1); u(1,2), …, u(m,2); …; u(1,n), …, u(m,n))ᵀ`,
//! so `i` (the position inside a block of length `m`) runs fastest.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension `m·n` for which a dense copy of `A` is assembled.
pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub m: usize,
    pub n: usize,
}

impl GridShape {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "grid shape needs m, n >= 1 (got m={m}, n={n})"
            )));
        }
        m.checked_mul(n)
            .ok_or_else(|| Error::InvalidInput("m*n overflows".into()))?;
        Ok(Self { m, n })
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    /// Flat index of the 1-based site `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.m).contains(&i) && (1..=self.n).contains(&j));
        (i - 1) + (j - 1) * self.m
    }

    /// 1-based site of a flat index.
    pub fn site(&self, k: usize) -> (usize, usize) {
        (k % self.m + 1, k / self.m + 1)
    }

    pub(crate) fn check(&self, other: &GridShape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{} values", self.dim()),
                found: format!("{len} values"),
            })
        }
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m, self.n)
    }
}

/// A grid function in canonical flattening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridVector", into = "RawGridVector")]
pub struct GridVector {
    shape: GridShape,
    values: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGridVector {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl TryFrom<RawGridVector> for GridVector {
    type Error = Error;
    fn try_from(raw: RawGridVector) -> Result<Self> {
        GridVector::from_vec(GridShape::new(raw.m, raw.n)?, raw.values)
    }
}

impl From<GridVector> for RawGridVector {
    fn from(v: GridVector) -> Self {
        RawGridVector {
            m: v.shape.m,
            n: v.shape.n,
            values: v.values.iter().copied().collect(),
        }
    }
}

impl GridVector {
    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            values: DVector::zeros(shape.dim()),
        }
    }

    pub fn from_vec(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        shape.check_len(values.len())?;
        Ok(Self {
            shape,
            values: DVector::from_vec(values),
        })
    }

    pub fn from_dvector(shape: GridShape, values: DVector<f64>) -> Result<Self> {
        shape.check_len(values.len())?;
        Ok(Self { shape, values })
    }

    /// Unit vector at flat index `k`.
    pub fn basis(shape: GridShape, k: usize) -> Self {
        let mut v = Self::zeros(shape);
        v.values[k] = 1.0;
        v
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    /// Value at the 1-based site `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.shape.index(i, j)]
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// `cos(kπ/d)` for `0 ≤ k ≤ d`, exact at the angles where the cosine is
/// rational (`0`, `±1/2`, `±1`).
pub fn cos_pi_ratio(k: usize, d: usize) -> f64 {
    debug_assert!(d > 0 && k <= d);
    if 2 * k > d {
        return -cos_pi_ratio(d - k, d);
    }
    if k == 0 {
        1.0
    } else if 2 * k == d {
        0.0
    } else if 3 * k == d {
        0.5
    } else {
        (k as f64 * PI / d as f64).cos()
    }
}

/// Eigenvalues of `scale · A`, ascending with multiplicity.
///
/// `α = scale·(4 − 2cos(iπ/(m+1)) − 2cos(jπ/(n+1)))`. Repeated values occur
/// (e.g. `{2, 4, 4, 6}` on the 2×2 grid), so the ordering is not strict.
pub fn eigen_analytic(shape: GridShape, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(shape.dim());
    for j in 1..=shape.n {
        let cy = 2.0 * cos_pi_ratio(j, shape.n + 1);
        for i in 1..=shape.m {
            let cx = 2.0 * cos_pi_ratio(i, shape.m + 1);
            out.push(scale * (4.0 - cx - cy));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Normalised eigenvector of the smallest eigenvalue: `sin(iπ/(m+1))·sin(jπ/(n+1))`.
/// All entries are positive.
pub fn ground_state(shape: GridShape) -> DVector<f64> {
    let mut v = DVector::zeros(shape.dim());
    for j in 1..=shape.n {
        let sy = (j as f64 * PI / (shape.n as f64 + 1.0)).sin();
        for i in 1..=shape.m {
            let sx = (i as f64 * PI / (shape.m as f64 + 1.0)).sin();
            v[shape.index(i, j)] = sx * sy;
        }
    }
    let norm = v.norm();
    v / norm
}

/// The operator `scale · A` with `A = tridiag(−I_m, L, −I_m)`, `L = tridiag(−1, 4, −1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorA {
    shape: GridShape,
    scale: f64,
    dense: Option<DMatrix<f64>>,
}

impl OperatorA {
    /// Matrix-free operator.
    pub fn new(shape: GridShape, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "operator scale must be positive and finite (got {scale})"
            )));
        }
        Ok(Self {
            shape,
            scale,
            dense: None,
        })
    }

    /// Operator with a dense copy, refusing dimensions above [`DEFAULT_DENSE_CAP`].
    pub fn assemble_dense(shape: GridShape, scale: f64) -> Result<Self> {
        Self::assemble_dense_capped(shape, scale, DEFAULT_DENSE_CAP)
    }

    pub fn assemble_dense_capped(shape: GridShape, scale: f64, cap: usize) -> Result<Self> {
        let mut op = Self::new(shape, scale)?;
        let dim = shape.dim();
        if dim > cap {
            return Err(Error::DenseCapExceeded { dim, cap });
        }
        let (m, n) = (shape.m, shape.n);
        let mut a = DMatrix::zeros(dim, dim);
        for j in 1..=n {
            for i in 1..=m {
                let k = shape.index(i, j);
                a[(k, k)] = 4.0 * scale;
                if i > 1 {
                    a[(k, shape.index(i - 1, j))] = -scale;
                }
                if i < m {
                    a[(k, shape.index(i + 1, j))] = -scale;
                }
                if j > 1 {
                    a[(k, shape.index(i, j - 1))] = -scale;
                }
                if j < n {
                    a[(k, shape.index(i, j + 1))] = -scale;
                }
            }
        }
        op.dense = Some(a);
        Ok(op)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        self.dense.as_ref()
    }

    /// Dense matrix, assembling a fresh copy if none is cached.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        match &self.dense {
            Some(a) => Ok(a.clone()),
            None => Ok(Self::assemble_dense(self.shape, self.scale)?
                .dense
                .expect("assembled")),
        }
    }

    /// Matrix-free stencil application; neighbours outside the grid read as 0.
    pub fn apply_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        let (m, n) = (self.shape.m, self.shape.n);
        debug_assert_eq!(u.len(), m * n);
        let mut out = DVector::zeros(m * n);
        for j in 0..n {
            let base = j * m;
            for i in 0..m {
                let k = base + i;
                let mut s = 4.0 * u[k];
                if i > 0 {
                    s -= u[k - 1];
                }
                if i + 1 < m {
                    s -= u[k + 1];
                }
                if j > 0 {
                    s -= u[k - m];
                }
                if j + 1 < n {
                    s -= u[k + m];
                }
                out[k] = self.scale * s;
            }
        }
        out
    }

    pub fn apply(&self, u: &GridVector) -> Result<GridVector> {
        self.shape.check(&u.shape)?;
        Ok(GridVector {
            shape: self.shape,
            values: self.apply_vec(&u.values),
        })
    }

    /// `uᵀ(scale·A)u` evaluated from grid differences, so it is
    /// non-negative in floating point as well.
    pub fn quadratic_form(&self, u: &DVector<f64>) -> f64 {
        let (m, n) = (self.shape.m, self.shape.n);
        let mut s = 0.0;
        for j in 0..=n {
            for i in 0..m {
                let lo = if j > 0 { u[(j - 1) * m + i] } else { 0.0 };
                let hi = if j < n { u[j * m + i] } else { 0.0 };
                s += (hi - lo) * (hi - lo);
            }
        }
        for j in 0..n {
            for i in 0..=m {
                let lo = if i > 0 { u[j * m + i - 1] } else { 0.0 };
                let hi = if i < m { u[j * m + i] } else { 0.0 };
                s += (hi - lo) * (hi - lo);
            }
        }
        self.scale * s
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigen_analytic(self.shape, self.scale)
    }

    /// Smallest eigenvalue `α₁`.
    pub fn alpha_1(&self) -> f64 {
        let s = self.shape;
        let cx = 2.0 * cos_pi_ratio(1, s.m + 1);
        let cy = 2.0 * cos_pi_ratio(1, s.n + 1);
        self.scale * (4.0 - cx - cy)
    }

    /// Largest eigenvalue.
    pub fn alpha_max(&self) -> f64 {
        let s = self.shape;
        let cx = 2.0 * cos_pi_ratio(s.m, s.m + 1);
        let cy = 2.0 * cos_pi_ratio(s.n, s.n + 1);
        self.scale * (4.0 - cx - cy)
    }
}

/// Write a dense matrix as row-major CSV at full precision.
pub fn write_matrix_csv<W: Write>(a: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    for r in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|c| format!("{:?}", a[(r, c)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(m: usize, n: usize) -> GridShape {
        GridShape::new(m, n).unwrap()
    }

    #[test]
    fn cos_pi_ratio_matches_libm() {
        for d in 1..40 {
            for k in 0..=d {
                let libm = (k as f64 * PI / d as f64).cos();
                assert!((cos_pi_ratio(k, d) - libm).abs() < 1e-15, "{k}/{d}");
            }
        }
        assert_eq!(cos_pi_ratio(1, 3), 0.5);
        assert_eq!(cos_pi_ratio(2, 3), -0.5);
        assert_eq!(cos_pi_ratio(1, 2), 0.0);
        assert_eq!(cos_pi_ratio(4, 6), -0.5);
    }

    #[test]
    fn single_site_is_four() {
        let a = OperatorA::assemble_dense(shape(1, 1), 1.0).unwrap();
        assert_eq!(a.dense().unwrap(), &DMatrix::from_row_slice(1, 1, &[4.0]));
    }

    #[test]
    fn two_by_two_block_matrix() {
        let a = OperatorA::assemble_dense(shape(2, 2), 1.0).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
             4.0, -1.0, -1.0,  0.0,
            -1.0,  4.0,  0.0, -1.0,
            -1.0,  0.0,  4.0, -1.0,
             0.0, -1.0, -1.0,  4.0,
        ]);
        assert_eq!(a.dense().unwrap(), &expected);
    }

    #[test]
    fn single_block_equals_l() {
        let a = OperatorA::assemble_dense(shape(2, 1), 1.0).unwrap();
        assert_eq!(
            a.dense().unwrap(),
            &DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 4.0])
        );
    }

    #[test]
    fn dense_cap_is_enforced() {
        let err = OperatorA::assemble_dense_capped(shape(10, 10), 1.0, 99).unwrap_err();
        assert_eq!(err, Error::DenseCapExceeded { dim: 100, cap: 99 });
    }

    #[test]
    fn stencil_examples() {
        let op = OperatorA::new(shape(1, 1), 1.0).unwrap();
        let u = GridVector::from_vec(shape(1, 1), vec![1.0]).unwrap();
        assert_eq!(op.apply(&u).unwrap().values().as_slice(), &[4.0]);

        let op = OperatorA::new(shape(2, 1), 1.0).unwrap();
        let u = GridVector::from_vec(shape(2, 1), vec![1.0, 1.0]).unwrap();
        assert_eq!(op.apply(&u).unwrap().values().as_slice(), &[3.0, 3.0]);

        let op = OperatorA::new(shape(2, 2), 1.0).unwrap();
        let e1 = GridVector::basis(shape(2, 2), 0);
        assert_eq!(
            op.apply(&e1).unwrap().values().as_slice(),
            &[4.0, -1.0, -1.0, 0.0]
        );
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let op = OperatorA::new(shape(2, 1), 1.0).unwrap();
        let u = GridVector::zeros(shape(1, 2));
        assert!(matches!(op.apply(&u), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn analytic_eigenvalues_small() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&eigen_analytic(shape(1, 1), 1.0), &[4.0]));
        assert!(close(&eigen_analytic(shape(2, 2), 1.0), &[2.0, 4.0, 4.0, 6.0]));
        assert!(close(&eigen_analytic(shape(2, 1), 1.0), &[3.0, 5.0]));
    }

    #[test]
    fn flattening_is_column_block() {
        let s = shape(3, 2);
        assert_eq!(s.index(1, 1), 0);
        assert_eq!(s.index(3, 1), 2);
        assert_eq!(s.index(1, 2), 3);
        assert_eq!(s.site(4), (2, 2));
    }

    #[test]
    fn quadratic_form_matches_matvec() {
        let s = shape(4, 3);
        let op = OperatorA::new(s, 2.5).unwrap();
        let u = DVector::from_fn(12, |k, _| (k as f64 * 0.7).sin());
        let direct = u.dot(&op.apply_vec(&u));
        assert!((op.quadratic_form(&u) - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn ground_state_is_eigenvector() {
        let s = shape(5, 3);
        let op = OperatorA::new(s, 1.0).unwrap();
        let v = ground_state(s);
        let av = op.apply_vec(&v);
        assert!((av - &v * op.alpha_1()).norm() < 1e-12);
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn csv_export_is_row_major() {
        let a = OperatorA::assemble_dense(shape(2, 1), 1.0).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(a.dense().unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "4.0,-1.0\n-1.0,4.0\n");
    }
}
