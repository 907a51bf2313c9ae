//! Dense tensors and matrices.
//!
//! Storage is flat with the *first index varying fastest* (the generalized
//! column-major layout), so a matrix is stored column by column. All
//! multi-indices and linear indices crossing the public interface are
//! **1-based**; the two are related by
//!
//! ```text
//! linear = 1 + sum_n (i_n - 1) * prod_{j < n} I_j
//! ```

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Dense tensor: extents plus a flat value buffer, first index fastest.
///
/// The number of modes `N` may be zero (a scalar holds exactly one value).
/// All values are finite; construction rejects NaN and infinities.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from extents and a flat buffer in storage order.
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in dims {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::Shape(format!(
                "dims {dims:?} require {len} values, got {}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("non-finite value in tensor".into()));
        }
        Ok(Self { dims, values })
    }

    /// All-zero tensor of the given extents.
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; len],
        }
    }

    /// Scalar tensor (zero modes).
    pub fn scalar(v: f64) -> Self {
        Self {
            dims: vec![],
            values: vec![v],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat buffer in storage order (first index fastest).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Element at a 1-based multi-index. Panics if out of range.
    pub fn get(&self, multi: &[usize]) -> f64 {
        let lin = linear_index(multi, &self.dims).expect("multi-index out of range");
        self.values[lin - 1]
    }

    /// Sets the element at a 1-based multi-index. Panics if out of range.
    pub fn set(&mut self, multi: &[usize], v: f64) {
        let lin = linear_index(multi, &self.dims).expect("multi-index out of range");
        self.values[lin - 1] = v;
    }

    /// Frobenius norm: square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Reorders modes: mode `k` of the result is mode `perm[k]` of `self`
    /// (0-based, `perm` a permutation of `0..N`).
    pub(crate) fn permuted(&self, perm: &[usize]) -> DenseTensor {
        debug_assert_eq!(perm.len(), self.dims.len());
        let n = self.dims.len();
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        if n <= 1 || perm.iter().enumerate().all(|(k, &p)| k == p) {
            return DenseTensor {
                dims: new_dims,
                values: self.values.clone(),
            };
        }
        let tstr = strides(&new_dims);
        // pos_of[m] = position of source mode m in the result
        let mut pos_of = vec![0usize; n];
        for (tpos, &m) in perm.iter().enumerate() {
            pos_of[m] = tpos;
        }
        let step: Vec<usize> = (0..n).map(|m| tstr[pos_of[m]]).collect();
        let mut out = vec![0.0; self.values.len()];
        let mut midx = vec![0usize; n];
        let mut toff = 0usize;
        for &v in &self.values {
            out[toff] = v;
            for k in 0..n {
                midx[k] += 1;
                toff += step[k];
                if midx[k] < self.dims[k] {
                    break;
                }
                toff -= self.dims[k] * step[k];
                midx[k] = 0;
            }
        }
        DenseTensor {
            dims: new_dims,
            values: out,
        }
    }
}

/// Dense matrix, stored column-major (a two-mode [`DenseTensor`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix requires {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("non-finite value in matrix".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i + i * n] = 1.0;
        }
        m
    }

    /// Builds from a row-major literal, which reads naturally in source.
    pub fn from_rows(rows: usize, cols: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != rows * cols {
            return Err(Error::Shape("row literal length mismatch".into()));
        }
        let mut values = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                values[r + c * rows] = row_major[r * cols + c];
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column-major flat buffer.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Element at 1-based (row, col). Panics if out of range.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(
            r >= 1 && r <= self.rows && c >= 1 && c <= self.cols,
            "matrix index out of range"
        );
        self.values[(r - 1) + (c - 1) * self.rows]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r >= 1 && r <= self.rows && c >= 1 && c <= self.cols,
            "matrix index out of range"
        );
        self.values[(r - 1) + (c - 1) * self.rows] = v;
    }

    #[inline]
    pub(crate) fn at(&self, r0: usize, c0: usize) -> f64 {
        self.values[r0 + c0 * self.rows]
    }

    #[inline]
    pub(crate) fn at_mut(&mut self, r0: usize, c0: usize) -> &mut f64 {
        &mut self.values[r0 + c0 * self.rows]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.values[c + r * self.cols] = self.at(r, c);
            }
        }
        out
    }

    /// `self * rhs` via a cache-friendly dgemm kernel.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        gemm(
            self.rows,
            self.cols,
            rhs.cols,
            &self.values,
            &rhs.values,
            &mut out.values,
        );
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Reinterprets as a two-mode tensor (same buffer).
    pub fn into_tensor(self) -> DenseTensor {
        DenseTensor {
            dims: vec![self.rows, self.cols],
            values: self.values,
        }
    }

    /// Two-mode tensor -> matrix. Errors unless `t.ndim() == 2`.
    pub fn from_tensor(t: DenseTensor) -> Result<DenseMatrix> {
        if t.ndim() != 2 {
            return Err(Error::Shape(format!("expected 2 modes, got {}", t.ndim())));
        }
        Ok(DenseMatrix {
            rows: t.dims[0],
            cols: t.dims[1],
            values: t.values,
        })
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.cols, &self.values)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> DenseMatrix {
        DenseMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.as_slice().to_vec(),
        }
    }
}

/// Column-major `C = A(m x k) * B(k x n)`, accumulating into zeroed `c`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

/// `gemm` with explicit element strides on `a`, for multiplying against a
/// transposed or embedded view without copying it out. `b` and `c` stay
/// column-major.
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    c: &mut [f64],
) {
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

/// Strides of a first-index-fastest layout: `stride[0] = 1`,
/// `stride[k] = stride[k-1] * dims[k-1]`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(dims.len());
    let mut acc = 1usize;
    for &d in dims {
        s.push(acc);
        acc *= d;
    }
    s
}

/// Maps a 1-based multi-index to its 1-based linear index under the
/// first-index-fastest convention.
pub fn linear_index(multi: &[usize], dims: &[usize]) -> Result<usize> {
    if multi.len() != dims.len() {
        return Err(Error::Index(format!(
            "multi-index has {} entries for {} modes",
            multi.len(),
            dims.len()
        )));
    }
    let mut lin = 1usize;
    let mut stride = 1usize;
    for (n, (&i, &d)) in multi.iter().zip(dims).enumerate() {
        if i == 0 || i > d {
            return Err(Error::Index(format!(
                "index {i} out of range 1..={d} at mode {}",
                n + 1
            )));
        }
        lin += (i - 1) * stride;
        stride *= d;
    }
    Ok(lin)
}

/// Inverse of [`linear_index`]: recovers the 1-based multi-index.
pub fn multi_index(linear: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if linear == 0 || linear > total {
        return Err(Error::Index(format!(
            "linear index {linear} out of range 1..={total}"
        )));
    }
    let mut rem = linear - 1;
    let mut multi = Vec::with_capacity(dims.len());
    for &d in dims {
        multi.push(rem % d + 1);
        rem /= d;
    }
    Ok(multi)
}

/// Unfolds a tensor into a matrix: rows indexed by the linear index over
/// `row_modes`, columns over `col_modes` (both 1-based mode lists; together
/// they must use every mode exactly once).
pub fn unfold(t: &DenseTensor, row_modes: &[usize], col_modes: &[usize]) -> Result<DenseMatrix> {
    let n = t.ndim();
    let perm = check_mode_split(n, row_modes, col_modes)?;
    let p = t.permuted(&perm);
    let rows: usize = row_modes.iter().map(|&m| t.dims[m - 1]).product();
    let cols: usize = col_modes.iter().map(|&m| t.dims[m - 1]).product();
    Ok(DenseMatrix {
        rows,
        cols,
        values: p.values,
    })
}

/// Inverse of [`unfold`]: rebuilds the tensor of extents `dims` from its
/// `(row_modes, col_modes)` unfolding.
pub fn refold(
    m: &DenseMatrix,
    row_modes: &[usize],
    col_modes: &[usize],
    dims: &[usize],
) -> Result<DenseTensor> {
    let n = dims.len();
    let perm = check_mode_split(n, row_modes, col_modes)?;
    let rows: usize = row_modes.iter().map(|&k| dims[k - 1]).product();
    let cols: usize = col_modes.iter().map(|&k| dims[k - 1]).product();
    if m.rows != rows || m.cols != cols {
        return Err(Error::Shape(format!(
            "unfolding is {}x{}, expected {rows}x{cols} for dims {dims:?}",
            m.rows, m.cols
        )));
    }
    let perm_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let t = DenseTensor {
        dims: perm_dims,
        values: m.values.clone(),
    };
    // invert the permutation applied by unfold
    let mut inv = vec![0usize; n];
    for (tpos, &src) in perm.iter().enumerate() {
        inv[src] = tpos;
    }
    Ok(t.permuted(&inv))
}

/// Validates that `row_modes ++ col_modes` is a permutation of `1..=n` and
/// returns it 0-based.
fn check_mode_split(n: usize, row_modes: &[usize], col_modes: &[usize]) -> Result<Vec<usize>> {
    let mut perm: Vec<usize> = Vec::with_capacity(n);
    perm.extend(row_modes.iter().map(|&m| m.wrapping_sub(1)));
    perm.extend(col_modes.iter().map(|&m| m.wrapping_sub(1)));
    if perm.len() != n {
        return Err(Error::Mode(format!(
            "mode lists cover {} modes, tensor has {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in &perm {
        if p >= n {
            return Err(Error::Mode(format!(
                "mode {} out of range 1..={n}",
                p.wrapping_add(1)
            )));
        }
        if seen[p] {
            return Err(Error::Mode(format!("mode {} listed twice", p + 1)));
        }
        seen[p] = true;
    }
    Ok(perm)
}

/// Kronecker product: `(a ⊗ b)[(i-1)K + k, (j-1)L + l] = a[i,j] b[k,l]`
/// for `b` of shape `K x L`.
pub fn kronecker(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = DenseMatrix::zeros(rows, cols);
    for ja in 0..a.cols {
        for jb in 0..b.cols {
            let c = ja * b.cols + jb;
            for ia in 0..a.rows {
                let av = a.at(ia, ja);
                let base = ia * b.rows;
                for ib in 0..b.rows {
                    out.values[(base + ib) + c * rows] = av * b.at(ib, jb);
                }
            }
        }
    }
    out
}

/// Khatri–Rao (column-wise Kronecker) product; `a` and `b` must have the
/// same number of columns.
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "khatri_rao column mismatch: {} vs {}",
            a.cols, b.cols
        )));
    }
    let rows = a.rows * b.rows;
    let mut out = DenseMatrix::zeros(rows, a.cols);
    for c in 0..a.cols {
        for ia in 0..a.rows {
            let av = a.at(ia, c);
            let base = ia * b.rows;
            for ib in 0..b.rows {
                out.values[(base + ib) + c * rows] = av * b.at(ib, c);
            }
        }
    }
    Ok(out)
}

/// Hadamard (entrywise) product of equal-shape matrices.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Shape(format!(
            "hadamard shape mismatch: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        values,
    })
}

/// Default relative eigenvalue cutoff for [`psd_pinv`] and rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Moore–Penrose pseudoinverse of a symmetric positive semi-definite matrix
/// via eigendecomposition, together with its numerical rank.
///
/// The input is symmetrized first. Eigenvalues above `rel_tol * max|λ|` are
/// inverted, the rest are zeroed; an eigenvalue below `-rel_tol * max|λ|`
/// means the matrix is not PSD and is reported as an error.
pub fn psd_pinv(g: &DenseMatrix, rel_tol: f64) -> Result<(DenseMatrix, usize)> {
    if g.rows != g.cols {
        return Err(Error::Shape(format!(
            "psd_pinv needs a square matrix, got {}x{}",
            g.rows, g.cols
        )));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::Param(format!("rel_tol must be >= 0, got {rel_tol}")));
    }
    let n = g.rows;
    let mut sym = g.to_nalgebra();
    let gt = sym.transpose();
    sym = (sym + gt) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let cutoff = rel_tol * scale;
    let mut rank = 0usize;
    let mut inv = nalgebra::DVector::zeros(n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -cutoff {
            return Err(Error::NotPsd { min_eig: l, scale });
        }
        if l > cutoff {
            inv[i] = 1.0 / l;
            rank += 1;
        }
    }
    // phi = V diag(inv) V^T, exactly symmetric by construction
    let v = &eig.eigenvectors;
    let mut phi = DenseMatrix::zeros(n, n);
    for c in 0..n {
        for r in 0..=c {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[(r, k)] * inv[k] * v[(c, k)];
            }
            *phi.at_mut(r, c) = acc;
            *phi.at_mut(c, r) = acc;
        }
    }
    Ok((phi, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(dims: Vec<usize>) -> DenseTensor {
        let len: usize = dims.iter().product();
        DenseTensor::new(dims, (1..=len).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn linear_index_matches_hand_examples() {
        assert_eq!(linear_index(&[2, 2], &[2, 3]).unwrap(), 4);
        assert_eq!(linear_index(&[2, 3], &[2, 3]).unwrap(), 6);
        assert_eq!(linear_index(&[1, 1, 1], &[4, 5, 6]).unwrap(), 1);
        assert_eq!(linear_index(&[4, 5, 6], &[4, 5, 6]).unwrap(), 120);
        assert_eq!(linear_index(&[], &[]).unwrap(), 1);
    }

    #[test]
    fn linear_index_rejects_out_of_range() {
        assert!(linear_index(&[3, 1], &[2, 3]).is_err());
        assert!(linear_index(&[0, 1], &[2, 3]).is_err());
        assert!(linear_index(&[1], &[2, 3]).is_err());
    }

    #[test]
    fn multi_index_inverts_linear_index() {
        assert_eq!(multi_index(4, &[2, 3]).unwrap(), vec![2, 2]);
        assert_eq!(multi_index(1, &[4, 5, 6]).unwrap(), vec![1, 1, 1]);
        assert!(multi_index(0, &[2, 2]).is_err());
        assert!(multi_index(5, &[2, 2]).is_err());
        let dims = [3, 4, 2, 5];
        for lin in 1..=120 {
            let m = multi_index(lin, &dims).unwrap();
            assert_eq!(linear_index(&m, &dims).unwrap(), lin);
        }
    }

    #[test]
    fn storage_is_first_index_fastest() {
        let t = counting(vec![2, 3]);
        // column-major: (1,1),(2,1),(1,2),...
        assert_eq!(t.get(&[1, 1]), 1.0);
        assert_eq!(t.get(&[2, 1]), 2.0);
        assert_eq!(t.get(&[1, 2]), 3.0);
        assert_eq!(t.get(&[2, 3]), 6.0);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0]).is_err());
        assert!(DenseTensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(DenseTensor::new(vec![], vec![2.5]).is_ok());
    }

    #[test]
    fn unfold_places_entries_by_linear_index() {
        let t = counting(vec![2, 3, 4]);
        let m = unfold(&t, &[2], &[3, 1]).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 8));
        for i1 in 1..=2 {
            for i2 in 1..=3 {
                for i3 in 1..=4 {
                    let col = linear_index(&[i3, i1], &[4, 2]).unwrap();
                    assert_eq!(m.get(i2, col), t.get(&[i1, i2, i3]));
                }
            }
        }
    }

    #[test]
    fn unfold_refold_round_trip() {
        let t = counting(vec![2, 3, 4]);
        for (rows, cols) in [
            (vec![1, 2, 3], vec![]),
            (vec![], vec![1, 2, 3]),
            (vec![2], vec![3, 1]),
            (vec![3, 1], vec![2]),
        ] {
            let m = unfold(&t, &rows, &cols).unwrap();
            let back = refold(&m, &rows, &cols, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn unfold_rejects_bad_mode_lists() {
        let t = counting(vec![2, 3, 4]);
        assert!(unfold(&t, &[1, 2], &[2, 3]).is_err());
        assert!(unfold(&t, &[1], &[2]).is_err());
        assert!(unfold(&t, &[1, 4], &[2]).is_err());
        assert!(unfold(&t, &[0, 1], &[2]).is_err());
    }

    #[test]
    #[rustfmt::skip]
    fn kronecker_matches_hand_computation() {
        let a = DenseMatrix::from_rows(2, 2, &[
            1.0, 2.0,
            3.0, 4.0,
        ]).unwrap();
        let b = DenseMatrix::from_rows(1, 2, &[5.0, 6.0]).unwrap();
        let k = kronecker(&a, &b);
        let expect = DenseMatrix::from_rows(2, 4, &[
            5.0, 6.0, 10.0, 12.0,
            15.0, 18.0, 20.0, 24.0,
        ]).unwrap();
        assert_eq!(k, expect);
    }

    #[test]
    fn kronecker_row_index_has_second_factor_fastest() {
        let a = DenseMatrix::from_rows(2, 1, &[2.0, 3.0]).unwrap();
        let b = DenseMatrix::from_rows(3, 1, &[1.0, 10.0, 100.0]).unwrap();
        let k = kronecker(&a, &b);
        assert_eq!(k.values(), &[2.0, 20.0, 200.0, 3.0, 30.0, 300.0]);
    }

    #[test]
    #[rustfmt::skip]
    fn khatri_rao_matches_columnwise_kronecker() {
        let a = DenseMatrix::from_rows(2, 2, &[
            1.0, 2.0,
            3.0, 4.0,
        ]).unwrap();
        let b = DenseMatrix::from_rows(2, 2, &[
            5.0, 6.0,
            7.0, 8.0,
        ]).unwrap();
        let kr = khatri_rao(&a, &b).unwrap();
        let expect = DenseMatrix::from_rows(4, 2, &[
            5.0, 12.0,
            7.0, 16.0,
            15.0, 24.0,
            21.0, 32.0,
        ]).unwrap();
        assert_eq!(kr, expect);
        assert!(khatri_rao(&a, &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn hadamard_is_entrywise() {
        let a = DenseMatrix::from_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseMatrix::from_rows(2, 2, &[2.0, 0.5, -1.0, 2.0]).unwrap();
        let h = hadamard(&a, &b).unwrap();
        assert_eq!(
            h,
            DenseMatrix::from_rows(2, 2, &[2.0, 1.0, -3.0, 8.0]).unwrap()
        );
        assert!(hadamard(&a, &DenseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn frobenius_norm_matches_flat_two_norm() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!((t.frobenius_norm() - 5.0).abs() < 1e-15);
        assert_eq!(DenseTensor::zeros(vec![3, 3]).frobenius_norm(), 0.0);
    }

    #[test]
    fn matmul_small() {
        let a = DenseMatrix::from_rows(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_rows(3, 1, &[1.0, 0.0, -1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[-2.0, -2.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn psd_pinv_identity_and_diagonal() {
        let (phi, rank) = psd_pinv(&DenseMatrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 3);
        for r in 1..=3 {
            for c in 1..=3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((phi.get(r, c) - want).abs() < 1e-12);
            }
        }

        let g = DenseMatrix::from_rows(2, 2, &[2.0, 0.0, 0.0, 0.0]).unwrap();
        let (phi, rank) = psd_pinv(&g, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 1);
        assert!((phi.get(1, 1) - 0.5).abs() < 1e-14);
        assert_eq!(phi.get(1, 2), 0.0);
        assert_eq!(phi.get(2, 2), 0.0);
    }

    #[test]
    fn psd_pinv_rejects_indefinite_input() {
        let g = DenseMatrix::from_rows(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        match psd_pinv(&g, 1e-12) {
            Err(Error::NotPsd { .. }) => {}
            other => panic!("expected NotPsd, got {other:?}"),
        }
        assert!(psd_pinv(&DenseMatrix::zeros(2, 3), 1e-12).is_err());
    }

    #[test]
    fn psd_pinv_zero_matrix_has_rank_zero() {
        let (phi, rank) = psd_pinv(&DenseMatrix::zeros(3, 3), 1e-12).unwrap();
        assert_eq!(rank, 0);
        assert!(phi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psd_pinv_satisfies_moore_penrose_identities() {
        // G = A^T A for a fixed rank-deficient A (col 3 = col 1 + col 2)
        let a = DenseMatrix::from_rows(
            4,
            3,
            &[
                1.0, 2.0, 3.0, //
                0.5, -1.0, -0.5, //
                2.0, 0.0, 2.0, //
                -1.0, 1.0, 0.0,
            ],
        )
        .unwrap();
        let g = a.transpose().matmul(&a).unwrap();
        let (phi, rank) = psd_pinv(&g, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(rank, 2);
        let gpg = g.matmul(&phi).unwrap().matmul(&g).unwrap();
        let pgp = phi.matmul(&g).unwrap().matmul(&phi).unwrap();
        for r in 1..=3 {
            for c in 1..=3 {
                assert!((gpg.get(r, c) - g.get(r, c)).abs() < 1e-10);
                assert!((pgp.get(r, c) - phi.get(r, c)).abs() < 1e-10);
                // G Phi symmetric
                let gp = g.matmul(&phi).unwrap();
                assert!((gp.get(r, c) - gp.get(c, r)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permuted_reorders_modes() {
        let t = counting(vec![2, 3, 4]);
        let p = t.permuted(&[2, 0, 1]);
        assert_eq!(p.dims(), &[4, 2, 3]);
        for i1 in 1..=2 {
            for i2 in 1..=3 {
                for i3 in 1..=4 {
                    assert_eq!(p.get(&[i3, i1, i2]), t.get(&[i1, i2, i3]));
                }
            }
        }
    }
}
