//! Dense and sparse matrix storage.
//!
//! `Mat` is the dense row-major workhorse used by all spectral analysis.
//! `Csr` holds the sparse form used to build model problems, transfer
//! operators, and the matrix-free cycle path. `Operator` carries either
//! representation across module boundaries.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds from a row-major flat slice.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "flat data length mismatch");
        Mat {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = entries[i];
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product via the blocked dgemm kernel.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul dimension mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                rhs.cols,
                1.0,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                rhs.data.as_ptr(),
                rhs.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                rhs.cols as isize,
                1,
            );
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += row[j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    /// max_ij |a_ij|
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// max_ij |a_ij - b_ij|
    pub fn max_abs_diff(&self, rhs: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(rhs.data.iter())
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// max_ij |a_ij - a_ji| for a square matrix.
    pub fn max_asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// (A + A^T)/2
    pub fn symmetrized(&self) -> Mat {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn to_csr(&self) -> Csr {
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self[(i, j)];
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            vals,
        }
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets; duplicate entries are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet out of bounds");
            by_row[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in by_row.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = row[k].1;
                let mut k2 = k + 1;
                while k2 < row.len() && row[k2].0 == j {
                    v += row[k2].1;
                    k2 += 1;
                }
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
                k = k2;
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Csr::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// (column indices, values) of row i, sorted by column.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = A^T x without forming the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "matvec_transpose dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols];
        for &j in &self.col_idx {
            counts[j] += 1;
        }
        let mut row_ptr = vec![0usize; self.cols + 1];
        for j in 0..self.cols {
            row_ptr[j + 1] = row_ptr[j] + counts[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = row_ptr.clone();
        for i in 0..self.rows {
            let (cols, v) = self.row(i);
            for (&j, &x) in cols.iter().zip(v.iter()) {
                let slot = next[j];
                col_idx[slot] = i;
                vals[slot] = x;
                next[j] += 1;
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Sparse product A * B.
    pub fn matmul(&self, rhs: &Csr) -> Csr {
        assert_eq!(self.cols, rhs.rows, "csr matmul dimension mismatch");
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        // dense accumulator per row with a touched-column list
        let mut acc = vec![0.0f64; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.rows {
            touched.clear();
            let (a_cols, a_vals) = self.row(i);
            for (&k, &av) in a_cols.iter().zip(a_vals.iter()) {
                let (b_cols, b_vals) = rhs.row(k);
                for (&j, &bv) in b_cols.iter().zip(b_vals.iter()) {
                    if acc[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    acc[j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    col_idx.push(j);
                    vals.push(acc[j]);
                }
                acc[j] = 0.0;
            }
            row_ptr.push(col_idx.len());
        }
        Csr {
            rows: self.rows,
            cols: rhs.cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Lower triangle including the diagonal.
    pub fn lower_triangle(&self) -> Csr {
        let mut t = Vec::new();
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                if j <= i {
                    t.push((i, j, v));
                }
            }
        }
        Csr::from_triplets(self.rows, self.cols, t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        assert!(self.rows == self.cols);
        (0..self.rows).map(|i| self.get(i, i)).collect()
    }

    /// Forward substitution with a lower-triangular matrix stored in-place.
    /// Rows must contain the diagonal entry.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.rows == self.cols && self.rows == b.len());
        let mut x = vec![0.0; self.rows];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut acc = b[i];
            let mut diag = 0.0;
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                if j < i {
                    acc -= v * x[j];
                } else if j == i {
                    diag = v;
                }
            }
            assert!(diag != 0.0, "zero diagonal in triangular solve");
            x[i] = acc / diag;
        }
        x
    }

    /// Backward substitution with the transpose of a lower-triangular matrix
    /// (i.e. solves L^T x = b given L).
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.rows == self.cols && self.rows == b.len());
        let mut x = b.to_vec();
        for i in (0..self.rows).rev() {
            let (cols, vals) = self.row(i);
            let mut diag = 0.0;
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                if j == i {
                    diag = v;
                }
            }
            assert!(diag != 0.0, "zero diagonal in triangular solve");
            x[i] /= diag;
            let xi = x[i];
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                if j < i {
                    x[j] -= v * xi;
                }
            }
        }
        x
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// A square operator in whichever representation it was built in.
#[derive(Debug, Clone)]
pub enum Operator {
    Dense(Mat),
    Sparse(Csr),
}

impl Operator {
    pub fn n(&self) -> usize {
        match self {
            Operator::Dense(m) => m.rows(),
            Operator::Sparse(c) => c.rows(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Operator::Dense(m) => m.matvec(x),
            Operator::Sparse(c) => c.matvec(x),
        }
    }

    /// Dense view, refusing above the configured cap.
    pub fn to_dense(&self, dense_cap: usize) -> Result<Mat> {
        let n = self.n();
        if n > dense_cap {
            return Err(Error::DenseCapExceeded { n, cap: dense_cap });
        }
        Ok(match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(c) => c.to_dense(),
        })
    }

    pub fn to_csr(&self) -> Csr {
        match self {
            Operator::Dense(m) => m.to_csr(),
            Operator::Sparse(c) => c.clone(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Operator::Dense(_))
    }
}

/// Conjugate gradient solve for a sparse SPD system, to a relative residual
/// tolerance. Used by the matrix-free estimation paths; the dense pipelines
/// use direct factorizations.
pub fn cg_solve(a: &Csr, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.rows(), n);
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if rs.sqrt() <= rel_tol * norm_b {
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::InvariantViolation(
                "conjugate gradients hit a nonpositive curvature direction".into(),
            ));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rs.sqrt() <= rel_tol * norm_b * 10.0 {
        return Ok(x);
    }
    Err(Error::InvariantViolation(format!(
        "conjugate gradients stalled at relative residual {:.3e}",
        rs.sqrt() / norm_b
    )))
}

/// Writes a symmetric matrix in MatrixMarket coordinate format
/// (1-based indices, lower triangle).
pub fn write_matrix_market<W: std::io::Write>(w: &mut W, a: &Csr) -> std::io::Result<()> {
    assert!(a.rows() == a.cols(), "symmetric export needs a square matrix");
    let mut entries = Vec::new();
    for i in 0..a.rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals.iter()) {
            if j <= i {
                entries.push((i + 1, j + 1, v));
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.rows(), a.cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.17e}", i, j, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_row_slice(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn csr_roundtrip_and_matvec() {
        let d = Mat::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let s = d.to_csr();
        assert_eq!(s.nnz(), 7);
        assert_eq!(s.to_dense(), d);
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(s.matvec(&x), d.matvec(&x));
        assert_eq!(s.matvec_transpose(&x), d.transpose().matvec(&x));
    }

    #[test]
    fn csr_matmul_matches_dense() {
        let a = Mat::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let b = Mat::from_row_slice(3, 2, &[0.0, 1.0, 4.0, 0.0, 0.0, 5.0]);
        let c = a.to_csr().matmul(&b.to_csr());
        assert_eq!(c.to_dense(), a.matmul(&b));
    }

    #[test]
    fn triangular_solves() {
        let l = Mat::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 1.0, 3.0, 0.0, 0.0, -1.0, 4.0]).to_csr();
        let b = vec![2.0, 7.0, 2.0];
        let x = l.solve_lower(&b);
        // L x = b
        let r = l.matvec(&x);
        for (ri, bi) in r.iter().zip(b.iter()) {
            assert!((ri - bi).abs() < 1e-14);
        }
        let y = l.solve_lower_transpose(&b);
        let lt = l.transpose();
        let r2 = lt.matvec(&y);
        for (ri, bi) in r2.iter().zip(b.iter()) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn matrix_market_format() {
        let a = Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]).to_csr();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "%%MatrixMarket matrix coordinate real symmetric"
        );
        assert_eq!(lines.next().unwrap(), "2 2 3");
        // lower triangle: (1,1), (2,1), (2,2)
        assert!(text.contains("2 1 "));
    }
}
