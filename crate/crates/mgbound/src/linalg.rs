//! Dense symmetric eigen-machinery.
//!
//! Everything measured downstream (convergence factors, condition numbers,
//! bound ingredients) reduces to symmetric eigenvalue problems solved here.
//! The solver is a Householder reduction to tridiagonal form followed by the
//! implicit-shift QL iteration, fully deterministic for a given input.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Relative asymmetry allowed by [`DenseSym::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative kernel cut used by [`lambda_min_plus`] by default.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// A square matrix certified symmetric at construction.
#[derive(Debug, Clone)]
pub struct DenseSym {
    mat: Mat,
}

impl DenseSym {
    /// Wraps a matrix after checking finiteness and symmetry
    /// (max|S - S^T| <= 1e-12 * max|S|).
    pub fn new(mat: Mat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                context: "DenseSym requires a square matrix",
                left: mat.rows(),
                right: mat.cols(),
            });
        }
        mat.check_finite()?;
        let asym = mat.max_asymmetry();
        let tol = SYMMETRY_TOL * mat.max_abs();
        if asym > tol {
            return Err(Error::NotSymmetric {
                max_asym: asym,
                tol,
            });
        }
        Ok(DenseSym { mat })
    }

    /// Averages S with its transpose and wraps the result. Intended for
    /// matrices symmetric by construction up to roundoff; rejects inputs
    /// whose asymmetry exceeds 1e-8 * max|S|.
    pub fn from_symmetrize(mat: Mat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                context: "DenseSym requires a square matrix",
                left: mat.rows(),
                right: mat.cols(),
            });
        }
        mat.check_finite()?;
        let asym = mat.max_asymmetry();
        let tol = 1e-8 * mat.max_abs();
        if asym > tol {
            return Err(Error::NotSymmetric {
                max_asym: asym,
                tol,
            });
        }
        Ok(DenseSym {
            mat: mat.symmetrized(),
        })
    }

    pub fn n(&self) -> usize {
        self.mat.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    pub fn into_mat(self) -> Mat {
        self.mat
    }
}

/// Eigenvalues in ascending order, with optional orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: Option<Mat>,
}

impl Spectrum {
    pub fn values(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> Option<&Mat> {
        self.eigenvectors.as_ref()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    /// Spectral radius max|lambda|.
    pub fn radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }
}

#[inline]
fn sign_of(magnitude: f64, sign_source: f64) -> f64 {
    if sign_source >= 0.0 {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
/// On exit `d` holds the diagonal and `e[1..]` the subdiagonal
/// (`e[0]` is zero). With `accumulate`, `a` is overwritten by the
/// orthogonal matrix Q with A = Q T Q^T.
fn householder_tridiag(a: &mut Mat, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let n = a.rows();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[(i, k)].abs();
            }
            if scale == 0.0 {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    a[(i, k)] /= scale;
                    h += a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[(i, l)] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    if accumulate {
                        a[(j, i)] = a[(i, j)] / h;
                    }
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a[(i, j)];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] -= f * e[k] + g * a[(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    if accumulate {
        for i in 0..n {
            if d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += a[(i, k)] * a[(k, j)];
                    }
                    for k in 0..i {
                        let upd = g * a[(k, i)];
                        a[(k, j)] -= upd;
                    }
                }
            }
            d[i] = a[(i, i)];
            a[(i, i)] = 1.0;
            for j in 0..i {
                a[(j, i)] = 0.0;
                a[(i, j)] = 0.0;
            }
        }
    } else {
        for i in 0..n {
            d[i] = a[(i, i)];
        }
    }
}

/// Implicit-shift QL iteration on a tridiagonal matrix. Eigenvalues land in
/// `d`; if `z` is given its columns are rotated into eigenvectors.
fn tridiag_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Mat>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    // absolute deflation floor: matrices with large numerical kernels have
    // neighboring diagonal entries near zero, where a purely relative test
    // never fires; deflating at eps * ||T|| is backward stable
    let anorm = d
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        + e.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd.max(anorm) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::EigNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + sign_of(r, g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zm[(k, i + 1)];
                        zm[(k, i + 1)] = s * zm[(k, i)] + c * f;
                        zm[(k, i)] = c * zm[(k, i)] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn sort_ascending(d: &mut [f64], z: Option<&mut Mat>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("NaN eigenvalue"));
    let sorted: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    d.copy_from_slice(&sorted);
    if let Some(z) = z {
        let old = z.clone();
        for (new_col, &old_col) in order.iter().enumerate() {
            for row in 0..n {
                z[(row, new_col)] = old[(row, old_col)];
            }
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
///
/// With `want_vectors` the returned eigenvector matrix Q is verified
/// column-orthonormal (max entry of Q^T Q - I below 1e-10) and each pair is
/// verified against the residual bound ||S v - lambda v||_2 <= 1e-9 ||S||_2.
pub fn sym_eig(s: &DenseSym, want_vectors: bool) -> Result<Spectrum> {
    let n = s.n();
    let mut work = s.mat().clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    householder_tridiag(&mut work, &mut d, &mut e, want_vectors);
    if want_vectors {
        tridiag_ql(&mut d, &mut e, Some(&mut work))?;
        sort_ascending(&mut d, Some(&mut work));
        verify_eig_pairs(s.mat(), &d, &work)?;
        Ok(Spectrum {
            eigenvalues: d,
            eigenvectors: Some(work),
        })
    } else {
        tridiag_ql(&mut d, &mut e, None)?;
        sort_ascending(&mut d, None);
        Ok(Spectrum {
            eigenvalues: d,
            eigenvectors: None,
        })
    }
}

fn verify_eig_pairs(s: &Mat, d: &[f64], q: &Mat) -> Result<()> {
    let n = d.len();
    // orthonormality
    let gram = q.transpose().matmul(q);
    let ortho_err = gram.max_abs_diff(&Mat::identity(n));
    if ortho_err > 1e-10 {
        return Err(Error::InvariantViolation(format!(
            "eigenvector orthonormality defect {ortho_err:.3e}"
        )));
    }
    // residual per pair: columns of S Q - Q diag(d)
    let sq = s.matmul(q);
    let norm_s = d.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let tol = 1e-9 * norm_s;
    for j in 0..n {
        let mut res = 0.0;
        for i in 0..n {
            let r = sq[(i, j)] - d[j] * q[(i, j)];
            res += r * r;
        }
        let res = res.sqrt();
        if res > tol && res > 1e-300 {
            return Err(Error::InvariantViolation(format!(
                "eigenpair {j} residual {res:.3e} exceeds {tol:.3e}"
            )));
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    /// Factors S = L L^T; fails with the offending pivot index if S is not
    /// numerically positive definite.
    pub fn new(s: &Mat) -> Result<Self> {
        assert!(s.is_square());
        let n = s.rows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut diag = s[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::NotSpd { pivot: j });
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn n(&self) -> usize {
        self.l.rows()
    }

    pub fn l(&self) -> &Mat {
        &self.l
    }

    /// X = L^{-1} B
    pub fn forward_mat(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.rows(), n);
        let m = b.cols();
        let mut x = b.clone();
        for i in 0..n {
            let (done, rest) = x.split_rows_mut(i);
            let xi = &mut rest[..m];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik != 0.0 {
                    let xk = &done[k * m..(k + 1) * m];
                    for (a, b) in xi.iter_mut().zip(xk.iter()) {
                        *a -= lik * b;
                    }
                }
            }
            let lii = self.l[(i, i)];
            for a in xi.iter_mut() {
                *a /= lii;
            }
        }
        x
    }

    /// X = L^{-T} B
    pub fn backward_mat(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.rows(), n);
        let m = b.cols();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let (head, tail) = x.split_rows_mut(i + 1);
            let xi = &mut head[i * m..];
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki != 0.0 {
                    let xk = &tail[(k - i - 1) * m..(k - i) * m];
                    for (a, b) in xi.iter_mut().zip(xk.iter()) {
                        *a -= lki * b;
                    }
                }
            }
            let lii = self.l[(i, i)];
            for a in xi.iter_mut() {
                *a /= lii;
            }
        }
        x
    }

    /// X = S^{-1} B
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        self.backward_mat(&self.forward_mat(b))
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let bm = Mat::from_row_slice(b.len(), 1, b);
        let x = self.solve_mat(&bm);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    pub fn inverse(&self) -> Mat {
        self.solve_mat(&Mat::identity(self.n()))
    }
}

/// LU factorization with partial pivoting, for the nonsymmetric solves
/// (smoother applications, theta products).
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Mat) -> Result<Self> {
        assert!(a.is_square());
        let n = a.rows();
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                piv.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let upd = f * lu[(k, j)];
                        lu[(i, j)] -= upd;
                    }
                }
            }
        }
        Ok(Lu { lu, piv })
    }

    /// X = A^{-1} B
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let n = self.lu.rows();
        assert_eq!(b.rows(), n);
        let m = b.cols();
        // apply permutation
        let mut x = Mat::zeros(n, m);
        for i in 0..n {
            let src = self.piv[i];
            x.row_mut(i).copy_from_slice(b.row(src));
        }
        // forward: L y = P b (unit diagonal)
        for i in 0..n {
            let (done, rest) = x.split_rows_mut(i);
            let xi = &mut rest[..m];
            for k in 0..i {
                let f = self.lu[(i, k)];
                if f != 0.0 {
                    let xk = &done[k * m..(k + 1) * m];
                    for (a, b) in xi.iter_mut().zip(xk.iter()) {
                        *a -= f * b;
                    }
                }
            }
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let (head, tail) = x.split_rows_mut(i + 1);
            let xi = &mut head[i * m..];
            for k in (i + 1)..n {
                let f = self.lu[(i, k)];
                if f != 0.0 {
                    let xk = &tail[(k - i - 1) * m..(k - i) * m];
                    for (a, b) in xi.iter_mut().zip(xk.iter()) {
                        *a -= f * b;
                    }
                }
            }
            let uii = self.lu[(i, i)];
            for a in xi.iter_mut() {
                *a /= uii;
            }
        }
        x
    }
}

/// Eigenvalues of the SPD pencil (A, B), i.e. of B^{-1} A, in ascending
/// order, computed by Cholesky congruence: with B = L L^T the pencil has the
/// spectrum of the symmetric matrix L^{-1} A L^{-T}.
pub fn gen_sym_eig(a: &DenseSym, b: &DenseSym) -> Result<Spectrum> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            context: "pencil dimensions",
            left: a.n(),
            right: b.n(),
        });
    }
    let chol = Cholesky::new(b.mat())?;
    let f = chol.forward_mat(a.mat());
    let c = chol.forward_mat(&f.transpose()).transpose();
    let c = DenseSym::from_symmetrize(c)?;
    sym_eig(&c, false)
}

/// S^{1/2}, S^{-1/2}, S^{-1} of an SPD matrix via its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdFunctions {
    pub sqrt: Mat,
    pub inv_sqrt: Mat,
    pub inv: Mat,
}

/// Spectral functions of an SPD matrix. Fails as "not numerically SPD"
/// when lambda_min <= n * eps * lambda_max.
pub fn spd_functions(s: &DenseSym) -> Result<SpdFunctions> {
    let n = s.n();
    let spec = sym_eig(s, true)?;
    let lam = spec.values();
    let lam_max = spec.max();
    if spec.min() <= (n as f64) * f64::EPSILON * lam_max {
        return Err(Error::NotNumericallySpd {
            lambda_min: spec.min(),
            lambda_max: lam_max,
        });
    }
    let q = spec.vectors().expect("vectors requested");
    let apply = |f: &dyn Fn(f64) -> f64| -> Mat {
        let mut scaled = q.clone();
        for j in 0..n {
            let fj = f(lam[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled.matmul(&q.transpose()).symmetrized()
    };
    Ok(SpdFunctions {
        sqrt: apply(&|x| x.sqrt()),
        inv_sqrt: apply(&|x| 1.0 / x.sqrt()),
        inv: apply(&|x| 1.0 / x),
    })
}

/// Square root of a symmetric positive semidefinite matrix, clamping
/// eigenvalues in [-neg_tol * ||S||_2, 0) to zero.
pub fn psd_sqrt(s: &DenseSym, neg_tol: f64) -> Result<Mat> {
    let n = s.n();
    let spec = sym_eig(s, true)?;
    let scale = spec.radius();
    if spec.min() < -neg_tol * scale {
        return Err(Error::NotSpsd {
            lambda: spec.min(),
            tol: neg_tol * scale,
        });
    }
    let q = spec.vectors().expect("vectors requested");
    let mut scaled = q.clone();
    for j in 0..n {
        let fj = spec.values()[j].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    Ok(scaled.matmul(&q.transpose()).symmetrized())
}

/// Smallest eigenvalue strictly above `zero_tol * ||S||_2` of a symmetric
/// positive semidefinite matrix.
pub fn lambda_min_plus(s: &DenseSym, zero_tol: f64) -> Result<f64> {
    let spec = sym_eig(s, false)?;
    let scale = spec.radius();
    let threshold = zero_tol * scale;
    if spec.min() < -threshold {
        return Err(Error::NotSpsd {
            lambda: spec.min(),
            tol: threshold,
        });
    }
    spec.values()
        .iter()
        .copied()
        .find(|&v| v > threshold)
        .ok_or(Error::ZeroMatrix { threshold })
}

/// Largest singular value of a general square matrix, via the symmetric
/// eigenproblem for B^T B.
pub fn spectral_norm(b: &Mat) -> Result<f64> {
    b.check_finite()?;
    let g = b.transpose().matmul(b);
    let g = DenseSym::from_symmetrize(g)?;
    let spec = sym_eig(&g, false)?;
    Ok(spec.max().max(0.0).sqrt())
}

impl Mat {
    /// Splits the backing storage at the start of row `i`.
    pub(crate) fn split_rows_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let cols = self.cols();
        let data: &mut [f64] = self.data_mut();
        data.split_at_mut(i * cols)
    }
}
