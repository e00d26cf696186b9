//! Smoothers M with their symmetrized variants.
//!
//! For a nonsingular M the relaxation u <- u + M^{-1}(f - Au) is
//! A-convergent exactly when M + M^T - A is SPD. In that case the two
//! symmetrized smoothers
//!   barM  = M (M + M^T - A)^{-1} M^T
//!   tildM = M^T (M + M^T - A)^{-1} M
//! are SPD and dominate A in the semidefinite order.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseSym, Lu};
use crate::mat::{cg_solve, Csr, Mat};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmootherKind {
    /// M = D / omega
    Jacobi { omega: f64 },
    /// M = lower triangle of A including the diagonal, in row order.
    GaussSeidel,
}

/// A smoother with its symmetrizations and A-convergence certificate.
#[derive(Debug, Clone)]
pub struct SmootherPair {
    pub m: Mat,
    pub kind: Option<SmootherKind>,
    pub a_convergent: bool,
    /// Smallest eigenvalue of M + M^T - A backing the certificate.
    pub certificate_lambda_min: f64,
    m_bar: Option<Mat>,
    m_tilde: Option<Mat>,
}

impl SmootherPair {
    /// Builds the pair for an arbitrary nonsingular M, attaching the
    /// symmetrizations when M + M^T - A is SPD.
    pub fn new(m: Mat, a: &Mat, kind: Option<SmootherKind>) -> Result<Self> {
        if m.rows() != a.rows() || !m.is_square() || !a.is_square() {
            return Err(Error::DimensionMismatch {
                context: "smoother vs matrix",
                left: m.rows(),
                right: a.rows(),
            });
        }
        let w = m.add(&m.transpose()).sub(a);
        let w_sym = DenseSym::from_symmetrize(w)?;
        let lam_min = sym_eig(&w_sym, false)?.min();
        let a_convergent = lam_min > 0.0;
        let (m_bar, m_tilde) = if a_convergent {
            let (mb, mt) = symmetrize_with(&m, &w_sym)?;
            (Some(mb), Some(mt))
        } else {
            (None, None)
        };
        Ok(SmootherPair {
            m,
            kind,
            a_convergent,
            certificate_lambda_min: lam_min,
            m_bar,
            m_tilde,
        })
    }

    pub fn n(&self) -> usize {
        self.m.rows()
    }

    /// barM = M (M + M^T - A)^{-1} M^T; only defined for A-convergent M.
    pub fn m_bar(&self) -> Result<&Mat> {
        self.m_bar.as_ref().ok_or(Error::NotAConvergent)
    }

    /// tildM = M^T (M + M^T - A)^{-1} M; only defined for A-convergent M.
    pub fn m_tilde(&self) -> Result<&Mat> {
        self.m_tilde.as_ref().ok_or(Error::NotAConvergent)
    }

    /// Label for report rows.
    pub fn label(&self) -> String {
        match self.kind {
            Some(SmootherKind::GaussSeidel) => "gs".to_string(),
            Some(SmootherKind::Jacobi { omega }) => format!("jacobi{omega}"),
            None => "custom".to_string(),
        }
    }
}

/// Weighted Jacobi smoother M = diag(A) / omega.
pub fn jacobi(a: &Mat, omega: f64) -> Result<SmootherPair> {
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "jacobi weight must lie in (0, 2), got {omega}"
        )));
    }
    let n = a.rows();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        let d = a[(i, i)];
        if d <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "jacobi needs positive diagonal, a[{i}][{i}] = {d}"
            )));
        }
        m[(i, i)] = d / omega;
    }
    SmootherPair::new(m, a, Some(SmootherKind::Jacobi { omega }))
}

/// Gauss-Seidel smoother: the lower triangle of A including the diagonal.
/// M + M^T - A = diag(A) is SPD for SPD A, so the pair is always
/// A-convergent.
pub fn gauss_seidel(a: &Mat) -> Result<SmootherPair> {
    let n = a.rows();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            m[(i, j)] = a[(i, j)];
        }
    }
    SmootherPair::new(m, a, Some(SmootherKind::GaussSeidel))
}

/// Symmetrized variants of an arbitrary smoother. Errors when M + M^T - A
/// is not SPD.
pub fn symmetrize(m: &Mat, a: &Mat) -> Result<(Mat, Mat)> {
    let w = m.add(&m.transpose()).sub(a);
    let w_sym = DenseSym::from_symmetrize(w)?;
    let lam_min = sym_eig(&w_sym, false)?.min();
    if lam_min <= 0.0 {
        return Err(Error::NotAConvergent);
    }
    symmetrize_with(m, &w_sym)
}

fn symmetrize_with(m: &Mat, w: &DenseSym) -> Result<(Mat, Mat)> {
    let lu = Lu::new(w.mat())?;
    let w_inv_mt = lu.solve_mat(&m.transpose());
    let m_bar = m.matmul(&w_inv_mt).symmetrized();
    let w_inv_m = lu.solve_mat(m);
    let m_tilde = m.transpose().matmul(&w_inv_m).symmetrized();
    Ok((m_bar, m_tilde))
}

/// Matrix-free application of M^{-1} and M^{-T} for the structured kinds,
/// used by the cycle path on sparse levels.
#[derive(Debug, Clone)]
pub struct SmootherAction {
    kind: SmootherKind,
    diag: Vec<f64>,
    lower: Option<Csr>,
    /// M + M^T - A, needed for tildM applications with Jacobi.
    w: Csr,
}

impl SmootherAction {
    pub fn new(a: &Csr, kind: SmootherKind) -> Result<Self> {
        let n = a.rows();
        let diag = a.diagonal();
        if let Some((i, _)) = diag.iter().enumerate().find(|(_, &d)| d <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "smoother needs positive diagonal, entry {i}"
            )));
        }
        let (lower, w) = match kind {
            SmootherKind::GaussSeidel => {
                // M + M^T - A = D
                let w = Csr::from_triplets(n, n, (0..n).map(|i| (i, i, diag[i])));
                (Some(a.lower_triangle()), w)
            }
            SmootherKind::Jacobi { omega } => {
                // M + M^T - A = 2D/omega - A
                let mut t: Vec<(usize, usize, f64)> =
                    (0..n).map(|i| (i, i, 2.0 * diag[i] / omega)).collect();
                for i in 0..n {
                    let (cols, vals) = a.row(i);
                    for (&j, &v) in cols.iter().zip(vals.iter()) {
                        t.push((i, j, -v));
                    }
                }
                (None, Csr::from_triplets(n, n, t))
            }
        };
        Ok(SmootherAction {
            kind,
            diag,
            lower,
            w,
        })
    }

    pub fn kind(&self) -> SmootherKind {
        self.kind
    }

    /// x = M^{-1} b
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self.kind {
            SmootherKind::Jacobi { omega } => b
                .iter()
                .zip(self.diag.iter())
                .map(|(&bi, &di)| omega * bi / di)
                .collect(),
            SmootherKind::GaussSeidel => self.lower.as_ref().unwrap().solve_lower(b),
        }
    }

    /// x = M^{-T} b
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        match self.kind {
            SmootherKind::Jacobi { omega } => b
                .iter()
                .zip(self.diag.iter())
                .map(|(&bi, &di)| omega * bi / di)
                .collect(),
            SmootherKind::GaussSeidel => self.lower.as_ref().unwrap().solve_lower_transpose(b),
        }
    }

    /// y = M x
    fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            SmootherKind::Jacobi { omega } => x
                .iter()
                .zip(self.diag.iter())
                .map(|(&xi, &di)| di / omega * xi)
                .collect(),
            SmootherKind::GaussSeidel => self.lower.as_ref().unwrap().matvec(x),
        }
    }

    fn apply_m_transpose(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            SmootherKind::Jacobi { omega } => x
                .iter()
                .zip(self.diag.iter())
                .map(|(&xi, &di)| di / omega * xi)
                .collect(),
            SmootherKind::GaussSeidel => self.lower.as_ref().unwrap().matvec_transpose(x),
        }
    }

    /// y = tildM x = M^T (M + M^T - A)^{-1} M x. Gauss-Seidel has the
    /// diagonal certificate matrix; the Jacobi certificate 2D/omega - A is
    /// solved by conjugate gradients to near machine precision.
    pub fn apply_m_tilde(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mx = self.apply_m(x);
        let wmx = match self.kind {
            SmootherKind::GaussSeidel => mx
                .iter()
                .zip(self.diag.iter())
                .map(|(&v, &d)| v / d)
                .collect(),
            SmootherKind::Jacobi { .. } => cg_solve(&self.w, &mx, 1e-14, 50_000)?,
        };
        Ok(self.apply_m_transpose(&wmx))
    }
}
