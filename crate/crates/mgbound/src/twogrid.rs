//! Two-grid operator assembly and exact convergence measurement.
//!
//! A setup combines an SPD matrix, an A-convergent smoother, a full-rank
//! prolongation, and an SPD coarse matrix B_c. The assembled operators are
//! the error propagators of the two-grid scheme with exact (A_c) and
//! substituted (B_c) coarse solves, the induced preconditioner inverses,
//! and the two projections driving the analysis.

use crate::error::{Error, Result};
use crate::linalg::{
    gen_sym_eig, spd_functions, spectral_norm, sym_eig, Cholesky, DenseSym, Lu,
};
use crate::mat::Mat;
use crate::smoothers::SmootherPair;
use crate::transfer::{galerkin, Prolongation};

/// Tolerance for the internal algebraic consistency checks of `assemble`.
const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TwoGridSetup {
    pub a: Mat,
    pub smoother: SmootherPair,
    pub p: Mat,
    pub a_c: Mat,
    pub b_c: Mat,
}

impl TwoGridSetup {
    /// Validates dimensions and SPD certificates; A_c is derived by the
    /// Galerkin product.
    pub fn new(a: Mat, smoother: SmootherPair, p: &Prolongation, b_c: Mat) -> Result<Self> {
        let n = a.rows();
        if smoother.n() != n {
            return Err(Error::DimensionMismatch {
                context: "smoother vs matrix",
                left: smoother.n(),
                right: n,
            });
        }
        if p.n_fine() != n {
            return Err(Error::DimensionMismatch {
                context: "prolongation rows vs matrix",
                left: p.n_fine(),
                right: n,
            });
        }
        if p.n_coarse() >= n {
            return Err(Error::InvalidArgument(format!(
                "coarse space must be strictly smaller: n_c = {} vs n = {}",
                p.n_coarse(),
                n
            )));
        }
        if !smoother.a_convergent {
            return Err(Error::NotAConvergent);
        }
        if b_c.rows() != p.n_coarse() {
            return Err(Error::DimensionMismatch {
                context: "coarse matrix vs prolongation",
                left: b_c.rows(),
                right: p.n_coarse(),
            });
        }
        Cholesky::new(&a)?;
        Cholesky::new(&b_c)?;
        let p_dense = p.dense();
        let a_c = galerkin(&a, &p_dense);
        Cholesky::new(&a_c)?;
        Ok(TwoGridSetup {
            a,
            smoother,
            p: p_dense,
            a_c,
            b_c,
        })
    }

    /// Setup with the exact coarse matrix (B_c = A_c).
    pub fn exact(a: Mat, smoother: SmootherPair, p: &Prolongation) -> Result<Self> {
        let p_dense = p.dense();
        let a_c = galerkin(&a, &p_dense);
        Self::new(a, smoother, p, a_c)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

/// Assembled dense operators of a two-grid setup.
#[derive(Debug, Clone)]
pub struct TwoGridOperators {
    /// A-orthogonal projection P A_c^{-1} P^T A onto Range(P).
    pub pi_a: Mat,
    /// tildM-orthogonal projection P (P^T tildM P)^{-1} P^T tildM.
    pub pi_mtilde: Mat,
    /// Error propagator with the exact coarse solve.
    pub e_tg: Mat,
    /// Error propagator with the substituted coarse solve.
    pub e_itg: Mat,
    /// Inverse of the exact two-grid preconditioner.
    pub b_tg_inv: Mat,
    /// Inverse of the substituted two-grid preconditioner.
    pub b_itg_inv: Mat,
}

/// Forms every two-grid operator and verifies the defining algebraic
/// identities (projection idempotence, propagator/preconditioner
/// consistency) to 1e-10.
pub fn assemble(setup: &TwoGridSetup) -> Result<TwoGridOperators> {
    let n = setup.n();
    let ident = Mat::identity(n);
    let a = &setup.a;
    let p = &setup.p;
    let m = &setup.smoother.m;

    let lu_m = Lu::new(m)?;
    let lu_mt = Lu::new(&m.transpose())?;
    let n_pre = ident.sub(&lu_m.solve_mat(a));
    let n_post = ident.sub(&lu_mt.solve_mat(a));

    let chol_ac = Cholesky::new(&setup.a_c)?;
    let chol_bc = Cholesky::new(&setup.b_c)?;
    let pt_a = p.transpose().matmul(a);
    let pi_a = p.matmul(&chol_ac.solve_mat(&pt_a));
    let g_itg = ident.sub(&p.matmul(&chol_bc.solve_mat(&pt_a)));

    let e_tg = n_post.matmul(&ident.sub(&pi_a)).matmul(&n_pre);
    let e_itg = n_post.matmul(&g_itg).matmul(&n_pre);

    let m_tilde = setup.smoother.m_tilde()?;
    let mt_p = m_tilde.matmul(p);
    let gram = p.transpose().matmul(&mt_p);
    let chol_gram = Cholesky::new(&gram)?;
    let pi_mtilde = p.matmul(&chol_gram.solve_mat(&mt_p.transpose()));

    // barM^{-1} = M^{-T} (M + M^T - A) M^{-1}
    let w = m.add(&m.transpose()).sub(a);
    let m_inv = lu_m.solve_mat(&ident);
    let m_bar_inv = lu_mt.solve_mat(&w.matmul(&m_inv)).symmetrized();

    let corr_bc = p.matmul(&chol_bc.solve_mat(&p.transpose()));
    let b_itg_inv = m_bar_inv
        .add(&n_post.matmul(&corr_bc).matmul(&n_post.transpose()))
        .symmetrized();
    let corr_ac = p.matmul(&chol_ac.solve_mat(&p.transpose()));
    let b_tg_inv = m_bar_inv
        .add(&n_post.matmul(&corr_ac).matmul(&n_post.transpose()))
        .symmetrized();

    let ops = TwoGridOperators {
        pi_a,
        pi_mtilde,
        e_tg,
        e_itg,
        b_tg_inv,
        b_itg_inv,
    };
    verify_assembly(setup, &ops)?;
    Ok(ops)
}

fn verify_assembly(setup: &TwoGridSetup, ops: &TwoGridOperators) -> Result<()> {
    let n = setup.n();
    let ident = Mat::identity(n);
    let checks = [
        (
            "projection Pi_A idempotent",
            ops.pi_a.matmul(&ops.pi_a).max_abs_diff(&ops.pi_a),
        ),
        (
            "projection Pi_tildM idempotent",
            ops.pi_mtilde
                .matmul(&ops.pi_mtilde)
                .max_abs_diff(&ops.pi_mtilde),
        ),
        (
            "(I - Pi_A) P vanishes",
            ident.sub(&ops.pi_a).matmul(&setup.p).max_abs(),
        ),
        (
            "E_ITG = I - B_ITG^{-1} A",
            ops.e_itg
                .max_abs_diff(&ident.sub(&ops.b_itg_inv.matmul(&setup.a))),
        ),
        (
            "E_TG = I - B_TG^{-1} A",
            ops.e_tg
                .max_abs_diff(&ident.sub(&ops.b_tg_inv.matmul(&setup.a))),
        ),
    ];
    for (what, defect) in checks {
        if defect > CONSISTENCY_TOL {
            return Err(Error::InvariantViolation(format!(
                "{what}: defect {defect:.3e}"
            )));
        }
    }
    Ok(())
}

/// Cached square roots of an SPD matrix for repeated energy-norm work.
#[derive(Debug, Clone)]
pub struct EnergyNorm {
    pub sqrt: Mat,
    pub inv_sqrt: Mat,
}

impl EnergyNorm {
    pub fn new(a: &Mat) -> Result<Self> {
        let f = spd_functions(&DenseSym::from_symmetrize(a.clone())?)?;
        Ok(EnergyNorm {
            sqrt: f.sqrt,
            inv_sqrt: f.inv_sqrt,
        })
    }

    /// Similarity transform A^{1/2} E A^{-1/2}.
    pub fn similarity(&self, e: &Mat) -> Mat {
        self.sqrt.matmul(e).matmul(&self.inv_sqrt)
    }

    /// ||E||_A through the symmetrized similarity form. When the transform
    /// is symmetric (self-adjoint E in the A-inner product) this is the
    /// spectral radius from a symmetric eigensolve; otherwise it falls back
    /// to the largest singular value.
    pub fn norm(&self, e: &Mat) -> Result<f64> {
        let s = self.similarity(e);
        let scale = s.max_abs();
        if s.max_asymmetry() <= 1e-8 * scale.max(1e-300) {
            let spec = sym_eig(&DenseSym::from_symmetrize(s)?, false)?;
            Ok(spec.radius())
        } else {
            spectral_norm(&s)
        }
    }

    /// Eigenvalues of B^{-1} A given the inverse preconditioner, via the
    /// congruence A^{1/2} B^{-1} A^{1/2}.
    pub fn preconditioned_spectrum(&self, b_inv: &Mat) -> Result<crate::linalg::Spectrum> {
        let s = self.sqrt.matmul(b_inv).matmul(&self.sqrt);
        sym_eig(&DenseSym::from_symmetrize(s)?, false)
    }
}

/// ||E||_A for a single operator. Builds the matrix square roots on the
/// fly; use [`EnergyNorm`] to amortize them.
pub fn conv_factor(e: &Mat, a: &Mat) -> Result<f64> {
    EnergyNorm::new(a)?.norm(e)
}

/// Two-grid approximation constant: the largest eigenvalue of the pencil
/// (tildM (I - Pi_tildM), A). The exact two-grid convergence factor is
/// 1 - 1/K_TG.
pub fn k_tg(a: &Mat, m_tilde: &Mat, p: &Mat) -> Result<f64> {
    let mt_p = m_tilde.matmul(p);
    let gram = p.transpose().matmul(&mt_p);
    let chol = Cholesky::new(&gram)?;
    let s = m_tilde.sub(&mt_p.matmul(&chol.solve_mat(&mt_p.transpose())));
    let spec = gen_sym_eig(
        &DenseSym::from_symmetrize(s)?,
        &DenseSym::from_symmetrize(a.clone())?,
    )?;
    Ok(spec.max())
}

/// Approximation constant for an explicit coarse projection Q = P R with
/// R P = I: the largest eigenvalue of ((I-Q)^T tildM (I-Q), A). Always at
/// least K_TG, with equality for the tildM-weighted choice of R.
pub fn k_ideal(a: &Mat, m_tilde: &Mat, p: &Mat, r: &Mat) -> Result<f64> {
    let n_c = p.cols();
    let rp = r.matmul(p);
    let defect = rp.max_abs_diff(&Mat::identity(n_c));
    if defect > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "R P must equal the identity; defect {defect:.3e}"
        )));
    }
    let x = Mat::identity(p.rows()).sub(&p.matmul(r));
    let s = x.transpose().matmul(m_tilde).matmul(&x);
    let spec = gen_sym_eig(
        &DenseSym::from_symmetrize(s)?,
        &DenseSym::from_symmetrize(a.clone())?,
    )?;
    Ok(spec.max())
}
