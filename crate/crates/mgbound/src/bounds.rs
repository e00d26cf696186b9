//! Two-sided convergence estimates for the inexact coarse-grid correction.
//!
//! The quality of the substituted coarse matrix B_c enters through the
//! extreme eigenvalues r1 <= r2 of the pencil B_c^{-1} A_c and through
//! theta = ||I - A_c^{-1} B_c||_2. Combined with the two-grid constant
//! K_TG and the extreme eigenvalues of tildM^{-1} A, these produce lower
//! and upper bounds that sandwich the measured factor ||E_ITG||_A, a
//! piecewise Notay-style upper bound, the Falgout-Schroder theta-bounds,
//! and sharpened variants of the latter.

use crate::error::{Error, Result};
use crate::linalg::{
    gen_sym_eig, lambda_min_plus, psd_sqrt, spd_functions, spectral_norm, sym_eig, Cholesky,
    DenseSym,
};
use crate::mat::Mat;
use crate::twogrid::{EnergyNorm, TwoGridOperators, TwoGridSetup};

/// Tie tolerance for classifying r1, r2 against 1. Boundary ties take the
/// "<= 1" branch; the bound formulas are continuous across the boundary.
const CASE_TIE_TOL: f64 = 1e-12;

/// Which side of 1 the coarse pencil extremes fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseCase {
    /// r2 <= 1: the substituted coarse solve underestimates nothing.
    C1,
    /// r1 <= 1 < r2.
    C2,
    /// 1 < r1.
    C3,
}

impl std::fmt::Display for CoarseCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoarseCase::C1 => write!(f, "C1"),
            CoarseCase::C2 => write!(f, "C2"),
            CoarseCase::C3 => write!(f, "C3"),
        }
    }
}

/// Spectral ingredients of every bound.
#[derive(Debug, Clone, Copy)]
pub struct SpectralQuantities {
    /// Smallest eigenvalue of B_c^{-1} A_c.
    pub r1: f64,
    /// Largest eigenvalue of B_c^{-1} A_c.
    pub r2: f64,
    /// Two-grid approximation constant.
    pub k_tg: f64,
    /// Smallest eigenvalue of tildM^{-1} A.
    pub lam_min_ma: f64,
    /// Largest eigenvalue of tildM^{-1} A.
    pub lam_max_ma: f64,
    /// Smallest positive eigenvalue of tildM^{-1} A Pi_A.
    pub lam_min_plus: f64,
    /// ||I - A_c^{-1} B_c||_2.
    pub theta: f64,
}

impl SpectralQuantities {
    pub fn case(&self) -> CoarseCase {
        if self.r2 <= 1.0 + CASE_TIE_TOL {
            CoarseCase::C1
        } else if self.r1 <= 1.0 + CASE_TIE_TOL {
            CoarseCase::C2
        } else {
            CoarseCase::C3
        }
    }
}

/// A condition-number bound paired with a convergence-factor bound.
#[derive(Debug, Clone, Copy)]
pub struct FsBounds {
    pub cond: f64,
    pub factor: f64,
}

/// Everything evaluated for one two-grid instance.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub case_id: CoarseCase,
    pub lower: f64,
    pub upper: f64,
    pub notay_upper: f64,
    /// None when theta >= 1 (the theta-bounds are inapplicable).
    pub fs: Option<FsBounds>,
    pub improved_fs: Option<FsBounds>,
    pub measured: f64,
    pub measured_kappa: f64,
    pub quantities: SpectralQuantities,
}

impl BoundReport {
    /// The sandwich property lower <= measured <= upper within slack.
    pub fn sandwich_holds(&self, slack: f64) -> bool {
        self.lower - slack <= self.measured && self.measured <= self.upper + slack
    }
}

/// Measures every spectral quantity of a setup. `zero_tol` is the relative
/// kernel cut separating the rank-n_c positive part of tildM^{-1} A Pi_A
/// from roundoff zeros.
pub fn compute_quantities(
    setup: &TwoGridSetup,
    ops: &TwoGridOperators,
    zero_tol: f64,
) -> Result<SpectralQuantities> {
    let coarse_pencil = gen_sym_eig(
        &DenseSym::from_symmetrize(setup.a_c.clone())?,
        &DenseSym::from_symmetrize(setup.b_c.clone())?,
    )?;
    let (r1, r2) = (coarse_pencil.min(), coarse_pencil.max());

    let m_tilde = setup.smoother.m_tilde()?;
    let k_tg = crate::twogrid::k_tg(&setup.a, m_tilde, &setup.p)?;

    let smoother_pencil = gen_sym_eig(
        &DenseSym::from_symmetrize(setup.a.clone())?,
        &DenseSym::from_symmetrize(m_tilde.clone())?,
    )?;
    let (lam_min_ma, lam_max_ma) = (smoother_pencil.min(), smoother_pencil.max());

    let lam_min_plus = lambda_min_plus_ma_pi(setup, ops, zero_tol)?;

    let chol_ac = Cholesky::new(&setup.a_c)?;
    let n_c = setup.a_c.rows();
    let theta = spectral_norm(&Mat::identity(n_c).sub(&chol_ac.solve_mat(&setup.b_c)))?;

    let q = SpectralQuantities {
        r1,
        r2,
        k_tg,
        lam_min_ma,
        lam_max_ma,
        lam_min_plus,
        theta,
    };
    validate_quantities(&q)?;
    Ok(q)
}

/// lambda_min_plus(tildM^{-1} A Pi_A) through the SPD congruence
/// tildM^{-1/2} (A Pi_A) tildM^{-1/2}, which shares the full spectrum of
/// the product and is symmetric positive semidefinite of rank n_c.
fn lambda_min_plus_ma_pi(
    setup: &TwoGridSetup,
    ops: &TwoGridOperators,
    zero_tol: f64,
) -> Result<f64> {
    let m_tilde = setup.smoother.m_tilde()?;
    let roots = spd_functions(&DenseSym::from_symmetrize(m_tilde.clone())?)?;
    let a_pi = setup.a.matmul(&ops.pi_a).symmetrized();
    let s = roots.inv_sqrt.matmul(&a_pi).matmul(&roots.inv_sqrt);
    lambda_min_plus(&DenseSym::from_symmetrize(s)?, zero_tol)
}

fn validate_quantities(q: &SpectralQuantities) -> Result<()> {
    let ok = q.r1 > 0.0
        && q.r1 <= q.r2
        && q.lam_min_ma > 0.0
        && q.lam_min_ma <= q.lam_max_ma
        && q.lam_max_ma <= 1.0 + 1e-10
        && q.lam_min_plus > 0.0
        && q.lam_min_plus <= 1.0 + 1e-10
        && q.k_tg >= 1.0 - 1e-10
        && q.theta >= 0.0;
    if !ok {
        return Err(Error::InvariantViolation(format!(
            "spectral quantities out of range: {q:?}"
        )));
    }
    Ok(())
}

/// Extreme eigenvalues of (I - tildM^{-1}A)(I - Pi_A) and of
/// (I - tildM^{-1}A) Pi_A, by direct eigensolves of the congruent
/// symmetric forms W^{1/2} A (I - Pi_A) W^{1/2} and W^{1/2} A Pi_A W^{1/2}
/// with W = A^{-1} - tildM^{-1}.
///
/// Returns (min, max) for the first product then (min, max) for the second.
/// These equal (0, 1 - 1/K_TG, 0, 1 - lambda_min_plus) analytically; the
/// acceptance suite checks that identity against the values computed here.
pub fn error_split_extremes(setup: &TwoGridSetup, ops: &TwoGridOperators) -> Result<[f64; 4]> {
    let n = setup.n();
    let a_sym = DenseSym::from_symmetrize(setup.a.clone())?;
    let a_inv = spd_functions(&a_sym)?.inv;
    let m_tilde = setup.smoother.m_tilde()?;
    let mt_inv = spd_functions(&DenseSym::from_symmetrize(m_tilde.clone())?)?.inv;
    let w = a_inv.sub(&mt_inv);
    let w_half = psd_sqrt(&DenseSym::from_symmetrize(w)?, 1e-8)?;

    let a_pi = setup.a.matmul(&ops.pi_a).symmetrized();
    let a_comp = setup.a.sub(&a_pi);

    let s1 = w_half.matmul(&a_comp).matmul(&w_half);
    let spec1 = sym_eig(&DenseSym::from_symmetrize(s1)?, false)?;
    let s2 = w_half.matmul(&a_pi).matmul(&w_half);
    let spec2 = sym_eig(&DenseSym::from_symmetrize(s2)?, false)?;
    let _ = n;
    Ok([spec1.min(), spec1.max(), spec2.min(), spec2.max()])
}

/// Case-split two-sided estimate for the measured factor ||E_ITG||_A.
/// Returns (case, lower, upper), both bounds clamped to [0, inf).
pub fn two_sided_bounds(q: &SpectralQuantities) -> (CoarseCase, f64, f64) {
    let k = q.k_tg;
    let eps = q.lam_min_ma;
    let lam_max = q.lam_max_ma;
    let mu = q.lam_min_plus;
    let (r1, r2) = (q.r1, q.r2);

    let l1 = 1.0 - (1.0 / k).min(eps + r2 * (1.0 - mu));
    let u1 = 1.0 - r1 / k - (1.0 - r1) * eps;
    let l2 = 1.0 - lam_max.min(r2 / k - (r2 - 1.0) * eps);
    let u2 = (r2 - 1.0) * (1.0 - mu);
    let l3 = r1 - 1.0 - (r1 * mu - eps).min((r1 - 1.0) * lam_max);
    let u3 = (1.0 - 1.0 / k).max((r2 - 1.0) * (1.0 - mu));

    let case = q.case();
    let (lower, upper) = match case {
        CoarseCase::C1 => (l1, u1),
        CoarseCase::C2 => (l2, u1.max(u2)),
        CoarseCase::C3 => (l2.max(l3), u3),
    };
    (case, lower.max(0.0), upper.max(0.0))
}

/// Piecewise upper bound driven only by r1, r2, and K_TG (Notay's
/// estimate). The case-split upper bound never exceeds it.
pub fn notay_bound(q: &SpectralQuantities) -> f64 {
    let k = q.k_tg;
    match q.case() {
        CoarseCase::C1 => 1.0 - q.r1 / k,
        CoarseCase::C2 => (1.0 - q.r1 / k).max(q.r2 - 1.0),
        CoarseCase::C3 => (1.0 - 1.0 / k).max(q.r2 - 1.0),
    }
    .max(0.0)
}

/// Falgout-Schroder theta-bounds: condition number and factor. Inapplicable
/// (None) when theta >= 1.
pub fn fs_bounds(q: &SpectralQuantities) -> Option<FsBounds> {
    if q.theta >= 1.0 {
        return None;
    }
    let t = q.theta;
    let k = q.k_tg;
    Some(FsBounds {
        cond: (1.0 + t) / (1.0 - t) * k,
        factor: (t / (1.0 - t)).max(1.0 - 1.0 / ((1.0 + t) * k)),
    })
}

/// Sharpened theta-bounds using the case split and the smoother spectrum.
/// Componentwise below [`fs_bounds`] whenever theta < 1.
pub fn improved_fs_bounds(q: &SpectralQuantities) -> Option<FsBounds> {
    if q.theta >= 1.0 {
        return None;
    }
    let t = q.theta;
    let k = q.k_tg;
    let eps = q.lam_min_ma;
    let mu = q.lam_min_plus;
    let base = (1.0 + t) / (1.0 - t) * k;
    let cond = match q.case() {
        CoarseCase::C1 => (1.0 - t) / (1.0 + t * k * eps) * base,
        CoarseCase::C2 => (1.0 - t * mu) / (1.0 + t * k * eps) * base,
        CoarseCase::C3 => (1.0 - t * mu) / (1.0 + t) * base,
    };
    let c1_factor = 1.0 - (1.0 + t * k * eps) / ((1.0 + t) * k);
    let spray = (t - t * mu) / (1.0 - t);
    let factor = match q.case() {
        CoarseCase::C1 => c1_factor,
        CoarseCase::C2 => c1_factor.max(spray),
        CoarseCase::C3 => (1.0 - 1.0 / k).max(spray),
    };
    Some(FsBounds {
        cond,
        factor: factor.max(0.0),
    })
}

/// Condition number of the preconditioned system, measured from the
/// assembled inverse preconditioner.
pub fn measured_kappa(ops: &TwoGridOperators, energy: &EnergyNorm) -> Result<f64> {
    let spec = energy.preconditioned_spectrum(&ops.b_itg_inv)?;
    if spec.min() <= 0.0 {
        return Err(Error::InvariantViolation(format!(
            "preconditioned spectrum not positive: lambda_min = {:.3e}",
            spec.min()
        )));
    }
    Ok(spec.max() / spec.min())
}

/// Runs the full bound pipeline for one setup.
pub fn evaluate(
    setup: &TwoGridSetup,
    ops: &TwoGridOperators,
    zero_tol: f64,
) -> Result<BoundReport> {
    let q = compute_quantities(setup, ops, zero_tol)?;
    let energy = EnergyNorm::new(&setup.a)?;
    let measured = energy.norm(&ops.e_itg)?;
    let kappa = measured_kappa(ops, &energy)?;
    let (case_id, lower, upper) = two_sided_bounds(&q);
    Ok(BoundReport {
        case_id,
        lower,
        upper,
        notay_upper: notay_bound(&q),
        fs: fs_bounds(&q),
        improved_fs: improved_fs_bounds(&q),
        measured,
        measured_kappa: kappa,
        quantities: q,
    })
}
