//! SPD model problems the analysis is exercised on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mat::{Csr, Mat, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson1d,
    Poisson2d,
    RandomSpd,
}

/// An SPD test matrix with its provenance.
#[derive(Debug, Clone)]
pub struct ModelProblem {
    pub matrix: Operator,
    pub kind: ProblemKind,
    /// Interior point counts per dimension for the geometric kinds.
    pub grid_shape: Vec<usize>,
    pub seed: u64,
}

impl ModelProblem {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Short deterministic label, used in report instance ids.
    pub fn label(&self) -> String {
        match self.kind {
            ProblemKind::Poisson1d => format!("poisson1d_n{}", self.grid_shape[0]),
            ProblemKind::Poisson2d => {
                format!("poisson2d_{}x{}", self.grid_shape[0], self.grid_shape[1])
            }
            ProblemKind::RandomSpd => format!("randspd_n{}_s{}", self.n(), self.seed),
        }
    }
}

/// 1D Laplacian with the (-1, 2, -1) stencil on `n` interior points.
pub fn poisson_1d(n: usize) -> Result<ModelProblem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "poisson_1d needs n >= 2, got {n}"
        )));
    }
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    Ok(ModelProblem {
        matrix: Operator::Sparse(Csr::from_triplets(n, n, t)),
        kind: ProblemKind::Poisson1d,
        grid_shape: vec![n],
        seed: 0,
    })
}

/// 2D Laplacian with the 5-point stencil on an nx-by-ny interior grid,
/// unknowns ordered lexicographically with x fastest.
pub fn poisson_2d(nx: usize, ny: usize) -> Result<ModelProblem> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!(
            "poisson_2d needs nx, ny >= 2, got {nx}x{ny}"
        )));
    }
    let n = nx * ny;
    let idx = |ix: usize, iy: usize| iy * nx + ix;
    let mut t = Vec::with_capacity(5 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            let i = idx(ix, iy);
            t.push((i, i, 4.0));
            if ix + 1 < nx {
                t.push((i, idx(ix + 1, iy), -1.0));
                t.push((idx(ix + 1, iy), i, -1.0));
            }
            if iy + 1 < ny {
                t.push((i, idx(ix, iy + 1), -1.0));
                t.push((idx(ix, iy + 1), i, -1.0));
            }
        }
    }
    Ok(ModelProblem {
        matrix: Operator::Sparse(Csr::from_triplets(n, n, t)),
        kind: ProblemKind::Poisson2d,
        grid_shape: vec![nx, ny],
        seed: 0,
    })
}

/// Dense SPD matrix Q^T diag(lambda) Q with a seeded random orthogonal Q and
/// log-spaced eigenvalues in [1, target_condition]. Reproducible per seed.
pub fn random_spd(n: usize, target_condition: f64, seed: u64) -> Result<ModelProblem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "random_spd needs n >= 2, got {n}"
        )));
    }
    if !(target_condition >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "random_spd needs target_condition >= 1, got {target_condition}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let q = orthogonalize(&g);
    let lam: Vec<f64> = (0..n)
        .map(|i| target_condition.powf(i as f64 / (n as f64 - 1.0)))
        .collect();
    let mut scaled = q.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= lam[i];
        }
    }
    // A = Q^T diag(lam) Q with Q having orthonormal rows
    let a = q.transpose().matmul(&scaled).symmetrized();
    Ok(ModelProblem {
        matrix: Operator::Dense(a),
        kind: ProblemKind::RandomSpd,
        grid_shape: vec![],
        seed,
    })
}

/// Modified Gram-Schmidt on the rows; the seeded Gaussian input is full rank
/// with probability one, so no re-orthogonalization is attempted.
fn orthogonalize(g: &Mat) -> Mat {
    let n = g.rows();
    let mut q = g.clone();
    for i in 0..n {
        for k in 0..i {
            let mut dot = 0.0;
            for j in 0..n {
                dot += q[(i, j)] * q[(k, j)];
            }
            for j in 0..n {
                let upd = dot * q[(k, j)];
                q[(i, j)] -= upd;
            }
        }
        let mut norm = 0.0;
        for j in 0..n {
            norm += q[(i, j)] * q[(i, j)];
        }
        let norm = norm.sqrt();
        assert!(norm > 1e-8, "degenerate random sample");
        for j in 0..n {
            q[(i, j)] /= norm;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eig, Cholesky, DenseSym};

    #[test]
    fn poisson_1d_stencil() {
        let p = poisson_1d(2).unwrap();
        let d = p.matrix.to_dense(16).unwrap();
        assert_eq!(d.data(), &[2.0, -1.0, -1.0, 2.0]);
        assert!(poisson_1d(1).is_err());
    }

    #[test]
    fn poisson_1d_spectrum() {
        let p = poisson_1d(10).unwrap();
        let s = DenseSym::new(p.matrix.to_dense(64).unwrap()).unwrap();
        let spec = sym_eig(&s, false).unwrap();
        let expect = 2.0 - 2.0 * (std::f64::consts::PI / 11.0).cos();
        assert!((spec.min() - expect).abs() < 1e-12);
    }

    #[test]
    fn poisson_2d_structure() {
        let p = poisson_2d(2, 2).unwrap();
        let d = p.matrix.to_dense(16).unwrap();
        for i in 0..4 {
            assert_eq!(d[(i, i)], 4.0);
        }
        // adjacency: 0-1, 0-2, 1-3, 2-3; no diagonal coupling 0-3 or 1-2
        assert_eq!(d[(0, 1)], -1.0);
        assert_eq!(d[(0, 2)], -1.0);
        assert_eq!(d[(0, 3)], 0.0);
        assert_eq!(d[(1, 2)], 0.0);
    }

    #[test]
    fn poisson_2d_min_eigenvalue() {
        let p = poisson_2d(4, 4).unwrap();
        let s = DenseSym::new(p.matrix.to_dense(64).unwrap()).unwrap();
        let spec = sym_eig(&s, false).unwrap();
        let expect = 8.0 * (std::f64::consts::PI / 10.0).sin().powi(2);
        assert!((spec.min() - expect).abs() < 1e-12);
        // Gershgorin: all eigenvalues below 8
        let p8 = poisson_2d(8, 8).unwrap();
        let s8 = DenseSym::new(p8.matrix.to_dense(64).unwrap()).unwrap();
        assert!(sym_eig(&s8, false).unwrap().max() < 8.0);
    }

    #[test]
    fn poisson_spectra_match_closed_forms() {
        for n in [4usize, 8, 16, 32] {
            let p = poisson_1d(n).unwrap();
            let s = DenseSym::new(p.matrix.to_dense(64).unwrap()).unwrap();
            let spec = sym_eig(&s, false).unwrap();
            for (k, v) in spec.values().iter().enumerate() {
                let expect =
                    2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
                assert!((v - expect).abs() <= 1e-10 * 4.0);
            }
        }
        for n in [3usize, 5] {
            let p = poisson_2d(n, n).unwrap();
            let s = DenseSym::new(p.matrix.to_dense(64).unwrap()).unwrap();
            let spec = sym_eig(&s, false).unwrap();
            let mut expect: Vec<f64> = Vec::new();
            for i in 1..=n {
                for j in 1..=n {
                    let si = (i as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
                    let sj = (j as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
                    expect.push(4.0 * si * si + 4.0 * sj * sj);
                }
            }
            expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (v, e) in spec.values().iter().zip(expect.iter()) {
                assert!((v - e).abs() <= 1e-10 * 8.0);
            }
        }
    }

    #[test]
    fn interior_row_sums_vanish() {
        let p = poisson_2d(5, 5).unwrap();
        let d = p.matrix.to_dense(64).unwrap();
        // interior point of the interior grid: index (2,2) -> 12
        let sum: f64 = d.row(12).iter().sum();
        assert_eq!(sum, 0.0);
    }

    #[test]
    fn random_spd_condition() {
        let p = random_spd(6, 100.0, 7).unwrap();
        let s = DenseSym::new(p.matrix.to_dense(16).unwrap()).unwrap();
        let spec = sym_eig(&s, false).unwrap();
        let cond = spec.max() / spec.min();
        assert!(cond > 99.9 && cond < 100.1, "cond = {cond}");
        Cholesky::new(s.mat()).unwrap();
    }

    #[test]
    fn random_spd_identity_condition() {
        let p = random_spd(5, 1.0, 3).unwrap();
        let s = DenseSym::new(p.matrix.to_dense(16).unwrap()).unwrap();
        let spec = sym_eig(&s, false).unwrap();
        assert!((spec.max() / spec.min() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_spd_deterministic() {
        let a = random_spd(8, 50.0, 42).unwrap();
        let b = random_spd(8, 50.0, 42).unwrap();
        let (da, db) = (a.matrix.to_dense(16).unwrap(), b.matrix.to_dense(16).unwrap());
        assert_eq!(da.data(), db.data());
    }

    #[test]
    fn generated_matrices_pass_spd_certificate() {
        for p in [
            poisson_1d(7).unwrap(),
            poisson_2d(3, 4).unwrap(),
            random_spd(9, 10.0, 1).unwrap(),
        ] {
            let d = p.matrix.to_dense(64).unwrap();
            Cholesky::new(&d).unwrap();
        }
    }
}
