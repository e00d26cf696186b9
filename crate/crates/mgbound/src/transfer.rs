//! Prolongation construction and Galerkin coarse operators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Cholesky, DenseSym};
use crate::mat::{Csr, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMethod {
    Geometric1d,
    Geometric2d,
    AmgDirect,
}

/// Coarse/fine labels per fine point. Geometric prolongations carry the
/// stride-2 split; AMG carries the Ruge-Stuben one.
#[derive(Debug, Clone)]
pub struct CfSplit {
    /// true = coarse point
    pub is_coarse: Vec<bool>,
    /// fine index of each coarse point, ascending
    pub coarse_index: Vec<usize>,
}

impl CfSplit {
    pub fn n_coarse(&self) -> usize {
        self.coarse_index.len()
    }
}

/// Full-column-rank prolongation with its construction metadata.
#[derive(Debug, Clone)]
pub struct Prolongation {
    p: Csr,
    pub method: TransferMethod,
    pub split: CfSplit,
    /// Set when the coarsening degenerated to P = I (no strong connections).
    pub degenerate: bool,
}

impl Prolongation {
    /// Validates full column rank (smallest singular value above
    /// 1e-10 times the largest) and n_c < n.
    pub fn new(p: Csr, method: TransferMethod, split: CfSplit) -> Result<Self> {
        Self::with_degeneracy(p, method, split, false)
    }

    fn with_degeneracy(
        p: Csr,
        method: TransferMethod,
        split: CfSplit,
        degenerate: bool,
    ) -> Result<Self> {
        if p.cols() >= p.rows() && !degenerate {
            return Err(Error::InvalidArgument(format!(
                "prolongation must coarsen: n_c = {} vs n = {}",
                p.cols(),
                p.rows()
            )));
        }
        let dense = p.to_dense();
        let gram = dense.transpose().matmul(&dense);
        let spec = sym_eig(&DenseSym::from_symmetrize(gram)?, false)?;
        let smax = spec.max().max(0.0).sqrt();
        let smin = spec.min().max(0.0).sqrt();
        if smin <= 1e-10 * smax {
            return Err(Error::RankDeficient {
                ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        Ok(Prolongation {
            p,
            method,
            split,
            degenerate,
        })
    }

    pub fn csr(&self) -> &Csr {
        &self.p
    }

    pub fn dense(&self) -> Mat {
        self.p.to_dense()
    }

    pub fn n_fine(&self) -> usize {
        self.p.rows()
    }

    pub fn n_coarse(&self) -> usize {
        self.p.cols()
    }
}

/// Exact and substituted coarse matrices for a two-grid setup.
#[derive(Debug, Clone)]
pub struct CoarsePair {
    /// Galerkin matrix P^T A P.
    pub a_c: Mat,
    /// SPD stand-in actually used in the correction step.
    pub b_c: Mat,
}

/// Linear interpolation on a 1D grid with coarse points at every second
/// fine point (1-based positions 2, 4, ...). Requires odd n.
pub fn geometric_interp_1d(n: usize) -> Result<Prolongation> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "geometric 1D interpolation needs odd n >= 3 so coarse points sit at every second point; got n = {n} (adjust n)"
        )));
    }
    let n_c = (n - 1) / 2;
    let mut t = Vec::with_capacity(3 * n_c);
    for j in 0..n_c {
        let center = 2 * j + 1;
        t.push((center - 1, j, 0.5));
        t.push((center, j, 1.0));
        t.push((center + 1, j, 0.5));
    }
    let p = Csr::from_triplets(n, n_c, t);
    let is_coarse: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
    let coarse_index: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
    Prolongation::new(
        p,
        TransferMethod::Geometric1d,
        CfSplit {
            is_coarse,
            coarse_index,
        },
    )
}

/// Bilinear interpolation as the tensor product of the 1D stencil, matching
/// the lexicographic unknown order of the 2D model problem (x fastest).
pub fn geometric_interp_2d(nx: usize, ny: usize) -> Result<Prolongation> {
    let px = geometric_interp_1d(nx)?;
    let py = geometric_interp_1d(ny)?;
    let ncx = px.n_coarse();
    let ncy = py.n_coarse();
    let (pxd, pyd) = (px.dense(), py.dense());
    let mut t = Vec::new();
    for iy in 0..ny {
        for jy in 0..ncy {
            let vy = pyd[(iy, jy)];
            if vy == 0.0 {
                continue;
            }
            for ix in 0..nx {
                for jx in 0..ncx {
                    let v = vy * pxd[(ix, jx)];
                    if v != 0.0 {
                        t.push((iy * nx + ix, jy * ncx + jx, v));
                    }
                }
            }
        }
    }
    let p = Csr::from_triplets(nx * ny, ncx * ncy, t);
    let mut is_coarse = vec![false; nx * ny];
    let mut coarse_index = Vec::with_capacity(ncx * ncy);
    for iy in 0..ny {
        for ix in 0..nx {
            if ix % 2 == 1 && iy % 2 == 1 {
                is_coarse[iy * nx + ix] = true;
            }
        }
    }
    for (i, &c) in is_coarse.iter().enumerate() {
        if c {
            coarse_index.push(i);
        }
    }
    Prolongation::new(
        p,
        TransferMethod::Geometric2d,
        CfSplit {
            is_coarse,
            coarse_index,
        },
    )
}

/// Strong-connection sets under the classical negative-coupling convention:
/// j strongly influences i when -a_ij >= threshold * max_k(-a_ik).
fn strength_sets(a: &Csr, threshold: f64) -> Vec<Vec<usize>> {
    let n = a.rows();
    let mut strong = vec![Vec::new(); n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let mut max_neg = 0.0f64;
        for (&j, &v) in cols.iter().zip(vals.iter()) {
            if j != i {
                max_neg = max_neg.max(-v);
            }
        }
        if max_neg <= 0.0 {
            continue;
        }
        let cut = threshold * max_neg;
        for (&j, &v) in cols.iter().zip(vals.iter()) {
            if j != i && -v >= cut {
                strong[i].push(j);
            }
        }
    }
    strong
}

/// Classical Ruge-Stuben first-pass splitting. Deterministic: the highest
/// measure wins, ties broken by lowest index; measure bumps from new fine
/// points follow the textbook update. Points left with measure zero (no
/// strong connections) become coarse.
fn rs_first_pass(strong: &[Vec<usize>]) -> CfSplit {
    let n = strong.len();
    // transpose: who does i strongly influence
    let mut influenced_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, deps) in strong.iter().enumerate() {
        for &j in deps {
            influenced_by[j].push(i);
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Label {
        Unassigned,
        Coarse,
        Fine,
    }
    let mut label = vec![Label::Unassigned; n];
    let mut measure: Vec<usize> = influenced_by.iter().map(|v| v.len()).collect();
    let mut remaining = n;
    while remaining > 0 {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..n {
            if label[i] == Label::Unassigned {
                let m = measure[i];
                match best {
                    Some((bm, _)) if m <= bm => {}
                    _ => best = Some((m, i)),
                }
            }
        }
        let (best_measure, pick) = best.expect("remaining > 0");
        if best_measure == 0 {
            // isolated or exhausted neighborhoods: coarse by policy
            for i in 0..n {
                if label[i] == Label::Unassigned {
                    label[i] = Label::Coarse;
                }
            }
            break;
        }
        label[pick] = Label::Coarse;
        remaining -= 1;
        for &j in &influenced_by[pick] {
            if label[j] == Label::Unassigned {
                label[j] = Label::Fine;
                remaining -= 1;
                for &k in &strong[j] {
                    if label[k] == Label::Unassigned {
                        measure[k] += 1;
                    }
                }
            }
        }
    }
    let is_coarse: Vec<bool> = label.iter().map(|&l| l == Label::Coarse).collect();
    let coarse_index: Vec<usize> = (0..n).filter(|&i| is_coarse[i]).collect();
    CfSplit {
        is_coarse,
        coarse_index,
    }
}

/// Classical coarsening with direct interpolation. Coarse points
/// interpolate by identity; each fine point i takes weights
///   w_ij = -beta_i * a_ij / d_i,  j in C_i,
/// where C_i is the strong coarse neighborhood, beta_i rescales the full
/// negative row mass onto C_i, and d_i lumps positive off-diagonals into
/// the diagonal. Fine points without a strong coarse neighbor are promoted
/// to coarse before weights are computed.
pub fn amg_direct_interp(a: &Csr, strong_threshold: f64) -> Result<Prolongation> {
    let n = a.rows();
    if !(0.0..1.0).contains(&strong_threshold) {
        return Err(Error::InvalidArgument(format!(
            "strong threshold must lie in [0, 1), got {strong_threshold}"
        )));
    }
    let strong = strength_sets(a, strong_threshold);
    let mut split = rs_first_pass(&strong);

    // promote fine points with no strong coarse neighbor
    loop {
        let mut promoted = false;
        for i in 0..n {
            if !split.is_coarse[i] && !strong[i].iter().any(|&j| split.is_coarse[j]) {
                split.is_coarse[i] = true;
                promoted = true;
            }
        }
        if !promoted {
            break;
        }
    }
    split.coarse_index = (0..n).filter(|&i| split.is_coarse[i]).collect();

    let n_c = split.coarse_index.len();
    if n_c == 0 {
        return Err(Error::EmptyCoarseSet);
    }
    let degenerate = n_c == n;
    let mut coarse_col = vec![usize::MAX; n];
    for (c, &i) in split.coarse_index.iter().enumerate() {
        coarse_col[i] = c;
    }

    let mut t = Vec::new();
    for i in 0..n {
        if split.is_coarse[i] {
            t.push((i, coarse_col[i], 1.0));
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut pos_offdiag = 0.0;
        let mut neg_total = 0.0;
        for (&j, &v) in cols.iter().zip(vals.iter()) {
            if j == i {
                diag = v;
            } else if v > 0.0 {
                pos_offdiag += v;
            } else {
                neg_total += v;
            }
        }
        let mut neg_coarse = 0.0;
        for &j in &strong[i] {
            if split.is_coarse[j] {
                let v = a.get(i, j);
                if v < 0.0 {
                    neg_coarse += v;
                }
            }
        }
        if neg_coarse >= 0.0 {
            return Err(Error::InvariantViolation(format!(
                "fine point {i} has no negative strong coarse coupling"
            )));
        }
        let d = diag + pos_offdiag;
        let beta = neg_total / neg_coarse;
        for &j in &strong[i] {
            if split.is_coarse[j] {
                let v = a.get(i, j);
                if v < 0.0 {
                    t.push((i, coarse_col[j], -beta * v / d));
                }
            }
        }
    }
    let p = Csr::from_triplets(n, n_c, t);
    Prolongation::with_degeneracy(p, TransferMethod::AmgDirect, split, degenerate)
}

/// Galerkin triple product P^T A P for dense inputs.
pub fn galerkin(a: &Mat, p: &Mat) -> Mat {
    p.transpose().matmul(&a.matmul(p)).symmetrized()
}

/// Galerkin triple product in sparse form.
pub fn galerkin_csr(a: &Csr, p: &Csr) -> Csr {
    p.transpose().matmul(&a.matmul(p))
}

/// How to manufacture the substituted coarse matrix B_c from A_c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbMode {
    /// B_c = A_c
    Exact,
    /// B_c = alpha * A_c
    Scale { alpha: f64 },
    /// B_c = A_c + magnitude * W^T W with seeded Gaussian W
    SpdNoise { magnitude: f64, seed: u64 },
    /// Drop off-diagonal entries below magnitude * max|A_c|, then shift the
    /// diagonal if definiteness was lost.
    Sparsify { magnitude: f64 },
    /// B_c = alpha * I
    IdentityScale { alpha: f64 },
}

impl PerturbMode {
    pub fn label(&self) -> String {
        match self {
            PerturbMode::Exact => "exact".into(),
            PerturbMode::Scale { alpha } => format!("scale{alpha}"),
            PerturbMode::SpdNoise { magnitude, seed } => format!("noise{magnitude}_s{seed}"),
            PerturbMode::Sparsify { magnitude } => format!("sparsify{magnitude}"),
            PerturbMode::IdentityScale { alpha } => format!("idscale{alpha:.3e}"),
        }
    }
}

/// Builds an SPD B_c from A_c by the requested recipe; the result is
/// certified SPD before it is returned.
pub fn perturb_coarse(a_c: &Mat, mode: PerturbMode) -> Result<Mat> {
    let n = a_c.rows();
    let b_c = match mode {
        PerturbMode::Exact => a_c.clone(),
        PerturbMode::Scale { alpha } => {
            if alpha <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "scale factor must be positive, got {alpha}"
                )));
            }
            a_c.scale(alpha)
        }
        PerturbMode::SpdNoise { magnitude, seed } => {
            if magnitude < 0.0 {
                return Err(Error::InvalidArgument("negative noise magnitude".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Mat::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            a_c.add(&w.transpose().matmul(&w).scale(magnitude)).symmetrized()
        }
        PerturbMode::Sparsify { magnitude } => {
            let cut = magnitude * a_c.max_abs();
            let mut b = a_c.clone();
            for i in 0..n {
                for j in 0..n {
                    if i != j && b[(i, j)].abs() < cut {
                        b[(i, j)] = 0.0;
                    }
                }
            }
            let b = b.symmetrized();
            let spec = sym_eig(&DenseSym::from_symmetrize(b.clone())?, false)?;
            if spec.min() <= 0.0 {
                let shift = -spec.min() + 1e-10 * spec.max().max(1.0);
                b.add(&Mat::identity(n).scale(shift))
            } else {
                b
            }
        }
        PerturbMode::IdentityScale { alpha } => {
            if alpha <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "identity scale must be positive, got {alpha}"
                )));
            }
            Mat::identity(n).scale(alpha)
        }
    };
    Cholesky::new(&b_c)?;
    Ok(b_c)
}

/// Writes 0/1 coarse labels, one line per fine point.
pub fn write_split<W: std::io::Write>(w: &mut W, split: &CfSplit) -> std::io::Result<()> {
    for &c in &split.is_coarse {
        writeln!(w, "{}", if c { 1 } else { 0 })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gen_sym_eig, spectral_norm};
    use crate::problems::{poisson_1d, poisson_2d};

    #[test]
    fn interp_1d_smallest() {
        let p = geometric_interp_1d(3).unwrap();
        assert_eq!(p.n_coarse(), 1);
        let d = p.dense();
        assert_eq!(d.data(), &[0.5, 1.0, 0.5]);
        assert!(geometric_interp_1d(4).is_err());
    }

    #[test]
    fn interp_1d_gram() {
        let p = geometric_interp_1d(7).unwrap();
        assert_eq!(p.n_coarse(), 3);
        let d = p.dense();
        let g = d.transpose().matmul(&d);
        let expect = Mat::from_row_slice(
            3,
            3,
            &[1.5, 0.25, 0.0, 0.25, 1.5, 0.25, 0.0, 0.25, 1.5],
        );
        assert!(g.max_abs_diff(&expect) < 1e-15);
        // hat basis is well conditioned
        let spec = sym_eig(&DenseSym::new(g).unwrap(), false).unwrap();
        assert!(spec.min().sqrt() > 0.4);
    }

    #[test]
    fn interp_2d_tensor() {
        let p = geometric_interp_2d(3, 3).unwrap();
        assert_eq!(p.n_coarse(), 1);
        let d = p.dense();
        // outer product of [1/2, 1, 1/2] with itself, flattened x-fastest
        let hat = [0.5, 1.0, 0.5];
        for iy in 0..3 {
            for ix in 0..3 {
                assert!((d[(iy * 3 + ix, 0)] - hat[iy] * hat[ix]).abs() < 1e-15);
            }
        }
        let p7 = geometric_interp_2d(7, 7).unwrap();
        assert_eq!(p7.n_coarse(), 9);
    }

    #[test]
    fn galerkin_identity_and_submatrix() {
        let a = poisson_1d(5).unwrap().matrix.to_dense(16).unwrap();
        let id = Mat::identity(5);
        assert!(galerkin(&a, &id).max_abs_diff(&a) < 1e-15);
        let e1 = Mat::from_fn(5, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let g = galerkin(&a, &e1);
        assert_eq!(g.data(), &[2.0]);
    }

    #[test]
    fn galerkin_explicit_product() {
        let a = poisson_1d(7).unwrap().matrix.to_dense(16).unwrap();
        let p = geometric_interp_1d(7).unwrap().dense();
        let a_c = galerkin(&a, &p);
        // direct triple product entry by entry
        let mut expect = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..7 {
                    for c in 0..7 {
                        acc += p[(r, i)] * a[(r, c)] * p[(c, j)];
                    }
                }
                expect[(i, j)] = acc;
            }
        }
        assert!(a_c.max_abs_diff(&expect) < 1e-14);
        // sparse route agrees
        let a_csr = poisson_1d(7).unwrap().matrix.to_csr();
        let p_csr = geometric_interp_1d(7).unwrap();
        let g = galerkin_csr(&a_csr, p_csr.csr());
        assert!(g.to_dense().max_abs_diff(&a_c) < 1e-14);
        Cholesky::new(&a_c).unwrap();
    }

    #[test]
    fn galerkin_2d_is_spd() {
        let a = poisson_2d(7, 7).unwrap().matrix.to_dense(64).unwrap();
        let p = geometric_interp_2d(7, 7).unwrap().dense();
        let a_c = galerkin(&a, &p);
        Cholesky::new(&a_c).unwrap();
    }

    #[test]
    fn rs_split_on_path_graph_alternates() {
        let a = poisson_1d(7).unwrap().matrix.to_csr();
        let p = amg_direct_interp(&a, 0.25).unwrap();
        assert_eq!(p.split.coarse_index, vec![1, 3, 5]);
        // weights match the geometric hat stencil
        let geo = geometric_interp_1d(7).unwrap();
        assert!(p.dense().max_abs_diff(&geo.dense()) < 1e-15);
    }

    #[test]
    fn rs_split_2d_coarse_count() {
        let a = poisson_2d(7, 7).unwrap().matrix.to_csr();
        let p = amg_direct_interp(&a, 0.25).unwrap();
        let n_c = p.n_coarse();
        assert!(
            (20..=29).contains(&n_c),
            "expected roughly half of 49, got {n_c}"
        );
        // Galerkin through it stays SPD
        let a_c = galerkin_csr(&a, p.csr()).to_dense();
        Cholesky::new(&a_c).unwrap();
    }

    #[test]
    fn rs_determinism() {
        let a = poisson_2d(9, 9).unwrap().matrix.to_csr();
        let p1 = amg_direct_interp(&a, 0.25).unwrap();
        let p2 = amg_direct_interp(&a, 0.25).unwrap();
        assert_eq!(p1.split.coarse_index, p2.split.coarse_index);
        assert!(p1.dense().max_abs_diff(&p2.dense()) == 0.0);
    }

    #[test]
    fn no_strong_connections_degenerates_to_identity() {
        let a = Mat::diag(&[4.0, 5.0, 6.0]).to_csr();
        let p = amg_direct_interp(&a, 0.25).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.n_coarse(), 3);
        assert!(p.dense().max_abs_diff(&Mat::identity(3)) == 0.0);
    }

    #[test]
    fn perturb_scale_pencil() {
        let a_c = galerkin(
            &poisson_1d(7).unwrap().matrix.to_dense(16).unwrap(),
            &geometric_interp_1d(7).unwrap().dense(),
        );
        let b_c = perturb_coarse(&a_c, PerturbMode::Scale { alpha: 2.0 }).unwrap();
        let pencil = gen_sym_eig(
            &DenseSym::from_symmetrize(a_c.clone()).unwrap(),
            &DenseSym::from_symmetrize(b_c).unwrap(),
        )
        .unwrap();
        for v in pencil.values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let exact = perturb_coarse(&a_c, PerturbMode::Exact).unwrap();
        assert!(exact.max_abs_diff(&a_c) == 0.0);
    }

    #[test]
    fn perturb_noise_keeps_pencil_below_one() {
        let a_c = galerkin(
            &poisson_1d(9).unwrap().matrix.to_dense(16).unwrap(),
            &geometric_interp_1d(9).unwrap().dense(),
        );
        let b_c = perturb_coarse(
            &a_c,
            PerturbMode::SpdNoise {
                magnitude: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        let pencil = gen_sym_eig(
            &DenseSym::from_symmetrize(a_c).unwrap(),
            &DenseSym::from_symmetrize(b_c).unwrap(),
        )
        .unwrap();
        assert!(pencil.max() <= 1.0 + 1e-12);
    }

    #[test]
    fn perturb_theta_for_scale() {
        let a_c = galerkin(
            &poisson_1d(7).unwrap().matrix.to_dense(16).unwrap(),
            &geometric_interp_1d(7).unwrap().dense(),
        );
        let b_c = perturb_coarse(&a_c, PerturbMode::Scale { alpha: 1.3 }).unwrap();
        let chol = Cholesky::new(&a_c).unwrap();
        let theta =
            spectral_norm(&Mat::identity(3).sub(&chol.solve_mat(&b_c))).unwrap();
        assert!((theta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn split_export_format() {
        let p = geometric_interp_1d(5).unwrap();
        let mut buf = Vec::new();
        write_split(&mut buf, &p.split).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0\n1\n0\n1\n0\n");
    }
}
