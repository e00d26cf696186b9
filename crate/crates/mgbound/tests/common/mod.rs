//! Independent oracles for cross-checking the production eigen-machinery.
//!
//! Nothing here shares code with the library's solver path: symmetric
//! spectra come from cyclic Jacobi rotations, nonsymmetric real spectra
//! from a Householder Hessenberg reduction followed by Wilkinson-shifted
//! QR steps, and norms from plain power iteration.

#![allow(dead_code)]

use mgbound::Mat;

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices.
/// Returns eigenvalues ascending.
pub fn jacobi_eigenvalues(s: &Mat) -> Vec<f64> {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frob(&a)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s_ * akq;
                    a[k][q] = s_ * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s_ * aqk;
                    a[q][k] = s_ * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

fn frob(a: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(a: &Mat) -> Vec<Vec<f64>> {
    let n = a.rows();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for k in 0..n.saturating_sub(2) {
        let mut norm = 0.0;
        for i in (k + 1)..n {
            norm += h[i][k] * h[i][k];
        }
        let norm = norm.sqrt();
        if norm < 1e-300 {
            continue;
        }
        let alpha = if h[k + 1][k] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n];
        v[k + 1] = h[k + 1][k] - alpha;
        for i in (k + 2)..n {
            v[i] = h[i][k];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv < 1e-300 {
            continue;
        }
        // H <- (I - 2 v v^T / v^T v) H
        for j in 0..n {
            let dot: f64 = ((k + 1)..n).map(|i| v[i] * h[i][j]).sum();
            let f = 2.0 * dot / vtv;
            for i in (k + 1)..n {
                h[i][j] -= f * v[i];
            }
        }
        // H <- H (I - 2 v v^T / v^T v)
        for i in 0..n {
            let dot: f64 = ((k + 1)..n).map(|j| v[j] * h[i][j]).sum();
            let f = 2.0 * dot / vtv;
            for j in (k + 1)..n {
                h[i][j] -= f * v[j];
            }
        }
    }
    h
}

/// Eigenvalues of a matrix with (numerically) real spectrum, by shifted QR
/// on the Hessenberg form with Givens rotations. Suited to products of SPD
/// matrices; panics when a genuinely complex pair is encountered.
pub fn real_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut h = hessenberg(a);
    let scale: f64 = frob(&h).max(1e-300);
    let mut eigs: Vec<f64> = Vec::with_capacity(n);
    let mut hi = n; // active block is 0..hi
    let mut iters_here = 0usize;
    while hi > 0 {
        // deflate converged subdiagonals
        let mut split = None;
        for i in (1..hi).rev() {
            if h[i][i - 1].abs() <= 1e-15 * (h[i - 1][i - 1].abs() + h[i][i].abs() + scale * 1e-3)
            {
                h[i][i - 1] = 0.0;
                split = Some(i);
                break;
            }
        }
        if hi == 1 {
            eigs.push(h[0][0]);
            hi = 0;
            continue;
        }
        if let Some(i) = split {
            if i == hi - 1 {
                eigs.push(h[hi - 1][hi - 1]);
                hi -= 1;
                iters_here = 0;
                continue;
            }
        }
        iters_here += 1;
        assert!(
            iters_here < 500,
            "shifted QR oracle failed to converge on block of size {hi}"
        );
        let lo = split.unwrap_or(0);
        // Wilkinson shift from the trailing 2x2 of the active block
        let (a11, a12) = (h[hi - 2][hi - 2], h[hi - 2][hi - 1]);
        let (a21, a22) = (h[hi - 1][hi - 2], h[hi - 1][hi - 1]);
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = tr * tr / 4.0 - det;
        let mut shift = if disc >= 0.0 {
            let r = disc.sqrt();
            let e1 = tr / 2.0 + r;
            let e2 = tr / 2.0 - r;
            if (e1 - a22).abs() < (e2 - a22).abs() {
                e1
            } else {
                e2
            }
        } else {
            tr / 2.0
        };
        if iters_here % 20 == 0 {
            // exceptional shift to break rare cycles
            shift += h[hi - 1][hi - 2].abs() + 0.5 * scale * 1e-6;
        }
        // QR step on the active block by Givens rotations
        let m = hi;
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        for i in lo..m {
            h[i][i] -= shift;
        }
        for i in lo..(m - 1) {
            let (x, y) = (h[i][i], h[i + 1][i]);
            let r = x.hypot(y);
            let (c, s) = if r < 1e-300 { (1.0, 0.0) } else { (x / r, y / r) };
            cs[i] = c;
            sn[i] = s;
            for j in i..m {
                let (u, v) = (h[i][j], h[i + 1][j]);
                h[i][j] = c * u + s * v;
                h[i + 1][j] = -s * u + c * v;
            }
        }
        for i in lo..(m - 1) {
            let (c, s) = (cs[i], sn[i]);
            for r in lo..(i + 2) {
                let (u, v) = (h[r][i], h[r][i + 1]);
                h[r][i] = c * u + s * v;
                h[r][i + 1] = -s * u + c * v;
            }
        }
        for i in lo..m {
            h[i][i] += shift;
        }
    }
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

/// Largest singular value by power iteration on B^T B.
pub fn power_iteration_norm(b: &Mat, iters: usize) -> f64 {
    let n = b.cols();
    let mut v: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * 0.7391).sin()).collect();
    let mut lam = 0.0;
    for _ in 0..iters {
        let bv = b.matvec(&v);
        let w = b.transpose().matvec(&bv);
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm;
        v = w.iter().map(|x| x / norm).collect();
    }
    // one more application for the Rayleigh quotient
    let bv = b.matvec(&v);
    let num: f64 = bv.iter().map(|x| x * x).sum();
    let den: f64 = v.iter().map(|x| x * x).sum();
    let _ = lam;
    (num / den).sqrt()
}

/// Dense Gaussian elimination solve used to form explicit inverse products
/// for the oracles (independent of the library's factorizations).
pub fn gauss_solve(a: &Mat, b: &Mat) -> Mat {
    let n = a.rows();
    let m = b.cols();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend_from_slice(b.row(i));
            row
        })
        .collect();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if aug[i][k].abs() > aug[piv][k].abs() {
                piv = i;
            }
        }
        assert!(aug[piv][k].abs() > 1e-300, "oracle solve hit singularity");
        aug.swap(k, piv);
        let d = aug[k][k];
        for j in k..(n + m) {
            aug[k][j] /= d;
        }
        for i in 0..n {
            if i != k && aug[i][k] != 0.0 {
                let f = aug[i][k];
                for j in k..(n + m) {
                    let upd = f * aug[k][j];
                    aug[i][j] -= upd;
                }
            }
        }
    }
    Mat::from_fn(n, m, |i, j| aug[i][n + j])
}

/// Seeded dense SPD matrix for randomized suites (independent of the
/// library's generator).
pub fn seeded_spd(n: usize, seed: u64) -> Mat {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    };
    let g = Mat::from_fn(n, n, |_, _| next());
    let mut s = g.transpose().matmul(&g);
    for i in 0..n {
        s[(i, i)] += 0.5 * n as f64;
    }
    s.symmetrized()
}

/// Seeded symmetric (possibly indefinite) matrix.
pub fn seeded_symmetric(n: usize, seed: u64) -> Mat {
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    let mut next = || {
        state = state
            .wrapping_mul(2862933555777941757)
            .wrapping_add(3037000493);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    };
    Mat::from_fn(n, n, |_, _| next()).symmetrized()
}
