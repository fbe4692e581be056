use super::{dot, LinalgError, Matrix, Result};

/// Pivots smaller than `RANK_TOL · |largest pivot|` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Least-squares solution `X` (p×m) of the row system `X·A = B`, with
/// `A` m×n and `B` p×n.
///
/// Works on the transposed problem `Aᵀ·Xᵀ = Bᵀ`: a Householder QR of `Aᵀ`
/// with column pivoting reveals the numerical rank, and rank-deficient
/// systems are finished with a complete orthogonal decomposition so the
/// returned `X` is the minimum-Frobenius-norm minimizer. The rows of a
/// row-major `A` are exactly the columns of `Aᵀ`, so no transposition is
/// needed.
pub fn solve_row_ls(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() || a.cols() == 0 {
        return Err(LinalgError::Shape {
            op: "solve_row_ls",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(LinalgError::NonFinite("solve_row_ls"));
    }
    let m = a.rows();
    let n = a.cols();
    let p = b.rows();
    let mut out = Matrix::zeros(p, m);
    if m == 0 || p == 0 {
        return Ok(out);
    }

    let mut cols = a.as_slice().to_vec();
    let mut rhs = b.as_slice().to_vec();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut rdiag = vec![0.0; m];
    let steps = m.min(n);
    let mut v = vec![0.0; n];

    for k in 0..steps {
        // pivot: largest remaining column norm
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..m {
            let col = &cols[j * n + k..(j + 1) * n];
            let s = dot(col, col);
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            for t in 0..n {
                cols.swap(k * n + t, best * n + t);
            }
            perm.swap(k, best);
        }

        let x = &cols[k * n + k..(k + 1) * n];
        let norm = best_norm.max(0.0).sqrt();
        if norm == 0.0 {
            rdiag[k] = 0.0;
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let len = n - k;
        v[..len].copy_from_slice(x);
        v[0] -= alpha;
        let vtv = dot(&v[..len], &v[..len]);
        rdiag[k] = alpha;
        cols[k * n + k] = alpha;
        for t in 1..len {
            cols[k * n + k + t] = 0.0;
        }
        if vtv == 0.0 {
            continue;
        }
        let f = 2.0 / vtv;
        for j in k + 1..m {
            reflect(&mut cols[j * n + k..(j + 1) * n], &v[..len], f);
        }
        for r in 0..p {
            reflect(&mut rhs[r * n + k..(r + 1) * n], &v[..len], f);
        }
    }

    let lead = rdiag.first().copied().unwrap_or(0.0).abs();
    let rank = if lead == 0.0 {
        0
    } else {
        rdiag[..steps]
            .iter()
            .take_while(|d| d.abs() > RANK_TOL * lead)
            .count()
    };
    if rank == 0 {
        return Ok(out);
    }

    // R is rank × m, R[k][j] = cols[j*n + k]
    let r_at = |k: usize, j: usize| cols[j * n + k];
    let mut y = vec![0.0; m];

    if rank == m {
        for r in 0..p {
            let c = &rhs[r * n..r * n + m];
            for k in (0..m).rev() {
                let mut s = c[k];
                for j in k + 1..m {
                    s -= r_at(k, j) * y[j];
                }
                y[k] = s / r_at(k, k);
            }
            let out_row = out.row_mut(r);
            for k in 0..m {
                out_row[perm[k]] = y[k];
            }
        }
        return Ok(out);
    }

    // Complete orthogonal decomposition: R₁ᵀ (m × rank) = Z·[S; 0], so
    // R₁ = [Sᵀ 0]·Zᵀ and the minimum-norm solution of R₁·y = c is
    // y = Z·[S⁻ᵀc; 0].
    let mut t = vec![0.0; rank * m]; // column k of R₁ᵀ is row k of R₁, stored contiguously
    for k in 0..rank {
        for j in k..m {
            t[k * m + j] = r_at(k, j);
        }
    }
    let mut house: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rank);
    let mut s_diag = vec![0.0; rank];
    for k in 0..rank {
        let col = &t[k * m + k..(k + 1) * m];
        let norm = dot(col, col).sqrt();
        let alpha = if col[0] >= 0.0 { -norm } else { norm };
        let mut hv = col.to_vec();
        hv[0] -= alpha;
        let vtv = dot(&hv, &hv);
        s_diag[k] = alpha;
        t[k * m + k] = alpha;
        for q in k + 1..m {
            t[k * m + q] = 0.0;
        }
        let f = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        if f != 0.0 {
            for j in k + 1..rank {
                reflect(&mut t[j * m + k..(j + 1) * m], &hv, f);
            }
        }
        house.push((hv, f));
    }
    // S[k][j] (k ≤ j) = t[j*m + k]; solve Sᵀ w = c by forward substitution.
    let mut w = vec![0.0; m];
    for r in 0..p {
        let c = &rhs[r * n..r * n + rank];
        w.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..rank {
            let mut s = c[j];
            for k in 0..j {
                s -= t[j * m + k] * w[k];
            }
            w[j] = s / s_diag[j];
        }
        // y = Z·w, Z = H₀H₁…H_{rank−1}
        for k in (0..rank).rev() {
            let (hv, f) = &house[k];
            if *f != 0.0 {
                reflect(&mut w[k..m], hv, *f);
            }
        }
        let out_row = out.row_mut(r);
        for k in 0..m {
            out_row[perm[k]] = w[k];
        }
    }
    Ok(out)
}

#[inline]
fn reflect(x: &mut [f64], v: &[f64], f: f64) {
    let s = f * dot(v, x);
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}

/// Solves `G·x = rhs` in place for a symmetric positive-definite `G`
/// (row-major, `m×m`, overwritten by its Cholesky factor) and `nrhs`
/// right-hand sides stored one after another in `rhs`.
///
/// Returns `false` without touching `rhs` when a pivot is not safely
/// positive; callers fall back to [`solve_row_ls`].
pub fn solve_spd(g: &mut [f64], m: usize, rhs: &mut [f64], nrhs: usize) -> bool {
    debug_assert_eq!(g.len(), m * m);
    debug_assert_eq!(rhs.len(), m * nrhs);
    let scale = (0..m).map(|i| g[i * m + i]).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return false;
    }
    for j in 0..m {
        let mut d = g[j * m + j];
        for k in 0..j {
            d -= g[j * m + k] * g[j * m + k];
        }
        if !(d > 1e-14 * scale) {
            return false;
        }
        let d = d.sqrt();
        g[j * m + j] = d;
        for i in j + 1..m {
            let mut s = g[i * m + j];
            for k in 0..j {
                s -= g[i * m + k] * g[j * m + k];
            }
            g[i * m + j] = s / d;
        }
    }
    for r in 0..nrhs {
        let x = &mut rhs[r * m..(r + 1) * m];
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= g[i * m + k] * x[k];
            }
            x[i] = s / g[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in i + 1..m {
                s -= g[k * m + i] * x[k];
            }
            x[i] = s / g[i * m + i];
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let b = Matrix::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.0, 7.0]]).unwrap();
        let x = solve_row_ls(&Matrix::identity(3), &b).unwrap();
        for (u, v) in x.as_slice().iter().zip(b.as_slice()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn one_dimensional_examples() {
        let a = Matrix::from_rows(&[&[1.0, 1.0]]).unwrap();
        let x = solve_row_ls(&a, &Matrix::from_rows(&[&[2.0, 2.0]]).unwrap()).unwrap();
        assert!((x.get(0, 0) - 2.0).abs() < 1e-14);
        // x·[1 1] = [1 0]: minimize (x−1)² + x²
        let x = solve_row_ls(&a, &Matrix::from_rows(&[&[1.0, 0.0]]).unwrap()).unwrap();
        assert!((x.get(0, 0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_system_gives_zero() {
        let x = solve_row_ls(&Matrix::zeros(3, 5), &Matrix::filled(2, 5, 1.0)).unwrap();
        assert_eq!(x, Matrix::zeros(2, 3));
    }

    #[test]
    fn rank_deficient_minimum_norm() {
        // duplicated row: x1 + x2 must equal the 1-D solution, split evenly
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[&[2.0, 4.0, 6.0]]).unwrap();
        let x = solve_row_ls(&a, &b).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((x.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_minimum_norm() {
        // one equation, two unknowns: x·[1;1] = 2 → x = (1, 1)
        let a = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let b = Matrix::from_rows(&[&[2.0]]).unwrap();
        let x = solve_row_ls(&a, &b).unwrap();
        assert!((x.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((x.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            solve_row_ls(&a, &Matrix::zeros(1, 2)),
            Err(LinalgError::Shape { .. })
        ));
    }

    #[test]
    fn spd_solve_matches_qr() {
        let g0 = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let mut g = g0;
        let mut rhs = [1.0, 2.0, 3.0];
        assert!(solve_spd(&mut g, 3, &mut rhs, 1));
        let a = Matrix::from_vec(3, 3, g0.to_vec()).unwrap();
        let b = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let x = solve_row_ls(&a, &b).unwrap(); // symmetric: x·G = b ⇔ G·xᵀ = bᵀ
        for (u, v) in x.as_slice().iter().zip(&rhs) {
            assert!((u - v).abs() < 1e-13);
        }
        let mut z = [0.0; 4];
        let mut r = [1.0, 1.0];
        assert!(!solve_spd(&mut z, 2, &mut r, 1));
    }
}
