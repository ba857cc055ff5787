//! Dense linear algebra helpers: symmetrization, block Cholesky, truncated
//! least squares and a small deterministic simplex solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Replace `a` by (a + aᵀ)/2.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    symmetrize(&mut s);
    s
}

/// Block upper triangular R with M = RᵀR, each diagonal block upper
/// triangular with a positive diagonal.
///
/// With that convention the blockwise factor coincides with the scalar
/// Cholesky factor, so the elimination runs entry by entry and reports the
/// block holding the first non-positive pivot.
pub fn block_cholesky(m: &DMatrix<f64>, block: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Argument(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if block == 0 || !n.is_multiple_of(block) {
        return Err(Error::Argument(format!("block size {block} does not divide {n}")));
    }
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut d = m[(i, i)];
        for k in 0..i {
            d -= r[(k, i)] * r[(k, i)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization {
                block: i / block,
                reason: format!("non-positive pivot {d:.3e} at row {i}"),
            });
        }
        let rii = d.sqrt();
        r[(i, i)] = rii;
        for j in (i + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..i {
                s -= r[(k, i)] * r[(k, j)];
            }
            r[(i, j)] = s / rii;
        }
    }
    Ok(r)
}

/// Frobenius norm of block (bi, bj) with block size m.
pub fn block_norm(a: &DMatrix<f64>, m: usize, bi: usize, bj: usize) -> f64 {
    a.view((bi * m, bj * m), (m, m)).norm()
}

/// Frobenius mass of blocks with |i − j| > band, relative to ‖a‖_F.
pub fn off_band_ratio(a: &DMatrix<f64>, m: usize, band: usize) -> f64 {
    let nb = a.nrows() / m;
    let mut off = 0.0;
    for bi in 0..nb {
        for bj in 0..nb {
            if bi.abs_diff(bj) > band {
                off += block_norm(a, m, bi, bj).powi(2);
            }
        }
    }
    off.sqrt() / a.norm().max(f64::MIN_POSITIVE)
}

/// Frobenius mass of strictly lower blocks, relative to ‖a‖_F.
pub fn lower_block_ratio(a: &DMatrix<f64>, m: usize) -> f64 {
    let nb = a.nrows() / m;
    let mut low = 0.0;
    for bi in 0..nb {
        for bj in 0..bi {
            low += block_norm(a, m, bi, bj).powi(2);
        }
    }
    low.sqrt() / a.norm().max(f64::MIN_POSITIVE)
}

/// Result of a truncated-SVD least squares solve.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DVector<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

/// Minimum-norm x minimizing ‖J x − r‖, discarding singular values below
/// `rel_cutoff·σ_max` (and below roundoff level in any case).
pub fn lstsq_truncated(j: &DMatrix<f64>, r: &DVector<f64>, rel_cutoff: f64) -> LstsqSolution {
    let svd = j.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = smax * rel_cutoff.max(f64::EPSILON * j.nrows().max(j.ncols()) as f64);
    let mut x = DVector::zeros(j.ncols());
    let mut rank = 0;
    for &k in &order {
        let s = svd.singular_values[k];
        if s <= floor || s == 0.0 {
            continue;
        }
        rank += 1;
        let coef = u.column(k).dot(r) / s;
        x += vt.row(k).transpose() * coef;
    }
    LstsqSolution { x, singular_values: sigma, rank }
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

const LP_EPS: f64 = 1e-10;

/// Minimize cᵀx subject to A x ≤ b and x ≥ 0 with a two-phase tableau simplex
/// under Bland's rule, so the pivot sequence is fully deterministic.
pub fn linprog(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let (rows, nv) = (a.nrows(), a.ncols());
    if c.len() != nv || b.len() != rows {
        return Err(Error::Argument("linear program dimensions disagree".into()));
    }
    let neg: Vec<usize> = (0..rows).filter(|&i| b[i] < 0.0).collect();
    let n_art = neg.len();
    // columns: original | slacks | artificials | rhs
    let ncol = nv + rows + n_art;
    let mut t = DMatrix::<f64>::zeros(rows, ncol + 1);
    let mut basis = vec![0usize; rows];
    let mut art_k = 0;
    for i in 0..rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, nv + i)] = sign;
        t[(i, ncol)] = sign * b[i];
        if b[i] < 0.0 {
            t[(i, nv + rows + art_k)] = 1.0;
            basis[i] = nv + rows + art_k;
            art_k += 1;
        } else {
            basis[i] = nv + i;
        }
    }
    let is_art = |j: usize| j >= nv + rows && j < ncol;

    if n_art > 0 {
        let mut cost = vec![0.0; ncol];
        for j in (nv + rows)..ncol {
            cost[j] = 1.0;
        }
        simplex(&mut t, &mut basis, &cost, ncol, |_| true)?;
        let infeas: f64 = (0..rows).filter(|&i| is_art(basis[i])).map(|i| t[(i, ncol)]).sum();
        let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Err(Error::Infeasible(format!("residual infeasibility {infeas:.3e}")));
        }
        // drive zero-level artificials out of the basis
        for i in 0..rows {
            if is_art(basis[i]) {
                if let Some(j) = (0..nv + rows).find(|&j| t[(i, j)].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
    }
    let mut cost = vec![0.0; ncol];
    cost[..nv].copy_from_slice(c);
    simplex(&mut t, &mut basis, &cost, ncol, |j| !is_art(j))?;
    let mut x = vec![0.0; nv];
    for i in 0..rows {
        if basis[i] < nv {
            x[basis[i]] = t[(i, ncol)];
        }
    }
    Ok(x)
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], r: usize, col: usize) {
    let p = t[(r, col)];
    let row: Vec<f64> = t.row(r).iter().map(|v| v / p).collect();
    for (j, v) in row.iter().enumerate() {
        t[(r, j)] = *v;
    }
    for i in 0..t.nrows() {
        if i != r {
            let f = t[(i, col)];
            if f != 0.0 {
                for (j, v) in row.iter().enumerate() {
                    t[(i, j)] -= f * v;
                }
                t[(i, col)] = 0.0;
            }
        }
    }
    basis[r] = col;
}

fn simplex(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    cost: &[f64],
    ncol: usize,
    allowed: impl Fn(usize) -> bool,
) -> Result<()> {
    let rows = t.nrows();
    let max_iter = 50 * (rows + ncol);
    for _ in 0..max_iter {
        let entering = (0..ncol).filter(|&j| allowed(j) && !basis.contains(&j)).find(|&j| {
            let mut rc = cost[j];
            for i in 0..rows {
                rc -= cost[basis[i]] * t[(i, j)];
            }
            rc < -LP_EPS
        });
        let Some(col) = entering else { return Ok(()) };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[(i, col)];
            if a > LP_EPS {
                let ratio = t[(i, ncol)] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - LP_EPS || (ratio <= lr + LP_EPS && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::Numerical("linear program is unbounded".into()));
        };
        pivot(t, basis, r, col);
    }
    Err(Error::Numerical("simplex iteration limit reached".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_hand_example() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 5.0]);
        let r = block_cholesky(&m, 1).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]));
        assert_eq!(block_cholesky(&DMatrix::identity(6, 6), 3).unwrap(), DMatrix::identity(6, 6));
    }

    #[test]
    fn cholesky_reports_block() {
        let mut m = DMatrix::<f64>::identity(6, 6);
        m[(4, 4)] = -1.0;
        match block_cholesky(&m, 2) {
            Err(Error::Factorization { block, .. }) => assert_eq!(block, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lstsq_identity_and_rank_deficient() {
        let j = DMatrix::<f64>::identity(4, 4);
        let s = lstsq_truncated(&j, &DVector::from_element(4, 2.0), 0.0);
        assert_eq!(s.singular_values, vec![1.0; 4]);
        assert!((s.x - DVector::from_element(4, 2.0)).norm() < 1e-14);
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let sv = singular_values(&j);
        assert!(sv[1].abs() < 1e-12);
        let s = lstsq_truncated(&j, &DVector::from_row_slice(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(s.rank, 1);
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linprog_small() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let x = linprog(&[-1.0, -1.0], &a, &[4.0, 6.0]).unwrap();
        assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
        // min x s.t. x >= 2 written as -x <= -2
        let a = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let x = linprog(&[1.0], &a, &[-2.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        // x <= 1 and x >= 2
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert!(matches!(linprog(&[1.0], &a, &[1.0, -2.0]), Err(Error::Infeasible(_))));
    }
}
