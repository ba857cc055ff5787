//! Dense eigendecomposition ground truth for small instances.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::wavesim::DataCube;

/// Largest operator the oracle agrees to decompose.
pub const MAX_DOF: usize = 2000;

#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub a: DMatrix<f64>,
    /// Ascending eigenvalues λ_l.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors y_l as columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Argument("dense operator must be square".into()));
        }
        if n > MAX_DOF {
            return Err(Error::Argument(format!("oracle limited to {MAX_DOF} dof, got {n}")));
        }
        let eig = SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let lmax = eigenvalues.last().copied().unwrap_or(0.0).abs();
        if let Some(&l0) = eigenvalues.first() {
            if l0 < -1e-10 * lmax {
                return Err(Error::Numerical(format!("operator has negative eigenvalue {l0:.3e}")));
            }
        }
        Ok(Self { a, eigenvalues, eigenvectors })
    }

    pub fn dof(&self) -> usize {
        self.a.nrows()
    }

    /// Y f(Λ) Yᵀ.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let y = &self.eigenvectors;
        let mut scaled = y.clone();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let v = f(l.max(0.0));
            scaled.column_mut(k).scale_mut(v);
        }
        scaled * y.transpose()
    }

    /// Y f(Λ) Yᵀ x without forming the full matrix function.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let y = &self.eigenvectors;
        let mut coef = y.tr_mul(x);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let v = f(l.max(0.0));
            coef.row_mut(k).scale_mut(v);
        }
        y * coef
    }

    /// cos(τ√A).
    pub fn dense_propagator(&self, tau: f64) -> DMatrix<f64> {
        self.function(|l| (tau * l.sqrt()).cos())
    }

    /// cos(t√A) b.
    pub fn cos_apply(&self, t: f64, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_function(|l| (t * l.sqrt()).cos(), b)
    }

    /// The propagator realized by `substeps` leapfrog steps of size τ/substeps:
    /// T_s(I − dt²A/2).
    pub fn leapfrog_propagator(&self, tau: f64, substeps: usize) -> DMatrix<f64> {
        let dt = tau / substeps as f64;
        self.function(|l| chebyshev_t(substeps, 1.0 - 0.5 * dt * dt * l))
    }
}

/// T_k(x) by the three-term recursion.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for _ in 1..k {
        let c = 2.0 * x * b - a;
        a = b;
        b = c;
    }
    b
}

/// D_j = bᵀ T_j(P) b · h^d for j < nsteps.
pub fn chebyshev_data(
    p: &DMatrix<f64>,
    b: &DMatrix<f64>,
    nsteps: usize,
    cell_volume: f64,
    tau: f64,
) -> Result<DataCube> {
    let norm = p.clone().symmetric_eigenvalues().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if norm > 1.0 + 1e-8 {
        return Err(Error::Argument(format!("propagator norm {norm} exceeds one")));
    }
    DataCube::new(tau, chebyshev_snapshots(p, b, nsteps).iter().map(|u| b.tr_mul(u) * cell_volume).collect())
}

/// T_j(P) b for j < count.
pub fn chebyshev_snapshots(p: &DMatrix<f64>, b: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(count);
    for j in 0..count {
        let next = match j {
            0 => b.clone(),
            1 => p * b,
            _ => 2.0 * (p * &out[j - 1]) - &out[j - 2],
        };
        out.push(next);
    }
    out
}

/// One-sided difference quotient D(0) + [D(εq) − D(0)]/ε.
pub fn oracle_born_data(
    pipeline: impl Fn(&[f64]) -> Result<DataCube>,
    q: &[f64],
    eps: f64,
) -> Result<DataCube> {
    let zero = vec![0.0; q.len()];
    let d0 = pipeline(&zero)?;
    if q.iter().all(|v| *v == 0.0) {
        return Ok(d0);
    }
    let scaled: Vec<f64> = q.iter().map(|v| eps * v).collect();
    let de = pipeline(&scaled)?;
    let d = d0.d.iter().zip(&de.d).map(|(a, b)| a + (b - a) / eps).collect();
    DataCube::new(d0.tau, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn propagator_trivial_cases() {
        let op = DenseOperator::new(DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])).unwrap();
        assert!((op.dense_propagator(0.0) - DMatrix::identity(2, 2)).norm() < 1e-14);
        let tau = 0.7;
        let op = DenseOperator::new(DMatrix::from_element(1, 1, (PI / tau).powi(2))).unwrap();
        assert!((op.dense_propagator(tau)[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn negative_operator_rejected() {
        assert!(DenseOperator::new(DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    #[test]
    fn scalar_chebyshev_data() {
        let theta: f64 = 0.3;
        let p = DMatrix::from_element(1, 1, theta.cos());
        let b = DMatrix::from_element(1, 1, 1.0);
        let d = chebyshev_data(&p, &b, 9, 1.0, 1.0).unwrap();
        for (j, dj) in d.d.iter().enumerate() {
            assert!((dj[(0, 0)] - (j as f64 * theta).cos()).abs() < 1e-13);
        }
        assert!(chebyshev_data(&(p * 2.0), &b, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn born_at_zero_is_reference() {
        let pipe = |q: &[f64]| DataCube::new(1.0, vec![DMatrix::from_element(1, 1, 1.0 + q[0])]);
        let d = oracle_born_data(pipe, &[0.0], 1e-3).unwrap();
        assert_eq!(d.d[0][(0, 0)], 1.0);
    }
}
