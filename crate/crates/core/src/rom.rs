//! Data-driven reduced order model of the wave propagator.
//!
//! Everything here consumes only the data cube: the mass and stiffness Gram
//! matrices follow from the Chebyshev product rule, the causal orthonormal
//! basis from their block Cholesky factor.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{block_cholesky, lower_block_ratio, off_band_ratio, symmetrize};
use crate::wavesim::DataCube;

fn check_even(data: &DataCube) -> Result<usize> {
    if !data.nsteps().is_multiple_of(2) || data.nsteps() < 2 {
        return Err(Error::Argument(format!(
            "data cube needs an even number of steps, got {}",
            data.nsteps()
        )));
    }
    Ok(data.n())
}

fn assemble(data: &DataCube, n: usize, block: impl Fn(usize, usize) -> DMatrix<f64>) -> DMatrix<f64> {
    let m = data.m;
    let mut out = DMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..n {
            out.view_mut((i * m, j * m), (m, m)).copy_from(&block(i, j));
        }
    }
    symmetrize(&mut out);
    out
}

/// M_ij = ½(D_{i+j} + D_{|i−j|}).
pub fn mass_matrix(data: &DataCube) -> Result<DMatrix<f64>> {
    let n = check_even(data)?;
    let d = &data.d;
    Ok(assemble(data, n, |i, j| (&d[i + j] + &d[i.abs_diff(j)]) * 0.5))
}

/// S_ij = ¼(D_{i+j+1} + D_{|i−j+1|} + D_{|i+j−1|} + D_{|i−j−1|}).
pub fn stiffness_matrix(data: &DataCube) -> Result<DMatrix<f64>> {
    let n = check_even(data)?;
    let d = &data.d;
    Ok(assemble(data, n, |i, j| {
        let (i, j) = (i as isize, j as isize);
        let at = |k: isize| &d[k.unsigned_abs()];
        (at(i + j + 1) + at(i - j + 1) + at(i + j - 1) + at(i - j - 1)) * 0.25
    }))
}

#[derive(Debug, Clone)]
pub struct GramPair {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub tau: f64,
}

impl GramPair {
    pub fn from_data(data: &DataCube) -> Result<Self> {
        Ok(Self {
            mass: mass_matrix(data)?,
            stiffness: stiffness_matrix(data)?,
            n: data.n(),
            m: data.m,
            tau: data.tau,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegularizationReport {
    /// Eigenvalues of M raised to the floor.
    pub clipped: usize,
    /// λ_max/λ_min of M before clipping (infinite if λ_min ≤ 0).
    pub condition: f64,
    pub floor: f64,
}

/// Spectral clipping of M at rel_tol·λ_max. S and n are left alone.
pub fn regularize_gram(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
    rel_tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, RegularizationReport)> {
    if !(0.0..1.0).contains(&rel_tol) {
        return Err(Error::Argument(format!("rel_tol must lie in [0, 1), got {rel_tol}")));
    }
    let eig = SymmetricEigen::new(mass.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let floor = rel_tol * lmax;
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < floor).count();
    let report = RegularizationReport { clipped, condition, floor };
    if clipped == 0 {
        return Ok((mass.clone(), stiffness.clone(), report));
    }
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let mut m2 = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut m2);
    Ok((m2, stiffness.clone(), report))
}

#[derive(Debug, Clone)]
pub struct Rom {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    /// Block upper triangular factor of M = RᵀR.
    pub r: DMatrix<f64>,
    /// P^ROM = R⁻ᵀ S R⁻¹.
    pub p: DMatrix<f64>,
    /// b^ROM = R e_0, nm × m.
    pub b_rom: DMatrix<f64>,
    /// Block lower bidiagonal factor of (2/τ²)(I − P^ROM).
    pub l: DMatrix<f64>,
    pub regularization: RegularizationReport,
    /// Eigenvalues of I − P^ROM raised to the floor while factoring.
    pub wave_clipped: usize,
}

impl Rom {
    pub fn nm(&self) -> usize {
        self.n * self.m
    }

    pub fn block(&self, mat: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
        mat.view((i * self.m, j * self.m), (self.m, self.m)).into_owned()
    }

    /// b^ROMᵀ b^ROM, which reproduces D_0.
    pub fn b_gram(&self) -> DMatrix<f64> {
        self.b_rom.tr_mul(&self.b_rom)
    }
}

/// R⁻ᵀ S R⁻¹ by two triangular solves, symmetrized.
fn congruence_inverse(r: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = r
        .tr_solve_upper_triangular(s)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let y = r
        .tr_solve_upper_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut p = y.transpose();
    symmetrize(&mut p);
    Ok(p)
}

pub fn rom_build(data: &DataCube, rel_tol: f64) -> Result<Rom> {
    let gram = GramPair::from_data(data)?;
    let (mass, stiffness, regularization) = regularize_gram(&gram.mass, &gram.stiffness, rel_tol)?;
    let r = block_cholesky(&mass, gram.m)?;
    let p = congruence_inverse(&r, &stiffness)?;
    let b_rom = r.columns(0, gram.m).into_owned();
    let (l, wave_clipped) = rom_wave_factor(&p, data.tau, gram.m)?;
    Ok(Rom { n: gram.n, m: gram.m, tau: data.tau, r, p, b_rom, l, regularization, wave_clipped })
}

/// Lower factor of (2/τ²)(I − P) = L Lᵀ and the number of eigenvalues of
/// I − P raised to the 1e−13·max floor (zero unless the plain factorization fails).
pub fn rom_wave_factor(p: &DMatrix<f64>, tau: f64, m: usize) -> Result<(DMatrix<f64>, usize)> {
    let nm = p.nrows();
    let scale = 2.0 / (tau * tau);
    let mut w = (DMatrix::identity(nm, nm) - p) * scale;
    symmetrize(&mut w);
    if let Ok(r) = block_cholesky(&w, m) {
        return Ok((r.transpose(), 0));
    }
    let eig = SymmetricEigen::new(w);
    let floor = 1e-13 * eig.eigenvalues.max();
    if floor <= 0.0 {
        return Err(Error::Factorization { block: 0, reason: "I − P has no positive spectrum".into() });
    }
    let clipped = eig.eigenvalues.iter().filter(|&&l| l < floor).count();
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let mut w2 = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut w2);
    let r = block_cholesky(&w2, m)?;
    Ok((r.transpose(), clipped))
}

/// u^ROM_0..u^ROM_{steps−1}.
pub fn rom_timestep(rom: &Rom, steps: usize) -> Result<Vec<DMatrix<f64>>> {
    if steps == 0 {
        return Err(Error::Argument("steps must be at least 1".into()));
    }
    let mut u: Vec<DMatrix<f64>> = Vec::with_capacity(steps);
    u.push(rom.b_rom.clone());
    if steps > 1 {
        u.push(if rom.n > 1 { rom.r.columns(rom.m, rom.m).into_owned() } else { &rom.p * &rom.b_rom });
    }
    for j in 2..steps {
        let next = 2.0 * (&rom.p * &u[j - 1]) - &u[j - 2];
        u.push(next);
    }
    Ok(u)
}

/// D̂_j = b^ROMᵀ T_j(P^ROM) b^ROM for j < nsteps.
pub fn rom_predict_data(rom: &Rom, nsteps: usize) -> Result<DataCube> {
    let snaps = crate::oracle::chebyshev_snapshots(&rom.p, &rom.b_rom, nsteps);
    let mut d: Vec<DMatrix<f64>> = snaps.iter().map(|u| rom.b_rom.tr_mul(u)).collect();
    d.iter_mut().for_each(symmetrize);
    DataCube::new(rom.tau, d)
}

/// R̂ = (û_0, …, û_{n−1}) with û_0 = (τ/2)Lᵀb^ROM and û_j = û_{j−1} + τ Lᵀ u_j.
pub fn dual_rom_snapshots(rom: &Rom) -> Result<DMatrix<f64>> {
    let u = rom_timestep(rom, rom.n)?;
    let (nm, m) = (rom.nm(), rom.m);
    let lt = rom.l.transpose();
    let mut rhat = DMatrix::zeros(nm, nm);
    let mut cur = &lt * &rom.b_rom * (0.5 * rom.tau);
    rhat.columns_mut(0, m).copy_from(&cur);
    for (j, uj) in u.iter().enumerate().skip(1) {
        cur += &lt * uj * rom.tau;
        rhat.columns_mut(j * m, m).copy_from(&cur);
    }
    Ok(rhat)
}

/// Block Lanczos coefficients behind the wave factor.
#[derive(Debug, Clone)]
pub struct LanczosSteps {
    pub gamma: Vec<DMatrix<f64>>,
    pub gamma_hat: Vec<DMatrix<f64>>,
    /// γ_j = Γ_jΓ_jᵀ
    pub gamma_sym: Vec<DMatrix<f64>>,
    /// γ̂_j = Γ̂_jΓ̂_jᵀ
    pub gamma_hat_sym: Vec<DMatrix<f64>>,
}

fn inverse(a: &DMatrix<f64>, j: usize) -> Result<DMatrix<f64>> {
    let inv = a.clone().try_inverse().ok_or(Error::Extraction(j))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Extraction(j));
    }
    Ok(inv)
}

/// Runs Γ̂_0 → Γ_0 → Γ̂_1 → … from the blocks of L and ⟨b, b⟩.
pub fn extract_lanczos_steps(l: &DMatrix<f64>, m: usize, b_gram: &DMatrix<f64>) -> Result<LanczosSteps> {
    let n = l.nrows() / m;
    let blk = |i: usize, j: usize| l.view((i * m, j * m), (m, m)).into_owned();
    let r00 = block_cholesky(b_gram, m).map_err(|_| Error::Extraction(0))?;
    let mut gamma_hat = vec![inverse(&r00, 0)?];
    let mut gamma = Vec::with_capacity(n);
    for j in 0..n {
        let g = inverse(&(&gamma_hat[j] * blk(j, j)), j)?.transpose();
        if j + 1 < n {
            let next = inverse(&(-(blk(j + 1, j)) * g.transpose()), j + 1)?;
            gamma_hat.push(next);
        }
        gamma.push(g);
    }
    let gamma_sym = gamma.iter().map(|g| g * g.transpose()).collect();
    let gamma_hat_sym = gamma_hat.iter().map(|g| g * g.transpose()).collect();
    Ok(LanczosSteps { gamma, gamma_hat, gamma_sym, gamma_hat_sym })
}

impl LanczosSteps {
    /// L_jj = Γ̂_j⁻¹Γ_j⁻ᵀ, L_{j+1,j} = −Γ̂_{j+1}⁻¹Γ_j⁻ᵀ.
    pub fn reconstruct(&self) -> Result<DMatrix<f64>> {
        let n = self.gamma.len();
        let m = self.gamma[0].nrows();
        let mut l = DMatrix::zeros(n * m, n * m);
        for j in 0..n {
            let g_inv_t = inverse(&self.gamma[j], j)?.transpose();
            let diag = inverse(&self.gamma_hat[j], j)? * &g_inv_t;
            l.view_mut((j * m, j * m), (m, m)).copy_from(&diag);
            if j + 1 < n {
                let sub = -(inverse(&self.gamma_hat[j + 1], j + 1)? * &g_inv_t);
                l.view_mut(((j + 1) * m, j * m), (m, m)).copy_from(&sub);
            }
        }
        Ok(l)
    }
}

/// The equivalent ROM P' = YᵀPY, b' = Yᵀb, R' = YᵀR for a block diagonal
/// orthogonal Y, with the wave factor recomputed.
pub fn orthogonal_transform(rom: &Rom, y: &DMatrix<f64>) -> Result<Rom> {
    let (nm, m) = (rom.nm(), rom.m);
    if y.nrows() != nm || y.ncols() != nm {
        return Err(Error::Argument(format!("Y must be {nm}x{nm}")));
    }
    for bi in 0..rom.n {
        for bj in 0..rom.n {
            let blk = y.view((bi * m, bj * m), (m, m));
            if bi != bj && blk.norm() > 0.0 {
                return Err(Error::Argument(format!("Y has a nonzero off-diagonal block ({bi}, {bj})")));
            }
            if bi == bj {
                let e = (blk.tr_mul(&blk) - DMatrix::<f64>::identity(m, m)).norm();
                if e > 1e-12 {
                    return Err(Error::Argument(format!("diagonal block {bi} is not orthogonal ({e:.2e})")));
                }
            }
        }
    }
    let mut p = y.tr_mul(&rom.p) * y;
    symmetrize(&mut p);
    let (l, wave_clipped) = rom_wave_factor(&p, rom.tau, m)?;
    Ok(Rom {
        p,
        b_rom: y.tr_mul(&rom.b_rom),
        r: y.tr_mul(&rom.r),
        l,
        wave_clipped,
        ..rom.clone()
    })
}

/// Measured deviations from the exact ROM identities.
#[derive(Debug, Clone)]
pub struct RomCheckReport {
    pub data_fit: f64,
    pub off_tridiagonal: f64,
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    pub i_minus_p_min: f64,
    pub dual_lower: f64,
    pub wave_factor: f64,
    pub lanczos: f64,
    pub regularization: RegularizationReport,
}

/// Tolerances applied by [`RomCheckReport::violations`].
#[derive(Debug, Clone, Copy)]
pub struct RomTolerances {
    pub data_fit: f64,
    pub structure: f64,
    pub spectrum: f64,
    pub wave_factor: f64,
    pub lanczos: f64,
}

impl Default for RomTolerances {
    fn default() -> Self {
        Self { data_fit: 1e-8, structure: 1e-8, spectrum: 1e-8, wave_factor: 1e-10, lanczos: 1e-8 }
    }
}

impl RomCheckReport {
    pub fn violations(&self, tol: &RomTolerances) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |name: &str, value: f64, limit: f64| {
            if !(value <= limit) {
                v.push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
            }
        };
        check("data fit", self.data_fit, tol.data_fit);
        check("off-tridiagonal mass", self.off_tridiagonal, tol.structure);
        check("dual lower mass", self.dual_lower, tol.structure);
        check("spectrum excess", (self.spectrum_max - 1.0).max(-1.0 - self.spectrum_min), tol.spectrum);
        check("wave factor", self.wave_factor, tol.wave_factor);
        check("lanczos reconstruction", self.lanczos, tol.lanczos);
        if !(self.i_minus_p_min > 0.0) {
            v.push(format!("I - P has eigenvalue {:.3e}", self.i_minus_p_min));
        }
        v
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("data_fit = {:.3e}", self.data_fit),
            format!("off_tridiagonal = {:.3e}", self.off_tridiagonal),
            format!("spectrum = [{:.12}, {:.12}]", self.spectrum_min, self.spectrum_max),
            format!("i_minus_p_min = {:.3e}", self.i_minus_p_min),
            format!("dual_lower = {:.3e}", self.dual_lower),
            format!("wave_factor = {:.3e}", self.wave_factor),
            format!("lanczos = {:.3e}", self.lanczos),
            format!("clipped = {}", self.regularization.clipped),
            format!("mass_condition = {:.3e}", self.regularization.condition),
        ]
    }
}

pub fn check_invariants(rom: &Rom, data: &DataCube) -> Result<RomCheckReport> {
    let predicted = rom_predict_data(rom, 2 * rom.n)?;
    let data_fit = data.truncated(2 * rom.n).relative_misfit(&predicted);
    let spectrum = rom.p.clone().symmetric_eigenvalues();
    let nm = rom.nm();
    let w = (DMatrix::identity(nm, nm) - &rom.p) * (2.0 / (rom.tau * rom.tau));
    let wave_factor = (&rom.l * rom.l.transpose() - &w).norm() / w.norm();
    let rhat = dual_rom_snapshots(rom)?;
    let steps = extract_lanczos_steps(&rom.l, rom.m, &rom.b_gram())?;
    let lanczos = (steps.reconstruct()? - &rom.l).norm() / rom.l.norm();
    Ok(RomCheckReport {
        data_fit,
        off_tridiagonal: off_band_ratio(&rom.p, rom.m, 1),
        spectrum_min: spectrum.min(),
        spectrum_max: spectrum.max(),
        i_minus_p_min: 1.0 - spectrum.max(),
        dual_lower: lower_block_ratio(&rhat, rom.m),
        wave_factor,
        lanczos,
        regularization: rom.regularization.clone(),
    })
}
