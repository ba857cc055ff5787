//! Staggered-grid acoustic operators, sensor functions, leapfrog time stepping
//! and scattering-matrix data.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::grid::{ArrayGeometry, Grid2D, Medium};
use crate::linalg::symmetrize;

/// Compressed sparse rows with owned index arrays, for tight mat-vec loops.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    fn from_sprs(m: &CsMat<f64>) -> Self {
        let m = if m.is_csr() { m.clone() } else { m.to_csr() };
        Self {
            nrows: m.rows(),
            ncols: m.cols(),
            indptr: m.indptr().to_proper().to_vec(),
            indices: m.indices().to_vec(),
            data: m.data().to_vec(),
        }
    }

    /// y = self · x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.apply(x, &mut y);
        y
    }

    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
            self.apply(xc.as_slice(), yc.as_mut_slice());
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                d[(i, self.indices[k])] += self.data[k];
            }
        }
        d
    }

    /// max_i Σ_j |a_ij|, an upper bound on the spectral radius.
    pub fn gershgorin(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.data[self.indptr[i]..self.indptr[i + 1]].iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }
}

/// Boundary treatment folded into the stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero normal flux: no face beyond the boundary.
    SoundHard,
    /// Zero pressure: a ghost face with a vanishing ghost value.
    SoundSoft,
}

/// Discrete L(q), L(q)ᵀ and A = L Lᵀ.
///
/// `l` maps face fields to cell fields, `lt` maps cell fields to face fields.
/// Both carry the same quadrature weight h^d, so `l` is exactly the matrix
/// transpose of `lt` and adjointness holds to the last bit.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub grid: Grid2D,
    pub c_ref: f64,
    pub c_max: f64,
    pub accessible: Boundary,
    pub inaccessible: Boundary,
    pub lt: CsMat<f64>,
    pub l: CsMat<f64>,
    pub a: CsMat<f64>,
    lt_csr: Csr,
    a_csr: Csr,
}

impl DiscreteOperators {
    pub fn n_cells(&self) -> usize {
        self.grid.len()
    }

    pub fn n_faces(&self) -> usize {
        self.lt.rows()
    }

    /// Lᵀ u for a cell field u.
    pub fn apply_lt(&self, u: &[f64]) -> Vec<f64> {
        self.lt_csr.mul_vec(u)
    }

    pub fn apply_a(&self, u: &[f64], out: &mut [f64]) {
        self.a_csr.apply(u, out);
    }

    pub fn a_csr(&self) -> &Csr {
        &self.a_csr
    }

    pub fn a_dense(&self) -> DMatrix<f64> {
        self.a_csr.to_dense()
    }

    /// Largest eigenvalue of A by 50 power iterations from a checkerboard
    /// start, which is close to the top eigenvector of a Laplacian.
    pub fn power_iteration_bound(&self) -> f64 {
        let g = &self.grid;
        let mut x: Vec<f64> = (0..g.len())
            .map(|i| {
                let (ix, iz) = g.split(i);
                let sign = if (ix + iz) % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + 0.1 * (i as f64).sin())
            })
            .collect();
        let mut y = vec![0.0; g.len()];
        let mut lambda = 0.0;
        for _ in 0..50 {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nx);
            self.apply_a(&x, &mut y);
            lambda = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut x, &mut y);
        }
        lambda
    }
}

/// Face between cells `a` and `b` (either may be a sound-soft ghost).
struct Face {
    a: Option<usize>,
    b: Option<usize>,
}

pub fn assemble_operators(medium: &Medium) -> DiscreteOperators {
    let g = medium.grid;
    let (c, q) = (&medium.c, &medium.q);
    let mut faces = Vec::new();
    // range-direction faces: between rows, plus a sound-soft ghost below the bottom
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            let a = g.index(ix, iz);
            let b = (iz + 1 < g.nz).then(|| g.index(ix, iz + 1));
            faces.push(Face { a: Some(a), b });
        }
    }
    // cross-range faces with sound-soft ghosts at both sides
    if !g.is_1d() {
        for iz in 0..g.nz {
            for ix in 0..=g.nx {
                let a = (ix > 0).then(|| g.index(ix - 1, iz));
                let b = (ix < g.nx).then(|| g.index(ix, iz));
                faces.push(Face { a, b });
            }
        }
    }
    let h = g.h;
    let mut tri = TriMat::new((faces.len(), g.len()));
    for (f, face) in faces.iter().enumerate() {
        let real = face.a.or(face.b).expect("face touches a cell");
        let ca = face.a.map_or(c[real], |i| c[i]);
        let cb = face.b.map_or(c[real], |i| c[i]);
        let qa = face.a.map_or(q[real], |i| q[i]);
        let qb = face.b.map_or(q[real], |i| q[i]);
        let cf = 0.5 * (ca + cb);
        let grad = 0.5 * cf * (qb - qa) / h;
        if let Some(a) = face.a {
            tri.add_triplet(f, a, -cf.sqrt() * ca.sqrt() / h + 0.5 * grad);
        }
        if let Some(b) = face.b {
            tri.add_triplet(f, b, cf.sqrt() * cb.sqrt() / h + 0.5 * grad);
        }
    }
    let lt: CsMat<f64> = tri.to_csr();
    let l: CsMat<f64> = lt.transpose_view().to_csr();
    let a: CsMat<f64> = &l * &lt;
    let c_ref = c.iter().sum::<f64>() / c.len() as f64;
    DiscreteOperators {
        grid: g,
        c_ref,
        c_max: c.iter().cloned().fold(0.0, f64::max),
        accessible: Boundary::SoundHard,
        inaccessible: Boundary::SoundSoft,
        lt_csr: Csr::from_sprs(&lt),
        a_csr: Csr::from_sprs(&a),
        lt,
        l,
        a,
    }
}

/// f̂(ω) supplied by the caller.
pub type SpectrumFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PulseKind {
    /// Emitted waveform is a Ricker wavelet.
    Ricker,
    /// f̂ ≡ 1, so the sensor functions are plain grid deltas.
    Flat,
    Custom(SpectrumFn),
}

impl std::fmt::Debug for PulseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PulseKind::Ricker => write!(f, "Ricker"),
            PulseKind::Flat => write!(f, "Flat"),
            PulseKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Probing pulse, described through f̂(ω) with f̂^{1/2} the emitted spectrum.
#[derive(Debug, Clone)]
pub struct Pulse {
    pub kind: PulseKind,
    /// Peak angular frequency ω_p.
    pub center_frequency: f64,
}

impl Pulse {
    pub fn ricker(center_frequency: f64) -> Self {
        Self { kind: PulseKind::Ricker, center_frequency }
    }

    /// Ricker pulse whose central wavelength in speed `c0` is `wavelength`.
    pub fn ricker_for_wavelength(c0: f64, wavelength: f64) -> Self {
        Self::ricker(2.0 * PI * c0 / wavelength)
    }

    pub fn flat() -> Self {
        Self { kind: PulseKind::Flat, center_frequency: 1.0 }
    }

    pub fn custom(spectrum: SpectrumFn, center_frequency: f64) -> Self {
        Self { kind: PulseKind::Custom(spectrum), center_frequency }
    }

    /// f̂(ω).
    pub fn spectrum(&self, omega: f64) -> f64 {
        match &self.kind {
            PulseKind::Ricker => {
                let r = (omega / self.center_frequency).powi(2);
                (r * (1.0 - r).exp()).powi(2)
            }
            PulseKind::Flat => 1.0,
            PulseKind::Custom(f) => f(omega),
        }
    }

    /// θ ↦ f̂^{1/2}(√θ), the filter applied to A.
    pub fn sensor_filter(&self, theta: f64) -> Result<f64> {
        match &self.kind {
            PulseKind::Ricker => {
                let r = theta / self.center_frequency.powi(2);
                Ok(r * (1.0 - r).exp())
            }
            PulseKind::Flat => Ok(1.0),
            PulseKind::Custom(f) => {
                let omega = theta.max(0.0).sqrt();
                let v = f(omega);
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "pulse spectrum must be non-negative, f̂({omega:.4}) = {v:.4e}"
                    )));
                }
                Ok(v.sqrt())
            }
        }
    }

    /// Highest frequency where f̂ still reaches 5% of its peak.
    pub fn cutoff_frequency(&self) -> f64 {
        let wp = self.center_frequency;
        let (mut lo, mut hi) = (wp, 10.0 * wp);
        let target = 0.05 * self.spectrum(wp);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.spectrum(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Sampling interval that puts 2.5 samples in the shortest period.
    /// τ such that the shortest period at cutoff spans `periods` samples.
    pub fn tau_for_periods(&self, periods: f64) -> f64 {
        2.0 * PI / (periods * self.cutoff_frequency())
    }

    pub fn default_tau(&self) -> f64 {
        self.tau_for_periods(2.5)
    }

    /// Time half-width beyond which the emitted wavelet is below 1e−6 of its peak.
    pub fn support(&self) -> f64 {
        2.0 * (1e6f64).ln().sqrt() / self.center_frequency
    }
}

/// The quasimatrix b = (b^(1), …, b^(m)) as columns of a cells × m matrix.
#[derive(Debug, Clone)]
pub struct SensorFunctions {
    pub b: DMatrix<f64>,
    /// Right end of the Chebyshev interval used for the filter.
    pub spectral_bound: f64,
}

impl SensorFunctions {
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Chebyshev coefficients of f on [−1, 1] from N+1 Gauss–Chebyshev nodes.
fn chebyshev_coefficients(f: impl Fn(f64) -> Result<f64>, order: usize) -> Result<Vec<f64>> {
    let n = order + 1;
    let nodes: Vec<f64> = (0..n).map(|k| (PI * (k as f64 + 0.5) / n as f64).cos()).collect();
    let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect::<Result<_>>()?;
    Ok((0..n)
        .map(|j| {
            let s: f64 = (0..n)
                .map(|k| vals[k] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                .sum();
            let w = if j == 0 { 1.0 } else { 2.0 };
            w * s / n as f64
        })
        .collect())
}

pub fn sensor_functions(
    ops: &DiscreteOperators,
    array: &ArrayGeometry,
    pulse: &Pulse,
    cheb_order: usize,
) -> Result<SensorFunctions> {
    if cheb_order < 8 {
        return Err(Error::Argument(format!("cheb_order must be at least 8, got {cheb_order}")));
    }
    let g = ops.grid;
    let ncell = g.len();
    let vol = g.cell_volume();
    let m = array.m();
    let mut b = DMatrix::zeros(ncell, m);
    if let PulseKind::Flat = pulse.kind {
        for (s, &p) in array.positions.iter().enumerate() {
            b[(p, s)] = 1.0 / vol;
        }
        return Ok(SensorFunctions { b, spectral_bound: 0.0 });
    }
    let bound = (1.05 * ops.power_iteration_bound()).min(ops.a_csr().gershgorin());
    let coeffs =
        chebyshev_coefficients(|x| pulse.sensor_filter(0.5 * bound * (x + 1.0)), cheb_order)?;
    let a = ops.a_csr();
    let cols: Vec<Vec<f64>> = array
        .positions
        .par_iter()
        .map(|&p| {
            // Σ c_k T_k(X) δ with X = 2A/bound − I, by the three-term recursion
            let mut t_prev = vec![0.0; ncell];
            t_prev[p] = 1.0 / vol;
            let mut acc: Vec<f64> = t_prev.iter().map(|v| coeffs[0] * v).collect();
            let mut ax = vec![0.0; ncell];
            a.apply(&t_prev, &mut ax);
            let mut t_cur: Vec<f64> =
                ax.iter().zip(&t_prev).map(|(av, v)| 2.0 * av / bound - v).collect();
            for (o, t) in acc.iter_mut().zip(&t_cur) {
                *o += coeffs[1] * t;
            }
            for ck in &coeffs[2..] {
                a.apply(&t_cur, &mut ax);
                for i in 0..ncell {
                    let x = 2.0 * ax[i] / bound - t_cur[i];
                    let next = 2.0 * x - t_prev[i];
                    t_prev[i] = t_cur[i];
                    t_cur[i] = next;
                    acc[i] += ck * next;
                }
            }
            acc
        })
        .collect();
    for (s, col) in cols.iter().enumerate() {
        b.column_mut(s).copy_from_slice(col);
    }
    Ok(SensorFunctions { b, spectral_bound: bound })
}

/// Internal step count per sampling interval needed for stability.
pub fn required_substeps(ops: &DiscreteOperators, tau: f64) -> usize {
    let dt_max = 0.5 * ops.grid.h / ops.c_max;
    (tau / dt_max).ceil().max(1.0) as usize
}

fn check_cfl(ops: &DiscreteOperators, tau: f64, substeps: usize) -> Result<f64> {
    let max_c = ops.c_max;
    if substeps == 0 {
        return Err(Error::Config("substeps must be at least 1".into()));
    }
    let dt = tau / substeps as f64;
    if dt > 0.5 * ops.grid.h / max_c {
        return Err(Error::Config(format!(
            "time step {dt:.4e} violates CFL bound {:.4e}; use at least {} substeps",
            0.5 * ops.grid.h / max_c,
            required_substeps(ops, tau)
        )));
    }
    Ok(dt)
}

/// Leapfrog for one field, calling `visit(j, u)` at every t = jτ, j < count.
fn leapfrog(
    ops: &DiscreteOperators,
    u0: &[f64],
    dt: f64,
    count: usize,
    substeps: usize,
    mut visit: impl FnMut(usize, &[f64]),
) {
    let n = u0.len();
    let dt2 = dt * dt;
    let mut prev = u0.to_vec();
    visit(0, &prev);
    if count == 1 {
        return;
    }
    let mut au = vec![0.0; n];
    ops.apply_a(&prev, &mut au);
    let mut cur: Vec<f64> = prev.iter().zip(&au).map(|(u, a)| u - 0.5 * dt2 * a).collect();
    let total = (count - 1) * substeps;
    for k in 1..=total {
        if k % substeps == 0 {
            visit(k / substeps, &cur);
        }
        if k == total {
            break;
        }
        ops.apply_a(&cur, &mut au);
        for i in 0..n {
            let next = 2.0 * cur[i] - prev[i] - dt2 * au[i];
            prev[i] = cur[i];
            cur[i] = next;
        }
    }
}

/// Wave fields u_0..u_{count−1} at t = jτ for every source, as cells × m blocks.
pub fn simulate_snapshots(
    ops: &DiscreteOperators,
    b: &SensorFunctions,
    tau: f64,
    count: usize,
    substeps: usize,
) -> Result<Vec<DMatrix<f64>>> {
    if count == 0 {
        return Err(Error::Argument("snapshot count must be at least 1".into()));
    }
    let dt = check_cfl(ops, tau, substeps)?;
    let ncell = ops.n_cells();
    let per_source: Vec<Vec<Vec<f64>>> = (0..b.m())
        .into_par_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(count);
            leapfrog(ops, b.b.column(s).as_slice(), dt, count, substeps, |_, u| out.push(u.to_vec()));
            out
        })
        .collect();
    Ok((0..count)
        .map(|j| {
            let mut u = DMatrix::zeros(ncell, b.m());
            for (s, src) in per_source.iter().enumerate() {
                u.column_mut(s).copy_from_slice(&src[j]);
            }
            u
        })
        .collect())
}

/// Time-sampled scattering matrices D_0..D_{nsteps−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    pub m: usize,
    pub tau: f64,
    pub d: Vec<DMatrix<f64>>,
}

impl DataCube {
    pub fn new(tau: f64, d: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = d.first().map_or(0, |x| x.nrows());
        if d.is_empty() || m == 0 {
            return Err(Error::Argument("data cube needs at least one nonempty step".into()));
        }
        if d.iter().any(|x| x.nrows() != m || x.ncols() != m) {
            return Err(Error::Argument(format!("every step must be {m}x{m}")));
        }
        Ok(Self { m, tau, d })
    }

    pub fn nsteps(&self) -> usize {
        self.d.len()
    }

    /// Number of ROM blocks n = nsteps / 2.
    pub fn n(&self) -> usize {
        self.d.len() / 2
    }

    pub fn max_norm(&self) -> f64 {
        self.d.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn rms(&self) -> f64 {
        let (s, k) = self
            .d
            .iter()
            .fold((0.0, 0usize), |(s, k), x| (s + x.norm_squared(), k + x.len()));
        (s / k as f64).sqrt()
    }

    /// max_j ‖D_j − E_j‖ / max_j ‖D_j‖.
    pub fn relative_misfit(&self, other: &DataCube) -> f64 {
        let num = self.d.iter().zip(&other.d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        num / self.max_norm().max(f64::MIN_POSITIVE)
    }

    pub fn truncated(&self, nsteps: usize) -> Self {
        Self { m: self.m, tau: self.tau, d: self.d[..nsteps.min(self.d.len())].to_vec() }
    }
}

/// D_j = ⟨b, u_j⟩ before symmetrization, plus the largest relative asymmetry.
pub fn record_data_raw(
    grid: &Grid2D,
    b: &SensorFunctions,
    snapshots: &[DMatrix<f64>],
) -> (Vec<DMatrix<f64>>, f64) {
    let vol = grid.cell_volume();
    let raw: Vec<DMatrix<f64>> = snapshots.iter().map(|u| b.b.tr_mul(u) * vol).collect();
    let scale = raw.iter().map(|d| d.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let asym = raw.iter().map(|d| (d - d.transpose()).norm()).fold(0.0, f64::max) / scale;
    (raw, asym)
}

pub fn record_data(
    grid: &Grid2D,
    b: &SensorFunctions,
    snapshots: &[DMatrix<f64>],
    tau: f64,
) -> Result<DataCube> {
    let (mut raw, _) = record_data_raw(grid, b, snapshots);
    raw.iter_mut().for_each(symmetrize);
    DataCube::new(tau, raw)
}

/// Data cube recorded on the fly, without keeping the wave fields. Also
/// returns the relative asymmetry measured before symmetrization.
pub fn simulate_data(
    ops: &DiscreteOperators,
    b: &SensorFunctions,
    tau: f64,
    nsteps: usize,
    substeps: usize,
) -> Result<(DataCube, f64)> {
    if nsteps == 0 {
        return Err(Error::Argument("nsteps must be at least 1".into()));
    }
    let dt = check_cfl(ops, tau, substeps)?;
    let vol = ops.grid.cell_volume();
    let m = b.m();
    let columns: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|s| {
            let mut cols = vec![vec![0.0; m]; nsteps];
            leapfrog(ops, b.b.column(s).as_slice(), dt, nsteps, substeps, |j, u| {
                for r in 0..m {
                    cols[j][r] = b.b.column(r).iter().zip(u).map(|(x, y)| x * y).sum::<f64>() * vol;
                }
            });
            cols
        })
        .collect();
    let mut raw: Vec<DMatrix<f64>> = (0..nsteps)
        .map(|j| DMatrix::from_fn(m, m, |r, s| columns[s][j][r]))
        .collect();
    let scale = raw.iter().map(|d| d.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let asym = raw.iter().map(|d| (d - d.transpose()).norm()).fold(0.0, f64::max) / scale;
    raw.iter_mut().for_each(symmetrize);
    Ok((DataCube::new(tau, raw)?, asym))
}

/// Discrete energy ½‖(u_{k+1} − u_k)/dt‖² + ½⟨Lᵀu_{k+1}, Lᵀu_k⟩ at every
/// internal step, which leapfrog conserves exactly in exact arithmetic.
pub fn leapfrog_energy(ops: &DiscreteOperators, u0: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let vol = ops.grid.cell_volume();
    let n = u0.len();
    let mut au = vec![0.0; n];
    let mut prev = u0.to_vec();
    ops.apply_a(&prev, &mut au);
    let mut cur: Vec<f64> = prev.iter().zip(&au).map(|(u, a)| u - 0.5 * dt * dt * a).collect();
    let mut out = Vec::with_capacity(steps);
    let mut lt_prev = ops.apply_lt(&prev);
    for _ in 0..steps {
        let lt_cur = ops.apply_lt(&cur);
        let kin: f64 = cur.iter().zip(&prev).map(|(a, b)| ((a - b) / dt).powi(2)).sum();
        let pot: f64 = lt_cur.iter().zip(&lt_prev).map(|(a, b)| a * b).sum();
        out.push(0.5 * (kin + pot) * vol);
        ops.apply_a(&cur, &mut au);
        for i in 0..n {
            let next = 2.0 * cur[i] - prev[i] - dt * dt * au[i];
            prev[i] = cur[i];
            cur[i] = next;
        }
        lt_prev = lt_cur;
    }
    out
}

/// Adds N(0, (level·s)²) to every entry, s the RMS of the cube, keeping each
/// D_j symmetric: the upper triangle is drawn and mirrored.
pub fn add_noise(data: &DataCube, level: f64, seed: u64) -> Result<DataCube> {
    if !(level >= 0.0) {
        return Err(Error::Argument(format!("noise level must be non-negative, got {level}")));
    }
    if level == 0.0 {
        return Ok(data.clone());
    }
    let sigma = level * data.rms();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    for d in out.d.iter_mut() {
        let m = d.nrows();
        for r in 0..m {
            for s in r..m {
                let e = normal.sample(&mut rng);
                d[(r, s)] += e;
                if s != r {
                    d[(s, r)] = d[(r, s)];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hom_1d(nz: usize, c: f64) -> DiscreteOperators {
        let g = Grid2D::one_d(nz, 1.0).unwrap();
        assemble_operators(&Medium::homogeneous(g, c).unwrap())
    }

    #[test]
    fn three_cell_stencil() {
        let ops = hom_1d(3, 2.0);
        let a = ops.a_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]) * 4.0;
        assert!((a - expect).norm() < 1e-14);
    }

    #[test]
    fn constant_reflectivity_is_invisible() {
        let g = Grid2D::new(5, 6, 0.5).unwrap();
        let c: Vec<f64> = (0..30).map(|i| 1.0 + 0.01 * i as f64).collect();
        let m0 = Medium::new(g, c.clone(), vec![0.0; 30]).unwrap();
        let m1 = Medium::new(g, c, vec![0.3; 30]).unwrap();
        assert_eq!(assemble_operators(&m0).a_dense(), assemble_operators(&m1).a_dense());
    }

    #[test]
    fn flat_pulse_gives_deltas() {
        let g = Grid2D::new(7, 5, 0.5).unwrap();
        let ops = assemble_operators(&Medium::homogeneous(g, 1.0).unwrap());
        let arr = ArrayGeometry::centered(&g, 2, 2, 1).unwrap();
        let sf = sensor_functions(&ops, &arr, &Pulse::flat(), 16).unwrap();
        assert_eq!(sf.b[(arr.positions[0], 0)], 4.0);
        assert_eq!(sf.b.column(0).iter().filter(|v| **v != 0.0).count(), 1);
        assert!(sensor_functions(&ops, &arr, &Pulse::flat(), 7).is_err());
    }

    #[test]
    fn negative_spectrum_rejected() {
        let ops = hom_1d(12, 1.0);
        let arr = ArrayGeometry::new(&ops.grid, vec![1], 1.0).unwrap();
        let pulse = Pulse::custom(Arc::new(|w: f64| 1.0 - w), 1.0);
        assert!(matches!(sensor_functions(&ops, &arr, &pulse, 16), Err(Error::Domain(_))));
    }

    #[test]
    fn cutoff_ratio() {
        let p = Pulse::ricker(1.0);
        assert!((p.cutoff_frequency() - 1.96).abs() < 0.01);
    }

    #[test]
    fn cfl_violation_reports_substeps() {
        let ops = hom_1d(10, 1.0);
        let arr = ArrayGeometry::new(&ops.grid, vec![0], 1.0).unwrap();
        let sf = sensor_functions(&ops, &arr, &Pulse::flat(), 8).unwrap();
        let err = simulate_snapshots(&ops, &sf, 1.0, 3, 1).unwrap_err();
        assert!(err.to_string().contains("at least 2 substeps"), "{err}");
        let one = simulate_snapshots(&ops, &sf, 1.0, 1, 2).unwrap();
        assert_eq!(one[0], sf.b);
    }

    #[test]
    fn noise_is_reproducible_and_symmetric() {
        let d: Vec<DMatrix<f64>> = (0..4).map(|j| DMatrix::from_element(3, 3, j as f64 + 1.0)).collect();
        let cube = DataCube::new(0.5, d).unwrap();
        assert_eq!(add_noise(&cube, 0.0, 1).unwrap(), cube);
        let a = add_noise(&cube, 0.05, 7).unwrap();
        assert_eq!(a, add_noise(&cube, 0.05, 7).unwrap());
        assert_ne!(a, add_noise(&cube, 0.05, 8).unwrap());
        for x in &a.d {
            assert_eq!(x, &x.transpose());
        }
        assert!(add_noise(&cube, -0.1, 1).is_err());
    }
}
