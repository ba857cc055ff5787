//! Search-basis design from point spread functions, ROM-GN inversion and the
//! least-squares data-fit baseline.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ArrayGeometry, Grid2D, Medium, SearchBasis};
use crate::linalg::{linprog, lstsq_truncated, singular_values};
use crate::rom::{rom_build, Rom};
use crate::wavesim::{
    assemble_operators, required_substeps, sensor_functions, simulate_data, simulate_snapshots,
    DataCube, Pulse, SensorFunctions,
};

/// Everything needed to turn a reflectivity into data: the known kinematic
/// model, the array, the pulse and the time sampling. The sensor functions
/// are computed once in the reference medium and reused for every run.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub grid: Grid2D,
    pub c: Vec<f64>,
    pub array: ArrayGeometry,
    pub pulse: Pulse,
    pub tau: f64,
    /// Number of ROM blocks; data carry 2n steps.
    pub n: usize,
    pub substeps: usize,
    pub sensors: SensorFunctions,
    /// Spectral clipping level for every ROM built by this model.
    pub rel_tol: f64,
}

impl ForwardModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        reference: &Medium,
        array: ArrayGeometry,
        pulse: Pulse,
        tau: f64,
        n: usize,
        substeps: Option<usize>,
        cheb_order: usize,
        rel_tol: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("n must be at least 1".into()));
        }
        let reference = reference.reference();
        let ops = assemble_operators(&reference);
        let substeps = substeps.unwrap_or_else(|| required_substeps(&ops, tau));
        let sensors = sensor_functions(&ops, &array, &pulse, cheb_order)?;
        Ok(Self {
            grid: reference.grid,
            c: reference.c,
            array,
            pulse,
            tau,
            n,
            substeps,
            sensors,
            rel_tol,
        })
    }

    pub fn medium(&self, q: &[f64]) -> Result<Medium> {
        Medium::new(self.grid, self.c.clone(), q.to_vec())
    }

    pub fn data(&self, q: &[f64]) -> Result<DataCube> {
        let ops = assemble_operators(&self.medium(q)?);
        Ok(simulate_data(&ops, &self.sensors, self.tau, 2 * self.n, self.substeps)?.0)
    }

    pub fn snapshots(&self, q: &[f64], count: usize) -> Result<Vec<DMatrix<f64>>> {
        let ops = assemble_operators(&self.medium(q)?);
        simulate_snapshots(&ops, &self.sensors, self.tau, count, self.substeps)
    }

    pub fn rom(&self, q: &[f64]) -> Result<Rom> {
        rom_build(&self.data(q)?, self.rel_tol)
    }

    pub fn zero(&self) -> Vec<f64> {
        vec![0.0; self.grid.len()]
    }
}

/// Orthonormal snapshots V0 = U0 R0⁻¹ of the reference medium.
#[derive(Debug, Clone)]
pub struct ReferenceProjection {
    pub grid: Grid2D,
    /// cells × nm
    pub u0: DMatrix<f64>,
    pub v0: DMatrix<f64>,
    pub rom0: Rom,
    pub data0: DataCube,
}

pub fn reference_projection(model: &ForwardModel) -> Result<ReferenceProjection> {
    let zero = model.zero();
    let data0 = model.data(&zero)?;
    let rom0 = rom_build(&data0, model.rel_tol)?;
    let snaps = model.snapshots(&zero, model.n)?;
    let m = model.array.m();
    let mut u0 = DMatrix::zeros(model.grid.len(), model.n * m);
    for (j, u) in snaps.iter().enumerate() {
        u0.columns_mut(j * m, m).copy_from(u);
    }
    let x = rom0
        .r
        .tr_solve_upper_triangular(&u0.transpose())
        .ok_or_else(|| Error::Numerical("singular reference Cholesky factor".into()))?;
    Ok(ReferenceProjection { grid: model.grid, u0, v0: x.transpose(), rom0, data0 })
}

impl ReferenceProjection {
    /// Grid Gram matrix V0ᵀV0·h^d.
    pub fn gram(&self) -> DMatrix<f64> {
        self.v0.tr_mul(&self.v0) * self.grid.cell_volume()
    }
}

/// Point spread function Ψ_j on the grid.
#[derive(Debug, Clone)]
pub struct PsfField {
    pub center: usize,
    pub values: Vec<f64>,
    /// The bump around the center was cut by the grid boundary.
    pub clipped: bool,
}

impl PsfField {
    pub fn peak(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    /// Σ Ψ (x − x_c)² / Σ Ψ over the main lobe on the center's range row,
    /// i.e. the contiguous run around the row maximum where Ψ stays at or
    /// above half of it. Far low-level tails do not count towards the width.
    pub fn cross_range_moment(&self, grid: &Grid2D) -> f64 {
        let (cx, cz) = grid.split(self.center);
        let row: Vec<f64> = (0..grid.nx).map(|ix| self.values[grid.index(ix, cz)]).collect();
        let (peak, top) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        if !(top > 0.0) {
            return 0.0;
        }
        let (mut lo, mut hi) = (peak, peak);
        while lo > 0 && row[lo - 1] >= 0.5 * top {
            lo -= 1;
        }
        while hi + 1 < grid.nx && row[hi + 1] >= 0.5 * top {
            hi += 1;
        }
        let xc = grid.x(cx);
        let (num, den) = (lo..=hi).fold((0.0, 0.0), |(n, d), ix| {
            (n + row[ix] * (grid.x(ix) - xc).powi(2), d + row[ix])
        });
        num / den
    }
}

/// Radial hat of diameter `diameter` around `center`, normalized so that
/// Σ δ h^d = amplitude. Also reports whether the grid cut the support.
pub fn radial_bump(grid: &Grid2D, center: usize, diameter: f64, amplitude: f64) -> (Vec<f64>, bool) {
    let radius = 0.5 * diameter;
    let (cx, cz) = grid.coords(center);
    let mut f: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (x, z) = grid.coords(i);
            let r = if grid.is_1d() { (z - cz).abs() } else { (x - cx).hypot(z - cz) };
            (1.0 - r / radius).max(0.0)
        })
        .collect();
    let reach = radius / grid.h;
    let (ix, iz) = grid.split(center);
    let clipped = (iz as f64) < reach
        || ((grid.nz - 1 - iz) as f64) < reach
        || (!grid.is_1d() && ((ix as f64) < reach || ((grid.nx - 1 - ix) as f64) < reach));
    let total: f64 = f.iter().sum::<f64>() * grid.cell_volume();
    if total > 0.0 {
        f.iter_mut().for_each(|v| *v *= amplitude / total);
    }
    (f, clipped)
}

/// Ψ_j(x) = ‖V0(x) ΔL‖ for a bump of diameter λ/2 centred at `center`.
pub fn point_spread(
    reference: &ReferenceProjection,
    model: &ForwardModel,
    center: usize,
    wavelength: f64,
    amplitude: f64,
) -> Result<PsfField> {
    let (delta, clipped) = radial_bump(&model.grid, center, 0.5 * wavelength, amplitude);
    if clipped {
        log::warn!("point spread bump at cell {center} is cut by the grid boundary");
    }
    let values = if amplitude == 0.0 {
        vec![0.0; model.grid.len()]
    } else {
        let rom = model.rom(&delta)?;
        let dl = &rom.l - &reference.rom0.l;
        let proj = &reference.v0 * dl;
        proj.row_iter().map(|r| r.norm()).collect()
    };
    Ok(PsfField { center, values, clipped })
}

/// Outcome of the ℓ₁ partition problem on one range line.
#[derive(Debug, Clone)]
pub struct LineSelection {
    pub range: f64,
    /// Tolerance finally accepted, after any relaxation.
    pub tol: f64,
    /// Candidate indices kept as nodes, ascending.
    pub selected: Vec<usize>,
    /// α over all candidates (zero for duplicates).
    pub alpha: Vec<f64>,
    /// max |1 − Σ α Ψ| on the line.
    pub residual: f64,
}

/// Solve min ‖α‖₁ s.t. |1 − Σ_k α_k psi[k](x_i)| ≤ tol for one range line.
/// Candidates whose samples repeat an earlier candidate are dropped first.
pub fn partition_line(psi: &[Vec<f64>], tol: f64, range: f64) -> Result<LineSelection> {
    let k = psi.len();
    if k == 0 {
        return Err(Error::Argument("no candidates on the range line".into()));
    }
    let rows = psi[0].len();
    let keep: Vec<usize> = (0..k).filter(|&j| !(0..j).any(|i| psi[i] == psi[j])).collect();
    let mut tol_used = tol;
    for attempt in 0..=3 {
        if attempt > 0 {
            tol_used *= 1.5;
        }
        let nk = keep.len();
        let mut a = DMatrix::zeros(2 * rows, 2 * nk);
        let mut b = vec![0.0; 2 * rows];
        for i in 0..rows {
            for (c, &j) in keep.iter().enumerate() {
                let v = psi[j][i];
                a[(i, c)] = v;
                a[(i, nk + c)] = -v;
                a[(rows + i, c)] = -v;
                a[(rows + i, nk + c)] = v;
            }
            b[i] = 1.0 + tol_used;
            b[rows + i] = -(1.0 - tol_used);
        }
        match linprog(&vec![1.0; 2 * nk], &a, &b) {
            Ok(x) => {
                let mut alpha = vec![0.0; k];
                for (c, &j) in keep.iter().enumerate() {
                    alpha[j] = x[c] - x[nk + c];
                }
                let selected: Vec<usize> = (0..k).filter(|&j| alpha[j].abs() > 1e-8).collect();
                let residual = (0..rows)
                    .map(|i| (1.0 - (0..k).map(|j| alpha[j] * psi[j][i]).sum::<f64>()).abs())
                    .fold(0.0, f64::max);
                return Ok(LineSelection { range, tol: tol_used, selected, alpha, residual });
            }
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(format!(
        "partition of unity at range {range:.3} infeasible even at tolerance {tol_used:.4} with {} candidates",
        keep.len()
    )))
}

/// Options for [`partition_of_unity_mesh`].
#[derive(Debug, Clone)]
pub struct MeshOptions {
    pub tol: f64,
    pub wavelength: f64,
    pub bump_amplitude: f64,
    /// First and last range line.
    pub range_start: f64,
    pub range_end: f64,
    /// Spacing of the range lines, c0·τ by default.
    pub range_step: f64,
    /// Spacing of the candidate centers across the array aperture.
    pub candidate_step: f64,
}

#[derive(Debug, Clone)]
pub struct MeshReport {
    pub lines: Vec<LineSelection>,
}

/// Nodes from the ℓ₁ partition of unity on every range line, joined into a
/// triangulated search basis. Candidates are spread evenly over the array
/// aperture, always including both ends.
pub fn partition_of_unity_mesh(
    reference: &ReferenceProjection,
    model: &ForwardModel,
    opts: &MeshOptions,
) -> Result<(SearchBasis, MeshReport)> {
    let g = model.grid;
    if !(opts.range_step > 0.0) || opts.range_end < opts.range_start {
        return Err(Error::Argument("range lines need a positive step and an ordered interval".into()));
    }
    if !(opts.candidate_step > 0.0) {
        return Err(Error::Argument("candidate spacing must be positive".into()));
    }
    let mut ranges = Vec::new();
    let mut z = opts.range_start;
    while z <= opts.range_end + 1e-9 {
        ranges.push(z);
        z += opts.range_step;
    }
    let crosses = model.array.cross_ranges(&g);
    let (xmin, xmax) = crosses.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let samples: Vec<usize> = (0..g.nx).filter(|&ix| g.x(ix) >= xmin - 1e-9 && g.x(ix) <= xmax + 1e-9).collect();
    let candidates = candidate_columns(&g, xmin, xmax, opts.candidate_step);
    let mut lines = Vec::with_capacity(ranges.len());
    let mut rows = Vec::with_capacity(ranges.len());
    for &range in &ranges {
        let iz = g.row_of(range);
        let psfs: Vec<PsfField> = candidates
            .par_iter()
            .map(|&ix| point_spread(reference, model, g.index(ix, iz), opts.wavelength, opts.bump_amplitude))
            .collect::<Result<_>>()?;
        let psi: Vec<Vec<f64>> = psfs
            .iter()
            .map(|p| samples.iter().map(|&ix| p.values[g.index(ix, iz)]).collect())
            .collect();
        let sel = partition_line(&psi, opts.tol, g.z(iz))?;
        rows.push((g.z(iz), sel.selected.iter().map(|&j| g.x(candidates[j])).collect::<Vec<f64>>()));
        lines.push(sel);
    }
    let basis = SearchBasis::from_rows(g, &rows)?;
    Ok((basis, MeshReport { lines }))
}

/// Distinct grid columns at roughly `step` spacing from `xmin` to `xmax`.
fn candidate_columns(g: &Grid2D, xmin: f64, xmax: f64, step: f64) -> Vec<usize> {
    let count = ((xmax - xmin) / step).round().max(0.0) as usize;
    let mut cols: Vec<usize> = (0..=count)
        .map(|k| {
            let x = if count == 0 { xmin } else { xmin + (xmax - xmin) * k as f64 / count as f64 };
            g.col_of(x)
        })
        .collect();
    cols.dedup();
    cols
}

/// Maps search coefficients to a residual vector.
pub trait ResidualModel: Sync {
    fn residual(&self, coeffs: &[f64]) -> Result<DVector<f64>>;
}

fn forward_error(coeffs: &[f64], e: Error) -> Error {
    match e {
        Error::Forward { .. } => e,
        other => Error::Forward { coeffs: coeffs.to_vec(), source: Box::new(other) },
    }
}

/// Residual of ROM-GN: the structurally nonzero entries of L^ROM(data) − L^ROM(q^S),
/// i.e. the lower triangles of the diagonal blocks and the full subdiagonal blocks.
pub struct RomGnModel<'a> {
    pub model: &'a ForwardModel,
    pub basis: &'a SearchBasis,
    pub l_data: DMatrix<f64>,
    pub m: usize,
}

pub fn wave_factor_entries(l: &DMatrix<f64>, m: usize) -> DVector<f64> {
    let n = l.nrows() / m;
    let mut v = Vec::with_capacity(n * m * (m + 1) / 2 + n.saturating_sub(1) * m * m);
    for j in 0..n {
        for r in 0..m {
            for c in 0..=r {
                v.push(l[(j * m + r, j * m + c)]);
            }
        }
        if j + 1 < n {
            for r in 0..m {
                for c in 0..m {
                    v.push(l[((j + 1) * m + r, j * m + c)]);
                }
            }
        }
    }
    DVector::from_vec(v)
}

impl ResidualModel for RomGnModel<'_> {
    fn residual(&self, coeffs: &[f64]) -> Result<DVector<f64>> {
        let run = || -> Result<DVector<f64>> {
            let q = self.basis.evaluate(coeffs)?;
            let rom = self.model.rom(&q)?;
            if rom.l.shape() != self.l_data.shape() {
                return Err(Error::Argument("model and data ROMs differ in size".into()));
            }
            Ok(wave_factor_entries(&(&self.l_data - &rom.l), self.m))
        };
        run().map_err(|e| forward_error(coeffs, e))
    }
}

/// Residual of the least-squares data fit: vec(D_j − D̂_j(q^S)) over all j.
pub struct DataFitModel<'a> {
    pub model: &'a ForwardModel,
    pub basis: &'a SearchBasis,
    pub data: DataCube,
}

impl ResidualModel for DataFitModel<'_> {
    fn residual(&self, coeffs: &[f64]) -> Result<DVector<f64>> {
        let run = || -> Result<DVector<f64>> {
            let q = self.basis.evaluate(coeffs)?;
            let pred = self.model.data(&q)?;
            if pred.nsteps() != self.data.nsteps() || pred.m != self.data.m {
                return Err(Error::Argument("predicted and measured cubes differ in shape".into()));
            }
            let v: Vec<f64> = self
                .data
                .d
                .iter()
                .zip(&pred.d)
                .flat_map(|(a, b)| (a - b).iter().copied().collect::<Vec<_>>())
                .collect();
            Ok(DVector::from_vec(v))
        };
        run().map_err(|e| forward_error(coeffs, e))
    }
}

#[derive(Debug, Clone)]
pub struct GnOptions {
    pub max_iter: usize,
    /// Finite-difference step per coefficient.
    pub fd_step: f64,
    /// Singular values below this fraction of σ_max are dropped; 0 disables.
    pub svd_rel_cutoff: f64,
    pub step_tol: f64,
    pub max_halvings: usize,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self { max_iter: 5, fd_step: 1e-4, svd_rel_cutoff: 0.0, step_tol: 1e-6, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnStatus {
    Converged,
    MaxIterations,
    Stalled,
}

impl std::fmt::Display for GnStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GnStatus::Converged => "converged",
            GnStatus::MaxIterations => "max_iterations",
            GnStatus::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct GaussNewtonReport {
    /// Accepted iterates, starting with the initial guess.
    pub iterates: Vec<Vec<f64>>,
    /// Objective ½‖r‖² at each accepted iterate.
    pub objectives: Vec<f64>,
    /// Norm of each accepted step.
    pub step_norms: Vec<f64>,
    /// Singular values of the Jacobian at each iteration, decreasing.
    pub singular_values: Vec<Vec<f64>>,
    /// σ_max / σ_min of each Jacobian.
    pub conditioning: Vec<f64>,
    /// Singular values kept by the truncated solve.
    pub ranks: Vec<usize>,
    pub status: GnStatus,
}

impl GaussNewtonReport {
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }

    /// Structured text, one section per iteration.
    pub fn to_text(&self) -> String {
        let mut s = format!("status = {}\niterations = {}\n", self.status, self.iterations());
        for (k, obj) in self.objectives.iter().enumerate() {
            s.push_str(&format!("\n[iteration {k}]\nobjective = {obj:.12e}\n"));
            if k > 0 {
                s.push_str(&format!("step_norm = {:.6e}\n", self.step_norms[k - 1]));
            }
            if let Some(r) = self.ranks.get(k) {
                s.push_str(&format!("rank = {r}\ncondition = {:.6e}\n", self.conditioning[k]));
            }
        }
        s
    }
}

/// One-sided finite-difference Jacobian, columns evaluated in parallel and
/// assembled in index order.
pub fn jacobian(
    model: &dyn ResidualModel,
    x: &[f64],
    r0: &DVector<f64>,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let cols: Vec<DVector<f64>> = (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut xk = x.to_vec();
            xk[k] += fd_step;
            Ok((model.residual(&xk)? - r0) / fd_step)
        })
        .collect::<Result<_>>()?;
    let mut j = DMatrix::zeros(r0.len(), x.len());
    for (k, c) in cols.iter().enumerate() {
        j.set_column(k, c);
    }
    Ok(j)
}

/// Singular values of J in decreasing order.
pub fn jacobian_conditioning_report(j: &DMatrix<f64>) -> Vec<f64> {
    singular_values(j)
}

pub fn condition_number(sigma: &[f64]) -> f64 {
    match (sigma.first(), sigma.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

fn objective(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Gauss–Newton with a truncated-SVD step and a halving line search.
pub fn gauss_newton(
    model: &dyn ResidualModel,
    x0: &[f64],
    opts: &GnOptions,
) -> Result<(Vec<f64>, GaussNewtonReport)> {
    let mut x = x0.to_vec();
    let mut r = model.residual(&x)?;
    let mut f = objective(&r);
    let mut report = GaussNewtonReport {
        iterates: vec![x.clone()],
        objectives: vec![f],
        step_norms: Vec::new(),
        singular_values: Vec::new(),
        conditioning: Vec::new(),
        ranks: Vec::new(),
        status: GnStatus::MaxIterations,
    };
    for _ in 0..opts.max_iter {
        if f == 0.0 {
            report.status = GnStatus::Converged;
            break;
        }
        let j = jacobian(model, &x, &r, opts.fd_step)?;
        let sol = lstsq_truncated(&j, &(-&r), opts.svd_rel_cutoff);
        report.conditioning.push(condition_number(&sol.singular_values));
        report.singular_values.push(sol.singular_values);
        report.ranks.push(sol.rank);
        let step = sol.x;
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
            match model.residual(&trial) {
                Ok(rt) if objective(&rt) < f => {
                    accepted = Some((trial, rt, scale));
                    break;
                }
                Ok(_) => {}
                Err(e) => log::debug!("trial step rejected: {e}"),
            }
            scale *= 0.5;
        }
        let Some((xn, rn, scale)) = accepted else {
            report.status = GnStatus::Stalled;
            break;
        };
        let snorm = scale * step.norm();
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = xn;
        r = rn;
        f = objective(&r);
        report.iterates.push(x.clone());
        report.objectives.push(f);
        report.step_norms.push(snorm);
        if snorm / xnorm.max(1.0) < opts.step_tol {
            report.status = GnStatus::Converged;
            break;
        }
    }
    Ok((x, report))
}

/// ROM-GN: fit the wave factor of the data ROM.
pub fn gauss_newton_rom(
    data: &DataCube,
    model: &ForwardModel,
    basis: &SearchBasis,
    opts: &GnOptions,
) -> Result<(Vec<f64>, GaussNewtonReport)> {
    let rom = rom_build(data, model.rel_tol)?;
    let res = RomGnModel { model, basis, l_data: rom.l, m: data.m };
    gauss_newton(&res, &vec![0.0; basis.len()], opts)
}

/// Which cube the least-squares fit consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsInput {
    Raw,
    Born,
}

/// Least-squares data fit; one iteration unless `opts` says otherwise.
pub fn ls_rtm(
    data: &DataCube,
    model: &ForwardModel,
    basis: &SearchBasis,
    opts: &GnOptions,
) -> Result<(Vec<f64>, GaussNewtonReport)> {
    let res = DataFitModel { model, basis, data: data.clone() };
    gauss_newton(&res, &vec![0.0; basis.len()], opts)
}

pub fn ls_rtm_options() -> GnOptions {
    GnOptions { max_iter: 1, ..GnOptions::default() }
}
