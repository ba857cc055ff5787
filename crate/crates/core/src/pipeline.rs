//! End-to-end runs from a [`RunConfig`]: built-in phantoms, data simulation,
//! ROM construction and checks, search basis, inversion, and output files
//! with a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::born::{born_data, BornInputs};
use crate::config::{BasisKind, MediumSource, Method, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{ArrayGeometry, Field, Grid2D, Medium, SearchBasis};
use crate::inversion::{
    gauss_newton_rom, ls_rtm, partition_of_unity_mesh, reference_projection, ForwardModel,
    GaussNewtonReport, LsInput, MeshOptions,
};
use crate::io;
use crate::rom::{check_invariants, rom_build, Rom, RomCheckReport, RomTolerances};
use crate::wavesim::{add_noise, DataCube, Pulse};

/// Speed and reflectivity of a built-in phantom, before the collar is applied.
/// Geometry is laid out relative to the grid extent so that every phantom
/// scales with the grid.
pub fn phantom(source: MediumSource, grid: &Grid2D, c0: f64, wavelength: f64, contrast: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    let (width, depth) = ((grid.nx - 1) as f64 * grid.h, (grid.nz - 1) as f64 * grid.h);
    let mut c = vec![c0; n];
    let mut q = vec![0.0; n];
    let rel = |i: usize| {
        let (x, z) = grid.coords(i);
        ((x - grid.origin_x) / width.max(grid.h), (z - grid.origin_z) / depth)
    };
    match source {
        MediumSource::Homogeneous => {}
        MediumSource::Layers => {
            // Two layers of opposite sign, a wavelength thick.
            for (i, qi) in q.iter_mut().enumerate() {
                let z = grid.coords(i).1 - grid.origin_z;
                if (1.5 * wavelength..2.5 * wavelength).contains(&z) {
                    *qi = contrast;
                } else if (3.0 * wavelength..3.9 * wavelength).contains(&z) {
                    *qi = -0.7 * contrast;
                }
            }
        }
        MediumSource::Boxes => {
            // Three rectangles: (x0, x1, z0, z1, amplitude relative to contrast).
            let boxes = [
                (0.20, 0.40, 0.30, 0.40, 1.0),
                (0.55, 0.80, 0.45, 0.52, -0.75),
                (0.40, 0.55, 0.65, 0.80, 1.25),
            ];
            for (i, qi) in q.iter_mut().enumerate() {
                let (x, z) = rel(i);
                let x = if grid.is_1d() { 0.5 } else { x };
                for &(x0, x1, z0, z1, a) in &boxes {
                    if (x0..=x1).contains(&x) && (z0..=z1).contains(&z) {
                        *qi = a * contrast;
                    }
                }
            }
        }
        MediumSource::Fractures => {
            // Thin tilted strips of low impedance in a medium whose speed grows
            // gently with depth.
            let strips = [(0.35, 0.15, 0.50, 0.30), (0.55, 0.45, 0.85, 0.60), (0.70, 0.20, 0.40, 0.75)];
            let half = grid.h.max(0.1 * wavelength);
            for (i, (ci, qi)) in c.iter_mut().zip(q.iter_mut()).enumerate() {
                let (x, z) = grid.coords(i);
                let (rx, rz) = rel(i);
                *ci = c0 * (1.0 + 0.15 * rz) * (1.0 + 0.03 * (2.0 * std::f64::consts::PI * rx).sin());
                for &(za, xa, zb, xb) in &strips {
                    let (ax, az) = (grid.origin_x + xa * width, grid.origin_z + za * depth);
                    let (bx, bz) = (grid.origin_x + xb * width, grid.origin_z + zb * depth);
                    let (dx, dz) = (bx - ax, bz - az);
                    let len2 = dx * dx + dz * dz;
                    let t = if len2 > 0.0 { (((x - ax) * dx + (z - az) * dz) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    let dist = (x - ax - t * dx).hypot(z - az - t * dz);
                    if dist <= half {
                        *qi = -contrast.abs();
                    }
                }
            }
        }
    }
    (c, q)
}

/// Everything the pipeline derives from the configuration before simulating.
pub struct Setup {
    pub grid: Grid2D,
    pub medium: Medium,
    pub array: ArrayGeometry,
    pub pulse: Pulse,
    pub tau: f64,
    pub model: ForwardModel,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let grid = Grid2D::new(cfg.grid.nx, cfg.grid.nz, cfg.grid.h)?;
    let lambda = cfg.pulse.wavelength;
    let (mut c, mut q) = phantom(cfg.medium.source, &grid, cfg.medium.c0, lambda, cfg.medium.contrast);
    for (file, target) in [(&cfg.medium.q_file, &mut q), (&cfg.medium.c_file, &mut c)] {
        if let Some(path) = file {
            let f = io::load_field(path)?;
            if (f.grid.nx, f.grid.nz) != (grid.nx, grid.nz) {
                return Err(Error::Config(format!(
                    "{} holds a {}x{} field, configuration asks for {}x{}",
                    path.display(),
                    f.grid.nx,
                    f.grid.nz,
                    grid.nx,
                    grid.nz
                )));
            }
            *target = f.values;
        }
    }
    let mut medium = Medium::new(grid, c, q)?;
    // No scatterers within one wavelength of the array.
    let array_depth = grid.z(cfg.array.row) - grid.origin_z;
    medium.zero_collar(array_depth + lambda);
    let array = ArrayGeometry::centered(&grid, cfg.array.m, cfg.array.pitch, cfg.array.row)?;
    let pulse = Pulse::ricker_for_wavelength(cfg.medium.c0, lambda);
    let tau = cfg.pulse.tau.unwrap_or_else(|| pulse.tau_for_periods(cfg.pulse.periods_per_cutoff));
    let model = ForwardModel::new(
        &medium,
        array.clone(),
        pulse.clone(),
        tau,
        cfg.rom.n,
        cfg.rom.substeps,
        cfg.rom.cheb_order,
        cfg.rom.rel_tol,
    )?;
    Ok(Setup { grid, medium, array, pulse, tau, model })
}

/// Simulated (and possibly noisy) data for the configured medium.
pub fn simulate(cfg: &RunConfig, s: &Setup) -> Result<DataCube> {
    let clean = s.model.data(&s.medium.q)?;
    add_noise(&clean, cfg.noise.level, cfg.noise.seed)
}

/// Range lines of the search basis: from one wavelength below the array to the
/// depth the data can resolve, c0·τ apart unless configured otherwise.
pub fn search_ranges(cfg: &RunConfig, s: &Setup) -> Vec<f64> {
    let g = s.grid;
    let c0 = cfg.medium.c0;
    let start = cfg.basis.range_start.unwrap_or(g.z(cfg.array.row) + cfg.pulse.wavelength);
    let reach = g.z(cfg.array.row) + 0.95 * cfg.rom.n as f64 * c0 * s.tau;
    let end = cfg.basis.range_end.unwrap_or(reach.min(g.z(g.nz - 1)));
    let step = cfg.basis.range_step_factor * c0 * s.tau;
    (0..).map(|k| start + k as f64 * step).take_while(|&z| z <= end + 1e-9).collect()
}

pub fn search_basis(cfg: &RunConfig, s: &Setup) -> Result<SearchBasis> {
    let ranges = search_ranges(cfg, s);
    if ranges.is_empty() {
        return Err(Error::Config("search region is empty: range_start lies below range_end".into()));
    }
    if s.grid.is_1d() {
        return SearchBasis::line_1d(s.grid, &ranges);
    }
    let xs = s.array.cross_ranges(&s.grid);
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    match cfg.basis.kind {
        BasisKind::Tensor => {
            let k = cfg.basis.cross_nodes.max(1);
            let crosses: Vec<f64> = if k == 1 || hi <= lo {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
            };
            SearchBasis::tensor(s.grid, &ranges, &crosses)
        }
        BasisKind::Mesh => {
            let reference = reference_projection(&s.model)?;
            let opts = MeshOptions {
                tol: cfg.basis.tol,
                wavelength: cfg.pulse.wavelength,
                bump_amplitude: cfg.basis.bump_amplitude,
                range_start: ranges[0],
                range_end: *ranges.last().expect("non-empty"),
                range_step: cfg.basis.range_step_factor * cfg.medium.c0 * s.tau,
                candidate_step: cfg.basis.candidate_step.unwrap_or(cfg.pulse.wavelength / 4.0),
            };
            Ok(partition_of_unity_mesh(&reference, &s.model, &opts)?.0)
        }
    }
}

/// Estimate q from data with the configured method.
pub fn invert(cfg: &RunConfig, s: &Setup, data: &DataCube, basis: &SearchBasis) -> Result<(Vec<f64>, GaussNewtonReport)> {
    let opts = &cfg.inversion.gn;
    match cfg.inversion.method {
        Method::RomGn => gauss_newton_rom(data, &s.model, basis, opts),
        Method::LsRtm(LsInput::Raw) => ls_rtm(data, &s.model, basis, opts),
        Method::LsRtm(LsInput::Born) => ls_rtm(&born_cube(s, data)?, &s.model, basis, opts),
    }
}

/// Born data from measured data and the reference run of the model.
pub fn born_cube(s: &Setup, data: &DataCube) -> Result<DataCube> {
    let data_ref = s.model.data(&s.model.zero())?;
    let rom0 = rom_build(&data_ref, s.model.rel_tol)?;
    let rom = rom_build(data, s.model.rel_tol)?;
    born_data(&BornInputs { data_ref, l_q: rom.l, l_0: rom0.l, b_rom0: rom0.b_rom, tau: s.tau })
}

pub struct PipelineRun {
    pub data: DataCube,
    pub rom: Rom,
    pub check: RomCheckReport,
    pub basis: SearchBasis,
    pub coeffs: Vec<f64>,
    pub report: GaussNewtonReport,
    pub q_true: Field,
    pub q_est: Field,
}

pub fn run(cfg: &RunConfig) -> Result<PipelineRun> {
    let s = setup(cfg)?;
    log::info!("simulating {} steps for {} sensors", 2 * cfg.rom.n, s.array.m());
    let data = simulate(cfg, &s)?;
    let rom = rom_build(&data, cfg.rom.rel_tol)?;
    let check = check_invariants(&rom, &data)?;
    let basis = search_basis(cfg, &s)?;
    log::info!("search basis has {} functions", basis.len());
    let (coeffs, report) = invert(cfg, &s, &data, &basis)?;
    let q_est = Field::new(s.grid, basis.evaluate(&coeffs)?)?;
    let q_true = Field::new(s.grid, s.medium.q.clone())?;
    Ok(PipelineRun { data, rom, check, basis, coeffs, report, q_true, q_est })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn method_name(method: Method) -> &'static str {
    match method {
        Method::RomGn => "rom-gn",
        Method::LsRtm(LsInput::Raw) => "ls-rtm raw",
        Method::LsRtm(LsInput::Born) => "ls-rtm born",
    }
}

/// Output directory of one run. Every file goes through [`RunOutputs::put`]
/// so that `manifest.txt` lists its hash; nothing time-dependent is recorded.
pub struct RunOutputs {
    dir: PathBuf,
    facts: Vec<(String, String)>,
    files: Vec<(String, String)>,
}

impl RunOutputs {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), facts: Vec::new(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Adds a `key = value` line to the run section.
    pub fn fact(&mut self, key: &str, value: impl std::fmt::Display) {
        self.facts.push((key.to_string(), value.to_string()));
    }

    /// Writes `manifest.txt`. Without a configuration only the facts, format
    /// versions, invariant tolerances and file hashes are listed.
    pub fn finish(self, cfg: Option<&RunConfig>) -> Result<PathBuf> {
        let tol = RomTolerances::default();
        let mut s = String::from("[run]\n");
        if let Some(cfg) = cfg {
            let _ = writeln!(s, "config_sha256 = {}", sha256_hex(cfg.source_text.as_bytes()));
            let _ = writeln!(s, "medium = {}\nmethod = {}", cfg.medium.source.name(), method_name(cfg.inversion.method));
            let _ = writeln!(s, "noise_level = {}\nseed = {}", cfg.noise.level, cfg.noise.seed);
        }
        for (k, v) in &self.facts {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[formats]");
        for (kind, magic) in [("field", io::FIELD_MAGIC), ("data", io::DATA_MAGIC), ("rom", io::ROM_MAGIC), ("basis", io::BASIS_MAGIC)] {
            let _ = writeln!(s, "{kind} = {}", String::from_utf8_lossy(magic));
        }
        let _ = writeln!(s, "\n[tolerances]");
        if let Some(cfg) = cfg {
            let gn = &cfg.inversion.gn;
            let _ = writeln!(s, "rel_tol = {:e}\nsvd_rel_cutoff = {:e}", cfg.rom.rel_tol, gn.svd_rel_cutoff);
            let _ = writeln!(
                s,
                "fd_step = {:e}\nstep_tol = {:e}\nmax_iter = {}\nmax_halvings = {}",
                gn.fd_step, gn.step_tol, gn.max_iter, gn.max_halvings
            );
        }
        let _ = writeln!(
            s,
            "check_data_fit = {:e}\ncheck_structure = {:e}\ncheck_spectrum = {:e}\ncheck_wave_factor = {:e}\ncheck_lanczos = {:e}",
            tol.data_fit, tol.structure, tol.spectrum, tol.wave_factor, tol.lanczos
        );
        let _ = writeln!(s, "\n[files]");
        for (name, hash) in &self.files {
            let _ = writeln!(s, "{name} = {hash}");
        }
        let path = self.dir.join("manifest.txt");
        fs::write(&path, s)?;
        Ok(path)
    }
}

/// Writes a field as binary grid, PGM image and CSV under one stem.
pub fn put_field(out: &mut RunOutputs, stem: &str, field: &Field) -> Result<()> {
    out.put(&format!("{stem}.romgrid"), &io::encode_field(field)?)?;
    out.put(&format!("{stem}.pgm"), &io::field_pgm(field))?;
    out.put(&format!("{stem}.csv"), io::field_csv(field).as_bytes())
}

impl PipelineRun {
    /// Writes all artifacts and `manifest.txt` into `dir`. Every byte written
    /// depends only on the configuration and seed.
    pub fn write(&self, cfg: &RunConfig, dir: &Path) -> Result<()> {
        let mut out = RunOutputs::create(dir)?;
        out.fact("tau", format!("{:.17e}", self.data.tau));
        out.fact("n", self.rom.n);
        out.fact("m", self.rom.m);
        out.put("data.romdata", &io::encode_data(&self.data)?)?;
        out.put("data.csv", io::data_csv(&self.data).as_bytes())?;
        out.put("rom.romrom", &io::encode_rom(&self.rom)?)?;
        out.put("rom_check.txt", (self.check.lines().join("\n") + "\n").as_bytes())?;
        out.put("basis.rombase", &io::encode_basis(&self.basis)?)?;
        put_field(&mut out, "q_true", &self.q_true)?;
        put_field(&mut out, "q_est", &self.q_est)?;
        out.put("report.txt", self.report.to_text().as_bytes())?;
        out.finish(Some(cfg))?;
        Ok(())
    }
}

/// One measured quantity of the tiny-instance suite.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

/// Compares the simulator and the ROM against dense ground truth on an
/// nx × nz grid (two sensors, one inclusion). The grid must stay within
/// [`crate::oracle::MAX_DOF`] cells.
pub fn oracle_suite(nx: usize, nz: usize, n: usize) -> Result<Vec<OracleCheck>> {
    use crate::oracle::{chebyshev_data, DenseOperator};
    use crate::rom::GramPair;
    use crate::wavesim::assemble_operators;

    let grid = Grid2D::new(nx, nz, 1.0)?;
    let c0 = 1.0;
    let wavelength = 6.0;
    let reference = Medium::homogeneous(grid, c0)?;
    let m = if nx >= 5 { 2 } else { 1 };
    let array = ArrayGeometry::centered(&grid, m, (nx / 3).max(1), 0)?;
    let pulse = Pulse::ricker_for_wavelength(c0, wavelength);
    let tau = pulse.default_tau();
    let q: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (ix, iz) = grid.split(i);
            let inside_x = nx == 1 || (nx / 3..=2 * nx / 3).contains(&ix);
            if inside_x && (nz / 3..nz / 2 + 1).contains(&iz) { 0.25 } else { 0.0 }
        })
        .collect();
    let model = ForwardModel::new(&reference, array, pulse, tau, n, None, 256, 0.0)?;
    let medium = model.medium(&q)?;
    let dense = DenseOperator::new(assemble_operators(&medium).a_dense())?;
    let propagator = dense.leapfrog_propagator(tau, model.substeps);
    let b = &model.sensors.b;

    let data = model.data(&q)?;
    let exact = chebyshev_data(&propagator, b, 2 * n, grid.cell_volume(), tau)?;
    let snaps = model.snapshots(&q, n)?;
    let mut u = nalgebra::DMatrix::zeros(grid.len(), n * m);
    for (j, s) in snaps.iter().enumerate() {
        u.columns_mut(j * m, m).copy_from(s);
    }
    let vol = grid.cell_volume();
    let mass = u.tr_mul(&u) * vol;
    let stiffness = u.tr_mul(&(&propagator * &u)) * vol;
    let gram = GramPair::from_data(&data)?;

    // Leapfrog against cos(jτ√A)b: halving dt must cut the error by four.
    let err_at = |substeps: usize| -> Result<f64> {
        let f = ForwardModel::new(&reference, model.array.clone(), model.pulse.clone(), tau, n, Some(substeps), 256, 0.0)?;
        let s = f.snapshots(&q, 2 * n)?;
        let (mut e, mut scale) = (0.0f64, 0.0f64);
        for (j, sj) in s.iter().enumerate() {
            let c = dense.cos_apply(j as f64 * tau, b);
            e = e.max((sj - &c).norm());
            scale = scale.max(c.norm());
        }
        Ok(e / scale)
    };
    let coarse = err_at(4 * model.substeps)?;
    let fine = err_at(8 * model.substeps)?;

    let rom = rom_build(&data, 0.0)?;
    let report = check_invariants(&rom, &data)?;
    let tol = RomTolerances::default();
    Ok(vec![
        OracleCheck { name: "data vs dense propagator", value: exact.relative_misfit(&data), limit: 1e-10 },
        OracleCheck { name: "mass vs snapshot gram", value: (&gram.mass - &mass).norm() / mass.norm(), limit: 1e-10 },
        OracleCheck {
            name: "stiffness vs snapshot gram",
            value: (&gram.stiffness - &stiffness).norm() / stiffness.norm(),
            limit: 1e-10,
        },
        OracleCheck { name: "leapfrog order deviation", value: (coarse / fine - 4.0).abs(), limit: 0.5 },
        OracleCheck { name: "rom data fit", value: report.data_fit, limit: tol.data_fit },
        OracleCheck { name: "rom off-tridiagonal mass", value: report.off_tridiagonal, limit: tol.structure },
        OracleCheck { name: "dual snapshot lower mass", value: report.dual_lower, limit: tol.structure },
        OracleCheck { name: "lanczos reconstruction", value: report.lanczos, limit: tol.lanczos },
    ])
}
