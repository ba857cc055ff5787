//! `romscat`: command-line front end for simulation, ROM construction and
//! checks, Born data, point spread functions, search meshes and inversion.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use romscat_core::inversion::{ls_rtm_options, point_spread, reference_projection, LsInput};
use romscat_core::io;
use romscat_core::pipeline::{self, put_field, RunOutputs, Setup};
use romscat_core::rom::{check_invariants, rom_build, RomTolerances};
use romscat_core::{DataCube, Error, Field, Method, RunConfig};

/// Exit status for usage and configuration errors.
const EXIT_USAGE: u8 = 2;
/// Exit status for unreadable or malformed files.
const EXIT_IO: u8 = 3;
/// Exit status for failed invariant checks and numerical failures.
const EXIT_CHECK: u8 = 1;

#[derive(Parser)]
#[command(name = "romscat", version, about = "Reduced order model imaging of array scattering data")]
struct Cli {
    /// Noise seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the data cube of the configured medium.
    Simulate(ConfigOut),
    /// Build or check a reduced order model.
    #[command(subcommand)]
    Rom(RomCommand),
    /// Transform measured data into Born data using the configured reference.
    Born {
        #[command(flatten)]
        run: ConfigOut,
        /// Measured data cube.
        #[arg(long)]
        data: PathBuf,
    },
    /// Point spread functions of the reference medium.
    Psf {
        #[command(flatten)]
        run: ConfigOut,
        /// Center depths below the array, in wavelengths.
        #[arg(long, value_delimiter = ',', default_values_t = vec![5.0])]
        depth: Vec<f64>,
        /// Cross-range of the centers; defaults to the middle of the grid.
        #[arg(long)]
        cross: Option<f64>,
    },
    /// Build the search basis and save it.
    Mesh(ConfigOut),
    /// Estimate the reflectivity from a data cube.
    Invert {
        #[command(flatten)]
        run: ConfigOut,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Cube consumed by ls-rtm.
        #[arg(long, value_enum, default_value_t = InputArg::Raw)]
        input: InputArg,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Simulate, build, check and invert in one go.
    Pipeline(ConfigOut),
    /// Validate simulator and ROM against dense ground truth on a tiny grid.
    Oracle {
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 10)]
        nz: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
}

#[derive(Subcommand)]
enum RomCommand {
    /// Build the ROM from data and save it with its invariant report.
    Build {
        #[arg(long)]
        data: PathBuf,
        /// Relative spectral clipping level of the mass matrix.
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check ROM identities against data; exits 1 on any violation.
    Check {
        #[arg(long)]
        data: PathBuf,
        /// Saved ROM to check; built from the data when absent.
        #[arg(long)]
        rom: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
    },
}

#[derive(Args)]
struct ConfigOut {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    RomGn,
    LsRtm,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputArg {
    Raw,
    Born,
}

impl ConfigOut {
    fn load(&self, seed: Option<u64>) -> anyhow::Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = seed {
            cfg.noise.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
    }
}

fn load_data(path: &Path) -> anyhow::Result<DataCube> {
    io::load_data(path).with_context(|| format!("reading {}", path.display()))
}

/// Rejects a data cube whose shape or sampling differs from the configuration.
fn check_consistent(cfg: &RunConfig, s: &Setup, data: &DataCube) -> anyhow::Result<()> {
    if data.nsteps() != 2 * cfg.rom.n || data.m != s.array.m() {
        return Err(Error::Config(format!(
            "data hold {} steps for {} sensors; configuration expects 2n = {} steps for {}",
            data.nsteps(),
            data.m,
            2 * cfg.rom.n,
            s.array.m()
        ))
        .into());
    }
    if ((data.tau - s.tau) / s.tau).abs() > 1e-12 {
        return Err(Error::Config(format!("data sampled at tau = {}, configuration gives {}", data.tau, s.tau)).into());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, dir) = args.load(cli.seed)?;
            let s = pipeline::setup(&cfg)?;
            let data = pipeline::simulate(&cfg, &s)?;
            let mut out = RunOutputs::create(&dir)?;
            out.fact("tau", format!("{:.17e}", data.tau));
            out.put("data.romdata", &io::encode_data(&data)?)?;
            out.put("data.csv", io::data_csv(&data).as_bytes())?;
            put_field(&mut out, "q_true", &Field::new(s.grid, s.medium.q.clone())?)?;
            out.finish(Some(&cfg))?;
            println!("data: m = {}, steps = {}, tau = {:.6}", data.m, data.nsteps(), data.tau);
        }
        Command::Rom(RomCommand::Build { data, rel_tol, out }) => {
            let data = load_data(&data)?;
            let rom = rom_build(&data, rel_tol)?;
            let report = check_invariants(&rom, &data)?;
            let mut dir = RunOutputs::create(&out)?;
            dir.fact("rel_tol", rel_tol);
            dir.put("rom.romrom", &io::encode_rom(&rom)?)?;
            dir.put("rom_check.txt", (report.lines().join("\n") + "\n").as_bytes())?;
            dir.finish(None)?;
            report.lines().iter().for_each(|l| println!("{l}"));
        }
        Command::Rom(RomCommand::Check { data, rom, rel_tol }) => {
            let data = load_data(&data)?;
            let rom = match rom {
                Some(p) => io::load_rom(&p).with_context(|| format!("reading {}", p.display()))?,
                None => rom_build(&data, rel_tol)?,
            };
            let report = check_invariants(&rom, &data)?;
            report.lines().iter().for_each(|l| println!("{l}"));
            let violations = report.violations(&RomTolerances::default());
            if !violations.is_empty() {
                violations.iter().for_each(|v| eprintln!("violation: {v}"));
                return Ok(ExitCode::from(EXIT_CHECK));
            }
            println!("all invariants hold");
        }
        Command::Born { run, data } => {
            let (cfg, dir) = run.load(cli.seed)?;
            let s = pipeline::setup(&cfg)?;
            let data = load_data(&data)?;
            check_consistent(&cfg, &s, &data)?;
            let born = pipeline::born_cube(&s, &data)?;
            let mut out = RunOutputs::create(&dir)?;
            out.put("born.romdata", &io::encode_data(&born)?)?;
            out.put("born.csv", io::data_csv(&born).as_bytes())?;
            out.finish(Some(&cfg))?;
        }
        Command::Psf { run, depth, cross } => {
            let (cfg, dir) = run.load(cli.seed)?;
            let s = pipeline::setup(&cfg)?;
            let g = s.grid;
            let lambda = cfg.pulse.wavelength;
            let ix = match cross {
                Some(x) => ((x - g.origin_x) / g.h).round().clamp(0.0, (g.nx - 1) as f64) as usize,
                None => g.nx / 2,
            };
            let projection = reference_projection(&s.model)?;
            let mut out = RunOutputs::create(&dir)?;
            let mut summary = String::new();
            for (k, d) in depth.iter().enumerate() {
                let iz = g.row_of(g.z(cfg.array.row) + d * lambda);
                let psf = point_spread(&projection, &s.model, g.index(ix, iz), lambda, cfg.basis.bump_amplitude)?;
                let (px, pz) = g.coords(psf.peak());
                let (cx, cz) = g.coords(psf.center);
                let line = format!(
                    "depth {d} wavelengths: center ({cx}, {cz}), peak ({px}, {pz}), lobe moment {:.4e}{}",
                    psf.cross_range_moment(&g),
                    if psf.clipped { ", bump clipped by the grid" } else { "" }
                );
                println!("{line}");
                summary.push_str(&line);
                summary.push('\n');
                put_field(&mut out, &format!("psf_{k}"), &Field::new(g, psf.values)?)?;
            }
            out.put("psf.txt", summary.as_bytes())?;
            out.finish(Some(&cfg))?;
        }
        Command::Mesh(args) => {
            let (cfg, dir) = args.load(cli.seed)?;
            let s = pipeline::setup(&cfg)?;
            let basis = pipeline::search_basis(&cfg, &s)?;
            let mut out = RunOutputs::create(&dir)?;
            out.fact("basis_functions", basis.len());
            out.put("basis.rombase", &io::encode_basis(&basis)?)?;
            out.finish(Some(&cfg))?;
            println!("search basis: {} functions", basis.len());
        }
        Command::Invert { run, data, method, input, max_iter } => {
            let (mut cfg, dir) = run.load(cli.seed)?;
            if let Some(method) = method {
                let chosen = match (method, input) {
                    (MethodArg::RomGn, _) => Method::RomGn,
                    (MethodArg::LsRtm, InputArg::Raw) => Method::LsRtm(LsInput::Raw),
                    (MethodArg::LsRtm, InputArg::Born) => Method::LsRtm(LsInput::Born),
                };
                if matches!(chosen, Method::LsRtm(_)) && !matches!(cfg.inversion.method, Method::LsRtm(_)) {
                    cfg.inversion.gn.max_iter = ls_rtm_options().max_iter;
                }
                cfg.inversion.method = chosen;
            }
            if let Some(k) = max_iter {
                cfg.inversion.gn.max_iter = k;
            }
            let s = pipeline::setup(&cfg)?;
            let data = load_data(&data)?;
            check_consistent(&cfg, &s, &data)?;
            let basis = pipeline::search_basis(&cfg, &s)?;
            let (coeffs, report) = pipeline::invert(&cfg, &s, &data, &basis)?;
            let mut out = RunOutputs::create(&dir)?;
            put_field(&mut out, "q_est", &Field::new(s.grid, basis.evaluate(&coeffs)?)?)?;
            out.put("report.txt", report.to_text().as_bytes())?;
            out.finish(Some(&cfg))?;
            println!("{} after {} iterations, objective {:.4e}", report.status, report.iterations(), report.objectives.last().copied().unwrap_or(f64::NAN));
        }
        Command::Pipeline(args) => {
            let (cfg, dir) = args.load(cli.seed)?;
            let result = pipeline::run(&cfg)?;
            result.write(&cfg, &dir)?;
            result.check.lines().iter().for_each(|l| println!("{l}"));
            println!(
                "{} after {} iterations; outputs in {}",
                result.report.status,
                result.report.iterations(),
                dir.display()
            );
        }
        Command::Oracle { nx, nz, n } => {
            if nx * nz > romscat_core::oracle::MAX_DOF {
                bail!(Error::Config(format!("oracle grid {nx}x{nz} exceeds {} cells", romscat_core::oracle::MAX_DOF)));
            }
            let checks = pipeline::oracle_suite(nx, nz, n)?;
            let mut ok = true;
            for c in &checks {
                println!("{:28} {:.3e} (limit {:.0e}) {}", c.name, c.value, c.limit, if c.passed() { "ok" } else { "FAILED" });
                ok &= c.passed();
            }
            if !ok {
                return Ok(ExitCode::from(EXIT_CHECK));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(Error::Config(_) | Error::Argument(_) | Error::Domain(_)) => EXIT_USAGE,
        Some(Error::Io(_) | Error::Format(_)) => EXIT_IO,
        Some(_) => EXIT_CHECK,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => EXIT_IO,
        None => EXIT_CHECK,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = std::env::var("ROMSCAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
