//! Run configuration in sectioned `key = value` form (TOML).
//!
//! Keys are looked up by dotted path so that a missing required key can be
//! reported by name. Optional keys fall back to defaults tied to the pulse
//! wavelength where that makes sense.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::inversion::{GnOptions, LsInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediumSource {
    Homogeneous,
    Layers,
    Boxes,
    Fractures,
}

impl MediumSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "homogeneous" => Ok(Self::Homogeneous),
            "layers" => Ok(Self::Layers),
            "boxes" => Ok(Self::Boxes),
            "fractures" => Ok(Self::Fractures),
            other => Err(Error::Config(format!(
                "medium.source must be homogeneous, layers, boxes or fractures, got {other:?}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Homogeneous => "homogeneous",
            Self::Layers => "layers",
            Self::Boxes => "boxes",
            Self::Fractures => "fractures",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RomGn,
    LsRtm(LsInput),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// ℓ₁ partition of unity driven by point spread functions.
    Mesh,
    /// Regular grid of nodes over the aperture (a line of hats in 1D).
    Tensor,
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub nx: usize,
    pub nz: usize,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct MediumConfig {
    pub source: MediumSource,
    pub c0: f64,
    /// Peak reflectivity of the built-in phantom.
    pub contrast: f64,
    /// Optional ROMGRID1 files replacing the phantom's q and c.
    pub q_file: Option<PathBuf>,
    pub c_file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ArrayConfig {
    pub m: usize,
    pub pitch: usize,
    pub row: usize,
}

#[derive(Debug, Clone)]
pub struct PulseConfig {
    pub wavelength: f64,
    /// Samples per shortest period at the 5% cutoff (the τ rule).
    pub periods_per_cutoff: f64,
    /// Explicit τ; overrides the rule when present.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RomConfig {
    pub n: usize,
    pub rel_tol: f64,
    pub cheb_order: usize,
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NoiseConfig {
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub tol: f64,
    pub bump_amplitude: f64,
    pub range_start: Option<f64>,
    pub range_end: Option<f64>,
    /// Range spacing in units of c0·τ.
    pub range_step_factor: f64,
    pub candidate_step: Option<f64>,
    /// Cross-range nodes of the tensor basis.
    pub cross_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub method: Method,
    pub gn: GnOptions,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub medium: MediumConfig,
    pub array: ArrayConfig,
    pub pulse: PulseConfig,
    pub rom: RomConfig,
    pub noise: NoiseConfig,
    pub basis: BasisConfig,
    pub inversion: InversionConfig,
    pub output_dir: PathBuf,
    /// The text the configuration was parsed from, kept for the manifest hash.
    pub source_text: String,
}

struct Lookup<'a> {
    root: &'a Table,
}

impl<'a> Lookup<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        let mut parts = key.split('.');
        let mut cur = self.root.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_table()?.get(p)?;
        }
        Some(cur)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn float_of(key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(Error::Config(format!("`{key}` must be a number"))),
        }
    }

    fn uint_of(key: &str, v: &Value) -> Result<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(Error::Config(format!("`{key}` must be a non-negative integer"))),
        }
    }

    fn str_of<'b>(key: &str, v: &'b Value) -> Result<&'b str> {
        v.as_str().ok_or_else(|| Error::Config(format!("`{key}` must be a string")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        Self::float_of(key, self.require(key)?)
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| Self::float_of(key, v))
    }

    fn float_opt(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| Self::float_of(key, v)).transpose()
    }

    fn uint(&self, key: &str) -> Result<usize> {
        Self::uint_of(key, self.require(key)?)
    }

    fn uint_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |v| Self::uint_of(key, v))
    }

    fn uint_opt(&self, key: &str) -> Result<Option<usize>> {
        self.get(key).map(|v| Self::uint_of(key, v)).transpose()
    }

    fn string(&self, key: &str) -> Result<&'a str> {
        Self::str_of(key, self.require(key)?)
    }

    fn string_or(&self, key: &str, default: &'a str) -> Result<&'a str> {
        self.get(key).map_or(Ok(default), |v| Self::str_of(key, v))
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn fraction(key: &str, v: f64) -> Result<f64> {
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must lie in [0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Config(format!("malformed configuration: {e}")))?;
        let l = Lookup { root: &table };

        let grid = GridConfig { nx: l.uint("grid.nx")?, nz: l.uint("grid.nz")?, h: positive("grid.h", l.float_or("grid.h", 1.0)?)? };
        if grid.nx == 0 || grid.nz < 2 {
            return Err(Error::Config(format!("grid must have nx >= 1 and nz >= 2, got {} x {}", grid.nx, grid.nz)));
        }
        let medium = MediumConfig {
            source: MediumSource::parse(l.string("medium.source")?)?,
            c0: positive("medium.c0", l.float("medium.c0")?)?,
            contrast: l.float_or("medium.contrast", 0.2)?,
            q_file: l.get("medium.q_file").map(|v| Lookup::str_of("medium.q_file", v).map(PathBuf::from)).transpose()?,
            c_file: l.get("medium.c_file").map(|v| Lookup::str_of("medium.c_file", v).map(PathBuf::from)).transpose()?,
        };
        let array = ArrayConfig { m: l.uint("array.m")?, pitch: l.uint_or("array.pitch", 1)?, row: l.uint_or("array.row", 0)? };
        if array.m == 0 {
            return Err(Error::Config("`array.m` must be at least 1".into()));
        }
        let pulse = PulseConfig {
            wavelength: positive("pulse.wavelength", l.float("pulse.wavelength")?)?,
            periods_per_cutoff: positive("pulse.periods_per_cutoff", l.float_or("pulse.periods_per_cutoff", 2.5)?)?,
            tau: l.float_opt("pulse.tau")?.map(|t| positive("pulse.tau", t)).transpose()?,
        };
        let rom = RomConfig {
            n: l.uint("rom.n")?,
            rel_tol: fraction("rom.rel_tol", l.float_or("rom.rel_tol", 0.0)?)?,
            cheb_order: l.uint_or("rom.cheb_order", 256)?,
            substeps: l.uint_opt("rom.substeps")?,
        };
        if rom.n == 0 {
            return Err(Error::Config("`rom.n` must be at least 1".into()));
        }
        let level = l.float_or("noise.level", 0.0)?;
        if !(level >= 0.0) {
            return Err(Error::Config(format!("`noise.level` must be non-negative, got {level}")));
        }
        let seed = match l.get("noise.seed") {
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(_) => return Err(Error::Config("`noise.seed` must be a non-negative integer".into())),
            None => 0,
        };
        let noise = NoiseConfig { level, seed };
        let kind = match l.string_or("basis.kind", "tensor")? {
            "mesh" => BasisKind::Mesh,
            "tensor" => BasisKind::Tensor,
            other => return Err(Error::Config(format!("basis.kind must be mesh or tensor, got {other:?}"))),
        };
        let basis = BasisConfig {
            kind,
            tol: fraction("basis.tol", l.float_or("basis.tol", 0.02)?)?,
            bump_amplitude: positive("basis.bump_amplitude", l.float_or("basis.bump_amplitude", 0.1)?)?,
            range_start: l.float_opt("basis.range_start")?,
            range_end: l.float_opt("basis.range_end")?,
            range_step_factor: positive("basis.range_step_factor", l.float_or("basis.range_step_factor", 1.0)?)?,
            candidate_step: l.float_opt("basis.candidate_step")?.map(|v| positive("basis.candidate_step", v)).transpose()?,
            cross_nodes: l.uint_or("basis.cross_nodes", 7)?,
        };
        let defaults = GnOptions::default();
        let method = match l.string_or("inversion.method", "rom-gn")? {
            "rom-gn" => Method::RomGn,
            "ls-rtm" => Method::LsRtm(match l.string_or("inversion.input", "raw")? {
                "raw" => LsInput::Raw,
                "born" => LsInput::Born,
                other => return Err(Error::Config(format!("inversion.input must be raw or born, got {other:?}"))),
            }),
            other => return Err(Error::Config(format!("inversion.method must be rom-gn or ls-rtm, got {other:?}"))),
        };
        let default_iter = if matches!(method, Method::LsRtm(_)) { 1 } else { defaults.max_iter };
        let gn = GnOptions {
            max_iter: l.uint_or("inversion.max_iter", default_iter)?,
            fd_step: positive("inversion.fd_step", l.float_or("inversion.fd_step", defaults.fd_step)?)?,
            svd_rel_cutoff: fraction("inversion.svd_rel_cutoff", l.float_or("inversion.svd_rel_cutoff", defaults.svd_rel_cutoff)?)?,
            step_tol: l.float_or("inversion.step_tol", defaults.step_tol)?,
            max_halvings: l.uint_or("inversion.max_halvings", defaults.max_halvings)?,
        };
        let output_dir = PathBuf::from(l.string("output.dir")?);
        Ok(Self {
            grid,
            medium,
            array,
            pulse,
            rom,
            noise,
            basis,
            inversion: InversionConfig { method, gn },
            output_dir,
            source_text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths inside the file are taken relative to the file.
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.medium.q_file, &mut cfg.medium.c_file].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn is_1d(&self) -> bool {
        self.grid.nx == 1
    }
}
