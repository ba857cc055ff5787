//! Binary file formats and inspection exports.
//!
//! All binary formats start with an ASCII magic tag whose last character is the
//! format version, followed by little-endian fixed-width integers and f64
//! payloads. Decoding is strict: a wrong tag, a short file and trailing bytes
//! are all format errors, so a successful load always re-encodes to the same
//! bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Elements, Field, Grid2D, Node, SearchBasis};
use crate::rom::{RegularizationReport, Rom};
use crate::wavesim::DataCube;

pub const FIELD_MAGIC: &[u8] = b"ROMGRID1";
pub const DATA_MAGIC: &[u8] = b"ROMDATA1";
pub const ROM_MAGIC: &[u8] = b"ROMROM1";
pub const BASIS_MAGIC: &[u8] = b"ROMBASE1";

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }
    /// Row-major dump of a matrix.
    fn matrix(&mut self, a: &DMatrix<f64>) {
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                self.f64(a[(r, c)]);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8], what: &'static str) -> Result<Self> {
        let found = &buf[..magic.len().min(buf.len())];
        if found != magic {
            return Err(Error::Format(format!(
                "{what}: expected magic {}, found {}",
                String::from_utf8_lossy(magic),
                if found.is_empty() { "empty file".to_string() } else { format!("{:?}", String::from_utf8_lossy(found)) }
            )));
        }
        Ok(Self { buf, pos: magic.len(), what })
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!(
                "{}: truncated file, needed {len} bytes at offset {} but only {} remain",
                self.what,
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("{}: element count {count} overflows", self.what)))?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let v = self.f64s(rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix size overflows".into()))?)?;
        Ok(DMatrix::from_row_slice(rows, cols, &v))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after payload",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn grid_header(w: &mut Writer, g: &Grid2D) -> Result<()> {
    w.u32(g.nx)?;
    w.u32(g.nz)?;
    w.f64(g.h);
    w.f64(g.origin_x);
    w.f64(g.origin_z);
    Ok(())
}

fn read_grid(r: &mut Reader) -> Result<Grid2D> {
    let nx = r.u32()?;
    let nz = r.u32()?;
    let h = r.f64()?;
    let (ox, oz) = (r.f64()?, r.f64()?);
    let g = Grid2D::new(nx, nz, h).map_err(|e| Error::Format(format!("{}: bad grid header: {e}", r.what)))?;
    Ok(g.with_origin(ox, oz))
}

pub fn encode_field(field: &Field) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(FIELD_MAGIC);
    grid_header(&mut w, &field.grid)?;
    w.f64s(field.values.iter().copied());
    Ok(w.buf)
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let mut r = Reader::new(bytes, FIELD_MAGIC, "field file")?;
    let grid = read_grid(&mut r)?;
    let values = r.f64s(grid.len())?;
    r.finish()?;
    Field::new(grid, values)
}

pub fn encode_data(data: &DataCube) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(DATA_MAGIC);
    w.u32(data.m)?;
    w.u32(data.nsteps())?;
    w.f64(data.tau);
    for d in &data.d {
        w.matrix(d);
    }
    Ok(w.buf)
}

pub fn decode_data(bytes: &[u8]) -> Result<DataCube> {
    let mut r = Reader::new(bytes, DATA_MAGIC, "data file")?;
    let m = r.u32()?;
    let nsteps = r.u32()?;
    let tau = r.f64()?;
    if m == 0 || nsteps == 0 {
        return Err(Error::Format(format!("data file: empty cube (m = {m}, nsteps = {nsteps})")));
    }
    let d = (0..nsteps).map(|_| r.matrix(m, m)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    DataCube::new(tau, d).map_err(|e| Error::Format(format!("data file: {e}")))
}

/// R, P^ROM, b^ROM and L^ROM. The regularization report is not stored.
pub fn encode_rom(rom: &Rom) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(ROM_MAGIC);
    w.u32(rom.n)?;
    w.u32(rom.m)?;
    w.f64(rom.tau);
    w.matrix(&rom.r);
    w.matrix(&rom.p);
    w.matrix(&rom.b_rom);
    w.matrix(&rom.l);
    Ok(w.buf)
}

pub fn decode_rom(bytes: &[u8]) -> Result<Rom> {
    let mut r = Reader::new(bytes, ROM_MAGIC, "rom file")?;
    let n = r.u32()?;
    let m = r.u32()?;
    let tau = r.f64()?;
    let nm = n.checked_mul(m).filter(|&v| v > 0).ok_or_else(|| Error::Format(format!("rom file: bad size n = {n}, m = {m}")))?;
    let rr = r.matrix(nm, nm)?;
    let p = r.matrix(nm, nm)?;
    let b_rom = r.matrix(nm, m)?;
    let l = r.matrix(nm, nm)?;
    r.finish()?;
    let regularization = RegularizationReport { clipped: 0, condition: f64::NAN, floor: 0.0 };
    Ok(Rom { n, m, tau, r: rr, p, b_rom, l, regularization, wave_clipped: 0 })
}

/// Grid header, nodes as (range, cross-range) pairs, then the element list
/// tagged 2 for segments or 3 for triangles.
pub fn encode_basis(basis: &SearchBasis) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(BASIS_MAGIC);
    grid_header(&mut w, &basis.grid)?;
    w.u32(basis.nodes.len())?;
    for node in &basis.nodes {
        w.f64(node.range);
        w.f64(node.cross);
    }
    match &basis.elements {
        Elements::Segments(s) => {
            w.u32(2)?;
            w.u32(s.len())?;
            for e in s {
                for &i in e {
                    w.u32(i)?;
                }
            }
        }
        Elements::Triangles(t) => {
            w.u32(3)?;
            w.u32(t.len())?;
            for e in t {
                for &i in e {
                    w.u32(i)?;
                }
            }
        }
    }
    Ok(w.buf)
}

pub fn decode_basis(bytes: &[u8]) -> Result<SearchBasis> {
    let mut r = Reader::new(bytes, BASIS_MAGIC, "basis file")?;
    let grid = read_grid(&mut r)?;
    let nn = r.u32()?;
    let nodes = (0..nn)
        .map(|_| Ok(Node { range: r.f64()?, cross: r.f64()? }))
        .collect::<Result<Vec<_>>>()?;
    let kind = r.u32()?;
    let ne = r.u32()?;
    let elements = match kind {
        2 => Elements::Segments((0..ne).map(|_| Ok([r.u32()?, r.u32()?])).collect::<Result<_>>()?),
        3 => Elements::Triangles((0..ne).map(|_| Ok([r.u32()?, r.u32()?, r.u32()?])).collect::<Result<_>>()?),
        k => return Err(Error::Format(format!("basis file: unknown element kind {k}"))),
    };
    r.finish()?;
    SearchBasis::new(grid, nodes, elements).map_err(|e| Error::Format(format!("basis file: {e}")))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

pub fn save_field(path: &Path, field: &Field) -> Result<()> {
    Ok(fs::write(path, encode_field(field)?)?)
}

pub fn load_field(path: &Path) -> Result<Field> {
    decode_field(&read(path)?)
}

pub fn save_data(path: &Path, data: &DataCube) -> Result<()> {
    Ok(fs::write(path, encode_data(data)?)?)
}

pub fn load_data(path: &Path) -> Result<DataCube> {
    decode_data(&read(path)?)
}

pub fn save_rom(path: &Path, rom: &Rom) -> Result<()> {
    Ok(fs::write(path, encode_rom(rom)?)?)
}

pub fn load_rom(path: &Path) -> Result<Rom> {
    decode_rom(&read(path)?)
}

pub fn save_basis(path: &Path, basis: &SearchBasis) -> Result<()> {
    Ok(fs::write(path, encode_basis(basis)?)?)
}

pub fn load_basis(path: &Path) -> Result<SearchBasis> {
    decode_basis(&read(path)?)
}

/// `ix,iz,x,z,value` per grid point, range-major, with a header line.
pub fn field_csv(field: &Field) -> String {
    let g = &field.grid;
    let mut s = String::from("ix,iz,x,z,value\n");
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            let v = field.values[g.index(ix, iz)];
            let _ = writeln!(s, "{ix},{iz},{},{},{v:e}", g.x(ix), g.z(iz));
        }
    }
    s
}

/// One line `j,r,s,value` per entry; no header, so the line count is nsteps·m².
pub fn data_csv(data: &DataCube) -> String {
    let mut s = String::new();
    for (j, d) in data.d.iter().enumerate() {
        for r in 0..data.m {
            for c in 0..data.m {
                let _ = writeln!(s, "{j},{r},{c},{:e}", d[(r, c)]);
            }
        }
    }
    s
}

/// Binary 8-bit PGM, nx wide and nz tall, min–max scaled. A constant field
/// maps to mid-grey.
pub fn field_pgm(field: &Field) -> Vec<u8> {
    let g = &field.grid;
    let (lo, hi) = field
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.nz).into_bytes();
    for iz in 0..g.nz {
        for ix in 0..g.nx {
            let v = field.values[g.index(ix, iz)];
            let px = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 };
            out.push(px);
        }
    }
    out
}
