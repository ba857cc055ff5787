//! Uniform square grids, media, sensor arrays and the hat-function search basis.
//!
//! Fields are stored range-major: the value at cross-range index `ix` and range
//! (depth) index `iz` lives at `iz * nx + ix`. Range increases away from the
//! accessible boundary, which is the row `iz = 0`. A grid with `nx = 1` is the
//! one-dimensional case.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub nz: usize,
    /// Cell size ℓ, shared by both directions.
    pub h: f64,
    /// Cross-range coordinate of column 0.
    pub origin_x: f64,
    /// Range coordinate of row 0 (the accessible boundary).
    pub origin_z: f64,
}

impl Grid2D {
    pub fn new(nx: usize, nz: usize, h: f64) -> Result<Self> {
        if nx < 1 || nz < 2 {
            return Err(Error::Argument(format!(
                "grid needs nx >= 1 and nz >= 2, got nx = {nx}, nz = {nz}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Argument(format!("grid step must be positive, got {h}")));
        }
        Ok(Self { nx, nz, h, origin_x: 0.0, origin_z: 0.0 })
    }

    pub fn one_d(nz: usize, h: f64) -> Result<Self> {
        Self::new(1, nz, h)
    }

    pub fn with_origin(mut self, origin_x: f64, origin_z: f64) -> Self {
        self.origin_x = origin_x;
        self.origin_z = origin_z;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_1d(&self) -> bool {
        self.nx == 1
    }

    /// Spatial dimension d (1 or 2).
    pub fn dim(&self) -> i32 {
        if self.is_1d() {
            1
        } else {
            2
        }
    }

    /// Quadrature weight h^d of one grid point.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim())
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz * self.nx + ix
    }

    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.origin_x + ix as f64 * self.h
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.origin_z + iz as f64 * self.h
    }

    /// (cross-range, range) coordinates of a grid point.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (ix, iz) = self.split(idx);
        (self.x(ix), self.z(iz))
    }

    /// Grid row closest to a range coordinate, clamped into the grid.
    pub fn row_of(&self, z: f64) -> usize {
        let r = ((z - self.origin_z) / self.h).round();
        r.clamp(0.0, (self.nz - 1) as f64) as usize
    }

    /// Grid column closest to a cross-range coordinate, clamped into the grid.
    pub fn col_of(&self, x: f64) -> usize {
        let c = ((x - self.origin_x) / self.h).round();
        c.clamp(0.0, (self.nx - 1) as f64) as usize
    }

    /// Grid inner product ⟨u, v⟩ = Σ u v h^d.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume()
    }
}

/// A scalar field together with the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Argument(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }
}

/// q = ln √σ pointwise.
pub fn reflectivity_from_impedance(sigma: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::Domain(format!("impedance must be positive, cell {i} has {s}")));
    }
    Ok(sigma.iter().map(|s| 0.5 * s.ln()).collect())
}

/// σ = exp(2q) pointwise.
pub fn impedance_from_reflectivity(q: &[f64]) -> Vec<f64> {
    q.iter().map(|q| (2.0 * q).exp()).collect()
}

/// Wave speed and reflectivity on a grid. The impedance is derived from the
/// reflectivity so the two can never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    pub grid: Grid2D,
    pub c: Vec<f64>,
    pub q: Vec<f64>,
}

impl Medium {
    pub fn new(grid: Grid2D, c: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if c.len() != grid.len() || q.len() != grid.len() {
            return Err(Error::Argument(format!(
                "medium fields must have {} values (c: {}, q: {})",
                grid.len(),
                c.len(),
                q.len()
            )));
        }
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("wave speed must be positive, cell {i} has {v}")));
        }
        if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("reflectivity must be finite, cell {i} has {v}")));
        }
        Ok(Self { grid, c, q })
    }

    pub fn homogeneous(grid: Grid2D, c0: f64) -> Result<Self> {
        Self::new(grid, vec![c0; grid.len()], vec![0.0; grid.len()])
    }

    pub fn from_impedance(grid: Grid2D, c: Vec<f64>, sigma: &[f64]) -> Result<Self> {
        let q = reflectivity_from_impedance(sigma)?;
        Self::new(grid, c, q)
    }

    pub fn impedance(&self) -> Vec<f64> {
        impedance_from_reflectivity(&self.q)
    }

    /// The same kinematic model with zero reflectivity.
    pub fn reference(&self) -> Self {
        Self { grid: self.grid, c: self.c.clone(), q: vec![0.0; self.grid.len()] }
    }

    pub fn with_reflectivity(&self, q: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, self.c.clone(), q)
    }

    pub fn max_speed(&self) -> f64 {
        self.c.iter().cloned().fold(0.0, f64::max)
    }

    /// First cell within `depth` of the accessible boundary carrying nonzero
    /// reflectivity, if any.
    pub fn collar_violation(&self, depth: f64) -> Option<usize> {
        (0..self.grid.len()).find(|&i| {
            let (_, z) = self.grid.coords(i);
            z - self.grid.origin_z < depth && self.q[i] != 0.0
        })
    }

    /// Zero the reflectivity inside the collar next to the array.
    pub fn zero_collar(&mut self, depth: f64) {
        for i in 0..self.grid.len() {
            let (_, z) = self.grid.coords(i);
            if z - self.grid.origin_z < depth {
                self.q[i] = 0.0;
            }
        }
    }
}

/// Sensors placed on grid points near the accessible boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Grid indices of the sensors.
    pub positions: Vec<usize>,
    /// Sensor spacing in units of ℓ.
    pub pitch: f64,
}

impl ArrayGeometry {
    pub fn new(grid: &Grid2D, positions: Vec<usize>, pitch: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Argument("array needs at least one sensor".into()));
        }
        for (k, &p) in positions.iter().enumerate() {
            if p >= grid.len() {
                return Err(Error::Argument(format!("sensor {k} at index {p} is outside the grid")));
            }
            if positions[..k].contains(&p) {
                return Err(Error::Argument(format!("sensor {k} duplicates position {p}")));
            }
        }
        Ok(Self { positions, pitch })
    }

    /// `m` sensors on row `row`, `pitch` cells apart, centred in cross-range.
    pub fn centered(grid: &Grid2D, m: usize, pitch: usize, row: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Argument("array needs at least one sensor".into()));
        }
        if grid.is_1d() && m != 1 {
            return Err(Error::Argument("a one-dimensional grid carries exactly one sensor".into()));
        }
        if row >= grid.nz {
            return Err(Error::Argument(format!("sensor row {row} outside grid of {} rows", grid.nz)));
        }
        let pitch = pitch.max(1);
        let span = (m - 1) * pitch;
        if span >= grid.nx {
            return Err(Error::Argument(format!(
                "array of {m} sensors with pitch {pitch} does not fit in {} columns",
                grid.nx
            )));
        }
        let start = (grid.nx - 1 - span) / 2;
        let positions = (0..m).map(|s| grid.index(start + s * pitch, row)).collect();
        Self::new(grid, positions, pitch as f64)
    }

    pub fn m(&self) -> usize {
        self.positions.len()
    }

    /// Cross-range coordinates of the sensors.
    pub fn cross_ranges(&self, grid: &Grid2D) -> Vec<f64> {
        self.positions.iter().map(|&p| grid.coords(p).0).collect()
    }
}

/// Mesh node of the search basis, in (range, cross-range) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub range: f64,
    pub cross: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Elements {
    /// Intervals of a one-dimensional mesh.
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

impl Elements {
    pub fn len(&self) -> usize {
        match self {
            Elements::Segments(s) => s.len(),
            Elements::Triangles(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Continuous piecewise linear hat functions ψ_j on a (possibly non-uniform)
/// mesh, sampled on the grid.
#[derive(Debug, Clone)]
pub struct SearchBasis {
    pub grid: Grid2D,
    pub nodes: Vec<Node>,
    pub elements: Elements,
    /// Per node, the grid points in its support with the value of ψ_j there.
    support: Vec<Vec<(usize, f64)>>,
}

const INSIDE_TOL: f64 = 1e-12;

impl SearchBasis {
    pub fn new(grid: Grid2D, nodes: Vec<Node>, elements: Elements) -> Result<Self> {
        let nn = nodes.len();
        let check = |idx: &[usize]| -> Result<()> {
            if let Some(bad) = idx.iter().find(|&&i| i >= nn) {
                return Err(Error::Argument(format!("element references node {bad} of {nn}")));
            }
            Ok(())
        };
        match &elements {
            Elements::Segments(s) => {
                if !grid.is_1d() {
                    return Err(Error::Argument("segment meshes need a one-dimensional grid".into()));
                }
                s.iter().try_for_each(|e| check(e))?;
            }
            Elements::Triangles(t) => {
                if grid.is_1d() {
                    return Err(Error::Argument("triangle meshes need a two-dimensional grid".into()));
                }
                t.iter().try_for_each(|e| check(e))?;
            }
        }
        let mut basis = Self { grid, nodes, elements, support: Vec::new() };
        basis.support = basis.sample_support();
        Ok(basis)
    }

    /// One-dimensional hat basis on sorted range nodes.
    pub fn line_1d(grid: Grid2D, ranges: &[f64]) -> Result<Self> {
        let mut r = ranges.to_vec();
        r.sort_by(f64::total_cmp);
        r.dedup();
        let nodes = r.iter().map(|&range| Node { range, cross: grid.origin_x }).collect();
        let segs = (1..r.len()).map(|i| [i - 1, i]).collect();
        Self::new(grid, nodes, Elements::Segments(segs))
    }

    /// Mesh from range lines, each with its own cross-range points. Rows are
    /// joined by a strip triangulation that always takes the shorter diagonal,
    /// ties going to the lower-index node.
    pub fn from_rows(grid: Grid2D, rows: &[(f64, Vec<f64>)]) -> Result<Self> {
        let mut rows: Vec<(f64, Vec<f64>)> = rows
            .iter()
            .filter(|(_, c)| !c.is_empty())
            .map(|(r, c)| {
                let mut c = c.clone();
                c.sort_by(f64::total_cmp);
                c.dedup();
                (*r, c)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if grid.is_1d() {
            let ranges: Vec<f64> = rows.iter().map(|(r, _)| *r).collect();
            return Self::line_1d(grid, &ranges);
        }
        let mut nodes = Vec::new();
        let mut row_ids = Vec::new();
        for (r, crosses) in &rows {
            let ids: Vec<usize> = crosses
                .iter()
                .map(|&cross| {
                    nodes.push(Node { range: *r, cross });
                    nodes.len() - 1
                })
                .collect();
            row_ids.push(ids);
        }
        let mut tris = Vec::new();
        for w in row_ids.windows(2) {
            zip_rows(&nodes, &w[0], &w[1], &mut tris);
        }
        Self::new(grid, nodes, Elements::Triangles(tris))
    }

    /// Tensor mesh: every range line carries the same cross-range points.
    pub fn tensor(grid: Grid2D, ranges: &[f64], crosses: &[f64]) -> Result<Self> {
        let rows: Vec<(f64, Vec<f64>)> = ranges.iter().map(|&r| (r, crosses.to_vec())).collect();
        Self::from_rows(grid, &rows)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ψ_j sampled on the grid.
    pub fn psi(&self, j: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.grid.len()];
        for &(i, w) in &self.support[j] {
            f[i] = w;
        }
        f
    }

    /// Grid points where ψ_j is nonzero, with its values.
    pub fn support(&self, j: usize) -> &[(usize, f64)] {
        &self.support[j]
    }

    /// q^S = Σ_j coeffs_j ψ_j on the grid.
    pub fn evaluate(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs)?;
        let mut f = vec![0.0; self.grid.len()];
        for (sup, &c) in self.support.iter().zip(coeffs) {
            if c != 0.0 {
                for &(i, w) in sup {
                    f[i] += c * w;
                }
            }
        }
        Ok(f)
    }

    /// q^S at an arbitrary (range, cross-range) point; zero outside the mesh.
    pub fn evaluate_at(&self, coeffs: &[f64], range: f64, cross: f64) -> Result<f64> {
        self.check_len(coeffs)?;
        match &self.elements {
            Elements::Segments(segs) => {
                for &[a, b] in segs {
                    let (ra, rb) = (self.nodes[a].range, self.nodes[b].range);
                    if range == ra {
                        return Ok(coeffs[a]);
                    }
                    if range == rb {
                        return Ok(coeffs[b]);
                    }
                    if range > ra && range < rb {
                        let t = (range - ra) / (rb - ra);
                        return Ok((1.0 - t) * coeffs[a] + t * coeffs[b]);
                    }
                }
                // single-node mesh
                Ok(self
                    .nodes
                    .iter()
                    .position(|n| n.range == range)
                    .map_or(0.0, |j| coeffs[j]))
            }
            Elements::Triangles(tris) => {
                for t in tris {
                    if let Some(l) = self.barycentric(t, range, cross) {
                        return Ok(l[0] * coeffs[t[0]] + l[1] * coeffs[t[1]] + l[2] * coeffs[t[2]]);
                    }
                }
                Ok(0.0)
            }
        }
    }

    /// Nearest grid index to each node.
    pub fn node_cells(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|n| self.grid.index(self.grid.col_of(n.cross), self.grid.row_of(n.range)))
            .collect()
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.nodes.len() {
            return Err(Error::Argument(format!(
                "expected {} coefficients, got {}",
                self.nodes.len(),
                coeffs.len()
            )));
        }
        Ok(())
    }

    fn barycentric(&self, t: &[usize; 3], range: f64, cross: f64) -> Option<[f64; 3]> {
        let p = |k: usize| (self.nodes[t[k]].cross, self.nodes[t[k]].range);
        let ((x1, y1), (x2, y2), (x3, y3)) = (p(0), p(1), p(2));
        let det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3);
        if det == 0.0 {
            return None;
        }
        let l1 = ((y2 - y3) * (cross - x3) + (x3 - x2) * (range - y3)) / det;
        let l2 = ((y3 - y1) * (cross - x3) + (x1 - x3) * (range - y3)) / det;
        let l3 = 1.0 - l1 - l2;
        (l1 >= -INSIDE_TOL && l2 >= -INSIDE_TOL && l3 >= -INSIDE_TOL).then_some([l1, l2, l3])
    }

    fn sample_support(&self) -> Vec<Vec<(usize, f64)>> {
        let g = &self.grid;
        let mut support = vec![Vec::new(); self.nodes.len()];
        let mut claimed = vec![false; g.len()];
        match &self.elements {
            Elements::Segments(segs) => {
                for &[a, b] in segs {
                    let (ra, rb) = (self.nodes[a].range, self.nodes[b].range);
                    for iz in 0..g.nz {
                        let z = g.z(iz);
                        if z < ra || z > rb || claimed[iz] {
                            continue;
                        }
                        claimed[iz] = true;
                        let t = (z - ra) / (rb - ra);
                        if 1.0 - t > 0.0 {
                            support[a].push((iz, 1.0 - t));
                        }
                        if t > 0.0 {
                            support[b].push((iz, t));
                        }
                    }
                }
                if segs.is_empty() {
                    for (j, n) in self.nodes.iter().enumerate() {
                        let iz = g.row_of(n.range);
                        if g.z(iz) == n.range {
                            support[j].push((iz, 1.0));
                        }
                    }
                }
            }
            Elements::Triangles(tris) => {
                for t in tris {
                    let xs = t.map(|k| self.nodes[k].cross);
                    let zs = t.map(|k| self.nodes[k].range);
                    let (xmin, xmax) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                    let (zmin, zmax) = (zs.iter().cloned().fold(f64::INFINITY, f64::min), zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                    let ix0 = (((xmin - g.origin_x) / g.h).floor().max(0.0)) as usize;
                    let ix1 = (((xmax - g.origin_x) / g.h).ceil().max(0.0) as usize).min(g.nx - 1);
                    let iz0 = (((zmin - g.origin_z) / g.h).floor().max(0.0)) as usize;
                    let iz1 = (((zmax - g.origin_z) / g.h).ceil().max(0.0) as usize).min(g.nz - 1);
                    for iz in iz0..=iz1 {
                        for ix in ix0..=ix1 {
                            let idx = g.index(ix, iz);
                            if claimed[idx] {
                                continue;
                            }
                            if let Some(l) = self.barycentric(t, g.z(iz), g.x(ix)) {
                                claimed[idx] = true;
                                for k in 0..3 {
                                    let w = l[k].max(0.0);
                                    if w > 0.0 {
                                        support[t[k]].push((idx, w));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        support
    }
}

fn zip_rows(nodes: &[Node], upper: &[usize], lower: &[usize], tris: &mut Vec<[usize; 3]>) {
    let dist = |a: usize, b: usize| {
        let (na, nb) = (nodes[a], nodes[b]);
        (na.range - nb.range).hypot(na.cross - nb.cross)
    };
    let (mut i, mut j) = (0, 0);
    while i + 1 < upper.len() || j + 1 < lower.len() {
        let advance_upper = if i + 1 == upper.len() {
            false
        } else if j + 1 == lower.len() {
            true
        } else {
            let du = dist(upper[i + 1], lower[j]);
            let dl = dist(upper[i], lower[j + 1]);
            du < dl || (du == dl && upper[i + 1] < lower[j + 1])
        };
        if advance_upper {
            tris.push([upper[i], upper[i + 1], lower[j]]);
            i += 1;
        } else {
            tris.push([upper[i], lower[j + 1], lower[j]]);
            j += 1;
        }
    }
}
