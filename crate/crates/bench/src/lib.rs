//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use romscat_core::pipeline::{self, Setup};
use romscat_core::{DataCube, RunConfig};

/// A two-dimensional box phantom with `m` sensors and `2n` samples.
pub fn box_config(nx: usize, nz: usize, m: usize, n: usize) -> RunConfig {
    let text = format!(
        "[grid]\nnx = {nx}\nnz = {nz}\n\
         [medium]\nsource = \"boxes\"\nc0 = 1.8\ncontrast = 0.2\n\
         [array]\nm = {m}\npitch = 6\n\
         [pulse]\nwavelength = 8.9\n\
         [rom]\nn = {n}\nrel_tol = 1e-10\n\
         [output]\ndir = \"unused\"\n"
    );
    RunConfig::parse(&text).expect("fixture config is valid")
}

pub fn simulated(cfg: &RunConfig) -> (Setup, DataCube) {
    let s = pipeline::setup(cfg).expect("fixture setup");
    let data = pipeline::simulate(cfg, &s).expect("fixture simulation");
    (s, data)
}

/// Deterministic symmetric positive definite matrix of order `k`.
pub fn spd(k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |i, j| ((i * 7 + j * 13) % 17) as f64 / 17.0 - 0.5);
    a.tr_mul(&a) + DMatrix::identity(k, k)
}
