//! Data-driven reduced order models for array wave-scattering data.
//!
//! The crate simulates scattering-matrix data with a staggered-grid acoustic
//! solver, builds the reduced order model of the wave propagator from that
//! data alone, and estimates the reflectivity by Gauss–Newton minimization of
//! the wave-factor misfit. A Born data transform and a least-squares data-fit
//! inversion are included for comparison.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod born;
pub mod config;
pub mod error;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod rom;
pub mod wavesim;

pub use config::{BasisKind, MediumSource, Method, RunConfig};
pub use pipeline::PipelineRun;

pub use born::{born_data, chebyshev_directional_derivative, BornInputs};
pub use error::{Error, Result};
pub use grid::{ArrayGeometry, Elements, Field, Grid2D, Medium, Node, SearchBasis};
pub use inversion::{
    gauss_newton, gauss_newton_rom, jacobian, jacobian_conditioning_report, ls_rtm,
    partition_of_unity_mesh, point_spread, reference_projection, ForwardModel, GaussNewtonReport,
    GnOptions, PsfField, ReferenceProjection, ResidualModel,
};
pub use linalg::block_cholesky;
pub use oracle::{chebyshev_data, oracle_born_data, DenseOperator};
pub use rom::{
    dual_rom_snapshots, extract_lanczos_steps, orthogonal_transform, rom_build, rom_predict_data,
    rom_timestep, rom_wave_factor, GramPair, LanczosSteps, Rom,
};
pub use wavesim::{
    add_noise, assemble_operators, record_data, sensor_functions, simulate_data,
    simulate_snapshots, DataCube, DiscreteOperators, Pulse, PulseKind, SensorFunctions,
};
