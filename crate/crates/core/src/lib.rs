//! Momentum-resolved quantum Fisher information (QFI) for two-dimensional
//! lattice Chern insulators.
//!
//! The crate is organised as a pipeline:
//!
//! * [`model`] builds Bloch Hamiltonians `H(k)` (QWZ, Haldane, winding-N, band
//!   flattening).
//! * [`bands`] diagonalises them on a uniform Brillouin-zone grid.
//! * [`geometry`] computes the multiband quantum-geometric tensor, Berry
//!   curvature (two independent routes) and Chern numbers.
//! * [`qfi`] evaluates the QFI: the exact α-integrated overlap formula, its
//!   `A q² − B q⁴` expansion, finite temperature and the static structure factor.
//! * [`bounds`] checks the topological lower bounds on `A` and `B`, locates the
//!   QFI peak and estimates quantum speed limits.
//! * [`config`] and [`pipeline`] drive everything from a TOML run file and write
//!   deterministic CSV/JSON artifacts.
//!
//! Units are `ħ = e = a = 1`; momenta live on the torus `[-π, π)²`.
//!
//! Grid sweeps run on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise. Reductions always run in a fixed order,
//! so both paths produce bit-identical results.

#![forbid(unsafe_code)]

pub mod bands;
pub mod bounds;
pub mod config;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod qfi;
pub mod quadrature;

pub use bands::{solve_bands, solve_bands_with, velocity_matrix, BandData, BzGrid, SolveOptions};
pub use bounds::{
    check_leading_bound, check_metric_curvature_pointwise, check_subleading_bound, qfi_peak,
    speed_limit, BoundReport, Potential, QGridSpec, SpeedLimitEstimate,
};
pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use geometry::{berry_curvature_plaquette, qgt_multiband, wz_connection_fd, QgtField, WzConnection};
pub use linalg::Axis;
pub use model::{
    build_atomic, build_haldane, build_qwz, build_winding_model, flatten_bands, load_model,
    BlochModel, ModelSpec,
};
pub use par::Execution;
pub use pipeline::{emit_curve, run_pipeline, Command, RunReport};
pub use qfi::{
    expansion_cross_term_two_band, linear_term_cancellation_check, q_tensor, qfi_direct,
    qfi_expansion, qfi_finite_beta, static_structure_factor, Beta, Direction, QfiCurve,
    QfiExpansion,
};
