//! Operator-valued kernel regression of time-dependent vector fields and
//! kernel approximations of Koopman operators from snapshot data.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases below pin the common double-precision instantiations.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod gram;
pub mod io;
pub mod kernel;
pub mod koopman;
pub mod regression;
pub mod scalar;

pub use dynamics::{generate_pairs, BuiltinObservable, BuiltinSystem, FlowMap, TrajectoryDataset};
pub use error::{OvkError, Result};
pub use geometry::{fill_distance, grid_points, random_points, BoxDomain, PointSet, SamplingKind};
pub use gram::{assemble_cross_gram, assemble_gram, pinv, solve_ridge, BlockGramMatrix};
pub use kernel::{KernelFamily, ScalarKernel, SpatioTemporalPoint, TimeRegularizedKernel};
pub use koopman::{
    build_koopman, decompose, forecast_error_curve, operator_gap, operator_gap_on, project_observable,
    EmpiricalKoopman, ForecastModel, SpectralDecomposition,
};
pub use regression::{empirical_errors, fit, ErrorNorms, RepresenterModel, TrainingSet};
pub use scalar::Real;

pub use nalgebra::{Complex, DMatrix, DVector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Point64 = SpatioTemporalPoint<f64>;
pub type PointSet64 = PointSet<f64>;
pub type Kernel64 = TimeRegularizedKernel<f64>;
pub type Model64 = RepresenterModel<f64>;
pub type Koopman64 = EmpiricalKoopman<f64>;
pub type Spectrum64 = SpectralDecomposition<f64>;
pub type Forecast64 = ForecastModel<f64>;

pub type Point32 = SpatioTemporalPoint<f32>;
pub type PointSet32 = PointSet<f32>;
pub type Kernel32 = TimeRegularizedKernel<f32>;
pub type Model32 = RepresenterModel<f32>;
pub type Koopman32 = EmpiricalKoopman<f32>;
