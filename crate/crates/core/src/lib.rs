//! Spectral projection methods for parameterized linear systems
//! `A(xi) u(xi) = f(xi)`: stochastic Galerkin, pseudo-spectral, and the
//! weighted least-squares Petrov-Galerkin family, together with Q1
//! finite-element benchmark problems, error and stability analysis, and a
//! CSV-emitting study runner.
//!
//! The numerical core is generic over the working scalar (`f32` or `f64`)
//! through [`scalar::Scalar`]; `f64` aliases for the main types live at the
//! crate root.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod fem;
pub mod gpc;
mod linalg;
pub mod problems;
pub mod projection;
pub mod scalar;
pub mod special;
pub mod sysmodel;

pub use error::{Error, Result};
pub use scalar::Scalar;

// f64 aliases for the main types.
pub type ParameterSpaceF64 = gpc::ParameterSpace<f64>;
pub type BasisF64 = gpc::Basis<f64>;
pub type QuadratureRuleF64 = gpc::QuadratureRule<f64>;
pub type MomentTensorsF64 = gpc::MomentTensors<f64>;
pub type ParamSystemF64 = sysmodel::ParamSystem<f64>;
pub type SpectralSolutionF64 = sysmodel::SpectralSolution<f64>;
pub type OperatorExpansionF64 = sysmodel::OperatorExpansion<f64>;
pub type MeshF64 = fem::Mesh<f64>;
pub type RandomFieldKLF64 = fem::RandomFieldKL<f64>;
pub type QoIOperatorF64 = fem::QoIOperator<f64>;
pub type WeightingSchemeF64 = projection::WeightingScheme<f64>;
pub type NormalEquationsF64 = projection::NormalEquations<f64>;
pub type ReferenceSolutionF64 = analysis::ReferenceSolution<f64>;
pub type ErrorReportF64 = analysis::ErrorReport<f64>;
pub type StabilityEstimateF64 = analysis::StabilityEstimate<f64>;
pub type ProblemF64 = problems::Problem<f64>;
