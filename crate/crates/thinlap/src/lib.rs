//! Finite-element solvers for anisotropic p-Laplace problems on thin
//! cylinders and their p = 1 / vanishing-thickness limits: total-variation
//! minimization with primal-dual optimality certificates, least-gradient
//! reference solutions on the disk, and a harness that checks that the
//! dimension-reduction and power-law limits commute.
//!
//! The library is generic over the scalar type through [`scalar::Real`];
//! the aliases below fix `f64`, which is what the CLI and the acceptance
//! suite use.

pub mod cg;
pub mod fem;
pub mod harness;
pub mod leastgradient;
pub mod mesh;
pub mod onelaplace;
pub mod plaplace;
pub mod scalar;
pub mod vtk;

pub use scalar::Real;

pub type TriMesh64 = mesh::TriMesh<f64>;
pub type TetMesh64 = mesh::TetMesh<f64>;
pub type P1Space64 = fem::P1Space<f64>;
pub type NodalField64 = fem::NodalField<f64>;
pub type CellVectorField64 = fem::CellVectorField<f64>;
pub type BoundaryDual64 = fem::BoundaryDual<f64>;
pub type BoundaryData64 = fem::BoundaryData<f64>;
pub type ScalingParams64 = fem::ScalingParams<f64>;
pub type PSolveOptions64 = plaplace::PSolveOptions<f64>;
pub type PSolution64 = plaplace::PSolution<f64>;
pub type PDOptions64 = onelaplace::PDOptions<f64>;
pub type PDSolution64 = onelaplace::PDSolution<f64>;
pub type LGReference64 = leastgradient::LGReference<f64>;
pub type HarnessOptions64 = harness::HarnessOptions<f64>;
