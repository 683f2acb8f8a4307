pub mod admissible;
pub mod consensus;
pub mod error;
pub mod exosystem;
pub mod mpc;
pub mod network;
pub mod numerics;
pub mod polytope;
pub mod qp;
pub mod scalar;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type Matrix = numerics::Matrix<f64>;
pub type Polytope = polytope::Polytope<f64>;
pub type Exosystem = exosystem::Exosystem<f64>;
pub type AgentSpec = mpc::AgentSpec<f64>;
pub type AgentModel = mpc::AgentModel<f64>;
pub type AdmissibleSets = admissible::AdmissibleSets<f64>;
pub type QpProblem = qp::QpProblem<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type SimTrace = sim::SimTrace<f64>;
