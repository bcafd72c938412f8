//! Semantic hashing with a Boltzmann-machine variational posterior.
//!
//! Documents are encoded into `m`-bit codes by an MLP that outputs the
//! parameters `(μ, D, U)` of a correlated posterior over bits. Training
//! maximizes a partition-function-free lower bound on the ELBO, and retrieval
//! ranks codes by Hamming distance.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line tool.

pub mod bm;
pub mod corpus;
pub mod encdec;
pub mod objective;
pub mod retrieval;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use scalar::Scalar;

pub type Model = encdec::Model<f64>;
pub type ModelF32 = encdec::Model<f32>;
pub type Matrix = tensor::Matrix<f64>;
pub type BoltzmannParams = bm::BoltzmannParams<f64>;
pub type PosteriorParams = objective::PosteriorParams<f64>;
pub type TrainOutcome = trainer::TrainOutcome<f64>;
