//! Identification of the coupling constant of a discrete-time quantum
//! Markov chain: transition maps and mixing, perturbation of contraction
//! families, classical and quantum Fisher information, output-state
//! overlaps and Monte Carlo measurement trajectories.

pub mod chain;
pub mod fisher;
pub mod linalg;
pub mod overlap;
pub mod perturbation;
pub mod stats;
pub mod tol;
pub mod trajectory;

pub use chain::{ChainError, ChainModel, SpectralReport, StationaryChain, SuperOperator};
pub use linalg::{CMatrix, CVector, DensityMatrix, Hermitian, PureState, C64};
