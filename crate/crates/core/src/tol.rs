//! Numerical tolerances shared by operations and tests.

/// Algebraic identities: unitarity, Hermiticity, trace preservation.
pub const ALGEBRAIC: f64 = 1e-12;
/// Eigen-solver residuals and spectral identities.
pub const SPECTRAL: f64 = 1e-10;
/// An eigenvalue counts as 1 if |λ - 1| is below this; mixing requires all
/// other moduli below `1 - MIXING`.
pub const MIXING: f64 = 1e-9;
/// Numerical rank threshold for the eigenvalue-1 eigenspace.
pub const EIGENSPACE_RANK: f64 = 1e-8;
/// Centering hypotheses (⟨1, y⟩_st = 0, ⟨H⟩ = 0).
pub const CENTERING: f64 = 1e-8;
/// Smallest eigenvalue accepted for a density matrix.
pub const POSITIVITY: f64 = -1e-10;
/// Input validation for user-supplied models (Hermiticity, normalization).
pub const MODEL_INPUT: f64 = 1e-10;
/// Eigenvalues of a measured observable closer than this share a projector.
pub const DEGENERACY: f64 = 1e-10;
/// Outcome probabilities below this are treated as impossible.
pub const PROBABILITY_FLOOR: f64 = 1e-14;
/// Imaginary residue allowed on quantities that are real in exact arithmetic.
pub const IMAGINARY_RESIDUE: f64 = 1e-10;
