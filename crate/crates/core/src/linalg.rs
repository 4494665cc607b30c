//! Dense complex linear algebra on ℂᵈ, ℂᵏ and ℂᵈ⊗ℂᵏ.
//!
//! Composite spaces are always ordered atom ⊗ system: the basis vector
//! |i⟩⊗|m⟩ of ℂᵈ⊗ℂᵏ has index `i * k + m`. Every routine that splits a
//! composite index relies on this ordering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::tol;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("not a density matrix: {reason}")]
    NotDensity { reason: String },
    #[error("non-finite entry in matrix")]
    NonFinite,
    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenConvergence { dim: usize },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn ensure_square(x: &CMatrix) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(LinalgError::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(x.nrows())
}

fn ensure_finite(x: &CMatrix) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Largest entrywise deviation of `x` from its adjoint.
pub fn hermiticity_defect(x: &CMatrix) -> f64 {
    (x - x.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(x: &CMatrix) -> CMatrix {
    (x + x.adjoint()) * C64::from(0.5)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn from_real_rows(rows: usize, cols: usize, re: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, re.iter().map(|&x| C64::from(x)))
}

/// Pauli matrices and ladder operators in the basis {|0⟩, |1⟩}, with
/// σ₋|0⟩ = 0.
pub mod pauli {
    use super::*;

    pub fn x() -> CMatrix {
        from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn z() -> CMatrix {
        from_real_rows(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// σ₊ = |1⟩⟨0|
    pub fn raising() -> CMatrix {
        from_real_rows(2, 2, &[0.0, 0.0, 1.0, 0.0])
    }

    /// σ₋ = |0⟩⟨1|
    pub fn lowering() -> CMatrix {
        from_real_rows(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    /// n·σ for a real direction (not required to be normalized).
    pub fn along(n: [f64; 3]) -> CMatrix {
        x() * C64::from(n[0]) + y() * C64::from(n[1]) + z() * C64::from(n[2])
    }
}

/// A normalized vector of ℂᵈ.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        Self::with_tolerance(amplitudes, tol::ALGEBRAIC)
    }

    /// Accepts vectors whose norm is within `tolerance` of 1 and rescales
    /// them to unit norm.
    pub fn with_tolerance(amplitudes: CVector, tolerance: f64) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > tolerance {
            return Err(LinalgError::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: amplitudes / C64::from(norm),
        })
    }

    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LinalgError::NotNormalized { norm });
        }
        Ok(Self {
            amplitudes: amplitudes / C64::from(norm),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self { amplitudes: v }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn projector(&self) -> CMatrix {
        outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn expectation(&self, x: &CMatrix) -> C64 {
        (self.amplitudes.adjoint() * x * &self.amplitudes)[(0, 0)]
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix(self.projector())
    }
}

/// A positive unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(x: CMatrix) -> Result<Self> {
        Self::with_tolerance(x, tol::ALGEBRAIC)
    }

    pub fn with_tolerance(x: CMatrix, tolerance: f64) -> Result<Self> {
        ensure_square(&x)?;
        ensure_finite(&x)?;
        let deviation = hermiticity_defect(&x);
        if deviation > tolerance {
            return Err(LinalgError::NotHermitian { deviation });
        }
        let tr = x.trace();
        if (tr - ONE).norm() > tolerance {
            return Err(LinalgError::NotDensity {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let x = hermitian_part(&x);
        let (evals, _) = hermitian_eigh(&x);
        if let Some(min) = evals.first() {
            if *min < tol::POSITIVITY {
                return Err(LinalgError::NotDensity {
                    reason: format!("negative eigenvalue {min:.3e}"),
                });
            }
        }
        Ok(Self(x))
    }

    /// Hermitizes, clips negative eigenvalues at zero and renormalizes.
    /// Used on numerically computed fixed points.
    pub fn repair(x: &CMatrix) -> Result<Self> {
        ensure_square(x)?;
        ensure_finite(x)?;
        let h = hermitian_part(x);
        let (evals, vecs) = hermitian_eigh(&h);
        let clipped: Vec<f64> = evals.iter().map(|&e| e.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(LinalgError::NotDensity {
                reason: "no positive spectral weight".into(),
            });
        }
        let diag = CVector::from_iterator(clipped.len(), clipped.iter().map(|&e| C64::from(e / total)));
        let rho = &vecs * CMatrix::from_diagonal(&diag) * vecs.adjoint();
        Ok(Self(hermitian_part(&rho)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(identity(dim) / C64::from(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn expectation(&self, x: &CMatrix) -> C64 {
        (&self.0 * x).trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }
}

/// A self-adjoint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl Hermitian {
    pub fn new(x: CMatrix) -> Result<Self> {
        Self::with_tolerance(x, tol::ALGEBRAIC)
    }

    /// Accepts matrices within `tolerance` of Hermitian and symmetrizes them.
    pub fn with_tolerance(x: CMatrix, tolerance: f64) -> Result<Self> {
        ensure_square(&x)?;
        ensure_finite(&x)?;
        let deviation = hermiticity_defect(&x);
        if deviation > tolerance {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self(hermitian_part(&x)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        hermitian_eigh(&self.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * C64::from(c))
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self(&self.0 + identity(self.dim()) * C64::from(c))
    }
}

/// Kronecker product with block (i, j) equal to `a[i, j] * b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    })
}

pub fn kron_vec(u: &CVector, v: &CVector) -> CVector {
    CVector::from_fn(u.len() * v.len(), |r, _| u[r / v.len()] * v[r % v.len()])
}

fn check_composite(x: &CMatrix, d: usize, k: usize, context: &'static str) -> Result<()> {
    let n = ensure_square(x)?;
    if n != d * k {
        return Err(LinalgError::DimensionMismatch {
            context,
            expected: d * k,
            found: n,
        });
    }
    Ok(())
}

/// Tr_atom X for X on ℂᵈ⊗ℂᵏ.
pub fn partial_trace_atom(x: &CMatrix, d: usize, k: usize) -> Result<CMatrix> {
    check_composite(x, d, k, "partial_trace_atom")?;
    Ok(CMatrix::from_fn(k, k, |m, n| {
        (0..d).map(|i| x[(i * k + m, i * k + n)]).sum()
    }))
}

/// Partial inner product ⟨ψ| Y |ψ⟩ over the atom factor, leaving a system
/// operator.
pub fn conditional_expectation(y: &CMatrix, psi: &PureState) -> Result<CMatrix> {
    let d = psi.dim();
    let n = ensure_square(y)?;
    if d == 0 || n % d != 0 {
        return Err(LinalgError::DimensionMismatch {
            context: "conditional_expectation",
            expected: d,
            found: n,
        });
    }
    let k = n / d;
    let amp = psi.amplitudes();
    let mut out = CMatrix::zeros(k, k);
    for i in 0..d {
        let ci = amp[i].conj();
        if ci == ZERO {
            continue;
        }
        for j in 0..d {
            let w = ci * amp[j];
            if w == ZERO {
                continue;
            }
            for m in 0..k {
                for nn in 0..k {
                    out[(m, nn)] += w * y[(i * k + m, j * k + nn)];
                }
            }
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(h.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// exp(-i t H) via the eigendecomposition of H.
pub fn expm_hermitian(h: &Hermitian, t: f64) -> CMatrix {
    let (evals, vecs) = h.eigh();
    let phases = CVector::from_iterator(
        evals.len(),
        evals.iter().map(|&e| C64::from_polar(1.0, -t * e)),
    );
    &vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint()
}

pub fn singular_values(x: &CMatrix) -> Vec<f64> {
    x.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Sum of singular values.
pub fn trace_norm(x: &CMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    singular_values(x).iter().sum()
}

/// Largest singular value.
pub fn operator_norm(x: &CMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    singular_values(x).iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    /// Unit-norm right eigenvector.
    pub vector: CVector,
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenpairs of a general square matrix, in the order produced by the
/// complex Schur form. Eigenvectors come from back-substitution on the
/// triangular factor.
pub fn eig(x: &CMatrix) -> Result<Vec<EigenPair>> {
    let n = ensure_square(x)?;
    ensure_finite(x)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(x.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(LinalgError::EigenConvergence { dim: n })?;
    let (q, t) = schur.unpack();
    let scale = t.norm().max(f64::MIN_POSITIVE);
    let floor = f64::EPSILON * scale;
    let mut pairs = Vec::with_capacity(n);
    for j in 0..n {
        let lambda = t[(j, j)];
        let mut y = CVector::zeros(n);
        y[j] = ONE;
        for i in (0..j).rev() {
            let s: C64 = ((i + 1)..=j).map(|l| t[(i, l)] * y[l]).sum();
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < floor {
                denom = C64::from(floor);
            }
            y[i] = -s / denom;
        }
        let v = &q * y;
        let norm = v.norm();
        pairs.push(EigenPair {
            value: lambda,
            vector: v / C64::from(norm),
        });
    }
    Ok(pairs)
}

pub fn eigenvalues(x: &CMatrix) -> Result<Vec<C64>> {
    Ok(eig(x)?.into_iter().map(|p| p.value).collect())
}

/// Random operators for property checks.
pub mod random {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(standard_normal(rng), standard_normal(rng))
        })
    }

    pub fn hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Hermitian {
        let g = gaussian_matrix(rng, n, n);
        Hermitian(hermitian_part(&g))
    }

    pub fn density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DensityMatrix {
        let g = gaussian_matrix(rng, n, n);
        let p = &g * g.adjoint();
        let tr = p.trace();
        DensityMatrix(hermitian_part(&(p / tr)))
    }

    pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, n: usize) -> PureState {
        let v = CVector::from_fn(n, |_, _| C64::new(standard_normal(rng), standard_normal(rng)));
        PureState::normalized(v).expect("gaussian vector is nonzero")
    }

    pub fn unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
        let h = hermitian(rng, n);
        expm_hermitian(&h, 1.0)
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn kron_associative_and_bilinear(seed in any::<u64>(), alpha in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random::gaussian_matrix(&mut rng, 2, 2);
            let b = random::gaussian_matrix(&mut rng, 3, 2);
            let b2 = random::gaussian_matrix(&mut rng, 3, 2);
            let c = random::gaussian_matrix(&mut rng, 2, 3);
            let left = kron(&kron(&a, &b), &c);
            let right = kron(&a, &kron(&b, &c));
            prop_assert!((left - right).norm() < 1e-12);
            let s = C64::from(alpha);
            let lin = kron(&a, &(&b * s + &b2));
            let expanded = kron(&a, &b) * s + kron(&a, &b2);
            prop_assert!((lin - expanded).norm() < 1e-12);
        }

        #[test]
        fn partial_trace_of_product_with_state(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ra = random::density(&mut rng, 3);
            let x = random::gaussian_matrix(&mut rng, 2, 2);
            let pt = partial_trace_atom(&kron(ra.matrix(), &x), 3, 2).unwrap();
            prop_assert!((pt - x).norm() < 1e-12);
        }
    }
}
