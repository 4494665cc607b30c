//! Second-order perturbation of contraction families T(n) = T₀ + T₁/√n +
//! T₂/n + O(n^{-3/2}) around a mixing unital map T₀, for which
//! T(n)ⁿ[1] → e^λ·1 with λ = Tr(ρ_st (T₂(1) + T₁ (Id − T₀)⁻¹ T₁(1))).

use nalgebra::linalg::LU;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{self, vectorize, ChainError, ChainModel, StationaryChain, SuperOperator};
use crate::linalg::{self, commutator, kron, operator_norm, CMatrix, DensityMatrix, Hermitian, C64, I, ONE};
use crate::stats::{self, linear_fit};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbationError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("T0 is not mixing: Id - T0 is singular on the complement of the identity")]
    NotMixing,
    #[error("T0 is not unital (|T0(1) - 1| = {defect:.3e})")]
    NotUnital { defect: f64 },
    #[error("operand is not centered: <1, y>_st = {value}")]
    Uncentered { value: C64 },
    #[error("hypothesis <1, T1(1)>_st = 0 violated: value {value}")]
    HypothesisViolated { value: C64 },
    #[error("family does not match its expansion: remainder decays like n^{slope:.3}")]
    InconsistentFamily { slope: f64 },
    #[error("T({n}) failed the contraction spot-check (norm ratio {ratio})")]
    NotContraction { n: usize, ratio: f64 },
    #[error("leading eigenvalue of T({n}) is not separated (gap {gap:.3e})")]
    NotSeparated { n: usize, gap: f64 },
    #[error("need at least {needed} values of n, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, PerturbationError>;

/// ⟨A, B⟩_st = Tr(ρ_st A† B).
#[derive(Debug, Clone)]
pub struct StationaryPairing {
    rho_st: DensityMatrix,
}

impl StationaryPairing {
    pub fn new(rho_st: DensityMatrix) -> Self {
        Self { rho_st }
    }

    pub fn rho_st(&self) -> &DensityMatrix {
        &self.rho_st
    }

    pub fn inner(&self, a: &CMatrix, b: &CMatrix) -> C64 {
        (self.rho_st.matrix() * a.adjoint() * b).trace()
    }

    /// ⟨1, y⟩_st = Tr(ρ_st y).
    pub fn mean(&self, y: &CMatrix) -> C64 {
        self.rho_st.expectation(y)
    }

    /// y − ⟨1, y⟩_st·1
    pub fn center(&self, y: &CMatrix) -> CMatrix {
        y - linalg::identity(y.nrows()) * self.mean(y)
    }
}

/// Coefficients of T(n) = T₀ + T₁/√n + T₂/n + O(n^{-3/2}).
#[derive(Debug, Clone)]
pub struct MapExpansion {
    pub t0: SuperOperator,
    pub t1: SuperOperator,
    pub t2: SuperOperator,
}

impl MapExpansion {
    /// T₀ + T₁/√n + T₂/n
    pub fn truncated(&self, n: usize) -> SuperOperator {
        let s = 1.0 / (n as f64).sqrt();
        self.t0
            .plus(&self.t1.scaled(C64::from(s)))
            .plus(&self.t2.scaled(C64::from(s * s)))
    }
}

/// (Id − T₀)⁻¹ restricted to the ⟨·,·⟩_st-orthogonal complement of 1.
///
/// Solves (Id − T₀ + P)x = y with P(x) = Tr(ρ_st x)·1. Because T₀ is unital
/// and ρ_st is T₀-invariant, the complement is T₀-invariant and P vanishes
/// on it; the augmented operator is invertible exactly when 1 is a simple
/// eigenvalue.
#[derive(Debug, Clone)]
pub struct RestrictedInverse {
    t0: SuperOperator,
    pairing: StationaryPairing,
    lu: LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl RestrictedInverse {
    pub fn new(t0: &SuperOperator, rho_st: &DensityMatrix) -> Result<Self> {
        let k = t0.k();
        let one = linalg::identity(k);
        let defect = (t0.apply(&one) - &one).norm();
        if defect > tol::ALGEBRAIC * (k as f64) {
            return Err(PerturbationError::NotUnital { defect });
        }
        let mut eigenvalues = t0.eigenvalues()?;
        eigenvalues.sort_by(|a, b| (a - ONE).norm().total_cmp(&(b - ONE).norm()));
        let unit = eigenvalues.iter().filter(|z| (*z - ONE).norm() < tol::MIXING).count();
        let others_inside = eigenvalues.iter().skip(1).all(|z| z.norm() < 1.0 - tol::MIXING);
        if unit != 1 || !others_inside {
            return Err(PerturbationError::NotMixing);
        }
        let n = k * k;
        let projector = vectorize(&one) * vectorize(&rho_st.matrix().transpose()).transpose();
        let augmented = CMatrix::identity(n, n) - t0.matrix() + projector;
        Ok(Self {
            t0: t0.clone(),
            pairing: StationaryPairing::new(rho_st.clone()),
            lu: LU::new(augmented),
        })
    }

    pub fn pairing(&self) -> &StationaryPairing {
        &self.pairing
    }

    pub fn t0(&self) -> &SuperOperator {
        &self.t0
    }

    /// x with (Id − T₀)x = y and ⟨1, x⟩_st = 0. `y` must be centered.
    pub fn apply(&self, y: &CMatrix) -> Result<CMatrix> {
        let mean = self.pairing.mean(y);
        if mean.norm() >= tol::CENTERING {
            return Err(PerturbationError::Uncentered { value: mean });
        }
        let k = self.t0.k();
        let rhs = vectorize(&self.pairing.center(y));
        let sol = self.lu.solve(&rhs).ok_or(PerturbationError::NotMixing)?;
        let x = chain::unvectorize(&sol, k);
        Ok(self.pairing.center(&x))
    }
}

pub fn restricted_inverse_apply(
    t0: &SuperOperator,
    rho_st: &DensityMatrix,
    y: &CMatrix,
) -> Result<CMatrix> {
    RestrictedInverse::new(t0, rho_st)?.apply(y)
}

/// λ = Tr(ρ_st (T₂(1) + T₁ ∘ (Id − T₀)⁻¹ ∘ T₁(1))).
pub fn lambda_second_order(expansion: &MapExpansion, rho_st: &DensityMatrix) -> Result<C64> {
    let inverse = RestrictedInverse::new(&expansion.t0, rho_st)?;
    lambda_with_inverse(expansion, &inverse)
}

fn lambda_with_inverse(expansion: &MapExpansion, inverse: &RestrictedInverse) -> Result<C64> {
    let one = linalg::identity(expansion.t0.k());
    let first = expansion.t1.apply(&one);
    let hypothesis = inverse.pairing.mean(&first);
    if hypothesis.norm() >= tol::CENTERING {
        return Err(PerturbationError::HypothesisViolated { value: hypothesis });
    }
    let x1 = inverse.apply(&first)?;
    let total = expansion.t2.apply(&one) + expansion.t1.apply(&x1);
    Ok(inverse.pairing.mean(&total))
}

/// Stationary state of a unital map T₀, from the fixed point of its
/// trace dual.
pub fn stationary_of(t0: &SuperOperator) -> Result<DensityMatrix> {
    let (rho, _) = chain::fixed_point(&t0.trace_dual())?;
    Ok(rho)
}

#[derive(Debug, Clone)]
pub struct IteratedLimitRow {
    pub n: usize,
    /// T(n)ⁿ[1]
    pub iterate: CMatrix,
    /// Tr(ρ T(n)ⁿ[1])
    pub value: C64,
    /// ‖T(n)ⁿ[1] − e^λ·1‖ in operator norm.
    pub error: f64,
    /// ‖T(n) − T₀ − T₁/√n − T₂/n‖ (Frobenius norm of the representation).
    pub remainder: f64,
}

#[derive(Debug, Clone)]
pub struct IteratedLimitReport {
    pub lambda: C64,
    pub rows: Vec<IteratedLimitRow>,
    /// Log-log slope of the error over the largest half of the n values.
    pub decay_exponent: f64,
    /// Fit of error ≈ C·n^{-1/2}: (C, R²).
    pub half_power_fit: (f64, f64),
    /// Log-log slope of the expansion remainder.
    pub remainder_exponent: Option<f64>,
}

/// Remainders below this are treated as exact agreement.
const REMAINDER_FLOOR: f64 = 1e-12;
/// The remainder must decay at least this fast to count as O(n^{-3/2}).
const REMAINDER_MAX_SLOPE: f64 = -1.25;

/// Iterates T(n) n times on 1 and compares with e^λ·1.
pub fn verify_iterated_limit<F>(
    family: F,
    expansion: &MapExpansion,
    rho: &DensityMatrix,
    n_list: &[usize],
) -> Result<IteratedLimitReport>
where
    F: Fn(usize) -> SuperOperator + Sync,
{
    use rayon::prelude::*;

    if n_list.len() < 2 {
        return Err(PerturbationError::TooFewPoints {
            needed: 2,
            got: n_list.len(),
        });
    }
    let rho_st = stationary_of(&expansion.t0)?;
    let inverse = RestrictedInverse::new(&expansion.t0, &rho_st)?;
    let lambda = lambda_with_inverse(expansion, &inverse)?;
    let k = expansion.t0.k();
    let one = linalg::identity(k);
    let limit = &one * lambda.exp();
    let probes = contraction_probes(k);

    let rows: Vec<Result<IteratedLimitRow>> = n_list
        .par_iter()
        .map(|&n| {
            let t = family(n);
            for x in &probes {
                let ratio = operator_norm(&t.apply(x));
                if ratio > 1.0 + tol::SPECTRAL {
                    return Err(PerturbationError::NotContraction { n, ratio });
                }
            }
            let remainder = t.minus(&expansion.truncated(n)).frobenius_norm();
            let iterate = t.apply_n(&one, n);
            let error = operator_norm(&(&iterate - &limit));
            let value = rho.expectation(&iterate);
            Ok(IteratedLimitRow {
                n,
                iterate,
                value,
                error,
                remainder,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let remainder_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.remainder > REMAINDER_FLOOR)
        .map(|r| ((r.n as f64).ln(), r.remainder.ln()))
        .collect();
    let remainder_exponent = if remainder_points.len() >= 2 {
        let slope = linear_fit(&remainder_points).slope;
        if slope > REMAINDER_MAX_SLOPE {
            return Err(PerturbationError::InconsistentFamily { slope });
        }
        Some(slope)
    } else {
        None
    };

    let decay_exponent = decay_exponent(
        &rows.iter().map(|r| (r.n, r.error)).collect::<Vec<_>>(),
    );
    let half: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (1.0 / (r.n as f64).sqrt(), r.error))
        .collect();
    let half_power_fit = stats::proportional_fit(&half);
    Ok(IteratedLimitReport {
        lambda,
        rows,
        decay_exponent,
        half_power_fit,
        remainder_exponent,
    })
}

/// Log-log least-squares slope over the largest half of the n values;
/// zero errors (exact agreement) give 0.
pub fn decay_exponent(table: &[(usize, f64)]) -> f64 {
    let mut sorted: Vec<(usize, f64)> = table.to_vec();
    sorted.sort_by_key(|p| p.0);
    let start = sorted.len() / 2;
    let pts: Vec<(f64, f64)> = sorted[start.min(sorted.len().saturating_sub(2))..]
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| ((p.0 as f64).ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    linear_fit(&pts).slope
}

/// Norm-one test operators for the contraction spot-check: the identity,
/// matrix units and a few fixed random unitaries.
fn contraction_probes(k: usize) -> Vec<CMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut probes = vec![linalg::identity(k)];
    for r in 0..k {
        for c in 0..k {
            let mut e = CMatrix::zeros(k, k);
            e[(r, c)] = ONE;
            probes.push(e);
        }
    }
    probes.extend((0..4).map(|_| linalg::random::unitary(&mut rng, k)));
    probes
}

#[derive(Debug, Clone)]
pub struct LeadingEigenReport {
    /// (n, λ(n))
    pub rows: Vec<(usize, C64)>,
    /// Fitted coefficients of λ(n) − 1 ≈ λ₁/√n + λ₂/n + λ₃/n^{3/2}.
    pub lambda1: C64,
    pub lambda2: C64,
    /// The n values used by the fit.
    pub fit_n: Vec<usize>,
}

/// n below which leading-eigenvalue data is excluded from the fit when
/// enough larger n are available.
const EIGEN_FIT_MIN_N: usize = 1000;
const SEPARATION: f64 = 1e-6;

/// Leading eigenvalue λ(n) of each T(n) and a fit of its expansion in
/// powers of n^{-1/2}.
pub fn leading_eigen_expansion<F>(family: F, n_list: &[usize]) -> Result<LeadingEigenReport>
where
    F: Fn(usize) -> SuperOperator + Sync,
{
    use rayon::prelude::*;

    let rows: Vec<Result<(usize, C64)>> = n_list
        .par_iter()
        .map(|&n| {
            let mut eigenvalues = family(n).eigenvalues()?;
            eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
            let lead = eigenvalues[0];
            if let Some(next) = eigenvalues.get(1) {
                let gap = lead.norm() - next.norm();
                if gap < SEPARATION {
                    return Err(PerturbationError::NotSeparated { n, gap });
                }
            }
            Ok((n, lead))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let large: Vec<(usize, C64)> = rows.iter().copied().filter(|r| r.0 >= EIGEN_FIT_MIN_N).collect();
    let data = if large.len() >= 3 { large } else { rows.clone() };
    let powers = if data.len() >= 3 { 3 } else { 2 };
    if data.len() < powers {
        return Err(PerturbationError::TooFewPoints {
            needed: powers,
            got: data.len(),
        });
    }
    let design = CMatrix::from_fn(data.len(), powers, |r, c| {
        C64::from((data[r].0 as f64).powf(-0.5 * (c as f64 + 1.0)))
    });
    let target = linalg::CVector::from_iterator(data.len(), data.iter().map(|r| r.1 - ONE));
    let coeffs = least_squares(&design, &target);
    Ok(LeadingEigenReport {
        rows,
        lambda1: coeffs[0],
        lambda2: coeffs[1],
        fit_n: data.iter().map(|r| r.0).collect(),
    })
}

/// Least squares through the normal equations on column-scaled data.
fn least_squares(design: &CMatrix, target: &linalg::CVector) -> linalg::CVector {
    let scales: Vec<f64> = (0..design.ncols()).map(|c| design.column(c).norm()).collect();
    let mut scaled = design.clone();
    for (c, s) in scales.iter().enumerate() {
        scaled.column_mut(c).unscale_mut(*s);
    }
    let qr = scaled.clone().qr();
    let qt_b = qr.q().adjoint() * target;
    let sol = qr
        .r()
        .solve_upper_triangular(&qt_b)
        .expect("design matrix has full column rank");
    linalg::CVector::from_iterator(sol.len(), sol.iter().zip(&scales).map(|(x, s)| x / *s))
}

/// The map X ↦ E_θ₀[e^{iuH/√n} (e^{itA/√n} ⊗ X) e^{-iuH/√n} | s], whose
/// n-th power on 1 gives the characteristic function of √n·Ā_n at the
/// local parameter u.
#[derive(Debug, Clone)]
pub struct CharacteristicFamily {
    chain: StationaryChain,
    observable: Hermitian,
    u: f64,
    t: f64,
}

impl CharacteristicFamily {
    /// `observable` is centered at θ₀ before use.
    pub fn new(model: &ChainModel, observable: &Hermitian, u: f64, t: f64) -> Result<Self> {
        let chain = model.stationary()?;
        let mean = chain.atom_expectation(observable.matrix())?.re;
        Ok(Self {
            observable: observable.shifted(-mean),
            chain,
            u,
            t,
        })
    }

    pub fn stationary(&self) -> &StationaryChain {
        &self.chain
    }

    pub fn map_at(&self, n: usize) -> SuperOperator {
        let s = 1.0 / (n as f64).sqrt();
        let h = self.chain.model.hamiltonian();
        let left = linalg::expm_hermitian(h, -self.u * s);
        let right = linalg::expm_hermitian(h, self.u * s);
        let a = linalg::expm_hermitian(&self.observable, -self.t * s);
        let k = self.chain.model.k();
        SuperOperator::from_fn(k, |x| {
            let y = &left * kron(&a, x) * &right;
            self.chain.conditional(&y).expect("dimensions fixed by the model")
        })
    }

    pub fn expansion(&self) -> MapExpansion {
        let c = &self.chain;
        let k = c.model.k();
        let h = c.model.hamiltonian().matrix();
        let a = self.observable.matrix();
        let id_atom = c.atom_identity();
        let (u, t) = (C64::from(self.u), C64::from(self.t));
        let cond = |y: CMatrix| c.conditional(&y).expect("dimensions fixed by the model");
        let t0 = SuperOperator::from_fn(k, |x| cond(kron(&id_atom, x)));
        let t1 = SuperOperator::from_fn(k, |x| {
            let one_x = kron(&id_atom, x);
            cond(commutator(h, &one_x) * (I * u) + kron(a, x) * (I * t))
        });
        let t2 = SuperOperator::from_fn(k, |x| {
            let one_x = kron(&id_atom, x);
            let double = commutator(h, &commutator(h, &one_x));
            cond(
                double * (-u * u / 2.0) + kron(&(a * a), x) * (-t * t / 2.0)
                    - commutator(h, &kron(a, x)) * (u * t),
            )
        });
        MapExpansion { t0, t1, t2 }
    }
}

/// The overlap transfer family X ↦ E_θ₀[e^{iuH/√n} (1 ⊗ X) e^{-ivH/√n} | s]
/// with H centered at θ₀; its n-th power on 1 gives
/// ⟨ψⁿ_{θ₀+u/√n} | ψⁿ_{θ₀+v/√n}⟩ up to the global phase removed by centering.
#[derive(Debug, Clone)]
pub struct OverlapFamily {
    chain: StationaryChain,
    u: f64,
    v: f64,
}

impl OverlapFamily {
    pub fn new(model: &ChainModel, u: f64, v: f64) -> Result<Self> {
        let chain = centered_chain(model)?;
        Ok(Self { chain, u, v })
    }

    /// The stationary chain built from the centered Hamiltonian.
    pub fn stationary(&self) -> &StationaryChain {
        &self.chain
    }

    pub fn map_at(&self, n: usize) -> SuperOperator {
        let s = 1.0 / (n as f64).sqrt();
        let m = &self.chain.model;
        crate::overlap::transfer_map(m, m.theta0() + self.u * s, m.theta0() + self.v * s)
    }

    pub fn expansion(&self) -> MapExpansion {
        let c = &self.chain;
        let k = c.model.k();
        let h = c.model.hamiltonian().matrix();
        let h2 = h * h;
        let id_atom = c.atom_identity();
        let (u, v) = (C64::from(self.u), C64::from(self.v));
        let cond = |y: CMatrix| c.conditional(&y).expect("dimensions fixed by the model");
        let t0 = SuperOperator::from_fn(k, |x| cond(kron(&id_atom, x)));
        let t1 = SuperOperator::from_fn(k, |x| {
            let one_x = kron(&id_atom, x);
            cond((h * &one_x * u - &one_x * h * v) * I)
        });
        let t2 = SuperOperator::from_fn(k, |x| {
            let one_x = kron(&id_atom, x);
            cond(
                (&h2 * &one_x * (u * u) + &one_x * &h2 * (v * v)) * C64::from(-0.5)
                    + h * &one_x * h * (u * v),
            )
        });
        MapExpansion { t0, t1, t2 }
    }
}

/// Stationary chain of `model` with H replaced by H − ⟨H⟩_θ₀·1.
pub fn centered_chain(model: &ChainModel) -> std::result::Result<StationaryChain, ChainError> {
    let chain = model.stationary()?;
    let h = model.hamiltonian();
    let mean = chain.expectation(h.matrix())?.re;
    if mean.abs() == 0.0 {
        return Ok(chain);
    }
    model.with_hamiltonian(h.shifted(-mean))?.stationary()
}
