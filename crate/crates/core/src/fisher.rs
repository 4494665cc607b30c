//! Classical Fisher information of simple output measurements and the
//! asymptotic quantum Fisher information per atom.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{ChainError, ChainModel, StationaryChain};
use crate::linalg::{self, anticommutator, commutator, kron, pauli, CMatrix, Hermitian, LinalgError, C64, I};
use crate::perturbation::{centered_chain, PerturbationError, RestrictedInverse};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FisherError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("observable has dimension {found}, atoms have dimension {expected}")]
    ObservableDimension { expected: usize, found: usize },
    #[error("Fisher information undefined: both mu and sigma^2 vanish")]
    Undefined,
    #[error("closed form diverges at c = 1 (no coupling, chain not mixing)")]
    Divergent,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, FisherError>;

#[derive(Debug, Clone)]
pub struct CltParameters {
    /// Derivative of the stationary mean of A with respect to θ.
    pub mu: f64,
    /// Asymptotic variance of √n·Ā_n.
    pub sigma2: f64,
    /// Correction operator on the system.
    pub b: Hermitian,
    pub a_centered: Hermitian,
}

#[derive(Debug, Clone)]
pub struct QfiResult {
    pub f: f64,
    /// ⟨ψ|H|ψ⟩ with H centered.
    pub k: Hermitian,
    /// 4⟨{H, 1 ⊗ (Id − T₀)⁻¹K}⟩
    pub correction: f64,
    pub phase_coefficient: f64,
}

fn stationary_with_inverse(model: &ChainModel) -> Result<(StationaryChain, RestrictedInverse)> {
    let chain = model.stationary()?;
    let inverse = RestrictedInverse::new(&chain.heisenberg, &chain.rho_st)?;
    Ok((chain, inverse))
}

fn check_atom_observable(model: &ChainModel, a: &Hermitian) -> Result<()> {
    if a.dim() != model.d() {
        return Err(FisherError::ObservableDimension {
            expected: model.d(),
            found: a.dim(),
        });
    }
    Ok(())
}

fn real_part(z: C64, what: &str) -> f64 {
    if z.im.abs() > tol::IMAGINARY_RESIDUE * z.norm().max(1.0) {
        log::warn!("{what} has imaginary residue {:.3e}", z.im);
    }
    z.re
}

/// Centers A at θ₀ and returns (A_c, B) with B = (Id − T₀)⁻¹ E[A_c ⊗ 1 | s].
fn centered_with_correction(
    chain: &StationaryChain,
    inverse: &RestrictedInverse,
    a: &Hermitian,
) -> Result<(Hermitian, Hermitian)> {
    let mean = chain.atom_expectation(a.matrix())?.re;
    let a_c = a.shifted(-mean);
    let cond = chain.conditional(&kron(a_c.matrix(), &chain.system_identity()))?;
    let b = inverse.apply(&cond)?;
    let b = Hermitian::new(linalg::hermitian_part(&b))?;
    Ok((a_c, b))
}

/// B = (Id − T₀)⁻¹(⟨ψ|U†(A_c ⊗ 1)U|ψ⟩) with A auto-centered.
pub fn correction_operator(model: &ChainModel, a: &Hermitian) -> Result<Hermitian> {
    check_atom_observable(model, a)?;
    let (chain, inverse) = stationary_with_inverse(model)?;
    Ok(centered_with_correction(&chain, &inverse, a)?.1)
}

/// μ = i⟨[H, A_c ⊗ 1 + 1 ⊗ B]⟩ and σ² = ⟨A_c² ⊗ 1⟩ + 2⟨A_c ⊗ B⟩.
pub fn clt_parameters(model: &ChainModel, a: &Hermitian) -> Result<CltParameters> {
    check_atom_observable(model, a)?;
    let (chain, inverse) = stationary_with_inverse(model)?;
    clt_from_chain(&chain, &inverse, a)
}

fn clt_from_chain(
    chain: &StationaryChain,
    inverse: &RestrictedInverse,
    a: &Hermitian,
) -> Result<CltParameters> {
    let (a_c, b) = centered_with_correction(chain, inverse, a)?;
    let id_sys = chain.system_identity();
    let id_atom = chain.atom_identity();
    let h = chain.model.hamiltonian().matrix();
    let generator = kron(a_c.matrix(), &id_sys) + kron(&id_atom, b.matrix());
    let mu = real_part(chain.expectation(&commutator(h, &generator))? * I, "mu");
    let a2 = a_c.matrix() * a_c.matrix();
    let sigma2 = real_part(
        chain.expectation(&kron(&a2, &id_sys))? + chain.expectation(&kron(a_c.matrix(), b.matrix()))? * 2.0,
        "sigma^2",
    );
    Ok(CltParameters {
        mu,
        sigma2: clip_variance(sigma2),
        b,
        a_centered: a_c,
    })
}

fn clip_variance(sigma2: f64) -> f64 {
    if sigma2 >= 0.0 {
        return sigma2;
    }
    if sigma2 < tol::POSITIVITY {
        log::warn!("asymptotic variance {sigma2:.3e} is negative beyond roundoff; clipped to 0");
    }
    0.0
}

/// Below this σ² is treated as zero.
const VARIANCE_FLOOR: f64 = 1e-12;
/// Below this |μ| is treated as zero when σ² vanishes.
const DRIFT_FLOOR: f64 = 1e-10;

/// μ²/σ², +∞ for a deterministic statistic with nonzero drift.
pub fn fisher_ratio(mu: f64, sigma2: f64) -> Result<f64> {
    if sigma2 > VARIANCE_FLOOR {
        Ok(mu * mu / sigma2)
    } else if mu.abs() > DRIFT_FLOOR {
        Ok(f64::INFINITY)
    } else {
        Err(FisherError::Undefined)
    }
}

/// μ(A)²/σ²(A), the inverse asymptotic variance per atom of the estimator
/// built from Ā_n.
pub fn classical_fisher(model: &ChainModel, a: &Hermitian) -> Result<f64> {
    let p = clt_parameters(model, a)?;
    fisher_ratio(p.mu, p.sigma2)
}

/// F = 4[⟨H²⟩ + ⟨{H, 1 ⊗ (Id − T₀)⁻¹K}⟩] with H centered and K = ⟨ψ|H|ψ⟩.
pub fn quantum_fisher(model: &ChainModel) -> Result<QfiResult> {
    let chain = centered_chain(model)?;
    let inverse = RestrictedInverse::new(&chain.heisenberg, &chain.rho_st)?;
    let h = chain.model.hamiltonian().matrix();
    let k = linalg::conditional_expectation(h, chain.model.input())?;
    let k = Hermitian::new(linalg::hermitian_part(&k))?;
    let rk = kron(&chain.atom_identity(), &inverse.apply(k.matrix())?);
    let variance = real_part(chain.expectation(&(h * h))?, "<H^2>");
    let correction = 4.0 * real_part(chain.expectation(&anticommutator(h, &rk))?, "anticommutator");
    let phase_coefficient = -chain.expectation(&(h * &rk))?.im;
    let f = 4.0 * variance + correction;
    Ok(QfiResult {
        f: if f < 0.0 && f > tol::POSITIVITY { 0.0 } else { f },
        k,
        correction,
        phase_coefficient,
    })
}

/// 16a⁴b⁴ / ((1 − c)(1 − c + 4a²b²c)) for the exchange model.
pub fn xy_closed_form_fisher(a: f64, b: f64, c: f64) -> Result<f64> {
    if ((a * a + b * b) - 1.0).abs() > tol::MODEL_INPUT {
        return Err(FisherError::InvalidParameter(format!(
            "a^2 + b^2 = {} must equal 1",
            a * a + b * b
        )));
    }
    if (1.0 - c).abs() < f64::EPSILON {
        return Err(FisherError::Divergent);
    }
    let (a2, b2) = (a * a, b * b);
    Ok(16.0 * a2 * a2 * b2 * b2 / ((1.0 - c) * (1.0 - c + 4.0 * a2 * b2 * c)))
}

/// Observable families A(n) = Σᵢ nᵢ Gᵢ over unit vectors n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservableFamily {
    /// σ·n on a qubit, n on the unit sphere.
    Bloch,
    /// Generalized Gell-Mann basis of traceless Hermitian d×d matrices.
    GellMann,
}

/// Traceless Hermitian generators normalized to Tr(GᵢGⱼ) = 2δᵢⱼ.
pub fn gell_mann_basis(d: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(d * d - 1);
    for j in 0..d {
        for k in j + 1..d {
            let mut s = CMatrix::zeros(d, d);
            s[(j, k)] = C64::from(1.0);
            s[(k, j)] = C64::from(1.0);
            basis.push(s);
            let mut a = CMatrix::zeros(d, d);
            a[(j, k)] = -I;
            a[(k, j)] = I;
            basis.push(a);
        }
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut z = CMatrix::zeros(d, d);
        for m in 0..l {
            z[(m, m)] = C64::from(norm);
        }
        z[(l, l)] = C64::from(-(l as f64) * norm);
        basis.push(z);
    }
    basis
}

/// Classical Fisher information as a function of the coefficient vector of
/// a linear observable family: μ is linear and σ² quadratic in the
/// coefficients, so both are tabulated once.
#[derive(Debug, Clone)]
pub struct FisherForm {
    generators: Vec<CMatrix>,
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
}

impl FisherForm {
    pub fn new(model: &ChainModel, generators: Vec<CMatrix>) -> Result<Self> {
        let (chain, inverse) = stationary_with_inverse(model)?;
        let params = generators
            .iter()
            .map(|g| {
                let g = Hermitian::new(g.clone())?;
                check_atom_observable(model, &g)?;
                clt_from_chain(&chain, &inverse, &g)
            })
            .collect::<Result<Vec<_>>>()?;
        let m = params.len();
        let id_sys = chain.system_identity();
        let mut sigma = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let ai = params[i].a_centered.matrix();
                let aj = params[j].a_centered.matrix();
                let z = chain.expectation(&kron(&(ai * aj), &id_sys))?
                    + chain.expectation(&kron(ai, params[j].b.matrix()))?
                    + chain.expectation(&kron(aj, params[i].b.matrix()))?;
                sigma[(i, j)] = z.re;
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        Ok(Self {
            mu: params.iter().map(|p| p.mu).collect(),
            generators,
            sigma,
        })
    }

    pub fn bloch(model: &ChainModel) -> Result<Self> {
        Self::new(model, vec![pauli::x(), pauli::y(), pauli::z()])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn observable(&self, n: &[f64]) -> CMatrix {
        self.generators
            .iter()
            .zip(n)
            .fold(CMatrix::zeros(self.generators[0].nrows(), self.generators[0].ncols()), |acc, (g, c)| {
                acc + g * C64::from(*c)
            })
    }

    pub fn mu(&self, n: &[f64]) -> f64 {
        self.mu.iter().zip(n).map(|(m, c)| m * c).sum()
    }

    pub fn sigma2(&self, n: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(n);
        clip_variance((v.transpose() * &self.sigma * &v)[(0, 0)])
    }

    pub fn value(&self, n: &[f64]) -> Result<f64> {
        fisher_ratio(self.mu(n), self.sigma2(n))
    }

    /// Non-failing value for searches: undefined points count as 0.
    fn score(&self, n: &[f64]) -> f64 {
        self.value(n).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    /// Unit coefficient vector; for the Bloch family (n_x, n_y, n_z).
    pub direction: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ObservableScan {
    pub family: ObservableFamily,
    /// In generation order.
    pub grid: Vec<ScanPoint>,
    /// Best grid point after local refinement.
    pub best: ScanPoint,
}

/// Unit vectors of a spherical Fibonacci lattice.
pub fn fibonacci_sphere(points: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..points)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / points as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Seed for the quasi-uniform directions of non-Bloch families.
const DIRECTION_SEED: u64 = 0x0b5e_7ab1e;
/// Refinement stops when the angular step falls below this.
const REFINE_PRECISION: f64 = 1e-4;

/// Classical Fisher information over unit-norm observables of `family`,
/// on `resolution` directions, with the best point refined by coordinate
/// shrinking in angle space.
pub fn scan_observables(
    model: &ChainModel,
    family: ObservableFamily,
    resolution: usize,
) -> Result<ObservableScan> {
    if resolution == 0 {
        return Err(FisherError::InvalidParameter("resolution must be positive".into()));
    }
    let form = match family {
        ObservableFamily::Bloch => {
            if model.d() != 2 {
                return Err(FisherError::InvalidParameter(
                    "the Bloch family needs two-level atoms".into(),
                ));
            }
            FisherForm::bloch(model)?
        }
        ObservableFamily::GellMann => FisherForm::new(model, gell_mann_basis(model.d()))?,
    };
    let directions: Vec<Vec<f64>> = match family {
        ObservableFamily::Bloch => fibonacci_sphere(resolution).iter().map(|p| p.to_vec()).collect(),
        ObservableFamily::GellMann => random_directions(form.dim(), resolution),
    };
    let grid: Vec<ScanPoint> = directions
        .into_par_iter()
        .map(|direction| ScanPoint {
            value: form.score(&direction),
            direction,
        })
        .collect();
    let start = grid
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("nonempty grid")
        .clone();
    let step = std::f64::consts::PI / (resolution as f64).sqrt();
    let best = refine(&form, start, step);
    Ok(ObservableScan { family, grid, best })
}

fn random_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Hyperspherical angles of a unit vector, and back.
fn to_angles(n: &[f64]) -> Vec<f64> {
    let m = n.len();
    let mut angles = Vec::with_capacity(m - 1);
    for i in 0..m - 1 {
        let tail = n[i..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if i == m - 2 {
            angles.push(n[m - 1].atan2(n[m - 2]));
        } else {
            angles.push(if tail == 0.0 { 0.0 } else { (n[i] / tail).clamp(-1.0, 1.0).acos() });
        }
    }
    angles
}

fn from_angles(angles: &[f64]) -> Vec<f64> {
    let m = angles.len() + 1;
    let mut n = vec![0.0; m];
    let mut sin_prod = 1.0;
    for i in 0..m - 1 {
        n[i] = sin_prod * angles[i].cos();
        sin_prod *= angles[i].sin();
    }
    n[m - 1] = sin_prod;
    n
}

fn refine(form: &FisherForm, start: ScanPoint, mut step: f64) -> ScanPoint {
    let mut angles = to_angles(&start.direction);
    let mut best = start.value;
    while step > REFINE_PRECISION {
        let mut improved = false;
        for i in 0..angles.len() {
            for sign in [1.0, -1.0] {
                let mut trial = angles.clone();
                trial[i] += sign * step;
                let value = form.score(&from_angles(&trial));
                if value > best {
                    best = value;
                    angles = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    ScanPoint {
        direction: from_angles(&angles),
        value: best,
    }
}
