//! Exact finite-n inner products of output states through transfer-map
//! iteration: ⟨ψⁿ_{θl} | ψⁿ_{θr}⟩ = Tr(ρ Tⁿ[1]) with
//! T(X) = ⟨ψ| U_{θl}† (1 ⊗ X) U_{θr} |ψ⟩.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{self, ChainError, ChainModel, SuperOperator};
use crate::fisher::{self, FisherError};
use crate::linalg::{self, expm_hermitian, trace_norm, CMatrix, DensityMatrix, Hermitian, LinalgError, PureState, C64};
use crate::perturbation::centered_chain;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OverlapError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("generator is not centered in the input state: <psi|J|psi> = {mean}")]
    Uncentered { mean: f64 },
    #[error("system state has dimension {found}, expected {expected}")]
    StateDimension { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, OverlapError>;

/// X ↦ ⟨ψ| U_{θl}† (1 ⊗ X) U_{θr} |ψ⟩.
pub fn transfer_map(model: &ChainModel, theta_left: f64, theta_right: f64) -> SuperOperator {
    let (d, k) = (model.d(), model.k());
    let left = chain::blocks(&model.isometry(theta_left), d, k);
    let right = chain::blocks(&model.isometry(theta_right), d, k);
    SuperOperator::sandwich(k, &left, &right)
}

#[derive(Debug, Clone)]
pub struct OverlapTransferMap {
    pub theta_left: f64,
    pub theta_right: f64,
    pub map: SuperOperator,
}

impl OverlapTransferMap {
    pub fn new(model: &ChainModel, theta_left: f64, theta_right: f64) -> Self {
        Self {
            theta_left,
            theta_right,
            map: transfer_map(model, theta_left, theta_right),
        }
    }

    /// Tr(ρ Tⁿ[1])
    pub fn overlap(&self, rho: &DensityMatrix, n: usize) -> C64 {
        let one = linalg::identity(self.map.k());
        rho.expectation(&self.map.apply_n(&one, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapResult {
    pub n: usize,
    pub value: C64,
    pub modulus: f64,
    pub phase: f64,
}

impl OverlapResult {
    pub fn new(n: usize, value: C64) -> Self {
        Self {
            n,
            value,
            modulus: value.norm(),
            phase: value.arg(),
        }
    }
}

fn check_state(model: &ChainModel, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != model.k() {
        return Err(OverlapError::StateDimension {
            expected: model.k(),
            found: rho.dim(),
        });
    }
    Ok(())
}

/// ⟨ψⁿ_{θl} | ψⁿ_{θr}⟩ for the chain started in ρ.
pub fn overlap(model: &ChainModel, rho: &DensityMatrix, n: usize, theta_left: f64, theta_right: f64) -> Result<C64> {
    check_state(model, rho)?;
    if theta_left == theta_right {
        return Ok(C64::from(1.0));
    }
    Ok(OverlapTransferMap::new(model, theta_left, theta_right).overlap(rho, n))
}

/// The stationary state when the chain is mixing, otherwise `fallback`.
pub fn default_initial_state(model: &ChainModel, fallback: &DensityMatrix) -> DensityMatrix {
    match model.stationary() {
        Ok(chain) => chain.rho_st,
        Err(_) => fallback.clone(),
    }
}

/// Finite-difference step for the output quantum Fisher information.
pub const QFI_STEP: f64 = 1e-3;

/// F⁽ⁿ⁾ = 4(∂u∂v f − ∂u f ∂v f) at 0 for f(u, v) = ⟨ψⁿ_{θ₀+u} | ψⁿ_{θ₀+v}⟩,
/// with central differences at steps h and h/2 combined by one Richardson
/// step.
pub fn qfi_finite_n(model: &ChainModel, rho: &DensityMatrix, n: usize, theta0: f64, h: f64) -> Result<f64> {
    check_state(model, rho)?;
    if n == 0 {
        return Err(OverlapError::InvalidParameter("n must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(OverlapError::InvalidParameter("step must be positive".into()));
    }
    let f = |u: f64, v: f64| overlap(model, rho, n, theta0 + u, theta0 + v);
    let estimate = |h: f64| -> Result<f64> {
        let mixed = (f(h, h)? - f(h, -h)? - f(-h, h)? + f(-h, -h)?) / (4.0 * h * h);
        let du = (f(h, 0.0)? - f(-h, 0.0)?) / (2.0 * h);
        let dv = (f(0.0, h)? - f(0.0, -h)?) / (2.0 * h);
        Ok(4.0 * (mixed - du * dv).re)
    };
    Ok((4.0 * estimate(h / 2.0)? - estimate(h)?) / 3.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanRow {
    pub n: usize,
    pub overlap: OverlapResult,
    pub target: C64,
    /// | |overlap| − |target| | / |target|
    pub modulus_error: f64,
    /// |arg overlap − arg target|, wrapped to [0, π].
    pub phase_error: f64,
}

#[derive(Debug, Clone)]
pub struct LanReport {
    pub u: f64,
    pub v: f64,
    pub f: f64,
    pub phase_coefficient: f64,
    pub rows: Vec<LanRow>,
}

fn wrap_phase(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = x.rem_euclid(tau);
    r.min(tau - r)
}

/// Overlaps at θ₀ + u/√n, θ₀ + v/√n (H centered at θ₀) against the
/// coherent-state limit e^{ia(u²−v²)} e^{−F(u−v)²/8}.
pub fn lan_check(model: &ChainModel, rho: &DensityMatrix, u: f64, v: f64, n_list: &[usize]) -> Result<LanReport> {
    check_state(model, rho)?;
    let qfi = fisher::quantum_fisher(model)?;
    let centered = centered_chain(model)?.model;
    let theta0 = model.theta0();
    let target = C64::from_polar(
        (-qfi.f * (u - v).powi(2) / 8.0).exp(),
        qfi.phase_coefficient * (u * u - v * v),
    );
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let s = 1.0 / (n as f64).sqrt();
            let value = overlap(&centered, rho, n, theta0 + u * s, theta0 + v * s)?;
            let overlap = OverlapResult::new(n, value);
            Ok(LanRow {
                n,
                overlap,
                target,
                modulus_error: (overlap.modulus - target.norm()).abs() / target.norm(),
                phase_error: wrap_phase(overlap.phase - target.arg()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LanReport {
        u,
        v,
        f: qfi.f,
        phase_coefficient: qfi.phase_coefficient,
        rows,
    })
}

/// Least-squares a in arg⟨ψⁿ_u|ψⁿ_v⟩ ≈ a(u² − v²) over a design of (u, v)
/// pairs at fixed n, with H centered at θ₀. With three or more pairs the
/// odd cubic corrections (u³ − v³)/√n and uv(u − v)/√n are fitted
/// alongside and discarded.
pub fn fit_phase_coefficient(model: &ChainModel, rho: &DensityMatrix, n: usize, design: &[(f64, f64)]) -> Result<f64> {
    check_state(model, rho)?;
    let centered = centered_chain(model)?.model;
    let theta0 = model.theta0();
    let s = 1.0 / (n as f64).sqrt();
    let columns = if design.len() >= 3 { 3 } else { 1 };
    let mut x = DMatrix::<f64>::zeros(design.len(), columns);
    let mut y = DVector::<f64>::zeros(design.len());
    for (r, &(u, v)) in design.iter().enumerate() {
        x[(r, 0)] = u * u - v * v;
        if columns == 3 {
            x[(r, 1)] = (u.powi(3) - v.powi(3)) * s;
            x[(r, 2)] = u * v * (u - v) * s;
        }
        y[r] = overlap(&centered, rho, n, theta0 + u * s, theta0 + v * s)?.arg();
    }
    let svd = x.svd(true, true);
    if svd.rank(1e-12 * svd.singular_values.max()) < columns {
        return Err(OverlapError::InvalidParameter(
            "phase design is degenerate (needs pairs with u^2 != v^2 and independent cubic terms)".into(),
        ));
    }
    let coeffs = svd.solve(&y, 0.0).expect("U and V were computed");
    Ok(coeffs[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub n: usize,
    pub value: C64,
    pub target: C64,
    pub error: f64,
}

/// ⟨ψ|e^{i(u−v)J/√n}|ψ⟩ⁿ against e^{−(u−v)²F/8}, F = 4⟨ψ|J²|ψ⟩, evaluated
/// as a chain with a one-dimensional system.
pub fn iid_sanity_overlap(j: &Hermitian, psi: &PureState, u: f64, v: f64, n_list: &[usize]) -> Result<Vec<LimitRow>> {
    let mean = psi.expectation(j.matrix()).re;
    if mean.abs() > tol::CENTERING {
        return Err(OverlapError::Uncentered { mean });
    }
    let model = ChainModel::new(j.clone(), psi.clone(), 1, 0.0)?;
    let rho = DensityMatrix::maximally_mixed(1);
    let f = 4.0 * psi.expectation(&(j.matrix() * j.matrix())).re;
    let target = C64::from((-(u - v).powi(2) * f / 8.0).exp());
    n_list
        .par_iter()
        .map(|&n| {
            let s = 1.0 / (n as f64).sqrt();
            let value = overlap(&model, &rho, n, u * s, v * s)?;
            Ok(LimitRow {
                n,
                value,
                target,
                error: (value - target).norm(),
            })
        })
        .collect()
}

/// K = ⟨ψ|H|ψ⟩ on the system.
pub fn effective_generator(model: &ChainModel) -> Result<Hermitian> {
    let k = linalg::conditional_expectation(model.hamiltonian().matrix(), model.input())?;
    Ok(Hermitian::new(linalg::hermitian_part(&k))?)
}

/// Overlaps at θ = u/n and θ = v/n against Tr(ρ e^{i(u−v)K}). The working
/// point of `model` is ignored: the scaling is around zero coupling.
pub fn nonergodic_scaled_overlap(
    model: &ChainModel,
    rho: &DensityMatrix,
    u: f64,
    v: f64,
    n_list: &[usize],
) -> Result<Vec<LimitRow>> {
    check_state(model, rho)?;
    let k = effective_generator(model)?;
    let target = rho.expectation(&expm_hermitian(&k, -(u - v)));
    n_list
        .par_iter()
        .map(|&n| {
            let value = overlap(model, rho, n, u / n as f64, v / n as f64)?;
            Ok(LimitRow {
                n,
                value,
                target,
                error: (value - target).norm(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReducedDynamicsRow {
    pub n: usize,
    pub state: CMatrix,
    /// ‖T_*(n)ⁿ(ρ₀) − e^{−iuK} ρ₀ e^{iuK}‖₁
    pub error: f64,
    pub purity: f64,
}

/// System state after n steps at θ = u/n against the unitary limit
/// e^{−iuK} ρ₀ e^{iuK}.
pub fn nonergodic_reduced_dynamics(
    model: &ChainModel,
    rho0: &DensityMatrix,
    u: f64,
    n_list: &[usize],
) -> Result<Vec<ReducedDynamicsRow>> {
    check_state(model, rho0)?;
    let k = effective_generator(model)?;
    let w = expm_hermitian(&k, u);
    let limit = &w * rho0.matrix() * w.adjoint();
    n_list
        .par_iter()
        .map(|&n| {
            let t_star = model.at(u / n as f64).schrodinger_map();
            let state = t_star.apply_n(rho0.matrix(), n);
            let purity = (&state * &state).trace().re;
            Ok(ReducedDynamicsRow {
                n,
                error: trace_norm(&(&state - &limit)),
                state,
                purity,
            })
        })
        .collect()
}
