//! The parametrized quantum Markov chain: a k-level system interacting with
//! a stream of d-level atoms, each prepared in ψ, through U_θ = exp(-iθH).
//!
//! Superoperators act on k×k matrices through their column-stacked
//! vectorization: vec(X)[r + k·c] = X[r, c]. This matches nalgebra's
//! column-major storage, so vectorizing is a reinterpretation of the slice.

use nalgebra::linalg::SVD;
use thiserror::Error;

use crate::linalg::{
    self, conditional_expectation, expm_hermitian, kron, partial_trace_atom, pauli, trace_norm,
    CMatrix, CVector, DensityMatrix, Hermitian, LinalgError, PureState, C64, I, ONE, ZERO,
};
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("Hamiltonian has dimension {found}, expected d*k = {expected}")]
    HamiltonianDimension { expected: usize, found: usize },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "chain is not mixing: the transition map needs a unique eigenvalue 1 and all other \
         eigenvalues strictly inside the unit circle (found {unit_multiplicity} eigenvalue(s) at 1, \
         largest other modulus {max_other_modulus:.12})"
    )]
    NotMixing {
        unit_multiplicity: usize,
        max_other_modulus: f64,
    },
}

pub type Result<T> = std::result::Result<T, ChainError>;

pub fn vectorize(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &CVector, k: usize) -> CMatrix {
    CMatrix::from_column_slice(k, k, v.as_slice())
}

/// A linear map on k×k matrices stored as a k²×k² matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    k: usize,
    matrix: CMatrix,
}

impl SuperOperator {
    pub fn from_matrix(k: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != k * k || matrix.ncols() != k * k {
            return Err(LinalgError::DimensionMismatch {
                context: "SuperOperator::from_matrix",
                expected: k * k,
                found: matrix.nrows(),
            }
            .into());
        }
        Ok(Self { k, matrix })
    }

    /// Tabulates a linear map by applying it to the matrix units.
    pub fn from_fn<F>(k: usize, f: F) -> Self
    where
        F: Fn(&CMatrix) -> CMatrix,
    {
        let mut matrix = CMatrix::zeros(k * k, k * k);
        for j in 0..k * k {
            let mut unit = CMatrix::zeros(k, k);
            unit[(j % k, j / k)] = ONE;
            let image = f(&unit);
            matrix.set_column(j, &vectorize(&image));
        }
        Self { k, matrix }
    }

    /// X ↦ Σᵢ Lᵢ† X Rᵢ.
    pub fn sandwich(k: usize, left: &[CMatrix], right: &[CMatrix]) -> Self {
        let mut matrix = CMatrix::zeros(k * k, k * k);
        for (l, r) in left.iter().zip(right) {
            matrix += kron(&r.transpose(), &l.adjoint());
        }
        Self { k, matrix }
    }

    /// ρ ↦ Σᵢ Kᵢ ρ Kᵢ†.
    pub fn kraus(k: usize, ops: &[CMatrix]) -> Self {
        let mut matrix = CMatrix::zeros(k * k, k * k);
        for op in ops {
            matrix += kron(&op.conjugate(), op);
        }
        Self { k, matrix }
    }

    pub fn identity(k: usize) -> Self {
        Self {
            k,
            matrix: CMatrix::identity(k * k, k * k),
        }
    }

    pub fn zero(k: usize) -> Self {
        Self {
            k,
            matrix: CMatrix::zeros(k * k, k * k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        unvectorize(&(&self.matrix * vectorize(x)), self.k)
    }

    /// Applies the map `n` times.
    pub fn apply_n(&self, x: &CMatrix, n: usize) -> CMatrix {
        let mut v = vectorize(x);
        for _ in 0..n {
            v = &self.matrix * v;
        }
        unvectorize(&v, self.k)
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        Self {
            k: self.k,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn scaled(&self, c: C64) -> SuperOperator {
        Self {
            k: self.k,
            matrix: &self.matrix * c,
        }
    }

    pub fn plus(&self, other: &SuperOperator) -> SuperOperator {
        Self {
            k: self.k,
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn minus(&self, other: &SuperOperator) -> SuperOperator {
        Self {
            k: self.k,
            matrix: &self.matrix - &other.matrix,
        }
    }

    /// Frobenius norm of the k²×k² representation.
    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        Ok(linalg::eigenvalues(&self.matrix)?)
    }

    /// The dual under the trace pairing, Tr(A·T(B)) = Tr(T'(A)·B): maps a
    /// Schrödinger-picture map to its Heisenberg partner and back.
    pub fn trace_dual(&self) -> SuperOperator {
        let k = self.k;
        // vec(Xᵀ) is an index permutation of vec(X); M' = P Mᵀ P.
        let perm = |j: usize| (j % k) * k + j / k;
        let matrix = CMatrix::from_fn(k * k, k * k, |r, c| self.matrix[(perm(c), perm(r))]);
        Self { k, matrix }
    }
}

/// Parameters of the chain at a working point θ₀.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    d: usize,
    k: usize,
    hamiltonian: Hermitian,
    input: PureState,
    theta0: f64,
}

impl ChainModel {
    pub fn new(hamiltonian: Hermitian, input: PureState, k: usize, theta0: f64) -> Result<Self> {
        let d = input.dim();
        if d == 0 || k == 0 {
            return Err(ChainError::InvalidParameter("d and k must be positive".into()));
        }
        if hamiltonian.dim() != d * k {
            return Err(ChainError::HamiltonianDimension {
                expected: d * k,
                found: hamiltonian.dim(),
            });
        }
        if !theta0.is_finite() {
            return Err(ChainError::InvalidParameter("theta0 must be finite".into()));
        }
        Ok(Self {
            d,
            k,
            hamiltonian,
            input,
            theta0,
        })
    }

    /// Two-qubit exchange model H = i(σ₊⊗σ₋ − σ₋⊗σ₊) with input
    /// a|0⟩ + b·e^{if}|1⟩.
    pub fn xy(a: f64, b: f64, f: f64, theta0: f64) -> Result<Self> {
        if ((a * a + b * b) - 1.0).abs() > tol::MODEL_INPUT {
            return Err(ChainError::InvalidParameter(format!(
                "a^2 + b^2 = {} must equal 1",
                a * a + b * b
            )));
        }
        let h = xy_hamiltonian();
        let psi = CVector::from_vec(vec![C64::from(a), C64::from_polar(b, f)]);
        let psi = PureState::with_tolerance(psi, tol::MODEL_INPUT)?;
        Self::new(h, psi, 2, theta0)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hamiltonian(&self) -> &Hermitian {
        &self.hamiltonian
    }

    pub fn input(&self) -> &PureState {
        &self.input
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn at(&self, theta: f64) -> ChainModel {
        Self {
            theta0: theta,
            ..self.clone()
        }
    }

    pub fn with_hamiltonian(&self, hamiltonian: Hermitian) -> Result<ChainModel> {
        Self::new(hamiltonian, self.input.clone(), self.k, self.theta0)
    }

    pub fn with_input(&self, input: PureState) -> Result<ChainModel> {
        Self::new(self.hamiltonian.clone(), input, self.k, self.theta0)
    }

    pub fn unitary(&self, theta: f64) -> CMatrix {
        expm_hermitian(&self.hamiltonian, theta)
    }

    /// V = U_θ(|ψ⟩ ⊗ 1), a (d·k)×k isometry.
    pub fn isometry(&self, theta: f64) -> CMatrix {
        isometry(&self.unitary(theta), &self.input, self.k)
    }

    /// Kraus operators Kᵢ = (⟨i| ⊗ 1) U_θ (|ψ⟩ ⊗ 1) of the transition map.
    pub fn kraus_operators(&self, theta: f64) -> Vec<CMatrix> {
        blocks(&self.isometry(theta), self.d, self.k)
    }

    /// T_*(ρ) = Tr_atom(U (|ψ⟩⟨ψ| ⊗ ρ) U†) at θ₀.
    pub fn schrodinger_map(&self) -> SuperOperator {
        let u = self.unitary(self.theta0);
        let p = self.input.projector();
        let (d, k) = (self.d, self.k);
        SuperOperator::from_fn(k, |rho| {
            let joint = &u * kron(&p, rho) * u.adjoint();
            partial_trace_atom(&joint, d, k).expect("dimensions fixed by the model")
        })
    }

    /// T(X) = ⟨ψ| U† (1 ⊗ X) U |ψ⟩ at θ₀.
    pub fn heisenberg_map(&self) -> SuperOperator {
        let u = self.unitary(self.theta0);
        let id_atom = linalg::identity(self.d);
        let psi = &self.input;
        SuperOperator::from_fn(self.k, |x| {
            let y = u.adjoint() * kron(&id_atom, x) * &u;
            conditional_expectation(&y, psi).expect("dimensions fixed by the model")
        })
    }

    pub fn spectral_report(&self) -> Result<SpectralReport> {
        SpectralReport::compute(&self.schrodinger_map(), &self.heisenberg_map())
    }

    /// Caches the stationary state and derived maps; fails unless mixing.
    pub fn stationary(&self) -> Result<StationaryChain> {
        StationaryChain::new(self.clone())
    }

    /// Tr((|ψ⟩⟨ψ| ⊗ ρ_st) U† X U).
    pub fn stationary_expectation(&self, x: &CMatrix) -> Result<C64> {
        self.stationary()?.expectation(x)
    }

    /// ‖T_*ⁿ(ρ₀) − ρ_st‖₁ for n = 0..=n_max with a fitted exponential rate.
    pub fn convergence_diagnostics(
        &self,
        rho0: &DensityMatrix,
        n_max: usize,
    ) -> Result<ConvergenceDiagnostics> {
        let stationary = self.stationary()?;
        if rho0.dim() != self.k {
            return Err(LinalgError::DimensionMismatch {
                context: "convergence_diagnostics",
                expected: self.k,
                found: rho0.dim(),
            }
            .into());
        }
        let t_star = &stationary.schrodinger;
        let rho_st = stationary.rho_st.matrix();
        let mut rho = rho0.matrix().clone();
        let mut distances = Vec::with_capacity(n_max + 1);
        for _ in 0..=n_max {
            distances.push(trace_norm(&(&rho - rho_st)));
            rho = t_star.apply(&rho);
        }
        let window_start = n_max / 5;
        let points: Vec<(f64, f64)> = distances
            .iter()
            .enumerate()
            .skip(window_start)
            .filter(|(_, &dist)| dist > CONVERGENCE_NOISE_FLOOR)
            .map(|(n, &dist)| (n as f64, dist.ln()))
            .collect();
        let fitted_log_rate = if points.len() >= 3 {
            Some(crate::stats::linear_fit(&points).slope)
        } else {
            None
        };
        Ok(ConvergenceDiagnostics {
            distances,
            fitted_log_rate,
            log_lambda2_modulus: stationary.report.lambda2.norm().ln(),
        })
    }
}

/// Distances below this are roundoff and excluded from the rate fit.
const CONVERGENCE_NOISE_FLOOR: f64 = 1e-13;

pub fn xy_hamiltonian() -> Hermitian {
    let sp = pauli::raising();
    let sm = pauli::lowering();
    let h = (kron(&sp, &sm) - kron(&sm, &sp)) * I;
    Hermitian::new(h).expect("exchange Hamiltonian is Hermitian")
}

pub(crate) fn isometry(u: &CMatrix, psi: &PureState, k: usize) -> CMatrix {
    let embed = kron(
        &CMatrix::from_column_slice(psi.dim(), 1, psi.amplitudes().as_slice()),
        &linalg::identity(k),
    );
    u * embed
}

/// Splits a (d·k)×k matrix into its d row blocks of size k×k.
pub(crate) fn blocks(v: &CMatrix, d: usize, k: usize) -> Vec<CMatrix> {
    (0..d).map(|i| v.rows(i * k, k).into_owned()).collect()
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    /// Largest-modulus eigenvalue after removing one copy of the eigenvalue
    /// closest to 1.
    pub lambda2: C64,
    pub gap: f64,
    pub mixing: bool,
    /// Number of eigenvalues within the mixing tolerance of 1.
    pub unit_multiplicity: usize,
    /// Dimension of the numerically detected fixed-point space of T_*.
    pub fixed_space_dim: usize,
    pub degenerate: bool,
    pub stationary_state: DensityMatrix,
}

impl SpectralReport {
    fn compute(schrodinger: &SuperOperator, heisenberg: &SuperOperator) -> Result<Self> {
        let mut eigenvalues = heisenberg.eigenvalues()?;
        eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let unit_multiplicity = eigenvalues
            .iter()
            .filter(|z| (*z - ONE).norm() < tol::MIXING)
            .count();
        let closest = eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - ONE).norm().total_cmp(&(b.1 - ONE).norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let lambda2 = eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != closest)
            .map(|(_, z)| *z)
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(ZERO);
        let mixing = unit_multiplicity == 1 && lambda2.norm() < 1.0 - tol::MIXING;
        let (stationary_state, fixed_space_dim) = fixed_point(schrodinger)?;
        Ok(Self {
            eigenvalues,
            lambda2,
            gap: 1.0 - lambda2.norm(),
            mixing,
            unit_multiplicity,
            fixed_space_dim,
            degenerate: unit_multiplicity > 1,
            stationary_state,
        })
    }
}

/// A fixed state of `t_star`: the maximally mixed state projected onto the
/// numerical null space of T_* − Id, then repaired to a density matrix.
/// For a mixing map the null space is one-dimensional and this is ρ_st.
pub(crate) fn fixed_point(t_star: &SuperOperator) -> Result<(DensityMatrix, usize)> {
    let k = t_star.k();
    let n = k * k;
    let shifted = t_star.matrix() - CMatrix::identity(n, n);
    let svd = SVD::new(shifted, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] < tol::EIGENSPACE_RANK).collect();
    if null.is_empty() {
        let smallest = (0..sv.len())
            .min_by(|&a, &b| sv[a].total_cmp(&sv[b]))
            .expect("nonempty spectrum");
        null.push(smallest);
    }
    let target = vectorize(&(linalg::identity(k) / C64::from(k as f64)));
    let mut projected = CVector::zeros(n);
    for &i in &null {
        let v: CVector = v_t.row(i).adjoint();
        let coeff = v.dotc(&target);
        projected += v * coeff;
    }
    let mut rho = unvectorize(&projected, k);
    let tr = rho.trace();
    rho /= tr;
    Ok((DensityMatrix::repair(&rho)?, null.len()))
}

#[derive(Debug, Clone)]
pub struct ConvergenceDiagnostics {
    /// distances[n] = ‖T_*ⁿ(ρ₀) − ρ_st‖₁
    pub distances: Vec<f64>,
    /// Least-squares slope of ln(distance) against n over the last 80% of
    /// the table, excluding entries at roundoff level.
    pub fitted_log_rate: Option<f64>,
    pub log_lambda2_modulus: f64,
}

/// A mixing chain together with its stationary state and one-step maps.
#[derive(Debug, Clone)]
pub struct StationaryChain {
    pub model: ChainModel,
    pub unitary: CMatrix,
    /// U(|ψ⟩ ⊗ 1)
    pub isometry: CMatrix,
    pub schrodinger: SuperOperator,
    pub heisenberg: SuperOperator,
    pub rho_st: DensityMatrix,
    pub report: SpectralReport,
}

impl StationaryChain {
    pub fn new(model: ChainModel) -> Result<Self> {
        let schrodinger = model.schrodinger_map();
        let heisenberg = model.heisenberg_map();
        let report = SpectralReport::compute(&schrodinger, &heisenberg)?;
        if !report.mixing {
            return Err(ChainError::NotMixing {
                unit_multiplicity: report.unit_multiplicity,
                max_other_modulus: report.lambda2.norm(),
            });
        }
        let unitary = model.unitary(model.theta0);
        let isometry = isometry(&unitary, &model.input, model.k);
        Ok(Self {
            rho_st: report.stationary_state.clone(),
            model,
            unitary,
            isometry,
            schrodinger,
            heisenberg,
            report,
        })
    }

    /// E[Y | s] = ⟨ψ| U† Y U |ψ⟩, an operator on the system.
    pub fn conditional(&self, y: &CMatrix) -> Result<CMatrix> {
        let n = self.model.d * self.model.k;
        if y.nrows() != n || y.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                context: "StationaryChain::conditional",
                expected: n,
                found: y.nrows(),
            }
            .into());
        }
        Ok(self.isometry.adjoint() * y * &self.isometry)
    }

    /// Stationary post-interaction expectation Tr((|ψ⟩⟨ψ| ⊗ ρ_st) U† X U).
    pub fn expectation(&self, x: &CMatrix) -> Result<C64> {
        Ok(self.rho_st.expectation(&self.conditional(x)?))
    }

    /// Stationary expectation of A ⊗ 1 for an atom observable A.
    pub fn atom_expectation(&self, a: &CMatrix) -> Result<C64> {
        self.expectation(&kron(a, &linalg::identity(self.model.k)))
    }

    pub fn system_identity(&self) -> CMatrix {
        linalg::identity(self.model.k)
    }

    pub fn atom_identity(&self) -> CMatrix {
        linalg::identity(self.model.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn benchmark() -> ChainModel {
        ChainModel::xy(0.6, 0.8, 0.0, 0.5f64.acos()).unwrap()
    }

    fn closed_form_eigenvalues(a: f64, b: f64, c: f64) -> Vec<C64> {
        let disc = C64::from(c * c * (1.0 - c).powi(2) - 16.0 * a * a * b * b * c * (1.0 - c * c)).sqrt();
        vec![
            ONE,
            C64::from(c),
            (C64::from(c * (c + 1.0)) + disc) / 2.0,
            (C64::from(c * (c + 1.0)) - disc) / 2.0,
        ]
    }

    /// Greedy matching of two eigenvalue multisets; returns the worst distance.
    fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
        let mut remaining: Vec<C64> = b.to_vec();
        let mut worst: f64 = 0.0;
        for z in a {
            let (idx, dist) = remaining
                .iter()
                .enumerate()
                .map(|(i, w)| (i, (z - w).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            worst = worst.max(dist);
            remaining.remove(idx);
        }
        worst
    }

    #[test]
    fn decoupled_chain_has_identity_maps() {
        let m = ChainModel::xy(0.6, 0.8, 0.3, 0.0).unwrap();
        assert!((m.schrodinger_map().matrix() - CMatrix::identity(4, 4)).norm() < 1e-14);
        assert!((m.heisenberg_map().matrix() - CMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn schrodinger_map_is_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = benchmark();
        let t = m.schrodinger_map();
        for _ in 0..20 {
            let rho = random::density(&mut rng, 2);
            assert!((t.apply(rho.matrix()).trace() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn schrodinger_map_matches_kraus_construction() {
        let m = benchmark();
        let u = m.unitary(m.theta0());
        let psi = m.input().amplitudes().clone();
        // Kᵢ[m, n] = Σⱼ U[(i,m),(j,n)] ψⱼ, assembled entry by entry.
        let kraus: Vec<CMatrix> = (0..2)
            .map(|i| {
                CMatrix::from_fn(2, 2, |r, c| (0..2).map(|j| u[(i * 2 + r, j * 2 + c)] * psi[j]).sum())
            })
            .collect();
        let brute = SuperOperator::from_fn(2, |rho| {
            kraus.iter().map(|k| k * rho * k.adjoint()).fold(CMatrix::zeros(2, 2), |acc, x| acc + x)
        });
        assert!((m.schrodinger_map().matrix() - brute.matrix()).norm() < 1e-13);
        let from_model = SuperOperator::kraus(2, &m.kraus_operators(m.theta0()));
        assert!((from_model.matrix() - brute.matrix()).norm() < 1e-13);
    }

    #[test]
    fn heisenberg_map_is_unital_and_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random::hermitian(&mut rng, 6);
        let psi = random::pure_state(&mut rng, 3);
        let m = ChainModel::new(h, psi, 2, 0.7).unwrap();
        let t = m.heisenberg_map();
        let ts = m.schrodinger_map();
        assert!((t.apply(&linalg::identity(2)) - linalg::identity(2)).norm() < 1e-12);
        for _ in 0..20 {
            let rho = random::gaussian_matrix(&mut rng, 2, 2);
            let x = random::gaussian_matrix(&mut rng, 2, 2);
            let lhs = (ts.apply(&rho) * &x).trace();
            let rhs = (&rho * t.apply(&x)).trace();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!((ts.trace_dual().matrix() - t.matrix()).norm() < 1e-12);
    }

    #[test]
    fn xy_benchmark_spectrum_matches_closed_form() {
        let m = benchmark();
        let report = m.spectral_report().unwrap();
        let expected = closed_form_eigenvalues(0.6, 0.8, 0.5);
        assert!(multiset_distance(&report.eigenvalues, &expected) < 1e-10);
        // 0.375 ± 0.5745i to the quoted precision
        let lam = report.lambda2;
        assert!((lam.re - 0.375).abs() < 1e-12);
        assert!((lam.im.abs() - 0.5744345045346771).abs() < 1e-10);
        assert!(report.mixing);
        assert_eq!(report.fixed_space_dim, 1);
        assert!(!report.degenerate);
    }

    #[test]
    fn decoupled_chain_is_not_mixing() {
        let m = ChainModel::xy(0.6, 0.8, 0.0, 0.0).unwrap();
        let report = m.spectral_report().unwrap();
        assert!(!report.mixing);
        assert!(report.degenerate);
        assert_eq!(report.unit_multiplicity, 4);
        for z in &report.eigenvalues {
            assert!((z - ONE).norm() < 1e-12);
        }
        assert!(matches!(m.stationary(), Err(ChainError::NotMixing { .. })));
    }

    #[test]
    fn dark_input_spectrum() {
        for &theta in &[0.4, 1.1, 2.3] {
            let c = f64::cos(theta);
            let m = ChainModel::xy(1.0, 0.0, 0.0, theta).unwrap();
            let report = m.spectral_report().unwrap();
            let expected = vec![ONE, C64::from(c), C64::from(c), C64::from(c * c)];
            assert!(multiset_distance(&report.eigenvalues, &expected) < 1e-8);
            assert!(report.mixing);
        }
    }

    #[test]
    fn stationary_state_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let h = random::hermitian(&mut rng, 4);
            let psi = random::pure_state(&mut rng, 2);
            let m = ChainModel::new(h, psi, 2, 1.3).unwrap();
            let s = m.stationary().unwrap();
            let rho = s.rho_st.matrix();
            assert!(trace_norm(&(s.schrodinger.apply(rho) - rho)) < 1e-11);
        }
    }

    #[test]
    fn stationary_expectation_examples() {
        let m = benchmark();
        let s = m.stationary().unwrap();
        let one = linalg::identity(4);
        assert!((s.expectation(&one).unwrap() - ONE).norm() < 1e-12);
        let y = pauli::x() * C64::from(0.3) + pauli::z();
        let x = kron(&linalg::identity(2), &y);
        let lhs = s.expectation(&x).unwrap();
        let rhs = s.rho_st.expectation(&y);
        assert!((lhs - rhs).norm() < 1e-12);
        let z = s.atom_expectation(&pauli::z()).unwrap();
        assert!(z.im.abs() < tol::IMAGINARY_RESIDUE);
    }

    #[test]
    fn convergence_diagnostics_behaviour() {
        let m = benchmark();
        let s = m.stationary().unwrap();
        let diag = m.convergence_diagnostics(&s.rho_st, 50).unwrap();
        assert!(diag.distances.iter().all(|&d| d < 1e-12));

        let rho0 = PureState::basis(2, 0).to_density();
        let diag = m.convergence_diagnostics(&rho0, 100).unwrap();
        let rate = diag.fitted_log_rate.expect("enough points above the noise floor");
        assert!(rate <= diag.log_lambda2_modulus + 0.05, "rate {rate}");

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let rho0 = random::density(&mut rng, 2);
            let diag = m.convergence_diagnostics(&rho0, 60).unwrap();
            for w in diag.distances.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn non_mixing_rejected_by_diagnostics() {
        let m = ChainModel::xy(0.6, 0.8, 0.0, 0.0).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            m.convergence_diagnostics(&rho0, 10),
            Err(ChainError::NotMixing { .. })
        ));
    }

    #[test]
    fn xy_rejects_unnormalized_input() {
        assert!(matches!(
            ChainModel::xy(0.6, 0.9, 0.0, 1.0),
            Err(ChainError::InvalidParameter(_))
        ));
    }

    #[test]
    fn schrodinger_map_preserves_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let h = random::hermitian(&mut rng, 6);
        let psi = random::pure_state(&mut rng, 2);
        let m = ChainModel::new(h, psi, 3, 0.9).unwrap();
        let t = m.schrodinger_map();
        for _ in 0..100 {
            let rho = random::density(&mut rng, 3);
            let (evals, _) = linalg::hermitian_eigh(&linalg::hermitian_part(&t.apply(rho.matrix())));
            assert!(evals[0] >= -1e-10);
        }
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::linalg::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn heisenberg_schrodinger_duality(seed in any::<u64>(), theta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random::hermitian(&mut rng, 6);
            let psi = random::pure_state(&mut rng, 2);
            let m = ChainModel::new(h, psi, 3, theta).unwrap();
            let t = m.heisenberg_map();
            let ts = m.schrodinger_map();
            let rho = random::density(&mut rng, 3);
            let x = random::hermitian(&mut rng, 3);
            let lhs = (ts.apply(rho.matrix()) * x.matrix()).trace();
            let rhs = (rho.matrix() * t.apply(x.matrix())).trace();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn mixing_fixed_space_is_one_dimensional(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random::hermitian(&mut rng, 4);
            let psi = random::pure_state(&mut rng, 2);
            let m = ChainModel::new(h, psi, 2, 1.0).unwrap();
            let report = m.spectral_report().unwrap();
            if report.mixing {
                prop_assert_eq!(report.fixed_space_dim, 1);
            }
        }
    }
}
