//! Monte Carlo simulation of a projective measurement on every outgoing
//! atom, the estimator θ̂ obtained by inverting the stationary mean, and
//! empirical checks of its asymptotic normality and mean square error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{self, ChainError, ChainModel};
use crate::fisher::{self, FisherError};
use crate::linalg::{self, kron, CMatrix, DensityMatrix, Hermitian, LinalgError};
use crate::stats;
use crate::tol;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("observable has dimension {found}, atoms have dimension {expected}")]
    ObservableDimension { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("all outcome probabilities are below the floor")]
    NoOutcome,
    #[error("stationary mean is not strictly monotone on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, TrajectoryError>;

/// Projective measurement of A on the atom after one interaction at θ.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    /// Distinct eigenvalues of A, ascending.
    pub outcomes: Vec<f64>,
    /// ops[i][j] = (⟨j|Pᵢ ⊗ 1) U_θ (|ψ⟩ ⊗ 1)
    ops: Vec<Vec<CMatrix>>,
    /// Eᵢ = Σⱼ ops[i][j]† ops[i][j]
    effects: Vec<CMatrix>,
}

/// Eigenvalues of A grouped at the degeneracy tolerance, with the
/// projector onto each eigenspace.
pub fn spectral_projectors(a: &Hermitian) -> Vec<(f64, CMatrix)> {
    let (values, vectors) = a.eigh();
    let mut groups: Vec<(Vec<f64>, CMatrix)> = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        let v = vectors.column(i).into_owned();
        let p = &v * v.adjoint();
        match groups.last_mut() {
            Some((vals, proj)) if (value - vals[vals.len() - 1]).abs() < tol::DEGENERACY => {
                vals.push(value);
                *proj += p;
            }
            _ => groups.push((vec![value], p)),
        }
    }
    groups
        .into_iter()
        .map(|(vals, p)| (vals.iter().sum::<f64>() / vals.len() as f64, p))
        .collect()
}

impl MeasurementModel {
    pub fn new(model: &ChainModel, theta: f64, a: &Hermitian) -> Result<Self> {
        if a.dim() != model.d() {
            return Err(TrajectoryError::ObservableDimension {
                expected: model.d(),
                found: a.dim(),
            });
        }
        let (d, k) = (model.d(), model.k());
        let v = model.isometry(theta);
        let id_sys = linalg::identity(k);
        let mut outcomes = Vec::new();
        let mut ops = Vec::new();
        let mut effects = Vec::new();
        for (value, p) in spectral_projectors(a) {
            let w = kron(&p, &id_sys) * &v;
            effects.push(w.adjoint() * &w);
            ops.push(chain::blocks(&w, d, k));
            outcomes.push(value);
        }
        Ok(Self {
            outcomes,
            ops,
            effects,
        })
    }

    /// Tr(Eᵢ ρ) for each outcome.
    pub fn probabilities(&self, rho: &CMatrix) -> Vec<f64> {
        self.effects.iter().map(|e| (e * rho).trace().re).collect()
    }

    /// Draws an outcome with `draw` uniform in [0, 1) and returns its index
    /// and the normalized posterior system state. Outcomes below the
    /// probability floor are excluded and the rest renormalized.
    pub fn measure(&self, rho: &CMatrix, draw: f64) -> Result<(usize, CMatrix)> {
        let probs = self.probabilities(rho);
        let total: f64 = probs.iter().filter(|&&p| p >= tol::PROBABILITY_FLOOR).sum();
        if total <= 0.0 {
            return Err(TrajectoryError::NoOutcome);
        }
        let target = draw * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &p) in probs.iter().enumerate() {
            if p < tol::PROBABILITY_FLOOR {
                continue;
            }
            acc += p;
            chosen = Some(i);
            if target < acc {
                break;
            }
        }
        let i = chosen.ok_or(TrajectoryError::NoOutcome)?;
        let mut post = CMatrix::zeros(rho.nrows(), rho.ncols());
        for b in &self.ops[i] {
            post += b * rho * b.adjoint();
        }
        let post = linalg::hermitian_part(&post);
        let tr = post.trace().re;
        Ok((i, post / linalg::C64::from(tr)))
    }
}

/// One measurement step on ρ at the model's θ₀: (outcome, posterior).
pub fn measure_step(
    rho: &DensityMatrix,
    model: &ChainModel,
    a: &Hermitian,
    draw: f64,
) -> Result<(f64, DensityMatrix)> {
    let m = MeasurementModel::new(model, model.theta0(), a)?;
    let (i, post) = m.measure(rho.matrix(), draw)?;
    Ok((m.outcomes[i], DensityMatrix::repair(&post)?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Stationary state of the chain at the true parameter.
    Stationary,
    Given(DensityMatrix),
}

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    /// Working point θ₀ is `model.theta0()`.
    pub model: ChainModel,
    pub observable: Hermitian,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Local parameter: the chain runs at θ = θ₀ + u/√n.
    pub u: f64,
    pub initial: InitialState,
}

impl TrajectoryConfig {
    pub fn new(model: ChainModel, observable: Hermitian, n_steps: usize, n_trajectories: usize, master_seed: u64) -> Self {
        Self {
            model,
            observable,
            n_steps,
            n_trajectories,
            master_seed,
            u: 0.0,
            initial: InitialState::Stationary,
        }
    }

    pub fn with_u(self, u: f64) -> Self {
        Self { u, ..self }
    }

    pub fn with_initial(self, initial: InitialState) -> Self {
        Self { initial, ..self }
    }

    pub fn true_theta(&self) -> f64 {
        self.model.theta0() + self.u / (self.n_steps as f64).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_trajectories == 0 {
            return Err(TrajectoryError::InvalidConfig(
                "n_steps and n_trajectories must be at least 1".into(),
            ));
        }
        if self.observable.dim() != self.model.d() {
            return Err(TrajectoryError::ObservableDimension {
                expected: self.model.d(),
                found: self.observable.dim(),
            });
        }
        if let InitialState::Given(rho) = &self.initial {
            if rho.dim() != self.model.k() {
                return Err(TrajectoryError::InvalidConfig(format!(
                    "initial state has dimension {}, expected {}",
                    rho.dim(),
                    self.model.k()
                )));
            }
        }
        Ok(())
    }

    fn initial_state(&self) -> Result<CMatrix> {
        Ok(match &self.initial {
            InitialState::Stationary => self.model.at(self.true_theta()).stationary()?.rho_st.into_matrix(),
            InitialState::Given(rho) => rho.matrix().clone(),
        })
    }
}

/// The random stream of trajectory `index`: the master seed selects the key
/// and the index selects an independent ChaCha stream.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub outcomes: Vec<f64>,
    /// Ā_n
    pub time_average: f64,
    pub final_state: DensityMatrix,
    /// (1/n) Σ ρ_l over the states before each step.
    pub average_state: DensityMatrix,
}

struct Run {
    sum: f64,
    final_state: CMatrix,
    state_sum: CMatrix,
}

fn simulate(
    measurement: &MeasurementModel,
    rho0: &CMatrix,
    n: usize,
    rng: &mut ChaCha8Rng,
    mut record: Option<&mut Vec<f64>>,
) -> Result<Run> {
    let mut rho = rho0.clone();
    let mut sum = 0.0;
    let mut state_sum = CMatrix::zeros(rho.nrows(), rho.ncols());
    for _ in 0..n {
        state_sum += &rho;
        let (i, post) = measurement.measure(&rho, rng.random::<f64>())?;
        let value = measurement.outcomes[i];
        sum += value;
        if let Some(out) = record.as_deref_mut() {
            out.push(value);
        }
        rho = post;
    }
    Ok(Run {
        sum,
        final_state: rho,
        state_sum,
    })
}

/// Trajectory `index` of the configuration, reproducible from
/// (master_seed, index).
pub fn run_trajectory(config: &TrajectoryConfig, index: u64) -> Result<TrajectoryRecord> {
    config.validate()?;
    let measurement = MeasurementModel::new(&config.model, config.true_theta(), &config.observable)?;
    let rho0 = config.initial_state()?;
    let mut rng = trajectory_rng(config.master_seed, index);
    let mut outcomes = Vec::with_capacity(config.n_steps);
    let run = simulate(&measurement, &rho0, config.n_steps, &mut rng, Some(&mut outcomes))?;
    let n = config.n_steps as f64;
    Ok(TrajectoryRecord {
        index,
        outcomes,
        time_average: run.sum / n,
        final_state: DensityMatrix::repair(&run.final_state)?,
        average_state: DensityMatrix::repair(&(run.state_sum / linalg::C64::from(n)))?,
    })
}

/// Ā_n for every trajectory, ordered by index.
pub fn time_averages(config: &TrajectoryConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let measurement = MeasurementModel::new(&config.model, config.true_theta(), &config.observable)?;
    let rho0 = config.initial_state()?;
    let n = config.n_steps;
    (0..config.n_trajectories as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = trajectory_rng(config.master_seed, index);
            Ok(simulate(&measurement, &rho0, n, &mut rng, None)?.sum / n as f64)
        })
        .collect()
}

/// Stationary mean of A ⊗ 1 at θ.
pub fn stationary_mean(model: &ChainModel, a: &Hermitian, theta: f64) -> Result<f64> {
    Ok(model.at(theta).stationary()?.atom_expectation(a.matrix())?.re)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// Ā_n fell outside the range of the mean on the bracket and the
    /// estimate is the nearest endpoint.
    pub clamped: bool,
}

/// Points sampled to check monotonicity of the stationary mean.
const MONOTONICITY_SAMPLES: usize = 33;
const BISECTION_TOLERANCE: f64 = 1e-10;

/// Inverse of θ ↦ ⟨A ⊗ 1⟩_θ on a bracket where it is strictly monotone.
#[derive(Debug, Clone)]
pub struct MeanInverter {
    model: ChainModel,
    observable: Hermitian,
    lo: f64,
    hi: f64,
    mean_lo: f64,
    mean_hi: f64,
    increasing: bool,
}

impl MeanInverter {
    pub fn new(model: &ChainModel, a: &Hermitian, bracket: (f64, f64)) -> Result<Self> {
        let (lo, hi) = bracket;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(TrajectoryError::InvalidConfig(format!("empty bracket [{lo}, {hi}]")));
        }
        let samples = (0..MONOTONICITY_SAMPLES)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64;
                stationary_mean(model, a, t)
            })
            .collect::<Result<Vec<_>>>()?;
        let diffs: Vec<f64> = samples.windows(2).map(|w| w[1] - w[0]).collect();
        let increasing = diffs.iter().all(|&d| d > 0.0);
        let decreasing = diffs.iter().all(|&d| d < 0.0);
        if !increasing && !decreasing {
            return Err(TrajectoryError::NotMonotone { lo, hi });
        }
        Ok(Self {
            model: model.clone(),
            observable: a.clone(),
            lo,
            hi,
            mean_lo: samples[0],
            mean_hi: samples[MONOTONICITY_SAMPLES - 1],
            increasing,
        })
    }

    pub fn estimate(&self, abar: f64) -> Result<ThetaEstimate> {
        let (min, max) = if self.increasing {
            (self.mean_lo, self.mean_hi)
        } else {
            (self.mean_hi, self.mean_lo)
        };
        let at_min = if self.increasing { self.lo } else { self.hi };
        let at_max = if self.increasing { self.hi } else { self.lo };
        if abar <= min {
            return Ok(ThetaEstimate { theta: at_min, clamped: abar < min });
        }
        if abar >= max {
            return Ok(ThetaEstimate { theta: at_max, clamped: abar > max });
        }
        let (mut lo, mut hi) = (self.lo, self.hi);
        while hi - lo > BISECTION_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let m = stationary_mean(&self.model, &self.observable, mid)?;
            if (m < abar) == self.increasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(ThetaEstimate {
            theta: 0.5 * (lo + hi),
            clamped: false,
        })
    }
}

/// θ̂ solving ⟨A ⊗ 1⟩_θ = Ā_n on the bracket.
pub fn estimate_theta(model: &ChainModel, a: &Hermitian, abar: f64, bracket: (f64, f64)) -> Result<ThetaEstimate> {
    MeanInverter::new(model, a, bracket)?.estimate(abar)
}

#[derive(Debug, Clone)]
pub struct CltReport {
    pub n: usize,
    pub trajectories: usize,
    pub u: f64,
    pub mu: f64,
    pub sigma2: f64,
    /// μ·u
    pub expected_mean: f64,
    /// Of √n(Ā_n − ⟨A⟩_θ₀).
    pub empirical_mean: f64,
    pub mean_standard_error: f64,
    pub empirical_variance: f64,
    /// Normal-theory standard error σ²·√(2/(N−1)).
    pub variance_standard_error: f64,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub ks_critical: f64,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub ks_ok: bool,
}

impl CltReport {
    pub fn pass(&self) -> bool {
        self.mean_ok && self.variance_ok && self.ks_ok
    }
}

/// Standard errors allowed between empirical and predicted means.
pub const MEAN_SIGMAS: f64 = 4.0;
/// Relative tolerance on the variance.
pub const VARIANCE_RELATIVE: f64 = 0.10;
/// Significance level of the KS test.
pub const KS_LEVEL: f64 = 0.01;

/// Compares √n(Ā_n − ⟨A⟩_θ₀) across trajectories with N(μu, σ²).
pub fn clt_experiment(config: &TrajectoryConfig) -> Result<CltReport> {
    let params = fisher::clt_parameters(&config.model, &config.observable)?;
    let mean0 = stationary_mean(&config.model, &config.observable, config.model.theta0())?;
    let root_n = (config.n_steps as f64).sqrt();
    let stats: Vec<f64> = time_averages(config)?
        .into_iter()
        .map(|abar| root_n * (abar - mean0))
        .collect();
    let count = stats.len();
    let (mean, variance) = stats::mean_variance(&stats);
    let expected_mean = params.mu * config.u;
    let mean_standard_error = (variance / count as f64).sqrt();
    let variance_standard_error = params.sigma2 * (2.0 / (count as f64 - 1.0).max(1.0)).sqrt();
    let ks_distance = stats::ks_distance_normal(&stats, expected_mean, params.sigma2);
    let ks_critical = stats::ks_critical_value(KS_LEVEL, count);
    Ok(CltReport {
        n: config.n_steps,
        trajectories: count,
        u: config.u,
        mu: params.mu,
        sigma2: params.sigma2,
        expected_mean,
        empirical_mean: mean,
        mean_standard_error,
        empirical_variance: variance,
        variance_standard_error,
        ks_distance,
        ks_p_value: stats::ks_p_value(ks_distance, count),
        ks_critical,
        mean_ok: (mean - expected_mean).abs() <= MEAN_SIGMAS * mean_standard_error,
        variance_ok: (variance - params.sigma2).abs() <= VARIANCE_RELATIVE * params.sigma2,
        ks_ok: ks_distance <= ks_critical,
    })
}

#[derive(Debug, Clone)]
pub struct MseReport {
    pub n: usize,
    pub trajectories: usize,
    pub true_theta: f64,
    /// n·mean((θ̂ − θ)²)
    pub empirical: f64,
    pub standard_error: f64,
    /// σ²/μ²
    pub target: f64,
    pub clamped: usize,
}

impl MseReport {
    /// |empirical − target| in units of the Monte Carlo standard error.
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.target).abs() / self.standard_error
    }
}

/// Rescaled mean square error of θ̂ against σ²/μ².
pub fn mse_experiment(config: &TrajectoryConfig, bracket: (f64, f64)) -> Result<MseReport> {
    let params = fisher::clt_parameters(&config.model, &config.observable)?;
    let target = 1.0 / fisher::fisher_ratio(params.mu, params.sigma2)?;
    let inverter = MeanInverter::new(&config.model, &config.observable, bracket)?;
    let theta = config.true_theta();
    let n = config.n_steps as f64;
    let estimates = time_averages(config)?
        .into_par_iter()
        .map(|abar| inverter.estimate(abar))
        .collect::<Result<Vec<_>>>()?;
    let clamped = estimates.iter().filter(|e| e.clamped).count();
    let scaled: Vec<f64> = estimates.iter().map(|e| n * (e.theta - theta).powi(2)).collect();
    let (mean, variance) = stats::mean_variance(&scaled);
    Ok(MseReport {
        n: config.n_steps,
        trajectories: scaled.len(),
        true_theta: theta,
        empirical: mean,
        standard_error: (variance / scaled.len() as f64).sqrt(),
        target,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli, random, PureState, C64};
    use proptest::prelude::*;
    use rand::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn benchmark() -> ChainModel {
        ChainModel::xy(0.6, 0.8, 0.0, 0.5f64.acos()).unwrap()
    }

    fn herm(x: CMatrix) -> Hermitian {
        Hermitian::new(x).unwrap()
    }

    fn ground() -> DensityMatrix {
        PureState::basis(2, 0).to_density()
    }

    #[test]
    fn projectors_merge_degenerate_eigenvalues() {
        let a = herm(CMatrix::from_diagonal(&linalg::CVector::from_vec(vec![
            C64::from(1.0),
            C64::from(-2.0),
            C64::from(1.0 + 1e-12),
        ])));
        let groups = spectral_projectors(&a);
        assert_eq!(groups.len(), 2);
        assert!((groups[0].0 + 2.0).abs() < 1e-14);
        assert!((groups[1].1.trace().re - 2.0).abs() < 1e-12);
        let sum = groups.iter().fold(CMatrix::zeros(3, 3), |acc, g| acc + &g.1);
        assert!((sum - linalg::identity(3)).norm() < 1e-12);
    }

    #[test]
    fn decoupled_step_leaves_system_alone() {
        let model = ChainModel::xy(0.6, 0.8, 0.3, 0.0).unwrap();
        let a = herm(pauli::z());
        let m = MeasurementModel::new(&model, 0.0, &a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::density(&mut rng, 2);
        let probs = m.probabilities(rho.matrix());
        // outcomes ascending: −1 then +1
        assert!((probs[1] - 0.36).abs() < 1e-12 && (probs[0] - 0.64).abs() < 1e-12);
        for draw in [0.1, 0.9] {
            let (_, post) = m.measure(rho.matrix(), draw).unwrap();
            assert!((post - rho.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn one_step_law_from_ground_state() {
        // U(ψ ⊗ |0⟩) = a|00⟩ + b(cos θ|10⟩ − sin θ|01⟩) for the exchange model.
        let model = benchmark();
        let theta = model.theta0();
        let m = MeasurementModel::new(&model, theta, &herm(pauli::z())).unwrap();
        let probs = m.probabilities(ground().matrix());
        let b2 = 0.64;
        let p_excited = b2 * theta.cos().powi(2);
        assert!((probs[0] - p_excited).abs() < 1e-12, "{probs:?}");
        assert!((probs[1] - (1.0 - p_excited)).abs() < 1e-12);
        // atom found excited: the system stays in |0⟩
        let (i, post) = m.measure(ground().matrix(), 0.0).unwrap();
        assert_eq!(m.outcomes[i], -1.0);
        assert!((post - ground().matrix()).norm() < 1e-12);
    }

    #[test]
    fn measure_step_uses_model_parameter() {
        let (value, post) = measure_step(&ground(), &benchmark(), &herm(pauli::z()), 0.999).unwrap();
        assert_eq!(value, 1.0);
        assert!((post.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_outcomes_are_never_selected() {
        let model = ChainModel::xy(1.0, 0.0, 0.0, 0.0).unwrap();
        let m = MeasurementModel::new(&model, 0.0, &herm(pauli::z())).unwrap();
        for draw in [0.0, 0.5, 1.0 - 1e-16] {
            let (i, _) = m.measure(ground().matrix(), draw).unwrap();
            assert_eq!(m.outcomes[i], 1.0);
        }
    }

    #[test]
    fn determinism_and_shift() {
        let config = TrajectoryConfig::new(benchmark(), herm(pauli::x()), 300, 4, 99);
        let a = run_trajectory(&config, 2).unwrap();
        let b = run_trajectory(&config, 2).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        assert_eq!(a.time_average.to_bits(), b.time_average.to_bits());
        let c = run_trajectory(&config, 3).unwrap();
        assert_ne!(a.outcomes, c.outcomes);
        let shifted = TrajectoryConfig {
            observable: herm(pauli::x()).shifted(2.5),
            ..config.clone()
        };
        let s = run_trajectory(&shifted, 2).unwrap();
        for (x, y) in a.outcomes.iter().zip(&s.outcomes) {
            assert_eq!(x + 2.5, *y);
        }
        let averages = time_averages(&config).unwrap();
        assert_eq!(averages[2].to_bits(), a.time_average.to_bits());
        assert!(a.outcomes.iter().all(|o| o.abs() == 1.0));
    }

    #[test]
    fn time_average_concentrates_on_stationary_mean() {
        let model = benchmark();
        let a = herm(pauli::x());
        let config = TrajectoryConfig::new(model.clone(), a.clone(), 20000, 1, 5).with_initial(InitialState::Given(ground()));
        let rec = run_trajectory(&config, 0).unwrap();
        let mean = stationary_mean(&model, &a, model.theta0()).unwrap();
        let sigma = fisher::clt_parameters(&model, &a).unwrap().sigma2.sqrt();
        assert!((rec.time_average - mean).abs() < 3.0 * sigma / (20000f64).sqrt());
    }

    #[test]
    fn time_averaged_state_is_stationary() {
        let model = benchmark();
        let config = TrajectoryConfig::new(model.clone(), herm(pauli::z()), 100_000, 1, 6)
            .with_initial(InitialState::Given(ground()));
        let rec = run_trajectory(&config, 0).unwrap();
        let rho_st = model.stationary().unwrap().rho_st;
        assert!(linalg::trace_norm(&(rec.average_state.matrix() - rho_st.matrix())) < 0.02);
    }

    #[test]
    fn stationary_outcome_frequencies() {
        // χ² test at 1% on the first outcome of trajectories started in ρ_st.
        let model = benchmark();
        let a = herm(pauli::x());
        let config = TrajectoryConfig::new(model.clone(), a.clone(), 1, 4000, 11);
        let m = MeasurementModel::new(&model, model.theta0(), &a).unwrap();
        let expected = m.probabilities(model.stationary().unwrap().rho_st.matrix());
        let averages = time_averages(&config).unwrap();
        let ones = averages.iter().filter(|&&x| x > 0.0).count() as f64;
        let n = averages.len() as f64;
        let observed = [n - ones, ones];
        let chi2: f64 = observed
            .iter()
            .zip(&expected)
            .map(|(o, p)| (o - n * p).powi(2) / (n * p))
            .sum();
        let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "{chi2} vs {critical}");
        assert!((expected.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimator_fixed_point_and_first_order() {
        let model = benchmark();
        let a = herm(pauli::x());
        let t0 = model.theta0();
        let bracket = (t0 - 0.3, t0 + 0.3);
        let inv = MeanInverter::new(&model, &a, bracket).unwrap();
        let m0 = stationary_mean(&model, &a, t0).unwrap();
        let est = inv.estimate(m0).unwrap();
        assert!((est.theta - t0).abs() < 1e-9 && !est.clamped);
        let mu = fisher::clt_parameters(&model, &a).unwrap().mu;
        for delta in [1e-3, -1e-3] {
            let est = inv.estimate(m0 + delta).unwrap();
            let linear = t0 + delta / mu;
            // second-order Taylor remainder is O(δ²)
            assert!((est.theta - linear).abs() < 1e-5, "{} vs {linear}", est.theta);
        }
        let far = inv.estimate(10.0).unwrap();
        assert!(far.clamped);
        assert!(far.theta == bracket.0 || far.theta == bracket.1);
    }

    #[test]
    fn estimator_rejects_turning_point() {
        let model = benchmark();
        let a = herm(pauli::x());
        let grid: Vec<f64> = (0..100).map(|i| 0.1 + 0.05 * i as f64).collect();
        let means: Vec<f64> = grid.iter().map(|&t| stationary_mean(&model, &a, t).unwrap()).collect();
        let turning = (1..grid.len() - 1)
            .find(|&i| (means[i] - means[i - 1]) * (means[i + 1] - means[i]) < 0.0)
            .expect("the stationary mean of sigma_x has an extremum on (0, 5)");
        let t = grid[turning];
        assert!(matches!(
            estimate_theta(&model, &a, means[turning], (t - 0.1, t + 0.1)),
            Err(TrajectoryError::NotMonotone { .. })
        ));
    }

    #[test]
    fn clt_null_is_centered_and_scale_free() {
        let model = benchmark();
        let config = TrajectoryConfig::new(model.clone(), herm(pauli::x()), 500, 400, 17);
        let r = clt_experiment(&config).unwrap();
        assert!(r.empirical_mean.abs() <= 4.0 * r.mean_standard_error);
        let scaled = TrajectoryConfig {
            observable: herm(pauli::x() * C64::from(3.0)),
            ..config
        };
        let s = clt_experiment(&scaled).unwrap();
        assert!((s.empirical_mean / s.sigma2.sqrt() - r.empirical_mean / r.sigma2.sqrt()).abs() < 1e-9);
        assert!((s.ks_distance - r.ks_distance).abs() < 1e-9);
    }

    #[test]
    fn mse_target_is_inverse_fisher() {
        let model = benchmark();
        let a = herm(pauli::x());
        let config = TrajectoryConfig::new(model.clone(), a.clone(), 200, 50, 1);
        let t0 = model.theta0();
        let r = mse_experiment(&config, (t0 - 0.5, t0 + 0.5)).unwrap();
        assert_eq!(r.target, 1.0 / fisher::classical_fisher(&model, &a).unwrap());
    }

    #[test]
    fn invalid_configurations() {
        let a = herm(pauli::x());
        let zero = TrajectoryConfig::new(benchmark(), a.clone(), 0, 1, 0);
        assert!(matches!(run_trajectory(&zero, 0), Err(TrajectoryError::InvalidConfig(_))));
        let wrong = TrajectoryConfig::new(benchmark(), herm(linalg::identity(3)), 5, 1, 0);
        assert!(matches!(run_trajectory(&wrong, 0), Err(TrajectoryError::ObservableDimension { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn probabilities_sum_to_one(seed in any::<u64>(), theta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random::hermitian(&mut rng, 6);
            let psi = random::pure_state(&mut rng, 3);
            let model = ChainModel::new(h, psi, 2, theta).unwrap();
            let a = random::hermitian(&mut rng, 3);
            let m = MeasurementModel::new(&model, theta, &a).unwrap();
            let mut rho = random::density(&mut rng, 2).into_matrix();
            for _ in 0..20 {
                let p = m.probabilities(&rho);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let (_, post) = m.measure(&rho, rng.random::<f64>()).unwrap();
                prop_assert!((post.trace().re - 1.0).abs() < 1e-12);
                rho = post;
            }
        }
    }
}
