//! Model files: either an explicit Hamiltonian and input state, or the
//! builtin two-qubit exchange model.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use qmarkov::linalg::{self, CMatrix, CVector, Hermitian, PureState, C64};
use qmarkov::ChainModel;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Hermiticity and normalization tolerance for model input.
pub const INPUT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub d: usize,
    pub k: usize,
    pub hamiltonian: ComplexMatrix,
    pub input_state: ComplexVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinModel {
    pub builtin: String,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelFile {
    Builtin(BuiltinModel),
    Explicit(ExplicitModel),
}

/// A validated model with the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    pub model: ChainModel,
    /// `sha256:` followed by the hex digest of the file bytes.
    pub digest: String,
}

impl LoadedModel {
    /// (a, b, f) when the model is the builtin exchange model.
    pub fn xy_parameters(&self) -> Option<(f64, f64, f64)> {
        match &self.file {
            ModelFile::Builtin(m) => Some((m.a, m.b, m.f)),
            ModelFile::Explicit(_) => None,
        }
    }
}

pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("model file is not valid JSON")?;
        let is_builtin = value.as_object().is_some_and(|o| o.contains_key("builtin"));
        if !value.is_object() {
            bail!("model file must contain a JSON object");
        }
        Ok(if is_builtin {
            ModelFile::Builtin(serde_json::from_value(value).context("builtin model")?)
        } else {
            ModelFile::Explicit(serde_json::from_value(value).context("explicit model")?)
        })
    }

    pub fn emit(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn theta0(&self) -> Option<f64> {
        match self {
            ModelFile::Builtin(m) => m.theta0,
            ModelFile::Explicit(m) => m.theta0,
        }
    }

    /// Builds the chain; `theta0` overrides the value in the file.
    pub fn build(&self, theta0: Option<f64>) -> Result<ChainModel> {
        let theta0 = theta0
            .or(self.theta0())
            .ok_or_else(|| anyhow!("theta0: missing (give it in the file or pass --cos-theta0)"))?;
        if !theta0.is_finite() {
            bail!("theta0: must be finite, got {theta0}");
        }
        match self {
            ModelFile::Builtin(m) => build_builtin(m, theta0),
            ModelFile::Explicit(m) => build_explicit(m, theta0),
        }
    }

    /// The explicit form of a chain model.
    pub fn from_model(model: &ChainModel) -> Self {
        let h = model.hamiltonian().matrix();
        let psi = model.input().amplitudes();
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..h.nrows()).map(|i| (0..h.ncols()).map(|j| f(&h[(i, j)])).collect()).collect()
        };
        ModelFile::Explicit(ExplicitModel {
            d: model.d(),
            k: model.k(),
            hamiltonian: ComplexMatrix {
                re: rows(|z| z.re),
                im: rows(|z| z.im),
            },
            input_state: ComplexVector {
                re: psi.iter().map(|z| z.re).collect(),
                im: psi.iter().map(|z| z.im).collect(),
            },
            theta0: Some(model.theta0()),
        })
    }
}

fn build_builtin(m: &BuiltinModel, theta0: f64) -> Result<ChainModel> {
    if m.builtin != "xy" {
        bail!("builtin: unknown model {:?} (available: \"xy\")", m.builtin);
    }
    for (name, x) in [("a", m.a), ("b", m.b), ("f", m.f)] {
        if !x.is_finite() {
            bail!("{name}: must be finite, got {x}");
        }
    }
    let norm2 = m.a * m.a + m.b * m.b;
    if (norm2 - 1.0).abs() > INPUT_TOLERANCE {
        bail!("a, b: a^2 + b^2 = {norm2} differs from 1 by more than {INPUT_TOLERANCE:e}");
    }
    ChainModel::xy(m.a, m.b, m.f, theta0).context("builtin xy model")
}

fn matrix_part(rows: &[Vec<f64>], n: usize, field: &str) -> Result<Vec<f64>> {
    if rows.len() != n {
        bail!("{field}: expected {n} rows, found {}", rows.len());
    }
    let mut out = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            bail!("{field}[{i}]: expected {n} entries, found {}", row.len());
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            bail!("{field}[{i}][{j}]: not a finite number");
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

fn vector_part(values: &[f64], n: usize, field: &str) -> Result<()> {
    if values.len() != n {
        bail!("{field}: expected {n} entries, found {}", values.len());
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        bail!("{field}[{i}]: not a finite number");
    }
    Ok(())
}

fn build_explicit(m: &ExplicitModel, theta0: f64) -> Result<ChainModel> {
    if m.d == 0 || m.k == 0 {
        bail!("d, k: must be positive, got d = {}, k = {}", m.d, m.k);
    }
    let n = m.d * m.k;
    let re = matrix_part(&m.hamiltonian.re, n, "hamiltonian.re")?;
    let im = if m.hamiltonian.im.is_empty() {
        vec![0.0; n * n]
    } else {
        matrix_part(&m.hamiltonian.im, n, "hamiltonian.im")?
    };
    let h = CMatrix::from_fn(n, n, |i, j| C64::new(re[i * n + j], im[i * n + j]));
    let defect = linalg::hermiticity_defect(&h);
    if defect > INPUT_TOLERANCE {
        bail!("hamiltonian: deviation from Hermitian {defect:e} exceeds {INPUT_TOLERANCE:e}");
    }
    let h = Hermitian::with_tolerance(h, INPUT_TOLERANCE).context("hamiltonian")?;

    vector_part(&m.input_state.re, m.d, "input_state.re")?;
    let psi_im = if m.input_state.im.is_empty() {
        vec![0.0; m.d]
    } else {
        vector_part(&m.input_state.im, m.d, "input_state.im")?;
        m.input_state.im.clone()
    };
    let psi = CVector::from_fn(m.d, |i, _| C64::new(m.input_state.re[i], psi_im[i]));
    let norm = psi.norm();
    if (norm - 1.0).abs() > INPUT_TOLERANCE {
        bail!("input_state: norm {norm} differs from 1 by more than {INPUT_TOLERANCE:e}");
    }
    let psi = PureState::with_tolerance(psi, INPUT_TOLERANCE).context("input_state")?;
    ChainModel::new(h, psi, m.k, theta0).context("model")
}

/// Reads, validates and digests a model file. `cos_theta0` overrides the
/// working point with θ₀ = arccos(c).
pub fn load_model(path: &Path, cos_theta0: Option<f64>) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read model file {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let file = ModelFile::parse(text).with_context(|| format!("in model file {}", path.display()))?;
    let theta0 = match cos_theta0 {
        Some(c) if !(-1.0..=1.0).contains(&c) => bail!("--cos-theta0: {c} is outside [-1, 1]"),
        Some(c) => Some(c.acos()),
        None => None,
    };
    let model = file
        .build(theta0)
        .with_context(|| format!("in model file {}", path.display()))?;
    Ok(LoadedModel {
        file,
        model,
        digest: digest(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_dispatch_by_key() {
        let m = ModelFile::parse(r#"{"builtin": "xy", "a": 0.6, "b": 0.8, "theta0": 1.0}"#).unwrap();
        assert!(matches!(m, ModelFile::Builtin(ref b) if b.f == 0.0));
        assert!(ModelFile::parse("[1, 2]").is_err());
        assert!(ModelFile::parse(r#"{"builtin": "xy", "a": 0.6, "b": 0.8, "g": 1}"#).is_err());
    }

    #[test]
    fn missing_theta0_is_reported() {
        let m = ModelFile::parse(r#"{"builtin": "xy", "a": 0.6, "b": 0.8}"#).unwrap();
        let err = m.build(None).unwrap_err().to_string();
        assert!(err.starts_with("theta0"), "{err}");
        assert!(m.build(Some(0.3)).is_ok());
    }

    #[test]
    fn unknown_builtin() {
        let m = ModelFile::parse(r#"{"builtin": "zz", "a": 1.0, "b": 0.0, "theta0": 1.0}"#).unwrap();
        assert!(m.build(None).unwrap_err().to_string().starts_with("builtin"));
    }

    #[test]
    fn field_paths_in_errors() {
        let bad_row = r#"{"d": 2, "k": 1, "hamiltonian": {"re": [[1, 0], [0]]},
                          "input_state": {"re": [1, 0]}, "theta0": 0.1}"#;
        let err = ModelFile::parse(bad_row).unwrap().build(None).unwrap_err().to_string();
        assert!(err.starts_with("hamiltonian.re[1]"), "{err}");

        let not_herm = r#"{"d": 2, "k": 1, "hamiltonian": {"re": [[1, 0.5], [0, 1]]},
                           "input_state": {"re": [1, 0]}, "theta0": 0.1}"#;
        let err = ModelFile::parse(not_herm).unwrap().build(None).unwrap_err().to_string();
        assert!(err.starts_with("hamiltonian:"), "{err}");

        let not_unit = r#"{"d": 2, "k": 1, "hamiltonian": {"re": [[1, 0], [0, 1]]},
                           "input_state": {"re": [1, 1e-4]}, "theta0": 0.1}"#;
        let err = ModelFile::parse(not_unit).unwrap().build(None).unwrap_err().to_string();
        assert!(err.starts_with("input_state:"), "{err}");
    }

    #[test]
    fn tolerance_boundary() {
        let within = r#"{"d": 2, "k": 1, "hamiltonian": {"re": [[1, 1e-11], [0, 1]]},
                         "input_state": {"re": [1, 0]}, "theta0": 0.1}"#;
        assert!(ModelFile::parse(within).unwrap().build(None).is_ok());
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest(b"abc"),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
