//! Structured output: JSON run reports and CSV tables.

use std::fmt::Write as _;

use qmarkov::linalg::{CMatrix, C64};
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub input_digest: String,
    pub parameters: Map<String, Value>,
    /// Unit of every dimensioned quantity in `results`.
    pub units: Map<String, Value>,
    pub results: Map<String, Value>,
    pub warnings: Vec<String>,
    pub seed: Option<u64>,
}

impl RunReport {
    pub fn new(command: &str, input_digest: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digest: input_digest.to_string(),
            parameters: Map::new(),
            units: Map::new(),
            results: Map::new(),
            warnings: Vec::new(),
            seed: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.parameters.insert(key.into(), value.into());
        self
    }

    pub fn unit(&mut self, key: &str, unit: &str) -> &mut Self {
        self.units.insert(key.into(), unit.into());
        self
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.results.insert(key.into(), value.into());
        self
    }

    pub fn warn(&mut self, message: impl Into<String>) -> &mut Self {
        self.warnings.push(message.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// A finite float, or null with the reason recorded by the caller.
pub fn real(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn complex(z: C64) -> Value {
    json!({ "re": real(z.re), "im": real(z.im) })
}

pub fn matrix(x: &CMatrix) -> Value {
    let part = |f: fn(&C64) -> f64| -> Value {
        (0..x.nrows())
            .map(|i| (0..x.ncols()).map(|j| real(f(&x[(i, j)]))).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .into()
    };
    json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
}

/// A CSV table whose header names every column with its unit.
#[derive(Debug, Clone)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    /// `columns` are (name, unit) pairs; the header cell is `name [unit]`.
    pub fn new(columns: &[(&str, &str)]) -> Self {
        Self {
            header: columns.iter().map(|(name, unit)| format!("{name} [{unit}]")).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// 17 significant digits.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_header_carries_units() {
        let mut csv = Csv::new(&[("n", "atoms"), ("F_n", "rad^-2")]);
        csv.push(vec!["1".into(), float(2.0)]);
        assert_eq!(csv.render(), "n [atoms],F_n [rad^-2]\n1,2.0000000000000000e0\n");
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(real(f64::INFINITY), Value::Null);
        assert_eq!(complex(C64::new(1.0, f64::NAN))["im"], Value::Null);
    }
}
