//! Result rows, CSV serialization and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub metric: String,
    /// One entry per coordinate column; `None` leaves the cell empty.
    pub coords: Vec<Option<f64>>,
    pub value: f64,
    pub two_se: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub coord_names: Vec<String>,
    pub rows: Vec<Row>,
    /// Scalars derived during the run (fit slopes, chosen periods,
    /// calibration factors).
    pub summary: BTreeMap<String, f64>,
}

impl ExperimentResult {
    pub fn new(experiment: &str, coord_names: &[&str]) -> Self {
        ExperimentResult {
            experiment: experiment.to_string(),
            coord_names: coord_names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, metric: &str, coords: &[Option<f64>], value: f64, two_se: f64, n_samples: usize) {
        debug_assert_eq!(coords.len(), self.coord_names.len());
        self.rows.push(Row { metric: metric.to_string(), coords: coords.to_vec(), value, two_se, n_samples });
    }

    pub fn rows_for<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    /// Index of a coordinate column.
    pub fn coord(&self, name: &str) -> Option<usize> {
        self.coord_names.iter().position(|c| c == name)
    }

    /// Rows must have finite values and nonnegative uncertainty.
    pub fn check(&self) -> Result<(), String> {
        for r in &self.rows {
            if !r.value.is_finite() {
                return Err(format!("{}: non-finite value", r.metric));
            }
            if !(r.two_se >= 0.0) {
                return Err(format!("{}: negative uncertainty", r.metric));
            }
        }
        Ok(())
    }

    /// `metric,<coords…>,value,two_se,n_samples`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.coord_names {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",value,two_se,n_samples\n");
        for r in &self.rows {
            out.push_str(&r.metric);
            for c in &r.coords {
                out.push(',');
                if let Some(v) = c {
                    out.push_str(&fmt_float(*v));
                }
            }
            let _ = writeln!(out, ",{},{},{}", fmt_float(r.value), fmt_float(r.two_se), r.n_samples);
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub summary: BTreeMap<String, f64>,
    pub rows: usize,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(result: &ExperimentResult, config: &serde_json::Value, seed: u64, wall_time_s: f64) -> Self {
        let canonical = serde_json::to_vec(config).expect("JSON value serializes");
        Manifest {
            experiment: result.experiment.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: config.clone(),
            config_sha256: sha256_hex(&canonical),
            summary: result.summary.clone(),
            rows: result.rows.len(),
            wall_time_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = ExperimentResult::new("t", &["alpha", "m"]);
        r.push("fn", &[Some(0.5), None], 0.25, 0.0, 50);
        let csv = r.to_csv();
        assert_eq!(
            csv,
            "metric,alpha,m,value,two_se,n_samples\n\
             fn,5.0000000000000000e-1,,2.5000000000000000e-1,0.0000000000000000e0,50\n"
        );
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, std::f64::consts::PI, 1e-300, -2.5e7] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn sha_of_empty() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
