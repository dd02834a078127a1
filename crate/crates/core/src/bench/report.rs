//! Report types and their JSON/CSV encodings.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fisher::dmatrix_rows;
use crate::simulate::csv_err;

/// Per-component skewness and excess kurtosis with their normal-theory
/// standard errors `√(6/R)` and `√(24/R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub median: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub replications: usize,
    /// `r_n` (parametric) or `n_min^{−1/4}` (semiparametric).
    pub rate: f64,
    /// Estimation target `vec(Σ)` or `∫vec(Σ(t))dt`.
    pub truth: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimates: Option<Vec<Vec<f64>>>,
    /// Mean of `(θ̂ − truth)/rate`.
    pub mean_standardised: Vec<f64>,
    #[serde(with = "dmatrix_rows")]
    pub covariance_empirical: DMatrix<f64>,
    #[serde(with = "dmatrix_rows")]
    pub covariance_target: DMatrix<f64>,
    pub rel_frobenius_error: f64,
    /// `mean / (sd/√R)` per component; zero-variance components report 0.
    pub z_scores: Vec<f64>,
    pub normality: Normality,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adaptive_oracle_gap: Option<GapSummary>,
    pub clamp_events: usize,
    pub wall_ms: Option<f64>,
}

/// Sample mean, covariance (divisor `R − 1`), skewness and excess kurtosis
/// of the rows of `x`.
pub fn moments(x: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let r = x.len();
    if r < 2 {
        return Err(Error::param("replications", "need at least 2 for moments"));
    }
    let k = x[0].len();
    let rf = r as f64;
    let mut mean = vec![0.0; k];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rf);
    let mut cov = DMatrix::zeros(k, k);
    let mut m3 = vec![0.0; k];
    let mut m4 = vec![0.0; k];
    for row in x {
        let c: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for j in 0..k {
            for i in 0..k {
                cov[(i, j)] += c[i] * c[j];
            }
            m3[j] += c[j].powi(3);
            m4[j] += c[j].powi(4);
        }
    }
    let cov = cov / (rf - 1.0);
    let mut skew = vec![0.0; k];
    let mut kurt = vec![0.0; k];
    for j in 0..k {
        let m2 = cov[(j, j)] * (rf - 1.0) / rf;
        if m2 > 0.0 {
            skew[j] = m3[j] / rf / m2.powf(1.5);
            kurt[j] = m4[j] / rf / (m2 * m2) - 3.0;
        }
    }
    Ok((mean, cov, skew, kurt))
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Leaves of a JSON value as `(path, value)` pairs, paths joined with `.`
/// and array indices in brackets.
pub fn flatten_json(v: &Value) -> Vec<(String, String)> {
    fn walk(v: &Value, path: String, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(x, p, out);
                }
            }
            Value::Array(items) => {
                for (i, x) in items.iter().enumerate() {
                    walk(x, format!("{path}[{i}]"), out);
                }
            }
            Value::Null => out.push((path, String::new())),
            Value::String(s) => out.push((path, s.clone())),
            other => out.push((path, other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk(v, String::new(), &mut out);
    out
}

/// Two-column `key,value` CSV of a serialisable value.
pub fn write_flat_csv<T: Serialize, W: Write>(value: &T, w: W) -> Result<()> {
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, x) in flatten_json(&v) {
        out.write_record([k, x]).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

impl McReport {
    /// One row per replication: `replication, theta_1, …`.
    pub fn write_csv_rows<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let k = self.truth.len();
        let mut header = vec!["replication".to_string()];
        header.extend((1..=k).map(|i| format!("theta_{i}")));
        out.write_record(&header).map_err(csv_err)?;
        if let Some(est) = &self.estimates {
            for (r, row) in est.iter().enumerate() {
                let mut rec = vec![r.to_string()];
                rec.extend(row.iter().map(|v| serde_json::Value::from(*v).to_string()));
                out.write_record(&rec).map_err(csv_err)?;
            }
        }
        out.flush().map_err(io_err)
    }

    /// Summary footer: the report without config echo and estimates.
    pub fn write_csv_summary<W: Write>(&self, w: W) -> Result<()> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::Io(e.to_string()))?;
        if let Value::Object(map) = &mut v {
            map.remove("estimates");
            map.remove("config");
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["key", "value"]).map_err(csv_err)?;
        for (k, x) in flatten_json(&v) {
            out.write_record([k, x]).map_err(csv_err)?;
        }
        out.flush().map_err(io_err)
    }
}
