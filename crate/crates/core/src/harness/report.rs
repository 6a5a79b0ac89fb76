//! Machine-readable experiment reports.
//!
//! `report.json` holds everything; `report.csv` flattens the ledger rows and
//! the slope fits to `eps,metric,value,stderr`, with an empty `eps` for
//! slopes. Floats are written in shortest round-trip form, so identical
//! reports serialise to identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::SimConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub eps: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    /// Number of samples behind the value.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub metric: String,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// A `(sample, eps)` cell whose run failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncompleteCell {
    pub sample: usize,
    pub seed: u64,
    pub eps: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub eps_ladder: Vec<f64>,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<LedgerRow>,
    pub slopes: Vec<SlopeRow>,
    pub checks: Vec<CheckRow>,
    pub incomplete: Vec<IncompleteCell>,
    pub config: SimConfig,
}

/// One line of `report.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub eps: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

// JSON has no NaN; non-finite values travel as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonCheck {
    name: String,
    passed: bool,
    #[serde(with = "nan_as_null")]
    value: f64,
    #[serde(with = "nan_as_null")]
    threshold: f64,
    detail: String,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    eps: Option<f64>,
    metric: String,
    #[serde(with = "nan_as_null")]
    value: f64,
    #[serde(with = "nan_as_null")]
    stderr: f64,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    schema_version: u32,
    eps_ladder: Vec<f64>,
    n_samples: usize,
    seeds: Vec<u64>,
    rows: Vec<JsonRow>,
    slopes: Vec<SlopeRow>,
    checks: Vec<JsonCheck>,
    incomplete: Vec<IncompleteCell>,
    config: SimConfig,
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "nan".into()
    }
}

impl ConvergenceReport {
    pub fn all_passed(&self) -> bool {
        self.incomplete.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRow> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn value(&self, eps: f64, metric: &str) -> Option<&LedgerRow> {
        self.rows.iter().find(|r| r.eps == Some(eps) && r.metric == metric)
    }

    pub fn slope(&self, metric: &str) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.metric == metric)
    }

    pub fn to_json(&self) -> Result<String> {
        let j = JsonReport {
            schema_version: self.schema_version,
            eps_ladder: self.eps_ladder.clone(),
            n_samples: self.n_samples,
            seeds: self.seeds.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| JsonRow { eps: r.eps, metric: r.metric.clone(), value: r.value, stderr: r.stderr, n: r.n })
                .collect(),
            slopes: self.slopes.clone(),
            checks: self
                .checks
                .iter()
                .map(|c| JsonCheck {
                    name: c.name.clone(),
                    passed: c.passed,
                    value: c.value,
                    threshold: c.threshold,
                    detail: c.detail.clone(),
                })
                .collect(),
            incomplete: self.incomplete.clone(),
            config: self.config.clone(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: JsonReport = serde_json::from_str(text)?;
        if j.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported report schema_version {}", j.schema_version)));
        }
        Ok(ConvergenceReport {
            schema_version: j.schema_version,
            eps_ladder: j.eps_ladder,
            n_samples: j.n_samples,
            seeds: j.seeds,
            rows: j
                .rows
                .into_iter()
                .map(|r| LedgerRow { eps: r.eps, metric: r.metric, value: r.value, stderr: r.stderr, n: r.n })
                .collect(),
            slopes: j.slopes,
            checks: j
                .checks
                .into_iter()
                .map(|c| CheckRow { name: c.name, passed: c.passed, value: c.value, threshold: c.threshold, detail: c.detail })
                .collect(),
            incomplete: j.incomplete,
            config: j.config,
        })
    }

    /// Ledger rows followed by one `slope:<metric>` row per fit.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let ledger = self.rows.iter().map(|r| CsvRow { eps: r.eps, metric: r.metric.clone(), value: r.value, stderr: r.stderr });
        let slopes = self.slopes.iter().map(|s| CsvRow { eps: None, metric: format!("slope:{}", s.metric), value: s.slope, stderr: s.stderr });
        ledger.chain(slopes).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["schema_version", &REPORT_SCHEMA_VERSION.to_string(), "", ""])?;
        w.write_record(["eps", "metric", "value", "stderr"])?;
        for r in self.csv_rows() {
            w.write_record([r.eps.map(fmt).unwrap_or_default(), r.metric, fmt(r.value), fmt(r.stderr)])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Domain(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        Ok(())
    }
}

/// Parses the output of [`ConvergenceReport::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = r.records();
    let version = records.next().ok_or_else(|| Error::Domain("empty report".into()))??;
    if version.get(0) != Some("schema_version") || version.get(1) != Some(&REPORT_SCHEMA_VERSION.to_string()[..]) {
        return Err(Error::Domain("missing or unsupported schema_version line".into()));
    }
    records.next().ok_or_else(|| Error::Domain("missing header".into()))??;
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Domain(format!("bad number {s:?}: {e}"))) };
    let mut out = vec![];
    for rec in records {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::Domain(format!("expected 4 fields, found {}", rec.len())));
        }
        out.push(CsvRow {
            eps: if rec[0].is_empty() { None } else { Some(num(&rec[0])?) },
            metric: rec[1].to_string(),
            value: num(&rec[2])?,
            stderr: num(&rec[3])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvergenceReport {
        let config = SimConfig::from_toml_str(
            "eps_ladder = [0.25, 0.125]\nnu = 0.1\nT = 0.1\ndt = 0.05\nn_samples = 1\n[grid]\nnx = 4\nny = 4\nnz = 2\n",
        )
        .unwrap();
        ConvergenceReport {
            schema_version: REPORT_SCHEMA_VERSION,
            eps_ladder: vec![0.25, 0.125],
            n_samples: 1,
            seeds: vec![3],
            rows: vec![
                LedgerRow { eps: Some(0.25), metric: "err_L2".into(), value: 1.5e-3, stderr: 2e-5, n: 1 },
                LedgerRow { eps: Some(0.125), metric: "err_L2".into(), value: 0.1 + 0.2, stderr: 0.0, n: 1 },
            ],
            slopes: vec![SlopeRow { metric: "err_L2".into(), slope: 1.0 / 3.0, stderr: 0.01, intercept: -2.0, n_points: 2 }],
            checks: vec![CheckRow { name: "x".into(), passed: false, value: f64::NAN, threshold: 1.0, detail: String::new() }],
            incomplete: vec![],
            config,
        }
    }

    #[test]
    fn json_and_csv_round_trip() {
        let r = sample();
        let back = ConvergenceReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.rows, r.rows);
        assert_eq!(back.slopes, r.slopes);
        assert!(back.checks[0].value.is_nan());
        let rows = parse_csv(&r.to_csv().unwrap()).unwrap();
        assert_eq!(rows, r.csv_rows());
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].eps, None);
        assert!(!r.all_passed());
    }
}
