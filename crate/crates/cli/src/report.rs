//! Result tables.

use std::io::Write;

use anyhow::Result;

use crate::experiment::ResultRow;

pub const HEADER: [&str; 15] = [
    "scenario",
    "estimator",
    "mean",
    "se",
    "n",
    "delta_from_oracle",
    "beta_c",
    "beta_t",
    "beta_o",
    "gamma",
    "docs",
    "replicates",
    "seed",
    "accuracy",
    "status",
];

/// Effect sizes in percentage points.
fn pp(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{:.4}", 100.0 * x))
}

/// Write rows as CSV; means, SEs and deltas are scaled by 100.
pub fn write_results(writer: impl Write, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.estimator.clone(),
            pp(r.mean),
            pp(r.se),
            r.n.to_string(),
            pp(r.delta_from_oracle),
            r.params.beta_c.to_string(),
            r.params.beta_t.to_string(),
            r.params.beta_o.to_string(),
            r.params.gamma.to_string(),
            r.docs.to_string(),
            r.replicates.to_string(),
            r.seed.to_string(),
            r.accuracy.map_or_else(String::new, |a| a.to_string()),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed form of a results CSV row, for consumers and tests.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct CsvRow {
    pub scenario: String,
    pub estimator: String,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n: usize,
    pub delta_from_oracle: Option<f64>,
    pub beta_c: f64,
    pub beta_t: f64,
    pub beta_o: f64,
    pub gamma: f64,
    pub docs: usize,
    pub replicates: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub status: String,
}

pub fn read_results(reader: impl std::io::Read) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}
