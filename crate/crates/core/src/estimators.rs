//! Tabular ATE estimators: naive difference in means, backdoor adjustment
//! for the covariate, and matrix adjustment for a known measurement model.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{covariate_arity, Document, TreatmentField};
use crate::error::{Error, Result};

const SINGULAR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Naive,
    NaiveC,
    Proxy,
    Matrix,
    Oracle,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Naive => "naive",
            Estimand::NaiveC => "naive_c",
            Estimand::Proxy => "proxy",
            Estimand::Matrix => "matrix",
            Estimand::Oracle => "oracle",
        })
    }
}

impl FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Estimand::Naive),
            "naive_c" => Ok(Estimand::NaiveC),
            "proxy" => Ok(Estimand::Proxy),
            "matrix" => Ok(Estimand::Matrix),
            "oracle" => Ok(Estimand::Oracle),
            other => Err(Error::Parse(format!("unknown estimand `{other}`"))),
        }
    }
}

/// A point estimate, with a standard error when it pools several replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub estimand: Estimand,
    pub value: f64,
    pub standard_error: Option<f64>,
    pub n: usize,
}

impl AteEstimate {
    pub fn new(estimand: Estimand, value: f64, n: usize) -> Self {
        Self {
            estimand,
            value,
            standard_error: None,
            n,
        }
    }
}

/// Mass (counts or probabilities) over `(Y, C, T)`, stored `[c][y][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    cells: Vec<[[f64; 2]; 2]>,
}

#[derive(Serialize, Deserialize)]
struct JointRow {
    y: u8,
    c: usize,
    t: u8,
    count: f64,
}

fn bit(name: &str, v: u8) -> Result<usize> {
    match v {
        0 | 1 => Ok(usize::from(v)),
        _ => Err(Error::Parse(format!("`{name}` must be 0 or 1, got {v}"))),
    }
}

impl JointTable {
    pub fn zeros(levels: usize) -> Self {
        Self {
            cells: vec![[[0.0; 2]; 2]; levels],
        }
    }

    /// Count documents by `(Y, C, T)` using the chosen treatment label.
    pub fn from_corpus(docs: &[Document], field: TreatmentField) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut table = Self::zeros(covariate_arity(docs));
        for d in docs {
            let t = usize::from(d.require_treatment(field)?);
            let y = usize::from(d.require_outcome()?);
            table.cells[d.covariate][y][t] += 1.0;
        }
        Ok(table)
    }

    pub fn levels(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, y: usize, c: usize, t: usize) -> f64 {
        self.cells[c][y][t]
    }

    pub fn set(&mut self, y: usize, c: usize, t: usize, mass: f64) {
        if c >= self.cells.len() {
            self.cells.resize(c + 1, [[0.0; 2]; 2]);
        }
        self.cells[c][y][t] = mass;
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().flatten().sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.total();
        if total <= 0.0 {
            return Err(Error::Empty("joint table has no mass"));
        }
        Ok(Self {
            cells: self.cells.iter().map(|c| c.map(|row| row.map(|v| v / total))).collect(),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Empty("joint table"));
        }
        if self
            .cells
            .iter()
            .flatten()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidParameter(
                "joint table entries must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `P(C=c)`.
    fn covariate_share(&self, c: usize) -> f64 {
        self.cells[c].iter().flatten().sum::<f64>() / self.total()
    }

    /// `P(Y=1 | T=t, C=c)`, erroring on an empty cell.
    fn outcome_rate(&self, c: usize, t: usize) -> Result<f64> {
        let n = self.cells[c][0][t] + self.cells[c][1][t];
        if n <= 0.0 {
            return Err(Error::EmptyCell {
                covariate: c,
                treated: t as u8,
            });
        }
        Ok(self.cells[c][1][t] / n)
    }

    /// `Σ_c (P(Y=1|T=1,c) − P(Y=1|T=0,c)) · P(c)`.
    pub fn backdoor_ate(&self) -> Result<f64> {
        self.validate()?;
        let mut ate = 0.0;
        for c in 0..self.levels() {
            let share = self.covariate_share(c);
            if share == 0.0 {
                continue;
            }
            ate += (self.outcome_rate(c, 1)? - self.outcome_rate(c, 0)?) * share;
        }
        Ok(ate)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut table = Self::zeros(0);
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: JointRow = row?;
            if !(row.count.is_finite() && row.count >= 0.0) {
                return Err(Error::Parse(format!("count {} must be non-negative", row.count)));
            }
            let (y, t) = (bit("y", row.y)?, bit("t", row.t)?);
            let current = if row.c < table.levels() {
                table.get(y, row.c, t)
            } else {
                0.0
            };
            table.set(y, row.c, t, current + row.count);
        }
        table.validate()?;
        Ok(table)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (c, cell) in self.cells.iter().enumerate() {
            for y in 0..2 {
                for t in 0..2 {
                    w.serialize(JointRow {
                        y: y as u8,
                        c,
                        t: t as u8,
                        count: cell[y][t],
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Misclassification rates `ε_{c,y} = P(T̂=0|T=1,c,y)` and
/// `δ_{c,y} = P(T̂=1|T=0,c,y)`, stored `[c][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    epsilon: Vec<[f64; 2]>,
    delta: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct MeasurementRow {
    c: usize,
    y: u8,
    epsilon: f64,
    delta: f64,
}

impl MeasurementModel {
    pub fn new(epsilon: Vec<[f64; 2]>, delta: Vec<[f64; 2]>) -> Result<Self> {
        if epsilon.len() != delta.len() || epsilon.is_empty() {
            return Err(Error::InvalidParameter(
                "epsilon and delta need the same, non-zero number of levels".into(),
            ));
        }
        if epsilon.iter().chain(&delta).flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(
                "misclassification rates must be probabilities".into(),
            ));
        }
        Ok(Self { epsilon, delta })
    }

    /// The same `(ε, δ)` in every stratum.
    pub fn uniform(levels: usize, epsilon: f64, delta: f64) -> Result<Self> {
        Self::new(vec![[epsilon; 2]; levels], vec![[delta; 2]; levels])
    }

    /// Empirical rates of `proxy` against the true treatment. A stratum with
    /// no units of one arm gets rate 0 for that arm.
    pub fn from_corpus(docs: &[Document], proxy: TreatmentField) -> Result<Self> {
        let levels = covariate_arity(docs);
        let mut counts = vec![[[[0usize; 2]; 2]; 2]; levels];
        for d in docs {
            let t = usize::from(d.require_treatment(TreatmentField::True)?);
            let t_hat = usize::from(d.require_treatment(proxy)?);
            let y = usize::from(d.require_outcome()?);
            counts[d.covariate][y][t][t_hat] += 1;
        }
        let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let epsilon = counts
            .iter()
            .map(|c| [0, 1].map(|y| rate(c[y][1][0], c[y][1][0] + c[y][1][1])))
            .collect();
        let delta = counts
            .iter()
            .map(|c| [0, 1].map(|y| rate(c[y][0][1], c[y][0][0] + c[y][0][1])))
            .collect();
        Self::new(epsilon, delta)
    }

    pub fn levels(&self) -> usize {
        self.epsilon.len()
    }

    pub fn epsilon(&self, c: usize, y: usize) -> f64 {
        self.epsilon[c][y]
    }

    pub fn delta(&self, c: usize, y: usize) -> f64 {
        self.delta[c][y]
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rows: Vec<MeasurementRow> = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            rows.push(row?);
        }
        let levels = rows
            .iter()
            .map(|r| r.c + 1)
            .max()
            .ok_or(Error::Empty("measurement model"))?;
        let mut seen = vec![[false; 2]; levels];
        let mut epsilon = vec![[0.0; 2]; levels];
        let mut delta = vec![[0.0; 2]; levels];
        for r in rows {
            let y = bit("y", r.y)?;
            if std::mem::replace(&mut seen[r.c][y], true) {
                return Err(Error::Parse(format!("duplicate row for c={}, y={y}", r.c)));
            }
            epsilon[r.c][y] = r.epsilon;
            delta[r.c][y] = r.delta;
        }
        if let Some(c) = seen.iter().position(|s| !(s[0] && s[1])) {
            return Err(Error::Parse(format!("measurement model lacks a row for c={c}")));
        }
        Self::new(epsilon, delta)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in 0..self.levels() {
            for y in 0..2 {
                w.serialize(MeasurementRow {
                    c,
                    y: y as u8,
                    epsilon: self.epsilon[c][y],
                    delta: self.delta[c][y],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Push a true `(Y, C, T)` table through the measurement model, giving the
/// expected `(Y, C, T̂)` table.
pub fn forward_corrupt(truth: &JointTable, mm: &MeasurementModel) -> Result<JointTable> {
    check_levels(truth, mm)?;
    let mut out = JointTable::zeros(truth.levels());
    for c in 0..truth.levels() {
        for y in 0..2 {
            let (e, d) = (mm.epsilon(c, y), mm.delta(c, y));
            let (t0, t1) = (truth.get(y, c, 0), truth.get(y, c, 1));
            out.set(y, c, 0, (1.0 - d) * t0 + e * t1);
            out.set(y, c, 1, d * t0 + (1.0 - e) * t1);
        }
    }
    Ok(out)
}

fn check_levels(joint: &JointTable, mm: &MeasurementModel) -> Result<()> {
    if joint.levels() > mm.levels() {
        return Err(Error::MissingCovariateLevel(mm.levels()));
    }
    Ok(())
}

/// Invert the measurement model stratum by stratum, recovering the
/// `(Y, C, T)` table. Negative recovered masses are clipped to 0 and each
/// `(T, C)` slice rescaled to its unclipped total.
pub fn recover_joint(observed: &JointTable, mm: &MeasurementModel) -> Result<JointTable> {
    observed.validate()?;
    check_levels(observed, mm)?;
    let p = observed.normalized()?;
    let mut raw = JointTable::zeros(p.levels());
    for c in 0..p.levels() {
        for y in 0..2 {
            let (e, d) = (mm.epsilon(c, y), mm.delta(c, y));
            let det = 1.0 - e - d;
            if det <= SINGULAR_TOLERANCE {
                return Err(Error::SingularMeasurement {
                    covariate: c,
                    outcome: y as u8,
                    determinant: det,
                });
            }
            let (h0, h1) = (p.get(y, c, 0), p.get(y, c, 1));
            raw.set(y, c, 0, ((1.0 - e) * h0 - e * h1) / det);
            raw.set(y, c, 1, (-d * h0 + (1.0 - d) * h1) / det);
        }
    }
    let mut out = JointTable::zeros(p.levels());
    for c in 0..p.levels() {
        let stratum_mass: f64 = p.cells[c].iter().flatten().sum();
        if stratum_mass == 0.0 {
            continue;
        }
        for t in 0..2 {
            let unclipped = raw.get(0, c, t) + raw.get(1, c, t);
            let clipped = [raw.get(0, c, t).max(0.0), raw.get(1, c, t).max(0.0)];
            let kept = clipped[0] + clipped[1];
            if unclipped <= 0.0 || kept <= 0.0 {
                return Err(Error::ZeroRecoveredMass {
                    covariate: c,
                    treated: t as u8,
                });
            }
            for y in 0..2 {
                out.set(y, c, t, clipped[y] * unclipped / kept);
            }
        }
    }
    Ok(out)
}

/// Naive difference in means between the two treatment arms.
pub fn psi_naive(docs: &[Document], field: TreatmentField) -> Result<AteEstimate> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for d in docs {
        let t = usize::from(d.require_treatment(field)?);
        counts[t] += 1;
        sums[t] += f64::from(u8::from(d.require_outcome()?));
    }
    for (t, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyArm { treated: t == 1 });
        }
    }
    let value = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
    Ok(AteEstimate::new(Estimand::Naive, value, docs.len()))
}

/// Backdoor adjustment for `C`, weighting strata by their empirical share.
pub fn psi_naive_c(docs: &[Document], field: TreatmentField) -> Result<AteEstimate> {
    let table = JointTable::from_corpus(docs, field)?;
    Ok(AteEstimate::new(Estimand::NaiveC, table.backdoor_ate()?, docs.len()))
}

/// Matrix adjustment of an observed `(Y, C, T̂)` table.
pub fn psi_matrix(observed: &JointTable, mm: &MeasurementModel) -> Result<AteEstimate> {
    let recovered = recover_joint(observed, mm)?;
    Ok(AteEstimate::new(
        Estimand::Matrix,
        recovered.backdoor_ate()?,
        observed.total().round() as usize,
    ))
}

/// Mean over replicates with standard error `sd / sqrt(k)`.
pub fn aggregate_replicates(estimates: &[AteEstimate]) -> Result<AteEstimate> {
    let first = estimates.first().ok_or(Error::Empty("estimates"))?;
    if let Some(other) = estimates.iter().find(|e| e.estimand != first.estimand) {
        return Err(Error::MixedEstimands(first.estimand, other.estimand));
    }
    let k = estimates.len() as f64;
    let (mean, sd) = mean_sd(&estimates.iter().map(|e| e.value).collect::<Vec<_>>());
    Ok(AteEstimate {
        estimand: first.estimand,
        value: mean,
        standard_error: sd.map(|s| s / k.sqrt()),
        n: estimates.iter().map(|e| e.n).sum(),
    })
}

/// Mean and sample standard deviation (absent for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some(var.sqrt()))
}

#[derive(Serialize)]
struct EstimateRow {
    estimand: Estimand,
    value: f64,
    se: Option<f64>,
    n: usize,
}

/// Write `estimand,value,se,n` rows.
pub fn write_estimates(writer: impl Write, estimates: &[AteEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in estimates {
        w.serialize(EstimateRow {
            estimand: e.estimand,
            value: e.value,
            se: e.standard_error,
            n: e.n,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(rows: &[(usize, bool, bool)]) -> Vec<Document> {
        rows.iter()
            .enumerate()
            .map(|(i, &(c, t, y))| {
                let mut d = Document::new(format!("d{i}"), "", c);
                d.proxy = Some(t);
                d.outcome = Some(y);
                d
            })
            .collect()
    }

    fn naive(ys: &[u8], ts: &[u8]) -> f64 {
        let docs = corpus(
            &ys.iter()
                .zip(ts)
                .map(|(&y, &t)| (0, t == 1, y == 1))
                .collect::<Vec<_>>(),
        );
        psi_naive(&docs, TreatmentField::Proxy).unwrap().value
    }

    #[test]
    fn naive_examples() {
        assert_eq!(naive(&[1, 1, 0, 0], &[1, 1, 0, 0]), 1.0);
        assert_eq!(naive(&[1, 0, 1, 0], &[1, 1, 0, 0]), 0.0);
        assert!((naive(&[1, 1, 0, 1, 0, 0], &[1, 1, 1, 0, 0, 0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn naive_requires_both_arms() {
        let docs = corpus(&[(0, true, true)]);
        assert!(matches!(
            psi_naive(&docs, TreatmentField::Proxy),
            Err(Error::EmptyArm { treated: false })
        ));
    }

    /// Counts per `(c, t)`: `(n, successes)`.
    fn stratified(cells: &[(usize, bool, usize, usize)]) -> Vec<Document> {
        let mut rows = Vec::new();
        for &(c, t, n, k) in cells {
            for i in 0..n {
                rows.push((c, t, i < k));
            }
        }
        corpus(&rows)
    }

    #[test]
    fn naive_c_weights_strata() {
        // Per-stratum differences 0.2 and 0.4, equal stratum sizes.
        let docs = stratified(&[(0, true, 5, 3), (0, false, 5, 2), (1, true, 5, 4), (1, false, 5, 2)]);
        let est = psi_naive_c(&docs, TreatmentField::Proxy).unwrap();
        assert!((est.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn naive_c_undoes_simpson_confounding() {
        // Stratum 0: 5 treated and 45 controls, no successes: difference 0.
        // Stratum 1: 45 treated (27 successes), 5 controls (2): difference 0.2.
        let docs = stratified(&[(0, true, 5, 0), (0, false, 45, 0), (1, true, 45, 27), (1, false, 5, 2)]);
        let stratified_ate = psi_naive_c(&docs, TreatmentField::Proxy).unwrap().value;
        assert!((stratified_ate - 0.1).abs() < 1e-12);
        // Pooled: 27/50 − 2/50.
        let pooled = psi_naive(&docs, TreatmentField::Proxy).unwrap().value;
        assert!((pooled - 0.5).abs() < 1e-12);
    }

    #[test]
    fn naive_c_names_empty_cells() {
        let docs = stratified(&[(0, true, 3, 1), (0, false, 3, 2), (1, true, 2, 1)]);
        assert!(matches!(
            psi_naive_c(&docs, TreatmentField::Proxy),
            Err(Error::EmptyCell {
                covariate: 1,
                treated: 0
            })
        ));
    }

    fn hand_joint() -> JointTable {
        let mut j = JointTable::zeros(2);
        let masses = [
            (0, 0, 0, 0.12),
            (1, 0, 0, 0.08),
            (0, 0, 1, 0.06),
            (1, 0, 1, 0.14),
            (0, 1, 0, 0.20),
            (1, 1, 0, 0.05),
            (0, 1, 1, 0.10),
            (1, 1, 1, 0.25),
        ];
        for (y, c, t, p) in masses {
            j.set(y, c, t, p);
        }
        j
    }

    /// ATE of a `(Y, C, T)` table computed directly from its cells.
    fn direct_ate(j: &JointTable) -> f64 {
        let total = j.total();
        (0..j.levels())
            .map(|c| {
                let rate = |t| j.get(1, c, t) / (j.get(0, c, t) + j.get(1, c, t));
                let share = (0..2).map(|y| j.get(y, c, 0) + j.get(y, c, 1)).sum::<f64>() / total;
                (rate(1) - rate(0)) * share
            })
            .sum()
    }

    #[test]
    fn identity_measurement_equals_naive_c() {
        let j = hand_joint();
        let mm = MeasurementModel::uniform(2, 0.0, 0.0).unwrap();
        let est = psi_matrix(&j, &mm).unwrap();
        assert!((est.value - j.backdoor_ate().unwrap()).abs() < 1e-15);
    }

    #[test]
    fn corruption_then_inversion_recovers_the_ate() {
        let j = hand_joint();
        let mm = MeasurementModel::uniform(2, 0.1, 0.2).unwrap();
        let observed = forward_corrupt(&j, &mm).unwrap();
        let est = psi_matrix(&observed, &mm).unwrap();
        assert!((est.value - direct_ate(&j)).abs() < 1e-10);
        // Stratum 0: 0.14/0.20 − 0.08/0.20 = 0.3, stratum 1: 0.25/0.35 − 0.05/0.25.
        let hand = 0.3 * 0.4 + (0.25 / 0.35 - 0.2) * 0.6;
        assert!((est.value - hand).abs() < 1e-10);
    }

    #[test]
    fn singular_measurement_is_rejected() {
        let mm = MeasurementModel::uniform(2, 0.5, 0.5).unwrap();
        assert!(matches!(
            psi_matrix(&hand_joint(), &mm),
            Err(Error::SingularMeasurement {
                covariate: 0,
                outcome: 0,
                ..
            })
        ));
    }

    #[test]
    fn negative_recovery_is_clipped() {
        // Observed proxy mass inconsistent with the assumed error rates.
        let mut j = JointTable::zeros(1);
        j.set(0, 0, 0, 0.45);
        j.set(0, 0, 1, 0.01);
        j.set(1, 0, 0, 0.20);
        j.set(1, 0, 1, 0.34);
        let mm = MeasurementModel::uniform(1, 0.0, 0.1).unwrap();
        let recovered = recover_joint(&j, &mm).unwrap();
        assert_eq!(recovered.get(0, 0, 1), 0.0);
        assert!((0..2).all(|y| (0..2).all(|t| recovered.get(y, 0, t) >= 0.0)));
        assert!(psi_matrix(&j, &mm).unwrap().value.is_finite());
    }

    #[test]
    fn measurement_model_from_corpus() {
        let mut docs = Vec::new();
        for (i, (t, t_hat, y)) in [
            (1, 0, 1),
            (1, 1, 1),
            (1, 1, 1),
            (1, 1, 1),
            (0, 1, 1),
            (0, 0, 1),
            (0, 0, 0),
        ]
        .into_iter()
        .enumerate()
        {
            let mut d = Document::new(format!("d{i}"), "", 0);
            d.treatment_true = Some(t == 1);
            d.proxy = Some(t_hat == 1);
            d.outcome = Some(y == 1);
            docs.push(d);
        }
        let mm = MeasurementModel::from_corpus(&docs, TreatmentField::Proxy).unwrap();
        assert_eq!(mm.epsilon(0, 1), 0.25);
        assert_eq!(mm.delta(0, 1), 0.5);
        assert_eq!(mm.delta(0, 0), 0.0);
        assert_eq!(mm.epsilon(0, 0), 0.0);
    }

    #[test]
    fn csv_round_trips() {
        let j = hand_joint();
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("y,c,t,count\n"));
        assert_eq!(JointTable::read_csv(buf.as_slice()).unwrap(), j);

        let mm = MeasurementModel::new(vec![[0.1, 0.05]], vec![[0.2, 0.0]]).unwrap();
        let mut buf = Vec::new();
        mm.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("c,y,epsilon,delta\n"));
        assert_eq!(MeasurementModel::read_csv(buf.as_slice()).unwrap(), mm);
        assert!(MeasurementModel::read_csv("c,y,epsilon,delta\n0,0,0.1,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregation() {
        let one = AteEstimate::new(Estimand::Naive, 0.4, 10);
        let agg = aggregate_replicates(&[one]).unwrap();
        assert_eq!((agg.value, agg.standard_error), (0.4, None));

        let two = [
            AteEstimate::new(Estimand::Naive, 1.0, 5),
            AteEstimate::new(Estimand::Naive, 3.0, 5),
        ];
        let agg = aggregate_replicates(&two).unwrap();
        assert_eq!(agg.value, 2.0);
        assert!((agg.standard_error.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(agg.n, 10);

        let same = [AteEstimate::new(Estimand::Naive, 0.7, 1); 4];
        assert_eq!(aggregate_replicates(&same).unwrap().standard_error, Some(0.0));

        let mixed = [
            AteEstimate::new(Estimand::Naive, 1.0, 1),
            AteEstimate::new(Estimand::Matrix, 1.0, 1),
        ];
        assert!(matches!(aggregate_replicates(&mixed), Err(Error::MixedEstimands(..))));
    }

    #[test]
    fn estimate_rows() {
        let mut buf = Vec::new();
        let est = AteEstimate {
            estimand: Estimand::NaiveC,
            value: 0.25,
            standard_error: Some(0.01),
            n: 40,
        };
        write_estimates(&mut buf, &[est, AteEstimate::new(Estimand::Oracle, 0.3, 40)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "estimand,value,se,n\nnaive_c,0.25,0.01,40\noracle,0.3,,40\n"
        );
    }

    #[test]
    fn independent_proxy_concentrates_at_zero() {
        use rand::Rng;
        let mut rng = crate::rng::stream(21, &[]);
        let estimates: Vec<AteEstimate> = (0..100)
            .map(|_| {
                let rows: Vec<_> = (0..200)
                    .map(|_| (0, rng.random::<bool>(), rng.random::<f64>() < 0.3))
                    .collect();
                psi_naive(&corpus(&rows), TreatmentField::Proxy).unwrap()
            })
            .collect();
        let agg = aggregate_replicates(&estimates).unwrap();
        assert!(agg.value.abs() < 3.0 * agg.standard_error.unwrap());
    }

    fn grid() -> Vec<(f64, f64)> {
        let levels = [0.0, 0.05, 0.1, 0.2];
        levels
            .iter()
            .flat_map(|&e| levels.iter().map(move |&d| (e, d)))
            .filter(|(e, d)| e + d < 1.0)
            .collect()
    }

    proptest! {
        #[test]
        fn matrix_inverts_forward_corruption(
            masses in prop::collection::vec(0.01f64..1.0, 12),
        ) {
            let mut j = JointTable::zeros(3);
            for (k, m) in masses.iter().enumerate() {
                j.set(k % 2, k / 4, (k / 2) % 2, *m);
            }
            let j = j.normalized().unwrap();
            for (e, d) in grid() {
                let mm = MeasurementModel::uniform(3, e, d).unwrap();
                let est = psi_matrix(&forward_corrupt(&j, &mm).unwrap(), &mm).unwrap();
                prop_assert!((est.value - direct_ate(&j)).abs() < 1e-9);
            }
        }

        #[test]
        fn naive_c_with_constant_covariate_equals_naive(
            rows in prop::collection::vec((any::<bool>(), any::<bool>()), 2..60)
        ) {
            let mut rows: Vec<(usize, bool, bool)> = rows.into_iter().map(|(t, y)| (0, t, y)).collect();
            rows[0].1 = true;
            rows[1].1 = false;
            let docs = corpus(&rows);
            let a = psi_naive(&docs, TreatmentField::Proxy).unwrap().value;
            let b = psi_naive_c(&docs, TreatmentField::Proxy).unwrap().value;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn estimators_ignore_document_order(
            rows in prop::collection::vec((0usize..2, any::<bool>(), any::<bool>()), 8..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut rows = rows;
            rows.splice(0..4, [(0, true, true), (0, false, false), (1, true, false), (1, false, true)]);
            let docs = corpus(&rows);
            let mut shuffled = docs.clone();
            shuffled.shuffle(&mut crate::rng::stream(seed, &[]));
            let f = TreatmentField::Proxy;
            prop_assert!((psi_naive(&docs, f).unwrap().value - psi_naive(&shuffled, f).unwrap().value).abs() < 1e-12);
            prop_assert!((psi_naive_c(&docs, f).unwrap().value - psi_naive_c(&shuffled, f).unwrap().value).abs() < 1e-12);
        }
    }
}
