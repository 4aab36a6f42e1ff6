//! Subcommands. Each reads an [`ExperimentConfig`] and writes its results
//! into the output directory.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use textcause::adjust::{self, cross_validated_ate, CrossValidated, EmbeddingFile, RepresentationKind};
use textcause::corpus::{lexicon_proxy, read_corpus, write_corpus};
use textcause::estimators::{psi_matrix, psi_naive, psi_naive_c, write_estimates};
use textcause::proxy::{proxy_accuracy, ProxyAccuracy, TBoost};
use textcause::simulate::{estimate_propensity, sample_world, simulate_outcomes};
use textcause::{Document, JointTable, Lexicon, MeasurementModel, SimulationParams, TreatmentField, WorldSpec};

use crate::config::ExperimentConfig;
use crate::experiment::{self, ResultRow, VerifyReport};
use crate::report::write_results;

/// Output directory used when the config names none.
pub const DEFAULT_OUTPUT: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Boost,
    Adjust,
    Estimate,
    Benchmark,
    Crossing,
    Sensitivity,
    Verify,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    /// Some world failed verification; the report was still written.
    Verification(String),
    Estimation(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Verification(_) => 2,
            CliError::Estimation(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e:#}"),
            CliError::Verification(s) => write!(f, "verification failed:\n{s}"),
            CliError::Estimation(e) => write!(f, "estimation failed: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn est_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Estimation(e.into())
}

/// Files written and a human-readable summary.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

type CliResult<T> = Result<T, CliError>;

pub fn run(command: Command, config: &ExperimentConfig) -> CliResult<Outcome> {
    let out = config.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(est_err)?;
    let mut w = Writer {
        dir: out,
        files: Vec::new(),
    };
    let summary = match command {
        Command::Generate => generate(config, &mut w)?,
        Command::Boost => boost(config, &mut w)?,
        Command::Adjust => adjust_cmd(config, &mut w)?,
        Command::Estimate => estimate(config, &mut w)?,
        Command::Benchmark => results(experiment::run_benchmark(config), &mut w)?,
        Command::Crossing => results(experiment::run_crossing(config), &mut w)?,
        Command::Sensitivity => results(experiment::run_sensitivity(config), &mut w)?,
        Command::Verify => verify(config, &mut w)?,
    };
    Ok(Outcome {
        files: w.files,
        summary,
    })
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(est_err)?;
        std::fs::write(&path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(est_err)
    }

    fn corpus(&mut self, docs: &[Document]) -> CliResult<PathBuf> {
        let path = self.path("corpus.jsonl");
        write_corpus(&path, docs).map_err(est_err)?;
        Ok(path)
    }
}

fn input_corpus(config: &ExperimentConfig, command: &str) -> CliResult<Vec<Document>> {
    let path = config
        .corpus
        .as_ref()
        .ok_or_else(|| config_err(anyhow!("`{command}` needs `corpus`")))?;
    read_corpus(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)
}

fn generate(config: &ExperimentConfig, w: &mut Writer) -> CliResult<String> {
    if config.corpus.is_some() {
        return Err(config_err(anyhow!("`generate` builds corpora; unset `corpus`")));
    }
    if let Some(path) = &config.world {
        let spec = WorldSpec::read(path).map_err(config_err)?;
        let n = config.n.unwrap_or(config.recipe.n_docs);
        let docs = sample_world(&spec, n, experiment::replicate_seed(config.seed, 0)).map_err(est_err)?;
        let p = w.corpus(&docs)?;
        return Ok(format!(
            "sampled {} documents from {} into {}",
            docs.len(),
            spec.name,
            p.display()
        ));
    }
    let prepared = experiment::prepare(config, &config.effective_recipe(), 0, None, false).map_err(est_err)?;
    let mut docs = prepared.docs;
    let propensity = estimate_propensity(&docs, TreatmentField::True).map_err(est_err)?;
    let params = SimulationParams {
        seed: experiment::cell_seed(config.seed, 0, 0),
        ..config.simulation
    };
    simulate_outcomes(&mut docs, &params, &propensity).map_err(est_err)?;
    let p = w.corpus(&docs)?;
    let lex = w.path("lexicon.txt");
    prepared.dictionary.write(&lex).map_err(est_err)?;
    Ok(format!(
        "generated {} reviews into {} (lexicon {})",
        docs.len(),
        p.display(),
        lex.display()
    ))
}

#[derive(Serialize)]
struct BoostQuality {
    proxy: ProxyAccuracy,
    boosted: ProxyAccuracy,
}

fn boost(config: &ExperimentConfig, w: &mut Writer) -> CliResult<String> {
    let mut docs = input_corpus(config, "boost")?;
    if docs.iter().any(|d| d.proxy.is_none()) {
        let path = config
            .proxy
            .lexicon
            .as_ref()
            .ok_or_else(|| config_err(anyhow!("documents without `t_proxy` need `proxy.lexicon`")))?;
        let lexicon = Lexicon::read(path).map_err(config_err)?;
        for d in docs.iter_mut().filter(|d| d.proxy.is_none()) {
            d.proxy = Some(lexicon_proxy(d, &lexicon));
        }
    }
    let model = TBoost::fit(&docs, &config.boost).map_err(est_err)?;
    model.boost(&mut docs, &config.boost).map_err(est_err)?;
    w.corpus(&docs)?;
    w.json("boost_model.json", &model)?;
    let flipped = docs.iter().filter(|d| d.proxy != d.proxy_boosted).count();
    let mut summary = format!("boosted {} documents, {flipped} relabelled", docs.len());
    let truth: Option<Vec<bool>> = docs.iter().map(|d| d.treatment_true).collect();
    if let Some(truth) = truth {
        let get = |f: TreatmentField| -> Vec<bool> { docs.iter().map(|d| d.treatment(f) == Some(true)).collect() };
        let quality = BoostQuality {
            proxy: proxy_accuracy(&get(TreatmentField::Proxy), &truth).map_err(est_err)?,
            boosted: proxy_accuracy(&get(TreatmentField::Boosted), &truth).map_err(est_err)?,
        };
        summary += &format!(
            "; recall {:.4} -> {:.4}, precision {:.4} -> {:.4}",
            quality.proxy.recall, quality.boosted.recall, quality.proxy.precision, quality.boosted.precision
        );
        w.json("boost_quality.json", &quality)?;
    }
    Ok(summary)
}

#[derive(Serialize)]
struct AdjustReport<'a> {
    treatment: TreatmentField,
    representation: RepresentationKind,
    #[serde(flatten)]
    result: &'a CrossValidated,
}

fn adjust_cmd(config: &ExperimentConfig, w: &mut Writer) -> CliResult<String> {
    let mut docs = input_corpus(config, "adjust")?;
    let mut train = config.train.clone();
    if let Some(path) = &config.embeddings {
        let file = EmbeddingFile::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        file.attach(&mut docs)
            .with_context(|| format!("validating {}", path.display()))
            .map_err(config_err)?;
        train.representation = RepresentationKind::ExternalEmbedding;
        train.dim = file.dim;
    }
    let cv = cross_validated_ate(&docs, &train).map_err(est_err)?;
    let model = adjust::train(&docs, &train).map_err(est_err)?;
    w.json(
        "adjust.json",
        &AdjustReport {
            treatment: train.treatment,
            representation: train.representation,
            result: &cv,
        },
    )?;
    w.json("model.json", &model)?;
    Ok(format!(
        "psi-proxy {:.6} (se {:.6}) over {} folds",
        cv.estimate,
        cv.standard_error,
        cv.fold_estimates.len()
    ))
}

fn estimate(config: &ExperimentConfig, w: &mut Writer) -> CliResult<String> {
    let docs = input_corpus(config, "estimate")?;
    let field = config.estimate.field;
    let mut estimates = vec![
        psi_naive(&docs, field).map_err(est_err)?,
        psi_naive_c(&docs, field).map_err(est_err)?,
    ];
    let has_truth = docs.iter().all(|d| d.treatment_true.is_some());
    let measurement = match &config.estimate.measurement {
        Some(path) => Some(MeasurementModel::read(path).map_err(config_err)?),
        None if has_truth && field != TreatmentField::True => {
            let mm = MeasurementModel::from_corpus(&docs, field).map_err(est_err)?;
            let path = w.path("measurement.csv");
            let file = File::create(&path).map_err(est_err)?;
            mm.write_csv(BufWriter::new(file)).map_err(est_err)?;
            Some(mm)
        }
        None => None,
    };
    if let Some(mm) = &measurement {
        let joint = JointTable::from_corpus(&docs, field).map_err(est_err)?;
        estimates.push(psi_matrix(&joint, mm).map_err(est_err)?);
    }
    let path = w.path("estimates.csv");
    let file = File::create(&path).map_err(est_err)?;
    write_estimates(BufWriter::new(file), &estimates).map_err(est_err)?;
    let parts: Vec<String> = estimates
        .iter()
        .map(|e| format!("{} {:.6}", e.estimand, e.value))
        .collect();
    Ok(format!("{} on {field}: {}", parts.len(), parts.join(", ")))
}

/// Write `results.csv`; cells that errored are kept in the file and turn the
/// run into an estimation failure.
fn results(rows: anyhow::Result<Vec<ResultRow>>, w: &mut Writer) -> CliResult<String> {
    let rows = rows.map_err(est_err)?;
    let path = w.path("results.csv");
    let file = File::create(&path).map_err(est_err)?;
    write_results(BufWriter::new(file), &rows).map_err(est_err)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| r.status.starts_with("error"))
        .map(|r| format!("{} / {}: {}", r.scenario, r.estimator, r.status))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Estimation(anyhow!(
            "{} failed rows recorded in {}:\n{}",
            failed.len(),
            path.display(),
            failed.join("\n")
        )));
    }
    let flips = rows.iter().filter(|r| r.status == "sign_flip").count();
    Ok(format!(
        "{} rows written to {} ({flips} sign flips)",
        rows.len(),
        path.display()
    ))
}

fn verify(config: &ExperimentConfig, w: &mut Writer) -> CliResult<String> {
    let report: VerifyReport = if config.worlds.is_empty() {
        experiment::verify_bundled()
    } else {
        experiment::run_verify(&config.worlds).map_err(config_err)?
    };
    w.json("verify.json", &report)?;
    let lines: Vec<String> = report
        .worlds
        .iter()
        .map(|v| {
            if v.passed {
                format!("PASS {}", v.source)
            } else if let Some(e) = &v.error {
                format!("FAIL {}: {e}", v.source)
            } else {
                format!("FAIL {}: {}", v.source, v.failures.join("; "))
            }
        })
        .collect();
    let summary = lines.join("\n");
    if report.passed {
        Ok(summary)
    } else {
        Err(CliError::Verification(summary))
    }
}

/// Load the config for a subcommand; every failure here is a config error.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    ExperimentConfig::load(path, overrides).map_err(config_err)
}
