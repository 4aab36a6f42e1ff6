//! Replicated experiments over generated review corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use textcause::adjust::cross_validated_ate;
use textcause::corpus::{lexicon_proxy, read_corpus};
use textcause::estimators::{mean_sd, psi_matrix, psi_naive, psi_naive_c};
use textcause::proxy::{noised_proxy, proxy_accuracy, ProxyAccuracy, TBoost};
use textcause::rng::{self, purpose};
use textcause::simulate::{estimate_propensity, generate_reviews, oracle_ate, simulate_outcomes};
use textcause::{
    Document, JointTable, Lexicon, MeasurementModel, PropensityTable, ReviewRecipe, SimulationParams, TheoryReport,
    TrainConfig, TreatmentField, WorldSpec,
};

use crate::config::ExperimentConfig;

/// Estimator names accepted in configs.
pub const ESTIMATORS: &[&str] = &[
    "oracle",
    "oracle_treatment",
    "semi_oracle",
    "unadjusted",
    "proxy_lex",
    "proxy_noised",
    "tboost",
    "wadjust",
    "textcause",
];

const BENCHMARK_DEFAULT: &[&str] = &[
    "oracle",
    "semi_oracle",
    "unadjusted",
    "proxy_lex",
    "proxy_noised",
    "tboost",
    "wadjust",
    "textcause",
];
const CROSSING_DEFAULT: &[&str] = &["oracle", "unadjusted", "proxy_lex", "tboost", "textcause"];
// The matrix semi-oracle is undefined at chance accuracy and `proxy_noised`
// ignores the swept proxy, so neither is run by default.
const SENSITIVITY_DEFAULT: &[&str] = &[
    "oracle",
    "oracle_treatment",
    "unadjusted",
    "tboost",
    "wadjust",
    "textcause",
];

const KEY_REPLICATE: u64 = 0x7265_706c;

/// One output row. Effect values are raw probability differences; the CSV
/// writer scales them to percentage points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub estimator: String,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n: usize,
    pub delta_from_oracle: Option<f64>,
    pub params: SimulationParams,
    pub docs: usize,
    pub replicates: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub status: String,
}

/// A corpus with texts, true treatments and proxies, shared by every cell of
/// one replicate.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub docs: Vec<Document>,
    pub dictionary: Lexicon,
    /// Proxy from the lexicon.
    pub lexicon: Vec<bool>,
    /// Proxy with fixed agreement, for the noised baseline.
    pub noised: Vec<bool>,
    /// Accuracy of `proxy` and `proxy_boosted` against the truth.
    pub proxy_quality: Option<ProxyAccuracy>,
    pub boosted_quality: Option<ProxyAccuracy>,
}

pub(crate) fn replicate_seed(master: u64, rep: usize) -> u64 {
    rng::derive_seed(master, &[KEY_REPLICATE, rep as u64])
}

pub(crate) fn cell_seed(master: u64, cell: usize, rep: usize) -> u64 {
    rng::derive_seed(master, &[cell as u64, rep as u64])
}

fn truths(docs: &[Document]) -> Result<Vec<bool>> {
    Ok(docs
        .iter()
        .map(|d| d.require_treatment(TreatmentField::True))
        .collect::<textcause::Result<Vec<_>>>()?)
}

/// Texts and treatments for replicate `rep`, from the recipe or a corpus
/// file.
fn base_corpus(
    config: &ExperimentConfig,
    recipe: &ReviewRecipe,
    rep: usize,
) -> Result<(Vec<Document>, Option<Lexicon>)> {
    if let Some(path) = &config.corpus {
        let docs = read_corpus(path).with_context(|| format!("reading {}", path.display()))?;
        truths(&docs).context("experiments need `t_true` on every document")?;
        return Ok((docs, None));
    }
    if config.world.is_some() {
        bail!("replicated experiments run on review corpora; use `corpus` or the recipe");
    }
    let (docs, lexicon) = generate_reviews(recipe, replicate_seed(config.seed, rep))?;
    Ok((docs, Some(lexicon)))
}

/// Build the shared corpus of one replicate. `proxy_accuracy` replaces the
/// lexicon with a noised proxy of that agreement as the working `T̂`.
pub fn prepare(
    config: &ExperimentConfig,
    recipe: &ReviewRecipe,
    rep: usize,
    proxy_accuracy_override: Option<f64>,
    boost: bool,
) -> Result<Prepared> {
    let (mut docs, generated) = base_corpus(config, recipe, rep)?;
    let lexicon = match (&config.proxy.lexicon, generated) {
        (Some(path), _) => Lexicon::read(path)?,
        (None, Some(l)) => l,
        (None, None) => bail!("a corpus file needs `proxy.lexicon`"),
    };
    let truth = truths(&docs)?;
    let lex: Vec<bool> = docs.iter().map(|d| lexicon_proxy(d, &lexicon)).collect();
    let seed = replicate_seed(config.seed, rep);
    let noised = noised_proxy(&truth, config.proxy.accuracy, rng::derive_seed(seed, &[purpose::PROXY]))?;
    let working = match proxy_accuracy_override {
        Some(acc) => noised_proxy(&truth, acc, rng::derive_seed(seed, &[purpose::PROXY, 1]))?,
        None if config.proxy.kind == "noised" => noised.clone(),
        None => lex.clone(),
    };
    for (d, &t) in docs.iter_mut().zip(&working) {
        d.proxy = Some(t);
    }
    let proxy_quality = Some(proxy_accuracy(&working, &truth)?);
    let mut boosted_quality = None;
    if boost {
        let model = TBoost::fit(&docs, &config.boost)?;
        model.boost(&mut docs, &config.boost)?;
        let boosted: Vec<bool> = docs.iter().map(|d| d.proxy_boosted == Some(true)).collect();
        boosted_quality = Some(proxy_accuracy(&boosted, &truth)?);
    }
    Ok(Prepared {
        docs,
        dictionary: lexicon,
        lexicon: lex,
        noised,
        proxy_quality,
        boosted_quality,
    })
}

fn with_proxy(docs: &[Document], proxy: &[bool]) -> Vec<Document> {
    docs.iter()
        .zip(proxy)
        .map(|(d, &t)| {
            let mut d = d.clone();
            d.proxy = Some(t);
            d
        })
        .collect()
}

/// Per-estimator outcome of one replicate; an estimator that fails keeps its
/// error message without affecting the others.
pub type Evaluations = BTreeMap<String, std::result::Result<f64, String>>;

/// Simulate outcomes for one cell and evaluate the requested estimators,
/// failing on the first estimator error.
pub fn run_replicate(
    prepared: &Prepared,
    params: &SimulationParams,
    fixed_propensity: Option<f64>,
    estimators: &[String],
    train: &TrainConfig,
) -> Result<BTreeMap<String, f64>> {
    evaluate_replicate(prepared, params, fixed_propensity, estimators, train)?
        .into_iter()
        .map(|(k, v)| v.map(|v| (k, v)).map_err(|e| anyhow::anyhow!(e)))
        .collect()
}

/// Like [`run_replicate`], but with estimator errors reported per name. The
/// outer error covers only outcome simulation.
pub fn evaluate_replicate(
    prepared: &Prepared,
    params: &SimulationParams,
    fixed_propensity: Option<f64>,
    estimators: &[String],
    train: &TrainConfig,
) -> Result<Evaluations> {
    let mut docs = prepared.docs.clone();
    let propensity = match fixed_propensity {
        Some(p) => PropensityTable::constant(textcause::corpus::covariate_arity(&docs), p)?,
        None => estimate_propensity(&docs, TreatmentField::True)?,
    };
    simulate_outcomes(&mut docs, params, &propensity)?;
    let mut out = BTreeMap::new();
    for name in estimators {
        let value = || -> Result<f64> {
            Ok(match name.as_str() {
                "oracle" => oracle_ate(&docs, params, &propensity)?,
                "oracle_treatment" => psi_naive_c(&docs, TreatmentField::True)?.value,
                "semi_oracle" => {
                    let joint = JointTable::from_corpus(&docs, TreatmentField::Proxy)?;
                    let mm = MeasurementModel::from_corpus(&docs, TreatmentField::Proxy)?;
                    psi_matrix(&joint, &mm)?.value
                }
                "unadjusted" => psi_naive(&docs, TreatmentField::Proxy)?.value,
                "proxy_lex" => psi_naive_c(&with_proxy(&docs, &prepared.lexicon), TreatmentField::Proxy)?.value,
                "proxy_noised" => psi_naive_c(&with_proxy(&docs, &prepared.noised), TreatmentField::Proxy)?.value,
                "tboost" => psi_naive_c(&docs, TreatmentField::Boosted)?.value,
                "wadjust" | "textcause" => {
                    let field = if name == "wadjust" {
                        TreatmentField::Proxy
                    } else {
                        TreatmentField::Boosted
                    };
                    let config = TrainConfig {
                        seed: rng::derive_seed(params.seed, &[purpose::INIT]),
                        treatment: field,
                        ..train.clone()
                    };
                    cross_validated_ate(&docs, &config)?.estimate
                }
                other => bail!("unknown estimator `{other}`"),
            })
        };
        out.insert(name.clone(), value().map_err(|e| format!("{e:#}")));
    }
    Ok(out)
}

fn estimator_list(config: &ExperimentConfig, default: &[&str]) -> Vec<String> {
    if config.estimators.is_empty() {
        default.iter().map(|s| s.to_string()).collect()
    } else {
        config.estimators.clone()
    }
}

fn needs_boost(estimators: &[String]) -> bool {
    estimators.iter().any(|e| e == "tboost" || e == "textcause")
}

/// One scenario of a replicated experiment.
struct Cell {
    scenario: String,
    params: SimulationParams,
    fixed_propensity: Option<f64>,
    accuracy: Option<f64>,
    /// Which prepared corpus family the cell uses.
    family: usize,
}

struct Plan<'a> {
    config: &'a ExperimentConfig,
    recipe: ReviewRecipe,
    cells: Vec<Cell>,
    /// Working-proxy accuracy per corpus family (`None` = configured proxy).
    families: Vec<Option<f64>>,
    estimators: Vec<String>,
    train: TrainConfig,
}

fn execute(plan: &Plan) -> Result<Vec<ResultRow>> {
    let config = plan.config;
    let reps = config.replicates;
    let boost = needs_boost(&plan.estimators);
    let prepared: Vec<Result<Prepared, String>> = (0..plan.families.len() * reps)
        .into_par_iter()
        .map(|k| {
            let (family, rep) = (k / reps, k % reps);
            prepare(config, &plan.recipe, rep, plan.families[family], boost).map_err(|e| format!("{e:#}"))
        })
        .collect();
    let results: Vec<Result<Evaluations, String>> = (0..plan.cells.len() * reps)
        .into_par_iter()
        .map(|k| {
            let (c, rep) = (k / reps, k % reps);
            let cell = &plan.cells[c];
            let prep = prepared[cell.family * reps + rep].as_ref().map_err(Clone::clone)?;
            let params = SimulationParams {
                seed: cell_seed(config.seed, c, rep),
                ..cell.params
            };
            evaluate_replicate(prep, &params, cell.fixed_propensity, &plan.estimators, &plan.train)
                .map_err(|e| format!("{e:#}"))
        })
        .collect();

    let mut rows = Vec::new();
    for (c, cell) in plan.cells.iter().enumerate() {
        let reps_out = &results[c * reps..(c + 1) * reps];
        let docs = prepared[cell.family * reps].as_ref().map_or(0, |p| p.docs.len());
        // Per estimator: every replicate's value, or the first error.
        let collect = |name: &str| -> std::result::Result<Vec<f64>, String> {
            reps_out
                .iter()
                .map(|r| match r {
                    Ok(m) => m[name].clone(),
                    Err(e) => Err(e.clone()),
                })
                .collect()
        };
        let oracle_mean = plan
            .estimators
            .iter()
            .any(|e| e == "oracle")
            .then(|| collect("oracle").ok().map(|v| mean_sd(&v).0));
        for name in &plan.estimators {
            let mut row = ResultRow {
                scenario: cell.scenario.clone(),
                estimator: name.clone(),
                mean: None,
                se: None,
                n: 0,
                delta_from_oracle: None,
                params: SimulationParams {
                    seed: config.seed,
                    ..cell.params
                },
                docs,
                replicates: reps,
                seed: config.seed,
                accuracy: cell.accuracy,
                status: "ok".into(),
            };
            match collect(name) {
                Err(e) => row.status = format!("error: {e}"),
                Ok(values) => {
                    let (mean, sd) = mean_sd(&values);
                    row.mean = Some(mean);
                    row.se = Some(sd.map_or(0.0, |s| s / (values.len() as f64).sqrt()));
                    row.n = values.len();
                    if let Some(Some(o)) = oracle_mean {
                        row.delta_from_oracle = Some((mean - o).abs());
                        if name != "oracle" && mean * o < 0.0 {
                            row.status = "sign_flip".into();
                        }
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean of per-cell `|delta|` for each estimator, appended as `mean` rows.
fn summary_rows(rows: &[ResultRow], estimators: &[String], template: &ResultRow) -> Vec<ResultRow> {
    estimators
        .iter()
        .map(|name| {
            let deltas: Vec<f64> = rows
                .iter()
                .filter(|r| &r.estimator == name)
                .filter_map(|r| r.delta_from_oracle)
                .collect();
            let cells = rows.iter().filter(|r| &r.estimator == name).count();
            let complete = deltas.len() == cells && !deltas.is_empty();
            ResultRow {
                scenario: "mean".into(),
                estimator: name.clone(),
                mean: None,
                se: None,
                n: deltas.len(),
                delta_from_oracle: complete.then(|| mean_sd(&deltas).0),
                params: template.params,
                docs: template.docs,
                replicates: template.replicates,
                seed: template.seed,
                accuracy: None,
                status: if complete { "ok".into() } else { "incomplete".into() },
            }
        })
        .collect()
}

/// The `{γ} × {β_t} × {β_c}` grid at fixed `β_o`.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let g = &config.grid;
    let mut cells = Vec::new();
    for &gamma in &g.gamma {
        for &beta_t in &g.beta_t {
            for &beta_c in &g.beta_c {
                cells.push(Cell {
                    scenario: format!("gamma={gamma},beta_t={beta_t},beta_c={beta_c}"),
                    params: SimulationParams {
                        beta_c,
                        beta_t,
                        beta_o: g.beta_o,
                        gamma,
                        ..config.simulation
                    },
                    fixed_propensity: None,
                    accuracy: None,
                    family: 0,
                });
            }
        }
    }
    if cells.is_empty() {
        bail!("the benchmark grid is empty");
    }
    let estimators = estimator_list(config, BENCHMARK_DEFAULT);
    let plan = Plan {
        config,
        recipe: config.effective_recipe(),
        cells,
        families: vec![None],
        estimators: estimators.clone(),
        train: config.train.clone(),
    };
    let mut rows = execute(&plan)?;
    let summary = summary_rows(&rows, &estimators, &rows[0].clone());
    rows.extend(summary);
    Ok(rows)
}

/// The sign-crossing scenario: a latent gift property raises the outcome and
/// trips the lexicon, while the true effect is negative.
pub fn run_crossing(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let x = &config.crossing;
    let mut recipe = x.recipe.clone();
    if let Some(n) = config.n {
        recipe.n_docs = n;
    }
    let plan = Plan {
        config,
        recipe,
        cells: vec![Cell {
            scenario: "crossing".into(),
            params: SimulationParams {
                beta_c: x.beta_c,
                beta_t: x.beta_t,
                beta_o: x.beta_o,
                gamma: x.gamma,
                beta_z: x.beta_z,
                seed: config.seed,
            },
            fixed_propensity: Some(x.pi),
            accuracy: None,
            family: 0,
        }],
        families: vec![None],
        estimators: estimator_list(config, CROSSING_DEFAULT),
        train: x.train.clone().unwrap_or_else(|| config.train.clone()),
    };
    execute(&plan)
}

/// Estimates as the working proxy's accuracy varies; rows ordered by
/// accuracy.
pub fn run_sensitivity(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut accuracies = config.sensitivity.accuracies.clone();
    if accuracies.is_empty() {
        bail!("sensitivity.accuracies is empty");
    }
    accuracies.sort_by(f64::total_cmp);
    accuracies.dedup();
    let cells = accuracies
        .iter()
        .enumerate()
        .map(|(i, &a)| Cell {
            scenario: format!("accuracy={a}"),
            params: config.simulation,
            fixed_propensity: None,
            accuracy: Some(a),
            family: i,
        })
        .collect();
    let plan = Plan {
        config,
        recipe: config.effective_recipe(),
        cells,
        families: accuracies.iter().map(|&a| Some(a)).collect(),
        estimators: estimator_list(config, SENSITIVITY_DEFAULT),
        train: config.train.clone(),
    };
    execute(&plan)
}

/// Verification of one world.
#[derive(Debug, Clone, Serialize)]
pub struct WorldVerification {
    /// File path, or `bundled:<name>` for the built-in suite.
    pub source: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<TheoryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Residuals above tolerance.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub worlds: Vec<WorldVerification>,
}

fn verification(source: String, outcome: textcause::Result<TheoryReport>) -> WorldVerification {
    match outcome {
        Ok(report) => {
            let failures: Vec<String> = report
                .failures()
                .into_iter()
                .map(|(name, r, tol)| format!("{name}: residual {r:e} exceeds {tol:e}"))
                .collect();
            WorldVerification {
                source,
                passed: failures.is_empty(),
                report: Some(report),
                error: None,
                failures,
            }
        }
        Err(e) => WorldVerification {
            source,
            passed: false,
            report: None,
            error: Some(e.to_string()),
            failures: Vec::new(),
        },
    }
}

pub fn verify_world(path: &Path) -> WorldVerification {
    let outcome = WorldSpec::read(path).and_then(|spec| TheoryReport::compute(&spec));
    verification(path.display().to_string(), outcome)
}

/// Verify the built-in suite.
pub fn verify_bundled() -> VerifyReport {
    let worlds: Vec<WorldVerification> = textcause::bundled_worlds()
        .par_iter()
        .map(|spec| verification(format!("bundled:{}", spec.name), TheoryReport::compute(spec)))
        .collect();
    VerifyReport {
        passed: worlds.iter().all(|w| w.passed),
        worlds,
    }
}

/// World files named directly, or every `*.json` inside named directories,
/// in sorted order.
pub fn collect_world_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn run_verify(paths: &[PathBuf]) -> Result<VerifyReport> {
    let files = collect_world_files(paths)?;
    if files.is_empty() {
        bail!("no world files to verify");
    }
    let worlds: Vec<WorldVerification> = files.par_iter().map(|p| verify_world(p)).collect();
    Ok(VerifyReport {
        passed: worlds.iter().all(|w| w.passed),
        worlds,
    })
}
