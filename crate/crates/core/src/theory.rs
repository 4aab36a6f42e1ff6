//! Exact population identities on enumerable worlds.
//!
//! Every quantity here is computed from the full joint over
//! `(T, Z, W, T̂, Y)`; no sampling is involved except in the optional
//! pipeline arm of [`attenuation_sweep`].

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjust::{cross_validated_ate, TrainConfig};
use crate::corpus::TreatmentField;
use crate::error::{Error, Result};
use crate::estimators::psi_naive_c;
use crate::rng::{self, purpose};
use crate::simulate::{
    enumerate_world, sample_world, two_token_world, CovariateRule, EnumeratedWorld, Feature, ProxyRule, TextOption,
    WorldSpec,
};

/// Tolerance for the identification, attenuation-bias and naive-bias
/// identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Tolerance for the total-probability identity.
pub const LEMMA_TOLERANCE: f64 = 1e-12;

/// Per-text quantities; stratum-level entries are evaluated at `Z̃ = f(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerTextTerms {
    pub ztilde: bool,
    pub p_w: f64,
    /// `P(T=0 | T̂=1, Z̃)`.
    pub epsilon0: f64,
    /// `P(T=1 | T̂=0, Z̃)`.
    pub epsilon1: f64,
    /// `P(T=0 | T̂=0, Z̃)`.
    pub p0: f64,
    /// `P(T=1 | T̂=1, Z̃)`.
    pub p1: f64,
    /// `E[Y | T=0, Z̃]`.
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
}

/// All exact quantities and identity residuals for one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub world: String,
    pub psi_wri: f64,
    pub psi_rea: f64,
    pub psi_proxy_exact: f64,
    pub psi_naive_exact: f64,
    pub bias_term_thm2: f64,
    pub per_w_terms: BTreeMap<String, PerTextTerms>,
    /// Identity name → absolute residual. `attenuation` appears only when
    /// the effect has one sign across strata and the proxy beats chance in
    /// every stratum.
    pub residuals: BTreeMap<String, f64>,
}

impl TheoryReport {
    pub fn compute(spec: &WorldSpec) -> Result<Self> {
        let ex = Exact::new(spec)?;
        let psi_wri = psi_wri_with(spec);
        let psi_rea = ex.psi_rea()?;
        let psi_proxy_exact = ex.psi_proxy()?;
        let psi_naive_exact = ex.psi_naive()?;
        let bias_term_thm2 = ex.theorem2_bias()?;
        let mut residuals = BTreeMap::new();
        residuals.insert("theorem1".to_string(), (psi_rea - psi_wri).abs());
        residuals.insert(
            "theorem2".to_string(),
            (psi_proxy_exact - (psi_rea - bias_term_thm2)).abs(),
        );
        residuals.insert("theorem3".to_string(), ex.theorem3_residual()?);
        residuals.insert("lemma1".to_string(), ex.lemma1_residual());
        if let Some(r) = ex.attenuation_residual(psi_rea, psi_proxy_exact)? {
            residuals.insert("attenuation".to_string(), r);
        }

        let mut per_w_terms = BTreeMap::new();
        for w in 0..ex.world.texts.len() {
            let key = text_key(&ex.world.texts[w]);
            per_w_terms.insert(key, ex.per_text(w)?);
        }
        Ok(Self {
            world: spec.name.clone(),
            psi_wri,
            psi_rea,
            psi_proxy_exact,
            psi_naive_exact,
            bias_term_thm2,
            per_w_terms,
            residuals,
        })
    }

    pub fn tolerance(name: &str) -> f64 {
        match name {
            "lemma1" | "attenuation" => LEMMA_TOLERANCE,
            _ => IDENTITY_TOLERANCE,
        }
    }

    /// Residuals above tolerance, as `(name, residual, tolerance)`.
    pub fn failures(&self) -> Vec<(String, f64, f64)> {
        self.residuals
            .iter()
            .filter_map(|(name, &r)| {
                let tol = Self::tolerance(name);
                (!(r < tol)).then(|| (name.clone(), r, tol))
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

fn text_key(tokens: &[String]) -> String {
    if tokens.is_empty() {
        "<empty>".to_string()
    } else {
        tokens.join(" ")
    }
}

/// Marginal tables of an enumerated world, normalised to total mass 1.
struct Exact {
    world: EnumeratedWorld,
    /// `P(W=w, T=t, T̂=h)` indexed `[w][t][h]`.
    wth: Vec<[[f64; 2]; 2]>,
    /// `P(W=w, T=t, T̂=h, Y=1)` indexed `[w][t][h]`.
    wth_y: Vec<[[f64; 2]; 2]>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl Exact {
    fn new(spec: &WorldSpec) -> Result<Self> {
        let world = enumerate_world(spec)?;
        let total = world.total_mass();
        let n = world.texts.len();
        let mut wth = vec![[[0.0; 2]; 2]; n];
        let mut wth_y = vec![[[0.0; 2]; 2]; n];
        for e in &world.entries {
            let p = e.prob / total;
            let (t, h) = (usize::from(e.t), usize::from(e.t_hat));
            wth[e.w][t][h] += p;
            if e.y {
                wth_y[e.w][t][h] += p;
            }
        }
        Ok(Self { world, wth, wth_y })
    }

    fn texts(&self) -> std::ops::Range<usize> {
        0..self.world.texts.len()
    }

    fn p_w(&self, w: usize) -> f64 {
        self.wth[w].iter().flatten().sum()
    }

    /// Sum of a `[t][h]` table over texts in stratum `z̃`, filtered by `keep`.
    fn stratum(&self, table: &[[[f64; 2]; 2]], zt: bool, keep: impl Fn(usize, usize) -> bool) -> f64 {
        self.texts()
            .filter(|&w| self.world.ztilde[w] == zt)
            .map(|w| {
                let mut s = 0.0;
                for t in 0..2 {
                    for h in 0..2 {
                        if keep(t, h) {
                            s += table[w][t][h];
                        }
                    }
                }
                s
            })
            .sum()
    }

    fn p_ztilde(&self, zt: bool) -> f64 {
        self.stratum(&self.wth, zt, |_, _| true)
    }

    /// `E[Y | T=t, Z̃=z̃]`.
    fn e_t(&self, t: usize, zt: bool) -> Result<f64> {
        ratio(
            self.stratum(&self.wth_y, zt, |tt, _| tt == t),
            self.stratum(&self.wth, zt, |tt, _| tt == t),
        )
        .ok_or_else(|| Error::Overlap(format!("stratum Z̃={} has no T={t} mass", u8::from(zt))))
    }

    /// `E[Y | T̂=h, Z̃=z̃]`.
    fn e_hat(&self, h: usize, zt: bool) -> Result<f64> {
        ratio(
            self.stratum(&self.wth_y, zt, |_, hh| hh == h),
            self.stratum(&self.wth, zt, |_, hh| hh == h),
        )
        .ok_or_else(|| Error::Overlap(format!("stratum Z̃={} has no T̂={h} mass", u8::from(zt))))
    }

    fn strata(&self) -> impl Iterator<Item = (bool, f64)> + '_ {
        [false, true]
            .into_iter()
            .map(|zt| (zt, self.p_ztilde(zt)))
            .filter(|(_, p)| *p > 0.0)
    }

    fn psi_rea(&self) -> Result<f64> {
        let mut s = 0.0;
        for (zt, p) in self.strata() {
            s += p * (self.e_t(1, zt)? - self.e_t(0, zt)?);
        }
        Ok(s)
    }

    fn psi_proxy(&self) -> Result<f64> {
        let mut s = 0.0;
        for (zt, p) in self.strata() {
            s += p * (self.e_hat(1, zt)? - self.e_hat(0, zt)?);
        }
        Ok(s)
    }

    fn p_hat(&self, h: usize) -> f64 {
        self.texts().map(|w| self.wth[w][0][h] + self.wth[w][1][h]).sum()
    }

    fn psi_naive(&self) -> Result<f64> {
        let mean = |h: usize| -> Result<f64> {
            let y: f64 = self.texts().map(|w| self.wth_y[w][0][h] + self.wth_y[w][1][h]).sum();
            ratio(y, self.p_hat(h)).ok_or_else(|| Error::InvalidWorld(format!("P(T̂={h}) is zero")))
        };
        Ok(mean(1)? - mean(0)?)
    }

    /// `(ε0, ε1)` in stratum `z̃`.
    fn epsilons(&self, zt: bool) -> Result<(f64, f64)> {
        let err = |h: usize| Error::Overlap(format!("stratum Z̃={} has no T̂={h} mass", u8::from(zt)));
        let e0 = ratio(
            self.stratum(&self.wth, zt, |t, h| t == 0 && h == 1),
            self.stratum(&self.wth, zt, |_, h| h == 1),
        )
        .ok_or_else(|| err(1))?;
        let e1 = ratio(
            self.stratum(&self.wth, zt, |t, h| t == 1 && h == 0),
            self.stratum(&self.wth, zt, |_, h| h == 0),
        )
        .ok_or_else(|| err(0))?;
        Ok((e0, e1))
    }

    fn theorem2_bias(&self) -> Result<f64> {
        let mut s = 0.0;
        for (zt, p) in self.strata() {
            let (e0, e1) = self.epsilons(zt)?;
            s += p * (self.e_t(1, zt)? - self.e_t(0, zt)?) * (e0 + e1);
        }
        Ok(s)
    }

    /// `E[Y | T=t, W=w]`, zero when the cell is empty.
    fn e_tw(&self, t: usize, w: usize) -> f64 {
        ratio(
            self.wth_y[w][t][0] + self.wth_y[w][t][1],
            self.wth[w][t][0] + self.wth[w][t][1],
        )
        .unwrap_or(0.0)
    }

    fn alpha_beta(&self, w: usize) -> Result<(f64, f64)> {
        let (p1, p0) = (self.p_hat(1), self.p_hat(0));
        if p1 <= 0.0 || p0 <= 0.0 {
            return Err(Error::InvalidWorld("proxy marginal is degenerate".into()));
        }
        let pw = self.p_w(w);
        let c = |t: usize, h: usize| self.wth[w][t][h] / pw;
        Ok((c(1, 1) / p1 - c(1, 0) / p0, c(0, 0) / p0 - c(0, 1) / p1))
    }

    fn theorem3_residual(&self) -> Result<f64> {
        let mut s = 0.0;
        for w in self.texts() {
            let (a, b) = self.alpha_beta(w)?;
            s += self.p_w(w) * (self.e_tw(1, w) * a - self.e_tw(0, w) * b);
        }
        Ok((self.psi_naive()? - s).abs())
    }

    fn lemma1_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.texts() {
            for h in 0..2 {
                let m = self.wth[w][0][h] + self.wth[w][1][h];
                if m <= 0.0 {
                    continue;
                }
                let lhs = (self.wth_y[w][0][h] + self.wth_y[w][1][h]) / m;
                let rhs: f64 = (0..2).map(|t| self.e_tw(t, w) * self.wth[w][t][h] / m).sum();
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    /// Distance of ψ-proxy outside `[0, ψ-rea]` (or `[ψ-rea, 0]`), when the
    /// attenuation premise holds.
    fn attenuation_residual(&self, psi_rea: f64, psi_proxy: f64) -> Result<Option<f64>> {
        let mut signs = Vec::new();
        for (zt, _) in self.strata() {
            let (e0, e1) = self.epsilons(zt)?;
            if e0 + e1 > 1.0 {
                return Ok(None);
            }
            signs.push(self.e_t(1, zt)? - self.e_t(0, zt)?);
        }
        let (lo, hi) = if signs.iter().all(|&d| d >= 0.0) {
            (0.0, psi_rea)
        } else if signs.iter().all(|&d| d <= 0.0) {
            (psi_rea, 0.0)
        } else {
            return Ok(None);
        };
        Ok(Some((lo - psi_proxy).max(psi_proxy - hi).max(0.0)))
    }

    fn per_text(&self, w: usize) -> Result<PerTextTerms> {
        let zt = self.world.ztilde[w];
        let (epsilon0, epsilon1) = self.epsilons(zt)?;
        let (alpha_w, beta_w) = self.alpha_beta(w)?;
        Ok(PerTextTerms {
            ztilde: zt,
            p_w: self.p_w(w),
            epsilon0,
            epsilon1,
            p0: 1.0 - epsilon1,
            p1: 1.0 - epsilon0,
            e0: self.e_t(0, zt)?,
            e1: self.e_t(1, zt)?,
            alpha_w,
            beta_w,
        })
    }
}

fn psi_wri_with(spec: &WorldSpec) -> f64 {
    let mass: f64 = spec.p_tz.iter().flatten().sum();
    let arm = |t: usize| -> f64 {
        (0..2)
            .map(|z| {
                let inner: f64 = spec.text_model[t][z]
                    .iter()
                    .map(|o| o.prob * spec.outcome_model[t][usize::from(spec.f.eval(&o.tokens))])
                    .sum();
                spec.p_z(z) / mass * inner
            })
            .sum()
    };
    arm(1) - arm(0)
}

/// `E[Y; do(T=1)] − E[Y; do(T=0)]`, with `Z` drawn from its marginal under
/// the intervention.
pub fn psi_wri_exact(spec: &WorldSpec) -> Result<f64> {
    spec.validate()?;
    Ok(psi_wri_with(spec))
}

/// `E_W[E[Y|T̃=1, Z̃] − E[Y|T̃=0, Z̃]]`.
pub fn psi_rea_exact(spec: &WorldSpec) -> Result<f64> {
    Exact::new(spec)?.psi_rea()
}

/// `E_W[E[Y|T̂=1, Z̃] − E[Y|T̂=0, Z̃]]`.
pub fn psi_proxy_exact(spec: &WorldSpec) -> Result<f64> {
    Exact::new(spec)?.psi_proxy()
}

/// `E[Y|T̂=1] − E[Y|T̂=0]`.
pub fn psi_naive_exact(spec: &WorldSpec) -> Result<f64> {
    Exact::new(spec)?.psi_naive()
}

/// `|ψ-proxy − (ψ-rea − E_W[(E1 − E0)(ε0 + ε1)])|`.
pub fn verify_theorem2(spec: &WorldSpec) -> Result<f64> {
    let ex = Exact::new(spec)?;
    Ok((ex.psi_proxy()? - (ex.psi_rea()? - ex.theorem2_bias()?)).abs())
}

/// `|ψ-naive − E_W[E[Y|T̃=1,W]·α(W) − E[Y|T̃=0,W]·β(W)]|`.
pub fn verify_theorem3(spec: &WorldSpec) -> Result<f64> {
    Exact::new(spec)?.theorem3_residual()
}

/// Largest total-probability residual over texts and proxy values.
pub fn verify_lemma1(spec: &WorldSpec) -> Result<f64> {
    Ok(Exact::new(spec)?.lemma1_residual())
}

/// `|ψ-rea − ψ-wri|`.
pub fn verify_theorem1(spec: &WorldSpec) -> Result<f64> {
    let ex = Exact::new(spec)?;
    Ok((ex.psi_rea()? - psi_wri_with(spec)).abs())
}

fn independent_tokens(tokens: &[&str], probs: &[f64]) -> Vec<TextOption> {
    let n = tokens.len();
    (0..1usize << n)
        .map(|mask| {
            let mut words = Vec::new();
            let mut p = 1.0;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    words.push(tokens[i]);
                    p *= probs[i];
                } else {
                    p *= 1.0 - probs[i];
                }
            }
            TextOption::new(&words, p)
        })
        .collect()
}

/// A random four-token world.
///
/// `za` marks the confounder (`Z̃ = contains za`), `zb` is extra confounder
/// text the outcome ignores, and `ta`/`tb` are written more often under
/// `T=1`. The proxy reads the lexicon `{ta}` with random hit and miss rates.
/// With `homogeneous`, the effect `P(Y|T=1,Z̃) − P(Y|T=0,Z̃)` is one positive
/// constant.
pub fn random_world(seed: u64, homogeneous: bool) -> WorldSpec {
    let mut rng = rng::stream(seed, &[purpose::WORLD]);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let raw = [u(0.1, 1.0), u(0.1, 1.0), u(0.1, 1.0), u(0.1, 1.0)];
    let s: f64 = raw.iter().sum();
    let p_tz = [
        [raw[0] / s, raw[1] / s],
        [raw[2] / s, 1.0 - (raw[0] + raw[1] + raw[2]) / s],
    ];
    let za = [u(0.1, 0.5), u(0.5, 0.9)];
    let zb = [u(0.1, 0.9), u(0.1, 0.9)];
    let ta = [u(0.05, 0.4), u(0.5, 0.95)];
    let tb = [u(0.05, 0.5), u(0.3, 0.9)];
    let p_hit = u(0.6, 1.0);
    let p_miss = u(0.0, 0.3);
    let outcome_model = if homogeneous {
        let tau = u(0.05, 0.35);
        let base = [u(0.05, 0.6), u(0.05, 0.6)];
        [base, [base[0] + tau, base[1] + tau]]
    } else {
        [[u(0.05, 0.95), u(0.05, 0.95)], [u(0.05, 0.95), u(0.05, 0.95)]]
    };
    let row = |t: usize, z: usize| independent_tokens(&["ta", "tb", "za", "zb"], &[ta[t], tb[t], za[z], zb[z]]);
    WorldSpec {
        name: format!("random-{}-{seed}", if homogeneous { "homogeneous" } else { "mixed" }),
        p_tz,
        text_model: [[row(0, 0), row(0, 1)], [row(1, 0), row(1, 1)]],
        proxy_rule: ProxyRule::Lexicon {
            words: vec!["ta".into()],
            p_hit,
            p_miss,
        },
        outcome_model,
        f: Feature::ContainsToken("za".into()),
        covariate: CovariateRule::Ztilde,
    }
}

/// A homogeneous-effect world whose lexicon proxy degrades with `error`.
///
/// The sentiment word `good` is written with probability `1 − error` under
/// `T=1` and `error` under `T=0`, and the proxy is `T̂ = contains good`; the
/// confounder marker `gift` is the adjustment feature. `error = 0` gives a
/// perfect proxy and `error = 0.5` an uninformative one.
pub fn noisy_lexicon_world(error: f64) -> Result<WorldSpec> {
    if !(0.0..=1.0).contains(&error) {
        return Err(Error::InvalidParameter(format!(
            "proxy error {error} is not a probability"
        )));
    }
    let gift = [0.25, 0.75];
    let good = [error, 1.0 - error];
    let row = |t: usize, z: usize| independent_tokens(&["gift", "good"], &[gift[z], good[t]]);
    let spec = WorldSpec {
        name: format!("noisy-lexicon-{error}"),
        p_tz: [[0.35, 0.15], [0.15, 0.35]],
        text_model: [[row(0, 0), row(0, 1)], [row(1, 0), row(1, 1)]],
        proxy_rule: ProxyRule::Lexicon {
            words: vec!["good".into()],
            p_hit: 1.0,
            p_miss: 0.0,
        },
        outcome_model: [[0.2, 0.5], [0.45, 0.75]],
        f: Feature::ContainsToken("gift".into()),
        covariate: CovariateRule::Ztilde,
    };
    spec.validate()?;
    Ok(spec)
}

/// The two-token world with `T̂ = T`: `good` is written exactly when `T=1`.
pub fn perfect_proxy_world() -> WorldSpec {
    let z_rows = |words: &[&str]| {
        let with_gift: Vec<&str> = [&["gift"][..], words].concat();
        [
            vec![TextOption::new(&with_gift, 0.2), TextOption::new(words, 0.8)],
            vec![TextOption::new(&with_gift, 0.7), TextOption::new(words, 0.3)],
        ]
    };
    WorldSpec {
        name: "perfect-proxy".into(),
        text_model: [z_rows(&[]), z_rows(&["good"])],
        ..two_token_world()
    }
}

/// The two-token world with a fair-coin proxy that ignores the text.
pub fn coin_proxy_world() -> WorldSpec {
    WorldSpec {
        name: "coin-proxy".into(),
        proxy_rule: ProxyRule::Lexicon {
            words: vec![],
            p_hit: 0.5,
            p_miss: 0.5,
        },
        ..two_token_world()
    }
}

/// A world whose proxy errors are the same in both strata:
/// `P(T=0 | T̂=1) = 0.1` and `P(T=1 | T̂=0) = 0.2`.
///
/// The channel is built backwards from `P(T̂=1) = 1/2`, with the marker
/// `gift` independent of everything.
pub fn constant_error_world() -> WorldSpec {
    let q = 0.5;
    let pi = q * 0.9 + (1.0 - q) * 0.2;
    let hit = [q * 0.1 / (1.0 - pi), 1.0 - (1.0 - q) * 0.2 / pi];
    let half = |t: usize| independent_tokens(&["gift", "good"], &[0.5, hit[t]]);
    WorldSpec {
        name: "constant-errors".into(),
        p_tz: [[(1.0 - pi) / 2.0, (1.0 - pi) / 2.0], [pi / 2.0, pi / 2.0]],
        text_model: [[half(0), half(0)], [half(1), half(1)]],
        proxy_rule: ProxyRule::Lexicon {
            words: vec!["good".into()],
            p_hit: 1.0,
            p_miss: 0.0,
        },
        outcome_model: [[0.2, 0.5], [0.4, 0.7]],
        f: Feature::ContainsToken("gift".into()),
        covariate: CovariateRule::Ztilde,
    }
}

/// The default verification suite: the hand-built worlds, the noisy-lexicon
/// family at four error levels, and fourteen random worlds.
pub fn bundled_worlds() -> Vec<WorldSpec> {
    let mut worlds = vec![
        two_token_world(),
        perfect_proxy_world(),
        coin_proxy_world(),
        constant_error_world(),
    ];
    for error in [0.0, 0.1, 0.25, 0.4] {
        worlds.push(noisy_lexicon_world(error).expect("grid errors are probabilities"));
    }
    worlds.extend((0..8).map(|seed| random_world(seed, true)));
    worlds.extend((0..6).map(|seed| random_world(seed, false)));
    worlds
}

/// Sampled-pipeline settings for [`attenuation_sweep`].
#[derive(Debug, Clone)]
pub struct SweepPipeline {
    pub n: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

/// One grid point of an attenuation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub error: f64,
    pub psi_rea: f64,
    pub psi_proxy_exact: f64,
    /// `E_Z̃[ε0 + ε1]`.
    pub mean_epsilon_sum: f64,
    /// W-Adjust on sampled documents with `T̂` as the treatment.
    pub psi_proxy_estimate: Option<f64>,
    pub psi_proxy_se: Option<f64>,
    /// Covariate-stratified contrast on the true treatment.
    pub psi_oracle_estimate: Option<f64>,
}

/// Exact (and optionally sampled) ψ-proxy along a grid of proxy error
/// levels, rows in grid order.
pub fn attenuation_sweep(
    family: impl Fn(f64) -> Result<WorldSpec> + Sync,
    grid: &[f64],
    pipeline: Option<&SweepPipeline>,
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    grid.par_iter()
        .enumerate()
        .map(|(i, &error)| {
            let spec = family(error)?;
            let ex = Exact::new(&spec)?;
            let psi_rea = ex.psi_rea()?;
            let psi_proxy = ex.psi_proxy()?;
            let mut mean_epsilon_sum = 0.0;
            for (zt, p) in ex.strata() {
                let (e0, e1) = ex.epsilons(zt)?;
                mean_epsilon_sum += p * (e0 + e1);
            }
            let mut row = SweepRow {
                error,
                psi_rea,
                psi_proxy_exact: psi_proxy,
                mean_epsilon_sum,
                psi_proxy_estimate: None,
                psi_proxy_se: None,
                psi_oracle_estimate: None,
            };
            if let Some(p) = pipeline {
                let seed = rng::derive_seed(p.seed, &[i as u64]);
                let docs = sample_world(&spec, p.n, seed)?;
                let config = TrainConfig {
                    seed,
                    treatment: TreatmentField::Proxy,
                    ..p.train.clone()
                };
                let cv = cross_validated_ate(&docs, &config)?;
                row.psi_proxy_estimate = Some(cv.estimate);
                row.psi_proxy_se = Some(cv.standard_error);
                row.psi_oracle_estimate = Some(psi_naive_c(&docs, TreatmentField::True)?.value);
            }
            Ok(row)
        })
        .collect()
}
