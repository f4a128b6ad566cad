//! Seeded Monte Carlo scenarios: replication, aggregation, persistence.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit_one_step, fit_two_step, ParamBox, WeightKind, WeightScheme};
use crate::moments::{MomentFamily, MomentSpec};
use crate::population::{population_weight, pseudo_true, PopulationModel};
use crate::sampling::{gen_ivqr, gen_location, EpsScale, LocationVariant, SeedSpec, RNG_ID};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Largest tolerated share of failed replications per sample size.
pub const MAX_EXCLUDED_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Location,
    Ivqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    OneStep,
    TwoStep,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::OneStep => "one-step",
            Step::TwoStep => "two-step",
        }
    }
}

/// Scenario as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<LocationVariant>,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_scale: Option<EpsScale>,
    pub pipeline: Step,
    /// Weight of the (first) step.
    pub weight: WeightKind,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

/// Validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioConfig", into = "ScenarioConfig")]
pub struct Scenario {
    pub id: String,
    pub spec: MomentSpec,
    pub delta: f64,
    pub eps: EpsScale,
    pub step: Step,
    pub weight: WeightKind,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub bounds: ParamBox<f64>,
}

impl TryFrom<ScenarioConfig> for Scenario {
    type Error = Error;

    fn try_from(c: ScenarioConfig) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("scenario `{}`: {msg}", c.id));
        if c.id.is_empty()
            || !c
                .id
                .chars()
                .all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '-' | '_' | '.'))
        {
            return Err(Error::InvalidArgument(format!(
                "scenario id `{}` must be non-empty and use only [A-Za-z0-9._-]",
                c.id
            )));
        }
        let (spec, delta) = match c.model {
            Model::Location => {
                let fam = c.family.ok_or_else(|| bad("location scenarios need `family`".into()))?;
                if c.delta.is_some() {
                    return Err(bad("`delta` applies only to the ivqr model".into()));
                }
                (MomentSpec::location(fam, c.tau).map_err(|e| bad(e.to_string()))?, 0.0)
            }
            Model::Ivqr => {
                if c.family.is_some() || c.eps_scale.is_some() {
                    return Err(bad("`family` and `eps_scale` apply only to the location model".into()));
                }
                let delta = c.delta.unwrap_or(0.0);
                crate::sampling::ivqr_covariance(delta).map_err(|e| bad(e.to_string()))?;
                (MomentSpec::ivqr(c.tau).map_err(|e| bad(e.to_string()))?, delta)
            }
        };
        if c.weight == WeightKind::EfficientAtPreliminary {
            return Err(bad(
                "`weight` is the first-step weight; use pipeline two-step for efficient weighting".into(),
            ));
        }
        if c.model == Model::Location && c.weight != WeightKind::Identity {
            return Err(bad(
                "location models have no instruments; use the identity weight".into()
            ));
        }
        if c.n_grid.is_empty() || c.n_grid[0] == 0 || c.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("n_grid must be non-empty, positive and strictly increasing".into()));
        }
        if c.reps < 2 {
            return Err(bad("reps must be at least 2".into()));
        }
        let bounds = match c.bounds {
            Some([lo, hi]) => ParamBox::new(lo, hi).map_err(|e| bad(e.to_string()))?,
            None => ParamBox::default(),
        };
        Ok(Scenario {
            id: c.id,
            spec,
            delta,
            eps: c.eps_scale.unwrap_or_default(),
            step: c.pipeline,
            weight: c.weight,
            n_grid: c.n_grid,
            reps: c.reps,
            base_seed: c.base_seed,
            bounds,
        })
    }
}

impl From<Scenario> for ScenarioConfig {
    fn from(s: Scenario) -> Self {
        let location = s.spec.family.is_location();
        ScenarioConfig {
            id: s.id,
            model: if location { Model::Location } else { Model::Ivqr },
            family: s.spec.family.variant(),
            tau: s.spec.tau,
            delta: (!location).then_some(s.delta),
            eps_scale: (location && s.eps != EpsScale::default()).then_some(s.eps),
            pipeline: s.step,
            weight: s.weight,
            n_grid: s.n_grid,
            reps: s.reps,
            base_seed: s.base_seed,
            bounds: (s.bounds != ParamBox::default()).then_some([s.bounds.lo, s.bounds.hi]),
        }
    }
}

impl Scenario {
    pub fn model(&self) -> Model {
        if self.spec.family.is_location() {
            Model::Location
        } else {
            Model::Ivqr
        }
    }

    /// Stream label for one sample size.
    pub fn stream_id(&self, n: usize) -> String {
        format!("{}/n={n}", self.id)
    }

    pub fn seed(&self, n: usize, rep: usize) -> SeedSpec {
        SeedSpec::new(self.base_seed, self.stream_id(n), rep as u64)
    }

    pub fn population_model(&self) -> PopulationModel {
        match self.model() {
            Model::Location => PopulationModel::Location {
                spec: self.spec,
                eps: self.eps,
            },
            Model::Ivqr => PopulationModel::ivqr(self.spec.tau, self.delta).expect("validated scenario"),
        }
    }

    /// Generate replication `rep` at size `n` and fit it.
    pub fn replicate(&self, n: usize, rep: usize) -> Result<Vec<f64>> {
        let seed = self.seed(n, rep);
        let data = match self.spec.family.variant() {
            Some(v) => gen_location(n, v, self.eps, &seed)?,
            None => gen_ivqr(n, self.delta, &seed)?,
        };
        let scheme = WeightScheme::new(self.weight);
        let fit = match self.step {
            Step::OneStep => fit_one_step(&self.spec, &data, scheme, &self.bounds)?,
            Step::TwoStep => fit_two_step(&self.spec, &data, scheme, &self.bounds)?,
        };
        Ok(fit.theta_hat)
    }
}

/// Value the estimator is centered on for bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReference {
    pub theta: Vec<f64>,
    /// `"true value"` or `"pseudo-true"`.
    pub kind: String,
}

/// The true parameter under correct specification at the median, the
/// population pseudo-true value under the scenario's weighting otherwise.
pub fn bias_reference(s: &Scenario) -> Result<BiasReference> {
    let model = s.population_model();
    if model.correctly_specified() && s.spec.tau == 0.5 {
        let theta = match s.model() {
            Model::Location => vec![0.0],
            Model::Ivqr => vec![1.0, 1.0],
        };
        return Ok(BiasReference {
            theta,
            kind: "true value".into(),
        });
    }
    let w1 = population_weight(s.weight, &model, None)?;
    let mut r = pseudo_true(&model, &w1, &s.bounds)?;
    if s.step == Step::TwoStep {
        let w2 = population_weight(WeightKind::EfficientAtPreliminary, &model, Some(&r.theta_star))?;
        r = pseudo_true(&model, &w2, &s.bounds)?;
    }
    Ok(BiasReference {
        theta: r.theta_star,
        kind: "pseudo-true".into(),
    })
}

/// Unbiased sample variance (divisor `R − 1`).
pub fn estimator_variance(estimates: &[f64]) -> Result<f64> {
    if estimates.len() < 2 {
        return Err(Error::TooFewPoints {
            need: 2,
            got: estimates.len(),
        });
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    Ok(estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub scenario_id: String,
    pub n: usize,
    pub component: usize,
    /// Replications that produced an estimate.
    pub recorded: usize,
    pub excluded: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub n: usize,
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEstimate {
    pub n: usize,
    pub rep: usize,
    pub component: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub reference: BiasReference,
    pub cells: Vec<CellStats>,
    pub raw: Vec<RawEstimate>,
    pub exclusions: Vec<Exclusion>,
    /// False when some sample size lost more than 1% of its replications.
    pub valid: bool,
}

/// Run every `(n, rep)` of a scenario on `parallelism` worker threads.
/// The outcome does not depend on `parallelism`.
pub fn run_scenario(s: &Scenario, parallelism: usize) -> Result<ScenarioOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let reference = bias_reference(s)?;
    let jobs: Vec<(usize, usize)> = s
        .n_grid
        .iter()
        .flat_map(|&n| (0..s.reps).map(move |r| (n, r)))
        .collect();
    let results: Vec<Result<Vec<f64>>> = pool.install(|| jobs.par_iter().map(|&(n, r)| s.replicate(n, r)).collect());

    let p = s.spec.param_dim();
    let mut cells = Vec::new();
    let mut raw = Vec::new();
    let mut exclusions = Vec::new();
    let mut valid = true;
    for (k, &n) in s.n_grid.iter().enumerate() {
        let block = &results[k * s.reps..(k + 1) * s.reps];
        let mut ests: Vec<&Vec<f64>> = Vec::with_capacity(s.reps);
        for (rep, res) in block.iter().enumerate() {
            match res {
                Ok(theta) => {
                    for (component, &estimate) in theta.iter().enumerate() {
                        raw.push(RawEstimate {
                            n,
                            rep,
                            component,
                            estimate,
                        });
                    }
                    ests.push(theta);
                }
                Err(e) => exclusions.push(Exclusion {
                    n,
                    rep,
                    reason: e.to_string(),
                }),
            }
        }
        let excluded = s.reps - ests.len();
        if excluded as f64 > MAX_EXCLUDED_SHARE * s.reps as f64 || ests.len() < 2 {
            valid = false;
        }
        for component in 0..p {
            let v: Vec<f64> = ests.iter().map(|t| t[component]).collect();
            let (mean, variance) = if v.len() >= 2 {
                (v.iter().sum::<f64>() / v.len() as f64, estimator_variance(&v)?)
            } else {
                (f64::NAN, f64::NAN)
            };
            let bias = mean - reference.theta[component];
            let r = v.len() as f64;
            cells.push(CellStats {
                scenario_id: s.id.clone(),
                n,
                component,
                recorded: v.len(),
                excluded,
                mean,
                bias,
                variance,
                mse: bias * bias + variance * (r - 1.0) / r,
            });
        }
    }
    Ok(ScenarioOutcome {
        scenario: s.clone(),
        reference,
        cells,
        raw,
        exclusions,
        valid,
    })
}

pub const RESULTS_HEADER: [&str; 18] = [
    "scenario_id",
    "model",
    "family",
    "tau",
    "delta",
    "weight",
    "step",
    "n",
    "reps",
    "excluded",
    "component",
    "mean",
    "bias",
    "variance",
    "mse",
    "seed",
    "rng_id",
    "artifact_version",
];

/// `results.csv` rows for a set of outcomes.
pub fn results_csv(outcomes: &[ScenarioOutcome]) -> String {
    let mut out = RESULTS_HEADER.join(",");
    out.push('\n');
    for o in outcomes {
        let s = &o.scenario;
        let (model, delta) = match s.model() {
            Model::Location => ("location", String::new()),
            Model::Ivqr => ("ivqr", s.delta.to_string()),
        };
        for c in &o.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.id,
                model,
                s.spec.family.name(),
                s.spec.tau,
                delta,
                s.weight.name(),
                s.step.name(),
                c.n,
                s.reps,
                c.excluded,
                c.component,
                c.mean,
                c.bias,
                c.variance,
                c.mse,
                s.base_seed,
                RNG_ID,
                ARTIFACT_VERSION
            );
        }
    }
    out
}

/// Leading `#` lines identifying where a file came from.
pub fn metadata_lines(scenario_id: &str, base_seed: u64) -> String {
    format!(
        "# scenario_id: {scenario_id}\n# base_seed: {base_seed}\n# rng_id: {RNG_ID}\n# artifact_version: {ARTIFACT_VERSION}\n"
    )
}

/// `raw_<scenario>.csv` contents.
pub fn raw_csv(o: &ScenarioOutcome) -> String {
    let mut out = metadata_lines(&o.scenario.id, o.scenario.base_seed);
    out.push_str("n,rep,component,estimate\n");
    for r in &o.raw {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.rep, r.component, r.estimate);
    }
    out
}

pub fn write_outcomes(dir: &Path, outcomes: &[ScenarioOutcome]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(outcomes))?;
    for o in outcomes {
        std::fs::write(dir.join(format!("raw_{}.csv", o.scenario.id)), raw_csv(o))?;
    }
    Ok(())
}

/// One parsed `results.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub model: String,
    pub family: String,
    pub tau: f64,
    pub delta: Option<f64>,
    pub weight: String,
    pub step: String,
    pub n: usize,
    pub reps: usize,
    pub excluded: usize,
    pub component: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub seed: u64,
    pub rng_id: String,
    pub artifact_version: String,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_results(&text)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    for h in RESULTS_HEADER {
        if !headers.iter().any(|x| x == h) {
            return Err(Error::MissingColumn(h.into()));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Moment family named in a results row.
pub fn family_of(row: &ResultRow) -> Option<MomentFamily> {
    match row.family.as_str() {
        "ivqr" => Some(MomentFamily::Ivqr),
        other => LocationVariant::parse(other).ok().map(MomentFamily::from_variant),
    }
}
