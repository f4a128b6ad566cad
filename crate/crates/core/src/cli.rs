//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gmm::{fit_one_step, fit_two_step, GmmFit, ParamBox, WeightKind, WeightScheme};
use crate::mc::{self, Scenario, ScenarioOutcome, ARTIFACT_VERSION};
use crate::moments::{MomentSpec, QuadratureRule};
use crate::population::{population_weight, pseudo_true, PopulationModel};
use crate::rates::{fit_rate, normalize_decay, RateClass, BAND_FLOOR};
use crate::sampling::{gen_ivqr, gen_location, EpsScale, LocationVariant, SeedSpec, RNG_ID};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "nsgmm",
    version,
    about = "Exact GMM for indicator moments and variance-rate experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenarios of a JSON configuration.
    Simulate(SimulateArgs),
    /// Exact GMM fit on a CSV dataset.
    Solve(SolveArgs),
    /// Minimizer of the population criterion.
    PseudoTrue(PseudoTrueArgs),
    /// Log-log variance slopes from a results file.
    Rates(RatesArgs),
    /// Markdown tables from a run directory.
    Report(ReportArgs),
    /// Write one simulated dataset as CSV.
    Dump(DumpArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override every scenario's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override every scenario's replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Location,
    Ivqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightArg {
    Identity,
    Instrument,
    TauScaled,
    TwoStep,
}

impl WeightArg {
    fn one_step_kind(self) -> Option<WeightKind> {
        match self {
            WeightArg::Identity => Some(WeightKind::Identity),
            WeightArg::Instrument => Some(WeightKind::InstrumentOuter),
            WeightArg::TauScaled => Some(WeightKind::TauScaledInstrumentOuter),
            WeightArg::TwoStep => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FirstWeightArg {
    Identity,
    Instrument,
    TauScaled,
}

impl From<FirstWeightArg> for WeightKind {
    fn from(a: FirstWeightArg) -> Self {
        match a {
            FirstWeightArg::Identity => WeightKind::Identity,
            FirstWeightArg::Instrument => WeightKind::InstrumentOuter,
            FirstWeightArg::TauScaled => WeightKind::TauScaledInstrumentOuter,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub tau: f64,
    /// Recorded in the output only; the data already carry the design.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Location moment family.
    #[arg(long, default_value = "g1")]
    pub family: String,
    #[arg(long, value_enum, default_value = "identity")]
    pub weight: WeightArg,
    /// First-step weight of the two-step pipeline.
    #[arg(long, value_enum, default_value = "identity")]
    pub first_weight: FirstWeightArg,
    #[arg(long = "box", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub bounds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PseudoTrueArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value = "g1")]
    pub family: String,
    #[arg(long, value_enum, default_value = "identity")]
    pub weight: WeightArg,
    #[arg(long, value_enum, default_value = "identity")]
    pub first_weight: FirstWeightArg,
    #[arg(long = "box", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub bounds: Option<Vec<f64>>,
    /// Gauss–Hermite nodes per dimension for the instrumented model.
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    /// Use a Monte Carlo average with this many draws instead of quadrature.
    #[arg(long)]
    pub mc_draws: Option<usize>,
    #[arg(long, value_enum, default_value = "two")]
    pub eps_scale: EpsArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EpsArg {
    Two,
    Unit,
}

impl From<EpsArg> for EpsScale {
    fn from(a: EpsArg) -> Self {
        match a {
            EpsArg::Two => EpsScale::Two,
            EpsArg::Unit => EpsScale::Unit,
        }
    }
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Output file (default: report.md in the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long, value_enum)]
    pub dgp: ModelArg,
    #[arg(long, default_value = "g1")]
    pub family: String,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "dump")]
    pub scenario_id: String,
    #[arg(long, default_value_t = 0)]
    pub rep: u64,
    #[arg(long, value_enum, default_value = "two")]
    pub eps_scale: EpsArg,
    /// Destination file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn std::io::Write) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Solve(a) => {
            let v = cmd_solve(&a)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
            Ok(EXIT_OK)
        }
        Command::PseudoTrue(a) => {
            let v = cmd_pseudo_true(&a)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
            Ok(EXIT_OK)
        }
        Command::Rates(a) => {
            cmd_rates(&a.input, &a.out)?;
            Ok(EXIT_OK)
        }
        Command::Report(a) => {
            let path = a.out.clone().unwrap_or_else(|| a.run.join("report.md"));
            let md = cmd_report(&a.run)?;
            std::fs::write(&path, md)?;
            writeln!(out, "{}", path.display())?;
            Ok(EXIT_OK)
        }
        Command::Dump(a) => {
            let ds = cmd_dump(&a)?;
            match &a.out {
                Some(p) => ds.write_csv(std::fs::File::create(p)?)?,
                None => ds.write_csv(out)?,
            }
            Ok(EXIT_OK)
        }
    }
}

/// Top-level simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_id: Option<String>,
    /// Free-form remark carried into the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].matches('\n').count() + 1
}

/// Parse and validate a configuration; errors carry `path:line:column`.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
    if cfg.scenarios.is_empty() {
        return Err(Error::Parse(format!("{origin}:1:1: no scenarios")));
    }
    let mut seen = BTreeMap::new();
    for s in &cfg.scenarios {
        if seen.insert(s.id.clone(), ()).is_some() {
            let needle = format!("\"{}\"", s.id);
            let line = text
                .match_indices(&needle)
                .nth(1)
                .map(|(k, _)| line_of(text, k))
                .unwrap_or(1);
            return Err(Error::Parse(format!(
                "{origin}:{line}: duplicate scenario id `{}`",
                s.id
            )));
        }
    }
    if let Some(r) = &cfg.rng_id {
        if r != RNG_ID {
            let line = text.find("\"rng_id\"").map(|k| line_of(text, k)).unwrap_or(1);
            return Err(Error::Parse(format!(
                "{origin}:{line}: rng_id `{r}` is not supported (this build provides `{RNG_ID}`)"
            )));
        }
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct ManifestScenario<'a> {
    id: &'a str,
    base_seed: u64,
    valid: bool,
    bias_reference: &'a [f64],
    bias_reference_kind: &'a str,
    exclusions: &'a [mc::Exclusion],
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let origin = a.config.display().to_string();
    let text = std::fs::read_to_string(&a.config).map_err(|e| Error::Io(format!("{origin}: {e}")))?;
    let mut cfg = parse_config(&text, &origin)?;
    for s in cfg.scenarios.iter_mut() {
        if let Some(seed) = a.seed {
            s.base_seed = seed;
        }
        if let Some(r) = a.reps {
            if r < 2 {
                return Err(Error::InvalidArgument("--reps must be at least 2".into()));
            }
            s.reps = r;
        }
    }
    let out_dir = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::InvalidArgument("no output directory (--out or output_dir)".into()))?;
    let threads = a
        .threads
        .or(cfg.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let start = Instant::now();
    let mut outcomes: Vec<ScenarioOutcome> = Vec::with_capacity(cfg.scenarios.len());
    for s in &cfg.scenarios {
        let t = Instant::now();
        let o = mc::run_scenario(s, threads)?;
        eprintln!(
            "{}: {} replications in {:.1}s{}",
            s.id,
            s.reps * s.n_grid.len(),
            t.elapsed().as_secs_f64(),
            if o.valid { "" } else { " (INVALID)" }
        );
        outcomes.push(o);
    }
    mc::write_outcomes(&out_dir, &outcomes)?;
    let scenarios: Vec<ManifestScenario> = outcomes
        .iter()
        .map(|o| ManifestScenario {
            id: &o.scenario.id,
            base_seed: o.scenario.base_seed,
            valid: o.valid,
            bias_reference: &o.reference.theta,
            bias_reference_kind: &o.reference.kind,
            exclusions: &o.exclusions,
        })
        .collect();
    let manifest = json!({
        "artifact_version": ARTIFACT_VERSION,
        "rng_id": RNG_ID,
        "config_path": origin,
        "config": cfg,
        "overrides": { "seed": a.seed, "reps": a.reps, "threads": a.threads },
        "threads": threads,
        "optimizer": "exact global minimization (order-statistic intervals / line-arrangement sweep)",
        "scenarios": scenarios,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("json") + "\n",
    )?;
    Ok(if outcomes.iter().all(|o| o.valid) {
        EXIT_OK
    } else {
        EXIT_INVALID
    })
}

fn parse_bounds(b: &Option<Vec<f64>>) -> Result<ParamBox<f64>> {
    match b.as_deref() {
        Some([lo, hi]) => ParamBox::new(*lo, *hi),
        Some(_) => Err(Error::InvalidArgument("--box takes LO HI".into())),
        None => Ok(ParamBox::default()),
    }
}

fn spec_for(model: ModelArg, family: &str, tau: f64) -> Result<MomentSpec> {
    match model {
        ModelArg::Location => MomentSpec::location(LocationVariant::parse(family)?, tau),
        ModelArg::Ivqr => MomentSpec::ivqr(tau),
    }
}

fn fit_json(fit: &GmmFit<f64>) -> serde_json::Value {
    json!({
        "theta_hat": fit.theta_hat,
        "q_hat": fit.q_hat,
        "weight": {
            "kind": fit.weight_used.kind.name(),
            "matrix": fit.weight_used.matrix.rows(),
            "ridge_applied": fit.weight_used.ridge_applied,
        },
        "diagnostics": fit.diagnostics,
        "preliminary": fit.preliminary,
    })
}

/// `solve` output as JSON.
pub fn cmd_solve(a: &SolveArgs) -> Result<serde_json::Value> {
    let spec = spec_for(a.model, &a.family, a.tau)?;
    let origin = a.data.display().to_string();
    let file = std::fs::File::open(&a.data).map_err(|e| Error::Io(format!("{origin}: {e}")))?;
    let data: Dataset<f64> = Dataset::read_csv(file).map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
    let bounds = parse_bounds(&a.bounds)?;
    let fit = match a.weight.one_step_kind() {
        Some(k) => fit_one_step(&spec, &data, WeightScheme::new(k), &bounds)?,
        None => fit_two_step(&spec, &data, WeightScheme::new(a.first_weight.into()), &bounds)?,
    };
    let mut v = fit_json(&fit);
    let o = v.as_object_mut().expect("object");
    o.insert("model".into(), json!(spec.family.name()));
    o.insert("tau".into(), json!(a.tau));
    o.insert("delta".into(), json!(a.delta));
    o.insert("n".into(), json!(data.n()));
    o.insert(
        "pipeline".into(),
        json!(if a.weight == WeightArg::TwoStep {
            "two-step"
        } else {
            "one-step"
        }),
    );
    o.insert("box".into(), json!([bounds.lo, bounds.hi]));
    Ok(v)
}

/// `pseudo-true` output as JSON.
pub fn cmd_pseudo_true(a: &PseudoTrueArgs) -> Result<serde_json::Value> {
    let spec = spec_for(a.model, &a.family, a.tau)?;
    let model = match a.model {
        ModelArg::Location => {
            if a.delta.is_some() {
                return Err(Error::InvalidArgument("--delta applies only to the ivqr model".into()));
            }
            PopulationModel::Location {
                spec,
                eps: a.eps_scale.into(),
            }
        }
        ModelArg::Ivqr => {
            let delta = a.delta.unwrap_or(0.0);
            crate::sampling::ivqr_covariance(delta)?;
            let rule = match a.mc_draws {
                Some(draws) => QuadratureRule::MonteCarlo { draws, seed: 0 },
                None => QuadratureRule::GaussHermite(a.nodes),
            };
            PopulationModel::Ivqr {
                tau: a.tau,
                delta,
                rule,
            }
        }
    };
    let bounds = parse_bounds(&a.bounds)?;
    let (kind, prelim) = match a.weight.one_step_kind() {
        Some(k) => (k, None),
        None => {
            let w1 = population_weight(a.first_weight.into(), &model, None)?;
            let r1 = pseudo_true(&model, &w1, &bounds)?;
            (WeightKind::EfficientAtPreliminary, Some(r1.theta_star))
        }
    };
    let w0 = population_weight(kind, &model, prelim.as_deref())?;
    let r = pseudo_true(&model, &w0, &bounds)?;
    Ok(json!({
        "model": spec.family.name(),
        "tau": a.tau,
        "delta": a.delta,
        "weight": kind.name(),
        "weight_matrix": w0.rows(),
        "preliminary": prelim,
        "theta_star": r.theta_star,
        "q0_star": r.q0_star,
        "method": r.method,
        "multistart_count": r.multistart_count,
        "flat_region": r.flat_region,
    }))
}

/// Primary coordinate of a model: `β` for IVQR, `θ` for location.
pub fn primary_component(model: &str) -> usize {
    if model == "ivqr" {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub scenario_id: String,
    pub component: usize,
    pub slope: f64,
    pub slope_se: f64,
    pub endpoint_slope: f64,
    pub r_squared: f64,
    pub classification: String,
}

/// Write `rates.csv` and `decay_<scenario>.csv` files; returns the rate rows.
pub fn cmd_rates(input: &Path, out_dir: &Path) -> Result<Vec<RateRow>> {
    let rows = mc::read_results(input)?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no result rows", input.display())));
    }
    // Group by (scenario, component) in order of first appearance.
    let mut keys: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&mc::ResultRow>> = BTreeMap::new();
    for r in &rows {
        let k = (r.scenario_id.clone(), r.component);
        if !groups.contains_key(&k) {
            keys.push(k.clone());
        }
        groups.entry(k).or_default().push(r);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rates = Vec::new();
    let mut header = String::new();
    let mut seen: Vec<&str> = Vec::new();
    for r in &rows {
        if !seen.contains(&r.scenario_id.as_str()) {
            seen.push(&r.scenario_id);
            let _ = writeln!(header, "# scenario_id: {} base_seed: {}", r.scenario_id, r.seed);
        }
    }
    let _ = writeln!(header, "# rng_id: {RNG_ID}\n# artifact_version: {ARTIFACT_VERSION}");
    let _ = writeln!(
        header,
        "# classification band: max(2*slope_se, {BAND_FLOOR}) around -1 (ROOT_N) and -2/3 (CUBE_ROOT)"
    );
    let mut csv_out = header;
    csv_out.push_str("scenario_id,component,slope,slope_se,endpoint_slope,r_squared,classification\n");
    for key in &keys {
        let mut g = groups[key].clone();
        g.sort_by_key(|r| r.n);
        let series: Vec<(f64, f64)> = g.iter().map(|r| (r.n as f64, r.variance)).collect();
        let fit = fit_rate(&series)
            .map_err(|e| Error::InvalidArgument(format!("scenario `{}` component {}: {e}", key.0, key.1)))?;
        let row = RateRow {
            scenario_id: key.0.clone(),
            component: key.1,
            slope: fit.slope,
            slope_se: fit.slope_se,
            endpoint_slope: fit.endpoint_slope,
            r_squared: fit.r_squared,
            classification: fit.classification.name().into(),
        };
        let _ = writeln!(
            csv_out,
            "{},{},{},{},{},{},{}",
            row.scenario_id,
            row.component,
            row.slope,
            row.slope_se,
            row.endpoint_slope,
            row.r_squared,
            row.classification
        );
        let decay = normalize_decay(&series)?;
        let mut d = mc::metadata_lines(&key.0, g[0].seed);
        let _ = writeln!(d, "# component: {}", key.1);
        d.push_str("n,ratio,ref_n_inv,ref_n_23\n");
        for p in decay {
            let _ = writeln!(d, "{},{},{},{}", p.n, p.ratio, p.ref_n_inv, p.ref_n_23);
        }
        let name = if key.1 == primary_component(&g[0].model) {
            format!("decay_{}.csv", key.0)
        } else {
            format!("decay_{}.c{}.csv", key.0, key.1)
        };
        std::fs::write(out_dir.join(name), d)?;
        rates.push(row);
    }
    std::fs::write(out_dir.join("rates.csv"), csv_out)?;
    Ok(rates)
}

pub fn read_rates(path: &Path) -> Result<Vec<RateRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let r: RateRow = rec?;
        RateClass::parse(&r.classification)?;
        out.push(r);
    }
    Ok(out)
}

/// Three significant digits, plain decimal.
fn sig3(v: f64) -> String {
    if !v.is_finite() {
        return "NA".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let digits = (2 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.digits$}")
}

/// Markdown report for a run directory holding `results.csv` and `rates.csv`.
pub fn cmd_report(run: &Path) -> Result<String> {
    let results = run.join("results.csv");
    let rates_path = run.join("rates.csv");
    if !results.is_file() {
        return Err(Error::Io(format!("{}: not found", results.display())));
    }
    if !rates_path.is_file() {
        return Err(Error::Io(format!(
            "{}: not found (run `rates --in {} --out {}` first)",
            rates_path.display(),
            results.display(),
            run.display()
        )));
    }
    let rows = mc::read_results(&results)?;
    let rates = read_rates(&rates_path)?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no result rows", results.display())));
    }

    // Table key: model, family, weight, step (and τ for the instrumented model).
    type Key = (String, String, String, String, String);
    let mut order: Vec<Key> = Vec::new();
    let mut cells: BTreeMap<Key, BTreeMap<(usize, String), f64>> = BTreeMap::new();
    let mut cols: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        if r.component != primary_component(&r.model) {
            continue;
        }
        let ivqr = r.model == "ivqr";
        let key: Key = (
            r.model.clone(),
            r.family.clone(),
            r.weight.clone(),
            r.step.clone(),
            if ivqr { r.tau.to_string() } else { String::new() },
        );
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        let col = if ivqr { r.delta.unwrap_or(0.0) } else { r.tau };
        let c = cols.entry(key.clone()).or_default();
        if !c.contains(&col) {
            c.push(col);
        }
        cells.entry(key).or_default().insert((r.n, col.to_string()), r.variance);
    }

    let mut md = String::new();
    md.push_str("# Variance of the exact GMM estimator\n\n");
    let _ = writeln!(md, "Artifact version {ARTIFACT_VERSION}, RNG `{RNG_ID}`.\n");
    for key in &order {
        let (model, family, weight, step, tau) = key;
        let ivqr = model == "ivqr";
        let mut c = cols[key].clone();
        c.sort_by(f64::total_cmp);
        let title = if ivqr {
            format!("## IVQR, tau = {tau}, {step}, {weight} weight (beta)\n\n")
        } else {
            format!("## {family}, {step}, {weight} first-step weight\n\n")
        };
        md.push_str(&title);
        let label = if ivqr { "delta" } else { "tau" };
        let _ = write!(md, "| n \\ {label} |");
        for v in &c {
            let _ = write!(md, " {v} |");
        }
        md.push('\n');
        md.push_str("|---|");
        for _ in &c {
            md.push_str("---|");
        }
        md.push('\n');
        let table = &cells[key];
        let mut ns: Vec<usize> = table.keys().map(|(n, _)| *n).collect();
        ns.dedup();
        for n in ns {
            let _ = write!(md, "| {n} |");
            for v in &c {
                match table.get(&(n, v.to_string())) {
                    Some(x) => {
                        let _ = write!(md, " {} |", sig3(*x));
                    }
                    None => md.push_str(" |"),
                }
            }
            md.push('\n');
        }
        md.push('\n');
    }

    md.push_str("## Variance decay rates\n\n");
    let _ = writeln!(
        md,
        "OLS slope of ln(variance) on ln(n). ROOT_N: slope within max(2 se, {BAND_FLOOR}) of -1; CUBE_ROOT: within the same band of -2/3; the nearer wins when both match.\n"
    );
    md.push_str("| scenario | component | slope | se | endpoint slope | R^2 | class |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for r in &rates {
        let _ = writeln!(
            md,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.4} | {} |",
            r.scenario_id, r.component, r.slope, r.slope_se, r.endpoint_slope, r.r_squared, r.classification
        );
    }
    Ok(md)
}

/// Simulated dataset for `dump`.
pub fn cmd_dump(a: &DumpArgs) -> Result<Dataset<f64>> {
    let seed = SeedSpec::new(a.seed, a.scenario_id.clone(), a.rep);
    match a.dgp {
        ModelArg::Location => gen_location(a.n, LocationVariant::parse(&a.family)?, a.eps_scale.into(), &seed),
        ModelArg::Ivqr => gen_ivqr(a.n, a.delta, &seed),
    }
}
