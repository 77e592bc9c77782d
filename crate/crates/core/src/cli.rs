//! Command-line surface: CSV ingestion, fitting, gap filling, forecasting,
//! residual diagnostics, the simulation study and the gap experiment.
//!
//! Every command reads a JSON [`RunConfig`] (all fields optional), writes
//! its outputs atomically into the output directory and echoes the resolved
//! configuration there. Timestamps appear only in `metadata` fields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::aep::fit_aep_marginal;
use crate::design::ExogenousSeries;
use crate::error::{Error, Result};
use crate::estimate::{fit, ModelFit, ModelSpec};
use crate::optim::OptimConfig;
use crate::predict::{gap_experiment, predict, GapPlan, GapTable};
use crate::simstudy::{gen_scenario, run_study, ScenarioConfig, ScenarioKind, StudyConfig};
use crate::special::norm_quantile;
use crate::spectral::{empirical_acv, modulated_residuals, ObservedSeries};

/// Exit status when every output was written but a fit did not converge.
pub const EXIT_NONCONVERGED: i32 = 3;
/// Exit status for module and input errors.
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "mixed-whittle", version, about = "Mixed time-series models with Whittle, exact and two-stage estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the configured model and write a JSON report.
    Fit(CommonArgs),
    /// Fit, then predict every missing value.
    Fill(CommonArgs),
    /// Fit, then predict `forecast_horizon` steps past the end.
    Forecast(CommonArgs),
    /// Fit, then write residual autocovariance and Q-Q data.
    Diagnose(CommonArgs),
    /// Run the simulation study.
    Simulate(CommonArgs),
    /// Carve gaps in the data and compare the model with the comparison model.
    GapExperiment(CommonArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub exog: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub deseasonalise_exog: bool,
    #[arg(long)]
    pub allow_nonconverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub plans: Vec<GapPlan>,
    pub repeats: usize,
    /// Also run the experiment on a simulated StandardMixed series in `simulate`.
    pub on_simulated: bool,
    pub simulated_n: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { plans: GapPlan::STANDARD.to_vec(), repeats: 250, on_simulated: false, simulated_n: 720 }
    }
}

/// Declarative job description. Command-line flags override the matching
/// fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub series: Option<PathBuf>,
    pub exog: Option<PathBuf>,
    pub out: PathBuf,
    pub model: ModelSpec,
    /// Baseline model of the gap experiment; defaults to `model`.
    pub comparison: Option<ModelSpec>,
    pub optim: OptimConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub deseasonalise_exog: bool,
    pub allow_nonconverged: bool,
    /// Central Gaussian level of the predictive intervals.
    pub interval_level: f64,
    pub forecast_horizon: usize,
    pub diagnose_max_lag: usize,
    pub study: StudyConfig,
    pub gap: GapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            series: None,
            exog: None,
            out: PathBuf::from("out"),
            model: ModelSpec::default(),
            comparison: None,
            optim: OptimConfig::default(),
            seed: 0,
            threads: None,
            deseasonalise_exog: false,
            allow_nonconverged: false,
            interval_level: 0.95,
            forecast_horizon: 12,
            diagnose_max_lag: 60,
            study: StudyConfig::default(),
            gap: GapConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Loads the config file (if any) and applies the command-line flags.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::from_json(&fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        if args.series.is_some() {
            cfg.series = args.series.clone();
        }
        if args.exog.is_some() {
            cfg.exog = args.exog.clone();
        }
        if let Some(o) = &args.out {
            cfg.out = o.clone();
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if args.threads.is_some() {
            cfg.threads = args.threads;
        }
        cfg.deseasonalise_exog |= args.deseasonalise_exog;
        cfg.allow_nonconverged |= args.allow_nonconverged;
        cfg.optim.seed = cfg.seed;
        cfg.study.seed = cfg.seed;
        cfg.study.optim.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(c) = &self.comparison {
            c.validate()?;
        }
        if !(self.interval_level > 0.0 && self.interval_level < 1.0) {
            return Err(Error::Config(format!("interval_level must lie in (0, 1), got {}", self.interval_level)));
        }
        if self.optim.restarts == 0 || self.optim.max_iterations == 0 || !(self.optim.f_tol > 0.0) {
            return Err(Error::Config("optimiser needs restarts >= 1, max_iterations >= 1 and f_tol > 0".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if self.gap.repeats == 0 || self.gap.plans.is_empty() {
            return Err(Error::Config("gap experiment needs repeats >= 1 and at least one plan".into()));
        }
        Ok(())
    }

    fn series_path(&self) -> Result<&Path> {
        self.series.as_deref().ok_or_else(|| Error::Config("no series file given (--series or \"series\")".into()))
    }
}

/// How the time column was read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    /// YYYY-MM (a trailing -DD is accepted and ignored); the key is the month count.
    IsoMonth,
    Integer,
}

/// A parsed two-column CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    pub kind: TimeKind,
    pub keys: Vec<i64>,
    pub values: Vec<Option<f64>>,
    pub step: i64,
}

fn parse_month(s: &str) -> Option<i64> {
    let mut parts = s.split('-');
    let year: i64 = parts.next()?.parse().ok()?;
    let month: i64 = parts.next()?.parse().ok()?;
    if let Some(day) = parts.next() {
        day.parse::<u32>().ok()?;
    }
    if parts.next().is_some() || !(1..=12).contains(&month) {
        return None;
    }
    Some(year * 12 + month - 1)
}

pub fn format_time(kind: TimeKind, key: i64) -> String {
    match kind {
        TimeKind::IsoMonth => format!("{:04}-{:02}", key.div_euclid(12), key.rem_euclid(12) + 1),
        TimeKind::Integer => key.to_string(),
    }
}

/// Reads `time,value` CSV text with a header. Empty value cells are missing.
pub fn parse_time_table(text: &str, what: &str) -> Result<TimeTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut raw = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 2 {
            return Err(Error::Input(format!("{what}: line {line} needs a time and a value column")));
        }
        raw.push((line, rec[0].to_string(), rec[1].to_string()));
    }
    if raw.len() < 2 {
        return Err(Error::Input(format!("{what}: at least two data rows are needed")));
    }
    let kind = if parse_month(&raw[0].1).is_some() { TimeKind::IsoMonth } else { TimeKind::Integer };
    let mut keys = Vec::with_capacity(raw.len());
    let mut values = Vec::with_capacity(raw.len());
    for (line, t, v) in &raw {
        let key = match kind {
            TimeKind::IsoMonth => parse_month(t),
            TimeKind::Integer => t.parse::<i64>().ok(),
        }
        .ok_or_else(|| Error::Input(format!("{what}: line {line}: cannot read time {t:?} as {kind:?}")))?;
        keys.push(key);
        values.push(if v.is_empty() {
            None
        } else {
            let x: f64 = v.parse().map_err(|_| Error::Input(format!("{what}: line {line}: cannot read value {v:?}")))?;
            if !x.is_finite() {
                return Err(Error::Input(format!("{what}: line {line}: value is not finite")));
            }
            Some(x)
        });
    }
    let step = keys[1] - keys[0];
    if step <= 0 {
        return Err(Error::Input(format!("{what}: time must be strictly increasing (lines 2-3)")));
    }
    let bad: Vec<usize> = (1..keys.len()).filter(|&i| keys[i] - keys[i - 1] != step).map(|i| raw[i].0).collect();
    if !bad.is_empty() {
        return Err(Error::Input(format!("{what}: irregular time step (expected {step}) at lines {bad:?}")));
    }
    Ok(TimeTable { kind, keys, values, step })
}

/// Subtracts from each value the mean over all values in the same calendar
/// month (or the same index modulo 12 for integer time).
pub fn deseasonalise(table: &TimeTable, values: &[f64]) -> Vec<f64> {
    let season = |k: i64| (k / table.step).rem_euclid(12) as usize;
    let mut sum = [0.0; 12];
    let mut count = [0usize; 12];
    for (k, v) in table.keys.iter().zip(values) {
        sum[season(*k)] += v;
        count[season(*k)] += 1;
    }
    table
        .keys
        .iter()
        .zip(values)
        .map(|(k, v)| {
            let s = season(*k);
            v - sum[s] / count[s] as f64
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: ObservedSeries,
    pub exog: Option<ExogenousSeries>,
    pub table: TimeTable,
    /// Exogenous time keys, when an exogenous file was given.
    pub exog_keys: Option<Vec<i64>>,
}

/// Reads the response CSV and the optional exogenous CSV. The exogenous
/// series must be complete, share the time format and step, and start no
/// later than the response; its earlier values become the IRF lead.
pub fn ingest(series_text: &str, exog_text: Option<&str>, deseasonalise_exog: bool) -> Result<Ingested> {
    let table = parse_time_table(series_text, "series")?;
    let series = ObservedSeries::from_options(&table.values)?;
    let (exog, exog_keys) = match exog_text {
        None => (None, None),
        Some(text) => {
            let et = parse_time_table(text, "exogenous")?;
            if et.kind != table.kind || et.step != table.step {
                return Err(Error::Input("exogenous time format or step differs from the series".into()));
            }
            let gaps: Vec<usize> = et.values.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i + 2).collect();
            if !gaps.is_empty() {
                return Err(Error::Input(format!("exogenous series has missing values at lines {gaps:?}")));
            }
            let offset = table.keys[0] - et.keys[0];
            if offset < 0 || offset % table.step != 0 {
                return Err(Error::Input("exogenous series must start on the series grid, no later than the series".into()));
            }
            let mut vals: Vec<f64> = et.values.iter().map(|v| v.unwrap_or(0.0)).collect();
            if deseasonalise_exog {
                vals = deseasonalise(&et, &vals);
            }
            (Some(ExogenousSeries::new(vals, (offset / table.step) as usize)?), Some(et.keys.clone()))
        }
    };
    Ok(Ingested { series, exog, table, exog_keys })
}

/// Writes via a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("output");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

#[derive(Debug, Clone, Serialize)]
struct Metadata {
    generated_at: String,
    version: &'static str,
    command: String,
}

fn metadata(command: &str) -> Metadata {
    Metadata {
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct InputSummary {
    time_kind: TimeKind,
    first_time: String,
    step: i64,
    n: usize,
    observed: usize,
    missing_fraction: f64,
    exog_lead: Option<usize>,
    deseasonalised_exog: bool,
}

#[derive(Debug, Clone, Serialize)]
struct FitReport<'a> {
    metadata: Metadata,
    input: InputSummary,
    converged: bool,
    fit: &'a ModelFit,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// Every fit converged (vacuously true without fits).
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(&self, allow_nonconverged: bool) -> i32 {
        if self.converged || allow_nonconverged {
            0
        } else {
            EXIT_NONCONVERGED
        }
    }
}

struct Session {
    cfg: RunConfig,
    data: Ingested,
}

impl Session {
    fn load(cfg: RunConfig) -> Result<Self> {
        let text = fs::read_to_string(cfg.series_path()?)?;
        let exog = match &cfg.exog {
            Some(p) => Some(fs::read_to_string(p)?),
            None => None,
        };
        let data = ingest(&text, exog.as_deref(), cfg.deseasonalise_exog)?;
        Ok(Self { cfg, data })
    }

    fn summary(&self) -> InputSummary {
        InputSummary {
            time_kind: self.data.table.kind,
            first_time: format_time(self.data.table.kind, self.data.table.keys[0]),
            step: self.data.table.step,
            n: self.data.series.len(),
            observed: self.data.series.observed_count(),
            missing_fraction: self.data.series.missing_fraction(),
            exog_lead: self.data.exog.as_ref().map(|e| e.lead),
            deseasonalised_exog: self.cfg.deseasonalise_exog,
        }
    }

    fn fit_model(&self, spec: &ModelSpec) -> Result<ModelFit> {
        fit(&self.data.series, self.data.exog.as_ref(), spec, &self.cfg.optim)
    }

    fn time_label(&self, index: usize) -> String {
        let t = &self.data.table;
        format_time(t.kind, t.keys[0] + index as i64 * t.step)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn write_prediction(&self, fit: &ModelFit, targets: &[usize], name: &str) -> Result<PathBuf> {
        let rows: Vec<Vec<String>> = if targets.is_empty() {
            Vec::new()
        } else {
            let p = predict(fit, &self.data.series, self.data.exog.as_ref(), targets, Some(self.cfg.interval_level))?;
            let (lo, hi) = (p.lower.unwrap_or_default(), p.upper.unwrap_or_default());
            (0..targets.len())
                .map(|i| vec![self.time_label(targets[i]), num(p.mean[i]), num(p.variance[i]), num(lo[i]), num(hi[i])])
                .collect()
        };
        let path = self.out(name);
        write_atomic(&path, &csv_bytes(&["time", "mean", "variance", "lower", "upper"], rows)?)?;
        Ok(path)
    }
}

fn echo_config(cfg: &RunConfig) -> Result<PathBuf> {
    let path = cfg.out.join("config.resolved.json");
    write_json(&path, cfg)?;
    Ok(path)
}

fn write_fit_report(s: &Session, fit: &ModelFit, command: &str) -> Result<PathBuf> {
    let path = s.out("fit.json");
    write_json(&path, &FitReport { metadata: metadata(command), input: s.summary(), converged: fit.converged(), fit })?;
    Ok(path)
}

pub fn cmd_fit(cfg: RunConfig) -> Result<Outcome> {
    let s = Session::load(cfg)?;
    let fit = s.fit_model(&s.cfg.model)?;
    let written = vec![echo_config(&s.cfg)?, write_fit_report(&s, &fit, "fit")?];
    Ok(Outcome { written, converged: fit.converged() })
}

pub fn cmd_fill(cfg: RunConfig) -> Result<Outcome> {
    let s = Session::load(cfg)?;
    let fit = s.fit_model(&s.cfg.model)?;
    let targets: Vec<usize> = (0..s.data.series.len()).filter(|&t| !s.data.series.mask()[t]).collect();
    let written = vec![echo_config(&s.cfg)?, write_fit_report(&s, &fit, "fill")?, s.write_prediction(&fit, &targets, "fill.csv")?];
    Ok(Outcome { written, converged: fit.converged() })
}

pub fn cmd_forecast(cfg: RunConfig) -> Result<Outcome> {
    let s = Session::load(cfg)?;
    if s.cfg.forecast_horizon == 0 {
        return Err(Error::Config("forecast_horizon must be >= 1".into()));
    }
    let fit = s.fit_model(&s.cfg.model)?;
    let n = s.data.series.len();
    let targets: Vec<usize> = (n..n + s.cfg.forecast_horizon).collect();
    let written =
        vec![echo_config(&s.cfg)?, write_fit_report(&s, &fit, "forecast")?, s.write_prediction(&fit, &targets, "forecast.csv")?];
    Ok(Outcome { written, converged: fit.converged() })
}

/// Q-Q plotting positions (i - 0.5) / m.
fn plotting_positions(m: usize) -> Vec<f64> {
    (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect()
}

pub fn cmd_diagnose(cfg: RunConfig) -> Result<Outcome> {
    let s = Session::load(cfg)?;
    let fit = s.fit_model(&s.cfg.model)?;
    let n = s.data.series.len();
    let design = fit.design_matrix(s.data.exog.as_ref(), n)?;
    let resid = s.data.series.with_values(modulated_residuals(&s.data.series, &design, &fit.beta)?)?;
    let max_lag = s.cfg.diagnose_max_lag.min(n - 1);
    let emp = empirical_acv(&resid, max_lag);
    let model = fit.alpha.acv_sequence(max_lag + 1)?;
    let acv_rows = (0..=max_lag).map(|k| vec![k.to_string(), num(emp[k]), num(model[k])]);
    let acv_path = s.out("residual_acv.csv");
    write_atomic(&acv_path, &csv_bytes(&["lag", "empirical", "model"], acv_rows)?)?;

    let mut r = resid.observed_values();
    r.sort_by(f64::total_cmp);
    let m = r.len() as f64;
    let mean = r.iter().sum::<f64>() / m;
    let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let probs = plotting_positions(r.len());
    let aep = fit_aep_marginal(&r, &s.cfg.optim)?;
    let mut qq_rows = Vec::with_capacity(r.len());
    for (i, (&x, &p)) in r.iter().zip(&probs).enumerate() {
        qq_rows.push(vec![
            (i + 1).to_string(),
            num(p),
            num(x),
            num(mean + sd * norm_quantile(p)),
            num(aep.params.quantile(p)?),
        ]);
    }
    let qq_path = s.out("residual_qq.csv");
    write_atomic(&qq_path, &csv_bytes(&["rank", "probability", "residual", "gaussian", "aep"], qq_rows)?)?;
    let aep_path = s.out("residual_aep.json");
    write_json(&aep_path, &aep)?;
    let written = vec![echo_config(&s.cfg)?, write_fit_report(&s, &fit, "diagnose")?, acv_path, qq_path, aep_path];
    Ok(Outcome { written, converged: fit.converged() })
}

fn gap_rows(table: &GapTable) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for row in &table.rows {
        for (k, name) in table.methods.iter().enumerate() {
            rows.push(vec![
                row.label.clone(),
                name.clone(),
                num(row.rmse[k]),
                format!("{:.2}", row.reduction_percent),
                format!("{:.2}", row.median_reduction_percent),
            ]);
        }
    }
    rows
}

fn write_gap_table(out: &Path, table: &GapTable, stem: &str) -> Result<Vec<PathBuf>> {
    let csv_path = out.join(format!("{stem}.csv"));
    write_atomic(
        &csv_path,
        &csv_bytes(&["plan", "method", "rmse", "reduction_percent", "median_reduction_percent"], gap_rows(table))?,
    )?;
    let json_path = out.join(format!("{stem}.json"));
    write_json(&json_path, table)?;
    Ok(vec![csv_path, json_path])
}

fn run_gap(
    series: &ObservedSeries,
    exog: Option<&ExogenousSeries>,
    cfg: &RunConfig,
) -> Result<(GapTable, bool)> {
    let baseline_spec = cfg.comparison.clone().unwrap_or_else(|| cfg.model.clone());
    let candidate = fit(series, exog, &cfg.model, &cfg.optim)?;
    let baseline = fit(series, exog, &baseline_spec, &cfg.optim)?;
    let converged = candidate.converged() && baseline.converged();
    let table = gap_experiment(
        series,
        exog,
        [(cfg.model.method.label(), &candidate), (baseline_spec.method.label(), &baseline)],
        &cfg.gap.plans,
        cfg.gap.repeats,
        cfg.seed,
    )?;
    Ok((table, converged))
}

pub fn cmd_gap_experiment(cfg: RunConfig) -> Result<Outcome> {
    let s = Session::load(cfg)?;
    let (table, converged) = run_gap(&s.data.series, s.data.exog.as_ref(), &s.cfg)?;
    let mut written = vec![echo_config(&s.cfg)?];
    written.extend(write_gap_table(&s.cfg.out, &table, "gap_experiment")?);
    Ok(Outcome { written, converged })
}

#[derive(Debug, Clone, Serialize)]
struct StudySummary<'a> {
    metadata: Metadata,
    failures: &'a [crate::simstudy::StudyFailure],
    summary: &'a [crate::simstudy::BoxplotSummary],
}

pub fn cmd_simulate(cfg: RunConfig) -> Result<Outcome> {
    let results = run_study(&cfg.study)?;
    let mut written = vec![echo_config(&cfg)?];
    let mut buf = Vec::new();
    results.write_csv(&mut buf)?;
    let csv_path = cfg.out.join("study.csv");
    write_atomic(&csv_path, &buf)?;
    let json_path = cfg.out.join("study_summary.json");
    write_json(&json_path, &StudySummary { metadata: metadata("simulate"), failures: &results.failures, summary: &results.summary })?;
    written.extend([csv_path, json_path]);
    let mut converged = results.rows.iter().all(|r| r.converged);
    if cfg.gap.on_simulated {
        let sc = ScenarioConfig { seed: cfg.seed, ..ScenarioConfig::new(ScenarioKind::StandardMixed, cfg.gap.simulated_n) };
        let scenario = gen_scenario(&sc, 0)?;
        let (table, ok) = run_gap(&scenario.series, Some(&scenario.exog), &cfg)?;
        converged &= ok;
        written.extend(write_gap_table(&cfg.out, &table, "gap_experiment_simulated")?);
    }
    Ok(Outcome { written, converged })
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(Outcome, bool)> {
    let (args, which) = match &cli.command {
        Command::Fit(a) => (a, "fit"),
        Command::Fill(a) => (a, "fill"),
        Command::Forecast(a) => (a, "forecast"),
        Command::Diagnose(a) => (a, "diagnose"),
        Command::Simulate(a) => (a, "simulate"),
        Command::GapExperiment(a) => (a, "gap-experiment"),
    };
    let cfg = RunConfig::resolve(args)?;
    if let Some(t) = cfg.threads {
        // an already initialised pool (e.g. in tests) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let allow = cfg.allow_nonconverged;
    let outcome = match which {
        "fit" => cmd_fit(cfg),
        "fill" => cmd_fill(cfg),
        "forecast" => cmd_forecast(cfg),
        "diagnose" => cmd_diagnose(cfg),
        "simulate" => cmd_simulate(cfg),
        _ => cmd_gap_experiment(cfg),
    }?;
    Ok((outcome, allow))
}

/// Machine-readable error document.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn months_with_gaps_are_rejected_with_lines() {
        let text = "time,value\n1960-01,1\n1960-02,2\n1960-04,3\n1960-05,4\n";
        let err = parse_time_table(text, "series").unwrap_err();
        assert!(err.to_string().contains("[4]"), "{err}");
    }

    #[test]
    fn empty_cells_become_missing() {
        let mut text = String::from("time,value\n");
        for i in 0..720 {
            let v = if i % 20 == 3 && i < 700 { String::new() } else { format!("{}", i as f64 * 0.1) };
            text.push_str(&format!("{}-{:02},{}\n", 1960 + i / 12, i % 12 + 1, v));
        }
        let d = ingest(&text, None, false).unwrap();
        assert_eq!(d.series.len(), 720);
        assert_eq!(d.series.len() - d.series.observed_count(), 35);
        assert!((d.series.missing_fraction() * 100.0 - 4.86).abs() < 0.01);
        assert_eq!(d.table.kind, TimeKind::IsoMonth);
    }

    #[test]
    fn periodic_exogenous_deseasonalises_to_zero() {
        let mut series = String::from("time,value\n");
        let mut exog = String::from("time,value\n");
        for i in 0..48 {
            exog.push_str(&format!("{i},{}\n", [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0, 8.0][i % 12]));
        }
        for i in 24..48 {
            series.push_str(&format!("{i},{}\n", i as f64));
        }
        let d = ingest(&series, Some(&exog), true).unwrap();
        let e = d.exog.unwrap();
        assert_eq!(e.lead, 24);
        assert!(e.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exogenous_gaps_are_refused() {
        let exog = "time,value\n1,1\n2,\n3,1\n";
        let series = "time,value\n2,1\n3,2\n";
        let err = ingest(series, Some(exog), false).unwrap_err();
        assert!(err.to_string().contains("[3]"), "{err}");
    }

    #[test]
    fn config_rejects_unknown_keys_and_fills_defaults() {
        assert!(RunConfig::from_json(r#"{"colour": 1}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"seed": 4, "model": {"method": "exact"}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.method, crate::estimate::Method::Exact);
        assert_eq!(cfg.gap.repeats, 250);
        assert_eq!(cfg.gap.plans, GapPlan::STANDARD.to_vec());
    }

    #[test]
    fn month_labels_round_trip() {
        let k = parse_month("1999-12").unwrap();
        assert_eq!(format_time(TimeKind::IsoMonth, k), "1999-12");
        assert_eq!(format_time(TimeKind::IsoMonth, k + 1), "2000-01");
        assert_eq!(parse_month("1999-13"), None);
    }
}
