//! Config schema, benchmark orchestration, and file output for the `ski`
//! command-line tool.
//!
//! Subcommands (wired up in the binary): `run` executes one
//! (scenario, method, seed) cell and writes `trace.csv`, `timing.csv` and
//! `metrics.json`; `benchmark` runs a methods × seeds grid and writes
//! `table1.csv`, `cells.csv` and per-cell outputs; `relevance-report`
//! post-processes a trace into `relevance.csv`; `print-config` echoes the
//! validated config. Exit codes: 0 success, 1 config error, 2 run failure.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::scenarios::{
    run_identification, ArdParams, FilterParams, Method, RunMetrics, Scenario,
};

pub const OUT_DIR_ENV: &str = "SKI_OUT_DIR";
pub const DEFAULT_SINDY_LAMBDA: f64 = 0.1;

/// One run/benchmark configuration, loaded from a JSON file. Unknown keys
/// are rejected; every key is validated before any run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub method: String,
    #[serde(default)]
    pub seed: u64,
    /// Seed grid for `benchmark`; `run` uses `seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Method grid for `benchmark`; defaults to all four.
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub rate_hz: Option<f64>,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub ard: ArdParams,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Anything wrong with the configuration or input files: exit code 1.
    Config(String),
    /// A run failed after a valid configuration: exit code 2.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(msg) => write!(f, "run failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) => 2,
        }
    }
}

/// A validated configuration with every default resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: RunConfig,
    pub scenario: Scenario,
    pub method: Method,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub rate_hz: f64,
}

impl RunConfig {
    pub fn resolve(&self) -> Result<ResolvedConfig, CliError> {
        let scenario = Scenario::paper_preset(&self.scenario).ok_or_else(|| {
            CliError::Config(format!(
                "unknown scenario '{}' (expected wingrock | delay | quadrotor | quad-z)",
                self.scenario
            ))
        })?;
        let method = Method::parse(&self.method).ok_or_else(|| {
            CliError::Config(format!(
                "unknown method '{}' (expected ski | ukf | ekf | sindy)",
                self.method
            ))
        })?;
        let methods = match &self.methods {
            Some(names) => names
                .iter()
                .map(|n| {
                    Method::parse(n)
                        .ok_or_else(|| CliError::Config(format!("unknown method '{n}' in methods")))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![Method::Ski, Method::Ukf, Method::Ekf, Method::Sindy],
        };
        let seeds = match &self.seeds {
            Some(s) if !s.is_empty() => s.clone(),
            Some(_) => return Err(CliError::Config("seeds must not be empty".into())),
            None => (0..10).collect(),
        };
        let duration_s = self.duration_s.unwrap_or_else(|| scenario.default_duration_s());
        let rate_hz = self.rate_hz.unwrap_or_else(|| scenario.default_rate_hz());
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(CliError::Config("duration_s must be positive".into()));
        }
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(CliError::Config("rate_hz must be positive".into()));
        }
        if !(self.filter.alpha > 0.0 && self.filter.alpha <= 1.0) {
            return Err(CliError::Config("filter.alpha must lie in (0, 1]".into()));
        }
        if !(self.filter.p0 > 0.0 && self.filter.s0 > 0.0) {
            return Err(CliError::Config("filter.p0 and filter.s0 must be positive".into()));
        }
        if self.filter.q_scale < 0.0 {
            return Err(CliError::Config("filter.q_scale must be non-negative".into()));
        }
        if let Some(r) = self.filter.r {
            if !(r > 0.0) {
                return Err(CliError::Config("filter.r must be positive when set".into()));
            }
        }
        if !(self.ard.variance_floor > 0.0) {
            return Err(CliError::Config("ard.variance_floor must be positive".into()));
        }
        if !(self.ard.eta_hp >= 0.0) {
            return Err(CliError::Config("ard.eta_hp must be non-negative".into()));
        }
        if !(self.ard.report_threshold > 0.0 && self.ard.report_threshold <= 1.0) {
            return Err(CliError::Config("ard.report_threshold must lie in (0, 1]".into()));
        }
        Ok(ResolvedConfig {
            raw: self.clone(),
            scenario,
            method,
            methods,
            seeds,
            duration_s,
            rate_hz,
        })
    }
}

/// Loads a config file and applies `key=value` overrides (dotted paths for
/// nested keys, e.g. `filter.alpha=0.5`). Values parse as JSON scalars
/// where possible, otherwise as strings.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid JSON in {}: {e}", path.display())))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("invalid config in {}: {e}", path.display())))
}

fn apply_override(value: &mut serde_json::Value, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{item}' is not of the form key=value")))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    for (idx, segment) in segments.iter().enumerate() {
        let map = cursor
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override path '{path}' does not address an object")))?;
        if idx + 1 == segments.len() {
            map.insert(segment.to_string(), parsed);
            return Ok(());
        }
        cursor = map
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Output directory precedence: CLI flag, then config key, then the
/// `SKI_OUT_DIR` environment variable, then the current directory.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Run(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

/// Executes one cell and writes `trace.csv`, `timing.csv`, `metrics.json`.
pub fn cmd_run(
    config: &RunConfig,
    out_dir: &Path,
    sindy_lambda: f64,
) -> Result<RunMetrics, CliError> {
    let resolved = config.resolve()?;
    let (trace, metrics) = run_identification(
        &resolved.scenario,
        resolved.method,
        resolved.raw.seed,
        &resolved.raw.filter,
        &resolved.raw.ard,
        resolved.duration_s,
        resolved.rate_hz,
        sindy_lambda,
    )
    .map_err(|e| match e {
        crate::scenarios::runner::RunError::Unsupported(msg) => CliError::Config(msg),
        other => CliError::Run(other.to_string()),
    })?;

    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(|e| CliError::Run(e.to_string()))?;
    write_file(&out_dir.join("trace.csv"), &buf)?;

    let mut timing = Vec::new();
    trace.write_timing_csv(&mut timing).map_err(|e| CliError::Run(e.to_string()))?;
    write_file(&out_dir.join("timing.csv"), &timing)?;

    let json = serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Run(e.to_string()))?;
    write_file(&out_dir.join("metrics.json"), json.as_bytes())?;
    Ok(metrics)
}

/// One benchmark cell result.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

/// Aggregate of one benchmark: per-cell results plus the per-method medians.
#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub cells: Vec<CellResult>,
    pub table: Vec<TableRow>,
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub method: Method,
    pub mean_l1_error_median: Option<f64>,
    pub per_step_ms_median: Option<f64>,
    pub seeds_succeeded: usize,
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(sorted[sorted.len() / 2])
}

/// Runs the methods × seeds grid. Cells execute independently (optionally on
/// `workers` threads, each cell single-threaded) and failures are recorded
/// per cell rather than aborting the grid.
pub fn run_benchmark_grid(resolved: &ResolvedConfig, sindy_lambda: f64, workers: usize) -> BenchmarkOutcome {
    let mut jobs: VecDeque<(Method, u64)> = VecDeque::new();
    for &method in &resolved.methods {
        for &seed in &resolved.seeds {
            jobs.push_back((method, seed));
        }
    }
    let queue = Mutex::new(jobs);
    let results = Mutex::new(Vec::<CellResult>::new());
    let workers = workers.max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop_front();
                let Some((method, seed)) = job else { break };
                let outcome = run_identification(
                    &resolved.scenario,
                    method,
                    seed,
                    &resolved.raw.filter,
                    &resolved.raw.ard,
                    resolved.duration_s,
                    resolved.rate_hz,
                    sindy_lambda,
                );
                let cell = match outcome {
                    Ok((_, metrics)) => CellResult { method, seed, metrics: Some(metrics), error: None },
                    Err(e) => CellResult { method, seed, metrics: None, error: Some(e.to_string()) },
                };
                results.lock().unwrap().push(cell);
            });
        }
    });

    let mut cells = results.into_inner().unwrap();
    cells.sort_by_key(|c| (c.method.name(), c.seed));

    let table = resolved
        .methods
        .iter()
        .map(|&method| {
            let ok: Vec<&RunMetrics> = cells
                .iter()
                .filter(|c| c.method == method)
                .filter_map(|c| c.metrics.as_ref())
                .collect();
            let errs: Vec<f64> = ok.iter().map(|m| m.mean_l1_error).collect();
            let times: Vec<f64> = ok.iter().map(|m| m.per_step_ms).collect();
            TableRow {
                method,
                mean_l1_error_median: median(&errs),
                per_step_ms_median: median(&times),
                seeds_succeeded: ok.len(),
            }
        })
        .collect();

    BenchmarkOutcome { cells, table }
}

/// Runs the benchmark and writes `table1.csv` plus `cells.csv`.
/// Succeeds (exit 0) as long as every method has at least one successful
/// cell.
pub fn cmd_benchmark(
    config: &RunConfig,
    out_dir: &Path,
    sindy_lambda: f64,
    workers: usize,
) -> Result<BenchmarkOutcome, CliError> {
    let resolved = config.resolve()?;
    let outcome = run_benchmark_grid(&resolved, sindy_lambda, workers);

    let mut table = String::from("method,mean_l1_error_median,per_step_ms_median,seeds\n");
    for row in &outcome.table {
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        table.push_str(&format!(
            "{},{},{},{}\n",
            row.method.name(),
            fmt_opt(row.mean_l1_error_median),
            fmt_opt(row.per_step_ms_median),
            row.seeds_succeeded
        ));
    }
    write_file(&out_dir.join("table1.csv"), table.as_bytes())?;

    let mut cells = String::from("method,seed,mean_l1_error,per_step_ms,failed,error\n");
    for cell in &outcome.cells {
        match (&cell.metrics, &cell.error) {
            (Some(m), _) => cells.push_str(&format!(
                "{},{},{},{},false,\n",
                cell.method.name(),
                cell.seed,
                m.mean_l1_error,
                m.per_step_ms
            )),
            (None, err) => cells.push_str(&format!(
                "{},{},,,true,{}\n",
                cell.method.name(),
                cell.seed,
                err.clone().unwrap_or_default().replace(',', ";")
            )),
        }
    }
    write_file(&out_dir.join("cells.csv"), cells.as_bytes())?;

    let all_methods_alive = outcome.table.iter().all(|row| row.seeds_succeeded > 0);
    if !all_methods_alive {
        return Err(CliError::Run("at least one method failed on every seed".into()));
    }
    Ok(outcome)
}

/// Post-processes a trace CSV into `relevance.csv` rows
/// `(basis, variance, selected)` using the final prior variances and the
/// report threshold.
pub fn cmd_relevance_report(
    trace_path: &Path,
    out_path: &Path,
    report_threshold: f64,
) -> Result<usize, CliError> {
    let text = fs::read_to_string(trace_path)
        .map_err(|e| CliError::Config(format!("cannot read trace {}: {e}", trace_path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("trace is empty".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let var_cols: Vec<(usize, String)> = columns
        .iter()
        .enumerate()
        .filter_map(|(i, name)| {
            name.strip_prefix("prior_var_").map(|basis| (i, basis.to_string()))
        })
        .collect();
    if var_cols.is_empty() {
        return Err(CliError::Config("trace has no prior-variance columns".into()));
    }
    let last_line = lines
        .filter(|l| !l.trim().is_empty())
        .last()
        .ok_or_else(|| CliError::Config("trace has no data rows".into()))?;
    let fields: Vec<&str> = last_line.split(',').collect();
    if fields.len() != columns.len() {
        return Err(CliError::Config("trace row width does not match header".into()));
    }
    let mut variances = Vec::with_capacity(var_cols.len());
    for (idx, basis) in &var_cols {
        let v: f64 = fields[*idx]
            .parse()
            .map_err(|_| CliError::Config(format!("non-numeric variance for basis {basis}")))?;
        variances.push((basis.clone(), v));
    }
    let max = variances.iter().fold(0.0_f64, |a, (_, v)| a.max(*v));
    let mut out = String::from("basis,variance,selected\n");
    let mut selected_count = 0;
    for (basis, v) in &variances {
        let selected = max > 0.0 && *v >= report_threshold * max;
        if selected {
            selected_count += 1;
        }
        out.push_str(&format!("{basis},{v},{selected}\n"));
    }
    write_file(out_path, out.as_bytes())?;
    Ok(selected_count)
}

/// Serializes the validated config back to canonical JSON.
pub fn print_config(config: &RunConfig) -> Result<String, CliError> {
    config.resolve()?;
    serde_json::to_string_pretty(config).map_err(|e| CliError::Config(e.to_string()))
}
