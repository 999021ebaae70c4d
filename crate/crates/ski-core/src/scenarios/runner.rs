//! Drives one identification run end to end: simulate the scenario, feed
//! the recorded `(u, y)` pairs tick-by-tick into the selected method, and
//! produce a per-step trace plus summary metrics.
//!
//! Online methods run predict → correct each tick; the sparse-Kalman method
//! additionally runs its hyperparameter descent and posterior refresh after
//! every correction. The batch baseline consumes the whole trace at the end.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use crate::ard::{ard_step, posterior_refresh, ArdEngine, ArdError};
use crate::filters::{ekf_correct, ekf_predict, EkfBelief, FilterError, SrUkf};
use crate::matkernels::Mat;
use crate::model::{belief_blocks, initial_belief, ModelError, ParametricModel};
use crate::scenarios::{quadrotor, wingrock, Method, Scenario, ScenarioError, Trajectory};
use crate::sindy::{numeric_derivative, sparse_regress_standardized, SindyError};

use serde::{Deserialize, Serialize};

/// Filter initialization and noise knobs shared by all scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub alpha: f64,
    pub beta: f64,
    /// Diagonal of the process-noise covariance on the dynamic states.
    pub q_scale: f64,
    /// Measurement-noise variance; `null` derives it from the scenario's
    /// sensor noise.
    pub r: Option<f64>,
    /// Diagonal of the initial state covariance.
    pub p0: f64,
    /// Diagonal of the initial weight-prior covariance.
    pub s0: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { alpha: 1e-3, beta: 2.0, q_scale: 1e-4, r: None, p0: 1.0, s0: 10.0 }
    }
}

impl FilterParams {
    /// Frozen per-scenario filter settings behind the benchmark tables.
    pub fn paper_preset(kind: &str) -> Option<FilterParams> {
        match kind {
            "wingrock" => Some(FilterParams { alpha: 0.3, s0: 5.0, ..FilterParams::default() }),
            "delay" => Some(FilterParams { alpha: 0.3, s0: 5.0, ..FilterParams::default() }),
            "quadrotor" => Some(FilterParams { alpha: 0.1, s0: 1.0, ..FilterParams::default() }),
            "quad-z" => Some(FilterParams { alpha: 0.1, s0: 1.0, ..FilterParams::default() }),
            _ => None,
        }
    }
}

/// Relevance-learning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArdParams {
    pub eta_hp: f64,
    pub n_hp: usize,
    pub variance_floor: f64,
    /// A basis counts as selected while its prior variance stays above
    /// `report_threshold × max variance`; reporting only, nothing is removed.
    pub report_threshold: f64,
}

impl Default for ArdParams {
    fn default() -> Self {
        Self { eta_hp: 1e-2, n_hp: 5, variance_floor: 1e-8, report_threshold: 1e-4 }
    }
}

impl ArdParams {
    /// Frozen per-scenario relevance-learning settings.
    pub fn paper_preset(kind: &str) -> Option<ArdParams> {
        match kind {
            "wingrock" | "delay" | "quadrotor" | "quad-z" => {
                Some(ArdParams { eta_hp: 0.1, n_hp: 5, ..ArdParams::default() })
            }
            _ => None,
        }
    }
}

/// Summary metrics of one run, persisted as `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_l1_error: f64,
    #[serde(rename = "l1_relative_error_L")]
    pub l1_relative_error_l: Option<f64>,
    pub per_step_ms: f64,
    pub selected_basis: Vec<usize>,
    pub failed: bool,
}

/// Per-step record of estimates, confidence half-widths (1.96σ), prior
/// variances, and wall-clock cost.
///
/// `write_csv` emits only the deterministic columns so identical
/// `(config, seed)` runs produce byte-identical files; the measured
/// per-step timings go to a separate stream via `write_timing_csv`.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub t: Vec<f64>,
    pub y: Mat,
    pub u: Mat,
    pub estimates: Mat,
    pub ci95: Mat,
    pub prior_var: Mat,
    pub step_ms: Vec<f64>,
    pub basis_names: Vec<String>,
}

impl RunTrace {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        write!(w, "t")?;
        for j in 0..self.y.cols() {
            write!(w, ",y{j}")?;
        }
        for j in 0..self.u.cols() {
            write!(w, ",u{j}")?;
        }
        for name in &self.basis_names {
            write!(w, ",est_{name}")?;
        }
        for name in &self.basis_names {
            write!(w, ",ci_{name}")?;
        }
        for name in &self.basis_names {
            write!(w, ",prior_var_{name}")?;
        }
        writeln!(w)?;
        for i in 0..self.t.len() {
            write!(w, "{}", self.t[i])?;
            for j in 0..self.y.cols() {
                write!(w, ",{}", self.y[(i, j)])?;
            }
            for j in 0..self.u.cols() {
                write!(w, ",{}", self.u[(i, j)])?;
            }
            for j in 0..self.estimates.cols() {
                write!(w, ",{}", self.estimates[(i, j)])?;
            }
            for j in 0..self.ci95.cols() {
                write!(w, ",{}", self.ci95[(i, j)])?;
            }
            for j in 0..self.prior_var.cols() {
                write!(w, ",{}", self.prior_var[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,step_ms")?;
        for i in 0..self.t.len() {
            writeln!(w, "{},{}", self.t[i], self.step_ms[i])?;
        }
        Ok(())
    }

    /// Final prior variance per basis, for relevance reports.
    pub fn final_relevances(&self) -> Vec<f64> {
        let last = self.t.len() - 1;
        (0..self.prior_var.cols()).map(|j| self.prior_var[(last, j)]).collect()
    }

    pub fn final_estimates(&self) -> Vec<f64> {
        let last = self.t.len() - 1;
        (0..self.estimates.cols()).map(|j| self.estimates[(last, j)]).collect()
    }
}

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    Filter(FilterError),
    Ard(ArdError),
    Sindy(SindyError),
    Model(ModelError),
    Unsupported(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "scenario error: {e}"),
            RunError::Filter(e) => write!(f, "filter error: {e}"),
            RunError::Ard(e) => write!(f, "relevance-update error: {e}"),
            RunError::Sindy(e) => write!(f, "sparse-regression error: {e}"),
            RunError::Model(e) => write!(f, "model error: {e}"),
            RunError::Unsupported(msg) => write!(f, "unsupported combination: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        RunError::Scenario(e)
    }
}
impl From<FilterError> for RunError {
    fn from(e: FilterError) -> Self {
        RunError::Filter(e)
    }
}
impl From<ArdError> for RunError {
    fn from(e: ArdError) -> Self {
        RunError::Ard(e)
    }
}
impl From<SindyError> for RunError {
    fn from(e: SindyError) -> Self {
        RunError::Sindy(e)
    }
}
impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        RunError::Model(e)
    }
}

/// Identification problem derived from a scenario and a recorded trajectory.
struct Ident {
    model: ParametricModel,
    theta_true: Vec<f64>,
    mu0: Vec<f64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(1e-6))
}

fn build_ident(
    scenario: &Scenario,
    traj: &Trajectory,
    fp: &FilterParams,
    rate_hz: f64,
) -> Result<Ident, RunError> {
    let dt = 1.0 / rate_hz;
    let r_var = fp.r.unwrap_or_else(|| scenario.sensor_noise_std().powi(2).max(1e-10));
    match scenario {
        Scenario::WingRock(truth) => {
            let model = wingrock::wingrock_model(truth, dt, fp.q_scale, r_var)?;
            Ok(Ident {
                model,
                theta_true: truth.weights.to_vec(),
                mu0: vec![traj.y[(0, 0)], 0.0],
            })
        }
        Scenario::Delay(truth) => {
            let model = wingrock::delay_model(truth, dt, fp.q_scale, r_var)?;
            Ok(Ident {
                model,
                theta_true: truth.l_bar(),
                mu0: vec![traj.y[(0, 0)], 0.0],
            })
        }
        Scenario::Quadrotor(truth) => {
            let (pwm_mean, pwm_std) = mean_std((0..traj.len()).map(|i| traj.u[(i, 0)]));
            let model = quadrotor::quad_model(truth, pwm_mean, pwm_std, dt, fp.q_scale, r_var)?;
            Ok(Ident {
                model,
                theta_true: truth.true_theta(pwm_mean, pwm_std),
                mu0: vec![traj.y[(0, 0)], traj.y[(0, 1)], traj.y[(0, 2)], 0.0, 0.0, 0.0],
            })
        }
        Scenario::QuadZ(truth) => {
            let model = quadrotor::quad_z_model(truth, dt, fp.q_scale, r_var)?;
            Ok(Ident {
                model,
                theta_true: truth.true_theta(),
                mu0: vec![traj.y[(0, 0)], 0.0],
            })
        }
    }
}

fn selected_by_threshold(values: &[f64], threshold: f64) -> Vec<usize> {
    let max = values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    if max <= 0.0 {
        return Vec::new();
    }
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v.abs() >= threshold * max)
        .map(|(i, _)| i)
        .collect()
}

fn compute_metrics(
    scenario: &Scenario,
    theta_true: &[f64],
    estimates: &[f64],
    relevance_values: &[f64],
    threshold: f64,
    per_step_ms: f64,
) -> RunMetrics {
    let d = theta_true.len();
    let mean_l1 =
        theta_true.iter().zip(estimates.iter()).map(|(t, e)| (t - e).abs()).sum::<f64>() / d as f64;
    let l1_rel = match scenario {
        Scenario::Delay(_) => {
            let denom: f64 = theta_true.iter().map(|t| t.abs()).sum();
            let num: f64 = theta_true.iter().zip(estimates.iter()).map(|(t, e)| (t - e).abs()).sum();
            Some(num / denom)
        }
        _ => None,
    };
    RunMetrics {
        mean_l1_error: mean_l1,
        l1_relative_error_l: l1_rel,
        per_step_ms,
        selected_basis: selected_by_threshold(relevance_values, threshold),
        failed: false,
    }
}

/// Average per-tick wall-clock cost over steady-state ticks (the first ten
/// are excluded as warm-up).
fn steady_state_mean_ms(step_ms: &[f64]) -> f64 {
    let skip = 10.min(step_ms.len().saturating_sub(1));
    let tail = &step_ms[skip..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Runs one `(scenario, method, seed)` cell and returns the per-step trace
/// and summary metrics. `sindy_lambda` only affects the batch baseline.
#[allow(clippy::too_many_arguments)]
pub fn run_identification(
    scenario: &Scenario,
    method: Method,
    seed: u64,
    fp: &FilterParams,
    ap: &ArdParams,
    duration_s: f64,
    rate_hz: f64,
    sindy_lambda: f64,
) -> Result<(RunTrace, RunMetrics), RunError> {
    let traj = scenario.simulate(seed, duration_s, rate_hz)?;
    let ident = build_ident(scenario, &traj, fp, rate_hz)?;
    match method {
        Method::Ski | Method::Ukf | Method::Ekf => {
            online_run(scenario, method, &traj, &ident, fp, ap)
        }
        Method::Sindy => batch_run(scenario, &traj, &ident, ap, sindy_lambda),
    }
}

fn online_run(
    scenario: &Scenario,
    method: Method,
    traj: &Trajectory,
    ident: &Ident,
    fp: &FilterParams,
    ap: &ArdParams,
) -> Result<(RunTrace, RunMetrics), RunError> {
    let model = &ident.model;
    let dims = model.dims;
    let d_t = dims.d_theta;
    let n = traj.len();

    let p0 = Mat::identity(dims.d_x).scaled(fp.p0);
    let s0 = vec![fp.s0; d_t];
    let m0 = vec![0.0; d_t];
    let belief0 = initial_belief(&ident.mu0, &p0, &m0, &s0)?;

    let mut engine = match method {
        Method::Ski => Some(ArdEngine::new(&s0, ap.eta_hp, ap.n_hp, ap.variance_floor).map_err(RunError::Ard)?),
        _ => None,
    };

    let mut estimates = Mat::zeros(n, d_t);
    let mut ci95 = Mat::zeros(n, d_t);
    let mut prior_var = Mat::zeros(n, d_t);
    let mut step_ms = vec![0.0; n];

    let record = |row: usize,
                      m: &[f64],
                      s_diag: &[f64],
                      relevances: &[f64],
                      est: &mut Mat,
                      ci: &mut Mat,
                      pv: &mut Mat| {
        for j in 0..d_t {
            est[(row, j)] = m[j];
            ci[(row, j)] = 1.96 * s_diag[j].max(0.0).sqrt();
            pv[(row, j)] = relevances[j];
        }
    };

    let relevances0: Vec<f64> = match &engine {
        Some(e) => e.relevances().to_vec(),
        None => s0.clone(),
    };
    record(0, &m0, &s0, &relevances0, &mut estimates, &mut ci95, &mut prior_var);

    match method {
        Method::Ski | Method::Ukf => {
            let mut filter = SrUkf::new(model, belief0, fp.alpha, fp.beta)?;
            for i in 1..n {
                let started = Instant::now();
                filter.predict(model, traj.u.row_slice(i - 1))?;
                filter.correct(model, traj.y.row_slice(i))?;
                if let Some(engine) = engine.as_mut() {
                    let blocks = belief_blocks(&filter.belief, &dims);
                    ard_step(engine, &blocks.m, &blocks.s).map_err(RunError::Ard)?;
                    let refreshed = posterior_refresh(
                        &filter.belief,
                        &dims,
                        engine.prior_old(),
                        engine.relevances(),
                    )
                    .map_err(RunError::Ard)?;
                    filter.belief = refreshed.belief;
                    engine.commit_prior();
                }
                step_ms[i] = started.elapsed().as_secs_f64() * 1e3;

                let blocks = belief_blocks(&filter.belief, &dims);
                let relevances: Vec<f64> = match &engine {
                    Some(e) => e.relevances().to_vec(),
                    None => s0.clone(),
                };
                record(i, &blocks.m, &blocks.s.diag(), &relevances, &mut estimates, &mut ci95, &mut prior_var);
            }
        }
        Method::Ekf => {
            let mut belief = EkfBelief::from_belief(&belief0);
            for i in 1..n {
                let started = Instant::now();
                belief = ekf_predict(&belief, traj.u.row_slice(i - 1), model)?;
                belief = ekf_correct(&belief, traj.y.row_slice(i), model)?;
                step_ms[i] = started.elapsed().as_secs_f64() * 1e3;

                let blocks = belief.blocks(&dims);
                record(i, &blocks.m, &blocks.s.diag(), &s0, &mut estimates, &mut ci95, &mut prior_var);
            }
        }
        Method::Sindy => unreachable!("batch method handled separately"),
    }

    let trace = RunTrace {
        t: traj.t.clone(),
        y: traj.y.clone(),
        u: traj.u.clone(),
        estimates,
        ci95,
        prior_var,
        step_ms: step_ms.clone(),
        basis_names: model.basis.names().to_vec(),
    };
    let per_step = steady_state_mean_ms(&step_ms);
    let relevances = trace.final_relevances();
    let metrics = compute_metrics(
        scenario,
        &ident.theta_true,
        &trace.final_estimates(),
        &relevances,
        ap.report_threshold,
        per_step,
    );
    Ok((trace, metrics))
}

/// Batch baseline. Only the wing-rock tracking scenario exposes the fully
/// observed single-channel structure it needs: the measured roll angle is
/// differentiated twice, the known input effect is subtracted, and the
/// remaining rate-derivative residual is regressed on the basis library.
fn batch_run(
    scenario: &Scenario,
    traj: &Trajectory,
    ident: &Ident,
    ap: &ArdParams,
    sindy_lambda: f64,
) -> Result<(RunTrace, RunMetrics), RunError> {
    let truth = match scenario {
        Scenario::WingRock(t) => t,
        other => {
            return Err(RunError::Unsupported(format!(
                "the batch baseline supports only the wingrock scenario, got {}",
                other.kind_name()
            )))
        }
    };
    let n = traj.len();
    let dt = traj.t[1] - traj.t[0];
    let started = Instant::now();

    let roll_meas = Mat::from_fn(n, 1, |i, _| traj.y[(i, 0)]);
    let rate_est = numeric_derivative(&roll_meas, dt)?;
    let rate_dot = numeric_derivative(&rate_est, dt)?;

    let mut psi = Mat::zeros(n, 6);
    let mut target = vec![0.0; n];
    for i in 0..n {
        let phi = wingrock::wingrock_basis(roll_meas[(i, 0)], rate_est[(i, 0)]);
        for j in 0..6 {
            psi[(i, j)] = phi[j];
        }
        target[i] = rate_dot[(i, 0)] - truth.l_gain * traj.u[(i, 0)];
    }
    let fit = sparse_regress_standardized(&psi, &target, sindy_lambda)?;
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let per_step = total_ms / (n.max(2) - 1) as f64;

    let d_t = ident.theta_true.len();
    let estimates = Mat::from_fn(n, d_t, |_, j| fit.coef[j]);
    let trace = RunTrace {
        t: traj.t.clone(),
        y: traj.y.clone(),
        u: traj.u.clone(),
        estimates,
        ci95: Mat::zeros(n, d_t),
        prior_var: Mat::zeros(n, d_t),
        step_ms: vec![per_step; n],
        basis_names: ident.model.basis.names().to_vec(),
    };
    let metrics = compute_metrics(
        scenario,
        &ident.theta_true,
        &fit.coef,
        &fit.coef,
        ap.report_threshold,
        per_step,
    );
    Ok((trace, metrics))
}
