//! Ground-truth simulators, controllers, and metrics for the benchmark
//! scenarios: wing-rock reference tracking, input-delay identification, and
//! quadrotor thrust/drag structure selection (full 3-D spiral and a
//! vertical-axis variant).
//!
//! Scenario runs are pure functions of `(scenario, method, seed, config)`;
//! identical inputs reproduce trajectories and traces bit-for-bit.

pub mod quadrotor;
pub mod runner;
pub mod wingrock;

use std::fmt;

use crate::matkernels::Mat;

pub use runner::{run_identification, ArdParams, FilterParams, RunMetrics, RunTrace};

/// A recorded closed-loop simulation: timestamps, model-input rows, noisy
/// measurements, and the true plant state (kept for oracle checks only; the
/// identification methods never see it).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Mat,
    pub y: Mat,
    pub x_true: Mat,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// The closed loop left the sane envelope (controller mis-tuned).
    Diverged { t: f64, state_norm: f64 },
    BadConfig(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Diverged { t, state_norm } => {
                write!(f, "simulation diverged at t = {t:.2}s (state norm {state_norm:.3e})")
            }
            ScenarioError::BadConfig(msg) => write!(f, "bad scenario config: {msg}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

/// Identification methods the runner can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ski,
    Ukf,
    Ekf,
    Sindy,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ski => "ski",
            Method::Ukf => "ukf",
            Method::Ekf => "ekf",
            Method::Sindy => "sindy",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "ski" => Some(Method::Ski),
            "ukf" => Some(Method::Ukf),
            "ekf" => Some(Method::Ekf),
            "sindy" => Some(Method::Sindy),
            _ => None,
        }
    }
}

/// The benchmark scenarios.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    WingRock(wingrock::WingRockTruth),
    Delay(wingrock::DelayTruth),
    Quadrotor(quadrotor::QuadTruth),
    QuadZ(quadrotor::QuadZTruth),
}

impl Scenario {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Scenario::WingRock(_) => "wingrock",
            Scenario::Delay(_) => "delay",
            Scenario::Quadrotor(_) => "quadrotor",
            Scenario::QuadZ(_) => "quad-z",
        }
    }

    /// The frozen presets used throughout the benchmark tables.
    pub fn paper_preset(kind: &str) -> Option<Scenario> {
        match kind {
            "wingrock" => Some(Scenario::WingRock(wingrock::WingRockTruth::default())),
            "delay" => Some(Scenario::Delay(wingrock::DelayTruth::default())),
            "quadrotor" => Some(Scenario::Quadrotor(quadrotor::QuadTruth::default())),
            "quad-z" => Some(Scenario::QuadZ(quadrotor::QuadZTruth::default())),
            _ => None,
        }
    }

    pub fn default_rate_hz(&self) -> f64 {
        match self {
            Scenario::WingRock(t) => t.rate_hz,
            Scenario::Delay(t) => t.base.rate_hz,
            Scenario::Quadrotor(t) => t.rate_hz,
            Scenario::QuadZ(t) => t.rate_hz,
        }
    }

    pub fn default_duration_s(&self) -> f64 {
        match self {
            Scenario::WingRock(t) => t.duration_s,
            Scenario::Delay(t) => t.base.duration_s,
            Scenario::Quadrotor(t) => t.duration_s,
            Scenario::QuadZ(t) => t.duration_s,
        }
    }

    /// Measurement noise standard deviation of the simulated sensor; the
    /// filter's default `R` is derived from it.
    pub fn sensor_noise_std(&self) -> f64 {
        match self {
            Scenario::WingRock(t) => t.meas_noise_std,
            Scenario::Delay(t) => t.base.meas_noise_std,
            Scenario::Quadrotor(t) => t.meas_noise_std,
            Scenario::QuadZ(t) => t.meas_noise_std,
        }
    }

    pub fn simulate(&self, seed: u64, duration_s: f64, rate_hz: f64) -> Result<Trajectory, ScenarioError> {
        match self {
            Scenario::WingRock(t) => wingrock::simulate_wingrock(t, seed, duration_s, rate_hz),
            Scenario::Delay(t) => wingrock::simulate_delay(t, seed, duration_s, rate_hz),
            Scenario::Quadrotor(t) => quadrotor::simulate_quadrotor(t, seed, duration_s, rate_hz),
            Scenario::QuadZ(t) => quadrotor::simulate_quad_z(t, seed, duration_s, rate_hz),
        }
    }
}

/// Classic fourth-order Runge-Kutta step for the plant simulators. The
/// plants integrate with RK4 while the filters' internal models use explicit
/// Euler; the mismatch is deliberate and mirrors identification against a
/// process that is not the fitted discretization.
pub(crate) fn rk4_step<const N: usize>(
    x: &[f64; N],
    dt: f64,
    deriv: impl Fn(&[f64; N]) -> [f64; N],
) -> [f64; N] {
    let k1 = deriv(x);
    let mut x2 = *x;
    for i in 0..N {
        x2[i] = x[i] + 0.5 * dt * k1[i];
    }
    let k2 = deriv(&x2);
    for i in 0..N {
        x2[i] = x[i] + 0.5 * dt * k2[i];
    }
    let k3 = deriv(&x2);
    for i in 0..N {
        x2[i] = x[i] + dt * k3[i];
    }
    let k4 = deriv(&x2);
    let mut out = *x;
    for i in 0..N {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// PID controller with output clamping, a first-order low-pass on the
/// derivative (the error signal is a noisy measurement), and conditional
/// integration as anti-windup.
#[derive(Debug, Clone)]
pub struct PidController {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub clamp: f64,
    /// Derivative filter time constant, seconds.
    pub tau_d: f64,
    integral: f64,
    deriv_filtered: f64,
    prev_error: Option<f64>,
}

impl PidController {
    pub fn new(kp: f64, ki: f64, kd: f64, clamp: f64) -> Self {
        Self { kp, ki, kd, clamp, tau_d: 0.05, integral: 0.0, deriv_filtered: 0.0, prev_error: None }
    }

    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let raw_deriv = match self.prev_error {
            Some(prev) => (error - prev) / dt,
            None => 0.0,
        };
        self.prev_error = Some(error);
        let blend = dt / (self.tau_d + dt);
        self.deriv_filtered += blend * (raw_deriv - self.deriv_filtered);

        let tentative = self.integral + error * dt;
        let raw = self.kp * error + self.ki * tentative + self.kd * self.deriv_filtered;
        if raw.abs() <= self.clamp {
            self.integral = tentative;
            raw
        } else {
            // saturated: freeze the integral
            let held = self.kp * error + self.ki * self.integral + self.kd * self.deriv_filtered;
            held.clamp(-self.clamp, self.clamp)
        }
    }
}

/// Symmetric square wave reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareWave {
    pub amplitude: f64,
    pub half_period_s: f64,
}

impl SquareWave {
    pub fn eval(&self, t: f64) -> f64 {
        let phase = (t / self.half_period_s).floor() as i64;
        if phase.rem_euclid(2) == 0 {
            self.amplitude
        } else {
            -self.amplitude
        }
    }
}
