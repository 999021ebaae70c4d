//! Wing-rock roll dynamics: the two-state nonlinear benchmark with a
//! six-term polynomial uncertainty, plus the input-delay variant where the
//! control effectiveness is spread over a window of past inputs and exactly
//! one delay tap is active.
//!
//! States are the roll angle (degrees) and roll rate (deg/s). The
//! continuous dynamics are
//!
//! ```text
//! roll' = rate
//! rate' = L·aileron + Δ(roll, rate),   Δ = Φ(roll, rate)·w
//! Φ = [1, roll, rate, |roll|·rate, |rate|·rate, roll³]
//! ```
//!
//! Only the roll angle is measured, corrupted by Gaussian noise.

use crate::matkernels::Mat;
use crate::model::{BasisLibrary, Dims, ModelError, ParametricModel};
use crate::rng::Rng;
use crate::scenarios::{rk4_step, PidController, ScenarioError, SquareWave, Trajectory};

pub const WINGROCK_BASIS_NAMES: [&str; 6] = ["1", "roll", "rate", "|roll|*rate", "|rate|*rate", "roll^3"];

/// Evaluates the six wing-rock basis functions at a state.
pub fn wingrock_basis(roll: f64, rate: f64) -> [f64; 6] {
    [
        1.0,
        roll,
        rate,
        roll.abs() * rate,
        rate.abs() * rate,
        roll * roll * roll,
    ]
}

/// Ground truth for the wing-rock tracking experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct WingRockTruth {
    /// Input gain, deg/s² per deg of aileron.
    pub l_gain: f64,
    /// True weights of the six uncertainty basis functions.
    pub weights: [f64; 6],
    /// Roll-angle sensor noise, degrees.
    pub meas_noise_std: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    /// Roll-loop PID gains and actuator clamp (degrees of aileron).
    pub pid: (f64, f64, f64, f64),
    /// Square-wave roll reference.
    pub reference: SquareWave,
}

impl Default for WingRockTruth {
    fn default() -> Self {
        Self {
            l_gain: 3.0,
            weights: [0.8, 0.2314, 0.6918, -0.6245, 0.0095, 0.0214],
            meas_noise_std: 0.1,
            rate_hz: 50.0,
            duration_s: 15.0,
            pid: (6.0, 1.0, 2.0, 25.0),
            reference: SquareWave { amplitude: 10.0, half_period_s: 2.5 },
        }
    }
}

impl WingRockTruth {
    pub fn uncertainty(&self, roll: f64, rate: f64) -> f64 {
        let phi = wingrock_basis(roll, rate);
        phi.iter().zip(self.weights.iter()).map(|(p, w)| p * w).sum()
    }
}

/// Identification model for the tracking experiment: `L` is known, the six
/// uncertainty weights are estimated. Discretized by explicit Euler at `dt`.
pub fn wingrock_model(
    truth: &WingRockTruth,
    dt: f64,
    q_diag: f64,
    r_var: f64,
) -> Result<ParametricModel, ModelError> {
    let dims = Dims::new(2, 1, 1, 6, 1)?;
    let basis = BasisLibrary::scalar(
        WINGROCK_BASIS_NAMES.iter().map(|s| s.to_string()).collect(),
        |x, _u| wingrock_basis(x[0], x[1]).to_vec(),
    );
    let l_gain = truth.l_gain;
    ParametricModel::new(
        dims,
        basis,
        move |x, u, f| vec![x[0] + dt * x[1], x[1] + dt * (l_gain * u[0] + f[0])],
        |x| vec![x[0]],
        dt,
        Mat::from_diag(&[q_diag, q_diag]),
        Mat::from_diag(&[r_var]),
    )
}

/// Simulates the closed-loop tracking experiment. The plant integrates with
/// RK4 under zero-order-hold control; the PID acts on the *measured* roll
/// angle, so measurement noise feeds back into the input.
pub fn simulate_wingrock(
    truth: &WingRockTruth,
    seed: u64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Trajectory, ScenarioError> {
    let dt = 1.0 / rate_hz;
    let n = (duration_s * rate_hz).round() as usize + 1;
    let mut rng = Rng::new(seed);
    let (kp, ki, kd, clamp) = truth.pid;
    let mut pid = PidController::new(kp, ki, kd, clamp);

    let mut t_col = Vec::with_capacity(n);
    let mut u_mat = Mat::zeros(n, 1);
    let mut y_mat = Mat::zeros(n, 1);
    let mut x_mat = Mat::zeros(n, 2);

    let mut x = [0.0_f64, 0.0];
    for i in 0..n {
        let t = i as f64 * dt;
        if x[0].abs() > 1e4 {
            return Err(ScenarioError::Diverged { t, state_norm: x[0].abs() });
        }
        let y = x[0] + truth.meas_noise_std * rng.normal();
        let reference = truth.reference.eval(t);
        let aileron = pid.step(reference - y, dt);

        t_col.push(t);
        u_mat[(i, 0)] = aileron;
        y_mat[(i, 0)] = y;
        x_mat[(i, 0)] = x[0];
        x_mat[(i, 1)] = x[1];

        if i + 1 < n {
            x = rk4_step(&x, dt, |s| [s[1], truth.l_gain * aileron + truth.uncertainty(s[0], s[1])]);
        }
    }
    Ok(Trajectory { t: t_col, u: u_mat, y: y_mat, x_true: x_mat })
}

/// Ground truth for the input-delay identification experiment. The control
/// effectiveness is modelled as a weighted sum over a window of past inputs;
/// in truth exactly one tap (the physical delay) carries the full gain, and
/// the uncertainty term is known.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTruth {
    /// Window length `D`: candidate delays 0..D-1 steps.
    pub window: usize,
    /// Physical input delay in steps.
    pub true_delay_steps: usize,
    /// Gain on the delayed input.
    pub l_gain: f64,
    pub base: WingRockTruth,
    /// Std of the white excitation added to the PID output; delay taps are
    /// indistinguishable without input content that decorrelates within one
    /// sample.
    pub dither_std: f64,
}

impl Default for DelayTruth {
    fn default() -> Self {
        // regulation mode: a zero reference with damping-heavy gains keeps
        // the smooth feedback component of the input small, so the white
        // dither dominates and neighbouring delay taps decorrelate within
        // one sample — the separability the tap regression lives on
        Self {
            window: 8,
            true_delay_steps: 6,
            l_gain: 3.0,
            base: WingRockTruth {
                pid: (0.8, 0.0, 1.0, 25.0),
                reference: SquareWave { amplitude: 0.0, half_period_s: 2.5 },
                duration_s: 30.0,
                ..WingRockTruth::default()
            },
            dither_std: 10.0,
        }
    }
}

impl DelayTruth {
    /// The candidate-gain vector, indexed by physical delay in steps.
    pub fn l_bar(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.window];
        v[self.true_delay_steps] = self.l_gain;
        v
    }

    pub fn basis_names(&self) -> Vec<String> {
        (0..self.window).map(|j| format!("delay{j}")).collect()
    }
}

/// Identification model for the delay experiment: the input row is the
/// window of current and past aileron commands, each tap is one candidate
/// basis function, and the uncertainty `Δ` is known.
///
/// The discrete step is the exact zero-order-hold solution of the double
/// integrator under constant forcing (note the `dt²/2` term on the angle).
/// Plain Euler would smear each input's effect on the measured angle by
/// half a tick, which aliases into the neighbouring delay taps — exactly
/// the ambiguity this experiment must resolve.
pub fn delay_model(
    truth: &DelayTruth,
    dt: f64,
    q_diag: f64,
    r_var: f64,
) -> Result<ParametricModel, ModelError> {
    let window = truth.window;
    let dims = Dims::new(2, window, 1, window, 1)?;
    let basis = BasisLibrary::scalar(truth.basis_names(), move |_x, u| u.to_vec());
    let base = truth.base.clone();
    ParametricModel::new(
        dims,
        basis,
        move |x, _u, f| {
            let accel = f[0] + base.uncertainty(x[0], x[1]);
            vec![
                x[0] + dt * x[1] + 0.5 * dt * dt * accel,
                x[1] + dt * accel,
            ]
        },
        |x| vec![x[0]],
        dt,
        Mat::from_diag(&[q_diag, q_diag]),
        Mat::from_diag(&[r_var]),
    )
}

/// Simulates the delay experiment: commands take effect `true_delay_steps`
/// ticks after they are issued, and the recorded input row is the full
/// window `[d_t, d_{t-1}, …]` the identification model regresses on.
pub fn simulate_delay(
    truth: &DelayTruth,
    seed: u64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Trajectory, ScenarioError> {
    if truth.window == 0 || truth.true_delay_steps >= truth.window {
        return Err(ScenarioError::BadConfig(
            "delay window must cover the true delay".into(),
        ));
    }
    let dt = 1.0 / rate_hz;
    let n = (duration_s * rate_hz).round() as usize + 1;
    let mut rng = Rng::new(seed);
    let base = &truth.base;
    let (kp, ki, kd, clamp) = base.pid;
    let mut pid = PidController::new(kp, ki, kd, clamp);

    let mut t_col = Vec::with_capacity(n);
    let mut u_mat = Mat::zeros(n, truth.window);
    let mut y_mat = Mat::zeros(n, 1);
    let mut x_mat = Mat::zeros(n, 2);

    // history[j] = command issued j ticks ago
    let mut history = vec![0.0_f64; truth.window];
    let mut x = [0.0_f64, 0.0];
    for i in 0..n {
        let t = i as f64 * dt;
        if x[0].abs() > 1e4 {
            return Err(ScenarioError::Diverged { t, state_norm: x[0].abs() });
        }
        let y = x[0] + base.meas_noise_std * rng.normal();
        let reference = base.reference.eval(t);
        let command = (pid.step(reference - y, dt) + truth.dither_std * rng.normal())
            .clamp(-clamp, clamp);

        history.rotate_right(1);
        history[0] = command;

        t_col.push(t);
        for j in 0..truth.window {
            u_mat[(i, j)] = history[j];
        }
        y_mat[(i, 0)] = y;
        x_mat[(i, 0)] = x[0];
        x_mat[(i, 1)] = x[1];

        if i + 1 < n {
            let applied = history[truth.true_delay_steps];
            x = rk4_step(&x, dt, |s| {
                [s[1], truth.l_gain * applied + base.uncertainty(s[0], s[1])]
            });
        }
    }
    Ok(Trajectory { t: t_col, u: u_mat, y: y_mat, x_true: x_mat })
}
