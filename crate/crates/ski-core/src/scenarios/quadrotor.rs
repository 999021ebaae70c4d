//! Quadrotor point-mass simulation for thrust/drag structure selection.
//!
//! The plant is a 3-D point mass: position/velocity states, thrust along the
//! body z-axis rotated into the world frame by the commanded attitude
//! quaternion, speed-proportional drag opposing the velocity, and gravity.
//! The true thrust map is linear in the motor command and the true drag is
//! linear in speed, so out of the eight candidate basis functions
//! `[1, pwm, pwm², …, pwm⁵, |v|, |v|²]` only the constant, linear-pwm and
//! linear-drag terms are materially active.
//!
//! A geometric tracking controller flies an outward spiral (linearly growing
//! radius, constant period) for persistent excitation of all three axes; a
//! reduced vertical-axis variant tracks a sinusoid with a pure-linear thrust
//! map and no drag.

use crate::matkernels::Mat;
use crate::model::{BasisLibrary, Dims, ModelError, ParametricModel};
use crate::rng::Rng;
use crate::scenarios::{rk4_step, ScenarioError, Trajectory};

pub const QUAD_BASIS_NAMES: [&str; 8] =
    ["1", "pwm", "pwm^2", "pwm^3", "pwm^4", "pwm^5", "|v|", "|v|^2"];

pub const QUAD_Z_BASIS_NAMES: [&str; 6] = ["1", "pwm", "pwm^2", "pwm^3", "pwm^4", "pwm^5"];

/// Rotation matrix (body to world) of a unit quaternion `[w, x, y, z]`.
pub fn quat_to_rot(q: &[f64]) -> Mat {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Mat::from_rows(&[
        vec![1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        vec![2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        vec![2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Body z-axis in the world frame, i.e. the third column of `R(q)`.
pub fn quat_body_z(q: &[f64]) -> [f64; 3] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)]
}

/// Minimal-rotation unit quaternion taking the world z-axis onto `dir`
/// (which must be a unit vector with positive z for a hovering vehicle).
pub fn quat_from_z_to(dir: [f64; 3]) -> [f64; 4] {
    let c = dir[2].clamp(-1.0, 1.0); // cos(angle) = e3 · dir
    if c > 1.0 - 1e-12 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    // axis = e3 × dir = [-dir_y, dir_x, 0]
    let axis = [-dir[1], dir[0], 0.0];
    let axis_norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
    let half = (c.acos()) * 0.5;
    let s = half.sin() / axis_norm;
    [half.cos(), axis[0] * s, axis[1] * s, 0.0]
}

/// Spiral reference with linearly growing radius and constant period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralRef {
    pub r0: f64,
    pub r_rate: f64,
    pub omega: f64,
    pub z0: f64,
    pub climb_rate: f64,
}

impl SpiralRef {
    pub fn pos(&self, t: f64) -> [f64; 3] {
        let r = self.r0 + self.r_rate * t;
        let a = self.omega * t;
        [r * a.cos(), r * a.sin(), self.z0 + self.climb_rate * t]
    }

    pub fn vel(&self, t: f64) -> [f64; 3] {
        let r = self.r0 + self.r_rate * t;
        let a = self.omega * t;
        [
            self.r_rate * a.cos() - r * self.omega * a.sin(),
            self.r_rate * a.sin() + r * self.omega * a.cos(),
            self.climb_rate,
        ]
    }

    pub fn acc(&self, t: f64) -> [f64; 3] {
        let r = self.r0 + self.r_rate * t;
        let a = self.omega * t;
        let w = self.omega;
        [
            -2.0 * self.r_rate * w * a.sin() - r * w * w * a.cos(),
            2.0 * self.r_rate * w * a.cos() - r * w * w * a.sin(),
            0.0,
        ]
    }
}

/// Ground truth for the 3-D spiral experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTruth {
    /// True thrust map: acceleration = k0 + k1 · pwm (pwm normalized to [0, 1]).
    pub thrust_k0: f64,
    pub thrust_k1: f64,
    /// Linear and quadratic drag coefficients; the quadratic one is inactive.
    pub drag_d1: f64,
    pub drag_d2: f64,
    pub gravity: f64,
    /// Position sensor noise, meters.
    pub meas_noise_std: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub spiral: SpiralRef,
    /// Tracking gains of the geometric controller.
    pub kp: f64,
    pub kd: f64,
    pub pwm_min: f64,
    pub pwm_max: f64,
}

impl Default for QuadTruth {
    fn default() -> Self {
        Self {
            thrust_k0: 2.0,
            thrust_k1: 16.0,
            drag_d1: 0.35,
            drag_d2: 0.0,
            gravity: 9.81,
            meas_noise_std: 0.02,
            rate_hz: 50.0,
            duration_s: 60.0,
            spiral: SpiralRef { r0: 0.5, r_rate: 0.12, omega: std::f64::consts::TAU / 8.0, z0: 1.0, climb_rate: 0.15 },
            kp: 4.0,
            kd: 3.0,
            pwm_min: 0.05,
            pwm_max: 0.98,
        }
    }
}

impl QuadTruth {
    /// True weights expressed in the standardized-pwm basis the
    /// identification model uses.
    pub fn true_theta(&self, pwm_mean: f64, pwm_std: f64) -> Vec<f64> {
        vec![
            self.thrust_k0 + self.thrust_k1 * pwm_mean,
            self.thrust_k1 * pwm_std,
            0.0,
            0.0,
            0.0,
            0.0,
            self.drag_d1,
            self.drag_d2,
        ]
    }
}

fn drag_accel(d1: f64, d2: f64, v: &[f64]) -> [f64; 3] {
    let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let c = d1 + d2 * speed;
    [-c * v[0], -c * v[1], -c * v[2]]
}

/// Simulates the spiral flight. The geometric controller computes the
/// required specific force from the reference, points the body z-axis along
/// it and inverts the true thrust map for the motor command; it sees the
/// true state (controller internals are plumbing, not part of the
/// identification problem).
pub fn simulate_quadrotor(
    truth: &QuadTruth,
    seed: u64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Trajectory, ScenarioError> {
    let dt = 1.0 / rate_hz;
    let n = (duration_s * rate_hz).round() as usize + 1;
    let mut rng = Rng::new(seed);

    let mut t_col = Vec::with_capacity(n);
    let mut u_mat = Mat::zeros(n, 5);
    let mut y_mat = Mat::zeros(n, 3);
    let mut x_mat = Mat::zeros(n, 6);

    let p0 = truth.spiral.pos(0.0);
    let v0 = truth.spiral.vel(0.0);
    let mut state = [p0[0], p0[1], p0[2], v0[0], v0[1], v0[2]];

    for i in 0..n {
        let t = i as f64 * dt;
        let norm = state.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e4 {
            return Err(ScenarioError::Diverged { t, state_norm: norm });
        }

        let p_ref = truth.spiral.pos(t);
        let v_ref = truth.spiral.vel(t);
        let a_ref = truth.spiral.acc(t);
        // required specific force = desired accel + g·e3
        let mut f_cmd = [0.0; 3];
        for k in 0..3 {
            f_cmd[k] = a_ref[k]
                + truth.kp * (p_ref[k] - state[k])
                + truth.kd * (v_ref[k] - state[3 + k]);
        }
        f_cmd[2] += truth.gravity;
        let f_norm = (f_cmd[0] * f_cmd[0] + f_cmd[1] * f_cmd[1] + f_cmd[2] * f_cmd[2])
            .sqrt()
            .max(1e-6);
        let dir = [f_cmd[0] / f_norm, f_cmd[1] / f_norm, f_cmd[2] / f_norm];
        let q = quat_from_z_to(dir);
        let pwm = ((f_norm - truth.thrust_k0) / truth.thrust_k1).clamp(truth.pwm_min, truth.pwm_max);

        t_col.push(t);
        u_mat[(i, 0)] = pwm;
        for k in 0..4 {
            u_mat[(i, 1 + k)] = q[k];
        }
        for k in 0..3 {
            y_mat[(i, k)] = state[k] + truth.meas_noise_std * rng.normal();
        }
        for k in 0..6 {
            x_mat[(i, k)] = state[k];
        }

        if i + 1 < n {
            let body_z = quat_body_z(&q);
            let thrust = truth.thrust_k0 + truth.thrust_k1 * pwm;
            state = rk4_step(&state, dt, |s| {
                let v = [s[3], s[4], s[5]];
                let drag = drag_accel(truth.drag_d1, truth.drag_d2, &v);
                [
                    v[0],
                    v[1],
                    v[2],
                    thrust * body_z[0] + drag[0],
                    thrust * body_z[1] + drag[1],
                    thrust * body_z[2] + drag[2] - truth.gravity,
                ]
            });
        }
    }
    Ok(Trajectory { t: t_col, u: u_mat, y: y_mat, x_true: x_mat })
}

/// Identification model for the spiral experiment. The basis columns are
/// attitude-rotated thrust directions scaled by powers of the standardized
/// pwm, plus velocity-opposed drag fields; only position is observed.
pub fn quad_model(
    truth: &QuadTruth,
    pwm_mean: f64,
    pwm_std: f64,
    dt: f64,
    q_diag: f64,
    r_var: f64,
) -> Result<ParametricModel, ModelError> {
    let dims = Dims::new(6, 5, 3, 8, 3)?;
    let basis = BasisLibrary::new(
        QUAD_BASIS_NAMES.iter().map(|s| s.to_string()).collect(),
        3,
        move |x, u| {
            let pwm_s = (u[0] - pwm_mean) / pwm_std;
            let body_z = quat_body_z(&u[1..5]);
            let v = [x[3], x[4], x[5]];
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let mut m = Mat::zeros(3, 8);
            let mut pw = 1.0;
            for j in 0..6 {
                for k in 0..3 {
                    m[(k, j)] = body_z[k] * pw;
                }
                pw *= pwm_s;
            }
            for k in 0..3 {
                m[(k, 6)] = -v[k];
                m[(k, 7)] = -speed * v[k];
            }
            m
        },
    );
    let g = truth.gravity;
    ParametricModel::new(
        dims,
        basis,
        move |x, _u, f| {
            vec![
                x[0] + dt * x[3],
                x[1] + dt * x[4],
                x[2] + dt * x[5],
                x[3] + dt * f[0],
                x[4] + dt * f[1],
                x[5] + dt * (f[2] - g),
            ]
        },
        |x| vec![x[0], x[1], x[2]],
        dt,
        Mat::from_diag(&vec![q_diag; 6]),
        Mat::from_diag(&vec![r_var; 3]),
    )
}

/// Ground truth for the vertical-axis experiment: pure-linear thrust map,
/// no drag, sinusoidal altitude reference.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadZTruth {
    /// Thrust acceleration = k1 · pwm; the constant term is absent so the
    /// linear tap alone must be selected.
    pub thrust_k1: f64,
    pub gravity: f64,
    pub meas_noise_std: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub z0: f64,
    pub kp: f64,
    pub kd: f64,
    pub pwm_min: f64,
    pub pwm_max: f64,
}

impl Default for QuadZTruth {
    fn default() -> Self {
        Self {
            thrust_k1: 18.0,
            gravity: 9.81,
            meas_noise_std: 0.005,
            rate_hz: 50.0,
            duration_s: 30.0,
            amplitude: 0.5,
            period_s: 4.0,
            z0: 1.0,
            kp: 6.0,
            kd: 4.0,
            pwm_min: 0.05,
            pwm_max: 0.98,
        }
    }
}

impl QuadZTruth {
    pub fn true_theta(&self) -> Vec<f64> {
        vec![0.0, self.thrust_k1, 0.0, 0.0, 0.0, 0.0]
    }
}

pub fn simulate_quad_z(
    truth: &QuadZTruth,
    seed: u64,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Trajectory, ScenarioError> {
    let dt = 1.0 / rate_hz;
    let n = (duration_s * rate_hz).round() as usize + 1;
    let mut rng = Rng::new(seed);
    let omega = std::f64::consts::TAU / truth.period_s;

    let mut t_col = Vec::with_capacity(n);
    let mut u_mat = Mat::zeros(n, 1);
    let mut y_mat = Mat::zeros(n, 1);
    let mut x_mat = Mat::zeros(n, 2);

    let mut state = [truth.z0, 0.0];
    for i in 0..n {
        let t = i as f64 * dt;
        if state[0].abs() > 1e4 {
            return Err(ScenarioError::Diverged { t, state_norm: state[0].abs() });
        }
        let z_ref = truth.z0 + truth.amplitude * (omega * t).sin();
        let vz_ref = truth.amplitude * omega * (omega * t).cos();
        let az_ref = -truth.amplitude * omega * omega * (omega * t).sin();
        let a_cmd = az_ref + truth.kp * (z_ref - state[0]) + truth.kd * (vz_ref - state[1]) + truth.gravity;
        let pwm = (a_cmd / truth.thrust_k1).clamp(truth.pwm_min, truth.pwm_max);

        t_col.push(t);
        u_mat[(i, 0)] = pwm;
        y_mat[(i, 0)] = state[0] + truth.meas_noise_std * rng.normal();
        x_mat[(i, 0)] = state[0];
        x_mat[(i, 1)] = state[1];

        if i + 1 < n {
            state = rk4_step(&state, dt, |s| [s[1], truth.thrust_k1 * pwm - truth.gravity]);
        }
    }
    Ok(Trajectory { t: t_col, u: u_mat, y: y_mat, x_true: x_mat })
}

/// Identification model for the vertical-axis experiment: raw normalized
/// pwm powers as basis functions, gravity known, altitude observed.
pub fn quad_z_model(
    truth: &QuadZTruth,
    dt: f64,
    q_diag: f64,
    r_var: f64,
) -> Result<ParametricModel, ModelError> {
    let dims = Dims::new(2, 1, 1, 6, 1)?;
    let basis = BasisLibrary::scalar(
        QUAD_Z_BASIS_NAMES.iter().map(|s| s.to_string()).collect(),
        |_x, u| {
            let mut out = Vec::with_capacity(6);
            let mut pw = 1.0;
            for _ in 0..6 {
                out.push(pw);
                pw *= u[0];
            }
            out
        },
    );
    let g = truth.gravity;
    ParametricModel::new(
        dims,
        basis,
        move |x, _u, f| vec![x[0] + dt * x[1], x[1] + dt * (f[0] - g)],
        |x| vec![x[0]],
        dt,
        Mat::from_diag(&[q_diag, q_diag]),
        Mat::from_diag(&[r_var]),
    )
}
