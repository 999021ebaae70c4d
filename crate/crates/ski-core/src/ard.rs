//! Online automatic-relevance-determination (ARD) of basis-function weights.
//!
//! Each weight carries a zero-mean Gaussian prior with its own variance
//! `sᵢ`. After every filter correction the variances take a few explicit
//! gradient steps on a marginal-likelihood loss evaluated from the current
//! posterior alone, and the Kalman posterior is then refreshed to match the
//! changed prior through a pseudo-observation correction. Irrelevant basis
//! functions shrink toward the variance floor; relevant ones keep (or grow)
//! their variance.
//!
//! # Numerics
//!
//! The prior increment `ΔS₀ = [(S₀ⁿᵉʷ)⁻¹ − (S₀ᵒˡᵈ)⁻¹]⁻¹` diverges exactly
//! where every update round starts (equal priors), so it is never formed.
//! With the precision difference `D = (S₀ⁿᵉʷ)⁻¹ − (S₀ᵒˡᵈ)⁻¹` the loss uses
//!
//! ```text
//! (Sₜ + ΔS₀)⁻¹ = (I + D·Sₜ)⁻¹·D                      (finite at D = 0)
//! L₁ = mᵀ(Sₜ + ΔS₀)⁻¹m
//! L₂ = log|M|,  M = S₀ⁿᵉʷ + (I − S₀ⁿᵉʷ(S₀ᵒˡᵈ)⁻¹)·Sₜ   (determinant lemma)
//! ```
//!
//! Variances are parameterized through the softplus map `s = log(1+eˢ̃)` so
//! unconstrained gradient descent keeps them positive; the chain-rule slope
//! is computed as `σ(s̃) = 1 − e⁻ˢ`.
//!
//! The gradient implemented here is the exact derivative of `L₁ + L₂` with
//! respect to `s̃` (it matches central finite differences of the loss to
//! first order in the step): with `z = (I + Sₜ·D)⁻¹·m`,
//!
//! ```text
//! ∂L₁/∂sᵢ = −(zᵢ/sᵢ)²
//! ∂L₂/∂sᵢ = [M⁻¹]ᵢᵢ − [Sₜ·M⁻¹]ᵢᵢ / s₀ᵢ
//! ∂L/∂s̃ᵢ  = σ(s̃ᵢ)·(∂L₁/∂sᵢ + ∂L₂/∂sᵢ)
//! ```
//!
//! Both pieces stay finite and non-degenerate at `D = 0`, where they reduce
//! to `σ(s̃ᵢ)·((1/sᵢ)(1 − [Sₜ]ᵢᵢ/sᵢ) − (mᵢ/sᵢ)²)`: variances of weights
//! whose posterior mean is large relative to their prior grow, all others
//! shrink toward the posterior variance.

use std::fmt;

use crate::matkernels::{cholesky_factor, lu_factor, sym_eigen, KernelError, Mat};
use crate::model::{Dims, GaussianBelief};

#[derive(Debug, Clone, PartialEq)]
pub enum ArdError {
    /// `|M| ≤ 0`: the proposed variances are inadmissible and the step is
    /// rejected.
    SingularM { det: f64 },
    /// Every gradient iterate was inadmissible; the engine is unchanged.
    RejectedStep,
    /// The refreshed covariance stayed indefinite after the eigenvalue-floor
    /// repair; the run must halt.
    RefreshNotSpd,
    BadInput(String),
    Kernel(KernelError),
}

impl fmt::Display for ArdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArdError::SingularM { det } => write!(f, "inadmissible variance proposal: |M| = {det:e}"),
            ArdError::RejectedStep => write!(f, "every gradient iterate was inadmissible"),
            ArdError::RefreshNotSpd => write!(f, "posterior refresh lost positive definiteness"),
            ArdError::BadInput(msg) => write!(f, "bad ARD input: {msg}"),
            ArdError::Kernel(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ArdError {}

impl From<KernelError> for ArdError {
    fn from(e: KernelError) -> Self {
        ArdError::Kernel(e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn inv_softplus(s: f64) -> f64 {
    if s > 30.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

/// Derivative of the softplus output with respect to its input, expressed
/// through the output: `ds/ds̃ = σ(s̃) = 1 − e⁻ˢ`.
pub fn softplus_slope(s: f64) -> f64 {
    1.0 - (-s).exp()
}

/// Reusable intermediates of one loss evaluation.
#[derive(Debug, Clone)]
pub struct ArdWorkspace {
    /// Precision difference `D = 1/s_new − 1/s0_old` (diagonal).
    pub d_diag: Vec<f64>,
    pub s_new: Vec<f64>,
    /// `(I + D·Sₜ)⁻¹`.
    pub b_inv: Mat,
    /// `q = (Sₜ + ΔS₀)⁻¹·m` in the stable form `(I + D·Sₜ)⁻¹·D·m`.
    pub q: Vec<f64>,
    /// `z = (I + Sₜ·D)⁻¹·m`.
    pub z: Vec<f64>,
    pub l1: f64,
    pub l2: f64,
}

/// Marginal-likelihood loss of a proposed prior-variance vector, evaluated
/// from the current posterior parameter mean/covariance and the frozen old
/// prior. Returns the loss and a workspace for the matching gradient call.
pub fn ard_loss(
    m_old: &[f64],
    s_old_marg: &Mat,
    s0_old: &[f64],
    s_new: &[f64],
) -> Result<(f64, ArdWorkspace), ArdError> {
    let d = m_old.len();
    if s_old_marg.rows() != d || !s_old_marg.is_square() || s0_old.len() != d || s_new.len() != d {
        return Err(ArdError::BadInput("dimension mismatch".into()));
    }
    if s0_old.iter().chain(s_new.iter()).any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(ArdError::BadInput("prior variances must be positive and finite".into()));
    }

    let d_diag: Vec<f64> = (0..d).map(|i| 1.0 / s_new[i] - 1.0 / s0_old[i]).collect();
    // B = I + D·Sₜ
    let mut b = Mat::from_fn(d, d, |i, j| d_diag[i] * s_old_marg[(i, j)]);
    for i in 0..d {
        b[(i, i)] += 1.0;
    }
    let lu = match lu_factor(&b) {
        Ok(lu) => lu,
        Err(KernelError::Singular { .. }) => return Err(ArdError::SingularM { det: 0.0 }),
        Err(e) => return Err(e.into()),
    };
    // |M| = Π sᵢ · |B| with Π sᵢ > 0, so admissibility is the sign of |B|
    let det_b = lu.det();
    if det_b <= 0.0 {
        return Err(ArdError::SingularM { det: det_b });
    }
    let b_inv = lu.inverse();

    let dm: Vec<f64> = (0..d).map(|i| d_diag[i] * m_old[i]).collect();
    let q = b_inv.mul_vec(&dm);
    // z = (I + Sₜ·D)⁻¹ m = B⁻ᵀ m
    let z: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|k| m_old[k] * b_inv[(k, i)]).sum())
        .collect();

    let l1: f64 = m_old.iter().zip(q.iter()).map(|(m, q)| m * q).sum();
    let l2: f64 = s_new.iter().map(|s| s.ln()).sum::<f64>() + det_b.ln();

    Ok((
        l1 + l2,
        ArdWorkspace { d_diag, s_new: s_new.to_vec(), b_inv, q, z, l1, l2 },
    ))
}

/// Gradient of the loss with respect to the unconstrained hyperparameters,
/// reusing the workspace of the matching [`ard_loss`] call.
pub fn ard_gradient(
    ws: &ArdWorkspace,
    s_tilde: &[f64],
    s_old_marg: &Mat,
    s0_old: &[f64],
) -> Vec<f64> {
    let d = s_tilde.len();
    debug_assert_eq!(ws.s_new.len(), d);
    let mut grad = vec![0.0; d];
    for i in 0..d {
        let s = ws.s_new[i];
        // [M⁻¹]ᵢᵢ = [B⁻¹]ᵢᵢ / sᵢ ;  [Sₜ·M⁻¹]ᵢᵢ = (Sₜ·B⁻¹)ᵢᵢ / sᵢ
        let m_inv_ii = ws.b_inv[(i, i)] / s;
        let st_binv_ii: f64 = (0..d).map(|k| s_old_marg[(i, k)] * ws.b_inv[(k, i)]).sum();
        let dl2 = m_inv_ii - st_binv_ii / (s * s0_old[i]);
        let qh = ws.z[i] / s;
        let dl1 = -qh * qh;
        grad[i] = softplus_slope(s) * (dl1 + dl2);
    }
    grad
}

/// Report of one [`ard_step`] round.
#[derive(Debug, Clone, Default)]
pub struct ArdStepReport {
    pub iterations_accepted: usize,
    pub rejected_midway: bool,
    pub last_loss: f64,
}

/// Per-run ARD state: unconstrained hyperparameters, derived variances, the
/// frozen pre-round prior, and the step-size settings.
#[derive(Debug, Clone)]
pub struct ArdEngine {
    s_tilde: Vec<f64>,
    s: Vec<f64>,
    s0_old: Vec<f64>,
    pub eta_hp: f64,
    pub n_hp: usize,
    pub variance_floor: f64,
    s_tilde_floor: f64,
}

impl ArdEngine {
    pub fn new(s0: &[f64], eta_hp: f64, n_hp: usize, variance_floor: f64) -> Result<Self, ArdError> {
        if !(variance_floor > 0.0) {
            return Err(ArdError::BadInput("variance floor must be positive".into()));
        }
        if s0.iter().any(|&s| s < variance_floor) {
            return Err(ArdError::BadInput("initial variances below the floor".into()));
        }
        let s_tilde: Vec<f64> = s0.iter().map(|&s| inv_softplus(s)).collect();
        let s: Vec<f64> = s_tilde.iter().map(|&t| softplus(t)).collect();
        Ok(Self {
            s_tilde,
            s0_old: s.clone(),
            s,
            eta_hp,
            n_hp,
            variance_floor,
            s_tilde_floor: inv_softplus(variance_floor),
        })
    }

    /// Current prior variances (the per-basis relevances).
    pub fn relevances(&self) -> &[f64] {
        &self.s
    }

    /// The frozen prior the current round measures change against.
    pub fn prior_old(&self) -> &[f64] {
        &self.s0_old
    }

    pub fn s_tilde(&self) -> &[f64] {
        &self.s_tilde
    }

    /// Freezes the current variances as the new reference prior; call after
    /// the posterior has been refreshed to match them.
    pub fn commit_prior(&mut self) {
        self.s0_old = self.s.clone();
    }

    fn rederive(&mut self) {
        for i in 0..self.s_tilde.len() {
            if self.s_tilde[i] < self.s_tilde_floor {
                self.s_tilde[i] = self.s_tilde_floor;
            }
            self.s[i] = softplus(self.s_tilde[i]).max(self.variance_floor);
        }
    }
}

/// One round of hyperparameter descent: `n_hp` iterations of
/// `s̃ ← s̃ − η·∇L`, re-deriving the variances after each and clamping at
/// the variance floor. The frozen reference prior is untouched. An iterate
/// that walks into an inadmissible region (`|M| ≤ 0`) is undone and the
/// round stops early; if even the entry point is inadmissible the engine is
/// returned unchanged with [`ArdError::RejectedStep`].
pub fn ard_step(
    engine: &mut ArdEngine,
    m_old: &[f64],
    s_old_marg: &Mat,
) -> Result<ArdStepReport, ArdError> {
    let mut report = ArdStepReport::default();
    let mut prev = engine.s_tilde.clone();
    let mut any_accepted = false;

    for _ in 0..engine.n_hp {
        match ard_loss(m_old, s_old_marg, &engine.s0_old, &engine.s) {
            Ok((loss, ws)) => {
                let grad = ard_gradient(&ws, &engine.s_tilde, s_old_marg, &engine.s0_old);
                prev = engine.s_tilde.clone();
                for i in 0..engine.s_tilde.len() {
                    engine.s_tilde[i] -= engine.eta_hp * grad[i];
                }
                engine.rederive();
                any_accepted = true;
                report.iterations_accepted += 1;
                report.last_loss = loss;
            }
            Err(ArdError::SingularM { .. }) => {
                engine.s_tilde = prev.clone();
                engine.rederive();
                report.rejected_midway = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    if !any_accepted {
        return Err(ArdError::RejectedStep);
    }
    // the final iterate was never admissibility-checked; never leave the
    // engine on a variance vector the refresh cannot consume
    if ard_loss(m_old, s_old_marg, &engine.s0_old, &engine.s).is_err() {
        engine.s_tilde = prev;
        engine.rederive();
        report.rejected_midway = true;
    }
    Ok(report)
}

/// Outcome of a posterior refresh; `repaired` reports that the refreshed
/// covariance needed the eigenvalue-floor repair before refactoring.
#[derive(Debug, Clone)]
pub struct RefreshOutcome {
    pub belief: GaussianBelief,
    pub repaired: bool,
}

/// Dense core of the pseudo-observation posterior refresh, exposed for
/// oracle tests; `d_x` may be zero (pure parameter block).
///
/// With `D = diag(1/s_new − 1/s_old)` and the parameter selector `H_p`:
/// `G = Σ·H_pᵀ·(I + D·Sₜ)⁻¹·D`, `ξ ← ξ − G·m`, `Σ ← Σ − G·H_p·Σ`.
pub fn refresh_dense(
    xi: &[f64],
    sigma: &Mat,
    d_x: usize,
    s0_old: &[f64],
    s0_new: &[f64],
) -> Result<(Vec<f64>, Mat), ArdError> {
    let l = xi.len();
    let d_t = l - d_x;
    if s0_old.len() != d_t || s0_new.len() != d_t || sigma.rows() != l {
        return Err(ArdError::BadInput("refresh dimension mismatch".into()));
    }
    let d_diag: Vec<f64> = (0..d_t).map(|i| 1.0 / s0_new[i] - 1.0 / s0_old[i]).collect();
    if d_diag.iter().all(|&d| d == 0.0) {
        return Ok((xi.to_vec(), sigma.clone()));
    }
    let st = sigma.block(d_x, d_x, d_t, d_t).symmetrized();
    let mut b = Mat::from_fn(d_t, d_t, |i, j| d_diag[i] * st[(i, j)]);
    for i in 0..d_t {
        b[(i, i)] += 1.0;
    }
    let lu = match lu_factor(&b) {
        Ok(lu) => lu,
        Err(KernelError::Singular { .. }) => return Err(ArdError::SingularM { det: 0.0 }),
        Err(e) => return Err(e.into()),
    };
    if lu.det() <= 0.0 {
        return Err(ArdError::SingularM { det: lu.det() });
    }
    // A = B⁻¹·D, symmetrized (exactly symmetric in exact arithmetic)
    let mut a = lu.inverse();
    for i in 0..d_t {
        for j in 0..d_t {
            a[(i, j)] *= d_diag[j];
        }
    }
    let a = a.symmetrized();

    let w = sigma.block(0, d_x, l, d_t); // Σ·H_pᵀ
    let g = w.matmul(&a); // l × d_t

    let m = &xi[d_x..];
    let correction = g.mul_vec(m);
    let xi_new: Vec<f64> = (0..l).map(|i| xi[i] - correction[i]).collect();
    let sigma_new = sigma.sub(&g.matmul(&w.transpose())).symmetrized();
    Ok((xi_new, sigma_new))
}

/// Refreshes a square-root belief after a prior change: applies the dense
/// pseudo-observation correction, then refactors (with an eigenvalue floor
/// at 1e-10 if the result grazes the SPD boundary — the prior increment can
/// be indefinite when variances grow).
pub fn posterior_refresh(
    belief: &GaussianBelief,
    dims: &Dims,
    s0_old: &[f64],
    s0_new: &[f64],
) -> Result<RefreshOutcome, ArdError> {
    let sigma = belief.covariance();
    let (xi_new, sigma_new) = refresh_dense(&belief.xi, &sigma, dims.d_x, s0_old, s0_new)?;
    match cholesky_factor(&sigma_new) {
        Ok(f) => Ok(RefreshOutcome { belief: GaussianBelief { xi: xi_new, u_factor: f }, repaired: false }),
        Err(KernelError::NotPositiveDefinite { .. }) => {
            let (mut vals, vecs) = sym_eigen(&sigma_new);
            for v in &mut vals {
                if *v < 1e-10 {
                    *v = 1e-10;
                }
            }
            let repaired = vecs.matmul(&Mat::from_diag(&vals)).matmul(&vecs.transpose()).symmetrized();
            match cholesky_factor(&repaired) {
                Ok(f) => Ok(RefreshOutcome {
                    belief: GaussianBelief { xi: xi_new, u_factor: f },
                    repaired: true,
                }),
                Err(_) => Err(ArdError::RefreshNotSpd),
            }
        }
        Err(e) => Err(e.into()),
    }
}
