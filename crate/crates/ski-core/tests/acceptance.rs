//! Acceptance suite: every benchmark-level guarantee of this crate, one
//! test per criterion, each printing a PASS line with the measured numbers
//! (run with `--nocapture` to see them).

mod common;

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use common::{dense_ukf_correct, dense_ukf_predict, max_abs_diff, rel_frobenius, DenseBelief, LinearKf};
use ski_core::ard::{ard_gradient, ard_loss, inv_softplus, posterior_refresh, softplus, ArdError};
use ski_core::cli::{load_config, run_benchmark_grid, BenchmarkOutcome};
use ski_core::filters::{ekf_correct, ekf_predict, srukf_correct, srukf_predict, ut_weights, EkfBelief};
use ski_core::matkernels::{chol_rank_one, cholesky_factor, lu_factor, qr_r_factor, solve_with_factor, Mat};
use ski_core::model::{belief_blocks, initial_belief, BasisLibrary, Dims, GaussianBelief, NoiseFactors, ParametricModel};
use ski_core::rng::Rng;
use ski_core::scenarios::{run_identification, ArdParams, FilterParams, Method, Scenario};

fn config_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// The wingrock 4-methods × 10-seeds grid, run once and shared by the
/// criteria that read it.
fn wingrock_grid() -> &'static (BenchmarkOutcome, f64) {
    static GRID: OnceLock<(BenchmarkOutcome, f64)> = OnceLock::new();
    GRID.get_or_init(|| {
        let config = load_config(&config_path("paper-wingrock.json"), &[]).expect("preset config");
        let resolved = config.resolve().expect("preset config valid");
        let started = Instant::now();
        let outcome = run_benchmark_grid(&resolved, 0.1, 1);
        (outcome, started.elapsed().as_secs_f64())
    })
}

fn method_metrics(outcome: &BenchmarkOutcome, method: Method) -> Vec<f64> {
    outcome
        .cells
        .iter()
        .filter(|c| c.method == method)
        .map(|c| c.metrics.as_ref().expect("cell must succeed").mean_l1_error)
        .collect()
}

#[test]
fn criterion_1_wingrock_accuracy_and_grid_runtime() {
    let (outcome, elapsed) = wingrock_grid();
    assert_eq!(outcome.cells.len(), 40, "4 methods × 10 seeds");
    for cell in &outcome.cells {
        assert!(
            cell.metrics.is_some(),
            "cell {}/{} failed: {:?}",
            cell.method.name(),
            cell.seed,
            cell.error
        );
    }
    let ski = median(&method_metrics(outcome, Method::Ski));
    let ukf = median(&method_metrics(outcome, Method::Ukf));
    let ekf = median(&method_metrics(outcome, Method::Ekf));
    let sindy = median(&method_metrics(outcome, Method::Sindy));
    assert!(ski <= 0.5, "SKI median {ski} exceeds 0.5");
    assert!(ukf <= 2.0, "UKF median {ukf} exceeds 2.0");
    assert!(ski < ukf && ukf < ekf, "ordering violated: {ski} / {ukf} / {ekf}");
    assert!(ekf < sindy, "batch baseline should trail the filters: {ekf} vs {sindy}");
    assert!(*elapsed < 300.0, "grid took {elapsed:.1}s, budget 300s");
    println!(
        "ACCEPTANCE 1 PASS: medians ski={ski:.4} < ukf={ukf:.4} < ekf={ekf:.4} (sindy={sindy:.4}), grid {elapsed:.2}s"
    );
}

#[test]
fn criterion_2_per_step_cost() {
    let (outcome, _) = wingrock_grid();
    let times = |method: Method| -> Vec<f64> {
        outcome
            .cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| c.metrics.as_ref().unwrap().per_step_ms)
            .collect()
    };
    let ski = median(&times(Method::Ski));
    let ukf = median(&times(Method::Ukf));
    assert!(ski < 10.0, "SKI per-step median {ski:.4} ms exceeds 10 ms");
    assert!(ukf < ski, "UKF per-step {ukf:.4} ms should undercut SKI {ski:.4} ms");
    println!("ACCEPTANCE 2 PASS: per-step medians ukf={ukf:.4} ms < ski={ski:.4} ms < 10 ms");
}

#[test]
fn criterion_3_delay_identification() {
    let scenario = Scenario::paper_preset("delay").unwrap();
    let fp = FilterParams::paper_preset("delay").unwrap();
    let ap = ArdParams::paper_preset("delay").unwrap();
    let mut argmax_hits = 0;
    let mut rel_errors = Vec::new();
    for seed in 0..10u64 {
        let (trace, metrics) =
            run_identification(&scenario, Method::Ski, seed, &fp, &ap, 30.0, 50.0, 0.1)
                .expect("delay run");
        let relevances = trace.final_relevances();
        let argmax = relevances
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if argmax == 6 {
            argmax_hits += 1;
        }
        rel_errors.push(metrics.l1_relative_error_l.expect("delay metric"));
    }
    let rel_median = median(&rel_errors);
    assert!(argmax_hits >= 9, "argmax hit the 6-step tap on only {argmax_hits}/10 seeds");
    assert!(rel_median <= 0.1, "median gain relative error {rel_median:.4} exceeds 0.1");
    println!(
        "ACCEPTANCE 3 PASS: argmax = 6-step tap on {argmax_hits}/10 seeds, median rel error {rel_median:.4}"
    );
}

#[test]
fn criterion_4_quadrotor_structure_selection() {
    let scenario = Scenario::paper_preset("quadrotor").unwrap();
    let fp = FilterParams::paper_preset("quadrotor").unwrap();
    let ap = ArdParams::paper_preset("quadrotor").unwrap();
    let mut worst_margin = f64::INFINITY;
    for seed in 0..3u64 {
        let (trace, metrics) =
            run_identification(&scenario, Method::Ski, seed, &fp, &ap, 60.0, 50.0, 0.1)
                .expect("quadrotor run");
        assert_eq!(
            metrics.selected_basis,
            vec![0, 1, 6],
            "seed {seed}: selected set must be constant + linear pwm + linear drag"
        );
        let relevances = trace.final_relevances();
        let selected_min = [0usize, 1, 6]
            .iter()
            .map(|&i| relevances[i])
            .fold(f64::INFINITY, f64::min);
        let rejected_max = [2usize, 3, 4, 5, 7]
            .iter()
            .map(|&i| relevances[i])
            .fold(0.0_f64, f64::max);
        let margin = selected_min / rejected_max;
        worst_margin = worst_margin.min(margin);
        assert!(margin >= 10.0, "seed {seed}: variance margin {margin:.1}x below 10x");
    }
    println!("ACCEPTANCE 4 PASS: selected = {{constant, pwm, |v|}} with worst margin {worst_margin:.1}x");
}

#[test]
fn criterion_5_ard_gradient_matches_finite_differences() {
    let started = Instant::now();
    let mut rng = Rng::new(2024);
    let mut instances = 0;
    for &d in &[1usize, 3, 6, 8] {
        let mut done_for_dim = 0;
        while done_for_dim < 25 {
            let g = Mat::from_fn(d, d, |_, _| rng.normal());
            let mut st = g.matmul(&g.transpose()).scaled(0.3 / d as f64);
            for i in 0..d {
                st[(i, i)] += 0.1;
            }
            let st = st.symmetrized();
            let m: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let s0: Vec<f64> = (0..d).map(|_| 0.2 + rng.uniform() * 3.0).collect();
            let s_new: Vec<f64> = s0
                .iter()
                .map(|&s| if rng.uniform() < 0.3 { s } else { s * (0.3 * rng.normal()).exp() })
                .collect();
            let s_tilde: Vec<f64> = s_new.iter().map(|&s| inv_softplus(s)).collect();
            let Ok((_, ws)) = ard_loss(&m, &st, &s0, &s_new) else { continue };
            let grad = ard_gradient(&ws, &s_tilde, &st, &s0);
            for i in 0..d {
                let h = 1e-6 * s_tilde[i].abs().max(1.0);
                let eval = |tv: f64| {
                    let mut t = s_tilde.clone();
                    t[i] = tv;
                    let sv: Vec<f64> = t.iter().map(|&x| softplus(x)).collect();
                    ard_loss(&m, &st, &s0, &sv).map(|(l, _)| l)
                };
                let (Ok(lp), Ok(lm)) = (eval(s_tilde[i] + h), eval(s_tilde[i] - h)) else { continue };
                let fd = (lp - lm) / (2.0 * h);
                let err = (grad[i] - fd).abs();
                let tol = 1e-5 * fd.abs().max(grad[i].abs()) + 1e-8;
                assert!(err <= tol, "d={d} i={i}: analytic {} vs FD {fd}", grad[i]);
            }
            instances += 1;
            done_for_dim += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(instances >= 100, "only {instances} instances checked");
    assert!(elapsed < 5.0, "gradient oracle took {elapsed:.2}s, budget 5s");
    println!("ACCEPTANCE 5 PASS: {instances} random instances matched FD at rtol 1e-5 in {elapsed:.2}s");
}

#[test]
fn criterion_6_posterior_refresh_matches_gaussian_product() {
    let mut rng = Rng::new(777);
    let mut done = 0;
    let mut worst = 0.0_f64;
    while done < 100 {
        let d_x = (rng.next_u64() % 4) as usize;
        let d_t = 1 + (rng.next_u64() % 7) as usize;
        let l = d_x + d_t;
        if l > 10 || d_x == 0 {
            continue;
        }
        let g = Mat::from_fn(l, l, |_, _| rng.normal());
        let mut sigma = g.matmul(&g.transpose()).scaled(1.0 / l as f64);
        for i in 0..l {
            sigma[(i, i)] += 0.2;
        }
        let sigma = sigma.symmetrized();
        let xi: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
        let s0: Vec<f64> = (0..d_t).map(|_| 0.3 + rng.uniform() * 2.0).collect();
        let s_new: Vec<f64> = s0.iter().map(|&s| s * (0.5 * rng.normal()).exp()).collect();

        // information-form product oracle: Λ ← Σ⁻¹ + Hpᵀ·D·Hp
        let d_diag: Vec<f64> = (0..d_t).map(|i| 1.0 / s_new[i] - 1.0 / s0[i]).collect();
        let mut prec = lu_factor(&sigma).unwrap().inverse();
        let eta_vec = prec.mul_vec(&xi);
        for i in 0..d_t {
            prec[(d_x + i, d_x + i)] += d_diag[i];
        }
        let prec = prec.symmetrized();
        if cholesky_factor(&prec).is_err() {
            continue; // improper product, outside the oracle's domain
        }
        let cov_ref = lu_factor(&prec).unwrap().inverse().symmetrized();
        let xi_ref = cov_ref.mul_vec(&eta_vec);

        let dims = Dims::new(d_x, 0, 1, d_t, 1).unwrap();
        let belief = GaussianBelief { xi: xi.clone(), u_factor: cholesky_factor(&sigma).unwrap() };
        let refreshed = match posterior_refresh(&belief, &dims, &s0, &s_new) {
            Ok(out) => out,
            Err(ArdError::SingularM { .. }) => continue,
            Err(e) => panic!("refresh failed: {e}"),
        };
        let mean_err = max_abs_diff(&refreshed.belief.xi, &xi_ref);
        let cov_err = refreshed.belief.covariance().sub(&cov_ref).max_abs();
        worst = worst.max(mean_err.max(cov_err));
        assert!(mean_err < 1e-8, "mean error {mean_err:e}");
        assert!(cov_err < 1e-8, "covariance error {cov_err:e}");
        done += 1;
    }
    println!("ACCEPTANCE 6 PASS: {done} random refreshes matched the Gaussian product within 1e-8 (worst {worst:.2e})");
}

/// Linear-in-augmented-state model: the unknown term is a weighted sum of
/// the two inputs, so the augmented transition is exactly linear and the
/// textbook Kalman filter is the ground truth.
fn linear_model(q_diag: f64, r_var: f64) -> ParametricModel {
    let dims = Dims::new(2, 2, 1, 2, 1).unwrap();
    let basis = BasisLibrary::scalar(vec!["u0".into(), "u1".into()], |_x, u| vec![u[0], u[1]]);
    ParametricModel::new(
        dims,
        basis,
        |x, _u, f| vec![0.95 * x[0] + 0.10 * x[1], -0.08 * x[0] + 0.90 * x[1] + f[0]],
        |x| vec![x[0]],
        0.02,
        Mat::from_diag(&[q_diag, q_diag]),
        Mat::from_diag(&[r_var]),
    )
    .unwrap()
}

fn linear_aug_matrix(u: &[f64]) -> Mat {
    let mut a = Mat::identity(4);
    a[(0, 0)] = 0.95;
    a[(0, 1)] = 0.10;
    a[(1, 0)] = -0.08;
    a[(1, 1)] = 0.90;
    a[(1, 2)] = u[0];
    a[(1, 3)] = u[1];
    a
}

#[test]
fn criterion_7_filter_exactness() {
    // --- part 1: linear-Gaussian system, 200 steps, UKF and EKF vs KF ---
    let q_diag = 1e-3;
    let r_var = 0.04;
    let model = linear_model(q_diag, r_var);
    let mut rng = Rng::new(4242);
    // α = 0.5 makes the center covariance weight negative, exercising the
    // downdate branch of the square-root prediction
    let w = ut_weights(4, 0.5, 2.0).unwrap();
    let noise = NoiseFactors::from_model(&model).unwrap();

    let p0 = Mat::from_diag(&[0.5, 0.8]);
    let s0 = [1.5, 0.7];
    let mut sr = initial_belief(&[0.2, -0.1], &p0, &[0.3, -0.2], &s0).unwrap();
    let mut ekf = EkfBelief::from_belief(&sr);
    let mut kf = LinearKf { xi: sr.xi.clone(), sigma: sr.covariance() };

    let q_aug = {
        let mut q = Mat::zeros(4, 4);
        q[(0, 0)] = q_diag;
        q[(1, 1)] = q_diag;
        q
    };
    let h = Mat::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]]);
    let r = Mat::from_diag(&[r_var]);

    let mut worst_mean = 0.0_f64;
    let mut worst_cov = 0.0_f64;
    for _step in 0..200 {
        let u = [rng.normal(), rng.normal()];
        let y = [2.0 * rng.uniform() - 1.0];

        let a = linear_aug_matrix(&u);
        kf.predict(&a, &[0.0; 4], &q_aug);
        kf.correct(&h, &y, &r);

        let out = srukf_predict(&sr, &u, &model, &w, &noise).unwrap();
        sr = srukf_correct(&out.belief, &y, &model, &w, &noise).unwrap().belief;

        ekf = ekf_predict(&ekf, &u, &model).unwrap();
        ekf = ekf_correct(&ekf, &y, &model).unwrap();

        worst_mean = worst_mean
            .max(max_abs_diff(&sr.xi, &kf.xi))
            .max(max_abs_diff(&ekf.xi, &kf.xi));
        worst_cov = worst_cov
            .max(rel_frobenius(&sr.covariance(), &kf.sigma))
            .max(rel_frobenius(&ekf.sigma, &kf.sigma));
    }
    assert!(worst_mean < 1e-8, "mean deviation from KF: {worst_mean:e}");
    assert!(worst_cov < 1e-6, "covariance deviation from KF: {worst_cov:e}");

    // --- part 2: square-root vs dense UKF oracle on the wingrock model ---
    let scenario = Scenario::paper_preset("wingrock").unwrap();
    let truth = match &scenario {
        Scenario::WingRock(t) => t.clone(),
        _ => unreachable!(),
    };
    let traj = scenario.simulate(3, 2.5, 50.0).unwrap();
    let model = ski_core::scenarios::wingrock::wingrock_model(&truth, 0.02, 1e-4, 0.01).unwrap();
    let w = ut_weights(8, 0.3, 2.0).unwrap();
    let noise = NoiseFactors::from_model(&model).unwrap();
    let mut sr = initial_belief(&[traj.y[(0, 0)], 0.0], &Mat::identity(2), &[0.0; 6], &[5.0; 6]).unwrap();
    let mut dense = DenseBelief { xi: sr.xi.clone(), sigma: sr.covariance() };

    let mut worst_mean = 0.0_f64;
    let mut worst_cov = 0.0_f64;
    for i in 1..=100 {
        let u = traj.u.row_slice(i - 1);
        let y = traj.y.row_slice(i);

        let out = srukf_predict(&sr, u, &model, &w, &noise).unwrap();
        sr = srukf_correct(&out.belief, y, &model, &w, &noise).unwrap().belief;

        let pred = dense_ukf_predict(&dense, u, &model, &w);
        dense = dense_ukf_correct(&pred, y, &model, &w);

        worst_mean = worst_mean.max(max_abs_diff(&sr.xi, &dense.xi));
        worst_cov = worst_cov.max(rel_frobenius(&sr.covariance(), &dense.sigma));
    }
    assert!(worst_mean < 1e-7, "square-root vs dense mean deviation {worst_mean:e}");
    assert!(worst_cov < 1e-6, "square-root vs dense covariance deviation {worst_cov:e}");
    println!(
        "ACCEPTANCE 7 PASS: KF oracle matched over 200 steps; dense-UKF oracle matched over 100 steps (worst cov dev {worst_cov:.2e})"
    );
}

#[test]
fn criterion_8_kernel_property_suites() {
    let started = Instant::now();
    let mut rng = Rng::new(888);
    let random_spd = |n: usize, rng: &mut Rng| {
        let g = Mat::from_fn(n, n, |_, _| rng.normal());
        let mut a = g.matmul(&g.transpose());
        for i in 0..n {
            a[(i, i)] += 0.5 * n as f64;
        }
        a.symmetrized()
    };

    // rank-one update/downdate reconstruction
    for _ in 0..1000 {
        let n = 1 + (rng.next_u64() % 20) as usize;
        let a = random_spd(n, &mut rng);
        let u = cholesky_factor(&a).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let wgt = 0.05 + rng.uniform();
        let up = chol_rank_one(&u, &x, wgt).unwrap();
        let xxt = Mat::from_fn(n, n, |i, j| wgt * x[i] * x[j]);
        let expect = a.add(&xxt);
        assert!(rel_frobenius(&up.reconstruct(), &expect) < 1e-9, "update reconstruction");
        let back = chol_rank_one(&up, &x, -wgt).unwrap();
        assert!(rel_frobenius(&back.reconstruct(), &a) < 1e-9, "downdate restores");
    }

    // QR Gram-equivalence
    for _ in 0..1000 {
        let n = 1 + (rng.next_u64() % 20) as usize;
        let m = n + (rng.next_u64() % 20) as usize;
        let a = Mat::from_fn(m, n, |_, _| rng.normal());
        let l = match qr_r_factor(&a) {
            Ok(l) => l,
            Err(_) => continue, // randomly rank-deficient draws are out of scope
        };
        let gram = a.transpose().matmul(&a);
        assert!(rel_frobenius(&l.reconstruct(), &gram) < 1e-10, "gram reconstruction");
        let reversed = Mat::from_fn(m, n, |i, j| a[(m - 1 - i, j)]);
        let l2 = qr_r_factor(&reversed).unwrap();
        assert!(rel_frobenius(l2.mat(), l.mat()) < 1e-9, "gram equivalence");
    }

    // triangular-solve residuals
    for _ in 0..1000 {
        let n = 1 + (rng.next_u64() % 20) as usize;
        let a = random_spd(n, &mut rng);
        let u = cholesky_factor(&a).unwrap();
        let b = Mat::from_fn(n, 2, |_, _| rng.normal());
        let x = solve_with_factor(&u, &b);
        let residual = a.matmul(&x).sub(&b).frobenius() / b.frobenius();
        assert!(residual < 1e-9, "solve residual {residual:e}");
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "kernel suites took {elapsed:.2}s, budget 10s");
    println!("ACCEPTANCE 8 PASS: 3×1000 randomized kernel cases in {elapsed:.2}s");
}

#[test]
fn criterion_9_trace_determinism() {
    for kind in ["wingrock", "delay"] {
        let scenario = Scenario::paper_preset(kind).unwrap();
        let fp = FilterParams::paper_preset(kind).unwrap();
        let ap = ArdParams::paper_preset(kind).unwrap();
        let run = || {
            let (trace, _) =
                run_identification(&scenario, Method::Ski, 11, &fp, &ap, 3.0, 50.0, 0.1).unwrap();
            let mut buf = Vec::new();
            trace.write_csv(&mut buf).unwrap();
            buf
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "{kind}: identical config+seed must give byte-identical traces");
        assert!(!a.is_empty());
    }
    println!("ACCEPTANCE 9 PASS: byte-identical traces for identical config+seed");
}

#[test]
fn wingrock_per_seed_method_ordering() {
    // scenario-level ordering invariant: SKI beats UKF and UKF beats EKF on
    // at least 8 of 10 seeds
    let (outcome, _) = wingrock_grid();
    let by = |method: Method| -> Vec<f64> { method_metrics(outcome, method) };
    let (ski, ukf, ekf) = (by(Method::Ski), by(Method::Ukf), by(Method::Ekf));
    let ski_wins = ski.iter().zip(ukf.iter()).filter(|(s, u)| s < u).count();
    let ukf_wins = ukf.iter().zip(ekf.iter()).filter(|(u, e)| u < e).count();
    assert!(ski_wins >= 8, "SKI < UKF on only {ski_wins}/10 seeds");
    assert!(ukf_wins >= 8, "UKF < EKF on only {ukf_wins}/10 seeds");
    println!("ordering per seed: ski<ukf {ski_wins}/10, ukf<ekf {ukf_wins}/10");
}

#[test]
fn delay_argmax_robustness_across_seeds() {
    // ARD relevance must point at the true tap on at least 9 of 10 seeds
    // (shares the exact assertion with criterion 3 but exists as the
    // scenario-level invariant; kept separate so a regression names it)
    let scenario = Scenario::paper_preset("delay").unwrap();
    let fp = FilterParams::paper_preset("delay").unwrap();
    let ap = ArdParams::paper_preset("delay").unwrap();
    let mut hits = 0;
    for seed in 0..10u64 {
        let (trace, _) =
            run_identification(&scenario, Method::Ski, seed, &fp, &ap, 30.0, 50.0, 0.1).unwrap();
        let rel = trace.final_relevances();
        let argmax = rel.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        if argmax == 6 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "true-delay argmax on only {hits}/10 seeds");
}

#[test]
fn quad_z_linear_term_dominant() {
    // the vertical-axis preset substitutes a property check: the linear pwm
    // tap must dominate the learned relevances
    let scenario = Scenario::paper_preset("quad-z").unwrap();
    let fp = FilterParams::paper_preset("quad-z").unwrap();
    let ap = ArdParams::paper_preset("quad-z").unwrap();
    for seed in 0..3u64 {
        let (trace, _) =
            run_identification(&scenario, Method::Ski, seed, &fp, &ap, 30.0, 50.0, 0.1).unwrap();
        let rel = trace.final_relevances();
        let argmax = rel.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(argmax, 1, "seed {seed}: linear pwm tap must dominate, got {rel:?}");
    }
}

#[test]
fn ard_descent_on_wingrock_posteriors() {
    // the monotone-descent property measured on a real run: hyperparameter
    // iterations may not increase the loss in more than 5% of rounds
    use ski_core::ard::{ard_step, ArdEngine};
    let scenario = Scenario::paper_preset("wingrock").unwrap();
    let truth = match &scenario {
        Scenario::WingRock(t) => t.clone(),
        _ => unreachable!(),
    };
    let traj = scenario.simulate(5, 10.0, 50.0).unwrap();
    let model = ski_core::scenarios::wingrock::wingrock_model(&truth, 0.02, 1e-4, 0.01).unwrap();
    let w = ut_weights(8, 0.3, 2.0).unwrap();
    let noise = NoiseFactors::from_model(&model).unwrap();
    let mut belief =
        initial_belief(&[traj.y[(0, 0)], 0.0], &Mat::identity(2), &[0.0; 6], &[5.0; 6]).unwrap();
    let mut engine = ArdEngine::new(&[5.0; 6], 1e-2, 1, 1e-8).unwrap();

    let mut increases = 0;
    let mut rounds = 0;
    for i in 1..traj.len() {
        let out = srukf_predict(&belief, traj.u.row_slice(i - 1), &model, &w, &noise).unwrap();
        belief = srukf_correct(&out.belief, traj.y.row_slice(i), &model, &w, &noise).unwrap().belief;
        let blocks = belief_blocks(&belief, &model.dims);
        // five explicit single-step rounds so each reported loss is
        // comparable with the previous one
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let report = ard_step(&mut engine, &blocks.m, &blocks.s).unwrap();
            rounds += 1;
            if report.last_loss > prev + 1e-12 {
                increases += 1;
            }
            prev = report.last_loss;
        }
        let refreshed = posterior_refresh(&belief, &model.dims, engine.prior_old(), engine.relevances()).unwrap();
        belief = refreshed.belief;
        engine.commit_prior();
    }
    let rate = increases as f64 / rounds as f64;
    assert!(rate < 0.05, "loss increased in {:.2}% of rounds", 100.0 * rate);
}
