//! Properties of fitted models: multiplier complementarity, tube geometry,
//! the nu-budget bounds, the eps-model equivalence and strong duality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use svqr::data::{Dataset, Mat};
use svqr::kernel::KernelSpec;
use svqr::loss::Tau;
use svqr::metrics::tube_stats;
use svqr::model::{build_nu_dual, fit, FitConfig, ModelKind, TrainedModel};
use svqr::oracle::brute_force_optimum;
use svqr::synth::{generate, SynthSpec};

fn tau(v: f64) -> Tau {
    Tau::new(v).unwrap()
}

fn ad1_fit(l: usize, sigma: f64, t: f64, nu: f64, seed: u64) -> (Dataset, TrainedModel) {
    let data = generate(&SynthSpec::ad1(l, sigma, seed)).unwrap();
    let cfg = FitConfig::nu_svqr(tau(t), 2.0 * l as f64, nu, KernelSpec::rbf(1.0));
    let model = fit(&data, &cfg).unwrap();
    (data, model)
}

/// Residuals `y_i - f(x_i)` on the training set.
fn residuals(model: &TrainedModel, data: &Dataset) -> Vec<f64> {
    let preds = model.predict(&data.x).unwrap();
    data.y.iter().zip(&preds).map(|(y, p)| y - p).collect()
}

#[test]
fn multiplier_complementarity_holds() {
    // alpha_i * beta_i = 0 within 1e-10 (and the implied slack product).
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for _ in 0..12 {
        let l = 50;
        let t = rng.gen_range(0.15..0.85);
        let nu = rng.gen_range(0.1..0.9);
        let (_, model) = ad1_fit(l, 0.2, t, nu, rng.gen());
        let worst = model
            .alpha
            .iter()
            .zip(&model.beta)
            .map(|(a, b)| a * b)
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-10, "max alpha*beta = {worst:e}");
    }
}

#[test]
fn reconstructed_slacks_are_complementary() {
    let (data, model) = ad1_fit(80, 0.25, 0.4, 0.5, 3);
    let t = model.config.tau.value();
    let eps = model.eps_width;
    let worst = residuals(&model, &data)
        .iter()
        .map(|r| {
            let xi = (r - (1.0 - t) * eps).max(0.0);
            let xi_star = (-r - t * eps).max(0.0);
            xi * xi_star
        })
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-10, "max xi*xi* = {worst:e}");
}

#[test]
fn outside_points_have_capped_multipliers() {
    // Above the tube forces alpha at its cap and beta at zero; below is
    // symmetric.
    let (data, model) = ad1_fit(120, 0.2, 0.3, 0.5, 17);
    let l = data.len();
    let (cap_a, cap_b) = model.config.box_caps(l);
    let t = model.config.tau.value();
    let eps = model.eps_width;
    let y_scale = data.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let btol = 1e-6 * (1.0 + y_scale);
    let mtol_a = 1e-6 * cap_a;
    let mtol_b = 1e-6 * cap_b;

    let mut checked = 0;
    for (i, r) in residuals(&model, &data).iter().enumerate() {
        if *r > (1.0 - t) * eps + btol {
            assert!((model.alpha[i] - cap_a).abs() <= mtol_a, "point {i} above, alpha {}", model.alpha[i]);
            assert!(model.beta[i] <= mtol_b);
            checked += 1;
        } else if *r < -t * eps - btol {
            assert!((model.beta[i] - cap_b).abs() <= mtol_b, "point {i} below, beta {}", model.beta[i]);
            assert!(model.alpha[i] <= mtol_a);
            checked += 1;
        }
    }
    assert!(checked > 10, "tube should have outside points, saw {checked}");
}

#[test]
fn interior_multipliers_sit_on_the_boundary() {
    // Converse: interior alpha puts the point on the upper boundary.
    let (data, model) = ad1_fit(120, 0.2, 0.6, 0.4, 19);
    let l = data.len();
    let (cap_a, cap_b) = model.config.box_caps(l);
    let t = model.config.tau.value();
    let eps = model.eps_width;
    let y_scale = data.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let btol = 1e-6 * (1.0 + y_scale);
    let res = residuals(&model, &data);

    let mut seen = 0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..l {
        if model.alpha[i] > 1e-6 * cap_a && model.alpha[i] < cap_a - 1e-6 * cap_a {
            assert!(
                (res[i] - (1.0 - t) * eps).abs() <= btol,
                "interior alpha {i}: residual {} vs edge {}",
                res[i],
                (1.0 - t) * eps
            );
            seen += 1;
        }
        if model.beta[i] > 1e-6 * cap_b && model.beta[i] < cap_b - 1e-6 * cap_b {
            assert!(
                (res[i] + t * eps).abs() <= btol,
                "interior beta {i}: residual {} vs edge {}",
                res[i],
                -t * eps
            );
            seen += 1;
        }
    }
    assert!(seen > 0, "expected at least one boundary support vector");
}

#[test]
fn nu_bounds_errors_and_support_vectors() {
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for _ in 0..8 {
        let l = 100;
        let t = rng.gen_range(0.2..0.8);
        let nu = rng.gen_range(0.15..0.9);
        let (data, model) = ad1_fit(l, 0.2, t, nu, rng.gen());
        let stats = tube_stats(&model, &data).unwrap();
        let cushion = 2.0 / l as f64;
        assert!(
            stats.frac_errors <= nu + cushion,
            "errors {} above nu {nu}",
            stats.frac_errors
        );
        assert!(
            stats.frac_sv >= nu - cushion,
            "svs {} below nu {nu}",
            stats.frac_sv
        );
        assert!(stats.n_above + stats.n_below <= stats.n_sv + 2);
    }
}

#[test]
fn active_budget_when_tube_is_open() {
    // Recovered eps > 0 forces the budget inequality to equality.
    let (data, model) = ad1_fit(90, 0.3, 0.35, 0.4, 29);
    assert!(model.eps_width > 1e-6);
    let t = model.config.tau.value();
    let budget: f64 = model
        .alpha
        .iter()
        .map(|a| (1.0 - t) * a)
        .chain(model.beta.iter().map(|b| t * b))
        .sum();
    let rhs = model.config.c * model.config.nu.unwrap() * t * (1.0 - t);
    assert!(
        (budget - rhs).abs() <= 1e-6,
        "budget {budget} vs rhs {rhs}"
    );
    let _ = data;
}

#[test]
fn nu_one_shrinks_tube_to_zero() {
    let (_, model) = ad1_fit(100, 0.2, 0.2, 1.0, 31);
    assert!(
        model.eps_width < 0.05,
        "nu = 1 should close the tube, eps = {}",
        model.eps_width
    );
}

#[test]
fn eps_model_reproduces_nu_solution() {
    // A nu fit with per-point weight C'/l equals an eps fit with
    // eps = eps_bar and C = C'/l.
    let mut rng = ChaCha12Rng::seed_from_u64(37);
    let mut compared = 0;
    for _ in 0..8 {
        let l = 60;
        let t = rng.gen_range(0.2..0.8);
        let nu = rng.gen_range(0.25..0.75);
        let data = generate(&SynthSpec::ad1(l, 0.2, rng.gen())).unwrap();
        let c_nu = 2.0 * l as f64;
        let nu_cfg = FitConfig::nu_svqr(tau(t), c_nu, nu, KernelSpec::rbf(1.0));
        let nu_model = fit(&data, &nu_cfg).unwrap();
        if nu_model.diagnostics.recovery_degenerate {
            continue;
        }
        let eps_cfg = FitConfig::eps_svqr(tau(t), c_nu / l as f64, nu_model.eps_width, KernelSpec::rbf(1.0));
        let eps_model = fit(&data, &eps_cfg).unwrap();
        if eps_model.diagnostics.recovery_degenerate {
            continue;
        }
        let pn = nu_model.predict(&data.x).unwrap();
        let pe = eps_model.predict(&data.x).unwrap();
        let diff = pn
            .iter()
            .zip(&pe)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(diff <= 1e-4, "prediction mismatch {diff:e}");
        compared += 1;
    }
    assert!(compared >= 4, "too many degenerate fits ({compared} compared)");
}

#[test]
fn strong_duality_on_reconstruction() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for _ in 0..6 {
        let l = 60;
        let t = rng.gen_range(0.2..0.8);
        let data = generate(&SynthSpec::ad1(l, 0.25, rng.gen())).unwrap();

        // nu model
        let nu_cfg = FitConfig::nu_svqr(tau(t), 2.0 * l as f64, rng.gen_range(0.2..0.8), KernelSpec::rbf(1.0));
        let m = fit(&data, &nu_cfg).unwrap();
        let eps = m.eps_width;
        let slack_cost: f64 = residuals(&m, &data)
            .iter()
            .map(|r| t * (r - (1.0 - t) * eps).max(0.0) + (1.0 - t) * (-r - t * eps).max(0.0))
            .sum();
        let w_norm2 = quad_form_weights(&m, &data);
        let c = nu_cfg.c;
        let primal = 0.5 * w_norm2
            + c * (nu_cfg.nu.unwrap() * t * (1.0 - t) * eps + slack_cost / l as f64);
        let dual = m.diagnostics.objective;
        assert!(
            (primal + dual).abs() <= 1e-5 * (1.0 + dual.abs()),
            "nu duality gap: primal {primal}, dual {dual}"
        );

        // eps model
        let eps_cfg = FitConfig::eps_svqr(tau(t), 2.0, rng.gen_range(0.0..0.3), KernelSpec::rbf(1.0));
        let m2 = fit(&data, &eps_cfg).unwrap();
        let e2 = eps_cfg.eps.unwrap();
        let slack_cost2: f64 = residuals(&m2, &data)
            .iter()
            .map(|r| t * (r - (1.0 - t) * e2).max(0.0) + (1.0 - t) * (-r - t * e2).max(0.0))
            .sum();
        let primal2 = 0.5 * quad_form_weights(&m2, &data) + eps_cfg.c * slack_cost2;
        let dual2 = m2.diagnostics.objective;
        assert!(
            (primal2 + dual2).abs() <= 1e-5 * (1.0 + dual2.abs()),
            "eps duality gap: primal {primal2}, dual {dual2}"
        );
    }
}

/// `w' w = coeffs' K coeffs` recomputed from scratch.
fn quad_form_weights(model: &TrainedModel, data: &Dataset) -> f64 {
    let gram = model.config.kernel.gram(&data.x).unwrap();
    let l = data.len();
    let mut acc = 0.0;
    for i in 0..l {
        for j in 0..l {
            acc += model.coeffs[i] * gram.get(i, j) * model.coeffs[j];
        }
    }
    acc
}

#[test]
fn toy_fit_matches_enumeration_oracle_with_manual_recovery() {
    let data = Dataset::univariate(&[-1.0, 0.2, 1.5], &[0.8, -0.3, 0.5]).unwrap();
    let t = 0.4;
    let cfg = FitConfig::nu_svqr(tau(t), 9.0, 0.4, KernelSpec::rbf(1.3));
    let model = fit(&data, &cfg).unwrap();

    let gram = cfg.kernel.gram(&data.x).unwrap();
    let problem = build_nu_dual(&data, &cfg, gram.clone()).unwrap();
    let oracle = brute_force_optimum(&problem).unwrap();
    assert!(
        (model.diagnostics.objective - oracle.objective).abs() <= 1e-6 * (1.0 + oracle.objective.abs())
    );

    // Manual recovery from the oracle point.
    let l = 3;
    let (alpha, beta) = (&oracle.z[..l], &oracle.z[l..]);
    // budget must be tight here, otherwise multipliers are non-unique and
    // the comparison below would be meaningless
    let ineq = problem.ineq.as_ref().unwrap();
    assert!(ineq.rhs - ineq.value(&oracle.z) <= 1e-8 * (1.0 + ineq.rhs));

    let coeffs: Vec<f64> = alpha.iter().zip(beta).map(|(a, b)| a - b).collect();
    let f_tilde: Vec<f64> = (0..l)
        .map(|i| (0..l).map(|k| coeffs[k] * gram.get(k, i)).sum())
        .collect();
    let (cap_a, cap_b) = cfg.box_caps(l);
    let margin_a = 1e-7 * cap_a;
    let margin_b = 1e-7 * cap_b;
    let ups: Vec<f64> = (0..l)
        .filter(|&i| alpha[i] > margin_a && alpha[i] < cap_a - margin_a)
        .map(|i| data.y[i] - f_tilde[i])
        .collect();
    let downs: Vec<f64> = (0..l)
        .filter(|&i| beta[i] > margin_b && beta[i] < cap_b - margin_b)
        .map(|i| f_tilde[i] - data.y[i])
        .collect();
    if !ups.is_empty() && !downs.is_empty() {
        let manual_eps = (ups.iter().sum::<f64>() / ups.len() as f64
            + downs.iter().sum::<f64>() / downs.len() as f64)
            .max(0.0);
        assert!(
            (model.eps_width - manual_eps).abs() <= 1e-5,
            "eps {} vs manual {manual_eps}",
            model.eps_width
        );
        let manual_b: f64 = (ups
            .iter()
            .map(|u| u - (1.0 - t) * manual_eps)
            .chain(downs.iter().map(|d| -d + t * manual_eps))
            .sum::<f64>())
            / (ups.len() + downs.len()) as f64;
        assert!(
            (model.bias - manual_b).abs() <= 1e-5,
            "bias {} vs manual {manual_b}",
            model.bias
        );
    }
    for (got, want) in model.coeffs.iter().zip(&coeffs) {
        assert!((got - want).abs() <= 1e-5);
    }
}

#[test]
fn constant_shift_moves_bias_only() {
    let base = generate(&SynthSpec::ad1(50, 0.2, 77)).unwrap();
    let shifted = Dataset::new(
        base.x.clone(),
        base.y.iter().map(|y| y + 2.5).collect(),
    )
    .unwrap();
    let cfg = FitConfig::nu_svqr(tau(0.3), 100.0, 0.5, KernelSpec::rbf(1.0));
    let m1 = fit(&base, &cfg).unwrap();
    let m2 = fit(&shifted, &cfg).unwrap();
    for (a, b) in m1.coeffs.iter().zip(&m2.coeffs) {
        assert!((a - b).abs() <= 1e-6, "coeff drift {a} vs {b}");
    }
    assert!(
        ((m2.bias - m1.bias) - 2.5).abs() <= 1e-6,
        "bias shift {}",
        m2.bias - m1.bias
    );
    assert!((m1.eps_width - m2.eps_width).abs() <= 1e-6);
}

#[test]
fn predict_matches_double_loop_oracle() {
    let data = generate(&SynthSpec::ad1(40, 0.3, 5)).unwrap();
    let cfg = FitConfig::nu_svqr(tau(0.6), 80.0, 0.5, KernelSpec::rbf(0.9));
    let m = fit(&data, &cfg).unwrap();
    let queries = Mat::from_rows(&[vec![-3.2], vec![0.0], vec![1.7], vec![3.9]]).unwrap();
    let got = m.predict(&queries).unwrap();
    for (r, want) in got.iter().enumerate() {
        let xq = queries.get(r, 0);
        let mut acc = m.bias;
        for i in 0..data.len() {
            let xi = data.x.get(i, 0);
            acc += m.coeffs[i] * (-(xq - xi) * (xq - xi) / 0.9).exp();
        }
        assert!((want - acc).abs() < 1e-12);
    }
}

#[test]
fn tube_stats_matches_scalar_classification() {
    let (data, model) = ad1_fit(80, 0.25, 0.45, 0.5, 53);
    let stats = tube_stats(&model, &data).unwrap();
    let t = model.config.tau.value();
    let eps = model.eps_width;
    let y_scale = data.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let btol = 1e-6 * (1.0 + y_scale);
    let mut above = 0;
    let mut below = 0;
    for r in residuals(&model, &data) {
        if r > (1.0 - t) * eps + btol {
            above += 1;
        } else if r < -t * eps - btol {
            below += 1;
        }
    }
    assert_eq!(stats.n_above, above);
    assert_eq!(stats.n_below, below);
    assert_eq!(stats.n_sv, model.sv_indices.len());
    assert!((stats.frac_errors - (above + below) as f64 / 80.0).abs() < 1e-15);
}

#[test]
fn tube_stats_wide_planted_band_has_no_errors() {
    let data = generate(&SynthSpec::ad1(30, 0.1, 9)).unwrap();
    let cfg = FitConfig::eps_svqr(tau(0.5), 1.0, 50.0, KernelSpec::rbf(1.0));
    // A huge fixed tube swallows every point.
    let model = fit(&data, &cfg).unwrap();
    let stats = tube_stats(&model, &data).unwrap();
    assert_eq!(stats.n_above + stats.n_below, 0);
    assert_eq!(stats.frac_errors, 0.0);
}

#[test]
fn standard_model_is_eps_zero() {
    let data = generate(&SynthSpec::ad1(40, 0.2, 13)).unwrap();
    let std_cfg = FitConfig::standard_svqr(tau(0.3), 2.0, KernelSpec::rbf(1.0));
    let eps_cfg = FitConfig::eps_svqr(tau(0.3), 2.0, 0.0, KernelSpec::rbf(1.0));
    let m1 = fit(&data, &std_cfg).unwrap();
    let m2 = fit(&data, &eps_cfg).unwrap();
    assert_eq!(m1.eps_width, 0.0);
    let p1 = m1.predict(&data.x).unwrap();
    let p2 = m2.predict(&data.x).unwrap();
    for (a, b) in p1.iter().zip(&p2) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn coefficient_sum_vanishes() {
    let mut rng = ChaCha12Rng::seed_from_u64(61);
    for kind in [ModelKind::Nu, ModelKind::Eps, ModelKind::Standard] {
        let data = generate(&SynthSpec::ad1(70, 0.2, rng.gen())).unwrap();
        let cfg = match kind {
            ModelKind::Nu => FitConfig::nu_svqr(tau(0.4), 140.0, 0.5, KernelSpec::rbf(1.0)),
            ModelKind::Eps => FitConfig::eps_svqr(tau(0.4), 2.0, 0.05, KernelSpec::rbf(1.0)),
            ModelKind::Standard => FitConfig::standard_svqr(tau(0.4), 2.0, KernelSpec::rbf(1.0)),
        };
        let m = fit(&data, &cfg).unwrap();
        let s: f64 = m.coeffs.iter().sum();
        assert!(s.abs() <= 1e-6, "{kind:?}: coefficient sum {s:e}");
    }
}
