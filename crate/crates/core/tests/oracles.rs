//! Independent reference computations checked against the library.

use tma::analytics::{
    ex31_acf, ex31_constants, ex31_constants_for, ex31_mean, ex31_moment_curve, ex31_skewness_kurtosis, ex31_variance,
    ex32_acf1, linear_ma_acf, thm31_h,
};
use tma::estimate::{
    dependence_decay, fit_decay, lambda_estimates, sample_acf, sample_acf_values, sample_moments, sample_moments_values,
};
use tma::noise::sample;
use tma::stationary::{simulate_closed_form, simulate_recursive};
use tma::{Innovation, TmaModel, Truncation};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `Φ(x) = 1/2 + φ(x) Σ x^{2k+1} / (1·3·…·(2k+1))`.
fn normal_cdf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) {
        k += 1.0;
        term *= x * x / (2.0 * k + 1.0);
        sum += term;
    }
    0.5 + (-0.5 * x * x).exp() / SQRT_2PI * sum
}

fn eq31() -> TmaModel {
    TmaModel::new(5.0, -3.0, vec![0.2], vec![0.8], 1, 0.5, Innovation::StandardNormal).unwrap()
}

fn ex31() -> TmaModel {
    TmaModel::drift_switching(4.0, -1.0, 0.0, Innovation::StandardNormal).unwrap()
}

fn closed_path(model: &TmaModel, n: usize, seed: u64) -> tma::SeriesPath {
    let delta = model.contraction_delta(1_000_000, seed).unwrap();
    let trunc = Truncation::default_for(model, &delta).unwrap();
    simulate_closed_form(model, n, &trunc, seed).unwrap()
}

#[test]
fn normal_cdf_matches_series() {
    let n = Innovation::StandardNormal;
    for i in -60..=60 {
        let x = i as f64 / 10.0;
        assert!((n.cdf(x) - normal_cdf_series(x)).abs() < 1e-12, "x = {x}");
    }
    assert!((n.cdf(1.0) - 0.841345).abs() < 1e-6);
}

#[test]
fn laplace_cdf_closed_form() {
    let l = Innovation::laplace(1.0).unwrap();
    assert!((l.cdf(0.5) - (1.0 - (-0.5f64).exp() / 2.0)).abs() < 1e-12);
    assert!((l.cdf(0.5) - 0.696735).abs() < 1e-6);
    let l = Innovation::laplace(2.0).unwrap();
    for i in -20..=20 {
        let x = i as f64 / 2.0;
        let dens = |t: f64| (-(t.abs()) / 2.0).exp() / 4.0;
        // split at the kink so Simpson sees smooth pieces
        let reference = if x <= 0.0 {
            simpson(dens, -80.0, x, 40_000)
        } else {
            simpson(dens, -80.0, 0.0, 40_000) + simpson(dens, 0.0, x, 40_000)
        };
        assert!((l.cdf(x) - reference).abs() < 1e-10, "x = {x}");
    }
}

/// Student-t via `t = √ν tan θ`, which turns the density into `cos^{ν−1} θ`.
fn student_t_cdf_quadrature(nu: f64, x: f64) -> f64 {
    let g = |th: f64| th.cos().powf(nu - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let upper = (x / nu.sqrt()).atan();
    simpson(g, -half, upper, 20_000) / simpson(g, -half, half, 20_000)
}

fn student_t_pfm_quadrature(nu: f64, c: f64) -> f64 {
    let half = std::f64::consts::FRAC_PI_2;
    let upper = (c / nu.sqrt()).atan();
    let norm = nu.sqrt() * simpson(|th| th.cos().powf(nu - 1.0), -half, half, 20_000);
    nu * simpson(|th| th.sin() * th.cos().powf(nu - 2.0), -half, upper, 20_000) / norm
}

#[test]
fn student_t_cdf_matches_quadrature() {
    for nu in [2.5, 3.0, 5.0, 12.0] {
        let t = Innovation::student_t(nu).unwrap();
        for i in -16..=16 {
            let x = i as f64 / 2.0;
            assert!(
                (t.cdf(x) - student_t_cdf_quadrature(nu, x)).abs() < 1e-9,
                "nu = {nu}, x = {x}"
            );
        }
    }
}

#[test]
fn partial_first_moments_match_quadrature() {
    let n = Innovation::StandardNormal;
    let l = Innovation::laplace(1.5).unwrap();
    for i in -12..=12 {
        let c = i as f64 / 3.0;
        let normal = simpson(|x| x * (-0.5 * x * x).exp() / SQRT_2PI, -40.0, c, 20_000);
        assert!((n.partial_first_moment(c).unwrap() - normal).abs() < 1e-10);
        let lap = |x: f64| x * (-(x.abs()) / 1.5).exp() / 3.0;
        let laplace = if c <= 0.0 {
            simpson(lap, -120.0, c, 40_000)
        } else {
            simpson(lap, -120.0, 0.0, 40_000) + simpson(lap, 0.0, c, 40_000)
        };
        assert!((l.partial_first_moment(c).unwrap() - laplace).abs() < 1e-9);
        for nu in [3.0, 6.5] {
            let t = Innovation::student_t(nu).unwrap();
            let reference = student_t_pfm_quadrature(nu, c);
            assert!(
                (t.partial_first_moment(c).unwrap() - reference).abs() < 1e-8,
                "nu = {nu}, c = {c}"
            );
        }
    }
}

#[test]
fn sampling_moments_by_monte_carlo() {
    let x = sample(&Innovation::StandardNormal, 1_000_000, 17);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    assert!(mean.abs() < 4e-3);

    let x = sample(&Innovation::laplace(1.0).unwrap(), 1_000_000, 18);
    let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    assert!((var / 2.0 - 1.0).abs() < 0.02, "var = {var}");

    for dist in [
        Innovation::student_t(5.0).unwrap(),
        Innovation::scaled_normal(2.5).unwrap(),
    ] {
        let x = sample(&dist, 1_000_000, 19);
        let mom = sample_moments_values(&x).unwrap();
        let var = dist.variance().unwrap();
        assert!((mom.variance.value - var).abs() < 4.0 * mom.variance.se, "{dist:?}");
        assert!(mom.mean.value.abs() < 4.0 * mom.mean.se, "{dist:?}");
    }
}

/// The marginal law of the drift-switching model is the two-component
/// mixture `δ₀ G(·−μ₁) + (1−δ₀) G(·−μ₂)`; its moments come from those of
/// the normal components.
#[test]
fn drift_switching_shape_matches_mixture() {
    for (mu1, mu2, r) in [(4.0, -1.0, 0.0), (4.0, -1.0, 2.5), (1.0, 3.0, -0.5), (-2.0, 2.0, 0.3)] {
        let c = ex31_constants(mu1, mu2, r, &Innovation::StandardNormal).unwrap();
        let p = c.delta0;
        // raw moments of N(μ, 1)
        let raw = |m: f64| [m, m * m + 1.0, m.powi(3) + 3.0 * m, m.powi(4) + 6.0 * m * m + 3.0];
        let (a, b) = (raw(mu1), raw(mu2));
        let mix: Vec<f64> = (0..4).map(|i| p * a[i] + (1.0 - p) * b[i]).collect();
        let mean = mix[0];
        let var = mix[1] - mean * mean;
        let m3 = mix[2] - 3.0 * mean * mix[1] + 2.0 * mean.powi(3);
        let m4 = mix[3] - 4.0 * mean * mix[2] + 6.0 * mean * mean * mix[1] - 3.0 * mean.powi(4);
        let shape = ex31_skewness_kurtosis(mu1, mu2, r, &Innovation::StandardNormal).unwrap();
        assert!((ex31_mean(&c, mu1, mu2) - mean).abs() < 1e-12);
        assert!((ex31_variance(&c, mu1, mu2) - var).abs() < 1e-12);
        assert!((shape.skewness - m3 / var.powf(1.5)).abs() < 1e-10);
        assert!((shape.kurtosis - m4 / (var * var)).abs() < 1e-10);
    }
}

#[test]
fn drift_switching_constants_by_monte_carlo() {
    let model = ex31();
    let c = ex31_constants_for(&model).unwrap();
    let path = closed_path(&model, 1_000_000, 21);
    let below: Vec<f64> = path.values.iter().map(|&y| f64::from(u8::from(y <= 0.0))).collect();
    let mom = sample_moments_values(&below).unwrap();
    assert!((mom.mean.value - c.delta0).abs() < 4.0 * mom.mean.se);
    let lambdas = lambda_estimates(&path, 0.0, 4).unwrap();
    for (k, est) in lambdas.iter().enumerate() {
        let truth = c.lambda(k + 1);
        assert!(
            (est.value - truth).abs() < 4.0 * est.se,
            "k = {}: {est:?} vs {truth}",
            k + 1
        );
    }
}

#[test]
fn figure_one_limits_and_shape() {
    let grid: Vec<f64> = (0..=280).map(|i| -6.0 + 0.05 * i as f64).collect();
    let curve = ex31_moment_curve(4.0, -1.0, &Innovation::StandardNormal, &grid).unwrap();
    let (_, left) = curve[0];
    assert!(left.skewness.abs() < 1e-2 && (left.kurtosis - 3.0).abs() < 1e-2);
    assert!(curve.iter().any(|(_, s)| s.skewness > 0.0) && curve.iter().any(|(_, s)| s.skewness < 0.0));
    assert!(curve.iter().any(|(_, s)| s.kurtosis > 3.0));
}

#[test]
fn analytic_acf_is_exactly_geometric() {
    for (mu1, mu2, r) in [(4.0, -1.0, 0.0), (2.0, -2.0, 0.5), (-1.0, 3.0, 1.0)] {
        let c = ex31_constants(mu1, mu2, r, &Innovation::StandardNormal).unwrap();
        let lb = c.beta.abs().ln();
        let k0 = 5;
        let base = ex31_acf(k0, &c, mu1, mu2).abs().ln();
        for k in k0..=50 {
            let rho = ex31_acf(k, &c, mu1, mu2);
            if rho == 0.0 {
                continue;
            }
            assert!((rho.abs().ln() - base - lb * (k - k0) as f64).abs() < 1e-9);
        }
        let lags: Vec<usize> = (1..=20).collect();
        let rho: Vec<f64> = lags.iter().map(|&k| ex31_acf(k, &c, mu1, mu2)).collect();
        let fit = fit_decay(&lags, &rho, None, (1, 20)).unwrap();
        assert!((fit.rate - c.beta.abs()).abs() < 1e-6);
    }
}

#[test]
fn drift_switching_acf_by_monte_carlo() {
    let model = ex31();
    let c = ex31_constants_for(&model).unwrap();
    let path = closed_path(&model, 1_000_000, 22);
    let acf = sample_acf(&path, 3).unwrap();
    for k in 1..=3 {
        let truth = ex31_acf(k, &c, 4.0, -1.0);
        assert!((acf.rho_hat[k] - truth).abs() < 3.0 * acf.se[k], "k = {k}");
    }
}

#[test]
fn convolution_probability_matches_quadrature() {
    let exact = ex32_acf1(0.2, 0.8, 0.5, &Innovation::StandardNormal, 10_000_000, 3).unwrap();
    assert!(exact.exact);
    let reference = (0.8 + (0.2 - 0.8) * exact.varrho) / (1.0 + 0.64 + (0.04 - 0.64) * exact.varrho);
    assert!((exact.rho1 - reference).abs() < 1e-14);
    assert_eq!(exact.acf(2), 0.0);

    // Laplace: P(e₂ + c e₁ ≤ r) = ∫ G(r − c x) g(x) dx by quadrature
    let b = 0.5f64.sqrt();
    let lap = Innovation::laplace(b).unwrap();
    let conv = |c: f64| {
        let f = |x: f64| lap.cdf(0.5 - c * x) * (-(x.abs()) / b).exp() / (2.0 * b);
        simpson(f, -40.0, 0.0, 40_000) + simpson(f, 0.0, 40.0, 40_000)
    };
    let below_psi = conv(0.8);
    let above_phi = 1.0 - conv(0.2);
    let varrho = below_psi / (above_phi + below_psi);
    let mc = ex32_acf1(0.2, 0.8, 0.5, &lap, 10_000_000, 4).unwrap();
    assert!(!mc.exact);
    assert!(
        (mc.varrho - varrho).abs() < 4.0 * mc.varrho_se,
        "{} vs {varrho} (se {})",
        mc.varrho,
        mc.varrho_se
    );
}

#[test]
fn feedback_example_h_constant() {
    assert!((thm31_h(&eq31()).unwrap() - 77.4).abs() < 1e-12);
}

#[test]
fn contraction_factor_stable_across_seeds() {
    let model = eq31();
    let a = model.contraction_delta(1_000_000, 1).unwrap();
    let b = model.contraction_delta(1_000_000, 2).unwrap();
    assert!(a.delta > 0.0 && a.delta < 1.0);
    assert!((a.delta - b.delta).abs() < 3.0 * (a.se.powi(2) + b.se.powi(2)).sqrt());
}

#[test]
fn white_noise_acf_inside_band() {
    let model = TmaModel::drift_switching(0.0, 0.0, 0.0, Innovation::StandardNormal).unwrap();
    let path = simulate_recursive(&model, 100_000, 0, &[0.0], 5).unwrap();
    let acf = sample_acf(&path, 20).unwrap();
    let inside = (1..=20).filter(|&k| acf.rho_hat[k].abs() <= acf.band).count();
    assert!(inside >= 19);
}

#[test]
fn moving_average_variance_and_acf() {
    let model = TmaModel::new(0.0, 0.0, vec![0.5], vec![0.5], 1, 0.0, Innovation::StandardNormal).unwrap();
    let path = simulate_recursive(&model, 1_000_000, 0, &[0.0], 6).unwrap();
    let mom = sample_moments(&path).unwrap();
    assert!((mom.variance.value - 1.25).abs() < 3.0 * mom.variance.se);
    let acf = sample_acf(&path, 3).unwrap();
    assert!((acf.rho_hat[1] - linear_ma_acf(&[0.5], 1)).abs() < 3.0 * acf.se[1]);
    assert!((linear_ma_acf(&[0.5], 1) - 0.4).abs() < 1e-15);
}

#[test]
fn dependence_vanishes_for_independent_and_infinite_thresholds() {
    let iid = TmaModel::drift_switching(0.0, 0.0, 0.0, Innovation::StandardNormal).unwrap();
    let trunc = Truncation::fixed(1, 0.0, 0);
    let lags: Vec<usize> = (1..=10).collect();
    let rep = dependence_decay(&iid, 0.3, -0.2, &lags, 100_000, 7, &trunc).unwrap();
    for (d, s) in rep.dep.iter().zip(&rep.se) {
        assert!(*d <= 3.0 * s);
    }

    let ma2 = TmaModel::new(
        0.0,
        0.0,
        vec![0.6, 0.4],
        vec![0.6, 0.4],
        1,
        0.0,
        Innovation::StandardNormal,
    )
    .unwrap();
    let trunc = Truncation::fixed(1, 0.0, ma2.m());
    let rep = dependence_decay(&ma2, 0.0, 0.0, &[1, 2, 3, 4, 8], 100_000, 8, &trunc).unwrap();
    assert!(rep.dep[0] > 5.0 * rep.se[0]);
    for i in 2..5 {
        assert!(rep.dep[i] <= 3.0 * rep.se[i], "lag {}", rep.lags[i]);
    }

    let model = eq31();
    let trunc = Truncation::for_delta(0.997, model.m(), 1e-12).unwrap();
    let rep = dependence_decay(&model, f64::INFINITY, f64::INFINITY, &[1, 5, 50], 100_000, 9, &trunc).unwrap();
    assert!(rep.dep.iter().all(|&d| d == 0.0));
}

#[test]
fn geometric_fit_is_scale_invariant() {
    let lags: Vec<usize> = (1..=20).collect();
    let base: Vec<f64> = lags.iter().map(|&k| 0.8f64.powi(k as i32)).collect();
    let fit = fit_decay(&lags, &base, None, (1, 20)).unwrap();
    assert!((fit.rate - 0.8).abs() < 1e-10);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    let scaled: Vec<f64> = base.iter().map(|v| 37.0 * v).collect();
    let fit2 = fit_decay(&lags, &scaled, None, (1, 20)).unwrap();
    assert!((fit2.rate - 0.8).abs() < 1e-10);
    assert!((fit2.intercept - fit.intercept - 37f64.ln()).abs() < 1e-10);
}

#[test]
fn feedback_example_sample_acf_regression() {
    // n = 10^4, seed 1: strongly alternating, slowly decaying
    let model = eq31();
    let path = simulate_recursive(&model, 10_000, 6433, &[0.0], 1).unwrap();
    let acf = sample_acf_values(&path.values, 20).unwrap();
    for k in 1..=20 {
        assert!(acf.rho_hat[k].abs() > acf.band, "lag {k}");
        assert_eq!(acf.rho_hat[k] < 0.0, k % 2 == 1, "sign at lag {k}");
    }
    assert!(acf.rho_hat[1] < -0.85 && acf.rho_hat[20] > 0.8);
}
