//! End-to-end verification of one model: exactness, uniqueness, agreement
//! with closed-form moments, covariance envelope and decay of dependence.

use serde::Serialize;

use crate::analytics::{
    ex31_acf, ex31_constants_for, ex31_skewness_kurtosis, ex31_variance, ex32_acf1_for, is_ex31_shape, is_ex32_shape,
    linear_ma_acf, thm31_bound_constants, CONVOLUTION_MC_SAMPLES,
};
use crate::error::{Result, TmaError};
use crate::estimate::{dependence_decay, sample_acf, sample_autocovariance, sample_moments, DependenceReport};
use crate::model::{DeltaEstimate, TmaModel, DEFAULT_DELTA_SAMPLES};
use crate::stationary::{
    check_exactness, coupling_check, coupling_time, default_inits, simulate_closed_form, simulate_recursive,
    SeriesPath, Truncation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: &'static str,
    pub name: &'static str,
    pub status: Status,
    /// Worst observed discrepancy, in the units of `threshold`.
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub version: &'static str,
    pub model_hash: String,
    pub seed: u64,
    pub delta: DeltaEstimate,
    pub truncation_k: usize,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Length of the paths used for exactness, coupling and agreement.
    pub horizon: usize,
    /// Length of the path used for moment, ACF and covariance checks.
    pub moment_n: usize,
    pub delta_samples: usize,
    pub replicates: usize,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub lags: Option<Vec<usize>>,
    /// Check this path for exactness instead of freshly simulated ones.
    pub path: Option<SeriesPath>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 1,
            horizon: 10_000,
            moment_n: 1_000_000,
            delta_samples: DEFAULT_DELTA_SAMPLES,
            replicates: 100_000,
            u: None,
            v: None,
            lags: None,
            path: None,
        }
    }
}

/// Up to 40 lags spread over `[1, L]`, `L = clamp(⌈2(m+1)d / (1−δ)⌉, 40, 2000)`.
pub fn default_dependence_lags(model: &TmaModel, delta: f64) -> Vec<usize> {
    let reach = 2.0 * ((model.m() + 1) * model.d()) as f64 / (1.0 - delta).max(1e-9);
    let last = (reach.ceil() as usize).clamp(40, 2000);
    let mut lags: Vec<usize> = (0..40).map(|i| 1 + (i * (last - 1) + 19) / 39).collect();
    lags.dedup();
    lags
}

fn record(
    id: &'static str,
    name: &'static str,
    ok: bool,
    measured: f64,
    threshold: f64,
    detail: String,
) -> CheckRecord {
    CheckRecord {
        id,
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        measured: Some(measured),
        threshold: Some(threshold),
        detail,
    }
}

fn not_applicable(id: &'static str, name: &'static str, detail: impl Into<String>) -> CheckRecord {
    CheckRecord {
        id,
        name,
        status: Status::NotApplicable,
        measured: None,
        threshold: None,
        detail: detail.into(),
    }
}

fn failed(id: &'static str, name: &'static str, err: TmaError) -> CheckRecord {
    CheckRecord {
        id,
        name,
        status: Status::Fail,
        measured: None,
        threshold: None,
        detail: err.to_string(),
    }
}

pub fn verify(model: &TmaModel, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let delta = model.contraction_delta(cfg.delta_samples, cfg.seed)?;
    let trunc = Truncation::default_for(model, &delta)?;
    let init = vec![0.0; model.init_len()];
    let recursive = simulate_recursive(model, cfg.horizon, 0, &init, cfg.seed)?;
    let closed = simulate_closed_form(model, cfg.horizon, &trunc, cfg.seed)?;

    let mut checks = vec![
        check_exactness_step(model, cfg, &recursive, &closed),
        check_coupling(model, cfg),
        check_agreement(&recursive, &closed),
    ];
    let moment_path = simulate_closed_form(model, cfg.moment_n, &trunc, cfg.seed ^ 0x5eed_0001)?;
    checks.push(check_analytic(model, cfg, &moment_path).unwrap_or_else(|e| failed("d", ANALYTIC, e)));
    checks.push(check_bound(model, cfg, &moment_path).unwrap_or_else(|e| failed("e", BOUND, e)));
    checks.push(check_dependence(model, cfg, &delta, &trunc).unwrap_or_else(|e| failed("f", DEPENDENCE, e)));

    Ok(VerificationReport {
        version: env!("CARGO_PKG_VERSION"),
        model_hash: model.hash(),
        seed: cfg.seed,
        delta,
        truncation_k: trunc.k,
        checks,
    })
}

const EXACT: &str = "pointwise recursion exactness";
const COUPLING: &str = "coupling from distinct initial values";
const AGREEMENT: &str = "closed form agrees with recursion after coupling";
const ANALYTIC: &str = "closed-form moments and ACF vs Monte Carlo";
const BOUND: &str = "covariance envelope dominates";
const DEPENDENCE: &str = "joint-distribution dependence decays geometrically";

fn check_exactness_step(model: &TmaModel, cfg: &VerifyConfig, rec: &SeriesPath, closed: &SeriesPath) -> CheckRecord {
    let paths: Vec<&SeriesPath> = match &cfg.path {
        Some(p) => vec![p],
        None => vec![rec, closed],
    };
    let checked: usize = paths.iter().map(|p| p.len()).sum();
    for p in paths {
        if let Err(v) = check_exactness(model, p) {
            return record(
                "a",
                EXACT,
                false,
                (v.value - v.expected).abs(),
                0.0,
                format!(
                    "{} path violates the recursion at index {}: {}",
                    p.method, v.index, v.reason
                ),
            );
        }
    }
    record(
        "a",
        EXACT,
        true,
        0.0,
        0.0,
        format!("{checked} values recomputed bit for bit"),
    )
}

fn check_coupling(model: &TmaModel, cfg: &VerifyConfig) -> CheckRecord {
    let inits = default_inits(model, 5);
    match coupling_check(model, cfg.horizon, &inits, cfg.seed) {
        Ok(rep) => match rep.max_time() {
            Some(t) => record(
                "b",
                COUPLING,
                true,
                t as f64,
                cfg.horizon as f64,
                format!("all 10 pairs coupled by index {t}"),
            ),
            None => record(
                "b",
                COUPLING,
                false,
                f64::INFINITY,
                cfg.horizon as f64,
                "some pair never coupled".into(),
            ),
        },
        Err(e) => failed("b", COUPLING, e),
    }
}

fn check_agreement(rec: &SeriesPath, closed: &SeriesPath) -> CheckRecord {
    match coupling_time(rec, closed) {
        Ok(Some(t)) => record(
            "c",
            AGREEMENT,
            true,
            t as f64,
            rec.len() as f64,
            format!("identical from index {} through {}", t + 1, rec.end()),
        ),
        Ok(None) => record(
            "c",
            AGREEMENT,
            false,
            f64::INFINITY,
            rec.len() as f64,
            "paths still differ at the horizon".into(),
        ),
        Err(e) => failed("c", AGREEMENT, e),
    }
}

fn z(est: f64, truth: f64, se: f64) -> f64 {
    (est - truth).abs() / se
}

fn check_analytic(model: &TmaModel, cfg: &VerifyConfig, path: &SeriesPath) -> Result<CheckRecord> {
    if model.innovation().variance().is_err() {
        return Ok(not_applicable("d", ANALYTIC, "innovation variance is infinite"));
    }
    if is_ex31_shape(model) {
        let c = ex31_constants_for(model)?;
        let (mu1, mu2) = (model.mu1(), model.mu2());
        let acf = sample_acf(path, 1)?;
        let mom = sample_moments(path)?;
        let mut zs = vec![
            ("rho1", z(acf.rho_hat[1], ex31_acf(1, &c, mu1, mu2), acf.se[1])),
            (
                "variance",
                z(mom.variance.value, ex31_variance(&c, mu1, mu2), mom.variance.se),
            ),
        ];
        if let Ok(shape) = ex31_skewness_kurtosis(mu1, mu2, model.r(), &model.innovation()) {
            zs.push(("skewness", z(mom.skewness.value, shape.skewness, mom.skewness.se)));
            zs.push(("kurtosis", z(mom.kurtosis.value, shape.kurtosis, mom.kurtosis.se)));
        }
        let worst = zs.iter().map(|(_, v)| *v).fold(0.0, f64::max);
        let detail = zs
            .iter()
            .map(|(n, v)| format!("{n} z={v:.2}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Ok(record(
            "d",
            ANALYTIC,
            worst <= 4.0,
            worst,
            4.0,
            format!("drift-switching formulas: {detail}"),
        ));
    }
    if is_ex32_shape(model) {
        let a = ex32_acf1_for(model, CONVOLUTION_MC_SAMPLES, cfg.seed)?;
        let acf = sample_acf(path, 10)?;
        let se1 = (acf.se[1].powi(2) + a.varrho_se.powi(2)).sqrt();
        let z1 = z(acf.rho_hat[1], a.rho1, se1);
        let band = 3.0 / (acf.n as f64).sqrt();
        let cut = (2..=10).map(|k| acf.rho_hat[k].abs()).fold(0.0, f64::max);
        let ok = z1 <= 3.0 && cut <= band;
        return Ok(record(
            "d",
            ANALYTIC,
            ok,
            z1,
            3.0,
            format!("lag-one z={z1:.2}; max |rho_k|, k=2..10: {cut:.2e} vs band {band:.2e}"),
        ));
    }
    if model.is_linear() {
        let q = model.q();
        let acf = sample_acf(path, q + 10)?;
        let theory = |k| linear_ma_acf(model.phi(), k);
        let worst_z = (1..=q)
            .map(|k| z(acf.rho_hat[k], theory(k), acf.se[k]))
            .fold(0.0, f64::max);
        // Bartlett variance beyond the cut-off
        let bartlett = (1.0 + 2.0 * (1..=q).map(|k| theory(k).powi(2)).sum::<f64>()).sqrt();
        let band = 3.0 * bartlett / (acf.n as f64).sqrt();
        let cut = (q + 1..=q + 10).map(|k| acf.rho_hat[k].abs()).fold(0.0, f64::max);
        return Ok(record(
            "d",
            ANALYTIC,
            worst_z <= 4.0 && cut <= band,
            cut,
            band,
            format!(
                "linear MA({q}): max z below cut-off {worst_z:.2}; max |rho_k| beyond it {cut:.2e} (band {band:.2e})"
            ),
        ));
    }
    Ok(not_applicable(
        "d",
        ANALYTIC,
        "no closed-form ACF for this model shape; covered by simulation only",
    ))
}

fn check_bound(model: &TmaModel, cfg: &VerifyConfig, path: &SeriesPath) -> Result<CheckRecord> {
    if model.innovation().variance().is_err() {
        return Ok(not_applicable("e", BOUND, "innovation variance is infinite"));
    }
    let bound = thm31_bound_constants(model, cfg.delta_samples, cfg.seed)?;
    let first = bound.first_lag();
    let last = first.max(100).min(path.len() / 4);
    let cov = sample_autocovariance(path, last)?;
    let mut worst = f64::NEG_INFINITY;
    for (k, est) in cov.iter().enumerate().skip(first) {
        let b = bound.bound(k).expect("lag past first valid lag");
        worst = worst.max(est.value.abs() - b - 4.0 * est.se);
    }
    let mut detail = format!(
        "H={:.4}, m={}, delta used={:.6}, lags {first}..={last}",
        bound.h, bound.m, bound.delta_used
    );
    if is_ex31_shape(model) {
        let c = ex31_constants_for(model)?;
        let var = ex31_variance(&c, model.mu1(), model.mu2());
        for k in first..=100 {
            let exact = (ex31_acf(k, &c, model.mu1(), model.mu2()) * var).abs();
            worst = worst.max(exact - bound.bound(k).expect("valid lag"));
        }
        detail.push_str("; analytic covariances included");
    }
    Ok(record("e", BOUND, worst <= 0.0, worst, 0.0, detail))
}

fn check_dependence(
    model: &TmaModel,
    cfg: &VerifyConfig,
    delta: &DeltaEstimate,
    trunc: &Truncation,
) -> Result<CheckRecord> {
    let u = cfg.u.unwrap_or(model.r());
    let v = cfg.v.unwrap_or(model.r());
    let lags = cfg
        .lags
        .clone()
        .unwrap_or_else(|| default_dependence_lags(model, delta.delta));
    let mut rep = dependence_decay(model, u, v, &lags, cfg.replicates, cfg.seed, trunc)?;
    Ok(judge_dependence(&mut rep))
}

/// Geometric decay: negative slope with `r² ≥ 0.9` over lags above five
/// standard errors; when too few lags are that large, every lag past the
/// last significant one must be within four standard errors of zero.
pub fn judge_dependence(rep: &mut DependenceReport) -> CheckRecord {
    let range = (rep.lags[0], *rep.lags.last().expect("non-empty"));
    match rep.fit_decay(range) {
        Ok(fit) => record(
            "f",
            DEPENDENCE,
            fit.slope < 0.0 && fit.r2 >= 0.9,
            fit.r2,
            0.9,
            format!(
                "rate={:.6} slope={:.3e} r2={:.4} over lags {:?} ({} used)",
                fit.rate, fit.slope, fit.r2, fit.lag_range, fit.used
            ),
        ),
        Err(_) => {
            let last_sig = rep.dep.iter().zip(&rep.se).rposition(|(d, s)| *d > 5.0 * s);
            let start = last_sig.map_or(0, |i| i + 1);
            let worst = rep.dep[start..]
                .iter()
                .zip(&rep.se[start..])
                .map(|(d, s)| {
                    if *s > 0.0 {
                        d / s
                    } else if *d == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max);
            record(
                "f",
                DEPENDENCE,
                worst <= 4.0,
                worst,
                4.0,
                format!("too few significant lags to fit; max dep/SE beyond them {worst:.2}"),
            )
        }
    }
}
