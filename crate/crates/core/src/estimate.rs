//! Empirical statistics on simulated paths.
//!
//! Standard errors come from batch means: the series is cut into `⌈√n⌉`
//! contiguous batches, the statistic is evaluated on each, and the spread
//! of the batch values divided by `√batches` is reported.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TmaError};
use crate::model::TmaModel;
use crate::noise::InnovationStream;
use crate::stationary::{closed_form_on_stream, SeriesPath, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `exp(slope)` of the fit of `log|value|` on lag.
    pub rate: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r2: f64,
    pub lag_range: (usize, usize),
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfReport {
    pub lags: Vec<usize>,
    pub rho_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
    /// White-noise band `2/√n`.
    pub band: f64,
    pub decay_fit: Option<DecayFit>,
}

impl AcfReport {
    pub fn fit_decay(&mut self, lag_range: (usize, usize)) -> Result<DecayFit> {
        let fit = fit_decay(&self.lags, &self.rho_hat, Some(&self.se), lag_range)?;
        self.decay_fit = Some(fit);
        Ok(fit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependenceReport {
    pub lags: Vec<usize>,
    /// `|P̂(y₀≤u, y_k≤v) − P̂(y₀≤u) P̂(y_k≤v)|`.
    pub dep: Vec<f64>,
    pub se: Vec<f64>,
    pub u: f64,
    pub v: f64,
    pub replicates: usize,
    pub decay_fit: Option<DecayFit>,
}

impl DependenceReport {
    pub fn fit_decay(&mut self, lag_range: (usize, usize)) -> Result<DecayFit> {
        let fit = fit_decay(&self.lags, &self.dep, Some(&self.se), lag_range)?;
        self.decay_fit = Some(fit);
        Ok(fit)
    }
}

fn batch_count(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// Batches of equal length covering the first `batches · ⌊n / batches⌋` points.
fn batches(values: &[f64]) -> impl Iterator<Item = &[f64]> {
    let b = batch_count(values.len()).max(1);
    let len = values.len() / b;
    values.chunks_exact(len.max(1)).take(b)
}

fn spread_se(stats: &[f64]) -> f64 {
    let b = stats.len() as f64;
    if stats.len() < 2 {
        return f64::NAN;
    }
    let mean = stats.iter().sum::<f64>() / b;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Batch-means standard error of a statistic evaluated on `values`.
pub fn batch_means_se(values: &[f64], stat: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let per_batch: Vec<f64> = batches(values)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|b| stat(b))
        .collect();
    spread_se(&per_batch)
}

/// Biased autocovariances `γ̂_k = n⁻¹ Σ (x_t − x̄)(x_{t+k} − x̄)`, `k = 0..=max_lag`.
pub fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag.min(n.saturating_sub(1)))
        .into_par_iter()
        .map(|k| {
            centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let g = autocovariance(x, max_lag);
    let g0 = g[0];
    g.iter().map(|v| if g0 > 0.0 { v / g0 } else { f64::NAN }).collect()
}

fn per_lag_batch_se(x: &[f64], max_lag: usize, f: fn(&[f64], usize) -> Vec<f64>) -> Vec<f64> {
    let per_batch: Vec<Vec<f64>> = batches(x)
        .filter(|b| b.len() > max_lag)
        .map(|b| f(b, max_lag))
        .collect();
    (0..=max_lag)
        .map(|k| spread_se(&per_batch.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect()
}

fn check_acf_length(n: usize, max_lag: usize) -> Result<()> {
    if n < 4 * max_lag || n < 2 {
        return Err(TmaError::InvalidArgument(format!(
            "path of length {n} is too short for max lag {max_lag} (need at least 4·max_lag)"
        )));
    }
    Ok(())
}

/// Sample ACF with the `n` denominator and a `±2/√n` band.
pub fn sample_acf(path: &SeriesPath, max_lag: usize) -> Result<AcfReport> {
    sample_acf_values(&path.values, max_lag)
}

pub fn sample_acf_values(values: &[f64], max_lag: usize) -> Result<AcfReport> {
    let n = values.len();
    check_acf_length(n, max_lag)?;
    let rho_hat = autocorrelation(values, max_lag);
    if rho_hat[0].is_nan() {
        return Err(TmaError::Degenerate("constant path has no autocorrelation".into()));
    }
    let mut se = per_lag_batch_se(values, max_lag, autocorrelation);
    se[0] = 0.0;
    Ok(AcfReport {
        lags: (0..=max_lag).collect(),
        rho_hat,
        se,
        n,
        band: 2.0 / (n as f64).sqrt(),
        decay_fit: None,
    })
}

/// Sample autocovariances `γ̂_0 … γ̂_{max_lag}` with batch-means SEs.
pub fn sample_autocovariance(path: &SeriesPath, max_lag: usize) -> Result<Vec<Estimate>> {
    let n = path.len();
    check_acf_length(n, max_lag)?;
    let g = autocovariance(&path.values, max_lag);
    let se = per_lag_batch_se(&path.values, max_lag, autocovariance);
    Ok(g.into_iter()
        .zip(se)
        .map(|(value, se)| Estimate { value, se })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: Estimate,
    pub variance: Estimate,
    pub skewness: Estimate,
    pub kurtosis: Estimate,
}

fn central_moments(x: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    [mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2)]
}

pub fn sample_moments(path: &SeriesPath) -> Result<SampleMoments> {
    sample_moments_values(&path.values)
}

pub fn sample_moments_values(values: &[f64]) -> Result<SampleMoments> {
    let n = values.len();
    if n < 10_000 {
        return Err(TmaError::InvalidArgument(format!(
            "moment estimation needs at least 10^4 points, got {n}"
        )));
    }
    let full = central_moments(values);
    if !(full[1] > 0.0) {
        return Err(TmaError::Degenerate("path has zero variance".into()));
    }
    let per_batch: Vec<[f64; 4]> = batches(values)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|b| central_moments(b))
        .collect();
    let se = |i: usize| spread_se(&per_batch.iter().map(|m| m[i]).collect::<Vec<_>>());
    let est = |i: usize| Estimate {
        value: full[i],
        se: se(i),
    };
    Ok(SampleMoments {
        n,
        mean: est(0),
        variance: est(1),
        skewness: est(2),
        kurtosis: est(3),
    })
}

/// Monte Carlo `λ_k = E[e_{n−k} 1(y_{n−1} ≤ r)]` for `k = 1..=max_k`, all
/// averaged over the same time points.
pub fn lambda_estimates(path: &SeriesPath, r: f64, max_k: usize) -> Result<Vec<Estimate>> {
    lambda_terms(path, r, max_k, |e, k, i| e(i, k)).map(|series| series.iter().map(|s| mean_estimate(s)).collect())
}

/// Monte Carlo `λ_k − β λ_{k−1}` for `k = 2..=max_k` (index 0 is `k = 2`).
pub fn lambda_recursion_residuals(path: &SeriesPath, r: f64, beta: f64, max_k: usize) -> Result<Vec<Estimate>> {
    let series = lambda_terms(
        path,
        r,
        max_k,
        |e, k, i| if k == 1 { 0.0 } else { e(i, k) - beta * e(i, k - 1) },
    )?;
    Ok(series[1..].iter().map(|s| mean_estimate(s)).collect())
}

fn lambda_terms(
    path: &SeriesPath,
    r: f64,
    max_k: usize,
    term: impl Fn(&dyn Fn(usize, usize) -> f64, usize, usize) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let first = max_k.max(1);
    if max_k == 0 || path.len() < first + 10_000 {
        return Err(TmaError::InvalidArgument(
            "lambda estimation needs max_k >= 1 and a long path".into(),
        ));
    }
    // position i is time n = start + i; e_{n−k} sits at innovations[i + q − k]
    let e = |i: usize, k: usize| path.innovations[i + path.q - k];
    Ok((1..=max_k)
        .map(|k| {
            (first..path.len())
                .map(|i| if path.values[i - 1] <= r { term(&e, k, i) } else { 0.0 })
                .collect()
        })
        .collect())
}

fn mean_estimate(series: &[f64]) -> Estimate {
    let value = series.iter().sum::<f64>() / series.len() as f64;
    let se = batch_means_se(series, |b| b.iter().sum::<f64>() / b.len() as f64);
    Estimate { value, se }
}

/// Joint-vs-product dependence at the given lags from `replicates`
/// independent closed-form stationary paths (replicate `i` uses innovation
/// stream pair `2i, 2i+1` of `seed`).
pub fn dependence_decay(
    model: &TmaModel,
    u: f64,
    v: f64,
    lags: &[usize],
    replicates: usize,
    seed: u64,
    trunc: &Truncation,
) -> Result<DependenceReport> {
    if replicates < 2 {
        return Err(TmaError::InvalidArgument("need at least two replicates".into()));
    }
    if lags.is_empty() {
        return Err(TmaError::InvalidArgument("no lags requested".into()));
    }
    let max_lag = *lags.iter().max().expect("non-empty");
    // row i: [1(y₀ ≤ u), 1(y_{k₁} ≤ v), 1(y_{k₂} ≤ v), …]
    let rows: Vec<Vec<bool>> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut stream = InnovationStream::new(model.innovation(), seed, rep);
            let (values, _, _) = closed_form_on_stream(model, 0, max_lag + 1, trunc, &mut stream);
            std::iter::once(values[0] <= u)
                .chain(lags.iter().map(|&k| values[k] <= v))
                .collect()
        })
        .collect();
    let rf = replicates as f64;
    let count = |col: usize| rows.iter().filter(|row| row[col]).count() as f64;
    let pu = count(0) / rf;
    let mut dep = Vec::with_capacity(lags.len());
    let mut se = Vec::with_capacity(lags.len());
    for j in 1..=lags.len() {
        let pv = count(j) / rf;
        let puv = rows.iter().filter(|row| row[0] && row[j]).count() as f64 / rf;
        let cov = puv - pu * pv;
        // variance of (A − p_u)(B − p_v) over replicates
        let var = rows
            .iter()
            .map(|row| {
                let t = (f64::from(u8::from(row[0])) - pu) * (f64::from(u8::from(row[j])) - pv);
                (t - cov).powi(2)
            })
            .sum::<f64>()
            / (rf - 1.0);
        dep.push(cov.abs());
        se.push((var / rf).sqrt());
    }
    Ok(DependenceReport {
        lags: lags.to_vec(),
        dep,
        se,
        u,
        v,
        replicates,
        decay_fit: None,
    })
}

/// Least-squares fit of `log|value|` on lag over `lag_range` (inclusive).
///
/// Points whose magnitude does not exceed five standard errors are dropped
/// when `ses` is given; a zero magnitude without an SE to excuse it is an
/// error, as is having fewer than four usable lags.
pub fn fit_decay(lags: &[usize], values: &[f64], ses: Option<&[f64]>, lag_range: (usize, usize)) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&lag, &v)) in lags.iter().zip(values).enumerate() {
        if lag < lag_range.0 || lag > lag_range.1 {
            continue;
        }
        let mag = v.abs();
        if let Some(se) = ses {
            if !(mag > 5.0 * se[i]) {
                continue;
            }
        }
        if !(mag > 0.0) || !mag.is_finite() {
            return Err(TmaError::Degenerate(format!("non-positive magnitude {v} at lag {lag}")));
        }
        xs.push(lag as f64);
        ys.push(mag.ln());
    }
    if xs.len() < 4 {
        return Err(TmaError::Degenerate(format!(
            "only {} usable lags for the decay fit",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if xs.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(DecayFit {
        rate: slope.exp(),
        slope,
        slope_se,
        intercept,
        r2,
        lag_range: (xs[0] as usize, *xs.last().expect("non-empty") as usize),
        used: xs.len(),
    })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}
