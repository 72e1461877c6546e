//! Exact formulas for the special cases that admit them.
//!
//! * Drift switching (`q = 0`, `d = 1`): autocorrelations, variance,
//!   skewness, kurtosis and the two-component marginal density.
//! * Zero-drift TMA(1) with delay at least 2: lag-one autocorrelation and
//!   cut-off after lag one.
//! * The geometric covariance envelope valid for every finite-variance model.

use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TmaError};
use crate::model::{DeltaEstimate, TmaModel};
use crate::noise::{substream, Innovation, AUX_STREAM_BASE, MC_CHUNK};

/// Monte Carlo sample count for convolution probabilities without a closed form.
pub const CONVOLUTION_MC_SAMPLES: usize = 10_000_000;

/// Constants of the drift-switching model `y_n = μ₁ + e_n` if `y_{n−1} ≤ r`,
/// `μ₂ + e_n` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ex31Constants {
    /// `G(r−μ₁) − G(r−μ₂)`, the lag-one correlation of the regime chain.
    pub beta: f64,
    /// Stationary probability of the lower regime, `P(y ≤ r)`.
    pub delta0: f64,
    /// `E[e_{n−1} 1(y_{n−1} ≤ r)]`.
    pub lambda1: f64,
    pub sigma2: f64,
}

impl Ex31Constants {
    /// `λ_k = E[e_{n−k} 1(y_{n−1} ≤ r)] = β^{k−1} λ₁`.
    ///
    /// Follows from `1(y_{n−1} ≤ r) = U_{n−1} + W_{n−1} 1(y_{n−2} ≤ r)` with
    /// `(U_{n−1}, W_{n−1})` a function of `e_{n−1}` alone.
    pub fn lambda(&self, k: usize) -> f64 {
        assert!(k >= 1, "lambda is defined for k >= 1");
        self.beta.powi(k as i32 - 1) * self.lambda1
    }
}

pub fn ex31_constants(mu1: f64, mu2: f64, r: f64, dist: &Innovation) -> Result<Ex31Constants> {
    let sigma2 = dist.variance()?;
    let g1 = dist.cdf(r - mu1);
    let g2 = dist.cdf(r - mu2);
    let beta = g1 - g2;
    let delta0 = g2 / (1.0 - g1 + g2);
    let pfm1 = dist.partial_first_moment(r - mu1)?;
    let pfm2 = dist.partial_first_moment(r - mu2)?;
    let lambda1 = pfm2 + delta0 * (pfm1 - pfm2);
    Ok(Ex31Constants {
        beta,
        delta0,
        lambda1,
        sigma2,
    })
}

/// Constants for a model of drift-switching shape.
pub fn ex31_constants_for(model: &TmaModel) -> Result<Ex31Constants> {
    require_ex31_shape(model)?;
    ex31_constants(model.mu1(), model.mu2(), model.r(), &model.innovation())
}

pub fn is_ex31_shape(model: &TmaModel) -> bool {
    model.q() == 0 && model.d() == 1
}

fn require_ex31_shape(model: &TmaModel) -> Result<()> {
    if is_ex31_shape(model) {
        Ok(())
    } else {
        Err(TmaError::ShapeMismatch(format!(
            "drift-switching formulas need q = 0 and d = 1, got q = {}, d = {}",
            model.q(),
            model.d()
        )))
    }
}

fn ex31_spread(c: &Ex31Constants, mu1: f64, mu2: f64) -> f64 {
    let diff = mu1 - mu2;
    diff * diff * c.delta0 * (1.0 - c.delta0)
}

pub fn ex31_mean(c: &Ex31Constants, mu1: f64, mu2: f64) -> f64 {
    mu2 + (mu1 - mu2) * c.delta0
}

/// `σ² + (μ₁−μ₂)² δ₀ (1−δ₀)`.
pub fn ex31_variance(c: &Ex31Constants, mu1: f64, mu2: f64) -> f64 {
    c.sigma2 + ex31_spread(c, mu1, mu2)
}

/// `ρ_k = [(μ₁−μ₂) λ_k + (μ₁−μ₂)² δ₀(1−δ₀) β^k] / [σ² + (μ₁−μ₂)² δ₀(1−δ₀)]`.
pub fn ex31_acf(k: usize, c: &Ex31Constants, mu1: f64, mu2: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let diff = mu1 - mu2;
    let spread = ex31_spread(c, mu1, mu2);
    (diff * c.lambda(k) + spread * c.beta.powi(k as i32)) / (c.sigma2 + spread)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeMoments {
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn ex31_skewness_kurtosis(mu1: f64, mu2: f64, r: f64, dist: &Innovation) -> Result<ShapeMoments> {
    let m3 = dist.raw_moment(3)?;
    let m4 = dist.raw_moment(4)?;
    let c = ex31_constants(mu1, mu2, r, dist)?;
    let (diff, p) = (mu1 - mu2, c.delta0);
    let var = ex31_variance(&c, mu1, mu2);
    let skewness = (m3 + diff.powi(3) * (p - 3.0 * p * p + 2.0 * p.powi(3))) / var.powf(1.5);
    let kurtosis = (m4
        + 6.0 * c.sigma2 * diff * diff * p * (1.0 - p)
        + diff.powi(4) * (p - 4.0 * p * p + 6.0 * p.powi(3) - 3.0 * p.powi(4)))
        / (var * var);
    Ok(ShapeMoments { skewness, kurtosis })
}

/// Skewness and kurtosis as functions of the threshold, one row per grid point.
pub fn ex31_moment_curve(mu1: f64, mu2: f64, dist: &Innovation, grid: &[f64]) -> Result<Vec<(f64, ShapeMoments)>> {
    grid.par_iter()
        .map(|&r| Ok((r, ex31_skewness_kurtosis(mu1, mu2, r, dist)?)))
        .collect()
}

/// Marginal density `δ₀ h(x−μ₁) + (1−δ₀) h(x−μ₂)`; bimodal for well separated drifts.
pub fn ex31_marginal_density(x: f64, mu1: f64, mu2: f64, r: f64, dist: &Innovation) -> Result<f64> {
    let c = ex31_constants(mu1, mu2, r, dist)?;
    Ok(c.delta0 * dist.density(x - mu1) + (1.0 - c.delta0) * dist.density(x - mu2))
}

/// Lag-one autocorrelation of the zero-drift TMA(1) with delay ≥ 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ex32Acf {
    pub rho1: f64,
    /// Stationary probability `ϱ = P(y ≤ r)`.
    pub varrho: f64,
    pub varrho_se: f64,
    pub exact: bool,
}

impl Ex32Acf {
    /// The correlation cuts off after lag one.
    pub fn acf(&self, k: usize) -> f64 {
        match k {
            0 => 1.0,
            1 => self.rho1,
            _ => 0.0,
        }
    }
}

pub fn is_ex32_shape(model: &TmaModel) -> bool {
    model.q() == 1 && model.d() >= 2 && model.mu1() == 0.0 && model.mu2() == 0.0
}

/// `ϱ = P(e₂+ψe₁ ≤ r) / [P(e₂+φe₁ > r) + P(e₂+ψe₁ ≤ r)]`,
/// `ρ₁ = [ψ + (φ−ψ)ϱ] / [1 + ψ² + (φ²−ψ²)ϱ]`.
pub fn ex32_acf1(phi: f64, psi: f64, r: f64, dist: &Innovation, mc_samples: usize, seed: u64) -> Result<Ex32Acf> {
    dist.variance()?;
    let normal_sigma = match *dist {
        Innovation::StandardNormal => Some(1.0),
        Innovation::ScaledNormal { sigma } => Some(sigma),
        _ => None,
    };
    let (varrho, varrho_se, exact) = match normal_sigma {
        Some(sigma) => {
            // e₂ + c e₁ ~ N(0, σ²(1+c²))
            let std = Innovation::StandardNormal;
            let low_from_upper = std.cdf(r / (sigma * (1.0 + psi * psi).sqrt()));
            let up_from_lower = 1.0 - std.cdf(r / (sigma * (1.0 + phi * phi).sqrt()));
            (low_from_upper / (up_from_lower + low_from_upper), 0.0, true)
        }
        None => {
            let (v, se) = varrho_mc(phi, psi, r, dist, mc_samples, seed)?;
            (v, se, false)
        }
    };
    let rho1 = (psi + (phi - psi) * varrho) / (1.0 + psi * psi + (phi * phi - psi * psi) * varrho);
    Ok(Ex32Acf {
        rho1,
        varrho,
        varrho_se,
        exact,
    })
}

pub fn ex32_acf1_for(model: &TmaModel, mc_samples: usize, seed: u64) -> Result<Ex32Acf> {
    if !is_ex32_shape(model) {
        return Err(TmaError::ShapeMismatch(
            "lag-one formula needs q = 1, d >= 2 and zero drifts".into(),
        ));
    }
    ex32_acf1(
        model.phi()[0],
        model.psi()[0],
        model.r(),
        &model.innovation(),
        mc_samples,
        seed,
    )
}

fn varrho_mc(phi: f64, psi: f64, r: f64, dist: &Innovation, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 10_000 {
        return Err(TmaError::InvalidArgument(format!(
            "need at least 10^4 samples, got {n}"
        )));
    }
    let chunks = n.div_ceil(MC_CHUNK);
    // counts of A = 1(e₂+ψe₁ ≤ r), B = 1(e₂+φe₁ > r) and A·B
    let (a, b, ab) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let mut rng = substream(seed, AUX_STREAM_BASE + c as u64);
            let mut counts = (0u64, 0u64, 0u64);
            for _ in 0..len {
                let e1 = dist.sample(&mut rng);
                let e2 = dist.sample(&mut rng);
                let hit_a = e2 + psi * e1 <= r;
                let hit_b = e2 + phi * e1 > r;
                counts.0 += u64::from(hit_a);
                counts.1 += u64::from(hit_b);
                counts.2 += u64::from(hit_a && hit_b);
            }
            counts
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    let nf = n as f64;
    let (pa, pb, pab) = (a as f64 / nf, b as f64 / nf, ab as f64 / nf);
    let den = pa + pb;
    let varrho = pa / den;
    // delta method with the empirical covariance of (A, B)
    let (ga, gb) = (pb / (den * den), -pa / (den * den));
    let var = ga * ga * pa * (1.0 - pa) + gb * gb * pb * (1.0 - pb) + 2.0 * ga * gb * (pab - pa * pb);
    Ok((varrho, (var.max(0.0) / nf).sqrt()))
}

/// Autocorrelation of the linear MA(q) `e_n + Σ θᵢ e_{n−i}`.
pub fn linear_ma_acf(theta: &[f64], k: usize) -> f64 {
    let coef = |i: usize| {
        if i == 0 {
            1.0
        } else {
            theta.get(i - 1).copied().unwrap_or(0.0)
        }
    };
    let q = theta.len();
    let denom: f64 = (0..=q).map(|i| coef(i) * coef(i)).sum();
    if k > q {
        return 0.0;
    }
    (0..=q - k).map(|i| coef(i) * coef(i + k)).sum::<f64>() / denom
}

/// Geometric envelope for `|Cov(y₀, y_n)|`:
/// `H (m+1) / (1−√δ) · √δ^{⌊(n−q−d)/(d(m+1))⌋ − 1}` for `n ≥ (m+2)d + q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceBound {
    pub h: f64,
    pub m: usize,
    pub d: usize,
    pub q: usize,
    /// Point estimate (exact when `q = 0`).
    pub delta: DeltaEstimate,
    /// Value used inside the envelope: `δ̂ + 3·SE`.
    pub delta_used: f64,
}

impl CovarianceBound {
    pub fn first_lag(&self) -> usize {
        (self.m + 2) * self.d + self.q
    }

    pub fn bound(&self, n: usize) -> Option<f64> {
        if n < self.first_lag() {
            return None;
        }
        if self.h == 0.0 {
            return Some(0.0);
        }
        let root = self.delta_used.sqrt();
        let exponent = (n - self.q - self.d) / (self.d * (self.m + 1));
        Some(self.h * (self.m + 1) as f64 / (1.0 - root) * root.powi(exponent as i32 - 1))
    }
}

/// `H = [|μ₁−μ₂| + s Σ|φᵢ−ψᵢ|] · [|μ₁| + |μ₂| + s Σ(|φᵢ|+|ψᵢ|)]`, `s = (E e²)^{1/2}`.
pub fn thm31_h(model: &TmaModel) -> Result<f64> {
    let s = model.innovation().variance()?.sqrt();
    let diff: f64 = model.phi().iter().zip(model.psi()).map(|(p, q)| (p - q).abs()).sum();
    let size: f64 = model
        .phi()
        .iter()
        .zip(model.psi())
        .map(|(p, q)| p.abs() + q.abs())
        .sum();
    Ok(((model.mu1() - model.mu2()).abs() + s * diff) * (model.mu1().abs() + model.mu2().abs() + s * size))
}

pub fn thm31_bound_constants(model: &TmaModel, mc_samples: usize, seed: u64) -> Result<CovarianceBound> {
    let h = thm31_h(model)?;
    let delta = model.contraction_delta(mc_samples, seed)?;
    Ok(CovarianceBound {
        h,
        m: model.m(),
        d: model.d(),
        q: model.q(),
        delta,
        delta_used: delta.conservative(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: Innovation = Innovation::StandardNormal;

    #[test]
    fn single_regime_constants() {
        let c = ex31_constants(1.5, 1.5, 0.2, &N).unwrap();
        assert_eq!(c.beta, 0.0);
        assert!((c.delta0 - N.cdf(0.2 - 1.5)).abs() < 1e-15);
        assert!((c.lambda1 - N.partial_first_moment(0.2 - 1.5).unwrap()).abs() < 1e-15);
        for k in 1..10 {
            assert_eq!(ex31_acf(k, &c, 1.5, 1.5), 0.0);
        }
    }

    #[test]
    fn gaussian_single_regime_shape() {
        let s = ex31_skewness_kurtosis(2.0, 2.0, 0.0, &N).unwrap();
        assert!(s.skewness.abs() < 1e-15);
        assert!((s.kurtosis - 3.0).abs() < 1e-12);
    }

    #[test]
    fn acf_ratio_is_beta() {
        let c = ex31_constants(4.0, -1.0, 0.0, &N).unwrap();
        for k in 30..40 {
            let ratio = (ex31_acf(k + 1, &c, 4.0, -1.0) / ex31_acf(k, &c, 4.0, -1.0)).abs();
            assert!((ratio - c.beta.abs()).abs() < 1e-6);
        }
    }

    #[test]
    fn ex32_collapses_for_equal_coefficients() {
        let a = ex32_acf1(0.5, 0.5, 0.3, &N, 0, 0).unwrap();
        assert!((a.rho1 - 0.4).abs() < 1e-15);
        assert_eq!(a.acf(2), 0.0);
    }

    #[test]
    fn h_for_feedback_example() {
        let m = TmaModel::new(5.0, -3.0, vec![0.2], vec![0.8], 1, 0.5, N).unwrap();
        assert!((thm31_h(&m).unwrap() - 77.4).abs() < 1e-12);
        let lin = TmaModel::new(1.0, 1.0, vec![0.3], vec![0.3], 1, 0.0, N).unwrap();
        let b = thm31_bound_constants(&lin, 10_000, 1).unwrap();
        assert_eq!(b.h, 0.0);
        assert_eq!(b.bound(b.first_lag()), Some(0.0));
        assert_eq!(b.bound(0), None);
    }

    #[test]
    fn linear_ma_acf_matches_ma1() {
        assert!((linear_ma_acf(&[0.5], 1) - 0.4).abs() < 1e-15);
        assert_eq!(linear_ma_acf(&[0.5], 2), 0.0);
        assert_eq!(linear_ma_acf(&[], 0), 1.0);
    }
}
