//! The two-regime threshold moving-average model
//!
//! ```text
//! y_n = μ₁ + e_n + Σ φᵢ e_{n−i}   if y_{n−d} ≤ r
//! y_n = μ₂ + e_n + Σ ψᵢ e_{n−i}   if y_{n−d} > r
//! ```
//!
//! with the regime expressions `b_n` (lower, μ₁/φ) and `a_n` (upper, μ₂/ψ)
//! and the indicators `U_n = 1(a_n ≤ r)`, `W_n = 1(b_n ≤ r) − 1(a_n ≤ r)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TmaError};
use crate::noise::{substream, Innovation, AUX_STREAM_BASE, MC_CHUNK};
use rand_distr::Distribution;

/// Default Monte Carlo sample count for the contraction factor.
pub const DEFAULT_DELTA_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TmaModel {
    mu1: f64,
    mu2: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    d: usize,
    r: f64,
    innovation: Innovation,
}

/// On-disk model description. `q` is optional and only cross-checked.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mu1: f64,
    pub mu2: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub d: usize,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    pub innovation: Innovation,
}

/// Upper (`a`) and lower (`b`) regime values on one innovation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimePair {
    pub a: f64,
    pub b: f64,
}

/// `U_n ∈ {0,1}` and `W_n ∈ {−1,0,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Indicators {
    pub u: u8,
    pub w: i8,
}

impl RegimePair {
    pub fn indicators(&self, r: f64) -> Indicators {
        indicators(*self, r)
    }
}

/// Sums `mu + e_n + Σ coeffs[i-1]·e_{n−i}` with a fixed evaluation order so
/// that every caller gets the same bits.
#[inline]
fn regime_value(mu: f64, coeffs: &[f64], lagged: impl Fn(usize) -> f64) -> f64 {
    let mut acc = mu + lagged(0);
    for (i, c) in coeffs.iter().enumerate() {
        acc += c * lagged(i + 1);
    }
    acc
}

pub fn indicators(pair: RegimePair, r: f64) -> Indicators {
    let upper = pair.a <= r;
    let lower = pair.b <= r;
    Indicators {
        u: u8::from(upper),
        w: i8::from(lower) - i8::from(upper),
    }
}

/// The unique `m ≥ 0` with `m·d < max(d, q+1) ≤ (m+1)·d`.
pub fn structural_m(d: usize, q: usize) -> usize {
    assert!(d >= 1, "delay must be positive");
    d.max(q + 1).div_ceil(d) - 1
}

impl TmaModel {
    pub fn new(
        mu1: f64,
        mu2: f64,
        phi: Vec<f64>,
        psi: Vec<f64>,
        d: usize,
        r: f64,
        innovation: Innovation,
    ) -> Result<Self> {
        ModelSpec {
            mu1,
            mu2,
            phi,
            psi,
            d,
            r,
            q: None,
            innovation,
        }
        .validate()
    }

    /// Example-3.1-shaped model: `q = 0`, `d = 1`.
    pub fn drift_switching(mu1: f64, mu2: f64, r: f64, innovation: Innovation) -> Result<Self> {
        Self::new(mu1, mu2, vec![], vec![], 1, r, innovation)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.validate()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            mu1: self.mu1,
            mu2: self.mu2,
            phi: self.phi.clone(),
            psi: self.psi.clone(),
            d: self.d,
            r: self.r,
            q: None,
            innovation: self.innovation,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("model serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }
    pub fn mu2(&self) -> f64 {
        self.mu2
    }
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn q(&self) -> usize {
        self.phi.len()
    }
    pub fn innovation(&self) -> Innovation {
        self.innovation
    }

    pub fn m(&self) -> usize {
        structural_m(self.d, self.q())
    }

    /// Number of pre-path values a recursive simulation needs: `max(d, q)`.
    pub fn init_len(&self) -> usize {
        self.d.max(self.q())
    }

    /// Both regimes coincide, so the model is a linear MA(q).
    pub fn is_linear(&self) -> bool {
        self.mu1 == self.mu2 && self.phi == self.psi
    }

    /// `window = (e_n, e_{n−1}, …, e_{n−q})`.
    pub fn regime_pair(&self, window: &[f64]) -> Result<RegimePair> {
        if window.len() != self.q() + 1 {
            return Err(TmaError::InvalidArgument(format!(
                "window length {} != q + 1 = {}",
                window.len(),
                self.q() + 1
            )));
        }
        Ok(self.pair_with(|i| window[i]))
    }

    /// Regime pair at time-ordered position `pos` of `innovations`
    /// (`innovations[pos]` is `e_n`, `innovations[pos - i]` is `e_{n−i}`).
    #[inline]
    pub(crate) fn pair_at(&self, innovations: &[f64], pos: usize) -> RegimePair {
        self.pair_with(|i| innovations[pos - i])
    }

    #[inline]
    pub(crate) fn pair_with(&self, lagged: impl Fn(usize) -> f64) -> RegimePair {
        RegimePair {
            a: regime_value(self.mu2, &self.psi, &lagged),
            b: regime_value(self.mu1, &self.phi, &lagged),
        }
    }

    /// The regime value selected by the lagged observation.
    #[inline]
    pub fn select(&self, pair: RegimePair, lagged_y: f64) -> f64 {
        if lagged_y <= self.r {
            pair.b
        } else {
            pair.a
        }
    }

    /// `δ = E|W₁|`. Exact for `q = 0`, Monte Carlo otherwise.
    pub fn contraction_delta(&self, mc_samples: usize, seed: u64) -> Result<DeltaEstimate> {
        if self.is_linear() {
            return Ok(DeltaEstimate {
                delta: 0.0,
                se: 0.0,
                samples: 0,
                exact: true,
            });
        }
        if self.q() == 0 {
            let g = |x: f64| self.innovation.cdf(x);
            let delta = (g(self.r - self.mu1) - g(self.r - self.mu2)).abs();
            return Ok(DeltaEstimate {
                delta,
                se: 0.0,
                samples: 0,
                exact: true,
            });
        }
        if mc_samples < 10_000 {
            return Err(TmaError::InvalidArgument(format!(
                "contraction_delta needs at least 10^4 samples, got {mc_samples}"
            )));
        }
        let hits = chunked_count(mc_samples, seed, |rng, n| {
            let mut window = vec![0.0; self.q() + 1];
            let mut count = 0u64;
            for _ in 0..n {
                for w in window.iter_mut() {
                    *w = self.innovation.sample(rng);
                }
                let ind = indicators(self.pair_with(|i| window[i]), self.r);
                count += u64::from(ind.w != 0);
            }
            count
        });
        let p = hits as f64 / mc_samples as f64;
        let se = (p * (1.0 - p) / mc_samples as f64).sqrt();
        Ok(DeltaEstimate {
            delta: p,
            se,
            samples: mc_samples,
            exact: false,
        })
    }

    /// Monte Carlo estimate of `P(a ≤ r, b ≤ r) + P(a > r, b > r) = 1 − δ`.
    ///
    /// With the shipped innovation kinds the density is strictly positive and
    /// this is always positive, so it is only reported, never used to reject.
    pub fn existence_margin(&self, mc_samples: usize, seed: u64) -> Result<f64> {
        Ok(1.0 - self.contraction_delta(mc_samples, seed)?.delta)
    }
}

/// Counts events over `total` samples in fixed-size chunks, chunk `i` using
/// auxiliary stream `AUX_STREAM_BASE + i`.
pub(crate) fn chunked_count<F>(total: usize, seed: u64, f: F) -> u64
where
    F: Fn(&mut rand_chacha::ChaCha20Rng, usize) -> u64 + Sync,
{
    let chunks = total.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = MC_CHUNK.min(total - c * MC_CHUNK);
            let mut rng = substream(seed, AUX_STREAM_BASE + c as u64);
            f(&mut rng, n)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub se: f64,
    pub samples: usize,
    pub exact: bool,
}

impl DeltaEstimate {
    /// Upper confidence value `δ̂ + 3·SE`, kept below 1.
    pub fn conservative(&self) -> f64 {
        (self.delta + 3.0 * self.se).min(1.0 - 1e-12)
    }
}

impl ModelSpec {
    pub fn validate(self) -> Result<TmaModel> {
        let bad = |msg: String| Err(TmaError::InvalidModel(msg));
        if self.phi.len() != self.psi.len() {
            return bad(format!(
                "phi has length {} but psi has length {}",
                self.phi.len(),
                self.psi.len()
            ));
        }
        if let Some(q) = self.q {
            if q != self.phi.len() {
                return bad(format!(
                    "declared q = {q} but coefficient vectors have length {}",
                    self.phi.len()
                ));
            }
        }
        if self.d < 1 {
            return bad("delay d must be at least 1".to_string());
        }
        let scalars = [("mu1", self.mu1), ("mu2", self.mu2), ("r", self.r)];
        for (name, v) in scalars {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        if self.phi.iter().chain(&self.psi).any(|c| !c.is_finite()) {
            return bad("MA coefficients must be finite".to_string());
        }
        Ok(TmaModel {
            mu1: self.mu1,
            mu2: self.mu2,
            phi: self.phi,
            psi: self.psi,
            d: self.d,
            r: self.r,
            innovation: self.innovation,
        })
    }
}
