//! Innovation distributions and seeded innovation streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha20 generator keyed
//! by `seed_from_u64(run_seed)` and positioned on a stream id with
//! [`ChaCha20Rng::set_stream`]. Stream ids are assigned as follows:
//!
//! * replicate `i` of a simulated path reads `e_1, e_2, ...` from stream `2i`
//!   and the pre-sample block `e_0, e_{-1}, ...` from stream `2i + 1`;
//! * auxiliary Monte Carlo work (contraction factor, convolution probabilities)
//!   uses streams at or above [`AUX_STREAM_BASE`], one per fixed-size chunk.
//!
//! Chunks are fixed in size, so results do not depend on how rayon schedules
//! them.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, TmaError};

/// First stream id reserved for auxiliary Monte Carlo estimators.
pub const AUX_STREAM_BASE: u64 = 1 << 62;

/// Samples per auxiliary Monte Carlo chunk.
pub const MC_CHUNK: usize = 1 << 15;

/// A ChaCha20 generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Distribution of the i.i.d. innovations `e_n`.
///
/// All kinds have mean zero and a continuous, strictly positive density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InnovationSpec", into = "InnovationSpec")]
pub enum Innovation {
    StandardNormal,
    StudentT { dof: f64 },
    Laplace { scale: f64 },
    ScaledNormal { sigma: f64 },
}

/// JSON form: `{"kind": "normal" | "student_t" | "laplace" | "scaled_normal", "param": number?}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl TryFrom<InnovationSpec> for Innovation {
    type Error = TmaError;

    fn try_from(spec: InnovationSpec) -> Result<Self> {
        let param = |name: &str| {
            spec.param
                .ok_or_else(|| TmaError::InvalidModel(format!("innovation kind '{}' needs param ({name})", spec.kind)))
        };
        match spec.kind.as_str() {
            "normal" => Ok(Innovation::StandardNormal),
            "student_t" => Innovation::student_t(param("dof")?),
            "laplace" => Innovation::laplace(param("scale")?),
            "scaled_normal" => Innovation::scaled_normal(param("sigma")?),
            other => Err(TmaError::InvalidModel(format!("unknown innovation kind '{other}'"))),
        }
    }
}

impl From<Innovation> for InnovationSpec {
    fn from(dist: Innovation) -> Self {
        let (kind, param) = match dist {
            Innovation::StandardNormal => ("normal", None),
            Innovation::StudentT { dof } => ("student_t", Some(dof)),
            Innovation::Laplace { scale } => ("laplace", Some(scale)),
            Innovation::ScaledNormal { sigma } => ("scaled_normal", Some(sigma)),
        };
        InnovationSpec {
            kind: kind.to_string(),
            param,
        }
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Innovation::StandardNormal => write!(f, "N(0,1)"),
            Innovation::StudentT { dof } => write!(f, "t({dof})"),
            Innovation::Laplace { scale } => write!(f, "Laplace({scale})"),
            Innovation::ScaledNormal { sigma } => write!(f, "N(0,{sigma}^2)"),
        }
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(TmaError::InvalidModel(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

impl Innovation {
    pub fn student_t(dof: f64) -> Result<Self> {
        Ok(Innovation::StudentT {
            dof: positive("student_t dof", dof)?,
        })
    }

    pub fn laplace(scale: f64) -> Result<Self> {
        Ok(Innovation::Laplace {
            scale: positive("laplace scale", scale)?,
        })
    }

    pub fn scaled_normal(sigma: f64) -> Result<Self> {
        Ok(Innovation::ScaledNormal {
            sigma: positive("normal sigma", sigma)?,
        })
    }

    /// Distribution function `G(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            Innovation::StandardNormal => std_normal_cdf(x),
            Innovation::ScaledNormal { sigma } => std_normal_cdf(x / sigma),
            Innovation::Laplace { scale } => {
                if x <= 0.0 {
                    0.5 * (x / scale).exp()
                } else {
                    1.0 - 0.5 * (-x / scale).exp()
                }
            }
            Innovation::StudentT { dof } => {
                if x.is_infinite() {
                    return if x > 0.0 { 1.0 } else { 0.0 };
                }
                let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + x * x));
                if x <= 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Innovation::StandardNormal => std_normal_pdf(x),
            Innovation::ScaledNormal { sigma } => std_normal_pdf(x / sigma) / sigma,
            Innovation::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            Innovation::StudentT { dof } => {
                let log_norm = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln();
                (log_norm - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()).exp()
            }
        }
    }

    /// `E[e · 1(e ≤ c)]`.
    ///
    /// Closed forms for every kind; for Student's t the antiderivative of
    /// `x f(x)` is `-(ν + x²) f(x) / (ν - 1)`.
    pub fn partial_first_moment(&self, c: f64) -> Result<f64> {
        if c == f64::INFINITY {
            self.raw_moment(1)?;
            return Ok(0.0);
        }
        if c == f64::NEG_INFINITY {
            self.raw_moment(1)?;
            return Ok(0.0);
        }
        Ok(match *self {
            Innovation::StandardNormal => -std_normal_pdf(c),
            Innovation::ScaledNormal { sigma } => -sigma * std_normal_pdf(c / sigma),
            Innovation::Laplace { scale } => {
                if c <= 0.0 {
                    0.5 * (c - scale) * (c / scale).exp()
                } else {
                    -0.5 * (c + scale) * (-c / scale).exp()
                }
            }
            Innovation::StudentT { dof } => {
                if dof <= 1.0 {
                    return Err(self.undefined(1));
                }
                -(dof + c * c) / (dof - 1.0) * self.density(c)
            }
        })
    }

    /// Raw moment `E[e^order]` for `order` in `1..=4`.
    pub fn raw_moment(&self, order: u32) -> Result<f64> {
        if !(1..=4).contains(&order) {
            return Err(TmaError::InvalidArgument(format!("moment order {order} not in 1..=4")));
        }
        let odd = order % 2 == 1;
        Ok(match *self {
            Innovation::StandardNormal => match order {
                2 => 1.0,
                4 => 3.0,
                _ => 0.0,
            },
            Innovation::ScaledNormal { sigma } => match order {
                2 => sigma * sigma,
                4 => 3.0 * sigma.powi(4),
                _ => 0.0,
            },
            Innovation::Laplace { scale } => match order {
                2 => 2.0 * scale * scale,
                4 => 24.0 * scale.powi(4),
                _ => 0.0,
            },
            Innovation::StudentT { dof } => {
                if dof <= f64::from(order) {
                    return Err(self.undefined(order));
                }
                match order {
                    2 => dof / (dof - 2.0),
                    4 => 3.0 * dof * dof / ((dof - 2.0) * (dof - 4.0)),
                    _ => {
                        debug_assert!(odd);
                        0.0
                    }
                }
            }
        })
    }

    /// `E[e²]`; an error for Student's t with `ν ≤ 2`.
    pub fn variance(&self) -> Result<f64> {
        self.raw_moment(2)
    }

    fn undefined(&self, order: u32) -> TmaError {
        TmaError::MomentUndefined {
            order,
            dist: self.to_string(),
        }
    }
}

impl Distribution<f64> for Innovation {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::StandardNormal => rng.sample(StandardNormal),
            Innovation::ScaledNormal { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            Innovation::Laplace { scale } => {
                let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Innovation::StudentT { dof } => {
                // t = Z / sqrt(χ²_ν / ν)
                let z: f64 = rng.sample(StandardNormal);
                let chi2 = rand_distr::ChiSquared::new(dof).expect("dof validated positive");
                let v: f64 = chi2.sample(rng);
                z / (v / dof).sqrt()
            }
        }
    }
}

/// `n` i.i.d. draws from stream 0 of `seed`.
///
/// These are the innovations `e_1, ..., e_n` that a single simulated path with
/// the same seed uses.
pub fn sample(dist: &Innovation, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Lazily generated two-sided innovation sequence `e_t`, `t ∈ ℤ`.
///
/// Positive indices come from the forward stream, `t ≤ 0` from the pre-sample
/// stream walking backwards, so any prefix of either side is reproducible.
#[derive(Debug, Clone)]
pub struct InnovationStream {
    dist: Innovation,
    forward: Vec<f64>,
    backward: Vec<f64>,
    forward_rng: ChaCha20Rng,
    backward_rng: ChaCha20Rng,
}

impl InnovationStream {
    pub fn new(dist: Innovation, seed: u64, replicate: u64) -> Self {
        InnovationStream {
            dist,
            forward: Vec::new(),
            backward: Vec::new(),
            forward_rng: substream(seed, 2 * replicate),
            backward_rng: substream(seed, 2 * replicate + 1),
        }
    }

    pub fn at(&mut self, t: i64) -> f64 {
        if t >= 1 {
            let idx = (t - 1) as usize;
            while self.forward.len() <= idx {
                let e = self.dist.sample(&mut self.forward_rng);
                self.forward.push(e);
            }
            self.forward[idx]
        } else {
            let idx = (-t) as usize;
            while self.backward.len() <= idx {
                let e = self.dist.sample(&mut self.backward_rng);
                self.backward.push(e);
            }
            self.backward[idx]
        }
    }

    /// `e_lo, ..., e_hi` (inclusive) in time order.
    pub fn range(&mut self, lo: i64, hi: i64) -> Vec<f64> {
        (lo..=hi).map(|t| self.at(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_is_deterministic() {
        let a = sample(&Innovation::StandardNormal, 3, 42);
        let b = sample(&Innovation::StandardNormal, 3, 42);
        assert_eq!(a, b);
        assert_ne!(a, sample(&Innovation::StandardNormal, 3, 43));
    }

    #[test]
    fn stream_forward_matches_sample() {
        let dist = Innovation::laplace(1.0).unwrap();
        let mut s = InnovationStream::new(dist, 7, 0);
        // touching the pre-sample first must not perturb the forward side
        let pre = s.range(-5, 0);
        let fwd = s.range(1, 50);
        assert_eq!(fwd, sample(&dist, 50, 7));
        let mut s2 = InnovationStream::new(dist, 7, 0);
        assert_eq!(s2.range(-5, 0), pre);
    }

    #[test]
    fn cdf_reference_points() {
        let n = Innovation::StandardNormal;
        assert_eq!(n.cdf(0.0), 0.5);
        assert_eq!(n.cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(n.cdf(f64::INFINITY), 1.0);
        let l = Innovation::laplace(1.0).unwrap();
        assert!((l.cdf(0.5) - (1.0 - (-0.5f64).exp() / 2.0)).abs() < 1e-15);
        assert!((l.cdf(0.5) - 0.696735).abs() < 1e-6);
        let t = Innovation::student_t(3.0).unwrap();
        assert_eq!(t.cdf(0.0), 0.5);
        assert_eq!(t.cdf(f64::INFINITY), 1.0);
        // t_1 is Cauchy: G(1) = 3/4
        let c = Innovation::student_t(1.0).unwrap();
        assert!((c.cdf(1.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn partial_first_moment_reference_points() {
        let n = Innovation::StandardNormal;
        assert_eq!(n.partial_first_moment(f64::INFINITY).unwrap(), 0.0);
        assert!((n.partial_first_moment(0.0).unwrap() + 0.398942).abs() < 1e-6);
        assert!(n.partial_first_moment(10.0).unwrap().abs() < 1e-6);
        let l = Innovation::laplace(1.0).unwrap();
        assert!((l.partial_first_moment(0.0).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn partial_first_moment_rejects_cauchy() {
        let c = Innovation::student_t(1.0).unwrap();
        assert!(matches!(
            c.partial_first_moment(0.0),
            Err(TmaError::MomentUndefined { order: 1, .. })
        ));
    }

    #[test]
    fn raw_moments() {
        let n = Innovation::StandardNormal;
        assert_eq!(n.raw_moment(3).unwrap(), 0.0);
        assert_eq!(n.raw_moment(4).unwrap(), 3.0);
        assert_eq!(Innovation::laplace(1.0).unwrap().raw_moment(4).unwrap(), 24.0);
        let t4 = Innovation::student_t(4.0).unwrap();
        assert!(t4.raw_moment(3).is_ok());
        assert!(t4.raw_moment(4).is_err());
        assert!(Innovation::student_t(2.0).unwrap().variance().is_err());
        assert!(n.raw_moment(5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t: Innovation = serde_json::from_str(r#"{"kind":"student_t","param":5}"#).unwrap();
        assert_eq!(t, Innovation::StudentT { dof: 5.0 });
        let n: Innovation = serde_json::from_str(r#"{"kind":"normal"}"#).unwrap();
        assert_eq!(serde_json::to_string(&n).unwrap(), r#"{"kind":"normal"}"#);
        assert!(serde_json::from_str::<Innovation>(r#"{"kind":"laplace"}"#).is_err());
        assert!(serde_json::from_str::<Innovation>(r#"{"kind":"uniform"}"#).is_err());
        assert!(serde_json::from_str::<Innovation>(r#"{"kind":"scaled_normal","param":-1}"#).is_err());
    }
}
