//! Path construction: forward recursion from initial values, and the
//! closed-form stationary solution built from the indicator series
//!
//! ```text
//! α_{n−d} = Σ_{j≥1} (Π_{s=1}^{j−1} W_{n−sd}) U_{n−jd}
//! y_n     = a_n + (b_n − a_n) α_{n−d}
//! ```
//!
//! The series index `j` runs from 1 as written above. Writing `τ = n − d`
//! gives the equivalent form `α_τ = Σ_{j≥0} (Π_{s=0}^{j−1} W_{τ−sd}) U_{τ−jd}`
//! whose partial sums satisfy `α_{τ,k} = U_τ + W_τ α_{τ−d,k−1}`.
//!
//! Since `α ∈ {0,1}`, `y_n` is evaluated as a selection between `a_n` and
//! `b_n` rather than through the product, which keeps both constructions
//! bit-identical whenever they pick the same regime.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, TmaError};
use crate::model::{indicators, DeltaEstimate, Indicators, TmaModel};
use crate::noise::InnovationStream;

/// Target for the analytic truncation tail bound.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;
/// Upper limit on the number of series terms.
pub const MAX_TRUNCATION: usize = 10_000;
/// Closed-form construction is refused above this contraction factor.
pub const DELTA_REFUSAL: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Recursive,
    ClosedForm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Recursive => "recursive",
            Method::ClosedForm => "closed-form",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = TmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Method::Recursive),
            "closed-form" => Ok(Method::ClosedForm),
            other => Err(TmaError::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// A realized trajectory.
///
/// `values[i]` is `y_{start+i}`; `innovations[i]` is `e_{start−q+i}`, so the
/// first `q` innovations are pre-sample. For closed-form paths `alpha[i]` is
/// the regime indicator `α_{n−d}` used for `y_n`, `n = start + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPath {
    pub start: i64,
    pub values: Vec<f64>,
    pub innovations: Vec<f64>,
    pub alpha: Option<Vec<u8>>,
    pub q: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub model_hash: String,
    pub method: Method,
}

impl SeriesPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `e_n` aligned with `values[i]`.
    pub fn innovation_at(&self, i: usize) -> f64 {
        self.innovations[i + self.q]
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }
}

/// Truncation level of the series and its analytic tail bound
/// `(m+1) δ^{⌊(K−1)/(m+1)⌋} / (1−δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub k: usize,
    pub delta: f64,
    pub m: usize,
    pub tail_bound: f64,
}

pub fn tail_bound(delta: f64, m: usize, k: usize) -> f64 {
    assert!(k >= 1);
    if delta >= 1.0 {
        return f64::INFINITY;
    }
    let exponent = ((k - 1) / (m + 1)) as i32;
    (m + 1) as f64 * delta.powi(exponent) / (1.0 - delta)
}

impl Truncation {
    /// Smallest `K` whose tail bound is below `tol`, capped at [`MAX_TRUNCATION`].
    pub fn for_delta(delta: f64, m: usize, tol: f64) -> Result<Self> {
        if !(0.0..DELTA_REFUSAL).contains(&delta) {
            return Err(TmaError::DeltaTooClose { delta });
        }
        let mut k = 1;
        while k < MAX_TRUNCATION && tail_bound(delta, m, k) >= tol {
            k += 1;
        }
        Ok(Self::fixed(k, delta, m))
    }

    pub fn fixed(k: usize, delta: f64, m: usize) -> Self {
        assert!(k >= 1, "truncation needs at least one term");
        Truncation {
            k,
            delta,
            m,
            tail_bound: tail_bound(delta, m, k),
        }
    }

    /// Default rule from a contraction-factor estimate.
    pub fn default_for(model: &TmaModel, delta: &DeltaEstimate) -> Result<Self> {
        Self::for_delta(delta.delta, model.m(), DEFAULT_TAIL_TOLERANCE)
    }
}

/// Default burn-in `max(500, ⌈10 (m+1) / (1 − δ)⌉)`.
pub fn default_burn_in(m: usize, delta: f64) -> usize {
    let gap = (1.0 - delta).max(1e-9);
    let steps = (10.0 * (m + 1) as f64 / gap).ceil();
    (steps.min(1e8) as usize).max(500)
}

/// One partial sum of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AlphaEntry {
    pub alpha: u8,
    pub terms_used: usize,
    /// All `K` terms were needed without the product of `W`s reaching zero.
    pub exhausted: bool,
}

/// Series values along a closed-form path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaSeries {
    pub truncation_k: usize,
    pub terms_used: Vec<usize>,
    pub alpha: Vec<u8>,
    pub tail_bound: f64,
}

/// Partial sum with `k` terms; `ind_at(j)` yields the indicators at lag
/// `j − 1` steps of `d` behind the series origin (`j = 1, 2, …`).
fn alpha_walk<F>(k: usize, mut ind_at: F) -> Result<AlphaEntry>
where
    F: FnMut(usize) -> Result<Indicators>,
{
    let mut product: i32 = 1;
    let mut sum: i32 = 0;
    for j in 1..=k {
        let ind = ind_at(j)?;
        sum += product * i32::from(ind.u);
        if j == k {
            break;
        }
        product *= i32::from(ind.w);
        if product == 0 {
            return Ok(AlphaEntry {
                alpha: to_bit(sum),
                terms_used: j,
                exhausted: false,
            });
        }
    }
    Ok(AlphaEntry {
        alpha: to_bit(sum),
        terms_used: k,
        exhausted: true,
    })
}

fn to_bit(sum: i32) -> u8 {
    debug_assert!(sum == 0 || sum == 1, "partial sum {sum} outside {{0,1}}");
    sum as u8
}

/// `α_{n−d,K}` where `innovations[index]` is `e_n`.
pub fn alpha_series(model: &TmaModel, innovations: &[f64], index: usize, k: usize) -> Result<AlphaEntry> {
    if k == 0 {
        return Err(TmaError::InvalidArgument("truncation K must be at least 1".into()));
    }
    if index >= innovations.len() {
        return Err(TmaError::InvalidArgument(format!(
            "index {index} outside innovation vector of length {}",
            innovations.len()
        )));
    }
    let (d, q) = (model.d(), model.q());
    alpha_walk(k, |j| {
        let back = j * d;
        if index < back + q {
            return Err(TmaError::InsufficientHistory {
                needed: index as i64 - (back + q) as i64,
                available: 0,
            });
        }
        Ok(indicators(model.pair_at(innovations, index - back), model.r()))
    })
}

struct IndicatorSource<'m> {
    model: &'m TmaModel,
    window: Vec<f64>,
}

impl<'m> IndicatorSource<'m> {
    fn new(model: &'m TmaModel) -> Self {
        IndicatorSource {
            model,
            window: vec![0.0; model.q() + 1],
        }
    }

    fn at(&mut self, stream: &mut InnovationStream, t: i64) -> Indicators {
        for (i, w) in self.window.iter_mut().enumerate() {
            *w = stream.at(t - i as i64);
        }
        let window = &self.window;
        indicators(self.model.pair_with(|i| window[i]), self.model.r())
    }

    /// `α_{τ,K}` evaluated directly from the stream.
    fn walk(&mut self, stream: &mut InnovationStream, tau: i64, k: usize) -> AlphaEntry {
        let d = self.model.d() as i64;
        alpha_walk(k, |j| Ok(self.at(stream, tau - (j as i64 - 1) * d))).expect("stream never runs out")
    }
}

/// Closed-form values for `n ∈ [start, start + n − 1]` from `stream`.
///
/// Series values are propagated with `α_τ = U_τ + W_τ α_{τ−d}` while the
/// run of non-zero `W`s behind `τ` is shorter than `K − 1`, which is exactly
/// when the `K`-term partial sum equals the full series; otherwise the
/// partial sum is evaluated term by term.
pub(crate) fn closed_form_on_stream(
    model: &TmaModel,
    start: i64,
    n: usize,
    trunc: &Truncation,
    stream: &mut InnovationStream,
) -> (Vec<f64>, Vec<f64>, AlphaSeries) {
    let (d, q, k) = (model.d(), model.q(), trunc.k);
    let mut src = IndicatorSource::new(model);

    // α_τ for τ = start − d + i, i in 0..n, preceded by nothing: the first d
    // entries are walked directly.
    let mut alpha = Vec::with_capacity(n);
    let mut terms_used = Vec::with_capacity(n);
    let mut run: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let tau = start - d as i64 + i as i64;
        if i < d {
            let e = src.walk(stream, tau, k);
            alpha.push(e.alpha);
            terms_used.push(e.terms_used);
            run.push(if e.exhausted { k - 1 } else { e.terms_used - 1 });
            continue;
        }
        let ind = src.at(stream, tau);
        if ind.w == 0 {
            alpha.push(ind.u);
            terms_used.push(1);
            run.push(0);
            continue;
        }
        let r = (run[i - d] + 1).min(k.saturating_sub(1));
        if r + 1 < k {
            let prev = i32::from(alpha[i - d]);
            alpha.push(to_bit(i32::from(ind.u) + i32::from(ind.w) * prev));
            terms_used.push(r + 1);
            run.push(r);
        } else {
            let e = src.walk(stream, tau, k);
            alpha.push(e.alpha);
            terms_used.push(e.terms_used);
            run.push(if e.exhausted { k - 1 } else { e.terms_used - 1 });
        }
    }

    let innovations = stream.range(start - q as i64, start + n as i64 - 1);
    let values = (0..n)
        .map(|i| {
            let pair = model.pair_at(&innovations, i + q);
            if alpha[i] == 1 {
                pair.b
            } else {
                pair.a
            }
        })
        .collect();
    let series = AlphaSeries {
        truncation_k: k,
        terms_used,
        alpha,
        tail_bound: trunc.tail_bound,
    };
    (values, innovations, series)
}

/// Iterates the model forward from `init` (`init[len−1] = y_0`,
/// `init[len−2] = y_{−1}`, …), keeping `y_{burn_in+1} … y_{burn_in+n}`.
pub fn simulate_recursive(model: &TmaModel, n: usize, burn_in: usize, init: &[f64], seed: u64) -> Result<SeriesPath> {
    let mut stream = InnovationStream::new(model.innovation(), seed, 0);
    recursive_on_stream(model, n, burn_in, init, &mut stream, seed)
}

pub(crate) fn recursive_on_stream(
    model: &TmaModel,
    n: usize,
    burn_in: usize,
    init: &[f64],
    stream: &mut InnovationStream,
    seed: u64,
) -> Result<SeriesPath> {
    if n == 0 {
        return Err(TmaError::InvalidArgument("path length must be at least 1".into()));
    }
    let lead = model.init_len();
    if init.len() != lead {
        return Err(TmaError::InvalidArgument(format!(
            "initial vector has length {} but max(d, q) = {lead}",
            init.len()
        )));
    }
    let (d, q) = (model.d(), model.q());
    let total = burn_in + n;
    let innovations = stream.range(1 - q as i64, total as i64);
    let mut ys = Vec::with_capacity(lead + total);
    ys.extend_from_slice(init);
    for t in 0..total {
        let pair = model.pair_at(&innovations, t + q);
        let lagged = ys[lead + t - d];
        ys.push(model.select(pair, lagged));
    }
    Ok(SeriesPath {
        start: burn_in as i64 + 1,
        values: ys.split_off(lead + burn_in),
        innovations: innovations[burn_in..].to_vec(),
        alpha: None,
        q,
        burn_in,
        seed,
        model_hash: model.hash(),
        method: Method::Recursive,
    })
}

/// Closed-form path `y_1 … y_n`.
pub fn simulate_closed_form(model: &TmaModel, n: usize, trunc: &Truncation, seed: u64) -> Result<SeriesPath> {
    simulate_closed_form_offset(model, 0, n, trunc, seed)
}

/// Closed-form path `y_{offset+1} … y_{offset+n}`, aligned index for index
/// with a recursive run whose burn-in is `offset`.
pub fn simulate_closed_form_offset(
    model: &TmaModel,
    offset: usize,
    n: usize,
    trunc: &Truncation,
    seed: u64,
) -> Result<SeriesPath> {
    if n == 0 {
        return Err(TmaError::InvalidArgument("path length must be at least 1".into()));
    }
    if trunc.delta >= DELTA_REFUSAL {
        return Err(TmaError::DeltaTooClose { delta: trunc.delta });
    }
    let mut stream = InnovationStream::new(model.innovation(), seed, 0);
    let (values, innovations, series) = closed_form_on_stream(model, offset as i64 + 1, n, trunc, &mut stream);
    Ok(SeriesPath {
        start: offset as i64 + 1,
        values,
        innovations,
        alpha: Some(series.alpha),
        q: model.q(),
        burn_in: offset,
        seed,
        model_hash: model.hash(),
        method: Method::ClosedForm,
    })
}

/// Closed-form path together with the per-index series diagnostics.
pub fn closed_form_with_series(
    model: &TmaModel,
    n: usize,
    trunc: &Truncation,
    seed: u64,
) -> Result<(SeriesPath, AlphaSeries)> {
    let mut stream = InnovationStream::new(model.innovation(), seed, 0);
    let (values, innovations, series) = closed_form_on_stream(model, 1, n, trunc, &mut stream);
    let path = SeriesPath {
        start: 1,
        values,
        innovations,
        alpha: Some(series.alpha.clone()),
        q: model.q(),
        burn_in: 0,
        seed,
        model_hash: model.hash(),
        method: Method::ClosedForm,
    };
    Ok((path, series))
}

/// Last index at which the two paths differ (bitwise), `Some(0)` if they
/// never differ, `None` if they still differ at the final index.
///
/// Paths must cover the same index range.
pub fn coupling_time(x: &SeriesPath, y: &SeriesPath) -> Result<Option<i64>> {
    if x.start != y.start || x.len() != y.len() {
        return Err(TmaError::InvalidArgument("paths cover different index ranges".into()));
    }
    let last_diff = x
        .values
        .iter()
        .zip(&y.values)
        .rposition(|(a, b)| a.to_bits() != b.to_bits());
    Ok(match last_diff {
        None => Some(0),
        Some(i) if i + 1 == x.len() => None,
        Some(i) => Some(x.start + i as i64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingPair {
    pub first: usize,
    pub second: usize,
    pub time: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub horizon: usize,
    pub pairs: Vec<CouplingPair>,
}

impl CouplingReport {
    pub fn all_coupled(&self) -> bool {
        self.pairs.iter().all(|p| p.time.is_some())
    }

    pub fn max_time(&self) -> Option<i64> {
        self.pairs
            .iter()
            .map(|p| p.time)
            .try_fold(0, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// Runs the recursion from each initial vector on one shared innovation
/// stream and reports the coupling time of every pair.
pub fn coupling_check(model: &TmaModel, n: usize, inits: &[Vec<f64>], seed: u64) -> Result<CouplingReport> {
    if inits.len() < 2 {
        return Err(TmaError::InvalidArgument(
            "coupling needs at least two initial vectors".into(),
        ));
    }
    let paths = inits
        .iter()
        .map(|init| simulate_recursive(model, n, 0, init, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            pairs.push(CouplingPair {
                first: i,
                second: j,
                time: coupling_time(&paths[i], &paths[j])?,
            });
        }
    }
    Ok(CouplingReport { horizon: n, pairs })
}

/// Spread-out initial vectors around the threshold, for coupling checks.
pub fn default_inits(model: &TmaModel, count: usize) -> Vec<Vec<f64>> {
    let len = model.init_len();
    let scale = 10.0 + model.mu1().abs().max(model.mu2().abs());
    (0..count)
        .map(|c| {
            let frac = if count > 1 { c as f64 / (count - 1) as f64 } else { 0.5 };
            let level = model.r() + scale * (2.0 * frac - 1.0);
            (0..len)
                .map(|i| level + if i % 2 == 1 { -scale * frac } else { 0.0 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessViolation {
    pub index: i64,
    pub value: f64,
    pub expected: f64,
    pub reason: String,
}

/// Recomputes every value from its innovation window and lagged value and
/// demands bitwise equality. The first `d` values, whose lag lies before
/// the path, must equal one of the two regime values. Closed-form paths must
/// also carry `α_{n−d} = 1(y_{n−d} ≤ r)`.
pub fn check_exactness(model: &TmaModel, path: &SeriesPath) -> std::result::Result<(), ExactnessViolation> {
    let (d, q) = (model.d(), model.q());
    if path.q != q || path.innovations.len() != path.values.len() + q {
        return Err(ExactnessViolation {
            index: path.start,
            value: f64::NAN,
            expected: f64::NAN,
            reason: "innovation vector does not match the model order".into(),
        });
    }
    for (i, &y) in path.values.iter().enumerate() {
        let n = path.start + i as i64;
        let pair = model.pair_at(&path.innovations, i + q);
        if i >= d {
            let lagged = path.values[i - d];
            let expected = model.select(pair, lagged);
            if y.to_bits() != expected.to_bits() {
                return Err(ExactnessViolation {
                    index: n,
                    value: y,
                    expected,
                    reason: "regime recursion".into(),
                });
            }
            if let Some(alpha) = &path.alpha {
                if alpha[i] != u8::from(lagged <= model.r()) {
                    return Err(ExactnessViolation {
                        index: n,
                        value: f64::from(alpha[i]),
                        expected: f64::from(u8::from(lagged <= model.r())),
                        reason: "series indicator disagrees with lagged threshold event".into(),
                    });
                }
            }
        } else if y.to_bits() != pair.a.to_bits() && y.to_bits() != pair.b.to_bits() {
            return Err(ExactnessViolation {
                index: n,
                value: y,
                expected: pair.a,
                reason: "not a regime value".into(),
            });
        }
    }
    Ok(())
}

/// Monte Carlo estimate of `P(α_{0,K} ≠ α_{0,K+extra})` over independent
/// innovation streams (replicate `i` of `seed` for trial `i`).
pub fn truncation_disagreement(model: &TmaModel, k: usize, extra: usize, trials: usize, seed: u64) -> (f64, f64) {
    let mismatches: u64 = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut stream = InnovationStream::new(model.innovation(), seed, trial);
            let mut src = IndicatorSource::new(model);
            let short = src.walk(&mut stream, 0, k);
            if !short.exhausted {
                // the product already vanished; more terms add nothing
                return 0;
            }
            let long = src.walk(&mut stream, 0, k + extra);
            u64::from(short.alpha != long.alpha)
        })
        .sum();
    let p = mismatches as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Innovation;

    fn eq31() -> TmaModel {
        TmaModel::new(5.0, -3.0, vec![0.2], vec![0.8], 1, 0.5, Innovation::StandardNormal).unwrap()
    }

    #[test]
    fn linear_model_is_plain_ma() {
        let m = TmaModel::new(
            0.0,
            0.0,
            vec![0.4, -0.2],
            vec![0.4, -0.2],
            2,
            0.1,
            Innovation::StandardNormal,
        )
        .unwrap();
        let p = simulate_recursive(&m, 100, 0, &[0.0, 0.0], 3).unwrap();
        for i in 0..p.len() {
            let e = &p.innovations;
            let expected = 0.0 + e[i + 2] + 0.4 * e[i + 1] + -0.2 * e[i];
            assert_eq!(p.values[i], expected);
        }
        let trunc = Truncation::fixed(5, 0.0, m.m());
        let c = simulate_closed_form(&m, 100, &trunc, 3).unwrap();
        assert_eq!(c.values, p.values);
    }

    #[test]
    fn init_length_checked() {
        assert!(simulate_recursive(&eq31(), 10, 0, &[0.0, 0.0], 1).is_err());
        assert!(simulate_recursive(&eq31(), 0, 0, &[0.0], 1).is_err());
    }

    #[test]
    fn burn_in_aligns_indices() {
        let m = eq31();
        let full = simulate_recursive(&m, 60, 0, &[0.0], 9).unwrap();
        let tail = simulate_recursive(&m, 50, 10, &[0.0], 9).unwrap();
        assert_eq!(tail.start, 11);
        assert_eq!(&full.values[10..], &tail.values[..]);
        assert_eq!(&full.innovations[10..], &tail.innovations[..]);
    }

    #[test]
    fn identical_inits_couple_immediately() {
        let r = coupling_check(&eq31(), 1000, &[vec![1.0], vec![1.0]], 5).unwrap();
        assert_eq!(r.pairs[0].time, Some(0));
    }

    #[test]
    fn alpha_is_first_term_when_w_vanishes() {
        let m = TmaModel::new(1.0, 1.0, vec![0.5], vec![0.5], 2, 0.3, Innovation::StandardNormal).unwrap();
        let e = crate::noise::sample(&m.innovation(), 40, 4);
        for idx in 10..40 {
            let entry = alpha_series(&m, &e, idx, 4).unwrap();
            let u = indicators(m.pair_at(&e, idx - 2), 0.3).u;
            assert_eq!(entry.alpha, u);
            assert_eq!(entry.terms_used, 1);
        }
    }

    #[test]
    fn alpha_series_reports_short_history() {
        let m = eq31();
        let e = crate::noise::sample(&m.innovation(), 5, 4);
        assert!(matches!(
            alpha_series(&m, &e, 4, 100),
            Err(TmaError::InsufficientHistory { .. })
        ));
        assert!(alpha_series(&m, &e, 4, 0).is_err());
    }

    #[test]
    fn truncation_rule() {
        let t = Truncation::for_delta(0.5, 0, 1e-12).unwrap();
        assert!(t.tail_bound < 1e-12);
        assert!(tail_bound(0.5, 0, t.k - 1) >= 1e-12);
        assert_eq!(Truncation::for_delta(0.0, 1, 1e-12).unwrap().k, 3);
        assert_eq!(Truncation::for_delta(0.9999, 1, 1e-12).unwrap().k, MAX_TRUNCATION);
        assert!(Truncation::for_delta(1.0, 1, 1e-12).is_err());
    }

    #[test]
    fn burn_in_rule() {
        assert_eq!(default_burn_in(0, 0.5), 500);
        assert_eq!(default_burn_in(1, 0.99), 2000);
    }

    #[test]
    fn exactness_catches_corruption() {
        let m = eq31();
        let mut p = simulate_recursive(&m, 200, 0, &[0.0], 2).unwrap();
        assert!(check_exactness(&m, &p).is_ok());
        p.values[50] += 1e-12;
        let err = check_exactness(&m, &p).unwrap_err();
        assert!(err.index == 51 || err.index == 52);
    }
}
