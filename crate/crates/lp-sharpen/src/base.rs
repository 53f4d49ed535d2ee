//! Null models on ordered discrete supports.
//!
//! A [`BaseMeasure`] holds a finite (possibly truncated-and-renormalized)
//! pmf `p0` together with its cdf `F0`, mid-distribution function
//! `Fmid(x) = F0(x) - p0(x)/2`, and quantile transform `Q0`. These are the
//! probability-transform primitives every other module consumes.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Parametric family (plus parameters) generating a base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Family {
    Poisson {
        lambda: f64,
    },
    /// Mean-dispersion negative binomial: pmf ∝ C(x+φ-1, x) (μ/(μ+φ))^x (φ/(μ+φ))^φ.
    NegBinomial {
        mu: f64,
        phi: f64,
    },
    Binomial {
        trials: u32,
        prob: f64,
    },
    /// Uniform over the integers 1..=k.
    DiscreteUniform {
        k: u32,
    },
    /// Cell integrals of λe^{-λx} over `cells` equal-width bins spanning `window`.
    DiscretizedExponential {
        rate: f64,
        window: (f64, f64),
        cells: usize,
    },
    Custom {
        support: Vec<f64>,
        pmf: Vec<f64>,
    },
}

/// How infinite supports are cut down to a finite grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Extend the support until the pre-renormalization tail mass drops below this.
    pub tail_mass: f64,
    /// Additionally extend the support to at least this value (used to cover data).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cover: Option<f64>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            tail_mass: 1e-10,
            min_cover: None,
        }
    }
}

/// What truncation actually did, kept for report metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRecord {
    pub requested_tail: f64,
    /// Pre-renormalization mass beyond the last retained support point.
    pub dropped_mass: f64,
}

/// A finite null model `p0` with its probability transforms.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    support: Vec<f64>,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mid_cdf: Vec<f64>,
    family: Family,
    truncation: TruncationRecord,
    /// Bin edges, present only for the discretized exponential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<f64>>,
}

/// Observed sample as (value, count) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCounts {
    values: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
}

const SUPPORT_CAP: usize = 1_000_000;

/// Build a base measure from a parametric family under a truncation policy.
pub fn make_parametric(family: Family, truncation: TruncationPolicy) -> Result<BaseMeasure> {
    if !(truncation.tail_mass > 0.0 && truncation.tail_mass < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "truncation tail mass must be in (0,1), got {}",
            truncation.tail_mass
        )));
    }
    match &family {
        Family::Poisson { lambda } => {
            if !(lambda.is_finite() && *lambda > 0.0) {
                return Err(Error::InvalidParameter(format!("poisson lambda={lambda}")));
            }
            let lambda = *lambda;
            // pmf recurrence p(x+1) = p(x)·λ/(x+1)
            let step = |x: usize, p: f64| p * lambda / (x as f64 + 1.0);
            truncated_from_recurrence(family, truncation, (-lambda).exp(), step)
        }
        Family::NegBinomial { mu, phi } => {
            if !(mu.is_finite() && *mu > 0.0 && phi.is_finite() && *phi > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "neg_binomial mu={mu} phi={phi}"
                )));
            }
            let (mu, phi) = (*mu, *phi);
            // p(0) = (φ/(μ+φ))^φ, p(x+1) = p(x)·(x+φ)/(x+1)·μ/(μ+φ)
            let p0 = (phi * (phi / (mu + phi)).ln()).exp();
            let ratio = mu / (mu + phi);
            let step = move |x: usize, p: f64| p * (x as f64 + phi) / (x as f64 + 1.0) * ratio;
            truncated_from_recurrence(family, truncation, p0, step)
        }
        Family::Binomial { trials, prob } => {
            if !(prob.is_finite() && *prob > 0.0 && *prob < 1.0) || *trials < 1 {
                return Err(Error::InvalidParameter(format!(
                    "binomial trials={trials} prob={prob}"
                )));
            }
            let (n, p) = (*trials as usize, *prob);
            let mut pmf = Vec::with_capacity(n + 1);
            let mut cur = (1.0 - p).powi(n as i32);
            for x in 0..=n {
                pmf.push(cur);
                cur *= (n - x) as f64 / (x as f64 + 1.0) * p / (1.0 - p);
            }
            let support = (0..=n).map(|x| x as f64).collect();
            BaseMeasure::assemble(support, pmf, family, truncation.tail_mass, 0.0, None)
        }
        Family::DiscreteUniform { k } => {
            if *k < 2 {
                return Err(Error::InvalidParameter(format!("discrete_uniform k={k}")));
            }
            let k = *k as usize;
            let support = (1..=k).map(|x| x as f64).collect();
            let pmf = vec![1.0 / k as f64; k];
            BaseMeasure::assemble(support, pmf, family, truncation.tail_mass, 0.0, None)
        }
        Family::DiscretizedExponential {
            rate,
            window,
            cells,
        } => {
            if !(rate.is_finite() && *rate > 0.0) || window.1 <= window.0 || *cells < 2 {
                return Err(Error::InvalidParameter(format!(
                    "discretized_exponential rate={rate} window={window:?} cells={cells}"
                )));
            }
            let (lo, hi, k) = (window.0, window.1, *cells);
            let width = (hi - lo) / k as f64;
            let edges: Vec<f64> = (0..=k).map(|i| lo + i as f64 * width).collect();
            // Exact cell integrals of λe^{-λx}; renormalized over the window.
            let pmf: Vec<f64> = (0..k)
                .map(|i| (-rate * edges[i]).exp() - (-rate * edges[i + 1]).exp())
                .collect();
            let support: Vec<f64> = (0..k).map(|i| 0.5 * (edges[i] + edges[i + 1])).collect();
            let outside = 1.0 - ((-rate * lo).exp() - (-rate * hi).exp());
            BaseMeasure::assemble(
                support,
                pmf,
                family,
                truncation.tail_mass,
                outside,
                Some(edges),
            )
        }
        Family::Custom { support, pmf } => {
            if support.len() != pmf.len() || support.is_empty() {
                return Err(Error::InvalidParameter(
                    "custom support and pmf must be equal-length and nonempty".into(),
                ));
            }
            if pmf.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::InvalidParameter(
                    "custom pmf must be nonnegative".into(),
                ));
            }
            if support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(
                    "custom support must be strictly increasing".into(),
                ));
            }
            if pmf.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidParameter("custom pmf sums to 0".into()));
            }
            BaseMeasure::assemble(
                support.clone(),
                pmf.clone(),
                family,
                truncation.tail_mass,
                0.0,
                None,
            )
        }
    }
}

/// Accumulate a nonnegative-integer-support pmf from `p(0)` and a recurrence
/// until the tail drops below the policy, also covering `min_cover`.
fn truncated_from_recurrence(
    family: Family,
    truncation: TruncationPolicy,
    p_zero: f64,
    step: impl Fn(usize, f64) -> f64,
) -> Result<BaseMeasure> {
    if p_zero == 0.0 {
        // p(0) underflowed; the recurrence could never accumulate any mass
        return Err(Error::InvalidParameter(format!(
            "parameters of {family:?} put the origin below f64 range"
        )));
    }
    let mut pmf = Vec::new();
    let mut cum = 0.0;
    let mut cur = p_zero;
    let mut x = 0usize;
    let cover = truncation.min_cover.unwrap_or(f64::NEG_INFINITY);
    loop {
        pmf.push(cur);
        cum += cur;
        let covered = x as f64 >= cover;
        if cum >= 1.0 - truncation.tail_mass && covered {
            break;
        }
        cur = step(x, cur);
        x += 1;
        if x >= SUPPORT_CAP {
            return Err(Error::InvalidParameter(format!(
                "support exceeded {SUPPORT_CAP} points before reaching the truncation target"
            )));
        }
    }
    let support = (0..pmf.len()).map(|x| x as f64).collect();
    let dropped = (1.0 - cum).max(0.0);
    BaseMeasure::assemble(support, pmf, family, truncation.tail_mass, dropped, None)
}

impl BaseMeasure {
    fn assemble(
        support: Vec<f64>,
        raw_pmf: Vec<f64>,
        family: Family,
        requested_tail: f64,
        dropped_mass: f64,
        edges: Option<Vec<f64>>,
    ) -> Result<BaseMeasure> {
        if support.len() < 2 {
            return Err(Error::Degenerate(
                "truncation left fewer than 2 support points".into(),
            ));
        }
        let total: f64 = raw_pmf.iter().sum();
        let pmf: Vec<f64> = raw_pmf.iter().map(|p| p / total).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        // Pin the final value so downstream tolerances see exactly 1.
        *cdf.last_mut().unwrap() = 1.0;
        let mid_cdf = cdf.iter().zip(&pmf).map(|(&f, &p)| f - 0.5 * p).collect();
        Ok(BaseMeasure {
            support,
            pmf,
            cdf,
            mid_cdf,
            family,
            truncation: TruncationRecord {
                requested_tail,
                dropped_mass,
            },
            edges,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn mid_cdf_values(&self) -> &[f64] {
        &self.mid_cdf
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn truncation(&self) -> &TruncationRecord {
        &self.truncation
    }

    /// Bin edges (discretized exponential only).
    pub fn bin_edges(&self) -> Option<&[f64]> {
        self.edges.as_deref()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Index of a support point, matched within a small relative tolerance.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let i = self
            .support
            .partition_point(|&s| s < value - 1e-9 * value.abs().max(1.0));
        if i < self.support.len() {
            let s = self.support[i];
            if (s - value).abs() <= 1e-9 * s.abs().max(1.0) {
                return Some(i);
            }
        }
        None
    }

    /// Mid-distribution function `F0(x) - p0(x)/2` at a support point.
    pub fn mid_cdf(&self, x: f64) -> Result<f64> {
        self.index_of(x)
            .map(|i| self.mid_cdf[i])
            .ok_or_else(|| Error::SupportMismatch(format!("{x} is not a support point")))
    }

    /// Quantile `Q0(u) = inf{x : F0(x) ≥ u}` for `0 < u < 1`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        Ok(self.support[self.quantile_index(u)?])
    }

    /// Index form of [`BaseMeasure::quantile`].
    pub fn quantile_index(&self, u: f64) -> Result<usize> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile u={u} not in (0,1)"
            )));
        }
        Ok(self.cdf.partition_point(|&f| f < u).min(self.len() - 1))
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.pmf)
            .map(|(&x, &p)| x * p)
            .sum()
    }

    /// Rebuild with the support extended to cover `value` (plus headroom),
    /// for families with an infinite tail. Returns a clone when the support
    /// already covers the value or the family has fixed support.
    pub fn covering(&self, value: f64) -> Result<BaseMeasure> {
        let last = *self.support.last().unwrap();
        if value <= last {
            return Ok(self.clone());
        }
        match self.family {
            Family::Poisson { .. } | Family::NegBinomial { .. } => make_parametric(
                self.family.clone(),
                TruncationPolicy {
                    tail_mass: self.truncation.requested_tail,
                    min_cover: Some(value + 5.0),
                },
            ),
            _ => Err(Error::SupportMismatch(format!(
                "value {value} outside the fixed support (max {last})"
            ))),
        }
    }

    /// Restrict the support to points inside `[lo, hi]` and renormalize.
    ///
    /// Useful for fitted parametric nulls evaluated over the observed range
    /// of the data; the removed mass is added to the truncation record.
    pub fn restricted_to_range(&self, lo: f64, hi: f64) -> Result<BaseMeasure> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.support[i] >= lo && self.support[i] <= hi)
            .collect();
        if keep.len() == self.len() {
            return Ok(self.clone());
        }
        let removed: f64 = (0..self.len())
            .filter(|i| !keep.contains(i))
            .map(|i| self.pmf[i])
            .sum();
        let support: Vec<f64> = keep.iter().map(|&i| self.support[i]).collect();
        let pmf: Vec<f64> = keep.iter().map(|&i| self.pmf[i]).collect();
        let mut bm = BaseMeasure::assemble(
            support,
            pmf,
            self.family.clone(),
            self.truncation.requested_tail,
            self.truncation.dropped_mass + removed,
            None,
        )?;
        bm.edges = self.edges.clone();
        Ok(bm)
    }

    /// Restrict the support to the observed range of the data.
    pub fn restricted_to_observed_range(&self, data: &EmpiricalCounts) -> Result<BaseMeasure> {
        let lo = data.values()[0];
        let hi = *data.values().last().unwrap();
        self.restricted_to_range(lo, hi)
    }

    /// Extend the measure so every observed value is a support point.
    pub fn covering_data(&self, data: &EmpiricalCounts) -> Result<BaseMeasure> {
        let max = *data.values().last().unwrap();
        let bm = self.covering(max)?;
        for &v in data.values() {
            if bm.index_of(v).is_none() {
                return Err(Error::SupportMismatch(format!(
                    "observed value {v} is not a support point"
                )));
            }
        }
        Ok(bm)
    }

    /// Draw one support index by inverse cdf.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&f| f <= u).min(self.len() - 1)
    }

    /// Draw `n` samples and aggregate them into counts (multinomial draw).
    pub fn sample_counts(&self, n: u64, rng: &mut impl Rng) -> EmpiricalCounts {
        sample_counts_from(&self.cdf, &self.support, n, rng)
    }
}

/// Multinomial draw by inverse cdf over an arbitrary (cdf, support) table.
pub(crate) fn sample_counts_from(
    cdf: &[f64],
    support: &[f64],
    n: u64,
    rng: &mut impl Rng,
) -> EmpiricalCounts {
    let mut counts = vec![0u64; support.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let i = cdf.partition_point(|&f| f <= u).min(support.len() - 1);
        counts[i] += 1;
    }
    let pairs: Vec<(f64, u64)> = support
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&x, &c)| (x, c))
        .collect();
    EmpiricalCounts::from_pairs(pairs).expect("counts from sampling are valid")
}

impl EmpiricalCounts {
    /// Build from (value, count) pairs; duplicates are merged, zero counts kept out.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, u64)>) -> Result<EmpiricalCounts> {
        let mut pairs: Vec<(f64, u64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if pairs.iter().any(|(v, _)| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite value".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut values = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        for (v, c) in pairs {
            match values.last() {
                Some(&last) if last == v => *counts.last_mut().unwrap() += c,
                _ => {
                    values.push(v);
                    counts.push(c);
                }
            }
        }
        let keep: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
        let values: Vec<f64> = values
            .into_iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v)
            .collect();
        let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidParameter("all counts are zero".into()));
        }
        Ok(EmpiricalCounts { values, counts, n })
    }

    /// Build from raw samples, one observation per entry.
    pub fn from_samples(samples: &[f64]) -> Result<EmpiricalCounts> {
        EmpiricalCounts::from_pairs(samples.iter().map(|&v| (v, 1u64)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Empirical probability of the i-th distinct value.
    pub fn prob(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.counts)
            .map(|(&v, &c)| v * c as f64)
            .sum::<f64>()
            / self.n as f64
    }

    /// Nonparametric resample: n draws from the empirical distribution.
    pub fn resample(&self, rng: &mut impl Rng) -> EmpiricalCounts {
        let cdf: Vec<f64> = {
            let mut acc = 0.0;
            self.counts
                .iter()
                .map(|&c| {
                    acc += c as f64 / self.n as f64;
                    acc
                })
                .collect()
        };
        sample_counts_from(&cdf, &self.values, self.n, rng)
    }
}

impl Family {
    /// Poisson MLE: λ̂ is the sample mean.
    pub fn fit_poisson(data: &EmpiricalCounts) -> Result<Family> {
        let lambda = data.mean();
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter(
                "sample mean must be positive".into(),
            ));
        }
        Ok(Family::Poisson { lambda })
    }

    /// Binomial with known trial count: π̂ = mean / trials.
    pub fn fit_binomial(trials: u32, data: &EmpiricalCounts) -> Result<Family> {
        let prob = data.mean() / trials as f64;
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "estimated binomial proportion {prob} outside (0,1)"
            )));
        }
        Ok(Family::Binomial { trials, prob })
    }

    /// Negative binomial: μ̂ = sample mean, φ̂ by a bounded golden-section
    /// search on the profile log-likelihood.
    pub fn fit_neg_binomial(data: &EmpiricalCounts) -> Result<Family> {
        let mu = data.mean();
        if mu <= 0.0 {
            return Err(Error::InvalidParameter(
                "sample mean must be positive".into(),
            ));
        }
        let loglik = |phi: f64| -> f64 {
            let lratio = (mu / (mu + phi)).ln();
            let lbase = phi * (phi / (mu + phi)).ln();
            data.values
                .iter()
                .zip(&data.counts)
                .map(|(&x, &c)| {
                    c as f64
                        * (ln_gamma(x + phi) - ln_gamma(phi) - ln_gamma(x + 1.0)
                            + x * lratio
                            + lbase)
                })
                .sum()
        };
        let phi = golden_max(|t| loglik(t.exp()), (1e-2f64).ln(), (1e6f64).ln(), 1e-10).exp();
        Ok(Family::NegBinomial { mu, phi })
    }

    /// Refit this family's free parameters to new data. Families without
    /// estimable parameters are returned unchanged.
    pub fn refit(&self, data: &EmpiricalCounts) -> Result<Family> {
        match self {
            Family::Poisson { .. } => Family::fit_poisson(data),
            Family::Binomial { trials, .. } => Family::fit_binomial(*trials, data),
            Family::NegBinomial { .. } => Family::fit_neg_binomial(data),
            fixed => Ok(fixed.clone()),
        }
    }
}

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}
