//! Data generators and benchmark harness.
//!
//! Card-shuffling fixed-point samples, discretized-exponential spectra with
//! optional bump injection, the alternative pmf families used by the power
//! studies, and the power/type-I harness itself. Everything is seeded and
//! reproducible: replicates draw from child generators derived from
//! `(seed, index)`, and aggregation is an indexed reduction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::{erf_inv, erfc};

use crate::base::{make_parametric, BaseMeasure, EmpiricalCounts, Family, TruncationPolicy};
use crate::basis::build_basis;
use crate::error::{Error, Result};
use crate::inference::lp_gof_with_basis;
use crate::rng::child_rng;
use crate::sharpen::Selection;

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0)
}

/// Number of fixed points of `n_decks` decks after `k_shuffles` random
/// transpositions each (two independently uniform positions swapped).
pub fn simulate_card(
    k_shuffles: usize,
    n_decks: usize,
    deck_size: usize,
    seed: u64,
) -> Result<EmpiricalCounts> {
    if deck_size < 2 || n_decks == 0 {
        return Err(Error::InvalidParameter(
            "deck_size must be >= 2 and n_decks >= 1".into(),
        ));
    }
    let fixed_points: Vec<u64> = (0..n_decks)
        .into_par_iter()
        .map(|deck| {
            use rand::Rng;
            let mut rng = child_rng(seed, deck as u64);
            let mut perm: Vec<u32> = (0..deck_size as u32).collect();
            for _ in 0..k_shuffles {
                let i = rng.random_range(0..deck_size);
                let j = rng.random_range(0..deck_size);
                perm.swap(i, j);
            }
            perm.iter()
                .enumerate()
                .filter(|(pos, &card)| *pos as u32 == card)
                .count() as u64
        })
        .collect();
    EmpiricalCounts::from_samples(&fixed_points.iter().map(|&v| v as f64).collect::<Vec<f64>>())
}

/// One row of a card study: shuffle count and the mean LP goodness-of-fit
/// p-value against Poisson(1) over the replications.
#[derive(Debug, Clone, Serialize)]
pub struct CardStudyRow {
    pub k_shuffles: usize,
    pub mean_p_value: f64,
}

/// Mean p-value of the LP goodness-of-fit test of `CARD(k, n)` data against
/// Poisson(1), over `b` replications per shuffle count.
///
/// The test statistic is `n·Σ_{j≤m} LP_j²` with every order kept (df = m).
/// The default `m = 1` tracks the location discrepancy, which is the
/// signature of an under-shuffled deck.
pub fn card_study(
    k_list: &[usize],
    n_decks: usize,
    deck_size: usize,
    b: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<CardStudyRow>> {
    if b == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replication".into(),
        ));
    }
    let poisson = make_parametric(Family::Poisson { lambda: 1.0 }, TruncationPolicy::default())?;
    k_list
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let p_values: Vec<f64> = (0..b)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = seed ^ (((ki as u64) << 40) | (rep as u64) << 20);
                    let data = simulate_card(k, n_decks, deck_size, rep_seed)
                        .expect("valid card parameters");
                    let bm = poisson
                        .covering_data(&data)
                        .expect("poisson tail covers any count");
                    let basis =
                        build_basis(&bm, m.min(bm.len() - 1).max(1)).expect("poisson basis");
                    lp_gof_with_basis(&basis, &data, Selection::All)
                        .expect("matched support")
                        .p_value
                })
                .collect();
            Ok(CardStudyRow {
                k_shuffles: k,
                mean_p_value: p_values.iter().sum::<f64>() / b as f64,
            })
        })
        .collect()
}

/// Null spectrum: discretized exponential with rate 1/20 over the window.
pub fn hep_null(k: usize, window: (f64, f64)) -> Result<BaseMeasure> {
    make_parametric(
        Family::DiscretizedExponential {
            rate: 1.0 / 20.0,
            window,
            cells: k,
        },
        TruncationPolicy::default(),
    )
}

/// Mixture pmf `(1-fraction)·p0 + fraction·discretized N(mass, width)` on
/// the null's cells.
pub fn hep_bump_pmf(null: &BaseMeasure, mass: f64, width: f64, fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "bump fraction {fraction} must be in [0,1)"
        )));
    }
    let edges = null
        .bin_edges()
        .ok_or_else(|| Error::InvalidParameter("null measure has no bin edges".into()))?;
    let (lo, hi) = (edges[0], *edges.last().unwrap());
    if mass <= lo || mass >= hi {
        return Err(Error::InvalidParameter(format!(
            "bump mass {mass} outside window ({lo}, {hi})"
        )));
    }
    // normal cell masses, renormalized over the window
    let cells: Vec<f64> = (0..null.len())
        .map(|i| normal_cdf((edges[i + 1] - mass) / width) - normal_cdf((edges[i] - mass) / width))
        .collect();
    let total: f64 = cells.iter().sum();
    let pmf: Vec<f64> = null
        .pmf()
        .iter()
        .zip(&cells)
        .map(|(&p0, &c)| (1.0 - fraction) * p0 + fraction * c / total)
        .collect();
    Ok(pmf)
}

/// `n` multinomial draws from the (optionally bump-injected) spectrum.
/// Returned values are the physical cell midpoints.
pub fn generate_hep(
    k: usize,
    n: u64,
    bump: Option<(f64, f64, f64)>,
    window: (f64, f64),
    seed: u64,
) -> Result<EmpiricalCounts> {
    let null = hep_null(k, window)?;
    let mut rng = child_rng(seed, 0);
    match bump {
        None => Ok(null.sample_counts(n, &mut rng)),
        Some((mass, width, fraction)) => {
            let pmf = hep_bump_pmf(&null, mass, width, fraction)?;
            let mixed = make_parametric(
                Family::Custom {
                    support: null.support().to_vec(),
                    pmf,
                },
                TruncationPolicy::default(),
            )?;
            Ok(mixed.sample_counts(n, &mut rng))
        }
    }
}

/// Alternative pmf families for the power studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alternative {
    /// `α/k` on the first half of the cells, `(2-α)/k` on the second.
    Step { alpha: f64 },
    /// `(1-ε)·U[k] + ε·Zipf(α)` with Zipf weights `j^{-α}` normalized over k.
    ZipfMix { epsilon: f64, alpha: f64 },
    /// Increments of the Beta(a, b) cdf on a uniform grid.
    BetaIncrements { a: f64, b: f64 },
    /// Increments of `D(u) = F(Φ⁻¹(u))` with
    /// `F(x) = (1-π)Φ(x) + πΦ(x-μ)`, left-closed cells, renormalized.
    GaussianMixIncrements { mu: f64, pi: f64 },
    /// Null `(1/4, 1/4, 1/(2(k-2)), …)` with the first two cells shifted to
    /// `1/4+δ` and `1/4-δ`.
    TwoCellShift { delta: f64 },
}

/// Null counterpart of [`Alternative::TwoCellShift`].
pub fn two_cell_null(k: usize) -> Result<Vec<f64>> {
    if k < 3 {
        return Err(Error::InvalidParameter(
            "two-cell design needs k >= 3".into(),
        ));
    }
    let rest = 0.5 / (k - 2) as f64;
    let mut pmf = vec![rest; k];
    pmf[0] = 0.25;
    pmf[1] = 0.25;
    Ok(pmf)
}

/// Build an alternative pmf on `k` cells.
pub fn make_alternative(kind: &Alternative, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidParameter("domain size must be >= 2".into()));
    }
    let pmf: Vec<f64> = match *kind {
        Alternative::Step { alpha } => {
            if !(0.0..=2.0).contains(&alpha) {
                return Err(Error::InvalidParameter(format!(
                    "step alpha {alpha} must be in [0,2]"
                )));
            }
            let half = k / 2;
            (0..k)
                .map(|j| {
                    if j < half {
                        alpha / k as f64
                    } else {
                        (2.0 - alpha) / k as f64
                    }
                })
                .collect()
        }
        Alternative::ZipfMix { epsilon, alpha } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::InvalidParameter(format!(
                    "mixture weight {epsilon} must be in [0,1]"
                )));
            }
            if alpha <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "zipf exponent {alpha} must be positive"
                )));
            }
            // bounded domain makes any α > 0 normalizable
            let weights: Vec<f64> = (1..=k).map(|j| (j as f64).powf(-alpha)).collect();
            let z: f64 = weights.iter().sum();
            weights
                .iter()
                .map(|w| (1.0 - epsilon) / k as f64 + epsilon * w / z)
                .collect()
        }
        Alternative::BetaIncrements { a, b } => {
            if a <= 0.0 || b <= 0.0 {
                return Err(Error::InvalidParameter(
                    "beta parameters must be positive".into(),
                ));
            }
            (0..k)
                .map(|j| {
                    let lo = j as f64 / k as f64;
                    let hi = (j + 1) as f64 / k as f64;
                    beta_reg(a, b, hi) - beta_reg(a, b, lo)
                })
                .collect()
        }
        Alternative::GaussianMixIncrements { mu, pi } => {
            if !(0.0..=1.0).contains(&pi) {
                return Err(Error::InvalidParameter(format!(
                    "mixture weight {pi} must be in [0,1]"
                )));
            }
            let d = |u: f64| -> f64 {
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    let x = normal_quantile(u);
                    (1.0 - pi) * normal_cdf(x) + pi * normal_cdf(x - mu)
                }
            };
            (0..k)
                .map(|j| d((j + 1) as f64 / k as f64) - d(j as f64 / k as f64))
                .collect()
        }
        Alternative::TwoCellShift { delta } => {
            if !(0.0..=0.25).contains(&delta) {
                return Err(Error::InvalidParameter(format!(
                    "shift {delta} must be in [0, 1/4]"
                )));
            }
            let mut pmf = two_cell_null(k)?;
            pmf[0] = 0.25 + delta;
            pmf[1] = 0.25 - delta;
            pmf
        }
    };
    let total: f64 = pmf.iter().sum();
    if pmf.iter().any(|&p| p < 0.0) || total <= 0.0 {
        return Err(Error::InvalidParameter(
            "alternative pmf is not valid".into(),
        ));
    }
    Ok(pmf.into_iter().map(|p| p / total).collect())
}

/// Test statistics the power harness knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `n·Σ_{j=1..m} LP_j²` with a fixed order cap, no selection.
    LpGof {
        m: usize,
    },
    Pearson,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::LpGof { m } => format!("lpgof{m}"),
            Method::Pearson => "pearson".into(),
        }
    }
}

/// Design of a power study over a shared k-cell domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerStudySpec {
    pub null_pmf: Vec<f64>,
    pub alt_pmf: Vec<f64>,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_replications")]
    pub b_null: usize,
    #[serde(default = "default_replications")]
    pub b_alt: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
}

fn default_replications() -> usize {
    350
}

fn default_level() -> f64 {
    0.05
}

/// One (n, method) cell of the power table.
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub n: u64,
    pub method: String,
    pub power: f64,
}

struct HarnessMethod<'a> {
    method: Method,
    /// T_j columns for LP methods, empty for Pearson.
    columns: Vec<&'a [f64]>,
}

impl HarnessMethod<'_> {
    fn statistic(&self, indexes: &[usize], counts: &[u64], n: f64, p0: &[f64]) -> f64 {
        match self.method {
            Method::Pearson => {
                // χ²/n = Σ_obs p̃²/p0 - 1; unobserved cells contribute their mass
                let mut acc = 0.0;
                for (&i, &c) in indexes.iter().zip(counts) {
                    let pt = c as f64 / n;
                    acc += pt * pt / p0[i];
                }
                n * (acc - 1.0).max(0.0)
            }
            Method::LpGof { .. } => {
                let mut total = 0.0;
                for col in &self.columns {
                    let mut lp = 0.0;
                    for (&i, &c) in indexes.iter().zip(counts) {
                        lp += c as f64 * col[i];
                    }
                    lp /= n;
                    total += lp * lp;
                }
                n * total
            }
        }
    }
}

/// Run the power study: per sample size, the critical value is the empirical
/// `(1-level)` quantile of each method's statistic over `b_null` null data
/// sets, and power is the fraction of `b_alt` alternative data sets whose
/// statistic exceeds it.
pub fn power_curve(spec: &PowerStudySpec) -> Result<Vec<PowerRow>> {
    let k = spec.null_pmf.len();
    if spec.alt_pmf.len() != k {
        return Err(Error::InvalidParameter(
            "null and alternative pmfs must share the domain".into(),
        ));
    }
    if !(spec.level > 0.0 && spec.level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level {} must be in (0,1)",
            spec.level
        )));
    }
    if spec.b_null == 0 || spec.b_alt == 0 {
        return Err(Error::InvalidParameter(
            "replication counts must be positive".into(),
        ));
    }
    let support: Vec<f64> = (1..=k).map(|x| x as f64).collect();
    let null = make_parametric(
        Family::Custom {
            support: support.clone(),
            pmf: spec.null_pmf.clone(),
        },
        TruncationPolicy::default(),
    )?;
    let alt = make_parametric(
        Family::Custom {
            support,
            pmf: spec.alt_pmf.clone(),
        },
        TruncationPolicy::default(),
    )?;

    let max_m = spec
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::LpGof { m } => Some(*m),
            Method::Pearson => None,
        })
        .max();
    let basis = match max_m {
        Some(m) => Some(build_basis(&null, m.min(k - 1))?),
        None => None,
    };
    let methods: Vec<HarnessMethod> = spec
        .methods
        .iter()
        .map(|&method| {
            let columns = match method {
                Method::Pearson => Vec::new(),
                Method::LpGof { m } => {
                    let basis = basis.as_ref().expect("basis built for LP methods");
                    basis
                        .orders()
                        .iter()
                        .filter(|&&j| j <= m)
                        .map(|&j| basis.column(j).expect("retained"))
                        .collect()
                }
            };
            HarnessMethod { method, columns }
        })
        .collect();

    // statistics are always referred to the null pmf, whatever generated the sample
    let null_pmf = null.pmf().to_vec();
    let stats_for = |measure: &BaseMeasure, b: usize, n: u64, stream: u64| -> Vec<Vec<f64>> {
        (0..b)
            .into_par_iter()
            .map(|rep| {
                let mut rng = child_rng(spec.seed, stream.wrapping_add(rep as u64));
                let sample = measure.sample_counts(n, &mut rng);
                let indexes: Vec<usize> = sample.values().iter().map(|&v| v as usize - 1).collect();
                methods
                    .iter()
                    .map(|m| m.statistic(&indexes, sample.counts(), n as f64, &null_pmf))
                    .collect()
            })
            .collect()
    };

    let mut rows = Vec::new();
    for (ni, &n) in spec.n_grid.iter().enumerate() {
        // alt draws use an offset stream so they are independent of null draws
        let base_stream = (ni as u64) << 33;
        let null_stats = stats_for(&null, spec.b_null, n, base_stream);
        let alt_stats = stats_for(&alt, spec.b_alt, n, base_stream | (1 << 32));
        for (mi, method) in methods.iter().enumerate() {
            let mut nulls: Vec<f64> = null_stats.iter().map(|s| s[mi]).collect();
            nulls.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = ((1.0 - spec.level) * spec.b_null as f64).ceil() as usize;
            let crit = nulls[idx.clamp(1, spec.b_null) - 1];
            let rejected = alt_stats.iter().filter(|s| s[mi] > crit).count();
            rows.push(PowerRow {
                n,
                method: method.method.label(),
                power: rejected as f64 / spec.b_alt as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shuffles_leave_every_card_fixed() {
        let data = simulate_card(0, 50, 52, 1).unwrap();
        assert_eq!(data.values(), &[52.0]);
        assert_eq!(data.counts(), &[50]);
    }

    #[test]
    fn heavy_shuffling_approaches_poisson_one() {
        let data = simulate_card(2000, 4000, 52, 7).unwrap();
        let mean = data.mean();
        // Poisson(1) limit: mean 1, sd 1; 3σ band for 4000 decks
        assert!((mean - 1.0).abs() < 3.0 / (4000f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn card_study_p_values_are_probabilities() {
        let rows = card_study(&[0, 2000], 60, 52, 4, 1, 3).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.mean_p_value));
        }
        // an unshuffled deck is nowhere near Poisson(1)
        assert!(rows[0].mean_p_value < 0.01);
    }

    #[test]
    fn one_fifty_shuffles_leave_a_detectable_location_excess() {
        // CARD(150, 500) against Poisson(1): positive first coefficient,
        // significant at 5%, in the majority of seeds
        use crate::inference::lp_gof_with_basis;
        use crate::sharpen::lp_coefficients;
        let poisson =
            make_parametric(Family::Poisson { lambda: 1.0 }, TruncationPolicy::default()).unwrap();
        let mut hits = 0;
        let seeds = 11;
        for seed in 0..seeds {
            let data = simulate_card(150, 500, 52, 3000 + seed).unwrap();
            let bm = poisson.covering_data(&data).unwrap();
            let basis = build_basis(&bm, 1).unwrap();
            let lp1 = lp_coefficients(&basis, &data).unwrap().get(1).unwrap();
            let p = lp_gof_with_basis(&basis, &data, Selection::All)
                .unwrap()
                .p_value;
            if lp1 > 0.0 && p < 0.05 {
                hits += 1;
            }
        }
        assert!(hits * 2 > seeds, "significant in {hits}/{seeds} seeds");
    }

    #[test]
    fn null_spectrum_passes_chisq_in_most_seeds() {
        use crate::inference::pearson_chisq;
        let null = hep_null(50, (100.0, 250.0)).unwrap();
        let mut accepted = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let data = generate_hep(50, 5000, None, (100.0, 250.0), 500 + seed).unwrap();
            if pearson_chisq(&data, &null).unwrap().p_value > 0.05 {
                accepted += 1;
            }
        }
        assert!(accepted >= 18, "accepted {accepted}/{seeds}");
    }

    #[test]
    fn hep_cells_sum_to_one() {
        let null = hep_null(250, (100.0, 250.0)).unwrap();
        let total: f64 = null.pmf().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let bumped = hep_bump_pmf(&null, 125.0, 2.0, 0.1).unwrap();
        let total: f64 = bumped.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // the bump adds mass near 125: cell (125-100)/0.6 ≈ 41
        let i = 41;
        assert!((null.support()[i] - 125.0).abs() < 0.6);
        assert!(bumped[i] > 1.5 * null.pmf()[i]);
    }

    #[test]
    fn hep_bump_outside_window_is_rejected() {
        assert!(generate_hep(100, 1000, Some((300.0, 2.0, 0.1)), (100.0, 250.0), 1).is_err());
    }

    #[test]
    fn alternatives_are_valid_pmfs() {
        let kinds = [
            Alternative::Step { alpha: 0.5 },
            Alternative::ZipfMix {
                epsilon: 0.05,
                alpha: 1.25,
            },
            Alternative::BetaIncrements { a: 10.0, b: 10.0 },
            Alternative::GaussianMixIncrements { mu: -1.5, pi: 0.2 },
            Alternative::TwoCellShift { delta: 0.125 },
        ];
        for kind in &kinds {
            let pmf = make_alternative(kind, 200).unwrap();
            assert_eq!(pmf.len(), 200);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{kind:?}");
            assert!(pmf.iter().all(|&p| p >= 0.0), "{kind:?}");
        }
    }

    #[test]
    fn step_with_alpha_one_is_uniform() {
        let pmf = make_alternative(&Alternative::Step { alpha: 1.0 }, 100).unwrap();
        for &p in &pmf {
            assert!((p - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn two_cell_shift_hits_documented_values() {
        let pmf = make_alternative(&Alternative::TwoCellShift { delta: 0.125 }, 5000).unwrap();
        assert!((pmf[0] - 0.375).abs() < 1e-12);
        assert!((pmf[1] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn power_curve_is_deterministic_and_calibrated() {
        let null = two_cell_null(50).unwrap();
        let spec = PowerStudySpec {
            null_pmf: null.clone(),
            alt_pmf: null,
            n_grid: vec![100],
            b_null: 200,
            b_alt: 200,
            level: 0.05,
            methods: vec![Method::Pearson, Method::LpGof { m: 8 }],
            seed: 21,
        };
        let rows = power_curve(&spec).unwrap();
        let again = power_curve(&spec).unwrap();
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.power, b.power);
        }
        // alternative = null: power ≈ level within 3 binomial SEs
        let se = (0.05f64 * 0.95 / 200.0).sqrt();
        for row in &rows {
            assert!(
                (row.power - 0.05).abs() < 3.0 * se + 0.01,
                "{}: {}",
                row.method,
                row.power
            );
        }
    }

    #[test]
    fn lp_statistic_dominates_pearson_on_sparse_shift_designs() {
        // two-cell shift on a large sparse domain, n around √k: wherever
        // either test has non-trivial power, the LP statistic leads
        let k = 2000;
        let spec = PowerStudySpec {
            null_pmf: two_cell_null(k).unwrap(),
            alt_pmf: make_alternative(&Alternative::TwoCellShift { delta: 0.125 }, k).unwrap(),
            n_grid: vec![30, 60, 100, 160],
            b_null: 250,
            b_alt: 250,
            level: 0.05,
            methods: vec![Method::LpGof { m: 8 }, Method::Pearson],
            seed: 14,
        };
        let rows = power_curve(&spec).unwrap();
        for n in [30u64, 60, 100, 160] {
            let power_of = |label: &str| {
                rows.iter()
                    .find(|r| r.n == n && r.method == label)
                    .unwrap()
                    .power
            };
            let lp = power_of("lpgof8");
            let pearson = power_of("pearson");
            let interesting = |p: f64| (0.2..0.95).contains(&p);
            if interesting(lp) || interesting(pearson) {
                assert!(lp > pearson, "n={n}: lp {lp} vs pearson {pearson}");
            }
        }
    }
}
