//! Goodness-of-fit and uncertainty quantification.
//!
//! Pearson's chi-square, the compressive LP statistic `n·Σ_{j∈J} LP_j²`,
//! the one-sample proportion Z-test, relative entropy of a fitted maxent
//! model, and seeded (double) parametric bootstrap machinery.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::base::{BaseMeasure, EmpiricalCounts};
use crate::basis::{build_basis, LpBasis};
use crate::error::{Error, Result};
use crate::rng::child_rng;
use crate::sharpen::{lp_coefficients, select, ModelForm, Selection, SharpenedModel};

/// Default cap on the basis order used by the convenience entry points.
pub const DEFAULT_MAX_ORDER: usize = 10;

/// Per-order diagnostic row: the coefficient and its z-score `√n·LP_j`.
#[derive(Debug, Clone, Serialize)]
pub struct CoefRow {
    pub order: usize,
    pub lp: f64,
    pub z: f64,
}

/// Bootstrap run metadata recorded in reports.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapMeta {
    pub replicates: usize,
    pub seed: u64,
    /// Replicates dropped because a refit or fit failed.
    pub skipped: usize,
}

/// JSON cannot hold non-finite numbers; an infinite statistic (possible for
/// Pearson with zero-probability cells) serializes as the string "inf".
fn serialize_statistic<S: serde::Serializer>(
    x: &f64,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Outcome of a goodness-of-fit procedure.
#[derive(Debug, Clone, Serialize)]
pub struct GofReport {
    pub method: String,
    #[serde(serialize_with = "serialize_statistic")]
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub per_coefficient: Vec<CoefRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom,
/// via the regularized incomplete gamma function.
pub fn chi_square_upper_tail(statistic: f64, df: usize) -> f64 {
    if statistic.is_infinite() {
        return 0.0;
    }
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, statistic / 2.0)
}

/// Two-sided standard normal p-value.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Pearson chi-square of the data against a base measure.
///
/// The base is re-truncated to cover the data when its family allows it. An
/// observed value with zero null probability yields an infinite statistic.
/// Degrees of freedom are `r - 1` over the union support.
pub fn pearson_chisq(data: &EmpiricalCounts, bm: &BaseMeasure) -> Result<GofReport> {
    let max_obs = *data.values().last().unwrap();
    let (bm, outside): (BaseMeasure, usize) = match bm.covering_data(data) {
        Ok(ext) => (ext, 0),
        Err(_) => {
            let outside = data
                .values()
                .iter()
                .filter(|&&v| bm.index_of(v).is_none())
                .count();
            (bm.clone(), outside)
        }
    };
    let _ = max_obs;
    let n = data.n() as f64;
    let r = bm.len() + outside;

    let mut stat;
    if outside > 0 {
        stat = f64::INFINITY;
    } else {
        // χ²/n = Σ_obs p̃²/p0 - 1, since unobserved cells contribute Σ p0.
        let mut acc = 0.0;
        for (&v, &c) in data.values().iter().zip(data.counts()) {
            let i = bm.index_of(v).expect("covered");
            let pt = c as f64 / n;
            acc += pt * pt / bm.pmf()[i];
        }
        stat = n * (acc - 1.0);
        if stat < 0.0 {
            stat = 0.0; // guard against roundoff on exact fits
        }
    }
    let df = r - 1;
    Ok(GofReport {
        method: "pearson_chisq".into(),
        statistic: stat,
        df,
        p_value: chi_square_upper_tail(stat, df),
        per_coefficient: Vec::new(),
        selection: None,
        bootstrap: None,
        note: (outside > 0)
            .then(|| format!("{outside} observed value(s) fall on zero-probability cells")),
    })
}

/// Compressive LP goodness-of-fit on a prebuilt basis.
///
/// The statistic is `n·Σ_{j∈J} LP_j²` with `J` chosen by `selection`,
/// referred to a chi-square with `|J|` degrees of freedom. An empty `J`
/// reports statistic 0 and p-value 1.
pub fn lp_gof_with_basis(
    basis: &LpBasis,
    data: &EmpiricalCounts,
    selection: Selection,
) -> Result<GofReport> {
    let coefs = lp_coefficients(basis, data)?;
    let active = select(&coefs, selection);
    let stat = data.n() as f64 * coefs.sum_squares(&active);
    let per_coefficient = coefs
        .z_scores()
        .into_iter()
        .zip(&coefs.estimates)
        .map(|((order, z), &(_, lp))| CoefRow { order, lp, z })
        .collect();
    let (df, p_value, note) = if active.is_empty() {
        (0, 1.0, Some("no evidence of lack-of-fit".to_string()))
    } else {
        (
            active.len(),
            chi_square_upper_tail(stat, active.len()),
            None,
        )
    };
    Ok(GofReport {
        method: "lp_gof".into(),
        statistic: stat,
        df: df.max(1),
        p_value,
        per_coefficient,
        selection: Some(selection),
        bootstrap: None,
        note,
    })
}

/// Convenience form of [`lp_gof_with_basis`]: covers the data, builds the
/// basis up to `min(max_order, r-1)`, and runs the test.
pub fn lp_gof(
    data: &EmpiricalCounts,
    bm: &BaseMeasure,
    max_order: Option<usize>,
    selection: Selection,
) -> Result<GofReport> {
    let bm = bm.covering_data(data)?;
    let m = max_order
        .unwrap_or(DEFAULT_MAX_ORDER)
        .min(bm.len() - 1)
        .max(1);
    let basis = build_basis(&bm, m)?;
    lp_gof_with_basis(&basis, data, selection)
}

/// One-sample proportion Z-test.
///
/// `z = √n (p̃ - p0) / √(p0(1-p0))`, two-sided normal p-value. The statistic
/// stored in the report is `z²` (equal to `n·LP_1²` of the binary basis);
/// the signed z-score is in the coefficient row.
pub fn proportion_ztest(successes: u64, n: u64, p0: f64) -> Result<GofReport> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidParameter(format!("p0={p0} must be in (0,1)")));
    }
    if successes > n || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "successes={successes} out of n={n}"
        )));
    }
    let ptilde = successes as f64 / n as f64;
    let z = (n as f64).sqrt() * (ptilde - p0) / (p0 * (1.0 - p0)).sqrt();
    Ok(GofReport {
        method: "proportion_ztest".into(),
        statistic: z * z,
        df: 1,
        p_value: normal_two_sided(z),
        per_coefficient: vec![CoefRow {
            order: 1,
            lp: z / (n as f64).sqrt(),
            z,
        }],
        selection: None,
        bootstrap: None,
        note: None,
    })
}

/// Relative entropy `KL(p̂ ‖ p0) = Σ_j θ_j E[T_j] - Ψ(θ)` of a converged
/// maxent model. Rejects fourier-form models, which carry no θ.
pub fn relative_entropy(model: &SharpenedModel) -> Result<f64> {
    if model.form() != ModelForm::Maxent {
        return Err(Error::InvalidParameter(
            "relative entropy is defined for maxent models; fit with form=maxent".into(),
        ));
    }
    let kl: f64 = model
        .active()
        .iter()
        .zip(model.coefficients())
        .map(|(&j, &theta)| {
            let col = model.basis().column(j).expect("active order");
            let moment: f64 = col.iter().zip(model.pmf()).map(|(&t, &p)| t * p).sum();
            theta * moment
        })
        .sum::<f64>()
        - model.psi();
    Ok(kl.max(0.0))
}

/// Plug-in relative entropy `Σ_x p̃(x) log(p̃(x)/p0(x))`.
///
/// This is the saturated estimate: the maxent KL over any moment subset is
/// bounded above by it. Observed values must be support points.
pub fn empirical_kl(data: &EmpiricalCounts, bm: &BaseMeasure) -> Result<f64> {
    let n = data.n() as f64;
    let mut kl = 0.0;
    for (&v, &c) in data.values().iter().zip(data.counts()) {
        let i = bm.index_of(v).ok_or_else(|| {
            Error::SupportMismatch(format!("observed value {v} is not a support point"))
        })?;
        let pt = c as f64 / n;
        kl += pt * (pt / bm.pmf()[i]).ln();
    }
    Ok(kl.max(0.0))
}

/// Bootstrap standard error of a statistic over `B` nonparametric resamples
/// of the data. Deterministic for a fixed seed.
pub fn bootstrap_se(
    statistic_fn: impl Fn(&EmpiricalCounts) -> f64 + Sync,
    data: &EmpiricalCounts,
    b: usize,
    seed: u64,
) -> Result<f64> {
    if b < 2 {
        return Err(Error::InvalidParameter("bootstrap_se needs B >= 2".into()));
    }
    let stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            statistic_fn(&data.resample(&mut rng))
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / b as f64;
    let var = stats.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (b as f64 - 1.0);
    Ok(var.sqrt())
}

/// Parametric bootstrap test: replicate statistics are computed on samples
/// of size `n` drawn from the base measure, and
/// `p = (1 + #{boot ≥ observed}) / (B + 1)`.
pub fn parametric_bootstrap_test(
    statistic_fn: impl Fn(&EmpiricalCounts) -> f64 + Sync,
    bm: &BaseMeasure,
    data: &EmpiricalCounts,
    b: usize,
    seed: u64,
) -> Result<GofReport> {
    if b < 99 {
        return Err(Error::InvalidParameter(
            "parametric bootstrap needs B >= 99".into(),
        ));
    }
    let observed = statistic_fn(data);
    let n = data.n();
    let exceed = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let sample = bm.sample_counts(n, &mut rng);
            usize::from(statistic_fn(&sample) >= observed)
        })
        .sum::<usize>();
    let p_value = (1 + exceed) as f64 / (b + 1) as f64;
    Ok(GofReport {
        method: "parametric_bootstrap".into(),
        statistic: observed,
        df: 1,
        p_value,
        per_coefficient: Vec::new(),
        selection: None,
        bootstrap: Some(BootstrapMeta {
            replicates: b,
            seed,
            skipped: 0,
        }),
        note: None,
    })
}

/// Double parametric bootstrap: each replicate refits the null parameters on
/// its own sample before the statistic is evaluated, correcting the p-value
/// for an estimated-parameter null.
///
/// `refit` maps a sample to its fitted base measure; `statistic_fn` sees the
/// refitted measure, the sample, and a replicate-local RNG (for statistics
/// that need inner randomness). Replicates where either step fails are
/// skipped; more than 5% failures is an error.
pub fn double_bootstrap_test(
    statistic_fn: impl Fn(&BaseMeasure, &EmpiricalCounts, &mut ChaCha8Rng) -> Option<f64> + Sync,
    refit: impl Fn(&EmpiricalCounts) -> Result<BaseMeasure> + Sync,
    data: &EmpiricalCounts,
    b_outer: usize,
    seed: u64,
) -> Result<GofReport> {
    if b_outer < 99 {
        return Err(Error::InvalidParameter(
            "double bootstrap needs B >= 99".into(),
        ));
    }
    let null_fit = refit(data)?;
    let mut obs_rng = child_rng(seed, u64::MAX - 1);
    let observed = statistic_fn(&null_fit, data, &mut obs_rng).ok_or_else(|| {
        Error::InvalidParameter("statistic undefined on the observed data".into())
    })?;
    let n = data.n();
    let outcomes: Vec<Option<bool>> = (0..b_outer)
        .into_par_iter()
        .map(|i| {
            let mut rng = child_rng(seed, i as u64);
            let sample = null_fit.sample_counts(n, &mut rng);
            let refitted = refit(&sample).ok()?;
            let stat = statistic_fn(&refitted, &sample, &mut rng)?;
            Some(stat >= observed)
        })
        .collect();
    let skipped = outcomes.iter().filter(|o| o.is_none()).count();
    if skipped * 20 > b_outer {
        return Err(Error::RefitFailure {
            failed: skipped,
            total: b_outer,
        });
    }
    let kept = b_outer - skipped;
    let exceed = outcomes.iter().flatten().filter(|&&e| e).count();
    let p_value = (1 + exceed) as f64 / (kept + 1) as f64;
    Ok(GofReport {
        method: "double_bootstrap".into(),
        statistic: observed,
        df: 1,
        p_value,
        per_coefficient: Vec::new(),
        selection: None,
        bootstrap: Some(BootstrapMeta {
            replicates: b_outer,
            seed,
            skipped,
        }),
        note: None,
    })
}
