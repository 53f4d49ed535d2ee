//! Sharpened models.
//!
//! LP-Fourier coefficients of the data relative to a base measure, sparse
//! selection of the significant ones, and the two model forms built from a
//! selected set: the Fourier form `p0(x)[1 + Σ LP_j T_j(x)]` and the maxent
//! form `p0(x) exp{Σ θ_j T_j(x) - Ψ(θ)}`, which is fit by moment matching
//! on the convex dual.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{sample_counts_from, BaseMeasure, EmpiricalCounts};
use crate::basis::LpBasis;
use crate::error::{Error, Result};

/// Per-order coefficient estimates `LP_j = Σ_x p̃(x) T_j(x; F0)`.
#[derive(Debug, Clone)]
pub struct LpCoefficients {
    /// (order, estimate) for every retained basis order.
    pub estimates: Vec<(usize, f64)>,
    /// Sample size behind the estimates.
    pub n: u64,
}

impl LpCoefficients {
    pub fn get(&self, order: usize) -> Option<f64> {
        self.estimates
            .iter()
            .find(|(j, _)| *j == order)
            .map(|&(_, v)| v)
    }

    /// z-scores `√n · LP_j`.
    pub fn z_scores(&self) -> Vec<(usize, f64)> {
        let s = (self.n as f64).sqrt();
        self.estimates.iter().map(|&(j, v)| (j, s * v)).collect()
    }

    /// Sum of squared coefficients over a set of orders.
    pub fn sum_squares(&self, orders: &[usize]) -> f64 {
        orders
            .iter()
            .filter_map(|&j| self.get(j))
            .map(|v| v * v)
            .sum()
    }
}

/// Coefficient selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Keep orders with `|LP_j| > 2/√n`.
    Threshold,
    /// Keep the prefix (in decreasing |LP_j|) maximizing
    /// `AIC(m) = Σ first m squared coefficients - 2m/n`; empty if the
    /// maximizer is m = 0.
    Aic,
    /// Keep every retained order.
    All,
}

/// Model form of a sharpened pmf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelForm {
    Fourier,
    Maxent,
}

/// A density-sharpened model over a finite support.
#[derive(Debug, Clone)]
pub struct SharpenedModel {
    basis: LpBasis,
    form: ModelForm,
    /// Selected orders, ascending.
    active: Vec<usize>,
    /// `LP_j` (fourier) or `θ_j` (maxent), aligned with `active`.
    coef: Vec<f64>,
    /// Log-normalizer Ψ(θ); zero for the fourier form.
    psi: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    /// Set when the fourier pmf is negative somewhere.
    negative: bool,
}

/// Weighted-mean estimator of the LP-Fourier coefficients.
///
/// Requires every observed value to be a support point of the basis; extend
/// the base measure first (see [`BaseMeasure::covering_data`]) when the data
/// run past the truncation point.
pub fn lp_coefficients(basis: &LpBasis, data: &EmpiricalCounts) -> Result<LpCoefficients> {
    let bm = basis.base();
    let idx: Vec<usize> = data
        .values()
        .iter()
        .map(|&v| {
            bm.index_of(v).ok_or_else(|| {
                Error::SupportMismatch(format!("observed value {v} is not a support point"))
            })
        })
        .collect::<Result<_>>()?;
    let n = data.n();
    let estimates = basis
        .orders()
        .iter()
        .map(|&j| {
            let col = basis.column(j).expect("retained order");
            let lp = idx
                .iter()
                .zip(data.counts())
                .map(|(&i, &c)| c as f64 * col[i])
                .sum::<f64>()
                / n as f64;
            (j, lp)
        })
        .collect();
    Ok(LpCoefficients { estimates, n })
}

/// Select the significant orders.
pub fn select(coefs: &LpCoefficients, method: Selection) -> Vec<usize> {
    match method {
        Selection::All => coefs.estimates.iter().map(|&(j, _)| j).collect(),
        Selection::Threshold => {
            let cut = 2.0 / (coefs.n as f64).sqrt();
            coefs
                .estimates
                .iter()
                .filter(|(_, v)| v.abs() > cut)
                .map(|&(j, _)| j)
                .collect()
        }
        Selection::Aic => {
            let mut sorted: Vec<(usize, f64)> = coefs.estimates.clone();
            sorted.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
            let penalty = 2.0 / coefs.n as f64;
            let mut best_m = 0;
            let mut best = 0.0; // AIC(0)
            let mut acc = 0.0;
            for (m, (_, v)) in sorted.iter().enumerate() {
                acc += v * v;
                let aic = acc - penalty * (m + 1) as f64;
                if aic > best {
                    best = aic;
                    best_m = m + 1;
                }
            }
            let mut chosen: Vec<usize> = sorted[..best_m].iter().map(|&(j, _)| j).collect();
            chosen.sort_unstable();
            chosen
        }
    }
}

impl SharpenedModel {
    /// Fourier-form model `p0(x)[1 + Σ_{j∈J} LP_j T_j(x)]`.
    ///
    /// The pmf always sums to 1 but may dip below zero at isolated points;
    /// that is reported through [`SharpenedModel::is_negative`], never
    /// clipped away.
    pub fn ds_fourier(
        basis: &LpBasis,
        coefs: &LpCoefficients,
        active: &[usize],
    ) -> Result<SharpenedModel> {
        let coef: Vec<f64> = active
            .iter()
            .map(|&j| {
                coefs
                    .get(j)
                    .ok_or_else(|| Error::InvalidParameter(format!("no coefficient for order {j}")))
            })
            .collect::<Result<_>>()?;
        Self::fourier_from_values(basis, active, coef)
    }

    /// Fourier model from explicit coefficient values.
    pub fn fourier_from_values(
        basis: &LpBasis,
        active: &[usize],
        coef: Vec<f64>,
    ) -> Result<SharpenedModel> {
        let cols: Vec<&[f64]> = active
            .iter()
            .map(|&j| basis.column(j))
            .collect::<Result<_>>()?;
        let bm = basis.base();
        let mut pmf = bm.pmf().to_vec();
        for (i, p) in pmf.iter_mut().enumerate() {
            let d: f64 = 1.0
                + cols
                    .iter()
                    .zip(&coef)
                    .map(|(col, &c)| c * col[i])
                    .sum::<f64>();
            *p *= d;
        }
        let negative = pmf.iter().any(|&p| p < 0.0);
        let cdf = cumulative(&pmf);
        Ok(SharpenedModel {
            basis: basis.clone(),
            form: ModelForm::Fourier,
            active: active.to_vec(),
            coef,
            psi: 0.0,
            pmf,
            cdf,
            negative,
        })
    }

    /// Maxent model matching the moment targets `E_θ[T_j] = LP_j` for the
    /// active orders.
    ///
    /// Solves the convex dual `Ψ(θ) - Σ θ_j LP_j` by damped Newton with step
    /// halving from `θ = 0`, to gradient norm below 1e-10. The normalizer
    /// `Ψ(θ) = log Σ_x p0(x) exp(Σ θ_j T_j(x))` is exact: `S_j` is piecewise
    /// constant with segment lengths `p0(x)`.
    pub fn maxent_fit(
        basis: &LpBasis,
        targets: &[(usize, f64)],
        active: &[usize],
    ) -> Result<SharpenedModel> {
        const GRAD_TOL: f64 = 1e-10;
        const MAX_ITER: usize = 200;
        const THETA_GUARD: f64 = 200.0;

        let goals: Vec<f64> = active
            .iter()
            .map(|&j| {
                targets
                    .iter()
                    .find(|(o, _)| *o == j)
                    .map(|&(_, v)| v)
                    .ok_or_else(|| Error::InvalidParameter(format!("no target for order {j}")))
            })
            .collect::<Result<_>>()?;
        let cols: Vec<&[f64]> = active
            .iter()
            .map(|&j| basis.column(j))
            .collect::<Result<_>>()?;
        let bm = basis.base();
        let p0 = bm.pmf();
        let r = bm.len();
        let k = active.len();

        let mut theta = vec![0.0; k];
        let mut pmf = p0.to_vec();
        let mut psi = 0.0;

        // dual objective pieces at a given θ
        let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
            // log-sum-exp guarded normalizer and the tilted pmf
            let mut logits: Vec<f64> = (0..r)
                .map(|i| {
                    cols.iter()
                        .zip(theta)
                        .map(|(col, &t)| t * col[i])
                        .sum::<f64>()
                })
                .collect();
            let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (l, &p) in logits.iter_mut().zip(p0) {
                *l = (*l - max_logit).exp() * p;
                z += *l;
            }
            let psi = z.ln() + max_logit;
            let pmf: Vec<f64> = logits.into_iter().map(|v| v / z).collect();
            (psi, pmf)
        };
        let objective = |psi: f64, theta: &[f64]| -> f64 {
            psi - theta.iter().zip(&goals).map(|(&t, &g)| t * g).sum::<f64>()
        };

        let mut grad = vec![0.0; k];
        let mut ridge = 0.0f64;
        for iter in 0..=MAX_ITER {
            let moments: Vec<f64> = cols
                .iter()
                .map(|col| col.iter().zip(&pmf).map(|(&t, &p)| t * p).sum())
                .collect();
            for ((g, &m), &goal) in grad.iter_mut().zip(&moments).zip(&goals) {
                *g = m - goal;
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < GRAD_TOL {
                let cdf = cumulative(&pmf);
                return Ok(SharpenedModel {
                    basis: basis.clone(),
                    form: ModelForm::Maxent,
                    active: active.to_vec(),
                    coef: theta,
                    psi,
                    pmf,
                    cdf,
                    negative: false,
                });
            }
            if iter == MAX_ITER {
                return Err(Error::NonConvergence {
                    grad_norm: gnorm,
                    iterations: MAX_ITER,
                });
            }

            // Hessian = covariance of the active T's under the tilted model,
            // plus a Levenberg-style ridge that grows only when a step fails
            let mut hess = vec![vec![0.0; k]; k];
            let mut diag_scale = 0.0f64;
            #[allow(clippy::needless_range_loop)] // writes (a,b) and (b,a)
            for a in 0..k {
                for b in a..k {
                    let cov: f64 = (0..r)
                        .map(|i| pmf[i] * cols[a][i] * cols[b][i])
                        .sum::<f64>()
                        - moments[a] * moments[b];
                    hess[a][b] = cov;
                    hess[b][a] = cov;
                }
                diag_scale = diag_scale.max(hess[a][a]);
            }
            if ridge > 0.0 {
                for (a, row) in hess.iter_mut().enumerate() {
                    row[a] += ridge * diag_scale;
                }
            }
            let step = solve_spd(&mut hess, &grad)?;
            // slope of the dual along -step; nonnegative since H is psd
            let slope: f64 = grad.iter().zip(&step).map(|(&g, &s)| g * s).sum();

            let f0 = objective(psi, &theta);
            let mut accepted = false;
            if slope < 1e-12 * (1.0 + f0.abs()) {
                // Quadratic endgame: the predicted decrease is below the
                // objective's float resolution, so judge the full Newton
                // step by the gradient norm instead.
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(&t, &s)| t - s).collect();
                if trial.iter().map(|t| t * t).sum::<f64>().sqrt() > THETA_GUARD {
                    return Err(Error::UnattainableMoments(THETA_GUARD));
                }
                let (trial_psi, trial_pmf) = eval(&trial);
                let trial_gnorm = cols
                    .iter()
                    .zip(&goals)
                    .map(|(col, &goal)| {
                        let m: f64 = col.iter().zip(&trial_pmf).map(|(&t, &p)| t * p).sum();
                        (m - goal) * (m - goal)
                    })
                    .sum::<f64>()
                    .sqrt();
                if trial_gnorm < gnorm {
                    theta = trial;
                    psi = trial_psi;
                    pmf = trial_pmf;
                    accepted = true;
                }
            } else {
                // Armijo sufficient decrease; plain <= would accept
                // zero-progress steps and spin out the iteration budget
                let mut scale = 1.0;
                for _ in 0..40 {
                    let trial: Vec<f64> = theta
                        .iter()
                        .zip(&step)
                        .map(|(&t, &s)| t - scale * s)
                        .collect();
                    if trial.iter().map(|t| t * t).sum::<f64>().sqrt() > THETA_GUARD {
                        return Err(Error::UnattainableMoments(THETA_GUARD));
                    }
                    let (trial_psi, trial_pmf) = eval(&trial);
                    if objective(trial_psi, &trial) <= f0 - 1e-4 * scale * slope {
                        theta = trial;
                        psi = trial_psi;
                        pmf = trial_pmf;
                        accepted = true;
                        ridge *= 0.25;
                        if ridge < 1e-14 {
                            ridge = 0.0;
                        }
                        break;
                    }
                    scale *= 0.5;
                }
            }
            if !accepted {
                // stiffen the system and retry from the same point
                ridge = (ridge * 100.0).max(1e-10);
                if ridge > 1e6 {
                    return Err(Error::NonConvergence {
                        grad_norm: gnorm,
                        iterations: iter,
                    });
                }
            }
        }
        unreachable!()
    }

    pub fn basis(&self) -> &LpBasis {
        &self.basis
    }

    pub fn base(&self) -> &BaseMeasure {
        self.basis.base()
    }

    pub fn form(&self) -> ModelForm {
        self.form
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `LP_j` for fourier models, `θ_j` for maxent models (aligned with `active`).
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    /// Log-normalizer Ψ(θ); zero for fourier models.
    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// True when the fourier pmf dips below zero somewhere.
    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Comparison density `d(u)` on the unit interval: piecewise constant,
    /// `1 + Σ LP_j S_j(u)` (fourier) or `exp(Σ θ_j S_j(u) - Ψ)` (maxent).
    pub fn comparison_density(&self, u: f64) -> Result<f64> {
        let i = self.base().quantile_index(u)?;
        Ok(self.density_at_index(i))
    }

    /// Comparison density at the i-th support segment.
    pub fn density_at_index(&self, i: usize) -> f64 {
        let s: f64 = self
            .active
            .iter()
            .zip(&self.coef)
            .map(|(&j, &c)| c * self.basis.column(j).expect("active order")[i])
            .sum();
        match self.form {
            ModelForm::Fourier => 1.0 + s,
            ModelForm::Maxent => (s - self.psi).exp(),
        }
    }

    /// Model mean `Σ_x x·pmf(x)`.
    pub fn mean(&self) -> f64 {
        self.base()
            .support()
            .iter()
            .zip(&self.pmf)
            .map(|(&x, &p)| x * p)
            .sum()
    }

    /// Reproducible inverse-cdf sampling; refused when the fourier pmf has
    /// negative mass.
    pub fn sample_counts(&self, n: u64, rng: &mut impl Rng) -> Result<EmpiricalCounts> {
        if self.negative {
            return Err(Error::NegativeModel);
        }
        Ok(sample_counts_from(&self.cdf, self.base().support(), n, rng))
    }
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Solve `A x = b` for symmetric positive-definite `A` by Cholesky,
/// with a tiny ridge retry when the factorization stalls.
fn solve_spd(a: &mut [Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let k = b.len();
    for attempt in 0..2 {
        if attempt == 1 {
            let ridge = 1e-12 * (0..k).map(|i| a[i][i]).fold(f64::MIN_POSITIVE, f64::max);
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += ridge;
            }
        }
        match cholesky_solve(a, b) {
            Some(x) => return Ok(x),
            None => continue,
        }
    }
    Err(Error::Degenerate(
        "singular moment covariance in the maxent solver".into(),
    ))
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|m| l[i][m] * y[m]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|m| l[m][i] * x[m]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}
