//! LP-orthonormal polynomial systems.
//!
//! For a base measure with support size `r`, the system starts from the
//! standardized mid-distribution transform `T1` and builds higher orders by
//! a weighted Gram-Schmidt pass over the powers `T1^2, T1^3, …` under the
//! inner product `⟨f,g⟩ = Σ_x p0(x) f(x) g(x)`. The construction works for
//! any base measure; orders that collapse numerically are dropped and
//! recorded rather than reported as errors.

use crate::base::BaseMeasure;
use crate::error::{Error, Result};

/// Relative residual below which a power is declared degenerate.
const DEGENERACY_TOL: f64 = 1e-8;

/// Table of orthonormal polynomial values `T_j(x; F0)` over the support.
#[derive(Debug, Clone)]
pub struct LpBasis {
    base: BaseMeasure,
    /// `columns[k]` holds the values of the k-th retained order over the support.
    columns: Vec<Vec<f64>>,
    /// Original order (power) of each retained column, 1-based.
    orders: Vec<usize>,
    /// Orders removed for numerical degeneracy.
    dropped: Vec<usize>,
}

/// First-order LP basis: the standardized mid-distribution transform.
///
/// `T1(x) = √12 (Fmid(x) - 0.5) / √(1 - Σ_x p0(x)³)`, which has mean 0 and
/// variance 1 under `p0`.
pub fn t1(bm: &BaseMeasure) -> Result<Vec<f64>> {
    if bm.len() < 2 {
        return Err(Error::Degenerate(
            "support must have at least 2 points".into(),
        ));
    }
    let cube_sum: f64 = bm.pmf().iter().map(|&p| p * p * p).sum();
    let denom = 1.0 - cube_sum;
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "pmf concentrates all mass on one atom".into(),
        ));
    }
    let scale = 12f64.sqrt() / denom.sqrt();
    Ok(bm
        .mid_cdf_values()
        .iter()
        .map(|&m| scale * (m - 0.5))
        .collect())
}

/// Weighted Gram-Schmidt over `{T1, T1², …, T1^M}`.
///
/// Each stage is recentered (p0-weighted mean subtracted), orthogonalized
/// against the retained columns, and normalized. The projection pass runs
/// twice: the powers are highly collinear for skewed measures and a single
/// sweep leaves orthogonality errors in the 1e-4 range.
pub fn build_basis(bm: &BaseMeasure, m: usize) -> Result<LpBasis> {
    let r = bm.len();
    if m < 1 || m >= r {
        return Err(Error::InvalidParameter(format!(
            "order M={m} must satisfy 1 ≤ M ≤ r-1 = {}",
            r - 1
        )));
    }
    let first = t1(bm)?;
    let w = bm.pmf();

    let dot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(w).map(|((&x, &y), &p)| p * x * y).sum()
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut orders = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    let mut power = vec![1.0; r];

    for order in 1..=m {
        for (v, &t) in power.iter_mut().zip(&first) {
            *v *= t;
        }
        let mut col = power.clone();
        let initial_norm = {
            let mean: f64 = col.iter().zip(w).map(|(&v, &p)| p * v).sum();
            for v in col.iter_mut() {
                *v -= mean;
            }
            dot(&col, &col).sqrt()
        };
        if initial_norm == 0.0 {
            dropped.push(order);
            continue;
        }
        for _pass in 0..2 {
            let mean: f64 = col.iter().zip(w).map(|(&v, &p)| p * v).sum();
            for v in col.iter_mut() {
                *v -= mean;
            }
            for prev in &columns {
                let c = dot(&col, prev);
                for (v, &q) in col.iter_mut().zip(prev) {
                    *v -= c * q;
                }
            }
        }
        let norm = dot(&col, &col).sqrt();
        if norm < DEGENERACY_TOL * initial_norm {
            dropped.push(order);
            continue;
        }
        for v in col.iter_mut() {
            *v /= norm;
        }
        columns.push(col);
        orders.push(order);
    }

    if columns.is_empty() {
        return Err(Error::Degenerate(format!(
            "all requested orders up to {m} are degenerate"
        )));
    }
    Ok(LpBasis {
        base: bm.clone(),
        columns,
        orders,
        dropped,
    })
}

impl LpBasis {
    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    /// Retained orders (1-based powers of the construction sequence).
    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    /// Orders removed for numerical degeneracy.
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn num_retained(&self) -> usize {
        self.columns.len()
    }

    /// Values of order `j` over the whole support.
    pub fn column(&self, j: usize) -> Result<&[f64]> {
        let k = self
            .orders
            .iter()
            .position(|&o| o == j)
            .ok_or(Error::DroppedOrder(j))?;
        Ok(&self.columns[k])
    }

    /// `T_j(x)` at one support point (by support index).
    pub fn value(&self, j: usize, support_index: usize) -> Result<f64> {
        Ok(self.column(j)?[support_index])
    }

    /// Unit-interval view `S_j(u) = T_j(Q0(u))`, piecewise constant in `u`
    /// with breakpoints at the cdf values (right-continuous).
    pub fn eval_s(&self, j: usize, u: f64) -> Result<f64> {
        let col = self.column(j)?;
        let i = self.base.quantile_index(u)?;
        Ok(col[i])
    }

    /// Exact inner product `⟨Q0, S_j⟩` over (0,1): both factors are piecewise
    /// constant on the same partition, so the integral is the finite sum
    /// `Σ_x x·T_j(x)·p0(x)`.
    pub fn q0_inner(&self, j: usize) -> Result<f64> {
        let col = self.column(j)?;
        Ok(self
            .base
            .support()
            .iter()
            .zip(col)
            .zip(self.base.pmf())
            .map(|((&x, &t), &p)| x * t * p)
            .sum())
    }

    /// Max absolute deviation of the Gram matrix from the identity.
    pub fn gram_error(&self) -> f64 {
        let w = self.base.pmf();
        let mut worst: f64 = 0.0;
        for (a, ca) in self.columns.iter().enumerate() {
            for (b, cb) in self.columns.iter().enumerate().skip(a) {
                let g: f64 = ca
                    .iter()
                    .zip(cb)
                    .zip(w)
                    .map(|((&x, &y), &p)| p * x * y)
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{make_parametric, Family, TruncationPolicy};

    fn measure(f: Family) -> BaseMeasure {
        make_parametric(f, TruncationPolicy::default()).unwrap()
    }

    #[test]
    fn fair_die_t1_is_affine_in_x() {
        let bm = measure(Family::DiscreteUniform { k: 6 });
        let t = t1(&bm).unwrap();
        let c = (12.0f64 / 35.0).sqrt();
        for (i, &v) in t.iter().enumerate() {
            let x = (i + 1) as f64;
            assert!((v - c * (x - 3.5)).abs() < 1e-12, "x={x} v={v}");
        }
    }

    #[test]
    fn binary_t1_closed_form() {
        let p = 0.3;
        let bm = measure(Family::Custom {
            support: vec![0.0, 1.0],
            pmf: vec![1.0 - p, p],
        });
        let t = t1(&bm).unwrap();
        let s = (p * (1.0 - p)).sqrt();
        assert!((t[0] - (-p / s)).abs() < 1e-12);
        assert!((t[1] - (1.0 - p) / s).abs() < 1e-12);
        // symmetric case
        let fair = measure(Family::Custom {
            support: vec![0.0, 1.0],
            pmf: vec![0.5, 0.5],
        });
        let t = t1(&fair).unwrap();
        assert!((t[0] + 1.0).abs() < 1e-12 && (t[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t1_has_zero_mean_unit_variance() {
        let bm = measure(Family::NegBinomial {
            mu: 19.0,
            phi: 12.0,
        });
        let t = t1(&bm).unwrap();
        let mean: f64 = t.iter().zip(bm.pmf()).map(|(&v, &p)| p * v).sum();
        let var: f64 = t.iter().zip(bm.pmf()).map(|(&v, &p)| p * v * v).sum();
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn binary_support_keeps_only_order_one() {
        let bm = measure(Family::Custom {
            support: vec![0.0, 1.0],
            pmf: vec![0.5, 0.5],
        });
        let basis = build_basis(&bm, 1).unwrap();
        assert_eq!(basis.orders(), &[1]);
        // requesting more than r-1 orders is a caller error
        assert!(build_basis(&bm, 3).is_err());
        // an unavailable order is reported, not silently served
        assert!(matches!(basis.eval_s(2, 0.5), Err(Error::DroppedOrder(2))));
    }

    #[test]
    fn fair_die_gram_matrix_is_identity() {
        let bm = measure(Family::DiscreteUniform { k: 6 });
        let basis = build_basis(&bm, 5).unwrap();
        assert_eq!(basis.num_retained(), 5);
        assert!(
            basis.gram_error() < 1e-8,
            "gram error {}",
            basis.gram_error()
        );
    }

    #[test]
    fn nb_basis_sign_changes_match_polynomial_degree() {
        // order j should change sign j times over the support
        let bm = measure(Family::NegBinomial {
            mu: 19.0,
            phi: 12.0,
        });
        let basis = build_basis(&bm, 4).unwrap();
        for &j in &[1usize, 2, 3, 4] {
            let col = basis.column(j).unwrap();
            let changes = col
                .windows(2)
                .filter(|w| w[0].signum() != w[1].signum())
                .count();
            assert_eq!(changes, j, "order {j} changed sign {changes} times");
        }
    }

    #[test]
    fn eval_s_is_right_continuous_with_cdf_breakpoints() {
        let bm = measure(Family::DiscreteUniform { k: 6 });
        let basis = build_basis(&bm, 3).unwrap();
        // Q0(0.4) = 3, so S1(0.4) = T1(3)
        let c = (12.0f64 / 35.0).sqrt();
        assert!((basis.eval_s(1, 0.4).unwrap() - c * (3.0 - 3.5)).abs() < 1e-12);
        // just past a breakpoint the value belongs to the next support point
        let eps = 1e-12;
        let f1 = bm.cdf()[0];
        assert_eq!(
            basis.eval_s(1, f1 + eps).unwrap(),
            basis.value(1, 1).unwrap()
        );
        assert_eq!(basis.eval_s(1, f1).unwrap(), basis.value(1, 0).unwrap());
    }

    #[test]
    fn s_integrates_to_zero() {
        // segment lengths equal p0, so ∫ S_j du = Σ p0 T_j = 0
        let bm = measure(Family::Poisson { lambda: 2.5 });
        let basis = build_basis(&bm, 6).unwrap();
        for &j in basis.orders() {
            let col = basis.column(j).unwrap();
            let integral: f64 = col.iter().zip(bm.pmf()).map(|(&t, &p)| t * p).sum();
            assert!(integral.abs() < 1e-10, "order {j}: {integral}");
        }
    }

    #[test]
    fn affine_relabeling_leaves_basis_unchanged() {
        let pmf = vec![0.1, 0.25, 0.3, 0.2, 0.15];
        let a = measure(Family::Custom {
            support: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            pmf: pmf.clone(),
        });
        let b = measure(Family::Custom {
            support: vec![10.0, 20.0, 35.0, 37.0, 100.0],
            pmf,
        });
        let ba = build_basis(&a, 4).unwrap();
        let bb = build_basis(&b, 4).unwrap();
        for &j in ba.orders() {
            let ca = ba.column(j).unwrap();
            let cb = bb.column(j).unwrap();
            for (x, y) in ca.iter().zip(cb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poisson_one_q0_s1_inner_product() {
        let bm = measure(Family::Poisson { lambda: 1.0 });
        let basis = build_basis(&bm, 1).unwrap();
        let inner = basis.q0_inner(1).unwrap();
        assert!((inner - 0.9596).abs() < 5e-4, "⟨Q0,S1⟩ = {inner}");
    }
}
