//! Discovery tooling.
//!
//! A pointwise bootstrap bump scan over the comparison density, and
//! discovery-source separation (DSS): embedding many empirical distributions
//! into the plane through an SVD of their LP-transform matrix.

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::base::{BaseMeasure, EmpiricalCounts};
use crate::basis::{build_basis, LpBasis};
use crate::error::{Error, Result};
use crate::rng::child_rng;
use crate::sharpen::{lp_coefficients, select, Selection, SharpenedModel};

/// One-sided upper tail of the standard normal.
fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Result of a pointwise bump scan.
#[derive(Debug, Clone)]
pub struct BumpScanResult {
    /// Evaluation points in physical coordinates.
    pub grid: Vec<f64>,
    /// Honest bootstrap p-values, bounded below by `1/(B+1)`.
    pub pval: Vec<f64>,
    /// `-log10` of the working tail probability per point. Equals
    /// `-log10(pval)` unless the Gaussian tail approximation is active.
    pub neglog10: Vec<f64>,
    /// Maximal intervals (physical coordinates) where `neglog10` reaches the
    /// threshold. Interval ends fall on bin edges when the measure has them.
    pub regions: Vec<(f64, f64)>,
    /// Detection threshold in `-log10` units.
    pub threshold: f64,
    /// True when p-values below bootstrap resolution were approximated by a
    /// Gaussian tail on the studentized statistic.
    pub approximation: bool,
    pub replicates: usize,
    pub seed: u64,
}

/// Scan settings beyond the null model itself.
#[derive(Debug, Clone, Copy)]
pub struct BumpScanSettings {
    /// Highest basis order for the comparison-density estimate.
    pub max_order: usize,
    /// Restrict the scan grid to this physical window.
    pub window: Option<(f64, f64)>,
    /// Allow the Gaussian tail approximation when `1/(B+1)` cannot resolve
    /// the requested significance level.
    pub approx_tail: bool,
}

impl Default for BumpScanSettings {
    fn default() -> Self {
        BumpScanSettings {
            max_order: 10,
            window: None,
            approx_tail: true,
        }
    }
}

/// Threshold-selected Fourier comparison-density values over the support.
fn dhat_curve(basis: &LpBasis, data: &EmpiricalCounts) -> Result<Vec<f64>> {
    let coefs = lp_coefficients(basis, data)?;
    let active = select(&coefs, Selection::Threshold);
    let model = SharpenedModel::ds_fourier(basis, &coefs, &active)?;
    Ok((0..basis.base().len())
        .map(|i| model.density_at_index(i))
        .collect())
}

/// Pointwise bootstrap bump scan at `sigma_level` (one-sided normal scale).
///
/// Fits the comparison density on the observed data, replays the same fit on
/// `b` parametric draws from the null, and reports per-point bootstrap
/// p-values `(1 + #{d̂_boot ≥ d̂_obs}) / (B+1)`. When the requested level is
/// below bootstrap resolution, detection regions come from a Gaussian tail
/// on the studentized statistic (flagged in the result) or, with the
/// approximation disabled, the scan is refused.
pub fn bump_scan(
    bm: &BaseMeasure,
    data: &EmpiricalCounts,
    b: usize,
    sigma_level: f64,
    seed: u64,
    settings: &BumpScanSettings,
) -> Result<BumpScanResult> {
    if b < 99 {
        return Err(Error::InvalidParameter("bump scan needs B >= 99".into()));
    }
    if sigma_level <= 0.0 {
        return Err(Error::InvalidParameter(
            "sigma level must be positive".into(),
        ));
    }
    let alpha = normal_upper_tail(sigma_level);
    let min_p = 1.0 / (b + 1) as f64;
    let approximation = min_p > alpha;
    if approximation && !settings.approx_tail {
        return Err(Error::BootstrapResolution {
            b,
            min_p,
            target: alpha,
        });
    }

    let bm = bm.covering_data(data)?;
    let m = settings.max_order.min(bm.len() - 1).max(1);
    let basis = build_basis(&bm, m)?;
    let observed = dhat_curve(&basis, data)?;
    let n = data.n();
    let r = bm.len();

    // Null replicate curves, collected in replicate order so that the
    // reduction below is independent of thread scheduling.
    const CHUNK: usize = 512;
    let mut exceed = vec![0u64; r];
    let mut sum = vec![0.0f64; r];
    let mut sumsq = vec![0.0f64; r];
    let mut start = 0usize;
    while start < b {
        let stop = (start + CHUNK).min(b);
        let curves: Vec<Vec<f64>> = (start..stop)
            .into_par_iter()
            .map(|rep| {
                let mut rng = child_rng(seed, rep as u64);
                let sample = bm.sample_counts(n, &mut rng);
                dhat_curve(&basis, &sample).expect("sample support is the null support")
            })
            .collect();
        for curve in &curves {
            for i in 0..r {
                if curve[i] >= observed[i] {
                    exceed[i] += 1;
                }
                sum[i] += curve[i];
                sumsq[i] += curve[i] * curve[i];
            }
        }
        start = stop;
    }

    let (lo, hi) = settings
        .window
        .unwrap_or((bm.support()[0], *bm.support().last().unwrap()));
    let mut grid = Vec::new();
    let mut pval = Vec::new();
    let mut neglog10 = Vec::new();
    let mut kept_index = Vec::new();
    for i in 0..r {
        let x = bm.support()[i];
        if x < lo || x > hi {
            continue;
        }
        let p_boot = (1 + exceed[i]) as f64 / (b + 1) as f64;
        let tail = if approximation {
            let mean = sum[i] / b as f64;
            let var = (sumsq[i] / b as f64 - mean * mean).max(0.0);
            let sd = var.sqrt();
            if sd == 0.0 {
                1.0
            } else {
                normal_upper_tail((observed[i] - mean) / sd).max(f64::MIN_POSITIVE)
            }
        } else {
            p_boot
        };
        grid.push(x);
        pval.push(p_boot);
        neglog10.push(-tail.log10());
        kept_index.push(i);
    }

    let threshold = -alpha.log10();
    let mut regions = Vec::new();
    let edges = bm.bin_edges();
    let mut run_start: Option<usize> = None;
    #[allow(clippy::needless_range_loop)] // sentinel pass one past the end
    for g in 0..=grid.len() {
        let above = g < grid.len() && neglog10[g] >= threshold;
        match (run_start, above) {
            (None, true) => run_start = Some(g),
            (Some(s), false) => {
                let e = g - 1;
                let (a, z) = match edges {
                    Some(edges) => (edges[kept_index[s]], edges[kept_index[e] + 1]),
                    None => (grid[s], grid[e]),
                };
                regions.push((a, z));
                run_start = None;
            }
            _ => {}
        }
    }

    Ok(BumpScanResult {
        grid,
        pval,
        neglog10,
        regions,
        threshold,
        approximation,
        replicates: b,
        seed,
    })
}

/// Result of a discovery-source separation.
#[derive(Debug, Clone)]
pub struct DssResult {
    /// LP-transform matrix, one row per source.
    pub matrix: Vec<Vec<f64>>,
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    /// Per-source planar coordinates from the top two singular directions.
    pub coords: Vec<(f64, f64)>,
    /// Squared distance from the origin per source.
    pub discovery_index: Vec<f64>,
}

/// LP-transform matrix: row ℓ holds the first `m` LP coefficients of source
/// ℓ against the shared null.
pub fn lp_transform_matrix(
    sources: &[EmpiricalCounts],
    bm: &BaseMeasure,
    m: usize,
) -> Result<Vec<Vec<f64>>> {
    if sources.is_empty() {
        return Err(Error::InvalidParameter("no sources".into()));
    }
    let max_value = sources
        .iter()
        .map(|s| *s.values().last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let bm = bm.covering(max_value)?;
    let basis = build_basis(&bm, m.min(bm.len() - 1))?;
    if basis.num_retained() < m {
        return Err(Error::Degenerate(format!(
            "only {} of {m} requested orders are available",
            basis.num_retained()
        )));
    }
    sources
        .iter()
        .map(|source| {
            let coefs = lp_coefficients(&basis, source)?;
            Ok(basis
                .orders()
                .iter()
                .take(m)
                .map(|&j| coefs.get(j).expect("retained order"))
                .collect())
        })
        .collect()
}

/// Embed the rows of an LP-transform matrix in the plane via SVD.
///
/// Source ℓ maps to `(λ1·u_1ℓ, λ2·u_2ℓ)` where `u_r` are the top left
/// singular vectors; the discovery index is the squared distance from the
/// origin. Signs are fixed so the largest-magnitude entry of each direction
/// is positive.
pub fn dss_embed(matrix: &[Vec<f64>]) -> Result<DssResult> {
    let g = matrix.len();
    if g < 2 {
        return Err(Error::InvalidParameter("need at least 2 sources".into()));
    }
    let m = matrix[0].len();
    if m < 2 || matrix.iter().any(|row| row.len() != m) {
        return Err(Error::InvalidParameter(
            "need at least 2 coefficients per source, same for every source".into(),
        ));
    }
    let a = DMatrix::from_fn(g, m, |i, j| matrix[i][j]);
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap()
    });
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let mut axis = [vec![0.0; g], vec![0.0; g]];
    for (r, axis_r) in axis.iter_mut().enumerate() {
        if r < order.len() {
            let col = order[r];
            for i in 0..g {
                axis_r[i] = u[(i, col)];
            }
            // canonical sign: dominant component positive
            let dom = axis_r
                .iter()
                .cloned()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if dom < 0.0 {
                for v in axis_r.iter_mut() {
                    *v = -*v;
                }
            }
        }
    }
    let l1 = singular_values.first().copied().unwrap_or(0.0);
    let l2 = singular_values.get(1).copied().unwrap_or(0.0);
    let coords: Vec<(f64, f64)> = (0..g).map(|i| (l1 * axis[0][i], l2 * axis[1][i])).collect();
    let discovery_index = coords.iter().map(|&(x, y)| x * x + y * y).collect();
    Ok(DssResult {
        matrix: matrix.to_vec(),
        singular_values,
        coords,
        discovery_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{make_parametric, Family, TruncationPolicy};

    fn uniform(k: u32) -> BaseMeasure {
        make_parametric(Family::DiscreteUniform { k }, TruncationPolicy::default()).unwrap()
    }

    #[test]
    fn null_sources_give_zero_matrix() {
        let bm = uniform(10);
        // each source is the null pmf itself as exact counts
        let source = EmpiricalCounts::from_pairs((1..=10).map(|x| (x as f64, 7u64))).unwrap();
        let l = lp_transform_matrix(&[source.clone(), source], &bm, 4).unwrap();
        for row in &l {
            for &v in row {
                assert!(v.abs() < 1e-12);
            }
        }
        let dss = dss_embed(&l).unwrap();
        for &d in &dss.discovery_index {
            assert!(d < 1e-20);
        }
    }

    #[test]
    fn binary_single_order_matches_proportion_formula() {
        let p0 = 0.4;
        let bm = make_parametric(
            Family::Custom {
                support: vec![0.0, 1.0],
                pmf: vec![1.0 - p0, p0],
            },
            TruncationPolicy::default(),
        )
        .unwrap();
        let src = EmpiricalCounts::from_pairs([(0.0, 13u64), (1.0, 7u64)]).unwrap();
        let l = lp_transform_matrix(&[src], &bm, 1).unwrap();
        let ptilde = 0.35;
        let expect = (ptilde - p0) / (p0 * (1.0 - p0)).sqrt();
        assert!((l[0][0] - expect).abs() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_the_matrix() {
        let rows = vec![
            vec![0.5, 0.1, -0.2],
            vec![0.0, 0.3, 0.4],
            vec![-0.1, 0.2, 0.1],
            vec![0.7, -0.3, 0.0],
        ];
        let dss = dss_embed(&rows).unwrap();
        // reconstruction through nalgebra directly
        let a = DMatrix::from_fn(4, 3, |i, j| rows[i][j]);
        let svd = a.clone().svd(true, true);
        let back = svd.recompose().unwrap();
        let err = (&a - &back).norm() / a.norm();
        assert!(err < 1e-8, "reconstruction error {err}");
        assert!(dss.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn discovery_index_invariant_under_right_rotation() {
        let rows = vec![
            vec![0.5, 0.1, -0.2],
            vec![0.0, 0.3, 0.4],
            vec![-0.1, 0.2, 0.1],
            vec![0.7, -0.3, 0.0],
            vec![0.05, 0.0, 0.0],
        ];
        let base = dss_embed(&rows).unwrap();
        // rotate coordinates 2 and 3 by 30 degrees
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let rotated: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![r[0], c * r[1] - s * r[2], s * r[1] + c * r[2]])
            .collect();
        let rot = dss_embed(&rotated).unwrap();
        for (a, b) in base.discovery_index.iter().zip(&rot.discovery_index) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicating_rows_preserves_index_ranking() {
        let rows = vec![
            vec![0.5, 0.1],
            vec![0.01, 0.02],
            vec![-0.3, 0.4],
            vec![0.0, 0.05],
        ];
        let base = dss_embed(&rows).unwrap();
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().cloned());
        let dup = dss_embed(&doubled).unwrap();
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
            idx
        };
        assert_eq!(
            rank(&base.discovery_index),
            rank(&dup.discovery_index[..rows.len()])
        );
    }

    #[test]
    fn zero_matrix_embeds_at_origin() {
        let rows = vec![vec![0.0; 3]; 5];
        let dss = dss_embed(&rows).unwrap();
        assert!(dss.discovery_index.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn scan_pval_floor_is_one_over_b_plus_one() {
        let bm = uniform(12);
        // grossly non-uniform data
        let data =
            EmpiricalCounts::from_pairs([(3.0, 200u64), (4.0, 200u64), (9.0, 10u64)]).unwrap();
        let scan = bump_scan(&bm, &data, 199, 2.0, 5, &BumpScanSettings::default()).unwrap();
        let floor = 1.0 / 200.0;
        assert!(scan.pval.iter().all(|&p| p >= floor - 1e-15));
        assert!(scan.pval.iter().any(|&p| (p - floor).abs() < 1e-12));
        assert!(!scan.approximation);
    }

    #[test]
    fn scan_refuses_unresolvable_level_without_approximation() {
        let bm = uniform(8);
        let data = EmpiricalCounts::from_pairs([(1.0, 30u64), (2.0, 40u64)]).unwrap();
        let settings = BumpScanSettings {
            approx_tail: false,
            ..Default::default()
        };
        let err = bump_scan(&bm, &data, 999, 5.0, 3, &settings);
        assert!(matches!(err, Err(Error::BootstrapResolution { .. })));
    }

    #[test]
    fn scan_honors_window() {
        let bm = uniform(12);
        let data = EmpiricalCounts::from_pairs([(3.0, 50u64), (4.0, 70u64)]).unwrap();
        let settings = BumpScanSettings {
            window: Some((2.0, 6.0)),
            ..Default::default()
        };
        let scan = bump_scan(&bm, &data, 199, 2.0, 5, &settings).unwrap();
        assert!(scan.grid.iter().all(|&x| (2.0..=6.0).contains(&x)));
    }
}
