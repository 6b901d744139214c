//! How well predictive standard deviations track realized errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Prediction;
use crate::scalar::Scalar;

pub const DEFAULT_BINS: usize = 20;

/// Pearson correlation; `None` if either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            out[k] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&ranks(a), &ranks(b))
}

/// One equal-count bin of the std-versus-error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// Midpoint of the bin's predicted-std range.
    pub center: f64,
    pub std_lo: f64,
    pub std_hi: f64,
    pub mean_abs_error: f64,
    pub mean_std: f64,
    pub count: usize,
}

/// Sorts by predicted std and splits into `bins` groups of (near) equal size.
pub fn binned_curve(stds: &[f64], abs_errors: &[f64], bins: usize) -> Vec<Bin> {
    let n = stds.len();
    if n == 0 || bins == 0 {
        return Vec::new();
    }
    let bins = bins.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| stds[i].total_cmp(&stds[j]));
    (0..bins)
        .map(|b| {
            let lo = b * n / bins;
            let hi = (b + 1) * n / bins;
            let members = &order[lo..hi];
            let count = members.len();
            let std_lo = stds[members[0]];
            let std_hi = stds[members[count - 1]];
            Bin {
                center: 0.5 * (std_lo + std_hi),
                std_lo,
                std_hi,
                mean_abs_error: members.iter().map(|&i| abs_errors[i]).sum::<f64>() / count as f64,
                mean_std: members.iter().map(|&i| stds[i]).sum::<f64>() / count as f64,
                count,
            }
        })
        .collect()
}

/// Correlation statistics for one predictive-std series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub curve: Vec<Bin>,
}

impl SeriesReport {
    fn new(stds: &[f64], abs_errors: &[f64], bins: usize) -> Self {
        Self {
            pearson: pearson(stds, abs_errors),
            spearman: spearman(stds, abs_errors),
            curve: binned_curve(stds, abs_errors, bins),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub mean_abs_error: f64,
    pub gp: SeriesReport,
    /// Absent when the predictions carry no corrected variance.
    pub egp: Option<SeriesReport>,
    /// Reasons a correlation is undefined.
    pub flags: Vec<String>,
    /// Monte-Carlo empirical variance on the evaluation grid (toy runs only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mc_empirical_variance: Option<Vec<f64>>,
}

impl DiagnosticsReport {
    pub fn pearson_gp(&self) -> Option<f64> {
        self.gp.pearson
    }

    pub fn pearson_egp(&self) -> Option<f64> {
        self.egp.as_ref().and_then(|e| e.pearson)
    }

    pub fn spearman_gp(&self) -> Option<f64> {
        self.gp.spearman
    }

    pub fn spearman_egp(&self) -> Option<f64> {
        self.egp.as_ref().and_then(|e| e.spearman)
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Correlates `√var` with `|mean − truth|` for the standard and (when
/// present) corrected variances, and bins std against error.
pub fn correlation_report<T: Scalar>(
    predictions: &[Prediction<T>],
    truths: &[f64],
    bins: usize,
) -> Result<DiagnosticsReport> {
    let stds_gp: Vec<f64> = predictions.iter().map(|p| p.std_gp().to_f64_lossy()).collect();
    let stds_egp: Option<Vec<f64>> = predictions
        .iter()
        .map(|p| p.std_egp().map(|s| s.to_f64_lossy()))
        .collect();
    let means: Vec<f64> = predictions.iter().map(|p| p.mean.to_f64_lossy()).collect();
    correlation_report_from_series(&means, &stds_gp, stds_egp.as_deref(), truths, bins)
}

/// Same as [`correlation_report`] but from plain columns (as read from a
/// predictions table).
pub fn correlation_report_from_series(
    means: &[f64],
    stds_gp: &[f64],
    stds_egp: Option<&[f64]>,
    truths: &[f64],
    bins: usize,
) -> Result<DiagnosticsReport> {
    let n = means.len();
    if truths.len() != n {
        return Err(Error::dims("truth values", n, truths.len()));
    }
    if stds_gp.len() != n {
        return Err(Error::dims("std_gp values", n, stds_gp.len()));
    }
    if let Some(s) = stds_egp {
        if s.len() != n {
            return Err(Error::dims("std_egp values", n, s.len()));
        }
    }
    if n < 3 {
        return Err(Error::config("correlation report needs at least 3 predictions"));
    }
    let all = means
        .iter()
        .chain(stds_gp)
        .chain(truths)
        .chain(stds_egp.unwrap_or(&[]));
    if !all.clone().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            what: "diagnostics input".into(),
        });
    }
    let abs_errors: Vec<f64> = means.iter().zip(truths).map(|(m, t)| (m - t).abs()).collect();
    let mut flags = Vec::new();
    if is_constant(&abs_errors) {
        flags.push("absolute errors are constant; correlations undefined".to_string());
    }
    if is_constant(stds_gp) {
        flags.push("std_gp is constant; its correlations are undefined".to_string());
    }
    if stds_egp.is_some_and(is_constant) {
        flags.push("std_egp is constant; its correlations are undefined".to_string());
    }
    Ok(DiagnosticsReport {
        n,
        mean_abs_error: abs_errors.iter().sum::<f64>() / n as f64,
        gp: SeriesReport::new(stds_gp, &abs_errors, bins),
        egp: stds_egp.map(|s| SeriesReport::new(s, &abs_errors, bins)),
        flags,
        mc_empirical_variance: None,
    })
}

/// Per-point Monte-Carlo variance with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub variance: f64,
    /// Estimated standard deviation of `variance` itself.
    pub std_error: f64,
}

/// At each grid point, the sample variance of `latent(x + ε) + η` with
/// `ε ~ N(0, σ_x²)` and `η ~ N(0, σ_y²)`. Grid point `i` draws from RNG stream
/// `i` of `seed`, so results do not depend on evaluation order.
pub fn empirical_variance_mc_with_error(
    latent: impl Fn(f64) -> f64,
    grid: &[f64],
    input_std: f64,
    output_var: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if replicates < 100 {
        return Err(Error::config(format!("replicates must be at least 100, got {replicates}")));
    }
    if input_std.is_nan() || output_var.is_nan() || input_std < 0.0 || output_var < 0.0 {
        return Err(Error::config("noise levels must be non-negative"));
    }
    let sy = output_var.sqrt();
    let m = replicates as f64;
    let mut samples = vec![0.0; replicates];
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for s in samples.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                let n: f64 = rng.sample(StandardNormal);
                *s = latent(x + input_std * e) + sy * n;
            }
            let mean = samples.iter().sum::<f64>() / m;
            let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
            let variance = m2 * m / (m - 1.0);
            // Var[s²] ≈ (μ₄ − (m−3)/(m−1) σ⁴) / m
            let var_of_var = ((m4 - (m - 3.0) / (m - 1.0) * m2 * m2) / m).max(0.0);
            McEstimate {
                variance,
                std_error: var_of_var.sqrt(),
            }
        })
        .collect())
}

/// Variances only; see [`empirical_variance_mc_with_error`].
pub fn empirical_variance_mc(
    latent: impl Fn(f64) -> f64,
    grid: &[f64],
    input_std: f64,
    output_var: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(
        empirical_variance_mc_with_error(latent, grid, input_std, output_var, replicates, seed)?
            .into_iter()
            .map(|e| e.variance)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy_latent;

    fn pred(mean: f64, var_gp: f64, var_egp: f64) -> Prediction<f64> {
        Prediction {
            mean,
            var_gp,
            var_egp: Some(var_egp),
            gradient_norm: None,
        }
    }

    // Textbook formula, written independently of `pearson`.
    fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
    }

    #[test]
    fn proportional_stds_give_unit_pearson() {
        let errs = [0.1, 0.5, 0.2, 0.9, 0.4];
        let preds: Vec<_> = errs.iter().map(|&e| pred(e, (2.0 * e).powi(2), (3.0 * e).powi(2))).collect();
        let r = correlation_report(&preds, &[0.0; 5], 20).unwrap();
        assert!((r.pearson_gp().unwrap() - 1.0).abs() < 1e-12);
        assert!((r.pearson_egp().unwrap() - 1.0).abs() < 1e-12);
        assert!((r.spearman_gp().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_hand_formula() {
        let a = [0.3, 1.2, 0.7, 2.2, 0.1];
        let b = [1.0, 0.2, 0.9, 1.7, 0.4];
        assert!((pearson(&a, &b).unwrap() - pearson_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn degenerate_series_flagged() {
        let preds: Vec<_> = (0..5).map(|i| pred(i as f64, 1.0, 1.0 + i as f64)).collect();
        let r = correlation_report(&preds, &[0.0; 5], 20).unwrap();
        assert!(r.pearson_gp().is_none());
        assert!(r.pearson_egp().is_some());
        assert_eq!(r.flags.len(), 1);
    }

    #[test]
    fn input_validation() {
        let preds: Vec<_> = (0..2).map(|i| pred(i as f64, 1.0, 1.0)).collect();
        assert!(correlation_report(&preds, &[0.0; 2], 20).is_err());
        let preds: Vec<_> = (0..4).map(|i| pred(i as f64, 1.0, 1.0)).collect();
        assert!(correlation_report(&preds, &[0.0; 3], 20).is_err());
    }

    #[test]
    fn bins_cover_range_with_equal_counts() {
        let stds: Vec<f64> = (0..103).map(|i| ((i * 37) % 103) as f64).collect();
        let errs: Vec<f64> = stds.iter().map(|s| s * 2.0).collect();
        let curve = binned_curve(&stds, &errs, 20);
        assert_eq!(curve.len(), 20);
        assert_eq!(curve.iter().map(|b| b.count).sum::<usize>(), 103);
        assert!(curve.iter().all(|b| b.count == 5 || b.count == 6));
        assert_eq!(curve[0].std_lo, 0.0);
        assert_eq!(curve[19].std_hi, 102.0);
        assert!(curve.iter().all(|b| (b.mean_abs_error - 2.0 * b.mean_std).abs() < 1e-12));
        assert_eq!(binned_curve(&stds[..3], &errs[..3], 20).len(), 3);
    }

    #[test]
    fn output_noise_only_variance() {
        let est = empirical_variance_mc(|x| x.sin(), &[0.0, 1.0, 2.0], 0.0, 0.05, 10_000, 3).unwrap();
        for v in est {
            // standard error of s² for Gaussian data: σ² √(2/(m−1))
            let se = 0.05 * (2.0f64 / 9_999.0).sqrt();
            assert!((v - 0.05).abs() < 3.0 * se, "{v}");
        }
    }

    #[test]
    fn linear_pushforward() {
        let est = empirical_variance_mc(|x| 2.0 * x, &[-1.0, 0.5], 0.3, 0.0, 10_000, 4).unwrap();
        for v in est {
            assert!((v - 0.36).abs() < 0.36 * 0.05, "{v}");
        }
    }

    #[test]
    fn steep_point_spreads_more_than_plateau() {
        let f = |x: f64| toy_latent(x, 3.0);
        let est = empirical_variance_mc(f, &[0.0, std::f64::consts::FRAC_PI_2], 0.3, 0.05, 20_000, 5).unwrap();
        assert!(est[0] > est[1]);
    }

    #[test]
    fn doubling_replicates_is_consistent() {
        let f = |x: f64| toy_latent(x, 3.0);
        let grid: Vec<f64> = (0..20).map(|i| -3.0 + 0.3 * i as f64).collect();
        let a = empirical_variance_mc_with_error(f, &grid, 0.3, 0.05, 2_000, 7).unwrap();
        let b = empirical_variance_mc_with_error(f, &grid, 0.3, 0.05, 4_000, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.variance - y.variance).abs() < 3.0 * x.std_error.max(y.std_error));
        }
    }

    #[test]
    fn rejects_too_few_replicates() {
        assert!(empirical_variance_mc(|x| x, &[0.0], 0.1, 0.0, 99, 0).is_err());
    }
}
