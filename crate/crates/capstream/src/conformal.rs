//! Nonconformity scores, conformal order-statistic quantiles, interval
//! construction, realized coverage levels, and rank-based p-values.
//!
//! The quantile convention throughout is the `ceil((1 - alpha) * (m + 1))`-th
//! smallest of `m` calibration scores; when that order statistic does not
//! exist the interval has infinite width.

use crate::error::{Error, Result};

/// Custom nonconformity score supplied as a pair of plain functions:
/// `score(mu_hat, y) -> r` and the inversion of its level set,
/// `invert(mu_hat, q) -> (lo, hi)` with `{y : score(mu_hat, y) <= q} = [lo, hi]`.
#[derive(Clone, Copy)]
pub struct CustomScore {
    pub score: fn(f64, f64) -> f64,
    pub invert: fn(f64, f64) -> Result<(f64, f64)>,
}

impl std::fmt::Debug for CustomScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CustomScore")
    }
}

/// Nonconformity score function.
#[derive(Debug, Clone, Copy)]
pub enum ScoreFunction {
    /// `R(x, y) = |y - mu_hat(x)|`.
    AbsResidual,
    /// `R = |y^2 - mu_hat^2| / mu_hat^2`, for positive predictions; the level
    /// set is inverted on the nonnegative half-line.
    NormalizedSquared,
    Custom(CustomScore),
}

impl ScoreFunction {
    pub fn score(&self, mu_hat: f64, y: f64) -> f64 {
        match self {
            ScoreFunction::AbsResidual => (y - mu_hat).abs(),
            ScoreFunction::NormalizedSquared => {
                let m2 = mu_hat * mu_hat;
                (y * y - m2).abs() / m2
            }
            ScoreFunction::Custom(c) => (c.score)(mu_hat, y),
        }
    }

    /// Level set `{y : R(x, y) <= q}` as a closed interval.
    pub fn invert(&self, mu_hat: f64, q: f64) -> Result<(f64, f64)> {
        if q.is_infinite() {
            return Ok((f64::NEG_INFINITY, f64::INFINITY));
        }
        match self {
            ScoreFunction::AbsResidual => Ok((mu_hat - q, mu_hat + q)),
            ScoreFunction::NormalizedSquared => {
                let m2 = mu_hat * mu_hat;
                let lo = (m2 * (1.0 - q)).max(0.0).sqrt();
                let hi = (m2 * (1.0 + q)).sqrt();
                Ok((lo, hi))
            }
            ScoreFunction::Custom(c) => {
                let (lo, hi) = (c.invert)(mu_hat, q)?;
                if lo > hi {
                    return Err(Error::NonIntervalLevelSet(q));
                }
                Ok((lo, hi))
            }
        }
    }
}

/// Prediction interval with an extended-real half-width.
///
/// `covered(y)` is `|y - center| <= half_width`; a `+inf` half-width covers
/// every label and a zero half-width covers only the center.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
    /// Miscoverage level the interval was built at.
    pub level: f64,
    /// Indices of the picked calibration set.
    pub calib_indices: Vec<i64>,
    pub calib_size: usize,
}

impl PredictionInterval {
    pub fn covers(&self, y: f64) -> bool {
        self.half_width.is_infinite() || (y - self.center).abs() <= self.half_width
    }

    pub fn is_infinite(&self) -> bool {
        self.half_width.is_infinite()
    }

    pub fn lo(&self) -> f64 {
        if self.half_width.is_infinite() {
            f64::NEG_INFINITY
        } else {
            self.center - self.half_width
        }
    }

    pub fn hi(&self) -> f64 {
        if self.half_width.is_infinite() {
            f64::INFINITY
        } else {
            self.center + self.half_width
        }
    }
}

/// The `ceil((1 - alpha) * (m + 1))`-th smallest score, or `+inf` when the
/// rank exceeds `m`. Ties are kept as duplicates.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    Ok(quantile_at_level(scores, alpha))
}

/// Quantile for an arbitrary real working level, as produced by adaptive
/// schedules: levels at or below zero give an infinite width, levels at or
/// above one give a degenerate width of zero (the interval keeps only its
/// center).
pub fn quantile_at_level(scores: &[f64], level: f64) -> f64 {
    if level <= 0.0 {
        return f64::INFINITY;
    }
    if level >= 1.0 {
        return 0.0;
    }
    let m = scores.len();
    let k = ((1.0 - level) * (m as f64 + 1.0)).ceil() as usize;
    if k > m {
        return f64::INFINITY;
    }
    kth_smallest(scores, k)
}

/// Quantile used when building intervals: like [`quantile_at_level`] except
/// that a rank overflowing a nonempty calibration set is clamped to the
/// maximum score, so only an empty set yields an infinite width.
pub fn clamped_quantile_at_level(scores: &[f64], level: f64) -> f64 {
    if level <= 0.0 {
        return f64::INFINITY;
    }
    if level >= 1.0 {
        return 0.0;
    }
    let m = scores.len();
    if m == 0 {
        return f64::INFINITY;
    }
    let k = (((1.0 - level) * (m as f64 + 1.0)).ceil() as usize).min(m);
    kth_smallest(scores, k)
}

/// Exact k-th smallest (1-based) by selection.
fn kth_smallest(scores: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= scores.len());
    let mut scratch = scores.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// Builds the interval from a prediction, a conformal quantile, and the
/// calibration bookkeeping. General score functions may produce an
/// asymmetric interval; it is stored via its midpoint and half-width.
pub fn build_interval(
    score_fn: &ScoreFunction,
    mu_hat: f64,
    q: f64,
    level: f64,
    calib_indices: Vec<i64>,
) -> Result<PredictionInterval> {
    let calib_size = calib_indices.len();
    let (center, half_width) = if q.is_infinite() {
        (mu_hat, f64::INFINITY)
    } else {
        let (lo, hi) = score_fn.invert(mu_hat, q)?;
        ((lo + hi) / 2.0, (hi - lo) / 2.0)
    };
    Ok(PredictionInterval {
        center,
        half_width,
        level,
        calib_indices,
        calib_size,
    })
}

/// Largest working level at which the calibration set still covers the test
/// residual: `1 - #{r in calib : r < r_test} / (m + 1)`.
///
/// Ties between the test residual and a calibration score use the strict
/// comparison, so an exactly tied score does not count against coverage.
pub fn realized_beta(r_test: f64, calib: &[f64]) -> f64 {
    let m = calib.len();
    let below = calib.iter().filter(|&&r| r < r_test).count();
    1.0 - below as f64 / (m as f64 + 1.0)
}

/// Rank-based marginal p-value of a test score among null scores:
/// `(1 + #{g_i <= g_test}) / (m0 + 1)`.
pub fn conformal_pvalue(null_scores: &[f64], g_test: f64) -> f64 {
    if null_scores.is_empty() {
        log::warn!("conformal p-value computed against an empty null set; returning 1");
        return 1.0;
    }
    let le = null_scores.iter().filter(|&&g| g <= g_test).count();
    (1.0 + le as f64) / (null_scores.len() as f64 + 1.0)
}
