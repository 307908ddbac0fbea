//! Synthetic data generators and small pluggable predictors, so the full
//! pipeline runs self-contained.
//!
//! Noise conventions: scenario A writes its Gaussian spread as a squared
//! standard deviation (`sd = 1 + |mu|`), scenario C and comparison case 2
//! state variances (`sd = sqrt(...)`). Both are validated by moment tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Data-generating scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Linear model with heterogeneous noise.
    A,
    /// Nonlinear model with unit Gaussian noise.
    B,
    /// Aggregation model with feature-dependent noise variance.
    C,
    /// Alias of B used by the shift comparison suite.
    IidB,
    /// Coefficients drift smoothly over online time.
    SlowShift,
    /// Regime switch after online step 200.
    ChangePoint,
    /// Autocorrelated noise series.
    ArmaSeries,
    /// Scenario A data with the aggressive decaying-threshold rule.
    CompareCase1,
    /// Scalar feature with variance proportional to it, identity model.
    CompareCase2,
}

impl ScenarioKind {
    pub fn dim(&self) -> usize {
        match self {
            ScenarioKind::CompareCase2 => 1,
            _ => 10,
        }
    }
}

/// Sizes, noise scale, and seed of one generated dataset.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub train_size: usize,
    pub holdout_size: usize,
    pub horizon: usize,
    /// Extra labeled block reserved for p-value construction.
    pub extra_size: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Disjoint labeled segments in generation order.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: Vec<LabeledPoint>,
    pub extra: Vec<LabeledPoint>,
    pub initial: Vec<LabeledPoint>,
    pub online: Vec<LabeledPoint>,
}

/// Base (pre-shift) conditional mean, also the frozen oracle model.
pub fn base_mean(kind: ScenarioKind, x: &[f64]) -> f64 {
    match kind {
        ScenarioKind::A | ScenarioKind::CompareCase1 => {
            x[..5].iter().sum::<f64>() - x[5..10].iter().sum::<f64>()
        }
        ScenarioKind::B
        | ScenarioKind::IidB
        | ScenarioKind::SlowShift
        | ScenarioKind::ChangePoint => x[0] + 2.0 * x[1] + 3.0 * x[2] * x[2],
        ScenarioKind::C => {
            if x[1] > -0.4 {
                4.0 * (x[0] + 1.0) * x[2].abs()
            } else {
                4.0 * (x[0] - 1.0)
            }
        }
        ScenarioKind::ArmaSeries => {
            (2.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                + 10.0 * x[2] * x[2]
                + 5.0 * x[3]
                + 2.0 * x[4])
                / 4.0
        }
        ScenarioKind::CompareCase2 => x[0],
    }
}

/// Conditional mean at online step `t` (shift scenarios drift; `None` means
/// an offline segment).
fn mean_at(kind: ScenarioKind, x: &[f64], online_t: Option<usize>) -> f64 {
    match (kind, online_t) {
        (ScenarioKind::SlowShift, Some(t)) => {
            let t = t as f64;
            (1.0 - t / 500.0) * x[0]
                + (2.0 + (std::f64::consts::PI * t / 200.0).sin()) * x[1]
                + (3.0 - t / 500.0) * x[2] * x[2]
        }
        (ScenarioKind::ChangePoint, Some(t)) if t > 200 => -2.0 * x[0] - x[1] + 3.0 * x[2] * x[2],
        _ => base_mean(kind, x),
    }
}

/// Noise standard deviation given the features.
fn noise_sd(kind: ScenarioKind, x: &[f64], mu: f64) -> f64 {
    match kind {
        ScenarioKind::A | ScenarioKind::CompareCase1 => 1.0 + mu.abs(),
        ScenarioKind::C => (1.0 + x[3].abs()).sqrt(),
        ScenarioKind::CompareCase2 => (x[0] / 2.0).sqrt(),
        _ => 1.0,
    }
}

struct ArmaNoise {
    xi: f64,
    eps_prev: f64,
}

impl ArmaNoise {
    fn new(rng: &mut ChaCha12Rng, scale: f64) -> Self {
        let eps0: f64 = StandardNormal.sample(rng);
        let eps0 = eps0 * scale;
        ArmaNoise {
            xi: eps0,
            eps_prev: eps0,
        }
    }

    fn next(&mut self, rng: &mut ChaCha12Rng, scale: f64) -> f64 {
        let current = self.xi;
        let eps: f64 = StandardNormal.sample(rng);
        let eps = eps * scale;
        self.xi = 0.99 * self.xi + eps + 0.99 * self.eps_prev;
        self.eps_prev = eps;
        current
    }
}

fn sample_features(kind: ScenarioKind, rng: &mut ChaCha12Rng) -> Vec<f64> {
    match kind {
        ScenarioKind::CompareCase2 => vec![rng.random::<f64>() * 2.0],
        _ => (0..10).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
    }
}

/// Generates the disjoint labeled segments for a scenario. Fixing the seed
/// reproduces the streams bit for bit.
pub fn generate(spec: &ScenarioSpec) -> GeneratedData {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut arma = if spec.kind == ScenarioKind::ArmaSeries {
        Some(ArmaNoise::new(&mut rng, spec.noise_scale))
    } else {
        None
    };

    let mut draw = |n: usize, online_base: Option<usize>, rng: &mut ChaCha12Rng| {
        (0..n)
            .map(|i| {
                let x = sample_features(spec.kind, rng);
                let online_t = online_base.map(|b| b + i);
                let mu = mean_at(spec.kind, &x, online_t);
                let noise = match &mut arma {
                    Some(a) => a.next(rng, spec.noise_scale),
                    None => {
                        let z: f64 = StandardNormal.sample(rng);
                        z * noise_sd(spec.kind, &x, mu) * spec.noise_scale
                    }
                };
                LabeledPoint { x, y: mu + noise }
            })
            .collect::<Vec<_>>()
    };

    GeneratedData {
        train: draw(spec.train_size, None, &mut rng),
        extra: draw(spec.extra_size, None, &mut rng),
        initial: draw(spec.holdout_size, None, &mut rng),
        online: draw(spec.horizon, Some(0), &mut rng),
    }
}

/// Prediction model specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorSpec {
    Ols,
    Ridge {
        lambda: f64,
    },
    Knn {
        k: usize,
    },
    /// The scenario's frozen base mean.
    Oracle,
    /// First feature passed through.
    Identity,
}

#[derive(Debug, Clone)]
enum PredictorImpl {
    Linear {
        coef: Vec<f64>,
        intercept: f64,
    },
    Knn {
        k: usize,
        xs: Vec<Vec<f64>>,
        ys: Vec<f64>,
    },
    Oracle {
        kind: ScenarioKind,
    },
    Identity,
}

/// A fitted, frozen predictor.
#[derive(Debug, Clone)]
pub struct Predictor {
    inner: PredictorImpl,
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.inner {
            PredictorImpl::Linear { coef, intercept } => {
                intercept + coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
            }
            PredictorImpl::Knn { k, xs, ys } => {
                let mut dist: Vec<(f64, usize)> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| {
                        let d: f64 = xi.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d, i)
                    })
                    .collect();
                let k = (*k).min(dist.len()).max(1);
                dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist[..k].iter().map(|&(_, i)| ys[i]).sum::<f64>() / k as f64
            }
            PredictorImpl::Oracle { kind } => base_mean(*kind, x),
            PredictorImpl::Identity => x[0],
        }
    }
}

/// Fits a predictor on the training split; the model is frozen afterwards.
pub fn fit(spec: PredictorSpec, kind: ScenarioKind, train: &[LabeledPoint]) -> Result<Predictor> {
    if train.is_empty()
        && matches!(
            spec,
            PredictorSpec::Ols | PredictorSpec::Ridge { .. } | PredictorSpec::Knn { .. }
        )
    {
        return Err(Error::config("predictor", "training split is empty"));
    }
    let inner = match spec {
        PredictorSpec::Ols => fit_linear(train, 0.0)?,
        PredictorSpec::Ridge { lambda } => fit_linear(train, lambda.max(0.0))?,
        PredictorSpec::Knn { k } => PredictorImpl::Knn {
            k: k.max(1),
            xs: train.iter().map(|p| p.x.clone()).collect(),
            ys: train.iter().map(|p| p.y).collect(),
        },
        PredictorSpec::Oracle => PredictorImpl::Oracle { kind },
        PredictorSpec::Identity => PredictorImpl::Identity,
    };
    Ok(Predictor { inner })
}

/// Least squares with an intercept via the normal equations; falls back to a
/// small ridge penalty on rank deficiency.
fn fit_linear(train: &[LabeledPoint], lambda: f64) -> Result<PredictorImpl> {
    let d = train[0].x.len();
    let p = d + 1;
    let mut ata = vec![0.0f64; p * p];
    let mut aty = vec![0.0f64; p];
    for point in train {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        row.extend_from_slice(&point.x);
        for i in 0..p {
            aty[i] += row[i] * point.y;
            for j in i..p {
                ata[i * p + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            ata[i * p + j] = ata[j * p + i];
        }
    }
    let solve = |ridge: f64| -> Option<Vec<f64>> {
        let mut m = ata.clone();
        for i in 0..p {
            m[i * p + i] += ridge;
        }
        cholesky_solve(&mut m, p, &aty)
    };
    let beta = solve(lambda)
        .or_else(|| solve(lambda + 1e-8))
        .ok_or_else(|| Error::config("predictor", "normal equations are singular"))?;
    Ok(PredictorImpl::Linear {
        intercept: beta[0],
        coef: beta[1..].to_vec(),
    })
}

/// In-place Cholesky factorization and solve for a symmetric positive
/// definite system; `None` when the matrix is not positive definite.
fn cholesky_solve(m: &mut [f64], p: usize, b: &[f64]) -> Option<Vec<f64>> {
    for j in 0..p {
        let mut diag = m[j * p + j];
        for k in 0..j {
            diag -= m[j * p + k] * m[j * p + k];
        }
        if diag <= 0.0 {
            return None;
        }
        let diag = diag.sqrt();
        m[j * p + j] = diag;
        for i in (j + 1)..p {
            let mut v = m[i * p + j];
            for k in 0..j {
                v -= m[i * p + k] * m[j * p + k];
            }
            m[i * p + j] = v / diag;
        }
    }
    // Forward then backward substitution.
    let mut y = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            y[i] -= m[i * p + k] * y[k];
        }
        y[i] /= m[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            y[i] -= m[k * p + i] * y[k];
        }
        y[i] /= m[i * p + i];
    }
    Some(y)
}

/// Rolling refit for stock-style pipelines: each output prediction comes
/// from a model fitted on the trailing `window` labeled points, so the
/// model itself moves with the series while the engines still see a
/// precomputed stream. The first `window` points seed the initial fit and
/// produce no output.
pub fn rolling_refit(
    points: &[LabeledPoint],
    spec: PredictorSpec,
    kind: ScenarioKind,
    window: usize,
) -> Result<Vec<(f64, f64)>> {
    if window == 0 || points.len() <= window {
        return Err(Error::config(
            "rolling_refit",
            "need more points than the fitting window",
        ));
    }
    let mut out = Vec::with_capacity(points.len() - window);
    for t in window..points.len() {
        let train = &points[t - window..t];
        let model = fit(spec, kind, train)?;
        out.push((model.predict(&points[t].x), points[t].y));
    }
    Ok(out)
}

/// Writes labeled points as `t, x_1..x_d, y` rows.
pub fn write_points_csv<W: std::io::Write>(
    writer: W,
    points: &[LabeledPoint],
    first_t: i64,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = points.first().map(|p| p.x.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.push("y".to_string());
    w.write_record(&header).map_err(io_err)?;
    for (i, pt) in points.iter().enumerate() {
        let mut row = vec![(first_t + i as i64).to_string()];
        row.extend(pt.x.iter().map(|v| format!("{v}")));
        row.push(format!("{}", pt.y));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
