//! Expert-aggregation state for the adaptive-level engine.
//!
//! Each expert tracks a working level updated by one subgradient step of the
//! pinball loss whenever a selection resolves; experts are reweighted
//! exponentially on the realized coverage level and mixed toward uniform.
//! Updates happen only at selections, and the learning-rate/mixing schedules
//! decay in the running selection count when configured to.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::conformal::clamped_quantile_at_level;

/// Tuning parameters of the adaptive-level engine.
#[derive(Debug, Clone)]
pub struct DtaciParams {
    /// Target miscoverage level.
    pub target: f64,
    /// Candidate step sizes, one per expert.
    pub step_sizes: Vec<f64>,
    /// Starting working levels, one per expert.
    pub starting_points: Vec<f64>,
    /// Base mixing rate `phi_0`.
    pub phi0: f64,
    /// Base learning rate `eta_0`.
    pub eta0: f64,
    /// Multiply both rates by `count^-0.501` at the running selection count.
    pub decaying: bool,
}

impl DtaciParams {
    /// The defaults: six experts with doubling step sizes, all starting at
    /// the target level, `phi_0 = 1/(2 I)` and
    /// `eta_0 = sqrt((3 ln(k I) + 6) / (I (1-a)^2 a^3 + I a^2 (1-a)^2))`.
    pub fn defaults(alpha: f64, interval_len: usize, decaying: bool) -> Self {
        let step_sizes = vec![0.008, 0.016, 0.032, 0.064, 0.128, 0.256];
        let k = step_sizes.len() as f64;
        let i = interval_len as f64;
        let numerator = 3.0 * (k * i).ln() + 6.0;
        let denominator =
            i * (1.0 - alpha).powi(2) * alpha.powi(3) + i * alpha.powi(2) * (1.0 - alpha).powi(2);
        DtaciParams {
            target: alpha,
            starting_points: vec![alpha; step_sizes.len()],
            step_sizes,
            phi0: 1.0 / (2.0 * i),
            eta0: (numerator / denominator).sqrt(),
            decaying,
        }
    }

    fn rates_at(&self, selection_count: u64) -> (f64, f64) {
        if self.decaying {
            let decay = (selection_count.max(1) as f64).powf(-0.501);
            (self.phi0 * decay, self.eta0 * decay)
        } else {
            (self.phi0, self.eta0)
        }
    }
}

/// Pinball loss `l(theta; beta) = a (beta - theta) - min(0, beta - theta)`.
fn pinball_loss(theta: f64, beta: f64, alpha: f64) -> f64 {
    alpha * (beta - theta) - (beta - theta).min(0.0)
}

/// Everything stored at the last selection, pending its label.
#[derive(Debug, Clone)]
pub struct PendingSelection {
    pub t: i64,
    pub mu_hat: f64,
    /// Calibration residuals picked at the selection, sorted ascending.
    pub residuals: Vec<f64>,
    /// Expert levels in force at the selection.
    pub expert_levels: Vec<f64>,
    pub phi: f64,
    pub eta: f64,
    pub y: Option<f64>,
}

/// Running state: expert levels, weights, and the pending selection.
#[derive(Debug, Clone)]
pub struct DtaciState {
    pub params: DtaciParams,
    expert_levels: Vec<f64>,
    weights: Vec<f64>,
    pending: Option<PendingSelection>,
    initialized: bool,
    selection_count: u64,
}

impl DtaciState {
    pub fn new(params: DtaciParams) -> Self {
        let k = params.step_sizes.len();
        DtaciState {
            expert_levels: params.starting_points.clone(),
            params,
            weights: vec![1.0; k],
            pending: None,
            initialized: false,
            selection_count: 0,
        }
    }

    pub fn expert_levels(&self) -> &[f64] {
        &self.expert_levels
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Hands the revealed label to the pending selection.
    pub fn observe_label(&mut self, t: i64, y: f64) {
        if let Some(p) = &mut self.pending {
            if p.t == t {
                p.y = Some(y);
            }
        }
    }

    /// Resolves the previous selection (if any), samples the working level
    /// for the current one, and stores the new pending state. `residuals`
    /// is the calibration multiset used to build the interval at `t`.
    pub fn on_selection(
        &mut self,
        t: i64,
        mu_hat: f64,
        score_fn: &crate::conformal::ScoreFunction,
        mut residuals: Vec<f64>,
        rng: &mut ChaCha12Rng,
    ) -> f64 {
        let alpha = self.params.target;
        let chosen = if !self.initialized {
            self.initialized = true;
            let k = self.weights.len();
            let idx = sample_index(rng, &vec![1.0 / k as f64; k]);
            self.params.starting_points[idx]
        } else {
            let pending = self.pending.take().expect("pending selection after init");
            let y_tau = pending
                .y
                .expect("label of the previous selection must be revealed");
            let r_tau = score_fn.score(pending.mu_hat, y_tau);
            let beta_tau = crate::conformal::realized_beta(r_tau, &pending.residuals);

            let k = self.weights.len();
            let mut bar = vec![0.0; k];
            for (i, bar_i) in bar.iter_mut().enumerate() {
                let level_i = pending.expert_levels[i];
                // Re-evaluate the stored interval at the expert's level.
                let q_i = clamped_quantile_at_level(&pending.residuals, level_i);
                let err = if r_tau <= q_i { 0.0 } else { 1.0 };
                self.expert_levels[i] = level_i + self.params.step_sizes[i] * (alpha - err);
                *bar_i =
                    self.weights[i] * (-pending.eta * pinball_loss(level_i, beta_tau, alpha)).exp();
            }
            let bar_mean = bar.iter().sum::<f64>() / k as f64;
            for (w, bar_i) in self.weights.iter_mut().zip(&bar) {
                *w = (1.0 - pending.phi) * bar_i + pending.phi * bar_mean;
            }
            // Rescale to keep weights in range; probabilities are unchanged.
            let total: f64 = self.weights.iter().sum();
            for w in &mut self.weights {
                *w /= total;
            }
            let probs = self.probabilities();
            let idx = sample_index(rng, &probs);
            self.expert_levels[idx]
        };

        self.selection_count += 1;
        let (phi, eta) = self.params.rates_at(self.selection_count);
        residuals.sort_by(|a, b| a.total_cmp(b));
        self.pending = Some(PendingSelection {
            t,
            mu_hat,
            residuals,
            expert_levels: self.expert_levels.clone(),
            phi,
            eta,
            y: None,
        });
        chosen
    }
}

fn sample_index(rng: &mut ChaCha12Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
