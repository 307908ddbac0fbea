//! Miscoverage-budget schedules for the spending baselines.
//!
//! The p-value based baseline spends a discounted budget at every step,
//! restarting the discount at each selection and hard-clipping so the total
//! spend never exceeds `alpha * max(1, selections so far)`. The e-value
//! based baseline uses the telescoping discount `1 / (t (t + 1))` (1-based)
//! scaled by one plus the running selection count.

use crate::selectors::power_law_gamma;

/// Budget tolerance for the runtime invariant check.
const BUDGET_EPS: f64 = 1e-12;

/// Running spend/bookkeeping state shared by the spending baselines.
#[derive(Debug, Clone, Default)]
pub struct SpendingState {
    /// Total working level allocated so far.
    pub spent: f64,
    /// Last selection time, used to restart the discount sequence.
    pub last_selection: Option<i64>,
    /// Set if the runtime budget invariant ever failed.
    pub violated: bool,
}

impl SpendingState {
    pub fn new() -> Self {
        SpendingState::default()
    }

    /// Working level for the discounted-spending baseline at time `t`, given
    /// the selection count strictly before `t`. Always spends, selected or
    /// not, so the clip is what enforces the budget.
    pub fn lord_level(&mut self, t: i64, prior_selected: u64, alpha: f64) -> f64 {
        let j = t - self.last_selection.unwrap_or(-1);
        let candidate = alpha * power_law_gamma(j);
        let budget = alpha * prior_selected.max(1) as f64;
        let level = candidate.min((budget - self.spent).max(0.0));
        self.spent += level;
        if self.spent > budget + BUDGET_EPS {
            self.violated = true;
        }
        level
    }

    /// Working level for the e-value baseline at time `t` (0-based):
    /// `alpha * (prior_selected + 1) / ((t + 1)(t + 2))`.
    pub fn elond_level(&mut self, t: i64, prior_selected: u64, alpha: f64) -> f64 {
        let discount = 1.0 / ((t + 1) as f64 * (t + 2) as f64);
        let level = alpha * discount * (prior_selected + 1) as f64;
        self.spent += level;
        level
    }

    pub fn record_selection(&mut self, t: i64) {
        self.last_selection = Some(t);
    }
}
