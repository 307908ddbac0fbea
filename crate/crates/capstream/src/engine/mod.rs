//! Per-time-step orchestration of the streaming methods.
//!
//! Every engine consumes the same stream contract: online records indexed
//! `0..T`, labels revealed one step late, decisions recorded in the trace.
//! The adaptive-pick method calibrates on the picked subset, the marginal
//! baseline on the whole holdout, and the spending baselines on the whole
//! holdout at a budgeted working level.

pub mod dtaci;
pub mod spending;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::conformal::{
    build_interval, clamped_quantile_at_level, PredictionInterval, ScoreFunction,
};
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::pickers::{
    check_compatibility, pick_adaptive_intersection, pick_adaptive_swap, pick_express,
    pick_nonadaptive, pick_windowed, PickerKind,
};
use crate::selectors::{RuleView, Selector, SelectorKind};
use crate::stream::{HoldoutBuffer, SelectionTrace, StreamRecord};

use dtaci::{DtaciParams, DtaciState};
use spending::SpendingState;

/// Streaming method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cap,
    CapDtaci,
    Ocp,
    LordCi,
    ElondCi,
    DtaciSel,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Cap => "cap",
            Method::CapDtaci => "cap-dtaci",
            Method::Ocp => "ocp",
            Method::LordCi => "lord-ci",
            Method::ElondCi => "elond-ci",
            Method::DtaciSel => "dtaci-sel",
        }
    }

    pub fn uses_picker(&self) -> bool {
        matches!(self, Method::Cap | Method::CapDtaci)
    }
}

/// One run-log row: `t, S_t, method, alpha_t, calib_size, half_width,
/// covered`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: i64,
    pub selected: bool,
    pub alpha: f64,
    pub calib_size: Option<usize>,
    pub half_width: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug)]
enum MethodState {
    Cap,
    Ocp,
    CapDtaci(DtaciState),
    DtaciSel(DtaciState),
    LordCi(SpendingState),
    ElondCi(SpendingState),
}

/// Static engine configuration.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub method: Method,
    pub alpha: f64,
    pub score_fn: ScoreFunction,
    pub picker: PickerKind,
    pub dtaci: Option<DtaciParams>,
    pub horizon: usize,
    pub metric_stride: usize,
}

/// One stream's engine: strictly sequential, one instance per replication.
#[derive(Debug)]
pub struct StreamEngine {
    method: Method,
    alpha: f64,
    score_fn: ScoreFunction,
    picker: PickerKind,
    selector: Selector,
    holdout: HoldoutBuffer,
    trace: SelectionTrace,
    state: MethodState,
    metrics: RunMetrics,
    log: Vec<LogRow>,
    rng: ChaCha12Rng,
    prev: Option<StreamRecord>,
}

impl StreamEngine {
    pub fn new(
        cfg: EngineConfig,
        selector: Selector,
        holdout: HoldoutBuffer,
        algo_seed: u64,
    ) -> Result<Self> {
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(Error::InvalidLevel(cfg.alpha));
        }
        if cfg.method.uses_picker() {
            check_compatibility(cfg.picker, &selector)?;
        }
        let dtaci_params = || {
            cfg.dtaci
                .clone()
                .unwrap_or_else(|| DtaciParams::defaults(cfg.alpha, 200, true))
        };
        let state = match cfg.method {
            Method::Cap => MethodState::Cap,
            Method::Ocp => MethodState::Ocp,
            Method::CapDtaci => MethodState::CapDtaci(DtaciState::new(dtaci_params())),
            Method::DtaciSel => MethodState::DtaciSel(DtaciState::new(dtaci_params())),
            Method::LordCi => MethodState::LordCi(SpendingState::new()),
            Method::ElondCi => MethodState::ElondCi(SpendingState::new()),
        };
        Ok(StreamEngine {
            method: cfg.method,
            alpha: cfg.alpha,
            score_fn: cfg.score_fn,
            picker: cfg.picker,
            selector,
            holdout,
            trace: SelectionTrace::new(),
            state,
            metrics: RunMetrics::new(cfg.horizon, cfg.metric_stride),
            log: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(algo_seed),
            prev: None,
        })
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn trace(&self) -> &SelectionTrace {
        &self.trace
    }

    pub fn holdout(&self) -> &HoldoutBuffer {
        &self.holdout
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// True if a runtime budget invariant was violated (spending methods).
    pub fn invariant_violated(&self) -> bool {
        match &self.state {
            MethodState::LordCi(s) | MethodState::ElondCi(s) => s.violated,
            _ => false,
        }
    }

    pub fn into_parts(self) -> (RunMetrics, Vec<LogRow>) {
        (self.metrics, self.log)
    }

    /// Runs the engine over an entire online stream.
    pub fn run(&mut self, stream: &[StreamRecord]) -> Result<()> {
        for record in stream {
            self.step(record)?;
        }
        Ok(())
    }

    /// Advances one time step: reveal the previous label, decide, and emit.
    pub fn step(&mut self, record: &StreamRecord) -> Result<()> {
        let t = record.t;
        if t != self.trace.len() as i64 {
            return Err(Error::StaleRecord {
                t,
                tail: self.trace.len() as i64 - 1,
            });
        }
        self.reveal_previous()?;

        let prior_selected = self.trace.total_selected();
        let (selected, view) = self.selector.select(record, &self.trace, &self.holdout)?;

        let (interval, log_alpha) = match self.method {
            Method::Cap => {
                let interval = if selected {
                    let (residuals, indices) = self.pick_calibration(record, &view)?;
                    let q = clamped_quantile_at_level(&residuals, self.alpha);
                    Some(build_interval(
                        &self.score_fn,
                        record.mu_hat,
                        q,
                        self.alpha,
                        indices,
                    )?)
                } else {
                    None
                };
                (interval, self.alpha)
            }
            Method::Ocp => {
                let interval = if selected {
                    Some(self.marginal_interval(record, self.alpha)?)
                } else {
                    None
                };
                (interval, self.alpha)
            }
            Method::LordCi => {
                let level = match &mut self.state {
                    MethodState::LordCi(s) => {
                        let level = s.lord_level(t, prior_selected, self.alpha);
                        if selected {
                            s.record_selection(t);
                        }
                        level
                    }
                    _ => unreachable!(),
                };
                let interval = if selected {
                    Some(self.marginal_interval(record, level)?)
                } else {
                    None
                };
                (interval, level)
            }
            Method::ElondCi => {
                let level = match &mut self.state {
                    MethodState::ElondCi(s) => s.elond_level(t, prior_selected, self.alpha),
                    _ => unreachable!(),
                };
                let interval = if selected {
                    Some(self.marginal_interval(record, level)?)
                } else {
                    None
                };
                (interval, level)
            }
            Method::CapDtaci | Method::DtaciSel => {
                if selected {
                    let (residuals, indices) = if self.method == Method::CapDtaci {
                        self.pick_calibration(record, &view)?
                    } else {
                        self.whole_holdout_residuals()
                    };
                    let state = match &mut self.state {
                        MethodState::CapDtaci(d) | MethodState::DtaciSel(d) => d,
                        _ => unreachable!(),
                    };
                    let level = state.on_selection(
                        t,
                        record.mu_hat,
                        &self.score_fn,
                        residuals.clone(),
                        &mut self.rng,
                    );
                    let q = clamped_quantile_at_level(&residuals, level);
                    let interval =
                        build_interval(&self.score_fn, record.mu_hat, q, level, indices)?;
                    (Some(interval), level)
                } else {
                    (None, self.alpha)
                }
            }
        };

        self.trace.push(t, selected);

        let covered = match &interval {
            Some(iv) => {
                let y = record.y.ok_or(Error::UnlabeledRecord(t))?;
                Some(iv.covers(y))
            }
            None => None,
        };
        let calib_size = interval.as_ref().map(|iv| iv.calib_size);
        let half_width = interval.as_ref().map(|iv| iv.half_width);
        self.metrics
            .update(t, selected, covered, half_width, calib_size)?;
        self.log.push(LogRow {
            t,
            selected,
            alpha: log_alpha,
            calib_size,
            half_width,
            covered,
        });
        self.prev = Some(record.clone());
        Ok(())
    }

    fn reveal_previous(&mut self) -> Result<()> {
        if let Some(prev) = self.prev.take() {
            let y = prev.y.ok_or(Error::UnlabeledRecord(prev.t))?;
            let r = self.score_fn.score(prev.mu_hat, y);
            if let MethodState::CapDtaci(d) | MethodState::DtaciSel(d) = &mut self.state {
                d.observe_label(prev.t, y);
            }
            self.holdout.advance(prev.with_residual(r))?;
        }
        Ok(())
    }

    /// Picked calibration residuals and their indices for the current step.
    fn pick_calibration(
        &self,
        record: &StreamRecord,
        view: &RuleView,
    ) -> Result<(Vec<f64>, Vec<i64>)> {
        let (slice, positions) = match self.picker {
            PickerKind::Nonadaptive => {
                let slice = self.holdout.entries();
                (slice, pick_nonadaptive(view, slice))
            }
            PickerKind::AdaptiveIntersection => {
                let slice = self.holdout.entries();
                (
                    slice,
                    pick_adaptive_intersection(&self.selector, &self.trace, view, slice, record)?,
                )
            }
            PickerKind::Express => {
                let slice = self.holdout.entries();
                (
                    slice,
                    pick_express(&self.selector, &self.trace, view, slice, record)?,
                )
            }
            PickerKind::KCap(_) | PickerKind::KExpress(_) => {
                let slice = self.holdout.entries();
                (
                    slice,
                    pick_windowed(
                        self.picker,
                        &self.selector,
                        &self.trace,
                        view,
                        slice,
                        record,
                    )?,
                )
            }
            PickerKind::AdaptiveSwap => {
                let (stat, window) = match &self.selector.kind {
                    SelectorKind::SymmetricThreshold { stat, window } => (*stat, *window),
                    _ => {
                        return Err(Error::IncompatibleRule {
                            picker: self.picker.name().to_string(),
                            selector: self.selector.kind.name().to_string(),
                        })
                    }
                };
                let slice = self.holdout.tail(window);
                (
                    slice,
                    pick_adaptive_swap(stat, self.selector.direction, slice, record.v, record.t)?,
                )
            }
        };
        let mut residuals = Vec::with_capacity(positions.len());
        let mut indices = Vec::with_capacity(positions.len());
        for &p in &positions {
            let entry = &slice[p];
            residuals.push(entry.r.ok_or(Error::UnlabeledRecord(entry.t))?);
            indices.push(entry.t);
        }
        Ok((residuals, indices))
    }

    fn whole_holdout_residuals(&self) -> (Vec<f64>, Vec<i64>) {
        let entries = self.holdout.entries();
        let residuals = entries.iter().filter_map(|e| e.r).collect();
        let indices = entries.iter().map(|e| e.t).collect();
        (residuals, indices)
    }

    /// Marginal split-conformal interval over the entire holdout buffer.
    fn marginal_interval(&self, record: &StreamRecord, level: f64) -> Result<PredictionInterval> {
        let (residuals, indices) = self.whole_holdout_residuals();
        let q = clamped_quantile_at_level(&residuals, level);
        build_interval(&self.score_fn, record.mu_hat, q, level, indices)
    }
}
