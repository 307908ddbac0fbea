//! Streaming post-selection conformal prediction with real-time control of
//! the false coverage-statement rate.
//!
//! At each time step an online selection rule decides whether the incoming
//! unit deserves a prediction interval. Selection biases naive calibration,
//! so the core method re-picks the calibration subset of the labeled
//! holdout in a way that restores exchangeability with the selected test
//! point: by intersecting historical decision-driven rules, or by swapping
//! the candidate's score into a symmetric threshold. Spending baselines and
//! an adaptive working-level variant for distribution shift are included,
//! together with a Monte-Carlo simulation lab that reproduces the synthetic
//! experiment suite at desk scale.
//!
//! The crate is organized as:
//! - [`stream`]: records, the holdout buffer, and the decision trace;
//! - [`conformal`]: scores, order-statistic quantiles, intervals, realized
//!   coverage levels, rank p-values;
//! - [`selectors`]: online selection rules, including the wealth-based
//!   multiple-testing selector;
//! - [`pickers`]: calibration pick rules;
//! - [`engine`]: the per-step method orchestrators;
//! - [`metrics`]: false-coverage accounting and aggregation;
//! - [`simlab`]: synthetic scenarios and small predictors;
//! - [`config`] / [`runner`] / [`report`] / [`ingest`]: experiment
//!   configuration, execution, and I/O.

pub mod config;
pub mod conformal;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pickers;
pub mod report;
pub mod rng;
pub mod runner;
pub mod selectors;
pub mod simlab;
pub mod stream;

pub use config::{preset, preset_names, ResolvedConfig, RunConfig};
pub use conformal::{
    build_interval, conformal_pvalue, conformal_quantile, realized_beta, PredictionInterval,
    ScoreFunction,
};
pub use engine::{EngineConfig, LogRow, Method, StreamEngine};
pub use error::{Error, Result};
pub use metrics::{aggregate, ReportRow, RunMetrics};
pub use pickers::PickerKind;
pub use selectors::{Direction, Selector, SelectorKind, SymmetricStat};
pub use stream::{HoldoutBuffer, HoldoutMode, SelectionTrace, StreamRecord};
