//! Run configuration: a single TOML file resolved into a validated plan.
//!
//! Every experiment default ships as a named preset (see [`preset_names`]).

use std::path::PathBuf;

use serde::Deserialize;

use crate::conformal::ScoreFunction;
use crate::engine::dtaci::DtaciParams;
use crate::engine::Method;
use crate::error::{Error, Result};
use crate::pickers::PickerKind;
use crate::selectors::{Direction, HypothesisConstant, SymmetricStat, ThresholdFn};
use crate::simlab::{PredictorSpec, ScenarioKind};
use crate::stream::HoldoutMode;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: DataSection,
    #[serde(default)]
    pub predictor: PredictorSection,
    pub selector: SelectorSection,
    #[serde(default)]
    pub picker: PickerSection,
    #[serde(default)]
    pub holdout: HoldoutSection,
    #[serde(default)]
    pub dtaci: Option<DtaciSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Method,
    pub alpha: f64,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Worker threads; 0 means one per core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_stride")]
    pub metric_stride: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub write_run_logs: bool,
    /// Nonconformity score: "abs-residual" (default) or
    /// "normalized-squared".
    #[serde(default)]
    pub score: ScoreKind,
}

fn default_reps() -> usize {
    1
}
fn default_seed() -> u64 {
    0
}
fn default_stride() -> usize {
    10
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    #[default]
    AbsResidual,
    NormalizedSquared,
}

impl ScoreKind {
    pub fn to_score_fn(self) -> ScoreFunction {
        match self {
            ScoreKind::AbsResidual => ScoreFunction::AbsResidual,
            ScoreKind::NormalizedSquared => ScoreFunction::NormalizedSquared,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub scenario: Option<ScenarioKind>,
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    #[serde(default)]
    pub csv_schema: Option<CsvSchemaKind>,
    #[serde(default = "default_train")]
    pub train_size: usize,
    #[serde(default = "default_holdout")]
    pub holdout_size: usize,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
}

fn default_train() -> usize {
    200
}
fn default_holdout() -> usize {
    50
}
fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvSchemaKind {
    /// Columns `t, x_1..x_d, y`; a predictor is fitted on the train split.
    Features,
    /// Columns `t, mu_hat, v, y`; the model is external.
    Precomputed,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    #[serde(default)]
    pub kind: Option<PredictorKind>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Ols,
    Ridge,
    Knn,
    Oracle,
    Identity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorSection {
    pub kind: SelectorKindName,
    #[serde(default = "default_direction")]
    pub direction: DirectionName,
    /// 1-based feature index for the selection score; absent means the
    /// prediction itself.
    #[serde(default)]
    pub score_feature: Option<usize>,
    // Fixed threshold.
    #[serde(default)]
    pub threshold: Option<f64>,
    // Decision-driven threshold function.
    #[serde(default)]
    pub base: Option<f64>,
    #[serde(default)]
    pub slope: Option<f64>,
    #[serde(default)]
    pub cap: Option<f64>,
    // Symmetric statistics.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
    // Multiple testing.
    #[serde(default)]
    pub fdr_level: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub initial_wealth: Option<f64>,
    #[serde(default)]
    pub constant: Option<f64>,
    #[serde(default)]
    pub constant_slope: Option<f64>,
    #[serde(default)]
    pub additional_size: Option<usize>,
}

fn default_direction() -> DirectionName {
    DirectionName::Above
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKindName {
    Fixed,
    DecisionDriven,
    Quantile,
    Mean,
    MultipleTesting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionName {
    Above,
    Below,
}

impl DirectionName {
    fn to_direction(self) -> Direction {
        match self {
            DirectionName::Above => Direction::ScoreAbove,
            DirectionName::Below => Direction::ScoreBelow,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickerSection {
    #[serde(default = "default_picker")]
    pub kind: PickerKindName,
    #[serde(default)]
    pub k: Option<usize>,
}

impl Default for PickerSection {
    fn default() -> Self {
        PickerSection {
            kind: default_picker(),
            k: None,
        }
    }
}

fn default_picker() -> PickerKindName {
    PickerKindName::Nonadaptive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PickerKindName {
    Nonadaptive,
    AdaptiveIntersection,
    AdaptiveSwap,
    Express,
    KCap,
    KExpress,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutSection {
    #[serde(default = "default_mode")]
    pub mode: HoldoutModeName,
    #[serde(default)]
    pub window_size: Option<usize>,
}

impl Default for HoldoutSection {
    fn default() -> Self {
        HoldoutSection {
            mode: default_mode(),
            window_size: None,
        }
    }
}

fn default_mode() -> HoldoutModeName {
    HoldoutModeName::Full
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldoutModeName {
    Fixed,
    Full,
    Window,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtaciSection {
    #[serde(default)]
    pub step_sizes: Option<Vec<f64>>,
    #[serde(default = "default_interval_len")]
    pub interval_len: usize,
    #[serde(default = "default_decaying")]
    pub decaying: bool,
    #[serde(default)]
    pub phi0: Option<f64>,
    #[serde(default)]
    pub eta0: Option<f64>,
}

fn default_interval_len() -> usize {
    200
}
fn default_decaying() -> bool {
    true
}

/// Selection score source for building records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSource {
    MuHat,
    /// 1-based feature index.
    Feature(usize),
}

/// Fully validated selector plan; per-replication state is built from it.
#[derive(Debug, Clone)]
pub enum SelectorPlan {
    Fixed {
        c: f64,
    },
    DecisionDriven {
        threshold: ThresholdFn,
    },
    Symmetric {
        stat: SymmetricStat,
        window: Option<usize>,
    },
    MultipleTesting {
        fdr_level: f64,
        lambda: f64,
        initial_wealth: f64,
        constant: HypothesisConstant,
        additional_size: usize,
    },
}

impl SelectorPlan {
    pub fn is_decision_driven(&self) -> bool {
        matches!(
            self,
            SelectorPlan::Fixed { .. } | SelectorPlan::DecisionDriven { .. }
        )
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, SelectorPlan::Symmetric { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectorPlan::Fixed { .. } => "fixed",
            SelectorPlan::DecisionDriven { .. } => "decision-driven",
            SelectorPlan::Symmetric {
                stat: SymmetricStat::Mean,
                ..
            } => "mean",
            SelectorPlan::Symmetric { .. } => "quantile",
            SelectorPlan::MultipleTesting { .. } => "multiple-testing",
        }
    }
}

/// Data source after validation.
#[derive(Debug, Clone)]
pub enum DataSource {
    Scenario {
        kind: ScenarioKind,
        predictor: PredictorSpec,
        train_size: usize,
        noise_scale: f64,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchemaKind,
        predictor: Option<PredictorSpec>,
        train_size: usize,
    },
}

/// Validated, fully-resolved run plan.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub method: Method,
    pub alpha: f64,
    pub horizon: Option<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub parallelism: usize,
    pub metric_stride: usize,
    pub output_dir: PathBuf,
    pub write_run_logs: bool,
    pub score_kind: ScoreKind,
    pub source: DataSource,
    pub holdout_size: usize,
    pub holdout_mode: HoldoutMode,
    pub selector: SelectorPlan,
    pub direction: Direction,
    pub score_source: ScoreSource,
    pub picker: PickerKind,
    pub dtaci: Option<DtaciParams>,
    pub scenario_label: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text)
    }

    /// Full validation, producing the resolved plan or a field-named error.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let run = &self.run;
        if !(run.alpha > 0.0 && run.alpha < 1.0) {
            return Err(Error::config("run.alpha", "must lie in (0, 1)"));
        }
        if run.replications == 0 {
            return Err(Error::config("run.replications", "must be at least 1"));
        }
        if run.metric_stride == 0 {
            return Err(Error::config("run.metric_stride", "must be at least 1"));
        }

        let selector = self.resolve_selector()?;
        let direction = self.selector.direction.to_direction();
        let picker = self.resolve_picker()?;
        check_pair(picker, &selector)?;

        let holdout_mode = match self.holdout.mode {
            HoldoutModeName::Fixed => HoldoutMode::Fixed,
            HoldoutModeName::Full => HoldoutMode::Full,
            HoldoutModeName::Window => {
                let k = self.holdout.window_size.ok_or_else(|| {
                    Error::config("holdout.window_size", "required for window mode")
                })?;
                if k == 0 {
                    return Err(Error::config("holdout.window_size", "must be positive"));
                }
                HoldoutMode::Window(k)
            }
        };
        if self.data.holdout_size == 0 {
            return Err(Error::config("data.holdout_size", "must be positive"));
        }

        let score_source = match self.selector.score_feature {
            None => ScoreSource::MuHat,
            Some(0) => {
                return Err(Error::config(
                    "selector.score_feature",
                    "indices are 1-based",
                ))
            }
            Some(i) => ScoreSource::Feature(i),
        };

        let (source, scenario_label) = self.resolve_source(score_source)?;

        if self.run.horizon.is_none() && matches!(source, DataSource::Scenario { .. }) {
            return Err(Error::config("run.horizon", "required for scenario runs"));
        }

        let dtaci = match &self.dtaci {
            None => None,
            Some(s) => {
                let mut params = DtaciParams::defaults(run.alpha, s.interval_len, s.decaying);
                if let Some(steps) = &s.step_sizes {
                    if steps.is_empty() {
                        return Err(Error::config("dtaci.step_sizes", "must be nonempty"));
                    }
                    params.step_sizes = steps.clone();
                    params.starting_points = vec![run.alpha; steps.len()];
                }
                if let Some(phi0) = s.phi0 {
                    params.phi0 = phi0;
                }
                if let Some(eta0) = s.eta0 {
                    params.eta0 = eta0;
                }
                Some(params)
            }
        };

        Ok(ResolvedConfig {
            method: run.method,
            alpha: run.alpha,
            horizon: run.horizon,
            replications: run.replications,
            master_seed: run.master_seed,
            parallelism: run.parallelism,
            metric_stride: run.metric_stride,
            output_dir: run.output_dir.clone(),
            write_run_logs: run.write_run_logs,
            score_kind: run.score,
            source,
            holdout_size: self.data.holdout_size,
            holdout_mode,
            selector,
            direction,
            score_source,
            picker,
            dtaci,
            scenario_label,
        })
    }

    fn resolve_selector(&self) -> Result<SelectorPlan> {
        let s = &self.selector;
        match s.kind {
            SelectorKindName::Fixed => {
                let c = s
                    .threshold
                    .ok_or_else(|| Error::config("selector.threshold", "required for fixed"))?;
                Ok(SelectorPlan::Fixed { c })
            }
            SelectorKindName::DecisionDriven => {
                let base = s.base.ok_or_else(|| {
                    Error::config("selector.base", "required for decision-driven")
                })?;
                let slope = s.slope.unwrap_or(0.0);
                Ok(SelectorPlan::DecisionDriven {
                    threshold: ThresholdFn {
                        base,
                        slope,
                        cap: s.cap,
                    },
                })
            }
            SelectorKindName::Quantile => {
                let theta = s
                    .theta
                    .ok_or_else(|| Error::config("selector.theta", "required for quantile"))?;
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(Error::config("selector.theta", "must lie in (0, 1]"));
                }
                Ok(SelectorPlan::Symmetric {
                    stat: SymmetricStat::Quantile(theta),
                    window: s.window,
                })
            }
            SelectorKindName::Mean => Ok(SelectorPlan::Symmetric {
                stat: SymmetricStat::Mean,
                window: s.window,
            }),
            SelectorKindName::MultipleTesting => {
                let fdr_level = s.fdr_level.ok_or_else(|| {
                    Error::config("selector.fdr_level", "required for multiple-testing")
                })?;
                if !(fdr_level > 0.0 && fdr_level < 1.0) {
                    return Err(Error::config("selector.fdr_level", "must lie in (0, 1)"));
                }
                let lambda = s.lambda.unwrap_or(0.5);
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(Error::config("selector.lambda", "must lie in (0, 1)"));
                }
                let initial_wealth = s.initial_wealth.unwrap_or(fdr_level / 2.0);
                if initial_wealth > fdr_level {
                    return Err(Error::config(
                        "selector.initial_wealth",
                        "must not exceed the FDR level",
                    ));
                }
                let base = s.constant.ok_or_else(|| {
                    Error::config("selector.constant", "required for multiple-testing")
                })?;
                let constant = match s.constant_slope {
                    None | Some(0.0) => HypothesisConstant::Fixed(base),
                    Some(slope) => HypothesisConstant::Schedule { base, slope },
                };
                let additional_size = s.additional_size.unwrap_or(500);
                if additional_size == 0 {
                    return Err(Error::config(
                        "selector.additional_size",
                        "must be positive",
                    ));
                }
                Ok(SelectorPlan::MultipleTesting {
                    fdr_level,
                    lambda,
                    initial_wealth,
                    constant,
                    additional_size,
                })
            }
        }
    }

    fn resolve_picker(&self) -> Result<PickerKind> {
        let p = &self.picker;
        let need_k = || {
            p.k.ok_or_else(|| Error::config("picker.k", "required for windowed pickers"))
        };
        Ok(match p.kind {
            PickerKindName::Nonadaptive => PickerKind::Nonadaptive,
            PickerKindName::AdaptiveIntersection => PickerKind::AdaptiveIntersection,
            PickerKindName::AdaptiveSwap => PickerKind::AdaptiveSwap,
            PickerKindName::Express => PickerKind::Express,
            PickerKindName::KCap => PickerKind::KCap(need_k()?),
            PickerKindName::KExpress => PickerKind::KExpress(need_k()?),
        })
    }

    fn resolve_source(&self, score_source: ScoreSource) -> Result<(DataSource, String)> {
        let d = &self.data;
        match (&d.scenario, &d.csv_path) {
            (Some(_), Some(_)) => Err(Error::config(
                "data",
                "scenario and csv_path are mutually exclusive",
            )),
            (None, None) => Err(Error::config(
                "data",
                "one of scenario or csv_path required",
            )),
            (Some(kind), None) => {
                let predictor = self.resolve_predictor(true)?.expect("required");
                if let ScoreSource::Feature(i) = score_source {
                    if i > kind.dim() {
                        return Err(Error::config(
                            "selector.score_feature",
                            format!("scenario has only {} features", kind.dim()),
                        ));
                    }
                }
                Ok((
                    DataSource::Scenario {
                        kind: *kind,
                        predictor,
                        train_size: d.train_size,
                        noise_scale: d.noise_scale,
                    },
                    format!("{kind:?}").to_lowercase(),
                ))
            }
            (None, Some(path)) => {
                let schema = d
                    .csv_schema
                    .ok_or_else(|| Error::config("data.csv_schema", "required with csv_path"))?;
                let predictor = match schema {
                    CsvSchemaKind::Features => Some(
                        self.resolve_predictor(true)?
                            .expect("required for features schema"),
                    ),
                    CsvSchemaKind::Precomputed => {
                        if matches!(score_source, ScoreSource::Feature(_)) {
                            return Err(Error::config(
                                "selector.score_feature",
                                "precomputed streams carry no features",
                            ));
                        }
                        None
                    }
                };
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "csv".to_string());
                Ok((
                    DataSource::Csv {
                        path: path.clone(),
                        schema,
                        predictor,
                        train_size: d.train_size,
                    },
                    label,
                ))
            }
        }
    }

    fn resolve_predictor(&self, required: bool) -> Result<Option<PredictorSpec>> {
        let p = &self.predictor;
        let kind = match p.kind {
            Some(k) => k,
            None if required => {
                return Err(Error::config(
                    "predictor.kind",
                    "required for this data source",
                ))
            }
            None => return Ok(None),
        };
        Ok(Some(match kind {
            PredictorKind::Ols => PredictorSpec::Ols,
            PredictorKind::Ridge => PredictorSpec::Ridge {
                lambda: p.lambda.unwrap_or(1.0),
            },
            PredictorKind::Knn => PredictorSpec::Knn {
                k: p.k.unwrap_or(10),
            },
            PredictorKind::Oracle => PredictorSpec::Oracle,
            PredictorKind::Identity => PredictorSpec::Identity,
        }))
    }
}

/// Picker/selector compatibility at the plan level.
fn check_pair(picker: PickerKind, selector: &SelectorPlan) -> Result<()> {
    let ok = match picker {
        PickerKind::Nonadaptive => true,
        PickerKind::AdaptiveSwap => selector.is_symmetric(),
        _ => selector.is_decision_driven(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config {
            field: format!("picker.kind = {}", picker.name()),
            message: format!("incompatible with selector.kind = {}", selector.name()),
        })
    }
}

/// Built-in presets covering the synthetic-experiment defaults.
const PRESETS: &[(&str, &str)] = &[
    ("a-dec-fixed", include_str!("../presets/a-dec-fixed.toml")),
    ("a-fixed-scc", include_str!("../presets/a-fixed-scc.toml")),
    (
        "b-quantile-swap",
        include_str!("../presets/b-quantile-swap.toml"),
    ),
    ("b-mean-swap", include_str!("../presets/b-mean-swap.toml")),
    ("b-dec-cap", include_str!("../presets/b-dec-cap.toml")),
    ("b-dec-ocp", include_str!("../presets/b-dec-ocp.toml")),
    ("b-dec-lord", include_str!("../presets/b-dec-lord.toml")),
    ("b-dec-elond", include_str!("../presets/b-dec-elond.toml")),
    ("b-saffron", include_str!("../presets/b-saffron.toml")),
    (
        "compare-case1",
        include_str!("../presets/compare-case1.toml"),
    ),
    (
        "compare-case1-kcap",
        include_str!("../presets/compare-case1-kcap.toml"),
    ),
    (
        "compare-case2",
        include_str!("../presets/compare-case2.toml"),
    ),
    (
        "changepoint-quantile-dtaci",
        include_str!("../presets/changepoint-quantile-dtaci.toml"),
    ),
    (
        "slowshift-quantile-dtaci",
        include_str!("../presets/slowshift-quantile-dtaci.toml"),
    ),
    (
        "arma-quantile-dtaci",
        include_str!("../presets/arma-quantile-dtaci.toml"),
    ),
    (
        "iid-quantile-dtaci",
        include_str!("../presets/iid-quantile-dtaci.toml"),
    ),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
