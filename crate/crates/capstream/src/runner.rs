//! Experiment orchestration: replications, parallelism, seeding, and report
//! emission.
//!
//! Replication `i` derives its data and algorithm seeds from
//! `(master_seed, i)`, so reports are byte-identical across repeated runs
//! and across serial/parallel execution (results are folded in replication
//! order).

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::{CsvSchemaKind, DataSource, ResolvedConfig, ScoreSource, SelectorPlan};
use crate::engine::{EngineConfig, LogRow, StreamEngine};
use crate::error::{Error, Result};
use crate::ingest::{ingest_path, RawRow};
use crate::metrics::{Aggregate, ReportRow, RunMetrics};
use crate::report::{write_report_csv, write_report_json, write_run_log_csv, ReportLabels};
use crate::rng::{child_seed, lane};
use crate::selectors::{AdditionalSet, SaffronState, Selector, SelectorKind};
use crate::simlab::{fit, generate, LabeledPoint, Predictor, ScenarioSpec};
use crate::stream::{HoldoutBuffer, StreamRecord};

/// Fully built inputs for one replication.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub initial: Vec<StreamRecord>,
    pub online: Vec<StreamRecord>,
    pub additional: Option<AdditionalSet>,
}

/// Result of a whole experiment.
#[derive(Debug)]
pub struct RunOutput {
    pub rows: Vec<ReportRow>,
    pub labels: ReportLabels,
    /// Replications whose runtime budget invariant fired (always expected 0).
    pub invariant_violations: usize,
    pub report_csv: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
    pub run_logs: Vec<PathBuf>,
}

pub fn labels_for(cfg: &ResolvedConfig) -> ReportLabels {
    ReportLabels {
        method: cfg.method.name().to_string(),
        scenario: cfg.scenario_label.clone(),
        selector: cfg.selector.name().to_string(),
        picker: cfg.picker.name().to_string(),
    }
}

/// Runs all replications and writes the report (and opt-in run logs) under
/// the configured output directory.
pub fn run(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let (metrics, logs, violations) = run_in_memory(cfg)?;
    let rows = {
        let mut agg = Aggregate::new(metrics[0].grid());
        for m in &metrics {
            agg.fold(m)?;
        }
        agg.rows()
    };
    let labels = labels_for(cfg);

    std::fs::create_dir_all(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join("report.csv");
    let json_path = cfg.output_dir.join("report.json");
    let mut csv_buf = Vec::new();
    write_report_csv(&mut csv_buf, &rows, &labels)?;
    std::fs::write(&csv_path, csv_buf)?;
    let mut json_buf = Vec::new();
    write_report_json(&mut json_buf, &rows, &labels)?;
    std::fs::write(&json_path, json_buf)?;

    let mut run_logs = Vec::new();
    if cfg.write_run_logs {
        for (i, log) in logs.iter().enumerate() {
            let path = cfg.output_dir.join(format!("runlog_{i:04}.csv"));
            let mut buf = Vec::new();
            write_run_log_csv(&mut buf, log, cfg.method.name())?;
            std::fs::write(&path, buf)?;
            run_logs.push(path);
        }
    }

    Ok(RunOutput {
        rows,
        labels,
        invariant_violations: violations,
        report_csv: Some(csv_path),
        report_json: Some(json_path),
        run_logs,
    })
}

/// Runs all replications without touching the filesystem. Returns per-run
/// metrics and logs in replication order plus the invariant-violation count.
pub fn run_in_memory(cfg: &ResolvedConfig) -> Result<(Vec<RunMetrics>, Vec<Vec<LogRow>>, usize)> {
    let shared = prepare_shared(cfg)?;
    let reps = cfg.replications as u64;

    let execute = |rep: u64| -> Result<(RunMetrics, Vec<LogRow>, bool)> {
        execute_replication(cfg, rep, shared.as_ref())
    };

    let results: Vec<Result<(RunMetrics, Vec<LogRow>, bool)>> = if cfg.parallelism == 1 {
        (0..reps).map(execute).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if cfg.parallelism > 0 {
            builder = builder.num_threads(cfg.parallelism);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::config("run.parallelism", e.to_string()))?;
        pool.install(|| (0..reps).into_par_iter().map(execute).collect())
    };

    let mut metrics = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    let mut violations = 0usize;
    for result in results {
        let (m, l, violated) = result?;
        metrics.push(m);
        logs.push(l);
        violations += usize::from(violated);
    }
    Ok((metrics, logs, violations))
}

/// Executes one replication end to end.
pub fn execute_replication(
    cfg: &ResolvedConfig,
    rep: u64,
    shared: Option<&PreparedStream>,
) -> Result<(RunMetrics, Vec<LogRow>, bool)> {
    let stream = match shared {
        Some(s) => s.clone(),
        None => build_scenario_stream(cfg, rep)?,
    };
    let horizon = match cfg.horizon {
        Some(h) => h.min(stream.online.len()),
        None => stream.online.len(),
    };
    let selector = build_selector(cfg, stream.additional)?;
    let holdout = HoldoutBuffer::new(cfg.holdout_mode, stream.initial)?;
    let engine_cfg = EngineConfig {
        method: cfg.method,
        alpha: cfg.alpha,
        score_fn: cfg.score_kind.to_score_fn(),
        picker: cfg.picker,
        dtaci: cfg.dtaci.clone(),
        horizon,
        metric_stride: cfg.metric_stride,
    };
    let algo_seed = child_seed(cfg.master_seed, rep, lane::ALGORITHM);
    let mut engine = StreamEngine::new(engine_cfg, selector, holdout, algo_seed)?;
    engine.run(&stream.online[..horizon])?;
    let violated = engine.invariant_violated();
    let (metrics, log) = engine.into_parts();
    Ok((metrics, log, violated))
}

fn build_selector(cfg: &ResolvedConfig, additional: Option<AdditionalSet>) -> Result<Selector> {
    let kind = match &cfg.selector {
        SelectorPlan::Fixed { c } => SelectorKind::FixedThreshold { c: *c },
        SelectorPlan::DecisionDriven { threshold } => SelectorKind::DecisionDriven {
            threshold: *threshold,
        },
        SelectorPlan::Symmetric { stat, window } => SelectorKind::SymmetricThreshold {
            stat: *stat,
            window: *window,
        },
        SelectorPlan::MultipleTesting {
            fdr_level,
            lambda,
            initial_wealth,
            constant,
            additional_size,
        } => {
            let additional = additional.ok_or_else(|| {
                Error::config(
                    "selector.additional_size",
                    "no additional labeled block available for p-values",
                )
            })?;
            if additional.entries.len() != *additional_size {
                return Err(Error::config(
                    "selector.additional_size",
                    format!(
                        "expected {} additional rows, found {}",
                        additional_size,
                        additional.entries.len()
                    ),
                ));
            }
            SelectorKind::MultipleTesting {
                saffron: SaffronState::new(*fdr_level, *lambda, *initial_wealth),
                constant: *constant,
                additional,
            }
        }
    };
    Ok(Selector::new(kind, cfg.direction))
}

fn additional_size_of(cfg: &ResolvedConfig) -> usize {
    match &cfg.selector {
        SelectorPlan::MultipleTesting {
            additional_size, ..
        } => *additional_size,
        _ => 0,
    }
}

fn score_of(source: ScoreSource, x: Option<&[f64]>, mu_hat: f64) -> f64 {
    match source {
        ScoreSource::MuHat => mu_hat,
        ScoreSource::Feature(i) => x.map(|x| x[i - 1]).unwrap_or(mu_hat),
    }
}

fn labeled_record(
    t: i64,
    point: &LabeledPoint,
    predictor: &Predictor,
    cfg: &ResolvedConfig,
) -> StreamRecord {
    let mu = predictor.predict(&point.x);
    let v = score_of(cfg.score_source, Some(&point.x), mu);
    let r = cfg.score_kind.to_score_fn().score(mu, point.y);
    StreamRecord::new(t, mu, v)
        .with_features(point.x.clone())
        .with_label(point.y)
        .with_residual(r)
}

fn build_scenario_stream(cfg: &ResolvedConfig, rep: u64) -> Result<PreparedStream> {
    let (kind, predictor_spec, train_size, noise_scale) = match &cfg.source {
        DataSource::Scenario {
            kind,
            predictor,
            train_size,
            noise_scale,
        } => (*kind, *predictor, *train_size, *noise_scale),
        DataSource::Csv { .. } => unreachable!("csv streams are prepared once"),
    };
    let horizon = cfg
        .horizon
        .ok_or_else(|| Error::config("run.horizon", "required for scenario runs"))?;
    let spec = ScenarioSpec {
        kind,
        train_size,
        holdout_size: cfg.holdout_size,
        horizon,
        extra_size: additional_size_of(cfg),
        noise_scale,
        seed: child_seed(cfg.master_seed, rep, lane::DATA),
    };
    let data = generate(&spec);
    let predictor = fit(predictor_spec, kind, &data.train)?;

    let n = cfg.holdout_size as i64;
    let initial: Vec<StreamRecord> = data
        .initial
        .iter()
        .enumerate()
        .map(|(j, p)| labeled_record(j as i64 - n, p, &predictor, cfg))
        .collect();
    let online: Vec<StreamRecord> = data
        .online
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mu = predictor.predict(&p.x);
            let v = score_of(cfg.score_source, Some(&p.x), mu);
            StreamRecord::new(j as i64, mu, v)
                .with_features(p.x.clone())
                .with_label(p.y)
        })
        .collect();
    let additional = if data.extra.is_empty() {
        None
    } else {
        Some(AdditionalSet {
            entries: data
                .extra
                .iter()
                .map(|p| (predictor.predict(&p.x), p.y))
                .collect(),
        })
    };
    Ok(PreparedStream {
        initial,
        online,
        additional,
    })
}

/// CSV sources are parsed and prepared once and shared across replications.
fn prepare_shared(cfg: &ResolvedConfig) -> Result<Option<PreparedStream>> {
    let (path, schema, predictor_spec, train_size) = match &cfg.source {
        DataSource::Scenario { .. } => return Ok(None),
        DataSource::Csv {
            path,
            schema,
            predictor,
            train_size,
        } => (path.clone(), *schema, *predictor, *train_size),
    };
    let rows = ingest_path(&path, schema)?;
    let display = path.display().to_string();
    let additional_size = additional_size_of(cfg);
    let train_rows = match schema {
        CsvSchemaKind::Features => train_size,
        CsvSchemaKind::Precomputed => 0,
    };
    let needed = train_rows + additional_size + cfg.holdout_size + 1;
    if rows.len() < needed {
        return Err(Error::ingest(
            &display,
            rows.len() as u64 + 1,
            format!(
                "need at least {needed} rows (train {train_rows} + additional {additional_size} + holdout {} + online 1), found {}",
                cfg.holdout_size,
                rows.len()
            ),
        ));
    }

    let (train_slice, rest) = rows.split_at(train_rows);
    let (additional_slice, rest) = rest.split_at(additional_size);
    let (initial_slice, online_slice) = rest.split_at(cfg.holdout_size);

    let predictor = match (schema, predictor_spec) {
        (CsvSchemaKind::Features, Some(spec)) => {
            let train: Vec<LabeledPoint> = train_slice
                .iter()
                .map(|r| LabeledPoint {
                    x: r.x.clone().expect("features schema"),
                    y: r.y,
                })
                .collect();
            // The scenario kind is irrelevant for non-oracle predictors.
            Some(fit(spec, crate::simlab::ScenarioKind::B, &train)?)
        }
        _ => None,
    };

    let score_fn = cfg.score_kind.to_score_fn();
    let to_record = |t: i64, row: &RawRow, labeled: bool| -> StreamRecord {
        let (mu, v) = match schema {
            CsvSchemaKind::Precomputed => (row.mu_hat.unwrap_or(0.0), row.v.unwrap_or(0.0)),
            CsvSchemaKind::Features => {
                let x = row.x.as_deref().expect("features schema");
                let mu = predictor.as_ref().expect("features schema").predict(x);
                (mu, score_of(cfg.score_source, Some(x), mu))
            }
        };
        let mut rec = StreamRecord::new(t, mu, v).with_label(row.y);
        if let Some(x) = &row.x {
            rec = rec.with_features(x.clone());
        }
        if labeled {
            rec = rec.with_residual(score_fn.score(mu, row.y));
        }
        rec
    };

    let n = cfg.holdout_size as i64;
    let initial: Vec<StreamRecord> = initial_slice
        .iter()
        .enumerate()
        .map(|(j, r)| to_record(j as i64 - n, r, true))
        .collect();
    let online: Vec<StreamRecord> = online_slice
        .iter()
        .enumerate()
        .map(|(j, r)| to_record(j as i64, r, false))
        .collect();
    let additional = if additional_size > 0 {
        Some(AdditionalSet {
            entries: additional_slice
                .iter()
                .map(|r| {
                    let mu = match schema {
                        CsvSchemaKind::Precomputed => r.mu_hat.unwrap_or(0.0),
                        CsvSchemaKind::Features => predictor
                            .as_ref()
                            .expect("features schema")
                            .predict(r.x.as_deref().expect("features schema")),
                    };
                    (mu, r.y)
                })
                .collect(),
        })
    } else {
        None
    };

    Ok(Some(PreparedStream {
        initial,
        online,
        additional,
    }))
}

/// Rebuilds the aggregate report from raw run logs (the `report`
/// subcommand).
pub fn report_from_logs(
    paths: &[PathBuf],
    stride: usize,
    labels: ReportLabels,
) -> Result<(Vec<ReportRow>, ReportLabels)> {
    if paths.is_empty() {
        return Err(Error::config("report", "no run logs given"));
    }
    let mut metrics = Vec::with_capacity(paths.len());
    let mut method = labels.method.clone();
    for path in paths {
        let (log_method, rows) = crate::report::read_run_log_csv(path)?;
        if method.is_empty() || method == "na" {
            method = log_method;
        }
        let mut m = RunMetrics::new(rows.len(), stride);
        for row in &rows {
            m.update(
                row.t,
                row.selected,
                row.covered,
                row.half_width,
                row.calib_size,
            )?;
        }
        metrics.push(m);
    }
    let mut agg = Aggregate::new(metrics[0].grid());
    for m in &metrics {
        agg.fold(m)?;
    }
    let labels = ReportLabels { method, ..labels };
    Ok((agg.rows(), labels))
}
