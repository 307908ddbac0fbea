//! Per-run false-coverage accounting and cross-replication aggregation.
//!
//! An infinite interval always counts as covered, is excluded from the mean
//! length, enters the median as `+inf`, and is tallied by the
//! infinite-interval frequency. The false coverage proportion uses the
//! denominator `max(1, total selections)`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Streaming per-run counters with snapshots on a fixed grid.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    horizon: usize,
    stride: usize,
    elapsed: usize,
    selected: u64,
    missed: u64,
    finite_len_sum: f64,
    finite_count: u64,
    inf_count: u64,
    calib_sum: u64,
    /// Sorted interval lengths (infinite allowed) for the running median.
    lengths_sorted: Vec<f64>,
    snapshots: Vec<Snapshot>,
}

/// Cumulative state at one grid point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Snapshot {
    /// Number of elapsed steps.
    pub elapsed: usize,
    pub fcp: f64,
    /// Mean interval length over finite intervals; NaN before any.
    pub mean_len: f64,
    /// Median interval length including infinite ones; NaN before any.
    pub median_len: f64,
    /// Infinite intervals over `max(1, selections)`.
    pub inf_freq: f64,
    /// Mean picked-calibration size; NaN before any emission.
    pub mean_calib: f64,
    pub selected: u64,
}

impl RunMetrics {
    pub fn new(horizon: usize, stride: usize) -> Self {
        RunMetrics {
            horizon,
            stride: stride.max(1),
            elapsed: 0,
            selected: 0,
            missed: 0,
            finite_len_sum: 0.0,
            finite_count: 0,
            inf_count: 0,
            calib_sum: 0,
            lengths_sorted: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Folds in the outcome of one time step.
    pub fn update(
        &mut self,
        t: i64,
        selected: bool,
        covered: Option<bool>,
        half_width: Option<f64>,
        calib_size: Option<usize>,
    ) -> Result<()> {
        if selected != covered.is_some() {
            return Err(Error::CoverageWithoutSelection(t));
        }
        if selected {
            let hw = half_width.unwrap_or(f64::INFINITY);
            let covered = covered.unwrap_or(true);
            if hw.is_infinite() && !covered {
                return Err(Error::CoverageWithoutSelection(t));
            }
            self.selected += 1;
            if !covered {
                self.missed += 1;
            }
            let len = 2.0 * hw;
            if len.is_finite() {
                self.finite_len_sum += len;
                self.finite_count += 1;
            } else {
                self.inf_count += 1;
            }
            let pos = self.lengths_sorted.partition_point(|&x| x < len);
            self.lengths_sorted.insert(pos, len);
            self.calib_sum += calib_size.unwrap_or(0) as u64;
        }
        self.elapsed += 1;
        if self.elapsed.is_multiple_of(self.stride) || self.elapsed == self.horizon {
            let snap = self.snapshot();
            // The final step may coincide with a stride point.
            if self.snapshots.last().map(|s| s.elapsed) != Some(snap.elapsed) {
                self.snapshots.push(snap);
            }
        }
        Ok(())
    }

    /// Current false coverage proportion.
    pub fn fcp(&self) -> f64 {
        self.missed as f64 / (self.selected.max(1)) as f64
    }

    fn median_len(&self) -> f64 {
        let n = self.lengths_sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            self.lengths_sorted[n / 2]
        } else {
            (self.lengths_sorted[n / 2 - 1] + self.lengths_sorted[n / 2]) / 2.0
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            elapsed: self.elapsed,
            fcp: self.fcp(),
            mean_len: if self.finite_count > 0 {
                self.finite_len_sum / self.finite_count as f64
            } else {
                f64::NAN
            },
            median_len: self.median_len(),
            inf_freq: self.inf_count as f64 / self.selected.max(1) as f64,
            mean_calib: if self.selected > 0 {
                self.calib_sum as f64 / self.selected as f64
            } else {
                f64::NAN
            },
            selected: self.selected,
        }
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn final_snapshot(&self) -> Snapshot {
        self.snapshots
            .last()
            .copied()
            .unwrap_or_else(|| self.snapshot())
    }

    pub fn grid(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.elapsed).collect()
    }

    pub fn selected(&self) -> u64 {
        self.selected
    }

    pub fn missed(&self) -> u64 {
        self.missed
    }
}

/// Mergeable cross-replication sums at one grid point.
#[derive(Debug, Clone, Copy, Default)]
struct AggCell {
    runs: u64,
    fcp_sum: f64,
    fcp_sumsq: f64,
    mean_len_sum: f64,
    mean_len_runs: u64,
    median_sum: f64,
    median_runs: u64,
    inf_freq_sum: f64,
    calib_sum: f64,
    calib_runs: u64,
}

impl AggCell {
    fn fold(&mut self, s: &Snapshot) {
        self.runs += 1;
        self.fcp_sum += s.fcp;
        self.fcp_sumsq += s.fcp * s.fcp;
        if s.mean_len.is_finite() {
            self.mean_len_sum += s.mean_len;
            self.mean_len_runs += 1;
        }
        if !s.median_len.is_nan() {
            self.median_sum += s.median_len;
            self.median_runs += 1;
        }
        self.inf_freq_sum += s.inf_freq;
        if !s.mean_calib.is_nan() {
            self.calib_sum += s.mean_calib;
            self.calib_runs += 1;
        }
    }

    fn merge(&mut self, other: &AggCell) {
        self.runs += other.runs;
        self.fcp_sum += other.fcp_sum;
        self.fcp_sumsq += other.fcp_sumsq;
        self.mean_len_sum += other.mean_len_sum;
        self.mean_len_runs += other.mean_len_runs;
        self.median_sum += other.median_sum;
        self.median_runs += other.median_runs;
        self.inf_freq_sum += other.inf_freq_sum;
        self.calib_sum += other.calib_sum;
        self.calib_runs += other.calib_runs;
    }
}

/// One aggregated row of the replication report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportRow {
    pub t: usize,
    pub fcr: f64,
    pub fcr_se: f64,
    pub mean_len: f64,
    pub median_len: f64,
    pub inf_freq: f64,
    pub mean_calib: f64,
    pub runs: u64,
}

/// Aggregated metrics over replications sharing one evaluation grid.
#[derive(Debug, Clone)]
pub struct Aggregate {
    grid: Vec<usize>,
    cells: Vec<AggCell>,
}

impl Aggregate {
    pub fn new(grid: Vec<usize>) -> Self {
        let cells = vec![AggCell::default(); grid.len()];
        Aggregate { grid, cells }
    }

    pub fn fold(&mut self, run: &RunMetrics) -> Result<()> {
        if run.grid() != self.grid {
            return Err(Error::MismatchedGrid);
        }
        for (cell, snap) in self.cells.iter_mut().zip(run.snapshots()) {
            cell.fold(snap);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Aggregate) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::MismatchedGrid);
        }
        for (cell, o) in self.cells.iter_mut().zip(&other.cells) {
            cell.merge(o);
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.grid
            .iter()
            .zip(&self.cells)
            .map(|(&t, c)| {
                let n = c.runs.max(1) as f64;
                let fcr = c.fcp_sum / n;
                let var = if c.runs > 1 {
                    ((c.fcp_sumsq - c.fcp_sum * c.fcp_sum / n) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                ReportRow {
                    t,
                    fcr,
                    fcr_se: (var / n).sqrt(),
                    mean_len: if c.mean_len_runs > 0 {
                        c.mean_len_sum / c.mean_len_runs as f64
                    } else {
                        f64::NAN
                    },
                    median_len: if c.median_runs > 0 {
                        c.median_sum / c.median_runs as f64
                    } else {
                        f64::NAN
                    },
                    inf_freq: c.inf_freq_sum / n,
                    mean_calib: if c.calib_runs > 0 {
                        c.calib_sum / c.calib_runs as f64
                    } else {
                        f64::NAN
                    },
                    runs: c.runs,
                }
            })
            .collect()
    }
}

/// Averages per-run metrics into the replication report.
pub fn aggregate(runs: &[RunMetrics]) -> Result<Vec<ReportRow>> {
    let grid = runs
        .first()
        .map(|r| r.grid())
        .ok_or(Error::MismatchedGrid)?;
    let mut agg = Aggregate::new(grid);
    for run in runs {
        agg.fold(run)?;
    }
    Ok(agg.rows())
}
