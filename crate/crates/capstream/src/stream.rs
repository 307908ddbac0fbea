//! Time-indexed records, the labeled holdout buffer, and the realized
//! decision trace.
//!
//! Indices are global and monotone: offline data sits at `-n..=-1`, online
//! data at `0..`. Labels arrive with a one-step delay, so at time `t` the
//! label of `t - 1` has just been revealed and the current record is still
//! unlabeled.

use crate::error::{Error, Result};

/// One unit of the stream: features or precomputed scores, with the label
/// attached once revealed.
///
/// `mu_hat` and `v` are stored separately even when the selection score is
/// the prediction itself, so selection and calibration can use different
/// score functions.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    /// Global time index (`>= -n`).
    pub t: i64,
    /// Raw feature vector, absent for precomputed streams.
    pub x: Option<Vec<f64>>,
    /// Label, present once revealed.
    pub y: Option<f64>,
    /// Frozen model prediction for this record.
    pub mu_hat: f64,
    /// Selection score `V(X_t)`.
    pub v: f64,
    /// Nonconformity score, absent until the label is revealed.
    pub r: Option<f64>,
}

impl StreamRecord {
    pub fn new(t: i64, mu_hat: f64, v: f64) -> Self {
        StreamRecord {
            t,
            x: None,
            y: None,
            mu_hat,
            v,
            r: None,
        }
    }

    pub fn with_features(mut self, x: Vec<f64>) -> Self {
        self.x = Some(x);
        self
    }

    pub fn with_label(mut self, y: f64) -> Self {
        self.y = Some(y);
        self
    }

    pub fn with_residual(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    /// A record is labeled once both the label and its residual are known.
    pub fn is_labeled(&self) -> bool {
        self.y.is_some() && self.r.is_some()
    }
}

/// Holdout retention policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldoutMode {
    /// Keep exactly the initial labeled block forever.
    Fixed,
    /// Keep every labeled record seen so far.
    Full,
    /// Keep only the `k` most recent labeled records.
    Window(usize),
}

/// Labeled history available for calibration at the current time.
#[derive(Debug, Clone)]
pub struct HoldoutBuffer {
    mode: HoldoutMode,
    initial_size: usize,
    entries: Vec<StreamRecord>,
}

impl HoldoutBuffer {
    /// Builds the buffer from the initial labeled block. Every seed record
    /// must carry a label and residual.
    pub fn new(mode: HoldoutMode, initial: Vec<StreamRecord>) -> Result<Self> {
        if let HoldoutMode::Window(0) = mode {
            return Err(Error::config(
                "holdout.window_size",
                "window must be positive",
            ));
        }
        for rec in &initial {
            if !rec.is_labeled() {
                return Err(Error::UnlabeledRecord(rec.t));
            }
        }
        let initial_size = initial.len();
        let mut buf = HoldoutBuffer {
            mode,
            initial_size,
            entries: initial,
        };
        buf.trim();
        Ok(buf)
    }

    pub fn mode(&self) -> HoldoutMode {
        self.mode
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StreamRecord] {
        &self.entries
    }

    /// The trailing `window` entries, or everything when `window` is `None`
    /// or exceeds the buffer.
    pub fn tail(&self, window: Option<usize>) -> &[StreamRecord] {
        match window {
            Some(w) if w < self.entries.len() => &self.entries[self.entries.len() - w..],
            _ => &self.entries,
        }
    }

    /// Folds a freshly labeled record into the buffer according to the mode.
    pub fn advance(&mut self, revealed: StreamRecord) -> Result<()> {
        if !revealed.is_labeled() {
            return Err(Error::UnlabeledRecord(revealed.t));
        }
        if self.mode == HoldoutMode::Fixed {
            return Ok(());
        }
        if let Some(tail) = self.entries.last() {
            if revealed.t <= tail.t {
                return Err(Error::StaleRecord {
                    t: revealed.t,
                    tail: tail.t,
                });
            }
        }
        self.entries.push(revealed);
        self.trim();
        Ok(())
    }

    fn trim(&mut self) {
        if let HoldoutMode::Window(k) = self.mode {
            while self.entries.len() > k {
                self.entries.remove(0);
            }
        }
    }
}

/// Realized decision sequence `S_0..S_{t-1}` with prefix counts.
#[derive(Debug, Clone, Default)]
pub struct SelectionTrace {
    decisions: Vec<bool>,
    cum: Vec<u64>,
    selection_times: Vec<i64>,
}

impl SelectionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the decision for time `t`. Decisions are append-only and `t`
    /// must equal the current length.
    pub fn push(&mut self, t: i64, selected: bool) {
        debug_assert_eq!(t, self.decisions.len() as i64);
        let total = self.total_selected() + u64::from(selected);
        self.decisions.push(selected);
        self.cum.push(total);
        if selected {
            self.selection_times.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }

    pub fn selection_times(&self) -> &[i64] {
        &self.selection_times
    }

    /// Total selections recorded so far.
    pub fn total_selected(&self) -> u64 {
        self.cum.last().copied().unwrap_or(0)
    }

    /// Selections strictly before time `i`.
    pub fn selected_before(&self, i: i64) -> u64 {
        if i <= 0 {
            0
        } else {
            let idx = (i as usize).min(self.cum.len());
            if idx == 0 {
                0
            } else {
                self.cum[idx - 1]
            }
        }
    }

    pub fn last_selection_time(&self) -> Option<i64> {
        self.selection_times.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(t: i64, v: f64) -> StreamRecord {
        StreamRecord::new(t, v, v).with_label(v).with_residual(0.0)
    }

    #[test]
    fn fixed_mode_ignores_new_labels() {
        let initial: Vec<_> = (-3..0).map(|t| labeled(t, t as f64)).collect();
        let mut buf = HoldoutBuffer::new(HoldoutMode::Fixed, initial).unwrap();
        buf.advance(labeled(0, 1.0)).unwrap();
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.entries()[0].t, -3);
        assert_eq!(buf.entries()[2].t, -1);
    }

    #[test]
    fn window_mode_evicts_oldest() {
        let initial = vec![labeled(4, 0.0), labeled(5, 0.0)];
        let mut buf = HoldoutBuffer::new(HoldoutMode::Window(2), initial).unwrap();
        buf.advance(labeled(6, 1.0)).unwrap();
        let ts: Vec<i64> = buf.entries().iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![5, 6]);
    }

    #[test]
    fn full_mode_appends() {
        let initial: Vec<_> = (-2..=0).map(|t| labeled(t, 0.0)).collect();
        let mut buf = HoldoutBuffer::new(HoldoutMode::Full, initial).unwrap();
        buf.advance(labeled(1, 1.0)).unwrap();
        let ts: Vec<i64> = buf.entries().iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![-2, -1, 0, 1]);
    }

    #[test]
    fn rejects_unlabeled_record() {
        let mut buf = HoldoutBuffer::new(HoldoutMode::Full, vec![labeled(-1, 0.0)]).unwrap();
        let err = buf.advance(StreamRecord::new(0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::UnlabeledRecord(0)));
    }

    #[test]
    fn rejects_stale_record() {
        let mut buf = HoldoutBuffer::new(HoldoutMode::Full, vec![labeled(3, 0.0)]).unwrap();
        let err = buf.advance(labeled(2, 0.0)).unwrap_err();
        assert!(matches!(err, Error::StaleRecord { t: 2, tail: 3 }));
    }

    #[test]
    fn window_count_tracks_min_of_k_and_labeled() {
        let initial: Vec<_> = (-3..0).map(|t| labeled(t, 0.0)).collect();
        let mut buf = HoldoutBuffer::new(HoldoutMode::Window(5), initial).unwrap();
        for t in 0..4 {
            buf.advance(labeled(t, 0.0)).unwrap();
            let labeled_total = 3 + (t + 1) as usize;
            assert_eq!(buf.len(), labeled_total.min(5));
        }
    }

    #[test]
    fn tail_view_truncates_from_the_back() {
        let initial: Vec<_> = (0..5).map(|t| labeled(t, t as f64)).collect();
        let buf = HoldoutBuffer::new(HoldoutMode::Full, initial).unwrap();
        assert_eq!(buf.tail(Some(2)).len(), 2);
        assert_eq!(buf.tail(Some(2))[0].t, 3);
        assert_eq!(buf.tail(None).len(), 5);
        assert_eq!(buf.tail(Some(10)).len(), 5);
    }

    #[test]
    fn trace_prefix_counts() {
        let mut trace = SelectionTrace::new();
        for (t, s) in [true, false, true, true].iter().enumerate() {
            trace.push(t as i64, *s);
        }
        assert_eq!(trace.total_selected(), 3);
        assert_eq!(trace.selected_before(0), 0);
        assert_eq!(trace.selected_before(1), 1);
        assert_eq!(trace.selected_before(2), 1);
        assert_eq!(trace.selected_before(4), 3);
        assert_eq!(trace.selection_times(), &[0, 2, 3]);
        let popcount = trace.decisions().iter().filter(|&&b| b).count() as u64;
        assert_eq!(popcount, trace.total_selected());
    }
}
