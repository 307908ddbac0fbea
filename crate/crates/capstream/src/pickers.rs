//! Construction of the picked calibration index set from the holdout when a
//! selection fires: nonadaptive filtering, the intersection rule for
//! decision-driven selection, the swap rule for symmetric thresholds, and
//! the more conservative product/windowed variants.

use crate::error::{Error, Result};
use crate::selectors::{Direction, RuleView, Selector, SymmetricStat};
use crate::stream::{SelectionTrace, StreamRecord};

/// Pick rule kinds. The intersection/product family requires a
/// decision-driven selector; the swap rule requires a symmetric-threshold
/// selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickerKind {
    Nonadaptive,
    AdaptiveIntersection,
    AdaptiveSwap,
    Express,
    KCap(usize),
    KExpress(usize),
}

impl PickerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PickerKind::Nonadaptive => "nonadaptive",
            PickerKind::AdaptiveIntersection => "adaptive-intersection",
            PickerKind::AdaptiveSwap => "adaptive-swap",
            PickerKind::Express => "express",
            PickerKind::KCap(_) => "k-cap",
            PickerKind::KExpress(_) => "k-express",
        }
    }
}

/// Validates the picker/selector pairing.
pub fn check_compatibility(picker: PickerKind, selector: &Selector) -> Result<()> {
    let ok = match picker {
        PickerKind::Nonadaptive => true,
        PickerKind::AdaptiveSwap => selector.kind.is_symmetric(),
        PickerKind::AdaptiveIntersection
        | PickerKind::Express
        | PickerKind::KCap(_)
        | PickerKind::KExpress(_) => selector.kind.is_decision_driven(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::IncompatibleRule {
            picker: picker.name().to_string(),
            selector: selector.kind.name().to_string(),
        })
    }
}

/// Applies the current rule to every holdout entry. Returns positions into
/// `entries`; an empty result yields an infinite interval downstream.
pub fn pick_nonadaptive(view: &RuleView, entries: &[StreamRecord]) -> Vec<usize> {
    entries
        .iter()
        .enumerate()
        .filter(|(_, e)| view.selects(e))
        .map(|(i, _)| i)
        .collect()
}

/// Which past rules enter the agreement product.
#[derive(Debug, Clone, Copy)]
enum ProductScope {
    /// Only online indices the current rule selects.
    SelectedOnly,
    /// Every online index.
    AllOnline,
}

/// Shared engine for the intersection/product family. Candidates are all
/// holdout entries (offline points included, subjected to the same product
/// test); the product runs over online entries in scope, optionally
/// restricted to the trailing `window_k` time steps.
fn pick_product(
    selector: &Selector,
    trace: &SelectionTrace,
    view_t: &RuleView,
    entries: &[StreamRecord],
    test: &StreamRecord,
    scope: ProductScope,
    window_k: Option<usize>,
) -> Result<Vec<usize>> {
    let t = test.t;
    let cutoff = window_k.map(|k| t - k as i64);
    let mut product_views: Vec<RuleView> = Vec::new();
    for entry in entries {
        if entry.t < 0 || entry.t >= t {
            continue;
        }
        if let Some(c) = cutoff {
            if entry.t < c {
                continue;
            }
        }
        let in_scope = match scope {
            ProductScope::AllOnline => true,
            ProductScope::SelectedOnly => view_t.selects(entry),
        };
        if in_scope {
            let view = selector
                .view_at(entry.t, trace)
                .ok_or(Error::IncompatibleRule {
                    picker: "adaptive-intersection".to_string(),
                    selector: selector.kind.name().to_string(),
                })?;
            product_views.push(view);
        }
    }
    let test_bits: Vec<bool> = product_views.iter().map(|v| v.selects(test)).collect();
    let picked = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            view_t.selects(e)
                && product_views
                    .iter()
                    .zip(&test_bits)
                    .all(|(v, &tb)| v.selects(e) == tb)
        })
        .map(|(i, _)| i)
        .collect();
    Ok(picked)
}

/// Intersection rule: keep holdout points that the current rule selects and
/// that agree with the test point under every past rule indexed by the
/// currently-selected online history.
pub fn pick_adaptive_intersection(
    selector: &Selector,
    trace: &SelectionTrace,
    view_t: &RuleView,
    entries: &[StreamRecord],
    test: &StreamRecord,
) -> Result<Vec<usize>> {
    pick_product(
        selector,
        trace,
        view_t,
        entries,
        test,
        ProductScope::SelectedOnly,
        None,
    )
}

/// Globally symmetric variant: the agreement product runs over every online
/// index, which picks a subset of the intersection rule's set.
pub fn pick_express(
    selector: &Selector,
    trace: &SelectionTrace,
    view_t: &RuleView,
    entries: &[StreamRecord],
    test: &StreamRecord,
) -> Result<Vec<usize>> {
    pick_product(
        selector,
        trace,
        view_t,
        entries,
        test,
        ProductScope::AllOnline,
        None,
    )
}

/// Windowed variants restricting the agreement product to the last `k`
/// time steps.
pub fn pick_windowed(
    kind: PickerKind,
    selector: &Selector,
    trace: &SelectionTrace,
    view_t: &RuleView,
    entries: &[StreamRecord],
    test: &StreamRecord,
) -> Result<Vec<usize>> {
    match kind {
        PickerKind::KCap(k) => pick_product(
            selector,
            trace,
            view_t,
            entries,
            test,
            ProductScope::SelectedOnly,
            Some(k),
        ),
        PickerKind::KExpress(k) => pick_product(
            selector,
            trace,
            view_t,
            entries,
            test,
            ProductScope::AllOnline,
            Some(k),
        ),
        _ => Err(Error::IncompatibleRule {
            picker: kind.name().to_string(),
            selector: "windowed dispatch".to_string(),
        }),
    }
}

/// Swap rule for symmetric thresholds: a holdout point is picked when its
/// score passes the threshold recomputed with that score replaced by the
/// test score. Entries must be the same score window the selector used.
pub fn pick_adaptive_swap(
    stat: SymmetricStat,
    direction: Direction,
    entries: &[StreamRecord],
    v_test: f64,
    t_test: i64,
) -> Result<Vec<usize>> {
    if entries.is_empty() {
        return Err(Error::EmptyScoreWindow(t_test));
    }
    let mut sorted: Vec<f64> = entries.iter().map(|e| e.v).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    match stat {
        SymmetricStat::Mean => Ok(entries
            .iter()
            .enumerate()
            .filter(|(_, e)| direction.selects(e.v, swapped_sorted_mean(&sorted, e.v, v_test)))
            .map(|(i, _)| i)
            .collect()),
        SymmetricStat::Quantile(theta) => {
            let m = sorted.len();
            let k = ((theta * m as f64).ceil() as usize).clamp(1, m);
            Ok(entries
                .iter()
                .enumerate()
                .filter(|(_, e)| {
                    let thr = swapped_order_statistic(&sorted, e.v, v_test, k);
                    direction.selects(e.v, thr)
                })
                .map(|(i, _)| i)
                .collect())
        }
    }
}

/// Mean of `sorted` with one occurrence of `removed` replaced by
/// `inserted`, accumulated in ascending order so the result is bitwise
/// identical to re-sorting and summing the swapped multiset.
fn swapped_sorted_mean(sorted: &[f64], removed: f64, inserted: f64) -> f64 {
    let mut sum = 0.0;
    let mut skipped = false;
    let mut pending = true;
    for &x in sorted {
        if !skipped && x == removed {
            skipped = true;
            continue;
        }
        if pending && inserted <= x {
            sum += inserted;
            pending = false;
        }
        sum += x;
    }
    if pending {
        sum += inserted;
    }
    sum / sorted.len() as f64
}

/// The k-th smallest (1-based) of `sorted` after removing one occurrence of
/// `removed` and inserting `inserted`, in O(log m).
fn swapped_order_statistic(sorted: &[f64], removed: f64, inserted: f64, k: usize) -> f64 {
    let m = sorted.len();
    debug_assert!(k >= 1 && k <= m);
    let k0 = k - 1;
    let i_removed = sorted.partition_point(|&x| x < removed);
    debug_assert!(i_removed < m && sorted[i_removed] == removed);
    // Rank of the inserted value inside the reduced array.
    let mut p = sorted.partition_point(|&x| x < inserted);
    if i_removed < p {
        p -= 1;
    }
    // Element of the reduced array at a given index.
    let reduced = |j: usize| -> f64 {
        if j < i_removed {
            sorted[j]
        } else {
            sorted[j + 1]
        }
    };
    match k0.cmp(&p) {
        std::cmp::Ordering::Less => reduced(k0),
        std::cmp::Ordering::Equal => inserted,
        std::cmp::Ordering::Greater => reduced(k0 - 1),
    }
}
