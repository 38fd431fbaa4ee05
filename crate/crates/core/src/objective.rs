//! Joint-alignment score: a sum over time indices of a spread estimate of the
//! `N` amplitudes observed across curves at that index.

use serde::{Deserialize, Serialize};

use crate::curves::{Curve, CurveSet};
use crate::error::{Error, Result};

/// Floor applied to every order-statistic spacing before the logarithm.
pub const SPACING_FLOOR: f64 = 1e-12;

/// Smallest sample count the entropy estimator accepts.
pub const MIN_ENTROPY_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Sum of location-wise Vasicek entropies.
    EntropySum,
    /// Sum of location-wise population variances.
    VarianceSum,
}

impl ObjectiveKind {
    pub fn min_curves(self) -> usize {
        match self {
            ObjectiveKind::EntropySum => MIN_ENTROPY_SAMPLES,
            ObjectiveKind::VarianceSum => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub per_location: Vec<f64>,
}

/// Spacing window for `n` samples: `floor(sqrt(n))` clamped to
/// `[1, floor(n/2) - 1]`.
pub fn vasicek_window(n: usize) -> usize {
    let root = (n as f64).sqrt().floor() as usize;
    let upper = (n / 2).saturating_sub(1).max(1);
    root.clamp(1, upper)
}

/// Vasicek spacing estimate of differential entropy (nats).
///
/// Order statistics outside `1..=N` are replaced by the nearest extreme.
pub fn vasicek_entropy(samples: &[f64], m: usize) -> Result<f64> {
    check_entropy_input(samples.len(), m)?;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(vasicek_sorted(&sorted, m))
}

fn check_entropy_input(n: usize, m: usize) -> Result<()> {
    if n < MIN_ENTROPY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "entropy estimation needs at least {MIN_ENTROPY_SAMPLES} samples, got {n}"
        )));
    }
    if m == 0 || 2 * m >= n {
        return Err(Error::Config(format!(
            "spacing window {m} invalid for {n} samples (need 1 <= m < n/2)"
        )));
    }
    Ok(())
}

fn vasicek_sorted(sorted: &[f64], m: usize) -> f64 {
    let n = sorted.len();
    let scale = n as f64 / (2 * m) as f64;
    let last = n - 1;
    let mut acc = 0.0;
    for i in 0..n {
        let hi = sorted[(i + m).min(last)];
        let lo = sorted[i.saturating_sub(m)];
        let spacing = (hi - lo).max(SPACING_FLOOR);
        acc += (scale * spacing).ln();
    }
    acc / n as f64
}

/// Population variance (divisor `N`).
pub fn location_variance(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Scores the curves of `set` as they are; apply transforms first.
pub fn joint_objective(set: &CurveSet, kind: ObjectiveKind) -> Result<ObjectiveValue> {
    let rows: Vec<&[f64]> = set.curves().iter().map(Curve::samples).collect();
    evaluate_rows(&rows, kind)
}

/// Scores a row-per-curve sample matrix. All rows must have equal length.
pub fn evaluate_rows<R: AsRef<[f64]>>(rows: &[R], kind: ObjectiveKind) -> Result<ObjectiveValue> {
    let mut per_location = Vec::new();
    let total = ColumnScorer::new(kind).score(rows, Some(&mut per_location))?;
    Ok(ObjectiveValue {
        total,
        per_location,
    })
}

/// Reusable evaluator holding a column scratch buffer. Columns are visited
/// in ascending index order and summed sequentially, so totals are
/// reproducible bit for bit.
#[derive(Debug, Clone)]
pub(crate) struct ColumnScorer {
    kind: ObjectiveKind,
    column: Vec<f64>,
}

impl ColumnScorer {
    pub(crate) fn new(kind: ObjectiveKind) -> Self {
        ColumnScorer {
            kind,
            column: Vec::new(),
        }
    }

    pub(crate) fn score<R: AsRef<[f64]>>(
        &mut self,
        rows: &[R],
        mut per_location: Option<&mut Vec<f64>>,
    ) -> Result<f64> {
        let n = rows.len();
        if n < self.kind.min_curves() {
            return Err(Error::InsufficientData(format!(
                "{:?} needs at least {} curves, got {n}",
                self.kind,
                self.kind.min_curves()
            )));
        }
        let m = rows[0].as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != m) {
            return Err(Error::InvalidCurve("rows of unequal length".into()));
        }
        let window = vasicek_window(n);
        if self.kind == ObjectiveKind::EntropySum {
            check_entropy_input(n, window)?;
        }
        if let Some(out) = per_location.as_deref_mut() {
            out.clear();
            out.reserve(m);
        }
        let mut total = 0.0;
        for loc in 0..m {
            self.column.clear();
            self.column.extend(rows.iter().map(|r| r.as_ref()[loc]));
            let value = match self.kind {
                ObjectiveKind::VarianceSum => location_variance(&self.column),
                ObjectiveKind::EntropySum => {
                    self.column.sort_unstable_by(f64::total_cmp);
                    vasicek_sorted(&self.column, window)
                }
            };
            total += value;
            if let Some(out) = per_location.as_deref_mut() {
                out.push(value);
            }
        }
        Ok(total)
    }
}

/// Objective state for a row matrix where proposals replace one row at a
/// time. Column values whose sample did not change are reused; every other
/// column is recomputed exactly as [`ColumnScorer`] would, so totals are
/// bit-identical to a full evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ColumnCache {
    kind: ObjectiveKind,
    window: usize,
    rows: Vec<Vec<f64>>,
    // per-location sorted columns, entropy only
    sorted: Vec<Vec<f64>>,
    per_location: Vec<f64>,
    total: f64,
    candidate: Vec<f64>,
    column: Vec<f64>,
}

impl ColumnCache {
    pub(crate) fn new(rows: Vec<Vec<f64>>, kind: ObjectiveKind) -> Result<Self> {
        let mut per_location = Vec::new();
        let total = ColumnScorer::new(kind).score(&rows, Some(&mut per_location))?;
        let n = rows.len();
        let m = rows[0].len();
        let sorted = match kind {
            ObjectiveKind::EntropySum => (0..m)
                .map(|loc| {
                    let mut col: Vec<f64> = rows.iter().map(|r| r[loc]).collect();
                    col.sort_unstable_by(f64::total_cmp);
                    col
                })
                .collect(),
            ObjectiveKind::VarianceSum => Vec::new(),
        };
        Ok(ColumnCache {
            kind,
            window: vasicek_window(n),
            rows,
            sorted,
            per_location,
            total,
            candidate: Vec::with_capacity(m),
            column: Vec::with_capacity(n),
        })
    }

    pub(crate) fn total(&self) -> f64 {
        self.total
    }

    pub(crate) fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Total objective if row `k` were replaced by `new_row`. The
    /// per-location values are kept for a following [`Self::commit`].
    pub(crate) fn try_replace(&mut self, k: usize, new_row: &[f64]) -> f64 {
        self.candidate.clear();
        let mut total = 0.0;
        for (loc, &new) in new_row.iter().enumerate() {
            let old = self.rows[k][loc];
            let value = if old.to_bits() == new.to_bits() {
                self.per_location[loc]
            } else {
                self.column.clear();
                match self.kind {
                    ObjectiveKind::VarianceSum => {
                        self.column
                            .extend(self.rows.iter().enumerate().map(|(j, r)| {
                                if j == k {
                                    new
                                } else {
                                    r[loc]
                                }
                            }));
                        location_variance(&self.column)
                    }
                    ObjectiveKind::EntropySum => {
                        self.column.extend_from_slice(&self.sorted[loc]);
                        replace_sorted(&mut self.column, old, new);
                        vasicek_sorted(&self.column, self.window)
                    }
                }
            };
            total += value;
            self.candidate.push(value);
        }
        total
    }

    /// Accepts the replacement last passed to [`Self::try_replace`].
    pub(crate) fn commit(&mut self, k: usize, new_row: Vec<f64>, total: f64) {
        debug_assert_eq!(self.candidate.len(), new_row.len());
        if self.kind == ObjectiveKind::EntropySum {
            for (loc, &new) in new_row.iter().enumerate() {
                let old = self.rows[k][loc];
                if old.to_bits() != new.to_bits() {
                    replace_sorted(&mut self.sorted[loc], old, new);
                }
            }
        }
        self.rows[k] = new_row;
        std::mem::swap(&mut self.per_location, &mut self.candidate);
        self.total = total;
    }
}

fn replace_sorted(col: &mut Vec<f64>, old: f64, new: f64) {
    let at = col
        .binary_search_by(|x| x.total_cmp(&old))
        .expect("replaced value present in sorted column");
    col.remove(at);
    let to = col.partition_point(|x| x.total_cmp(&new).is_lt());
    col.insert(to, new);
}
