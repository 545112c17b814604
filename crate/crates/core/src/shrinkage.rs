//! Active-set scheduling: elimination of low-loss samples, exponentially
//! smoothed per-batch thresholds, the stop threshold and recall.
//!
//! An epoch proceeds as
//!
//! 1. [`Scheduler::begin_epoch`] decides whether this epoch eliminates and
//!    resets the threshold smoother;
//! 2. the trainer feeds each processed batch's losses to
//!    [`Scheduler::observe_batch`] (only batchwise selection acts on them);
//! 3. [`Scheduler::end_epoch`] applies [`epoch_transition`] using the losses
//!    recorded during the epoch.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Strictly increasing, nonempty set of global sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    indices: Vec<usize>,
    n_total: usize,
}

impl ActiveSet {
    /// `{0, .., n_total - 1}`.
    pub fn full(n_total: usize) -> Self {
        ActiveSet {
            indices: (0..n_total).collect(),
            n_total,
        }
    }

    pub fn new(indices: Vec<usize>, n_total: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("active indices must be strictly increasing"));
        }
        if let Some(&last) = indices.last() {
            if last >= n_total {
                return Err(Error::IndexOutOfRange {
                    op: "ActiveSet::new",
                    index: last,
                    len: n_total,
                });
            }
        }
        Ok(ActiveSet { indices, n_total })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n_total
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShrinkMode {
    /// Every sample, every epoch.
    #[default]
    Full,
    /// Eliminate while the active set is at least the stop threshold, then
    /// hold.
    Shrink,
    /// Eliminate while at least the stop threshold, then recall the full set.
    ShrinkRecall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Selection {
    /// At epoch end drop the `floor(|A| s)` smallest losses.
    #[default]
    Global,
    /// During the epoch drop, per batch, the samples at or below a smoothed
    /// threshold.
    Batchwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RecallPolicy {
    /// Shrink again after every recall (sawtooth active-set size).
    #[default]
    Repeating,
    /// Recall once, then keep training on the full set.
    Sticky,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShrinkConfig {
    /// Elimination rate in `[0, 1)`.
    pub s: f64,
    /// Stop/recall threshold as a fraction of `n`, in `(0, 1]`.
    pub t_frac: f64,
    /// Smoothing weight in `[0, 1)`.
    pub alpha: f64,
    pub mode: ShrinkMode,
    pub selection: Selection,
    pub recall_policy: RecallPolicy,
}

impl Default for ShrinkConfig {
    fn default() -> Self {
        ShrinkConfig {
            s: 0.2,
            t_frac: 0.2,
            alpha: 0.5,
            mode: ShrinkMode::Full,
            selection: Selection::Global,
            recall_policy: RecallPolicy::Repeating,
        }
    }
}

impl ShrinkConfig {
    pub fn full() -> Self {
        ShrinkConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.s) {
            return Err(Error::invalid(format!("s must be in [0, 1), got {}", self.s)));
        }
        if !(self.t_frac > 0.0 && self.t_frac <= 1.0) {
            return Err(Error::invalid(format!("t must be in (0, 1], got {}", self.t_frac)));
        }
        check_alpha(self.alpha)
    }

    /// Absolute stop threshold `ceil(t_frac * n_total)`.
    pub fn stop_count(&self, n_total: usize) -> usize {
        (self.t_frac * n_total as f64).ceil() as usize
    }

    /// Per-batch elimination quota `round(batch_len * s)`.
    pub fn batch_quota(&self, batch_len: usize) -> usize {
        (batch_len as f64 * self.s).round() as usize
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must be in [0, 1), got {alpha}")));
    }
    Ok(())
}

#[inline]
fn by_error_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `floor(|A| s)` active samples with the smallest errors, ties broken
/// toward the smaller global index. Returned sorted by index.
pub fn select_elimination_global(errors: &[f64], active: &ActiveSet, s: f64) -> Result<Vec<usize>> {
    if errors.len() != active.len() {
        return Err(Error::Length {
            op: "select_elimination_global",
            expected: active.len(),
            found: errors.len(),
        });
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid(format!("s must be in [0, 1), got {s}")));
    }
    let k = (active.len() as f64 * s).floor() as usize;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut keyed: Vec<(f64, usize)> = errors.iter().copied().zip(active.indices().iter().copied()).collect();
    keyed.select_nth_unstable_by(k - 1, by_error_then_index);
    let mut chosen: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// The `k`-th smallest value (1-based) of `batch_errors`.
pub fn raw_batch_threshold(batch_errors: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > batch_errors.len() {
        return Err(Error::IndexOutOfRange {
            op: "raw_batch_threshold",
            index: k,
            len: batch_errors.len(),
        });
    }
    let mut v = batch_errors.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Previous smoothed threshold; `None` until the first batch of an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmootherState {
    pub prev_smoothed: Option<f64>,
}

/// `t'_1 = t_1`, then `t'_{i+1} = alpha t'_i + (1 - alpha) t_{i+1}`.
pub fn smooth_threshold(state: SmootherState, raw: f64, alpha: f64) -> Result<(f64, SmootherState)> {
    check_alpha(alpha)?;
    let smoothed = match state.prev_smoothed {
        None => raw,
        Some(prev) => alpha * prev + (1.0 - alpha) * raw,
    };
    Ok((
        smoothed,
        SmootherState {
            prev_smoothed: Some(smoothed),
        },
    ))
}

/// Raw and smoothed threshold used for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdPair {
    pub raw: f64,
    pub smoothed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchElimination {
    /// Global indices marked for elimination, in batch order.
    pub eliminated: Vec<usize>,
    pub smoother: SmootherState,
    /// `None` when the quota was zero and the smoother was left untouched.
    pub threshold: Option<ThresholdPair>,
}

/// Marks every sample in the batch whose error is at or below the smoothed
/// threshold. The raw threshold is the `min(quota, len)`-th smallest error.
pub fn select_elimination_batchwise(
    sample_indices: &[usize],
    batch_errors: &[f64],
    quota: usize,
    smoother: SmootherState,
    alpha: f64,
) -> Result<BatchElimination> {
    if sample_indices.len() != batch_errors.len() {
        return Err(Error::Length {
            op: "select_elimination_batchwise",
            expected: sample_indices.len(),
            found: batch_errors.len(),
        });
    }
    let k = quota.min(batch_errors.len());
    if k == 0 {
        check_alpha(alpha)?;
        return Ok(BatchElimination {
            eliminated: Vec::new(),
            smoother,
            threshold: None,
        });
    }
    let raw = raw_batch_threshold(batch_errors, k)?;
    let (smoothed, smoother) = smooth_threshold(smoother, raw, alpha)?;
    let eliminated = sample_indices
        .iter()
        .zip(batch_errors)
        .filter(|(_, &e)| e <= smoothed)
        .map(|(&i, _)| i)
        .collect();
    Ok(BatchElimination {
        eliminated,
        smoother,
        threshold: Some(ThresholdPair { raw, smoothed }),
    })
}

/// `A - S`. `S` may be in any order but must be a proper subset of `A`.
pub fn apply_elimination(active: &ActiveSet, eliminated: &[usize]) -> Result<ActiveSet> {
    if eliminated.is_empty() {
        return Ok(active.clone());
    }
    let mut drop = eliminated.to_vec();
    drop.sort_unstable();
    drop.dedup();
    if let Some(&bad) = drop.iter().find(|&&i| !active.contains(i)) {
        return Err(Error::NotSubset(bad));
    }
    if drop.len() == active.len() {
        return Err(Error::WouldEmpty);
    }
    let indices = active
        .indices()
        .iter()
        .copied()
        .filter(|i| drop.binary_search(i).is_err())
        .collect();
    Ok(ActiveSet {
        indices,
        n_total: active.n_total(),
    })
}

/// Outcome of one epoch boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub active: ActiveSet,
    /// Whether a recall has ever fired, including this one.
    pub recall_fired: bool,
    /// Samples removed at this boundary.
    pub eliminated: usize,
    /// Whether this boundary recalled the full set.
    pub recalled: bool,
}

/// Whether elimination applies at the end of an epoch that ran on `active`.
pub fn eliminates_this_epoch(active: &ActiveSet, cfg: &ShrinkConfig, recall_fired_before: bool) -> bool {
    match cfg.mode {
        ShrinkMode::Full => false,
        ShrinkMode::Shrink => active.len() >= cfg.stop_count(active.n_total()),
        ShrinkMode::ShrinkRecall => {
            active.len() >= cfg.stop_count(active.n_total())
                && !(cfg.recall_policy == RecallPolicy::Sticky && recall_fired_before)
        }
    }
}

/// Active set for the next epoch.
///
/// `epoch_errors` is aligned with `active`. With batchwise selection,
/// `batch_marks` holds the samples marked during the epoch; if the marks
/// would cover the whole active set, the highest-error sample is kept.
pub fn epoch_transition(
    active: &ActiveSet,
    cfg: &ShrinkConfig,
    epoch_errors: &[f64],
    batch_marks: Option<&[usize]>,
    recall_fired_before: bool,
) -> Result<Transition> {
    if epoch_errors.len() != active.len() {
        return Err(Error::Length {
            op: "epoch_transition",
            expected: active.len(),
            found: epoch_errors.len(),
        });
    }
    let unchanged = |recall_fired| Transition {
        active: active.clone(),
        recall_fired,
        eliminated: 0,
        recalled: false,
    };
    if cfg.mode == ShrinkMode::Full {
        return Ok(unchanged(recall_fired_before));
    }
    let stop = cfg.stop_count(active.n_total());
    if active.len() < stop {
        return Ok(match cfg.mode {
            ShrinkMode::ShrinkRecall if !(cfg.recall_policy == RecallPolicy::Sticky && recall_fired_before) => {
                Transition {
                    active: ActiveSet::full(active.n_total()),
                    recall_fired: true,
                    eliminated: 0,
                    recalled: true,
                }
            }
            _ => unchanged(recall_fired_before),
        });
    }
    if !eliminates_this_epoch(active, cfg, recall_fired_before) {
        return Ok(unchanged(recall_fired_before));
    }
    let eliminated = match cfg.selection {
        Selection::Global => select_elimination_global(epoch_errors, active, cfg.s)?,
        Selection::Batchwise => {
            let marks = batch_marks.ok_or_else(|| Error::invalid("batchwise selection needs the epoch's batch marks"))?;
            let mut marks = marks.to_vec();
            marks.sort_unstable();
            marks.dedup();
            if marks.len() >= active.len() {
                let keep = active
                    .indices()
                    .iter()
                    .zip(epoch_errors)
                    .max_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
                    .map(|(&i, _)| i)
                    .expect("nonempty");
                marks.retain(|&i| i != keep);
            }
            marks
        }
    };
    let next = apply_elimination(active, &eliminated)?;
    Ok(Transition {
        active: next,
        recall_fired: recall_fired_before,
        eliminated: eliminated.len(),
        recalled: false,
    })
}

/// Stateful wrapper the trainer drives once per batch and once per epoch.
#[derive(Clone, Debug)]
pub struct Scheduler {
    cfg: ShrinkConfig,
    active: ActiveSet,
    recall_fired: bool,
    eliminating: bool,
    smoother: SmootherState,
    marks: Vec<usize>,
    thresholds: Vec<ThresholdPair>,
}

impl Scheduler {
    pub fn new(cfg: ShrinkConfig, n_total: usize) -> Result<Self> {
        cfg.validate()?;
        if n_total == 0 {
            return Err(Error::EmptyActiveSet);
        }
        Ok(Scheduler {
            cfg,
            active: ActiveSet::full(n_total),
            recall_fired: false,
            eliminating: false,
            smoother: SmootherState::default(),
            marks: Vec::new(),
            thresholds: Vec::new(),
        })
    }

    pub fn config(&self) -> &ShrinkConfig {
        &self.cfg
    }

    pub fn active(&self) -> &ActiveSet {
        &self.active
    }

    pub fn recall_fired(&self) -> bool {
        self.recall_fired
    }

    pub fn begin_epoch(&mut self) {
        self.eliminating = eliminates_this_epoch(&self.active, &self.cfg, self.recall_fired);
        self.smoother = SmootherState::default();
        self.marks.clear();
        self.thresholds.clear();
    }

    /// Feeds one processed batch. A no-op unless this epoch eliminates with
    /// batchwise selection.
    pub fn observe_batch(&mut self, sample_indices: &[usize], batch_errors: &[f64]) -> Result<()> {
        if !self.eliminating || self.cfg.selection != Selection::Batchwise {
            return Ok(());
        }
        let quota = self.cfg.batch_quota(sample_indices.len());
        let out = select_elimination_batchwise(sample_indices, batch_errors, quota, self.smoother, self.cfg.alpha)?;
        self.smoother = out.smoother;
        self.marks.extend(out.eliminated);
        if let Some(t) = out.threshold {
            self.thresholds.push(t);
        }
        Ok(())
    }

    /// Thresholds used by the batches of the current epoch.
    pub fn thresholds(&self) -> &[ThresholdPair] {
        &self.thresholds
    }

    /// Applies the epoch transition. `loss_by_index` is indexed by global
    /// sample index; only active entries are read.
    pub fn end_epoch(&mut self, loss_by_index: &[f64]) -> Result<Transition> {
        if loss_by_index.len() != self.active.n_total() {
            return Err(Error::Length {
                op: "Scheduler::end_epoch",
                expected: self.active.n_total(),
                found: loss_by_index.len(),
            });
        }
        let errors: Vec<f64> = self.active.indices().iter().map(|&i| loss_by_index[i]).collect();
        let marks = (self.cfg.selection == Selection::Batchwise).then_some(self.marks.as_slice());
        let t = epoch_transition(&self.active, &self.cfg, &errors, marks, self.recall_fired)?;
        self.active = t.active.clone();
        self.recall_fired = t.recall_fired;
        Ok(t)
    }
}
