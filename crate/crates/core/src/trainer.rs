//! Epoch loop for full training, shrinking, and shrinking with recall.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{batch_indices, Dataset};
use crate::error::{Error, Result};
use crate::model::{
    backward, evaluate, forward, init_params_with_rng, per_sample_loss, sgd_step, Activation, Loss, MlpParams,
    OutputUnit,
};
use crate::shrinkage::{Scheduler, ShrinkConfig, ThresholdPair};

/// Header of the per-epoch metrics CSV.
pub const METRICS_HEADER: &str = "epoch,active_count,wall_ms,train_err,test_err,mean_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: Vec<usize>,
    pub activation: Activation,
    pub output_unit: OutputUnit,
    pub loss: Loss,
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shrink: ShrinkConfig,
    pub shuffle: bool,
}

impl TrainConfig {
    /// Tanh hidden units, sigmoid output, sum-squared loss, unit learning
    /// rate, no shrinking.
    pub fn new(arch: Vec<usize>) -> Self {
        TrainConfig {
            arch,
            activation: Activation::Tanh,
            output_unit: OutputUnit::Sigmoid,
            loss: Loss::SumSquared,
            eta: 1.0,
            batch_size: 100,
            epochs: 30,
            seed: 1,
            shrink: ShrinkConfig::full(),
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.eta)));
        }
        self.shrink.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Samples trained on this epoch.
    pub active_count: usize,
    /// Training-loop wall time; excludes evaluation.
    pub wall_ms: f64,
    /// Whole-training-set error after the epoch (classification error, or
    /// MSE for real-valued targets).
    pub train_error: f64,
    pub test_error: f64,
    /// Mean per-sample loss over the whole training set after the epoch.
    pub mean_loss: f64,
    /// Mean per-sample loss of the active samples as seen during the epoch.
    pub active_mean_loss: f64,
    /// Per-sample forward evaluations performed this epoch.
    pub evaluations: usize,
    /// Batchwise selection thresholds, one pair per batch.
    pub thresholds: Vec<ThresholdPair>,
    pub eliminated: usize,
    pub recalled: bool,
}

impl EpochRecord {
    /// Equality on everything except timing.
    pub fn same_trajectory(&self, other: &EpochRecord) -> bool {
        EpochRecord {
            wall_ms: 0.0,
            ..self.clone()
        } == EpochRecord {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub records: Vec<EpochRecord>,
    pub total_train_ms: f64,
    pub final_train_error: f64,
    pub final_test_error: f64,
}

impl RunSummary {
    pub fn total_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.evaluations).sum()
    }

    pub fn active_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.active_count).collect()
    }

    /// Writes the metrics CSV. Errors and losses use Rust's shortest
    /// round-trip formatting, so equal values give identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{:.3},{},{},{}",
                r.epoch, r.active_count, r.wall_ms, r.train_error, r.test_error, r.mean_loss
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Callbacks from inside the training loop.
pub trait TrainHook {
    /// Called after each batch's forward pass with its global indices.
    fn on_batch(&mut self, _epoch: usize, _sample_indices: &[usize]) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

pub struct NoHook;

impl TrainHook for NoHook {}

/// Trains per `cfg` and reports one record per epoch.
pub fn train(train_ds: &Dataset, test_ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpParams, RunSummary)> {
    train_with_hook(train_ds, test_ds, cfg, &mut NoHook)
}

pub fn train_with_hook(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<(MlpParams, RunSummary)> {
    cfg.validate()?;
    let input = *cfg.arch.first().ok_or_else(|| Error::invalid("empty architecture"))?;
    let output = *cfg.arch.last().expect("nonempty");
    for (name, ds) in [("training", train_ds), ("test", test_ds)] {
        if ds.p() != input || ds.c() != output {
            return Err(Error::invalid(format!(
                "{name} data is {}-feature/{}-target but the network is {input}-in/{output}-out",
                ds.p(),
                ds.c()
            )));
        }
    }

    // One stream: parameter init first, then one shuffle seed per epoch.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params_with_rng(&cfg.arch, cfg.activation, cfg.output_unit, cfg.loss, &mut rng)?;
    let n = train_ds.n();
    let mut scheduler = Scheduler::new(cfg.shrink, n)?;
    let mut losses = vec![0.0; n];
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut total_train_ms = 0.0;

    for epoch in 1..=cfg.epochs {
        let shuffle_seed: u64 = rng.random();
        let active_count = scheduler.active().len();

        let start = Instant::now();
        scheduler.begin_epoch();
        let order = batch_indices(scheduler.active(), cfg.batch_size, cfg.shuffle.then_some(shuffle_seed))?;
        let mut evaluations = 0;
        let mut active_loss_sum = 0.0;
        for idx in &order {
            let batch = train_ds.gather(idx)?;
            let trace = forward(&params, &batch.features)?;
            evaluations += idx.len();
            hook.on_batch(epoch, idx);
            let e = per_sample_loss(&params, &trace, &batch.targets)?;
            for (&i, &ei) in idx.iter().zip(e.iter()) {
                losses[i] = ei;
                active_loss_sum += ei;
            }
            scheduler.observe_batch(idx, e.as_slice())?;
            let grads = backward(&params, &trace, &batch.targets)?;
            sgd_step(&mut params, &grads, cfg.eta)?;
        }
        let thresholds = scheduler.thresholds().to_vec();
        let transition = scheduler.end_epoch(&losses)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        total_train_ms += wall_ms;

        let train_eval = evaluate(&params, train_ds)?;
        let test_eval = evaluate(&params, test_ds)?;
        let record = EpochRecord {
            epoch,
            active_count,
            wall_ms,
            train_error: train_eval.error(),
            test_error: test_eval.error(),
            mean_loss: train_eval.mean_loss,
            active_mean_loss: active_loss_sum / active_count as f64,
            evaluations,
            thresholds,
            eliminated: transition.eliminated,
            recalled: transition.recalled,
        };
        hook.on_epoch(&record);
        records.push(record);
    }

    if !params.is_finite() {
        return Err(Error::invalid(
            "training diverged: non-finite parameters (try a smaller learning rate)",
        ));
    }
    let last = records.last().expect("epochs >= 1");
    let summary = RunSummary {
        final_train_error: last.train_error,
        final_test_error: last.test_error,
        records,
        total_train_ms,
    };
    Ok((params, summary))
}

/// Baseline total training time over variant total training time.
pub fn speedup(baseline: &RunSummary, variant: &RunSummary) -> Result<f64> {
    speedup_from_times(baseline.total_train_ms, variant.total_train_ms)
}

pub fn speedup_from_times(baseline_ms: f64, variant_ms: f64) -> Result<f64> {
    if !(baseline_ms > 0.0 && variant_ms > 0.0) {
        return Err(Error::invalid(format!(
            "speedup needs positive durations, got {baseline_ms} and {variant_ms}"
        )));
    }
    Ok(baseline_ms / variant_ms)
}

/// Relative error improvement `(err_base - err_variant) / err_base`.
pub fn improvement(err_base: f64, err_variant: f64) -> Result<f64> {
    if err_base.is_nan() || err_base <= 0.0 {
        return Err(Error::invalid(format!(
            "improvement is undefined for baseline error {err_base}"
        )));
    }
    Ok((err_base - err_variant) / err_base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::shrinkage::{RecallPolicy, Selection, ShrinkMode};

    fn blobs_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 50,
            epochs: 30,
            seed: 7,
            ..TrainConfig::new(vec![10, 16, 3])
        }
    }

    #[test]
    fn speedup_examples() {
        assert!((speedup_from_times(1653.0, 805.0).unwrap() - 2.05).abs() < 0.005);
        assert!((speedup_from_times(1627.0, 700.0).unwrap() - 2.32).abs() < 0.005);
        assert_eq!(speedup_from_times(5.0, 5.0).unwrap(), 1.0);
        assert!(speedup_from_times(0.0, 5.0).is_err());
        assert!(speedup_from_times(5.0, -1.0).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement(0.0387, 0.0324).unwrap() - 0.163).abs() < 0.0005);
        assert_eq!(improvement(0.1, 0.1).unwrap(), 0.0);
        assert!((improvement(0.0072, 0.0073).unwrap() - -0.0139).abs() < 0.00005);
        assert!(improvement(0.0, 0.1).is_err());
    }

    #[test]
    fn learns_separable_blobs() {
        let ds = synth_blobs(500, 10, 3, 0.1, 7).unwrap();
        let (params, summary) = train(&ds, &ds, &blobs_cfg()).unwrap();
        assert_eq!(summary.records.len(), 30);
        assert!(summary.final_train_error <= 0.05, "{}", summary.final_train_error);
        assert!(params.is_finite());
    }

    #[test]
    fn zero_rate_matches_full_training() {
        let ds = synth_blobs(200, 10, 3, 0.5, 1).unwrap();
        let full_cfg = TrainConfig { epochs: 5, ..blobs_cfg() };
        let (p_full, s_full) = train(&ds, &ds, &full_cfg).unwrap();
        for selection in [Selection::Global, Selection::Batchwise] {
            let cfg = TrainConfig {
                shrink: ShrinkConfig {
                    s: 0.0,
                    mode: ShrinkMode::ShrinkRecall,
                    selection,
                    ..ShrinkConfig::default()
                },
                ..full_cfg.clone()
            };
            let (p, s) = train(&ds, &ds, &cfg).unwrap();
            assert_eq!(p, p_full);
            assert!(s.records.iter().zip(&s_full.records).all(|(a, b)| a.same_trajectory(b)));
        }
    }

    struct Counter(usize);

    impl TrainHook for Counter {
        fn on_batch(&mut self, _: usize, idx: &[usize]) {
            self.0 += idx.len();
        }
    }

    #[test]
    fn recall_schedule_and_work_count() {
        let ds = synth_blobs(1000, 4, 2, 0.5, 2).unwrap();
        let cfg = TrainConfig {
            arch: vec![4, 3, 2],
            epochs: 12,
            batch_size: 128,
            shrink: ShrinkConfig {
                mode: ShrinkMode::ShrinkRecall,
                recall_policy: RecallPolicy::Repeating,
                ..ShrinkConfig::default()
            },
            ..blobs_cfg()
        };
        let mut counter = Counter(0);
        let (_, s) = train_with_hook(&ds, &ds, &cfg, &mut counter).unwrap();
        assert_eq!(s.active_counts(), vec![1000, 800, 640, 512, 410, 328, 263, 211, 169, 1000, 800, 640]);
        assert_eq!(counter.0, s.active_counts().iter().sum::<usize>());
        assert_eq!(counter.0, s.total_evaluations());
        assert!(s.records[8].recalled);
    }

    #[test]
    fn metrics_csv_format() {
        let ds = synth_blobs(60, 10, 3, 0.1, 0).unwrap();
        let cfg = TrainConfig { epochs: 3, ..blobs_cfg() };
        let (_, s) = train(&ds, &ds, &cfg).unwrap();
        let csv = s.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 6 && !l.ends_with(',')));
        assert!(lines[1].starts_with("1,60,"));
    }

    #[test]
    fn rejects_mismatched_data() {
        let ds = synth_blobs(60, 10, 3, 0.1, 0).unwrap();
        let other = synth_blobs(60, 9, 3, 0.1, 0).unwrap();
        assert!(train(&ds, &other, &blobs_cfg()).is_err());
        let cfg = TrainConfig { epochs: 0, ..blobs_cfg() };
        assert!(train(&ds, &ds, &cfg).is_err());
        let cfg = TrainConfig { eta: 0.0, ..blobs_cfg() };
        assert!(train(&ds, &ds, &cfg).is_err());
    }
}
