use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shrinkdl::model::{Activation, Loss, OutputUnit};
use shrinkdl::shrinkage::{RecallPolicy, Selection, ShrinkMode};

const COMPARE_ABOUT: &str = "\
Run full training, then the selected shrinking variant, with the same seed.

Prints `speedup=<baseline time / variant time>` and
`imp=<(baseline error - variant error) / baseline error>`.

For reference, a 784-1000-10 network on all 60K MNIST training images has
been reported at speedup 2.05 and imp +0.163 for shrinking with recall
(s=0.2, t=0.2). Those values depend on hardware and full-scale data and are
not expected from desk-scale runs.";

#[derive(Debug, Parser)]
#[command(name = "shrinkdl", version, about = "MLP training with shrinking and recall sample schedules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write per-epoch metrics.
    Train(TrainArgs),
    #[command(about = "Time full training against a shrinking variant", long_about = COMPARE_ABOUT)]
    Compare(TrainArgs),
    /// Check backpropagation against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Correlate per-sample loss with per-sample gradient norm.
    Lemma1(Lemma1Args),
    /// Write a synthetic Gaussian-blob dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Full,
    Sdl,
    Sdlr,
}

impl From<ModeArg> for ShrinkMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => ShrinkMode::Full,
            ModeArg::Sdl => ShrinkMode::Shrink,
            ModeArg::Sdlr => ShrinkMode::ShrinkRecall,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SelectionArg {
    Global,
    Batchwise,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Global => Selection::Global,
            SelectionArg::Batchwise => Selection::Batchwise,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RecallArg {
    Repeating,
    Sticky,
}

impl From<RecallArg> for RecallPolicy {
    fn from(r: RecallArg) -> Self {
        match r {
            RecallArg::Repeating => RecallPolicy::Repeating,
            RecallArg::Sticky => RecallPolicy::Sticky,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Sigmoid,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Tanh => Activation::Tanh,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OutputArg {
    Sigmoid,
    Softmax,
}

impl From<OutputArg> for OutputUnit {
    fn from(o: OutputArg) -> Self {
        match o {
            OutputArg::Sigmoid => OutputUnit::Sigmoid,
            OutputArg::Softmax => OutputUnit::Softmax,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    Sse,
    Softmax,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Sse => Loss::SumSquared,
            LossArg::Softmax => Loss::SoftmaxCrossEntropy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Idx,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Layer widths, e.g. 784-1000-10.
    #[arg(long)]
    pub net: String,
    /// Hidden-layer activation.
    #[arg(long, value_enum, default_value = "tanh")]
    pub activation: ActivationArg,
    /// Output unit [default: sigmoid, or softmax when --loss softmax].
    #[arg(long, value_enum)]
    pub output: Option<OutputArg>,
    /// Per-sample loss.
    #[arg(long, value_enum, default_value = "sse")]
    pub loss: LossArg,
}

impl ModelArgs {
    pub fn output_unit(&self) -> OutputUnit {
        match (self.output, self.loss) {
            (Some(o), _) => o.into(),
            (None, LossArg::Softmax) => OutputUnit::Softmax,
            (None, LossArg::Sse) => OutputUnit::Sigmoid,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training images in IDX format.
    #[arg(long, requires = "mnist_labels", conflicts_with_all = ["csv", "synth"])]
    pub mnist_images: Option<PathBuf>,
    /// Training labels in IDX format.
    #[arg(long, requires = "mnist_images")]
    pub mnist_labels: Option<PathBuf>,
    /// Training CSV; the last --target-cols columns are targets.
    #[arg(long, conflicts_with = "synth")]
    pub csv: Option<PathBuf>,
    /// Number of trailing target columns in CSV inputs.
    #[arg(long, default_value_t = 1)]
    pub target_cols: usize,
    /// CSV inputs start with a header line.
    #[arg(long)]
    pub header: bool,
    /// Synthetic training blobs as n,p,c,spread.
    #[arg(long)]
    pub synth: Option<String>,
    /// Seed for synthetic data; the test blobs use this seed + 1
    /// [default: the run's --seed].
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Keep only the first N training samples [default: all].
    #[arg(long)]
    pub limit: Option<usize>,

    /// Test images in IDX format.
    #[arg(long, requires = "test_mnist_labels", conflicts_with_all = ["test_csv", "test_synth"])]
    pub test_mnist_images: Option<PathBuf>,
    /// Test labels in IDX format.
    #[arg(long, requires = "test_mnist_images")]
    pub test_mnist_labels: Option<PathBuf>,
    /// Test CSV.
    #[arg(long, conflicts_with = "test_synth")]
    pub test_csv: Option<PathBuf>,
    /// Synthetic test blobs as n,p,c,spread [default: same spec as --synth].
    #[arg(long)]
    pub test_synth: Option<String>,
    /// Keep only the first N test samples [default: all].
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    /// Schedule: full (every sample), sdl (shrink), sdlr (shrink with recall).
    #[arg(long, value_enum, default_value = "full")]
    pub mode: ModeArg,
    /// How low-loss samples are chosen for elimination.
    #[arg(long, value_enum, default_value = "global")]
    pub selection: SelectionArg,
    /// Behaviour after a recall.
    #[arg(long, value_enum, default_value = "repeating")]
    pub recall: RecallArg,
    /// Elimination rate per epoch, a fraction in [0, 1).
    #[arg(long, default_value_t = 0.2)]
    pub s: f64,
    /// Stop/recall threshold as a fraction of the training set, in (0, 1].
    #[arg(long, default_value_t = 0.2)]
    pub t: f64,
    /// Threshold smoothing weight in [0, 1) (batchwise selection).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    /// Mini-batch size.
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Seed for initialization and shuffling.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Shuffle the active set every epoch.
    #[arg(long, value_enum, default_value = "on")]
    pub shuffle: OnOff,
    /// Metrics CSV path (train) or path stem (compare writes
    /// <stem>_baseline.csv and <stem>_variant.csv).
    #[arg(long, default_value = "metrics.csv")]
    pub out: PathBuf,
    /// Suppress the per-epoch progress line.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of random samples in the checked batch.
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Pass threshold on the maximum relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed for initialization (and shuffling when training first).
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of samples to correlate (at least 30).
    #[arg(long, default_value_t = 200)]
    pub cap: usize,
    /// Epochs of full training before measuring (0 = random initialization).
    #[arg(long, default_value_t = 0)]
    pub train_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Blob spec n,p,c,spread.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    /// CSV path, or path prefix for IDX (<out>-images-idx3-ubyte,
    /// <out>-labels-idx1-ubyte).
    #[arg(long)]
    pub out: PathBuf,
    /// Write a header line (CSV only).
    #[arg(long)]
    pub header: bool,
}
