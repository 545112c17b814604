mod args;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shrinkdl::data::{load_csv, load_idx, synth_blobs, write_csv, write_idx, Dataset};
use shrinkdl::model::{backward, forward, init_params, parse_arch, Activation, MlpParams};
use shrinkdl::shrinkage::{ShrinkConfig, ShrinkMode};
use shrinkdl::trainer::{improvement, speedup, train_with_hook, EpochRecord, RunSummary, TrainConfig, TrainHook};
use shrinkdl::verify::{compare_gradients, finite_diff_grad, lemma1_correlation};
use shrinkdl::{Matrix, Result as CoreResult};

use args::{Cli, Command, DataArgs, FormatArg, GradcheckArgs, Lemma1Args, ModelArgs, OnOff, SynthArgs, TrainArgs};

enum Failure {
    /// Bad flag values: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(String),
}

impl From<shrinkdl::Error> for Failure {
    fn from(e: shrinkdl::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<ExitCode, Failure>;

fn usage<T>(r: CoreResult<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Lemma1(a) => cmd_lemma1(&a),
        Command::Synth(a) => cmd_synth(&a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// `n,p,c,spread`.
fn parse_synth_spec(s: &str) -> Result<(usize, usize, usize, f64), Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Failure::Usage(format!("synthetic spec must be n,p,c,spread, got {s:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let n = parts[0].parse().map_err(|_| bad())?;
    let p = parts[1].parse().map_err(|_| bad())?;
    let c = parts[2].parse().map_err(|_| bad())?;
    let spread = parts[3].parse().map_err(|_| bad())?;
    Ok((n, p, c, spread))
}

fn limited(ds: Dataset, limit: Option<usize>) -> Result<Dataset, Failure> {
    match limit {
        Some(0) => Err(Failure::Usage("limits must be at least 1".into())),
        Some(n) if n < ds.n() => Ok(ds.head(n)?),
        _ => Ok(ds),
    }
}

fn load_data(d: &DataArgs, run_seed: u64) -> Result<(Dataset, Dataset), Failure> {
    let data_seed = d.data_seed.unwrap_or(run_seed);
    let train = if let (Some(images), Some(labels)) = (&d.mnist_images, &d.mnist_labels) {
        load_idx(images, labels)?
    } else if let Some(path) = &d.csv {
        load_csv(path, d.target_cols, d.header)?
    } else if let Some(spec) = &d.synth {
        let (n, p, c, spread) = parse_synth_spec(spec)?;
        usage(synth_blobs(n, p, c, spread, data_seed))?
    } else {
        return Err(Failure::Usage(
            "no training data: give --mnist-images/--mnist-labels, --csv or --synth".into(),
        ));
    };
    let train = limited(train, d.limit)?;

    let test = if let (Some(images), Some(labels)) = (&d.test_mnist_images, &d.test_mnist_labels) {
        Some(load_idx(images, labels)?)
    } else if let Some(path) = &d.test_csv {
        Some(load_csv(path, d.target_cols, d.header)?)
    } else if let Some(spec) = d.test_synth.as_ref().or(d.synth.as_ref()) {
        let (n, p, c, spread) = parse_synth_spec(spec)?;
        Some(usage(synth_blobs(n, p, c, spread, data_seed.wrapping_add(1)))?)
    } else {
        None
    };
    let test = match test {
        Some(t) => limited(t, d.test_limit)?,
        None => {
            eprintln!("note: no test data given; test_err is measured on the training set");
            train.clone()
        }
    };
    Ok((train, test))
}

fn model_arch(m: &ModelArgs) -> Result<Vec<usize>, Failure> {
    usage(parse_arch(&m.net))
}

fn train_config(a: &TrainArgs, mode: ShrinkMode) -> Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        arch: model_arch(&a.model)?,
        activation: Activation::from(a.model.activation),
        output_unit: a.model.output_unit(),
        loss: a.model.loss.into(),
        eta: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        shrink: ShrinkConfig {
            s: a.s,
            t_frac: a.t,
            alpha: a.alpha,
            mode,
            selection: a.selection.into(),
            recall_policy: a.recall.into(),
        },
        shuffle: a.shuffle == OnOff::On,
    };
    usage(cfg.validate())?;
    // Catch loss/output mismatches before any data is loaded.
    usage(init_params(&cfg.arch, cfg.activation, cfg.output_unit, cfg.loss, 0))?;
    Ok(cfg)
}

struct Progress {
    label: &'static str,
    quiet: bool,
}

impl TrainHook for Progress {
    fn on_epoch(&mut self, r: &EpochRecord) {
        if !self.quiet {
            eprintln!(
                "[{}] epoch {:>3}  active {:>7}  {:>9.1} ms  train_err {:.4}  test_err {:.4}  loss {:.5}{}",
                self.label,
                r.epoch,
                r.active_count,
                r.wall_ms,
                r.train_error,
                r.test_error,
                r.mean_loss,
                if r.recalled { "  (recall)" } else { "" }
            );
        }
    }
}

fn run(train_ds: &Dataset, test_ds: &Dataset, cfg: &TrainConfig, label: &'static str, quiet: bool) -> Result<RunSummary, Failure> {
    let (_, summary) = train_with_hook(train_ds, test_ds, cfg, &mut Progress { label, quiet })?;
    Ok(summary)
}

fn write_metrics(summary: &RunSummary, path: &Path) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    summary.write_csv(BufWriter::new(file))?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Outcome {
    let cfg = train_config(a, a.mode.into())?;
    let (train_ds, test_ds) = load_data(&a.data, a.seed)?;
    let summary = run(&train_ds, &test_ds, &cfg, "train", a.quiet)?;
    write_metrics(&summary, &a.out)?;
    println!("final_train_err={}", summary.final_train_error);
    println!("final_test_err={}", summary.final_test_error);
    println!("total_train_ms={:.1}", summary.total_train_ms);
    println!("sample_evaluations={}", summary.total_evaluations());
    Ok(ExitCode::SUCCESS)
}

fn compare_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = match out.extension() {
        Some(ext) if ext == "csv" => out.with_extension(""),
        _ => out.to_path_buf(),
    };
    let with = |suffix: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with("_baseline.csv"), with("_variant.csv"))
}

fn cmd_compare(a: &TrainArgs) -> Outcome {
    let baseline_cfg = train_config(a, ShrinkMode::Full)?;
    let variant_cfg = train_config(a, a.mode.into())?;
    let (train_ds, test_ds) = load_data(&a.data, a.seed)?;

    // Sequential by design: the two timings must not compete for cores.
    let baseline = run(&train_ds, &test_ds, &baseline_cfg, "baseline", a.quiet)?;
    let variant = run(&train_ds, &test_ds, &variant_cfg, "variant", a.quiet)?;

    let (bpath, vpath) = compare_paths(&a.out);
    write_metrics(&baseline, &bpath)?;
    write_metrics(&variant, &vpath)?;

    println!("baseline_test_err={}", baseline.final_test_error);
    println!("variant_test_err={}", variant.final_test_error);
    println!("baseline_train_ms={:.1}", baseline.total_train_ms);
    println!("variant_train_ms={:.1}", variant.total_train_ms);
    println!("speedup={:.2}", speedup(&baseline, &variant)?);
    match improvement(baseline.final_test_error, variant.final_test_error) {
        Ok(imp) => println!("imp={imp:+.3}"),
        Err(_) => println!("imp=undefined (baseline test error is zero)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn random_batch(params: &MlpParams, batch: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let p = params.input_dim();
    let c = params.output_dim();
    let x = Matrix::new(p, batch, (0..p * batch).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized");
    let mut t = Matrix::zeros(batch, c);
    for i in 0..batch {
        t.set(i, rng.random_range(0..c), 1.0);
    }
    (x, t)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Outcome {
    let arch = model_arch(&a.model)?;
    if a.batch == 0 {
        return Err(Failure::Usage("--batch must be at least 1".into()));
    }
    if a.h.is_nan() || a.h <= 0.0 {
        return Err(Failure::Usage("--h must be positive".into()));
    }
    let params = usage(init_params(
        &arch,
        a.model.activation.into(),
        a.model.output_unit(),
        a.model.loss.into(),
        a.seed,
    ))?;
    let (x, t) = random_batch(&params, a.batch, a.seed);
    let trace = forward(&params, &x)?;
    let analytic = backward(&params, &trace, &t)?;
    let numeric = finite_diff_grad(&params, &x, &t, a.h)?;
    let report = compare_gradients(&analytic, &numeric, a.tol)?;
    println!("net={params}");
    println!("params={}", params.param_count());
    println!("max_rel_error={:e}", report.max_rel_error);
    let w = report.worst_param;
    match w.col {
        Some(c) => println!("worst_param=layer {} weight ({}, {})", w.layer, w.row, c),
        None => println!("worst_param=layer {} bias {}", w.layer, w.row),
    }
    println!("tolerance={:e}", report.tolerance);
    println!("passed={}", report.passed);
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_lemma1(a: &Lemma1Args) -> Outcome {
    let arch = model_arch(&a.model)?;
    if a.cap < 30 {
        return Err(Failure::Usage("--cap must be at least 30".into()));
    }
    let cfg = TrainConfig {
        arch: arch.clone(),
        activation: a.model.activation.into(),
        output_unit: a.model.output_unit(),
        loss: a.model.loss.into(),
        eta: a.lr,
        batch_size: a.batch,
        epochs: a.train_epochs.max(1),
        seed: a.seed,
        ..TrainConfig::new(arch)
    };
    usage(cfg.validate())?;
    let params = usage(init_params(&cfg.arch, cfg.activation, cfg.output_unit, cfg.loss, a.seed))?;
    let (train_ds, test_ds) = load_data(&a.data, a.seed)?;
    let params = if a.train_epochs > 0 {
        train_with_hook(&train_ds, &test_ds, &cfg, &mut Progress { label: "lemma1", quiet: false })?.0
    } else {
        params
    };
    let report = lemma1_correlation(&params, &train_ds, a.cap)?;
    println!("n_samples={}", report.n_samples);
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
    println!("pearson={}", fmt(report.pearson));
    println!("spearman={}", fmt(report.spearman));
    if report.degenerate {
        return Err(Failure::Runtime("zero-variance series; correlation is undefined".into()));
    }
    Ok(if report.spearman.is_some_and(|r| r > 0.0) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_synth(a: &SynthArgs) -> Outcome {
    let (n, p, c, spread) = parse_synth_spec(&a.spec)?;
    let ds = usage(synth_blobs(n, p, c, spread, a.seed))?;
    match a.format {
        FormatArg::Csv => {
            write_csv(&ds, &a.out, a.header)?;
            println!("wrote {} rows to {}", ds.n(), a.out.display());
        }
        FormatArg::Idx => {
            let prefixed = |suffix: &str| {
                let mut s = a.out.clone().into_os_string();
                s.push(suffix);
                PathBuf::from(s)
            };
            let (images, labels) = (prefixed("-images-idx3-ubyte"), prefixed("-labels-idx1-ubyte"));
            write_idx(&ds, &images, &labels)?;
            println!("wrote {} samples to {} and {}", ds.n(), images.display(), labels.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
