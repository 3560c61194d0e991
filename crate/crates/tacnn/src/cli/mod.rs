//! Command-line surface: `fetch | train | eval | bench | gradcheck`.
//!
//! Exit codes: 0 success, 2 configuration/usage errors, 3 data errors
//! (missing or malformed files, failed downloads, checkpoint mismatches),
//! 4 numeric failures (gradcheck tolerance breaches, non-finite values).

mod config;

pub use config::{parse_kernels, parse_seeds, PartialConfig, RunConfig};

use crate::data_io::{self, Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::{
    load_checkpoint, read_checkpoint_spec, save_checkpoint, ConvFamily, Model, ModelSpec,
};
use crate::oracle::suites;
use crate::precision::{Precision, Real};
use crate::training::{
    best_epoch_selection, evaluate, make_pool, multi_seed_summary, train_epoch, AdamParams,
    AdamState, EpochMetrics, TrainConfig,
};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "tacnn",
    version,
    about = "Train and evaluate tensor-augmented convolutional networks on Fashion-MNIST"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download the Fashion-MNIST archives.
    Fetch(FetchArgs),
    /// Train one architecture across one or more seeds.
    Train(RunArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Sweep kernel counts and report accuracy vs. parameter totals.
    Bench(BenchArgs),
    /// Run the oracle verification suites.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct FetchArgs {
    /// Base URL of the four-file distribution.
    #[arg(long, default_value = data_io::DEFAULT_BASE_URL)]
    base_url: String,
    /// Destination directory.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model family: tacnn or cnn.
    #[arg(long)]
    model: Option<String>,
    /// Number of convolution layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Comma list of kernel counts, one per layer (e.g. `16,16`).
    #[arg(long)]
    kernels: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Comma list of seeds (e.g. `0,1,2,3,4`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads per run (also fixes the gradient reduction layout).
    #[arg(long)]
    workers: Option<usize>,
    /// Reproducible mode: wall-clock seconds are zeroed in metrics.csv so
    /// identical runs produce byte-identical output.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    deterministic: bool,
    /// Float width: f32 (training default) or f64.
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint produced by the train command.
    checkpoint: PathBuf,
    /// Dataset split: test or train.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    precision: Option<String>,
    /// Expected family; errors if the checkpoint differs.
    #[arg(long)]
    model: Option<String>,
    /// Expected conv layer count; errors if the checkpoint differs.
    #[arg(long)]
    layers: Option<usize>,
    /// Expected kernel counts; errors if the checkpoint differs.
    #[arg(long)]
    kernels: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sweep rows: comma-separated kernel configs, `x` between layers
    /// (e.g. `1,2,4,16x16`). Overrides --kernels/--layers for the sweep.
    #[arg(long)]
    sweep: Option<String>,
    /// Model families to bench: tacnn, cnn, or both.
    #[arg(long, default_value = "both")]
    families: String,
    /// Emit parameter accounting only, without training.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    dry_run: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Suite size: smoke, default, or full.
    #[arg(long, default_value = "default")]
    scale: String,
    #[arg(long, default_value_t = 20260809)]
    seed: u64,
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fetch(args) => cmd_fetch(&args.base_url, &args.data_dir),
        Command::Train(args) => {
            let config = resolve_run_config(&args)?;
            cmd_train(&config).map(|_| ())
        }
        Command::Eval(args) => cmd_eval(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Gradcheck(args) => cmd_gradcheck(&args.scale, args.seed),
    }
}

fn flags_to_partial(args: &RunArgs) -> Result<PartialConfig> {
    Ok(PartialConfig {
        model: args.model.as_deref().map(str::parse).transpose()?,
        layers: args.layers,
        kernels: args.kernels.as_deref().map(parse_kernels).transpose()?,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seeds: args.seeds.as_deref().map(parse_seeds).transpose()?,
        data_dir: args.data_dir.clone(),
        out_dir: args.out_dir.clone(),
        workers: args.workers,
        deterministic: if args.deterministic { Some(true) } else { None },
        precision: args
            .precision
            .as_deref()
            .map(|p| p.parse::<Precision>().map_err(Error::config))
            .transpose()?,
    })
}

fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut partial = PartialConfig::default();
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        partial = PartialConfig::parse(&text)?;
    }
    let flags = flags_to_partial(args)?;
    let mut merged = partial.overridden_by(flags);
    // a bare --kernels list fixes the layer count when --layers is absent
    if merged.layers.is_none() {
        if let Some(kernels) = &merged.kernels {
            merged.layers = Some(kernels.len());
        }
    }
    RunConfig::resolve(merged)
}

pub fn cmd_fetch(base_url: &str, data_dir: &Path) -> Result<()> {
    let before: Vec<bool> = data_io::DATASET_FILES
        .iter()
        .map(|f| data_dir.join(f).exists())
        .collect();
    let paths = data_io::fetch(base_url, data_dir)?;
    for (path, existed) in paths.iter().zip(before) {
        let status = if existed { "already present" } else { "downloaded" };
        println!("{} ({status})", path.display());
    }
    println!("dataset valid under {}", data_dir.display());
    Ok(())
}

fn build_spec(config: &RunConfig) -> Result<ModelSpec> {
    ModelSpec::conv_net(config.model, (1, 28, 28), &config.kernels, 3, 1, 128, 10)
}

fn load_planes<T: Real>(dir: &Path, split: Split) -> Result<Dataset<T>> {
    Ok(data_io::to_feature_planes(&data_io::load_split(dir, split)?))
}

/// Result of one seed's training run.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub best_test_acc: f64,
    pub best_epoch: usize,
    pub final_test_acc: f64,
}

/// Result of a full multi-seed training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub parameter_total: usize,
    pub per_seed: Vec<SeedOutcome>,
}

impl TrainOutcome {
    pub fn best_accuracies(&self) -> Vec<f64> {
        self.per_seed.iter().map(|s| s.best_test_acc).collect()
    }
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome> {
    match config.precision {
        Precision::F32 => run_training::<f32>(config),
        Precision::F64 => run_training::<f64>(config),
    }
}

fn run_training<T: Real>(config: &RunConfig) -> Result<TrainOutcome> {
    let spec = build_spec(config)?;
    let parameter_total = spec.parameter_count().total;
    let train_set: Dataset<T> = load_planes(&config.data_dir, Split::Train)?;
    let test_set: Dataset<T> = load_planes(&config.data_dir, Split::Test)?;

    let run_dir = config.out_dir.join(config.run_name());
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(run_dir.display().to_string(), e))?;
    write_file(&run_dir.join("config.resolved"), &config.to_config_text())?;

    let pool = make_pool(config.workers)?;
    println!(
        "run {} | {} parameters | {} train / {} test samples | precision {}",
        config.run_name(),
        parameter_total,
        train_set.len(),
        test_set.len(),
        config.precision
    );

    let mut per_seed = Vec::new();
    for &seed in &config.seeds {
        let seed_dir = run_dir.join(format!("seed{seed}"));
        fs::create_dir_all(&seed_dir).map_err(|e| Error::io(seed_dir.display().to_string(), e))?;
        let outcome = train_one_seed::<T>(
            config,
            spec.clone(),
            seed,
            &train_set,
            &test_set,
            &seed_dir,
            &pool,
        )?;
        println!(
            "seed {seed}: best test accuracy {:.4} at epoch {} (final {:.4})",
            outcome.best_test_acc, outcome.best_epoch, outcome.final_test_acc
        );
        per_seed.push(outcome);
    }

    write_summary_csv(&run_dir.join("summary.csv"), config, parameter_total, &per_seed)?;
    if per_seed.len() >= 2 {
        let accs: Vec<f64> = per_seed.iter().map(|s| s.best_test_acc).collect();
        let (mean, std) = multi_seed_summary(&accs)?;
        println!(
            "{}: mean best test accuracy {:.4} +/- {:.4} over {} seeds",
            config.run_name(),
            mean,
            std,
            accs.len()
        );
    }
    Ok(TrainOutcome {
        run_dir,
        parameter_total,
        per_seed,
    })
}

fn train_one_seed<T: Real>(
    config: &RunConfig,
    spec: ModelSpec,
    seed: u64,
    train_set: &Dataset<T>,
    test_set: &Dataset<T>,
    seed_dir: &Path,
    pool: &rayon::ThreadPool,
) -> Result<SeedOutcome> {
    let mut model = Model::<T>::init(spec, seed)?;
    let mut optimizer = AdamState::new(
        &model,
        AdamParams::with_learning_rate(config.learning_rate),
    );
    let train_config = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed,
        workers: config.workers,
    };

    let metrics_path = seed_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)
        .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
    writeln!(metrics, "{}", EpochMetrics::CSV_HEADER)
        .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;

    let mut history: Vec<EpochMetrics> = Vec::with_capacity(config.epochs);
    let mut best_acc = f64::NEG_INFINITY;
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let (train_loss, train_acc) =
            train_epoch(&mut model, &mut optimizer, train_set, &train_config, epoch - 1, pool)?;
        let (test_acc, _test_loss) = evaluate(&model, test_set, config.workers, pool)?;
        let seconds = if config.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        let row = EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            test_acc,
            seconds,
        };
        writeln!(metrics, "{}", row.csv_row())
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        metrics
            .flush()
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        if test_acc > best_acc {
            best_acc = test_acc;
            save_checkpoint(&model, &seed_dir.join("best.ckpt"))?;
        }
        println!(
            "seed {seed} | epoch {epoch}/{} | train_loss {train_loss:.4} | train_acc {train_acc:.4} | test_acc {test_acc:.4} | {:.1}s",
            config.epochs,
            started.elapsed().as_secs_f64(),
        );
        history.push(row);
    }
    save_checkpoint(&model, &seed_dir.join("final.ckpt"))?;

    let (best_test_acc, best_epoch) = best_epoch_selection(&history)?;
    let final_test_acc = history.last().map(|m| m.test_acc).unwrap_or(0.0);
    Ok(SeedOutcome {
        seed,
        best_test_acc,
        best_epoch,
        final_test_acc,
    })
}

fn write_summary_csv(
    path: &Path,
    config: &RunConfig,
    params: usize,
    per_seed: &[SeedOutcome],
) -> Result<()> {
    let mut text =
        String::from("model,layers,kernels,params,seed,best_test_acc,best_epoch,final_test_acc\n");
    let kernels = config
        .kernels
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join("x");
    for s in per_seed {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            config.model.as_str(),
            config.layers,
            kernels,
            params,
            s.seed,
            s.best_test_acc,
            s.best_epoch,
            s.final_test_acc
        ));
    }
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let precision = args
        .precision
        .as_deref()
        .map(|p| p.parse::<Precision>().map_err(Error::config))
        .transpose()?
        .unwrap_or(Precision::F32);
    let spec = read_checkpoint_spec(&args.checkpoint)?;

    // optional architecture expectations
    if let Some(model) = args.model.as_deref() {
        let family: ConvFamily = model.parse()?;
        if spec.conv_family() != Some(family) {
            return Err(Error::SpecMismatch {
                expected: family.as_str().into(),
                found: spec
                    .conv_family()
                    .map(|f| f.as_str().to_string())
                    .unwrap_or_else(|| "none".into()),
            });
        }
    }
    if let Some(layers) = args.layers {
        if spec.conv_layer_count() != layers {
            return Err(Error::SpecMismatch {
                expected: format!("{layers} conv layers"),
                found: format!("{} conv layers", spec.conv_layer_count()),
            });
        }
    }
    if let Some(kernels) = &args.kernels {
        let expected = parse_kernels(kernels)?;
        let family = spec.conv_family().unwrap_or(ConvFamily::Tensor);
        let expected_spec = ModelSpec::conv_net(family, (1, 28, 28), &expected, 3, 1, 128, 10)?;
        if expected_spec.layers != spec.layers {
            return Err(Error::SpecMismatch {
                expected: expected_spec.descriptor(),
                found: spec.descriptor(),
            });
        }
    }

    let split = match args.split.as_str() {
        "test" => Split::Test,
        "train" => Split::Train,
        other => return Err(Error::config(format!("unknown split '{other}'"))),
    };
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));

    let (accuracy, loss) = evaluate_checkpoint(&args.checkpoint, &args.data_dir, split, precision, workers)?;
    println!("checkpoint {}", args.checkpoint.display());
    println!("spec {}", spec.descriptor());
    println!("accuracy {accuracy:.6}");
    println!("mean_loss {loss:.6}");
    Ok(())
}

/// Load a checkpoint and score it on a dataset split; returns
/// (accuracy, mean loss).
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    data_dir: &Path,
    split: Split,
    precision: Precision,
    workers: usize,
) -> Result<(f64, f64)> {
    let pool = make_pool(workers)?;
    match precision {
        Precision::F32 => {
            let model = load_checkpoint::<f32>(checkpoint)?;
            let data: Dataset<f32> = load_planes(data_dir, split)?;
            evaluate(&model, &data, workers, &pool)
        }
        Precision::F64 => {
            let model = load_checkpoint::<f64>(checkpoint)?;
            let data: Dataset<f64> = load_planes(data_dir, split)?;
            evaluate(&model, &data, workers, &pool)
        }
    }
}

/// One row of a benchmark sweep.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub model: ConvFamily,
    pub kernels: Vec<usize>,
    pub params: usize,
    pub per_seed: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub wall_seconds: f64,
    pub status: String,
}

fn parse_sweep(value: &str) -> Result<Vec<Vec<usize>>> {
    value
        .split(',')
        .map(|row| {
            row.trim()
                .split('x')
                .map(|k| {
                    k.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("bad sweep entry '{row}'")))
                })
                .collect()
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let base = resolve_run_config(&args.run)?;
    let families: Vec<ConvFamily> = match args.families.as_str() {
        "both" => vec![ConvFamily::Tensor, ConvFamily::Baseline],
        one => vec![one.parse()?],
    };
    let rows: Vec<Vec<usize>> = match &args.sweep {
        Some(sweep) => parse_sweep(sweep)?,
        None => vec![base.kernels.clone()],
    };

    fs::create_dir_all(&base.out_dir)
        .map_err(|e| Error::io(base.out_dir.display().to_string(), e))?;
    let mut report: Vec<BenchRow> = Vec::new();
    for family in &families {
        for kernels in &rows {
            let mut config = base.clone();
            config.model = *family;
            config.layers = kernels.len();
            config.kernels = kernels.clone();
            let spec = build_spec(&config)?;
            let params = spec.parameter_count().total;
            let started = Instant::now();
            let row = if args.dry_run {
                BenchRow {
                    model: *family,
                    kernels: kernels.clone(),
                    params,
                    per_seed: Vec::new(),
                    mean: None,
                    std: None,
                    wall_seconds: 0.0,
                    status: "dry-run".into(),
                }
            } else {
                match cmd_train(&config) {
                    Ok(outcome) => {
                        let accs = outcome.best_accuracies();
                        let (mean, std) = if accs.len() >= 2 {
                            let (m, s) = multi_seed_summary(&accs)?;
                            (Some(m), Some(s))
                        } else {
                            (accs.first().copied(), None)
                        };
                        BenchRow {
                            model: *family,
                            kernels: kernels.clone(),
                            params,
                            per_seed: accs,
                            mean,
                            std,
                            wall_seconds: started.elapsed().as_secs_f64(),
                            status: "ok".into(),
                        }
                    }
                    Err(e) => {
                        eprintln!("bench row {}-{kernels:?} failed: {e}", family.as_str());
                        BenchRow {
                            model: *family,
                            kernels: kernels.clone(),
                            params,
                            per_seed: Vec::new(),
                            mean: None,
                            std: None,
                            wall_seconds: started.elapsed().as_secs_f64(),
                            status: format!("error: {e}"),
                        }
                    }
                }
            };
            report.push(row);
        }
    }

    write_bench_report(&base.out_dir, &report)?;
    print_bench_table(&report);
    Ok(())
}

fn kernels_label(kernels: &[usize]) -> String {
    kernels
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn write_bench_report(out_dir: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut bench = String::from(
        "model,layers,kernels,params,seeds,per_seed_best_accs,mean_best_acc,std_best_acc,wall_seconds,status\n",
    );
    let mut plot = String::from("model,layers,kernel_count,params,mean_best_acc,std_best_acc\n");
    for row in rows {
        let per_seed = row
            .per_seed
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mean = row.mean.map(|m| m.to_string()).unwrap_or_default();
        let std = row.std.map(|s| s.to_string()).unwrap_or_default();
        bench.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.1},{}\n",
            row.model.as_str(),
            row.kernels.len(),
            kernels_label(&row.kernels),
            row.params,
            row.per_seed.len(),
            per_seed,
            mean,
            std,
            row.wall_seconds,
            row.status
        ));
        plot.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.model.as_str(),
            row.kernels.len(),
            kernels_label(&row.kernels),
            row.params,
            mean,
            std
        ));
    }
    write_file(&out_dir.join("bench.csv"), &bench)?;
    write_file(&out_dir.join("plot.csv"), &plot)?;
    Ok(())
}

fn print_bench_table(rows: &[BenchRow]) {
    println!(
        "{:<6} {:<9} {:>12} {:>10} {:>10} {:>9}  status",
        "model", "kernels", "params", "mean_acc", "std_acc", "wall_s"
    );
    for row in rows {
        println!(
            "{:<6} {:<9} {:>12} {:>10} {:>10} {:>9.1}  {}",
            row.model.as_str(),
            kernels_label(&row.kernels),
            row.params,
            row.mean.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            row.std.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into()),
            row.wall_seconds,
            row.status
        );
    }
}

pub fn cmd_gradcheck(scale: &str, seed: u64) -> Result<()> {
    // (per-order contract instances, gradient instances, normalization cases)
    let (contract_n, grad_n, norm_n) = match scale {
        "smoke" => (100, 10, 200),
        "default" => (1000, 50, 2000),
        "full" => (2000, 200, 10000),
        other => {
            return Err(Error::config(format!(
                "unknown scale '{other}' (expected smoke, default, or full)"
            )))
        }
    };
    let reports = vec![
        suites::contract_equivalence(seed, contract_n)?,
        suites::basis_normalization(seed, grad_n * 4)?,
        suites::multilinearity(seed, contract_n)?,
        suites::coefficient_gradients(seed, grad_n)?,
        suites::pixel_gradients(seed, grad_n)?,
        suites::normalization_gradient(seed, grad_n)?,
        suites::normalization_range(seed, norm_n)?,
        suites::model_gradients(1, seed)?,
        suites::model_gradients(2, seed)?,
    ];
    let mut all_passed = true;
    for report in &reports {
        println!("{}", report.summary_line());
        all_passed &= report.passed();
    }
    if all_passed {
        println!("gradcheck: all {} suites passed", reports.len());
        Ok(())
    } else {
        Err(Error::numeric(
            "gradcheck",
            "one or more suites exceeded tolerance",
        ))
    }
}
