//! Experiment CLI: dataset generation, training, evaluation, method
//! comparison, active learning, and file exports.
//!
//! Configs are JSON documents deserialized straight into the library's
//! config types; outputs are JSON reports and CSV tables. Every command
//! takes `--seed` to override the config's primary seed, so a run is fully
//! reproducible from its command line plus config files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use catreg_core::eval::{calibration_errors, calibration_table, ttest_one_tail};
use catreg_core::experiments::{
    active_learning_run, emit_loss_surface, run_experiment,
    ActiveLearningConfig, ExperimentConfig, MethodKind, SamplePrediction,
};
use catreg_core::model::{load_checkpoint, save_checkpoint};
use catreg_core::scheme::CategoryScheme;
use catreg_core::synth::{
    build_scenario, calibrate_disagreement, make_world, write_dataset_csv, ScenarioSpec,
    WorldConfig,
};

#[derive(Parser)]
#[command(
    name = "catreg",
    about = "Regression under categorical labels with label-uncertainty modelling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dataset splits from a world + scenario config.
    GenData(GenDataArgs),
    /// Train a seed ensemble and write checkpoints, metrics, and predictions.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset with both labels present.
    Eval(EvalArgs),
    /// One-tail Welch t-test between two prediction dumps.
    Compare(CompareArgs),
    /// Pool-based active-learning run with a label-budget trace.
    ActiveLearn(ActiveLearnArgs),
    /// Export the two-class AGT/SGT loss-surface grid as CSV.
    LossSurface(LossSurfaceArgs),
    /// Reliability table and calibration errors from a prediction dump.
    CalibrationReport(CalibrationArgs),
}

/// World + scenario recipe for `gen-data`.
#[derive(Debug, Serialize, Deserialize)]
struct GenDataConfig {
    world: WorldConfig,
    scenario: ScenarioSpec,
    /// When set, bisect the world's sigma scale to this expected
    /// label-disagreement rate before drawing labels.
    #[serde(default)]
    calibrate_disagreement: Option<f64>,
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON file holding a world + scenario description.
    #[arg(long)]
    config: PathBuf,
    /// Directory for train/validation/test CSV files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the scenario seed (labels and splits).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file holding an experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for checkpoints, per-seed metrics, and the summary report.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the experiment master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model checkpoint produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset CSV; every sample must carry both labels.
    #[arg(long)]
    data: PathBuf,
    /// Metrics report output (JSON); a confusion CSV lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the evaluation seed (only stochastic baselines use it).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Prediction dump whose errors are hypothesized to be smaller.
    #[arg(long)]
    first: PathBuf,
    /// Prediction dump compared against.
    #[arg(long)]
    second: PathBuf,
    /// T-test report output (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Accepted for interface uniformity; the test itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ActiveLearnArgs {
    /// JSON file holding an experiment configuration (single-label scenario).
    #[arg(long)]
    config: PathBuf,
    /// Optional JSON file with the acquisition schedule; defaults apply.
    #[arg(long)]
    al_config: Option<PathBuf>,
    /// Directory for the trace CSV and final metrics.
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the experiment master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LossSurfaceArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Accepted for interface uniformity; the grid is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CalibrationArgs {
    /// Prediction dump (JSON) produced by `train` or `eval`.
    #[arg(long)]
    predictions: PathBuf,
    /// Report output (JSON); a bin-table CSV lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Number of confidence bins.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Accepted for interface uniformity; the report is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Compare(args) => compare(args),
        Command::ActiveLearn(args) => active_learn(args),
        Command::LossSurface(args) => loss_surface(args),
        Command::CalibrationReport(args) => calibration_report(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut config: GenDataConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    let scheme = CategoryScheme::quality_default();
    if let Some(target) = config.calibrate_disagreement {
        let cal = calibrate_disagreement(target, &config.world, &scheme)?;
        config.world.sigma_scale = cal.sigma_scale;
        println!(
            "calibrated sigma scale {:.6} (expected disagreement {:.4})",
            cal.sigma_scale, cal.expected_rate
        );
    }
    let world = make_world(&config.world)?;
    let scenario = build_scenario(&world, &config.scenario, &scheme)?;
    fs::create_dir_all(&args.out_dir)?;
    // truth columns stay out of the training export
    write_dataset_csv(&args.out_dir.join("train.csv"), &scenario.train, &scheme, false)?;
    if !scenario.validation.is_empty() {
        write_dataset_csv(
            &args.out_dir.join("validation.csv"),
            &scenario.validation,
            &scheme,
            true,
        )?;
    }
    write_dataset_csv(&args.out_dir.join("test.csv"), &scenario.test, &scheme, true)?;
    write_json(&args.out_dir.join("gen_config.json"), &config)?;
    println!(
        "wrote {} train / {} validation / {} test samples to {}",
        scenario.train.len(),
        scenario.validation.len(),
        scenario.test.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    fs::create_dir_all(&args.out_dir)?;
    let output = run_experiment(&config)?;
    for (result, params) in output.report.per_seed.iter().zip(&output.models) {
        save_checkpoint(
            &args.out_dir.join(format!("checkpoint_seed_{}.json", result.seed)),
            params,
            result.seed,
        )?;
        write_json(
            &args.out_dir.join(format!("metrics_seed_{}.json", result.seed)),
            &result.metrics,
        )?;
    }
    let predictions: Vec<Vec<SamplePrediction>> = output
        .report
        .per_seed
        .iter()
        .map(|s| s.predictions.clone())
        .collect();
    write_json(&args.out_dir.join("predictions.json"), &predictions)?;
    write_json(&args.out_dir.join("report.json"), &output.report)?;
    fs::write(
        args.out_dir.join("confusion_ensemble.csv"),
        output.report.ensemble_metrics.confusion.to_csv(),
    )?;
    println!(
        "{} on {:?}: accuracy {:.4} (+/- {:.4}), abs error {:.4} (+/- {:.4}){}",
        config.method.name(),
        output.report.scenario,
        output.report.summary.accuracy.mean,
        output.report.summary.accuracy.std_dev,
        output.report.summary.abs_error_mean.mean,
        output.report.summary.abs_error_mean.std_dev,
        if output.report.on_reference_grid {
            ""
        } else {
            " [off-grid scenario/method cell]"
        }
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let (params, stored_seed) = load_checkpoint(&args.checkpoint)?;
    let scheme = params.config.scheme.clone();
    let samples = catreg_core::synth::read_dataset_csv(&args.data, &scheme)?;
    if samples.iter().any(|s| s.second_label.is_none()) {
        bail!("evaluation dataset must carry both labels for every sample");
    }
    let method = MethodKind::infer(&params.config);
    // reuse the experiment plumbing for the evaluation pass
    let world = WorldConfig::default();
    let scenario = ScenarioSpec::new(catreg_core::synth::ScenarioTag::S1, 1, 0);
    let mut config = ExperimentConfig::new(world, scenario, method, 0);
    config.hyper.mc_dropout_rate = params.config.dropout.max(config.hyper.mc_dropout_rate);
    let seed = args.seed.unwrap_or(stored_seed);
    let (records, dumps) =
        catreg_core::experiments::evaluate_instance(&config, &params, &samples, &scheme, seed)?;
    let report = catreg_core::eval::metrics_report(&records, &scheme)?;
    write_json(&args.out, &report)?;
    let confusion_path = args.out.with_extension("confusion.csv");
    fs::write(&confusion_path, report.confusion.to_csv())?;
    let dump_path = args.out.with_extension("predictions.json");
    write_json(&dump_path, &vec![dumps])?;
    println!(
        "{} samples: accuracy {:.4}, abs error {:.4} +/- {:.4} ({:.4}), ece {:.4}, mce {:.4}",
        report.count,
        report.accuracy,
        report.abs_error.mean,
        report.abs_error.std_dev,
        report.abs_error.median,
        report.ece,
        report.mce
    );
    Ok(())
}

fn load_predictions(path: &Path) -> Result<Vec<SamplePrediction>> {
    let nested: Vec<Vec<SamplePrediction>> = read_json(path)?;
    Ok(nested.into_iter().flatten().collect())
}

fn compare(args: CompareArgs) -> Result<()> {
    let first = load_predictions(&args.first)?;
    let second = load_predictions(&args.second)?;
    let errors_first: Vec<f64> = first.iter().map(|p| p.abs_error).collect();
    let errors_second: Vec<f64> = second.iter().map(|p| p.abs_error).collect();
    let result = ttest_one_tail(&errors_first, &errors_second)?;
    write_json(&args.out, &result)?;
    println!(
        "t {:.4}, df {:.1}, one-tail p {:.6} -> first {} second (alpha 0.05{})",
        result.t_statistic,
        result.degrees_of_freedom,
        result.p_value,
        if result.significant_05 {
            "is significantly better than"
        } else {
            "is not significantly better than"
        },
        if result.significant_10 && !result.significant_05 {
            "; significant at 0.10"
        } else {
            ""
        }
    );
    Ok(())
}

fn active_learn(args: ActiveLearnArgs) -> Result<()> {
    let mut config: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let al: ActiveLearningConfig = match &args.al_config {
        Some(path) => read_json(path)?,
        None => ActiveLearningConfig::default(),
    };
    fs::create_dir_all(&args.out_dir)?;
    let report = active_learning_run(&config, &al)?;
    let mut trace = String::from("epoch,labeled,test_accuracy,test_abs_error\n");
    for entry in &report.trace {
        trace.push_str(&format!(
            "{},{},{},{}\n",
            entry.epoch, entry.labeled, entry.test_accuracy, entry.test_abs_error
        ));
    }
    fs::write(args.out_dir.join("trace.csv"), trace)?;
    write_json(&args.out_dir.join("al_report.json"), &report)?;
    println!(
        "pool {}, initial {}, per-query {}, terminal {} labels; final accuracy {:.4}, abs error {:.4}",
        report.pool_size,
        report.initial_count,
        report.per_query_count,
        report.budget_count,
        report.metrics.accuracy,
        report.metrics.abs_error.mean
    );
    Ok(())
}

fn loss_surface(args: LossSurfaceArgs) -> Result<()> {
    emit_loss_surface(&args.out)?;
    println!("wrote loss-surface grid to {}", args.out.display());
    Ok(())
}

fn calibration_report(args: CalibrationArgs) -> Result<()> {
    let predictions = load_predictions(&args.predictions)?;
    let pairs: Vec<(f64, bool)> = predictions.iter().map(|p| (p.confidence, p.hit)).collect();
    let (ece, mce) = calibration_errors(&pairs, args.bins)?;
    let table = calibration_table(&pairs, args.bins)?;

    #[derive(Serialize)]
    struct CalibrationReport {
        bins: usize,
        count: usize,
        ece: f64,
        mce: f64,
        table: Vec<catreg_core::eval::CalibrationBin>,
    }
    write_json(
        &args.out,
        &CalibrationReport {
            bins: args.bins,
            count: pairs.len(),
            ece,
            mce,
            table: table.clone(),
        },
    )?;
    let mut csv = String::from("lower,upper,count,mean_confidence,accuracy\n");
    for bin in &table {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            bin.lower, bin.upper, bin.count, bin.mean_confidence, bin.accuracy
        ));
    }
    fs::write(args.out.with_extension("bins.csv"), csv)?;
    println!("{} predictions: ece {:.4}, mce {:.4}", pairs.len(), ece, mce);
    Ok(())
}
