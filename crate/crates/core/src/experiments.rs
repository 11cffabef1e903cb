//! Experiment orchestration: scenario x method training runs, seed
//! ensembles, the active-learning harness, and file exports.
//!
//! A run is a pure function of its configuration: world generation, label
//! draws, splits, weight init, batch shuffling, dropout masks, stochastic
//! label draws, and evaluation all pull from streams forked off the master
//! seed, so repeating a configuration reproduces every number bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistFamily;
use crate::error::{Error, Result};
use crate::eval::{
    metrics_report, ttest_one_tail, EvalRecord, MetricsReport, TTestResult,
};
use crate::losses::{ground_truth_weights, surface_grid, GroundTruthWeights, GtMode};
use crate::model::{
    adam_step, backward, init_params, mc_dropout_predict, predict_sample, AdamHyper, AdamState,
    HeadKind, ModelConfig, ModelParams, TrainExample, TrainTarget,
};
use crate::rng::Rng;
use crate::scheme::CategoryScheme;
use crate::synth::{build_scenario, make_world, LabeledSample, ScenarioSpec, ScenarioTag, WorldConfig};

/// The evaluated method family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    Regression,
    McDropout,
    PdfProb,
    CdfProb,
    CdfProbLap,
    CdfProbMixture,
    CdfProbMixtureLap,
    Classification,
}

impl MethodKind {
    pub fn head(&self) -> HeadKind {
        match self {
            MethodKind::Regression | MethodKind::McDropout => HeadKind::Regression,
            MethodKind::PdfProb => HeadKind::PdfProb,
            MethodKind::CdfProb | MethodKind::CdfProbMixture => {
                HeadKind::CdfProb(DistFamily::Gaussian)
            }
            MethodKind::CdfProbLap | MethodKind::CdfProbMixtureLap => {
                HeadKind::CdfProb(DistFamily::Laplace)
            }
            MethodKind::Classification => HeadKind::Classification,
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self, MethodKind::CdfProbMixture | MethodKind::CdfProbMixtureLap)
    }

    pub fn uses_mc_dropout(&self) -> bool {
        matches!(self, MethodKind::McDropout)
    }

    /// Density-based training needs a 10x smaller learning rate to converge.
    pub fn learning_rate_factor(&self) -> f64 {
        match self {
            MethodKind::PdfProb => 0.1,
            _ => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Regression => "regression",
            MethodKind::McDropout => "mc-dropout",
            MethodKind::PdfProb => "pdf-prob",
            MethodKind::CdfProb => "cdf-prob",
            MethodKind::CdfProbLap => "cdf-prob-lap",
            MethodKind::CdfProbMixture => "cdf-prob-mixture",
            MethodKind::CdfProbMixtureLap => "cdf-prob-mixture-lap",
            MethodKind::Classification => "classification",
        }
    }

    /// Recovers the method from a model architecture, e.g. when evaluating
    /// a checkpoint on its own.
    pub fn infer(config: &crate::model::ModelConfig) -> MethodKind {
        match config.head {
            HeadKind::Regression if config.dropout > 0.0 => MethodKind::McDropout,
            HeadKind::Regression => MethodKind::Regression,
            HeadKind::PdfProb => MethodKind::PdfProb,
            HeadKind::Classification => MethodKind::Classification,
            HeadKind::CdfProb(DistFamily::Gaussian) => {
                if config.mixture_components > 1 {
                    MethodKind::CdfProbMixture
                } else {
                    MethodKind::CdfProb
                }
            }
            HeadKind::CdfProb(DistFamily::Laplace) => {
                if config.mixture_components > 1 {
                    MethodKind::CdfProbMixtureLap
                } else {
                    MethodKind::CdfProbLap
                }
            }
        }
    }
}

/// Training-loop hyper-parameters (per-method learning-rate factor applied
/// on top of `learning_rate`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyper {
    pub learning_rate: f64,
    /// Multiplicative decay applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Forward passes for Monte-Carlo dropout evaluation.
    pub mc_passes: usize,
    /// Drop rate of the MC-Dropout variant.
    pub mc_dropout_rate: f64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        TrainingHyper {
            learning_rate: 2.5e-4,
            lr_decay: 0.91,
            lr_decay_every: 2,
            weight_decay: 5e-4,
            epochs: 100,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mc_passes: 20,
            mc_dropout_rate: 0.1,
        }
    }
}

/// Learning rate in force at a (0-based) epoch index under the step decay
/// schedule.
pub fn lr_at_epoch(base: f64, hyper: &TrainingHyper, epoch: usize) -> f64 {
    base * hyper.lr_decay.powi((epoch / hyper.lr_decay_every) as i32)
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub scenario: ScenarioSpec,
    pub method: MethodKind,
    pub gt_mode: GtMode,
    pub hidden: Vec<usize>,
    /// Mixture components for the mixture methods.
    pub mixture_components: usize,
    pub hyper: TrainingHyper,
    pub master_seed: u64,
    pub ensemble_size: usize,
    /// Merge the validation fold into training for final runs.
    pub merge_validation: bool,
}

impl ExperimentConfig {
    pub fn new(
        world: WorldConfig,
        scenario: ScenarioSpec,
        method: MethodKind,
        master_seed: u64,
    ) -> Self {
        let gt_mode = match scenario.tag {
            ScenarioTag::S12Agt => GtMode::Agt,
            ScenarioTag::S12Sgt => GtMode::Sgt,
            _ => GtMode::Single,
        };
        ExperimentConfig {
            world,
            scenario,
            method,
            gt_mode,
            hidden: vec![64, 64],
            mixture_components: if method.is_mixture() { 3 } else { 1 },
            hyper: TrainingHyper::default(),
            master_seed,
            ensemble_size: 5,
            merge_validation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dual = matches!(self.scenario.tag, ScenarioTag::S12Agt | ScenarioTag::S12Sgt);
        match self.gt_mode {
            GtMode::Sgt | GtMode::Agt if !dual => {
                return Err(Error::InvalidConfig(format!(
                    "{:?} ground truth needs a dual-label scenario, got {:?}",
                    self.gt_mode, self.scenario.tag
                )));
            }
            GtMode::Single if dual => {
                return Err(Error::InvalidConfig(
                    "dual-label scenarios need AGT or SGT ground truth".into(),
                ));
            }
            _ => {}
        }
        if self.scenario.tag == ScenarioTag::S12Sgt && self.gt_mode != GtMode::Sgt {
            return Err(Error::InvalidConfig("S12Sgt scenario implies SGT".into()));
        }
        if self.scenario.tag == ScenarioTag::S12Agt && self.gt_mode != GtMode::Agt {
            return Err(Error::InvalidConfig("S12Agt scenario implies AGT".into()));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble size must be >= 1".into()));
        }
        if self.method.is_mixture() && self.mixture_components < 1 {
            return Err(Error::InvalidConfig("mixture needs K >= 1".into()));
        }
        Ok(())
    }

    /// Whether this scenario/method cell appears in the reference
    /// comparison grid; off-grid cells still run but get flagged.
    pub fn on_reference_grid(&self) -> bool {
        match self.scenario.tag {
            ScenarioTag::S1 | ScenarioTag::S2 => matches!(
                self.method,
                MethodKind::CdfProb | MethodKind::Regression | MethodKind::Classification
            ),
            ScenarioTag::S12Agt | ScenarioTag::S12Sgt => !self.method.is_mixture(),
            ScenarioTag::S1Ex => true,
        }
    }

    fn model_config(&self, input_dim: usize, scheme: &CategoryScheme) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden: self.hidden.clone(),
            head: self.method.head(),
            mixture_components: if self.method.is_mixture() {
                self.mixture_components
            } else {
                1
            },
            dropout: if self.method.uses_mc_dropout() {
                self.hyper.mc_dropout_rate
            } else {
                0.0
            },
            scheme: scheme.clone(),
        }
    }
}

/// Diagnostics from one training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub final_epoch_loss: f64,
    /// Log-floor clamps observed across the whole run.
    pub clamped_logs: usize,
    pub final_learning_rate: f64,
}

/// Per-sample prediction dump used for significance tests and correlation
/// checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: u64,
    pub mean: f64,
    pub scale: Option<f64>,
    pub confidence: f64,
    pub abs_error: f64,
    pub hit: bool,
    pub true_mean: Option<f64>,
    pub true_scale: Option<f64>,
}

/// One ensemble member's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub train: TrainStats,
    pub predictions: Vec<SamplePrediction>,
}

/// Mean and standard deviation of a metric across ensemble members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpread {
    pub mean: f64,
    pub std_dev: f64,
}

fn seed_spread(values: &[f64]) -> SeedSpread {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    SeedSpread {
        mean,
        std_dev: var.sqrt(),
    }
}

/// Aggregate over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub accuracy: SeedSpread,
    pub abs_error_mean: SeedSpread,
    pub ece: SeedSpread,
    pub mce: SeedSpread,
}

/// Full experiment outcome: per-seed results, their aggregate, and the
/// metrics of the mean-aggregated ensemble prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: MethodKind,
    pub scenario: ScenarioTag,
    pub gt_mode: GtMode,
    pub on_reference_grid: bool,
    pub per_seed: Vec<SeedResult>,
    pub summary: EnsembleSummary,
    pub ensemble_metrics: MetricsReport,
    /// Per-sample predictions of the mean-aggregated ensemble.
    pub ensemble_predictions: Vec<SamplePrediction>,
}

/// Report plus the trained parameter sets, one per ensemble member.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub models: Vec<ModelParams>,
}

// rng stream tags
const STREAM_SHUFFLE: u64 = 11;
const STREAM_DROPOUT: u64 = 12;
const STREAM_SGT: u64 = 13;
const STREAM_MC_EVAL: u64 = 14;

fn make_target(
    sample: &LabeledSample,
    gt_mode: GtMode,
    sgt_rng: &mut Rng,
) -> TrainTarget {
    let weights: GroundTruthWeights =
        ground_truth_weights(gt_mode, sample.second_label, sgt_rng);
    TrainTarget::Labels {
        first: sample.first_label,
        second: sample.second_label,
        weights,
    }
}

/// Trains one model instance over the given samples. Every training window
/// is one example; targets are re-drawn per epoch under SGT.
pub fn train_instance(
    config: &ExperimentConfig,
    train: &[LabeledSample],
    scheme: &CategoryScheme,
    instance_seed: u64,
) -> Result<(ModelParams, TrainStats)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("empty training set".into()));
    }
    let input_dim = train[0].windows[0].len();
    let model_config = config.model_config(input_dim, scheme);
    let mut params = init_params(&model_config, instance_seed)?;
    let mut state = AdamState::new(params.values.len());
    let root = Rng::seed_from_u64(instance_seed);
    let mut shuffle_rng = root.fork(STREAM_SHUFFLE);
    let mut dropout_rng = root.fork(STREAM_DROPOUT);
    let mut sgt_rng = root.fork(STREAM_SGT);

    // one training example per (sample, window)
    let flat: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.windows.len()).map(move |w| (i, w)))
        .collect();

    let base_lr = config.hyper.learning_rate * config.method.learning_rate_factor();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    let mut final_epoch_loss = 0.0;
    let mut clamped_logs = 0;
    let mut final_lr = base_lr;
    for epoch in 0..config.hyper.epochs {
        let lr = lr_at_epoch(base_lr, &config.hyper, epoch);
        final_lr = lr;
        let hyper = AdamHyper {
            learning_rate: lr,
            beta1: config.hyper.beta1,
            beta2: config.hyper.beta2,
            epsilon: config.hyper.epsilon,
            weight_decay: config.hyper.weight_decay,
        };
        shuffle_rng.shuffle(&mut order);
        // SGT weights re-drawn once per sample per epoch
        let epoch_targets: Vec<TrainTarget> = train
            .iter()
            .map(|s| make_target(s, config.gt_mode, &mut sgt_rng))
            .collect();
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.hyper.batch_size) {
            let batch: Vec<TrainExample> = chunk
                .iter()
                .map(|&idx| {
                    let (i, w) = flat[idx];
                    TrainExample {
                        features: train[i].windows[w].clone(),
                        target: epoch_targets[i],
                    }
                })
                .collect();
            let rng = if model_config.dropout > 0.0 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let (grad, stats) = backward(&params, &batch, rng)?;
            adam_step(&mut params, &grad, &mut state, &hyper)?;
            epoch_loss += stats.loss;
            clamped_logs += stats.clamped;
            batches += 1;
        }
        final_epoch_loss = epoch_loss / batches.max(1) as f64;
    }
    Ok((
        params,
        TrainStats {
            final_epoch_loss,
            clamped_logs,
            final_learning_rate: final_lr,
        },
    ))
}

/// Evaluates a trained instance on labelled samples (both labels required).
pub fn evaluate_instance(
    config: &ExperimentConfig,
    params: &ModelParams,
    samples: &[LabeledSample],
    scheme: &CategoryScheme,
    instance_seed: u64,
) -> Result<(Vec<EvalRecord>, Vec<SamplePrediction>)> {
    let mut mc_rng = Rng::seed_from_u64(instance_seed).fork(STREAM_MC_EVAL);
    let mut records = Vec::with_capacity(samples.len());
    let mut dumps = Vec::with_capacity(samples.len());
    for sample in samples {
        let second = sample.second_label.ok_or_else(|| {
            Error::InvalidParameter("evaluation needs both labels".into())
        })?;
        let (mean, scale, probs) = if config.method.uses_mc_dropout() {
            // stochastic repetition is the method's defining cost
            let mut acc = 0.0;
            for window in &sample.windows {
                let (m, _spread) =
                    mc_dropout_predict(params, window, config.hyper.mc_passes, &mut mc_rng)?;
                acc += m;
            }
            let mean = acc / sample.windows.len() as f64;
            (mean, None, crate::eval::regression_confidence(mean, scheme))
        } else {
            // single deterministic forward pass per window
            let out = predict_sample(params, &sample.windows)?;
            (out.mean, out.scale, out.probs)
        };
        let record = EvalRecord {
            mean,
            probs,
            first_label: sample.first_label,
            second_label: second,
        };
        dumps.push(SamplePrediction {
            id: sample.id,
            mean,
            scale,
            confidence: record.confidence(),
            abs_error: record.abs_error(scheme),
            hit: record.is_hit(scheme),
            true_mean: sample.truth.map(|t| t.mean),
            true_scale: sample.truth.map(|t| t.scale),
        });
        records.push(record);
    }
    Ok((records, dumps))
}

/// Converts validation samples into training samples for final runs:
/// hyper-parameters are fixed, so the fold is folded into training. The
/// hidden truth is stripped and only the label set the scenario trains on
/// is kept (the second-trial scenario keeps the second label).
pub fn merge_validation_fold(
    validation: &[LabeledSample],
    tag: ScenarioTag,
) -> Vec<LabeledSample> {
    validation
        .iter()
        .map(|sample| {
            let mut sample = sample.clone();
            sample.truth = None;
            match tag {
                ScenarioTag::S12Agt | ScenarioTag::S12Sgt => {}
                ScenarioTag::S2 => {
                    sample.first_label =
                        sample.second_label.expect("validation carries both labels");
                    sample.second_label = None;
                }
                ScenarioTag::S1 | ScenarioTag::S1Ex => {
                    sample.second_label = None;
                }
            }
            sample
        })
        .collect()
}

/// Runs the full ensemble experiment: trains `ensemble_size` instances on
/// seeds master..master+k, evaluates each on the shared test split, and
/// aggregates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let scheme = CategoryScheme::quality_default();
    let world = make_world(&config.world)?;
    let scenario = build_scenario(&world, &config.scenario, &scheme)?;
    let mut train = scenario.train.clone();
    if config.merge_validation {
        train.extend(merge_validation_fold(&scenario.validation, config.scenario.tag));
    }

    let mut per_seed = Vec::with_capacity(config.ensemble_size);
    let mut models = Vec::with_capacity(config.ensemble_size);
    let mut ensemble_means: Vec<f64> = vec![0.0; scenario.test.len()];
    let mut ensemble_probs: Vec<Vec<f64>> = vec![vec![0.0; scheme.len()]; scenario.test.len()];
    for k in 0..config.ensemble_size {
        let seed = config.master_seed.wrapping_add(k as u64);
        let (params, train_stats) = train_instance(config, &train, &scheme, seed)?;
        let (records, dumps) =
            evaluate_instance(config, &params, &scenario.test, &scheme, seed)?;
        for (i, r) in records.iter().enumerate() {
            ensemble_means[i] += r.mean / config.ensemble_size as f64;
            for (acc, p) in ensemble_probs[i].iter_mut().zip(&r.probs) {
                *acc += p / config.ensemble_size as f64;
            }
        }
        per_seed.push(SeedResult {
            seed,
            metrics: metrics_report(&records, &scheme)?,
            train: train_stats,
            predictions: dumps,
        });
        models.push(params);
    }

    let ensemble_records: Vec<EvalRecord> = scenario
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| EvalRecord {
            mean: ensemble_means[i],
            probs: ensemble_probs[i].clone(),
            first_label: s.first_label,
            second_label: s.second_label.expect("test samples carry both labels"),
        })
        .collect();
    let ensemble_predictions: Vec<SamplePrediction> = scenario
        .test
        .iter()
        .zip(&ensemble_records)
        .map(|(s, r)| SamplePrediction {
            id: s.id,
            mean: r.mean,
            scale: None,
            confidence: r.confidence(),
            abs_error: r.abs_error(&scheme),
            hit: r.is_hit(&scheme),
            true_mean: s.truth.map(|t| t.mean),
            true_scale: s.truth.map(|t| t.scale),
        })
        .collect();

    let summary = EnsembleSummary {
        accuracy: seed_spread(&per_seed.iter().map(|s| s.metrics.accuracy).collect::<Vec<_>>()),
        abs_error_mean: seed_spread(
            &per_seed
                .iter()
                .map(|s| s.metrics.abs_error.mean)
                .collect::<Vec<_>>(),
        ),
        ece: seed_spread(&per_seed.iter().map(|s| s.metrics.ece).collect::<Vec<_>>()),
        mce: seed_spread(&per_seed.iter().map(|s| s.metrics.mce).collect::<Vec<_>>()),
    };

    Ok(ExperimentOutput {
        report: ExperimentReport {
            method: config.method,
            scenario: config.scenario.tag,
            gt_mode: config.gt_mode,
            on_reference_grid: config.on_reference_grid(),
            per_seed,
            summary,
            ensemble_metrics: metrics_report(&ensemble_records, &scheme)?,
            ensemble_predictions,
        },
        models,
    })
}

/// Pools per-sample absolute errors over all ensemble members.
pub fn pooled_abs_errors(report: &ExperimentReport) -> Vec<f64> {
    report
        .per_seed
        .iter()
        .flat_map(|s| s.predictions.iter().map(|p| p.abs_error))
        .collect()
}

/// One-tail Welch test that the first report's pooled per-sample absolute
/// errors are smaller than the second's.
pub fn compare_reports(first: &ExperimentReport, second: &ExperimentReport) -> Result<TTestResult> {
    ttest_one_tail(&pooled_abs_errors(first), &pooled_abs_errors(second))
}

// ---------------------------------------------------------------------------
// Active learning
// ---------------------------------------------------------------------------

/// Pool-based uncertainty-sampling schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLearningConfig {
    /// Randomly labelled fraction of the pool before training starts.
    pub initial_fraction: f64,
    /// Epochs trained on the initial set before the first query.
    pub warmup_epochs: usize,
    /// Epochs between queries.
    pub query_period: usize,
    /// Fraction of the original pool acquired per query.
    pub query_fraction: f64,
    /// Total label budget as a fraction of the pool.
    pub terminal_budget: f64,
}

impl Default for ActiveLearningConfig {
    fn default() -> Self {
        ActiveLearningConfig {
            initial_fraction: 0.25,
            warmup_epochs: 50,
            query_period: 2,
            query_fraction: 0.015,
            terminal_budget: 0.50,
        }
    }
}

impl ActiveLearningConfig {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        for (name, v) in [
            ("initial_fraction", self.initial_fraction),
            ("query_fraction", self.query_fraction),
            ("terminal_budget", self.terminal_budget),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.warmup_epochs >= epochs {
            return Err(Error::InvalidConfig(
                "warmup must end before the last epoch".into(),
            ));
        }
        if self.query_period == 0 {
            return Err(Error::InvalidConfig("query period must be >= 1".into()));
        }
        if self.initial_fraction > self.terminal_budget {
            return Err(Error::InvalidConfig(
                "initial fraction exceeds the terminal budget".into(),
            ));
        }
        Ok(())
    }

    pub fn initial_count(&self, pool: usize) -> usize {
        ((self.initial_fraction * pool as f64).round() as usize).max(1)
    }

    pub fn per_query_count(&self, pool: usize) -> usize {
        ((self.query_fraction * pool as f64).round() as usize).max(1)
    }

    pub fn budget_count(&self, pool: usize) -> usize {
        (self.terminal_budget * pool as f64).round() as usize
    }

    /// Closed-form labelled count after a (1-based) epoch finishes.
    pub fn expected_labeled(&self, epoch: usize, pool: usize) -> usize {
        let initial = self.initial_count(pool);
        let queries = if epoch <= self.warmup_epochs {
            0
        } else {
            (epoch - self.warmup_epochs - 1) / self.query_period + 1
        };
        (initial + queries * self.per_query_count(pool)).min(self.budget_count(pool))
    }
}

/// Per-epoch trace entry of an active-learning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub labeled: usize,
    pub test_accuracy: f64,
    pub test_abs_error: f64,
}

/// Outcome of an active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLearningReport {
    pub pool_size: usize,
    pub initial_count: usize,
    pub per_query_count: usize,
    pub budget_count: usize,
    pub trace: Vec<TraceEntry>,
    pub metrics: MetricsReport,
}

/// Runs pool-based uncertainty sampling: warmup on a random initial
/// fraction, then periodic acquisition of the lowest-confidence pool items
/// until the label budget is spent.
pub fn active_learning_run(
    config: &ExperimentConfig,
    al: &ActiveLearningConfig,
) -> Result<ActiveLearningReport> {
    config.validate()?;
    al.validate(config.hyper.epochs)?;
    if matches!(
        config.scenario.tag,
        ScenarioTag::S12Agt | ScenarioTag::S12Sgt
    ) {
        return Err(Error::InvalidConfig(
            "active learning simulates a single-label pool scenario".into(),
        ));
    }
    let scheme = CategoryScheme::quality_default();
    let world = make_world(&config.world)?;
    let scenario = build_scenario(&world, &config.scenario, &scheme)?;
    let pool: Vec<LabeledSample> = scenario.train;
    let pool_size = pool.len();
    let initial_count = al.initial_count(pool_size);
    let per_query = al.per_query_count(pool_size);
    let budget = al.budget_count(pool_size);
    if budget > pool_size {
        return Err(Error::InsufficientData(format!(
            "budget {budget} exceeds pool {pool_size}"
        )));
    }

    let input_dim = pool[0].windows[0].len();
    let model_config = config.model_config(input_dim, &scheme);
    let mut params = init_params(&model_config, config.master_seed)?;
    let mut state = AdamState::new(params.values.len());
    let root = Rng::seed_from_u64(config.master_seed);
    let mut shuffle_rng = root.fork(STREAM_SHUFFLE);
    let mut dropout_rng = root.fork(STREAM_DROPOUT);
    let mut sgt_rng = root.fork(STREAM_SGT);
    let mut acquire_rng = root.fork(15);

    // initial random acquisition
    let mut order: Vec<usize> = (0..pool_size).collect();
    acquire_rng.shuffle(&mut order);
    let mut labeled: Vec<usize> = order[..initial_count.min(budget)].to_vec();
    let mut unlabeled: Vec<usize> = order[initial_count.min(budget)..].to_vec();

    let base_lr = config.hyper.learning_rate * config.method.learning_rate_factor();
    let mut trace = Vec::with_capacity(config.hyper.epochs);
    let mut final_records: Vec<EvalRecord> = Vec::new();
    for epoch in 1..=config.hyper.epochs {
        // acquisition happens before the epoch's training once warmup ends
        if epoch > al.warmup_epochs
            && (epoch - al.warmup_epochs - 1) % al.query_period == 0
            && labeled.len() < budget
            && !unlabeled.is_empty()
        {
            let take = per_query.min(budget - labeled.len()).min(unlabeled.len());
            // rank by ascending confidence; ties broken by id for
            // reproducibility
            let mut ranked: Vec<(f64, u64, usize)> = unlabeled
                .iter()
                .map(|&idx| {
                    let sample = &pool[idx];
                    let conf = predict_sample(&params, &sample.windows)
                        .map(|d| d.confidence())
                        .unwrap_or(1.0);
                    (conf, sample.id, idx)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let chosen: Vec<usize> = ranked[..take].iter().map(|r| r.2).collect();
            labeled.extend(&chosen);
            unlabeled.retain(|idx| !chosen.contains(idx));
        }

        // one epoch on the labelled set
        let lr = lr_at_epoch(base_lr, &config.hyper, epoch - 1);
        let hyper = AdamHyper {
            learning_rate: lr,
            beta1: config.hyper.beta1,
            beta2: config.hyper.beta2,
            epsilon: config.hyper.epsilon,
            weight_decay: config.hyper.weight_decay,
        };
        let mut epoch_order = labeled.clone();
        shuffle_rng.shuffle(&mut epoch_order);
        for chunk in epoch_order.chunks(config.hyper.batch_size) {
            let batch: Vec<TrainExample> = chunk
                .iter()
                .map(|&idx| TrainExample {
                    features: pool[idx].windows[0].clone(),
                    target: make_target(&pool[idx], config.gt_mode, &mut sgt_rng),
                })
                .collect();
            let rng = if model_config.dropout > 0.0 {
                Some(&mut dropout_rng)
            } else {
                None
            };
            let (grad, _) = backward(&params, &batch, rng)?;
            adam_step(&mut params, &grad, &mut state, &hyper)?;
        }

        let (records, _) =
            evaluate_instance(config, &params, &scenario.test, &scheme, config.master_seed)?;
        trace.push(TraceEntry {
            epoch,
            labeled: labeled.len(),
            test_accuracy: crate::eval::relaxed_accuracy(&records, &scheme)?,
            test_abs_error: crate::eval::abs_error_stats(&records, &scheme)?.mean,
        });
        if epoch == config.hyper.epochs {
            final_records = records;
        }
    }

    Ok(ActiveLearningReport {
        pool_size,
        initial_count,
        per_query_count: per_query,
        budget_count: budget,
        trace,
        metrics: metrics_report(&final_records, &scheme)?,
    })
}

// ---------------------------------------------------------------------------
// File exports
// ---------------------------------------------------------------------------

/// Writes the AGT/SGT loss-surface grid as CSV (999 rows plus header).
pub fn emit_loss_surface(path: &Path) -> Result<()> {
    let mut out = String::from("p_plus,red,yellow,blue\n");
    for (p, r, y, b) in surface_grid() {
        out.push_str(&format!("{p},{r},{y},{b}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(tag: ScenarioTag, method: MethodKind) -> ExperimentConfig {
        let world = WorldConfig {
            n_items: 240,
            feature_dim: 4,
            ..WorldConfig::default()
        };
        let scenario = ScenarioSpec::new(tag, 240, 5);
        let mut config = ExperimentConfig::new(world, scenario, method, 9);
        config.hidden = vec![8];
        config.hyper.epochs = 3;
        config.hyper.batch_size = 32;
        config.ensemble_size = 2;
        config
    }

    #[test]
    fn lr_schedule_closed_form() {
        let hyper = TrainingHyper::default();
        let lr0 = hyper.learning_rate;
        assert_eq!(lr_at_epoch(lr0, &hyper, 0), lr0);
        assert_eq!(lr_at_epoch(lr0, &hyper, 1), lr0);
        assert_eq!(lr_at_epoch(lr0, &hyper, 2), lr0 * 0.91);
        assert_eq!(lr_at_epoch(lr0, &hyper, 99), lr0 * 0.91f64.powi(49));
        let after_100 = lr_at_epoch(lr0, &hyper, 100);
        assert!((after_100 - lr0 * 0.91f64.powi(50)).abs() < 1e-12 * lr0);
        // roughly a hundred times smaller by epoch 100
        assert!(after_100 / lr0 < 0.011 && after_100 / lr0 > 0.005);
    }

    #[test]
    fn config_validation_rules() {
        let config = quick_config(ScenarioTag::S1, MethodKind::CdfProb);
        assert_eq!(config.gt_mode, GtMode::Single);
        config.validate().unwrap();

        let mut bad = quick_config(ScenarioTag::S1, MethodKind::CdfProb);
        bad.gt_mode = GtMode::Sgt;
        assert!(bad.validate().is_err());

        let mut bad = quick_config(ScenarioTag::S12Agt, MethodKind::Regression);
        bad.gt_mode = GtMode::Single;
        assert!(bad.validate().is_err());

        let mut bad = quick_config(ScenarioTag::S12Sgt, MethodKind::Regression);
        bad.gt_mode = GtMode::Agt;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_grid_flags() {
        assert!(quick_config(ScenarioTag::S1, MethodKind::CdfProb).on_reference_grid());
        assert!(quick_config(ScenarioTag::S1, MethodKind::Regression).on_reference_grid());
        assert!(!quick_config(ScenarioTag::S1, MethodKind::PdfProb).on_reference_grid());
        assert!(!quick_config(ScenarioTag::S2, MethodKind::McDropout).on_reference_grid());
        assert!(quick_config(ScenarioTag::S12Agt, MethodKind::PdfProb).on_reference_grid());
        assert!(!quick_config(ScenarioTag::S12Agt, MethodKind::CdfProbMixture).on_reference_grid());
        assert!(quick_config(ScenarioTag::S1Ex, MethodKind::CdfProbMixtureLap).on_reference_grid());
    }

    #[test]
    fn experiment_is_deterministic() {
        let config = quick_config(ScenarioTag::S12Agt, MethodKind::CdfProb);
        let a = run_experiment(&config).unwrap().report;
        let b = run_experiment(&config).unwrap().report;
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.per_seed.len(), 2);
    }

    #[test]
    fn ensemble_mean_is_arithmetic_mean_of_members() {
        let config = quick_config(ScenarioTag::S12Agt, MethodKind::Regression);
        let report = run_experiment(&config).unwrap().report;
        let n_test = report.per_seed[0].predictions.len();
        assert_eq!(report.ensemble_predictions.len(), n_test);
        assert_eq!(report.ensemble_metrics.count, n_test);
        for i in 0..n_test {
            let member_mean: f64 = report
                .per_seed
                .iter()
                .map(|s| s.predictions[i].mean)
                .sum::<f64>()
                / report.per_seed.len() as f64;
            let diff = (report.ensemble_predictions[i].mean - member_mean).abs();
            assert!(diff < 1e-12, "sample {i}: {diff}");
        }
    }

    #[test]
    fn merged_validation_keeps_scenario_label_set() {
        let config = quick_config(ScenarioTag::S2, MethodKind::Regression);
        let scheme = crate::scheme::CategoryScheme::quality_default();
        let world = make_world(&config.world).unwrap();
        let scenario = build_scenario(&world, &config.scenario, &scheme).unwrap();
        assert!(!scenario.validation.is_empty());

        // second-trial scenario trains the merged fold on the second label
        let merged = merge_validation_fold(&scenario.validation, ScenarioTag::S2);
        for (m, v) in merged.iter().zip(&scenario.validation) {
            assert_eq!(m.first_label, v.second_label.unwrap());
            assert!(m.second_label.is_none());
            assert!(m.truth.is_none());
        }
        // single-label scenarios keep the first label
        let merged = merge_validation_fold(&scenario.validation, ScenarioTag::S1);
        for (m, v) in merged.iter().zip(&scenario.validation) {
            assert_eq!(m.first_label, v.first_label);
            assert!(m.second_label.is_none());
        }
        // dual-label scenarios keep both
        let merged = merge_validation_fold(&scenario.validation, ScenarioTag::S12Agt);
        for (m, v) in merged.iter().zip(&scenario.validation) {
            assert_eq!(m.first_label, v.first_label);
            assert_eq!(m.second_label, v.second_label);
            assert!(m.truth.is_none());
        }
    }

    #[test]
    fn mc_dropout_runs_and_differs_from_regression() {
        let config = quick_config(ScenarioTag::S1, MethodKind::McDropout);
        let report = run_experiment(&config).unwrap().report;
        assert!(report.per_seed[0].metrics.accuracy > 0.0);
    }

    #[test]
    fn sgt_training_runs() {
        let config = quick_config(ScenarioTag::S12Sgt, MethodKind::CdfProb);
        assert_eq!(config.gt_mode, GtMode::Sgt);
        let report = run_experiment(&config).unwrap().report;
        assert_eq!(report.gt_mode, GtMode::Sgt);
    }

    #[test]
    fn active_learning_schedule_matches_closed_form() {
        let mut config = quick_config(ScenarioTag::S1, MethodKind::Regression);
        config.hyper.epochs = 20;
        let al = ActiveLearningConfig {
            initial_fraction: 0.25,
            warmup_epochs: 5,
            query_period: 2,
            query_fraction: 0.05,
            terminal_budget: 0.5,
        };
        let report = active_learning_run(&config, &al).unwrap();
        assert_eq!(report.trace.len(), 20);
        let pool = report.pool_size;
        for entry in &report.trace {
            assert_eq!(
                entry.labeled,
                al.expected_labeled(entry.epoch, pool),
                "epoch {}",
                entry.epoch
            );
        }
        // monotone nondecreasing labelled counts, capped at the budget
        for pair in report.trace.windows(2) {
            assert!(pair[1].labeled >= pair[0].labeled);
        }
        assert_eq!(report.trace.last().unwrap().labeled, report.budget_count);
    }

    #[test]
    fn active_learning_rejects_dual_label_scenarios() {
        let config = quick_config(ScenarioTag::S12Agt, MethodKind::Regression);
        assert!(active_learning_run(&config, &ActiveLearningConfig::default()).is_err());

        let mut config = quick_config(ScenarioTag::S1, MethodKind::Regression);
        config.hyper.epochs = 20;
        let bad = ActiveLearningConfig {
            warmup_epochs: 25,
            ..ActiveLearningConfig::default()
        };
        assert!(active_learning_run(&config, &bad).is_err());
    }

    #[test]
    fn loss_surface_file_shape() {
        let dir = std::env::temp_dir().join("catreg_surface_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("surface.csv");
        emit_loss_surface(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1000);
        assert_eq!(lines[0], "p_plus,red,yellow,blue");
        let mid: Vec<&str> = lines[500].split(',').collect();
        assert_eq!(mid[0], "0.5");
        let v: f64 = mid[1].parse().unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        std::fs::remove_file(&path).unwrap();
    }
}
