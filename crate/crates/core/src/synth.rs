//! Synthetic intra-observer-variability testbed.
//!
//! Each world item carries a hidden true quality y and opinion spread
//! sigma, both smooth functions of its feature vector. A categorical label
//! is produced by drawing one opinion z ~ N(y, sigma^2), clipping it into
//! the quality range, and quantizing by the category bounds. Drawing two
//! labels per item reproduces the label-disagreement structure of repeat
//! annotation, and a global sigma scale can be calibrated so the expected
//! disagreement rate matches a target.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{gaussian_cdf, GaussianParams};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scheme::{Category, CategoryScheme};

/// Generator configuration for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_items: usize,
    pub feature_dim: usize,
    /// Standard deviation of the latent quality logit; controls how much
    /// mass sits near the quality extremes.
    pub quality_spread: f64,
    /// Base opinion-spread range before the global scale is applied.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Global multiplier on the spread map, set by disagreement calibration.
    pub sigma_scale: f64,
    /// Feature windows per item; one by default.
    pub windows: usize,
    /// Noise added to extra windows around the item's base features.
    pub window_jitter: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_items: 5_000,
            feature_dim: 8,
            quality_spread: 1.0,
            sigma_min: 0.02,
            sigma_max: 0.30,
            sigma_scale: 1.0,
            windows: 1,
            window_jitter: 0.1,
            seed: 0,
        }
    }
}

impl WorldConfig {
    fn validate(&self) -> Result<()> {
        if self.n_items == 0 || self.feature_dim == 0 || self.windows == 0 {
            return Err(Error::InvalidConfig(
                "world needs at least one item, feature, and window".into(),
            ));
        }
        if !(self.sigma_min > 0.0) || self.sigma_max < self.sigma_min {
            return Err(Error::InvalidConfig(
                "sigma range must satisfy 0 < sigma_min <= sigma_max".into(),
            ));
        }
        if !(self.sigma_scale > 0.0) {
            return Err(Error::InvalidConfig("sigma scale must be positive".into()));
        }
        if !(self.quality_spread > 0.0) {
            return Err(Error::InvalidConfig("quality spread must be positive".into()));
        }
        Ok(())
    }
}

/// One synthetic item: feature windows plus its hidden opinion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldItem {
    pub id: u64,
    pub windows: Vec<Vec<f64>>,
    pub true_mean: f64,
    pub true_scale: f64,
}

/// Hidden generator truth carried only by evaluation-facing samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    pub mean: f64,
    pub scale: f64,
}

/// A labelled dataset record. Training-facing records never carry truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    pub windows: Vec<Vec<f64>>,
    pub first_label: Category,
    pub second_label: Option<Category>,
    pub truth: Option<HiddenTruth>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates the world deterministically from its config.
///
/// Features come from a standard Gaussian source; y = logistic(w.x) with
/// fixed generator weights scaled so y spreads over (0, 1), and sigma
/// interpolates the configured range through logistic(v.x).
pub fn make_world(config: &WorldConfig) -> Result<Vec<WorldItem>> {
    config.validate()?;
    let root = Rng::seed_from_u64(config.seed);
    let mut gen_rng = root.fork(1);
    let d = config.feature_dim;
    let w_scale = config.quality_spread / (d as f64).sqrt();
    let v_scale = 1.2 / (d as f64).sqrt();
    let quality_weights: Vec<f64> = (0..d).map(|_| gen_rng.gaussian(0.0, w_scale)).collect();
    let spread_weights: Vec<f64> = (0..d).map(|_| gen_rng.gaussian(0.0, v_scale)).collect();

    let mut item_rng = root.fork(2);
    let mut items = Vec::with_capacity(config.n_items);
    for id in 0..config.n_items {
        let base: Vec<f64> = (0..d).map(|_| item_rng.next_gaussian()).collect();
        let dot_q: f64 = base.iter().zip(&quality_weights).map(|(x, w)| x * w).sum();
        let dot_s: f64 = base.iter().zip(&spread_weights).map(|(x, w)| x * w).sum();
        let true_mean = logistic(dot_q);
        let true_scale = config.sigma_scale
            * (config.sigma_min + (config.sigma_max - config.sigma_min) * logistic(dot_s));
        let mut windows = Vec::with_capacity(config.windows);
        windows.push(base.clone());
        for _ in 1..config.windows {
            windows.push(
                base.iter()
                    .map(|x| x + config.window_jitter * item_rng.next_gaussian())
                    .collect(),
            );
        }
        items.push(WorldItem {
            id: id as u64,
            windows,
            true_mean,
            true_scale,
        });
    }
    Ok(items)
}

/// The clip floor applied to opinion draws before quantization.
pub const CLIP_FLOOR: f64 = 1e-9;

/// Draws one categorical label: z ~ N(true_mean, true_scale^2), clipped to
/// (CLIP_FLOOR, 1], quantized by the scheme intervals.
pub fn sample_label(item: &WorldItem, scheme: &CategoryScheme, rng: &mut Rng) -> Category {
    let z = rng.gaussian(item.true_mean, item.true_scale);
    scheme.category_of(z.clamp(CLIP_FLOOR, 1.0))
}

/// Closed-form law of [`sample_label`]: interior categories get plain CDF
/// differences while the boundary categories absorb the clipped tails.
pub fn clipped_category_probs(mean: f64, scale: f64, scheme: &CategoryScheme) -> Vec<f64> {
    let params = GaussianParams {
        mean,
        std_dev: scale,
    };
    let n = scheme.len();
    let mut probs: Vec<f64> = scheme
        .categories()
        .map(|c| {
            let (l, u) = scheme.bounds(c);
            (gaussian_cdf(u, &params) - gaussian_cdf(l, &params)).max(0.0)
        })
        .collect();
    probs[0] += gaussian_cdf(scheme.lower(Category(0)), &params);
    probs[n - 1] += 1.0 - gaussian_cdf(scheme.upper(Category(n - 1)), &params);
    probs
}

/// Probability that two independent labels of one item disagree.
pub fn disagreement_probability(mean: f64, scale: f64, scheme: &CategoryScheme) -> f64 {
    let probs = clipped_category_probs(mean, scale, scheme);
    1.0 - probs.iter().map(|p| p * p).sum::<f64>()
}

/// Training scenario selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioTag {
    /// First-trial labels only.
    S1,
    /// Second-trial labels only.
    S2,
    /// Both label sets, averaged ground truth.
    S12Agt,
    /// Both label sets, stochastic ground truth.
    S12Sgt,
    /// First-trial labels plus extended single-label items.
    S1Ex,
}

/// Dataset construction recipe: sizes, splits, and label seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tag: ScenarioTag,
    pub core_size: usize,
    /// Extra single-label items, used by the S1Ex scenario only.
    pub extended_size: usize,
    /// (train, validation, test) fractions of the core; must sum to 1.
    pub split_ratios: (f64, f64, f64),
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(tag: ScenarioTag, core_size: usize, seed: u64) -> Self {
        ScenarioSpec {
            tag,
            core_size,
            extended_size: if tag == ScenarioTag::S1Ex { 9_000 } else { 0 },
            split_ratios: (0.6, 0.2, 0.2),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split_ratios;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "split ratios must be nonnegative and sum to 1".into(),
            ));
        }
        if self.core_size == 0 {
            return Err(Error::InvalidConfig("core size must be positive".into()));
        }
        if a == 0.0 {
            return Err(Error::InvalidConfig("train ratio must be positive".into()));
        }
        Ok(())
    }
}

/// The assembled dataset splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub train: Vec<LabeledSample>,
    pub validation: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

/// Builds the scenario splits from a world.
///
/// Validation and test sets always carry both labels and the hidden truth;
/// training samples carry only the labels the scenario allows and no
/// truth. Splits are disjoint by item id, with rounding remainder assigned
/// to the training split.
pub fn build_scenario(
    world: &[WorldItem],
    spec: &ScenarioSpec,
    scheme: &CategoryScheme,
) -> Result<Scenario> {
    spec.validate()?;
    let extended = if spec.tag == ScenarioTag::S1Ex {
        spec.extended_size
    } else {
        0
    };
    if world.len() < spec.core_size + extended {
        return Err(Error::InsufficientData(format!(
            "world has {} items, scenario needs {}",
            world.len(),
            spec.core_size + extended
        )));
    }

    let root = Rng::seed_from_u64(spec.seed);
    let mut label_rng = root.fork(1);
    let mut split_rng = root.fork(2);

    // both labels drawn i.i.d. from each item's opinion distribution
    let core = &world[..spec.core_size];
    let pairs: Vec<(Category, Category)> = core
        .iter()
        .map(|item| {
            (
                sample_label(item, scheme, &mut label_rng),
                sample_label(item, scheme, &mut label_rng),
            )
        })
        .collect();

    let mut order: Vec<usize> = (0..spec.core_size).collect();
    split_rng.shuffle(&mut order);
    let n = spec.core_size;
    let n_val = (spec.split_ratios.1 * n as f64).floor() as usize;
    let n_test = (spec.split_ratios.2 * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let make_eval_sample = |idx: usize| -> LabeledSample {
        let item = &core[idx];
        LabeledSample {
            id: item.id,
            windows: item.windows.clone(),
            first_label: pairs[idx].0,
            second_label: Some(pairs[idx].1),
            truth: Some(HiddenTruth {
                mean: item.true_mean,
                scale: item.true_scale,
            }),
        }
    };
    let make_train_sample = |idx: usize| -> LabeledSample {
        let item = &core[idx];
        let (a1, a2) = pairs[idx];
        let (first, second) = match spec.tag {
            ScenarioTag::S1 | ScenarioTag::S1Ex => (a1, None),
            ScenarioTag::S2 => (a2, None),
            ScenarioTag::S12Agt | ScenarioTag::S12Sgt => (a1, Some(a2)),
        };
        LabeledSample {
            id: item.id,
            windows: item.windows.clone(),
            first_label: first,
            second_label: second,
            truth: None,
        }
    };

    let mut train: Vec<LabeledSample> = order[..n_train]
        .iter()
        .map(|&i| make_train_sample(i))
        .collect();
    let validation: Vec<LabeledSample> = order[n_train..n_train + n_val]
        .iter()
        .map(|&i| make_eval_sample(i))
        .collect();
    let test: Vec<LabeledSample> = order[n_train + n_val..]
        .iter()
        .map(|&i| make_eval_sample(i))
        .collect();

    // extended single-label items extend the training split only
    for item in &world[spec.core_size..spec.core_size + extended] {
        let label = sample_label(item, scheme, &mut label_rng);
        train.push(LabeledSample {
            id: item.id,
            windows: item.windows.clone(),
            first_label: label,
            second_label: None,
            truth: None,
        });
    }

    Ok(Scenario {
        train,
        validation,
        test,
    })
}

/// Result of calibrating the global sigma scale to a disagreement target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma_scale: f64,
    /// Expected disagreement rate at the returned scale.
    pub expected_rate: f64,
    /// Effective (min, max) of the scaled spread map.
    pub sigma_range: (f64, f64),
}

/// Bisects a global sigma scale so the expected two-label disagreement
/// rate over the world matches the target within half a percentage point.
pub fn calibrate_disagreement(
    target: f64,
    config: &WorldConfig,
    scheme: &CategoryScheme,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target rate must lie in (0, 1), got {target}"
        )));
    }
    let mut base = config.clone();
    base.sigma_scale = 1.0;
    let world = make_world(&base)?;
    let rate_at = |scale: f64| -> f64 {
        world
            .iter()
            .map(|item| disagreement_probability(item.true_mean, item.true_scale * scale, scheme))
            .sum::<f64>()
            / world.len() as f64
    };

    const TOLERANCE: f64 = 0.005;
    let (mut lo, mut hi) = (1e-3, 10.0);
    let (rate_lo, rate_hi) = (rate_at(lo), rate_at(hi));
    if target < rate_lo - TOLERANCE || target > rate_hi + TOLERANCE {
        return Err(Error::TargetUnreachable(format!(
            "disagreement {target} outside achievable [{rate_lo:.4}, {rate_hi:.4}]"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let rate = rate_at(mid);
        if (rate - target).abs() <= TOLERANCE * 0.1 {
            break;
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = rate_at(mid);
    if (achieved - target).abs() > TOLERANCE {
        return Err(Error::TargetUnreachable(format!(
            "bisection stalled at rate {achieved:.4} for target {target}"
        )));
    }
    Ok(Calibration {
        sigma_scale: mid,
        expected_rate: achieved,
        sigma_range: (config.sigma_min * mid, config.sigma_max * mid),
    })
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

/// Serializes samples as CSV, one row per (sample, window).
///
/// Header: `id,window,feat_0..feat_{d-1},a1,a2[,true_y,true_sigma]`. The
/// truth columns only exist on evaluation exports; training exports strip
/// them so hidden truth never reaches a training consumer.
pub fn dataset_to_csv(
    samples: &[LabeledSample],
    scheme: &CategoryScheme,
    include_truth: bool,
) -> Result<String> {
    let d = samples
        .first()
        .map(|s| s.windows[0].len())
        .ok_or_else(|| Error::EmptyInput("no samples to export".into()))?;
    let mut out = String::from("id,window");
    for i in 0..d {
        let _ = write!(out, ",feat_{i}");
    }
    out.push_str(",a1,a2");
    if include_truth {
        out.push_str(",true_y,true_sigma");
    }
    out.push('\n');
    for s in samples {
        for (w, window) in s.windows.iter().enumerate() {
            let _ = write!(out, "{},{}", s.id, w);
            for x in window {
                let _ = write!(out, ",{x}");
            }
            let _ = write!(out, ",{}", scheme.name(s.first_label));
            out.push(',');
            if let Some(a2) = s.second_label {
                out.push_str(scheme.name(a2));
            }
            if include_truth {
                match &s.truth {
                    Some(t) => {
                        let _ = write!(out, ",{},{}", t.mean, t.scale);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_dataset_csv(
    path: &Path,
    samples: &[LabeledSample],
    scheme: &CategoryScheme,
    include_truth: bool,
) -> Result<()> {
    std::fs::write(path, dataset_to_csv(samples, scheme, include_truth)?)?;
    Ok(())
}

/// Parses a dataset CSV produced by [`dataset_to_csv`], grouping window
/// rows by sample id.
pub fn dataset_from_csv(text: &str, scheme: &CategoryScheme) -> Result<Vec<LabeledSample>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let feat_cols: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, name)| name.starts_with("feat_"))
        .map(|(i, _)| i)
        .collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let id_col = find("id").ok_or_else(|| Error::Dataset("missing id column".into()))?;
    let a1_col = find("a1").ok_or_else(|| Error::Dataset("missing a1 column".into()))?;
    let a2_col = find("a2").ok_or_else(|| Error::Dataset("missing a2 column".into()))?;
    let truth_cols = find("true_y").zip(find("true_sigma"));

    let mut samples: Vec<LabeledSample> = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Dataset(format!(
                "row {}: expected {} fields, got {}",
                line_no + 2,
                columns.len(),
                fields.len()
            )));
        }
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Dataset(format!("row {}: bad number '{s}'", line_no + 2)))
        };
        let id: u64 = fields[id_col]
            .parse()
            .map_err(|_| Error::Dataset(format!("row {}: bad id", line_no + 2)))?;
        let window: Vec<f64> = feat_cols
            .iter()
            .map(|&i| parse_f64(fields[i]))
            .collect::<Result<_>>()?;
        let first_label = scheme.parse(fields[a1_col])?;
        let second_label = if fields[a2_col].is_empty() {
            None
        } else {
            Some(scheme.parse(fields[a2_col])?)
        };
        let truth = match truth_cols {
            Some((yc, sc)) if !fields[yc].is_empty() => Some(HiddenTruth {
                mean: parse_f64(fields[yc])?,
                scale: parse_f64(fields[sc])?,
            }),
            _ => None,
        };

        match samples.last_mut() {
            Some(last) if last.id == id => last.windows.push(window),
            _ => samples.push(LabeledSample {
                id,
                windows: vec![window],
                first_label,
                second_label,
                truth,
            }),
        }
    }
    Ok(samples)
}

pub fn read_dataset_csv(path: &Path, scheme: &CategoryScheme) -> Result<Vec<LabeledSample>> {
    dataset_from_csv(&std::fs::read_to_string(path)?, scheme)
}
