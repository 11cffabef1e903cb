//! A small feedforward model with a shared tanh trunk and per-method heads.
//!
//! The mean and scale heads are logistic, so estimates stay inside (0, 1);
//! the scale additionally gets floored before CDF evaluation. A mixture
//! configuration replicates the mean/scale heads K times and adds a weight
//! logit per component. Gradients are fully analytic; training is plain
//! Adam with decoupled weight decay. Parameters live in one flat vector so
//! checkpointing, optimizer state, and finite-difference checking all index
//! the same coordinates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::DistFamily;
use crate::error::{Error, Result};
use crate::eval::regression_confidence;
use crate::interval::{
    interval_probs_grad, mixture_probs_grad, MixtureComponent, PredictiveDistribution,
    SIGMA_FLOOR,
};
use crate::losses::{
    nll_heteroscedastic, nll_heteroscedastic_grad, xent_dual_label, xent_dual_label_grad,
    GroundTruthWeights,
};
use crate::rng::Rng;
use crate::scheme::{Category, CategoryScheme};

/// Which output head sits on the shared trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Mean + scale heads, exact interval probabilities.
    CdfProb(DistFamily),
    /// Mean + scale heads, density-at-center probabilities, NLL training.
    PdfProb,
    /// Mean head only; confidence from inverse center distance.
    Regression,
    /// Softmax over categories.
    Classification,
}

impl HeadKind {
    pub fn has_scale_head(&self) -> bool {
        matches!(self, HeadKind::CdfProb(_) | HeadKind::PdfProb)
    }

    pub fn family(&self) -> DistFamily {
        match self {
            HeadKind::CdfProb(f) => *f,
            _ => DistFamily::Gaussian,
        }
    }
}

/// Model architecture description. Serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: HeadKind,
    /// Mixture components; 1 disables the weight head. Only meaningful for
    /// the CdfProb head.
    pub mixture_components: usize,
    /// Dropout rate in [0, 1); 0 disables dropout entirely.
    pub dropout: f64,
    pub scheme: CategoryScheme,
}

impl ModelConfig {
    pub fn new(input_dim: usize, head: HeadKind, scheme: CategoryScheme) -> Self {
        ModelConfig {
            input_dim,
            hidden: vec![64, 64],
            head,
            mixture_components: 1,
            dropout: 0.0,
            scheme,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::InvalidConfig("layer sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout rate must lie in [0, 1)".into()));
        }
        if self.mixture_components == 0 {
            return Err(Error::InvalidConfig("mixture needs K >= 1".into()));
        }
        if self.mixture_components > 1 && !matches!(self.head, HeadKind::CdfProb(_)) {
            return Err(Error::InvalidConfig(
                "mixture components require the CdfProb head".into(),
            ));
        }
        Ok(())
    }

    fn feature_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&self.input_dim)
    }

    /// (rows, fan_in) of each parameter block, trunk first, then heads.
    fn blocks(&self) -> Vec<(usize, usize)> {
        let mut blocks = Vec::new();
        let mut fan_in = self.input_dim;
        for h in &self.hidden {
            blocks.push((*h, fan_in));
            fan_in = *h;
        }
        let f = self.feature_dim();
        let k = self.mixture_components;
        match self.head {
            HeadKind::CdfProb(_) => {
                blocks.push((k, f)); // mean rows
                blocks.push((k, f)); // scale rows
                if k > 1 {
                    blocks.push((k, f)); // weight logits
                }
            }
            HeadKind::PdfProb => {
                blocks.push((1, f));
                blocks.push((1, f));
            }
            HeadKind::Regression => blocks.push((1, f)),
            HeadKind::Classification => blocks.push((self.scheme.len(), f)),
        }
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(rows, fan)| rows * (fan + 1)).sum()
    }
}

/// Flat parameter vector plus its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub values: Vec<f64>,
}

/// Deterministic initialization: trunk and head weights drawn with
/// standard deviation 1/sqrt(fan_in), biases zero.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = Rng::seed_from_u64(seed).fork(0x1817);
    let mut values = Vec::with_capacity(config.param_count());
    for (rows, fan_in) in config.blocks() {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..rows {
            for _ in 0..fan_in {
                values.push(rng.gaussian(0.0, scale));
            }
            values.push(0.0); // bias
        }
    }
    Ok(ModelParams {
        config: config.clone(),
        values,
    })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sample forward intermediates needed by backprop.
struct ForwardCache {
    /// consumed (post-dropout) input of each trunk layer
    layer_inputs: Vec<Vec<f64>>,
    /// post-tanh activation of each trunk layer
    activations: Vec<Vec<f64>>,
    /// dropout masks (scale factors) per trunk layer input; empty if no dropout
    masks: Vec<Vec<f64>>,
    /// consumed head features and their mask
    features: Vec<f64>,
    feature_mask: Vec<f64>,
    /// head outputs
    head: HeadCache,
}

enum HeadCache {
    MeanScale {
        means: Vec<f64>,
        scales_raw: Vec<f64>,
        weights: Vec<f64>,
    },
    Regression {
        mean: f64,
    },
    Classification {
        probs: Vec<f64>,
    },
}

struct BlockOffsets {
    trunk: Vec<usize>,
    heads: Vec<usize>,
    trunk_blocks: Vec<(usize, usize)>,
    head_blocks: Vec<(usize, usize)>,
}

fn offsets(config: &ModelConfig) -> BlockOffsets {
    let blocks = config.blocks();
    let n_trunk = config.hidden.len();
    let mut off = 0;
    let mut trunk = Vec::new();
    let mut heads = Vec::new();
    for (i, (rows, fan)) in blocks.iter().enumerate() {
        if i < n_trunk {
            trunk.push(off);
        } else {
            heads.push(off);
        }
        off += rows * (fan + 1);
    }
    BlockOffsets {
        trunk,
        heads,
        trunk_blocks: blocks[..n_trunk].to_vec(),
        head_blocks: blocks[n_trunk..].to_vec(),
    }
}

fn affine_row(values: &[f64], off: usize, fan_in: usize, row: usize, input: &[f64]) -> f64 {
    let start = off + row * (fan_in + 1);
    let w = &values[start..start + fan_in];
    let mut acc = values[start + fan_in]; // bias
    for (wi, xi) in w.iter().zip(input.iter()) {
        acc += wi * xi;
    }
    acc
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn draw_mask(rng: &mut Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.next_f64() < rate { 0.0 } else { 1.0 / keep })
        .collect()
}

fn forward_inner(
    params: &ModelParams,
    x: &[f64],
    dropout_rng: Option<&mut Rng>,
) -> Result<(PredictiveDistribution, ForwardCache)> {
    let config = &params.config;
    if x.len() != config.input_dim {
        return Err(Error::DimensionMismatch {
            expected: config.input_dim,
            got: x.len(),
        });
    }
    let off = offsets(config);
    let rate = config.dropout;
    let mut local_rng = dropout_rng;

    let mut layer_inputs = Vec::with_capacity(config.hidden.len());
    let mut activations = Vec::with_capacity(config.hidden.len());
    let mut masks = Vec::with_capacity(config.hidden.len());
    let mut current: Vec<f64> = x.to_vec();
    for (l, (rows, fan_in)) in off.trunk_blocks.iter().enumerate() {
        let mask = match local_rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => draw_mask(rng, current.len(), rate),
            _ => Vec::new(),
        };
        let consumed: Vec<f64> = if mask.is_empty() {
            current.clone()
        } else {
            current.iter().zip(&mask).map(|(v, m)| v * m).collect()
        };
        let mut act = Vec::with_capacity(*rows);
        for r in 0..*rows {
            act.push(affine_row(&params.values, off.trunk[l], *fan_in, r, &consumed).tanh());
        }
        layer_inputs.push(consumed);
        masks.push(mask);
        activations.push(act.clone());
        current = act;
    }

    let feature_mask = match local_rng.as_deref_mut() {
        Some(rng) if rate > 0.0 => draw_mask(rng, current.len(), rate),
        _ => Vec::new(),
    };
    let features: Vec<f64> = if feature_mask.is_empty() {
        current
    } else {
        current
            .iter()
            .zip(&feature_mask)
            .map(|(v, m)| v * m)
            .collect()
    };

    let k = config.mixture_components;
    let scheme = &config.scheme;
    let (dist, head) = match config.head {
        HeadKind::CdfProb(family) => {
            let f = off.head_blocks[0].1;
            let means: Vec<f64> = (0..k)
                .map(|r| logistic(affine_row(&params.values, off.heads[0], f, r, &features)))
                .collect();
            let scales_raw: Vec<f64> = (0..k)
                .map(|r| logistic(affine_row(&params.values, off.heads[1], f, r, &features)))
                .collect();
            let weights = if k > 1 {
                let logits: Vec<f64> = (0..k)
                    .map(|r| affine_row(&params.values, off.heads[2], f, r, &features))
                    .collect();
                softmax(&logits)
            } else {
                vec![1.0]
            };
            let components: Vec<MixtureComponent> = (0..k)
                .map(|i| MixtureComponent {
                    mean: means[i],
                    scale: scales_raw[i].max(SIGMA_FLOOR),
                    weight: weights[i],
                })
                .collect();
            let probs = crate::interval::mixture_probs(&components, scheme, family)?;
            let mean = components.iter().map(|c| c.weight * c.mean).sum::<f64>();
            let scale = components.iter().map(|c| c.weight * c.scale).sum::<f64>();
            (
                PredictiveDistribution {
                    mean,
                    scale: Some(scale),
                    family,
                    probs,
                    components: if k > 1 { Some(components) } else { None },
                },
                HeadCache::MeanScale {
                    means,
                    scales_raw,
                    weights,
                },
            )
        }
        HeadKind::PdfProb => {
            let f = off.head_blocks[0].1;
            let mean = logistic(affine_row(&params.values, off.heads[0], f, 0, &features));
            let scale_raw = logistic(affine_row(&params.values, off.heads[1], f, 0, &features));
            let scale = scale_raw.max(SIGMA_FLOOR);
            let probs = crate::interval::pdf_prob_probs(mean, scale, scheme)?;
            (
                PredictiveDistribution {
                    mean,
                    scale: Some(scale),
                    family: DistFamily::Gaussian,
                    probs,
                    components: None,
                },
                HeadCache::MeanScale {
                    means: vec![mean],
                    scales_raw: vec![scale_raw],
                    weights: vec![1.0],
                },
            )
        }
        HeadKind::Regression => {
            let f = off.head_blocks[0].1;
            let mean = logistic(affine_row(&params.values, off.heads[0], f, 0, &features));
            (
                PredictiveDistribution {
                    mean,
                    scale: None,
                    family: DistFamily::Gaussian,
                    probs: regression_confidence(mean, scheme),
                    components: None,
                },
                HeadCache::Regression { mean },
            )
        }
        HeadKind::Classification => {
            let f = off.head_blocks[0].1;
            let logits: Vec<f64> = (0..scheme.len())
                .map(|r| affine_row(&params.values, off.heads[0], f, r, &features))
                .collect();
            let probs = softmax(&logits);
            let mean = probs
                .iter()
                .zip(scheme.categories())
                .map(|(p, c)| p * scheme.center(c))
                .sum();
            (
                PredictiveDistribution {
                    mean,
                    scale: None,
                    family: DistFamily::Gaussian,
                    probs: probs.clone(),
                    components: None,
                },
                HeadCache::Classification { probs },
            )
        }
    };

    Ok((
        dist,
        ForwardCache {
            layer_inputs,
            activations,
            masks,
            features,
            feature_mask,
            head,
        },
    ))
}

/// Deterministic evaluation pass: one forward evaluation yields the mean,
/// scale, and category probabilities together. Takes no random generator,
/// so it cannot be stochastic; dropout is inactive.
pub fn forward_eval(params: &ModelParams, x: &[f64]) -> Result<PredictiveDistribution> {
    forward_inner(params, x, None).map(|(dist, _)| dist)
}

/// Training pass: dropout masks (if configured) are drawn from the
/// supplied generator.
pub fn forward_train(
    params: &ModelParams,
    x: &[f64],
    rng: &mut Rng,
) -> Result<PredictiveDistribution> {
    forward_inner(params, x, Some(rng)).map(|(dist, _)| dist)
}

/// Evaluation over a multi-window sample: the estimated mean (and scale
/// and probabilities) are arithmetic means of the per-window outputs.
/// Mixture components are not averaged across windows.
pub fn predict_sample(params: &ModelParams, windows: &[Vec<f64>]) -> Result<PredictiveDistribution> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("sample has no feature windows".into()));
    }
    if windows.len() == 1 {
        return forward_eval(params, &windows[0]);
    }
    let outputs: Vec<PredictiveDistribution> = windows
        .iter()
        .map(|w| forward_eval(params, w))
        .collect::<Result<_>>()?;
    let n = outputs.len() as f64;
    let mean = outputs.iter().map(|o| o.mean).sum::<f64>() / n;
    let scale = outputs[0]
        .scale
        .map(|_| outputs.iter().map(|o| o.scale.unwrap_or(0.0)).sum::<f64>() / n);
    let mut probs = vec![0.0; outputs[0].probs.len()];
    for o in &outputs {
        for (acc, p) in probs.iter_mut().zip(&o.probs) {
            *acc += p / n;
        }
    }
    Ok(PredictiveDistribution {
        mean,
        scale,
        family: outputs[0].family,
        probs,
        components: None,
    })
}

/// Monte-Carlo dropout prediction: T stochastic forward passes with
/// dropout active; returns the pass-mean and pass-spread of the estimated
/// mean.
pub fn mc_dropout_predict(
    params: &ModelParams,
    x: &[f64],
    passes: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if passes < 2 {
        return Err(Error::InvalidParameter(
            "mc-dropout needs at least two passes".into(),
        ));
    }
    let mut means = Vec::with_capacity(passes);
    for _ in 0..passes {
        means.push(forward_train(params, x, rng)?.mean);
    }
    // bit-identical passes (dropout rate 0) have exactly zero spread
    if means.iter().all(|m| m.to_bits() == means[0].to_bits()) {
        return Ok((means[0], 0.0));
    }
    let n = passes as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Per-sample training target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainTarget {
    /// Numeric regression target.
    Value(f64),
    /// Categorical labels with their loss weights.
    Labels {
        first: Category,
        second: Option<Category>,
        weights: GroundTruthWeights,
    },
}

/// One training example: features plus target.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub target: TrainTarget,
}

/// Loss/diagnostic summary of one backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    /// log-floor clamps observed inside cross-entropy terms
    pub clamped: usize,
}

fn weighted_center_target(
    scheme: &CategoryScheme,
    first: Category,
    second: Option<Category>,
    weights: &GroundTruthWeights,
) -> f64 {
    let mut t = weights.first * scheme.center(first);
    if let Some(c) = second {
        t += weights.second * scheme.center(c);
    }
    t
}

/// Computes the per-sample loss for the configured head.
fn sample_loss(
    params: &ModelParams,
    dist: &PredictiveDistribution,
    cache: &ForwardCache,
    target: &TrainTarget,
) -> Result<(f64, usize)> {
    let scheme = &params.config.scheme;
    match (&params.config.head, target) {
        (HeadKind::Regression, TrainTarget::Value(v)) => {
            let r = dist.mean - v;
            Ok((0.5 * r * r, 0))
        }
        (HeadKind::Regression, TrainTarget::Labels { first, second, weights }) => {
            let v = weighted_center_target(scheme, *first, *second, weights);
            let r = dist.mean - v;
            Ok((0.5 * r * r, 0))
        }
        (HeadKind::PdfProb, TrainTarget::Value(v)) => {
            let scale = dist.scale.expect("pdf head has a scale");
            Ok((nll_heteroscedastic(*v, dist.mean, scale)?, 0))
        }
        (HeadKind::PdfProb, TrainTarget::Labels { first, second, weights }) => {
            let scale = dist.scale.expect("pdf head has a scale");
            let mut loss =
                weights.first * nll_heteroscedastic(scheme.center(*first), dist.mean, scale)?;
            if let Some(c) = second {
                loss +=
                    weights.second * nll_heteroscedastic(scheme.center(*c), dist.mean, scale)?;
            }
            Ok((loss, 0))
        }
        (
            HeadKind::CdfProb(_) | HeadKind::Classification,
            TrainTarget::Labels { first, second, weights },
        ) => {
            let _ = cache;
            let out = xent_dual_label(&dist.probs, *first, *second, weights)?;
            Ok((out.value, out.clamped))
        }
        _ => Err(Error::InvalidConfig(
            "numeric targets require a regression-style head".into(),
        )),
    }
}

/// Analytic gradient of the mean batch loss. Dropout masks, when enabled,
/// are drawn per sample from the supplied generator (pass None for exact
/// deterministic gradients).
pub fn backward(
    params: &ModelParams,
    batch: &[TrainExample],
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, BatchStats)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty training batch".into()));
    }
    let config = &params.config;
    let off = offsets(config);
    let mut grad = vec![0.0; params.values.len()];
    let mut total_loss = 0.0;
    let mut total_clamped = 0;
    let inv_batch = 1.0 / batch.len() as f64;
    let scheme = &config.scheme;

    for example in batch {
        let (dist, cache) =
            forward_inner(params, &example.features, dropout_rng.as_deref_mut())?;
        let (loss, clamped) = sample_loss(params, &dist, &cache, &example.target)?;
        total_loss += loss * inv_batch;
        total_clamped += clamped;

        // gradient of the loss with respect to each head pre-activation
        let mut d_features = vec![0.0; cache.features.len()];
        match (&cache.head, &example.target) {
            (HeadCache::Regression { mean }, target) => {
                let v = match target {
                    TrainTarget::Value(v) => *v,
                    TrainTarget::Labels { first, second, weights } => {
                        weighted_center_target(scheme, *first, *second, weights)
                    }
                };
                let d_mean = mean - v;
                let d_act = d_mean * mean * (1.0 - mean); // logistic'
                accumulate_row(
                    &params.values,
                    &mut grad,
                    off.heads[0],
                    off.head_blocks[0].1,
                    0,
                    d_act * inv_batch,
                    &cache.features,
                    &mut d_features,
                );
            }
            (
                HeadCache::MeanScale {
                    means,
                    scales_raw,
                    weights: mix_weights,
                },
                target,
            ) => {
                let k = means.len();
                let scales: Vec<f64> = scales_raw.iter().map(|s| s.max(SIGMA_FLOOR)).collect();
                // d loss / d mean_k, d scale_k, d weight_k
                let (d_means, d_scales, d_weights) = match (&config.head, target) {
                    (HeadKind::PdfProb, t) => {
                        let targets: Vec<(f64, f64)> = match t {
                            TrainTarget::Value(v) => vec![(1.0, *v)],
                            TrainTarget::Labels { first, second, weights } => {
                                let mut list = vec![(weights.first, scheme.center(*first))];
                                if let Some(c) = second {
                                    list.push((weights.second, scheme.center(*c)));
                                }
                                list
                            }
                        };
                        let mut dm = 0.0;
                        let mut ds = 0.0;
                        for (w, y) in targets {
                            if w != 0.0 {
                                let (gm, gs) = nll_heteroscedastic_grad(y, means[0], scales[0])?;
                                dm += w * gm;
                                ds += w * gs;
                            }
                        }
                        (vec![dm], vec![ds], vec![0.0])
                    }
                    (
                        HeadKind::CdfProb(family),
                        TrainTarget::Labels { first, second, weights },
                    ) => {
                        let d_probs =
                            xent_dual_label_grad(&dist.probs, *first, *second, weights)?;
                        if k == 1 {
                            let g = interval_probs_grad(means[0], scales[0], scheme, *family)?;
                            let dm: f64 = d_probs
                                .iter()
                                .zip(&g.d_mean)
                                .map(|(a, b)| a * b)
                                .sum();
                            let ds: f64 = d_probs
                                .iter()
                                .zip(&g.d_scale)
                                .map(|(a, b)| a * b)
                                .sum();
                            (vec![dm], vec![ds], vec![0.0])
                        } else {
                            let components: Vec<MixtureComponent> = (0..k)
                                .map(|i| MixtureComponent {
                                    mean: means[i],
                                    scale: scales[i],
                                    weight: mix_weights[i],
                                })
                                .collect();
                            let g = mixture_probs_grad(&components, scheme, *family)?;
                            let dot = |per_cat: &[f64]| -> f64 {
                                d_probs.iter().zip(per_cat).map(|(a, b)| a * b).sum()
                            };
                            (
                                (0..k).map(|i| dot(&g.d_mean[i])).collect(),
                                (0..k).map(|i| dot(&g.d_scale[i])).collect(),
                                (0..k).map(|i| dot(&g.d_weight[i])).collect(),
                            )
                        }
                    }
                    _ => {
                        return Err(Error::InvalidConfig(
                            "numeric targets require a regression-style head".into(),
                        ))
                    }
                };

                let f = off.head_blocks[0].1;
                for i in 0..k {
                    // logistic derivative for the mean head
                    let d_act = d_means[i] * means[i] * (1.0 - means[i]);
                    accumulate_row(
                        &params.values,
                        &mut grad,
                        off.heads[0],
                        f,
                        i,
                        d_act * inv_batch,
                        &cache.features,
                        &mut d_features,
                    );
                    // scale head: gradient gated to zero when floored
                    let d_act = if scales_raw[i] > SIGMA_FLOOR {
                        d_scales[i] * scales_raw[i] * (1.0 - scales_raw[i])
                    } else {
                        0.0
                    };
                    accumulate_row(
                        &params.values,
                        &mut grad,
                        off.heads[1],
                        f,
                        i,
                        d_act * inv_batch,
                        &cache.features,
                        &mut d_features,
                    );
                }
                if k > 1 {
                    // softmax jacobian back to the weight logits
                    let dot: f64 = d_weights
                        .iter()
                        .zip(mix_weights.iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    for i in 0..k {
                        let d_logit = mix_weights[i] * (d_weights[i] - dot);
                        accumulate_row(
                            &params.values,
                            &mut grad,
                            off.heads[2],
                            f,
                            i,
                            d_logit * inv_batch,
                            &cache.features,
                            &mut d_features,
                        );
                    }
                }
            }
            (HeadCache::Classification { probs }, TrainTarget::Labels { first, second, weights }) => {
                let d_probs = xent_dual_label_grad(probs, *first, *second, weights)?;
                let dot: f64 = d_probs.iter().zip(probs.iter()).map(|(a, b)| a * b).sum();
                let f = off.head_blocks[0].1;
                for i in 0..probs.len() {
                    let d_logit = probs[i] * (d_probs[i] - dot);
                    accumulate_row(
                        &params.values,
                        &mut grad,
                        off.heads[0],
                        f,
                        i,
                        d_logit * inv_batch,
                        &cache.features,
                        &mut d_features,
                    );
                }
            }
            (HeadCache::Classification { .. }, TrainTarget::Value(_)) => {
                return Err(Error::InvalidConfig(
                    "numeric targets require a regression-style head".into(),
                ))
            }
        }

        // head-input dropout
        if !cache.feature_mask.is_empty() {
            for (d, m) in d_features.iter_mut().zip(&cache.feature_mask) {
                *d *= m;
            }
        }

        // trunk backward; the 1/batch factor already rides along inside
        // d_features via the head pre-activation gradients
        let mut d_act = d_features;
        for l in (0..config.hidden.len()).rev() {
            let (rows, fan_in) = off.trunk_blocks[l];
            let consumed = &cache.layer_inputs[l];
            let act = &cache.activations[l];
            let mut d_input = vec![0.0; fan_in];
            for r in 0..rows {
                let dz = d_act[r] * (1.0 - act[r] * act[r]); // tanh'
                let start = off.trunk[l] + r * (fan_in + 1);
                for j in 0..fan_in {
                    grad[start + j] += dz * consumed[j];
                    d_input[j] += dz * params.values[start + j];
                }
                grad[start + fan_in] += dz;
            }
            if !cache.masks[l].is_empty() {
                for (d, m) in d_input.iter_mut().zip(&cache.masks[l]) {
                    *d *= m;
                }
            }
            d_act = d_input;
        }
    }

    Ok((
        grad,
        BatchStats {
            loss: total_loss,
            clamped: total_clamped,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn accumulate_row(
    values: &[f64],
    grad: &mut [f64],
    off: usize,
    fan_in: usize,
    row: usize,
    d_preact: f64,
    input: &[f64],
    d_input: &mut [f64],
) {
    if d_preact == 0.0 {
        return;
    }
    let start = off + row * (fan_in + 1);
    for j in 0..fan_in {
        grad[start + j] += d_preact * input[j];
        d_input[j] += d_preact * values[start + j];
    }
    grad[start + fan_in] += d_preact;
}

/// Mean batch loss without gradients (deterministic, no dropout).
pub fn batch_loss(params: &ModelParams, batch: &[TrainExample]) -> Result<BatchStats> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let mut loss = 0.0;
    let mut clamped = 0;
    for example in batch {
        let (dist, cache) = forward_inner(params, &example.features, None)?;
        let (l, c) = sample_loss(params, &dist, &cache, &example.target)?;
        loss += l / batch.len() as f64;
        clamped += c;
    }
    Ok(BatchStats { loss, clamped })
}

/// Compares analytic and central finite-difference gradients over a random
/// subset of parameter coordinates; returns the worst relative error.
/// Dropout must be disabled.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[TrainExample],
    coordinates: usize,
    seed: u64,
) -> Result<f64> {
    if params.config.dropout > 0.0 {
        return Err(Error::InvalidConfig(
            "gradient check requires dropout disabled".into(),
        ));
    }
    let (grad, _) = backward(params, batch, None)?;
    let mut rng = Rng::seed_from_u64(seed);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coordinates {
        let idx = rng.next_index(params.values.len());
        let mut plus = params.clone();
        plus.values[idx] += step;
        let mut minus = params.clone();
        minus.values[idx] -= step;
        let fd =
            (batch_loss(&plus, batch)?.loss - batch_loss(&minus, batch)?.loss) / (2.0 * step);
        let denom = grad[idx].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[idx] - fd).abs() / denom);
    }
    Ok(worst)
}

/// Adam hyper-parameters with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 2.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One Adam update with decoupled weight decay.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[f64],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if grads.len() != params.values.len() || state.first_moment.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: params.values.len(),
            got: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..grads.len() {
        let g = grads[i];
        state.first_moment[i] = hyper.beta1 * state.first_moment[i] + (1.0 - hyper.beta1) * g;
        state.second_moment[i] =
            hyper.beta2 * state.second_moment[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.first_moment[i] / bias1;
        let v_hat = state.second_moment[i] / bias2;
        params.values[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon)
            + hyper.learning_rate * hyper.weight_decay * params.values[i];
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_VERSION: u32 = 1;

/// Versioned checkpoint container: config, seed, and the flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, seed: u64) -> Result<()> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        seed,
        config: params.config.clone(),
        params: params.values.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            ckpt.format_version
        )));
    }
    if ckpt.params.len() != ckpt.config.param_count() {
        return Err(Error::Checkpoint(format!(
            "parameter count {} does not match config ({})",
            ckpt.params.len(),
            ckpt.config.param_count()
        )));
    }
    Ok((
        ModelParams {
            config: ckpt.config,
            values: ckpt.params,
        },
        ckpt.seed,
    ))
}
