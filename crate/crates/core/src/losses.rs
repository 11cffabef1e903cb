//! Training objectives.
//!
//! Three objectives cover every method head: the heteroscedastic Gaussian
//! negative log-likelihood for density-based training, the dual-label
//! cross-entropy with average (AGT) or stochastic (SGT) ground-truth
//! weighting for probability heads, and plain squared error for the
//! regression baseline (kept in the model layer). A small closed-form loss
//! surface illustrates how AGT averages the two per-label curves that SGT
//! jumps between.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scheme::Category;

/// Probabilities are clamped here before taking logs so stochastic labels
/// stay finite on freshly initialized models. Clamped evaluations are
/// counted and surfaced in training diagnostics.
pub const LOG_FLOOR: f64 = 1e-12;

/// How the two observed labels are weighted in the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GtMode {
    /// Average ground truth: both labels weighted 1/2.
    Agt,
    /// Stochastic ground truth: one label drawn uniformly per sample per epoch.
    Sgt,
    /// Single-label data: all weight on the first label.
    Single,
}

/// Weighting assignment (w1, w2) for the two observed labels; w1 + w2 = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthWeights {
    pub first: f64,
    pub second: f64,
}

impl GroundTruthWeights {
    pub fn agt() -> Self {
        GroundTruthWeights {
            first: 0.5,
            second: 0.5,
        }
    }

    pub fn single() -> Self {
        GroundTruthWeights {
            first: 1.0,
            second: 0.0,
        }
    }
}

/// Draws the label weights for one sample. AGT is deterministic (1/2, 1/2);
/// SGT puts all weight on one label chosen uniformly from the generator,
/// re-drawn independently per sample per epoch by the caller. Without a
/// second label all weight goes to the first.
pub fn ground_truth_weights(
    mode: GtMode,
    second_label: Option<Category>,
    rng: &mut Rng,
) -> GroundTruthWeights {
    match (mode, second_label) {
        (GtMode::Agt, Some(_)) => GroundTruthWeights::agt(),
        (GtMode::Sgt, Some(_)) => {
            if rng.next_bool() {
                GroundTruthWeights {
                    first: 1.0,
                    second: 0.0,
                }
            } else {
                GroundTruthWeights {
                    first: 0.0,
                    second: 1.0,
                }
            }
        }
        _ => GroundTruthWeights::single(),
    }
}

/// Per-sample heteroscedastic Gaussian negative log-likelihood
/// ((y - mu)^2 / sigma^2 + ln sigma^2) / 2, constant term dropped.
pub fn nll_heteroscedastic(y: f64, mean: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let r = (y - mean) / scale;
    Ok(0.5 * (r * r + (scale * scale).ln()))
}

/// Analytic (d/d mean, d/d scale) of [`nll_heteroscedastic`].
pub fn nll_heteroscedastic_grad(y: f64, mean: f64, scale: f64) -> Result<(f64, f64)> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let d_mean = (mean - y) / (scale * scale);
    let d_scale = 1.0 / scale - (y - mean) * (y - mean) / (scale * scale * scale);
    Ok((d_mean, d_scale))
}

/// Cross-entropy value plus a count of log-floor clamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualLabelLoss {
    pub value: f64,
    /// Number of observed-label probabilities that hit [`LOG_FLOOR`].
    pub clamped: usize,
}

/// Dual-label cross-entropy -w1 ln p[a1] - w2 ln p[a2] over normalized
/// probabilities. A missing second label contributes nothing (its weight
/// must then be zero).
pub fn xent_dual_label(
    probs: &[f64],
    first: Category,
    second: Option<Category>,
    weights: &GroundTruthWeights,
) -> Result<DualLabelLoss> {
    if first.0 >= probs.len() || second.is_some_and(|c| c.0 >= probs.len()) {
        return Err(Error::InvalidParameter("label outside scheme".into()));
    }
    if second.is_none() && weights.second != 0.0 {
        return Err(Error::InvalidParameter(
            "nonzero weight on a missing second label".into(),
        ));
    }
    let mut clamped = 0;
    let mut term = |w: f64, c: Category| -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let p = probs[c.0];
        let p_safe = if p < LOG_FLOOR {
            clamped += 1;
            LOG_FLOOR
        } else {
            p
        };
        -w * p_safe.ln()
    };
    let mut value = term(weights.first, first);
    if let Some(c) = second {
        value += term(weights.second, c);
    }
    Ok(DualLabelLoss { value, clamped })
}

/// Gradient of [`xent_dual_label`] with respect to each probability entry.
pub fn xent_dual_label_grad(
    probs: &[f64],
    first: Category,
    second: Option<Category>,
    weights: &GroundTruthWeights,
) -> Result<Vec<f64>> {
    if first.0 >= probs.len() || second.is_some_and(|c| c.0 >= probs.len()) {
        return Err(Error::InvalidParameter("label outside scheme".into()));
    }
    let mut grad = vec![0.0; probs.len()];
    let mut add = |w: f64, c: Category| {
        if w != 0.0 {
            // flat where the clamp is active
            let p = probs[c.0];
            if p >= LOG_FLOOR {
                grad[c.0] -= w / p;
            }
        }
    };
    add(weights.first, first);
    if let Some(c) = second {
        add(weights.second, c);
    }
    Ok(grad)
}

/// The two-class toy loss surface: per-label curves -ln p and -ln(1 - p)
/// and their average, evaluated at the positive-class probability.
pub fn agt_sgt_surface(p_plus: f64) -> Result<(f64, f64, f64)> {
    if !(p_plus > 0.0 && p_plus < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p_plus must lie strictly inside (0, 1), got {p_plus}"
        )));
    }
    let red = -p_plus.ln();
    let yellow = -(1.0 - p_plus).ln();
    Ok((red, yellow, 0.5 * (red + yellow)))
}

/// The surface sampled at p in {0.001, ..., 0.999}: rows of
/// (p_plus, red, yellow, blue).
pub fn surface_grid() -> Vec<(f64, f64, f64, f64)> {
    (1..=999)
        .map(|i| {
            let p = i as f64 / 1000.0;
            let (r, y, b) = agt_sgt_surface(p).expect("grid point inside (0,1)");
            (p, r, y, b)
        })
        .collect()
}
