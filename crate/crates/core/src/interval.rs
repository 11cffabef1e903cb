//! Per-category probabilities from a (mean, scale) estimate.
//!
//! The exact route evaluates the error model's CDF at each category's
//! bounds and takes differences, excluding the mass outside the quality
//! range; a unit-sum normalization then turns the truncated masses into a
//! proper distribution. The density route instead evaluates the Gaussian
//! density at each category center, which over-concentrates for small
//! scales. A K-component mixture sums weighted CDF differences before
//! normalizing.

use serde::{Deserialize, Serialize};

use crate::dist::{
    gaussian_cdf, gaussian_pdf, laplace_cdf, laplace_pdf, DistFamily, GaussianParams,
    LaplaceParams,
};
use crate::error::{Error, Result};
use crate::scheme::CategoryScheme;

/// Scale estimates are floored here before any CDF evaluation; below this
/// the interval differences collapse to 0/0 under normalization.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// One mixture component: location, scale, and convex weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: f64,
    pub scale: f64,
    pub weight: f64,
}

/// A model's predictive output for one sample: location/scale estimate,
/// normalized per-category probabilities, and optional mixture components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    /// Absent for heads that do not estimate a scale (plain regression,
    /// classification).
    pub scale: Option<f64>,
    pub family: DistFamily,
    pub probs: Vec<f64>,
    pub components: Option<Vec<MixtureComponent>>,
}

impl PredictiveDistribution {
    /// Highest category probability; the confidence measure used by the
    /// calibration metrics.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks the unit-sum and range invariants (1e-12 tolerance).
    pub fn check_invariants(&self) -> Result<()> {
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("probability outside [0, 1]".into()));
        }
        if let Some(components) = &self.components {
            let wsum: f64 = components.iter().map(|c| c.weight).sum();
            if (wsum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "mixture weights sum to {wsum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

fn cdf(z: f64, mean: f64, scale: f64, family: DistFamily) -> f64 {
    match family {
        DistFamily::Gaussian => gaussian_cdf(
            z,
            &GaussianParams {
                mean,
                std_dev: scale,
            },
        ),
        DistFamily::Laplace => laplace_cdf(
            z,
            &LaplaceParams {
                location: mean,
                scale,
            },
        ),
    }
}

fn pdf(z: f64, mean: f64, scale: f64, family: DistFamily) -> f64 {
    match family {
        DistFamily::Gaussian => gaussian_pdf(
            z,
            &GaussianParams {
                mean,
                std_dev: scale,
            },
        ),
        DistFamily::Laplace => laplace_pdf(
            z,
            &LaplaceParams {
                location: mean,
                scale,
            },
        ),
    }
}

fn check_scale(scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    Ok(scale.max(SIGMA_FLOOR))
}

/// Raw (unnormalized) interval probabilities F(u_c) - F(l_c) per category.
/// Mass outside the quality range is excluded, so the sum is at most 1.
pub fn interval_probs_raw(
    mean: f64,
    scale: f64,
    scheme: &CategoryScheme,
    family: DistFamily,
) -> Result<Vec<f64>> {
    let scale = check_scale(scale)?;
    Ok(scheme
        .categories()
        .map(|c| {
            let (l, u) = scheme.bounds(c);
            (cdf(u, mean, scale, family) - cdf(l, mean, scale, family)).max(0.0)
        })
        .collect())
}

/// Unit-sum normalization p_c = raw_c / sum(raw).
pub fn normalize_probs(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("no probabilities to normalize".into()));
    }
    if raw.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::InvalidParameter(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(raw.iter().map(|p| p / sum).collect())
}

/// Exact per-category probabilities: CDF differences then normalization.
pub fn interval_probs(
    mean: f64,
    scale: f64,
    scheme: &CategoryScheme,
    family: DistFamily,
) -> Result<Vec<f64>> {
    normalize_probs(&interval_probs_raw(mean, scale, scheme, family)?)
}

/// Density-approximation probabilities: Gaussian density at each category
/// center, normalized to unit sum.
pub fn pdf_prob_probs(mean: f64, scale: f64, scheme: &CategoryScheme) -> Result<Vec<f64>> {
    let scale = check_scale(scale)?;
    let dens: Vec<f64> = scheme
        .categories()
        .map(|c| pdf(scheme.center(c), mean, scale, DistFamily::Gaussian))
        .collect();
    normalize_probs(&dens)
}

/// Mixture probabilities: weighted CDF differences summed over components,
/// then normalized.
pub fn mixture_probs(
    components: &[MixtureComponent],
    scheme: &CategoryScheme,
    family: DistFamily,
) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(Error::EmptyInput("mixture needs at least one component".into()));
    }
    let wsum: f64 = components.iter().map(|c| c.weight).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "mixture weights sum to {wsum}, expected 1"
        )));
    }
    let mut raw = vec![0.0; scheme.len()];
    for comp in components {
        let part = interval_probs_raw(comp.mean, comp.scale, scheme, family)?;
        for (r, p) in raw.iter_mut().zip(part.iter()) {
            *r += comp.weight * p;
        }
    }
    normalize_probs(&raw)
}

/// Normalized probabilities together with their analytic derivatives.
#[derive(Debug, Clone)]
pub struct IntervalGrad {
    pub probs: Vec<f64>,
    /// d p_c / d mean
    pub d_mean: Vec<f64>,
    /// d p_c / d scale (zero when the scale sits below the floor)
    pub d_scale: Vec<f64>,
}

/// Analytic gradients of the normalized interval probabilities.
///
/// Uses dF/dmean = -pdf(z) and dF/dscale = -pdf(z) (z - mean) / scale,
/// which hold for both families, propagated through the CDF differences
/// and the normalization quotient.
pub fn interval_probs_grad(
    mean: f64,
    scale: f64,
    scheme: &CategoryScheme,
    family: DistFamily,
) -> Result<IntervalGrad> {
    let clamped = !(scale > SIGMA_FLOOR);
    let scale_eff = check_scale(scale)?;
    let n = scheme.len();

    let mut raw = vec![0.0; n];
    let mut draw_mean = vec![0.0; n];
    let mut draw_scale = vec![0.0; n];
    for (i, c) in scheme.categories().enumerate() {
        let (l, u) = scheme.bounds(c);
        raw[i] = (cdf(u, mean, scale_eff, family) - cdf(l, mean, scale_eff, family)).max(0.0);
        let pdf_u = pdf(u, mean, scale_eff, family);
        let pdf_l = pdf(l, mean, scale_eff, family);
        draw_mean[i] = -(pdf_u - pdf_l);
        draw_scale[i] = -(pdf_u * (u - mean) - pdf_l * (l - mean)) / scale_eff;
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let probs: Vec<f64> = raw.iter().map(|r| r / sum).collect();
    let dsum_mean: f64 = draw_mean.iter().sum();
    let dsum_scale: f64 = draw_scale.iter().sum();

    let d_mean: Vec<f64> = (0..n)
        .map(|i| (draw_mean[i] - probs[i] * dsum_mean) / sum)
        .collect();
    let d_scale: Vec<f64> = if clamped {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|i| (draw_scale[i] - probs[i] * dsum_scale) / sum)
            .collect()
    };

    Ok(IntervalGrad {
        probs,
        d_mean,
        d_scale,
    })
}

/// Analytic gradients of the density-approximation probabilities.
pub fn pdf_prob_grad(mean: f64, scale: f64, scheme: &CategoryScheme) -> Result<IntervalGrad> {
    let clamped = !(scale > SIGMA_FLOOR);
    let scale_eff = check_scale(scale)?;
    let n = scheme.len();

    let mut dens = vec![0.0; n];
    let mut dd_mean = vec![0.0; n];
    let mut dd_scale = vec![0.0; n];
    for (i, c) in scheme.categories().enumerate() {
        let y = scheme.center(c);
        let d = pdf(y, mean, scale_eff, DistFamily::Gaussian);
        let t = (y - mean) / scale_eff;
        dens[i] = d;
        dd_mean[i] = d * t / scale_eff;
        dd_scale[i] = d * (t * t - 1.0) / scale_eff;
    }
    let sum: f64 = dens.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let probs: Vec<f64> = dens.iter().map(|d| d / sum).collect();
    let dsum_mean: f64 = dd_mean.iter().sum();
    let dsum_scale: f64 = dd_scale.iter().sum();

    let d_mean: Vec<f64> = (0..n)
        .map(|i| (dd_mean[i] - probs[i] * dsum_mean) / sum)
        .collect();
    let d_scale: Vec<f64> = if clamped {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|i| (dd_scale[i] - probs[i] * dsum_scale) / sum)
            .collect()
    };

    Ok(IntervalGrad {
        probs,
        d_mean,
        d_scale,
    })
}

/// Per-component gradients of normalized mixture probabilities.
#[derive(Debug, Clone)]
pub struct MixtureGrad {
    pub probs: Vec<f64>,
    /// [component][category] d p_c / d mean_k
    pub d_mean: Vec<Vec<f64>>,
    /// [component][category] d p_c / d scale_k
    pub d_scale: Vec<Vec<f64>>,
    /// [component][category] d p_c / d weight_k
    pub d_weight: Vec<Vec<f64>>,
}

/// Analytic gradients of the normalized mixture probabilities with respect
/// to every component's mean, scale, and weight.
pub fn mixture_probs_grad(
    components: &[MixtureComponent],
    scheme: &CategoryScheme,
    family: DistFamily,
) -> Result<MixtureGrad> {
    if components.is_empty() {
        return Err(Error::EmptyInput("mixture needs at least one component".into()));
    }
    let n = scheme.len();
    let k = components.len();

    // per-component raw interval probs and their local derivatives
    let mut comp_raw = vec![vec![0.0; n]; k];
    let mut comp_dmean = vec![vec![0.0; n]; k];
    let mut comp_dscale = vec![vec![0.0; n]; k];
    for (kk, comp) in components.iter().enumerate() {
        let clamped = !(comp.scale > SIGMA_FLOOR);
        let scale_eff = check_scale(comp.scale)?;
        for (i, c) in scheme.categories().enumerate() {
            let (l, u) = scheme.bounds(c);
            comp_raw[kk][i] = (cdf(u, comp.mean, scale_eff, family)
                - cdf(l, comp.mean, scale_eff, family))
            .max(0.0);
            let pdf_u = pdf(u, comp.mean, scale_eff, family);
            let pdf_l = pdf(l, comp.mean, scale_eff, family);
            comp_dmean[kk][i] = -(pdf_u - pdf_l);
            comp_dscale[kk][i] = if clamped {
                0.0
            } else {
                -(pdf_u * (u - comp.mean) - pdf_l * (l - comp.mean)) / scale_eff
            };
        }
    }

    let mut raw = vec![0.0; n];
    for (kk, comp) in components.iter().enumerate() {
        for i in 0..n {
            raw[i] += comp.weight * comp_raw[kk][i];
        }
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let probs: Vec<f64> = raw.iter().map(|r| r / sum).collect();

    let quotient = |draw: &[f64], probs: &[f64]| -> Vec<f64> {
        let dsum: f64 = draw.iter().sum();
        (0..n).map(|i| (draw[i] - probs[i] * dsum) / sum).collect()
    };

    let mut d_mean = Vec::with_capacity(k);
    let mut d_scale = Vec::with_capacity(k);
    let mut d_weight = Vec::with_capacity(k);
    for (kk, comp) in components.iter().enumerate() {
        let draw_mean: Vec<f64> = (0..n).map(|i| comp.weight * comp_dmean[kk][i]).collect();
        let draw_scale: Vec<f64> = (0..n).map(|i| comp.weight * comp_dscale[kk][i]).collect();
        let draw_weight: Vec<f64> = comp_raw[kk].clone();
        d_mean.push(quotient(&draw_mean, &probs));
        d_scale.push(quotient(&draw_scale, &probs));
        d_weight.push(quotient(&draw_weight, &probs));
    }

    Ok(MixtureGrad {
        probs,
        d_mean,
        d_scale,
        d_weight,
    })
}
