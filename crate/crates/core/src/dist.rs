//! Special functions and the two error-model distributions.
//!
//! Everything here is a pure function over 64-bit floats. The error model
//! treats an annotator's latent opinion as Gaussian (or Laplace) noise
//! around a true quality value; the CDFs below are what turns a (mean,
//! scale) estimate into exact per-interval probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family tag selecting which error model backs CDF evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistFamily {
    Gaussian,
    Laplace,
}

/// Gaussian error model: mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub std_dev: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian mean must be finite, got {mean}"
            )));
        }
        if !(std_dev > 0.0) || !std_dev.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian std dev must be positive, got {std_dev}"
            )));
        }
        Ok(GaussianParams { mean, std_dev })
    }
}

/// Laplace error model: location and scale (diversity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub location: f64,
    pub scale: f64,
}

impl LaplaceParams {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "laplace location must be finite, got {location}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "laplace scale must be positive, got {scale}"
            )));
        }
        Ok(LaplaceParams { location, scale })
    }
}

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian CDF F(z) = (1 + erf((z - mean) / (std_dev * sqrt(2)))) / 2,
/// clamped to [0, 1] to absorb rounding at extreme arguments.
pub fn gaussian_cdf(z: f64, p: &GaussianParams) -> f64 {
    let t = (z - p.mean) / (p.std_dev * SQRT_2);
    (0.5 * (1.0 + erf(t))).clamp(0.0, 1.0)
}

/// Laplace CDF F(z) = (1 + sgn(z - loc) * (1 - exp(-|z - loc| / scale))) / 2.
/// Continuous at z = loc, clamped to [0, 1].
pub fn laplace_cdf(z: f64, p: &LaplaceParams) -> f64 {
    let d = z - p.location;
    let tail = 1.0 - (-d.abs() / p.scale).exp();
    (0.5 * (1.0 + d.signum() * tail)).clamp(0.0, 1.0)
}

/// Log of the Gaussian density. The density itself can exceed 1 for small
/// scales, which is exactly the over-confidence pathology of density-based
/// likelihoods on narrow intervals.
pub fn gaussian_logpdf(z: f64, p: &GaussianParams) -> f64 {
    let t = (z - p.mean) / p.std_dev;
    -0.5 * t * t - p.std_dev.ln() - LN_SQRT_2PI
}

/// Gaussian density exp(gaussian_logpdf).
pub fn gaussian_pdf(z: f64, p: &GaussianParams) -> f64 {
    gaussian_logpdf(z, p).exp()
}

/// Log of the Laplace density exp(-|z - loc| / scale) / (2 scale).
pub fn laplace_logpdf(z: f64, p: &LaplaceParams) -> f64 {
    -(z - p.location).abs() / p.scale - (2.0 * p.scale).ln()
}

/// Laplace density exp(laplace_logpdf).
pub fn laplace_pdf(z: f64, p: &LaplaceParams) -> f64 {
    laplace_logpdf(z, p).exp()
}

//////////////////////////////////////////////////////////////////////////
// The erf implementation below follows the FreeBSD msun s_erf.c rational
// approximations as carried into the Go standard library (erf.go).
//
// ====================================================
// Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//
// Developed at SunPro, a Sun Microsystems, Inc. business.
// Permission to use, copy, modify, and distribute this
// software is freely granted, provided that this notice
// is preserved.
// ====================================================
//////////////////////////////////////////////////////////////////////////

const ERX: f64 = 8.45062911510467529297e-01;

// |x| < 0.84375
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// 0.84375 <= |x| < 1.25
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// 1.25 <= |x| < 1/0.35
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// 1/0.35 <= |x| < 6
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const VERY_TINY: f64 = 2.848094538889218e-306;
const SMALL: f64 = 1.0 / ((1u64 << 28) as f64);

/// Error function erf(z) = (2/sqrt(pi)) * integral of exp(-t^2) over [0, z].
///
/// Odd and increasing with range (-1, 1); saturates to +-1.0 in double
/// precision beyond |z| ~ 5.9. Accurate to well under 1e-15 absolute.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return -1.0;
    }
    let sign = x < 0.0;
    let x = x.abs();
    if x < 0.84375 {
        let temp = if x < SMALL {
            if x < VERY_TINY {
                0.125 * (8.0 * x + EFX8 * x) // avoid underflow
            } else {
                x + EFX * x
            }
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            x + x * (r / s)
        };
        return if sign { -temp } else { temp };
    }
    if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        return if sign { -ERX - p / q } else { ERX + p / q };
    }
    if x >= 6.0 {
        return if sign { -1.0 } else { 1.0 };
    }
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (
            RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
            1.0 + s
                * (SA1
                    + s * (SA2
                        + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
        )
    } else {
        (
            RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
            1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
        )
    };
    // pseudo-single precision split keeps exp arguments exactly representable
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    let v = (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp();
    if sign {
        v / x - 1.0
    } else {
        1.0 - v / x
    }
}
