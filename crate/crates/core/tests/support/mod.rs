//! Independent numeric oracles for the acceptance suite.
//!
//! Nothing here touches the library's own special-function code: the error
//! function comes from its Maclaurin series (small arguments) or the
//! Legendre continued fraction for erfc (large arguments), and interval
//! probabilities come from adaptive Simpson quadrature of the raw density
//! formulas.

/// Error function by series/continued fraction, accurate to ~1e-15.
pub fn erf_oracle(z: f64) -> f64 {
    if z < 0.0 {
        return -erf_oracle(-z);
    }
    if z <= 2.0 {
        erf_series(z)
    } else {
        1.0 - erfc_continued_fraction(z)
    }
}

/// Maclaurin series 2/sqrt(pi) sum (-1)^n z^(2n+1) / (n! (2n+1)).
pub fn erf_series(z: f64) -> f64 {
    let mut term = z;
    let mut sum = z;
    let mut n = 1usize;
    while n < 200 {
        term *= -z * z / n as f64;
        let contribution = term / (2 * n + 1) as f64;
        sum += contribution;
        if contribution.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
        n += 1;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
/// for z > 0, evaluated by the modified Lentz algorithm.
pub fn erfc_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f: f64 = z.max(TINY);
    let mut c: f64 = f;
    let mut d: f64 = 0.0;
    for n in 1..=300 {
        let a = n as f64 / 2.0;
        // continued-fraction step: b = z, a_n = n/2
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / std::f64::consts::PI.sqrt() / f
}

/// Recursive adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Gaussian density written out directly.
pub fn gaussian_density(z: f64, mean: f64, sd: f64) -> f64 {
    let t = (z - mean) / sd;
    (-0.5 * t * t).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Laplace density written out directly.
pub fn laplace_density(z: f64, loc: f64, scale: f64) -> f64 {
    (-(z - loc).abs() / scale).exp() / (2.0 * scale)
}

/// Integral of the chosen density over [lo, hi]; Laplace integrals split at
/// the location kink.
pub fn density_integral(
    family: catreg_core::dist::DistFamily,
    mean: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> f64 {
    use catreg_core::dist::DistFamily;
    match family {
        DistFamily::Gaussian => {
            adaptive_simpson(&|z| gaussian_density(z, mean, scale), lo, hi, tol)
        }
        DistFamily::Laplace => {
            if mean > lo && mean < hi {
                adaptive_simpson(&|z| laplace_density(z, mean, scale), lo, mean, tol / 2.0)
                    + adaptive_simpson(&|z| laplace_density(z, mean, scale), mean, hi, tol / 2.0)
            } else {
                adaptive_simpson(&|z| laplace_density(z, mean, scale), lo, hi, tol)
            }
        }
    }
}

/// Central finite difference of a scalar function.
pub fn central_difference(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
