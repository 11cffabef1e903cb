//! Metrics and significance statistics.
//!
//! Accuracy is the relaxed variant: a prediction counts as correct when it
//! falls anywhere inside the closed span between the two observed labels'
//! intervals, including skipped middle categories. Absolute error compares
//! the estimated mean against the average of the two label centers.
//! Calibration is summarized by expected/maximum calibration error over
//! confidence bins, and method comparisons use a one-tail Welch t-test on
//! per-sample absolute-error populations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{Category, CategoryScheme};

/// One evaluated test sample: prediction plus its two observed labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mean: f64,
    pub probs: Vec<f64>,
    pub first_label: Category,
    pub second_label: Category,
}

impl EvalRecord {
    /// Average of the two label centers, the test-time regression target.
    pub fn target(&self, scheme: &CategoryScheme) -> f64 {
        0.5 * (scheme.center(self.first_label) + scheme.center(self.second_label))
    }

    /// Highest category probability.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_certain(&self) -> bool {
        self.first_label == self.second_label
    }

    /// Relaxed hit: the estimated mean falls in the union span of the two
    /// label intervals (middle categories between them count).
    pub fn is_hit(&self, scheme: &CategoryScheme) -> bool {
        let (l1, u1) = scheme.bounds(self.first_label);
        let (l2, u2) = scheme.bounds(self.second_label);
        let lo = l1.min(l2);
        let hi = u1.max(u2);
        self.mean > lo && self.mean <= hi
    }

    pub fn abs_error(&self, scheme: &CategoryScheme) -> f64 {
        (self.target(scheme) - self.mean).abs()
    }
}

/// Fraction of records whose mean lands in the span of their two labels.
pub fn relaxed_accuracy(records: &[EvalRecord], scheme: &CategoryScheme) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records".into()));
    }
    let hits = records.iter().filter(|r| r.is_hit(scheme)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Mean, standard deviation, and median of a value list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std_dev: f64,
    pub median: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(SummaryStats {
        mean,
        std_dev: var.sqrt(),
        median,
    })
}

/// Statistics of |target - mean| over the records.
pub fn abs_error_stats(records: &[EvalRecord], scheme: &CategoryScheme) -> Result<SummaryStats> {
    let errors: Vec<f64> = records.iter().map(|r| r.abs_error(scheme)).collect();
    summary_stats(&errors)
}

fn bin_discrepancies(
    records: &[EvalRecord],
    scheme: &CategoryScheme,
    bins: usize,
) -> Result<Vec<(usize, f64)>> {
    if bins < 1 {
        return Err(Error::InvalidParameter("bin count must be >= 1".into()));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("no records".into()));
    }
    // bin m covers ((m-1)/M, m/M]
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for r in records {
        let conf = r.confidence();
        let idx = if conf <= 0.0 {
            0
        } else {
            ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1
        };
        count[idx] += 1;
        conf_sum[idx] += conf;
        hit_sum[idx] += if r.is_hit(scheme) { 1.0 } else { 0.0 };
    }
    Ok((0..bins)
        .map(|m| {
            if count[m] == 0 {
                (0, 0.0)
            } else {
                let acc = hit_sum[m] / count[m] as f64;
                let conf = conf_sum[m] / count[m] as f64;
                (count[m], (acc - conf).abs())
            }
        })
        .collect())
}

/// Expected calibration error: count-weighted mean of per-bin
/// |accuracy - confidence| discrepancies. Empty bins contribute zero.
pub fn ece(records: &[EvalRecord], scheme: &CategoryScheme, bins: usize) -> Result<f64> {
    let d = bin_discrepancies(records, scheme, bins)?;
    let n = records.len() as f64;
    Ok(d.iter().map(|(c, gap)| *c as f64 / n * gap).sum())
}

/// Maximum calibration error: the worst per-bin discrepancy over nonempty
/// bins.
pub fn mce(records: &[EvalRecord], scheme: &CategoryScheme, bins: usize) -> Result<f64> {
    let d = bin_discrepancies(records, scheme, bins)?;
    Ok(d.iter()
        .filter(|(c, _)| *c > 0)
        .map(|(_, gap)| *gap)
        .fold(0.0, f64::max))
}

/// One confidence bin of a reliability table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

/// Reliability table over (confidence, hit) pairs, with the same bin
/// convention as [`ece`].
pub fn calibration_table(pairs: &[(f64, bool)], bins: usize) -> Result<Vec<CalibrationBin>> {
    if bins < 1 {
        return Err(Error::InvalidParameter("bin count must be >= 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no predictions".into()));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hit_sum = vec![0.0; bins];
    for (conf, hit) in pairs {
        let idx = if *conf <= 0.0 {
            0
        } else {
            ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1
        };
        count[idx] += 1;
        conf_sum[idx] += conf;
        hit_sum[idx] += if *hit { 1.0 } else { 0.0 };
    }
    Ok((0..bins)
        .map(|m| CalibrationBin {
            lower: m as f64 / bins as f64,
            upper: (m + 1) as f64 / bins as f64,
            count: count[m],
            mean_confidence: if count[m] > 0 {
                conf_sum[m] / count[m] as f64
            } else {
                0.0
            },
            accuracy: if count[m] > 0 {
                hit_sum[m] / count[m] as f64
            } else {
                0.0
            },
        })
        .collect())
}

/// ECE/MCE from (confidence, hit) pairs.
pub fn calibration_errors(pairs: &[(f64, bool)], bins: usize) -> Result<(f64, f64)> {
    let table = calibration_table(pairs, bins)?;
    let n = pairs.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    for bin in &table {
        if bin.count > 0 {
            let gap = (bin.accuracy - bin.mean_confidence).abs();
            ece += bin.count as f64 / n * gap;
            mce = mce.max(gap);
        }
    }
    Ok((ece, mce))
}

/// Inverse-distance confidence for heads without a probability output:
/// p(c) proportional to 1 / max(|mean - center_c|, 1e-6), normalized.
pub fn regression_confidence(mean: f64, scheme: &CategoryScheme) -> Vec<f64> {
    const EPS: f64 = 1e-6;
    let inv: Vec<f64> = scheme
        .categories()
        .map(|c| 1.0 / (mean - scheme.center(c)).abs().max(EPS))
        .collect();
    let sum: f64 = inv.iter().sum();
    inv.into_iter().map(|v| v / sum).collect()
}

/// Label rows of the confusion matrix: the four certain labels plus each
/// unordered disagreeing pair observed in the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelRow {
    Certain(Category),
    Uncertain(Category, Category),
}

/// Confusion matrix with label rows and predicted-category columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<LabelRow>,
    /// counts[row][predicted category]
    pub counts: Vec<Vec<usize>>,
    pub column_names: Vec<String>,
    pub row_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn row_sum(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    /// Rows as CSV, one line per label row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for name in &self.column_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in self.row_names.iter().enumerate() {
            out.push_str(name);
            for c in &self.counts[i] {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the confusion matrix from the categorization of each record's
/// estimated mean.
pub fn confusion_matrix(records: &[EvalRecord], scheme: &CategoryScheme) -> ConfusionMatrix {
    let mut table: BTreeMap<LabelRow, Vec<usize>> = BTreeMap::new();
    // certain rows always present, in category order
    for c in scheme.categories() {
        table.insert(LabelRow::Certain(c), vec![0; scheme.len()]);
    }
    for r in records {
        let row = if r.is_certain() {
            LabelRow::Certain(r.first_label)
        } else {
            let lo = r.first_label.min(r.second_label);
            let hi = r.first_label.max(r.second_label);
            LabelRow::Uncertain(lo, hi)
        };
        let predicted = scheme.category_of(r.mean);
        table.entry(row).or_insert_with(|| vec![0; scheme.len()])[predicted.0] += 1;
    }
    let rows: Vec<LabelRow> = table.keys().cloned().collect();
    let counts: Vec<Vec<usize>> = table.values().cloned().collect();
    let row_names = rows
        .iter()
        .map(|r| match r {
            LabelRow::Certain(c) => scheme.name(*c).to_string(),
            LabelRow::Uncertain(a, b) => format!("{}/{}", scheme.name(*a), scheme.name(*b)),
        })
        .collect();
    let column_names = scheme
        .categories()
        .map(|c| scheme.name(c).to_string())
        .collect();
    ConfusionMatrix {
        rows,
        counts,
        column_names,
        row_names,
    }
}

/// Metrics over one record subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMetrics {
    pub count: usize,
    pub accuracy: f64,
    pub abs_error: SummaryStats,
}

fn subgroup_metrics(records: &[EvalRecord], scheme: &CategoryScheme) -> Result<SubgroupMetrics> {
    Ok(SubgroupMetrics {
        count: records.len(),
        accuracy: relaxed_accuracy(records, scheme)?,
        abs_error: abs_error_stats(records, scheme)?,
    })
}

/// Full evaluation report: overall metrics, calibration, confusion matrix,
/// and the certain/uncertain subgroup breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub count: usize,
    pub accuracy: f64,
    pub abs_error: SummaryStats,
    pub ece: f64,
    pub mce: f64,
    pub confusion: ConfusionMatrix,
    pub certain: Option<SubgroupMetrics>,
    pub uncertain: Option<SubgroupMetrics>,
}

/// Number of confidence bins used for the calibration metrics.
pub const CALIBRATION_BINS: usize = 10;

pub fn metrics_report(records: &[EvalRecord], scheme: &CategoryScheme) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records".into()));
    }
    let certain: Vec<EvalRecord> = records.iter().filter(|r| r.is_certain()).cloned().collect();
    let uncertain: Vec<EvalRecord> = records
        .iter()
        .filter(|r| !r.is_certain())
        .cloned()
        .collect();
    Ok(MetricsReport {
        count: records.len(),
        accuracy: relaxed_accuracy(records, scheme)?,
        abs_error: abs_error_stats(records, scheme)?,
        ece: ece(records, scheme, CALIBRATION_BINS)?,
        mce: mce(records, scheme, CALIBRATION_BINS)?,
        confusion: confusion_matrix(records, scheme),
        certain: if certain.is_empty() {
            None
        } else {
            Some(subgroup_metrics(&certain, scheme)?)
        },
        uncertain: if uncertain.is_empty() {
            None
        } else {
            Some(subgroup_metrics(&uncertain, scheme)?)
        },
    })
}

/// Result of the one-tail Welch two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// P(mean of the first population >= mean of the second) under H0.
    pub p_value: f64,
    pub significant_05: bool,
    pub significant_10: bool,
}

/// One-tail Welch t-test for H1: mean(first) < mean(second). Unequal
/// variances, Welch-Satterthwaite degrees of freedom.
pub fn ttest_one_tail(first: &[f64], second: &[f64]) -> Result<TTestResult> {
    if first.len() < 2 || second.len() < 2 {
        return Err(Error::InsufficientData(
            "t-test needs at least two values per sample".into(),
        ));
    }
    let na = first.len() as f64;
    let nb = second.len() as f64;
    let mean_a = first.iter().sum::<f64>() / na;
    let mean_b = second.iter().sum::<f64>() / nb;
    let var_a = first.iter().map(|v| (v - mean_a).powi(2)).sum::<f64>() / (na - 1.0);
    let var_b = second.iter().map(|v| (v - mean_b).powi(2)).sum::<f64>() / (nb - 1.0);

    let se2 = var_a / na + var_b / nb;
    if se2 == 0.0 {
        // degenerate zero-variance inputs: exactly the null
        return Ok(TTestResult {
            t_statistic: 0.0,
            degrees_of_freedom: na + nb - 2.0,
            p_value: 0.5,
            significant_05: false,
            significant_10: false,
        });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2
        / ((var_a / na).powi(2) / (na - 1.0) + (var_b / nb).powi(2) / (nb - 1.0));
    let p = student_t_cdf(t, df);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant_05: p < 0.05,
        significant_10: p < 0.10,
    })
}

/// Pearson correlation coefficient.
pub fn pearson_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("correlation needs >= 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::InsufficientData("zero variance input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

// ---------------------------------------------------------------------------
// Student's t distribution via the regularized incomplete beta function.
// ---------------------------------------------------------------------------

/// CDF of Student's t distribution with (possibly fractional) df degrees of
/// freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * incomplete_beta_regularized(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

/// ln Gamma via the Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
pub fn incomplete_beta_regularized(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // symmetry keeps the continued fraction in its fast-converging region
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - incomplete_beta_regularized(b, a, 1.0 - x)
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::Category;

    fn scheme() -> CategoryScheme {
        CategoryScheme::quality_default()
    }

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    fn rec(mean: f64, probs: Vec<f64>, a1: usize, a2: usize) -> EvalRecord {
        EvalRecord {
            mean,
            probs,
            first_label: Category(a1),
            second_label: Category(a2),
        }
    }

    #[test]
    fn relaxed_accuracy_span_semantics() {
        let s = scheme();
        // a1=a2=Fair, mean 0.3 -> inside (0.25, 0.5]
        assert!(rec(0.3, vec![], 1, 1).is_hit(&s));
        // a1=Poor, a2=Good, mean 0.45 -> inside (0, 0.75], skipped Fair counts
        assert!(rec(0.45, vec![], 0, 2).is_hit(&s));
        // a1=a2=Excellent, mean 0.74 -> outside (0.75, 1]
        assert!(!rec(0.74, vec![], 3, 3).is_hit(&s));
        // interval is open on the left
        assert!(!rec(0.25, vec![], 1, 1).is_hit(&s));
        assert!(rec(0.5, vec![], 1, 1).is_hit(&s));
    }

    #[test]
    fn relaxed_accuracy_reduces_to_exact_match_when_certain() {
        let s = scheme();
        let mut rng = crate::rng::Rng::seed_from_u64(7);
        for _ in 0..500 {
            let mean = rng.next_f64().clamp(1e-9, 1.0);
            let label = rng.next_index(4);
            let r = rec(mean, vec![], label, label);
            let exact = s.category_of(mean) == Category(label) && mean > s.lower(Category(label));
            assert_eq!(r.is_hit(&s), exact, "mean {mean} label {label}");
        }
    }

    #[test]
    fn abs_error_uses_label_center_average() {
        let s = scheme();
        // a1=Good, a2=Excellent -> target (0.625 + 0.875)/2 = 0.75
        let r = rec(0.7, vec![], 2, 3);
        assert_close(r.abs_error(&s), 0.05, 1e-12);

        let stats = summary_stats(&[0.1, 0.2, 0.6]).unwrap();
        assert_close(stats.mean, 0.3, 1e-12);
        assert_close(stats.median, 0.2, 1e-12);

        let all_exact = vec![rec(0.375, vec![], 1, 1), rec(0.625, vec![], 2, 2)];
        let st = abs_error_stats(&all_exact, &s).unwrap();
        assert_eq!((st.mean, st.std_dev, st.median), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ece_mce_single_bin_example() {
        let s = scheme();
        // ten records, conf 0.75 each, six correct
        let mut records = Vec::new();
        for i in 0..10 {
            let mean = if i < 6 { 0.3 } else { 0.9 }; // Fair hit / Excellent miss
            records.push(rec(mean, vec![0.05, 0.75, 0.15, 0.05], 1, 1));
        }
        let e = ece(&records, &s, 10).unwrap();
        let m = mce(&records, &s, 10).unwrap();
        assert_close(e, 0.15, 1e-12);
        assert_close(m, 0.15, 1e-12);
    }

    #[test]
    fn ece_zero_for_confident_correct() {
        let s = scheme();
        let records = vec![rec(0.3, vec![0.0, 1.0, 0.0, 0.0], 1, 1); 5];
        assert_close(ece(&records, &s, 10).unwrap(), 0.0, 1e-15);
        assert_close(mce(&records, &s, 10).unwrap(), 0.0, 1e-15);
    }

    #[test]
    fn ece_never_exceeds_mce() {
        let s = scheme();
        let mut rng = crate::rng::Rng::seed_from_u64(3);
        let records: Vec<EvalRecord> = (0..200)
            .map(|_| {
                let mean = rng.next_f64().clamp(1e-6, 1.0);
                let c = rng.next_index(4);
                let mut probs = vec![0.1, 0.1, 0.1, 0.1];
                probs[rng.next_index(4)] = 0.7;
                rec(mean, probs, c, rng.next_index(4))
            })
            .collect();
        for bins in [1, 5, 10, 20] {
            let e = ece(&records, &s, bins).unwrap();
            let m = mce(&records, &s, bins).unwrap();
            assert!(e <= m + 1e-12, "bins {bins}: ece {e} > mce {m}");
        }
        assert!(ece(&records, &s, 0).is_err());
    }

    #[test]
    fn calibration_table_matches_record_route() {
        let s = scheme();
        let mut rng = crate::rng::Rng::seed_from_u64(31);
        let records: Vec<EvalRecord> = (0..500)
            .map(|_| {
                let mean = rng.next_f64().clamp(1e-6, 1.0);
                rec(mean, regression_confidence(mean, &s), rng.next_index(4), rng.next_index(4))
            })
            .collect();
        let pairs: Vec<(f64, bool)> = records
            .iter()
            .map(|r| (r.confidence(), r.is_hit(&s)))
            .collect();
        let (e, m) = calibration_errors(&pairs, 10).unwrap();
        assert_close(e, ece(&records, &s, 10).unwrap(), 1e-12);
        assert_close(m, mce(&records, &s, 10).unwrap(), 1e-12);
        let table = calibration_table(&pairs, 10).unwrap();
        assert_eq!(table.len(), 10);
        assert_eq!(table.iter().map(|b| b.count).sum::<usize>(), 500);
    }

    #[test]
    fn regression_confidence_inverse_distance() {
        let s = scheme();
        let p = regression_confidence(0.5, &s);
        let expected = [0.125, 0.375, 0.375, 0.125];
        for (got, want) in p.iter().zip(expected.iter()) {
            assert_close(*got, *want, 1e-12);
        }
        // exactly on a center: the epsilon floor dominates
        let p = regression_confidence(0.125, &s);
        assert!(p[0] > 0.999);
        assert_close(p.iter().sum::<f64>(), 1.0, 1e-12);
    }

    #[test]
    fn confusion_matrix_rows_and_counts() {
        let s = scheme();
        let records = vec![
            rec(0.6, vec![], 2, 2),  // certain Good, predicted Good
            rec(0.55, vec![], 1, 2), // uncertain Fair/Good, predicted Good
            rec(0.55, vec![], 2, 1), // unordered: same row as above
            rec(0.1, vec![], 0, 3),  // uncertain Poor/Excellent, predicted Poor
        ];
        let m = confusion_matrix(&records, &s);
        // 4 certain rows + 2 observed uncertain pairs
        assert_eq!(m.rows.len(), 6);
        let good_row = m
            .rows
            .iter()
            .position(|r| *r == LabelRow::Certain(Category(2)))
            .unwrap();
        assert_eq!(m.counts[good_row][2], 1);
        let fair_good = m
            .rows
            .iter()
            .position(|r| *r == LabelRow::Uncertain(Category(1), Category(2)))
            .unwrap();
        assert_eq!(m.counts[fair_good][2], 2);
        let total: usize = (0..m.rows.len()).map(|r| m.row_sum(r)).sum();
        assert_eq!(total, records.len());
        let csv = m.to_csv();
        assert!(csv.starts_with("label,Poor,Fair,Good,Excellent\n"));
        assert!(csv.contains("Fair/Good,0,0,2,0"));
    }

    #[test]
    fn report_subgroups_decompose_accuracy() {
        let s = scheme();
        let mut rng = crate::rng::Rng::seed_from_u64(9);
        let records: Vec<EvalRecord> = (0..300)
            .map(|_| {
                let mean = rng.next_f64().clamp(1e-6, 1.0);
                let a1 = rng.next_index(4);
                let a2 = rng.next_index(4);
                rec(mean, regression_confidence(mean, &s), a1, a2)
            })
            .collect();
        let report = metrics_report(&records, &s).unwrap();
        let certain = report.certain.as_ref().unwrap();
        let uncertain = report.uncertain.as_ref().unwrap();
        assert_eq!(certain.count + uncertain.count, report.count);
        let weighted = (certain.count as f64 * certain.accuracy
            + uncertain.count as f64 * uncertain.accuracy)
            / report.count as f64;
        assert_close(report.accuracy, weighted, 1e-12);
    }

    #[test]
    fn t_cdf_against_reference_values() {
        // reference: SciPy 1.15 stats.t.cdf
        let cases = [
            (0.0, 5.0, 0.5),
            (1.0, 10.0, 0.829553433848970),
            (2.0, 5.0, 0.949030260585071),
            (-1.5, 20.0, 0.074617885584626),
            (2.5, 3.7, 0.964088988544087),
            (-0.8, 12.34, 0.219420323231696),
            (4.0, 50.0, 0.999895404876818),
            (-3.2, 7.5, 0.006867576931204),
        ];
        for (t, df, want) in cases {
            assert_close(student_t_cdf(t, df), want, 1e-10);
        }
    }

    #[test]
    fn welch_test_reference_case() {
        // reference: SciPy ttest_ind(equal_var=False, alternative='less')
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.5, 3.5, 4.5, 5.5, 8.0];
        let r = ttest_one_tail(&a, &b).unwrap();
        assert_close(r.t_statistic, -1.5267400734239474, 1e-12);
        assert_close(r.degrees_of_freedom, 7.416178869590252, 1e-9);
        assert_close(r.p_value, 0.08413981395043627, 1e-9);
        assert!(!r.significant_05);
        assert!(r.significant_10);
    }

    #[test]
    fn welch_test_null_and_swap() {
        let a = [1.0, 2.0, 3.0];
        let r = ttest_one_tail(&a, &a).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 0.5);

        // identical zero-variance inputs hit the degenerate convention
        let z = [2.0, 2.0, 2.0];
        let r = ttest_one_tail(&z, &z).unwrap();
        assert_eq!(r.p_value, 0.5);

        let b = [1.5, 2.5, 3.5, 4.0];
        let fwd = ttest_one_tail(&a, &b).unwrap();
        let rev = ttest_one_tail(&b, &a).unwrap();
        assert_close(fwd.p_value + rev.p_value, 1.0, 1e-12);

        assert!(ttest_one_tail(&[1.0], &a).is_err());
    }

    #[test]
    fn welch_test_detects_shift() {
        let mut rng = crate::rng::Rng::seed_from_u64(21);
        let a: Vec<f64> = (0..1000).map(|_| rng.gaussian(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.gaussian(0.0, 1.0)).collect();
        let r = ttest_one_tail(&a, &b).unwrap();
        assert!(r.p_value < 1e-6, "p {}", r.p_value);
        assert!(r.significant_05);
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert_close(pearson_correlation(&x, &y).unwrap(), 1.0, 1e-12);
        let yneg = [4.0, 3.0, 2.0, 1.0];
        assert_close(pearson_correlation(&x, &yneg).unwrap(), -1.0, 1e-12);
        assert!(pearson_correlation(&x, &[1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
