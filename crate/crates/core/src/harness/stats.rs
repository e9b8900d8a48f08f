use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean, sample SD and a t-based confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub confidence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Welch's unequal-variance t-test plus Cohen's d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub mean_diff: f64,
}

fn t_dist(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom")
}

impl SummaryStats {
    /// Builds the summary from already reduced statistics.
    pub fn from_moments(mean: f64, sd: f64, n: usize, confidence: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewSamples { need: 2, got: n });
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::Config(format!("confidence {confidence} outside (0, 1)")));
        }
        if sd.is_nan() || sd < 0.0 || !mean.is_finite() {
            return Err(Error::NonFinite("summary statistics".into()));
        }
        let q = t_dist((n - 1) as f64).inverse_cdf(0.5 + confidence / 2.0);
        let half = q * sd / (n as f64).sqrt();
        Ok(Self {
            mean,
            sd,
            n,
            confidence,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }

    pub fn overlaps(&self, other: &SummaryStats) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub fn summarize(values: &[f64], confidence: f64) -> Result<SummaryStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    SummaryStats::from_moments(mean, var.sqrt(), n, confidence)
}

/// Compares `a` against `b`; positive `t` means `a` has the larger mean.
pub fn welch_compare(a: &SummaryStats, b: &SummaryStats) -> Result<Comparison> {
    for s in [a, b] {
        if s.n < 2 {
            return Err(Error::TooFewSamples { need: 2, got: s.n });
        }
    }
    let (va, vb) = (a.sd * a.sd / a.n as f64, b.sd * b.sd / b.n as f64);
    let diff = a.mean - b.mean;
    let se2 = va + vb;
    if se2 == 0.0 {
        if diff != 0.0 {
            return Err(Error::Config("zero variance in both samples with differing means".into()));
        }
        return Ok(Comparison {
            t: 0.0,
            df: (a.n + b.n - 2) as f64,
            p_value: 1.0,
            cohens_d: 0.0,
            mean_diff: 0.0,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    let p_value = 2.0 * (1.0 - t_dist(df).cdf(t.abs()));
    let pooled = ((a.sd * a.sd + b.sd * b.sd) / 2.0).sqrt();
    Ok(Comparison {
        t,
        df,
        p_value,
        cohens_d: diff / pooled,
        mean_diff: diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(mean: f64, sd: f64) -> SummaryStats {
        SummaryStats::from_moments(mean, sd, 5, 0.95).unwrap()
    }

    #[test]
    fn constant_sample_has_zero_width_interval() {
        let st = summarize(&[3.5; 4], 0.95).unwrap();
        assert_eq!((st.mean, st.sd, st.ci_low, st.ci_high), (3.5, 0.0, 3.5, 3.5));
    }

    #[test]
    fn single_value_rejected() {
        assert!(matches!(summarize(&[1.0], 0.95), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn identical_samples_compare_to_zero() {
        let c = welch_compare(&s(10.0, 2.0), &s(10.0, 2.0)).unwrap();
        assert_eq!((c.t, c.cohens_d), (0.0, 0.0));
        assert!((c.p_value - 1.0).abs() < 1e-12);
        let z = welch_compare(&s(1.0, 0.0), &s(1.0, 0.0)).unwrap();
        assert_eq!(z.t, 0.0);
    }

    #[test]
    fn sign_follows_ordering() {
        let ab = welch_compare(&s(12.0, 1.0), &s(10.0, 3.0)).unwrap();
        let ba = welch_compare(&s(10.0, 3.0), &s(12.0, 1.0)).unwrap();
        assert!(ab.t > 0.0 && ba.t < 0.0);
        assert_eq!(ab.df, ba.df);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn order_of_values_does_not_matter() {
        let a = summarize(&[1.0, 4.0, 2.5, 9.0], 0.95).unwrap();
        let b = summarize(&[9.0, 2.5, 1.0, 4.0], 0.95).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12 && (a.sd - b.sd).abs() < 1e-12);
    }
}
