//! Group comparisons, effect sizes, sample-size projections, ROC analysis,
//! survival models and correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

mod compare;
mod correlation;
mod effect;
mod roc;
mod survival;

pub use compare::{anova_oneway, chi_square_2x2, paired_t, two_sample_t, AnovaResult, ChiSquareResult, TTest};
pub use correlation::{pearson, Correlation};
pub use effect::{
    cohens_d_independent, cohens_d_paired, enriched_sample_size, enrichment, min_sample_size, percentile,
    sample_size_constant, EnrichmentOptions, EnrichmentRow, SampleSize, SampleSizeOptions,
};
pub use roc::{roc, Orientation, RocResult};
pub use survival::{cox_univariate, kaplan_meier, log_rank, CoxResult, KmCurve, KmStep, LogRankResult};

/// Baseline and follow-up measurements of the same subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    pub baseline: Vec<f64>,
    pub followup: Vec<f64>,
    pub subject_ids: Vec<String>,
}

impl PairedSeries {
    pub fn new(baseline: Vec<f64>, followup: Vec<f64>) -> Result<Self> {
        if baseline.len() != followup.len() {
            return Err(Error::Dimension(format!(
                "{} baseline values but {} follow-up values",
                baseline.len(),
                followup.len()
            )));
        }
        if baseline.len() < 2 {
            return Err(Error::Input("paired series needs at least 2 subjects".into()));
        }
        let ids = (0..baseline.len()).map(|i| format!("s{i}")).collect();
        Ok(PairedSeries {
            baseline,
            followup,
            subject_ids: ids,
        })
    }

    /// Per-subject change `followup - baseline`.
    pub fn differences(&self) -> Vec<f64> {
        self.baseline.iter().zip(&self.followup).map(|(b, f)| f - b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    /// Months to event or censoring.
    pub time: f64,
    /// True when the event (conversion) was observed.
    pub event: bool,
    pub marker_positive: bool,
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (denominator `n - 1`).
pub(crate) fn variance(x: &[f64]) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub(crate) fn require_len(x: &[f64], min: usize, what: &str) -> Result<()> {
    if x.len() < min {
        return Err(Error::Input(format!("{what} needs at least {min} values, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Two-sided p-value of a Student t statistic.
pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

pub(crate) fn normal_two_sided(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    (2.0 * Normal::new(0.0, 1.0).expect("standard normal").sf(z.abs())).min(1.0)
}

pub(crate) fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(df).expect("positive degrees of freedom").sf(x)
}

/// `z` such that a two-sided normal interval has 95% coverage.
pub(crate) fn z95() -> f64 {
    normal_quantile(0.975)
}
