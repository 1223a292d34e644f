//! Empirical ROC curves, AUC with a DeLong interval, and the nearest-point
//! cutoff.

use serde::{Deserialize, Serialize};

use super::z95;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherIsPositive,
    LowerIsPositive,
}

impl std::str::FromStr for Orientation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "higher" | "higher_is_positive" => Ok(Orientation::HigherIsPositive),
            "lower" | "lower_is_positive" => Ok(Orientation::LowerIsPositive),
            other => Err(format!("unknown orientation `{other}` (expected higher or lower)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// Decision thresholds from strictest to most lenient. A subject is
    /// called positive when its score is at or beyond the threshold in the
    /// direction of `orientation`; thresholds sit midway between adjacent
    /// distinct scores, with the two infinite extremes.
    pub thresholds: Vec<f64>,
    pub sensitivities: Vec<f64>,
    pub specificities: Vec<f64>,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub optimal_cutoff: f64,
    pub optimal_sensitivity: f64,
    pub optimal_specificity: f64,
    pub orientation: Orientation,
}

impl RocResult {
    /// CSV rows `threshold,sensitivity,specificity`.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("threshold,sensitivity,specificity\n");
        for i in 0..self.thresholds.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.thresholds[i], self.sensitivities[i], self.specificities[i]
            ));
        }
        out
    }
}

/// Pair kernel: 1 if the positive outranks the negative, 1/2 on ties.
fn kernel(pos: f64, neg: f64) -> f64 {
    if pos > neg {
        1.0
    } else if pos == neg {
        0.5
    } else {
        0.0
    }
}

pub fn roc(scores: &[f64], labels: &[bool], orientation: Orientation) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("ROC scores must be finite".into()));
    }
    let sign = match orientation {
        Orientation::HigherIsPositive => 1.0,
        Orientation::LowerIsPositive => -1.0,
    };
    // oriented scores: larger means more positive
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| sign * s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| sign * s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Input("ROC analysis needs both positive and negative subjects".into()));
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);

    let mut distinct: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    let mut cuts = Vec::with_capacity(distinct.len() + 1);
    cuts.push(f64::INFINITY);
    for w in distinct.windows(2) {
        cuts.push(0.5 * (w[0] + w[1]));
    }
    cuts.push(f64::NEG_INFINITY);

    let mut sens = Vec::with_capacity(cuts.len());
    let mut spec = Vec::with_capacity(cuts.len());
    for &c in &cuts {
        sens.push(pos.iter().filter(|&&s| s >= c).count() as f64 / np);
        spec.push(neg.iter().filter(|&&s| s < c).count() as f64 / nn);
    }

    let mut auc = 0.0;
    for i in 1..cuts.len() {
        let dx = (1.0 - spec[i]) - (1.0 - spec[i - 1]);
        auc += dx * 0.5 * (sens[i] + sens[i - 1]);
    }

    // DeLong structural components
    let v10: Vec<f64> = pos.iter().map(|&x| neg.iter().map(|&y| kernel(x, y)).sum::<f64>() / nn).collect();
    let v01: Vec<f64> = neg.iter().map(|&y| pos.iter().map(|&x| kernel(x, y)).sum::<f64>() / np).collect();
    let sample_var = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let mu = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() as f64 - 1.0)
    };
    let var = sample_var(&v10) / np + sample_var(&v01) / nn;
    let half = z95() * var.max(0.0).sqrt();
    let auc_ci = ((auc - half).max(0.0), (auc + half).min(1.0));

    // nearest point to perfect classification, ties toward higher sensitivity
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..cuts.len() {
        let d = (1.0 - sens[i]).powi(2) + (1.0 - spec[i]).powi(2);
        if d < best_d || (d == best_d && sens[i] > sens[best]) {
            best = i;
            best_d = d;
        }
    }

    let thresholds: Vec<f64> = cuts.iter().map(|c| sign * c).collect();
    Ok(RocResult {
        optimal_cutoff: thresholds[best],
        optimal_sensitivity: sens[best],
        optimal_specificity: spec[best],
        thresholds,
        sensitivities: sens,
        specificities: spec,
        auc,
        auc_ci,
        orientation,
    })
}
