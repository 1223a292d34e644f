//! Browser demo: a small synthetic cohort, its ROI overlay on the template
//! mesh, a sparsity-weight sweep, and the ROC / Kaplan-Meier curves of the
//! resulting index. Every entry point returns JSON text.

use serde::Serialize;
use serde_json::json;
use umi_core::cohort::{Amyloid, Group, Timepoint};
use umi_core::pipeline::{sweep_lambda, SweepConfig};
use umi_core::roi::{extract_roi, RoiSettings};
use umi_core::solver::{decompose, default_lambda, LambdaChoice, SolverOptions};
use umi_core::stats::{kaplan_meier, log_rank, roc, Orientation, SurvivalRecord};
use umi_core::synth::{generate_synthetic, support_f1, SyntheticCohort, SyntheticSpec};
use umi_core::umi::{build_template, AtrophyTemplate};
use umi_core::LocalGroups;
use wasm_bindgen::prelude::*;

/// Synthetic defaults scaled down for single-threaded use in a page.
pub fn demo_spec() -> SyntheticSpec {
    SyntheticSpec {
        rings: 14,
        segments: 18,
        n_ad: 30,
        n_cu: 30,
        n_mci: 60,
        ..SyntheticSpec::default()
    }
}

#[derive(Serialize)]
struct Overlay {
    lambda: f64,
    rank_ad: usize,
    rank_cu: usize,
    neg_log_p: Vec<f64>,
    selected: Vec<bool>,
    truth: Vec<bool>,
    planted_f1: f64,
}

pub struct Demo {
    syn: SyntheticCohort,
    groups: LocalGroups,
    template: Option<AtrophyTemplate>,
}

fn err(e: umi_core::Error) -> String {
    e.to_string()
}

impl Demo {
    pub fn new(spec: &SyntheticSpec) -> Result<Demo, String> {
        let syn = generate_synthetic(spec).map_err(err)?;
        let groups = LocalGroups::identity(&syn.mesh);
        Ok(Demo {
            syn,
            groups,
            template: None,
        })
    }

    pub fn mesh_json(&self) -> String {
        json!({
            "positions": self.syn.mesh.positions,
            "triangles": self.syn.mesh.triangles,
        })
        .to_string()
    }

    /// Decomposes the AD and CU baselines at `factor` times the default
    /// weight, tests the low-rank parts and keeps the template for
    /// [`Demo::curves_json`].
    pub fn overlay_json(&mut self, factor: f64, n_perm: usize, threshold: f64) -> Result<String, String> {
        if !(factor > 0.0) {
            return Err("weight factor must be positive".into());
        }
        let mut ranks = [0; 2];
        let mut low = Vec::new();
        let mut lambda = 0.0;
        for (k, g) in [Group::AD, Group::CU].into_iter().enumerate() {
            let cols = self.syn.cohort.columns(g, None, Timepoint::Baseline);
            let a = self.syn.features.data.select_columns(cols.iter());
            lambda = factor * default_lambda(a.nrows(), a.ncols());
            let opts = SolverOptions {
                lambda: LambdaChoice::Fixed(lambda),
                ..SolverOptions::default()
            };
            let cfg = opts.config_for(&a, &self.groups).map_err(err)?;
            let res = decompose(&a, &self.groups, &cfg).map_err(err)?;
            ranks[k] = res.rank();
            low.push(res.low_rank);
        }
        let settings = RoiSettings {
            n_perm,
            threshold,
            ..RoiSettings::default()
        };
        let mask = extract_roi(&low[0], &low[1], &settings).map_err(err)?;
        self.template = if mask.count() > 0 {
            Some(build_template(&low[0], &low[1], &mask).map_err(err)?)
        } else {
            None
        };
        let out = Overlay {
            lambda,
            rank_ad: ranks[0],
            rank_cu: ranks[1],
            neg_log_p: mask.p_values.iter().map(|p| -p.log10()).collect(),
            planted_f1: support_f1(&self.syn.truth.roi, &mask.selected),
            selected: mask.selected,
            truth: self.syn.truth.roi.clone(),
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    }

    fn baseline_umi(&self, t: &AtrophyTemplate, group: Group, amyloid: Option<Amyloid>) -> Result<Vec<(usize, f64)>, String> {
        self.syn
            .cohort
            .select(group, amyloid, Timepoint::Baseline)
            .into_iter()
            .map(|r| {
                let col: Vec<f64> = self.syn.features.data.column(r.feature_column).iter().copied().collect();
                t.umi(&col).map(|u| (r.feature_column, u)).map_err(err)
            })
            .collect()
    }

    /// ROC of AD against CU baseline index values, then MCI subjects split
    /// at the ROC cutoff into Kaplan-Meier curves.
    pub fn curves_json(&self) -> Result<String, String> {
        let t = self
            .template
            .as_ref()
            .ok_or("no template yet: compute an overlay with a nonempty ROI first")?;
        let ad = self.baseline_umi(t, Group::AD, None)?;
        let cu = self.baseline_umi(t, Group::CU, None)?;
        let scores: Vec<f64> = ad.iter().chain(&cu).map(|s| s.1).collect();
        let labels: Vec<bool> = (0..scores.len()).map(|i| i < ad.len()).collect();
        let r = roc(&scores, &labels, Orientation::HigherIsPositive).map_err(err)?;

        let mut records = Vec::new();
        for row in self.syn.cohort.select(Group::MCI, None, Timepoint::Baseline) {
            let (Some(time), Some(event)) = (row.surv_time, row.surv_event) else {
                continue;
            };
            let col: Vec<f64> = self.syn.features.data.column(row.feature_column).iter().copied().collect();
            records.push(SurvivalRecord {
                time,
                event,
                marker_positive: t.umi(&col).map_err(err)? >= r.optimal_cutoff,
            });
        }
        let (pos, neg): (Vec<_>, Vec<_>) = records.iter().partition(|s| s.marker_positive);
        let km = |s: &[SurvivalRecord]| kaplan_meier(s).ok();
        let lr = log_rank(&pos, &neg).ok();
        Ok(json!({
            "roc": {
                "fpr": r.specificities.iter().map(|s| 1.0 - s).collect::<Vec<_>>(),
                "tpr": r.sensitivities,
                "auc": r.auc,
                "cutoff": r.optimal_cutoff,
                "sensitivity": r.optimal_sensitivity,
                "specificity": r.optimal_specificity,
            },
            "km_positive": km(&pos),
            "km_negative": km(&neg),
            "log_rank": lr,
        })
        .to_string())
    }
}

/// Sweep over the standard grid on `spec` with `repeats` holdout splits.
pub fn sweep_json(spec: &SyntheticSpec, repeats: usize) -> Result<String, String> {
    let cfg = SweepConfig {
        spec: spec.clone(),
        repeats,
        ..SweepConfig::default()
    };
    let res = sweep_lambda(&cfg).map_err(err)?;
    serde_json::to_string(&res).map_err(|e| e.to_string())
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub struct WebDemo {
    inner: Demo,
    spec: SyntheticSpec,
}

#[wasm_bindgen]
impl WebDemo {
    /// `seed` picks the synthetic instance.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<WebDemo, JsValue> {
        let spec = SyntheticSpec {
            seed: seed as u64,
            ..demo_spec()
        };
        Ok(WebDemo {
            inner: Demo::new(&spec).map_err(js)?,
            spec,
        })
    }

    pub fn mesh(&self) -> String {
        self.inner.mesh_json()
    }

    pub fn overlay(&mut self, factor: f64, n_perm: u32, threshold: f64) -> Result<String, JsValue> {
        self.inner.overlay_json(factor, n_perm as usize, threshold).map_err(js)
    }

    pub fn curves(&self) -> Result<String, JsValue> {
        self.inner.curves_json().map_err(js)
    }

    pub fn sweep(&self, repeats: u32) -> Result<String, JsValue> {
        sweep_json(&self.spec, repeats as usize).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SyntheticSpec {
        SyntheticSpec {
            rings: 8,
            segments: 10,
            n_ad: 16,
            n_cu: 16,
            n_mci: 30,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn overlay_then_curves() {
        let mut d = Demo::new(&tiny()).unwrap();
        assert!(d.curves_json().is_err());
        let mesh: serde_json::Value = serde_json::from_str(&d.mesh_json()).unwrap();
        let m = mesh["positions"].as_array().unwrap().len();
        let o: serde_json::Value = serde_json::from_str(&d.overlay_json(1.0, 500, 0.01).unwrap()).unwrap();
        assert_eq!(o["neg_log_p"].as_array().unwrap().len(), m);
        assert_eq!(o["truth"].as_array().unwrap().len(), m);
        let c: serde_json::Value = serde_json::from_str(&d.curves_json().unwrap()).unwrap();
        let auc = c["roc"]["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert_eq!(c["roc"]["fpr"].as_array().unwrap().len(), c["roc"]["tpr"].as_array().unwrap().len());
    }

    #[test]
    fn bad_factor_is_rejected() {
        let mut d = Demo::new(&tiny()).unwrap();
        assert!(d.overlay_json(0.0, 500, 0.01).is_err());
        assert!(d.overlay_json(1.0, 500, 1e-5).is_err());
    }

    #[test]
    fn sweep_covers_grid() {
        let s: serde_json::Value = serde_json::from_str(&sweep_json(&tiny(), 1).unwrap()).unwrap();
        assert_eq!(s["points"].as_array().unwrap().len(), 12);
    }
}
