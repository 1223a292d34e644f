//! Atrophy templates and the univariate morphometry index.
//!
//! Atrophy degrees are percent differences from the control-group mean:
//! `d = 100 (cu_mean - x) / cu_mean` per ROI vertex, and
//! `UMI = sum(d_T * d_W) / 100`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{row_means, FeatureMatrix};
use crate::par::map_indices;
use crate::roi::RoiMask;

pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophyTemplate {
    pub format_version: u32,
    /// Rows of the feature matrices the template was built on.
    pub vertex_count: usize,
    /// ROI rows, ascending.
    pub roi: Vec<usize>,
    pub cu_mean: Vec<f64>,
    pub dw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmiScore {
    pub subject_id: String,
    pub value: f64,
    pub roi_vertex_count: usize,
}

/// Template from the AD and CU low-rank components restricted to `roi`.
pub fn build_template(l_ad: &DMatrix<f64>, l_cu: &DMatrix<f64>, roi: &RoiMask) -> Result<AtrophyTemplate> {
    if l_ad.nrows() != l_cu.nrows() || roi.selected.len() != l_ad.nrows() {
        return Err(Error::Dimension(format!(
            "AD component has {} rows, CU component {}, ROI mask {}",
            l_ad.nrows(),
            l_cu.nrows(),
            roi.selected.len()
        )));
    }
    if l_ad.ncols() == 0 || l_cu.ncols() == 0 {
        return Err(Error::Input("template groups must be nonempty".into()));
    }
    let rows = roi.indices();
    if rows.is_empty() {
        return Err(Error::Input("ROI is empty; no template can be built".into()));
    }
    let ad = row_means(l_ad);
    let cu = row_means(l_cu);
    let mut cu_mean = Vec::with_capacity(rows.len());
    let mut dw = Vec::with_capacity(rows.len());
    for &r in &rows {
        let c = cu[r];
        if !(c > 0.0) {
            return Err(Error::Numerical(format!(
                "control mean at vertex row {r} is {c}; percent atrophy needs positive feature values"
            )));
        }
        cu_mean.push(c);
        dw.push(100.0 * (c - ad[r]) / c);
    }
    Ok(AtrophyTemplate {
        format_version: TEMPLATE_FORMAT_VERSION,
        vertex_count: l_ad.nrows(),
        roi: rows,
        cu_mean,
        dw,
    })
}

impl AtrophyTemplate {
    pub fn len(&self) -> usize {
        self.roi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roi.is_empty()
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.vertex_count {
            return Err(Error::Dimension(format!(
                "subject covers {} vertices, template expects {}",
                features.len(),
                self.vertex_count
            )));
        }
        Ok(())
    }

    /// Individual atrophy degree `D_T` on the ROI rows.
    pub fn individual_degree(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check(features)?;
        Ok(self
            .roi
            .iter()
            .zip(&self.cu_mean)
            .map(|(&r, &c)| 100.0 * (c - features[r]) / c)
            .collect())
    }

    pub fn umi(&self, features: &[f64]) -> Result<f64> {
        let dt = self.individual_degree(features)?;
        let value = dt.iter().zip(&self.dw).map(|(t, w)| t * w).sum::<f64>() / 100.0;
        if !value.is_finite() {
            return Err(Error::Numerical("UMI is not finite".into()));
        }
        Ok(value)
    }

    pub fn score(&self, subject_id: &str, features: &[f64]) -> Result<UmiScore> {
        Ok(UmiScore {
            subject_id: subject_id.to_string(),
            value: self.umi(features)?,
            roi_vertex_count: self.len(),
        })
    }

    /// Scores every column of `features`.
    pub fn score_matrix(&self, features: &FeatureMatrix) -> Result<Vec<UmiScore>> {
        if features.nrows() != self.vertex_count {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows, template expects {}",
                features.nrows(),
                self.vertex_count
            )));
        }
        map_indices(features.ncols(), |j| {
            let col: Vec<f64> = features.data.column(j).iter().copied().collect();
            self.score(&features.subject_ids[j], &col)
        })
        .into_iter()
        .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: AtrophyTemplate = serde_json::from_str(text)?;
        if t.format_version != TEMPLATE_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "template format version {} is not supported (expected {TEMPLATE_FORMAT_VERSION})",
                t.format_version
            )));
        }
        if t.cu_mean.len() != t.roi.len() || t.dw.len() != t.roi.len() {
            return Err(Error::Input("template arrays differ in length".into()));
        }
        if t.roi.iter().any(|&r| r >= t.vertex_count) {
            return Err(Error::Input("template ROI row out of range".into()));
        }
        if t.cu_mean.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Input("template control means must be positive".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// CSV `subject_id,umi`.
pub fn scores_csv(scores: &[UmiScore]) -> String {
    let mut out = String::from("subject_id,umi\n");
    for s in scores {
        out.push_str(&format!("{},{}\n", s.subject_id, s.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::RoiMethod;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(selected: Vec<bool>) -> RoiMask {
        let n = selected.len();
        RoiMask {
            selected,
            p_values: vec![0.0; n],
            threshold: 0.05,
            method: RoiMethod::Permutation,
        }
    }

    fn random_template(rng: &mut ChaCha8Rng, m: usize) -> (DMatrix<f64>, DMatrix<f64>, AtrophyTemplate) {
        let cu = DMatrix::from_fn(m, 5, |_, _| 2.0 + rng.random::<f64>());
        let ad = DMatrix::from_fn(m, 4, |_, _| 1.5 + rng.random::<f64>());
        let sel: Vec<bool> = (0..m).map(|i| i % 3 != 1).collect();
        let t = build_template(&ad, &cu, &mask(sel)).unwrap();
        (ad, cu, t)
    }

    #[test]
    fn trivial_templates() {
        let cu = DMatrix::from_element(4, 3, 2.0);
        let t = build_template(&cu, &cu, &mask(vec![true; 4])).unwrap();
        assert!(t.dw.iter().all(|&w| w == 0.0));
        let ad = &cu * 0.9;
        let t = build_template(&ad, &cu, &mask(vec![true; 4])).unwrap();
        assert!(t.dw.iter().all(|&w| (w - 10.0).abs() < 1e-12));
        let x = vec![1.6; 4];
        assert!(t.individual_degree(&x).unwrap().iter().all(|&d| (d - 20.0).abs() < 1e-12));
    }

    #[test]
    fn closed_form_hundred() {
        let m = 50;
        let t = AtrophyTemplate {
            format_version: TEMPLATE_FORMAT_VERSION,
            vertex_count: m,
            roi: (0..m).collect(),
            cu_mean: vec![5.0; m],
            dw: vec![10.0; m],
        };
        assert!((t.umi(&vec![4.0; m]).unwrap() - 100.0).abs() < 1e-10);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ad, cu, t) = random_template(&mut rng, 30);
        let x: Vec<f64> = (0..30).map(|_| 1.0 + rng.random::<f64>()).collect();
        let mut want = 0.0;
        let mut k = 0;
        for i in 0..30 {
            if i % 3 == 1 {
                continue;
            }
            let c = cu.row(i).mean();
            let a = ad.row(i).mean();
            assert!((t.cu_mean[k] - c).abs() < 1e-12);
            let w = 100.0 * (c - a) / c;
            assert!((t.dw[k] - w).abs() < 1e-10);
            want += 100.0 * (c - x[i]) / c * w / 100.0;
            k += 1;
        }
        assert!((t.umi(&x).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn identities_at_group_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ad, cu, t) = random_template(&mut rng, 24);
        assert_eq!(t.umi(&row_means(&cu)).unwrap(), 0.0);
        let want = t.dw.iter().map(|w| w * w).sum::<f64>() / 100.0;
        assert!((t.umi(&row_means(&ad)).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_control_mean_is_rejected() {
        let cu = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.5]);
        let ad = DMatrix::from_element(2, 2, 1.0);
        assert!(build_template(&ad, &cu, &mask(vec![true, true])).is_err());
        assert!(build_template(&ad, &cu, &mask(vec![true, false])).is_ok());
        assert!(build_template(&ad, &cu, &mask(vec![false, false])).is_err());
    }

    #[test]
    fn wrong_length_subject_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, _, t) = random_template(&mut rng, 9);
        assert!(t.umi(&[1.0; 8]).is_err());
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, _, t) = random_template(&mut rng, 12);
        let text = t.to_json().unwrap();
        assert_eq!(AtrophyTemplate::from_json(&text).unwrap(), t);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(AtrophyTemplate::from_json(&bumped).is_err());
    }

    #[test]
    fn batch_scoring_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ad, _, t) = random_template(&mut rng, 15);
        let fm = FeatureMatrix::from_matrix(ad.clone());
        let scores = t.score_matrix(&fm).unwrap();
        for (j, s) in scores.iter().enumerate() {
            let col: Vec<f64> = ad.column(j).iter().copied().collect();
            assert_eq!(s.value, t.umi(&col).unwrap());
            assert_eq!(s.roi_vertex_count, 10);
        }
    }
}
