//! Synthetic data: the planted low-rank + patch-sparse model used to check
//! solver recovery, and a two-group longitudinal cohort generator with
//! ground truth for the ROI / UMI / statistics pipeline.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Amyloid, ClinicalScores, CohortRow, CohortTable, Group, Timepoint};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::mesh::TriangleMesh;
use crate::rng::{self, substream};
use crate::stats::SurvivalRecord;

/// Parameters of the planted decomposition `A = L0 + S0 + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    /// Torus mesh dimensions; `m = major * minor`.
    pub mesh_major: usize,
    pub mesh_minor: usize,
    pub n: usize,
    /// Exact rank of `L0` (a positive baseline profile plus `rank - 1` random modes).
    pub rank: usize,
    /// Mean feature level (radial distances are positive lengths).
    pub baseline: f64,
    /// Scale of the random low-rank modes relative to `baseline`.
    pub mode_scale: f64,
    /// Fraction of columns carrying one sparse patch.
    pub patch_fraction: f64,
    /// Patch radius in one-ring hops.
    pub patch_hops: usize,
    /// Patch displacement relative to `baseline`.
    pub patch_amplitude: f64,
    /// Noise standard deviation relative to `max |L0|`.
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            mesh_major: 20,
            mesh_minor: 25,
            n: 60,
            rank: 5,
            baseline: 3.0,
            mode_scale: 0.1,
            patch_fraction: 0.05,
            patch_hops: 2,
            patch_amplitude: 0.25,
            noise_rel: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub mesh: TriangleMesh,
    pub observed: DMatrix<f64>,
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub noise_sigma: f64,
}

impl PlantedModel {
    pub fn support(&self) -> Vec<bool> {
        self.sparse.iter().map(|&v| v != 0.0).collect()
    }
}

/// Smooth positive per-vertex profile built from mesh coordinates.
fn baseline_profile(mesh: &TriangleMesh, level: f64) -> Vec<f64> {
    mesh.positions
        .iter()
        .map(|p| level * (1.0 + 0.15 * (1.3 * p[0]).sin() + 0.1 * (0.9 * p[1] + 0.5 * p[2]).cos()))
        .collect()
}

pub fn planted_model(spec: &PlantedSpec) -> Result<PlantedModel> {
    if spec.rank == 0 || spec.n == 0 {
        return Err(Error::Input("planted model needs positive rank and column count".into()));
    }
    let mesh = TriangleMesh::torus(spec.mesh_major, spec.mesh_minor)?;
    let m = mesh.vertex_count();
    if spec.rank > m.min(spec.n) {
        return Err(Error::Input(format!("rank {} exceeds min(m, n)", spec.rank)));
    }
    let mut rng = substream(spec.seed, 0);
    let profile = baseline_profile(&mesh, spec.baseline);
    let modes = spec.rank - 1;
    let basis = DMatrix::from_fn(m, modes, |_, _| rng.sample::<f64, _>(StandardNormal));
    let coeffs = DMatrix::from_fn(modes, spec.n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut low_rank = basis * coeffs * (spec.mode_scale * spec.baseline);
    for j in 0..spec.n {
        let weight = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
        for p in 0..m {
            low_rank[(p, j)] += weight * profile[p];
        }
    }

    let mut sparse = DMatrix::zeros(m, spec.n);
    let n_patches = ((spec.patch_fraction * spec.n as f64).round() as usize).min(spec.n);
    let mut cols: Vec<usize> = (0..spec.n).collect();
    rng::shuffle(&mut rng, &mut cols);
    for &col in &cols[..n_patches] {
        let center = rng.random_range(0..m);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for q in mesh.neighborhood(center, spec.patch_hops) {
            sparse[(q, col)] = sign * spec.patch_amplitude * spec.baseline;
        }
    }

    let noise_sigma = spec.noise_rel * low_rank.amax();
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Input(e.to_string()))?;
    let noise = DMatrix::from_fn(m, spec.n, |_, _| normal.sample(&mut rng));
    let observed = &low_rank + &sparse + noise;
    Ok(PlantedModel {
        mesh,
        observed,
        low_rank,
        sparse,
        noise_sigma,
    })
}

/// Parameters of the synthetic two-timepoint cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Sphere tessellation: `m = 2 + rings * segments`.
    pub rings: usize,
    pub segments: usize,
    pub n_ad: usize,
    pub n_cu: usize,
    pub n_mci: usize,
    /// Rank of the noise-free, lesion-free control matrix: a positive
    /// baseline shape plus `rank - 1` smooth shared modes.
    pub rank: usize,
    /// Mean feature level in mm.
    pub level: f64,
    /// Amplitude of the shared modes relative to `level`.
    pub mode_scale: f64,
    /// Spread of per-subject head-size weights.
    pub weight_sd: f64,
    /// Number of disjoint atrophy patches and their radius in one-ring hops.
    pub roi_patches: usize,
    pub roi_hops: usize,
    /// Percent atrophy of a typical AD subject at patch centres, tapering
    /// linearly toward the patch rim.
    pub atrophy_pct: f64,
    /// Spread of AD severity around 1.
    pub severity_sd: f64,
    /// Fraction of subjects carrying one focal deviation, its radius and
    /// its size in percent of `level` (random sign).
    pub lesion_fraction: f64,
    pub lesion_hops: usize,
    pub lesion_pct: f64,
    /// Gaussian noise in percent of `level`.
    pub noise_pct: f64,
    /// Additional percent atrophy per year inside the patches, per group;
    /// MCI and AD rates scale with the subject's severity.
    pub drift_ad: f64,
    pub drift_mci: f64,
    pub drift_cu: f64,
    /// Exponential conversion model for MCI subjects: monthly baseline
    /// hazard, log hazard ratio of marker-positive subjects, and follow-up
    /// window in months (administrative censoring).
    pub hazard: f64,
    pub marker_effect: f64,
    pub follow_up: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            rings: 18,
            segments: 24,
            n_ad: 60,
            n_cu: 60,
            n_mci: 100,
            rank: 4,
            level: 3.0,
            mode_scale: 0.02,
            weight_sd: 0.02,
            roi_patches: 2,
            roi_hops: 3,
            atrophy_pct: 15.0,
            severity_sd: 0.15,
            lesion_fraction: 0.6,
            lesion_hops: 1,
            lesion_pct: 30.0,
            noise_pct: 3.0,
            drift_ad: 2.0,
            drift_mci: 1.5,
            drift_cu: 0.1,
            hazard: 0.01,
            marker_effect: 4f64.ln(),
            follow_up: 60.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic spec: {msg}")));
        if self.rings < 2 || self.segments < 3 {
            return bad("sphere needs rings >= 2 and segments >= 3");
        }
        if self.n_ad < 2 || self.n_cu < 2 {
            return bad("each of the AD and CU groups needs at least 2 subjects");
        }
        if self.rank == 0 {
            return bad("rank must be positive");
        }
        if !(self.level > 0.0) {
            return bad("level must be positive");
        }
        for (name, v) in [
            ("mode_scale", self.mode_scale),
            ("weight_sd", self.weight_sd),
            ("atrophy_pct", self.atrophy_pct),
            ("severity_sd", self.severity_sd),
            ("lesion_pct", self.lesion_pct),
            ("noise_pct", self.noise_pct),
            ("hazard", self.hazard),
            ("follow_up", self.follow_up),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synthetic spec: {name} must be nonnegative")));
            }
        }
        if !(0.0..=1.0).contains(&self.lesion_fraction) {
            return bad("lesion_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        2 + self.rings * self.segments
    }
}

/// Machine-readable ground truth of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-vertex membership in the planted atrophy region.
    pub roi: Vec<bool>,
    pub rank: usize,
    /// Per subject: latent severity (AD around 1, MCI in [0, 1], CU 0).
    pub severity: BTreeMap<String, f64>,
    /// Per MCI subject: latent marker status driving conversion hazard.
    pub marker_positive: BTreeMap<String, bool>,
    /// Columns carrying a focal deviation.
    pub lesion_columns: Vec<usize>,
    pub hazard_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub mesh: TriangleMesh,
    pub features: FeatureMatrix,
    pub cohort: CohortTable,
    pub truth: GroundTruth,
    /// Noise-free and lesion-free features, same layout as `features`.
    pub clean: DMatrix<f64>,
}

impl SyntheticCohort {
    pub fn matrix(&self, group: Group, timepoint: Timepoint) -> FeatureMatrix {
        self.features
            .select_columns(&self.cohort.columns(group, None, timepoint))
    }

    pub fn clean_matrix(&self, group: Group, timepoint: Timepoint) -> DMatrix<f64> {
        let cols = self.cohort.columns(group, None, timepoint);
        self.clean.select_columns(cols.iter())
    }

    pub fn survival_records(&self) -> Vec<SurvivalRecord> {
        self.cohort
            .select(Group::MCI, None, Timepoint::Baseline)
            .into_iter()
            .filter_map(|r| {
                let marker = *self.truth.marker_positive.get(&r.subject_id)?;
                Some(SurvivalRecord {
                    time: r.surv_time?,
                    event: r.surv_event?,
                    marker_positive: marker,
                })
            })
            .collect()
    }
}

/// Smooth shared modes: cosines of random directions on the unit sphere.
fn smooth_modes(mesh: &TriangleMesh, count: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    let m = mesh.vertex_count();
    let mut modes = DMatrix::zeros(m, count);
    for k in 0..count {
        let d: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
        let freq = 1.0 + 2.0 * rng.random::<f64>();
        let phase = std::f64::consts::TAU * rng.random::<f64>();
        for (p, pos) in mesh.positions.iter().enumerate() {
            let t = (pos[0] * d[0] + pos[1] * d[1] + pos[2] * d[2]) / norm;
            modes[(p, k)] = (std::f64::consts::PI * freq * t + phase).cos();
        }
    }
    modes
}

/// Disjoint `hops`-neighbourhood patches at random centres. Returns the
/// per-vertex atrophy weight: 1 at a centre, falling linearly by
/// `1 / (hops + 1)` per ring, 0 outside every patch.
fn place_patches(mesh: &TriangleMesh, count: usize, hops: usize, rng: &mut rng::Rng) -> Result<Vec<f64>> {
    let m = mesh.vertex_count();
    let mut grade = vec![0.0; m];
    let mut placed = 0;
    let mut attempts = 0;
    while placed < count {
        attempts += 1;
        if attempts > 1000 {
            return Err(Error::Input(format!(
                "could not place {count} disjoint {hops}-hop patches on a {m}-vertex mesh"
            )));
        }
        let center = rng.random_range(0..m);
        // keep a one-hop gap between patches
        let halo = mesh.neighborhood(center, hops + 1);
        if halo.iter().any(|&q| grade[q] > 0.0) {
            continue;
        }
        for h in (0..=hops).rev() {
            let w = (hops + 1 - h) as f64 / (hops + 1) as f64;
            for q in mesh.neighborhood(center, h) {
                grade[q] = w;
            }
        }
        placed += 1;
    }
    Ok(grade)
}

fn truncated_normal(rng: &mut rng::Rng, mean: f64, sd: f64, lo: f64) -> f64 {
    let v = mean + sd * rng.sample::<f64, _>(StandardNormal);
    v.max(lo)
}

/// Centres per-group coefficient rows to zero mean and weights to unit mean,
/// so group means differ only through atrophy, lesions and noise.
fn center_group(coeffs: &mut DMatrix<f64>, weights: &mut [f64], cols: &[usize]) {
    if cols.is_empty() {
        return;
    }
    let k = cols.len() as f64;
    for i in 0..coeffs.nrows() {
        let mean = cols.iter().map(|&c| coeffs[(i, c)]).sum::<f64>() / k;
        for &c in cols {
            coeffs[(i, c)] -= mean;
        }
    }
    let wmean = cols.iter().map(|&c| weights[c]).sum::<f64>() / k;
    for &c in cols {
        weights[c] /= wmean;
    }
}

struct Subject {
    id: String,
    group: Group,
    severity: f64,
    annual: f64,
}

/// Two-timepoint AD / MCI / CU cohort on a sphere-like mesh.
///
/// Column layout: for every subject (AD, then CU, then MCI) a baseline
/// column followed by its 24-month column.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let mesh = TriangleMesh::uv_sphere(spec.rings, spec.segments)?;
    let m = mesh.vertex_count();
    let mut rng_shape = substream(spec.seed, 1);
    let mut rng_subj = substream(spec.seed, 2);
    let mut rng_noise = substream(spec.seed, 3);
    let mut rng_surv = substream(spec.seed, 4);

    let grade = place_patches(&mesh, spec.roi_patches, spec.roi_hops, &mut rng_shape)?;
    let roi: Vec<bool> = grade.iter().map(|&g| g > 0.0).collect();
    let profile = baseline_profile(&mesh, spec.level);
    let modes = smooth_modes(&mesh, spec.rank - 1, &mut rng_shape);

    let mut subjects = Vec::new();
    for (group, count, prefix) in [(Group::AD, spec.n_ad, "ad"), (Group::CU, spec.n_cu, "cu"), (Group::MCI, spec.n_mci, "mci")] {
        for i in 0..count {
            let severity = match group {
                Group::AD => truncated_normal(&mut rng_subj, 1.0, spec.severity_sd, 0.2),
                Group::MCI => rng_subj.random::<f64>(),
                Group::CU => 0.0,
            };
            let rate = match group {
                Group::AD => spec.drift_ad * severity,
                Group::MCI => spec.drift_mci * severity,
                Group::CU => spec.drift_cu,
            };
            let annual = (rate * (1.0 + 0.25 * rng_subj.sample::<f64, _>(StandardNormal))).max(0.0);
            subjects.push(Subject {
                id: format!("{prefix}{i:03}"),
                group,
                severity,
                annual,
            });
        }
    }
    let n_subj = subjects.len();
    let mut coeffs = DMatrix::from_fn(spec.rank - 1, n_subj, |_, _| rng_subj.sample::<f64, _>(StandardNormal));
    let mut weights: Vec<f64> = (0..n_subj)
        .map(|_| 1.0 + spec.weight_sd * rng_subj.sample::<f64, _>(StandardNormal))
        .collect();
    for group in [Group::AD, Group::CU, Group::MCI] {
        let cols: Vec<usize> = (0..n_subj).filter(|&j| subjects[j].group == group).collect();
        center_group(&mut coeffs, &mut weights, &cols);
    }

    // focal deviations: same anatomy at both timepoints
    let mut lesions: Vec<Option<(Vec<usize>, f64)>> = Vec::with_capacity(n_subj);
    for _ in 0..n_subj {
        if spec.lesion_pct > 0.0 && rng_subj.random::<f64>() < spec.lesion_fraction {
            let center = rng_subj.random_range(0..m);
            let sign = if rng_subj.random::<bool>() { 1.0 } else { -1.0 };
            lesions.push(Some((mesh.neighborhood(center, spec.lesion_hops), sign)));
        } else {
            lesions.push(None);
        }
    }

    let noise = Normal::new(0.0, spec.noise_pct / 100.0 * spec.level).map_err(|e| Error::Input(e.to_string()))?;
    let mode_amp = spec.mode_scale * spec.level;
    let ncols = 2 * n_subj;
    let mut clean = DMatrix::zeros(m, ncols);
    let mut observed = DMatrix::zeros(m, ncols);
    let mut rows = Vec::with_capacity(ncols);
    let mut lesion_columns = Vec::new();
    let mut severity_map = BTreeMap::new();
    let mut marker_map = BTreeMap::new();

    for (j, subj) in subjects.iter().enumerate() {
        severity_map.insert(subj.id.clone(), subj.severity);
        let base_atrophy = if subj.group == Group::CU {
            0.0
        } else {
            spec.atrophy_pct * subj.severity
        };
        let (surv_time, surv_event) = if subj.group == Group::MCI {
            let marker = subj.severity > 0.5;
            marker_map.insert(subj.id.clone(), marker);
            let rate = spec.hazard * if marker { spec.marker_effect.exp() } else { 1.0 };
            let t = if rate > 0.0 {
                Exp::new(rate).map_err(|e| Error::Input(e.to_string()))?.sample(&mut rng_surv)
            } else {
                f64::INFINITY
            };
            if t <= spec.follow_up {
                (Some(t), Some(true))
            } else {
                (Some(spec.follow_up), Some(false))
            }
        } else {
            (None, None)
        };

        for (tp_index, timepoint) in [Timepoint::Baseline, Timepoint::M24].into_iter().enumerate() {
            let col = 2 * j + tp_index;
            let atrophy = base_atrophy + 2.0 * subj.annual * tp_index as f64;
            for p in 0..m {
                let shrink = 1.0 - grade[p] * atrophy / 100.0;
                let mut v = weights[j] * profile[p] * shrink;
                for k in 0..spec.rank - 1 {
                    v += mode_amp * modes[(p, k)] * coeffs[(k, j)];
                }
                clean[(p, col)] = v;
                observed[(p, col)] = v + noise.sample(&mut rng_noise);
            }
            if let Some((patch, sign)) = &lesions[j] {
                for &q in patch {
                    observed[(q, col)] += sign * spec.lesion_pct / 100.0 * spec.level;
                }
                lesion_columns.push(col);
            }
            let amyloid = match subj.group {
                Group::AD => Amyloid::Positive,
                Group::CU => Amyloid::Negative,
                Group::MCI if subj.severity > 0.5 => Amyloid::Positive,
                Group::MCI => Amyloid::Negative,
            };
            rows.push(CohortRow {
                subject_id: subj.id.clone(),
                group: subj.group,
                amyloid,
                timepoint,
                scores: clinical_scores(subj.severity + 0.2 * subj.annual * tp_index as f64, &mut rng_subj),
                feature_column: col,
                surv_time: if tp_index == 0 { surv_time } else { None },
                surv_event: if tp_index == 0 { surv_event } else { None },
            });
        }
    }

    let ids = rows
        .iter()
        .map(|r| format!("{}_{}", r.subject_id, r.timepoint))
        .collect();
    Ok(SyntheticCohort {
        mesh,
        features: FeatureMatrix::new(observed, ids)?,
        cohort: CohortTable::new(rows)?,
        truth: GroundTruth {
            roi,
            rank: spec.rank,
            severity: severity_map,
            marker_positive: marker_map,
            lesion_columns,
            hazard_ratio: spec.marker_effect.exp(),
        },
        clean,
    })
}

/// Clinical scores that worsen with disease severity.
fn clinical_scores(severity: f64, rng: &mut rng::Rng) -> ClinicalScores {
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    ClinicalScores {
        mmse: Some((29.0 - 6.0 * severity + z()).clamp(0.0, 30.0)),
        cdr_sb: Some((0.5 + 4.0 * severity + 0.7 * z()).clamp(0.0, 18.0)),
        adas_cog11: Some((6.0 + 14.0 * severity + 2.5 * z()).clamp(0.0, 70.0)),
        avlt_total: Some((45.0 - 15.0 * severity + 5.0 * z()).clamp(0.0, 75.0)),
    }
}

/// Independent exponential survival sample with administrative censoring:
/// marker-positive subjects (probability 1/2) have hazard `hazard * exp(effect)`.
pub fn survival_sample(n: usize, hazard: f64, effect: f64, follow_up: f64, seed: u64) -> Result<Vec<SurvivalRecord>> {
    let mut rng = substream(seed, 0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let marker = rng.random::<bool>();
        let rate = hazard * if marker { effect.exp() } else { 1.0 };
        let t = Exp::new(rate).map_err(|e| Error::Input(e.to_string()))?.sample(&mut rng);
        out.push(SurvivalRecord {
            time: t.min(follow_up),
            event: t <= follow_up,
            marker_positive: marker,
        });
    }
    Ok(out)
}

/// Precision/recall F1 of a predicted boolean support against the truth.
pub fn support_f1(truth: &[bool], predicted: &[bool]) -> f64 {
    let tp = truth.iter().zip(predicted).filter(|(t, p)| **t && **p).count() as f64;
    let fp = truth.iter().zip(predicted).filter(|(t, p)| !**t && **p).count() as f64;
    let fneg = truth.iter().zip(predicted).filter(|(t, p)| **t && !**p).count() as f64;
    if tp == 0.0 {
        return if fp == 0.0 && fneg == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}
