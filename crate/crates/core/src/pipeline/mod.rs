//! End-to-end orchestration: decompose each reference group, extract the
//! ROI, build the atrophy template, score every subject and run the
//! statistical assessment, writing all artifacts plus a manifest of
//! parameters and content hashes.

mod config;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cohort::{load_cohort, Amyloid, CohortRow, CohortTable, Group, Timepoint, SCORE_NAMES};
use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, MatrixFormat};
use crate::mesh::{LocalGroups, TriangleMesh, VertexMap};
use crate::roi::{extract_roi, stability_folds, RoiMask, StabilityConfig};
use crate::solver::decompose;
use crate::stats::{self, EnrichmentOptions, Orientation, PairedSeries, SurvivalRecord};
use crate::synth::{generate_synthetic, GroundTruth};
use crate::umi::{build_template, AtrophyTemplate, UmiScore};

pub use config::{
    files_config_text, synthetic_config_text, InputSource, OutputSettings, PipelineConfig, StabilitySettings,
    StatsSettings,
};
pub use sweep::{sweep_lambda, table_grid, GridScale, SweepConfig, SweepPoint, SweepResult, GRID_CENTRE};

pub const MANIFEST_VERSION: u32 = 1;
pub const FAILURE_MARKER: &str = "FAILED";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Output directory that remembers the hash of everything written to it.
pub struct ArtifactDir {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl ArtifactDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactDir {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    /// Writes `stem.csv` or `stem.bin` and returns the file name.
    pub fn write_matrix(&mut self, stem: &str, matrix: &FeatureMatrix, format: MatrixFormat) -> Result<String> {
        let name = format!("{stem}.{}", format.extension());
        let mut bytes = Vec::new();
        match format {
            MatrixFormat::Csv => matrix.write_csv(&mut bytes)?,
            MatrixFormat::Binary => matrix.write_binary(&mut bytes)?,
        }
        self.write(&name, &bytes)?;
        Ok(name)
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub out_dir: PathBuf,
    pub manifest: Value,
    /// Every decomposition met its stopping rule.
    pub converged: bool,
}

/// Loaded or generated inputs.
struct Inputs {
    features: FeatureMatrix,
    cohort: CohortTable,
    mesh: TriangleMesh,
    map: VertexMap,
    hashes: BTreeMap<String, String>,
    truth: Option<GroundTruth>,
}

fn load_inputs(cfg: &PipelineConfig, out: &mut ArtifactDir) -> Result<Inputs> {
    match &cfg.input {
        InputSource::Files {
            features,
            cohort,
            mesh,
            vertex_map,
        } => {
            let (fm, table, mesh_obj) = load_cohort(features, cohort, mesh)?;
            let mut hashes = BTreeMap::new();
            hashes.insert("features".to_string(), sha256_file(features)?);
            hashes.insert("cohort".to_string(), sha256_file(cohort)?);
            hashes.insert("mesh".to_string(), sha256_file(mesh)?);
            let map = match vertex_map {
                Some(p) => {
                    hashes.insert("vertex_map".to_string(), sha256_file(p)?);
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    VertexMap::read_csv(&text, fm.nrows())?
                }
                None => VertexMap::identity(fm.nrows()),
            };
            Ok(Inputs {
                features: fm,
                cohort: table,
                mesh: mesh_obj,
                map,
                hashes,
                truth: None,
            })
        }
        InputSource::Synthetic(spec) => {
            let syn = generate_synthetic(spec)?;
            let name = out.write_matrix("inputs/features", &syn.features, cfg.output.format)?;
            let mut cohort_csv = Vec::new();
            syn.cohort.write_csv(&mut cohort_csv)?;
            out.write("inputs/cohort.csv", &cohort_csv)?;
            out.write("inputs/mesh.txt", syn.mesh.to_text().as_bytes())?;
            out.write_json("inputs/truth.json", &syn.truth)?;
            let mut hashes = BTreeMap::new();
            for (key, file) in [("features", name.as_str()), ("cohort", "inputs/cohort.csv"), ("mesh", "inputs/mesh.txt")] {
                hashes.insert(key.to_string(), out.hashes()[file].clone());
            }
            let m = syn.features.nrows();
            Ok(Inputs {
                features: syn.features,
                cohort: syn.cohort,
                mesh: syn.mesh,
                map: VertexMap::identity(m),
                hashes,
                truth: Some(syn.truth),
            })
        }
    }
}

/// Reference groups the ROI and template are built from.
const AD_GROUP: (Group, Amyloid) = (Group::AD, Amyloid::Positive);
const CU_GROUP: (Group, Amyloid) = (Group::CU, Amyloid::Negative);

fn group_matrix(inputs: &Inputs, (group, amyloid): (Group, Amyloid)) -> Result<FeatureMatrix> {
    let cols = inputs.cohort.columns(group, Some(amyloid), Timepoint::Baseline);
    if cols.len() < 2 {
        return Err(Error::Input(format!(
            "{group} amyloid-{amyloid} baseline group has {} subjects; at least 2 are needed",
            cols.len()
        )));
    }
    Ok(inputs.features.select_columns(&cols))
}

struct Decomposed {
    low_rank: DMatrix<f64>,
    converged: bool,
}

fn decompose_group(
    cfg: &PipelineConfig,
    groups: &LocalGroups,
    a: &FeatureMatrix,
    label: &str,
    out: &mut ArtifactDir,
) -> Result<Decomposed> {
    let scfg = cfg.solver.config_for(&a.data, groups)?;
    let res = decompose(&a.data, groups, &scfg)?;
    if !res.converged {
        log::warn!("{label}: decomposition hit the iteration limit ({})", res.iters);
    }
    out.write_json(&format!("decompose_{label}.json"), &res.diagnostics_json(&scfg))?;
    if cfg.output.write_components {
        let l = FeatureMatrix::new(res.low_rank.clone(), a.subject_ids.clone())?;
        out.write_matrix(&format!("components/low_rank_{label}"), &l, cfg.output.format)?;
        let s = FeatureMatrix::new(res.sparse.clone(), a.subject_ids.clone())?;
        out.write_matrix(&format!("components/sparse_{label}"), &s, cfg.output.format)?;
    }
    Ok(Decomposed {
        converged: res.converged,
        low_rank: res.low_rank,
    })
}

/// Serialized result, or `{"unavailable": reason}` when the analysis does not
/// apply to this cohort.
fn attempt<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "unavailable": e.to_string() }),
    }
}

struct Scored<'a> {
    row: &'a CohortRow,
    umi: f64,
}

fn umi_of(scores: &[Scored], group: Option<Group>, amyloid: Option<Amyloid>, tp: Timepoint) -> Vec<f64> {
    scores
        .iter()
        .filter(|s| group.is_none_or(|g| s.row.group == g) && amyloid.is_none_or(|a| s.row.amyloid == a) && s.row.timepoint == tp)
        .map(|s| s.umi)
        .collect()
}

fn longitudinal(scores: &[Scored], cohort: &CohortTable, group: Group, amyloid: Option<Amyloid>) -> Result<PairedSeries> {
    let by_col: BTreeMap<usize, f64> = scores.iter().map(|s| (s.row.feature_column, s.umi)).collect();
    let pairs = cohort.longitudinal_pairs(group, amyloid);
    let mut series = PairedSeries::new(
        pairs.iter().map(|(b, _)| by_col[&b.feature_column]).collect(),
        pairs.iter().map(|(_, f)| by_col[&f.feature_column]).collect(),
    )?;
    series.subject_ids = pairs.iter().map(|(b, _)| b.subject_id.clone()).collect();
    Ok(series)
}

fn run_stats(cfg: &PipelineConfig, cohort: &CohortTable, scores: &[Scored], out: &mut ArtifactDir) -> Result<Value> {
    let mut report = serde_json::Map::new();

    let mut summary = Vec::new();
    for group in [Group::AD, Group::MCI, Group::CU] {
        for tp in [Timepoint::Baseline, Timepoint::M24] {
            let v = umi_of(scores, Some(group), None, tp);
            if v.is_empty() {
                continue;
            }
            let sd = if v.len() > 1 { stats::std_dev(&v) } else { f64::NAN };
            summary.push(json!({
                "group": group, "timepoint": tp, "n": v.len(), "mean": stats::mean(&v),
                "sd": if sd.is_finite() { json!(sd) } else { Value::Null },
            }));
        }
    }
    report.insert("summary".into(), Value::Array(summary));

    let baseline: Vec<Vec<f64>> = [Group::AD, Group::MCI, Group::CU]
        .iter()
        .map(|&g| umi_of(scores, Some(g), None, Timepoint::Baseline))
        .filter(|v| v.len() >= 2)
        .collect();
    let refs: Vec<&[f64]> = baseline.iter().map(|v| v.as_slice()).collect();
    report.insert("anova_baseline".into(), attempt(stats::anova_oneway(&refs)));

    // diagnostic accuracy: amyloid-positive AD against amyloid-negative CU at baseline
    let ad = umi_of(scores, Some(AD_GROUP.0), Some(AD_GROUP.1), Timepoint::Baseline);
    let cu = umi_of(scores, Some(CU_GROUP.0), Some(CU_GROUP.1), Timepoint::Baseline);
    let mut roc_scores = ad.clone();
    roc_scores.extend(&cu);
    let labels: Vec<bool> = (0..roc_scores.len()).map(|i| i < ad.len()).collect();
    let roc = stats::roc(&roc_scores, &labels, Orientation::HigherIsPositive);
    if let Ok(r) = &roc {
        out.write("roc_points.csv", r.points_csv().as_bytes())?;
    }
    report.insert("ad_vs_cu_effect_size".into(), attempt(stats::cohens_d_independent(&ad, &cu)));
    report.insert("ad_vs_cu_t".into(), attempt(stats::two_sample_t(&ad, &cu)));
    let cutoff = roc.as_ref().ok().map(|r| r.optimal_cutoff);
    report.insert("roc".into(), attempt(roc));

    let opts = cfg.stats.sample_size();
    let mut longi = serde_json::Map::new();
    let mut mci_n = None;
    for (key, group, amyloid) in [
        ("ad", Group::AD, None),
        ("mci", Group::MCI, None),
        ("cu", Group::CU, None),
        ("ad_amyloid_positive", Group::AD, Some(Amyloid::Positive)),
        ("mci_amyloid_positive", Group::MCI, Some(Amyloid::Positive)),
        ("cu_amyloid_negative", Group::CU, Some(Amyloid::Negative)),
    ] {
        let entry = match longitudinal(scores, cohort, group, amyloid) {
            Err(e) => json!({ "unavailable": e.to_string() }),
            Ok(series) => {
                let size = stats::min_sample_size(&series, &opts);
                if key == "mci" {
                    mci_n = size.as_ref().ok().map(|s| s.n as f64);
                }
                json!({
                    "n": series.baseline.len(),
                    "paired_t": attempt(stats::paired_t(&series)),
                    "effect_size": attempt(stats::cohens_d_paired(&series)),
                    "min_sample_size": attempt(size),
                })
            }
        };
        longi.insert(key.into(), entry);
    }
    report.insert("longitudinal".into(), Value::Object(longi));

    // conversion of MCI subjects split by the diagnostic cutoff
    let survival = match cutoff {
        None => json!({ "unavailable": "no diagnostic cutoff" }),
        Some(c) => {
            let records: Vec<SurvivalRecord> = scores
                .iter()
                .filter(|s| s.row.group == Group::MCI && s.row.timepoint == Timepoint::Baseline)
                .filter_map(|s| {
                    Some(SurvivalRecord {
                        time: s.row.surv_time?,
                        event: s.row.surv_event?,
                        marker_positive: s.umi >= c,
                    })
                })
                .collect();
            let (pos, neg): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.marker_positive);
            let km_pos = stats::kaplan_meier(&pos);
            let km_neg = stats::kaplan_meier(&neg);
            if let Ok(k) = &km_pos {
                out.write("km_positive.csv", k.steps_csv().as_bytes())?;
            }
            if let Ok(k) = &km_neg {
                out.write("km_negative.csv", k.steps_csv().as_bytes())?;
            }
            json!({
                "cutoff": c,
                "n": records.len(),
                "n_positive": pos.len(),
                "cox": attempt(stats::cox_univariate(&records)),
                "log_rank": attempt(stats::log_rank(&pos, &neg)),
                "km_positive": attempt(km_pos.map(|k| k.steps.len())),
                "km_negative": attempt(km_neg.map(|k| k.steps.len())),
            })
        }
    };
    report.insert("survival".into(), survival);

    let enrich = (|| -> Result<Value> {
        let series = longitudinal(scores, cohort, Group::MCI, None)?;
        let n = mci_n.ok_or_else(|| Error::Input("MCI minimum sample size unavailable".into()))?;
        let subjects: Vec<(f64, f64)> = series
            .baseline
            .iter()
            .zip(series.differences())
            .map(|(&b, d)| (b, d))
            .collect();
        let reference = umi_of(scores, Some(CU_GROUP.0), Some(CU_GROUP.1), Timepoint::Baseline);
        let rows = stats::enrichment(
            &subjects,
            &reference,
            &cfg.stats.percentiles,
            n,
            &EnrichmentOptions {
                n_boot: cfg.stats.n_boot,
                seed: cfg.stats.seed,
            },
        )?;
        Ok(json!({ "n": n, "rows": rows }))
    })();
    report.insert("enrichment".into(), attempt(enrich));

    let mut corr = serde_json::Map::new();
    for name in SCORE_NAMES {
        let (x, y): (Vec<f64>, Vec<f64>) = scores
            .iter()
            .filter(|s| s.row.timepoint == Timepoint::Baseline)
            .filter_map(|s| Some((s.umi, s.row.scores.get(name)?)))
            .unzip();
        corr.insert(name.into(), attempt(stats::pearson(&x, &y)));
    }
    report.insert("correlations_baseline".into(), Value::Object(corr));
    Ok(Value::Object(report))
}

fn stage<T>(records: &mut Vec<StageRecord>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    match f() {
        Ok(v) => {
            records.push(StageRecord {
                name: name.into(),
                status: "ok".into(),
            });
            Ok(v)
        }
        Err(e) => {
            records.push(StageRecord {
                name: name.into(),
                status: "failed".into(),
            });
            Err(Error::Stage {
                stage: name.into(),
                source: Box::new(e),
            })
        }
    }
}

fn manifest(
    cfg: &PipelineConfig,
    status: &str,
    input_hashes: &BTreeMap<String, String>,
    stages: &[StageRecord],
    out: &ArtifactDir,
    error: Option<&Error>,
) -> Value {
    let mut v = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "status": status,
        "parameters": cfg.parameters(),
        "seeds": {
            "solver": cfg.solver.seed,
            "roi": cfg.roi.seed,
            "stability": cfg.stability.seed,
            "stats": cfg.stats.seed,
            "synthetic": match &cfg.input { InputSource::Synthetic(s) => json!(s.seed), _ => Value::Null },
        },
        "inputs": input_hashes,
        "stages": stages,
        "outputs": out.hashes(),
    });
    if let Some(e) = error {
        v["error"] = json!(e.to_string());
    }
    v
}

/// Runs the configured pipeline. On a stage failure the artifacts written
/// so far are kept, a `FAILED` marker names the stage and cause, and the
/// error is returned.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let mut out = ArtifactDir::create(&cfg.output.dir)?;
    let marker = out.path(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let mut stages = Vec::new();
    let mut input_hashes = BTreeMap::new();
    let result = run_stages(cfg, &mut out, &mut stages, &mut input_hashes);
    match result {
        Ok(converged) => {
            let status = if converged { "ok" } else { "not_converged" };
            let m = manifest(cfg, status, &input_hashes, &stages, &out, None);
            write_manifest(&out, &m)?;
            Ok(PipelineReport {
                out_dir: cfg.output.dir.clone(),
                manifest: m,
                converged,
            })
        }
        Err(e) => {
            let text = format!("{e}\n");
            std::fs::write(&marker, text).map_err(|io| Error::io(&marker, io))?;
            let m = manifest(cfg, "failed", &input_hashes, &stages, &out, Some(&e));
            write_manifest(&out, &m)?;
            Err(e)
        }
    }
}

pub fn run_pipeline_file(config_path: &Path) -> Result<PipelineReport> {
    run_pipeline(&PipelineConfig::load(config_path)?)
}

fn write_manifest(out: &ArtifactDir, m: &Value) -> Result<()> {
    let path = out.path("manifest.json");
    let text = serde_json::to_string_pretty(m)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn run_stages(
    cfg: &PipelineConfig,
    out: &mut ArtifactDir,
    stages: &mut Vec<StageRecord>,
    input_hashes: &mut BTreeMap<String, String>,
) -> Result<bool> {
    let inputs = stage(stages, "load", || load_inputs(cfg, out))?;
    *input_hashes = inputs.hashes.clone();
    let groups = LocalGroups::new(&inputs.mesh, &inputs.map)?;

    let (ad, cu, l_ad, l_cu, converged) = stage(stages, "decompose", || {
        let ad = group_matrix(&inputs, AD_GROUP)?;
        let cu = group_matrix(&inputs, CU_GROUP)?;
        let l_ad = decompose_group(cfg, &groups, &ad, "ad", out)?;
        let l_cu = decompose_group(cfg, &groups, &cu, "cu", out)?;
        let converged = l_ad.converged && l_cu.converged;
        Ok((ad, cu, l_ad.low_rank, l_cu.low_rank, converged))
    })?;

    let roi = stage(stages, "roi", || -> Result<RoiMask> {
        let roi = extract_roi(&l_ad, &l_cu, &cfg.roi)?;
        log::info!("ROI: {} of {} vertices", roi.count(), roi.selected.len());
        out.write("roi.csv", roi.to_csv(&inputs.map).as_bytes())?;
        out.write("roi_overlay.txt", roi.overlay(&inputs.mesh, &inputs.map)?.as_bytes())?;
        let mut summary = json!({ "selected": roi.count(), "vertices": roi.selected.len() });
        if let Some(truth) = &inputs.truth {
            summary["planted_f1"] = json!(crate::synth::support_f1(&truth.roi, &roi.selected));
        }
        if cfg.stability.folds > 0 {
            let mut sc = StabilityConfig {
                n_folds: cfg.stability.folds,
                fraction: cfg.stability.fraction,
                roi: cfg.roi,
                solver: cfg.solver,
                low_rank: true,
                seed: cfg.stability.seed,
            };
            let lr = stability_folds(&ad.data, &cu.data, &groups, &sc)?;
            out.write("stability_low_rank.csv", lr.to_csv(&inputs.map).as_bytes())?;
            out.write("stability_overlay.txt", lr.overlay(&inputs.mesh, &inputs.map)?.as_bytes())?;
            summary["stability_low_rank_full_fraction"] = json!(lr.full_count_fraction());
            if cfg.stability.compare_raw {
                sc.low_rank = false;
                let raw = stability_folds(&ad.data, &cu.data, &groups, &sc)?;
                out.write("stability_raw.csv", raw.to_csv(&inputs.map).as_bytes())?;
                summary["stability_raw_full_fraction"] = json!(raw.full_count_fraction());
            }
        }
        out.write_json("roi_summary.json", &summary)?;
        Ok(roi)
    })?;

    let template = stage(stages, "template", || -> Result<AtrophyTemplate> {
        let t = build_template(&l_ad, &l_cu, &roi)?;
        out.write("template.json", (t.to_json()? + "\n").as_bytes())?;
        Ok(t)
    })?;

    let scores = stage(stages, "umi", || -> Result<Vec<UmiScore>> {
        let scores = template.score_matrix(&inputs.features)?;
        let mut csv = String::from("subject_id,group,amyloid,timepoint,umi\n");
        for row in &inputs.cohort.rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.subject_id, row.group, row.amyloid, row.timepoint, scores[row.feature_column].value
            ));
        }
        out.write("umi.csv", csv.as_bytes())?;
        Ok(scores)
    })?;

    stage(stages, "stats", || -> Result<()> {
        let scored: Vec<Scored> = inputs
            .cohort
            .rows
            .iter()
            .map(|row| Scored {
                row,
                umi: scores[row.feature_column].value,
            })
            .collect();
        let report = run_stats(cfg, &inputs.cohort, &scored, out)?;
        out.write_json("stats.json", &report)
    })?;
    Ok(converged)
}
