//! Sectioned `key = value` configuration for the end-to-end pipeline.
//!
//! ```text
//! [input]
//! features = data/features.csv
//! cohort = data/cohort.csv
//! mesh = data/mesh.txt
//!
//! [solver]
//! lambda = group_scaled
//! seed = 0
//!
//! [roi]
//! n_perm = 5000
//! threshold = 0.001
//! seed = 0
//!
//! [output]
//! dir = out
//! ```
//!
//! A `[synthetic]` section (keys of [`SyntheticSpec`]) replaces the file
//! inputs with a generated cohort. Relative paths resolve against the
//! directory holding the configuration file. Unknown sections and keys are
//! rejected.

use std::path::{Path, PathBuf};

use ini::{Ini, Properties};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::matrix::MatrixFormat;
use crate::roi::RoiSettings;
use crate::solver::SolverOptions;
use crate::stats::SampleSizeOptions;
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Files {
        features: PathBuf,
        cohort: PathBuf,
        mesh: PathBuf,
        vertex_map: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    /// 0 disables the fold analysis.
    pub folds: usize,
    pub fraction: f64,
    /// Also count folds on raw features for comparison.
    pub compare_raw: bool,
    pub seed: u64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        StabilitySettings {
            folds: 0,
            fraction: 0.9,
            compare_raw: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSettings {
    pub reduction: f64,
    pub power: f64,
    pub alpha: f64,
    pub interval_years: f64,
    /// Percentiles of the control reference distribution used as
    /// enrichment cutoffs.
    pub percentiles: Vec<f64>,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for StatsSettings {
    fn default() -> Self {
        let s = SampleSizeOptions::default();
        StatsSettings {
            reduction: s.reduction,
            power: s.power,
            alpha: s.alpha,
            interval_years: s.interval_years,
            percentiles: vec![60.0, 75.0, 90.0],
            n_boot: 1000,
            seed: 0,
        }
    }
}

impl StatsSettings {
    pub fn sample_size(&self) -> SampleSizeOptions {
        SampleSizeOptions {
            reduction: self.reduction,
            power: self.power,
            alpha: self.alpha,
            interval_years: self.interval_years,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub format: MatrixFormat,
    /// Write the per-group low-rank and sparse components.
    pub write_components: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub solver: SolverOptions,
    pub roi: RoiSettings,
    pub stability: StabilitySettings,
    pub stats: StatsSettings,
    pub output: OutputSettings,
}

const SECTIONS: [&str; 7] = ["input", "synthetic", "solver", "roi", "stability", "stats", "output"];

fn scalar(text: &str) -> Value {
    let t = text.trim();
    match t {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(v) = t.parse::<u64>() {
        return Value::from(v);
    }
    if let Ok(v) = t.parse::<f64>() {
        if v.is_finite() {
            return Value::from(v);
        }
    }
    Value::String(t.to_string())
}

fn section_value(props: &Properties, lists: &[&str]) -> Value {
    let mut map = Map::new();
    for (k, v) in props.iter() {
        let value = if lists.contains(&k) {
            Value::Array(v.split(',').filter(|s| !s.trim().is_empty()).map(scalar).collect())
        } else {
            scalar(v)
        };
        map.insert(k.to_string(), value);
    }
    Value::Object(map)
}

fn typed<T: DeserializeOwned + Default>(ini: &Ini, name: &str, lists: &[&str]) -> Result<T> {
    match ini.section(Some(name)) {
        None => Ok(T::default()),
        Some(props) => serde_json::from_value(section_value(props, lists))
            .map_err(|e| Error::Config(format!("[{name}] {e}"))),
    }
}

fn existing(base: &Path, section: &Properties, key: &str) -> Result<PathBuf> {
    let raw = section
        .get(key)
        .ok_or_else(|| Error::Config(format!("[input] is missing `{key}`")))?;
    let path = base.join(raw.trim());
    if !path.is_file() {
        return Err(Error::Config(format!("[input] {key}: {} does not exist", path.display())));
    }
    Ok(path)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses configuration text, resolving relative paths against `base`
    /// and checking that every input file exists.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, props) in ini.iter() {
            match name {
                None if props.is_empty() => {}
                None => return Err(Error::Config("keys must appear inside a [section]".into())),
                Some(s) if !SECTIONS.contains(&s) => {
                    return Err(Error::Config(format!(
                        "unknown section [{s}] (expected one of {})",
                        SECTIONS.join(", ")
                    )))
                }
                _ => {}
            }
        }

        let input = match (ini.section(Some("input")), ini.section(Some("synthetic"))) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either [input] files or a [synthetic] cohort, not both".into()))
            }
            (None, None) => return Err(Error::Config("no [input] or [synthetic] section".into())),
            (None, Some(_)) => {
                let spec: SyntheticSpec = typed(&ini, "synthetic", &[])?;
                spec.validate()?;
                InputSource::Synthetic(spec)
            }
            (Some(sec), None) => {
                for (k, _) in sec.iter() {
                    if !["features", "cohort", "mesh", "vertex_map"].contains(&k) {
                        return Err(Error::Config(format!("[input] unknown key `{k}`")));
                    }
                }
                let vertex_map = match sec.get("vertex_map") {
                    Some(_) => Some(existing(base, sec, "vertex_map")?),
                    None => None,
                };
                InputSource::Files {
                    features: existing(base, sec, "features")?,
                    cohort: existing(base, sec, "cohort")?,
                    mesh: existing(base, sec, "mesh")?,
                    vertex_map,
                }
            }
        };

        let solver: SolverOptions = typed(&ini, "solver", &[])?;
        let roi: RoiSettings = typed(&ini, "roi", &[])?;
        roi.validate()?;
        let stability: StabilitySettings = typed(&ini, "stability", &[])?;
        if !(stability.fraction > 0.0 && stability.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "[stability] fraction must lie in (0, 1], got {}",
                stability.fraction
            )));
        }
        let stats: StatsSettings = typed(&ini, "stats", &["percentiles"])?;
        if stats.percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::Config("[stats] percentiles must lie in [0, 100]".into()));
        }

        let out = ini
            .section(Some("output"))
            .ok_or_else(|| Error::Config("no [output] section".into()))?;
        let mut output = OutputSettings {
            dir: PathBuf::new(),
            format: MatrixFormat::Csv,
            write_components: true,
        };
        let mut have_dir = false;
        for (k, v) in out.iter() {
            match k {
                "dir" => {
                    output.dir = base.join(v.trim());
                    have_dir = true;
                }
                "format" => output.format = v.trim().parse().map_err(|e| Error::Config(format!("[output] {e}")))?,
                "write_components" => {
                    output.write_components = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config("[output] write_components must be true or false".into()))?
                }
                other => return Err(Error::Config(format!("[output] unknown key `{other}`"))),
            }
        }
        if !have_dir {
            return Err(Error::Config("[output] is missing `dir`".into()));
        }

        Ok(PipelineConfig {
            input,
            solver,
            roi,
            stability,
            stats,
            output,
        })
    }

    /// Sets every seed from one base value.
    pub fn reseed(&mut self, seed: u64) {
        self.solver.seed = seed;
        self.roi.seed = seed;
        self.stability.seed = seed;
        self.stats.seed = seed;
        if let InputSource::Synthetic(spec) = &mut self.input {
            spec.seed = seed;
        }
    }

    /// Parameter record for the manifest: everything except file locations,
    /// which the manifest records through their content hashes.
    pub fn parameters(&self) -> Value {
        let input = match &self.input {
            InputSource::Files { vertex_map, .. } => serde_json::json!({
                "source": "files",
                "vertex_map": vertex_map.is_some(),
            }),
            InputSource::Synthetic(spec) => serde_json::json!({ "source": "synthetic", "spec": spec }),
        };
        serde_json::json!({
            "input": input,
            "solver": self.solver,
            "roi": self.roi,
            "stability": self.stability,
            "stats": self.stats,
            "output": { "format": self.output.format, "write_components": self.output.write_components },
        })
    }
}

/// Configuration text for a synthetic run with every default spelled out.
pub fn synthetic_config_text(spec: &SyntheticSpec, out_dir: &str) -> String {
    let mut text = String::from("[synthetic]\n");
    if let Value::Object(map) = serde_json::to_value(spec).unwrap_or_default() {
        for (k, v) in map {
            text.push_str(&format!("{k} = {v}\n"));
        }
    }
    text.push_str(&files_tail(out_dir));
    text
}

/// Configuration text for files produced by `simulate`.
pub fn files_config_text(features: &str, cohort: &str, mesh: &str, out_dir: &str) -> String {
    format!("[input]\nfeatures = {features}\ncohort = {cohort}\nmesh = {mesh}\n{}", files_tail(out_dir))
}

fn files_tail(out_dir: &str) -> String {
    let solver = SolverOptions::default();
    let roi = RoiSettings::default();
    let stats = StatsSettings::default();
    let pct: Vec<String> = stats.percentiles.iter().map(|p| p.to_string()).collect();
    format!(
        "\n[solver]\nlambda = group_scaled\nalpha = {}\ntau = {}\nmax_iters = {}\nseed = {}\n\
         \n[roi]\nmethod = {}\nn_perm = {}\nthreshold = {}\nseed = {}\n\
         \n[stability]\nfolds = 0\nfraction = 0.9\ncompare_raw = true\nseed = 0\n\
         \n[stats]\nreduction = {}\npower = {}\nalpha = {}\ninterval_years = {}\npercentiles = {}\nn_boot = {}\nseed = {}\n\
         \n[output]\ndir = {out_dir}\nformat = csv\nwrite_components = true\n",
        solver.alpha,
        solver.tau,
        solver.max_iters,
        solver.seed,
        roi.method,
        roi.n_perm,
        roi.threshold,
        roi.seed,
        stats.reduction,
        stats.power,
        stats.alpha,
        stats.interval_years,
        pct.join(","),
        stats.n_boot,
        stats.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::LambdaChoice;

    #[test]
    fn synthetic_defaults_round_trip() {
        let text = synthetic_config_text(&SyntheticSpec::default(), "out");
        let cfg = PipelineConfig::parse(&text, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.input, InputSource::Synthetic(SyntheticSpec::default()));
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.roi, RoiSettings::default());
        assert_eq!(cfg.stats, StatsSettings::default());
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn lambda_accepts_names_and_numbers() {
        let base = "[synthetic]\nseed = 1\n[output]\ndir = o\n[solver]\n";
        let cfg = PipelineConfig::parse(&format!("{base}lambda = 0.01\n"), Path::new(".")).unwrap();
        assert_eq!(cfg.solver.lambda, LambdaChoice::Fixed(0.01));
        let cfg = PipelineConfig::parse(&format!("{base}lambda = default\n"), Path::new(".")).unwrap();
        assert_eq!(cfg.solver.lambda, LambdaChoice::Default);
        assert!(PipelineConfig::parse(&format!("{base}lambda = huge\n"), Path::new(".")).is_err());
    }

    #[test]
    fn typos_are_rejected() {
        let err = PipelineConfig::parse("[synthetic]\n[output]\ndir = o\n[solver]\nalpah = 1.2\n", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("[solver]") && err.contains("alpah"), "{err}");
        let err = PipelineConfig::parse("[synthetic]\n[output]\ndir = o\n[extra]\n", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("[extra]"), "{err}");
    }

    #[test]
    fn missing_mesh_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f.csv"), "a\n1\n").unwrap();
        std::fs::write(dir.path().join("c.csv"), "x\n").unwrap();
        let text = "[input]\nfeatures = f.csv\ncohort = c.csv\nmesh = nowhere.txt\n[output]\ndir = out\n";
        let err = PipelineConfig::parse(text, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("mesh"), "{err}");
    }

    #[test]
    fn unattainable_roi_threshold_is_rejected_at_parse_time() {
        let text = "[synthetic]\n[roi]\nn_perm = 100\nthreshold = 0.001\n[output]\ndir = o\n";
        assert!(matches!(PipelineConfig::parse(text, Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn percentile_lists() {
        let text = "[synthetic]\n[stats]\npercentiles = 50, 80\n[output]\ndir = o\n";
        let cfg = PipelineConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(cfg.stats.percentiles, vec![50.0, 80.0]);
    }
}
