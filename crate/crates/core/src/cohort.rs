//! Subject metadata: diagnostic group, amyloid status, timepoint, clinical
//! scores, optional survival follow-up, and the feature-matrix column each
//! row refers to.
//!
//! CSV columns (header required, order free):
//! `subject_id,group,amyloid,timepoint,feature_column` plus the optional
//! `mmse,cdr_sb,adas_cog11,avlt_total,surv_time,surv_event`. Empty cells
//! are missing values.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    AD,
    MCI,
    CU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Amyloid {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timepoint {
    Baseline,
    M24,
}

impl FromStr for Group {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AD" => Ok(Group::AD),
            "MCI" => Ok(Group::MCI),
            "CU" => Ok(Group::CU),
            other => Err(format!("unknown group `{other}` (expected AD, MCI or CU)")),
        }
    }
}

impl FromStr for Amyloid {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Amyloid::Positive),
            "negative" | "neg" | "-" => Ok(Amyloid::Negative),
            other => Err(format!("unknown amyloid status `{other}` (expected positive or negative)")),
        }
    }
}

impl FromStr for Timepoint {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "bl" => Ok(Timepoint::Baseline),
            "m24" => Ok(Timepoint::M24),
            other => Err(format!("unknown timepoint `{other}` (expected baseline or m24)")),
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::AD => "AD",
            Group::MCI => "MCI",
            Group::CU => "CU",
        })
    }
}

impl fmt::Display for Amyloid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Amyloid::Positive => "positive",
            Amyloid::Negative => "negative",
        })
    }
}

impl fmt::Display for Timepoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timepoint::Baseline => "baseline",
            Timepoint::M24 => "m24",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClinicalScores {
    pub mmse: Option<f64>,
    pub cdr_sb: Option<f64>,
    pub adas_cog11: Option<f64>,
    pub avlt_total: Option<f64>,
}

impl ClinicalScores {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mmse" => self.mmse,
            "cdr_sb" => self.cdr_sb,
            "adas_cog11" => self.adas_cog11,
            "avlt_total" => self.avlt_total,
            _ => None,
        }
    }
}

pub const SCORE_NAMES: [&str; 4] = ["mmse", "cdr_sb", "adas_cog11", "avlt_total"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub subject_id: String,
    pub group: Group,
    pub amyloid: Amyloid,
    pub timepoint: Timepoint,
    pub scores: ClinicalScores,
    pub feature_column: usize,
    /// Months to conversion or censoring.
    pub surv_time: Option<f64>,
    pub surv_event: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub rows: Vec<CohortRow>,
}

const REQUIRED: [&str; 5] = ["subject_id", "group", "amyloid", "timepoint", "feature_column"];

impl CohortTable {
    pub fn new(rows: Vec<CohortRow>) -> Result<Self> {
        let table = CohortTable { rows };
        table.check_unique()?;
        Ok(table)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if !seen.insert((row.subject_id.as_str(), row.timepoint)) {
                return Err(Error::Input(format!(
                    "cohort row {}: duplicate subject `{}` at timepoint {}",
                    i + 1,
                    row.subject_id,
                    row.timepoint
                )));
            }
        }
        Ok(())
    }

    /// Checks that every row points at an existing column and that each
    /// timepoint's row count matches the columns referenced for it.
    pub fn validate_against(&self, ncols: usize) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.feature_column >= ncols {
                return Err(Error::Input(format!(
                    "cohort row {} (subject `{}`): feature column {} out of range for a matrix with {} columns",
                    i + 1,
                    row.subject_id,
                    row.feature_column,
                    ncols
                )));
            }
        }
        let mut used = HashSet::new();
        for row in &self.rows {
            if !used.insert(row.feature_column) {
                return Err(Error::Input(format!(
                    "feature column {} is referenced by more than one cohort row",
                    row.feature_column
                )));
            }
        }
        if self.rows.len() != ncols {
            return Err(Error::Dimension(format!(
                "feature matrix has {ncols} columns but the cohort table has {} rows",
                self.rows.len()
            )));
        }
        Ok(())
    }

    pub fn select(&self, group: Group, amyloid: Option<Amyloid>, timepoint: Timepoint) -> Vec<&CohortRow> {
        self.rows
            .iter()
            .filter(|r| r.group == group && r.timepoint == timepoint && amyloid.is_none_or(|a| r.amyloid == a))
            .collect()
    }

    pub fn columns(&self, group: Group, amyloid: Option<Amyloid>, timepoint: Timepoint) -> Vec<usize> {
        self.select(group, amyloid, timepoint)
            .into_iter()
            .map(|r| r.feature_column)
            .collect()
    }

    /// Subjects observed at both timepoints: `(subject, baseline row, m24 row)`,
    /// in baseline row order.
    pub fn longitudinal_pairs(&self, group: Group, amyloid: Option<Amyloid>) -> Vec<(&CohortRow, &CohortRow)> {
        let followups: BTreeMap<&str, &CohortRow> = self
            .select(group, amyloid, Timepoint::M24)
            .into_iter()
            .map(|r| (r.subject_id.as_str(), r))
            .collect();
        self.select(group, amyloid, Timepoint::Baseline)
            .into_iter()
            .filter_map(|b| followups.get(b.subject_id.as_str()).map(|f| (b, *f)))
            .collect()
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        for name in REQUIRED {
            if !header.iter().any(|h| h == name) {
                return Err(Error::parse("cohort csv header", format!("missing column `{name}`")));
            }
        }
        let idx = |name: &str| header.iter().position(|h| h == name);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            if rec.len() != header.len() {
                return Err(Error::parse(
                    format!("cohort csv row {line}"),
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            let cell = |name: &str| idx(name).map(|k| rec[k].trim()).filter(|s| !s.is_empty());
            let required = |name: &str| {
                cell(name).ok_or_else(|| Error::parse(format!("cohort csv row {line}"), format!("`{name}` is empty")))
            };
            let bad = |name: &str, msg: String| Error::parse(format!("cohort csv row {line}, column `{name}`"), msg);
            let number = |name: &str| -> Result<Option<f64>> {
                cell(name)
                    .map(|s| s.parse::<f64>().map_err(|_| bad(name, format!("`{s}` is not a number"))))
                    .transpose()
            };
            let event = cell("surv_event")
                .map(|s| match s.to_ascii_lowercase().as_str() {
                    "1" | "true" | "yes" => Ok(true),
                    "0" | "false" | "no" => Ok(false),
                    _ => Err(bad("surv_event", format!("`{s}` is not a boolean"))),
                })
                .transpose()?;
            let surv_time = number("surv_time")?;
            if surv_time.is_some_and(|t| !(t >= 0.0)) {
                return Err(bad("surv_time", "survival time must be nonnegative".into()));
            }
            rows.push(CohortRow {
                subject_id: required("subject_id")?.to_owned(),
                group: required("group")?.parse().map_err(|e| bad("group", e))?,
                amyloid: required("amyloid")?.parse().map_err(|e| bad("amyloid", e))?,
                timepoint: required("timepoint")?.parse().map_err(|e| bad("timepoint", e))?,
                feature_column: required("feature_column")?
                    .parse()
                    .map_err(|_| bad("feature_column", "not a column index".into()))?,
                scores: ClinicalScores {
                    mmse: number("mmse")?,
                    cdr_sb: number("cdr_sb")?,
                    adas_cog11: number("adas_cog11")?,
                    avlt_total: number("avlt_total")?,
                },
                surv_time,
                surv_event: event,
            });
        }
        CohortTable::new(rows)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "subject_id",
            "group",
            "amyloid",
            "timepoint",
            "feature_column",
            "mmse",
            "cdr_sb",
            "adas_cog11",
            "avlt_total",
            "surv_time",
            "surv_event",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.subject_id.clone(),
                r.group.to_string(),
                r.amyloid.to_string(),
                r.timepoint.to_string(),
                r.feature_column.to_string(),
                opt(r.scores.mmse),
                opt(r.scores.cdr_sb),
                opt(r.scores.adas_cog11),
                opt(r.scores.avlt_total),
                opt(r.surv_time),
                r.surv_event.map(|e| (e as u8).to_string()).unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<cohort csv>", e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Parse { context, message } => Error::Parse {
                context: format!("{}: {context}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Loads and cross-checks features, cohort table and mesh.
pub fn load_cohort(
    features_path: &Path,
    cohort_path: &Path,
    mesh_path: &Path,
) -> Result<(FeatureMatrix, CohortTable, TriangleMesh)> {
    let mesh = TriangleMesh::load(mesh_path)?;
    let features = FeatureMatrix::load(features_path)?;
    let cohort = CohortTable::load(cohort_path)?;
    if features.nrows() != mesh.vertex_count() {
        return Err(Error::Dimension(format!(
            "feature matrix has {} rows but the mesh has {} vertices",
            features.nrows(),
            mesh.vertex_count()
        )));
    }
    cohort.validate_against(features.ncols())?;
    let bad = features.nonpositive_count();
    if bad > 0 {
        log::warn!("{bad} feature values are not positive; radial distances are lengths");
    }
    Ok((features, cohort, mesh))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "subject_id,group,amyloid,timepoint,feature_column,mmse,surv_time,surv_event\n\
                          a,AD,positive,baseline,0,21,,\n\
                          b,CU,negative,baseline,1,29.5,36,0\n\
                          a,AD,positive,m24,2,,,\n";

    #[test]
    fn parses_and_round_trips() {
        let t = CohortTable::read_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0].scores.mmse, Some(21.0));
        assert_eq!(t.rows[1].surv_event, Some(false));
        assert_eq!(t.rows[2].timepoint, Timepoint::M24);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(CohortTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn duplicate_subject_timepoint_is_rejected() {
        let text = "subject_id,group,amyloid,timepoint,feature_column\na,AD,positive,baseline,0\na,AD,positive,baseline,1\n";
        let err = CohortTable::read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unknown_enum_names_the_row() {
        let text = "subject_id,group,amyloid,timepoint,feature_column\na,XX,positive,baseline,0\n";
        let err = CohortTable::read_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("group"), "{err}");
    }

    #[test]
    fn column_count_mismatch_names_both_counts() {
        let t = CohortTable::read_csv(SAMPLE.as_bytes()).unwrap();
        let err = t.validate_against(4).unwrap_err().to_string();
        assert!(err.contains('4') && err.contains('3'), "{err}");
        assert!(t.validate_against(2).is_err());
        t.validate_against(3).unwrap();
    }

    #[test]
    fn selection_and_pairs() {
        let t = CohortTable::read_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.columns(Group::AD, None, Timepoint::Baseline), vec![0]);
        assert_eq!(t.columns(Group::CU, Some(Amyloid::Positive), Timepoint::Baseline), Vec::<usize>::new());
        let pairs = t.longitudinal_pairs(Group::AD, Some(Amyloid::Positive));
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].1.feature_column, 2);
    }
}
