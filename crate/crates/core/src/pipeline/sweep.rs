//! Sparsity-weight sweep on a fixed synthetic instance: rank and sparse-norm
//! curves of each group's decomposition, and the holdout classification
//! error of the index built at each weight, averaged over repeated splits.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cohort::{Group, Timepoint};
use crate::error::{Error, Result};
use crate::mesh::LocalGroups;
use crate::par::map_indices;
use crate::rng::{self, substream};
use crate::roi::{extract_roi, RoiSettings};
use crate::solver::{decompose, default_lambda, group_scaled_lambda, DecompositionResult, LambdaChoice, SolverOptions};
use crate::stats::{roc, Orientation};
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::umi::build_template;

/// `0.003, 0.004, ..., 0.014`.
pub fn table_grid() -> Vec<f64> {
    (3..=14).map(|k| k as f64 / 1000.0).collect()
}

/// Grid value that maps onto the reference weight in relative mode.
pub const GRID_CENTRE: f64 = 0.0082;

/// How grid values become solver weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    /// Grid values are used as they are.
    Absolute,
    /// A grid value `g` becomes `g / GRID_CENTRE` times the reference weight
    /// the solver options would pick for the matrix at hand, so the grid
    /// spans the same multiples of the default on any mesh size.
    Relative,
}

impl FromStr for GridScale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "absolute" => Ok(GridScale::Absolute),
            "relative" => Ok(GridScale::Relative),
            other => Err(format!("unknown grid scale `{other}` (expected absolute or relative)")),
        }
    }
}

impl fmt::Display for GridScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridScale::Absolute => "absolute",
            GridScale::Relative => "relative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub spec: SyntheticSpec,
    pub grid: Vec<f64>,
    pub scale: GridScale,
    /// Fraction of each group held out for classification in every repeat.
    pub holdout_fraction: f64,
    pub repeats: usize,
    pub roi: RoiSettings,
    /// The reference weight comes from `lambda`; every other field applies
    /// unchanged at each grid value.
    pub solver: SolverOptions,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            spec: SyntheticSpec::default(),
            grid: table_grid(),
            scale: GridScale::Relative,
            holdout_fraction: 0.1,
            repeats: 10,
            roi: RoiSettings {
                n_perm: 1000,
                threshold: 0.01,
                ..RoiSettings::default()
            },
            solver: SolverOptions {
                lambda: LambdaChoice::Default,
                ..SolverOptions::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub grid_value: f64,
    /// Weight handed to the solver for the full AD group.
    pub lambda: f64,
    pub rank_ad: usize,
    pub rank_cu: usize,
    pub sparse_norm_ad: f64,
    pub sparse_norm_cu: f64,
    /// Mean ROI size over the repeats.
    pub roi_size: f64,
    /// Holdout misclassification rate averaged over the repeats; a repeat
    /// with an empty ROI counts as chance (0.5).
    pub classification_error: f64,
    pub empty_roi_repeats: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub holdout_ad: usize,
    pub holdout_cu: usize,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "grid_value,lambda,rank_ad,rank_cu,sparse_norm_ad,sparse_norm_cu,roi_size,classification_error,empty_roi_repeats\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.grid_value,
                p.lambda,
                p.rank_ad,
                p.rank_cu,
                p.sparse_norm_ad,
                p.sparse_norm_cu,
                p.roi_size,
                p.classification_error,
                p.empty_roi_repeats
            ));
        }
        out
    }

    /// Index of the smallest classification error, ties to the smallest
    /// weight.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if p.classification_error < self.points[best].classification_error {
                best = i;
            }
        }
        best
    }
}

fn split(n: usize, holdout_fraction: f64, rng: &mut rng::Rng) -> (Vec<usize>, Vec<usize>) {
    let k = ((holdout_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(2));
    let mut idx: Vec<usize> = (0..n).collect();
    rng::shuffle(rng, &mut idx);
    let mut hold = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

struct Sweeper<'a> {
    cfg: &'a SweepConfig,
    groups: LocalGroups,
}

impl Sweeper<'_> {
    fn lambda_for(&self, grid_value: f64, a: &DMatrix<f64>) -> f64 {
        let (m, n) = a.shape();
        match self.cfg.scale {
            GridScale::Absolute => grid_value,
            GridScale::Relative => {
                let reference = match self.cfg.solver.lambda {
                    LambdaChoice::Default => default_lambda(m, n),
                    LambdaChoice::GroupScaled => group_scaled_lambda(m, n, &self.groups),
                    LambdaChoice::Fixed(v) => v,
                };
                grid_value / GRID_CENTRE * reference
            }
        }
    }

    fn decompose(&self, grid_value: f64, a: &DMatrix<f64>) -> Result<DecompositionResult> {
        let opts = SolverOptions {
            lambda: LambdaChoice::Fixed(self.lambda_for(grid_value, a)),
            ..self.cfg.solver
        };
        let scfg = opts.config_for(a, &self.groups)?;
        decompose(a, &self.groups, &scfg)
    }

    /// Holdout error of one split, `None` when the ROI is empty.
    fn split_error(
        &self,
        grid_value: f64,
        ad: &DMatrix<f64>,
        cu: &DMatrix<f64>,
        (ad_train, ad_hold): &(Vec<usize>, Vec<usize>),
        (cu_train, cu_hold): &(Vec<usize>, Vec<usize>),
        repeat: usize,
    ) -> Result<(Option<f64>, usize)> {
        let la = self.decompose(grid_value, &ad.select_columns(ad_train.iter()))?.low_rank;
        let lc = self.decompose(grid_value, &cu.select_columns(cu_train.iter()))?.low_rank;
        let roi_cfg = RoiSettings {
            seed: self.cfg.roi.seed.wrapping_add(repeat as u64),
            ..self.cfg.roi
        };
        let roi = extract_roi(&la, &lc, &roi_cfg)?;
        if roi.count() == 0 {
            return Ok((None, 0));
        }
        let t = build_template(&la, &lc, &roi)?;
        let score = |m: &DMatrix<f64>, cols: &[usize]| -> Result<Vec<f64>> {
            cols.iter().map(|&j| t.umi(m.column(j).as_slice())).collect()
        };
        let mut train = score(ad, ad_train)?;
        train.extend(score(cu, cu_train)?);
        let labels: Vec<bool> = (0..train.len()).map(|k| k < ad_train.len()).collect();
        let cutoff = roc(&train, &labels, Orientation::HigherIsPositive)?.optimal_cutoff;
        let wrong_ad = score(ad, ad_hold)?.iter().filter(|&&u| u < cutoff).count();
        let wrong_cu = score(cu, cu_hold)?.iter().filter(|&&u| u >= cutoff).count();
        let err = (wrong_ad + wrong_cu) as f64 / (ad_hold.len() + cu_hold.len()) as f64;
        Ok((Some(err), roi.count()))
    }
}

/// Decomposes both reference groups at every grid value and estimates the
/// holdout classification error of the resulting index.
pub fn sweep_lambda(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.grid.is_empty() || cfg.grid.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("lambda grid must be nonempty and positive".into()));
    }
    if !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0) {
        return Err(Error::Config("holdout fraction must lie in (0, 1)".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Config("at least one repeat is needed".into()));
    }
    cfg.roi.validate()?;
    let syn = generate_synthetic(&cfg.spec)?;
    let ad = syn.matrix(Group::AD, Timepoint::Baseline).data;
    let cu = syn.matrix(Group::CU, Timepoint::Baseline).data;
    if ad.ncols() < 4 || cu.ncols() < 4 {
        return Err(Error::Config("each group needs at least 4 subjects to hold some out".into()));
    }
    let splits: Vec<_> = (0..cfg.repeats)
        .map(|r| {
            let mut rng = substream(cfg.seed, r as u64);
            let a = split(ad.ncols(), cfg.holdout_fraction, &mut rng);
            let c = split(cu.ncols(), cfg.holdout_fraction, &mut rng);
            (a, c)
        })
        .collect();
    let sweeper = Sweeper {
        cfg,
        groups: LocalGroups::identity(&syn.mesh),
    };

    let points: Vec<Result<SweepPoint>> = map_indices(cfg.grid.len(), |i| {
        let g = cfg.grid[i];
        let ra = sweeper.decompose(g, &ad)?;
        let rc = sweeper.decompose(g, &cu)?;
        let mut total_err = 0.0;
        let mut total_roi = 0usize;
        let mut empty = 0;
        for (r, (sa, sc)) in splits.iter().enumerate() {
            let (err, size) = sweeper.split_error(g, &ad, &cu, sa, sc, r)?;
            match err {
                Some(e) => total_err += e,
                None => {
                    total_err += 0.5;
                    empty += 1;
                }
            }
            total_roi += size;
        }
        Ok(SweepPoint {
            grid_value: g,
            lambda: sweeper.lambda_for(g, &ad),
            rank_ad: ra.rank(),
            rank_cu: rc.rank(),
            sparse_norm_ad: ra.sparse_norm(),
            sparse_norm_cu: rc.sparse_norm(),
            roi_size: total_roi as f64 / cfg.repeats as f64,
            classification_error: total_err / cfg.repeats as f64,
            empty_roi_repeats: empty,
            converged: ra.converged && rc.converged,
        })
    });
    let (ad_hold, cu_hold) = (&splits[0].0 .1, &splits[0].1 .1);
    Ok(SweepResult {
        holdout_ad: ad_hold.len(),
        holdout_cu: cu_hold.len(),
        points: points.into_iter().collect::<Result<_>>()?,
    })
}
