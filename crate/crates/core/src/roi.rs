//! Region-of-interest extraction: per-vertex two-sample t statistics,
//! a Monte Carlo permutation test over whole-subject relabelings,
//! Benjamini-Hochberg selection, and fold-stability counting.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::mesh::{LocalGroups, TriangleMesh, VertexMap};
use crate::par::map_indices;
use crate::rng::{self, substream};
use crate::solver::{decompose, SolverOptions};

/// One group's matrix (rows = vertices, columns = subjects) and its label.
#[derive(Debug, Clone)]
pub struct GroupSample {
    pub matrix: FeatureMatrix,
    pub label: String,
}

impl GroupSample {
    pub fn new(matrix: FeatureMatrix, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if matrix.ncols() < 2 {
            return Err(Error::Input(format!(
                "group `{label}` has {} subjects; at least 2 are needed",
                matrix.ncols()
            )));
        }
        Ok(GroupSample { matrix, label })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.matrix.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiMethod {
    Permutation,
    Fdr,
}

impl FromStr for RoiMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "permutation" => Ok(RoiMethod::Permutation),
            "fdr" => Ok(RoiMethod::Fdr),
            other => Err(format!("unknown ROI method `{other}` (expected permutation or fdr)")),
        }
    }
}

impl fmt::Display for RoiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoiMethod::Permutation => "permutation",
            RoiMethod::Fdr => "fdr",
        })
    }
}

/// Per-row selection. Rows are matrix rows; writers translate them to mesh
/// vertices through a [`VertexMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMask {
    pub selected: Vec<bool>,
    pub p_values: Vec<f64>,
    pub threshold: f64,
    pub method: RoiMethod,
}

impl RoiMask {
    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }

    /// CSV `vertex,p,selected`, one line per vertex in vertex order.
    pub fn to_csv(&self, map: &VertexMap) -> String {
        let mut out = String::from("vertex,p,selected\n");
        for q in 0..map.len() {
            let row = map.row(q);
            out.push_str(&format!("{q},{},{}\n", self.p_values[row], self.selected[row] as u8));
        }
        out
    }

    /// Parses [`RoiMask::to_csv`] output back into row order.
    pub fn from_csv(text: &str, map: &VertexMap, threshold: f64, method: RoiMethod) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let m = map.len();
        let mut p_values = vec![f64::NAN; m];
        let mut selected = vec![false; m];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let ctx = || format!("ROI csv row {}", i + 1);
            let q: usize = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(ctx(), "bad vertex index"))?;
            if q >= m {
                return Err(Error::parse(ctx(), format!("vertex {q} out of range")));
            }
            let p: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(ctx(), "bad p-value"))?;
            let sel = match rec.get(2) {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") => false,
                _ => return Err(Error::parse(ctx(), "selected must be 0 or 1")),
            };
            p_values[map.row(q)] = p;
            selected[map.row(q)] = sel;
        }
        if p_values.iter().any(|p| p.is_nan()) {
            return Err(Error::parse("ROI csv", format!("expected one line for each of {m} vertices")));
        }
        Ok(RoiMask {
            selected,
            p_values,
            threshold,
            method,
        })
    }

    /// Mesh overlay with `-log10(p)` per vertex.
    pub fn overlay(&self, mesh: &TriangleMesh, map: &VertexMap) -> Result<String> {
        let scalars: Vec<f64> = (0..map.len()).map(|q| -self.p_values[map.row(q)].log10()).collect();
        mesh.overlay_text(&scalars)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    /// Per row: number of folds selecting it.
    pub counts: Vec<usize>,
    pub n_folds: usize,
}

impl StabilityMap {
    /// Among rows selected at least once, the fraction selected in every fold.
    pub fn full_count_fraction(&self) -> f64 {
        let ever = self.counts.iter().filter(|&&c| c > 0).count();
        if ever == 0 {
            return 0.0;
        }
        self.counts.iter().filter(|&&c| c == self.n_folds).count() as f64 / ever as f64
    }

    pub fn to_csv(&self, map: &VertexMap) -> String {
        let mut out = String::from("vertex,count\n");
        for q in 0..map.len() {
            out.push_str(&format!("{q},{}\n", self.counts[map.row(q)]));
        }
        out
    }

    pub fn overlay(&self, mesh: &TriangleMesh, map: &VertexMap) -> Result<String> {
        let scalars: Vec<f64> = (0..map.len()).map(|q| self.counts[map.row(q)] as f64).collect();
        mesh.overlay_text(&scalars)
    }
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.ncols() < 2 || b.ncols() < 2 {
        return Err(Error::Input(format!(
            "two-sample test needs at least 2 subjects per group, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "groups cover {} and {} vertices",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("group matrices contain non-finite values".into()));
    }
    Ok(())
}

fn pooled_t(mean_a: f64, mean_b: f64, ss: f64, na: f64, nb: f64) -> f64 {
    let diff = mean_a - mean_b;
    let var = ss / (na + nb - 2.0);
    if var > 0.0 {
        diff / (var * (1.0 / na + 1.0 / nb)).sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Pooled-variance two-sample t statistic for every row of `a` against the
/// same row of `b`. Rows with zero variance in both groups and equal means
/// give 0.
pub fn two_sample_t(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let (na, nb) = (a.ncols() as f64, b.ncols() as f64);
    let mut out = Vec::with_capacity(a.nrows());
    for p in 0..a.nrows() {
        let ra = a.row(p);
        let rb = b.row(p);
        let ma = ra.iter().sum::<f64>() / na;
        let mb = rb.iter().sum::<f64>() / nb;
        let ss = ra.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() + rb.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>();
        out.push(pooled_t(ma, mb, ss, na, nb));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub t_observed: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_perm: usize,
}

/// Smallest p-value the add-one estimator can produce.
pub fn min_p_value(n_perm: usize) -> f64 {
    1.0 / (n_perm as f64 + 1.0)
}

/// Row-centred pooled data plus per-row sums used by the fast statistic.
struct Pooled {
    data: DMatrix<f64>,
    total: Vec<f64>,
    total_sq: Vec<f64>,
    constant: Vec<bool>,
    na: usize,
}

impl Pooled {
    fn new(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        let (m, na, nb) = (a.nrows(), a.ncols(), b.ncols());
        let mut data = DMatrix::zeros(m, na + nb);
        data.columns_mut(0, na).copy_from(a);
        data.columns_mut(na, nb).copy_from(b);
        let mut constant = vec![false; m];
        let n = (na + nb) as f64;
        for p in 0..m {
            let first = data[(p, 0)];
            constant[p] = data.row(p).iter().all(|&v| v == first);
            let mu = data.row(p).iter().sum::<f64>() / n;
            data.row_mut(p).add_scalar_mut(-mu);
        }
        let total = data.row_iter().map(|r| r.iter().sum()).collect();
        let total_sq = data.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
        Pooled {
            data,
            total,
            total_sq,
            constant,
            na,
        }
    }

    /// |t| per row for the relabeling whose first group is `cols_a`.
    fn abs_t(&self, cols_a: &[usize], out: &mut [f64], sum_a: &mut [f64], sq_a: &mut [f64]) {
        sum_a.fill(0.0);
        sq_a.fill(0.0);
        for &c in cols_a {
            let col = self.data.column(c);
            for (p, &v) in col.iter().enumerate() {
                sum_a[p] += v;
                sq_a[p] += v * v;
            }
        }
        let na = self.na as f64;
        let nb = (self.data.ncols() - self.na) as f64;
        for p in 0..out.len() {
            if self.constant[p] {
                out[p] = 0.0;
                continue;
            }
            let sb = self.total[p] - sum_a[p];
            let qb = self.total_sq[p] - sq_a[p];
            let ma = sum_a[p] / na;
            let mb = sb / nb;
            let ss = (sq_a[p] - sum_a[p] * ma + qb - sb * mb).max(0.0);
            out[p] = pooled_t(ma, mb, ss, na, nb).abs();
        }
    }
}

const PERM_BLOCK: usize = 64;

/// Monte Carlo permutation test. Every replicate reshuffles the pooled
/// subject labels once (from its own substream of `seed`) and the same
/// relabeling is applied to all vertices. `p = (1 + #{|t_perm| >= |t_obs|}) /
/// (n_perm + 1)`.
pub fn permutation_t_test(a: &DMatrix<f64>, b: &DMatrix<f64>, n_perm: usize, seed: u64) -> Result<PermutationResult> {
    check_pair(a, b)?;
    if n_perm == 0 {
        return Err(Error::Input("permutation count must be positive".into()));
    }
    let m = a.nrows();
    let pooled = Pooled::new(a, b);
    let n = a.ncols() + b.ncols();
    let identity: Vec<usize> = (0..a.ncols()).collect();
    let mut observed = vec![0.0; m];
    pooled.abs_t(&identity, &mut observed, &mut vec![0.0; m], &mut vec![0.0; m]);
    // relabelings equivalent to the observed one reproduce |t_obs| only up
    // to rounding
    let bar: Vec<f64> = observed.iter().map(|t| t * (1.0 - 1e-12)).collect();

    let blocks = n_perm.div_ceil(PERM_BLOCK);
    let partial: Vec<Vec<u32>> = map_indices(blocks, |blk| {
        let mut counts = vec![0u32; m];
        let mut labels: Vec<usize> = (0..n).collect();
        let (mut t, mut s, mut q) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let start = blk * PERM_BLOCK;
        for k in start..(start + PERM_BLOCK).min(n_perm) {
            let mut rng = substream(seed, k as u64);
            for (i, l) in labels.iter_mut().enumerate() {
                *l = i;
            }
            rng::shuffle(&mut rng, &mut labels);
            pooled.abs_t(&labels[..pooled.na], &mut t, &mut s, &mut q);
            for p in 0..m {
                if t[p] >= bar[p] {
                    counts[p] += 1;
                }
            }
        }
        counts
    });
    let mut exceed = vec![0u64; m];
    for counts in partial {
        for (e, c) in exceed.iter_mut().zip(counts) {
            *e += c as u64;
        }
    }
    let t_observed = two_sample_t(a, b)?;
    let p_values = exceed
        .iter()
        .map(|&e| (1.0 + e as f64) / (n_perm as f64 + 1.0))
        .collect();
    Ok(PermutationResult {
        t_observed,
        p_values,
        n_perm,
    })
}

/// Strict threshold selection `p < threshold`.
pub fn select_roi(p_values: &[f64], threshold: f64) -> Result<RoiMask> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Input(format!("p threshold must lie in (0, 1], got {threshold}")));
    }
    Ok(RoiMask {
        selected: p_values.iter().map(|&p| p < threshold).collect(),
        p_values: p_values.to_vec(),
        threshold,
        method: RoiMethod::Permutation,
    })
}

/// Benjamini-Hochberg step-up selection at false discovery rate `q`.
pub fn fdr_select(p_values: &[f64], q: f64) -> Result<RoiMask> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Input(format!("FDR level must lie in (0, 1), got {q}")));
    }
    let v = p_values.len();
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut cut = None;
    for (k, &i) in order.iter().enumerate() {
        if p_values[i] <= (k + 1) as f64 * q / v as f64 {
            cut = Some(p_values[i]);
        }
    }
    Ok(RoiMask {
        selected: p_values.iter().map(|&p| cut.is_some_and(|c| p <= c)).collect(),
        p_values: p_values.to_vec(),
        threshold: q,
        method: RoiMethod::Fdr,
    })
}

/// Settings for one ROI extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSettings {
    pub method: RoiMethod,
    pub n_perm: usize,
    /// Permutation p threshold, or the FDR level for `Fdr`.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RoiSettings {
    fn default() -> Self {
        RoiSettings {
            method: RoiMethod::Permutation,
            n_perm: 5000,
            threshold: 1e-3,
            seed: 0,
        }
    }
}

impl RoiSettings {
    /// Rejects permutation thresholds at or below the add-one floor, which
    /// could never select anything.
    pub fn validate(&self) -> Result<()> {
        if self.n_perm == 0 {
            return Err(Error::Config("permutation count must be positive".into()));
        }
        if self.method == RoiMethod::Permutation && self.threshold <= min_p_value(self.n_perm) {
            return Err(Error::Config(format!(
                "p threshold {} is unattainable with {} permutations: the smallest possible p-value is 1/{} = {:.3e}; \
                 raise the permutation count to at least {} or the threshold",
                self.threshold,
                self.n_perm,
                self.n_perm + 1,
                min_p_value(self.n_perm),
                (1.0 / self.threshold).ceil() as u64
            )));
        }
        Ok(())
    }
}

/// Permutation test followed by the configured selection rule.
pub fn extract_roi(a: &DMatrix<f64>, b: &DMatrix<f64>, settings: &RoiSettings) -> Result<RoiMask> {
    settings.validate()?;
    let perm = permutation_t_test(a, b, settings.n_perm, settings.seed)?;
    match settings.method {
        RoiMethod::Permutation => select_roi(&perm.p_values, settings.threshold),
        RoiMethod::Fdr => fdr_select(&perm.p_values, settings.threshold),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n_folds: usize,
    /// Fraction of each group's subjects kept per fold.
    pub fraction: f64,
    pub roi: RoiSettings,
    pub solver: SolverOptions,
    /// Test decomposed low-rank components (true) or the raw features.
    pub low_rank: bool,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            n_folds: 10,
            fraction: 0.9,
            roi: RoiSettings::default(),
            solver: SolverOptions::default(),
            low_rank: true,
            seed: 0,
        }
    }
}

/// Low-rank component of one group's matrix.
pub fn low_rank_component(a: &DMatrix<f64>, groups: &LocalGroups, solver: &SolverOptions) -> Result<DMatrix<f64>> {
    let cfg = solver.config_for(a, groups)?;
    let res = decompose(a, groups, &cfg)?;
    if !res.converged {
        log::warn!("decomposition stopped at the iteration limit ({} iterations)", res.iters);
    }
    Ok(res.low_rank)
}

fn subsample(n: usize, fraction: f64, rng: &mut rng::Rng) -> Vec<usize> {
    let keep = ((fraction * n as f64).round() as usize).clamp(2.min(n), n);
    let mut idx: Vec<usize> = (0..n).collect();
    rng::shuffle(rng, &mut idx);
    let mut kept = idx[..keep].to_vec();
    kept.sort_unstable();
    kept
}

/// Repeats subsample, decompose (optional), test and select `n_folds`
/// times and counts how often each row is selected. Subsampling is without
/// replacement and stratified by group.
pub fn stability_folds(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    groups: &LocalGroups,
    cfg: &StabilityConfig,
) -> Result<StabilityMap> {
    check_pair(a, b)?;
    if cfg.n_folds == 0 {
        return Err(Error::Config("fold count must be positive".into()));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::Config(format!("fold fraction must lie in (0, 1], got {}", cfg.fraction)));
    }
    cfg.roi.validate()?;
    let masks: Vec<Result<Vec<bool>>> = map_indices(cfg.n_folds, |fold| {
        let run = || -> Result<Vec<bool>> {
            let mut rng = substream(cfg.seed, fold as u64);
            let ca = subsample(a.ncols(), cfg.fraction, &mut rng);
            let cb = subsample(b.ncols(), cfg.fraction, &mut rng);
            let mut sa = a.select_columns(ca.iter());
            let mut sb = b.select_columns(cb.iter());
            if cfg.low_rank {
                sa = low_rank_component(&sa, groups, &cfg.solver)?;
                sb = low_rank_component(&sb, groups, &cfg.solver)?;
            }
            let roi = RoiSettings {
                seed: cfg.roi.seed.wrapping_add(fold as u64),
                ..cfg.roi
            };
            Ok(extract_roi(&sa, &sb, &roi)?.selected)
        };
        run().map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })
    });
    let mut counts = vec![0usize; a.nrows()];
    for mask in masks {
        for (c, s) in counts.iter_mut().zip(mask?) {
            *c += s as usize;
        }
    }
    Ok(StabilityMap {
        counts,
        n_folds: cfg.n_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn t_hand_value() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 3, &[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        let t = two_sample_t(&a, &b).unwrap();
        assert!((t[0] + 3.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(t[1], 0.0);
    }

    #[test]
    fn t_is_invariant_to_within_group_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(&mut rng, 5, 6);
        let b = gaussian(&mut rng, 5, 4);
        let shuffled = a.select_columns([3, 1, 5, 0, 2, 4].iter());
        let t1 = two_sample_t(&a, &b).unwrap();
        let t2 = two_sample_t(&shuffled, &b).unwrap();
        for (x, y) in t1.iter().zip(&t2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_groups_are_rejected() {
        let a = DMatrix::zeros(3, 1);
        let b = DMatrix::zeros(3, 4);
        assert!(two_sample_t(&a, &b).is_err());
        assert!(permutation_t_test(&a, &b, 10, 0).is_err());
    }

    #[test]
    fn identical_groups_give_large_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(&mut rng, 20, 8);
        let r = permutation_t_test(&a, &a, 200, 1).unwrap();
        assert!(r.p_values.iter().all(|&p| p >= 0.5));
    }

    #[test]
    fn p_values_respect_add_one_bounds_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(&mut rng, 30, 10);
        let mut b = gaussian(&mut rng, 30, 10);
        b.row_mut(0).add_scalar_mut(5.0);
        let r1 = permutation_t_test(&a, &b, 300, 9).unwrap();
        let r2 = permutation_t_test(&a, &b, 300, 9).unwrap();
        assert_eq!(r1, r2);
        for &p in &r1.p_values {
            assert!((min_p_value(300)..=1.0).contains(&p));
        }
        assert_eq!(r1.p_values[0], min_p_value(300));
    }

    #[test]
    fn rescaling_leaves_p_values_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian(&mut rng, 25, 7);
        let b = gaussian(&mut rng, 25, 9);
        let r1 = permutation_t_test(&a, &b, 400, 2).unwrap();
        let r2 = permutation_t_test(&(&a * 3.7), &(&b * 3.7), 400, 2).unwrap();
        assert_eq!(r1.p_values, r2.p_values);
    }

    #[test]
    fn select_roi_edges() {
        let m = select_roi(&[1.0, 1.0], 0.05).unwrap();
        assert_eq!(m.count(), 0);
        let m = select_roi(&[0.2, 0.999, 1.0], 1.0).unwrap();
        assert_eq!(m.selected, vec![true, true, false]);
        assert!(select_roi(&[0.1], 0.0).is_err());
    }

    #[test]
    fn bh_hand_example() {
        let m = fdr_select(&[0.001, 0.02, 0.9], 0.05).unwrap();
        assert_eq!(m.selected, vec![true, true, false]);
        assert_eq!(fdr_select(&[1.0, 1.0], 0.05).unwrap().count(), 0);
        // step-up: a later p under its bound rescues earlier ones above theirs
        let m = fdr_select(&[0.04, 0.03, 0.045, 0.5], 0.1).unwrap();
        assert_eq!(m.selected, vec![true, true, true, false]);
    }

    #[test]
    fn bh_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let v = rng.random_range(1..12);
            let p: Vec<f64> = (0..v).map(|_| rng.random::<f64>().powi(3)).collect();
            let q = 0.2;
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let kmax = (1..=v).filter(|&k| sorted[k - 1] <= k as f64 * q / v as f64).max();
            let want: Vec<bool> = p.iter().map(|&x| kmax.is_some_and(|k| x <= sorted[k - 1])).collect();
            assert_eq!(fdr_select(&p, q).unwrap().selected, want);
        }
    }

    #[test]
    fn unattainable_threshold_is_a_config_error() {
        let s = RoiSettings {
            n_perm: 5000,
            threshold: 1e-5,
            ..RoiSettings::default()
        };
        let err = s.validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("1/5001"), "{err}");
    }

    #[test]
    fn csv_round_trip_through_a_permuted_map() {
        let mask = RoiMask {
            selected: vec![true, false, true],
            p_values: vec![0.001, 0.5, 0.01],
            threshold: 0.05,
            method: RoiMethod::Permutation,
        };
        let map = VertexMap::from_rows(vec![2, 0, 1]).unwrap();
        let text = mask.to_csv(&map);
        assert!(text.starts_with("vertex,p,selected\n0,0.5,0\n"));
        let back = RoiMask::from_csv(&text, &map, 0.05, RoiMethod::Permutation).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn single_fold_equals_single_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = gaussian(&mut rng, 12, 8);
        let mut b = gaussian(&mut rng, 12, 8);
        for p in 0..3 {
            b.row_mut(p).add_scalar_mut(3.0);
        }
        let cfg = StabilityConfig {
            n_folds: 1,
            fraction: 1.0,
            roi: RoiSettings {
                n_perm: 200,
                threshold: 0.05,
                ..RoiSettings::default()
            },
            low_rank: false,
            ..StabilityConfig::default()
        };
        let mesh = TriangleMesh::singleton(12);
        let map = stability_folds(&a, &b, &LocalGroups::identity(&mesh), &cfg).unwrap();
        let single = extract_roi(&a, &b, &cfg.roi).unwrap();
        let want: Vec<usize> = single.selected.iter().map(|&s| s as usize).collect();
        assert_eq!(map.counts, want);
        assert!(map.counts[..3].iter().all(|&c| c == 1));
    }
}
