//! Factorized stable principal component pursuit with a one-ring group
//! sparsity penalty.
//!
//! Decomposes `A ~ U V + S + N` where `U` (m x r) has orthonormal columns,
//! `S` is sparse in mesh-local patches and `N` lies in a Frobenius ball of
//! radius `epsilon`. Each iteration updates, in order: the noise (ball
//! projection), the sparse part (one-ring shrinkage), the basis `U` (polar
//! factor of `G_L V^T`), the coefficients `V` (singular value thresholding
//! of `U^T G_L`), and the multiplier. The penalty `beta` grows
//! geometrically by `alpha` per iteration.
//!
//! Inside the loop every SVD is of an `m x r` or `r x n` matrix; the only
//! `m x n` SVD is the warm start.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, orthonormality_defect, thin_svd};
use crate::matrix::population_std;
use crate::mesh::{local_sparse_norm, LocalGroups, TriangleMesh, VertexMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sparsity weight.
    pub lambda: f64,
    /// Geometric growth of the penalty parameter, in (1, 2).
    pub alpha: f64,
    /// Termination multiplier on the data standard deviation.
    pub tau: f64,
    /// Radius of the noise ball.
    pub epsilon: f64,
    /// Number of columns of `U`.
    pub rank_budget: usize,
    pub max_iters: usize,
    /// Recorded with every run. The warm start is a deterministic SVD, so
    /// results do not depend on it.
    pub seed: u64,
}

impl SolverConfig {
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Config(format!("alpha must lie in (1, 2), got {}", self.alpha)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.rank_budget == 0 || self.rank_budget > m.min(n) {
            return Err(Error::Config(format!(
                "rank budget must lie in 1..={}, got {}",
                m.min(n),
                self.rank_budget
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationStats {
    /// Population standard deviation of all entries.
    pub delta: f64,
    /// Largest singular value.
    pub sigma_l: f64,
    pub m: usize,
    pub n: usize,
}

impl ObservationStats {
    pub fn beta0(&self) -> Result<f64> {
        if self.sigma_l > 0.0 {
            Ok(1.25 / self.sigma_l)
        } else {
            Err(Error::Numerical(
                "largest singular value is zero: the matrix is zero and decomposes trivially".into(),
            ))
        }
    }
}

/// Noise-ball radius `sqrt(min(m,n) + sqrt(8) min(m,n)) * delta`.
pub fn default_epsilon(m: usize, n: usize, delta: f64) -> f64 {
    let k = m.min(n) as f64;
    (k + 8f64.sqrt() * k).sqrt() * delta
}

pub fn default_lambda(m: usize, n: usize) -> f64 {
    1.0 / (m.max(n) as f64).sqrt()
}

/// `k / sqrt(max(m, n))` with `k` the mean one-ring size. A ring norm over
/// noise grows like `sqrt(k)`, and every entry sits in about `k` rings, so a
/// vertex next to a sparse patch is shrunk against `sqrt(k)` times more
/// patch energy than its own; the extra `sqrt(k)` keeps that spill-over ring
/// out of the support.
pub fn group_scaled_lambda(m: usize, n: usize, groups: &LocalGroups) -> f64 {
    groups.mean_group_size().max(1.0) * default_lambda(m, n)
}

pub fn default_rank_budget(m: usize, n: usize) -> usize {
    50.min(m.min(n))
}

pub fn observation_stats(a: &DMatrix<f64>) -> Result<ObservationStats> {
    let sv = linalg::singular_values(a)?;
    Ok(ObservationStats {
        delta: population_std(a),
        sigma_l: sv.first().copied().unwrap_or(0.0),
        m: a.nrows(),
        n: a.ncols(),
    })
}

/// Default parameters derived from the data. Fails when `A` is zero, since
/// the initial penalty `1.25 / sigma_L` is then undefined.
pub fn default_params(a: &DMatrix<f64>) -> Result<(SolverConfig, ObservationStats)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Input("observation matrix is empty".into()));
    }
    let stats = observation_stats(a)?;
    stats.beta0()?;
    let cfg = SolverConfig {
        lambda: default_lambda(m, n),
        alpha: 1.1,
        tau: 1e-3,
        epsilon: default_epsilon(m, n, stats.delta),
        rank_budget: default_rank_budget(m, n),
        max_iters: 500,
        seed: 0,
    };
    Ok((cfg, stats))
}

/// How `lambda` is chosen for a data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaRepr", into = "LambdaRepr")]
pub enum LambdaChoice {
    /// `1 / sqrt(max(m, n))`.
    Default,
    /// [`group_scaled_lambda`].
    GroupScaled,
    Fixed(f64),
}

impl std::str::FromStr for LambdaChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "default" => Ok(LambdaChoice::Default),
            "group" | "group_scaled" => Ok(LambdaChoice::GroupScaled),
            other => other
                .parse::<f64>()
                .map(LambdaChoice::Fixed)
                .map_err(|_| format!("lambda must be `default`, `group` or a number, got `{other}`")),
        }
    }
}

/// Serialized form: `"default"`, `"group_scaled"` or a number.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<LambdaRepr> for LambdaChoice {
    type Error = String;
    fn try_from(r: LambdaRepr) -> std::result::Result<Self, String> {
        match r {
            LambdaRepr::Value(v) => Ok(LambdaChoice::Fixed(v)),
            LambdaRepr::Name(s) => s.parse(),
        }
    }
}

impl From<LambdaChoice> for LambdaRepr {
    fn from(c: LambdaChoice) -> Self {
        match c {
            LambdaChoice::Default => LambdaRepr::Name("default".into()),
            LambdaChoice::GroupScaled => LambdaRepr::Name("group_scaled".into()),
            LambdaChoice::Fixed(v) => LambdaRepr::Value(v),
        }
    }
}

/// Solver settings that do not depend on the data; [`SolverOptions::config_for`]
/// fills in the data-derived defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub lambda: LambdaChoice,
    pub alpha: f64,
    pub tau: f64,
    /// Overrides the default noise radius when set.
    pub epsilon: Option<f64>,
    pub rank_budget: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: LambdaChoice::GroupScaled,
            alpha: 1.1,
            tau: 1e-3,
            epsilon: None,
            rank_budget: None,
            max_iters: 500,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn config_for(&self, a: &DMatrix<f64>, groups: &LocalGroups) -> Result<SolverConfig> {
        let (mut cfg, _) = default_params(a)?;
        let (m, n) = a.shape();
        cfg.lambda = match self.lambda {
            LambdaChoice::Default => default_lambda(m, n),
            LambdaChoice::GroupScaled => group_scaled_lambda(m, n, groups),
            LambdaChoice::Fixed(v) => v,
        };
        cfg.alpha = self.alpha;
        cfg.tau = self.tau;
        if let Some(eps) = self.epsilon {
            cfg.epsilon = eps;
        }
        if let Some(r) = self.rank_budget {
            cfg.rank_budget = r.min(m.min(n));
        }
        cfg.max_iters = self.max_iters;
        cfg.seed = self.seed;
        cfg.validate(m, n)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub beta: f64,
    /// `||V||_* + lambda * ||S||_1`.
    pub objective: f64,
    /// `||UV + S + N - A||_F / (||A||_F + 1)`.
    pub residual: f64,
    /// Relative change of `(UV, S)` used by the stopping rule.
    pub change: f64,
    /// Singular values of `V` above `3 delta`.
    pub rank: usize,
    pub sparse_norm: f64,
}

/// Shapes of every SVD the solver performed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvdUsage {
    /// SVDs of the full observation-sized matrix during setup.
    pub setup_full: usize,
    /// SVDs of observation-sized (`m x n`) matrices inside the iteration loop.
    pub loop_full: usize,
    /// Factor-sized SVDs inside the loop.
    pub loop_factor: usize,
    /// Largest element count of any SVD input inside the loop.
    pub loop_max_elements: usize,
}

impl SvdUsage {
    fn record_loop(&mut self, rows: usize, cols: usize, m: usize, n: usize) {
        if (rows, cols) == (m, n) {
            self.loop_full += 1;
        } else {
            self.loop_factor += 1;
        }
        self.loop_max_elements = self.loop_max_elements.max(rows * cols);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub multiplier: DMatrix<f64>,
    pub iters: usize,
    pub converged: bool,
    pub history: Vec<IterRecord>,
    pub stats: ObservationStats,
    pub beta0: f64,
    pub svd_usage: SvdUsage,
}

impl DecompositionResult {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map(|h| h.residual).unwrap_or(0.0)
    }

    pub fn rank(&self) -> usize {
        self.history.last().map(|h| h.rank).unwrap_or(0)
    }

    pub fn sparse_norm(&self) -> f64 {
        local_sparse_norm(&self.sparse)
    }

    /// Entries of `S` whose magnitude exceeds the per-entry noise level
    /// `epsilon / sqrt(mn)`; smaller entries cannot be told apart from noise.
    pub fn sparse_support(&self, epsilon: f64) -> Vec<bool> {
        let level = epsilon / (self.sparse.len().max(1) as f64).sqrt();
        self.sparse.iter().map(|v| v.abs() > level).collect()
    }

    /// JSON diagnostics: parameters, summary and the per-iteration history.
    pub fn diagnostics_json(&self, cfg: &SolverConfig) -> serde_json::Value {
        serde_json::json!({
            "config": cfg,
            "stats": self.stats,
            "beta0": self.beta0,
            "iters": self.iters,
            "converged": self.converged,
            "rank": self.rank(),
            "sparse_norm": self.sparse_norm(),
            "final_residual": self.final_residual(),
            "svd_usage": self.svd_usage,
            "history": self.history,
        })
    }
}

/// Projection of `(1/beta) Y + A - UV - S` onto the Frobenius ball of radius `epsilon`.
pub fn update_noise(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    uv: &DMatrix<f64>,
    s: &DMatrix<f64>,
    beta: f64,
    epsilon: f64,
) -> Result<DMatrix<f64>> {
    check_same_shape(&[y, uv, s], a)?;
    let inv = 1.0 / beta;
    let mut nhat = a - uv - s;
    add_scaled(&mut nhat, inv, y);
    Ok(project_ball(nhat, epsilon))
}

fn project_ball(mut nhat: DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let norm = nhat.norm();
    if norm == 0.0 {
        return nhat;
    }
    if norm > epsilon {
        nhat *= epsilon / norm;
    }
    nhat
}

/// One-ring group shrinkage of `(1/beta) Y + A - UV - N` at threshold `lambda / beta`.
pub fn update_sparse(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    uv: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    beta: f64,
    lambda: f64,
    groups: &LocalGroups,
) -> Result<DMatrix<f64>> {
    check_same_shape(&[y, uv, noise], a)?;
    if !(beta > 0.0) {
        return Err(Error::Input(format!("beta must be positive, got {beta}")));
    }
    let mut g = a - uv - noise;
    add_scaled(&mut g, 1.0 / beta, y);
    groups.shrink(&g, lambda / beta)
}

/// `P(G_L V^T)`: orthogonal polar factor of `G_L V^T`.
pub fn update_orthobasis(g_l: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g_l.ncols() != v.ncols() {
        return Err(Error::Dimension(format!(
            "G_L has {} columns but V has {}",
            g_l.ncols(),
            v.ncols()
        )));
    }
    linalg::polar_factor(&(g_l * v.transpose()))
}

/// `svt(U^T G_L, 1 / beta_next)`.
pub fn update_coefficients(u: &DMatrix<f64>, g_l: &DMatrix<f64>, beta_next: f64) -> Result<DMatrix<f64>> {
    if u.nrows() != g_l.nrows() {
        return Err(Error::Dimension(format!(
            "U has {} rows but G_L has {}",
            u.nrows(),
            g_l.nrows()
        )));
    }
    linalg::svt(&(u.transpose() * g_l), 1.0 / beta_next)
}

pub use linalg::svt;

/// Number of singular values of `v` strictly greater than `3 delta`.
pub fn effective_rank(v: &DMatrix<f64>, delta: f64) -> Result<usize> {
    if v.is_empty() {
        return Ok(0);
    }
    Ok(count_above(&linalg::singular_values(v)?, delta))
}

fn count_above(spectrum: &[f64], delta: f64) -> usize {
    spectrum.iter().filter(|&&s| s > 3.0 * delta).count()
}

/// `dst += scale * src`.
fn add_scaled(dst: &mut DMatrix<f64>, scale: f64, src: &DMatrix<f64>) {
    dst.zip_apply(src, |d, s| *d += scale * s);
}

fn check_same_shape(others: &[&DMatrix<f64>], a: &DMatrix<f64>) -> Result<()> {
    for o in others {
        if o.shape() != a.shape() {
            return Err(Error::Dimension(format!(
                "expected {:?}, got {:?}",
                a.shape(),
                o.shape()
            )));
        }
    }
    Ok(())
}

/// Decomposition on a mesh with an explicit row-to-vertex map.
pub fn decompose_on_mesh(
    a: &DMatrix<f64>,
    mesh: &TriangleMesh,
    map: &VertexMap,
    cfg: &SolverConfig,
) -> Result<DecompositionResult> {
    let groups = LocalGroups::new(mesh, map)?;
    decompose(a, &groups, cfg)
}

pub fn decompose(a: &DMatrix<f64>, groups: &LocalGroups, cfg: &SolverConfig) -> Result<DecompositionResult> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Input("observation matrix is empty".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("observation matrix contains non-finite values".into()));
    }
    if groups.len() != m {
        return Err(Error::Dimension(format!(
            "observation matrix has {m} rows but the mesh has {} vertices",
            groups.len()
        )));
    }
    cfg.validate(m, n)?;
    let r = cfg.rank_budget;

    let mut usage = SvdUsage::default();
    let init = thin_svd(a)?;
    usage.setup_full += 1;
    let stats = ObservationStats {
        delta: population_std(a),
        sigma_l: init.sigma[0],
        m,
        n,
    };

    if stats.sigma_l == 0.0 {
        return Ok(zero_result(m, n, r, stats, usage));
    }

    let beta0 = stats.beta0()?;
    let a_norm = a.norm();
    let stop_level = cfg.tau * stats.delta;
    // the change test alone can fire while the large early thresholds keep
    // every iterate nearly still, far from satisfying the constraint
    let feasibility_tol = cfg.tau;

    let mut u = init.u.columns(0, r).into_owned();
    let mut v = u.transpose() * a;
    let mut low_rank = &u * &v;
    let mut sparse = DMatrix::zeros(m, n);
    let mut noise = DMatrix::zeros(m, n);
    let mut y = DMatrix::zeros(m, n);
    let mut beta = beta0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    while iters < cfg.max_iters {
        iters += 1;
        let inv_beta = 1.0 / beta;

        // noise: projection onto the epsilon ball
        let mut work = a - &low_rank - &sparse;
        add_scaled(&mut work, inv_beta, &y);
        noise = project_ball(work, cfg.epsilon);
        debug_assert!(noise.norm() <= cfg.epsilon + 1e-8);

        // sparse: one-ring shrinkage
        let mut g_s = a - &low_rank - &noise;
        add_scaled(&mut g_s, inv_beta, &y);
        let sparse_next = groups.shrink(&g_s, cfg.lambda * inv_beta)?;

        // low rank: U from the polar factor, then V by thresholding
        let mut g_l = a - &sparse_next - &noise;
        add_scaled(&mut g_l, inv_beta, &y);
        let z = &g_l * v.transpose();
        usage.record_loop(m, r, m, n);
        let z_svd = thin_svd(&z)?;
        // a rank-deficient Z leaves U free on its null directions; taking them
        // from the columns of G_L keeps range(G_L) inside range(U) whenever
        // the budget allows, so UV matches full thresholding of G_L
        u = linalg::polar_from_svd(&z_svd, m, r, Some(&g_l));
        debug_assert!(orthonormality_defect(&u) <= 1e-8);

        let beta_next = cfg.alpha * beta;
        let t = u.transpose() * &g_l;
        usage.record_loop(r, n, m, n);
        let (v_next, spectrum) = linalg::svt_with_spectrum(&t, 1.0 / beta_next)?;
        v = v_next;
        let low_rank_next = &u * &v;

        // multiplier
        let constraint = &low_rank_next + &sparse_next + &noise - a;
        add_scaled(&mut y, -beta, &constraint);

        let dl = (&low_rank_next - &low_rank).norm_squared();
        let ds = (&sparse_next - &sparse).norm_squared();
        let prev = (low_rank.norm_squared() + sparse.norm_squared()).sqrt();
        let change = (dl + ds).sqrt() / (prev + 1.0);

        low_rank = low_rank_next;
        sparse = sparse_next;

        let residual = constraint.norm() / (a_norm + 1.0);
        let sparse_norm = local_sparse_norm(&sparse);
        history.push(IterRecord {
            iter: iters,
            beta,
            objective: spectrum.iter().sum::<f64>() + cfg.lambda * sparse_norm,
            residual,
            change,
            rank: count_above(&spectrum, stats.delta),
            sparse_norm,
        });
        beta = beta_next;

        if !change.is_finite() {
            return Err(Error::Numerical(format!("iteration {iters} produced non-finite values")));
        }
        if change <= stop_level && residual <= feasibility_tol {
            converged = true;
            break;
        }
    }

    Ok(DecompositionResult {
        u,
        v,
        low_rank,
        sparse,
        noise,
        multiplier: y,
        iters,
        converged,
        history,
        stats,
        beta0,
        svd_usage: usage,
    })
}

fn zero_result(m: usize, n: usize, r: usize, stats: ObservationStats, usage: SvdUsage) -> DecompositionResult {
    DecompositionResult {
        u: DMatrix::identity(m, r),
        v: DMatrix::zeros(r, n),
        low_rank: DMatrix::zeros(m, n),
        sparse: DMatrix::zeros(m, n),
        noise: DMatrix::zeros(m, n),
        multiplier: DMatrix::zeros(m, n),
        iters: 0,
        converged: true,
        history: vec![IterRecord {
            iter: 0,
            beta: f64::INFINITY,
            objective: 0.0,
            residual: 0.0,
            change: 0.0,
            rank: 0,
            sparse_norm: 0.0,
        }],
        stats,
        beta0: f64::INFINITY,
        svd_usage: usage,
    }
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
    fn default_lambda_formula() {
        assert!((default_lambda(100, 422) - 0.048_679).abs() < 1e-6);
        // hippocampal-scale matrices: ~15000 vertices
        assert!((default_lambda(15_000, 422) - 0.0082).abs() < 5e-5);
    }

    #[test]
    fn default_params_on_identity() {
        let a = DMatrix::<f64>::identity(10, 10);
        let (cfg, stats) = default_params(&a).unwrap();
        // population SD of ten ones and ninety zeros
        let mean = 0.1;
        let var = (10.0 * (1.0 - mean) * (1.0f64 - mean) + 90.0 * mean * mean) / 100.0;
        assert!((stats.delta - var.sqrt()).abs() < 1e-15);
        assert!((stats.sigma_l - 1.0).abs() < 1e-12);
        let eps = (10.0 + 8f64.sqrt() * 10.0).sqrt() * var.sqrt();
        assert!((cfg.epsilon - eps).abs() < 1e-12);
        assert_eq!(cfg.rank_budget, 10);
        assert_eq!(cfg.alpha, 1.1);
    }

    #[test]
    fn default_params_rejects_zero_matrix() {
        let err = default_params(&DMatrix::zeros(3, 3)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        let (cfg, stats) = default_params(&DMatrix::from_element(3, 4, 2.0)).unwrap();
        assert_eq!(stats.delta, 0.0);
        assert_eq!(cfg.epsilon, 0.0);
    }

    #[test]
    fn noise_update_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(&mut rng, 4, 3);
        let z = DMatrix::zeros(4, 3);
        let inside = update_noise(&z, &a, &z, &z, 1.0, a.norm() * 1.5).unwrap();
        assert_eq!(inside, a);
        assert_eq!(update_noise(&z, &a, &z, &z, 1.0, 0.0).unwrap(), z);
        let half = update_noise(&z, &a, &z, &z, 1.0, a.norm() / 2.0).unwrap();
        assert!((half - &a / 2.0).amax() < 1e-15);
        assert_eq!(update_noise(&z, &z, &z, &z, 1.0, 1.0).unwrap(), z);
    }

    #[test]
    fn sparse_update_delegates_to_shrink() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mesh = TriangleMesh::icosahedron();
        let groups = LocalGroups::identity(&mesh);
        let (a, y, uv, nn) = (
            gaussian(&mut rng, 12, 4),
            gaussian(&mut rng, 12, 4),
            gaussian(&mut rng, 12, 4),
            gaussian(&mut rng, 12, 4),
        );
        let beta = 2.5;
        let got = update_sparse(&y, &a, &uv, &nn, beta, 0.8, &groups).unwrap();
        let g = &y / beta + &a - &uv - &nn;
        let want = crate::mesh::local_shrink(&g, 0.8 / beta, &mesh, &VertexMap::identity(12)).unwrap();
        assert!((got - want).amax() < 1e-14);
        let zero = DMatrix::zeros(12, 4);
        assert_eq!(update_sparse(&zero, &zero, &zero, &zero, 1.0, 1.0, &groups).unwrap(), zero);
        let g0 = update_sparse(&zero, &a, &zero, &zero, 1.0, 0.0, &groups).unwrap();
        assert_eq!(g0, a);
    }

    #[test]
    fn coefficient_update_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = DMatrix::<f64>::identity(5, 5);
        assert_eq!(update_coefficients(&u, &DMatrix::zeros(5, 3), 1.0).unwrap(), DMatrix::zeros(5, 3));
        let g = gaussian(&mut rng, 5, 3);
        let v = update_coefficients(&u, &g, 1e12).unwrap();
        assert!((v - &g).amax() < 1e-10);
        let u2 = linalg::thin_svd(&gaussian(&mut rng, 8, 3)).unwrap().u;
        let g2 = gaussian(&mut rng, 8, 6);
        let want = svt(&(u2.transpose() * &g2), 0.5).unwrap();
        assert!((update_coefficients(&u2, &g2, 2.0).unwrap() - want).amax() < 1e-14);
    }

    #[test]
    fn effective_rank_cases() {
        assert_eq!(effective_rank(&DMatrix::zeros(3, 4), 0.1).unwrap(), 0);
        let v = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 2.0]);
        assert_eq!(effective_rank(&v, 1.0).unwrap(), 1);
    }

    #[test]
    fn zero_matrix_decomposes_trivially() {
        let groups = LocalGroups::identity(&TriangleMesh::tetrahedron());
        let cfg = SolverConfig {
            lambda: 0.5,
            alpha: 1.1,
            tau: 1e-3,
            epsilon: 0.0,
            rank_budget: 2,
            max_iters: 10,
            seed: 0,
        };
        let res = decompose(&DMatrix::zeros(4, 3), &groups, &cfg).unwrap();
        assert!(res.converged && res.iters <= 2);
        assert!(res.low_rank.iter().chain(res.sparse.iter()).chain(res.noise.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_input_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mesh = TriangleMesh::torus(6, 5).unwrap();
        let groups = LocalGroups::identity(&mesh);
        let uvec = DMatrix::from_fn(30, 1, |_, _| 2.0 + rng.random::<f64>());
        let vvec = DMatrix::from_fn(1, 12, |_, _| 1.0 + rng.random::<f64>());
        let a = &uvec * &vvec;
        let (mut cfg, _) = default_params(&a).unwrap();
        cfg.epsilon = 0.0;
        // the default stopping level (tau * delta ~ 1e-3) is coarser than the 1e-4 target
        cfg.tau = 1e-8;
        cfg.max_iters = 1000;
        let res = decompose(&a, &groups, &cfg).unwrap();
        let rel = (&res.low_rank - &a).norm() / a.norm();
        assert!(rel <= 1e-4, "relative error {rel}");
        assert!(res.sparse.amax() <= 1e-4 * a.amax(), "sparse {}", res.sparse.amax());
        assert!(orthonormality_defect(&res.u) < 1e-8);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let groups = LocalGroups::identity(&TriangleMesh::tetrahedron());
        let mut a = DMatrix::from_element(4, 3, 1.0);
        a[(1, 1)] = f64::NAN;
        let cfg = SolverConfig {
            lambda: 0.5,
            alpha: 1.1,
            tau: 1e-3,
            epsilon: 0.0,
            rank_budget: 2,
            max_iters: 10,
            seed: 0,
        };
        assert!(matches!(decompose(&a, &groups, &cfg), Err(Error::Numerical(_))));
        let mut bad = cfg.clone();
        bad.alpha = 2.0;
        assert!(matches!(decompose(&DMatrix::from_element(4, 3, 1.0), &groups, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn max_iters_returns_unconverged_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let groups = LocalGroups::identity(&TriangleMesh::icosahedron());
        let a = gaussian(&mut rng, 12, 8);
        let (mut cfg, _) = default_params(&a).unwrap();
        cfg.max_iters = 2;
        let res = decompose(&a, &groups, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iters, 2);
        assert_eq!(res.history.len(), 2);
    }
}
