//! Effect sizes, minimum trial sample size and enrichment projections.

use serde::{Deserialize, Serialize};

use super::{mean, normal_quantile, require_len, std_dev, variance, PairedSeries};
use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::rng::substream;

/// `mean(diff) / sd(diff)` of `followup - baseline`.
pub fn cohens_d_paired(series: &PairedSeries) -> Result<f64> {
    let d = series.differences();
    require_len(&d, 2, "paired effect size")?;
    let sd = std_dev(&d);
    if sd == 0.0 {
        return Err(Error::Numerical("differences have zero standard deviation".into()));
    }
    Ok(mean(&d) / sd)
}

/// `(mean(a) - mean(b)) / pooled sd`.
pub fn cohens_d_independent(a: &[f64], b: &[f64]) -> Result<f64> {
    require_len(a, 2, "effect size (first group)")?;
    require_len(b, 2, "effect size (second group)")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(Error::Numerical("pooled standard deviation is zero".into()));
    }
    Ok((mean(a) - mean(b)) / pooled)
}

/// Two-arm constant `2 (z_{1-alpha/2} + z_power)^2`.
pub fn sample_size_constant(power: f64, alpha: f64) -> f64 {
    let z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(power);
    2.0 * z * z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSizeOptions {
    /// Fraction of the mean annual change a treatment must remove.
    pub reduction: f64,
    pub power: f64,
    pub alpha: f64,
    /// Length of the observation interval in years; changes are divided by
    /// it to obtain annual rates.
    pub interval_years: f64,
}

impl Default for SampleSizeOptions {
    fn default() -> Self {
        SampleSizeOptions {
            reduction: 0.25,
            power: 0.8,
            alpha: 0.05,
            interval_years: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSize {
    /// Subjects per arm.
    pub n: u64,
    /// Unrounded estimate.
    pub exact: f64,
    pub constant: f64,
    pub annual_change: f64,
    pub annual_sd: f64,
}

/// Per-arm subjects needed to detect a `reduction` of the mean annual change
/// with the given power and two-sided level:
/// `ceil(C sd^2 / (reduction * mean)^2)` on annualized changes.
pub fn min_sample_size(series: &PairedSeries, opts: &SampleSizeOptions) -> Result<SampleSize> {
    if !(opts.reduction > 0.0 && opts.reduction <= 1.0) {
        return Err(Error::Input(format!("reduction must lie in (0, 1], got {}", opts.reduction)));
    }
    if !(opts.power > 0.0 && opts.power < 1.0 && opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Input("power and alpha must lie in (0, 1)".into()));
    }
    if !(opts.interval_years > 0.0) {
        return Err(Error::Input("observation interval must be positive".into()));
    }
    let d = series.differences();
    require_len(&d, 2, "sample size")?;
    let annual: Vec<f64> = d.iter().map(|v| v / opts.interval_years).collect();
    let change = mean(&annual);
    if change == 0.0 {
        return Err(Error::Numerical("mean change is zero: the sample size is infinite".into()));
    }
    let sd = std_dev(&annual);
    let constant = sample_size_constant(opts.power, opts.alpha);
    let effect = opts.reduction * change.abs();
    let exact = constant * sd * sd / (effect * effect);
    Ok(SampleSize {
        n: exact.ceil() as u64,
        exact,
        constant,
        annual_change: change,
        annual_sd: sd,
    })
}

/// `N' = (es / es_prime)^2 N`.
pub fn enriched_sample_size(es: f64, es_prime: f64, n: f64) -> f64 {
    let ratio = es / es_prime;
    ratio * ratio * n
}

/// Linear-interpolation percentile with inclusive endpoints: for sorted
/// `x_0 <= ... <= x_{n-1}`, `pct` maps to position `(n - 1) pct / 100`.
pub fn percentile(reference: &[f64], pct: f64) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Input("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::Input(format!("percentile must lie in [0, 100], got {pct}")));
    }
    let mut x = reference.to_vec();
    x.sort_by(f64::total_cmp);
    Ok(sorted_percentile(&x, pct))
}

fn sorted_percentile(x: &[f64], pct: f64) -> f64 {
    let h = (x.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= x.len() {
        return x[x.len() - 1];
    }
    x[lo] + (h - lo as f64) * (x[lo + 1] - x[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentOptions {
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for EnrichmentOptions {
    fn default() -> Self {
        EnrichmentOptions { n_boot: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRow {
    pub percentile: f64,
    pub cutoff: f64,
    pub enrolled: usize,
    /// `None` when fewer than two subjects pass the cutoff.
    pub effect_size: Option<f64>,
    pub n_prime: Option<f64>,
    pub n_prime_ci95: Option<(f64, f64)>,
}

/// Effect size of change: `mean / sd`, `None` if undefined.
fn change_effect(changes: &[f64]) -> Option<f64> {
    if changes.len() < 2 {
        return None;
    }
    let sd = std_dev(changes);
    (sd > 0.0).then(|| mean(changes) / sd)
}

/// Enrichment table. `subjects` holds `(score, change)` pairs of the
/// unenriched cohort and `n` its required sample size. For each percentile
/// of `reference`, subjects scoring above the cutoff form the enriched
/// cohort, whose effect size `ES'` gives `N' = (ES / ES')^2 N`. The interval
/// comes from bootstrap resampling of `subjects` with the cutoffs held fixed.
pub fn enrichment(
    subjects: &[(f64, f64)],
    reference: &[f64],
    percentiles: &[f64],
    n: f64,
    opts: &EnrichmentOptions,
) -> Result<Vec<EnrichmentRow>> {
    if subjects.len() < 2 {
        return Err(Error::Input("enrichment needs at least 2 subjects".into()));
    }
    let changes: Vec<f64> = subjects.iter().map(|s| s.1).collect();
    let es = change_effect(&changes)
        .ok_or_else(|| Error::Numerical("changes of the unenriched cohort have zero spread".into()))?;
    let cutoffs = percentiles
        .iter()
        .map(|&p| percentile(reference, p))
        .collect::<Result<Vec<_>>>()?;
    let above = |sample: &[(f64, f64)], cutoff: f64| -> Vec<f64> {
        sample.iter().filter(|s| s.0 > cutoff).map(|s| s.1).collect()
    };

    let boot: Vec<Vec<Option<f64>>> = map_indices(opts.n_boot, |b| {
        let mut rng = substream(opts.seed, b as u64);
        let sample: Vec<(f64, f64)> = (0..subjects.len())
            .map(|_| subjects[rand::Rng::random_range(&mut rng, 0..subjects.len())])
            .collect();
        let changes: Vec<f64> = sample.iter().map(|s| s.1).collect();
        let es_b = change_effect(&changes);
        cutoffs
            .iter()
            .map(|&c| {
                let es_prime = change_effect(&above(&sample, c))?;
                Some(enriched_sample_size(es_b?, es_prime, n))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(cutoffs.len());
    for (k, (&pct, &cutoff)) in percentiles.iter().zip(&cutoffs).enumerate() {
        let enrolled = above(subjects, cutoff);
        let es_prime = change_effect(&enrolled);
        let mut draws: Vec<f64> = boot.iter().filter_map(|row| row[k]).filter(|v| v.is_finite()).collect();
        let ci = if es_prime.is_some() && draws.len() >= 2 {
            draws.sort_by(f64::total_cmp);
            Some((sorted_percentile(&draws, 2.5), sorted_percentile(&draws, 97.5)))
        } else {
            None
        };
        rows.push(EnrichmentRow {
            percentile: pct,
            cutoff,
            enrolled: enrolled.len(),
            effect_size: es_prime,
            n_prime: es_prime.map(|e| enriched_sample_size(es, e, n)),
            n_prime_ci95: ci,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_d_hand_value_and_scale_invariance() {
        let d = cohens_d_independent(&[0.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((d + 2f64.sqrt()).abs() < 1e-12);
        let scaled = cohens_d_independent(&[0.0, 6.0], &[6.0, 12.0]).unwrap();
        assert!((scaled - d).abs() < 1e-12);
        assert_eq!(cohens_d_independent(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert!(cohens_d_independent(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn constant_matches_normal_quantiles() {
        let c = sample_size_constant(0.8, 0.05);
        assert!((c - 2.0 * (1.959964 + 0.841621f64).powi(2)).abs() < 1e-4);
        assert!((c - 15.698).abs() < 1e-3);
    }

    #[test]
    fn sample_size_scales_with_variance() {
        let base = vec![10.0; 6];
        let s1 = PairedSeries::new(base.clone(), vec![9.0, 9.5, 8.5, 9.2, 8.8, 9.0]).unwrap();
        // same mean change, doubled spread around it
        let s2 = PairedSeries::new(base, vec![9.0, 10.0, 8.0, 9.4, 8.6, 9.0]).unwrap();
        let a = min_sample_size(&s1, &SampleSizeOptions::default()).unwrap();
        let b = min_sample_size(&s2, &SampleSizeOptions::default()).unwrap();
        assert!((b.exact / a.exact - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_change_is_rejected() {
        let s = PairedSeries::new(vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 3.0]).unwrap();
        assert!(min_sample_size(&s, &SampleSizeOptions::default()).is_err());
    }

    #[test]
    fn percentile_conventions() {
        let x = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&x, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&x, 50.0).unwrap(), 2.5);
        assert_eq!(percentile(&x, 100.0).unwrap(), 4.0);
        assert_eq!(percentile(&[7.0], 30.0).unwrap(), 7.0);
    }

    #[test]
    fn percentile_matches_sort_and_interpolate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let pct = 100.0 * rng.random::<f64>();
            let mut s = x.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let pos = (n - 1) as f64 * pct / 100.0;
            let (i, frac) = (pos as usize, pos.fract());
            let want = if i + 1 < n { s[i] * (1.0 - frac) + s[i + 1] * frac } else { s[i] };
            assert!((percentile(&x, pct).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn enriched_size_identities() {
        assert_eq!(enriched_sample_size(0.7, 0.7, 120.0), 120.0);
        assert_eq!(enriched_sample_size(0.7, 1.4, 120.0), 30.0);
    }

    #[test]
    fn enrichment_flags_small_subgroups() {
        let subjects: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0 + 0.1 * (i % 3) as f64)).collect();
        let reference: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let rows = enrichment(&subjects, &reference, &[50.0, 100.0], 100.0, &EnrichmentOptions { n_boot: 50, seed: 1 }).unwrap();
        assert!(rows[0].n_prime.is_some());
        assert_eq!(rows[1].enrolled, 0);
        assert!(rows[1].n_prime.is_none());
    }
}
