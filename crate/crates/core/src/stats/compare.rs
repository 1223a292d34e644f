//! t tests, one-way ANOVA and the 2x2 chi-square test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{chi2_sf, mean, require_len, std_dev, t_two_sided, variance, PairedSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Zero-variance input with a nonzero mean difference: `t` is infinite.
    pub degenerate: bool,
}

/// Paired t test on `followup - baseline`.
pub fn paired_t(series: &PairedSeries) -> Result<TTest> {
    let d = series.differences();
    require_len(&d, 2, "paired t test")?;
    let n = d.len() as f64;
    let mu = mean(&d);
    let sd = std_dev(&d);
    let df = n - 1.0;
    if sd == 0.0 {
        return Ok(degenerate_t(mu, df));
    }
    let t = mu / (sd / n.sqrt());
    Ok(TTest {
        t,
        p: t_two_sided(t, df),
        df,
        degenerate: false,
    })
}

fn degenerate_t(diff: f64, df: f64) -> TTest {
    if diff == 0.0 {
        TTest {
            t: 0.0,
            p: 1.0,
            df,
            degenerate: false,
        }
    } else {
        TTest {
            t: diff.signum() * f64::INFINITY,
            p: 0.0,
            df,
            degenerate: true,
        }
    }
}

/// Pooled-variance two-sample t test of `a` against `b`.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    require_len(a, 2, "two-sample t test (first group)")?;
    require_len(b, 2, "two-sample t test (second group)")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return Ok(degenerate_t(diff, df));
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        p: t_two_sided(t, df),
        df,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
}

/// Classical one-way ANOVA. With zero within-group variance the F statistic
/// is 0 when the group means agree and infinite otherwise.
pub fn anova_oneway(groups: &[&[f64]]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::Input("ANOVA needs at least 2 groups".into()));
    }
    for (i, g) in groups.iter().enumerate() {
        require_len(g, 2, &format!("ANOVA group {}", i + 1))?;
    }
    let k = groups.len() as f64;
    let total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / total as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let mu = mean(g);
        ss_between += g.len() as f64 * (mu - grand) * (mu - grand);
        ss_within += g.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
    }
    let df_between = k - 1.0;
    let df_within = total as f64 - k;
    let (f, p) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_between / df_between) / (ss_within / df_within);
        let dist = FisherSnedecor::new(df_between, df_within).expect("positive degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(AnovaResult {
        f,
        p,
        df_between,
        df_within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub chi2: f64,
    pub p: f64,
    pub yates: bool,
}

/// Pearson chi-square test of independence on a 2x2 table of counts
/// `[[a, b], [c, d]]`, optionally with Yates' continuity correction.
pub fn chi_square_2x2(table: [[f64; 2]; 2], yates: bool) -> Result<ChiSquareResult> {
    if table.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Input("contingency counts must be finite and nonnegative".into()));
    }
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let n = rows[0] + rows[1];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return Ok(ChiSquareResult {
            chi2: 0.0,
            p: 1.0,
            yates,
        });
    }
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] * cols[j] / n;
            let mut dev = (table[i][j] - expected).abs();
            if yates {
                dev = (dev - 0.5).max(0.0);
            }
            chi2 += dev * dev / expected;
        }
    }
    Ok(ChiSquareResult {
        chi2,
        p: chi2_sf(chi2, 1.0),
        yates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn series(base: &[f64], diffs: &[f64]) -> PairedSeries {
        let follow = base.iter().zip(diffs).map(|(b, d)| b + d).collect();
        PairedSeries::new(base.to_vec(), follow).unwrap()
    }

    #[test]
    fn paired_t_hand_value() {
        let r = paired_t(&series(&[10.0, 20.0, 30.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2.0);
        let flipped = paired_t(&series(&[10.0, 20.0, 30.0], &[-1.0, -2.0, -3.0])).unwrap();
        assert!((flipped.t + r.t).abs() < 1e-12);
        assert!((flipped.p - r.p).abs() < 1e-15);
    }

    #[test]
    fn paired_t_no_change() {
        let r = paired_t(&series(&[1.0, 2.0, 5.0], &[0.0, 0.0, 0.0])).unwrap();
        assert_eq!((r.t, r.p, r.degenerate), (0.0, 1.0, false));
        let shift = paired_t(&series(&[1.0, 2.0, 5.0], &[0.5, 0.5, 0.5])).unwrap();
        assert!(shift.degenerate && shift.t.is_infinite());
    }

    #[test]
    fn two_sample_hand_value() {
        let r = two_sample_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        // pooled sd 1, standard error sqrt(2/3)
        assert!((r.t + 3.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.t + 3.674).abs() < 1e-3);
    }

    #[test]
    fn anova_two_groups_is_t_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: Vec<f64> = (0..13).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..9).map(|_| 0.4 + rng.sample::<f64, _>(StandardNormal)).collect();
            let t = two_sample_t(&a, &b).unwrap();
            let f = anova_oneway(&[&a, &b]).unwrap();
            assert!((f.f - t.t * t.t).abs() <= 1e-10 * f.f.max(1.0));
            assert!((f.p - t.p).abs() < 1e-9);
        }
    }

    #[test]
    fn anova_zero_within_variance() {
        let r = anova_oneway(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!((r.f, r.p), (0.0, 1.0));
        let r = anova_oneway(&[&[1.0, 1.0], &[2.0, 2.0]]).unwrap();
        assert!(r.f.is_infinite());
    }

    #[test]
    fn chi_square_balanced_table() {
        let r = chi_square_2x2([[10.0, 10.0], [10.0, 10.0]], false).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn chi_square_hand_value() {
        // expected counts 15 everywhere, deviations 5
        let r = chi_square_2x2([[20.0, 10.0], [10.0, 20.0]], false).unwrap();
        assert!((r.chi2 - 4.0 * 25.0 / 15.0).abs() < 1e-12);
        let y = chi_square_2x2([[20.0, 10.0], [10.0, 20.0]], true).unwrap();
        assert!((y.chi2 - 4.0 * 4.5 * 4.5 / 15.0).abs() < 1e-12);
    }
}
