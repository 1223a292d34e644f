use serde::{Deserialize, Serialize};

use super::{mean, require_len, t_two_sided, z95};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Fisher z interval; `(-1, 1)` when `n = 3`.
    pub r_ci95: (f64, f64),
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with a Fisher-z interval and a t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} x values but {} y values", x.len(), y.len())));
    }
    require_len(x, 3, "correlation")?;
    require_len(y, 3, "correlation")?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation undefined: a variable has zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len();
    let df = n as f64 - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    let r_ci95 = if n > 3 {
        let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
        let half = z95() / (n as f64 - 3.0).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    } else {
        (-1.0, 1.0)
    };
    Ok(Correlation { r, r_ci95, p, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let r = pearson(&x, &x).unwrap();
        assert!((r.r - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        let r = pearson(&x, &y).unwrap();
        assert!((r.r + 1.0).abs() < 1e-15);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn interval_contains_estimate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let r = pearson(&x, &y).unwrap();
        assert!(r.r_ci95.0 < r.r && r.r < r.r_ci95.1);
        assert!(r.p > 0.0 && r.p < 1.0);
    }

    #[test]
    fn constant_input_is_rejected() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
