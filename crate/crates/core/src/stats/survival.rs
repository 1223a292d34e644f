//! Univariate Cox model for a binary marker, Kaplan-Meier estimation and
//! the log-rank test.

use serde::{Deserialize, Serialize};

use super::{chi2_sf, normal_two_sided, z95, SurvivalRecord};
use crate::error::{Error, Result};

/// Risk-set summary at one distinct event time.
#[derive(Debug, Clone, Copy)]
struct EventTime {
    /// Events, and events among marker-positive subjects.
    d: f64,
    d1: f64,
    /// At risk, and at risk among marker-positive subjects.
    n: f64,
    n1: f64,
}

fn check_records(records: &[SurvivalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Input("no survival records".into()));
    }
    if let Some(r) = records.iter().find(|r| !(r.time >= 0.0 && r.time.is_finite())) {
        return Err(Error::Input(format!("survival time {} is not a nonnegative number", r.time)));
    }
    Ok(())
}

/// Distinct event times, ascending, with risk sets (subjects whose time is
/// at or after the event time).
fn event_table(records: &[SurvivalRecord]) -> Vec<EventTime> {
    let mut order: Vec<&SurvivalRecord> = records.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut n = records.len() as f64;
    let mut n1 = records.iter().filter(|r| r.marker_positive).count() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = order[i].time;
        let mut j = i;
        let (mut d, mut d1, mut leave, mut leave1) = (0.0, 0.0, 0.0, 0.0);
        while j < order.len() && order[j].time == t {
            let r = order[j];
            if r.event {
                d += 1.0;
                if r.marker_positive {
                    d1 += 1.0;
                }
            }
            leave += 1.0;
            if r.marker_positive {
                leave1 += 1.0;
            }
            j += 1;
        }
        if d > 0.0 {
            out.push(EventTime { d, d1, n, n1 });
        }
        n -= leave;
        n1 -= leave1;
        i = j;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxResult {
    pub beta: f64,
    pub se: f64,
    pub hr: f64,
    pub hr_ci95: (f64, f64),
    /// Wald test p-value.
    pub p: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub ties: String,
}

/// Breslow partial log-likelihood, score and information at `beta`.
fn partial_likelihood(table: &[EventTime], beta: f64) -> (f64, f64, f64) {
    let (mut ll, mut score, mut info) = (0.0, 0.0, 0.0);
    let eb = beta.exp();
    for e in table {
        let denom = (e.n - e.n1) + e.n1 * eb;
        let p = e.n1 * eb / denom;
        ll += beta * e.d1 - e.d * denom.ln();
        score += e.d1 - e.d * p;
        info += e.d * p * (1.0 - p);
    }
    (ll, score, info)
}

/// Univariate Cox regression on the marker indicator, Breslow ties,
/// Newton iteration with step halving.
pub fn cox_univariate(records: &[SurvivalRecord]) -> Result<CoxResult> {
    check_records(records)?;
    let table = event_table(records);
    if table.is_empty() {
        return Err(Error::Input("no events: the Cox model is not estimable".into()));
    }
    // limits of the score as beta -> +inf / -inf decide whether a finite
    // maximizer exists
    let up: f64 = table.iter().map(|e| e.d1 - if e.n1 > 0.0 { e.d } else { 0.0 }).sum();
    let down: f64 = table.iter().map(|e| e.d1 - if e.n1 < e.n { 0.0 } else { e.d }).sum();
    if up >= 0.0 || down <= 0.0 {
        let direction = if up >= 0.0 { "+infinity" } else { "-infinity" };
        return Err(Error::Numerical(format!(
            "monotone partial likelihood: the estimate diverges to {direction} \
             (events occur only in one marker group while the other is still at risk, \
             or the marker is constant)"
        )));
    }

    let mut beta = 0.0;
    let (mut ll, mut score, mut info) = partial_likelihood(&table, beta);
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let step = score / info;
        let mut trial = beta + step.clamp(-5.0, 5.0);
        let mut next = partial_likelihood(&table, trial);
        let mut halvings = 0;
        while next.0 < ll - 1e-12 && halvings < 60 {
            trial = 0.5 * (beta + trial);
            next = partial_likelihood(&table, trial);
            halvings += 1;
        }
        let delta = (trial - beta).abs();
        beta = trial;
        (ll, score, info) = next;
        if delta < 1e-10 {
            break;
        }
    }
    if !(info > 0.0) || !beta.is_finite() {
        return Err(Error::Numerical("Cox information vanished at the estimate".into()));
    }
    let se = 1.0 / info.sqrt();
    let z = z95();
    Ok(CoxResult {
        beta,
        se,
        hr: beta.exp(),
        hr_ci95: ((beta - z * se).exp(), (beta + z * se).exp()),
        p: normal_two_sided(beta / se),
        log_likelihood: ll,
        iterations,
        ties: "breslow".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub survival: f64,
    /// Greenwood standard error of the survival estimate.
    pub std_err: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// One step per distinct event time.
    pub steps: Vec<KmStep>,
    pub subjects: usize,
}

impl KmCurve {
    /// Survival probability just after time `t` (right-continuous steps).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::from("time,at_risk,events,survival,std_err,lower,upper\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.time, s.at_risk, s.events, s.survival, s.std_err, s.lower, s.upper
            ));
        }
        out
    }
}

/// Product-limit estimator with Greenwood variance and a 95% log-minus-log
/// interval.
pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<KmCurve> {
    check_records(records)?;
    let mut order: Vec<&SurvivalRecord> = records.iter().collect();
    order.sort_by(|a, b| a.time.total_cmp(&b.time));
    let z = z95();
    let mut steps = Vec::new();
    let mut at_risk = records.len();
    let mut surv = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = order[i].time;
        let mut j = i;
        let mut events = 0;
        while j < order.len() && order[j].time == t {
            events += order[j].event as usize;
            j += 1;
        }
        if events > 0 {
            let (n, d) = (at_risk as f64, events as f64);
            surv *= 1.0 - d / n;
            if n > d {
                greenwood += d / (n * (n - d));
            }
            let std_err = surv * greenwood.sqrt();
            let (lower, upper) = if surv > 0.0 && surv < 1.0 {
                let ll = surv.ln();
                let half = z * greenwood.sqrt() / ll.abs();
                // S^exp(+h) is the lower bound since ln S < 0
                (surv.powf(half.exp()), surv.powf((-half).exp()))
            } else {
                (surv, surv)
            };
            steps.push(KmStep {
                time: t,
                at_risk,
                events,
                survival: surv,
                std_err,
                lower,
                upper,
            });
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(KmCurve {
        steps,
        subjects: records.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRankResult {
    pub chi2: f64,
    pub p: f64,
    /// Observed and expected events in the first group.
    pub observed: f64,
    pub expected: f64,
    pub variance: f64,
}

/// Log-rank test of the first group against the second.
pub fn log_rank(first: &[SurvivalRecord], second: &[SurvivalRecord]) -> Result<LogRankResult> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::Input("log-rank test needs two nonempty groups".into()));
    }
    check_records(first)?;
    check_records(second)?;
    // reuse the marker flag to tag group membership
    let pooled: Vec<SurvivalRecord> = first
        .iter()
        .map(|r| SurvivalRecord { marker_positive: true, ..*r })
        .chain(second.iter().map(|r| SurvivalRecord { marker_positive: false, ..*r }))
        .collect();
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    for e in event_table(&pooled) {
        observed += e.d1;
        expected += e.d * e.n1 / e.n;
        if e.n > 1.0 {
            variance += e.d * (e.n1 / e.n) * (1.0 - e.n1 / e.n) * (e.n - e.d) / (e.n - 1.0);
        }
    }
    let chi2 = if variance > 0.0 {
        (observed - expected).powi(2) / variance
    } else {
        0.0
    };
    Ok(LogRankResult {
        chi2,
        p: chi2_sf(chi2, 1.0),
        observed,
        expected,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: bool, marker: bool) -> SurvivalRecord {
        SurvivalRecord {
            time,
            event,
            marker_positive: marker,
        }
    }

    #[test]
    fn km_three_events() {
        let r = [rec(1.0, true, false), rec(2.0, true, false), rec(3.0, true, false)];
        let km = kaplan_meier(&r).unwrap();
        let s: Vec<f64> = km.steps.iter().map(|s| s.survival).collect();
        assert_eq!(s, vec![1.0 - 1.0 / 3.0, (1.0 - 1.0 / 3.0) * (1.0 - 1.0 / 2.0), 0.0]);
        assert_eq!(km.survival_at(0.5), 1.0);
        assert_eq!(km.survival_at(2.5), s[1]);
    }

    #[test]
    fn km_without_events_is_flat() {
        let r = [rec(1.0, false, false), rec(4.0, false, true)];
        let km = kaplan_meier(&r).unwrap();
        assert!(km.steps.is_empty());
        assert_eq!(km.survival_at(10.0), 1.0);
    }

    #[test]
    fn km_with_censoring_by_hand() {
        // times 1 (event), 2 (censored), 3 (event), 4 (event)
        let r = [rec(3.0, true, false), rec(1.0, true, false), rec(4.0, true, false), rec(2.0, false, false)];
        let km = kaplan_meier(&r).unwrap();
        let s: Vec<(f64, usize, f64)> = km.steps.iter().map(|s| (s.time, s.at_risk, s.survival)).collect();
        assert_eq!(s, vec![(1.0, 4, 0.75), (3.0, 2, 0.375), (4.0, 1, 0.0)]);
        // Greenwood at t=1: 0.75^2 * 1/(4*3)
        assert!((km.steps[0].std_err - 0.75 * (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(km.steps[0].lower < 0.75 && km.steps[0].upper > 0.75);
    }

    #[test]
    fn log_rank_identical_groups() {
        let g = [rec(1.0, true, false), rec(2.0, false, false), rec(3.0, true, false)];
        let r = log_rank(&g, &g).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn log_rank_by_hand() {
        // group 1 events at 1 and 3; group 2 event at 2, censored at 4
        let a = [rec(1.0, true, false), rec(3.0, true, false)];
        let b = [rec(2.0, true, false), rec(4.0, false, false)];
        let r = log_rank(&a, &b).unwrap();
        // t=1: n=4,n1=2,d=1 -> E=1/2, V=1/4
        // t=2: n=3,n1=1,d=1 -> E=1/3, V=2/9
        // t=3: n=2,n1=1,d=1 -> E=1/2, V=1/4
        let e = 0.5 + 1.0 / 3.0 + 0.5;
        let v = 0.25 + 2.0 / 9.0 + 0.25;
        assert_eq!(r.observed, 2.0);
        assert!((r.expected - e).abs() < 1e-15);
        assert!((r.variance - v).abs() < 1e-15);
        assert!((r.chi2 - (2.0 - e).powi(2) / v).abs() < 1e-14);
    }

    #[test]
    fn cox_closed_form_three_subjects() {
        // ll = b - ln(1 + 2e^b) - ln(1 + e^b); the score vanishes at e^b = 1/sqrt(2)
        let r = [rec(1.0, true, true), rec(2.0, true, false), rec(3.0, false, true)];
        let fit = cox_univariate(&r).unwrap();
        assert!((fit.beta + 0.5 * 2f64.ln()).abs() < 1e-9);
        assert_eq!(fit.ties, "breslow");
    }

    #[test]
    fn cox_two_subject_toy_is_monotone() {
        // ll = b - ln(1 + e^b), strictly increasing: no finite maximizer
        let r = [rec(1.0, true, true), rec(2.0, false, false)];
        let err = cox_univariate(&r).unwrap_err();
        assert!(err.to_string().contains("+infinity"), "{err}");
    }

    #[test]
    fn cox_relabel_negates_beta() {
        let r = [
            rec(2.0, true, true),
            rec(3.0, true, false),
            rec(4.0, false, true),
            rec(5.0, true, true),
            rec(6.0, true, false),
            rec(7.0, false, false),
            rec(3.0, true, true),
        ];
        let flipped: Vec<SurvivalRecord> = r.iter().map(|x| rec(x.time, x.event, !x.marker_positive)).collect();
        let a = cox_univariate(&r).unwrap();
        let b = cox_univariate(&flipped).unwrap();
        assert!((a.beta + b.beta).abs() < 1e-8);
        assert!((a.hr * b.hr - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cox_without_events_errors() {
        assert!(cox_univariate(&[rec(1.0, false, true), rec(2.0, false, false)]).is_err());
    }
}
