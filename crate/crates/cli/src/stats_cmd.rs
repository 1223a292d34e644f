//! `umi stats <sub>`: statistics on CSV input, JSON results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Subcommand};
use serde_json::{json, Value};
use umi_core::stats::{
    anova_oneway, chi_square_2x2, cohens_d_paired, cox_univariate, enrichment, kaplan_meier, log_rank,
    min_sample_size, paired_t, pearson, roc, sample_size_constant, EnrichmentOptions, Orientation, PairedSeries,
    SampleSizeOptions, SurvivalRecord,
};
use umi_core::Error;

use crate::table::{parse_2x2, Table};
use crate::write_text;

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(subcommand)]
    pub command: StatsCommand,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairedInput {
    /// CSV with one row per subject.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "baseline")]
    pub baseline: String,
    #[arg(long, default_value = "followup")]
    pub followup: String,
}

#[derive(Debug, Args)]
pub struct SurvivalInput {
    /// CSV with `time`, `event` (0/1) and `marker` (0/1) columns.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Paired t-test and Cohen's d of follow-up minus baseline.
    PairedT(PairedInput),
    /// Minimum per-arm sample size; without --input only the constant is reported.
    Power {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "baseline")]
        baseline: String,
        #[arg(long, default_value = "followup")]
        followup: String,
        #[arg(long, default_value_t = 0.25)]
        reduction: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Years between the two measurements.
        #[arg(long, default_value_t = 2.0)]
        interval_years: f64,
    },
    /// ROC curve, AUC with DeLong interval, nearest-point cutoff.
    Roc {
        /// CSV with `score` and `label` (1 = positive) columns.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "higher")]
        orientation: Orientation,
        /// CSV of ROC points.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Univariate Cox model on the marker indicator.
    Cox(SurvivalInput),
    /// Kaplan-Meier curves per marker group and the log-rank test.
    Km {
        #[command(flatten)]
        input: SurvivalInput,
        /// Directory for `km_positive.csv` and `km_negative.csv`.
        #[arg(long)]
        steps: Option<PathBuf>,
    },
    /// Enrichment table: N' = (ES/ES')^2 N at reference-percentile cutoffs.
    Enrich {
        /// CSV with `score` and `change` columns for the unenriched cohort.
        #[arg(long)]
        input: PathBuf,
        /// CSV with a `score` column for the reference group.
        #[arg(long)]
        reference: PathBuf,
        /// Required sample size N of the unenriched cohort.
        #[arg(long)]
        n: f64,
        #[arg(long, value_delimiter = ',', default_value = "60,75,90")]
        percentiles: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
    },
    /// One-way ANOVA on a long-format CSV with `group` and `value` columns.
    Anova {
        #[arg(long)]
        input: PathBuf,
    },
    /// Chi-square test of a 2x2 table given as `a,b,c,d`.
    Chi2 {
        #[arg(long)]
        table: String,
        #[arg(long)]
        yates: bool,
    },
    /// Pearson correlation of two columns.
    Pearson {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "x")]
        x: String,
        #[arg(long, default_value = "y")]
        y: String,
    },
}

fn paired(p: &PairedInput) -> Result<PairedSeries> {
    let t = Table::load(&p.input)?;
    Ok(PairedSeries::new(t.numbers(&p.baseline)?, t.numbers(&p.followup)?)?)
}

fn survival(path: &Path) -> Result<Vec<SurvivalRecord>> {
    let t = Table::load(path)?;
    let time = t.numbers("time")?;
    let event = t.flags("event")?;
    let marker = t.flags("marker")?;
    Ok((0..time.len())
        .map(|i| SurvivalRecord {
            time: time[i],
            event: event[i],
            marker_positive: marker[i],
        })
        .collect())
}

pub fn run(args: &StatsArgs, seed: Option<u64>) -> Result<()> {
    let result: Value = match &args.command {
        StatsCommand::PairedT(p) => {
            let s = paired(p)?;
            json!({
                "n": s.baseline.len(),
                "t_test": paired_t(&s)?,
                "cohens_d": cohens_d_paired(&s)?,
            })
        }
        StatsCommand::Power {
            input,
            baseline,
            followup,
            reduction,
            power,
            alpha,
            interval_years,
        } => match input {
            None => json!({ "constant": sample_size_constant(*power, *alpha), "power": power, "alpha": alpha }),
            Some(path) => {
                let s = paired(&PairedInput {
                    input: path.clone(),
                    baseline: baseline.clone(),
                    followup: followup.clone(),
                })?;
                let opts = SampleSizeOptions {
                    reduction: *reduction,
                    power: *power,
                    alpha: *alpha,
                    interval_years: *interval_years,
                };
                json!({ "options": opts, "sample_size": min_sample_size(&s, &opts)? })
            }
        },
        StatsCommand::Roc {
            input,
            orientation,
            points,
        } => {
            let t = Table::load(input)?;
            let r = roc(&t.numbers("score")?, &t.flags("label")?, *orientation)?;
            if let Some(p) = points {
                write_text(p, &r.points_csv())?;
            }
            json!({
                "auc": r.auc,
                "auc_ci95": r.auc_ci,
                "optimal_cutoff": r.optimal_cutoff,
                "sensitivity": r.optimal_sensitivity,
                "specificity": r.optimal_specificity,
                "orientation": r.orientation,
                "points": r.thresholds.len(),
            })
        }
        StatsCommand::Cox(s) => json!(cox_univariate(&survival(&s.input)?)?),
        StatsCommand::Km { input, steps } => {
            let records = survival(&input.input)?;
            let (pos, neg): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.marker_positive);
            let km_pos = kaplan_meier(&pos)?;
            let km_neg = kaplan_meier(&neg)?;
            if let Some(dir) = steps {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                write_text(&dir.join("km_positive.csv"), &km_pos.steps_csv())?;
                write_text(&dir.join("km_negative.csv"), &km_neg.steps_csv())?;
            }
            json!({
                "positive": km_pos,
                "negative": km_neg,
                "log_rank": log_rank(&pos, &neg)?,
            })
        }
        StatsCommand::Enrich {
            input,
            reference,
            n,
            percentiles,
            n_boot,
        } => {
            let t = Table::load(input)?;
            let subjects: Vec<(f64, f64)> = t.numbers("score")?.into_iter().zip(t.numbers("change")?).collect();
            let reference = Table::load(reference)?.numbers("score")?;
            let opts = EnrichmentOptions {
                n_boot: *n_boot,
                seed: seed.unwrap_or(0),
            };
            json!({ "n": n, "rows": enrichment(&subjects, &reference, percentiles, *n, &opts)? })
        }
        StatsCommand::Anova { input } => {
            let t = Table::load(input)?;
            let labels = t.strings("group")?;
            let values = t.numbers("value")?;
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (g, v) in labels.into_iter().zip(values) {
                groups.entry(g).or_default().push(v);
            }
            let slices: Vec<&[f64]> = groups.values().map(Vec::as_slice).collect();
            json!({
                "groups": groups.iter().map(|(k, v)| (k.clone(), v.len())).collect::<BTreeMap<_, _>>(),
                "anova": anova_oneway(&slices)?,
            })
        }
        StatsCommand::Chi2 { table, yates } => json!(chi_square_2x2(parse_2x2(table)?, *yates)?),
        StatsCommand::Pearson { input, x, y } => {
            let t = Table::load(input)?;
            json!(pearson(&t.numbers(x)?, &t.numbers(y)?)?)
        }
    };
    let text = serde_json::to_string_pretty(&result)? + "\n";
    match &args.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
