//! Before / during / after comparison of biometric signals around labeled events.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::hypothesis::{paired_t_test, usable_pairs, welch_t_test, Moments, TestKind, TestResult};
use crate::error::Result;
use crate::eval::DEFAULT_TARGET_LABEL;
use crate::session::{
    validate_session, EventInterval, Gender, SessionBundle, Signal, ValidationConfig,
};

pub const DEFAULT_WINDOW_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Before,
    During,
    After,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Period::Before => "before",
            Period::During => "during",
            Period::After => "after",
        })
    }
}

/// The three pairwise period comparisons, earlier period first.
pub const COMPARISONS: [(Period, Period); 3] = [
    (Period::Before, Period::During),
    (Period::During, Period::After),
    (Period::Before, Period::After),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    All,
    Female,
    Male,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Female, Cohort::Male];

    pub fn contains(self, gender: Gender) -> bool {
        match self {
            Cohort::All => true,
            Cohort::Female => gender == Gender::Female,
            Cohort::Male => gender == Gender::Male,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cohort::All => "all",
            Cohort::Female => "female",
            Cohort::Male => "male",
        })
    }
}

/// Mean of one signal in each period; `None` when the window held no samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeriodMeans {
    pub before: Option<f64>,
    pub during: Option<f64>,
    pub after: Option<f64>,
}

impl PeriodMeans {
    pub fn get(&self, period: Period) -> Option<f64> {
        match period {
            Period::Before => self.before,
            Period::During => self.during,
            Period::After => self.after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTriplet {
    pub session_id: String,
    pub gender: Gender,
    /// Position of the event among the session's target events.
    pub event_index: usize,
    pub event: EventInterval,
    pub window_len: f64,
    pub means: BTreeMap<Signal, PeriodMeans>,
}

impl EventTriplet {
    pub fn mean(&self, signal: Signal, period: Period) -> Option<f64> {
        self.means.get(&signal).and_then(|m| m.get(period))
    }
}

fn mean_where(values: &[(f64, f64)], keep: impl Fn(f64) -> bool) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .filter(|(t, _)| keep(*t))
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One triplet per `target_label` event. Windows are `[start - L, start)`,
/// `[start, end]` and `(end, end + L]`, clipped to the session.
pub fn extract_triplets(
    bundle: &SessionBundle,
    target_label: &str,
    window_len: f64,
) -> Vec<EventTriplet> {
    let streams: BTreeMap<Signal, Vec<(f64, f64)>> = Signal::ALL
        .into_iter()
        .map(|s| {
            (
                s,
                bundle.signal(s).map(|b| (b.timestamp, b.value)).collect(),
            )
        })
        .collect();
    bundle
        .labels_for(target_label)
        .enumerate()
        .map(|(event_index, event)| {
            let (start, end) = (event.start, event.end);
            let before_lo = (start - window_len).max(0.0);
            let after_hi = (end + window_len).min(bundle.duration);
            let means = streams
                .iter()
                .map(|(&signal, values)| {
                    let m = PeriodMeans {
                        before: mean_where(values, |t| t >= before_lo && t < start),
                        during: mean_where(values, |t| t >= start && t <= end),
                        after: mean_where(values, |t| t > end && t <= after_hi),
                    };
                    (signal, m)
                })
                .collect();
            EventTriplet {
                session_id: bundle.session_id.clone(),
                gender: bundle.learner_meta.gender,
                event_index,
                event: event.clone(),
                window_len,
                means,
            }
        })
        .collect()
}

/// Summary of a set of observations. `sd` is 0 when `n == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        match Moments::of(values) {
            Some(m) => Summary {
                n: m.n,
                mean: Some(m.mean),
                sd: Some(m.sd),
            },
            None => Summary {
                n: 0,
                mean: None,
                sd: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub signal: Signal,
    pub cohort: Cohort,
    pub before: Summary,
    pub during: Summary,
    pub after: Summary,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    /// Requested cohorts that had no events.
    pub omitted: Vec<Cohort>,
}

impl SummaryTable {
    pub fn row(&self, signal: Signal, cohort: Cohort) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.signal == signal && r.cohort == cohort)
    }

    /// CSV in the layout of a before/during/after table, one row per signal and cohort.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(
            w,
            "signal,cohort,before_mean,before_sd,before_n,during_mean,during_sd,during_n,after_mean,after_sd,after_n"
        )?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            write!(w, "{},{}", r.signal, r.cohort)?;
            for s in [r.before, r.during, r.after] {
                write!(w, ",{},{},{}", opt(s.mean), opt(s.sd), s.n)?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}

/// Mean and SD of the per-event period means, per signal and cohort. Each
/// triplet contributes one observation per defined period.
pub fn summarize(triplets: &[EventTriplet], cohorts: &[Cohort]) -> SummaryTable {
    let mut table = SummaryTable::default();
    for &cohort in cohorts {
        let members: Vec<&EventTriplet> = triplets
            .iter()
            .filter(|t| cohort.contains(t.gender))
            .collect();
        if members.is_empty() {
            tracing::warn!(%cohort, "cohort has no events; omitted from summary");
            table.omitted.push(cohort);
            continue;
        }
        for signal in Signal::ALL {
            let period = |p: Period| {
                let v: Vec<f64> = members.iter().filter_map(|t| t.mean(signal, p)).collect();
                Summary::of(&v)
            };
            table.rows.push(SummaryRow {
                signal,
                cohort,
                before: period(Period::Before),
                during: period(Period::During),
                after: period(Period::After),
            });
        }
    }
    table.rows.sort_by_key(|r| (r.signal, r.cohort));
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every event is one observation.
    #[default]
    PerEvent,
    /// A learner's events are averaged into a single observation first.
    PerLearner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub target_label: String,
    pub window_len_s: f64,
    pub aggregation: Aggregation,
    pub test: TestKind,
    /// Sessions whose biometric loss exceeds the threshold are left out.
    /// `None` keeps every session.
    pub exclusion: Option<ValidationConfig>,
    pub cohorts: Vec<Cohort>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            target_label: DEFAULT_TARGET_LABEL.into(),
            window_len_s: DEFAULT_WINDOW_S,
            aggregation: Aggregation::PerEvent,
            test: TestKind::Paired,
            exclusion: Some(ValidationConfig::default()),
            cohorts: Cohort::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub signal: Signal,
    pub period_a: Period,
    pub period_b: Period,
    pub cohort: Cohort,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimes {
    pub overall: Summary,
    /// Indexed by the event's position within its session (first message, second, ...).
    pub per_message: Vec<Summary>,
    pub per_gender: BTreeMap<Gender, Summary>,
}

/// Mean and SD of target-event durations.
pub fn response_times(triplets: &[EventTriplet]) -> ResponseTimes {
    let durations = |pred: &dyn Fn(&EventTriplet) -> bool| -> Vec<f64> {
        triplets
            .iter()
            .filter(|t| pred(t))
            .map(|t| t.event.duration())
            .collect()
    };
    let max_index = triplets
        .iter()
        .map(|t| t.event_index + 1)
        .max()
        .unwrap_or(0);
    let mut per_gender = BTreeMap::new();
    for g in [Gender::Female, Gender::Male, Gender::Unspecified] {
        let d = durations(&|t| t.gender == g);
        if !d.is_empty() {
            per_gender.insert(g, Summary::of(&d));
        }
    }
    ResponseTimes {
        overall: Summary::of(&durations(&|_| true)),
        per_message: (0..max_index)
            .map(|i| Summary::of(&durations(&|t| t.event_index == i)))
            .collect(),
        per_gender,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub sessions_used: Vec<String>,
    pub sessions_excluded: Vec<String>,
    pub event_count: usize,
    pub cells: Vec<StudyCell>,
    pub summary: SummaryTable,
    pub response_times: ResponseTimes,
}

/// Average a learner's triplets into one.
fn per_learner(triplets: &[EventTriplet]) -> Vec<EventTriplet> {
    let mut groups: Vec<Vec<&EventTriplet>> = Vec::new();
    for t in triplets {
        match groups.iter_mut().find(|g| g[0].session_id == t.session_id) {
            Some(g) => g.push(t),
            None => groups.push(vec![t]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let avg = |signal: Signal, p: Period| {
                let v: Vec<f64> = g.iter().filter_map(|t| t.mean(signal, p)).collect();
                Moments::of(&v).map(|m| m.mean)
            };
            let means = Signal::ALL
                .into_iter()
                .map(|s| {
                    (
                        s,
                        PeriodMeans {
                            before: avg(s, Period::Before),
                            during: avg(s, Period::During),
                            after: avg(s, Period::After),
                        },
                    )
                })
                .collect();
            EventTriplet {
                means,
                ..g[0].clone()
            }
        })
        .collect()
}

fn run_test(kind: TestKind, a: &[Option<f64>], b: &[Option<f64>]) -> Result<TestResult> {
    match kind {
        TestKind::Paired => paired_t_test(a, b),
        TestKind::Welch => {
            let (xa, xb) = usable_pairs(a, b)?;
            welch_t_test(&xa, &xb)
        }
    }
}

/// Run every signal × comparison × cohort test plus the summary table and
/// response-time statistics. Cells that cannot be computed carry a reason.
pub fn study(sessions: &[SessionBundle], config: &StudyConfig) -> StudyReport {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    let mut triplets = Vec::new();
    for s in sessions {
        if let Some(vc) = &config.exclusion {
            if validate_session(s, vc).excluded {
                excluded.push(s.session_id.clone());
                continue;
            }
        }
        used.push(s.session_id.clone());
        triplets.extend(extract_triplets(
            s,
            &config.target_label,
            config.window_len_s,
        ));
    }

    let observations = match config.aggregation {
        Aggregation::PerEvent => triplets.clone(),
        Aggregation::PerLearner => per_learner(&triplets),
    };

    let summary = summarize(&observations, &config.cohorts);
    let mut cells = Vec::new();
    for &cohort in &config.cohorts {
        if summary.omitted.contains(&cohort) {
            continue;
        }
        let members: Vec<&EventTriplet> = observations
            .iter()
            .filter(|t| cohort.contains(t.gender))
            .collect();
        for signal in Signal::ALL {
            for (pa, pb) in COMPARISONS {
                let a: Vec<Option<f64>> = members.iter().map(|t| t.mean(signal, pa)).collect();
                let b: Vec<Option<f64>> = members.iter().map(|t| t.mean(signal, pb)).collect();
                let (result, skipped) = match run_test(config.test, &a, &b) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                cells.push(StudyCell {
                    signal,
                    period_a: pa,
                    period_b: pb,
                    cohort,
                    result,
                    skipped,
                });
            }
        }
    }

    StudyReport {
        config: config.clone(),
        sessions_used: used,
        sessions_excluded: excluded,
        event_count: triplets.len(),
        cells,
        summary,
        response_times: response_times(&triplets),
    }
}

impl StudyReport {
    pub fn cell(&self, signal: Signal, a: Period, b: Period, cohort: Cohort) -> Option<&StudyCell> {
        self.cells.iter().find(|c| {
            c.signal == signal && c.period_a == a && c.period_b == b && c.cohort == cohort
        })
    }
}
