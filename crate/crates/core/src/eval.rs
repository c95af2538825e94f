//! Scoring detections against labeled intervals and sweeping the `(n, w)` grid.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::detector::{global_stats, window_means, DetectionResult, DetectorParams, WindowUnit};
use crate::error::{Error, Result};
use crate::session::{EventInterval, SessionBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    /// A truth counts as detected when its overlap with predictions exceeds this (seconds).
    pub min_overlap: f64,
    /// When false, each predicted event may be credited to at most one truth.
    pub one_to_many: bool,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy {
            min_overlap: 0.0,
            one_to_many: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMatch {
    pub start: f64,
    pub end: f64,
    pub matched: bool,
    /// Indices into the predicted list credited to this truth.
    pub predicted: Vec<usize>,
    pub overlap_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub truths: Vec<TruthMatch>,
    pub true_positive_truths: usize,
    pub missed_truths: usize,
    /// `None` when there are no truths to find.
    pub sensitivity: Option<f64>,
}

fn check_sorted_disjoint(events: &[EventInterval], what: &str) -> Result<()> {
    for pair in events.windows(2) {
        if pair[1].start < pair[0].start {
            return Err(Error::Invalid(format!(
                "{what} events are not sorted by start"
            )));
        }
        if pair[1].start < pair[0].end {
            return Err(Error::Invalid(format!(
                "{what} events [{}, {}] and [{}, {}] overlap",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

/// Decide, for each truth interval, whether the predictions detected it.
pub fn match_events(
    predicted: &[EventInterval],
    truth: &[EventInterval],
    policy: &MatchPolicy,
) -> Result<MatchReport> {
    check_sorted_disjoint(predicted, "predicted")?;
    check_sorted_disjoint(truth, "ground-truth")?;
    if let Some(t) = truth.iter().find(|t| t.duration() <= policy.min_overlap) {
        warn!(
            min_overlap = policy.min_overlap,
            "truth [{}, {}] is not longer than the minimum overlap and can never match",
            t.start,
            t.end
        );
    }

    let mut used = vec![false; predicted.len()];
    let truths: Vec<TruthMatch> = truth
        .iter()
        .map(|t| {
            let lo = predicted.partition_point(|p| p.end <= t.start);
            let hi = predicted.partition_point(|p| p.start < t.end);
            let overlapping = (lo..hi).filter(|&i| predicted[i].overlap_with(t.start, t.end) > 0.0);
            let (chosen, overlap) = if policy.one_to_many {
                let chosen: Vec<usize> = overlapping.collect();
                let overlap = chosen
                    .iter()
                    .map(|&i| predicted[i].overlap_with(t.start, t.end))
                    .sum();
                (chosen, overlap)
            } else {
                let best = overlapping.filter(|&i| !used[i]).max_by(|&a, &b| {
                    predicted[a]
                        .overlap_with(t.start, t.end)
                        .total_cmp(&predicted[b].overlap_with(t.start, t.end))
                        .then(b.cmp(&a))
                });
                match best {
                    Some(i) => (vec![i], predicted[i].overlap_with(t.start, t.end)),
                    None => (Vec::new(), 0.0),
                }
            };
            let matched = overlap > policy.min_overlap;
            if matched && !policy.one_to_many {
                for &i in &chosen {
                    used[i] = true;
                }
            }
            TruthMatch {
                start: t.start,
                end: t.end,
                matched,
                predicted: if matched { chosen } else { Vec::new() },
                overlap_s: overlap,
            }
        })
        .collect();

    let tp = truths.iter().filter(|t| t.matched).count();
    Ok(MatchReport {
        true_positive_truths: tp,
        missed_truths: truths.len() - tp,
        sensitivity: (!truths.is_empty()).then(|| tp as f64 / truths.len() as f64),
        truths,
    })
}

fn check_duration(duration: f64) -> Result<()> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "duration must be positive, got {duration}"
        )))
    }
}

/// Predicted events per hour of session.
pub fn events_per_hour(result: &DetectionResult, duration: f64) -> Result<f64> {
    check_duration(duration)?;
    Ok(result.events.len() as f64 * 3600.0 / duration)
}

/// Fraction of the session covered by predicted events (clipped to the session).
pub fn flagged_fraction(result: &DetectionResult, duration: f64) -> Result<f64> {
    check_duration(duration)?;
    let covered: f64 = result
        .events
        .iter()
        .map(|e| e.overlap_with(0.0, duration))
        .sum();
    Ok((covered / duration).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_values: Vec<f64>,
    pub w_values: Vec<u32>,
    pub window_unit: WindowUnit,
    pub stride: u32,
    pub min_window_coverage: f64,
    pub policy: MatchPolicy,
    pub target_label: String,
}

pub const DEFAULT_N_GRID: [f64; 5] = [1.5, 2.0, 2.5, 3.0, 3.5];
pub const DEFAULT_W_GRID: [u32; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_TARGET_LABEL: &str = "phone";

impl Default for SweepConfig {
    fn default() -> Self {
        let d = DetectorParams::default();
        SweepConfig {
            n_values: DEFAULT_N_GRID.to_vec(),
            w_values: DEFAULT_W_GRID.to_vec(),
            window_unit: d.window_unit,
            stride: d.stride,
            min_window_coverage: d.min_window_coverage,
            policy: MatchPolicy::default(),
            target_label: DEFAULT_TARGET_LABEL.into(),
        }
    }
}

impl SweepConfig {
    pub fn params(&self, n: f64, w: u32) -> DetectorParams {
        DetectorParams {
            n,
            w,
            window_unit: self.window_unit,
            stride: self.stride,
            min_window_coverage: self.min_window_coverage,
        }
    }

    /// `n` and `w` grids sorted ascending with duplicates removed.
    fn grids(&self) -> (Vec<f64>, Vec<u32>) {
        let mut n = self.n_values.clone();
        n.sort_by(f64::total_cmp);
        n.dedup();
        let mut w = self.w_values.clone();
        w.sort_unstable();
        w.dedup();
        (n, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: f64,
    pub w: u32,
    /// Macro-average over sessions that contain target events.
    pub mean_sensitivity: Option<f64>,
    pub mean_events_per_hour: f64,
    pub mean_flagged_fraction: f64,
    pub sessions: usize,
    pub sessions_with_targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSession {
    pub session_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_values: Vec<f64>,
    pub w_values: Vec<u32>,
    /// Row-major over `(n, w)`, both ascending.
    pub cells: Vec<SweepCell>,
    pub skipped: Vec<SkippedSession>,
}

impl SweepGrid {
    pub fn cell(&self, n: f64, w: u32) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.w == w)
    }
}

/// Per-session metrics for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionScore {
    pub sensitivity: Option<f64>,
    pub events_per_hour: f64,
    pub flagged_fraction: f64,
}

/// Score one detection against a session's target labels.
pub fn score_session(
    session: &SessionBundle,
    result: &DetectionResult,
    policy: &MatchPolicy,
    target_label: &str,
) -> Result<SessionScore> {
    let truth: Vec<EventInterval> = session.labels_for(target_label).cloned().collect();
    let report = match_events(&result.events, &truth, policy)?;
    Ok(SessionScore {
        sensitivity: report.sensitivity,
        events_per_hour: events_per_hour(result, session.duration)?,
        flagged_fraction: flagged_fraction(result, session.duration)?,
    })
}

/// All cells for one session, row-major over the sorted grids.
fn score_grid(
    session: &SessionBundle,
    config: &SweepConfig,
    n_grid: &[f64],
    w_grid: &[u32],
) -> Result<Vec<SessionScore>> {
    let series = session
        .angles
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("session has no angle series".into()))?;
    let stats = global_stats(series)?;
    let mut by_w = Vec::with_capacity(w_grid.len());
    for &w in w_grid {
        // the window means do not depend on n
        let windowed = window_means(series, &config.params(1.0, w))?;
        by_w.push(windowed);
    }
    let mut scores = Vec::with_capacity(n_grid.len() * w_grid.len());
    for &n in n_grid {
        for (windowed, &w) in by_w.iter().zip(w_grid) {
            let result =
                DetectionResult::from_windows(windowed, &stats, series.fps, config.params(n, w));
            scores.push(score_session(
                session,
                &result,
                &config.policy,
                &config.target_label,
            )?);
        }
    }
    Ok(scores)
}

/// Evaluate every `(n, w)` cell over the corpus.
///
/// Sessions are processed in parallel on the current rayon pool; averages
/// are accumulated in session order so the result is bit-reproducible.
/// Sessions that cannot be detected on (no angle data, too short for the
/// window) are skipped and listed in [`SweepGrid::skipped`].
pub fn sweep(sessions: &[SessionBundle], config: &SweepConfig) -> Result<SweepGrid> {
    let (n_grid, w_grid) = config.grids();
    if n_grid.is_empty() || w_grid.is_empty() {
        return Err(Error::InvalidParams("parameter grid is empty".into()));
    }
    if sessions.is_empty() {
        return Err(Error::InvalidParams("no sessions to sweep".into()));
    }
    for &n in &n_grid {
        for &w in &w_grid {
            config.params(n, w).check()?;
        }
    }
    // a stride longer than the window is a grid problem, not a session problem
    for series in sessions.iter().filter_map(|s| s.angles.as_ref()) {
        for &w in &w_grid {
            config.params(n_grid[0], w).validate(series.fps)?;
        }
    }

    let per_session: Vec<Result<Vec<SessionScore>>> = sessions
        .par_iter()
        .map(|s| score_grid(s, config, &n_grid, &w_grid))
        .collect();

    let mut skipped = Vec::new();
    let mut scored: Vec<Vec<SessionScore>> = Vec::new();
    for (session, scores) in sessions.iter().zip(per_session) {
        match scores {
            Ok(s) => scored.push(s),
            Err(e) => {
                warn!(session = %session.session_id, "skipping session: {e}");
                skipped.push(SkippedSession {
                    session_id: session.session_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }

    let mut cells = Vec::with_capacity(n_grid.len() * w_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        for (wi, &w) in w_grid.iter().enumerate() {
            let k = ni * w_grid.len() + wi;
            let mut sens_sum = 0.0;
            let mut sens_count = 0usize;
            let mut eph_sum = 0.0;
            let mut ff_sum = 0.0;
            for s in &scored {
                let c = s[k];
                if let Some(v) = c.sensitivity {
                    sens_sum += v;
                    sens_count += 1;
                }
                eph_sum += c.events_per_hour;
                ff_sum += c.flagged_fraction;
            }
            let count = scored.len();
            cells.push(SweepCell {
                n,
                w,
                mean_sensitivity: (sens_count > 0).then(|| sens_sum / sens_count as f64),
                mean_events_per_hour: if count > 0 {
                    eph_sum / count as f64
                } else {
                    0.0
                },
                mean_flagged_fraction: if count > 0 {
                    ff_sum / count as f64
                } else {
                    0.0
                },
                sessions: count,
                sessions_with_targets: sens_count,
            });
        }
    }

    Ok(SweepGrid {
        n_values: n_grid,
        w_values: w_grid,
        cells,
        skipped,
    })
}

pub const SWEEP_HEADER: &str = "n,w,sensitivity,events_per_hour,flagged_fraction";

/// Long-form CSV, one row per cell sorted by `(n, w)`. An undefined
/// sensitivity is written as an empty cell.
pub fn write_sweep_csv<W: Write>(grid: &SweepGrid, writer: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "{SWEEP_HEADER}")?;
    let mut cells: Vec<&SweepCell> = grid.cells.iter().collect();
    cells.sort_by(|a, b| a.n.total_cmp(&b.n).then(a.w.cmp(&b.w)));
    for c in cells {
        let sens = c
            .mean_sensitivity
            .map(|s| s.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            c.n, c.w, sens, c.mean_events_per_hour, c.mean_flagged_fraction
        )?;
    }
    w.flush()
}

/// Write `sweep.csv` to `path`.
pub fn export_heatmap_csv(grid: &SweepGrid, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_sweep_csv(grid, file).map_err(|e| Error::io(path, e))
}

/// Read a grid back from its CSV form. Session counts are not stored in the
/// CSV and come back as zero.
pub fn read_sweep_csv<R: Read>(reader: R) -> Result<SweepGrid> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != SWEEP_HEADER {
        return Err(Error::parse(
            Some(1),
            format!("expected header `{SWEEP_HEADER}`"),
        ));
    }
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(line, format!("cannot parse {:?}", &rec[i])))
        };
        cells.push(SweepCell {
            n: num(0)?,
            w: rec[1]
                .parse()
                .map_err(|_| Error::parse(line, format!("cannot parse w {:?}", &rec[1])))?,
            mean_sensitivity: if rec[2].is_empty() {
                None
            } else {
                Some(num(2)?)
            },
            mean_events_per_hour: num(3)?,
            mean_flagged_fraction: num(4)?,
            sessions: 0,
            sessions_with_targets: 0,
        });
    }
    let mut n_values: Vec<f64> = cells.iter().map(|c| c.n).collect();
    n_values.sort_by(f64::total_cmp);
    n_values.dedup();
    let mut w_values: Vec<u32> = cells.iter().map(|c| c.w).collect();
    w_values.sort_unstable();
    w_values.dedup();
    Ok(SweepGrid {
        n_values,
        w_values,
        cells,
        skipped: Vec::new(),
    })
}

/// `sweep_meta.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub tool_version: String,
    pub config: SweepConfig,
    pub sessions: Vec<String>,
    pub skipped: Vec<SkippedSession>,
}

impl SweepMeta {
    pub fn new(config: &SweepConfig, grid: &SweepGrid, sessions: &[SessionBundle]) -> Self {
        SweepMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: SweepConfig {
                n_values: grid.n_values.clone(),
                w_values: grid.w_values.clone(),
                ..config.clone()
            },
            sessions: sessions.iter().map(|s| s.session_id.clone()).collect(),
            skipped: grid.skipped.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::PerAngleStats;
    use crate::session::EventSource;

    fn iv(start: f64, end: f64) -> EventInterval {
        EventInterval::new(start, end, "x", EventSource::Predicted).unwrap()
    }

    fn result(events: Vec<EventInterval>) -> DetectionResult {
        let s = crate::detector::AngleStats {
            mu: 0.0,
            sigma: 1.0,
            valid_count: 2,
        };
        DetectionResult {
            params: DetectorParams::default(),
            effective_window: 5,
            stats: PerAngleStats {
                yaw: s,
                pitch: s,
                roll: s,
            },
            window_count: 0,
            flagged_window_count: 0,
            events,
        }
    }

    #[test]
    fn any_overlap_matches() {
        let r = match_events(
            &[iv(95.0, 110.0)],
            &[iv(100.0, 130.0)],
            &MatchPolicy::default(),
        )
        .unwrap();
        assert!(r.truths[0].matched);
        assert_eq!(r.truths[0].overlap_s, 10.0);
        assert_eq!(r.sensitivity, Some(1.0));
    }

    #[test]
    fn distant_prediction_misses() {
        let r = match_events(
            &[iv(200.0, 210.0)],
            &[iv(100.0, 130.0)],
            &MatchPolicy::default(),
        )
        .unwrap();
        assert!(!r.truths[0].matched);
        assert_eq!((r.true_positive_truths, r.missed_truths), (0, 1));
        assert_eq!(r.sensitivity, Some(0.0));
    }

    #[test]
    fn one_prediction_covers_two_truths() {
        let truths = [iv(10.0, 20.0), iv(30.0, 40.0)];
        let r = match_events(&[iv(5.0, 45.0)], &truths, &MatchPolicy::default()).unwrap();
        assert_eq!(r.true_positive_truths, 2);
        assert_eq!(r.sensitivity, Some(1.0));

        let exclusive = MatchPolicy {
            one_to_many: false,
            ..Default::default()
        };
        let r = match_events(&[iv(5.0, 45.0)], &truths, &exclusive).unwrap();
        assert_eq!(r.true_positive_truths, 1);
        assert_eq!(r.sensitivity, Some(0.5));
    }

    #[test]
    fn min_overlap_threshold() {
        let policy = MatchPolicy {
            min_overlap: 10.0,
            ..Default::default()
        };
        let r = match_events(&[iv(95.0, 110.0)], &[iv(100.0, 130.0)], &policy).unwrap();
        assert!(!r.truths[0].matched);
        let r = match_events(&[iv(95.0, 111.0)], &[iv(100.0, 130.0)], &policy).unwrap();
        assert!(r.truths[0].matched);
    }

    #[test]
    fn overlap_summed_over_predictions() {
        let policy = MatchPolicy {
            min_overlap: 5.0,
            ..Default::default()
        };
        let r = match_events(
            &[iv(100.0, 103.0), iv(110.0, 113.0)],
            &[iv(100.0, 130.0)],
            &policy,
        )
        .unwrap();
        assert!(r.truths[0].matched);
        assert_eq!(r.truths[0].predicted, vec![0, 1]);
    }

    #[test]
    fn no_truths_gives_undefined_sensitivity() {
        let r = match_events(&[iv(1.0, 2.0)], &[], &MatchPolicy::default()).unwrap();
        assert_eq!(r.sensitivity, None);
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(match_events(
            &[iv(10.0, 20.0), iv(0.0, 5.0)],
            &[],
            &MatchPolicy::default()
        )
        .is_err());
        assert!(match_events(
            &[],
            &[iv(10.0, 20.0), iv(15.0, 25.0)],
            &MatchPolicy::default()
        )
        .is_err());
    }

    #[test]
    fn rates() {
        let events: Vec<_> = (0..15)
            .map(|i| iv(i as f64 * 100.0, i as f64 * 100.0 + 16.0))
            .collect();
        let r = result(events);
        assert_eq!(events_per_hour(&r, 1800.0).unwrap(), 30.0);
        assert!((flagged_fraction(&r, 1800.0).unwrap() - 240.0 / 1800.0).abs() < 1e-12);
        assert!((flagged_fraction(&r, 1800.0).unwrap() - 0.1333).abs() < 1e-4);

        let empty = result(Vec::new());
        assert_eq!(events_per_hour(&empty, 1800.0).unwrap(), 0.0);
        assert_eq!(flagged_fraction(&empty, 1800.0).unwrap(), 0.0);

        let whole = result(vec![iv(0.0, 1800.0)]);
        assert_eq!(flagged_fraction(&whole, 1800.0).unwrap(), 1.0);

        assert!(events_per_hour(&empty, 0.0).is_err());
        assert!(flagged_fraction(&empty, -1.0).is_err());
    }

    #[test]
    fn paper_operating_point_arithmetic() {
        // 29 events/hour over a 30-minute session is 14.5 events on average
        let events: Vec<_> = (0..29)
            .map(|i| iv(i as f64 * 100.0, i as f64 * 100.0 + 1.0))
            .collect();
        assert_eq!(events_per_hour(&result(events), 3600.0).unwrap(), 29.0);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let grid = SweepGrid {
            n_values: vec![1.5, 2.0],
            w_values: vec![1, 5],
            cells: vec![
                SweepCell {
                    n: 1.5,
                    w: 1,
                    mean_sensitivity: Some(0.94),
                    mean_events_per_hour: 101.25,
                    mean_flagged_fraction: 0.3333333333333333,
                    sessions: 2,
                    sessions_with_targets: 2,
                },
                SweepCell {
                    n: 1.5,
                    w: 5,
                    mean_sensitivity: None,
                    mean_events_per_hour: 0.0,
                    mean_flagged_fraction: 0.0,
                    sessions: 2,
                    sessions_with_targets: 0,
                },
                SweepCell {
                    n: 2.0,
                    w: 1,
                    mean_sensitivity: Some(0.8),
                    mean_events_per_hour: 29.0,
                    mean_flagged_fraction: 0.1,
                    sessions: 2,
                    sessions_with_targets: 2,
                },
                SweepCell {
                    n: 2.0,
                    w: 5,
                    mean_sensitivity: Some(0.7000000000000001),
                    mean_events_per_hour: 1e-7,
                    mean_flagged_fraction: 0.05,
                    sessions: 2,
                    sessions_with_targets: 2,
                },
            ],
            skipped: Vec::new(),
        };
        let mut first = Vec::new();
        write_sweep_csv(&grid, &mut first).unwrap();
        let back = read_sweep_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_sweep_csv(&back, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(String::from_utf8(first).unwrap().lines().count(), 5);
    }

    #[test]
    fn empty_inputs_rejected() {
        let cfg = SweepConfig {
            n_values: vec![],
            ..Default::default()
        };
        assert!(sweep(&[], &cfg).is_err());
        assert!(sweep(&[], &SweepConfig::default()).is_err());
    }
}
