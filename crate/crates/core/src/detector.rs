//! Sliding-window head-pose deviation detector.
//!
//! The pipeline runs offline over a whole session:
//!
//! 1. [`global_stats`]: per-angle mean `mu` and sample standard deviation
//!    `sigma` over every valid frame of the session.
//! 2. [`window_means`]: mean of each angle inside every window of `w` frames,
//!    advancing by `stride`.
//! 3. [`flag_windows`]: a window is flagged when, for any angle,
//!    `|window_mean - mu| > n * sigma`.
//! 4. [`merge_events`]: flagged windows that share a frame are coalesced
//!    into disjoint events.
//!
//! `sigma == 0` is applied literally: the threshold is zero, so any nonzero
//! deviation flags while a constant angle never does.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Angle, AngleSeries, EventInterval, EventSource};

/// Label given to detector output.
pub const PREDICTED_LABEL: &str = "predicted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowUnit {
    #[default]
    Frames,
    Seconds,
}

impl fmt::Display for WindowUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowUnit::Frames => "frames",
            WindowUnit::Seconds => "seconds",
        })
    }
}

impl FromStr for WindowUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frames" => Ok(WindowUnit::Frames),
            "seconds" => Ok(WindowUnit::Seconds),
            other => Err(Error::InvalidParams(format!(
                "window unit must be `frames` or `seconds`, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Threshold multiplier on the session standard deviation.
    pub n: f64,
    /// Window length in `window_unit`.
    pub w: u32,
    pub window_unit: WindowUnit,
    /// Frames between consecutive window starts.
    pub stride: u32,
    /// Windows with a smaller fraction of valid frames are never flagged.
    pub min_window_coverage: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            n: 2.0,
            w: 5,
            window_unit: WindowUnit::Frames,
            stride: 1,
            min_window_coverage: 0.5,
        }
    }
}

impl DetectorParams {
    pub fn new(n: f64, w: u32) -> Self {
        DetectorParams {
            n,
            w,
            ..Default::default()
        }
    }

    pub fn with_stride(mut self, stride: u32) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_unit(mut self, unit: WindowUnit) -> Self {
        self.window_unit = unit;
        self
    }

    /// Window length in frames: `w` itself, or `round(w * fps)` (at least 1)
    /// when `w` is given in seconds.
    pub fn effective_window(&self, fps: f64) -> usize {
        match self.window_unit {
            WindowUnit::Frames => self.w as usize,
            WindowUnit::Seconds => ((self.w as f64 * fps).round() as usize).max(1),
        }
    }

    /// Check everything that does not depend on the series.
    pub fn check(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::InvalidParams(format!(
                "n must be a positive number, got {}",
                self.n
            )));
        }
        if self.w == 0 {
            return Err(Error::InvalidParams("w must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParams("stride must be at least 1".into()));
        }
        if !(self.min_window_coverage > 0.0 && self.min_window_coverage <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "min_window_coverage must lie in (0, 1], got {}",
                self.min_window_coverage
            )));
        }
        Ok(())
    }

    /// Validate against a frame rate and return the effective window.
    pub fn validate(&self, fps: f64) -> Result<usize> {
        self.check()?;
        let window = self.effective_window(fps);
        if self.stride as usize > window {
            return Err(Error::InvalidParams(format!(
                "stride {} exceeds the window of {window} frames; windows would leave gaps",
                self.stride
            )));
        }
        Ok(window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleStats {
    pub mu: f64,
    pub sigma: f64,
    pub valid_count: usize,
}

/// Session-wide statistics per angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerAngleStats {
    pub yaw: AngleStats,
    pub pitch: AngleStats,
    pub roll: AngleStats,
}

impl PerAngleStats {
    pub fn get(&self, angle: Angle) -> &AngleStats {
        match angle {
            Angle::Yaw => &self.yaw,
            Angle::Pitch => &self.pitch,
            Angle::Roll => &self.roll,
        }
    }
}

/// Mean and sample standard deviation (divisor `N - 1`) of each angle over
/// the valid frames.
pub fn global_stats(series: &AngleSeries) -> Result<PerAngleStats> {
    let valid: Vec<[f64; 3]> = series
        .samples()
        .iter()
        .filter(|s| s.valid)
        .map(|s| s.angles())
        .collect();
    let count = valid.len();
    if count < 2 {
        return Err(Error::InsufficientData(format!(
            "session {} has {count} valid frames; at least 2 are required",
            series.session_id
        )));
    }
    let stat = |i: usize| {
        let mu = valid.iter().map(|a| a[i]).sum::<f64>() / count as f64;
        let ss: f64 = valid.iter().map(|a| (a[i] - mu).powi(2)).sum();
        AngleStats {
            mu,
            sigma: (ss / (count - 1) as f64).sqrt(),
            valid_count: count,
        }
    };
    Ok(PerAngleStats {
        yaw: stat(0),
        pitch: stat(1),
        roll: stat(2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_frame: u64,
    /// Inclusive.
    pub end_frame: u64,
    /// Mean of the valid frames per angle (yaw, pitch, roll); NaN when none are valid.
    pub means: [f64; 3],
    /// Valid frames divided by the window length.
    pub coverage: f64,
    pub eligible: bool,
}

impl Window {
    pub fn mean(&self, angle: Angle) -> f64 {
        self.means[angle.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSeries {
    pub effective_window: usize,
    pub stride: usize,
    pub windows: Vec<Window>,
}

/// Double-double running sum; keeps window sums from prefix differences
/// accurate to a few ulps regardless of session length.
#[derive(Clone, Copy, Default)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        self.lo += (self.hi - (s - bp)) + (x - bp);
        self.hi = s;
    }

    fn minus(self, other: Compensated) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }
}

/// Per-window angle means for every window start `0, stride, 2*stride, ...`
/// that fits entirely inside the series. A trailing partial window is dropped.
pub fn window_means(series: &AngleSeries, params: &DetectorParams) -> Result<WindowedSeries> {
    let window = params.validate(series.fps)?;
    let samples = series.samples();
    if window > samples.len() {
        return Err(Error::InvalidParams(format!(
            "window of {window} frames is longer than the series ({} frames)",
            samples.len()
        )));
    }

    let mut prefix = Vec::with_capacity(samples.len() + 1);
    let mut valid_prefix = Vec::with_capacity(samples.len() + 1);
    let mut acc = [Compensated::default(); 3];
    let mut valid = 0usize;
    prefix.push(acc);
    valid_prefix.push(0);
    for s in samples {
        if s.valid {
            for (a, v) in acc.iter_mut().zip(s.angles()) {
                a.add(v);
            }
            valid += 1;
        }
        prefix.push(acc);
        valid_prefix.push(valid);
    }

    let stride = params.stride as usize;
    let windows = (0..=samples.len() - window)
        .step_by(stride)
        .map(|start| {
            let end = start + window;
            let count = valid_prefix[end] - valid_prefix[start];
            let means = std::array::from_fn(|i| {
                if count == 0 {
                    f64::NAN
                } else {
                    prefix[end][i].minus(prefix[start][i]) / count as f64
                }
            });
            let coverage = count as f64 / window as f64;
            Window {
                start_frame: samples[start].frame_index,
                end_frame: samples[end - 1].frame_index,
                means,
                coverage,
                eligible: count > 0 && coverage >= params.min_window_coverage,
            }
        })
        .collect();

    Ok(WindowedSeries {
        effective_window: window,
        stride,
        windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedWindow {
    pub start_frame: u64,
    pub end_frame: u64,
    pub attribution: BTreeSet<Angle>,
}

/// Angles of `window` whose mean deviates from the session mean by more than `n * sigma`.
pub fn deviating_angles(window: &Window, stats: &PerAngleStats, n: f64) -> BTreeSet<Angle> {
    Angle::ALL
        .into_iter()
        .filter(|&a| {
            let s = stats.get(a);
            (window.mean(a) - s.mu).abs() > n * s.sigma
        })
        .collect()
}

/// Keep eligible windows in which any angle deviates beyond `n * sigma`.
pub fn flag_windows(
    windowed: &WindowedSeries,
    stats: &PerAngleStats,
    n: f64,
) -> Vec<FlaggedWindow> {
    windowed
        .windows
        .iter()
        .filter(|w| w.eligible)
        .filter_map(|w| {
            let attribution = deviating_angles(w, stats, n);
            (!attribution.is_empty()).then_some(FlaggedWindow {
                start_frame: w.start_frame,
                end_frame: w.end_frame,
                attribution,
            })
        })
        .collect()
}

/// Coalesce flagged windows (sorted by start) that share at least one frame.
/// Events span `[first_frame / fps, (last_frame + 1) / fps)`.
pub fn merge_events(flagged: &[FlaggedWindow], fps: f64) -> Vec<EventInterval> {
    debug_assert!(flagged
        .windows(2)
        .all(|p| p[0].start_frame <= p[1].start_frame));
    let mut merged: Vec<FlaggedWindow> = Vec::new();
    for w in flagged {
        match merged.last_mut() {
            Some(cur) if w.start_frame <= cur.end_frame => {
                cur.end_frame = cur.end_frame.max(w.end_frame);
                cur.attribution.extend(w.attribution.iter().copied());
            }
            _ => merged.push(w.clone()),
        }
    }
    merged
        .into_iter()
        .map(|m| EventInterval {
            start: m.start_frame as f64 / fps,
            end: (m.end_frame + 1) as f64 / fps,
            label: PREDICTED_LABEL.to_string(),
            source: EventSource::Predicted,
            attribution: Some(m.attribution),
            review_state: Default::default(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub params: DetectorParams,
    pub effective_window: usize,
    pub stats: PerAngleStats,
    pub window_count: usize,
    pub flagged_window_count: usize,
    /// Sorted, pairwise disjoint.
    pub events: Vec<EventInterval>,
}

impl DetectionResult {
    /// Flag and merge precomputed windows. `windowed` and `stats` must come
    /// from the same series; `params.n` is the only parameter read here.
    pub fn from_windows(
        windowed: &WindowedSeries,
        stats: &PerAngleStats,
        fps: f64,
        params: DetectorParams,
    ) -> Self {
        let flagged = flag_windows(windowed, stats, params.n);
        DetectionResult {
            params,
            effective_window: windowed.effective_window,
            stats: *stats,
            window_count: windowed.windows.len(),
            flagged_window_count: flagged.len(),
            events: merge_events(&flagged, fps),
        }
    }

    pub fn flagged_duration(&self) -> f64 {
        self.events.iter().map(EventInterval::duration).sum()
    }
}

/// Run the full pipeline on one series. Deterministic.
pub fn detect(series: &AngleSeries, params: &DetectorParams) -> Result<DetectionResult> {
    let stats = global_stats(series)?;
    let windowed = window_means(series, params)?;
    Ok(DetectionResult::from_windows(
        &windowed, &stats, series.fps, *params,
    ))
}

/// JSON sidecar written next to `events.csv` and returned by the review API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub session_id: String,
    pub fps: f64,
    #[serde(flatten)]
    pub result: DetectionResult,
}

impl DetectionReport {
    pub fn new(series: &AngleSeries, result: DetectionResult) -> Self {
        DetectionReport {
            session_id: series.session_id.clone(),
            fps: series.fps,
            result,
        }
    }

    /// Canonical serialized form; identical results give identical bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("detection report serializes");
        out.push(b'\n');
        out
    }
}

fn attribution_string(attribution: &Option<BTreeSet<Angle>>) -> String {
    attribution
        .iter()
        .flatten()
        .map(|a| a.name())
        .collect::<Vec<_>>()
        .join("|")
}

/// Write `events.csv`: `start_s,end_s,attribution` with pipe-joined angle names.
pub fn write_events_csv<W: Write>(events: &[EventInterval], writer: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "start_s,end_s,attribution")?;
    for e in events {
        writeln!(
            w,
            "{},{},{}",
            e.start,
            e.end,
            attribution_string(&e.attribution)
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn yaw_series(yaw: &[f64]) -> AngleSeries {
        AngleSeries::from_yaw("t", 1.0, yaw).unwrap()
    }

    #[test]
    fn constant_series_stats() {
        let s = global_stats(&yaw_series(&[10.0, 10.0, 10.0])).unwrap();
        assert_eq!(s.yaw.mu, 10.0);
        assert_eq!(s.yaw.sigma, 0.0);
        assert_eq!(s.yaw.valid_count, 3);
    }

    #[test]
    fn sample_sd_of_two_points() {
        let s = global_stats(&yaw_series(&[0.0, 10.0])).unwrap();
        assert_eq!(s.yaw.mu, 5.0);
        assert_relative_eq!(s.yaw.sigma, 50f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s.yaw.sigma, 7.0711, epsilon = 1e-4);
    }

    #[test]
    fn invalid_frames_skipped_in_stats() {
        let with_gap = AngleSeries::from_angles(
            "t",
            1.0,
            [Some([0.0, 0.0, 0.0]), None, Some([10.0, 0.0, 0.0])],
        )
        .unwrap();
        assert_eq!(
            global_stats(&with_gap).unwrap(),
            global_stats(&yaw_series(&[0.0, 10.0])).unwrap()
        );
    }

    #[test]
    fn stats_need_two_valid_frames() {
        let one = AngleSeries::from_angles("t", 1.0, [Some([1.0, 1.0, 1.0]), None]).unwrap();
        assert!(matches!(
            global_stats(&one),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn two_frame_windows() {
        let w = window_means(
            &yaw_series(&[0.0, 3.0, 6.0, 9.0]),
            &DetectorParams::new(1.0, 2),
        )
        .unwrap();
        let means: Vec<f64> = w.windows.iter().map(|w| w.mean(Angle::Yaw)).collect();
        assert_eq!(means, vec![1.5, 4.5, 7.5]);
        assert!(w
            .windows
            .iter()
            .all(|w| w.end_frame - w.start_frame + 1 == 2));
    }

    #[test]
    fn identity_window() {
        let yaw = [0.3, -1.7, 2.9, 4.25, -0.5];
        let w = window_means(&yaw_series(&yaw), &DetectorParams::new(1.0, 1)).unwrap();
        let means: Vec<f64> = w.windows.iter().map(|w| w.mean(Angle::Yaw)).collect();
        assert_eq!(means, yaw);
    }

    #[test]
    fn empty_window_is_ineligible() {
        let rows = [
            Some([0.0; 3]),
            Some([1.0; 3]),
            None,
            None,
            None,
            None,
            Some([2.0; 3]),
            Some([3.0; 3]),
        ];
        let s = AngleSeries::from_angles("t", 1.0, rows).unwrap();
        let w = window_means(&s, &DetectorParams::new(1.0, 4)).unwrap();
        let gap = w.windows.iter().find(|w| w.start_frame == 2).unwrap();
        assert_eq!(gap.coverage, 0.0);
        assert!(!gap.eligible);
        assert!(gap.mean(Angle::Yaw).is_nan());
        // two of four valid meets the default 0.5 coverage
        assert!(w.windows[0].eligible);
        assert!(!w.windows[1].eligible);
    }

    #[test]
    fn stride_and_trailing_partial_window() {
        let s = yaw_series(&[0.0; 10]);
        let w = window_means(&s, &DetectorParams::new(1.0, 4).with_stride(3)).unwrap();
        let starts: Vec<u64> = w.windows.iter().map(|w| w.start_frame).collect();
        assert_eq!(starts, vec![0, 3, 6]);
    }

    #[test]
    fn param_errors() {
        let s = yaw_series(&[0.0, 1.0, 2.0]);
        assert!(window_means(&s, &DetectorParams::new(1.0, 4)).is_err());
        assert!(window_means(&s, &DetectorParams::new(1.0, 2).with_stride(3)).is_err());
        assert!(DetectorParams::new(-1.0, 2).check().is_err());
        assert!(DetectorParams::new(f64::NAN, 2).check().is_err());
        assert!(DetectorParams::new(1.0, 0).check().is_err());
    }

    #[test]
    fn seconds_unit() {
        let p = DetectorParams::new(2.0, 5).with_unit(WindowUnit::Seconds);
        assert_eq!(p.effective_window(30.0), 150);
        assert_eq!(p.effective_window(0.01), 1);
    }

    fn window(mean_yaw: f64, mean_pitch: f64) -> Window {
        Window {
            start_frame: 0,
            end_frame: 0,
            means: [mean_yaw, mean_pitch, 0.0],
            coverage: 1.0,
            eligible: true,
        }
    }

    fn stats(sigma_yaw: f64) -> PerAngleStats {
        let s = |sigma| AngleStats {
            mu: 0.0,
            sigma,
            valid_count: 10,
        };
        PerAngleStats {
            yaw: s(sigma_yaw),
            pitch: s(1.0),
            roll: s(1.0),
        }
    }

    #[test]
    fn threshold_rule() {
        let ws = WindowedSeries {
            effective_window: 1,
            stride: 1,
            windows: vec![window(2.0, 0.0)],
        };
        let f = flag_windows(&ws, &stats(1.0), 1.5);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].attribution, BTreeSet::from([Angle::Yaw]));

        let at_mean = WindowedSeries {
            effective_window: 1,
            stride: 1,
            windows: vec![window(0.0, 0.0)],
        };
        for n in [1e-9, 0.5, 3.0] {
            assert!(flag_windows(&at_mean, &stats(1.0), n).is_empty());
        }
        // exactly on the threshold does not flag
        let edge = WindowedSeries {
            effective_window: 1,
            stride: 1,
            windows: vec![window(2.0, 0.0)],
        };
        assert!(flag_windows(&edge, &stats(1.0), 2.0).is_empty());
    }

    #[test]
    fn zero_sigma_flags_any_deviation() {
        let ws = WindowedSeries {
            effective_window: 1,
            stride: 1,
            windows: vec![window(0.1, 0.0)],
        };
        for n in [0.1, 1.0, 1e6] {
            assert_eq!(flag_windows(&ws, &stats(0.0), n).len(), 1);
        }
    }

    fn fw(start: u64, end: u64, a: &[Angle]) -> FlaggedWindow {
        FlaggedWindow {
            start_frame: start,
            end_frame: end,
            attribution: a.iter().copied().collect(),
        }
    }

    #[test]
    fn merge_overlap_and_disjoint() {
        let e = merge_events(&[fw(0, 4, &[Angle::Yaw]), fw(3, 7, &[Angle::Yaw])], 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].start, e[0].end), (0.0, 8.0));

        let e = merge_events(&[fw(0, 4, &[Angle::Yaw]), fw(10, 14, &[Angle::Yaw])], 1.0);
        assert_eq!(e.len(), 2);

        let e = merge_events(&[fw(0, 4, &[Angle::Yaw]), fw(2, 6, &[Angle::Pitch])], 1.0);
        assert_eq!(e.len(), 1);
        assert_eq!(
            e[0].attribution,
            Some(BTreeSet::from([Angle::Yaw, Angle::Pitch]))
        );
        assert_eq!((e[0].start, e[0].end), (0.0, 7.0));
    }

    #[test]
    fn adjacent_windows_without_shared_frame_stay_separate() {
        let e = merge_events(&[fw(0, 4, &[Angle::Yaw]), fw(5, 9, &[Angle::Yaw])], 1.0);
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].end, e[1].start);
    }

    #[test]
    fn constant_series_never_flags() {
        let s = yaw_series(&[3.0; 50]);
        for (n, w) in [(0.1, 1), (1.5, 5), (3.0, 50)] {
            assert!(detect(&s, &DetectorParams::new(n, w))
                .unwrap()
                .events
                .is_empty());
        }
    }

    #[test]
    fn events_csv_format() {
        let e = merge_events(&[fw(0, 4, &[Angle::Pitch, Angle::Yaw])], 2.0);
        let mut out = Vec::new();
        write_events_csv(&e, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "start_s,end_s,attribution\n0,2.5,yaw|pitch\n"
        );
    }
}
