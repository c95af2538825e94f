//! Session domain types and their on-disk formats.
//!
//! A session is one recorded learner: a per-frame head-pose angle series,
//! optional biometric streams (attention, meditation, heart rate) and
//! labeled activity intervals. Files are UTF-8 CSV with `.` decimals; a
//! `session.json` manifest binds them together.

mod io;
mod manifest;
mod validate;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    parse_activity_labels, parse_angle_series, parse_biometric_series, read_activity_labels,
    read_angle_series, read_biometric_series, write_activity_labels, write_angle_series,
    write_biometric_series, AngleParse, ParseSummary,
};
pub use manifest::{load_session, write_session, SessionManifest};
pub use validate::{validate_session, SignalLoss, ValidationConfig, ValidationReport};

/// Euler angle of the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Angle {
    Yaw,
    Pitch,
    Roll,
}

impl Angle {
    pub const ALL: [Angle; 3] = [Angle::Yaw, Angle::Pitch, Angle::Roll];

    pub fn name(self) -> &'static str {
        match self {
            Angle::Yaw => "yaw",
            Angle::Pitch => "pitch",
            Angle::Roll => "roll",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yaw" => Ok(Angle::Yaw),
            "pitch" => Ok(Angle::Pitch),
            "roll" => Ok(Angle::Roll),
            other => Err(Error::Invalid(format!("unknown angle {other:?}"))),
        }
    }
}

/// One video frame's head pose. Angles are in degrees.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AngleSample {
    pub frame_index: u64,
    pub timestamp: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// False when no face was found in the frame; angle values are then ignored.
    pub valid: bool,
}

/// Invalid samples compare equal regardless of their (ignored) angle values.
impl PartialEq for AngleSample {
    fn eq(&self, other: &Self) -> bool {
        self.frame_index == other.frame_index
            && self.timestamp == other.timestamp
            && self.valid == other.valid
            && (!self.valid || self.angles() == other.angles())
    }
}

impl AngleSample {
    pub fn new(frame_index: u64, timestamp: f64, yaw: f64, pitch: f64, roll: f64) -> Self {
        AngleSample {
            frame_index,
            timestamp,
            yaw,
            pitch,
            roll,
            valid: true,
        }
    }

    pub fn invalid(frame_index: u64, timestamp: f64) -> Self {
        AngleSample {
            frame_index,
            timestamp,
            yaw: f64::NAN,
            pitch: f64::NAN,
            roll: f64::NAN,
            valid: false,
        }
    }

    #[inline]
    pub fn angle(&self, angle: Angle) -> f64 {
        match angle {
            Angle::Yaw => self.yaw,
            Angle::Pitch => self.pitch,
            Angle::Roll => self.roll,
        }
    }

    #[inline]
    pub fn angles(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }
}

/// Per-frame angle series of one session.
///
/// Frames are contiguous: construction fills any skipped frame indices with
/// invalid samples, so a sample's position equals `frame_index - first_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSeries {
    pub session_id: String,
    pub fps: f64,
    samples: Vec<AngleSample>,
}

impl AngleSeries {
    pub fn new(session_id: impl Into<String>, fps: f64, samples: Vec<AngleSample>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidParams(format!(
                "fps must be positive, got {fps}"
            )));
        }
        let mut filled: Vec<AngleSample> = Vec::with_capacity(samples.len());
        for s in samples {
            if !(s.timestamp.is_finite() && s.timestamp >= 0.0) {
                return Err(Error::Invalid(format!(
                    "frame {}: timestamp must be non-negative, got {}",
                    s.frame_index, s.timestamp
                )));
            }
            if let Some(prev) = filled.last().copied() {
                if s.frame_index <= prev.frame_index {
                    return Err(Error::Invalid(format!(
                        "frame index {} follows {}; frames must be strictly increasing",
                        s.frame_index, prev.frame_index
                    )));
                }
                if s.timestamp <= prev.timestamp {
                    return Err(Error::Invalid(format!(
                        "frame {}: timestamp {} does not increase",
                        s.frame_index, s.timestamp
                    )));
                }
                let gap = s.frame_index - prev.frame_index;
                for k in 1..gap {
                    // interpolated so timestamps stay strictly increasing
                    let t = prev.timestamp + (s.timestamp - prev.timestamp) * k as f64 / gap as f64;
                    filled.push(AngleSample::invalid(prev.frame_index + k, t));
                }
            }
            let mut s = s;
            if s.valid && !s.angles().iter().all(|v| v.is_finite()) {
                s.valid = false;
            }
            filled.push(s);
        }
        Ok(AngleSeries {
            session_id: session_id.into(),
            fps,
            samples: filled,
        })
    }

    /// Build a series with timestamps `frame / fps` from `(yaw, pitch, roll)` rows;
    /// `None` marks a frame without a face.
    pub fn from_angles(
        session_id: impl Into<String>,
        fps: f64,
        rows: impl IntoIterator<Item = Option<[f64; 3]>>,
    ) -> Result<Self> {
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let t = i as f64 / fps;
                match row {
                    Some([y, p, r]) => AngleSample::new(i as u64, t, y, p, r),
                    None => AngleSample::invalid(i as u64, t),
                }
            })
            .collect();
        Self::new(session_id, fps, samples)
    }

    /// Convenience constructor for a yaw-only series with zero pitch and roll.
    pub fn from_yaw(session_id: impl Into<String>, fps: f64, yaw: &[f64]) -> Result<Self> {
        Self::from_angles(session_id, fps, yaw.iter().map(|&y| Some([y, 0.0, 0.0])))
    }

    pub fn samples(&self) -> &[AngleSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.len() - self.valid_count()) as f64 / self.len() as f64
    }

    /// Start time of a frame, `frame_index / fps`.
    pub fn frame_time(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.samples.last().map(|s| s.timestamp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    GroundTruth,
    Predicted,
    Reviewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    #[default]
    Unreviewed,
    Accepted,
    Rejected,
}

/// A time span in seconds, `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInterval {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub source: EventSource,
    /// Angles whose deviation triggered a predicted event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<BTreeSet<Angle>>,
    #[serde(default)]
    pub review_state: ReviewState,
}

impl EventInterval {
    pub fn new(
        start: f64,
        end: f64,
        label: impl Into<String>,
        source: EventSource,
    ) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start >= 0.0 && start < end) {
            return Err(Error::Invalid(format!(
                "interval must satisfy 0 <= start < end, got [{start}, {end}]"
            )));
        }
        Ok(EventInterval {
            start,
            end,
            label: label.into(),
            source,
            attribution: None,
            review_state: ReviewState::Unreviewed,
        })
    }

    pub fn ground_truth(start: f64, end: f64, label: impl Into<String>) -> Result<Self> {
        Self::new(start, end, label, EventSource::GroundTruth)
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &EventInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Length of the intersection with `[start, end)`.
    pub fn overlap_with(&self, start: f64, end: f64) -> f64 {
        (self.end.min(end) - self.start.max(start)).max(0.0)
    }
}

/// Biometric channel recorded alongside the video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Attention,
    Meditation,
    HeartRate,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Attention, Signal::Meditation, Signal::HeartRate];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Attention => "attention",
            Signal::Meditation => "meditation",
            Signal::HeartRate => "heart_rate",
        }
    }

    /// Accepts the value when it lies in the channel's physical range:
    /// `[0, 100]` for the EEG meters, `(0, 300)` bpm for heart rate.
    pub fn in_range(self, value: f64) -> bool {
        match self {
            Signal::Attention | Signal::Meditation => (0.0..=100.0).contains(&value),
            Signal::HeartRate => value > 0.0 && value < 300.0,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Signal::Attention),
            "meditation" => Ok(Signal::Meditation),
            "heart_rate" => Ok(Signal::HeartRate),
            other => Err(Error::Invalid(format!("unknown signal {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiometricSample {
    pub timestamp: f64,
    pub signal: Signal,
    pub value: f64,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    #[default]
    Unspecified,
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            "unspecified" => Ok(Gender::Unspecified),
            other => Err(Error::Invalid(format!("unknown gender {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearnerMeta {
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub cohort_tags: Vec<String>,
}

/// Everything recorded for one learner session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBundle {
    pub session_id: String,
    pub learner_meta: LearnerMeta,
    pub angles: Option<AngleSeries>,
    /// Sorted by `(signal, timestamp)`.
    pub biometrics: Vec<BiometricSample>,
    /// Ground-truth activity intervals, sorted by start.
    pub labels: Vec<EventInterval>,
    pub duration: f64,
}

impl SessionBundle {
    pub fn new(
        session_id: impl Into<String>,
        learner_meta: LearnerMeta,
        angles: Option<AngleSeries>,
        mut biometrics: Vec<BiometricSample>,
        mut labels: Vec<EventInterval>,
        duration: f64,
    ) -> Result<Self> {
        let session_id = session_id.into();
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Invalid(format!(
                "session {session_id}: duration must be positive, got {duration}"
            )));
        }
        if let Some(l) = labels.iter().find(|l| l.start < 0.0 || l.end > duration) {
            return Err(Error::Invalid(format!(
                "session {session_id}: label {} [{}, {}] lies outside [0, {duration}]",
                l.label, l.start, l.end
            )));
        }
        let last_angle = angles
            .as_ref()
            .and_then(|a| a.last_timestamp())
            .unwrap_or(0.0);
        let last_bio = biometrics.iter().map(|b| b.timestamp).fold(0.0, f64::max);
        if last_angle.max(last_bio) > duration {
            return Err(Error::Invalid(format!(
                "session {session_id}: duration {duration} s is shorter than the last sample at {} s",
                last_angle.max(last_bio)
            )));
        }
        biometrics.sort_by(|a, b| {
            a.signal
                .cmp(&b.signal)
                .then(a.timestamp.total_cmp(&b.timestamp))
        });
        labels.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(SessionBundle {
            session_id,
            learner_meta,
            angles,
            biometrics,
            labels,
            duration,
        })
    }

    /// Ground-truth intervals carrying `label`.
    pub fn labels_for<'a>(
        &'a self,
        label: &'a str,
    ) -> impl Iterator<Item = &'a EventInterval> + 'a {
        self.labels.iter().filter(move |l| l.label == label)
    }

    /// Samples of one biometric channel, in time order.
    pub fn signal(&self, signal: Signal) -> impl Iterator<Item = &BiometricSample> + '_ {
        self.biometrics.iter().filter(move |b| b.signal == signal)
    }
}
