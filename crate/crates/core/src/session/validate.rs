use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SessionBundle, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Expected spacing of biometric samples. Gaps longer than twice this count as loss.
    pub nominal_period_s: f64,
    /// A session is excluded when any signal loses more than this many seconds.
    pub loss_threshold_s: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            nominal_period_s: 1.0,
            loss_threshold_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalLoss {
    pub signal: Signal,
    pub samples: usize,
    /// Sum of gaps exceeding twice the nominal period, counting the session
    /// start and end as boundaries.
    pub gap_loss_s: f64,
    pub longest_gap_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub session_id: String,
    pub duration_s: f64,
    pub config: ValidationConfig,
    pub signals: Vec<SignalLoss>,
    /// Signals with no samples at all. They do not trigger exclusion.
    pub missing_signals: Vec<Signal>,
    /// Fraction of session time covered, per label.
    pub label_coverage: BTreeMap<String, f64>,
    pub angle_frames: Option<usize>,
    pub invalid_fraction: Option<f64>,
    pub excluded: bool,
}

/// Summarize data loss and coverage. Never fails; callers decide what to do
/// with `excluded`.
pub fn validate_session(bundle: &SessionBundle, config: &ValidationConfig) -> ValidationReport {
    let limit = 2.0 * config.nominal_period_s;
    let mut signals = Vec::new();
    let mut missing = Vec::new();
    for signal in Signal::ALL {
        let times: Vec<f64> = bundle.signal(signal).map(|s| s.timestamp).collect();
        if times.is_empty() {
            missing.push(signal);
            continue;
        }
        let mut loss = 0.0;
        let mut longest: f64 = 0.0;
        let boundaries = std::iter::once(0.0)
            .chain(times.iter().copied())
            .chain(std::iter::once(bundle.duration.max(*times.last().unwrap())));
        let mut prev: Option<f64> = None;
        for t in boundaries {
            if let Some(p) = prev {
                let gap = t - p;
                longest = longest.max(gap);
                if gap > limit {
                    loss += gap;
                }
            }
            prev = Some(t);
        }
        signals.push(SignalLoss {
            signal,
            samples: times.len(),
            gap_loss_s: loss,
            longest_gap_s: longest,
        });
    }

    let mut label_coverage = BTreeMap::new();
    for l in &bundle.labels {
        *label_coverage.entry(l.label.clone()).or_insert(0.0) += l.duration() / bundle.duration;
    }

    let excluded = signals
        .iter()
        .any(|s| s.gap_loss_s > config.loss_threshold_s);
    ValidationReport {
        session_id: bundle.session_id.clone(),
        duration_s: bundle.duration,
        config: *config,
        signals,
        missing_signals: missing,
        label_coverage,
        angle_frames: bundle.angles.as_ref().map(|a| a.len()),
        invalid_fraction: bundle.angles.as_ref().map(|a| a.invalid_fraction()),
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{AngleSeries, BiometricSample, EventInterval, LearnerMeta};

    fn bundle(times: &[f64], angles: Option<AngleSeries>) -> SessionBundle {
        let bio = times
            .iter()
            .map(|&t| BiometricSample {
                timestamp: t,
                signal: Signal::Attention,
                value: 50.0,
            })
            .collect();
        let labels = vec![EventInterval::ground_truth(100.0, 130.0, "phone").unwrap()];
        SessionBundle::new("s", LearnerMeta::default(), angles, bio, labels, 1800.0).unwrap()
    }

    #[test]
    fn long_gap_excludes() {
        let times: Vec<f64> = (0..1800)
            .map(f64::from)
            .filter(|t| !(600.0..960.0).contains(t))
            .collect();
        let r = validate_session(&bundle(&times, None), &ValidationConfig::default());
        let att = &r.signals[0];
        assert_eq!(att.signal, Signal::Attention);
        assert!((att.longest_gap_s - 361.0).abs() < 1e-9);
        assert!(r.excluded);
        assert_eq!(
            r.missing_signals,
            vec![Signal::Meditation, Signal::HeartRate]
        );
    }

    #[test]
    fn gap_free_stream() {
        let times: Vec<f64> = (0..1800).map(f64::from).collect();
        let r = validate_session(&bundle(&times, None), &ValidationConfig::default());
        assert_eq!(r.signals[0].gap_loss_s, 0.0);
        assert!(!r.excluded);
        assert!((r.label_coverage["phone"] - 30.0 / 1800.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_configurable() {
        let times: Vec<f64> = (0..1800)
            .map(f64::from)
            .filter(|t| !(600.0..700.0).contains(t))
            .collect();
        let b = bundle(&times, None);
        assert!(!validate_session(&b, &ValidationConfig::default()).excluded);
        let strict = ValidationConfig {
            loss_threshold_s: 60.0,
            ..Default::default()
        };
        assert!(validate_session(&b, &strict).excluded);
    }

    #[test]
    fn invalid_fraction_counts_empty_frames() {
        let rows = (0..100).map(|i| {
            if i % 10 == 3 {
                None
            } else {
                Some([i as f64, 0.0, 0.0])
            }
        });
        let a = AngleSeries::from_angles("s", 30.0, rows).unwrap();
        let r = validate_session(&bundle(&[0.0, 1.0], Some(a)), &ValidationConfig::default());
        assert!((r.invalid_fraction.unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(r.angle_frames, Some(100));
    }

    #[test]
    fn pure() {
        let b = bundle(&[0.0, 5.0, 400.0], None);
        let c = ValidationConfig::default();
        assert_eq!(validate_session(&b, &c), validate_session(&b, &c));
    }
}
