//! Seeded synthetic sessions used as ground truth for detector and harness tests.
//!
//! Angle noise is Gaussian per frame, optionally AR(1)-correlated, around a
//! per-angle baseline. Injected events add an offset (in baseline standard
//! deviations) with a linear ramp in and out. Biometric streams are sampled
//! at a fixed rate with a configurable shift during events.
//!
//! Output is a pure function of the configuration: see [`SynthRng`] for the
//! pinned random stream.

mod reference;
mod rng;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{
    write_session, AngleSample, AngleSeries, BiometricSample, EventInterval, Gender, LearnerMeta,
    SessionBundle, Signal,
};

pub use reference::brute_force_detect;
pub use rng::SynthRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleBaseline {
    pub yaw: Gaussian,
    pub pitch: Gaussian,
    pub roll: Gaussian,
}

impl Default for AngleBaseline {
    fn default() -> Self {
        AngleBaseline {
            yaw: Gaussian { mean: 0.0, sd: 4.0 },
            pitch: Gaussian {
                mean: -10.0,
                sd: 4.0,
            },
            roll: Gaussian { mean: 0.0, sd: 2.0 },
        }
    }
}

/// Offsets in units of the baseline standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleOffsets {
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
}

fn phone() -> String {
    crate::eval::DEFAULT_TARGET_LABEL.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default = "phone")]
    pub label: String,
    #[serde(default)]
    pub offset_sigma: AngleOffsets,
    /// Length of the linear ramp at each end of the event.
    #[serde(default)]
    pub ramp_s: f64,
}

impl EventSpec {
    fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    /// Fraction of the full offset applied at time `t`.
    fn envelope(&self, t: f64) -> f64 {
        if t < self.start_s || t >= self.end_s() {
            return 0.0;
        }
        if self.ramp_s <= 0.0 {
            return 1.0;
        }
        let rise = (t - self.start_s) / self.ramp_s;
        let fall = (self.end_s() - t) / self.ramp_s;
        rise.min(fall).min(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalGen {
    pub mean: f64,
    pub sd: f64,
    /// Added to samples that fall inside an event.
    #[serde(default)]
    pub during_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiometricConfig {
    pub rate_hz: f64,
    pub attention: SignalGen,
    pub meditation: SignalGen,
    pub heart_rate: SignalGen,
}

impl Default for BiometricConfig {
    fn default() -> Self {
        BiometricConfig {
            rate_hz: 1.0,
            attention: SignalGen {
                mean: 50.0,
                sd: 10.0,
                during_offset: 0.0,
            },
            meditation: SignalGen {
                mean: 55.0,
                sd: 9.0,
                during_offset: 0.0,
            },
            heart_rate: SignalGen {
                mean: 83.0,
                sd: 3.0,
                during_offset: 0.0,
            },
        }
    }
}

impl BiometricConfig {
    fn get(&self, s: Signal) -> &SignalGen {
        match s {
            Signal::Attention => &self.attention,
            Signal::Meditation => &self.meditation,
            Signal::HeartRate => &self.heart_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub session_id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub fps: f64,
    pub gender: Gender,
    pub baseline: AngleBaseline,
    pub events: Vec<EventSpec>,
    /// AR(1) coefficient of the angle noise, in `[0, 1)`. The stationary
    /// standard deviation stays equal to the baseline SD.
    pub ar_rho: f64,
    /// Probability that a frame has no face.
    pub dropout_rate: f64,
    pub biometrics: Option<BiometricConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            session_id: "synth".into(),
            seed: 0,
            duration_s: 1800.0,
            fps: 30.0,
            gender: Gender::Unspecified,
            baseline: AngleBaseline::default(),
            events: Vec::new(),
            ar_rho: 0.0,
            dropout_rate: 0.0,
            biometrics: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(0.0..1.0).contains(&self.ar_rho) {
            return bad(format!("ar_rho must lie in [0, 1), got {}", self.ar_rho));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        for g in [self.baseline.yaw, self.baseline.pitch, self.baseline.roll] {
            if !(g.sd >= 0.0 && g.sd.is_finite() && g.mean.is_finite()) {
                return bad("baseline means must be finite and SDs non-negative".into());
            }
        }
        let mut events: Vec<&EventSpec> = self.events.iter().collect();
        events.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for e in &events {
            if !(e.start_s >= 0.0 && e.duration_s > 0.0 && e.end_s() <= self.duration_s) {
                return bad(format!(
                    "event [{}, {}] must lie within [0, {}]",
                    e.start_s,
                    e.end_s(),
                    self.duration_s
                ));
            }
            if e.ramp_s < 0.0 {
                return bad("ramp_s must be non-negative".into());
            }
        }
        if let Some(p) = events.windows(2).find(|p| p[1].start_s < p[0].end_s()) {
            return Err(Error::Invalid(format!(
                "injected events starting at {} s and {} s overlap",
                p[0].start_s, p[1].start_s
            )));
        }
        if let Some(b) = &self.biometrics {
            if !(b.rate_hz.is_finite() && b.rate_hz > 0.0) {
                return bad(format!(
                    "biometric rate must be positive, got {}",
                    b.rate_hz
                ));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).floor() as usize
    }
}

fn clamp_to_range(signal: Signal, v: f64) -> f64 {
    match signal {
        Signal::Attention | Signal::Meditation => v.clamp(0.0, 100.0),
        Signal::HeartRate => v.clamp(1.0, 299.0),
    }
}

/// Generate one session. Draw order per frame: yaw, pitch, roll noise, then
/// the dropout uniform; biometric draws follow all frames, per sample in
/// attention, meditation, heart-rate order.
pub fn gen_session(config: &SynthConfig) -> Result<SessionBundle> {
    config.validate()?;
    let mut rng = SynthRng::new(config.seed);
    let base = [
        config.baseline.yaw,
        config.baseline.pitch,
        config.baseline.roll,
    ];
    let innovation = (1.0 - config.ar_rho * config.ar_rho).sqrt();

    let frames = config.frame_count();
    let mut samples = Vec::with_capacity(frames);
    let mut noise = [0.0f64; 3];
    for k in 0..frames {
        let t = k as f64 / config.fps;
        for (i, g) in base.iter().enumerate() {
            let z = rng.normal();
            noise[i] = if k == 0 {
                g.sd * z
            } else {
                config.ar_rho * noise[i] + innovation * g.sd * z
            };
        }
        let dropped = rng.uniform() < config.dropout_rate;
        let mut value = [0.0; 3];
        for (i, g) in base.iter().enumerate() {
            let offset: f64 = config
                .events
                .iter()
                .map(|e| {
                    let sigma = [
                        e.offset_sigma.yaw,
                        e.offset_sigma.pitch,
                        e.offset_sigma.roll,
                    ][i];
                    sigma * g.sd * e.envelope(t)
                })
                .sum();
            value[i] = g.mean + noise[i] + offset;
        }
        samples.push(if dropped {
            AngleSample::invalid(k as u64, t)
        } else {
            AngleSample::new(k as u64, t, value[0], value[1], value[2])
        });
    }
    let angles = AngleSeries::new(config.session_id.clone(), config.fps, samples)?;

    let mut biometrics = Vec::new();
    if let Some(bio) = &config.biometrics {
        let count = (config.duration_s * bio.rate_hz).floor() as usize;
        for k in 0..count {
            let t = k as f64 / bio.rate_hz;
            let during = config
                .events
                .iter()
                .any(|e| t >= e.start_s && t <= e.end_s());
            for signal in Signal::ALL {
                let g = bio.get(signal);
                let mut v = g.mean + g.sd * rng.normal();
                if during {
                    v += g.during_offset;
                }
                biometrics.push(BiometricSample {
                    timestamp: t,
                    signal,
                    value: clamp_to_range(signal, v),
                });
            }
        }
    }

    let labels = config
        .events
        .iter()
        .map(|e| EventInterval::ground_truth(e.start_s, e.end_s(), e.label.clone()))
        .collect::<Result<Vec<_>>>()?;

    SessionBundle::new(
        config.session_id.clone(),
        LearnerMeta {
            gender: config.gender,
            cohort_tags: vec!["synthetic".into()],
        },
        Some(angles),
        biometrics,
        labels,
        config.duration_s,
    )
}

/// Recipe for a corpus of sessions resembling the phone-usage protocol:
/// each learner gets `events_per_session` injected events with random
/// duration and yaw/pitch offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub sessions: usize,
    pub id_prefix: String,
    pub duration_s: f64,
    pub fps: f64,
    pub ar_rho: f64,
    pub dropout_rate: f64,
    pub baseline: AngleBaseline,
    pub events_per_session: usize,
    /// Event durations drawn uniformly from this range (seconds).
    pub event_duration_s: [f64; 2],
    /// Absolute yaw and pitch offsets drawn uniformly from this range (baseline SDs).
    pub offset_sigma: [f64; 2],
    pub ramp_s: f64,
    pub biometrics: Option<BiometricConfig>,
    /// SD of the per-learner shift applied to each biometric baseline mean.
    pub learner_spread: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 2024,
            sessions: 40,
            id_prefix: "learner".into(),
            duration_s: 1800.0,
            fps: 30.0,
            ar_rho: 0.9,
            dropout_rate: 0.05,
            baseline: AngleBaseline::default(),
            events_per_session: 2,
            event_duration_s: [20.0, 45.0],
            offset_sigma: [3.0, 5.0],
            ramp_s: 1.0,
            biometrics: Some(BiometricConfig::default()),
            learner_spread: 5.0,
        }
    }
}

impl CorpusConfig {
    /// Expand into per-session configurations. Events are placed one per
    /// equal slice of the session so they never overlap.
    pub fn expand(&self) -> Result<Vec<SynthConfig>> {
        let [dmin, dmax] = self.event_duration_s;
        if !(dmin > 0.0 && dmax >= dmin) {
            return Err(Error::InvalidParams(
                "event_duration_s must be a positive [min, max] range".into(),
            ));
        }
        let slice = if self.events_per_session > 0 {
            self.duration_s / self.events_per_session as f64
        } else {
            self.duration_s
        };
        if slice <= dmax + 2.0 * self.ramp_s {
            return Err(Error::InvalidParams(format!(
                "{} events of up to {dmax} s do not fit in {} s",
                self.events_per_session, self.duration_s
            )));
        }
        let mut meta = SynthRng::new(self.seed);
        let mut out = Vec::with_capacity(self.sessions);
        for i in 0..self.sessions {
            let seed = meta.next_u64();
            let events = (0..self.events_per_session)
                .map(|j| {
                    let duration = meta.range(dmin, dmax);
                    let lo = j as f64 * slice;
                    let start = meta.range(lo, lo + slice - duration);
                    let yaw_sign = if meta.uniform() < 0.5 { -1.0 } else { 1.0 };
                    let [omin, omax] = self.offset_sigma;
                    EventSpec {
                        start_s: start,
                        duration_s: duration,
                        label: phone(),
                        offset_sigma: AngleOffsets {
                            yaw: yaw_sign * meta.range(omin, omax),
                            // looking down at a phone
                            pitch: -meta.range(omin, omax),
                            roll: 0.0,
                        },
                        ramp_s: self.ramp_s,
                    }
                })
                .collect();
            let biometrics = self.biometrics.map(|mut b| {
                for g in [&mut b.attention, &mut b.meditation, &mut b.heart_rate] {
                    g.mean += self.learner_spread * meta.normal();
                }
                b
            });
            out.push(SynthConfig {
                session_id: format!("{}-{:03}", self.id_prefix, i),
                seed,
                duration_s: self.duration_s,
                fps: self.fps,
                gender: if i % 2 == 0 {
                    Gender::Female
                } else {
                    Gender::Male
                },
                baseline: self.baseline,
                events,
                ar_rho: self.ar_rho,
                dropout_rate: self.dropout_rate,
                biometrics,
            });
        }
        Ok(out)
    }
}

/// A generator input file: one session or a corpus recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SynthSpec {
    Corpus { corpus: CorpusConfig },
    Session(SynthConfig),
}

impl SynthSpec {
    pub fn sessions(&self) -> Result<Vec<SynthConfig>> {
        match self {
            SynthSpec::Corpus { corpus } => corpus.expand(),
            SynthSpec::Session(c) => Ok(vec![c.clone()]),
        }
    }
}

/// Generate and write one session into `dir/<session_id>/`, including a
/// `synth_config.json` copy of its configuration. Returns the manifest path.
pub fn write_synth_session(config: &SynthConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let bundle = gen_session(config)?;
    let session_dir = dir.as_ref().join(&config.session_id);
    let manifest = write_session(&bundle, &session_dir)?;
    let p = session_dir.join("synth_config.json");
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{detect, DetectorParams};
    use crate::eval::{match_events, MatchPolicy};

    fn one_event(offset: f64) -> SynthConfig {
        SynthConfig {
            duration_s: 120.0,
            fps: 10.0,
            events: vec![EventSpec {
                start_s: 50.0,
                duration_s: 20.0,
                label: "phone".into(),
                offset_sigma: AngleOffsets {
                    yaw: offset,
                    ..Default::default()
                },
                ramp_s: 0.0,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn strong_event_found_once() {
        let mut cfg = one_event(8.0);
        cfg.baseline.yaw.sd = 1.0;
        let bundle = gen_session(&cfg).unwrap();
        let r = detect(
            bundle.angles.as_ref().unwrap(),
            &DetectorParams::new(1.5, 10),
        )
        .unwrap();
        assert_eq!(r.events.len(), 1);
        let m = match_events(&r.events, &bundle.labels, &MatchPolicy::default()).unwrap();
        assert_eq!(m.sensitivity, Some(1.0));
    }

    #[test]
    fn labels_follow_events() {
        let b = gen_session(&one_event(4.0)).unwrap();
        assert_eq!(b.labels.len(), 1);
        assert_eq!((b.labels[0].start, b.labels[0].end), (50.0, 70.0));
        assert_eq!(b.angles.as_ref().unwrap().len(), 1200);
    }

    #[test]
    fn overlapping_events_rejected() {
        let mut cfg = one_event(4.0);
        cfg.events.push(EventSpec {
            start_s: 60.0,
            ..cfg.events[0].clone()
        });
        assert!(gen_session(&cfg).is_err());
    }

    #[test]
    fn offset_applied_with_ramp() {
        let mut cfg = one_event(5.0);
        cfg.events[0].ramp_s = 2.0;
        let e = &cfg.events[0];
        assert_eq!(e.envelope(49.9), 0.0);
        assert_eq!(e.envelope(50.0), 0.0);
        assert!((e.envelope(51.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.envelope(60.0), 1.0);
        assert!((e.envelope(69.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.envelope(70.0), 0.0);
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            biometrics: Some(BiometricConfig::default()),
            ..one_event(4.0)
        };
        assert_eq!(gen_session(&cfg).unwrap(), gen_session(&cfg).unwrap());
        let other = SynthConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(gen_session(&cfg).unwrap(), gen_session(&other).unwrap());
    }

    #[test]
    fn dropout_fraction() {
        let cfg = SynthConfig {
            dropout_rate: 0.1,
            seed: 11,
            ..Default::default()
        };
        let b = gen_session(&cfg).unwrap();
        let a = b.angles.unwrap();
        assert_eq!(a.len(), 54_000);
        // binomial SD is sqrt(0.09 / 54000) ≈ 0.0013, so 0.01 is > 7 SDs
        assert!(
            (a.invalid_fraction() - 0.10).abs() < 0.01,
            "{}",
            a.invalid_fraction()
        );
    }

    #[test]
    fn ar_noise_keeps_stationary_sd() {
        let cfg = SynthConfig {
            ar_rho: 0.9,
            seed: 5,
            ..Default::default()
        };
        let a = gen_session(&cfg).unwrap().angles.unwrap();
        let yaw: Vec<f64> = a.samples().iter().map(|s| s.yaw).collect();
        let m = yaw.iter().sum::<f64>() / yaw.len() as f64;
        let sd = (yaw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (yaw.len() - 1) as f64).sqrt();
        assert!((sd - 4.0).abs() < 0.3, "{sd}");
        let lag1 = yaw.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>()
            / ((yaw.len() - 1) as f64 * sd * sd);
        assert!((lag1 - 0.9).abs() < 0.02, "{lag1}");
    }

    #[test]
    fn biometric_offsets() {
        let mut bio = BiometricConfig::default();
        bio.heart_rate.during_offset = 5.0;
        bio.heart_rate.sd = 0.0;
        let cfg = SynthConfig {
            biometrics: Some(bio),
            ..one_event(4.0)
        };
        let b = gen_session(&cfg).unwrap();
        let hr: Vec<_> = b.signal(Signal::HeartRate).collect();
        assert_eq!(hr.len(), 120);
        assert!(hr.iter().all(|s| s.value
            == if (50.0..=70.0).contains(&s.timestamp) {
                88.0
            } else {
                83.0
            }));
    }

    #[test]
    fn corpus_expansion() {
        let cfg = CorpusConfig {
            sessions: 6,
            ..Default::default()
        };
        let sessions = cfg.expand().unwrap();
        assert_eq!(sessions.len(), 6);
        for s in &sessions {
            s.validate().unwrap();
            assert_eq!(s.events.len(), 2);
            for e in &s.events {
                assert!((20.0..45.0).contains(&e.duration_s));
                assert!(e.offset_sigma.yaw.abs() >= 3.0 && e.offset_sigma.pitch.abs() >= 3.0);
            }
        }
        assert_eq!(cfg.expand().unwrap(), sessions);
    }

    #[test]
    fn spec_file_forms() {
        let single: SynthSpec =
            serde_json::from_str(r#"{"session_id": "a", "seed": 3, "duration_s": 60}"#).unwrap();
        assert!(matches!(single, SynthSpec::Session(ref c) if c.seed == 3 && c.fps == 30.0));
        let corpus: SynthSpec =
            serde_json::from_str(r#"{"corpus": {"sessions": 3, "seed": 9}}"#).unwrap();
        assert_eq!(corpus.sessions().unwrap().len(), 3);
    }
}
