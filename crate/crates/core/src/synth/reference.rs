//! Naive re-implementation of the detector, kept deliberately separate from
//! [`crate::detector`] so the two can be checked against each other.

use std::collections::BTreeSet;

use crate::detector::{
    AngleStats, DetectionResult, DetectorParams, PerAngleStats, PREDICTED_LABEL,
};
use crate::error::{Error, Result};
use crate::session::{Angle, AngleSeries, EventInterval, EventSource};

fn naive_stats(series: &AngleSeries, angle: Angle) -> Option<AngleStats> {
    let mut values = Vec::new();
    for s in series.samples() {
        if s.valid {
            values.push(s.angle(angle));
        }
    }
    if values.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    for v in &values {
        sum += v;
    }
    let mu = sum / values.len() as f64;
    let mut ss = 0.0;
    for v in &values {
        ss += (v - mu) * (v - mu);
    }
    Some(AngleStats {
        mu,
        sigma: (ss / (values.len() - 1) as f64).sqrt(),
        valid_count: values.len(),
    })
}

struct Group {
    first: usize,
    last: usize,
    angles: BTreeSet<Angle>,
}

/// Recompute every window mean from scratch, flag, and merge by repeated
/// pairwise scanning. `O(frames * window)`; for tests only.
pub fn brute_force_detect(
    series: &AngleSeries,
    params: &DetectorParams,
) -> Result<DetectionResult> {
    let window = params.validate(series.fps)?;
    let samples = series.samples();
    if window > samples.len() {
        return Err(Error::InvalidParams("window longer than series".into()));
    }
    let (Some(yaw), Some(pitch), Some(roll)) = (
        naive_stats(series, Angle::Yaw),
        naive_stats(series, Angle::Pitch),
        naive_stats(series, Angle::Roll),
    ) else {
        return Err(Error::InsufficientData("fewer than 2 valid frames".into()));
    };
    let stats = PerAngleStats { yaw, pitch, roll };

    let mut groups: Vec<Group> = Vec::new();
    let mut window_count = 0;
    let mut flagged_count = 0;
    let mut start = 0;
    while start + window <= samples.len() {
        window_count += 1;
        let frames = &samples[start..start + window];
        let valid = frames.iter().filter(|s| s.valid).count();
        if valid > 0 && valid as f64 / window as f64 >= params.min_window_coverage {
            let mut angles = BTreeSet::new();
            for angle in Angle::ALL {
                let mut sum = 0.0;
                for s in frames.iter().filter(|s| s.valid) {
                    sum += s.angle(angle);
                }
                let mean = sum / valid as f64;
                let st = stats.get(angle);
                if (mean - st.mu).abs() > params.n * st.sigma {
                    angles.insert(angle);
                }
            }
            if !angles.is_empty() {
                flagged_count += 1;
                groups.push(Group {
                    first: start,
                    last: start + window - 1,
                    angles,
                });
            }
        }
        start += params.stride as usize;
    }

    // pairwise scan: fold every later group that shares a frame into group i,
    // rescanning after each merge since group i grew
    let mut i = 0;
    while i < groups.len() {
        let mut j = i + 1;
        while j < groups.len() {
            if groups[i].first <= groups[j].last && groups[j].first <= groups[i].last {
                let g = groups.remove(j);
                let keep = &mut groups[i];
                keep.first = keep.first.min(g.first);
                keep.last = keep.last.max(g.last);
                keep.angles.extend(g.angles);
                j = i + 1;
            } else {
                j += 1;
            }
        }
        i += 1;
    }
    groups.sort_by_key(|g| g.first);

    let events = groups
        .into_iter()
        .map(|g| EventInterval {
            start: samples[g.first].frame_index as f64 / series.fps,
            end: (samples[g.last].frame_index + 1) as f64 / series.fps,
            label: PREDICTED_LABEL.into(),
            source: EventSource::Predicted,
            attribution: Some(g.angles),
            review_state: Default::default(),
        })
        .collect();

    Ok(DetectionResult {
        params: *params,
        effective_window: window,
        stats,
        window_count,
        flagged_window_count: flagged_count,
        events,
    })
}
