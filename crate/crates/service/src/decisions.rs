//! Append-only review decision log with last-write-wins resolution.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use poseguard_core::detector::DetectorParams;
use poseguard_core::session::{write_activity_labels, EventInterval};
use serde::{Deserialize, Serialize};
use tracing::warn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        }
    }
}

/// Body of `POST /api/sessions/{id}/decisions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub start_s: f64,
    pub end_s: f64,
    pub verdict: Verdict,
    pub reviewer: String,
    #[serde(default)]
    pub params: Option<DetectorParams>,
    /// Label written for accepted events in the labels export.
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    /// Server receipt order, starting at 1.
    pub seq: u64,
    pub session_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub verdict: Verdict,
    pub reviewer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DetectorParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub decided_at: DateTime<Utc>,
}

impl ReviewDecision {
    fn key(&self) -> (String, u64, u64) {
        (
            self.session_id.clone(),
            self.start_s.to_bits(),
            self.end_s.to_bits(),
        )
    }
}

impl DecisionRequest {
    pub fn check(&self) -> Result<(), String> {
        if !(self.start_s.is_finite()
            && self.end_s.is_finite()
            && self.start_s >= 0.0
            && self.start_s < self.end_s)
        {
            return Err(format!(
                "need 0 <= start_s < end_s, got [{}, {}]",
                self.start_s, self.end_s
            ));
        }
        if self.reviewer.trim().is_empty() {
            return Err("reviewer must not be empty".into());
        }
        if let Some(l) = &self.label {
            if l.is_empty() || l.contains([',', '\n', '\r', '"']) {
                return Err(format!("label {l:?} is not a plain CSV field"));
            }
        }
        Ok(())
    }
}

/// The log file plus an in-memory copy of every entry. Callers serialize
/// writes by holding the surrounding lock.
pub struct DecisionLog {
    path: PathBuf,
    file: File,
    entries: Vec<ReviewDecision>,
}

impl DecisionLog {
    /// Open (creating if needed) and replay an existing log. A torn final
    /// line from an interrupted write is ignored.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ReviewDecision>(&line) {
                    Ok(d) => entries.push(d),
                    Err(e) => {
                        warn!(path = %path.display(), line = i + 1, "skipping unreadable decision: {e}")
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(DecisionLog {
            path,
            file,
            entries,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> &[ReviewDecision] {
        &self.entries
    }

    pub fn append(
        &mut self,
        session_id: &str,
        req: DecisionRequest,
    ) -> std::io::Result<ReviewDecision> {
        let decision = ReviewDecision {
            seq: self.entries.last().map_or(1, |d| d.seq + 1),
            session_id: session_id.to_string(),
            start_s: req.start_s,
            end_s: req.end_s,
            verdict: req.verdict,
            reviewer: req.reviewer,
            params: req.params,
            label: req.label,
            decided_at: Utc::now(),
        };
        let mut line = serde_json::to_vec(&decision).expect("decision serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.entries.push(decision.clone());
        Ok(decision)
    }

    /// Latest decision per `(session, start, end)`, sorted by that key.
    pub fn latest(&self) -> Vec<&ReviewDecision> {
        let mut map = BTreeMap::new();
        for d in &self.entries {
            map.insert(d.key(), d);
        }
        let mut out: Vec<&ReviewDecision> = map.into_values().collect();
        out.sort_by(|a, b| {
            a.session_id
                .cmp(&b.session_id)
                .then(a.start_s.total_cmp(&b.start_s))
                .then(a.end_s.total_cmp(&b.end_s))
        });
        out
    }
}

pub const DECISIONS_HEADER: &str = "session_id,start_s,end_s,verdict,reviewer,decided_at";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn decisions_csv(latest: &[&ReviewDecision]) -> String {
    let mut out = String::from(DECISIONS_HEADER);
    out.push('\n');
    for d in latest {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&d.session_id),
            d.start_s,
            d.end_s,
            d.verdict.name(),
            csv_field(&d.reviewer),
            d.decided_at.to_rfc3339_opts(SecondsFormat::Millis, true)
        ));
    }
    out
}

/// Accepted events of one session as an activity-label file. Overlapping
/// accepted intervals with the same label are merged so the result always
/// parses back.
pub fn accepted_labels_csv(
    latest: &[&ReviewDecision],
    session_id: &str,
    default_label: &str,
) -> String {
    let mut by_label: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for d in latest
        .iter()
        .filter(|d| d.session_id == session_id && d.verdict == Verdict::Accepted)
    {
        let label = d.label.clone().unwrap_or_else(|| default_label.to_string());
        by_label
            .entry(label)
            .or_default()
            .push((d.start_s, d.end_s));
    }
    let mut events = Vec::new();
    for (label, mut spans) in by_label {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (s, e) in spans {
            match merged.last_mut() {
                Some(last) if s < last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        for (s, e) in merged {
            events.push(
                EventInterval::ground_truth(s, e, label.clone()).expect("checked on submission"),
            );
        }
    }
    events.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.label.cmp(&b.label)));
    let mut buf = Vec::new();
    write_activity_labels(&events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("labels are utf-8")
}
