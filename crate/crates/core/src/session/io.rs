use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::{AngleSample, AngleSeries, BiometricSample, EventInterval, Signal};
use crate::error::{Error, Result};

pub const ANGLES_HEADER: [&str; 5] = ["frame", "timestamp_s", "yaw_deg", "pitch_deg", "roll_deg"];
pub const LABELS_HEADER: [&str; 3] = ["label", "start_s", "end_s"];
pub const BIOMETRICS_HEADER: [&str; 3] = ["timestamp_s", "signal", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct ParseSummary {
    pub rows: usize,
    /// Frames with at least one empty angle cell.
    pub invalid_frames: usize,
    /// Frames absent from the file and inserted as invalid.
    pub filled_frames: usize,
}

#[derive(Debug, Clone)]
pub struct AngleParse {
    pub series: AngleSeries,
    pub summary: ParseSummary,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    ReaderBuilder::new().has_headers(true).from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(Some(1), e.to_string()))?
        .clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            Some(1),
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
) -> impl Iterator<Item = Result<(u64, StringRecord)>> + '_ {
    rdr.records().map(|r| {
        r.map(|rec| (rec.position().map_or(0, |p| p.line()), rec))
            .map_err(|e| {
                let line = e.position().map(|p| p.line());
                Error::parse(line, e.to_string())
            })
    })
}

fn number(field: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        Error::parse(
            Some(line),
            format!("{name}: cannot parse {field:?} as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::parse(
            Some(line),
            format!("{name}: {field:?} is not finite"),
        ));
    }
    Ok(v)
}

fn optional_number(field: &str, name: &str, line: u64) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        number(field, name, line).map(Some)
    }
}

/// Read an `angles.csv` stream. Empty angle cells mark a frame without a face.
pub fn read_angle_series<R: Read>(reader: R, session_id: &str, fps: f64) -> Result<AngleParse> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidParams(format!(
            "fps must be positive, got {fps}"
        )));
    }
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &ANGLES_HEADER)?;
    let mut samples: Vec<AngleSample> = Vec::new();
    let mut summary = ParseSummary::default();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let frame: u64 = rec[0].trim().parse().map_err(|_| {
            Error::parse(
                Some(line),
                format!("frame: cannot parse {:?} as a frame index", &rec[0]),
            )
        })?;
        let timestamp = number(&rec[1], "timestamp_s", line)?;
        if timestamp < 0.0 {
            return Err(Error::parse(Some(line), "timestamp_s must be non-negative"));
        }
        if let Some(prev) = samples.last() {
            if frame <= prev.frame_index {
                return Err(Error::parse(
                    Some(line),
                    format!(
                        "frame index {frame} is not greater than previous frame {}",
                        prev.frame_index
                    ),
                ));
            }
            if timestamp <= prev.timestamp {
                return Err(Error::parse(
                    Some(line),
                    format!(
                        "timestamp {timestamp} is not greater than previous {}",
                        prev.timestamp
                    ),
                ));
            }
        }
        let yaw = optional_number(&rec[2], "yaw_deg", line)?;
        let pitch = optional_number(&rec[3], "pitch_deg", line)?;
        let roll = optional_number(&rec[4], "roll_deg", line)?;
        let valid = yaw.is_some() && pitch.is_some() && roll.is_some();
        if !valid {
            summary.invalid_frames += 1;
        }
        samples.push(AngleSample {
            frame_index: frame,
            timestamp,
            yaw: yaw.unwrap_or(f64::NAN),
            pitch: pitch.unwrap_or(f64::NAN),
            roll: roll.unwrap_or(f64::NAN),
            valid,
        });
        summary.rows += 1;
    }
    let series = AngleSeries::new(session_id, fps, samples)?;
    summary.filled_frames = series.len() - summary.rows;
    summary.invalid_frames += summary.filled_frames;
    if series.valid_count() < 2 {
        return Err(Error::InsufficientData(format!(
            "angle series has {} valid frames; at least 2 are required",
            series.valid_count()
        )));
    }
    Ok(AngleParse { series, summary })
}

/// Parse `angles.csv` (`frame,timestamp_s,yaw_deg,pitch_deg,roll_deg`).
pub fn parse_angle_series(path: impl AsRef<Path>, fps: f64) -> Result<AngleParse> {
    let path = path.as_ref();
    let session_id = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_angle_series(open(path)?, &session_id, fps).map_err(|e| e.with_path(path))
}

pub fn read_activity_labels<R: Read>(reader: R) -> Result<Vec<EventInterval>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &LABELS_HEADER)?;
    let mut out: Vec<(u64, EventInterval)> = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let label = rec[0].trim();
        if label.is_empty() {
            return Err(Error::parse(Some(line), "label is empty"));
        }
        let start = number(&rec[1], "start_s", line)?;
        let end = number(&rec[2], "end_s", line)?;
        if start < 0.0 || start >= end {
            return Err(Error::parse(
                Some(line),
                format!("interval must satisfy 0 <= start < end, got [{start}, {end}]"),
            ));
        }
        out.push((line, EventInterval::ground_truth(start, end, label)?));
    }
    out.sort_by(|a, b| a.1.start.total_cmp(&b.1.start));
    for (i, (line, a)) in out.iter().enumerate() {
        if let Some((other_line, b)) = out[i + 1..]
            .iter()
            .find(|(_, b)| b.label == a.label && b.start < a.end)
        {
            return Err(Error::parse(
                Some(*line.max(other_line)),
                format!(
                    "{} intervals [{}, {}] and [{}, {}] overlap",
                    a.label, a.start, a.end, b.start, b.end
                ),
            ));
        }
    }
    Ok(out.into_iter().map(|(_, e)| e).collect())
}

/// Parse `labels.csv` (`label,start_s,end_s`). Output is sorted by start.
pub fn parse_activity_labels(path: impl AsRef<Path>) -> Result<Vec<EventInterval>> {
    let path = path.as_ref();
    read_activity_labels(open(path)?).map_err(|e| e.with_path(path))
}

pub fn read_biometric_series<R: Read>(reader: R) -> Result<Vec<BiometricSample>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &BIOMETRICS_HEADER)?;
    let mut out = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let timestamp = number(&rec[0], "timestamp_s", line)?;
        if timestamp < 0.0 {
            return Err(Error::parse(Some(line), "timestamp_s must be non-negative"));
        }
        let signal: Signal = rec[1]
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(Some(line), e.to_string()))?;
        let value = number(&rec[2], "value", line)?;
        if !signal.in_range(value) {
            return Err(Error::parse(
                Some(line),
                format!("{signal} value {value} is out of range"),
            ));
        }
        out.push(BiometricSample {
            timestamp,
            signal,
            value,
        });
    }
    out.sort_by(|a, b| {
        a.signal
            .cmp(&b.signal)
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
    Ok(out)
}

/// Parse `biometrics.csv` (`timestamp_s,signal,value`). Output is grouped by
/// signal (attention, meditation, heart rate) and time-ordered within each group.
pub fn parse_biometric_series(path: impl AsRef<Path>) -> Result<Vec<BiometricSample>> {
    let path = path.as_ref();
    read_biometric_series(open(path)?).map_err(|e| e.with_path(path))
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn write_angle_series<W: Write>(series: &AngleSeries, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", ANGLES_HEADER.join(","))?;
    for s in series.samples() {
        let [y, p, r] = s.angles();
        if !s.valid && [y, p, r].iter().all(|v| v.is_finite()) {
            writeln!(w, "{},{},,,", s.frame_index, s.timestamp)?;
        } else {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.frame_index,
                s.timestamp,
                cell(y),
                cell(p),
                cell(r)
            )?;
        }
    }
    w.flush()
}

pub fn write_activity_labels<W: Write>(labels: &[EventInterval], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LABELS_HEADER)?;
    for l in labels {
        w.write_record([
            l.label.as_str(),
            &format!("{}", l.start),
            &format!("{}", l.end),
        ])?;
    }
    w.flush()
}

pub fn write_biometric_series<W: Write>(
    samples: &[BiometricSample],
    writer: W,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", BIOMETRICS_HEADER.join(","))?;
    for s in samples {
        writeln!(w, "{},{},{}", s.timestamp, s.signal, s.value)?;
    }
    w.flush()
}
