use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{
    parse_activity_labels, parse_angle_series, parse_biometric_series, write_activity_labels,
    write_angle_series, write_biometric_series,
};
use super::{Gender, LearnerMeta, SessionBundle};
use crate::error::{Error, Result};

/// `session.json`: binds a session's data files. File paths are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub fps: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cohort_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biometrics: Option<String>,
}

impl SessionManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: Some(path.to_path_buf()),
            line: Some(e.line() as u64),
            message: e.to_string(),
        })
    }
}

/// Load a session from its `session.json` manifest.
pub fn load_session(manifest_path: impl AsRef<Path>) -> Result<SessionBundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = SessionManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let angles = match &manifest.angles {
        Some(rel) => {
            let mut parsed = parse_angle_series(dir.join(rel), manifest.fps)?;
            parsed.series.session_id = manifest.session_id.clone();
            Some(parsed.series)
        }
        None => None,
    };
    let labels = match &manifest.labels {
        Some(rel) => parse_activity_labels(dir.join(rel))?,
        None => Vec::new(),
    };
    let biometrics = match &manifest.biometrics {
        Some(rel) => parse_biometric_series(dir.join(rel))?,
        None => Vec::new(),
    };
    SessionBundle::new(
        manifest.session_id,
        LearnerMeta {
            gender: manifest.gender,
            cohort_tags: manifest.cohort_tags,
        },
        angles,
        biometrics,
        labels,
        manifest.duration_s,
    )
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Write a bundle as `session.json` plus its CSV files into `dir`, returning
/// the manifest path. Absent streams are omitted from the manifest.
pub fn write_session(bundle: &SessionBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fps = bundle.angles.as_ref().map_or(1.0, |a| a.fps);
    let mut manifest = SessionManifest {
        session_id: bundle.session_id.clone(),
        fps,
        duration_s: bundle.duration,
        gender: bundle.learner_meta.gender,
        cohort_tags: bundle.learner_meta.cohort_tags.clone(),
        angles: None,
        labels: None,
        biometrics: None,
    };
    if let Some(series) = &bundle.angles {
        let p = dir.join("angles.csv");
        write_angle_series(series, create(&p)?).map_err(|e| Error::io(&p, e))?;
        manifest.angles = Some("angles.csv".into());
    }
    if !bundle.labels.is_empty() {
        let p = dir.join("labels.csv");
        write_activity_labels(&bundle.labels, create(&p)?).map_err(|e| Error::io(&p, e))?;
        manifest.labels = Some("labels.csv".into());
    }
    if !bundle.biometrics.is_empty() {
        let p = dir.join("biometrics.csv");
        write_biometric_series(&bundle.biometrics, create(&p)?).map_err(|e| Error::io(&p, e))?;
        manifest.biometrics = Some("biometrics.csv".into());
    }
    let p = dir.join("session.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}
