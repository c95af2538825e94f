//! Corpus discovery: every `session.json` directly under the corpus
//! directory or one level below it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use poseguard_core::session::{
    load_session, validate_session, SessionBundle, ValidationConfig, ValidationReport,
};
use serde::Serialize;
use tracing::warn;

const MANIFEST: &str = "session.json";

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub manifest: PathBuf,
    pub readable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gender: Option<poseguard_core::session::Gender>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cohort_tags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    /// Ground-truth interval count per label.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

#[derive(Debug, Default)]
pub struct Corpus {
    /// Sorted by manifest path.
    pub summaries: Vec<SessionSummary>,
    pub sessions: BTreeMap<String, Arc<SessionBundle>>,
}

impl Corpus {
    pub fn get(&self, id: &str) -> Option<&Arc<SessionBundle>> {
        self.sessions.get(id)
    }

    /// Readable sessions in manifest order.
    pub fn readable(&self) -> Vec<SessionBundle> {
        self.summaries
            .iter()
            .filter(|s| s.readable)
            .filter_map(|s| self.sessions.get(&s.session_id))
            .map(|b| (**b).clone())
            .collect()
    }
}

pub fn find_manifests(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let root = dir.join(MANIFEST);
    if root.is_file() {
        out.push(root);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path().join(MANIFEST);
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn fallback_id(manifest: &Path) -> String {
    manifest
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest.display().to_string())
}

fn unreadable(manifest: PathBuf, error: String) -> SessionSummary {
    SessionSummary {
        session_id: fallback_id(&manifest),
        manifest,
        readable: false,
        error: Some(error),
        gender: None,
        cohort_tags: Vec::new(),
        duration_s: None,
        fps: None,
        frames: None,
        labels: BTreeMap::new(),
        validation: None,
    }
}

/// Load every session. Manifests that fail to load, or repeat a session id,
/// are listed as unreadable rather than failing the whole corpus.
pub fn load_corpus(dir: &Path) -> std::io::Result<Corpus> {
    let mut corpus = Corpus::default();
    for manifest in find_manifests(dir)? {
        let bundle = match load_session(&manifest) {
            Ok(b) => b,
            Err(e) => {
                warn!(manifest = %manifest.display(), "unreadable session: {e}");
                corpus.summaries.push(unreadable(manifest, e.to_string()));
                continue;
            }
        };
        if corpus.sessions.contains_key(&bundle.session_id) {
            let msg = format!("duplicate session id {:?}", bundle.session_id);
            corpus.summaries.push(unreadable(manifest, msg));
            continue;
        }
        let mut labels = BTreeMap::new();
        for l in &bundle.labels {
            *labels.entry(l.label.clone()).or_insert(0) += 1;
        }
        corpus.summaries.push(SessionSummary {
            session_id: bundle.session_id.clone(),
            manifest,
            readable: true,
            error: None,
            gender: Some(bundle.learner_meta.gender),
            cohort_tags: bundle.learner_meta.cohort_tags.clone(),
            duration_s: Some(bundle.duration),
            fps: bundle.angles.as_ref().map(|a| a.fps),
            frames: bundle.angles.as_ref().map(|a| a.len()),
            labels,
            validation: Some(validate_session(&bundle, &ValidationConfig::default())),
        });
        corpus
            .sessions
            .insert(bundle.session_id.clone(), Arc::new(bundle));
    }
    Ok(corpus)
}
