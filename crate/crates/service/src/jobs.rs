//! Background sweep jobs, deduplicated by configuration.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use poseguard_core::eval::{SweepConfig, SweepGrid};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done { grid: SweepGrid },
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub job_id: String,
    pub config: SweepConfig,
    #[serde(flatten)]
    pub state: JobState,
}

#[derive(Default)]
struct Inner {
    jobs: HashMap<String, Job>,
    by_config: HashMap<String, String>,
    next: u64,
}

#[derive(Clone, Default)]
pub struct Jobs {
    inner: Arc<Mutex<Inner>>,
}

impl Jobs {
    /// Return the id of the job for `config`, and whether it was newly created.
    pub fn get_or_create(&self, config: &SweepConfig) -> (String, bool) {
        let key = serde_json::to_string(config).expect("config serializes");
        let mut inner = self.inner.lock().unwrap();
        if let Some(id) = inner.by_config.get(&key) {
            return (id.clone(), false);
        }
        inner.next += 1;
        let id = format!("sweep-{}", inner.next);
        inner.by_config.insert(key, id.clone());
        inner.jobs.insert(
            id.clone(),
            Job {
                job_id: id.clone(),
                config: config.clone(),
                state: JobState::Running,
            },
        );
        (id, true)
    }

    pub fn finish(&self, id: &str, state: JobState) {
        if let Some(job) = self.inner.lock().unwrap().jobs.get_mut(id) {
            job.state = state;
        }
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.inner.lock().unwrap().jobs.get(id).cloned()
    }
}
