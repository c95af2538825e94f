use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use poseguard_core::detector::{
    detect as run_detect, write_events_csv, DetectionReport, DetectorParams,
};
use poseguard_core::eval::{
    events_per_hour, export_heatmap_csv, flagged_fraction, MatchPolicy, SweepConfig, SweepMeta,
};
use poseguard_core::session::{load_session, validate_session, SessionBundle, ValidationConfig};
use poseguard_core::stats::{study, Aggregation, Cohort, StudyConfig, TestKind};
use poseguard_core::synth::{write_synth_session, SynthSpec};
use poseguard_core::Error;
use poseguard_service::{build_app, find_manifests, ServiceConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::failure::Failure;

/// Print a line to stdout; a closed pipe (e.g. `| head`) is not an error.
macro_rules! emit {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}
use crate::{
    AggregationArg, CohortArg, DetectArgs, ServeArgs, StatsArgs, SweepArgs, SynthArgs,
    ValidateArgs, WindowArgs,
};

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_vec_pretty(value).expect("output serializes");
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn detector_params(n: f64, w: u32, window: &WindowArgs) -> DetectorParams {
    DetectorParams {
        n,
        w,
        window_unit: window.window_unit.into(),
        stride: window.stride,
        min_window_coverage: window.min_coverage,
    }
}

/// Expand manifest paths and corpus directories, keeping first-seen order.
fn manifests(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    if inputs.is_empty() {
        return Err(Failure::usage("no_input", "no session manifests given"));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for input in inputs {
        let found = if input.is_dir() {
            find_manifests(input).map_err(|e| Failure::io(input, e))?
        } else {
            vec![input.clone()]
        };
        for m in found {
            if seen.insert(m.clone()) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err(Failure::usage(
            "no_input",
            "no session.json found under the given directories",
        ));
    }
    Ok(out)
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<SessionBundle>, Failure> {
    let paths = manifests(inputs)?;
    let loaded: Result<Vec<SessionBundle>, Error> = paths.par_iter().map(load_session).collect();
    Ok(loaded?)
}

pub fn detect(a: DetectArgs) -> Result<(), Failure> {
    let bundle = load_session(&a.manifest)?;
    let series = bundle.angles.as_ref().ok_or_else(|| {
        Error::InsufficientData(format!("{} has no angle series", a.manifest.display()))
    })?;
    let params = detector_params(a.n, a.w, &a.window);
    let result = run_detect(series, &params)?;
    let rate = events_per_hour(&result, bundle.duration)?;
    let fraction = flagged_fraction(&result, bundle.duration)?;

    ensure_dir(&a.out)?;
    let events_path = a.out.join("events.csv");
    let file = fs::File::create(&events_path).map_err(|e| Failure::io(&events_path, e))?;
    write_events_csv(&result.events, file).map_err(|e| Failure::io(&events_path, e))?;
    let count = result.events.len();
    let report_path = a.out.join("detection.json");
    let report = DetectionReport::new(series, result);
    fs::write(&report_path, report.to_json_bytes()).map_err(|e| Failure::io(&report_path, e))?;

    emit!("session: {}", bundle.session_id);
    emit!("events: {count}");
    emit!("events_per_hour: {rate}");
    emit!("flagged_fraction: {fraction}");
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    if !(a.min_overlap >= 0.0 && a.min_overlap.is_finite()) {
        return Err(Failure::usage(
            "invalid_params",
            "--min-overlap must be a non-negative number",
        ));
    }
    let sessions = load_all(&a.inputs)?;
    let config = SweepConfig {
        n_values: a.n_grid,
        w_values: a.w_grid,
        window_unit: a.window.window_unit.into(),
        stride: a.window.stride,
        min_window_coverage: a.window.min_coverage,
        policy: MatchPolicy {
            min_overlap: a.min_overlap,
            one_to_many: !a.one_to_one,
        },
        target_label: a.label,
    };
    let grid = poseguard_core::eval::sweep(&sessions, &config)?;
    ensure_dir(&a.out)?;
    export_heatmap_csv(&grid, a.out.join("sweep.csv"))?;
    write_json(
        &a.out.join("sweep_meta.json"),
        &SweepMeta::new(&config, &grid, &sessions),
    )?;
    emit!("sessions: {}", sessions.len() - grid.skipped.len());
    emit!("skipped: {}", grid.skipped.len());
    emit!("cells: {}", grid.cells.len());
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<(), Failure> {
    let sessions = load_all(&a.inputs)?;
    let mut cohorts: Vec<Cohort> = a
        .cohorts
        .iter()
        .map(|c| match c {
            CohortArg::All => Cohort::All,
            CohortArg::Female => Cohort::Female,
            CohortArg::Male => Cohort::Male,
        })
        .collect();
    cohorts.dedup();
    let config = StudyConfig {
        target_label: a.label,
        window_len_s: a.window,
        aggregation: match a.aggregation {
            AggregationArg::PerEvent => Aggregation::PerEvent,
            AggregationArg::PerLearner => Aggregation::PerLearner,
        },
        test: if a.welch {
            TestKind::Welch
        } else {
            TestKind::Paired
        },
        exclusion: (!a.no_exclusion).then(|| ValidationConfig {
            loss_threshold_s: a.loss_threshold,
            ..ValidationConfig::default()
        }),
        cohorts,
    };
    let report = study(&sessions, &config);
    ensure_dir(&a.out)?;
    write_json(&a.out.join("study_report.json"), &report)?;
    let table_path = a.out.join("summary_table.csv");
    let file = fs::File::create(&table_path).map_err(|e| Failure::io(&table_path, e))?;
    report
        .summary
        .write_csv(file)
        .map_err(|e| Failure::io(&table_path, e))?;

    let tested = report.cells.iter().filter(|c| c.result.is_some()).count();
    let significant = report
        .cells
        .iter()
        .filter(|c| c.result.as_ref().is_some_and(|r| r.p < 0.05))
        .count();
    emit!("sessions_used: {}", report.sessions_used.len());
    emit!("sessions_excluded: {}", report.sessions_excluded.len());
    emit!("events: {}", report.event_count);
    emit!("tests: {tested} ({} skipped)", report.cells.len() - tested);
    emit!("significant_at_0.05: {significant}");
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.config).map_err(|e| Failure::io(&a.config, e))?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: Some(a.config.clone()),
        line: Some(e.line() as u64),
        message: e.to_string(),
    })?;
    let sessions = spec.sessions()?;
    let ids: BTreeSet<&str> = sessions.iter().map(|s| s.session_id.as_str()).collect();
    if ids.len() != sessions.len() {
        return Err(Error::Invalid("session ids in the config are not unique".into()).into());
    }
    ensure_dir(&a.out_dir)?;
    let written: Result<Vec<PathBuf>, Error> = sessions
        .par_iter()
        .map(|c| write_synth_session(c, &a.out_dir))
        .collect();
    for p in written? {
        emit!("{}", p.display());
    }
    Ok(())
}

pub fn validate(a: ValidateArgs) -> Result<(), Failure> {
    let bundle = load_session(&a.manifest)?;
    let config = ValidationConfig {
        nominal_period_s: a.nominal_period,
        loss_threshold_s: a.loss_threshold,
    };
    let report = validate_session(&bundle, &config);
    if let Some(out) = &a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_dir(parent)?;
        }
        write_json(out, &report)?;
    }
    emit!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub fn serve(a: ServeArgs, jobs: usize) -> Result<(), Failure> {
    if !a.corpus_dir.is_dir() {
        return Err(Failure::io(
            &a.corpus_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let config = ServiceConfig {
        corpus_dir: a.corpus_dir,
        decisions_log: a.decisions_log,
        jobs,
        ui_dir: a.ui_dir,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::internal(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let app = build_app(&config)
            .await
            .map_err(|e| Failure::new_io(e.to_string()))?;
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::io(Path::new(&addr), e))?;
        let bound = listener
            .local_addr()
            .map_err(|e| Failure::io(Path::new(&addr), e))?;
        emit!("listening on http://{bound}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        poseguard_service::serve(listener, app, shutdown)
            .await
            .map_err(|e| Failure::io(Path::new(&addr), e))
    })
}
