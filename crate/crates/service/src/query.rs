//! Query-string parsing with JSON error reporting.

use std::collections::HashMap;
use std::str::FromStr;

use poseguard_core::detector::{DetectorParams, WindowUnit};
use poseguard_core::eval::{MatchPolicy, SweepConfig};

use crate::error::{ApiError, ApiResult};

pub type Query = HashMap<String, String>;

fn reject_unknown(q: &Query, allowed: &[&str]) -> ApiResult<()> {
    let mut unknown: Vec<&str> = q
        .keys()
        .map(String::as_str)
        .filter(|k| !allowed.contains(k))
        .collect();
    if unknown.is_empty() {
        return Ok(());
    }
    unknown.sort_unstable();
    Err(ApiError::bad_request(format!(
        "unknown query parameter(s) {}; expected any of {}",
        unknown.join(", "),
        allowed.join(", ")
    )))
}

fn parse<T: FromStr>(q: &Query, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| ApiError::bad_request(format!("invalid value {v:?} for `{key}`: {e}")))
        })
        .transpose()
}

fn parse_list<T: FromStr>(q: &Query, key: &str) -> ApiResult<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| {
            v.split(',')
                .map(|item| {
                    item.trim().parse::<T>().map_err(|e| {
                        ApiError::bad_request(format!("invalid item {item:?} in `{key}`: {e}"))
                    })
                })
                .collect()
        })
        .transpose()
}

const WINDOW_KEYS: [&str; 4] = ["w", "window_unit", "stride", "min_coverage"];

fn apply_window(q: &Query, mut p: DetectorParams) -> ApiResult<DetectorParams> {
    if let Some(w) = parse(q, "w")? {
        p.w = w;
    }
    if let Some(u) = parse::<WindowUnit>(q, "window_unit")? {
        p.window_unit = u;
    }
    if let Some(s) = parse(q, "stride")? {
        p.stride = s;
    }
    if let Some(c) = parse(q, "min_coverage")? {
        p.min_window_coverage = c;
    }
    Ok(p)
}

/// `n`, `w`, `window_unit`, `stride`, `min_coverage`; omitted keys take the detector defaults.
pub fn detector_params(q: &Query) -> ApiResult<DetectorParams> {
    let mut keys = vec!["n"];
    keys.extend(WINDOW_KEYS);
    reject_unknown(q, &keys)?;
    let mut p = apply_window(q, DetectorParams::default())?;
    if let Some(n) = parse(q, "n")? {
        p.n = n;
    }
    p.check()?;
    Ok(p)
}

/// Window parameters plus `downsample` for the local-average trace.
pub fn window_params(q: &Query) -> ApiResult<(DetectorParams, usize)> {
    let mut keys = vec!["downsample"];
    keys.extend(WINDOW_KEYS);
    reject_unknown(q, &keys)?;
    let p = apply_window(q, DetectorParams::default())?;
    p.check()?;
    Ok((p, downsample_value(q)?))
}

pub fn downsample(q: &Query) -> ApiResult<usize> {
    reject_unknown(q, &["downsample"])?;
    downsample_value(q)
}

fn downsample_value(q: &Query) -> ApiResult<usize> {
    match parse::<usize>(q, "downsample")? {
        None => Ok(1),
        Some(0) => Err(ApiError::bad_request("downsample must be at least 1")),
        Some(k) => Ok(k),
    }
}

/// `n_grid` and `w_grid` (comma lists), `window_unit`, `stride`,
/// `min_coverage`, `label`, `min_overlap`, `one_to_many`.
pub fn sweep_config(q: &Query) -> ApiResult<SweepConfig> {
    reject_unknown(
        q,
        &[
            "n_grid",
            "w_grid",
            "window_unit",
            "stride",
            "min_coverage",
            "label",
            "min_overlap",
            "one_to_many",
        ],
    )?;
    let mut c = SweepConfig::default();
    if let Some(n) = parse_list(q, "n_grid")? {
        c.n_values = n;
    }
    if let Some(w) = parse_list(q, "w_grid")? {
        c.w_values = w;
    }
    if let Some(u) = parse(q, "window_unit")? {
        c.window_unit = u;
    }
    if let Some(s) = parse(q, "stride")? {
        c.stride = s;
    }
    if let Some(m) = parse(q, "min_coverage")? {
        c.min_window_coverage = m;
    }
    if let Some(l) = q.get("label") {
        c.target_label = l.clone();
    }
    let mut policy = MatchPolicy::default();
    if let Some(m) = parse(q, "min_overlap")? {
        policy.min_overlap = m;
    }
    if let Some(o) = parse(q, "one_to_many")? {
        policy.one_to_many = o;
    }
    c.policy = policy;
    // normalize so equivalent requests share a job
    c.n_values.sort_by(f64::total_cmp);
    c.n_values.dedup();
    c.w_values.sort_unstable();
    c.w_values.dedup();
    if c.n_values.is_empty() || c.w_values.is_empty() {
        return Err(ApiError::bad_request("parameter grid is empty"));
    }
    for &n in &c.n_values {
        for &w in &c.w_values {
            c.params(n, w).check()?;
        }
    }
    if !(c.policy.min_overlap >= 0.0 && c.policy.min_overlap.is_finite()) {
        return Err(ApiError::bad_request(
            "min_overlap must be a non-negative number",
        ));
    }
    Ok(c)
}
