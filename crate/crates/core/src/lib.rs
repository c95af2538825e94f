//! Detection of abnormal head-pose events in recorded learning sessions.
//!
//! The crate covers the offline pipeline end to end:
//!
//! - [`session`]: domain types and the on-disk CSV/JSON formats.
//! - [`detector`]: session-global statistics, sliding-window means and the
//!   `|mean - mu| > n * sigma` deviation rule, merged into disjoint events.
//! - [`eval`]: matching predicted events against labeled intervals and
//!   sweeping the `(n, w)` parameter grid.
//! - [`stats`]: before/during/after biometric comparisons with paired
//!   t-tests and pooled Cohen's d.
//! - [`synth`]: a seeded synthetic session generator and a brute-force
//!   reference detector used as test oracles.

pub mod detector;
pub mod error;
pub mod eval;
pub mod session;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
