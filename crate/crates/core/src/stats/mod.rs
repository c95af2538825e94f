//! Biometric statistics around phone-usage events.

mod dist;
mod hypothesis;
mod study;

pub use dist::{ln_gamma, regularized_beta, t_cdf, two_tailed_p};
pub use hypothesis::{
    cohens_d_from_moments, cohens_d_pooled, paired_t_test, usable_pairs, welch_t_test, Moments,
    TestKind, TestResult,
};
pub use study::{
    extract_triplets, response_times, study, summarize, Aggregation, Cohort, EventTriplet, Period,
    PeriodMeans, ResponseTimes, StudyCell, StudyConfig, StudyReport, Summary, SummaryRow,
    SummaryTable, COMPARISONS, DEFAULT_WINDOW_S,
};
