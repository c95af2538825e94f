use serde::{Deserialize, Serialize};

use super::dist::two_tailed_p;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    Paired,
    /// Independent samples with unequal variances.
    Welch,
}

/// Outcome of a two-sample comparison.
///
/// `t` is positive when `a` exceeds `b`; `d` is positive when `b` exceeds `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub t: f64,
    pub df: f64,
    /// Two-tailed.
    pub p: f64,
    /// Pooled-SD Cohen's d; `None` when either sample has zero variance.
    pub d: Option<f64>,
    /// Usable pairs (paired test) or the smaller group size (Welch).
    pub n_pairs: usize,
}

/// Mean and sample standard deviation of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Moments {
    pub fn new(mean: f64, sd: f64, n: usize) -> Self {
        Moments { mean, sd, n }
    }

    /// Returns `None` for an empty slice; a single value has `sd = 0`.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Moments { mean, sd, n })
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

/// Cohen's d from group summaries: `(mean_b - mean_a) / sqrt((sd_a² + sd_b²) / 2)`.
pub fn cohens_d_from_moments(a: &Moments, b: &Moments) -> Result<f64> {
    let pooled = ((a.variance() + b.variance()) / 2.0).sqrt();
    if !(pooled.is_finite() && pooled > 0.0) {
        return Err(Error::InsufficientData(
            "pooled standard deviation is zero".into(),
        ));
    }
    Ok((b.mean - a.mean) / pooled)
}

/// Cohen's d with the root-mean-square of the two group SDs as the standardizer.
pub fn cohens_d_pooled(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb) = match (Moments::of(a), Moments::of(b)) {
        (Some(ma), Some(mb)) if ma.n >= 2 && mb.n >= 2 => (ma, mb),
        _ => {
            return Err(Error::InsufficientData(
                "Cohen's d needs at least 2 values per group".into(),
            ))
        }
    };
    if ma.sd == 0.0 || mb.sd == 0.0 {
        return Err(Error::InsufficientData("a group has zero variance".into()));
    }
    cohens_d_from_moments(&ma, &mb)
}

/// Keep pairs where both sides are defined and finite.
pub fn usable_pairs(a: &[Option<f64>], b: &[Option<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::InvalidParams(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Some((*x, *y)),
            _ => None,
        })
        .unzip())
}

/// Paired Student t-test on `a - b`. Pairs with an undefined side are dropped.
///
/// Differences with zero spread give `t = 0, p = 1` when their mean is zero
/// and `t = ±inf, p = 0` otherwise.
pub fn paired_t_test(a: &[Option<f64>], b: &[Option<f64>]) -> Result<TestResult> {
    let (xa, xb) = usable_pairs(a, b)?;
    let n = xa.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "paired t-test needs at least 2 complete pairs, got {n}"
        )));
    }
    let diffs: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
    let m = Moments::of(&diffs).expect("non-empty");
    let df = (n - 1) as f64;
    let (t, p) = if m.sd == 0.0 {
        if m.mean == 0.0 {
            (0.0, 1.0)
        } else {
            (m.mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = m.mean / (m.sd / (n as f64).sqrt());
        (t, two_tailed_p(t, df)?)
    };
    Ok(TestResult {
        kind: TestKind::Paired,
        t,
        df,
        p,
        d: cohens_d_pooled(&xa, &xb).ok(),
        n_pairs: n,
    })
}

/// Welch's unequal-variance t-test on `mean(a) - mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (ma, mb) = match (Moments::of(a), Moments::of(b)) {
        (Some(ma), Some(mb)) if ma.n >= 2 && mb.n >= 2 => (ma, mb),
        _ => {
            return Err(Error::InsufficientData(
                "Welch t-test needs at least 2 values per group".into(),
            ))
        }
    };
    let va = ma.variance() / ma.n as f64;
    let vb = mb.variance() / mb.n as f64;
    let diff = ma.mean - mb.mean;
    let (t, df, p) = if va + vb == 0.0 {
        let df = (ma.n + mb.n - 2) as f64;
        if diff == 0.0 {
            (0.0, df, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, df, 0.0)
        }
    } else {
        let t = diff / (va + vb).sqrt();
        let df = (va + vb).powi(2) / (va * va / (ma.n - 1) as f64 + vb * vb / (mb.n - 1) as f64);
        let df = df.max(1.0);
        (t, df, two_tailed_p(t, df)?)
    };
    Ok(TestResult {
        kind: TestKind::Welch,
        t,
        df,
        p,
        d: cohens_d_pooled(a, b).ok(),
        n_pairs: ma.n.min(mb.n),
    })
}
