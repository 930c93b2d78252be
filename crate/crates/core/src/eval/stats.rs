use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    /// Two-tailed.
    pub p_value: f64,
    pub n: usize,
    pub significant_at_01: bool,
    /// Set when the differences have zero variance.
    pub degenerate: bool,
}

impl TTestResult {
    fn new(t_statistic: f64, p_value: f64, n: usize, degenerate: bool) -> Self {
        Self {
            t_statistic,
            p_value,
            n,
            significant_at_01: p_value < 0.01,
            degenerate,
        }
    }
}

/// Paired two-tailed Student's t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite metric value".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    // Rounding noise on identical samples should not read as a real effect.
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sd <= 1e-12 * scale {
        if mean == 0.0 {
            return Ok(TTestResult::new(0.0, 1.0, n, true));
        }
        return Ok(TTestResult::new(f64::INFINITY.copysign(mean), 0.0, n, true));
    }
    let t = mean / (sd / nf.sqrt());
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(TTestResult::new(t, p, n, false))
}
