use serde::Serialize;

use crate::sim::CupSpec;

/// Height error in millimeters to volume error in milliliters for a
/// cylindrical cup.
pub fn height_error_to_volume(error_mm: f64, cup: &CupSpec) -> f64 {
    // One millimeter over one square meter is one liter.
    error_mm * cup.area() * 1000.0
}

/// Error statistics of one group of trials, in millimeters unless noted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub group: String,
    /// Trials that finished.
    pub n: usize,
    pub timeouts: usize,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    /// Sample standard deviation of the absolute errors.
    pub std_abs_error: f64,
    pub max_abs_error: f64,
    pub mean_abs_error_ml: f64,
}

impl SummaryStats {
    /// Summarize `(error_mm, error_ml)` pairs of finished trials. Returns
    /// `None` when no trial finished.
    pub fn from_errors(group: &str, errors: &[(f64, f64)], timeouts: usize) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len();
        let abs: Vec<f64> = errors.iter().map(|(e, _)| e.abs()).collect();
        let mean_abs_error = mean(&abs);
        Some(Self {
            group: group.to_owned(),
            n,
            timeouts,
            mean_error: mean(&errors.iter().map(|(e, _)| *e).collect::<Vec<_>>()),
            mean_abs_error,
            std_abs_error: sample_std(&abs, mean_abs_error),
            max_abs_error: abs.iter().copied().fold(0.0, f64::max),
            mean_abs_error_ml: mean(&errors.iter().map(|(_, v)| v.abs()).collect::<Vec<_>>()),
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// n - 1 denominator; zero for a single sample.
fn sample_std(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}
