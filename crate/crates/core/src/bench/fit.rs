use std::fmt;

use serde::Serialize;

use super::ScalingRow;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityClass {
    Linear,
    Linearithmic,
    Quadratic,
}

impl ComplexityClass {
    pub const ALL: [ComplexityClass; 3] = [Self::Linear, Self::Linearithmic, Self::Quadratic];

    pub fn model(self, len: f64) -> f64 {
        match self {
            Self::Linear => len,
            Self::Linearithmic => len * len.ln(),
            Self::Quadratic => len * len,
        }
    }
}

impl fmt::Display for ComplexityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Linearithmic => "linearithmic",
            Self::Quadratic => "quadratic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFit {
    pub class: ComplexityClass,
    pub coefficient: f64,
    /// Root mean square of `(t - c·f(L)) / t`.
    pub rel_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub best: ComplexityClass,
    pub fits: Vec<ClassFit>,
    pub rows_used: usize,
}

/// Fit `t ≈ c·f(L)` for each class by least squares on relative residuals
/// (weights `1/t²`) and pick the smallest residual. Needs four successful rows.
pub fn fit_complexity(rows: &[ScalingRow]) -> Result<ComplexityReport> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.is_ok()).map(|r| (r.len as f64, r.wall_ms)).collect();
    if pts.len() < 4 {
        return Err(invalid(format!("complexity fit needs at least 4 successful rows, got {}", pts.len())));
    }
    if pts.iter().any(|&(l, t)| !(l > 1.0 && t > 0.0 && t.is_finite())) {
        return Err(invalid("complexity fit needs L > 1 and positive finite timings"));
    }
    let fits: Vec<ClassFit> = ComplexityClass::ALL
        .iter()
        .map(|&class| {
            // minimise Σ (1 - c·f/t)²  ⇒  c = Σ(f/t) / Σ(f/t)²
            let r: Vec<f64> = pts.iter().map(|&(l, t)| class.model(l) / t).collect();
            let c = r.iter().sum::<f64>() / r.iter().map(|x| x * x).sum::<f64>();
            let rms = (r.iter().map(|x| (1.0 - c * x).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
            ClassFit { class, coefficient: c, rel_rms: rms }
        })
        .collect();
    let best = fits.iter().min_by(|a, b| a.rel_rms.total_cmp(&b.rel_rms)).expect("three classes").class;
    Ok(ComplexityReport { best, fits, rows_used: pts.len() })
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn affine_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    1.0 - ss_res / syy
}
