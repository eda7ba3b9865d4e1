//! Frequency-velocity alignment (FVA) and Doppler consistency scores (DCS).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::CentroidSeries;

/// Default intervention grid {0.1, 0.2, ..., 1.0}.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("series lengths differ: {a} vs {b}")));
    }
    Ok(())
}

fn centered_energy(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean).powi(2)).sum()
}

// The summed mean of n equal values can be off by about n ulps, so a constant
// series leaves residual energy up to n·(n·eps·scale)².
fn is_flat(energy: f64, xs: &[f64]) -> bool {
    if xs.iter().all(|&x| x == xs[0]) {
        return true;
    }
    let n = xs.len() as f64;
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    energy <= n * (n * f64::EPSILON * scale).powi(2)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("correlation needs at least 2 samples, got {n}")));
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let saa = centered_energy(a, ma);
    let sbb = centered_energy(b, mb);
    if is_flat(saa, a) {
        return Err(Error::DegenerateCorrelation("first series"));
    }
    if is_flat(sbb, b) {
        return Err(Error::DegenerateCorrelation("second series"));
    }
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// FVA value with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fva {
    pub value: f64,
    /// True when either trajectory was constant; `value` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation between predicted and reference centroid trajectories.
/// A constant trajectory scores 0 with the degeneracy flag set.
pub fn fva(pred: &CentroidSeries, reference: &CentroidSeries) -> Result<Fva> {
    if !pred.same_framing(reference) {
        return Err(Error::ShapeMismatch(format!(
            "framing differs: (fs={}, L={}, H={}) vs (fs={}, L={}, H={})",
            pred.fs_hz, pred.win_len, pred.hop, reference.fs_hz, reference.win_len, reference.hop
        )));
    }
    match pearson(&pred.values, &reference.values) {
        Ok(value) => Ok(Fva {
            value,
            degenerate: false,
        }),
        Err(Error::DegenerateCorrelation(_)) => Ok(Fva {
            value: 0.0,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Least-squares scale `Σ base·scaled / Σ base²`.
pub fn fit_alpha(base: &[f64], scaled: &[f64]) -> Result<f64> {
    check_lengths(base.len(), scaled.len())?;
    let energy: f64 = base.iter().map(|b| b * b).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let cross: f64 = base.iter().zip(scaled).map(|(b, s)| b * s).sum();
    Ok(cross / energy)
}

/// `1 - Σ(α - α_pred)² / Σ(α - ᾱ)²`. Unbounded below.
pub fn dcs(alphas: &[f64], alpha_preds: &[f64]) -> Result<f64> {
    check_lengths(alphas.len(), alpha_preds.len())?;
    let k = alphas.len();
    if k < 2 {
        return Err(Error::InsufficientData(format!("DCS needs at least 2 factors, got {k}")));
    }
    let mean = alphas.iter().sum::<f64>() / k as f64;
    let spread = centered_energy(alphas, mean);
    if alphas.iter().all(|&a| a == alphas[0]) || spread == 0.0 {
        return Err(Error::UndefinedDenominator);
    }
    let residual: f64 = alphas
        .iter()
        .zip(alpha_preds)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok(1.0 - residual / spread)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sign-reversal agreement in [0, 1] between a baseline trajectory and the
/// trajectory predicted for the velocity-reversed input. Zero samples count
/// as half agreement.
pub fn dcs_sign(base: &[f64], flipped: &[f64]) -> Result<f64> {
    check_lengths(base.len(), flipped.len())?;
    if base.is_empty() {
        return Err(Error::InsufficientData("sign score needs at least 1 frame".into()));
    }
    let agreement: f64 = base
        .iter()
        .zip(flipped)
        .map(|(b, f)| sign(-b) * sign(*f))
        .sum();
    Ok(0.5 * (1.0 + agreement / base.len() as f64))
}

/// Applied and recovered scaling factors with their scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcsResult {
    pub alphas: Vec<f64>,
    pub alpha_preds: Vec<f64>,
    pub score: f64,
    pub sign_score: Option<f64>,
}

impl DcsResult {
    pub fn new(alphas: Vec<f64>, alpha_preds: Vec<f64>, sign_score: Option<f64>) -> Result<Self> {
        let score = dcs(&alphas, &alpha_preds)?;
        Ok(Self {
            alphas,
            alpha_preds,
            score,
            sign_score,
        })
    }
}
