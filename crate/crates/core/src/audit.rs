//! Audit orchestration: reference, baseline and intervened predictions,
//! metric assembly and joint MAE/FVA/DCS interpretation.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::adapter::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::kinematics::scale_velocity;
use crate::metrics::{dcs_sign, fit_alpha, fva, DcsResult, Fva};
use crate::mocap::{MoCapSequence, RadarConfig, Vec3, WeightTable, RADAR_PREFIX};
use crate::reference::reference_centroid;
use crate::spectral::{centroid_trajectory, mae_db, CentroidSeries, Framing, Spectrogram};

/// Cut-offs separating Low/High cells of the joint interpretation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub fva_high: f64,
    pub dcs_high: f64,
    pub mae_low_db: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            fva_high: 0.8,
            dcs_high: 0.8,
            mae_low_db: 6.0,
        }
    }
}

impl Thresholds {
    pub fn new(fva_high: f64, dcs_high: f64, mae_low_db: f64) -> Result<Self> {
        let th = Self {
            fva_high,
            dcs_high,
            mae_low_db,
        };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.fva_high) || !unit(self.dcs_high) {
            return Err(Error::Config("fva and dcs thresholds must lie in (0, 1)".into()));
        }
        if !(self.mae_low_db.is_finite() && self.mae_low_db > 0.0) {
            return Err(Error::Config("mae threshold must be positive".into()));
        }
        Ok(())
    }

    /// Parse `fva=0.8,dcs=0.8,mae=6`; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut th = Self::default();
        for field in text.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("threshold '{field}' is not key=value")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("threshold '{field}' is not numeric")))?;
            match key.trim() {
                "fva" => th.fva_high = v,
                "dcs" => th.dcs_high = v,
                "mae" => th.mae_low_db = v,
                other => return Err(Error::Config(format!("unknown threshold '{other}'"))),
            }
        }
        th.validate()?;
        Ok(th)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Interpretation {
    AccurateAndConsistent,
    AccurateButUngrounded,
    ConsistentButInaccurate,
    NeitherAccurateNorGrounded,
    /// No ground truth, so only the physics half can be judged.
    PhysicallyConsistent,
    LacksPhysicalGrounding,
}

impl Interpretation {
    pub fn physically_consistent(self) -> bool {
        matches!(
            self,
            Self::AccurateAndConsistent | Self::ConsistentButInaccurate | Self::PhysicallyConsistent
        )
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AccurateAndConsistent => "Accurate and physically consistent",
            Self::AccurateButUngrounded => "Accurate but lacks physical grounding",
            Self::ConsistentButInaccurate => "Physically consistent but inaccurate",
            Self::NeitherAccurateNorGrounded => "Neither accurate nor physically grounded",
            Self::PhysicallyConsistent => "Physically consistent (no ground truth for MAE)",
            Self::LacksPhysicalGrounding => "Lacks physical grounding (no ground truth for MAE)",
        })
    }
}

/// Physics counts as high only when both FVA and DCS clear their thresholds.
pub fn interpret(mae_db: Option<f64>, fva: f64, dcs: f64, th: &Thresholds) -> Interpretation {
    let physics = fva >= th.fva_high && dcs >= th.dcs_high;
    match (mae_db.map(|m| m <= th.mae_low_db), physics) {
        (Some(true), true) => Interpretation::AccurateAndConsistent,
        (Some(true), false) => Interpretation::AccurateButUngrounded,
        (Some(false), true) => Interpretation::ConsistentButInaccurate,
        (Some(false), false) => Interpretation::NeitherAccurateNorGrounded,
        (None, true) => Interpretation::PhysicallyConsistent,
        (None, false) => Interpretation::LacksPhysicalGrounding,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Where the inputs came from; filled in by the caller.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub mocap: Option<String>,
    pub radar_config: Option<String>,
    pub weights: Option<String>,
    pub truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    pub fs_hz: f64,
    pub radar_pos: Vec3,
    pub framing: Framing,
    pub alphas: Vec<f64>,
    pub weights: Vec<(String, f64)>,
    pub weights_digest: String,
    pub thresholds: Thresholds,
    pub thresholds_are_defaults: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcsSection {
    pub result: Option<DcsResult>,
    pub dropped_alphas: Vec<f64>,
    pub unavailable_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub mae_db: Option<f64>,
    pub fva: Fva,
    pub fva_rev: Option<Fva>,
    pub dcs: Option<f64>,
    pub dcs_sign: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub tool: ToolInfo,
    pub model: ModelSpec,
    pub inputs: Provenance,
    pub config: ConfigEcho,
    pub frames: usize,
    pub metrics: Metrics,
    pub dcs: DcsSection,
    /// Largest |reference(α = -1) + reference(α = 1)| across frames (Hz).
    pub reversed_reference_discrepancy_hz: Option<f64>,
    pub label: String,
    pub physically_consistent: bool,
    pub warnings: Vec<String>,
    pub model_output: Vec<String>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Everything the audit computed, for callers that emit traces or images.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub baseline: Spectrogram,
    pub pred_centroid: CentroidSeries,
    pub ref_centroid: CentroidSeries,
    pub rev_pred_centroid: Option<CentroidSeries>,
    pub rev_ref_centroid: Option<CentroidSeries>,
}

/// Static inputs of an audit that are echoed in the report.
#[derive(Debug, Clone)]
pub struct AuditSetup {
    pub framing: Framing,
    pub alphas: Vec<f64>,
    pub thresholds: Thresholds,
    pub weights_digest: String,
    pub provenance: Provenance,
}

struct Intervened {
    centroid: CentroidSeries,
    diagnostics: Option<String>,
}

fn predict_centroid(model: &Model, seq: &MoCapSequence, cfg: &RadarConfig, framing: Framing) -> Result<Intervened> {
    let pred = model.predict(seq, cfg, framing)?;
    Ok(Intervened {
        centroid: centroid_trajectory(&pred.spectrogram)?,
        diagnostics: pred.diagnostics,
    })
}

/// Run the full audit of `model` on `seq` (already at the radar rate).
pub fn run_audit(
    model: &Model,
    seq: &MoCapSequence,
    cfg: &RadarConfig,
    weights: &WeightTable,
    setup: &AuditSetup,
    truth: Option<&Spectrogram>,
) -> Result<AuditOutcome> {
    let framing = setup.framing;
    framing.validate()?;
    setup.thresholds.validate()?;
    if framing.fs_hz != cfg.fs_hz {
        return Err(Error::Config(format!(
            "framing fs {} differs from radar fs {}",
            framing.fs_hz, cfg.fs_hz
        )));
    }
    if (seq.rate_hz() - cfg.fs_hz).abs() > 1e-9 * cfg.fs_hz {
        return Err(Error::Config(format!(
            "sequence is sampled at {} Hz; resample to {} Hz first",
            seq.rate_hz(),
            cfg.fs_hz
        )));
    }
    let n_frames = framing.require_frames(seq.len())?;

    let mut warnings = Vec::new();
    let mut model_output = Vec::new();

    let has_radar = seq.markers().iter().any(|m| m.starts_with(RADAR_PREFIX));
    let body = if has_radar {
        warnings.push(format!(
            "markers starting with '{RADAR_PREFIX}' were removed before the audit"
        ));
        seq.without_prefix(RADAR_PREFIX)?
    } else {
        seq.clone()
    };
    let unweighted: Vec<&str> = body
        .markers()
        .iter()
        .filter(|m| weights.weight(m) == 0.0)
        .map(String::as_str)
        .collect();
    if !unweighted.is_empty() {
        warnings.push(format!("markers with zero weight: {}", unweighted.join(", ")));
    }

    let mut model = model.clone();
    model.anchor(&body, cfg, framing)?;

    let baseline = model.predict(&body, cfg, framing)?;
    model_output.extend(baseline.diagnostics.clone());
    let pred_centroid = centroid_trajectory(&baseline.spectrogram)?;
    let ref_centroid = reference_centroid(&body, cfg, weights, framing.win_len, framing.hop)?;
    let fva_base = fva(&pred_centroid, &ref_centroid)?;
    if fva_base.degenerate {
        warnings.push("FVA is degenerate (constant trajectory); reported as 0".into());
    }

    let mae = match truth {
        Some(t) => Some(mae_db(&baseline.spectrogram, t)?),
        None => None,
    };

    // velocity reversal
    let (fva_rev, sign_score, rev_pred, rev_ref, discrepancy) =
        match scale_velocity(&body, cfg.radar_pos, -1.0) {
            Ok(reversed) => {
                let pred = predict_centroid(&model, &reversed, cfg, framing)?;
                model_output.extend(pred.diagnostics);
                let direct = reference_centroid(&reversed, cfg, weights, framing.win_len, framing.hop)?;
                let negated = ref_centroid.negated();
                let gap = direct
                    .values
                    .iter()
                    .zip(&negated.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                let f = fva(&pred.centroid, &direct)?;
                if f.degenerate {
                    warnings.push("FVA-rev is degenerate (constant trajectory); reported as 0".into());
                }
                let s = dcs_sign(&pred_centroid.values, &pred.centroid.values)?;
                (Some(f), Some(s), Some(pred.centroid), Some(direct), Some(gap))
            }
            Err(e @ Error::InterventionInfeasible { .. }) => {
                warnings.push(format!("velocity reversal skipped: {e}"));
                (None, None, None, None, None)
            }
            Err(e) => return Err(e),
        };

    // velocity-scaling grid
    let runs: Vec<Result<Option<(f64, Intervened)>>> = setup
        .alphas
        .par_iter()
        .map(|&alpha| match scale_velocity(&body, cfg.radar_pos, alpha) {
            Ok(scaled) => Ok(Some((alpha, predict_centroid(&model, &scaled, cfg, framing)?))),
            Err(Error::InterventionInfeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut used = Vec::new();
    let mut preds = Vec::new();
    let mut dropped = Vec::new();
    let mut unavailable = None;
    for (&alpha, run) in setup.alphas.iter().zip(runs) {
        match run? {
            Some((a, out)) => {
                model_output.extend(out.diagnostics);
                match fit_alpha(&pred_centroid.values, &out.centroid.values) {
                    Ok(p) => {
                        used.push(a);
                        preds.push(p);
                    }
                    Err(Error::DegenerateFit) => {
                        unavailable = Some("baseline predicted centroid is identically zero".to_string());
                    }
                    Err(e) => return Err(e),
                }
            }
            None => {
                warnings.push(format!("alpha = {alpha} is infeasible for this geometry and was dropped"));
                dropped.push(alpha);
            }
        }
    }
    let dcs_result = if unavailable.is_some() {
        None
    } else {
        match DcsResult::new(used, preds, sign_score) {
            Ok(r) => Some(r),
            Err(e @ (Error::InsufficientData(_) | Error::UndefinedDenominator)) => {
                unavailable = Some(format!("fewer than two distinct feasible alphas: {e}"));
                None
            }
            Err(e) => return Err(e),
        }
    };
    if let Some(reason) = &unavailable {
        warnings.push(format!("DCS unavailable: {reason}"));
    }
    let dcs_score = dcs_result.as_ref().map(|r| r.score);

    let label = interpret(
        mae,
        fva_base.value,
        dcs_score.unwrap_or(f64::NEG_INFINITY),
        &setup.thresholds,
    );

    let report = AuditReport {
        tool: ToolInfo::default(),
        model: model.spec().clone(),
        inputs: setup.provenance.clone(),
        config: ConfigEcho {
            carrier_hz: cfg.carrier_hz,
            wavelength_m: cfg.wavelength_m,
            fs_hz: cfg.fs_hz,
            radar_pos: cfg.radar_pos,
            framing,
            alphas: setup.alphas.clone(),
            weights: weights.entries().iter().map(|(k, &v)| (k.clone(), v)).collect(),
            weights_digest: setup.weights_digest.clone(),
            thresholds: setup.thresholds,
            thresholds_are_defaults: setup.thresholds == Thresholds::default(),
        },
        frames: n_frames,
        metrics: Metrics {
            mae_db: mae,
            fva: fva_base,
            fva_rev,
            dcs: dcs_score,
            dcs_sign: sign_score,
        },
        dcs: DcsSection {
            result: dcs_result,
            dropped_alphas: dropped,
            unavailable_reason: unavailable,
        },
        reversed_reference_discrepancy_hz: discrepancy,
        label: label.to_string(),
        physically_consistent: label.physically_consistent(),
        warnings,
        model_output,
    };
    Ok(AuditOutcome {
        report,
        baseline: baseline.spectrogram,
        pred_centroid,
        ref_centroid,
        rev_pred_centroid: rev_pred,
        rev_ref_centroid: rev_ref,
    })
}
