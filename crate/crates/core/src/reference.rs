//! RCS-aware physics reference: BSA-weighted Doppler centroid derived from
//! MoCap kinematics, averaged onto the STFT frame grid.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::{doppler_frequency, radial_velocity, range_series, ScalarSeries};
use crate::mocap::{MoCapSequence, RadarConfig, WeightTable};
use crate::spectral::{frame_average, CentroidSeries};

/// Per-sample weighted Doppler frequency `Σ (w_m / Σ w) f_m(t)`.
///
/// Zero-weight markers are skipped before any geometry is computed.
pub fn reference_doppler(
    seq: &MoCapSequence,
    cfg: &RadarConfig,
    weights: &WeightTable,
) -> Result<ScalarSeries> {
    if (seq.rate_hz() - cfg.fs_hz).abs() > 1e-9 * cfg.fs_hz {
        return Err(Error::Config(format!(
            "sequence is sampled at {} Hz but the radar runs at {} Hz; resample first",
            seq.rate_hz(),
            cfg.fs_hz
        )));
    }
    let active: Vec<(usize, f64)> = seq
        .markers()
        .iter()
        .enumerate()
        .map(|(i, name)| (i, weights.weight(name)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    let total: f64 = active.iter().map(|&(_, w)| w).sum();
    if active.is_empty() || total <= 0.0 {
        return Err(Error::Config(
            "no marker in the sequence has a positive weight".into(),
        ));
    }

    let per_marker = active
        .par_iter()
        .map(|&(m, _)| {
            let r = range_series(seq, m, cfg.radar_pos)?;
            doppler_frequency(&radial_velocity(&r)?, cfg.wavelength_m)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut agg = vec![0.0; seq.len()];
    for (series, &(_, w)) in per_marker.iter().zip(&active) {
        let share = w / total;
        for (a, f) in agg.iter_mut().zip(&series.values) {
            *a += share * f;
        }
    }
    ScalarSeries::new(seq.rate_hz(), agg)
}

/// Frame-synchronized reference centroid trajectory.
pub fn reference_centroid(
    seq: &MoCapSequence,
    cfg: &RadarConfig,
    weights: &WeightTable,
    win_len: usize,
    hop: usize,
) -> Result<CentroidSeries> {
    frame_average(&reference_doppler(seq, cfg, weights)?, win_len, hop)
}

/// Centroid trace as `frame,time_s,centroid_hz`; `time_s` is the window center.
pub fn centroid_csv(series: &CentroidSeries) -> String {
    let mut out = String::from("frame,time_s,centroid_hz\n");
    for (n, v) in series.values.iter().enumerate() {
        let t = ((n * series.hop) as f64 + series.win_len as f64 / 2.0) / series.fs_hz;
        let _ = writeln!(out, "{n},{t:.9},{v:.9}");
    }
    out
}

/// Read the centroid column of a `frame,time_s,centroid_hz` trace.
pub fn parse_centroid_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "frame,time_s,centroid_hz")) => {}
        _ => return Err(Error::parse(1, "expected header 'frame,time_s,centroid_hz'")),
    }
    let mut values = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(Error::parse(line_no, format!("expected 3 columns, found {}", cells.len())));
        }
        let frame: usize = cells[0]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid frame index '{}'", cells[0])))?;
        if frame != values.len() {
            return Err(Error::parse(line_no, format!("expected frame {}, found {frame}", values.len())));
        }
        let v: f64 = cells[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("non-numeric centroid '{}'", cells[2])))?;
        if !v.is_finite() {
            return Err(Error::parse(line_no, "non-finite centroid"));
        }
        values.push(v);
    }
    Ok(values)
}
