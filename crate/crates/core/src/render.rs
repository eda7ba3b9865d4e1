//! Grayscale spectrogram images (binary PGM).

use crate::error::{Error, Result};
use crate::spectral::Spectrogram;

/// Render as an 8-bit binary PGM: one column per frame, one row per bin with
/// the highest frequency on top. dB values map linearly onto [0, 255] across
/// `range_db` and are clamped outside it.
pub fn render_spectrogram(spec: &Spectrogram, range_db: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = range_db;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("invalid dB range ({lo}, {hi})")));
    }
    let (width, height) = (spec.n_frames(), spec.bins());
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for row in 0..height {
        let bin = height - 1 - row;
        for n in 0..width {
            let v = spec.frame(n)[bin];
            let level = ((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0;
            out.push(level.round() as u8);
        }
    }
    Ok(out)
}
