//! STFT spectrograms, Doppler frequency axis, power-weighted centroids,
//! frame-synchronized averaging and MAE in dB.
//!
//! Spectrogram cells hold power in dB, `10 log10(max(|X|^2, 1e-12))`, with
//! bin `k` at `(k - F/2) * fs / F`. Spectrograms are exchanged as SPECTRO-CSV v1:
//!
//! ```text
//! #SPECTRO v1,frames=<N>,bins=<F>,fs=<fs>,win=<L>,hop=<H>,scale=power_db,floor_db=-120
//! <F comma-separated dB values, bin 0 = -fs/2>   (N lines)
//! ```

use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::ScalarSeries;

/// Power floor applied before taking the logarithm.
pub const FLOOR_POWER: f64 = 1e-12;
pub const FLOOR_DB: f64 = -120.0;

/// STFT framing: sample rate, window length L, hop H and FFT size F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Framing {
    pub fs_hz: f64,
    pub win_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for Framing {
    fn default() -> Self {
        Self {
            fs_hz: 256.0,
            win_len: 256,
            hop: 32,
            fft_size: 256,
        }
    }
}

impl Framing {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::Config(format!("fs must be positive, got {}", self.fs_hz)));
        }
        if self.win_len == 0 || self.hop == 0 {
            return Err(Error::Config("window length and hop must be positive".into()));
        }
        if self.fft_size < self.win_len {
            return Err(Error::Config(format!(
                "FFT size {} is smaller than the window length {}",
                self.fft_size, self.win_len
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(Error::Config(format!("FFT size must be even, got {}", self.fft_size)));
        }
        Ok(())
    }

    /// `floor((T - L) / H) + 1`, or `None` when the signal is shorter than a window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        frame_count(len, self.win_len, self.hop)
    }

    /// Frame count, or an error spelling out the framing arithmetic.
    pub fn require_frames(&self, len: usize) -> Result<usize> {
        self.frame_count(len).ok_or_else(|| {
            Error::InsufficientData(format!(
                "signal of {len} samples is shorter than one window (L = {}); \
                 need T >= L to get N = floor((T - L) / H) + 1 >= 1 frames with H = {}",
                self.win_len, self.hop
            ))
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.fs_hz / self.fft_size as f64
    }

    /// Center time (s) of frame `n`, relative to the first sample.
    pub fn frame_time(&self, n: usize) -> f64 {
        (n * self.hop) as f64 / self.fs_hz + self.win_len as f64 / (2.0 * self.fs_hz)
    }
}

pub fn frame_count(len: usize, win_len: usize, hop: usize) -> Option<usize> {
    if hop == 0 || win_len == 0 || len < win_len {
        None
    } else {
        Some((len - win_len) / hop + 1)
    }
}

/// Doppler bin centers `(k - F/2) * fs / F` for `k = 0..F`.
pub fn frequency_axis(fft_size: usize, fs_hz: f64) -> Result<Vec<f64>> {
    if fft_size == 0 || !fft_size.is_multiple_of(2) {
        return Err(Error::Config(format!("FFT size must be even and positive, got {fft_size}")));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::Config(format!("fs must be positive, got {fs_hz}")));
    }
    let df = fs_hz / fft_size as f64;
    let half = (fft_size / 2) as f64;
    Ok((0..fft_size).map(|k| (k as f64 - half) * df).collect())
}

/// N×F matrix of power-dB values.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    framing: Framing,
    n_frames: usize,
    data: Vec<f64>,
}

impl Spectrogram {
    pub fn from_frames(framing: Framing, frames: Vec<Vec<f64>>) -> Result<Self> {
        framing.validate()?;
        let bins = framing.fft_size;
        let n_frames = frames.len();
        if n_frames == 0 {
            return Err(Error::InsufficientData("spectrogram has no frames".into()));
        }
        let mut data = Vec::with_capacity(n_frames * bins);
        for (n, frame) in frames.into_iter().enumerate() {
            if frame.len() != bins {
                return Err(Error::ShapeMismatch(format!(
                    "frame {n} has {} bins, expected {bins}",
                    frame.len()
                )));
            }
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("frame {n} contains non-finite values")));
            }
            data.extend(frame);
        }
        Ok(Self {
            framing,
            n_frames,
            data,
        })
    }

    pub fn framing(&self) -> Framing {
        self.framing
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn bins(&self) -> usize {
        self.framing.fft_size
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        let f = self.bins();
        &self.data[n * f..(n + 1) * f]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.bins())
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_csv(&self) -> String {
        let fr = self.framing;
        let mut out = format!(
            "#SPECTRO v1,frames={},bins={},fs={},win={},hop={},scale=power_db,floor_db=-120\n",
            self.n_frames, fr.fft_size, fr.fs_hz, fr.win_len, fr.hop
        );
        for frame in self.frames() {
            for (k, v) in frame.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:.9}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a SPECTRO-CSV v1 document.
pub fn parse_spectro(text: &str) -> Result<Spectrogram> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let mut fields = header.split(',');
    if fields.next().map(str::trim) != Some("#SPECTRO v1") {
        return Err(Error::parse(1, "expected '#SPECTRO v1' header"));
    }
    let (mut frames, mut bins, mut fs, mut win, mut hop) = (None, None, None, None, None);
    let mut scale = None;
    let mut floor = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field '{field}'")))?;
        let value = value.trim();
        let bad = || Error::parse(1, format!("invalid value '{value}' for {}", key.trim()));
        match key.trim() {
            "frames" => frames = Some(value.parse::<usize>().map_err(|_| bad())?),
            "bins" => bins = Some(value.parse::<usize>().map_err(|_| bad())?),
            "fs" => fs = Some(value.parse::<f64>().map_err(|_| bad())?),
            "win" => win = Some(value.parse::<usize>().map_err(|_| bad())?),
            "hop" => hop = Some(value.parse::<usize>().map_err(|_| bad())?),
            "scale" => scale = Some(value.to_string()),
            "floor_db" => floor = Some(value.parse::<f64>().map_err(|_| bad())?),
            other => return Err(Error::parse(1, format!("unknown header key '{other}'"))),
        }
    }
    let missing = |k: &str| Error::parse(1, format!("header is missing {k}="));
    let framing = Framing {
        fs_hz: fs.ok_or_else(|| missing("fs"))?,
        win_len: win.ok_or_else(|| missing("win"))?,
        hop: hop.ok_or_else(|| missing("hop"))?,
        fft_size: bins.ok_or_else(|| missing("bins"))?,
    };
    let n_frames = frames.ok_or_else(|| missing("frames"))?;
    if scale.as_deref() != Some("power_db") {
        return Err(Error::parse(1, "scale must be power_db"));
    }
    if floor != Some(FLOOR_DB) {
        return Err(Error::parse(1, "floor_db must be -120"));
    }
    framing
        .validate()
        .map_err(|e| Error::parse(1, e.to_string()))?;

    let mut rows = Vec::with_capacity(n_frames);
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                let v: f64 = c
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("non-numeric cell '{}'", c.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(line_no, format!("non-finite cell '{}'", c.trim())))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != framing.fft_size {
            return Err(Error::parse(
                line_no,
                format!("expected {} bins, found {}", framing.fft_size, row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != n_frames {
        return Err(Error::ShapeMismatch(format!(
            "header declares {n_frames} frames but {} rows are present",
            rows.len()
        )));
    }
    Spectrogram::from_frames(framing, rows)
}

/// Per-window DC removal, periodic Hann window, zero-padded FFT, centered
/// Doppler axis and power in dB.
pub fn stft_spectrogram(iq: &[Complex64], framing: Framing) -> Result<Spectrogram> {
    framing.validate()?;
    let n_frames = framing.require_frames(iq.len())?;
    let l = framing.win_len;
    let f = framing.fft_size;
    let window: Vec<f64> = (0..l)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / l as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(f);
    let mut buf = vec![Complex64::new(0.0, 0.0); f];
    let mut frames = Vec::with_capacity(n_frames);
    for n in 0..n_frames {
        let seg = &iq[n * framing.hop..n * framing.hop + l];
        let mean = seg.iter().sum::<Complex64>() / l as f64;
        buf.fill(Complex64::new(0.0, 0.0));
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = (x - mean) * w;
        }
        fft.process(&mut buf);
        let half = f / 2;
        frames.push(
            (0..f)
                .map(|k| {
                    let p = buf[(k + half) % f].norm_sqr();
                    10.0 * p.max(FLOOR_POWER).log10()
                })
                .collect(),
        );
    }
    Spectrogram::from_frames(framing, frames)
}

/// Centroid trajectory (Hz) tied to the framing that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSeries {
    pub values: Vec<f64>,
    pub fs_hz: f64,
    pub win_len: usize,
    pub hop: usize,
}

impl CentroidSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_framing(&self, other: &Self) -> bool {
        self.fs_hz == other.fs_hz && self.win_len == other.win_len && self.hop == other.hop
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

/// Power-weighted mean Doppler frequency of each spectrogram frame.
pub fn centroid_trajectory(spec: &Spectrogram) -> Result<CentroidSeries> {
    let fr = spec.framing();
    let axis = frequency_axis(fr.fft_size, fr.fs_hz)?;
    let mut values = Vec::with_capacity(spec.n_frames());
    for (n, frame) in spec.frames().enumerate() {
        let (mut num, mut den) = (0.0, 0.0);
        for (&s, &fk) in frame.iter().zip(&axis) {
            let p = 10f64.powf(s / 10.0);
            num += p * fk;
            den += p;
        }
        if !(den > 0.0 && den.is_finite()) {
            return Err(Error::InsufficientData(format!("frame {n} has no usable power")));
        }
        values.push(num / den);
    }
    Ok(CentroidSeries {
        values,
        fs_hz: fr.fs_hz,
        win_len: fr.win_len,
        hop: fr.hop,
    })
}

/// Mean of a per-sample series over each STFT window.
pub fn frame_average(series: &ScalarSeries, win_len: usize, hop: usize) -> Result<CentroidSeries> {
    if win_len == 0 || hop == 0 {
        return Err(Error::Config("window length and hop must be positive".into()));
    }
    let n_frames = frame_count(series.len(), win_len, hop).ok_or_else(|| {
        Error::InsufficientData(format!(
            "series of {} samples is shorter than the window length {win_len}",
            series.len()
        ))
    })?;
    let values = (0..n_frames)
        .map(|n| series.values[n * hop..n * hop + win_len].iter().sum::<f64>() / win_len as f64)
        .collect();
    Ok(CentroidSeries {
        values,
        fs_hz: series.rate_hz,
        win_len,
        hop,
    })
}

/// Mean absolute difference in dB over all cells.
pub fn mae_db(a: &Spectrogram, b: &Spectrogram) -> Result<f64> {
    if a.framing() != b.framing() || a.n_frames() != b.n_frames() {
        return Err(Error::ShapeMismatch(format!(
            "spectrograms differ: {}x{} {:?} vs {}x{} {:?}",
            a.n_frames(),
            a.bins(),
            a.framing(),
            b.n_frames(),
            b.bins(),
            b.framing()
        )));
    }
    let total: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / a.values().len() as f64)
}
