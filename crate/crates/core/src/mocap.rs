//! Motion-capture sequences, radar geometry and BSA marker weights.
//!
//! Sequences travel as MOCAP-CSV v1:
//!
//! ```text
//! #MOCAP v1,rate=250,units=m
//! t,HEAD_x,HEAD_y,HEAD_z,...
//! 0,0.1,0.2,1.6,...
//! ```
//!
//! The first line may also carry `markers=<M>`, which is checked against the
//! column header.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Marker-name prefix identifying markers mounted on the radar housing.
pub const RADAR_PREFIX: &str = "RADAR";

/// Shipped rule-of-nines weight table for the synthetic walker layout.
pub const DEFAULT_WEIGHTS: &str = include_str!("../config/bsa_rule_of_nines.cfg");

/// Time-indexed 3D marker trajectories sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MoCapSequence {
    rate_hz: f64,
    t0: f64,
    markers: Vec<String>,
    // frame-major: positions[t * M + m]
    positions: Vec<Vec3>,
}

impl MoCapSequence {
    pub fn new(rate_hz: f64, t0: f64, markers: Vec<String>, positions: Vec<Vec3>) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {rate_hz}")));
        }
        if !t0.is_finite() {
            return Err(Error::Config("start time must be finite".into()));
        }
        if markers.is_empty() {
            return Err(Error::Config("sequence has no markers".into()));
        }
        let mut seen = HashSet::new();
        for name in &markers {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate marker name '{name}'")));
            }
        }
        if !positions.len().is_multiple_of(markers.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{} positions do not divide into {} markers",
                positions.len(),
                markers.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Config(format!(
                "non-finite coordinate for marker '{}' at sample {}",
                markers[i % markers.len()],
                i / markers.len()
            )));
        }
        Ok(Self {
            rate_hz,
            t0,
            markers,
            positions,
        })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn markers(&self) -> &[String] {
        &self.markers
    }

    /// Number of time samples T.
    pub fn len(&self) -> usize {
        self.positions.len() / self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn marker_count(&self) -> usize {
        self.markers.len()
    }

    /// Time spanned from the first to the last sample (s).
    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 / self.rate_hz
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.markers.iter().position(|m| m == name)
    }

    pub fn position(&self, sample: usize, marker: usize) -> Vec3 {
        self.positions[sample * self.markers.len() + marker]
    }

    /// All marker positions of one frame.
    pub fn frame(&self, sample: usize) -> &[Vec3] {
        let m = self.markers.len();
        &self.positions[sample * m..(sample + 1) * m]
    }

    pub fn trajectory(&self, marker: usize) -> impl Iterator<Item = Vec3> + '_ {
        self.positions
            .iter()
            .skip(marker)
            .step_by(self.markers.len())
            .copied()
    }

    /// Keep only the markers at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.markers.len()) {
            return Err(Error::Config(format!("marker index {bad} out of range")));
        }
        let markers = indices.iter().map(|&i| self.markers[i].clone()).collect();
        let positions = (0..self.len())
            .flat_map(|t| indices.iter().map(move |&m| (t, m)))
            .map(|(t, m)| self.position(t, m))
            .collect();
        Self::new(self.rate_hz, self.t0, markers, positions)
    }

    /// Drop every marker whose name starts with `prefix` (e.g. radar housing markers).
    pub fn without_prefix(&self, prefix: &str) -> Result<Self> {
        let keep: Vec<usize> = (0..self.markers.len())
            .filter(|&i| !self.markers[i].starts_with(prefix))
            .collect();
        self.select(&keep)
    }

    /// Same markers with the time axis reversed.
    pub fn time_reversed(&self) -> Self {
        let m = self.markers.len();
        let positions = (0..self.len())
            .rev()
            .flat_map(|t| self.positions[t * m..(t + 1) * m].iter().copied())
            .collect();
        Self {
            rate_hz: self.rate_hz,
            t0: self.t0,
            markers: self.markers.clone(),
            positions,
        }
    }

    /// Per-coordinate linear interpolation onto a `target_hz` grid spanning
    /// the same closed time interval.
    pub fn resample(&self, target_hz: f64) -> Result<Self> {
        if !(target_hz.is_finite() && target_hz > 0.0) {
            return Err(Error::Config(format!("target rate must be positive, got {target_hz}")));
        }
        let len = self.len();
        if len < 2 {
            return Err(Error::InsufficientData(format!(
                "resampling needs at least 2 samples, got {len}"
            )));
        }
        let m = self.markers.len();
        let out_len = (self.duration() * target_hz + 1e-9).floor() as usize + 1;
        let mut positions = Vec::with_capacity(out_len * m);
        for i in 0..out_len {
            let src = i as f64 * self.rate_hz / target_hz;
            let j = (src.floor() as usize).min(len - 2);
            let frac = src - j as f64;
            for k in 0..m {
                let a = self.position(j, k);
                let b = self.position(j + 1, k);
                positions.push([
                    a[0] + frac * (b[0] - a[0]),
                    a[1] + frac * (b[1] - a[1]),
                    a[2] + frac * (b[2] - a[2]),
                ]);
            }
        }
        Self::new(target_hz, self.t0, self.markers.clone(), positions)
    }

    /// Mean position over all samples of all markers whose name starts with `prefix`.
    pub fn radar_position(&self, prefix: &str) -> Result<Vec3> {
        let matching: Vec<usize> = (0..self.markers.len())
            .filter(|&i| self.markers[i].starts_with(prefix))
            .collect();
        if matching.is_empty() {
            return Err(Error::Config(format!(
                "no marker name starts with '{prefix}'; supply radar_pos in the radar config"
            )));
        }
        let mut sum = [0.0; 3];
        for t in 0..self.len() {
            for &m in &matching {
                let p = self.position(t, m);
                for c in 0..3 {
                    sum[c] += p[c];
                }
            }
        }
        let count = (self.len() * matching.len()) as f64;
        Ok(sum.map(|s| s / count))
    }

    /// Serialize as MOCAP-CSV v1. Values use shortest round-trip formatting,
    /// so parsing the output reproduces the sequence exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#MOCAP v1,rate={},units=m", self.rate_hz);
        out.push('t');
        for name in &self.markers {
            let _ = write!(out, ",{name}_x,{name}_y,{name}_z");
        }
        out.push('\n');
        for t in 0..self.len() {
            let _ = write!(out, "{}", self.t0 + t as f64 / self.rate_hz);
            for p in self.frame(t) {
                let _ = write!(out, ",{},{},{}", p[0], p[1], p[2]);
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a MOCAP-CSV v1 document.
pub fn parse_mocap(text: &str) -> Result<MoCapSequence> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty input"))?;
    let mut fields = magic.split(',');
    if fields.next().map(str::trim) != Some("#MOCAP v1") {
        return Err(Error::parse(1, "expected '#MOCAP v1' header"));
    }
    let mut rate = None;
    let mut units = None;
    let mut declared_markers = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("malformed header field '{field}'")))?;
        match key.trim() {
            "rate" => {
                let r: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(1, format!("invalid rate '{value}'")))?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::parse(1, format!("rate must be positive, got {r}")));
                }
                rate = Some(r);
            }
            "units" => units = Some(value.trim().to_string()),
            "markers" => {
                declared_markers = Some(value.trim().parse::<usize>().map_err(|_| {
                    Error::parse(1, format!("invalid marker count '{value}'"))
                })?)
            }
            other => return Err(Error::parse(1, format!("unknown header key '{other}'"))),
        }
    }
    let rate = rate.ok_or_else(|| Error::parse(1, "header is missing rate="))?;
    match units.as_deref() {
        Some("m") => {}
        Some(u) => return Err(Error::parse(1, format!("unsupported units '{u}', expected 'm'"))),
        None => return Err(Error::parse(1, "header is missing units=")),
    }

    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing column header"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"t") {
        return Err(Error::parse(header_line, "first column must be 't'"));
    }
    let coords = &columns[1..];
    if coords.is_empty() || !coords.len().is_multiple_of(3) {
        return Err(Error::parse(
            header_line,
            format!("expected marker triplets after 't', got {} columns", coords.len()),
        ));
    }
    let mut markers = Vec::with_capacity(coords.len() / 3);
    let mut seen = HashSet::new();
    for triplet in coords.chunks(3) {
        let name = triplet[0].strip_suffix("_x").ok_or_else(|| {
            Error::parse(header_line, format!("column '{}' should end in _x", triplet[0]))
        })?;
        if name.is_empty()
            || triplet[1] != format!("{name}_y")
            || triplet[2] != format!("{name}_z")
        {
            return Err(Error::parse(
                header_line,
                format!("malformed triplet {}", triplet.join(",")),
            ));
        }
        if !seen.insert(name) {
            return Err(Error::parse(header_line, format!("duplicate marker name '{name}'")));
        }
        markers.push(name.to_string());
    }
    if let Some(n) = declared_markers {
        if n != markers.len() {
            return Err(Error::parse(
                header_line,
                format!("header declares {n} markers but columns name {}", markers.len()),
            ));
        }
    }

    let width = columns.len();
    let mut positions = Vec::new();
    let mut t0 = None;
    let mut last_t = f64::NEG_INFINITY;
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::parse(
                line_no,
                format!("expected {width} columns, found {}", cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(width);
        for cell in cells {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("non-numeric cell '{}'", cell.trim())))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value '{}'", cell.trim())));
            }
            values.push(v);
        }
        let t = values[0];
        if t <= last_t {
            return Err(Error::parse(line_no, "time column must be strictly increasing"));
        }
        last_t = t;
        t0.get_or_insert(t);
        positions.extend(values[1..].chunks(3).map(|c| [c[0], c[1], c[2]]));
    }
    if positions.is_empty() {
        return Err(Error::InsufficientData("MOCAP-CSV contains no samples".into()));
    }
    MoCapSequence::new(rate, t0.unwrap_or(0.0), markers, positions)
}

/// Radar carrier, sample rate and position in the MoCap frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarConfig {
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    pub fs_hz: f64,
    pub radar_pos: Vec3,
}

impl RadarConfig {
    pub fn new(carrier_hz: f64, fs_hz: f64, radar_pos: Vec3) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::Config(format!("carrier_hz must be positive, got {carrier_hz}")));
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::Config(format!("fs_hz must be positive, got {fs_hz}")));
        }
        if radar_pos.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("radar_pos must be finite".into()));
        }
        Ok(Self {
            carrier_hz,
            wavelength_m: SPEED_OF_LIGHT / carrier_hz,
            fs_hz,
            radar_pos,
        })
    }
}

/// On-disk radar configuration (TOML). `radar_pos` may be omitted, in which
/// case it is derived from the radar housing markers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfigFile {
    pub carrier_hz: f64,
    pub fs_hz: f64,
    #[serde(default)]
    pub radar_pos: Option<Vec3>,
}

impl Default for RadarConfigFile {
    fn default() -> Self {
        Self {
            carrier_hz: 5.8e9,
            fs_hz: 256.0,
            radar_pos: None,
        }
    }
}

impl RadarConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("radar config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        let mut out = format!("carrier_hz = {:?}\nfs_hz = {:?}\n", self.carrier_hz, self.fs_hz);
        if let Some(p) = self.radar_pos {
            let _ = writeln!(out, "radar_pos = [{:?}, {:?}, {:?}]", p[0], p[1], p[2]);
        }
        out
    }

    /// Resolve to a [`RadarConfig`], falling back to the mean radar-marker
    /// position in `seq` when no explicit position is given.
    pub fn resolve(&self, seq: &MoCapSequence) -> Result<RadarConfig> {
        let pos = match self.radar_pos {
            Some(p) => p,
            None => seq.radar_position(RADAR_PREFIX)?,
        };
        RadarConfig::new(self.carrier_hz, self.fs_hz, pos)
    }
}

/// Per-marker nonnegative RCS-proxy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    entries: BTreeMap<String, f64>,
    /// Markers that received no weight because the config does not map them.
    pub unmapped: Vec<String>,
}

impl WeightTable {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let entries: BTreeMap<String, f64> =
            entries.into_iter().map(|(k, v)| (k.into(), v)).collect();
        if let Some((name, w)) = entries.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("weight for '{name}' must be >= 0, got {w}")));
        }
        if !entries.values().any(|&w| w > 0.0) {
            return Err(Error::Config("weight table needs at least one positive weight".into()));
        }
        Ok(Self {
            entries,
            unmapped: Vec::new(),
        })
    }

    /// Raw weight of a marker; unknown markers weigh 0.
    pub fn weight(&self, marker: &str) -> f64 {
        self.entries.get(marker).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn normalized(&self) -> BTreeMap<String, f64> {
        let total = self.total();
        self.entries
            .iter()
            .map(|(k, &w)| (k.clone(), w / total))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_entries(self.entries.iter().map(|(k, &w)| (k.clone(), w * factor)))
    }
}

/// Build marker weights from a segment/marker config for the given markers.
///
/// Each segment's percentage is split evenly across the listed markers that
/// map to it. Listed markers the config does not mention weigh 0 and are
/// reported in [`WeightTable::unmapped`].
pub fn load_weights(text: &str, markers: &[String]) -> Result<WeightTable> {
    let mut segments: BTreeMap<String, f64> = BTreeMap::new();
    let mut assignment: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.as_slice() {
            ["segment", name, pct] => {
                let pct: f64 = pct
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("invalid percentage '{pct}'")))?;
                if !(pct.is_finite() && pct >= 0.0) {
                    return Err(Error::Config(format!(
                        "line {line_no}: segment '{name}' has negative percentage {pct}"
                    )));
                }
                if segments.insert(name.to_string(), pct).is_some() {
                    return Err(Error::Config(format!(
                        "line {line_no}: segment '{name}' defined twice"
                    )));
                }
            }
            ["marker", marker, segment] => {
                assignment.push((line_no, marker.to_string(), segment.to_string()))
            }
            _ => {
                return Err(Error::parse(
                    line_no,
                    "expected 'segment,<name>,<percent>' or 'marker,<name>,<segment>'",
                ))
            }
        }
    }

    let mut marker_segment: BTreeMap<&str, &str> = BTreeMap::new();
    for (line_no, marker, segment) in &assignment {
        if !segments.contains_key(segment) {
            return Err(Error::Config(format!(
                "line {line_no}: marker '{marker}' references unknown segment '{segment}'"
            )));
        }
        if marker_segment.insert(marker, segment).is_some() {
            return Err(Error::Config(format!(
                "line {line_no}: marker '{marker}' mapped twice"
            )));
        }
    }

    let mut per_segment: BTreeMap<&str, usize> = BTreeMap::new();
    for m in markers {
        if let Some(seg) = marker_segment.get(m.as_str()) {
            *per_segment.entry(seg).or_default() += 1;
        }
    }

    let mut unmapped = Vec::new();
    let mut entries = Vec::with_capacity(markers.len());
    for m in markers {
        match marker_segment.get(m.as_str()) {
            Some(seg) => entries.push((m.clone(), segments[*seg] / per_segment[seg] as f64)),
            None => {
                unmapped.push(m.clone());
                entries.push((m.clone(), 0.0));
            }
        }
    }
    let mut table = WeightTable::from_entries(entries)?;
    table.unmapped = unmapped;
    Ok(table)
}
