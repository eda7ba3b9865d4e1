//! Synthetic walker, coherent point-scatterer radar oracle and negative-control
//! spectrogram models.
//!
//! Sign convention: each scatterer contributes `exp(+j 4π r(t) / λ)`, so a
//! receding scatterer (dr/dt > 0) shows up at a positive Doppler frequency
//! `2 (dr/dt) / λ`. Most radar front-ends use the opposite sign; here the
//! oracle follows the same convention as the kinematic reference.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::range_series;
use crate::mocap::{MoCapSequence, RadarConfig, RadarConfigFile, Vec3, WeightTable};
use crate::spectral::{stft_spectrogram, Framing, Spectrogram};

/// Radar location used by the synthetic scene.
pub const SIM_RADAR_POS: Vec3 = [0.0, 0.0, 1.0];

/// Lateral distance (m) at which the walker passes the radar, reached halfway
/// through the trial.
pub const PASS_DISTANCE_M: f64 = 2.0;

/// Parameters of the synthetic walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkerParams {
    pub speed_mps: f64,
    pub heading_rad: f64,
    pub stride_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub limb_amp_m: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            speed_mps: 1.2,
            heading_rad: 0.0,
            stride_hz: 1.8,
            duration_s: 60.0,
            seed: 42,
            limb_amp_m: 0.15,
        }
    }
}

impl WalkerParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.speed_mps,
            self.heading_rad,
            self.stride_hz,
            self.duration_s,
            self.limb_amp_m,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("walker parameters must be finite".into()));
        }
        if self.duration_s <= 0.0 {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration_s)));
        }
        if self.stride_hz <= 0.0 {
            return Err(Error::Config(format!("stride frequency must be positive, got {}", self.stride_hz)));
        }
        if self.limb_amp_m < 0.0 {
            return Err(Error::Config(format!("limb amplitude must be >= 0, got {}", self.limb_amp_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NoiseParams {
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Copy)]
enum Limb {
    Rigid,
    // phase offset added to the gait phase
    Swing(f64),
}

struct MarkerLayout {
    name: &'static str,
    lateral: f64,
    forward: f64,
    height: f64,
    limb: Limb,
}

const fn marker(name: &'static str, lateral: f64, forward: f64, height: f64, limb: Limb) -> MarkerLayout {
    MarkerLayout {
        name,
        lateral,
        forward,
        height,
        limb,
    }
}

// lateral > 0 is the walker's left
const WALKER_LAYOUT: [MarkerLayout; 10] = [
    marker("HEAD", 0.0, 0.0, 1.6, Limb::Rigid),
    marker("C7", 0.0, -0.08, 1.45, Limb::Rigid),
    marker("LSHO", 0.18, 0.0, 1.4, Limb::Rigid),
    marker("RSHO", -0.18, 0.0, 1.4, Limb::Rigid),
    marker("STRN", 0.0, 0.1, 1.25, Limb::Rigid),
    marker("SACR", 0.0, -0.1, 1.0, Limb::Rigid),
    marker("LWRI", 0.25, 0.0, 0.85, Limb::Swing(PI)),
    marker("RWRI", -0.25, 0.0, 0.85, Limb::Swing(0.0)),
    marker("LANK", 0.1, 0.0, 0.1, Limb::Swing(0.0)),
    marker("RANK", -0.1, 0.0, 0.1, Limb::Swing(PI)),
];

/// Deterministic walker: a torso cluster translating along `heading` past the
/// radar, with wrists and ankles swinging along the heading at the stride
/// frequency (arms antiphase to legs, left antiphase to right). The seed only
/// sets the initial gait phase.
pub fn synth_walker(params: &WalkerParams, rate_hz: f64) -> Result<MoCapSequence> {
    params.validate()?;
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::Config(format!("rate must be positive, got {rate_hz}")));
    }
    let phase0 = ChaCha8Rng::seed_from_u64(params.seed).random_range(0.0..2.0 * PI);
    let heading = [params.heading_rad.cos(), params.heading_rad.sin()];
    let left = [-heading[1], heading[0]];
    let pass = [
        SIM_RADAR_POS[0] + PASS_DISTANCE_M * left[0],
        SIM_RADAR_POS[1] + PASS_DISTANCE_M * left[1],
    ];
    let len = (params.duration_s * rate_hz + 1e-9).floor() as usize + 1;
    let mut positions = Vec::with_capacity(len * WALKER_LAYOUT.len());
    for i in 0..len {
        let t = i as f64 / rate_hz;
        let travel = params.speed_mps * (t - params.duration_s / 2.0);
        let gait = 2.0 * PI * params.stride_hz * t + phase0;
        for mk in &WALKER_LAYOUT {
            let swing = match mk.limb {
                Limb::Rigid => 0.0,
                Limb::Swing(offset) => params.limb_amp_m * (gait + offset).sin(),
            };
            let fwd = travel + mk.forward + swing;
            positions.push([
                pass[0] + fwd * heading[0] + mk.lateral * left[0],
                pass[1] + fwd * heading[1] + mk.lateral * left[1],
                mk.height,
            ]);
        }
    }
    let names = WALKER_LAYOUT.iter().map(|m| m.name.to_string()).collect();
    MoCapSequence::new(rate_hz, 0.0, names, positions)
}

/// Radar configuration matching the synthetic scene.
pub fn sim_radar_config() -> RadarConfigFile {
    RadarConfigFile {
        radar_pos: Some(SIM_RADAR_POS),
        ..RadarConfigFile::default()
    }
}

/// Append a static `RADAR1` marker at the simulated radar location.
pub fn with_radar_marker(seq: &MoCapSequence) -> Result<MoCapSequence> {
    let mut markers = seq.markers().to_vec();
    markers.push("RADAR1".into());
    let positions = (0..seq.len())
        .flat_map(|t| seq.frame(t).iter().copied().chain(std::iter::once(SIM_RADAR_POS)))
        .collect();
    MoCapSequence::new(seq.rate_hz(), seq.t0(), markers, positions)
}

/// Coherent sum of weighted point scatterers, `Σ (w_m / Σw) exp(+j 4π r_m(t) / λ)`,
/// plus optional seeded circular white noise at the requested SNR.
pub fn simulate_iq(
    seq: &MoCapSequence,
    cfg: &RadarConfig,
    weights: &WeightTable,
    noise: &NoiseParams,
) -> Result<Vec<Complex64>> {
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
    if active.is_empty() {
        return Err(Error::Config("no marker in the sequence has a positive weight".into()));
    }

    let k = 4.0 * PI / cfg.wavelength_m;
    let mut iq = vec![Complex64::new(0.0, 0.0); seq.len()];
    for &(m, w) in &active {
        let amp = w / total;
        let r = range_series(seq, m, cfg.radar_pos)?;
        for (s, range) in iq.iter_mut().zip(&r.values) {
            *s += Complex64::from_polar(amp, k * range);
        }
    }

    if let Some(snr_db) = noise.snr_db {
        if !snr_db.is_finite() {
            return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
        }
        let signal_power = iq.iter().map(|s| s.norm_sqr()).sum::<f64>() / iq.len() as f64;
        let sigma = (signal_power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for s in iq.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(iq)
}

/// Oracle spectrogram: simulated I/Q through the STFT pipeline.
pub fn oracle_spectrogram(
    seq: &MoCapSequence,
    cfg: &RadarConfig,
    weights: &WeightTable,
    noise: &NoiseParams,
    framing: Framing,
) -> Result<Spectrogram> {
    stft_spectrogram(&simulate_iq(seq, cfg, weights, noise)?, framing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    /// Every frame replaced by the mean frame.
    Constant,
    /// Frames permuted by a seeded permutation.
    Shuffle,
    /// Frequency axis reversed in every frame.
    Flip,
}

/// Physics-violating transformations of a ground-truth spectrogram.
pub fn control_model(kind: ControlKind, truth: &Spectrogram, seed: u64) -> Spectrogram {
    let frames: Vec<Vec<f64>> = match kind {
        ControlKind::Constant => {
            let mean = mean_frame(truth);
            vec![mean; truth.n_frames()]
        }
        ControlKind::Shuffle => {
            let mut order: Vec<usize> = (0..truth.n_frames()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order.iter().map(|&n| truth.frame(n).to_vec()).collect()
        }
        ControlKind::Flip => truth
            .frames()
            .map(|f| f.iter().rev().copied().collect())
            .collect(),
    };
    Spectrogram::from_frames(truth.framing(), frames).expect("control keeps the truth's shape")
}

/// Per-bin mean over all frames (dB).
pub fn mean_frame(spec: &Spectrogram) -> Vec<f64> {
    let mut mean = vec![0.0; spec.bins()];
    for frame in spec.frames() {
        for (m, v) in mean.iter_mut().zip(frame) {
            *m += v;
        }
    }
    let n = spec.n_frames() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::radial_velocity;
    use crate::mocap::{load_weights, DEFAULT_WEIGHTS, SPEED_OF_LIGHT};
    use crate::spectral::{centroid_trajectory, frequency_axis, FLOOR_DB};

    fn cfg() -> RadarConfig {
        RadarConfig::new(5.8e9, 256.0, SIM_RADAR_POS).unwrap()
    }

    fn walker_weights(seq: &MoCapSequence) -> WeightTable {
        load_weights(DEFAULT_WEIGHTS, seq.markers()).unwrap()
    }

    #[test]
    fn rigid_walker_translates_at_speed() {
        let params = WalkerParams {
            speed_mps: 1.0,
            limb_amp_m: 0.0,
            heading_rad: 0.4,
            duration_s: 2.0,
            ..Default::default()
        };
        let seq = synth_walker(&params, 100.0).unwrap();
        assert_eq!(seq.len(), 201);
        assert_eq!(seq.marker_count(), 10);
        for m in 0..seq.marker_count() {
            for t in 1..seq.len() {
                let a = seq.position(t - 1, m);
                let b = seq.position(t, m);
                let step = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
                assert!((step * 100.0 - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn walker_is_deterministic_and_seed_sensitive() {
        let params = WalkerParams {
            duration_s: 3.0,
            ..Default::default()
        };
        let a = synth_walker(&params, 250.0).unwrap();
        let b = synth_walker(&params, 250.0).unwrap();
        assert_eq!(a, b);
        let c = synth_walker(&WalkerParams { seed: 7, ..params }, 250.0).unwrap();
        assert_ne!(a, c);
        assert!(synth_walker(&WalkerParams { duration_s: 0.0, ..params }, 250.0).is_err());
        assert!(synth_walker(&WalkerParams { limb_amp_m: -1.0, ..params }, 250.0).is_err());
    }

    #[test]
    fn limbs_swing_antiphase() {
        let params = WalkerParams {
            speed_mps: 0.0,
            duration_s: 2.0,
            ..Default::default()
        };
        let seq = synth_walker(&params, 100.0).unwrap();
        let idx = |n: &str| seq.marker_index(n).unwrap();
        for t in 0..seq.len() {
            let la = seq.position(t, idx("LANK"))[0];
            let ra = seq.position(t, idx("RANK"))[0];
            let lw = seq.position(t, idx("LWRI"))[0];
            let rw = seq.position(t, idx("RWRI"))[0];
            // heading 0: swing is along x about the pass point
            assert!((la + ra).abs() < 1e-12);
            assert!((la + lw).abs() < 1e-12);
            assert!((rw - la).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_walker_has_floor_spectrogram() {
        let params = WalkerParams {
            speed_mps: 0.0,
            limb_amp_m: 0.0,
            duration_s: 2.0,
            ..Default::default()
        };
        let seq = synth_walker(&params, 256.0).unwrap();
        let spec = oracle_spectrogram(&seq, &cfg(), &walker_weights(&seq), &NoiseParams::default(), Framing::default()).unwrap();
        assert!(spec.values().iter().all(|&v| v < FLOOR_DB + 30.0), "max {}", spec.values().iter().cloned().fold(f64::MIN, f64::max));
    }

    fn ray_marker(v: f64, dir: [f64; 3], len: usize) -> Vec<Vec3> {
        (0..len)
            .map(|i| {
                let r = 5.0 + v * i as f64 / 256.0;
                [
                    SIM_RADAR_POS[0] + r * dir[0],
                    SIM_RADAR_POS[1] + r * dir[1],
                    SIM_RADAR_POS[2] + r * dir[2],
                ]
            })
            .collect()
    }

    #[test]
    fn single_scatterer_peak() {
        let seq = MoCapSequence::new(256.0, 0.0, vec!["A".into()], ray_marker(1.0, [1.0, 0.0, 0.0], 1024)).unwrap();
        let w = WeightTable::from_entries([("A", 1.0)]).unwrap();
        let cfg = RadarConfig::new(SPEED_OF_LIGHT / 0.051688, 256.0, SIM_RADAR_POS).unwrap();
        let spec = oracle_spectrogram(&seq, &cfg, &w, &NoiseParams::default(), Framing::default()).unwrap();
        let axis = frequency_axis(256, 256.0).unwrap();
        for frame in spec.frames() {
            let k = (0..256).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
            assert!((axis[k] - 38.693).abs() <= 1.0);
        }
    }

    #[test]
    fn opposed_scatterers_centroid_near_zero() {
        let len = 1024;
        let a = ray_marker(1.0, [1.0, 0.0, 0.0], len);
        let b = ray_marker(-1.0, [0.0, 1.0, 0.0], len);
        let positions = a.into_iter().zip(b).flat_map(|(p, q)| [p, q]).collect();
        let seq = MoCapSequence::new(256.0, 0.0, vec!["A".into(), "B".into()], positions).unwrap();
        let w = WeightTable::from_entries([("A", 1.0), ("B", 1.0)]).unwrap();
        let spec = oracle_spectrogram(&seq, &cfg(), &w, &NoiseParams::default(), Framing::default()).unwrap();
        for c in centroid_trajectory(&spec).unwrap().values {
            assert!(c.abs() <= 1.0, "centroid {c}");
        }
    }

    #[test]
    fn noise_is_seeded() {
        let params = WalkerParams {
            duration_s: 2.0,
            ..Default::default()
        };
        let seq = synth_walker(&params, 256.0).unwrap();
        let w = walker_weights(&seq);
        let noise = NoiseParams { snr_db: Some(10.0), seed: 3 };
        let a = simulate_iq(&seq, &cfg(), &w, &noise).unwrap();
        let b = simulate_iq(&seq, &cfg(), &w, &noise).unwrap();
        assert_eq!(a, b);
        let clean = simulate_iq(&seq, &cfg(), &w, &NoiseParams::default()).unwrap();
        let p_sig = clean.iter().map(|s| s.norm_sqr()).sum::<f64>();
        let p_noise = a.iter().zip(&clean).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!((snr - 10.0).abs() < 0.5, "measured SNR {snr}");
    }

    #[test]
    fn walker_radial_speeds_stay_unaliased() {
        let seq = synth_walker(&WalkerParams::default(), 256.0).unwrap();
        let lambda = cfg().wavelength_m;
        for m in 0..seq.marker_count() {
            let v = radial_velocity(&range_series(&seq, m, SIM_RADAR_POS).unwrap()).unwrap();
            let fmax = v.values.iter().fold(0.0f64, |a, x| a.max(x.abs())) * 2.0 / lambda;
            assert!(fmax < 128.0, "{} peaks at {fmax} Hz", seq.markers()[m]);
        }
    }

    fn sample_truth() -> Spectrogram {
        let seq = synth_walker(&WalkerParams { duration_s: 4.0, ..Default::default() }, 256.0).unwrap();
        oracle_spectrogram(&seq, &cfg(), &walker_weights(&seq), &NoiseParams::default(), Framing::default()).unwrap()
    }

    #[test]
    fn constant_control_fixed_point() {
        let frame: Vec<f64> = (0..256).map(|k| -(k as f64) / 3.0).collect();
        let truth = Spectrogram::from_frames(Framing::default(), vec![frame; 6]).unwrap();
        assert_eq!(control_model(ControlKind::Constant, &truth, 0), truth);
    }

    #[test]
    fn flip_is_an_involution_and_conserves_power() {
        let truth = sample_truth();
        let once = control_model(ControlKind::Flip, &truth, 0);
        assert_eq!(control_model(ControlKind::Flip, &once, 0), truth);
        let power = |s: &Spectrogram| s.values().iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>();
        let mut a: Vec<f64> = truth.values().to_vec();
        let mut b: Vec<f64> = once.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert!((power(&truth) - power(&once)).abs() <= 1e-9 * power(&truth));
    }

    #[test]
    fn shuffle_preserves_frame_multiset() {
        let truth = sample_truth();
        let shuffled = control_model(ControlKind::Shuffle, &truth, 11);
        assert_eq!(shuffled, control_model(ControlKind::Shuffle, &truth, 11));
        let key = |s: &Spectrogram| {
            let mut frames: Vec<Vec<u64>> = s.frames().map(|f| f.iter().map(|v| v.to_bits()).collect()).collect();
            frames.sort();
            frames
        };
        assert_eq!(key(&truth), key(&shuffled));
        assert_ne!(truth, shuffled);
    }
}
