//! Per-marker range, radial velocity and Doppler series, and the
//! velocity-scaling intervention.

use crate::error::{Error, Result};
use crate::mocap::{MoCapSequence, Vec3};

/// Uniformly sampled scalar signal (m, m/s or Hz depending on context).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSeries {
    pub rate_hz: f64,
    pub values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::Config(format!("series rate must be positive, got {rate_hz}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite series value at sample {i}")));
        }
        Ok(Self { rate_hz, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn distance(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Euclidean distance from the radar to one marker at every sample.
pub fn range_series(seq: &MoCapSequence, marker: usize, radar_pos: Vec3) -> Result<ScalarSeries> {
    if marker >= seq.marker_count() {
        return Err(Error::Config(format!(
            "marker index {marker} out of range ({} markers)",
            seq.marker_count()
        )));
    }
    let mut values = Vec::with_capacity(seq.len());
    for (t, p) in seq.trajectory(marker).enumerate() {
        let r = distance(p, radar_pos);
        if r == 0.0 {
            return Err(Error::DegenerateGeometry {
                marker: seq.markers()[marker].clone(),
                sample: t,
            });
        }
        values.push(r);
    }
    ScalarSeries::new(seq.rate_hz(), values)
}

/// Central-difference derivative with one-sided differences at both ends,
/// so the output stays aligned with the input.
pub fn radial_velocity(range: &ScalarSeries) -> Result<ScalarSeries> {
    let r = &range.values;
    let n = r.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "radial velocity needs at least 3 samples, got {n}"
        )));
    }
    let rate = range.rate_hz;
    let mut v = Vec::with_capacity(n);
    v.push((r[1] - r[0]) * rate);
    v.extend(r.windows(3).map(|w| (w[2] - w[0]) * rate / 2.0));
    v.push((r[n - 1] - r[n - 2]) * rate);
    ScalarSeries::new(rate, v)
}

/// Doppler shift `2 v / λ` for each radial-velocity sample.
pub fn doppler_frequency(velocity: &ScalarSeries, wavelength_m: f64) -> Result<ScalarSeries> {
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(Error::Config(format!("wavelength must be positive, got {wavelength_m}")));
    }
    ScalarSeries::new(
        velocity.rate_hz,
        velocity.values.iter().map(|v| 2.0 * v / wavelength_m).collect(),
    )
}

/// Rescale every marker's radial displacement about its first sample by
/// `alpha`, keeping each marker's bearing from the radar.
///
/// With `r(t)` the marker range and `u(t)` its unit direction, the output
/// position is `radar + u(t) * (r(0) + alpha * (r(t) - r(0)))`, so radial
/// velocity scales by exactly `alpha`.
pub fn scale_velocity(seq: &MoCapSequence, radar_pos: Vec3, alpha: f64) -> Result<MoCapSequence> {
    if !alpha.is_finite() {
        return Err(Error::Config(format!("scaling factor must be finite, got {alpha}")));
    }
    let m = seq.marker_count();
    let len = seq.len();
    if len == 0 {
        return Err(Error::InsufficientData("empty sequence".into()));
    }
    let anchors: Vec<f64> = seq.frame(0).iter().map(|&p| distance(p, radar_pos)).collect();
    let mut positions = Vec::with_capacity(len * m);
    for t in 0..len {
        for (k, &p) in seq.frame(t).iter().enumerate() {
            let r = distance(p, radar_pos);
            if r == 0.0 {
                return Err(Error::DegenerateGeometry {
                    marker: seq.markers()[k].clone(),
                    sample: t,
                });
            }
            let scaled = anchors[k] + alpha * (r - anchors[k]);
            if scaled <= 0.0 {
                return Err(Error::InterventionInfeasible {
                    marker: seq.markers()[k].clone(),
                    sample: t,
                    range: scaled,
                    alpha,
                });
            }
            let gain = scaled / r;
            positions.push([
                radar_pos[0] + (p[0] - radar_pos[0]) * gain,
                radar_pos[1] + (p[1] - radar_pos[1]) * gain,
                radar_pos[2] + (p[2] - radar_pos[2]) * gain,
            ]);
        }
    }
    MoCapSequence::new(seq.rate_hz(), seq.t0(), seq.markers().to_vec(), positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::SPEED_OF_LIGHT;

    fn seq_of(rate: f64, names: &[&str], positions: Vec<Vec3>) -> MoCapSequence {
        MoCapSequence::new(rate, 0.0, names.iter().map(|s| s.to_string()).collect(), positions).unwrap()
    }

    #[test]
    fn range_345() {
        let seq = seq_of(10.0, &["A"], vec![[3.0, 4.0, 0.0]; 4]);
        let r = range_series(&seq, 0, [0.0; 3]).unwrap();
        assert_eq!(r.values, vec![5.0; 4]);
    }

    #[test]
    fn range_degenerate_and_collinear() {
        let seq = seq_of(1.0, &["A"], vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!(matches!(
            range_series(&seq, 0, [0.0; 3]),
            Err(Error::DegenerateGeometry { sample: 0, .. })
        ));
        let shifted = seq_of(1.0, &["A"], vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert_eq!(range_series(&shifted, 0, [0.0; 3]).unwrap().values, vec![1.0, 2.0, 3.0]);
        assert!(range_series(&shifted, 1, [0.0; 3]).is_err());
    }

    #[test]
    fn velocity_stencil() {
        let r = ScalarSeries::new(1.0, vec![0.0, 1.0, 4.0, 9.0]).unwrap();
        assert_eq!(radial_velocity(&r).unwrap().values, vec![1.0, 2.0, 4.0, 5.0]);

        let flat = ScalarSeries::new(256.0, vec![3.0; 10]).unwrap();
        assert!(radial_velocity(&flat).unwrap().values.iter().all(|&v| v == 0.0));

        let dt = 1.0 / 256.0;
        let affine = ScalarSeries::new(256.0, (0..50).map(|t| 1.0 + 0.5 * t as f64 * dt).collect()).unwrap();
        let v = radial_velocity(&affine).unwrap();
        assert!(v.values.iter().all(|&x| (x - 0.5).abs() < 1e-9));

        let short = ScalarSeries::new(1.0, vec![0.0, 1.0]).unwrap();
        assert!(matches!(radial_velocity(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn doppler_examples() {
        let v = ScalarSeries::new(256.0, vec![1.0; 4]).unwrap();
        let f = doppler_frequency(&v, 0.051688).unwrap();
        assert!(f.values.iter().all(|&x| (x - 38.693).abs() < 1e-3));
        let neg = ScalarSeries::new(256.0, vec![-1.0; 4]).unwrap();
        let f = doppler_frequency(&neg, SPEED_OF_LIGHT / 5.8e9).unwrap();
        assert!(f.values.iter().all(|&x| (x + 38.693).abs() < 1e-3));
        let zero = ScalarSeries::new(256.0, vec![0.0; 4]).unwrap();
        assert!(doppler_frequency(&zero, 0.05).unwrap().values.iter().all(|&x| x == 0.0));
        assert!(doppler_frequency(&zero, 0.0).is_err());
    }

    fn wobbly(len: usize) -> MoCapSequence {
        let positions = (0..len)
            .flat_map(|i| {
                let t = i as f64 / 100.0;
                [
                    [2.0 + 0.3 * t, 0.5 * (3.0 * t).sin(), 1.0],
                    [-1.0, 3.0 + 0.2 * (5.0 * t).cos(), 1.0 + 0.1 * t],
                ]
            })
            .collect();
        seq_of(100.0, &["A", "B"], positions)
    }

    #[test]
    fn scale_identity_and_freeze() {
        let seq = wobbly(200);
        let same = scale_velocity(&seq, [0.0; 3], 1.0).unwrap();
        for t in 0..seq.len() {
            for m in 0..2 {
                for c in 0..3 {
                    assert!((same.position(t, m)[c] - seq.position(t, m)[c]).abs() < 1e-12);
                }
            }
        }
        let frozen = scale_velocity(&seq, [0.0; 3], 0.0).unwrap();
        for m in 0..2 {
            let v = radial_velocity(&range_series(&frozen, m, [0.0; 3]).unwrap()).unwrap();
            assert!(v.values.iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn scale_receding_ray() {
        let dir = [0.6, 0.0, 0.8];
        let positions = (0..50)
            .map(|i| {
                let r = 2.0 + i as f64 / 10.0;
                [dir[0] * r, dir[1] * r, dir[2] * r]
            })
            .collect();
        let seq = seq_of(10.0, &["A"], positions);
        let scaled = scale_velocity(&seq, [0.0; 3], 0.5).unwrap();
        let r = range_series(&scaled, 0, [0.0; 3]).unwrap();
        for (i, &x) in r.values.iter().enumerate() {
            assert!((x - (2.0 + 0.5 * i as f64 / 10.0)).abs() < 1e-12);
        }
        let v0 = radial_velocity(&range_series(&seq, 0, [0.0; 3]).unwrap()).unwrap();
        let v1 = radial_velocity(&r).unwrap();
        for (a, b) in v0.values.iter().zip(&v1.values) {
            assert!((b / a - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_reports_infeasible_marker() {
        // r goes 1 -> 3; alpha = -1 gives 1 - (r - 1), which hits 0 at sample 1
        let seq = seq_of(1.0, &["A"], vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        match scale_velocity(&seq, [0.0; 3], -1.0) {
            Err(Error::InterventionInfeasible { marker, sample, .. }) => {
                assert_eq!(marker, "A");
                assert_eq!(sample, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn smooth_seq(coeffs: &[[f64; 4]], len: usize) -> MoCapSequence {
            let m = coeffs.len();
            let positions = (0..len)
                .flat_map(|i| {
                    let t = i as f64 / 64.0;
                    coeffs.iter().map(move |c| {
                        [
                            3.0 + c[0] * t + 0.2 * (c[1] * t).sin(),
                            -2.0 + c[2] * (0.7 * t).cos(),
                            1.0 + 0.1 * (c[3] * t).sin(),
                        ]
                    })
                })
                .collect();
            seq_of(64.0, &["A", "B", "C", "D"][..m], positions)
        }

        fn ranges(seq: &MoCapSequence, radar: Vec3) -> Vec<Vec<f64>> {
            (0..seq.marker_count())
                .map(|m| range_series(seq, m, radar).unwrap().values)
                .collect()
        }

        proptest! {
            #[test]
            fn composition(coeffs in prop::collection::vec(prop::array::uniform4(0.1f64..1.5), 1..4), a in 0.1f64..1.0, b in 0.1f64..1.0) {
                let seq = smooth_seq(&coeffs, 128);
                let radar = [0.0, 0.0, 1.0];
                let twice = scale_velocity(&scale_velocity(&seq, radar, a).unwrap(), radar, b).unwrap();
                let once = scale_velocity(&seq, radar, a * b).unwrap();
                for (x, y) in ranges(&twice, radar).iter().zip(ranges(&once, radar)) {
                    for (p, q) in x.iter().zip(y) {
                        prop_assert!((p - q).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn bearing_preserved(coeffs in prop::collection::vec(prop::array::uniform4(0.1f64..1.5), 1..4), alpha in 0.05f64..1.0) {
                let seq = smooth_seq(&coeffs, 64);
                let radar = [0.5, -0.5, 1.2];
                let out = scale_velocity(&seq, radar, alpha).unwrap();
                for t in 0..seq.len() {
                    for m in 0..seq.marker_count() {
                        let p = seq.position(t, m);
                        let q = out.position(t, m);
                        let rp = distance(p, radar);
                        let rq = distance(q, radar);
                        for c in 0..3 {
                            prop_assert!(((p[c] - radar[c]) / rp - (q[c] - radar[c]) / rq).abs() < 1e-12);
                        }
                    }
                }
            }

            #[test]
            fn doppler_linear(vs in prop::collection::vec(-5.0f64..5.0, 1..50), k in -3.0f64..3.0) {
                let lambda = SPEED_OF_LIGHT / 5.8e9;
                let base = doppler_frequency(&ScalarSeries::new(256.0, vs.clone()).unwrap(), lambda).unwrap();
                let scaled = doppler_frequency(&ScalarSeries::new(256.0, vs.iter().map(|v| k * v).collect()).unwrap(), lambda).unwrap();
                for (a, b) in base.values.iter().zip(&scaled.values) {
                    // 2 (k v) / λ vs k (2 v / λ): one rounding step each
                    prop_assert!((k * a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1e-300));
                }
            }
        }
    }
}
