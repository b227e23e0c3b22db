//! Scenario geometry: radar units with their MIMO element layout, point
//! targets, the shared ego velocity and per-sensor clock offsets.
//!
//! Every other module consumes the bistatic range and line-of-sight helpers
//! defined here, so the conventions live in one place:
//!
//! * element positions are `origin + offset`; the mounting error
//!   `position_error` is stored but never enters range or phase computations;
//! * Doppler speed is `ego_velocity · u` where `u` points from the radar
//!   origin to the target (positive when closing).

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};

pub type Vec3 = Vector3<f64>;

/// Propagation speed used throughout the model, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Separation below which two points are treated as coincident, m.
const MIN_SEPARATION: f64 = 1e-9;

/// One FMCW MIMO radar sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarUnit {
    pub origin: Vec3,
    pub tx_offsets: Vec<Vec3>,
    pub rx_offsets: Vec<Vec3>,
    #[serde(default = "Vec3::zeros")]
    pub position_error: Vec3,
    pub carrier_hz: f64,
    /// Swept bandwidth over one chirp (slope times chirp duration).
    pub bandwidth_hz: f64,
    pub chirp_s: f64,
    pub pri_s: f64,
    pub fs_hz: f64,
    pub n_chirps: usize,
    #[serde(default)]
    pub sync_offset_s: f64,
}

impl RadarUnit {
    /// Uniform linear MIMO layout along x centred on `origin`: `n_tx`
    /// transmitters spaced `n_rx * lambda / 2`, `n_rx` receivers spaced
    /// `lambda / 2`, which yields a filled virtual array.
    pub fn uniform_linear(origin: Vec3, carrier_hz: f64, n_tx: usize, n_rx: usize) -> Self {
        let lambda = SPEED_OF_LIGHT / carrier_hz;
        let rx_pitch = lambda / 2.0;
        let tx_pitch = n_rx as f64 * rx_pitch;
        RadarUnit {
            origin,
            tx_offsets: centred_line(n_tx, tx_pitch),
            rx_offsets: centred_line(n_rx, rx_pitch),
            position_error: Vec3::zeros(),
            carrier_hz,
            bandwidth_hz: 500e6,
            chirp_s: 5e-6,
            pri_s: 30e-6,
            fs_hz: 30e6,
            n_chirps: 10,
            sync_offset_s: 0.0,
        }
    }

    pub fn n_tx(&self) -> usize {
        self.tx_offsets.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_offsets.len()
    }

    /// Chirp slope B_r in Hz/s.
    pub fn chirp_slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_s
    }

    /// Fast-time samples per chirp, `floor(fs * T_p)`.
    pub fn n_samples(&self) -> usize {
        // guard against 149.99999999 style round-off
        (self.fs_hz * self.chirp_s + 1e-9).floor() as usize
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.fs_hz
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn tx_position(&self, n: usize) -> Result<Vec3> {
        self.tx_offsets
            .get(n)
            .map(|o| self.origin + o)
            .ok_or(RadarError::IndexOutOfRange {
                what: "tx",
                index: n,
                len: self.tx_offsets.len(),
            })
    }

    pub fn rx_position(&self, m: usize) -> Result<Vec3> {
        self.rx_offsets
            .get(m)
            .map(|o| self.origin + o)
            .ok_or(RadarError::IndexOutOfRange {
                what: "rx",
                index: m,
                len: self.rx_offsets.len(),
            })
    }

    fn check(&self, q: usize, problems: &mut Vec<String>) {
        let tag = |s: &str| format!("radars[{q}].{s}");
        if self.tx_offsets.is_empty() {
            problems.push(tag("tx_offsets must be non-empty"));
        }
        if self.rx_offsets.is_empty() {
            problems.push(tag("rx_offsets must be non-empty"));
        }
        if !(self.carrier_hz > 0.0) {
            problems.push(tag("carrier_hz must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            problems.push(tag("bandwidth_hz must be positive"));
        }
        if !(self.chirp_s > 0.0) {
            problems.push(tag("chirp_s must be positive"));
        }
        if !(self.chirp_s <= self.pri_s) {
            problems.push(tag("chirp_s must not exceed pri_s"));
        }
        if !(self.fs_hz * self.chirp_s >= 1.0 - 1e-9) {
            problems.push(tag("fs_hz * chirp_s must be at least 1"));
        }
        if self.n_chirps == 0 {
            problems.push(tag("n_chirps must be at least 1"));
        }
        if !self.sync_offset_s.is_finite() {
            problems.push(tag("sync_offset_s must be finite"));
        }
    }
}

fn centred_line(count: usize, pitch: f64) -> Vec<Vec3> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|i| Vec3::new((i as f64 - mid) * pitch, 0.0, 0.0))
        .collect()
}

/// Point scatterer with one complex reflectivity per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: Vec3,
    pub reflectivity: Vec<Complex64>,
}

impl Target {
    /// Target seen with the same reflectivity by all `q` sensors.
    pub fn uniform(position: Vec3, alpha: Complex64, q: usize) -> Self {
        Target {
            position,
            reflectivity: vec![alpha; q],
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.reflectivity
            .windows(2)
            .all(|w| (w[0] - w[1]).norm() <= 1e-12 * w[0].norm().max(1.0))
    }
}

/// Shape of the canonical stacked measurement vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeDims {
    pub q: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub ns: usize,
}

impl CubeDims {
    pub fn len(&self) -> usize {
        self.q * self.per_sensor()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples belonging to one sensor, `M N K N_s`.
    pub fn per_sensor(&self) -> usize {
        self.m * self.n * self.k * self.ns
    }

    /// Flat index, sensor slowest and fast-time sample fastest.
    #[inline]
    pub fn index(&self, q: usize, m: usize, n: usize, k: usize, ns: usize) -> usize {
        (((q * self.m + m) * self.n + n) * self.k + k) * self.ns + ns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub radars: Vec<RadarUnit>,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default = "Vec3::zeros")]
    pub ego_velocity: Vec3,
}

impl Scene {
    pub fn n_sensors(&self) -> usize {
        self.radars.len()
    }

    /// Collects every violated invariant rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.radars.is_empty() {
            problems.push("radars must contain at least one sensor".to_string());
        }
        for (q, r) in self.radars.iter().enumerate() {
            r.check(q, &mut problems);
        }
        if let Some(first) = self.radars.first() {
            for (q, r) in self.radars.iter().enumerate().skip(1) {
                if r.n_chirps != first.n_chirps
                    || r.chirp_s != first.chirp_s
                    || r.pri_s != first.pri_s
                    || r.fs_hz != first.fs_hz
                {
                    problems.push(format!(
                        "radars[{q}] frame timing (n_chirps, chirp_s, pri_s, fs_hz) differs from radars[0]"
                    ));
                }
                if r.n_tx() != first.n_tx() || r.n_rx() != first.n_rx() {
                    problems.push(format!(
                        "radars[{q}] element counts differ from radars[0]"
                    ));
                }
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.reflectivity.len() != self.radars.len() {
                problems.push(format!(
                    "targets[{i}].reflectivity has {} entries, expected {}",
                    t.reflectivity.len(),
                    self.radars.len()
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RadarError::Config(problems))
        }
    }

    pub fn dims(&self) -> CubeDims {
        let r = &self.radars[0];
        CubeDims {
            q: self.radars.len(),
            m: r.n_rx(),
            n: r.n_tx(),
            k: r.n_chirps,
            ns: r.n_samples(),
        }
    }

    pub fn radar(&self, q: usize) -> Result<&RadarUnit> {
        self.radars.get(q).ok_or(RadarError::IndexOutOfRange {
            what: "sensor",
            index: q,
            len: self.radars.len(),
        })
    }

    /// Tx-to-target plus target-to-rx path length for element pair (m, n)
    /// of sensor q. The mounting error is not applied.
    pub fn bistatic_range(&self, q: usize, m: usize, n: usize, p: &Vec3) -> Result<f64> {
        let radar = self.radar(q)?;
        let tx = radar.tx_position(n)?;
        let rx = radar.rx_position(m)?;
        Ok((p - tx).norm() + (p - rx).norm())
    }

    /// Path-length change the mounting error would cause for this element
    /// pair; reported for diagnostics only.
    pub fn neglected_range_error(&self, q: usize, m: usize, n: usize, p: &Vec3) -> Result<f64> {
        let radar = self.radar(q)?;
        let e = radar.position_error;
        let tx = radar.tx_position(n)?;
        let rx = radar.rx_position(m)?;
        let exact = (p - tx - e).norm() + (p - rx - e).norm();
        Ok(exact - ((p - tx).norm() + (p - rx).norm()))
    }

    /// Unit line-of-sight vector from sensor q to `p` and the projected ego
    /// speed along it.
    pub fn direction_and_doppler(&self, q: usize, p: &Vec3) -> Result<(Vec3, f64)> {
        let radar = self.radar(q)?;
        let u = unit_direction(&radar.origin, p)?;
        Ok((u, self.ego_velocity.dot(&u)))
    }

    /// Copy of the scene with the platform at rest, as used by the bounds.
    pub fn without_motion(&self) -> Scene {
        Scene {
            ego_velocity: Vec3::zeros(),
            ..self.clone()
        }
    }

    /// True when every radar element and target lies in the z = 0 plane.
    pub fn is_planar(&self) -> bool {
        let flat = |v: &Vec3| v.z == 0.0;
        self.radars.iter().all(|r| {
            flat(&r.origin)
                && r.tx_offsets.iter().all(flat)
                && r.rx_offsets.iter().all(flat)
        }) && self.targets.iter().all(|t| flat(&t.position))
    }

    /// Sensor-origin sync offsets, seconds.
    pub fn sync_offsets(&self) -> Vec<f64> {
        self.radars.iter().map(|r| r.sync_offset_s).collect()
    }
}

pub fn unit_direction(from: &Vec3, to: &Vec3) -> Result<Vec3> {
    let d = to - from;
    let norm = d.norm();
    if norm < MIN_SEPARATION {
        return Err(RadarError::DegenerateGeometry(format!(
            "point {:?} coincides with sensor at {:?}",
            to.as_slice(),
            from.as_slice()
        )));
    }
    Ok(d / norm)
}

/// Azimuth `atan2(dy, dx)` and elevation `atan(dz / ground_range)` of `p`
/// as seen from `origin`, radians.
pub fn azimuth_elevation(origin: &Vec3, p: &Vec3) -> Result<(f64, f64)> {
    let d = p - origin;
    if d.norm() < MIN_SEPARATION {
        return Err(RadarError::DegenerateGeometry(
            "azimuth undefined at the sensor origin".into(),
        ));
    }
    let ground = d.x.hypot(d.y);
    Ok((d.y.atan2(d.x), d.z.atan2(ground)))
}

/// Radar and waveform presets for the standard experiments.
pub mod presets {
    use super::*;

    /// Carrier of sensor q in the imaging experiments: 77, 77.5, 78 GHz.
    pub fn imaging_carrier(q: usize) -> f64 {
        77e9 + 0.5e9 * q as f64
    }

    /// Imaging layout: three sensors displaced along the bumper (x axis),
    /// 2 Tx / 4 Rx each, 500 MHz over 5 us, 30 MHz sampling, 30 us PRI,
    /// K = 10, ego velocity (1, 15) m/s.
    pub fn imaging_radars() -> Vec<RadarUnit> {
        [0.0, 1.0, 2.5]
            .iter()
            .enumerate()
            .map(|(q, &x)| RadarUnit::uniform_linear(Vec3::new(x, 0.0, 0.0), imaging_carrier(q), 2, 4))
            .collect()
    }

    pub fn imaging_scene(targets: Vec<Target>) -> Scene {
        Scene {
            radars: imaging_radars(),
            targets,
            ego_velocity: Vec3::new(1.0, 15.0, 0.0),
        }
    }

    /// Single unit-reflectivity point target at (0, 25) m.
    pub fn ptrf_scene() -> Scene {
        imaging_scene(vec![Target::uniform(
            Vec3::new(0.0, 25.0, 0.0),
            Complex64::new(1.0, 0.0),
            3,
        )])
    }

    /// Bound-study layout: sensors at x = 0, 1, 2 m, 77 GHz, 150 MHz over
    /// 5 us sampled at 10 MHz, 2 Tx / 4 Rx, static platform.
    pub fn bounds_radars(q: usize, n_chirps: usize) -> Vec<RadarUnit> {
        (0..q)
            .map(|i| {
                let mut r = RadarUnit::uniform_linear(Vec3::new(i as f64, 0.0, 0.0), 77e9, 2, 4);
                r.bandwidth_hz = 150e6;
                r.fs_hz = 10e6;
                r.n_chirps = n_chirps;
                r
            })
            .collect()
    }

    pub fn bounds_scene(q: usize, n_chirps: usize) -> Scene {
        Scene {
            radars: bounds_radars(q, n_chirps),
            targets: Vec::new(),
            ego_velocity: Vec3::zeros(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn colocated(origin: Vec3) -> RadarUnit {
        let mut r = RadarUnit::uniform_linear(origin, 77e9, 1, 1);
        r.tx_offsets = vec![Vec3::zeros()];
        r.rx_offsets = vec![Vec3::zeros()];
        r
    }

    fn scene_with(radars: Vec<RadarUnit>, v: Vec3) -> Scene {
        Scene {
            radars,
            targets: vec![],
            ego_velocity: v,
        }
    }

    #[test]
    fn monostatic_range_is_twice_distance() {
        let s = scene_with(vec![colocated(Vec3::zeros())], Vec3::zeros());
        let g = s.bistatic_range(0, 0, 0, &Vec3::new(0.0, 25.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn displaced_origin_range() {
        let s = scene_with(vec![colocated(Vec3::new(0.0, 2.5, 0.0))], Vec3::zeros());
        let g = s.bistatic_range(0, 0, 0, &Vec3::new(0.0, 25.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, 45.0, epsilon = 1e-12);
    }

    #[test]
    fn split_pair_range() {
        let mut r = colocated(Vec3::zeros());
        r.tx_offsets = vec![Vec3::new(0.5, 0.0, 0.0)];
        r.rx_offsets = vec![Vec3::new(-0.5, 0.0, 0.0)];
        let s = scene_with(vec![r], Vec3::zeros());
        let g = s.bistatic_range(0, 0, 0, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, 2.0 * 1.25f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn range_index_errors() {
        let s = scene_with(vec![colocated(Vec3::zeros())], Vec3::zeros());
        let p = Vec3::new(0.0, 1.0, 0.0);
        assert!(matches!(
            s.bistatic_range(1, 0, 0, &p),
            Err(RadarError::IndexOutOfRange { what: "sensor", .. })
        ));
        assert!(matches!(
            s.bistatic_range(0, 3, 0, &p),
            Err(RadarError::IndexOutOfRange { what: "rx", .. })
        ));
        assert!(matches!(
            s.bistatic_range(0, 0, 2, &p),
            Err(RadarError::IndexOutOfRange { what: "tx", .. })
        ));
    }

    #[test]
    fn doppler_examples() {
        let p = Vec3::new(0.0, 25.0, 0.0);
        let s = scene_with(vec![colocated(Vec3::zeros())], Vec3::new(0.0, 15.0, 0.0));
        let (u, v) = s.direction_and_doppler(0, &p).unwrap();
        assert_abs_diff_eq!(u, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 15.0, epsilon = 1e-12);

        let s = scene_with(vec![colocated(Vec3::zeros())], Vec3::new(1.0, 15.0, 0.0));
        let (_, v) = s.direction_and_doppler(0, &p).unwrap();
        assert_abs_diff_eq!(v, 15.0, epsilon = 1e-12);

        let (u, v) = s.direction_and_doppler(0, &Vec3::new(3.0, 4.0, 0.0)).unwrap();
        assert_abs_diff_eq!(u, Vec3::new(0.6, 0.8, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 12.6, epsilon = 1e-12);

        assert!(matches!(
            s.direction_and_doppler(0, &Vec3::zeros()),
            Err(RadarError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn azimuth_elevation_examples() {
        let o = Vec3::zeros();
        let (az, el) = azimuth_elevation(&o, &Vec3::new(1.0, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(az, std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        assert_eq!(el, 0.0);
        let (az, el) = azimuth_elevation(&o, &Vec3::new(0.0, 25.0, 0.0)).unwrap();
        assert_abs_diff_eq!(az, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(el, 0.0);
        let (az, el) = azimuth_elevation(&o, &Vec3::new(3.0, 4.0, 5.0)).unwrap();
        assert_abs_diff_eq!(az, 0.927_295_218_001_612_2, epsilon = 1e-12);
        assert_abs_diff_eq!(el, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert!(azimuth_elevation(&o, &o).is_err());
    }

    #[test]
    fn validate_lists_every_problem() {
        let mut r = colocated(Vec3::zeros());
        r.bandwidth_hz = 0.0;
        r.chirp_s = 40e-6;
        let mut s = scene_with(vec![r], Vec3::zeros());
        s.targets.push(Target::uniform(Vec3::new(0.0, 5.0, 0.0), Complex64::new(1.0, 0.0), 2));
        match s.validate() {
            Err(RadarError::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn preset_sample_counts() {
        let s = presets::ptrf_scene();
        s.validate().unwrap();
        assert_eq!(s.dims(), CubeDims { q: 3, m: 4, n: 2, k: 10, ns: 150 });
        assert_eq!(presets::bounds_scene(3, 1).dims().ns, 50);
    }

    fn arb_vec(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn range_symmetric_under_tx_rx_swap(a in arb_vec(0.05), b in arb_vec(0.05), p in arb_vec(40.0)) {
            let mut r = colocated(Vec3::zeros());
            r.tx_offsets = vec![a];
            r.rx_offsets = vec![b];
            let mut swapped = r.clone();
            swapped.tx_offsets = vec![b];
            swapped.rx_offsets = vec![a];
            let g1 = scene_with(vec![r], Vec3::zeros()).bistatic_range(0, 0, 0, &p).unwrap();
            let g2 = scene_with(vec![swapped], Vec3::zeros()).bistatic_range(0, 0, 0, &p).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-12 * g1.max(1.0));
        }

        #[test]
        fn range_triangle_bound(a in arb_vec(0.05), b in arb_vec(0.05), p in arb_vec(40.0)) {
            let mut r = colocated(Vec3::zeros());
            r.tx_offsets = vec![a];
            r.rx_offsets = vec![b];
            let mid = (a + b) / 2.0;
            let diameter = (a - b).norm();
            let g = scene_with(vec![r], Vec3::zeros()).bistatic_range(0, 0, 0, &p).unwrap();
            prop_assert!(g >= 2.0 * (p - mid).norm() - diameter - 1e-12);
        }

        #[test]
        fn direction_is_unit(p in arb_vec(50.0), v in arb_vec(20.0)) {
            prop_assume!(p.norm() > 1e-3);
            let s = scene_with(vec![colocated(Vec3::zeros())], v);
            let (u, _) = s.direction_and_doppler(0, &p).unwrap();
            prop_assert!((u.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn centimetre_mount_error_below_range_resolution(e in arb_vec(0.01 / 3f64.sqrt()), p in arb_vec(40.0)) {
            prop_assume!(p.norm() > 1.0);
            let mut s = presets::ptrf_scene();
            s.radars[0].position_error = e;
            let resolution = SPEED_OF_LIGHT / (2.0 * s.radars[0].bandwidth_hz);
            let delta = s.neglected_range_error(0, 1, 0, &p).unwrap();
            prop_assert!(delta.abs() < resolution);
            let untouched = presets::ptrf_scene().bistatic_range(0, 1, 0, &p).unwrap();
            prop_assert_eq!(s.bistatic_range(0, 1, 0, &p).unwrap(), untouched);
        }
    }
}
