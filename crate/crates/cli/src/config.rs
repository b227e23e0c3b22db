//! JSON run configuration. Angles are given in degrees and converted on
//! the way into the core types; everything else is SI.

use std::fs;
use std::path::Path;

use radar_core::bounds::{CoherentOptions, CoherentScaling, PointCloudNoise};
use radar_core::eval::{SnrConvention, Stopping, SyncOptions};
use radar_core::{Complex64, ImagingGrid, RadarError, RadarUnit, ScenarioName, Scene, Scheme, SolverConfig, Target, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scene: SceneSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub solvers: SolverConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub radars: Vec<RadarSection>,
    #[serde(default)]
    pub targets: Vec<TargetSection>,
    #[serde(default)]
    pub ego_velocity: [f64; 3],
}

fn d_carrier() -> f64 {
    77e9
}
fn d_tx() -> usize {
    2
}
fn d_rx() -> usize {
    4
}
fn d_bandwidth() -> f64 {
    500e6
}
fn d_chirp() -> f64 {
    5e-6
}
fn d_pri() -> f64 {
    30e-6
}
fn d_fs() -> f64 {
    30e6
}
fn d_chirps() -> usize {
    10
}
fn d_one() -> f64 {
    1.0
}

/// One sensor. Without explicit offsets the antennas form a uniform linear
/// MIMO array along x (receivers at λ/2, transmitters at `n_rx`·λ/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSection {
    pub origin: [f64; 3],
    #[serde(default = "d_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "d_tx")]
    pub n_tx: usize,
    #[serde(default = "d_rx")]
    pub n_rx: usize,
    #[serde(default)]
    pub tx_offsets: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub rx_offsets: Option<Vec<[f64; 3]>>,
    #[serde(default = "d_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "d_chirp")]
    pub chirp_s: f64,
    #[serde(default = "d_pri")]
    pub pri_s: f64,
    #[serde(default = "d_fs")]
    pub fs_hz: f64,
    #[serde(default = "d_chirps")]
    pub n_chirps: usize,
    #[serde(default)]
    pub sync_offset_s: f64,
    #[serde(default)]
    pub position_error: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflectivity {
    #[serde(default = "d_one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

impl Reflectivity {
    fn complex(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase_deg.to_radians())
    }
}

/// A point target. `per_sensor`, when present, overrides the common
/// amplitude and phase with one reflectivity per radar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub position: [f64; 3],
    #[serde(default = "d_one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
    #[serde(default)]
    pub per_sensor: Option<Vec<Reflectivity>>,
}

/// Imaging grid: either `spacing` or both `nx` and `ny`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ptrf: PtrfSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub imaging: ImagingSection,
    #[serde(default)]
    pub sync: SyncSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PtrfSection {
    /// Which scene target is the point target.
    pub target: usize,
    /// Half length of the finely sampled cuts, m.
    pub cut_half_width_m: f64,
    pub cut_step_m: f64,
}

impl Default for PtrfSection {
    fn default() -> Self {
        PtrfSection {
            target: 0,
            cut_half_width_m: 3.0,
            cut_step_m: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub range_std_m: f64,
    pub azimuth_std_deg: f64,
    pub elevation_std_deg: f64,
    /// Per-sample SNR of the raw-data bounds, unit reflectivity.
    pub snr_db: f64,
    pub prior_std_m: f64,
    pub n_mc: usize,
    pub coherent_scaling: CoherentScaling,
    pub alpha_variance: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            x_range: [-50.0, 50.0],
            y_range: [0.0, 100.0],
            nx: 21,
            ny: 21,
            range_std_m: 0.06,
            azimuth_std_deg: 0.02,
            elevation_std_deg: 0.02,
            snr_db: -30.0,
            prior_std_m: 0.1,
            n_mc: 20,
            coherent_scaling: CoherentScaling::ReflectivityVariance,
            alpha_variance: 1.0,
        }
    }
}

impl BoundsSection {
    pub fn point_cloud(&self) -> PointCloudNoise {
        PointCloudNoise {
            range_std_m: self.range_std_m,
            azimuth_std_rad: self.azimuth_std_deg.to_radians(),
            elevation_std_rad: self.elevation_std_deg.to_radians(),
        }
    }

    pub fn coherent(&self) -> CoherentOptions {
        CoherentOptions {
            scaling: self.coherent_scaling,
            alpha_variance: self.alpha_variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingSection {
    /// Marks the close pair in `image` reports; any scene works.
    pub scenario: Option<String>,
    pub schemes: Vec<String>,
    pub snr_db: Vec<f64>,
    pub snr_convention: SnrConvention,
    pub n_trials: usize,
    pub stopping: Stopping,
    pub sync: SyncOptions,
}

impl Default for ImagingSection {
    fn default() -> Self {
        ImagingSection {
            scenario: None,
            schemes: Scheme::ALL.iter().map(|s| s.name().to_string()).collect(),
            snr_db: vec![10.0],
            snr_convention: SnrConvention::PerSample,
            n_trials: 1,
            stopping: Stopping::NoiseFloor,
            sync: SyncOptions::default(),
        }
    }
}

impl ImagingSection {
    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        self.schemes
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(|e| CliError::Usage(e.to_string())))
            .collect()
    }

    pub fn scenario(&self) -> Result<ScenarioName, CliError> {
        match &self.scenario {
            None => Ok(ScenarioName::MediumRange5tgt),
            Some(s) => s.parse().map_err(|e: RadarError| CliError::Usage(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncSection {
    /// Anchor position; defaults to the strongest target.
    pub anchor: Option<[f64; 3]>,
    /// `None` estimates once from noiseless data.
    pub snr_db: Option<f64>,
    pub trials: usize,
}

impl Default for SyncSection {
    fn default() -> Self {
        SyncSection {
            anchor: None,
            snr_db: Some(20.0),
            trials: 100,
        }
    }
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl RadarSection {
    fn to_unit(&self) -> RadarUnit {
        let mut r = RadarUnit::uniform_linear(v3(self.origin), self.carrier_hz, self.n_tx.max(1), self.n_rx.max(1));
        if let Some(t) = &self.tx_offsets {
            r.tx_offsets = t.iter().copied().map(v3).collect();
        }
        if let Some(t) = &self.rx_offsets {
            r.rx_offsets = t.iter().copied().map(v3).collect();
        }
        if self.n_tx == 0 && self.tx_offsets.is_none() {
            r.tx_offsets.clear();
        }
        if self.n_rx == 0 && self.rx_offsets.is_none() {
            r.rx_offsets.clear();
        }
        r.bandwidth_hz = self.bandwidth_hz;
        r.chirp_s = self.chirp_s;
        r.pri_s = self.pri_s;
        r.fs_hz = self.fs_hz;
        r.n_chirps = self.n_chirps;
        r.sync_offset_s = self.sync_offset_s;
        r.position_error = v3(self.position_error);
        r
    }
}

impl Config {
    /// Reads a config file, or the `config` member of a run manifest.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let value = match value {
            Value::Object(mut m) if m.get("command").is_some_and(Value::is_string) => {
                m.remove("config").unwrap_or(Value::Null)
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn scene(&self) -> Scene {
        let q = self.scene.radars.len();
        Scene {
            radars: self.scene.radars.iter().map(RadarSection::to_unit).collect(),
            targets: self
                .scene
                .targets
                .iter()
                .map(|t| match &t.per_sensor {
                    Some(v) => Target {
                        position: v3(t.position),
                        reflectivity: v.iter().map(Reflectivity::complex).collect(),
                    },
                    None => Target::uniform(
                        v3(t.position),
                        Reflectivity {
                            amplitude: t.amplitude,
                            phase_deg: t.phase_deg,
                        }
                        .complex(),
                        q,
                    ),
                })
                .collect(),
            ego_velocity: v3(self.scene.ego_velocity),
        }
    }

    pub fn grid(&self) -> Result<ImagingGrid, CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Usage("config has no grid section".into()))?;
        let mut grid = match (g.spacing, g.nx, g.ny) {
            (Some(s), None, None) => ImagingGrid::with_spacing(g.x_range, g.y_range, s),
            (None, Some(nx), Some(ny)) => ImagingGrid::new(g.x_range, g.y_range, nx, ny),
            _ => {
                return Err(CliError::Usage(
                    "grid needs either spacing or both nx and ny".into(),
                ))
            }
        }
        .map_err(CliError::from_config)?;
        grid.z = g.z;
        Ok(grid)
    }

    /// Every problem with the scene at once.
    pub fn validate_scene(&self) -> Result<Scene, CliError> {
        let scene = self.scene();
        let mut problems = Vec::new();
        if let Err(e) = scene.validate() {
            match e {
                RadarError::Config(p) => problems.extend(p),
                other => problems.push(other.to_string()),
            }
        }
        for (i, t) in self.scene.targets.iter().enumerate() {
            if let Some(v) = &t.per_sensor {
                if v.len() != self.scene.radars.len() {
                    problems.push(format!(
                        "targets[{i}].per_sensor has {} entries for {} radars",
                        v.len(),
                        self.scene.radars.len()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(scene)
        } else {
            Err(CliError::Usage(RadarError::Config(problems).to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(v: Value) -> Config {
        serde_json::from_value(v).unwrap()
    }

    fn minimal() -> Value {
        serde_json::json!({
            "scene": {
                "radars": [{"origin": [0.0, 0.0, 0.0]}, {"origin": [1.0, 0.0, 0.0]}],
                "targets": [{"position": [0.0, 20.0, 0.0], "amplitude": 2.0, "phase_deg": 90.0}]
            },
            "grid": {"x_range": [-1.0, 1.0], "y_range": [19.0, 21.0], "spacing": 0.5}
        })
    }

    #[test]
    fn phases_are_degrees() {
        let s = parse(minimal()).scene();
        let a = s.targets[0].reflectivity[1];
        assert!((a - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn point_cloud_angles_are_degrees() {
        let b = BoundsSection::default().point_cloud();
        assert!((b.azimuth_std_rad - 0.02 * std::f64::consts::PI / 180.0).abs() < 1e-15);
    }

    #[test]
    fn radar_defaults_follow_the_imaging_waveform() {
        let s = parse(minimal()).scene();
        let r = &s.radars[0];
        assert_eq!((r.n_tx(), r.n_rx(), r.n_chirps, r.n_samples()), (2, 4, 10, 150));
        assert_eq!(r.carrier_hz, 77e9);
    }

    #[test]
    fn grid_takes_spacing_or_counts_but_not_both() {
        let c = parse(minimal());
        assert_eq!(c.grid().unwrap().len(), 25);
        let mut v = minimal();
        v["grid"]["nx"] = serde_json::json!(3);
        assert!(matches!(parse(v).grid(), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal();
        v["scene"]["radars"][0]["carrier"] = serde_json::json!(77e9);
        assert!(serde_json::from_value::<Config>(v).is_err());
    }

    #[test]
    fn per_sensor_length_is_checked() {
        let mut v = minimal();
        v["scene"]["targets"][0]["per_sensor"] = serde_json::json!([{"amplitude": 1.0}]);
        let err = parse(v).validate_scene().unwrap_err().to_string();
        assert!(err.contains("per_sensor has 1 entries for 2 radars"), "{err}");
    }
}
