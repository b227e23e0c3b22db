//! Baseband synthesis for the TDM MIMO FMCW model.
//!
//! A sample of sensor q, receiver m, transmitter n, chirp k and fast-time
//! index n_s for a scatterer at p is
//!
//! ```text
//! h = exp(-j2π [ f_c g / c + (2 f_c v_q / c + B_r g / c) n_s T_s
//!                + 2 f_c v_q T_r / c (n + k N) ])
//! ```
//!
//! with g the bistatic range and v_q the line-of-sight ego speed. The clock
//! offset of sensor q only shows up as the constant phase `c_q`.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::scene::{CubeDims, RadarUnit, Scene, Vec3, SPEED_OF_LIGHT};

/// Complex samples in canonical (q, m, n, k, n_s) order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandCube {
    pub samples: Vec<Complex64>,
    pub dims: CubeDims,
    pub sample_period_s: f64,
}

impl BasebandCube {
    pub fn zeros(dims: CubeDims, sample_period_s: f64) -> Self {
        BasebandCube {
            samples: vec![Complex64::new(0.0, 0.0); dims.len()],
            dims,
            sample_period_s,
        }
    }

    pub fn get(&self, q: usize, m: usize, n: usize, k: usize, ns: usize) -> Complex64 {
        self.samples[self.dims.index(q, m, n, k, ns)]
    }

    pub fn sensor_block(&self, q: usize) -> &[Complex64] {
        let len = self.dims.per_sensor();
        &self.samples[q * len..(q + 1) * len]
    }

    /// Mean |sample|^2.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Writes `<stem>.bin` (little-endian f32 re/im pairs) and `<stem>.hdr`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let bin = stem.with_extension("bin");
        let hdr = stem.with_extension("hdr");
        let mut bytes = Vec::with_capacity(self.samples.len() * 8);
        for s in &self.samples {
            bytes.extend_from_slice(&(s.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| RadarError::io(&bin, e))?;
        let d = self.dims;
        let text = format!(
            "format complex64-le\ndims {} {} {} {} {}\nsample_period_s {:e}\n",
            d.q, d.m, d.n, d.k, d.ns, self.sample_period_s
        );
        let mut f = fs::File::create(&hdr).map_err(|e| RadarError::io(&hdr, e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| RadarError::io(&hdr, e))
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let hdr = stem.with_extension("hdr");
        let bin = stem.with_extension("bin");
        let text = fs::read_to_string(&hdr).map_err(|e| RadarError::io(&hdr, e))?;
        let parse_err = |message: String| RadarError::Parse {
            context: hdr.display().to_string(),
            message,
        };
        let mut dims = None;
        let mut ts = None;
        for line in text.lines() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("dims") => {
                    let v: Vec<usize> = parts
                        .map(|p| p.parse().map_err(|e| parse_err(format!("dims: {e}"))))
                        .collect::<Result<_>>()?;
                    if v.len() != 5 {
                        return Err(parse_err("dims needs five values".into()));
                    }
                    dims = Some(CubeDims {
                        q: v[0],
                        m: v[1],
                        n: v[2],
                        k: v[3],
                        ns: v[4],
                    });
                }
                Some("sample_period_s") => {
                    let v = parts
                        .next()
                        .ok_or_else(|| parse_err("missing sample period".into()))?;
                    ts = Some(
                        v.parse::<f64>()
                            .map_err(|e| parse_err(format!("sample_period_s: {e}")))?,
                    );
                }
                Some("format") => {
                    if parts.next() != Some("complex64-le") {
                        return Err(parse_err("unsupported sample format".into()));
                    }
                }
                _ => {}
            }
        }
        let dims = dims.ok_or_else(|| parse_err("missing dims".into()))?;
        let ts = ts.ok_or_else(|| parse_err("missing sample_period_s".into()))?;
        let bytes = fs::read(&bin).map_err(|e| RadarError::io(&bin, e))?;
        if bytes.len() != dims.len() * 8 {
            return Err(RadarError::Parse {
                context: bin.display().to_string(),
                message: format!("expected {} bytes, found {}", dims.len() * 8, bytes.len()),
            });
        }
        let samples = bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(BasebandCube {
            samples,
            dims,
            sample_period_s: ts,
        })
    }
}

/// Diagonal circular Gaussian noise, `variance` per complex sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            variance: 0.0,
            seed: 0,
        }
    }
}

/// Per-sample noise variance giving `snr_db` against `signal_power`.
pub fn snr_to_variance(snr_db: f64, signal_power: f64) -> Result<f64> {
    if !(signal_power >= 0.0) || !signal_power.is_finite() || !snr_db.is_finite() {
        return Err(RadarError::Argument(format!(
            "cannot derive a noise variance from signal power {signal_power} at {snr_db} dB"
        )));
    }
    Ok(signal_power * 10f64.powf(-snr_db / 10.0))
}

#[inline]
fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Phase model of one sensor toward one scatterer, with every per-element
/// bistatic range precomputed.
#[derive(Debug, Clone)]
pub(crate) struct SensorResponse {
    n_tx: usize,
    ranges: Vec<f64>, // [m * n_tx + n]
    carrier_term: f64,
    fast_doppler: f64,
    fast_range: f64,
    slow: f64,
    ts: f64,
    pub(crate) v_q: f64,
}

impl SensorResponse {
    pub(crate) fn new(scene: &Scene, q: usize, p: &Vec3) -> Result<Self> {
        let radar = scene.radar(q)?;
        let (_, v_q) = scene.direction_and_doppler(q, p)?;
        let mut ranges = Vec::with_capacity(radar.n_rx() * radar.n_tx());
        for m in 0..radar.n_rx() {
            for n in 0..radar.n_tx() {
                ranges.push(scene.bistatic_range(q, m, n, p)?);
            }
        }
        let fc = radar.carrier_hz;
        Ok(SensorResponse {
            n_tx: radar.n_tx(),
            ranges,
            carrier_term: fc / SPEED_OF_LIGHT,
            fast_doppler: 2.0 * fc * v_q / SPEED_OF_LIGHT,
            fast_range: radar.chirp_slope() / SPEED_OF_LIGHT,
            slow: 2.0 * fc * v_q * radar.pri_s / SPEED_OF_LIGHT,
            ts: radar.sample_period(),
            v_q,
        })
    }

    #[inline]
    pub(crate) fn range(&self, m: usize, n: usize) -> f64 {
        self.ranges[m * self.n_tx + n]
    }

    /// Fast-time time stamp of sample n_s.
    #[inline]
    pub(crate) fn time(&self, ns: usize) -> f64 {
        ns as f64 * self.ts
    }

    #[inline]
    pub(crate) fn element(&self, m: usize, n: usize, k: usize, ns: usize) -> Complex64 {
        let g = self.range(m, n);
        let t = self.time(ns);
        let slot = (n + k * self.n_tx) as f64;
        let cycles = frac(self.carrier_term * g)
            + frac((self.fast_doppler + self.fast_range * g) * t)
            + frac(self.slow * slot);
        let (s, c) = (-TAU * frac(cycles)).sin_cos();
        Complex64::new(c, s)
    }

    /// Fills `out` (length M N K N_s) with this sensor's block.
    pub(crate) fn fill(&self, dims: &CubeDims, scale: Complex64, out: &mut [Complex64]) {
        let mut i = 0;
        for m in 0..dims.m {
            for n in 0..dims.n {
                for k in 0..dims.k {
                    for ns in 0..dims.ns {
                        out[i] = scale * self.element(m, n, k, ns);
                        i += 1;
                    }
                }
            }
        }
    }

    pub(crate) fn accumulate(&self, dims: &CubeDims, scale: Complex64, out: &mut [Complex64]) {
        let mut i = 0;
        for m in 0..dims.m {
            for n in 0..dims.n {
                for k in 0..dims.k {
                    for ns in 0..dims.ns {
                        out[i] += scale * self.element(m, n, k, ns);
                        i += 1;
                    }
                }
            }
        }
    }
}

/// One entry of the steering vector h(p).
pub fn steering_element(
    scene: &Scene,
    q: usize,
    m: usize,
    n: usize,
    k: usize,
    ns: usize,
    p: &Vec3,
) -> Result<Complex64> {
    let dims = scene.dims();
    if k >= dims.k {
        return Err(RadarError::IndexOutOfRange {
            what: "chirp",
            index: k,
            len: dims.k,
        });
    }
    if ns >= dims.ns {
        return Err(RadarError::IndexOutOfRange {
            what: "fast-time sample",
            index: ns,
            len: dims.ns,
        });
    }
    // range lookup validates q, m, n
    scene.bistatic_range(q, m, n, p)?;
    Ok(SensorResponse::new(scene, q, p)?.element(m, n, k, ns))
}

/// Sensor-q segment h_q(p) of the steering vector.
pub fn steering_block(scene: &Scene, q: usize, p: &Vec3) -> Result<Vec<Complex64>> {
    let dims = scene.dims();
    let mut out = vec![Complex64::new(0.0, 0.0); dims.per_sensor()];
    SensorResponse::new(scene, q, p)?.fill(&dims, Complex64::new(1.0, 0.0), &mut out);
    Ok(out)
}

/// Full stacked steering vector h(p).
pub fn steering_vector(scene: &Scene, p: &Vec3) -> Result<Vec<Complex64>> {
    let dims = scene.dims();
    let per = dims.per_sensor();
    let mut out = vec![Complex64::new(0.0, 0.0); dims.len()];
    for q in 0..dims.q {
        SensorResponse::new(scene, q, p)?.fill(
            &dims,
            Complex64::new(1.0, 0.0),
            &mut out[q * per..(q + 1) * per],
        );
    }
    Ok(out)
}

/// Clock-offset phase term c_q = exp(-j2π f_c 2 v_q σ_q / c).
pub fn sync_phase(radar: &RadarUnit, v_q: f64) -> Complex64 {
    sync_phase_for(radar.carrier_hz, v_q, radar.sync_offset_s)
}

pub(crate) fn sync_phase_for(carrier_hz: f64, v_q: f64, offset_s: f64) -> Complex64 {
    Complex64::from_polar(1.0, sync_phase_angle(carrier_hz, v_q, offset_s))
}

pub(crate) fn sync_phase_angle(carrier_hz: f64, v_q: f64, offset_s: f64) -> f64 {
    -TAU * carrier_hz * 2.0 * v_q / SPEED_OF_LIGHT * offset_s
}

/// Per-sensor received amplitude α_q = α̃_q c_q of every target.
pub fn received_amplitudes(scene: &Scene) -> Result<Vec<Vec<Complex64>>> {
    scene
        .targets
        .iter()
        .map(|t| {
            (0..scene.n_sensors())
                .map(|q| {
                    let (_, v_q) = scene.direction_and_doppler(q, &t.position)?;
                    Ok(t.reflectivity[q] * sync_phase(&scene.radars[q], v_q))
                })
                .collect()
        })
        .collect()
}

/// Noise-free non-coherent measurement plus noise drawn per `noise`.
pub fn synthesize_noncoherent(scene: &Scene, noise: &NoiseSpec) -> Result<BasebandCube> {
    scene.validate()?;
    if !(noise.variance >= 0.0) {
        return Err(RadarError::Argument(format!(
            "noise variance {} is negative",
            noise.variance
        )));
    }
    let dims = scene.dims();
    let amplitudes = received_amplitudes(scene)?;
    // (target, sensor) responses
    let responses: Vec<Vec<SensorResponse>> = scene
        .targets
        .iter()
        .map(|t| {
            (0..dims.q)
                .map(|q| SensorResponse::new(scene, q, &t.position))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut cube = BasebandCube::zeros(dims, scene.radars[0].sample_period());
    let per = dims.per_sensor();
    cube.samples
        .par_chunks_mut(per)
        .enumerate()
        .for_each(|(q, block)| {
            for (t, resp) in responses.iter().enumerate() {
                resp[q].accumulate(&dims, amplitudes[t][q], block);
            }
        });
    if noise.variance > 0.0 {
        add_noise_in_place(&mut cube, noise);
    }
    Ok(cube)
}

/// Same as the non-coherent synthesis but requires every target to have
/// one reflectivity shared by all sensors. Clock-offset phases still apply.
pub fn synthesize_coherent(scene: &Scene, noise: &NoiseSpec) -> Result<BasebandCube> {
    for (i, t) in scene.targets.iter().enumerate() {
        if !t.is_uniform() {
            return Err(RadarError::Contract(format!(
                "target {i} has sensor-dependent reflectivity; coherent synthesis needs one value"
            )));
        }
    }
    synthesize_noncoherent(scene, noise)
}

/// Returns a copy of `cube` with circular Gaussian noise added.
pub fn add_noise(cube: &BasebandCube, spec: &NoiseSpec) -> Result<BasebandCube> {
    if !(spec.variance >= 0.0) {
        return Err(RadarError::Argument(format!(
            "noise variance {} is negative",
            spec.variance
        )));
    }
    let mut out = cube.clone();
    add_noise_in_place(&mut out, spec);
    Ok(out)
}

/// One ChaCha stream per (q, m, n, k) row, so output does not depend on
/// how rows are scheduled across threads.
fn add_noise_in_place(cube: &mut BasebandCube, spec: &NoiseSpec) {
    let sd = (spec.variance / 2.0).sqrt();
    let ns = cube.dims.ns.max(1);
    cube.samples
        .par_chunks_mut(ns)
        .enumerate()
        .for_each(|(row, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(row as u64);
            for s in chunk.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *s += Complex64::new(sd * re, sd * im);
            }
        });
}

/// Header path helper used by the CLI.
pub fn cube_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("hdr"))
}
