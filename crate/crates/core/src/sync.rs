//! Clock-offset estimation from a strong isolated anchor target.
//!
//! A sensor's offset σ_q shows up only as the phase of
//! c_q = exp(-j2π f_c 2 v_q σ_q / c), so it is read off the amplitude ratio
//! between sensor q and the reference sensor 0 at an anchor cell.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::ImagingGrid;
use crate::error::{RadarError, Result};
use crate::recovery::SparseImage;
use crate::scene::{Scene, SPEED_OF_LIGHT};
use crate::signal::{steering_block, BasebandCube};

/// Projected speeds below this are treated as a static sensor.
pub const MIN_OBSERVABLE_SPEED: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncEstimate {
    /// σ̂_q relative to sensor 0, seconds.
    pub offsets_s: Vec<f64>,
    /// arg ĉ_q, circular mean over anchors.
    pub phases_rad: Vec<f64>,
    /// Mean normalised matched-filter correlation at the anchors.
    pub confidence: Vec<f64>,
    pub anchor_cells: Vec<usize>,
    /// Largest |σ| that maps to an unwrapped phase, c / (4 f_c |v_q|),
    /// smallest over anchors.
    pub valid_range_s: Vec<f64>,
    /// Set when an anchor phase sits at ±π and may have wrapped.
    pub ambiguous: Vec<bool>,
}

impl SyncEstimate {
    pub fn report(&self) -> String {
        let mut s = format!("anchor cells: {:?}\n", self.anchor_cells);
        for q in 0..self.offsets_s.len() {
            let _ = writeln!(
                s,
                "sensor {q}: offset {:.6} us, phase {:+.4} rad, confidence {:.4}, valid |offset| < {:.3} us{}",
                self.offsets_s[q] * 1e6,
                self.phases_rad[q],
                self.confidence[q],
                self.valid_range_s[q] * 1e6,
                if self.ambiguous[q] { " (phase may have wrapped)" } else { "" }
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sensor,offset_s,phase_rad,confidence,valid_range_s,ambiguous\n");
        for q in 0..self.offsets_s.len() {
            let _ = writeln!(
                s,
                "{q},{:e},{},{},{:e},{}",
                self.offsets_s[q], self.phases_rad[q], self.confidence[q], self.valid_range_s[q], self.ambiguous[q]
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| RadarError::io(path, e))
    }
}

/// Up to `count` detected cells, strongest first, each at least
/// `min_isolation_m` away from every stronger detection.
pub fn select_anchor(
    image: &SparseImage,
    grid: &ImagingGrid,
    min_isolation_m: f64,
    count: usize,
) -> Result<Vec<usize>> {
    let mags = image.cell_magnitudes();
    let mut ranked: Vec<usize> = image.support.iter().copied().filter(|&l| mags[l] > 0.0).collect();
    ranked.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (i, &l) in ranked.iter().enumerate() {
        if out.len() >= count {
            break;
        }
        if ranked[..i].iter().all(|&s| grid.distance(s, l) >= min_isolation_m) {
            out.push(l);
        }
    }
    if out.is_empty() {
        return Err(RadarError::NoAnchor(min_isolation_m));
    }
    Ok(out)
}

fn wrap(phase: f64) -> f64 {
    let w = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Matched-filter offset estimate at the given anchor cells.
///
/// Offsets are relative to sensor 0. Several anchors are combined by
/// weighted least squares on the phases, since each anchor has its own
/// projected speed.
pub fn estimate_offsets(
    scene: &Scene,
    grid: &ImagingGrid,
    data: &BasebandCube,
    anchor_cells: &[usize],
) -> Result<SyncEstimate> {
    let dims = scene.dims();
    if data.dims != dims {
        return Err(RadarError::Argument(format!(
            "data dims {:?} do not match scene dims {:?}",
            data.dims, dims
        )));
    }
    if anchor_cells.is_empty() {
        return Err(RadarError::Argument("no anchor cells given".into()));
    }
    if let Some(&bad) = anchor_cells.iter().find(|&&l| l >= grid.len()) {
        return Err(RadarError::IndexOutOfRange {
            what: "anchor cell",
            index: bad,
            len: grid.len(),
        });
    }
    let q_n = dims.q;
    // per anchor and sensor: ML amplitude, correlation, slope κ = dφ/dσ
    let mut num = vec![0.0; q_n];
    let mut den = vec![0.0; q_n];
    let mut phase_sum = vec![Complex64::new(0.0, 0.0); q_n];
    let mut confidence = vec![0.0; q_n];
    let mut valid = vec![f64::INFINITY; q_n];
    let mut ambiguous = vec![false; q_n];
    for &cell in anchor_cells {
        let p = grid.position(cell);
        let mut amps = Vec::with_capacity(q_n);
        for q in 0..q_n {
            let h = steering_block(scene, q, &p)?;
            let z = data.sensor_block(q);
            let hz: Complex64 = h.iter().zip(z).map(|(a, b)| a.conj() * b).sum();
            let hh: f64 = h.iter().map(|v| v.norm_sqr()).sum();
            let zz: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            amps.push(hz / hh);
            confidence[q] += if zz > 0.0 { hz.norm() / (hh * zz).sqrt() } else { 0.0 };
        }
        for q in 0..q_n {
            let (_, v) = scene.direction_and_doppler(q, &p)?;
            let fc = scene.radars[q].carrier_hz;
            if q > 0 && v.abs() < MIN_OBSERVABLE_SPEED {
                return Err(RadarError::Unobservable { sensor: q, speed: v });
            }
            if v.abs() >= MIN_OBSERVABLE_SPEED {
                valid[q] = valid[q].min(SPEED_OF_LIGHT / (4.0 * fc * v.abs()));
            }
            if q == 0 {
                continue;
            }
            let ratio = amps[q] * amps[0].conj();
            if ratio.norm() == 0.0 {
                continue;
            }
            let phi = ratio.arg();
            if phi.abs() >= PI * (1.0 - 1e-6) {
                ambiguous[q] = true;
                log::warn!("sensor {q}: anchor phase {phi:.6} at the wrap boundary, offset may be aliased");
            }
            let kappa = -2.0 * PI * fc * 2.0 * v / SPEED_OF_LIGHT;
            let w = ratio.norm();
            num[q] += w * kappa * phi;
            den[q] += w * kappa * kappa;
            phase_sum[q] += ratio / ratio.norm() * w;
        }
    }
    let n_a = anchor_cells.len() as f64;
    let mut offsets = vec![0.0; q_n];
    let mut phases = vec![0.0; q_n];
    for q in 1..q_n {
        if den[q] > 0.0 {
            offsets[q] = num[q] / den[q];
            phases[q] = wrap(phase_sum[q].arg());
        }
    }
    for c in &mut confidence {
        *c /= n_a;
    }
    Ok(SyncEstimate {
        offsets_s: offsets,
        phases_rad: phases,
        confidence,
        anchor_cells: anchor_cells.to_vec(),
        valid_range_s: valid,
        ambiguous,
    })
}
