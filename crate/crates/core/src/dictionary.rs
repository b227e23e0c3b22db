//! Imaging grid, sensing operators and point-target responses.
//!
//! Grid cells are numbered row-major with x fastest: `l = iy * nx + ix`.
//! A block dictionary has `L * Q` columns; column `l * Q + q` holds the
//! sensor-q segment of h(Φ_l) and is zero in every other sensor's rows.
//! A coherent dictionary has `L` full-length columns carrying the clock
//! phase c_q of the supplied offsets.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::scene::{CubeDims, Scene, Vec3};
use crate::signal::{sync_phase_for, SensorResponse};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Rectangular grid of candidate scatterer positions at height `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub z: f64,
}

impl ImagingGrid {
    pub fn new(x_range: [f64; 2], y_range: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if nx == 0 || ny == 0 {
            problems.push(format!("grid needs at least one cell per axis, got {nx} x {ny}"));
        }
        for (name, r, n) in [("x", x_range, nx), ("y", y_range, ny)] {
            if !(r[0].is_finite() && r[1].is_finite()) || r[1] < r[0] || (n > 1 && r[1] == r[0]) {
                problems.push(format!("{name}_range {r:?} is not an increasing interval"));
            }
        }
        if !problems.is_empty() {
            return Err(RadarError::Config(problems));
        }
        Ok(ImagingGrid {
            x_range,
            y_range,
            nx,
            ny,
            z: 0.0,
        })
    }

    /// Grid with cells every `step` metres from each range start.
    pub fn with_spacing(x_range: [f64; 2], y_range: [f64; 2], step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(RadarError::Config(vec![format!("grid spacing {step} must be positive")]));
        }
        let count = |r: [f64; 2]| ((r[1] - r[0]) / step + 1e-9).floor() as usize + 1;
        let nx = count(x_range);
        let ny = count(y_range);
        Self::new(
            [x_range[0], x_range[0] + (nx - 1) as f64 * step],
            [y_range[0], y_range[0] + (ny - 1) as f64 * step],
            nx,
            ny,
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(r: [f64; 2], n: usize, i: usize) -> f64 {
        if n == 1 {
            r[0]
        } else {
            r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| Self::axis(self.x_range, self.nx, i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|i| Self::axis(self.y_range, self.ny, i)).collect()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// (ix, iy) of cell `l`.
    pub fn coords(&self, l: usize) -> (usize, usize) {
        (l % self.nx, l / self.nx)
    }

    pub fn position(&self, l: usize) -> Vec3 {
        let (ix, iy) = self.coords(l);
        Vec3::new(
            Self::axis(self.x_range, self.nx, ix),
            Self::axis(self.y_range, self.ny, iy),
            self.z,
        )
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let tol = 1e-9;
        p.x >= self.x_range[0] - tol
            && p.x <= self.x_range[1] + tol
            && p.y >= self.y_range[0] - tol
            && p.y <= self.y_range[1] + tol
    }

    /// Index of the cell closest to `p` in the xy plane.
    pub fn nearest(&self, p: &Vec3) -> usize {
        let pick = |r: [f64; 2], n: usize, v: f64| -> usize {
            if n == 1 {
                return 0;
            }
            let step = (r[1] - r[0]) / (n - 1) as f64;
            ((v - r[0]) / step).round().clamp(0.0, (n - 1) as f64) as usize
        };
        self.index(pick(self.x_range, self.nx, p.x), pick(self.y_range, self.ny, p.y))
    }

    /// Planar distance between the centres of two cells.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.position(a), self.position(b));
        (pa.x - pb.x).hypot(pa.y - pb.y)
    }
}

/// Linear map from image coefficients to measurements.
pub trait SensingOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// Columns per grid cell (Q for block dictionaries, 1 otherwise).
    fn block_size(&self) -> usize {
        1
    }

    /// Nonzero part of column `j` and the row it starts at.
    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>);

    fn column(&self, j: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows()];
        let (start, seg) = self.segment(j);
        out[start..start + seg.len()].copy_from_slice(&seg);
        out
    }

    fn column_norm_sqr(&self, j: usize) -> f64 {
        self.segment(j).1.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `H x`.
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows()];
        for (j, &c) in x.iter().enumerate() {
            if c != ZERO {
                let (start, seg) = self.segment(j);
                for (o, s) in out[start..start + seg.len()].iter_mut().zip(seg.iter()) {
                    *o += c * s;
                }
            }
        }
        out
    }

    /// `Hᴴ y`.
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..self.cols())
            .into_par_iter()
            .map(|j| {
                let (start, seg) = self.segment(j);
                seg.iter()
                    .zip(&y[start..start + seg.len()])
                    .map(|(h, v)| h.conj() * v)
                    .sum()
            })
            .collect()
    }
}

/// Whether dictionary columns are stored or regenerated on every use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Materialize {
    /// Store when within the budget, otherwise generate on demand.
    #[default]
    Auto,
    /// Store; exceeding the budget is an error.
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryOptions {
    pub materialize: Materialize,
    pub memory_budget_bytes: usize,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        DictionaryOptions {
            materialize: Materialize::Auto,
            memory_budget_bytes: 1 << 30,
        }
    }
}

/// Column generator shared by both dictionary kinds.
#[derive(Debug, Clone)]
struct GridColumns {
    scene: Scene,
    grid: ImagingGrid,
    dims: CubeDims,
    /// Per-sensor clock offsets for coherent columns.
    offsets: Option<Vec<f64>>,
    stored: Option<Vec<Complex64>>,
}

impl GridColumns {
    fn new(scene: &Scene, grid: &ImagingGrid, offsets: Option<Vec<f64>>, opts: &DictionaryOptions) -> Result<Self> {
        let geometry = Scene {
            targets: Vec::new(),
            ..scene.clone()
        };
        geometry.validate()?;
        let dims = geometry.dims();
        if let Some(o) = &offsets {
            if o.len() != dims.q {
                return Err(RadarError::Argument(format!(
                    "{} sync offsets for {} sensors",
                    o.len(),
                    dims.q
                )));
            }
        }
        let mut g = GridColumns {
            scene: geometry,
            grid: grid.clone(),
            dims,
            offsets,
            stored: None,
        };
        // every column must be evaluable before we promise lazy access
        for l in 0..grid.len() {
            for q in 0..dims.q {
                SensorResponse::new(&g.scene, q, &grid.position(l))?;
            }
        }
        let cols = g.cols();
        let seg = g.seg_len();
        let bytes = cols * seg * std::mem::size_of::<Complex64>();
        let fits = bytes <= opts.memory_budget_bytes;
        let store = match opts.materialize {
            Materialize::Never => false,
            Materialize::Auto => fits,
            Materialize::Always if fits => true,
            Materialize::Always => {
                return Err(RadarError::SizeLimit {
                    rows: dims.len(),
                    cols,
                    bytes,
                    budget: opts.memory_budget_bytes,
                })
            }
        };
        if store {
            let mut data = vec![ZERO; cols * seg];
            data.par_chunks_mut(seg)
                .enumerate()
                .for_each(|(j, out)| g.generate(j, out));
            g.stored = Some(data);
        } else {
            log::info!("dictionary of {bytes} bytes generated on demand");
        }
        Ok(g)
    }

    fn cols(&self) -> usize {
        match self.offsets {
            Some(_) => self.grid.len(),
            None => self.grid.len() * self.dims.q,
        }
    }

    fn seg_len(&self) -> usize {
        match self.offsets {
            Some(_) => self.dims.len(),
            None => self.dims.per_sensor(),
        }
    }

    fn generate(&self, j: usize, out: &mut [Complex64]) {
        let per = self.dims.per_sensor();
        match &self.offsets {
            None => {
                let (l, q) = (j / self.dims.q, j % self.dims.q);
                SensorResponse::new(&self.scene, q, &self.grid.position(l))
                    .expect("validated at construction")
                    .fill(&self.dims, Complex64::new(1.0, 0.0), out);
            }
            Some(offsets) => {
                let p = self.grid.position(j);
                for q in 0..self.dims.q {
                    let resp = SensorResponse::new(&self.scene, q, &p).expect("validated at construction");
                    let cq = sync_phase_for(self.scene.radars[q].carrier_hz, resp.v_q, offsets[q]);
                    resp.fill(&self.dims, cq, &mut out[q * per..(q + 1) * per]);
                }
            }
        }
    }

    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
        let seg = self.seg_len();
        let start = match self.offsets {
            Some(_) => 0,
            None => (j % self.dims.q) * self.dims.per_sensor(),
        };
        match &self.stored {
            Some(data) => (start, Cow::Borrowed(&data[j * seg..(j + 1) * seg])),
            None => {
                let mut v = vec![ZERO; seg];
                self.generate(j, &mut v);
                (start, Cow::Owned(v))
            }
        }
    }
}

/// Non-coherent dictionary `[H_s(Φ_1), ..., H_s(Φ_L)]`.
#[derive(Debug, Clone)]
pub struct BlockDictionary {
    inner: GridColumns,
}

impl BlockDictionary {
    pub fn grid(&self) -> &ImagingGrid {
        &self.inner.grid
    }

    pub fn n_sensors(&self) -> usize {
        self.inner.dims.q
    }

    /// Column span of cell `l`.
    pub fn block_index(&self, l: usize) -> Range<usize> {
        let q = self.inner.dims.q;
        l * q..(l + 1) * q
    }

    pub fn is_materialized(&self) -> bool {
        self.inner.stored.is_some()
    }

    /// Regenerates column `j` without touching stored data.
    pub fn generate_column(&self, j: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows()];
        let per = self.inner.dims.per_sensor();
        let start = (j % self.inner.dims.q) * per;
        self.inner.generate(j, &mut out[start..start + per]);
        out
    }
}

impl SensingOperator for BlockDictionary {
    fn rows(&self) -> usize {
        self.inner.dims.len()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn block_size(&self) -> usize {
        self.inner.dims.q
    }
    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
        self.inner.segment(j)
    }
}

impl BlockDictionary {
    /// Coherent dictionary as a phase-weighted sum of the stored blocks:
    /// column l is `Σ_q c_q(σ_q, v_q(l)) h_q(Φ_l)`. Cheap to build, so a new
    /// offset estimate does not need a new dictionary.
    pub fn synchronized(&self, sync_offsets: &[f64]) -> Result<SynchronizedBlocks<'_>> {
        let q_n = self.inner.dims.q;
        if sync_offsets.len() != q_n {
            return Err(RadarError::Argument(format!(
                "{} sync offsets for {} sensors",
                sync_offsets.len(),
                q_n
            )));
        }
        let scene = &self.inner.scene;
        let mut weights = Vec::with_capacity(self.inner.cols());
        for l in 0..self.inner.grid.len() {
            let p = self.inner.grid.position(l);
            for (q, &offset) in sync_offsets.iter().enumerate() {
                let (_, v) = scene.direction_and_doppler(q, &p)?;
                weights.push(sync_phase_for(scene.radars[q].carrier_hz, v, offset));
            }
        }
        Ok(SynchronizedBlocks { blocks: self, weights })
    }
}

/// Coherent view of a [`BlockDictionary`], see [`BlockDictionary::synchronized`].
#[derive(Debug, Clone)]
pub struct SynchronizedBlocks<'a> {
    blocks: &'a BlockDictionary,
    weights: Vec<Complex64>,
}

impl SensingOperator for SynchronizedBlocks<'_> {
    fn rows(&self) -> usize {
        self.blocks.rows()
    }
    fn cols(&self) -> usize {
        self.blocks.grid().len()
    }
    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
        let q_n = self.blocks.n_sensors();
        let per = self.blocks.inner.dims.per_sensor();
        let mut out = vec![ZERO; self.rows()];
        for q in 0..q_n {
            let (start, seg) = self.blocks.segment(j * q_n + q);
            let w = self.weights[j * q_n + q];
            debug_assert_eq!(start, q * per);
            for (o, s) in out[start..start + per].iter_mut().zip(seg.iter()) {
                *o = w * s;
            }
        }
        (0, Cow::Owned(out))
    }
    fn column_norm_sqr(&self, j: usize) -> f64 {
        let q_n = self.blocks.n_sensors();
        (j * q_n..(j + 1) * q_n).map(|c| self.blocks.column_norm_sqr(c)).sum()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let q_n = self.blocks.n_sensors();
        let expanded: Vec<Complex64> = self.weights.iter().enumerate().map(|(c, w)| w * x[c / q_n]).collect();
        self.blocks.apply(&expanded)
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let q_n = self.blocks.n_sensors();
        let full = self.blocks.adjoint(y);
        full.chunks(q_n)
            .zip(self.weights.chunks(q_n))
            .map(|(a, w)| a.iter().zip(w).map(|(a, w)| w.conj() * a).sum())
            .collect()
    }
}

/// Coherent dictionary `[h_c(Φ_1), ..., h_c(Φ_L)]`.
#[derive(Debug, Clone)]
pub struct CoherentDictionary {
    inner: GridColumns,
}

impl CoherentDictionary {
    pub fn grid(&self) -> &ImagingGrid {
        &self.inner.grid
    }

    pub fn sync_offsets(&self) -> &[f64] {
        self.inner.offsets.as_deref().unwrap_or(&[])
    }

    pub fn is_materialized(&self) -> bool {
        self.inner.stored.is_some()
    }

    pub fn generate_column(&self, j: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.rows()];
        self.inner.generate(j, &mut out);
        out
    }
}

impl SensingOperator for CoherentDictionary {
    fn rows(&self) -> usize {
        self.inner.dims.len()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
        self.inner.segment(j)
    }
}

pub fn build_block_dictionary(scene: &Scene, grid: &ImagingGrid, opts: &DictionaryOptions) -> Result<BlockDictionary> {
    Ok(BlockDictionary {
        inner: GridColumns::new(scene, grid, None, opts)?,
    })
}

/// `sync_offsets[q]` is the clock offset of sensor q in seconds; sensor 0
/// is the reference and normally 0.
pub fn build_coherent_dictionary(
    scene: &Scene,
    grid: &ImagingGrid,
    sync_offsets: &[f64],
    opts: &DictionaryOptions,
) -> Result<CoherentDictionary> {
    Ok(CoherentDictionary {
        inner: GridColumns::new(scene, grid, Some(sync_offsets.to_vec()), opts)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Gaussian,
    Subsample,
}

/// Measurement matrix G (P x n).
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    pub kind: CompressorKind,
    n_in: usize,
    /// Row-major P x n entries for the Gaussian kind.
    matrix: Vec<Complex64>,
    /// Selected input rows for the subsample kind.
    selected: Vec<usize>,
}

impl Compressor {
    /// Complex Gaussian entries with variance 1/P.
    pub fn gaussian(p: usize, n: usize, seed: u64) -> Result<Self> {
        Self::check_shape(p, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (0.5 / p as f64).sqrt();
        let matrix = (0..p * n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(sd * re, sd * im)
            })
            .collect();
        Ok(Compressor {
            kind: CompressorKind::Gaussian,
            n_in: n,
            matrix,
            selected: Vec::new(),
        })
    }

    /// `p` distinct input rows chosen uniformly, kept in ascending order.
    pub fn subsample(p: usize, n: usize, seed: u64) -> Result<Self> {
        Self::check_shape(p, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut selected = rand::seq::index::sample(&mut rng, n, p).into_vec();
        selected.sort_unstable();
        Self::selector(selected, n)
    }

    /// Explicit row selection, e.g. the identity when all rows are kept.
    pub fn selector(selected: Vec<usize>, n: usize) -> Result<Self> {
        let mut sorted = selected.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != selected.len() || selected.iter().any(|&i| i >= n) || selected.is_empty() {
            return Err(RadarError::Argument(
                "selector rows must be distinct and inside the input".into(),
            ));
        }
        Ok(Compressor {
            kind: CompressorKind::Subsample,
            n_in: n,
            matrix: Vec::new(),
            selected,
        })
    }

    fn check_shape(p: usize, n: usize) -> Result<()> {
        if p == 0 || p > n {
            return Err(RadarError::Argument(format!(
                "compressor needs 0 < P <= n, got P = {p}, n = {n}"
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        match self.kind {
            CompressorKind::Gaussian => self.matrix.len() / self.n_in,
            CompressorKind::Subsample => self.selected.len(),
        }
    }

    pub fn cols(&self) -> usize {
        self.n_in
    }

    /// `G x` where `x` is nonzero only on `start..start + seg.len()`.
    fn apply_segment(&self, start: usize, seg: &[Complex64]) -> Vec<Complex64> {
        match self.kind {
            CompressorKind::Gaussian => (0..self.rows())
                .map(|r| {
                    let row = &self.matrix[r * self.n_in + start..r * self.n_in + start + seg.len()];
                    row.iter().zip(seg).map(|(g, x)| g * x).sum()
                })
                .collect(),
            CompressorKind::Subsample => self
                .selected
                .iter()
                .map(|&i| {
                    if i >= start && i < start + seg.len() {
                        seg[i - start]
                    } else {
                        ZERO
                    }
                })
                .collect(),
        }
    }

    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n_in];
        match self.kind {
            CompressorKind::Gaussian => {
                for (r, yr) in y.iter().enumerate() {
                    let row = &self.matrix[r * self.n_in..(r + 1) * self.n_in];
                    for (o, g) in out.iter_mut().zip(row) {
                        *o += g.conj() * yr;
                    }
                }
            }
            CompressorKind::Subsample => {
                for (&i, v) in self.selected.iter().zip(y) {
                    out[i] = *v;
                }
            }
        }
        out
    }
}

/// `v = G r`.
pub fn compress(v: &[Complex64], g: &Compressor) -> Result<Vec<Complex64>> {
    if v.len() != g.cols() {
        return Err(RadarError::Argument(format!(
            "compressor expects {} inputs, got {}",
            g.cols(),
            v.len()
        )));
    }
    Ok(g.apply_segment(0, v))
}

/// `G H` applied without forming the product.
pub struct CompressedOperator<'a, O: SensingOperator> {
    g: &'a Compressor,
    inner: &'a O,
}

impl<'a, O: SensingOperator> CompressedOperator<'a, O> {
    pub fn new(g: &'a Compressor, inner: &'a O) -> Result<Self> {
        if g.cols() != inner.rows() {
            return Err(RadarError::Argument(format!(
                "compressor expects {} rows, dictionary has {}",
                g.cols(),
                inner.rows()
            )));
        }
        Ok(CompressedOperator { g, inner })
    }
}

impl<O: SensingOperator> SensingOperator for CompressedOperator<'_, O> {
    fn rows(&self) -> usize {
        self.g.rows()
    }
    fn cols(&self) -> usize {
        self.inner.cols()
    }
    fn block_size(&self) -> usize {
        self.inner.block_size()
    }
    fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
        let (start, seg) = self.inner.segment(j);
        (0, Cow::Owned(self.g.apply_segment(start, &seg)))
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let full = self.inner.apply(x);
        self.g.apply_segment(0, &full)
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.inner.adjoint(&self.g.adjoint(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtrfMode {
    /// First sensor only.
    Single,
    NonCoherent,
    Coherent,
}

/// Per-sensor inner products h_q(Φ)ᴴ h_q(p) for each probe point.
fn sensor_correlations(scene: &Scene, p_true: &Vec3, probes: &[Vec3]) -> Result<Vec<Vec<Complex64>>> {
    let geometry = Scene {
        targets: Vec::new(),
        ..scene.clone()
    };
    geometry.validate()?;
    let dims = geometry.dims();
    let per = dims.per_sensor();
    let truth: Vec<Vec<Complex64>> = (0..dims.q)
        .map(|q| {
            let mut v = vec![ZERO; per];
            SensorResponse::new(&geometry, q, p_true)?.fill(&dims, Complex64::new(1.0, 0.0), &mut v);
            Ok(v)
        })
        .collect::<Result<_>>()?;
    probes
        .par_iter()
        .map(|p| {
            let mut buf = vec![ZERO; per];
            (0..dims.q)
                .map(|q| {
                    SensorResponse::new(&geometry, q, p)?.fill(&dims, Complex64::new(1.0, 0.0), &mut buf);
                    Ok(buf.iter().zip(&truth[q]).map(|(a, b)| a.conj() * b).sum())
                })
                .collect()
        })
        .collect()
}

fn combine(mode: PtrfMode, corr: &[Complex64], weights: &[f64]) -> f64 {
    match mode {
        PtrfMode::Single => corr[0].norm(),
        PtrfMode::NonCoherent => corr.iter().zip(weights).map(|(c, w)| w * c.norm()).sum(),
        PtrfMode::Coherent => corr.iter().sum::<Complex64>().norm(),
    }
}

/// Matched-filter magnitude of a point target at `p_true` at each probe,
/// divided by its value at `p_true`. `alphas` weight the non-coherent sum
/// by |α_q|^2; `None` means unit reflectivities.
pub fn ptrf_at(
    scene: &Scene,
    p_true: &Vec3,
    probes: &[Vec3],
    mode: PtrfMode,
    alphas: Option<&[Complex64]>,
) -> Result<Vec<f64>> {
    let q = scene.n_sensors();
    let weights: Vec<f64> = match alphas {
        Some(a) if a.len() != q => {
            return Err(RadarError::Argument(format!("{} reflectivities for {q} sensors", a.len())))
        }
        Some(a) => a.iter().map(|v| v.norm_sqr()).collect(),
        None => vec![1.0; q],
    };
    let peak = combine(mode, &sensor_correlations(scene, p_true, &[*p_true])?[0], &weights);
    let corr = sensor_correlations(scene, p_true, probes)?;
    Ok(corr.iter().map(|c| combine(mode, c, &weights) / peak).collect())
}

/// Point-target response over the grid, normalised to a peak of 1.
pub fn ptrf(scene: &Scene, grid: &ImagingGrid, p_true: &Vec3, mode: PtrfMode) -> Result<Vec<f64>> {
    ptrf_weighted(scene, grid, p_true, mode, None)
}

pub fn ptrf_weighted(
    scene: &Scene,
    grid: &ImagingGrid,
    p_true: &Vec3,
    mode: PtrfMode,
    alphas: Option<&[Complex64]>,
) -> Result<Vec<f64>> {
    if !grid.contains(p_true) {
        return Err(RadarError::Argument(format!(
            "target {:?} lies outside the imaging grid",
            p_true.as_slice()
        )));
    }
    let probes: Vec<Vec3> = (0..grid.len()).map(|l| grid.position(l)).collect();
    let raw = ptrf_at(scene, p_true, &probes, mode, alphas)?;
    let max = raw.iter().cloned().fold(0.0, f64::max);
    Ok(raw.iter().map(|v| v / max).collect())
}

/// Full width of the main lobe around the maximum of `values` (sampled at
/// increasing `positions`) where it stays at or above `level` times the
/// maximum. Crossings are linearly interpolated; `None` when the lobe
/// touches either end.
pub fn main_lobe_width(positions: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let (imax, vmax) = values
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let thr = level * vmax;
    let cross = |i_in: usize, i_out: usize| {
        let (a, b) = (values[i_in], values[i_out]);
        let t = (a - thr) / (a - b);
        positions[i_in] + t * (positions[i_out] - positions[i_in])
    };
    let mut left = None;
    for i in (0..imax).rev() {
        if values[i] < thr {
            left = Some(cross(i + 1, i));
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..values.len() {
        if values[i] < thr {
            right = Some(cross(i - 1, i));
            break;
        }
    }
    Some(right? - left?)
}

/// Amplitude level of a -3 dB drop.
pub const HALF_POWER: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// CSV with a header row of x coordinates and one row per y.
pub fn grid_csv(grid: &ImagingGrid, values: &[f64]) -> String {
    let mut s = String::from("y\\x");
    for x in grid.xs() {
        let _ = write!(s, ",{x}");
    }
    s.push('\n');
    for (iy, y) in grid.ys().iter().enumerate() {
        let _ = write!(s, "{y}");
        for ix in 0..grid.nx {
            let _ = write!(s, ",{:e}", values[grid.index(ix, iy)]);
        }
        s.push('\n');
    }
    s
}

pub fn write_grid_csv(grid: &ImagingGrid, values: &[f64], path: &Path) -> Result<()> {
    fs::write(path, grid_csv(grid, values)).map_err(|e| RadarError::io(path, e))
}

/// Binary 8-bit PGM of `20 log10(|v| / max)` clipped at -40 dB; the top
/// image row is the largest y.
pub fn grid_pgm(grid: &ImagingGrid, values: &[f64]) -> Vec<u8> {
    let floor_db = -40.0;
    let max = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for iy in (0..grid.ny).rev() {
        for ix in 0..grid.nx {
            let v = values[grid.index(ix, iy)].abs();
            let db = if max > 0.0 && v > 0.0 {
                (20.0 * (v / max).log10()).max(floor_db)
            } else {
                floor_db
            };
            out.push(((db - floor_db) / -floor_db * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_grid_pgm(grid: &ImagingGrid, values: &[f64], path: &Path) -> Result<()> {
    fs::write(path, grid_pgm(grid, values)).map_err(|e| RadarError::io(path, e))
}

/// Random cell indices helper used by experiments.
pub fn random_cells(grid: &ImagingGrid, count: usize, min_separation: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut cells: Vec<usize> = Vec::with_capacity(count);
    let mut attempts = 0;
    while cells.len() < count && attempts < 10_000 {
        attempts += 1;
        let l = rng.random_range(0..grid.len());
        if cells.iter().all(|&c| grid.distance(c, l) >= min_separation) {
            cells.push(l);
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{presets, Target};
    use crate::signal::{received_amplitudes, steering_block, steering_vector, synthesize_noncoherent, NoiseSpec};
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_scene(q: usize) -> Scene {
        let mut radars = presets::imaging_radars();
        radars.truncate(q);
        for r in &mut radars {
            r.fs_hz = 1.6e6; // 8 samples
            r.n_chirps = 2;
        }
        Scene {
            radars,
            targets: vec![],
            ego_velocity: Vec3::new(1.0, 15.0, 0.0),
        }
    }

    fn small_grid() -> ImagingGrid {
        ImagingGrid::with_spacing([-1.0, 1.0], [19.0, 21.0], 0.5).unwrap()
    }

    #[test]
    fn grid_ordering_and_lookup() {
        let g = small_grid();
        assert_eq!((g.nx, g.ny), (5, 5));
        assert_eq!(g.position(0), Vec3::new(-1.0, 19.0, 0.0));
        assert_eq!(g.position(1), Vec3::new(-0.5, 19.0, 0.0));
        assert_eq!(g.position(5), Vec3::new(-1.0, 19.5, 0.0));
        assert_eq!(g.nearest(&Vec3::new(0.1, 20.4, 0.0)), g.index(2, 3));
        assert!(ImagingGrid::new([1.0, 0.0], [0.0, 1.0], 2, 2).is_err());
        assert!(ImagingGrid::new([0.0, 1.0], [0.0, 1.0], 0, 2).is_err());
        let table_one = ImagingGrid::with_spacing([-8.0, 8.0], [15.0, 35.0], 0.25).unwrap();
        assert_eq!((table_one.nx, table_one.ny), (65, 81));
    }

    #[test]
    fn single_cell_single_sensor_is_steering_vector() {
        let s = small_scene(1);
        let g = ImagingGrid::new([0.5, 0.5], [20.0, 20.0], 1, 1).unwrap();
        let d = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        assert_eq!(d.cols(), 1);
        assert_eq!(d.column(0), steering_vector(&s, &Vec3::new(0.5, 20.0, 0.0)).unwrap());
    }

    #[test]
    fn block_columns_have_disjoint_sensor_support() {
        let s = small_scene(3);
        let d = build_block_dictionary(&s, &small_grid(), &DictionaryOptions::default()).unwrap();
        let per = s.dims().per_sensor();
        let col = d.column(d.block_index(7).start + 1);
        assert!(col[..per].iter().all(|v| *v == ZERO));
        assert!(col[2 * per..].iter().all(|v| *v == ZERO));
        assert_eq!(&col[per..2 * per], steering_block(&s, 1, &small_grid().position(7)).unwrap().as_slice());
        for (a, b) in [(0usize, 1usize), (3, 5), (7 * 3, 2 * 3 + 2)] {
            if a % 3 != b % 3 {
                let ip: Complex64 = d.column(a).iter().zip(d.column(b)).map(|(x, y)| x.conj() * y).sum();
                assert_eq!(ip, ZERO);
            }
        }
    }

    #[test]
    fn block_projection_recovers_received_amplitudes() {
        let mut s = small_scene(3);
        s.radars[1].sync_offset_s = 10e-6;
        s.radars[2].sync_offset_s = 5e-6;
        let g = small_grid();
        let l = 12;
        s.targets.push(Target {
            position: g.position(l),
            reflectivity: vec![c(1.0, 0.5), c(-0.3, 0.9), c(0.2, -1.1)],
        });
        let z = synthesize_noncoherent(&s, &NoiseSpec::noiseless()).unwrap();
        let d = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        // least-squares oracle on the true block
        let cols: Vec<Vec<Complex64>> = d.block_index(l).map(|j| d.column(j)).collect();
        let h = DMatrix::from_fn(d.rows(), 3, |i, k| cols[k][i]);
        let y = DVector::from_vec(z.samples.clone());
        let hh = h.adjoint() * &h;
        let sol = hh.lu().solve(&(h.adjoint() * y)).unwrap();
        let amp = received_amplitudes(&s).unwrap();
        for q in 0..3 {
            assert!((sol[q] - amp[0][q]).norm() < 1e-10);
        }
    }

    #[test]
    fn lazy_columns_match_stored() {
        let s = small_scene(2);
        let g = small_grid();
        let dense = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        let lazy = build_block_dictionary(&s, &g, &DictionaryOptions { materialize: Materialize::Never, ..Default::default() }).unwrap();
        assert!(dense.is_materialized() && !lazy.is_materialized());
        for j in 0..dense.cols() {
            assert_eq!(dense.column(j), lazy.column(j));
            assert_eq!(dense.column(j), dense.generate_column(j));
        }
        let y: Vec<Complex64> = (0..dense.rows()).map(|i| c(i as f64, 1.0)).collect();
        assert_eq!(dense.adjoint(&y), lazy.adjoint(&y));
    }

    #[test]
    fn size_limit_is_reported() {
        let s = small_scene(3);
        let opts = DictionaryOptions { materialize: Materialize::Always, memory_budget_bytes: 1024 };
        match build_block_dictionary(&s, &small_grid(), &opts) {
            Err(RadarError::SizeLimit { rows, cols, bytes, budget }) => {
                assert_eq!(rows, s.dims().len());
                assert_eq!(cols, 25 * 3);
                assert_eq!(bytes, 25 * 3 * s.dims().per_sensor() * 16);
                assert_eq!(budget, 1024);
            }
            other => panic!("expected size error, got {other:?}"),
        }
        let auto = build_block_dictionary(&s, &small_grid(), &DictionaryOptions { materialize: Materialize::Auto, memory_budget_bytes: 1024 }).unwrap();
        assert!(!auto.is_materialized());
    }

    #[test]
    fn coherent_columns() {
        let mut s = small_scene(3);
        let g = small_grid();
        let plain = build_coherent_dictionary(&s, &g, &[0.0; 3], &DictionaryOptions::default()).unwrap();
        assert_eq!(plain.column(4), steering_vector(&s, &g.position(4)).unwrap());

        s.radars[1].sync_offset_s = 10e-6;
        s.radars[2].sync_offset_s = 5e-6;
        let l = 8;
        s.targets.push(Target::uniform(g.position(l), c(0.7, -0.2), 3));
        let y = synthesize_noncoherent(&s, &NoiseSpec::noiseless()).unwrap().samples;
        let corr = |d: &CoherentDictionary| {
            let h = d.column(l);
            let ip: Complex64 = h.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            let nh: f64 = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            ip.norm() / (nh * ny)
        };
        let right = build_coherent_dictionary(&s, &g, &[0.0, 10e-6, 5e-6], &DictionaryOptions::default()).unwrap();
        assert!((corr(&right) - 1.0).abs() < 1e-12);
        // shift c_2 by π: half-period of the phase in time
        let (_, v) = s.direction_and_doppler(1, &g.position(l)).unwrap();
        let half = 1.0 / (2.0 * 2.0 * s.radars[1].carrier_hz * v / crate::scene::SPEED_OF_LIGHT);
        let wrong = build_coherent_dictionary(&s, &g, &[0.0, 10e-6 + half, 5e-6], &DictionaryOptions::default()).unwrap();
        assert!(corr(&wrong) < corr(&right) - 0.1);
    }

    #[test]
    fn synchronized_view_matches_coherent_dictionary() {
        let s = small_scene(3);
        let g = small_grid();
        let offsets = [0.0, 10e-6, 5e-6];
        let dense = build_coherent_dictionary(&s, &g, &offsets, &DictionaryOptions::default()).unwrap();
        let blocks = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        let view = blocks.synchronized(&offsets).unwrap();
        assert_eq!(view.cols(), dense.cols());
        for j in [0, 7, g.len() - 1] {
            let (a, b) = (view.column(j), dense.column(j));
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12));
            assert!((view.column_norm_sqr(j) - dense.column_norm_sqr(j)).abs() < 1e-9);
        }
        let x: Vec<Complex64> = (0..g.len()).map(|i| c(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let (ya, yb) = (view.apply(&x), dense.apply(&x));
        assert!(ya.iter().zip(&yb).all(|(p, q)| (p - q).norm() < 1e-9));
        let (za, zb) = (view.adjoint(&ya), dense.adjoint(&ya));
        assert!(za.iter().zip(&zb).all(|(p, q)| (p - q).norm() < 1e-8));
        assert!(blocks.synchronized(&[0.0]).is_err());
    }

    #[test]
    fn compressor_kinds() {
        let x: Vec<Complex64> = (0..16).map(|i| c(i as f64, -(i as f64))).collect();
        let id = Compressor::selector((0..16).collect(), 16).unwrap();
        assert_eq!(compress(&x, &id).unwrap(), x);
        let sub = Compressor::subsample(5, 16, 3).unwrap();
        let y = compress(&x, &sub).unwrap();
        assert_eq!(y.len(), 5);
        for (v, &i) in y.iter().zip(&sub.selected) {
            assert_eq!(*v, x[i]);
        }
        assert!(compress(&x[..10], &sub).is_err());
        assert!(Compressor::selector(vec![1, 1], 4).is_err());
        assert!(Compressor::gaussian(20, 16, 0).is_err());

        // rows of the Gaussian matrix have unit expected squared norm
        let g = Compressor::gaussian(200, 400, 9).unwrap();
        let mean_row: f64 = (0..200)
            .map(|r| g.matrix[r * 400..(r + 1) * 400].iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / 200.0;
        assert!((mean_row - 2.0).abs() < 0.05, "{mean_row}");
    }

    #[test]
    fn compressed_operator_consistent() {
        let s = small_scene(2);
        let d = build_block_dictionary(&s, &small_grid(), &DictionaryOptions::default()).unwrap();
        let g = Compressor::gaussian(d.rows() / 4, d.rows(), 5).unwrap();
        let op = CompressedOperator::new(&g, &d).unwrap();
        let x: Vec<Complex64> = (0..d.cols()).map(|j| if j % 7 == 0 { c(1.0, j as f64 * 0.1) } else { ZERO }).collect();
        let direct = compress(&d.apply(&x), &g).unwrap();
        let via = op.apply(&x);
        for (a, b) in direct.iter().zip(&via) {
            assert!((a - b).norm() < 1e-9);
        }
        let y: Vec<Complex64> = (0..op.rows()).map(|i| c(1.0, i as f64)).collect();
        let adj = op.adjoint(&y);
        for j in [0, 3, 11] {
            let col = op.column(j);
            let ip: Complex64 = col.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            assert!((ip - adj[j]).norm() < 1e-8 * ip.norm().max(1.0));
        }
    }

    #[test]
    fn ptrf_peak_and_structure() {
        let s = small_scene(3);
        let g = small_grid();
        let p = g.position(12);
        for mode in [PtrfMode::Single, PtrfMode::NonCoherent, PtrfMode::Coherent] {
            let v = ptrf(&s, &g, &p, mode).unwrap();
            assert!((v[12] - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|x| *x <= 1.0 + 1e-12));
        }
        // phase of α does not matter
        let a = ptrf_weighted(&s, &g, &p, PtrfMode::NonCoherent, Some(&[c(1.0, 0.0), c(0.0, 2.0), c(0.5, 0.0)])).unwrap();
        let b = ptrf_weighted(&s, &g, &p, PtrfMode::NonCoherent, Some(&[c(-1.0, 0.0), c(2.0, 0.0), c(0.0, -0.5)])).unwrap();
        assert_eq!(a, b);
        assert!(ptrf(&s, &g, &Vec3::new(5.0, 20.0, 0.0), PtrfMode::Single).is_err());
    }

    #[test]
    fn coherent_single_sensor_equals_single() {
        let s = small_scene(1);
        let g = small_grid();
        let p = g.position(6);
        assert_eq!(ptrf(&s, &g, &p, PtrfMode::Coherent).unwrap(), ptrf(&s, &g, &p, PtrfMode::Single).unwrap());
    }

    #[test]
    fn noncoherent_is_weighted_sum_of_singles() {
        let s = small_scene(3);
        let g = small_grid();
        let p = g.position(12);
        let alphas = [c(1.0, 0.0), c(0.0, 2.0), c(0.5, 0.5)];
        let probes: Vec<Vec3> = (0..g.len()).map(|l| g.position(l)).collect();
        let nc = ptrf_at(&s, &p, &probes, PtrfMode::NonCoherent, Some(&alphas)).unwrap();
        let mut sum = vec![0.0; g.len()];
        let mut peak = 0.0;
        for q in 0..3 {
            let one = Scene { radars: vec![s.radars[q].clone()], ..s.clone() };
            let single = ptrf_at(&one, &p, &probes, PtrfMode::Single, None).unwrap();
            let self_corr = s.dims().per_sensor() as f64;
            for l in 0..g.len() {
                sum[l] += alphas[q].norm_sqr() * single[l] * self_corr;
            }
            peak += alphas[q].norm_sqr() * self_corr;
        }
        for l in 0..g.len() {
            assert!((nc[l] - sum[l] / peak).abs() < 1e-9);
        }
    }

    #[test]
    fn lobe_width_interpolates() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let tri: Vec<f64> = xs.iter().map(|x| (1.0 - (x - 5.0).abs() / 4.0).max(0.0)).collect();
        let w = main_lobe_width(&xs, &tri, 0.5).unwrap();
        assert!((w - 4.0).abs() < 1e-12);
        assert!(main_lobe_width(&xs[..6], &tri[..6], 0.5).is_none());
    }

    #[test]
    fn exports() {
        let g = ImagingGrid::new([0.0, 1.0], [0.0, 2.0], 2, 3).unwrap();
        let v = vec![1.0, 0.1, 0.01, 0.001, 0.0, 0.5];
        let csv = grid_csv(&g, &v);
        assert_eq!(csv.lines().next().unwrap(), "y\\x,0,1");
        assert_eq!(csv.lines().count(), 4);
        let pgm = grid_pgm(&g, &v);
        let header = b"P5\n2 3\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let px = &pgm[header.len()..];
        assert_eq!(px.len(), 6);
        // top row is the largest y: values 0.0 and 0.5
        assert_eq!(px[0], 0);
        assert_eq!(px[1], (((20.0 * 0.5f64.log10()) + 40.0) / 40.0 * 255.0f64).round() as u8);
        assert_eq!(px[4], 255);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn adjoint_is_conjugate_transpose(seed in 0u64..100) {
            let s = small_scene(2);
            let d = build_coherent_dictionary(&s, &small_grid(), &[0.0, 3e-6], &DictionaryOptions::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Complex64> = (0..d.cols()).map(|_| c(rng.random(), rng.random())).collect();
            let y: Vec<Complex64> = (0..d.rows()).map(|_| c(rng.random(), rng.random())).collect();
            let hx = d.apply(&x);
            let hy = d.adjoint(&y);
            let lhs: Complex64 = y.iter().zip(&hx).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = hy.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        }
    }
}
