//! Bayesian Cramér-Rao bounds on target position for point-cloud fusion,
//! non-coherent and coherent raw-data processing.
//!
//! Parameter order of every assembled FIM is position first, then the
//! real parts of the reflectivities, then the imaginary parts. When all
//! radar elements and the evaluation point lie in z = 0 the z coordinate
//! (and the elevation rows of the point-cloud model) is dropped.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::scene::{azimuth_elevation, unit_direction, Scene, Vec3, SPEED_OF_LIGHT};
use crate::signal::SensorResponse;

/// Relative eigenvalue floor below which a FIM counts as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Gaussian prior on the target position. Without a covariance the bound
/// is the deterministic CRLB evaluated at `mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: Vec3,
    #[serde(default)]
    pub covariance: Option<Matrix3<f64>>,
    #[serde(default = "one")]
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl PriorSpec {
    pub fn deterministic(mean: Vec3) -> Self {
        PriorSpec {
            mean,
            covariance: None,
            n_mc: 1,
            seed: 0,
        }
    }

    /// Isotropic prior with standard deviation `std_m` on every axis.
    pub fn isotropic(mean: Vec3, std_m: f64, n_mc: usize, seed: u64) -> Self {
        PriorSpec {
            mean,
            covariance: Some(Matrix3::identity() * (std_m * std_m)),
            n_mc,
            seed,
        }
    }

    /// Same prior shape centred elsewhere.
    pub fn centred_at(&self, mean: Vec3) -> Self {
        PriorSpec {
            mean,
            ..self.clone()
        }
    }

    pub fn is_bayesian(&self) -> bool {
        self.covariance.is_some()
    }

    fn check(&self) -> Result<()> {
        if self.n_mc == 0 {
            return Err(RadarError::Argument("n_mc must be at least 1".into()));
        }
        if let Some(c) = &self.covariance {
            if (c - c.transpose()).norm() > 1e-12 * c.norm().max(1e-300) {
                return Err(RadarError::Argument("prior covariance is not symmetric".into()));
            }
            if c.cholesky().is_none() {
                return Err(RadarError::Argument(
                    "prior covariance is not positive definite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Prior information F_o = R_o^-1 restricted to the first `d` axes.
    fn information(&self, d: usize) -> Result<DMatrix<f64>> {
        match &self.covariance {
            None => Ok(DMatrix::zeros(d, d)),
            Some(c) => {
                let block = DMatrix::from_fn(d, d, |i, j| c[(i, j)]);
                sym_inverse(&block, "prior covariance")
            }
        }
    }

    /// Monte-Carlo positions; `stream` separates independent users of the
    /// same seed, such as contour cells.
    fn draws(&self, d: usize, stream: u64) -> Vec<Vec3> {
        let Some(c) = &self.covariance else {
            return vec![self.mean];
        };
        let block = DMatrix::from_fn(d, d, |i, j| c[(i, j)]);
        let l = block
            .cholesky()
            .expect("checked positive definite")
            .l();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        (0..self.n_mc)
            .map(|_| {
                let z = nalgebra::DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let dz = &l * z;
                let mut p = self.mean;
                for i in 0..d {
                    p[i] += dz[i];
                }
                p
            })
            .collect()
    }
}

/// Standard deviations of the per-sensor range and DoA detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCloudNoise {
    pub range_std_m: f64,
    pub azimuth_std_rad: f64,
    pub elevation_std_rad: f64,
}

impl PointCloudNoise {
    fn check(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.range_std_m) && ok(self.azimuth_std_rad) && ok(self.elevation_std_rad) {
            Ok(())
        } else {
            Err(RadarError::Argument(format!(
                "point-cloud noise must be positive, got {self:?}"
            )))
        }
    }
}

/// Per-sensor complex noise variance of the raw samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNoise {
    pub variance: Vec<f64>,
}

impl RawNoise {
    pub fn uniform(variance: f64, q: usize) -> Self {
        RawNoise {
            variance: vec![variance; q],
        }
    }

    /// Per-sample SNR |α_q|^2 / v_q equal to `snr_db` on every sensor.
    pub fn from_snr(snr_db: f64, alphas: &[Complex64]) -> Self {
        let scale = 10f64.powf(-snr_db / 10.0);
        RawNoise {
            variance: alphas.iter().map(|a| a.norm_sqr() * scale).collect(),
        }
    }

    fn check(&self, q: usize) -> Result<()> {
        if self.variance.len() != q {
            return Err(RadarError::Argument(format!(
                "raw noise has {} variances for {q} sensors",
                self.variance.len()
            )));
        }
        if self.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(RadarError::Argument("raw noise variances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub point_cloud: PointCloudNoise,
    pub raw: RawNoise,
}

/// How the coherent position block is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoherentScaling {
    /// `2 σ² uᴴ R⁻¹ u` with σ² the reflectivity variance.
    #[default]
    ReflectivityVariance,
    /// `2 |α|² uᴴ R⁻¹ u`, conditioning on the realised α.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentOptions {
    pub scaling: CoherentScaling,
    pub alpha_variance: f64,
}

impl Default for CoherentOptions {
    fn default() -> Self {
        CoherentOptions {
            scaling: CoherentScaling::ReflectivityVariance,
            alpha_variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FimResult {
    /// Prior-averaged FIM over position and nuisance parameters, F_o included.
    pub fim: DMatrix<f64>,
    /// Schur complement onto the position coordinates.
    pub position_fim: DMatrix<f64>,
    /// Inverse of `position_fim`, m^2.
    pub bound: DMatrix<f64>,
    /// `(bound[x,x] + bound[y,y]) / 2`.
    pub avg_position_bound: f64,
}

/// Inverse of a symmetric positive definite matrix through its
/// eigendecomposition; refuses eigenvalues below the relative floor.
pub fn sym_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > EIGEN_FLOOR * max) || !max.is_finite() {
        return Err(RadarError::Conditioning {
            what: what.to_string(),
            min_eig: min,
            max_eig: max,
        });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    Ok(&eig.eigenvectors * inv_diag * eig.eigenvectors.transpose())
}

fn radars_planar(scene: &Scene) -> bool {
    scene.radars.iter().all(|r| {
        r.origin.z == 0.0
            && r.tx_offsets.iter().all(|o| o.z == 0.0)
            && r.rx_offsets.iter().all(|o| o.z == 0.0)
    })
}

/// Number of position coordinates estimated at `p`.
pub fn position_dims(scene: &Scene, p: &Vec3) -> usize {
    if radars_planar(scene) && p.z == 0.0 {
        2
    } else {
        3
    }
}

fn geometry_only(scene: &Scene) -> Result<Scene> {
    let s = Scene {
        radars: scene.radars.clone(),
        targets: Vec::new(),
        ego_velocity: Vec3::zeros(),
    };
    s.validate()?;
    Ok(s)
}

/// Jacobian of the stacked (range, azimuth, elevation) detections of every
/// sensor with respect to (x, y, z). Rows are `3q`, `3q+1`, `3q+2`.
pub fn pcf_jacobian(scene: &Scene, p: &Vec3) -> Result<DMatrix<f64>> {
    let q = scene.n_sensors();
    let mut j = DMatrix::zeros(3 * q, 3);
    for (i, radar) in scene.radars.iter().enumerate() {
        let u = unit_direction(&radar.origin, p)?;
        let d = p - radar.origin;
        let rho2 = d.x * d.x + d.y * d.y;
        let rho = rho2.sqrt();
        if rho < 1e-9 {
            return Err(RadarError::DegenerateGeometry(format!(
                "azimuth of {:?} undefined from sensor {i}",
                p.as_slice()
            )));
        }
        let s2 = rho2 + d.z * d.z;
        j[(3 * i, 0)] = u.x;
        j[(3 * i, 1)] = u.y;
        j[(3 * i, 2)] = u.z;
        j[(3 * i + 1, 0)] = -d.y / rho2;
        j[(3 * i + 1, 1)] = d.x / rho2;
        j[(3 * i + 1, 2)] = 0.0;
        j[(3 * i + 2, 0)] = -d.x * d.z / (rho * s2);
        j[(3 * i + 2, 1)] = -d.y * d.z / (rho * s2);
        j[(3 * i + 2, 2)] = rho / s2;
    }
    Ok(j)
}

/// Stacked detections f(Φ) matching [`pcf_jacobian`] row order.
pub fn pcf_measurements(scene: &Scene, p: &Vec3) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(3 * scene.n_sensors());
    for radar in &scene.radars {
        let (az, el) = azimuth_elevation(&radar.origin, p)?;
        out.push((p - radar.origin).norm());
        out.push(az);
        out.push(el);
    }
    Ok(out)
}

fn pcf_fim_l(scene: &Scene, noise: &PointCloudNoise, p: &Vec3, d: usize) -> Result<DMatrix<f64>> {
    let j = pcf_jacobian(scene, p)?;
    let weights = [
        1.0 / (noise.range_std_m * noise.range_std_m),
        1.0 / (noise.azimuth_std_rad * noise.azimuth_std_rad),
        1.0 / (noise.elevation_std_rad * noise.elevation_std_rad),
    ];
    let rows_per = if d == 2 { 2 } else { 3 };
    let mut f = DMatrix::zeros(d, d);
    for s in 0..scene.n_sensors() {
        for (r, w) in weights.iter().enumerate().take(rows_per) {
            let row = 3 * s + r;
            for a in 0..d {
                for b in 0..d {
                    f[(a, b)] += w * j[(row, a)] * j[(row, b)];
                }
            }
        }
    }
    Ok(f)
}

/// Averages `eval` over the prior, adds F_o and eliminates the nuisance
/// parameters that follow the first `d` entries.
fn bayesian_bound(
    prior: &PriorSpec,
    d: usize,
    stream: u64,
    eval: impl Fn(&Vec3) -> Result<DMatrix<f64>>,
) -> Result<FimResult> {
    prior.check()?;
    let draws = prior.draws(d, stream);
    let mut sum: Option<DMatrix<f64>> = None;
    for p in &draws {
        let f = eval(p)?;
        sum = Some(match sum {
            None => f,
            Some(s) => s + f,
        });
    }
    let mut fim = sum.expect("at least one draw") / draws.len() as f64;
    let fo = prior.information(d)?;
    fim.view_mut((0, 0), (d, d)).add_assign_from(&fo);
    let n = fim.nrows();
    let position_fim = if n > d {
        let a = fim.view((0, 0), (d, d)).into_owned();
        let b = fim.view((0, d), (d, n - d)).into_owned();
        let c = fim.view((d, d), (n - d, n - d)).into_owned();
        let c_inv = sym_inverse(&c, "reflectivity information")?;
        a - &b * c_inv * b.transpose()
    } else {
        fim.clone()
    };
    let bound = sym_inverse(&position_fim, "position information")?;
    let avg_position_bound = 0.5 * (bound[(0, 0)] + bound[(1, 1)]);
    Ok(FimResult {
        fim,
        position_fim,
        bound,
        avg_position_bound,
    })
}

trait AddAssignFrom {
    fn add_assign_from(&mut self, other: &DMatrix<f64>);
}

impl AddAssignFrom for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_from(&mut self, other: &DMatrix<f64>) {
        for i in 0..other.nrows() {
            for j in 0..other.ncols() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}

/// Point-cloud fusion bound from per-sensor range/azimuth(/elevation)
/// detections.
pub fn pcf_bcrlb(scene: &Scene, noise: &PointCloudNoise, prior: &PriorSpec) -> Result<FimResult> {
    pcf_bcrlb_stream(scene, noise, prior, 0)
}

fn pcf_bcrlb_stream(
    scene: &Scene,
    noise: &PointCloudNoise,
    prior: &PriorSpec,
    stream: u64,
) -> Result<FimResult> {
    let s = geometry_only(scene)?;
    noise.check()?;
    let d = position_dims(&s, &prior.mean);
    bayesian_bound(prior, d, stream, |p| pcf_fim_l(&s, noise, p, d))
}

/// Steering vector h(p) together with ∂h/∂x, ∂h/∂y, ∂h/∂z for a platform
/// at rest.
pub fn steering_with_gradient(scene: &Scene, p: &Vec3) -> Result<(Vec<Complex64>, [Vec<Complex64>; 3])> {
    if scene.ego_velocity != Vec3::zeros() {
        return Err(RadarError::Contract(
            "steering gradient is defined for a platform at rest".into(),
        ));
    }
    scene.validate()?;
    let dims = scene.dims();
    let total = dims.len();
    let mut h = Vec::with_capacity(total);
    let mut u: [Vec<Complex64>; 3] = std::array::from_fn(|_| Vec::with_capacity(total));
    for q in 0..dims.q {
        let radar = scene.radar(q)?;
        let resp = SensorResponse::new(scene, q, p)?;
        let fc_c = radar.carrier_hz / SPEED_OF_LIGHT;
        let slope_c = radar.chirp_slope() / SPEED_OF_LIGHT;
        for m in 0..dims.m {
            let to_rx = unit_direction(&radar.rx_position(m)?, p)?;
            for n in 0..dims.n {
                let to_tx = unit_direction(&radar.tx_position(n)?, p)?;
                let dg = to_tx + to_rx;
                for k in 0..dims.k {
                    for ns in 0..dims.ns {
                        let e = resp.element(m, n, k, ns);
                        let gfac = Complex64::new(0.0, -TAU * (fc_c + slope_c * resp.time(ns)));
                        h.push(e);
                        for a in 0..3 {
                            u[a].push(e * gfac * dg[a]);
                        }
                    }
                }
            }
        }
    }
    Ok((h, u))
}

/// ∂h/∂x, ∂h/∂y, ∂h/∂z at `p` (platform at rest).
pub fn steering_gradient(scene: &Scene, p: &Vec3) -> Result<[Vec<Complex64>; 3]> {
    Ok(steering_with_gradient(scene, p)?.1)
}

/// Inner products of one sensor's segment.
struct SensorProducts {
    uu: [[Complex64; 3]; 3],
    uh: [Complex64; 3],
    hh: f64,
}

fn sensor_products(h: &[Complex64], u: &[Vec<Complex64>; 3], range: std::ops::Range<usize>) -> SensorProducts {
    let mut uu = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut uh = [Complex64::new(0.0, 0.0); 3];
    let mut hh = 0.0;
    for i in range {
        hh += h[i].norm_sqr();
        for a in 0..3 {
            let ua = u[a][i].conj();
            uh[a] += ua * h[i];
            for b in a..3 {
                uu[a][b] += ua * u[b][i];
            }
        }
    }
    for a in 0..3 {
        for b in 0..a {
            uu[a][b] = uu[b][a].conj();
        }
    }
    SensorProducts { uu, uh, hh }
}

fn ncp_fim_l(scene: &Scene, noise: &RawNoise, alphas: &[Complex64], p: &Vec3, d: usize) -> Result<DMatrix<f64>> {
    let q = scene.n_sensors();
    let (h, u) = steering_with_gradient(scene, p)?;
    let per = scene.dims().per_sensor();
    let mut f = DMatrix::zeros(d + 2 * q, d + 2 * q);
    for s in 0..q {
        let pr = sensor_products(&h, &u, s * per..(s + 1) * per);
        let inv_v = 1.0 / noise.variance[s];
        let a = alphas[s];
        let ar = d + s;
        let ai = d + q + s;
        for i in 0..d {
            for j in 0..d {
                f[(i, j)] += 2.0 * a.norm_sqr() * inv_v * pr.uu[i][j].re;
            }
            let xr = 2.0 * (a.conj() * pr.uh[i]).re * inv_v;
            let xi = 2.0 * (pr.uh[i].conj() * a).im * inv_v;
            f[(i, ar)] = xr;
            f[(ar, i)] = xr;
            f[(i, ai)] = xi;
            f[(ai, i)] = xi;
        }
        f[(ar, ar)] = 2.0 * pr.hh * inv_v;
        f[(ai, ai)] = 2.0 * pr.hh * inv_v;
    }
    Ok(f)
}

fn cp_fim_l(
    scene: &Scene,
    noise: &RawNoise,
    alpha: Complex64,
    options: &CoherentOptions,
    p: &Vec3,
    d: usize,
) -> Result<DMatrix<f64>> {
    let (h, u) = steering_with_gradient(scene, p)?;
    let per = scene.dims().per_sensor();
    let mut uu = [[0.0; 3]; 3];
    let mut uh = [Complex64::new(0.0, 0.0); 3];
    let mut hh = 0.0;
    for s in 0..scene.n_sensors() {
        let pr = sensor_products(&h, &u, s * per..(s + 1) * per);
        let inv_v = 1.0 / noise.variance[s];
        for a in 0..3 {
            uh[a] += pr.uh[a] * inv_v;
            for b in 0..3 {
                uu[a][b] += pr.uu[a][b].re * inv_v;
            }
        }
        hh += pr.hh * inv_v;
    }
    let scale = match options.scaling {
        CoherentScaling::ReflectivityVariance => options.alpha_variance,
        CoherentScaling::Conditional => alpha.norm_sqr(),
    };
    let mut f = DMatrix::zeros(d + 2, d + 2);
    for i in 0..d {
        for j in 0..d {
            f[(i, j)] = 2.0 * scale * uu[i][j];
        }
        let xr = 2.0 * (alpha.conj() * uh[i]).re;
        let xi = 2.0 * (uh[i].conj() * alpha).im;
        f[(i, d)] = xr;
        f[(d, i)] = xr;
        f[(i, d + 1)] = xi;
        f[(d + 1, i)] = xi;
    }
    f[(d, d)] = 2.0 * hh;
    f[(d + 1, d + 1)] = 2.0 * hh;
    Ok(f)
}

/// Non-coherent raw-data bound with one unknown reflectivity per sensor.
pub fn ncp_bcrlb(
    scene: &Scene,
    noise: &RawNoise,
    prior: &PriorSpec,
    alphas: &[Complex64],
) -> Result<FimResult> {
    ncp_bcrlb_stream(scene, noise, prior, alphas, 0)
}

fn ncp_bcrlb_stream(
    scene: &Scene,
    noise: &RawNoise,
    prior: &PriorSpec,
    alphas: &[Complex64],
    stream: u64,
) -> Result<FimResult> {
    let s = geometry_only(scene)?;
    noise.check(s.n_sensors())?;
    if alphas.len() != s.n_sensors() {
        return Err(RadarError::Argument(format!(
            "{} reflectivities for {} sensors",
            alphas.len(),
            s.n_sensors()
        )));
    }
    let d = position_dims(&s, &prior.mean);
    bayesian_bound(prior, d, stream, |p| ncp_fim_l(&s, noise, alphas, p, d))
}

/// Coherent raw-data bound with a single shared reflectivity.
pub fn cp_bcrlb(
    scene: &Scene,
    noise: &RawNoise,
    prior: &PriorSpec,
    alpha: Complex64,
    options: &CoherentOptions,
) -> Result<FimResult> {
    cp_bcrlb_stream(scene, noise, prior, alpha, options, 0)
}

fn cp_bcrlb_stream(
    scene: &Scene,
    noise: &RawNoise,
    prior: &PriorSpec,
    alpha: Complex64,
    options: &CoherentOptions,
    stream: u64,
) -> Result<FimResult> {
    let s = geometry_only(scene)?;
    noise.check(s.n_sensors())?;
    let d = position_dims(&s, &prior.mean);
    bayesian_bound(prior, d, stream, |p| cp_fim_l(&s, noise, alpha, options, p, d))
}

/// Which bound a contour evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    PointCloud,
    NonCoherent { alphas: Vec<Complex64> },
    Coherent {
        alpha: Complex64,
        #[serde(default)]
        options: CoherentOptions,
    },
}

/// Average position bound over a rectangular grid. `values` is row-major
/// with x fastest; flagged cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl Contour {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.xs.len() + ix]
    }

    pub fn is_flagged(&self, ix: usize, iy: usize) -> bool {
        self.flagged[iy * self.xs.len() + ix]
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }

    /// Header row of x coordinates, then one row per y.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("y\\x");
        for x in &self.xs {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
        for (iy, y) in self.ys.iter().enumerate() {
            let _ = write!(s, "{y}");
            for ix in 0..self.xs.len() {
                let v = self.get(ix, iy);
                if v.is_nan() {
                    s.push_str(",nan");
                } else {
                    let _ = write!(s, ",{v:e}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| RadarError::io(path, e))
    }
}

/// Evaluates `mode` with the prior moved onto every grid cell. Cells whose
/// FIM is singular or whose position coincides with a sensor are flagged.
pub fn bound_contour(
    scene: &Scene,
    noise: &MeasurementNoise,
    prior_template: &PriorSpec,
    xs: &[f64],
    ys: &[f64],
    mode: &BoundMode,
) -> Result<Contour> {
    let s = geometry_only(scene)?;
    let cells: Vec<Result<Option<f64>>> = (0..xs.len() * ys.len())
        .into_par_iter()
        .map(|cell| {
            let p = Vec3::new(xs[cell % xs.len()], ys[cell / xs.len()], prior_template.mean.z);
            let prior = prior_template.centred_at(p);
            let stream = cell as u64;
            let r = match mode {
                BoundMode::PointCloud => pcf_bcrlb_stream(&s, &noise.point_cloud, &prior, stream),
                BoundMode::NonCoherent { alphas } => {
                    ncp_bcrlb_stream(&s, &noise.raw, &prior, alphas, stream)
                }
                BoundMode::Coherent { alpha, options } => {
                    cp_bcrlb_stream(&s, &noise.raw, &prior, *alpha, options, stream)
                }
            };
            match r {
                Ok(f) => Ok(Some(f.avg_position_bound)),
                Err(RadarError::Conditioning { .. }) | Err(RadarError::DegenerateGeometry(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(cells.len());
    let mut flagged = Vec::with_capacity(cells.len());
    for c in cells {
        match c? {
            Some(v) => {
                values.push(v);
                flagged.push(false);
            }
            None => {
                values.push(f64::NAN);
                flagged.push(true);
            }
        }
    }
    Ok(Contour {
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        values,
        flagged,
    })
}

/// `n` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
