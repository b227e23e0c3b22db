//! Sparse reconstruction: OMP, block OMP, ℓ1 MAP by proximal gradient and
//! a complex relevance vector machine.
//!
//! Every solver works on unit-normalised columns internally and reports
//! coefficients for the columns as given.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dictionary::{ImagingGrid, SensingOperator};
use crate::error::{RadarError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Gamma hyperparameters of the precision (a1, b1) and noise (a2, b2) priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvmHyper {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl Default for RvmHyper {
    fn default() -> Self {
        RvmHyper {
            a1: 1e-6,
            b1: 1e-6,
            a2: 1e-6,
            b2: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RvmMode {
    /// Marginal-likelihood maximisation one basis at a time.
    #[default]
    Sequential,
    /// Re-estimate every precision each sweep and prune the large ones.
    Em,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_sparsity: usize,
    pub residual_tol: f64,
    /// μ in `‖r - H b‖² + μ ‖b‖₁`.
    pub l1_weight: f64,
    pub rvm_hyper: RvmHyper,
    pub max_iters: usize,
    /// Relative change that ends the ℓ1 and RVM iterations.
    pub convergence_tol: f64,
    pub rvm_mode: RvmMode,
    /// The sequential RVM stops once no precision would move by more than
    /// this in log and the noise estimate changes by less, relatively.
    pub rvm_tol: f64,
    /// Precision above which an EM-mode basis is dropped. The precision
    /// prior caps precisions near `(1 + a1) / b1`, keep this below that.
    pub prune_threshold: f64,
    /// Starting noise variance for the RVM; `None` uses 1% of the data power.
    pub noise_variance: Option<f64>,
    pub update_noise: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_sparsity: 10,
            residual_tol: 0.0,
            l1_weight: 1e-3,
            rvm_hyper: RvmHyper::default(),
            max_iters: 1000,
            convergence_tol: 1e-6,
            rvm_mode: RvmMode::Sequential,
            rvm_tol: 1e-3,
            prune_threshold: 1e5,
            noise_variance: None,
            update_noise: true,
        }
    }
}

impl SolverConfig {
    /// Defaults tied to a known noise level: greedy stop at 1.1 times the
    /// expected noise norm, twice the expected sparsity, ℓ1 weight
    /// σ √(2 ln L).
    pub fn for_noise(rows: usize, cols: usize, variance: f64, expected_targets: usize) -> Self {
        let sigma = variance.max(0.0).sqrt();
        SolverConfig {
            max_sparsity: (2 * expected_targets).max(1),
            residual_tol: 1.1 * (rows as f64 * variance.max(0.0)).sqrt(),
            l1_weight: if sigma > 0.0 {
                sigma * (2.0 * (cols.max(2) as f64).ln()).sqrt()
            } else {
                1e-3
            },
            noise_variance: if variance > 0.0 { Some(variance) } else { None },
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.residual_tol < 0.0 || !self.residual_tol.is_finite() {
            problems.push(format!("residual_tol {} must be non-negative", self.residual_tol));
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be positive".into());
        }
        if !(self.convergence_tol > 0.0) {
            problems.push("convergence_tol must be positive".into());
        }
        if !(self.rvm_tol > 0.0) {
            problems.push("rvm_tol must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RadarError::Config(problems))
        }
    }
}

/// How coefficient indices map to sensors in CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// One column per cell, shared by all sensors.
    Coherent,
    /// `Q` columns per cell, column `l * Q + q` for sensor q.
    Blocks(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseImage {
    pub coefficients: Vec<Complex64>,
    /// Selected cells, ascending.
    pub support: Vec<usize>,
    /// Nonzero coefficient indices, ascending.
    pub active: Vec<usize>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub layout: Layout,
    /// Final noise-variance estimate (RVM only).
    pub noise_variance: Option<f64>,
}

impl SparseImage {
    fn empty<O: SensingOperator + ?Sized>(h: &O, residual_norm: f64) -> Self {
        SparseImage {
            coefficients: vec![ZERO; h.cols()],
            support: Vec::new(),
            active: Vec::new(),
            residual_norm,
            iterations: 0,
            converged: true,
            layout: layout_of(h),
            noise_variance: None,
        }
    }

    fn block(&self) -> usize {
        match self.layout {
            Layout::Coherent => 1,
            Layout::Blocks(q) => q,
        }
    }

    /// Coefficient magnitude per cell: |b_l| for coherent images and the
    /// block norm for block images.
    pub fn cell_magnitudes(&self) -> Vec<f64> {
        let q = self.block();
        self.coefficients
            .chunks(q)
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    /// Rows `x,y,sensor,re,im` for every nonzero coefficient; sensor is -1
    /// for coherent images.
    pub fn to_csv(&self, grid: &ImagingGrid) -> String {
        let mut s = String::from("x,y,sensor,re,im\n");
        let q = self.block();
        for &j in &self.active {
            let c = self.coefficients[j];
            let p = grid.position(j / q);
            let sensor = match self.layout {
                Layout::Coherent => -1,
                Layout::Blocks(_) => (j % q) as i64,
            };
            let _ = writeln!(s, "{},{},{},{:e},{:e}", p.x, p.y, sensor, c.re, c.im);
        }
        s
    }

    pub fn write_csv(&self, grid: &ImagingGrid, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv(grid)).map_err(|e| RadarError::io(path, e))
    }
}

fn layout_of<O: SensingOperator + ?Sized>(h: &O) -> Layout {
    if h.block_size() > 1 {
        Layout::Blocks(h.block_size())
    } else {
        Layout::Coherent
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn check_data<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64]) -> Result<()> {
    if y.len() != h.rows() {
        return Err(RadarError::Argument(format!(
            "data has {} samples, dictionary has {} rows",
            y.len(),
            h.rows()
        )));
    }
    Ok(())
}

fn column_norms<O: SensingOperator + ?Sized>(h: &O) -> Vec<f64> {
    (0..h.cols()).map(|j| h.column_norm_sqr(j).sqrt()).collect()
}

/// Least squares `min ‖y - A x‖` over the given columns.
pub fn least_squares(cols: &[Vec<Complex64>], y: &[Complex64]) -> Vec<Complex64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let n = y.len();
    let a = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    let qr = a.clone().qr();
    let rhs = qr.q().adjoint() * &b;
    let r = qr.r();
    let diag_max = (0..r.ncols()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    let well_posed = (0..r.ncols()).all(|i| r[(i, i)].norm() > 1e-12 * diag_max);
    if well_posed {
        if let Some(x) = r.solve_upper_triangular(&rhs) {
            return x.iter().cloned().collect();
        }
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12 * diag_max)
        .map(|x| x.iter().cloned().collect())
        .unwrap_or_else(|_| vec![ZERO; cols.len()])
}

fn residual(y: &[Complex64], cols: &[Vec<Complex64>], x: &[Complex64]) -> Vec<Complex64> {
    let mut r = y.to_vec();
    for (c, &xi) in cols.iter().zip(x) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= xi * ci;
        }
    }
    r
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn finish(
    mut image: SparseImage,
    active: Vec<usize>,
    x: &[Complex64],
    cells_of: impl Fn(usize) -> usize,
) -> SparseImage {
    for (&j, &v) in active.iter().zip(x) {
        image.coefficients[j] = v;
    }
    let mut sorted: Vec<usize> = active;
    sorted.sort_unstable();
    image.support = sorted.iter().map(|&j| cells_of(j)).collect::<BTreeSet<_>>().into_iter().collect();
    image.active = sorted;
    image
}

/// Orthogonal matching pursuit over individual columns.
pub fn omp<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<SparseImage> {
    check_data(h, y)?;
    config.check()?;
    let y_norm = norm(y);
    let mut image = SparseImage::empty(h, y_norm);
    if y_norm == 0.0 {
        return Ok(image);
    }
    let block = h.block_size();
    let stop = config.residual_tol.max(1e-10 * y_norm);
    let norms = column_norms(h);
    let mut active: Vec<usize> = Vec::new();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut x: Vec<Complex64> = Vec::new();
    let mut r = y.to_vec();
    let mut r_norm = y_norm;
    while active.len() < config.max_sparsity.min(h.cols()) && r_norm > stop {
        let corr = h.adjoint(&r);
        let scores: Vec<f64> = corr
            .iter()
            .zip(&norms)
            .enumerate()
            .map(|(j, (c, n))| {
                if *n == 0.0 || active.contains(&j) {
                    f64::NEG_INFINITY
                } else {
                    c.norm() / n
                }
            })
            .collect();
        let Some(j) = argmax(&scores) else { break };
        active.push(j);
        cols.push(h.column(j));
        x = least_squares(&cols, y);
        r = residual(y, &cols, &x);
        r_norm = norm(&r);
        image.iterations += 1;
    }
    image.residual_norm = r_norm;
    image.converged = r_norm <= stop;
    Ok(finish(image, active, &x, |j| j / block))
}

/// Block OMP: selects whole cells by summed per-sensor projection energy
/// and refits all chosen blocks jointly.
pub fn block_omp<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<SparseImage> {
    check_data(h, y)?;
    config.check()?;
    let q = h.block_size();
    let cells = h.cols() / q;
    let y_norm = norm(y);
    let mut image = SparseImage::empty(h, y_norm);
    if y_norm == 0.0 {
        return Ok(image);
    }
    let stop = config.residual_tol.max(1e-10 * y_norm);
    let norms = column_norms(h);
    let mut chosen: Vec<usize> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut cols: Vec<Vec<Complex64>> = Vec::new();
    let mut x: Vec<Complex64> = Vec::new();
    let mut r = y.to_vec();
    let mut r_norm = y_norm;
    while chosen.len() < config.max_sparsity.min(cells) && r_norm > stop {
        let corr = h.adjoint(&r);
        let scores: Vec<f64> = (0..cells)
            .map(|l| {
                if chosen.contains(&l) {
                    return f64::NEG_INFINITY;
                }
                (l * q..(l + 1) * q)
                    .filter(|&j| norms[j] > 0.0)
                    .map(|j| corr[j].norm_sqr() / (norms[j] * norms[j]))
                    .sum()
            })
            .collect();
        let Some(l) = argmax(&scores) else { break };
        chosen.push(l);
        for j in l * q..(l + 1) * q {
            if norms[j] > 0.0 {
                active.push(j);
                cols.push(h.column(j));
            }
        }
        x = least_squares(&cols, y);
        r = residual(y, &cols, &x);
        r_norm = norm(&r);
        image.iterations += 1;
    }
    image.residual_norm = r_norm;
    image.converged = r_norm <= stop;
    Ok(finish(image, active, &x, |j| j / q))
}

/// Operator with columns scaled to unit norm (zero columns stay zero).
struct Normalized<'a, O: SensingOperator + ?Sized> {
    h: &'a O,
    inv: Vec<f64>,
}

impl<O: SensingOperator + ?Sized> Normalized<'_, O> {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let scaled: Vec<Complex64> = x.iter().zip(&self.inv).map(|(v, s)| v * s).collect();
        self.h.apply(&scaled)
    }

    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        self.h.adjoint(y).iter().zip(&self.inv).map(|(v, s)| v * s).collect()
    }
}

/// Largest eigenvalue of HᴴH by power iteration.
fn operator_norm_sqr<O: SensingOperator + ?Sized>(n: &Normalized<'_, O>, cols: usize) -> f64 {
    let mut v: Vec<Complex64> = (0..cols)
        .map(|j| Complex64::new(1.0 + (j % 7) as f64 * 0.1, (j % 3) as f64 * 0.1))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = n.adjoint(&n.apply(&v));
        let next = norm(&w);
        if (next - lambda).abs() <= 1e-9 * next {
            lambda = next;
            break;
        }
        lambda = next;
        v = w;
    }
    lambda
}

fn soft_threshold(v: Complex64, t: f64) -> Complex64 {
    let m = v.norm();
    if m <= t {
        ZERO
    } else {
        v * ((m - t) / m)
    }
}

/// Objective `‖y - H̃ b‖² + μ ‖b‖₁` on normalised columns.
fn l1_objective<O: SensingOperator + ?Sized>(n: &Normalized<'_, O>, y: &[Complex64], b: &[Complex64], mu: f64) -> f64 {
    let hb = n.apply(b);
    let r: f64 = y.iter().zip(&hb).map(|(a, c)| (a - c).norm_sqr()).sum();
    r + mu * b.iter().map(|v| v.norm()).sum::<f64>()
}

/// ℓ1 MAP estimate followed by a least-squares refit on its support.
pub fn l1_map<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<SparseImage> {
    Ok(l1_map_trace(h, y, config)?.0)
}

/// As [`l1_map`], also returning the objective after every iteration.
pub fn l1_map_trace<O: SensingOperator + ?Sized>(
    h: &O,
    y: &[Complex64],
    config: &SolverConfig,
) -> Result<(SparseImage, Vec<f64>)> {
    check_data(h, y)?;
    config.check()?;
    if !(config.l1_weight > 0.0) {
        return Err(RadarError::Argument(format!(
            "l1_weight must be positive, got {}",
            config.l1_weight
        )));
    }
    let y_norm = norm(y);
    let mut image = SparseImage::empty(h, y_norm);
    if y_norm == 0.0 {
        return Ok((image, Vec::new()));
    }
    let norms = column_norms(h);
    let n = Normalized {
        h,
        inv: norms.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }).collect(),
    };
    let cols = h.cols();
    let mu = config.l1_weight;
    let lip = operator_norm_sqr(&n, cols) * 1.01;
    let step = 1.0 / lip;
    let thresh = step * mu / 2.0;

    let mut x = vec![ZERO; cols];
    let mut z_prev = x.clone();
    let mut v = x.clone();
    let mut t = 1.0f64;
    let mut obj = l1_objective(&n, y, &x, mu);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        image.iterations += 1;
        // gradient step on ½‖y - H̃v‖² with step 1/‖H̃‖² is the same as the
        // full objective with threshold tμ/2
        let hv = n.apply(&v);
        let rv: Vec<Complex64> = y.iter().zip(&hv).map(|(a, b)| a - b).collect();
        let g = n.adjoint(&rv);
        let z: Vec<Complex64> = v
            .iter()
            .zip(&g)
            .map(|(vi, gi)| soft_threshold(vi + gi * step, thresh))
            .collect();
        let obj_z = l1_objective(&n, y, &z, mu);
        let x_prev = x.clone();
        if obj_z <= obj {
            x = z.clone();
            obj = obj_z;
        }
        trace.push(obj);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        v = (0..cols)
            .map(|j| x[j] + (t / t_next) * (z[j] - x[j]) + ((t - 1.0) / t_next) * (x[j] - x_prev[j]))
            .collect();
        t = t_next;
        let change: f64 = z.iter().zip(&z_prev).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        z_prev = z;
        if change <= config.convergence_tol * norm(&x).max(1e-300) {
            converged = true;
            break;
        }
    }

    // support: nonzero MAP entries, capped at max_sparsity by magnitude
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..cols).filter(|&j| x[j].norm() > 1e-3 * peak && peak > 0.0).collect();
    support.sort_by(|&a, &b| x[b].norm().total_cmp(&x[a].norm()).then(a.cmp(&b)));
    support.truncate(config.max_sparsity.min(h.rows()));
    support.sort_unstable();
    let col_vecs: Vec<Vec<Complex64>> = support.iter().map(|&j| h.column(j)).collect();
    let coef = least_squares(&col_vecs, y);
    image.residual_norm = norm(&residual(y, &col_vecs, &coef));
    image.converged = converged;
    let q = h.block_size();
    Ok((finish(image, support, &coef, |j| j / q), trace))
}

/// Result of the Bayesian solver with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BcsResult {
    pub image: SparseImage,
    pub noise_variance: f64,
    /// Smallest and largest γ_i = 1 - β_i Σ_ii seen over all iterations.
    pub gamma_range: (f64, f64),
}

/// Posterior of the active coefficients for fixed precisions `betas` and
/// noise variance `sigma2`: Σ = (HᴴH/σ² + diag β)⁻¹, μ = Σ Hᴴ y / σ².
pub fn rvm_posterior<O: SensingOperator + ?Sized>(
    h: &O,
    y: &[Complex64],
    active: &[usize],
    betas: &[f64],
    sigma2: f64,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    check_data(h, y)?;
    let cols: Vec<Vec<Complex64>> = active.iter().map(|&j| h.column(j)).collect();
    let k = cols.len();
    let mut a = DMatrix::from_fn(k, k, |i, j| {
        cols[i].iter().zip(&cols[j]).map(|(x, z)| x.conj() * z).sum::<Complex64>() / sigma2
    });
    for i in 0..k {
        a[(i, i)] += betas[i];
    }
    let sigma = hermitian_inverse(a)?;
    let hy = DVector::from_fn(k, |i, _| cols[i].iter().zip(y).map(|(x, z)| x.conj() * z).sum::<Complex64>());
    let mu = (&sigma * hy) / Complex64::new(sigma2, 0.0);
    Ok((mu.iter().cloned().collect(), sigma))
}

/// Inverse of a Hermitian positive definite matrix, retrying with a small
/// diagonal jitter when the Cholesky factorisation fails.
fn hermitian_inverse(a: DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a);
    }
    let sym = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c.inverse());
    }
    let scale = (0..n).map(|i| sym[(i, i)].re.abs()).fold(0.0, f64::max);
    let mut jittered = sym;
    for i in 0..n {
        jittered[(i, i)] += Complex64::new(1e-10 * scale.max(1e-300), 0.0);
    }
    jittered
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| RadarError::Conditioning {
            what: "posterior precision".into(),
            min_eig: f64::NAN,
            max_eig: scale,
        })
}

/// Complex sparse Bayesian learning (relevance vector machine).
pub fn bcs_rvm<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<BcsResult> {
    check_data(h, y)?;
    config.check()?;
    let y_norm = norm(y);
    if y_norm == 0.0 {
        let mut image = SparseImage::empty(h, 0.0);
        image.noise_variance = Some(0.0);
        return Ok(BcsResult {
            image,
            noise_variance: 0.0,
            gamma_range: (0.0, 0.0),
        });
    }
    match config.rvm_mode {
        RvmMode::Sequential => rvm_sequential(h, y, config),
        RvmMode::Em => rvm_em(h, y, config),
    }
}

struct Posterior {
    mu: Vec<Complex64>,
    sigma: DMatrix<Complex64>,
}

/// Posterior over the active normalised bases from cached Gram entries.
fn posterior(gram: &DMatrix<Complex64>, phi_t: &[Complex64], alpha: &[f64], beta_n: f64) -> Result<Posterior> {
    let k = alpha.len();
    let mut a = gram * Complex64::new(beta_n, 0.0);
    for i in 0..k {
        a[(i, i)] += alpha[i];
    }
    let sigma = hermitian_inverse(a)?;
    let rhs = DVector::from_column_slice(phi_t);
    let mu = (&sigma * rhs) * Complex64::new(beta_n, 0.0);
    Ok(Posterior {
        mu: mu.iter().cloned().collect(),
        sigma,
    })
}

fn likelihood_term(alpha: f64, s: f64, q2: f64) -> f64 {
    alpha.ln() - (alpha + s).ln() + q2 / (alpha + s)
}

enum Action {
    Add(usize, f64),
    Reestimate(usize, f64),
    Delete(usize),
}

fn rvm_sequential<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<BcsResult> {
    let n_rows = y.len() as f64;
    let m = h.cols();
    let norms = column_norms(h);
    let inv: Vec<f64> = norms.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    let nrm = Normalized { h, inv: inv.clone() };
    let phi_t_all = nrm.adjoint(y);
    let power = y_norm_sqr(y) / n_rows;
    let mut sigma2 = config.noise_variance.unwrap_or(0.01 * power);
    let floor = 1e-14 * power;
    sigma2 = sigma2.max(floor);
    let hyper = config.rvm_hyper;

    // active bases with their precisions and cached Φ̃ᴴ φ̃_a
    let mut active: Vec<usize> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut cross: Vec<Vec<Complex64>> = Vec::new();
    let mut columns: Vec<Vec<Complex64>> = Vec::new();

    let add_basis = |j: usize, cross: &mut Vec<Vec<Complex64>>, columns: &mut Vec<Vec<Complex64>>| {
        let col: Vec<Complex64> = h.column(j).iter().map(|v| v * inv[j]).collect();
        cross.push(nrm.adjoint(&col));
        columns.push(col);
    };

    let scores: Vec<f64> = phi_t_all
        .iter()
        .zip(&norms)
        .map(|(v, n)| if *n > 0.0 { v.norm_sqr() } else { f64::NEG_INFINITY })
        .collect();
    let Some(first) = argmax(&scores) else {
        let image = SparseImage::empty(h, y_norm_sqr(y).sqrt());
        return Ok(BcsResult { image, noise_variance: sigma2, gamma_range: (0.0, 0.0) });
    };
    let q0 = scores[first];
    active.push(first);
    alpha.push(if q0 > sigma2 { 1.0 / (q0 - sigma2) } else { 1.0 / q0 });
    add_basis(first, &mut cross, &mut columns);

    let mut gamma_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    let mut post = None;
    let mut failed = false;
    while iterations < config.max_iters {
        iterations += 1;
        let beta_n = 1.0 / sigma2;
        let k = active.len();
        let gram = DMatrix::from_fn(k, k, |i, j| cross[j][active[i]]);
        let phi_t: Vec<Complex64> = active.iter().map(|&j| phi_t_all[j]).collect();
        let p = match posterior(&gram, &phi_t, &alpha, beta_n) {
            Ok(p) => p,
            Err(_) => {
                failed = true;
                break;
            }
        };
        for i in 0..k {
            let g = 1.0 - alpha[i] * p.sigma[(i, i)].re;
            gamma_range.0 = gamma_range.0.min(g);
            gamma_range.1 = gamma_range.1.max(g);
        }

        // S and Q for every basis
        let mut best: Option<(Action, f64)> = None;
        let mut consider = |a: Action, gain: f64| {
            if gain.is_finite() && best.as_ref().is_none_or(|(_, g)| gain > *g) {
                best = Some((a, gain));
            }
        };
        let mut reest_change: f64 = 0.0;
        // row a of V holds Φ̃ᴴ φ̃_a, so column j is (φ̃_jᴴ Φ̃_A)ᴴ conjugated
        let v_mat = DMatrix::from_fn(k, m, |a, j| cross[a][j]);
        let w_mat = &p.sigma * v_mat.map(|x| x.conj());
        let mu_vec = DVector::from_column_slice(&p.mu);
        let vmu_all = v_mat.transpose() * mu_vec;
        let mut position = vec![usize::MAX; m];
        for (i, &a) in active.iter().enumerate() {
            position[a] = i;
        }
        for j in 0..m {
            if norms[j] == 0.0 {
                continue;
            }
            let vsv: f64 = (0..k).map(|a| (v_mat[(a, j)] * w_mat[(a, j)]).re).sum();
            let vmu = vmu_all[j];
            let s_big = beta_n - beta_n * beta_n * vsv;
            let q_big = phi_t_all[j] * beta_n - vmu * beta_n;
            if position[j] != usize::MAX {
                let pos = position[j];
                let al = alpha[pos];
                let s = al * s_big / (al - s_big);
                let q = q_big * (al / (al - s_big));
                let q2 = q.norm_sqr();
                if q2 > s {
                    let new_alpha = s * s / (q2 - s);
                    let gain = likelihood_term(new_alpha, s, q2) - likelihood_term(al, s, q2);
                    reest_change = reest_change.max((new_alpha / al).ln().abs());
                    consider(Action::Reestimate(pos, new_alpha), gain);
                } else if k > 1 {
                    let gain = -likelihood_term(al, s, q2);
                    consider(Action::Delete(pos), gain);
                }
            } else {
                let q2 = q_big.norm_sqr();
                if q2 > s_big {
                    let ratio = q2 / s_big;
                    let gain = ratio - 1.0 - ratio.ln();
                    consider(Action::Add(j, s_big * s_big / (q2 - s_big)), gain);
                }
            }
        }

        let mut stop = false;
        match best {
            None => stop = true,
            Some((Action::Reestimate(pos, a), gain)) => {
                let change = (a / alpha[pos]).ln().abs();
                if change < config.rvm_tol || gain <= 0.0 {
                    stop = reest_change < config.rvm_tol || gain <= 0.0;
                }
                alpha[pos] = a;
            }
            Some((_, gain)) if gain <= 0.0 => stop = true,
            Some((Action::Add(j, a), _)) => {
                active.push(j);
                alpha.push(a);
                add_basis(j, &mut cross, &mut columns);
            }
            Some((Action::Delete(pos), _)) => {
                active.remove(pos);
                alpha.remove(pos);
                cross.remove(pos);
                columns.remove(pos);
            }
        }

        // noise re-estimate from the refreshed posterior
        let mut sigma_changed = false;
        if config.update_noise {
            let k = active.len();
            let gram = DMatrix::from_fn(k, k, |i, j| cross[j][active[i]]);
            let phi_t: Vec<Complex64> = active.iter().map(|&j| phi_t_all[j]).collect();
            if let Ok(p2) = posterior(&gram, &phi_t, &alpha, 1.0 / sigma2) {
                let r = residual(y, &columns, &p2.mu);
                let gsum: f64 = (0..k).map(|i| 1.0 - alpha[i] * p2.sigma[(i, i)].re).sum();
                let new = ((y_norm_sqr(&r) + hyper.b2) / (n_rows - gsum + hyper.a2)).max(floor);
                sigma_changed = ((new / sigma2).ln()).abs() > config.rvm_tol;
                sigma2 = new;
            }
        }
        if stop && !sigma_changed {
            converged = true;
            post = Some(p);
            break;
        }
        post = Some(p);
    }

    // final posterior with the last hyperparameters
    let k = active.len();
    let gram = DMatrix::from_fn(k, k, |i, j| cross[j][active[i]]);
    let phi_t: Vec<Complex64> = active.iter().map(|&j| phi_t_all[j]).collect();
    let mu = match posterior(&gram, &phi_t, &alpha, 1.0 / sigma2) {
        Ok(p) => p.mu,
        Err(_) => {
            failed = true;
            post.map(|p| p.mu).unwrap_or_else(|| vec![ZERO; k])
        }
    };
    let r = residual(y, &columns, &mu);
    let coef: Vec<Complex64> = active.iter().zip(&mu).map(|(&j, v)| v * inv[j]).collect();
    let mut image = SparseImage::empty(h, norm(&r));
    image.iterations = iterations;
    image.converged = converged && !failed;
    image.noise_variance = Some(sigma2);
    let q = h.block_size();
    let image = finish(image, active, &coef, |j| j / q);
    Ok(BcsResult {
        image,
        noise_variance: sigma2,
        gamma_range,
    })
}

fn y_norm_sqr(y: &[Complex64]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

fn rvm_em<O: SensingOperator + ?Sized>(h: &O, y: &[Complex64], config: &SolverConfig) -> Result<BcsResult> {
    let n_rows = y.len() as f64;
    let norms = column_norms(h);
    let inv: Vec<f64> = norms.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 0.0 }).collect();
    let power = y_norm_sqr(y) / n_rows;
    let floor = 1e-14 * power;
    let mut sigma2 = config.noise_variance.unwrap_or(0.01 * power).max(floor);
    let hyper = config.rvm_hyper;

    let mut active: Vec<usize> = (0..h.cols()).filter(|&j| norms[j] > 0.0).collect();
    let mut columns: Vec<Vec<Complex64>> = active
        .iter()
        .map(|&j| h.column(j).iter().map(|v| v * inv[j]).collect())
        .collect();
    let mut beta = vec![1.0; active.len()];
    let mut gamma_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    let mut failed = false;
    let mut mu = vec![ZERO; active.len()];
    let mut last_gamma = vec![1.0; active.len()];
    while iterations < config.max_iters && !active.is_empty() {
        iterations += 1;
        let k = active.len();
        let gram = DMatrix::from_fn(k, k, |i, j| {
            columns[i].iter().zip(&columns[j]).map(|(a, b)| a.conj() * b).sum::<Complex64>()
        });
        let phi_t: Vec<Complex64> = columns
            .iter()
            .map(|c| c.iter().zip(y).map(|(a, b)| a.conj() * b).sum())
            .collect();
        let p = match posterior(&gram, &phi_t, &beta, 1.0 / sigma2) {
            Ok(p) => p,
            Err(_) => {
                failed = true;
                break;
            }
        };
        mu = p.mu.clone();
        let gamma: Vec<f64> = (0..k).map(|i| 1.0 - beta[i] * p.sigma[(i, i)].re).collect();
        last_gamma.clone_from(&gamma);
        for g in &gamma {
            gamma_range.0 = gamma_range.0.min(*g);
            gamma_range.1 = gamma_range.1.max(*g);
        }
        let new_beta: Vec<f64> = (0..k)
            .map(|i| (gamma[i] + hyper.a1) / (mu[i].norm_sqr() + hyper.b1))
            .collect();
        let change = new_beta
            .iter()
            .zip(&beta)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        if config.update_noise {
            let r = residual(y, &columns, &mu);
            let gsum: f64 = gamma.iter().sum();
            sigma2 = ((y_norm_sqr(&r) + hyper.b2) / (n_rows - gsum + hyper.a2)).max(floor);
        }
        beta = new_beta;
        let keep: Vec<bool> = beta.iter().map(|b| *b < config.prune_threshold).collect();
        if keep.iter().any(|k| !k) {
            retain_mask(&mut active, &keep);
            retain_mask(&mut columns, &keep);
            retain_mask(&mut beta, &keep);
            retain_mask(&mut mu, &keep);
            retain_mask(&mut last_gamma, &keep);
            continue;
        }
        if change < config.convergence_tol {
            converged = true;
            break;
        }
    }
    // bases pinned by the hyperprior (γ ≈ 0) carry no evidence
    let keep: Vec<bool> = last_gamma.iter().map(|g| *g >= EM_MIN_GAMMA).collect();
    retain_mask(&mut active, &keep);
    retain_mask(&mut columns, &keep);
    retain_mask(&mut mu, &keep);
    let r = residual(y, &columns, &mu);
    let coef: Vec<Complex64> = active.iter().zip(&mu).map(|(&j, v)| v * inv[j]).collect();
    let mut image = SparseImage::empty(h, norm(&r));
    image.iterations = iterations;
    image.converged = converged && !failed;
    image.noise_variance = Some(sigma2);
    let q = h.block_size();
    let image = finish(image, active, &coef, |j| j / q);
    Ok(BcsResult {
        image,
        noise_variance: sigma2,
        gamma_range,
    })
}

const EM_MIN_GAMMA: f64 = 1e-3;

fn retain_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap_or(&true));
}

/// `(NMSE_all, NMSE_target)` of max-normalised coefficient vectors; the
/// target metric only sums rows in `target_support`.
pub fn nmse(truth: &[Complex64], estimate: &[Complex64], target_support: &[usize]) -> Result<(f64, f64)> {
    if truth.len() != estimate.len() {
        return Err(RadarError::Argument(format!(
            "truth has {} entries, estimate {}",
            truth.len(),
            estimate.len()
        )));
    }
    if let Some(&bad) = target_support.iter().find(|&&i| i >= truth.len()) {
        return Err(RadarError::IndexOutOfRange {
            what: "target support",
            index: bad,
            len: truth.len(),
        });
    }
    let tmax = truth.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if tmax == 0.0 {
        return Err(RadarError::UndefinedMetric("reference image is all zero".into()));
    }
    let emax = estimate.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = |i: usize| {
        let e = if emax > 0.0 { estimate[i] / emax } else { ZERO };
        (truth[i] / tmax - e).norm_sqr()
    };
    let all = (0..truth.len()).map(diff).sum::<f64>().sqrt();
    let target = target_support.iter().map(|&i| diff(i)).sum::<f64>().sqrt();
    Ok((all, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_block_dictionary, build_coherent_dictionary, DictionaryOptions, ImagingGrid, Materialize};
    use crate::scene::{presets, Scene, Target, Vec3};
    use crate::signal::{add_noise, received_amplitudes, synthesize_noncoherent, NoiseSpec};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::borrow::Cow;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Explicit dense operator for solver unit tests.
    struct Dense {
        cols: Vec<Vec<Complex64>>,
        rows: usize,
        block: usize,
    }

    impl SensingOperator for Dense {
        fn rows(&self) -> usize {
            self.rows
        }
        fn cols(&self) -> usize {
            self.cols.len()
        }
        fn block_size(&self) -> usize {
            self.block
        }
        fn segment(&self, j: usize) -> (usize, Cow<'_, [Complex64]>) {
            (0, Cow::Borrowed(&self.cols[j]))
        }
    }

    fn random_dense(rows: usize, cols: usize, seed: u64) -> Dense {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dense {
            cols: (0..cols)
                .map(|_| (0..rows).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect())
                .collect(),
            rows,
            block: 1,
        }
    }

    fn combo(d: &Dense, coefs: &[(usize, Complex64)]) -> Vec<Complex64> {
        let mut y = vec![ZERO; d.rows];
        for &(j, a) in coefs {
            for (yi, ci) in y.iter_mut().zip(&d.cols[j]) {
                *yi += a * ci;
            }
        }
        y
    }

    fn small_scene(q: usize) -> Scene {
        let mut radars = presets::imaging_radars();
        radars.truncate(q);
        for r in &mut radars {
            r.fs_hz = 3.2e6; // 16 samples
            r.n_chirps = 2;
        }
        Scene { radars, targets: vec![], ego_velocity: Vec3::new(1.0, 15.0, 0.0) }
    }

    fn grid() -> ImagingGrid {
        ImagingGrid::with_spacing([-2.0, 2.0], [18.0, 22.0], 0.5).unwrap()
    }

    #[test]
    fn omp_single_column_one_iteration() {
        let d = random_dense(30, 12, 1);
        let y = combo(&d, &[(5, c(2.0, -1.0))]);
        let img = omp(&d, &y, &SolverConfig::default()).unwrap();
        assert_eq!(img.support, vec![5]);
        assert_eq!(img.iterations, 1);
        assert!(img.residual_norm < 1e-10);
        assert!((img.coefficients[5] - c(2.0, -1.0)).norm() < 1e-10);
        assert!(img.converged);
    }

    #[test]
    fn omp_matches_exhaustive_search() {
        let d = random_dense(40, 30, 2);
        let truth = [(3usize, c(1.0, 0.5)), (11, c(-0.7, 1.2)), (26, c(0.9, -0.1))];
        let y = combo(&d, &truth);
        // oracle: the 3-subset with the smallest LS residual
        let mut best = (f64::INFINITY, vec![]);
        for a in 0..30 {
            for b in a + 1..30 {
                for e in b + 1..30 {
                    let cols = vec![d.cols[a].clone(), d.cols[b].clone(), d.cols[e].clone()];
                    let x = least_squares(&cols, &y);
                    let r = norm(&residual(&y, &cols, &x));
                    if r < best.0 {
                        best = (r, vec![a, b, e]);
                    }
                }
            }
        }
        let img = omp(&d, &y, &SolverConfig { max_sparsity: 3, ..Default::default() }).unwrap();
        assert_eq!(img.support, best.1);
    }

    #[test]
    fn zero_data_gives_empty_support() {
        let d = random_dense(10, 5, 3);
        let y = vec![ZERO; 10];
        let cfg = SolverConfig::default();
        assert!(omp(&d, &y, &cfg).unwrap().support.is_empty());
        assert!(block_omp(&d, &y, &cfg).unwrap().support.is_empty());
        assert!(l1_map(&d, &y, &cfg).unwrap().support.is_empty());
        assert!(bcs_rvm(&d, &y, &cfg).unwrap().image.support.is_empty());
        assert!(omp(&d, &y[..5], &cfg).is_err());
    }

    #[test]
    fn block_omp_recovers_per_sensor_amplitudes() {
        let mut s = small_scene(3);
        s.radars[1].sync_offset_s = 10e-6;
        s.radars[2].sync_offset_s = 5e-6;
        let g = grid();
        let l = 40;
        s.targets.push(Target {
            position: g.position(l),
            reflectivity: vec![c(1.0, 0.0), c(0.3, 0.6), c(-0.8, 0.2)],
        });
        let y = synthesize_noncoherent(&s, &NoiseSpec::noiseless()).unwrap().samples;
        let d = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        let img = block_omp(&d, &y, &SolverConfig { max_sparsity: 3, ..Default::default() }).unwrap();
        assert_eq!(img.support, vec![l]);
        let amp = received_amplitudes(&s).unwrap();
        for q in 0..3 {
            assert!((img.coefficients[l * 3 + q] - amp[0][q]).norm() < 1e-8);
        }
    }

    #[test]
    fn block_omp_sensor_one_only() {
        let s = small_scene(3);
        let g = grid();
        let d = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        let per = s.dims().per_sensor();
        let mut y = d.column(17 * 3);
        for v in &mut y[per..] {
            *v = ZERO;
        }
        let img = block_omp(&d, &y, &SolverConfig { max_sparsity: 1, ..Default::default() }).unwrap();
        assert_eq!(img.support, vec![17]);
        assert!((img.coefficients[17 * 3] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(img.coefficients[17 * 3 + 1].norm() < 1e-10);
        assert!(img.coefficients[17 * 3 + 2].norm() < 1e-10);
        assert!(img.active.iter().all(|j| img.support.contains(&(j / 3))));
    }

    #[test]
    fn l1_large_weight_gives_zero() {
        let d = random_dense(30, 20, 4);
        let y = combo(&d, &[(2, c(1.0, 0.0))]);
        let img = l1_map(&d, &y, &SolverConfig { l1_weight: 1e6, ..Default::default() }).unwrap();
        assert!(img.support.is_empty());
        assert!(img.coefficients.iter().all(|v| *v == ZERO));
        assert!(l1_map(&d, &y, &SolverConfig { l1_weight: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn l1_single_column_debiased() {
        let d = random_dense(40, 25, 5);
        let y = combo(&d, &[(9, c(0.4, -1.5))]);
        let img = l1_map(&d, &y, &SolverConfig { l1_weight: 0.05, ..Default::default() }).unwrap();
        assert_eq!(img.support, vec![9]);
        assert!((img.coefficients[9] - c(0.4, -1.5)).norm() < 1e-9);
    }

    #[test]
    fn rvm_single_target_matches_least_squares() {
        let s = small_scene(3);
        let g = grid();
        let l = 31;
        let d = build_coherent_dictionary(&s, &g, &[0.0; 3], &DictionaryOptions::default()).unwrap();
        let alpha = c(1.5, -0.5);
        let y: Vec<Complex64> = d.column(l).iter().map(|v| v * alpha).collect();
        let r = bcs_rvm(&d, &y, &SolverConfig::default()).unwrap();
        assert_eq!(r.image.support, vec![l]);
        let ls = least_squares(&[d.column(l)], &y)[0];
        assert!((r.image.coefficients[l] - ls).norm() <= 1e-6 * ls.norm());
        assert!(r.gamma_range.0 >= -1e-12 && r.gamma_range.1 <= 1.0 + 1e-12);
    }

    #[test]
    fn rvm_em_mode_single_target() {
        let d = random_dense(40, 15, 6);
        let y = combo(&d, &[(4, c(1.0, 1.0))]);
        // b1 > 0 caps every precision near (1 + a1) / b1, so pruning needs it off
        let hyper = RvmHyper { a1: 0.0, b1: 0.0, ..Default::default() };
        let cfg = SolverConfig { rvm_mode: RvmMode::Em, max_iters: 2000, prune_threshold: 1e8, rvm_hyper: hyper, ..Default::default() };
        let r = bcs_rvm(&d, &y, &cfg).unwrap();
        assert_eq!(r.image.support, vec![4]);
        assert!((r.image.coefficients[4] - c(1.0, 1.0)).norm() < 1e-4);
        assert!(r.gamma_range.0 >= -1e-12 && r.gamma_range.1 <= 1.0 + 1e-12);
    }

    #[test]
    fn fixed_precision_posterior_is_ridge() {
        let d = random_dense(20, 6, 7);
        let y = combo(&d, &[(1, c(1.0, 0.0)), (4, c(0.0, 2.0))]);
        let active = [0usize, 1, 4];
        let betas = [0.5, 2.0, 1.0];
        let sigma2 = 0.3;
        let (mu, _) = rvm_posterior(&d, &y, &active, &betas, sigma2).unwrap();
        // direct ridge solve (HᴴH + σ² B) x = Hᴴ y
        let a = DMatrix::from_fn(20, 3, |i, j| d.cols[active[j]][i]);
        let mut lhs = a.adjoint() * &a;
        for i in 0..3 {
            lhs[(i, i)] += Complex64::new(sigma2 * betas[i], 0.0);
        }
        let rhs = a.adjoint() * DVector::from_column_slice(&y);
        let x = lhs.lu().solve(&rhs).unwrap();
        for i in 0..3 {
            assert!((mu[i] - x[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn nmse_examples() {
        let t = vec![c(1.0, 0.0), ZERO, c(0.0, -0.5), ZERO];
        assert_eq!(nmse(&t, &t, &[0, 2]).unwrap(), (0.0, 0.0));
        let scaled: Vec<Complex64> = t.iter().map(|v| v * 3.7).collect();
        let (a, b) = nmse(&t, &scaled, &[0, 2]).unwrap();
        assert!(a < 1e-15 && b < 1e-15);
        let zero = vec![ZERO; 4];
        let (_, target) = nmse(&t, &zero, &[0, 2]).unwrap();
        assert!((target - (1.0f64 + 0.25).sqrt()).abs() < 1e-15);
        assert!(matches!(nmse(&zero, &t, &[0]), Err(RadarError::UndefinedMetric(_))));
        assert!(nmse(&t, &t[..3], &[0]).is_err());
    }

    #[test]
    fn csv_rows() {
        let g = ImagingGrid::new([0.0, 1.0], [5.0, 5.0], 2, 1).unwrap();
        let mut img = SparseImage {
            coefficients: vec![ZERO, ZERO, c(1.0, 2.0), ZERO],
            support: vec![1],
            active: vec![2],
            residual_norm: 0.0,
            iterations: 1,
            converged: true,
            layout: Layout::Blocks(2),
            noise_variance: None,
        };
        let csv = img.to_csv(&g);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,5,0,1e0,2e0");
        img.layout = Layout::Coherent;
        img.coefficients = vec![ZERO, c(0.5, 0.0)];
        img.active = vec![1];
        assert_eq!(img.to_csv(&g).lines().nth(1).unwrap(), "1,5,-1,5e-1,0e0");
    }

    #[test]
    fn materialized_and_lazy_agree() {
        let mut s = small_scene(2);
        let g = grid();
        s.targets.push(Target::uniform(g.position(10), c(1.0, 0.0), 2));
        s.targets.push(Target::uniform(g.position(60), c(0.5, 0.5), 2));
        let y = add_noise(&synthesize_noncoherent(&s, &NoiseSpec::noiseless()).unwrap(), &NoiseSpec { variance: 0.01, seed: 1 }).unwrap().samples;
        let dense = build_block_dictionary(&s, &g, &DictionaryOptions::default()).unwrap();
        let lazy = build_block_dictionary(&s, &g, &DictionaryOptions { materialize: Materialize::Never, ..Default::default() }).unwrap();
        let cfg = SolverConfig { max_sparsity: 4, ..Default::default() };
        assert_eq!(block_omp(&dense, &y, &cfg).unwrap().support, block_omp(&lazy, &y, &cfg).unwrap().support);
        assert_eq!(omp(&dense, &y, &cfg).unwrap().support, omp(&lazy, &y, &cfg).unwrap().support);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn l1_objective_non_increasing(seed in 0u64..1000) {
            let d = random_dense(25, 40, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let y: Vec<Complex64> = (0..25).map(|_| c(rng.random(), rng.random())).collect();
            let (_, trace) = l1_map_trace(&d, &y, &SolverConfig { l1_weight: 0.5, max_iters: 200, ..Default::default() }).unwrap();
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }

        #[test]
        fn residual_orthogonal_to_support(seed in 0u64..1000) {
            let d = random_dense(30, 20, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
            let y: Vec<Complex64> = (0..30).map(|_| c(rng.random(), rng.random())).collect();
            let cfg = SolverConfig { max_sparsity: 4, l1_weight: 0.3, ..Default::default() };
            let images = [
                omp(&d, &y, &cfg).unwrap(),
                block_omp(&d, &y, &cfg).unwrap(),
                l1_map(&d, &y, &cfg).unwrap(),
            ];
            for img in &images {
                let hb = d.apply(&img.coefficients);
                let r: Vec<Complex64> = y.iter().zip(&hb).map(|(a, b)| a - b).collect();
                for &j in &img.active {
                    let ip: Complex64 = d.cols[j].iter().zip(&r).map(|(a, b)| a.conj() * b).sum();
                    prop_assert!(ip.norm() <= 1e-8 * norm(&d.cols[j]) * norm(&y));
                }
                // greedy residual never grows past the data
                prop_assert!(img.residual_norm <= norm(&y) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn rvm_gamma_in_unit_interval(seed in 0u64..1000) {
            let d = random_dense(30, 20, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
            let mut y = combo(&d, &[(rng.random_range(0..20), c(1.0, 0.0)), (rng.random_range(0..20), c(0.0, 0.7))]);
            for v in &mut y {
                *v += c(0.05 * (rng.random::<f64>() - 0.5), 0.05 * (rng.random::<f64>() - 0.5));
            }
            let r = bcs_rvm(&d, &y, &SolverConfig::default()).unwrap();
            prop_assert!(r.gamma_range.0 >= -1e-9 && r.gamma_range.1 <= 1.0 + 1e-9);
        }
    }
}
