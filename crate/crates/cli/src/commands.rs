use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use radar_core::bounds::{bound_contour, linspace, BoundMode, MeasurementNoise, PriorSpec, RawNoise};
use radar_core::dictionary::{grid_pgm, main_lobe_width, ptrf_at, ptrf_weighted, PtrfMode, HALF_POWER};
use radar_core::eval::{run_nmse_sweep, run_scenario};
use radar_core::signal::{add_noise, snr_to_variance, synthesize_coherent};
use radar_core::sync::estimate_offsets;
use radar_core::{dictionary, Complex64, Experiment, ImagingGrid, NoiseSpec, Scene, SyncEstimate, Vec3};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Ptrf,
    Bounds,
    Image,
    Nmse,
    Sync,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ptrf => "ptrf",
            Command::Bounds => "bounds",
            Command::Image => "image",
            Command::Nmse => "nmse",
            Command::Sync => "sync",
        }
    }
}

#[derive(Serialize)]
struct Versions {
    dsradar: &'static str,
    #[serde(rename = "radar-core")]
    radar_core: &'static str,
}

/// Everything needed to repeat a run; loadable as a config.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    seed: u64,
    versions: Versions,
    config: &'a Config,
}

/// Output directory plus the list of files written into it.
struct Out {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(Out {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }
}

/// Runs `command`, writing its artifacts and `manifest.json` into `out`.
/// `seed` overrides the config's experiment seed. Returns the files written.
pub fn run(command: Command, config: &Config, out: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, CliError> {
    let mut resolved = config.clone();
    if let Some(s) = seed {
        resolved.experiment.seed = s;
    }
    let mut out = Out::new(out)?;
    let summary = match command {
        Command::Ptrf => ptrf(&resolved, &mut out)?,
        Command::Bounds => bounds(&resolved, &mut out)?,
        Command::Image => image(&resolved, &mut out)?,
        Command::Nmse => nmse(&resolved, &mut out)?,
        Command::Sync => sync(&resolved, &mut out)?,
    };
    out.write("summary.txt", &summary)?;
    print!("{summary}");
    let manifest = Manifest {
        command: command.name(),
        seed: resolved.experiment.seed,
        versions: Versions {
            dsradar: env!("CARGO_PKG_VERSION"),
            radar_core: radar_core::VERSION,
        },
        config: &resolved,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write("manifest.json", text + "\n")?;
    Ok(out.written)
}

const PTRF_MODES: [(PtrfMode, &str); 3] = [
    (PtrfMode::Single, "single"),
    (PtrfMode::NonCoherent, "noncoherent"),
    (PtrfMode::Coherent, "coherent"),
];

fn cut_csv(axis: &str, positions: &[f64], columns: &[Vec<f64>]) -> String {
    let mut s = format!("{axis},single,noncoherent,coherent\n");
    for (i, p) in positions.iter().enumerate() {
        let _ = write!(s, "{p}");
        for c in columns {
            let _ = write!(s, ",{:e}", c[i]);
        }
        s.push('\n');
    }
    s
}

fn ptrf(config: &Config, out: &mut Out) -> Result<String, CliError> {
    let scene = config.validate_scene()?;
    let grid = config.grid()?;
    if scene.targets.is_empty() {
        return Err(CliError::Usage("ptrf needs at least one target in scene.targets".into()));
    }
    let opts = &config.experiment.ptrf;
    let target = scene.targets.get(opts.target).ok_or_else(|| {
        CliError::Usage(format!(
            "experiment.ptrf.target {} but the scene has {} target(s)",
            opts.target,
            scene.targets.len()
        ))
    })?;
    if !(opts.cut_step_m > 0.0 && opts.cut_half_width_m > 0.0) {
        return Err(CliError::Usage("experiment.ptrf cut_step_m and cut_half_width_m must be positive".into()));
    }
    let p = target.position;
    let alphas = target.reflectivity.as_slice();

    let mut grids = Vec::new();
    for (mode, name) in PTRF_MODES {
        let v = ptrf_weighted(&scene, &grid, &p, mode, Some(alphas))?;
        out.write(&format!("ptrf_{name}.csv"), dictionary::grid_csv(&grid, &v))?;
        out.write(&format!("ptrf_{name}.pgm"), grid_pgm(&grid, &v))?;
        grids.push(v);
    }

    // cuts through the grid cell nearest the target
    let (ix, iy) = grid.coords(grid.nearest(&p));
    let xs = grid.xs();
    let ys = grid.ys();
    let row: Vec<Vec<f64>> = grids.iter().map(|g| (0..grid.nx).map(|i| g[grid.index(i, iy)]).collect()).collect();
    let col: Vec<Vec<f64>> = grids.iter().map(|g| (0..grid.ny).map(|i| g[grid.index(ix, i)]).collect()).collect();
    out.write("cut_cross_range_grid.csv", cut_csv("x", &xs, &row))?;
    out.write("cut_range_grid.csv", cut_csv("y", &ys, &col))?;

    // finely sampled cuts through the target itself
    let n = (2.0 * opts.cut_half_width_m / opts.cut_step_m).round() as usize + 1;
    let offsets = linspace(-opts.cut_half_width_m, opts.cut_half_width_m, n);
    let mut summary = String::from("mode,cross_range_width_m,range_width_m\n");
    let fine = |along_x: bool| -> Result<(Vec<f64>, Vec<Vec<f64>>), CliError> {
        let axis: Vec<f64> = offsets.iter().map(|d| if along_x { p.x + d } else { p.y + d }).collect();
        let probes: Vec<Vec3> = axis
            .iter()
            .map(|&a| if along_x { Vec3::new(a, p.y, p.z) } else { Vec3::new(p.x, a, p.z) })
            .collect();
        let cols = PTRF_MODES
            .iter()
            .map(|&(mode, _)| ptrf_at(&scene, &p, &probes, mode, Some(alphas)))
            .collect::<radar_core::Result<Vec<_>>>()?;
        Ok((axis, cols))
    };
    let (cx, cross) = fine(true)?;
    let (ry, range) = fine(false)?;
    out.write("cut_cross_range_fine.csv", cut_csv("x", &cx, &cross))?;
    out.write("cut_range_fine.csv", cut_csv("y", &ry, &range))?;
    for (i, (_, name)) in PTRF_MODES.iter().enumerate() {
        let w = |pos: &[f64], v: &[f64]| main_lobe_width(pos, v, HALF_POWER).map_or("nan".to_string(), |w| format!("{w:.4}"));
        let _ = writeln!(summary, "{name},{},{}", w(&cx, &cross[i]), w(&ry, &range[i]));
    }
    Ok(summary)
}

fn bounds(config: &Config, out: &mut Out) -> Result<String, CliError> {
    let scene = config.validate_scene()?;
    let b = &config.experiment.bounds;
    let mut problems = Vec::new();
    if b.nx == 0 || b.ny == 0 {
        problems.push("experiment.bounds nx and ny must be positive".to_string());
    }
    if b.n_mc == 0 {
        problems.push("experiment.bounds.n_mc must be at least 1".to_string());
    }
    if !(b.prior_std_m > 0.0) {
        problems.push("experiment.bounds.prior_std_m must be positive".to_string());
    }
    if !problems.is_empty() {
        return Err(CliError::Usage(problems.join("; ")));
    }
    let q = scene.n_sensors();
    let single = Scene {
        radars: scene.radars[..1].to_vec(),
        ..scene.clone()
    };
    let xs = linspace(b.x_range[0], b.x_range[1], b.nx);
    let ys = linspace(b.y_range[0], b.y_range[1], b.ny);
    let alphas = vec![Complex64::new(1.0, 0.0); q];
    let noise = |n: usize| MeasurementNoise {
        point_cloud: b.point_cloud(),
        raw: RawNoise::from_snr(b.snr_db, &alphas[..n]),
    };
    let crlb = PriorSpec::deterministic(Vec3::zeros());
    let bcrlb = PriorSpec::isotropic(Vec3::zeros(), b.prior_std_m, b.n_mc, config.experiment.seed);
    let ncp = BoundMode::NonCoherent { alphas: alphas.clone() };
    let cp = BoundMode::Coherent {
        alpha: alphas[0],
        options: b.coherent(),
    };
    let panels: [(&str, &Scene, &PriorSpec, &BoundMode); 7] = [
        ("a_pcf_crlb", &scene, &crlb, &BoundMode::PointCloud),
        ("b_pcf_bcrlb", &scene, &bcrlb, &BoundMode::PointCloud),
        ("c_pcf_crlb_single", &single, &crlb, &BoundMode::PointCloud),
        ("d_ncp_crlb", &scene, &crlb, &ncp),
        ("e_ncp_bcrlb", &scene, &bcrlb, &ncp),
        ("f_cp_crlb", &scene, &crlb, &cp),
        ("g_cp_bcrlb", &scene, &bcrlb, &cp),
    ];
    let mut summary = String::from("panel,flagged_cells,median_m2,min_m2,max_m2\n");
    for (name, s, prior, mode) in panels {
        let c = bound_contour(s, &noise(s.n_sensors()), prior, &xs, &ys, mode)?;
        out.write(&format!("bounds_{name}.csv"), c.to_csv())?;
        let mut v: Vec<f64> = c.values.iter().copied().filter(|v| v.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let stat = |x: Option<&f64>| x.map_or("nan".to_string(), |x| format!("{x:e}"));
        let _ = writeln!(
            summary,
            "{name},{},{},{},{}",
            c.n_flagged(),
            stat(v.get(v.len() / 2)),
            stat(v.first()),
            stat(v.last())
        );
    }
    Ok(summary)
}

fn experiment(config: &Config) -> Result<Experiment, CliError> {
    let scene = config.validate_scene()?;
    let im = &config.experiment.imaging;
    let exp = Experiment {
        scene,
        grid: config.grid()?,
        schemes: im.schemes()?,
        snr_db: im.snr_db.clone(),
        snr_convention: im.snr_convention,
        n_trials: im.n_trials,
        solver: config.solvers,
        stopping: im.stopping,
        sync: im.sync,
        dictionary: Default::default(),
        seed: config.experiment.seed,
    };
    exp.validate().map_err(CliError::from_config)?;
    Ok(exp)
}

fn write_estimate(out: &mut Out, name: &str, est: &SyncEstimate) -> Result<(), CliError> {
    out.write(name, est.to_csv())
}

fn image(config: &Config, out: &mut Out) -> Result<String, CliError> {
    let exp = experiment(config)?;
    let name = config.experiment.imaging.scenario()?;
    let report = run_scenario(&exp, name)?;
    for m in &report.images {
        out.write(&format!("image_{}.csv", m.label), m.image.to_csv(&exp.grid))?;
        let mag = normalised(&m.image.cell_magnitudes());
        out.write(&format!("image_{}_mag.csv", m.label), dictionary::grid_csv(&exp.grid, &mag))?;
        out.write(&format!("image_{}_mag.pgm", m.label), grid_pgm(&exp.grid, &mag))?;
    }
    if let Some(est) = &report.sync {
        write_estimate(out, "sync.csv", est)?;
    }
    Ok(report.summary())
}

fn normalised(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter().map(|x| x / max).collect()
    } else {
        v.to_vec()
    }
}

fn nmse(config: &Config, out: &mut Out) -> Result<String, CliError> {
    let exp = experiment(config)?;
    let table = run_nmse_sweep(&exp)?;
    let csv = table.to_csv();
    out.write("nmse.csv", &csv)?;
    Ok(csv)
}

fn anchor_cell(config: &Config, scene: &Scene, grid: &ImagingGrid) -> Result<usize, CliError> {
    let p = match config.experiment.sync.anchor {
        Some(a) => Vec3::new(a[0], a[1], a[2]),
        None => {
            let power = |i: usize| scene.targets[i].reflectivity.iter().map(|a| a.norm_sqr()).sum::<f64>();
            let best = (0..scene.targets.len())
                .max_by(|&a, &b| power(a).total_cmp(&power(b)).then(b.cmp(&a)))
                .ok_or_else(|| CliError::Usage("sync needs a target or experiment.sync.anchor".into()))?;
            scene.targets[best].position
        }
    };
    if !grid.contains(&p) {
        return Err(CliError::Usage(format!("sync anchor {:?} lies outside the grid", p.as_slice())));
    }
    Ok(grid.nearest(&p))
}

fn sync(config: &Config, out: &mut Out) -> Result<String, CliError> {
    let scene = config.validate_scene()?;
    let grid = config.grid()?;
    let cell = anchor_cell(config, &scene, &grid)?;
    let opts = &config.experiment.sync;
    let truth: Vec<f64> = scene.sync_offsets().iter().map(|o| o - scene.radars[0].sync_offset_s).collect();
    let clean = synthesize_coherent(&scene, &NoiseSpec::noiseless())?;
    let mut summary = String::new();
    let Some(snr) = opts.snr_db else {
        let est = estimate_offsets(&scene, &grid, &clean, &[cell])?;
        write_estimate(out, "sync.csv", &est)?;
        summary.push_str(&est.report());
        return Ok(summary);
    };
    if opts.trials == 0 {
        return Err(CliError::Usage("experiment.sync.trials must be at least 1".into()));
    }
    let variance = snr_to_variance(snr, clean.mean_power())?;
    let seed = config.experiment.seed;
    let estimates = (0..opts.trials as u64)
        .into_par_iter()
        .map(|t| {
            let noise = NoiseSpec {
                variance,
                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t),
            };
            estimate_offsets(&scene, &grid, &add_noise(&clean, &noise)?, &[cell])
        })
        .collect::<radar_core::Result<Vec<_>>>()?;
    write_estimate(out, "sync.csv", &estimates[0])?;
    let mut trials = String::from("trial,sensor,offset_s,error_s\n");
    let mut sq = vec![0.0; truth.len()];
    for (t, est) in estimates.iter().enumerate() {
        for (q, (&o, &tr)) in est.offsets_s.iter().zip(&truth).enumerate() {
            let _ = writeln!(trials, "{t},{q},{o:e},{:e}", o - tr);
            sq[q] += (o - tr).powi(2);
        }
    }
    out.write("sync_trials.csv", trials)?;
    let _ = writeln!(summary, "{} trials at {snr} dB, anchor cell {cell}", opts.trials);
    for (q, s) in sq.iter().enumerate().skip(1) {
        let rms = (s / opts.trials as f64).sqrt();
        let rel = if truth[q] != 0.0 {
            format!(" ({:.2}% of the true offset)", 100.0 * rms / truth[q].abs())
        } else {
            String::new()
        };
        let _ = writeln!(summary, "sensor {q}: true {:e} s, rms error {rms:.3e} s{rel}", truth[q]);
    }
    Ok(summary)
}
