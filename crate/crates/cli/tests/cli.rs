use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radar_cli::Config;
use radar_core::eval::presets;
use radar_core::Scene;
use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(configs().join(name)).unwrap()).unwrap()
}

fn save(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn dsradar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsradar")).args(args).output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    dsradar(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn assert_same_tree(a: &Path, b: &Path) {
    assert_eq!(listing(a), listing(b));
    for f in listing(a) {
        assert!(fs::read(a.join(&f)).unwrap() == fs::read(b.join(&f)).unwrap(), "{f} differs");
    }
}

/// Smaller sync run so the tests stay quick.
fn quick_sync() -> Value {
    let mut v = load("sync.json");
    v["experiment"]["sync"]["trials"] = json!(20);
    v
}

#[test]
fn ptrf_writes_three_grids_and_four_cuts() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("ptrf.json");
    v["grid"]["spacing"] = json!(0.25);
    v["experiment"]["ptrf"]["cut_step_m"] = json!(0.02);
    let out = tmp.path().join("out");
    let o = run("ptrf", &save(tmp.path(), &v), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = listing(&out);
    for mode in ["single", "noncoherent", "coherent"] {
        assert!(files.contains(&format!("ptrf_{mode}.csv")));
        assert!(files.contains(&format!("ptrf_{mode}.pgm")));
    }
    let cuts: Vec<_> = files.iter().filter(|f| f.starts_with("cut_")).collect();
    assert_eq!(cuts.len(), 4, "{cuts:?}");
    let cut = fs::read_to_string(out.join("cut_range_fine.csv")).unwrap();
    assert!(cut.starts_with("y,single,noncoherent,coherent\n"));
    assert!(files.contains(&"manifest.json".to_string()));
}

#[test]
fn ptrf_without_targets_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("ptrf.json");
    v["scene"]["targets"] = json!([]);
    let o = run("ptrf", &save(tmp.path(), &v), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least one target"), "{}", stderr(&o));
}

#[test]
fn unknown_mode_lists_valid_modes() {
    let o = dsradar(&["focus", "--config", "x.json"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    for m in ["ptrf", "bounds", "image", "nmse", "sync"] {
        assert!(e.contains(m), "{e}");
    }
}

#[test]
fn unknown_scheme_lists_valid_schemes() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("medium_range.json");
    v["experiment"]["imaging"]["schemes"] = json!(["omp-cp", "fista"]);
    let o = run("nmse", &save(tmp.path(), &v), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("fista") && e.contains("single-sensor, bomp-ncp, omp-cp, bcs-cp"), "{e}");
}

#[test]
fn validation_reports_every_bad_field() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("sync.json");
    v["scene"]["radars"][0]["carrier_hz"] = json!(-1.0);
    v["scene"]["radars"][2]["n_chirps"] = json!(0);
    let o = run("sync", &save(tmp.path(), &v), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("radars[0].carrier_hz"), "{e}");
    assert!(e.contains("radars[2].n_chirps"), "{e}");
}

#[test]
fn help_exits_cleanly() {
    let o = dsradar(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = run("sync", &tmp.path().join("absent.json"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sync_recovers_injected_offsets() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run("sync", &save(tmp.path(), &quick_sync()), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sync_trials.csv")).unwrap();
    let truth = [0.0, 10e-6, 5e-6];
    let mut sq = [0.0; 3];
    let mut n = 0.0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let q: usize = f[1].parse().unwrap();
        let err: f64 = f[3].parse().unwrap();
        sq[q] += err * err;
        if q == 0 {
            n += 1.0;
        }
    }
    assert_eq!(n, 20.0);
    for q in 1..3 {
        assert!((sq[q] / n).sqrt() < 0.05 * truth[q]);
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = save(tmp.path(), &quick_sync());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("sync", &cfg, &a, &["--seed", "5"]).status.success());
    assert!(run("sync", &cfg, &b, &["--seed", "5", "--threads", "1"]).status.success());
    assert_same_tree(&a, &b);
    let c = tmp.path().join("c");
    assert!(run("sync", &cfg, &c, &["--seed", "6"]).status.success());
    assert!(fs::read(a.join("sync_trials.csv")).unwrap() != fs::read(c.join("sync_trials.csv")).unwrap());
}

#[test]
fn manifest_reruns_to_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = save(tmp.path(), &load("close_pair.json"));
    let first = tmp.path().join("first");
    let o = run("image", &cfg, &first, &["--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "image");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["experiment"]["seed"], 11);
    assert!(manifest["versions"]["radar-core"].is_string());

    let second = tmp.path().join("second");
    let o = run("image", &first.join("manifest.json"), &second, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_same_tree(&first, &second);
}

#[test]
fn bounds_writes_seven_panels() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("bounds.json");
    for r in v["scene"]["radars"].as_array_mut().unwrap() {
        r["n_chirps"] = json!(2);
    }
    let b = &mut v["experiment"]["bounds"];
    b["nx"] = json!(5);
    b["ny"] = json!(4);
    b["n_mc"] = json!(3);
    let out = tmp.path().join("out");
    let o = run("bounds", &save(tmp.path(), &v), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let panels: Vec<String> = listing(&out).into_iter().filter(|f| f.starts_with("bounds_")).collect();
    let letters: Vec<char> = panels.iter().map(|f| f.chars().nth(7).unwrap()).collect();
    assert_eq!(letters, vec!['a', 'b', 'c', 'd', 'e', 'f', 'g']);
    let csv = fs::read_to_string(out.join("bounds_b_pcf_bcrlb.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 6);
}

#[test]
fn nmse_writes_table() {
    let tmp = TempDir::new().unwrap();
    let mut v = load("nmse_sweep.json");
    v["experiment"]["imaging"]["n_trials"] = json!(2);
    v["experiment"]["imaging"]["snr_db"] = json!([10.0]);
    v["experiment"]["imaging"]["schemes"] = json!(["bomp-ncp", "omp-cp"]);
    let out = tmp.path().join("out");
    let o = run("nmse", &save(tmp.path(), &v), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("nmse.csv")).unwrap();
    assert!(csv.starts_with("snr_db,nmse,bomp-ncp,omp-cp\n"), "{csv}");
}

fn close(a: &Scene, b: &Scene) {
    assert_eq!(a.radars, b.radars);
    assert_eq!(a.ego_velocity, b.ego_velocity);
    assert_eq!(a.targets.len(), b.targets.len());
    for (s, t) in a.targets.iter().zip(&b.targets) {
        assert!((s.position - t.position).norm() < 1e-12);
        for (x, y) in s.reflectivity.iter().zip(&t.reflectivity) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}

#[test]
fn shipped_configs_match_presets() {
    let pairs = [
        ("medium_range.json", presets::medium_range()),
        ("close_pair.json", presets::close_pair()),
        ("near_range.json", presets::near_range()),
        ("nmse_sweep.json", presets::nmse_sweep()),
    ];
    for (file, exp) in pairs {
        let c = Config::load(&configs().join(file)).unwrap();
        close(&c.scene(), &exp.scene);
        assert_eq!(c.grid().unwrap(), exp.grid, "{file}");
        assert_eq!(c.experiment.imaging.sync, exp.sync, "{file}");
        assert_eq!(c.experiment.imaging.stopping, exp.stopping, "{file}");
        assert_eq!(c.experiment.imaging.n_trials.max(1), exp.n_trials.max(1), "{file}");
    }
    let ptrf = Config::load(&configs().join("ptrf.json")).unwrap();
    close(&ptrf.scene(), &radar_core::scene::presets::ptrf_scene());
    let bounds = Config::load(&configs().join("bounds.json")).unwrap();
    assert_eq!(bounds.scene().radars, radar_core::scene::presets::bounds_radars(3, 100));
}
