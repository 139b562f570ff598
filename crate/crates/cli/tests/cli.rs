use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3

[simulation]
pupil_scale = 1.0

[simulation.params]
na_obj = 0.25
wavelength = 0.532
pixel_size = 6.5
magnification = 20.0
patch_pixels = 64

[simulation.geometry]
kind = "planar-grid"
pitch_na = 0.041
extent_na = 0.2

[simulation.perturbation]
rotation_deg = 4.0
shift_na = [0.01, 0.0]
scale = 1.05

[simulation.object]
kind = "random-smooth"
seed = 1
correlation_px = 0.75

[bfcal]
min_prominence = 1.0

[solver]
max_iterations = 6
"#;

fn fpmcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpmcal")).args(args).output().expect("fpmcal runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.to_str().unwrap().to_string()
}

fn simulate(dir: &Path, cfg: &str, name: &str) -> String {
    let out = dir.join(name);
    ok(&fpmcal(&["simulate", "--config", cfg, "--out", out.to_str().unwrap()]));
    out.to_str().unwrap().to_string()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_a_dataset_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), "");
    let a = simulate(t.path(), &cfg, "a");
    let b = simulate(t.path(), &cfg, "b");
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&a).join("meta.json")).unwrap()).unwrap();
    let images = meta["images"].as_array().unwrap();
    assert!(images.len() > 1);
    assert!(images.iter().all(|m| m.get("true_na").is_some()));
    let (fa, fb) = (files(Path::new(&a)), files(Path::new(&b)));
    assert_eq!(fa.len(), images.len() + 2);
    // run.toml records the output path, the only intended difference.
    let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "run.toml").collect::<Vec<_>>();
    assert_eq!(strip(fa), strip(fb));
}

#[test]
fn zero_extent_gives_a_single_image() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), "");
    let out = t.path().join("one");
    ok(&fpmcal(&["simulate", "--config", &cfg, "--extent", "0", "--out", out.to_str().unwrap()]));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["images"].as_array().unwrap().len(), 1);
}

#[test]
fn usage_errors_exit_with_2() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("nothing");
    let out = fpmcal(&["calibrate", "--dataset", missing.to_str().unwrap(), "--out", t.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = fpmcal(&["reconstruct", "--dataset", missing.to_str().unwrap(), "--out", t.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fpmcal(&["calibrate", "--mode", "sideways"]).status.code(), Some(2));
    let bad = t.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nbogus = true\n").unwrap();
    assert_eq!(fpmcal(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(t.path(), "");
    let out = fpmcal(&["simulate", "--config", &cfg, "--patch", "0", "--out", t.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_reconstruct_and_evaluate() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), "");
    let data = simulate(t.path(), &cfg, "data");
    let cal = t.path().join("cal");
    ok(&fpmcal(&["calibrate", "--config", &cfg, "--dataset", &data, "--mode", "bf", "--out", cal.to_str().unwrap()]));
    for f in ["bfcal.json", "calibration.csv", "summary.json", "run.toml"] {
        assert!(cal.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cal.join("summary.json")).unwrap()).unwrap();
    assert!(
        summary["error_final"]["mean_na"].as_f64().unwrap() < summary["error_expected"]["mean_na"].as_f64().unwrap()
    );

    let rec = t.path().join("rec");
    let bf = cal.join("bfcal.json");
    ok(&fpmcal(&[
        "reconstruct",
        "--config",
        &cfg,
        "--dataset",
        &data,
        "--bfcal",
        bf.to_str().unwrap(),
        "--out",
        rec.to_str().unwrap(),
        "--plots",
    ]));
    for f in [
        "object_amplitude.fpc",
        "object_phase.fpc",
        "pupil_amplitude.fpc",
        "pupil_phase.fpc",
        "angles.json",
        "cost.csv",
        "cost.svg",
    ] {
        assert!(rec.join(f).exists(), "{f}");
    }
    let cost = fs::read_to_string(rec.join("cost.csv")).unwrap();
    assert!(cost.starts_with("iteration,cost,mean_moved_na\n"));
    assert!(cost.lines().count() >= 2);

    let ev = t.path().join("ev");
    ok(&fpmcal(&[
        "evaluate",
        "--config",
        &cfg,
        "--dataset",
        &data,
        "--reconstruction",
        rec.to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]));
    let e: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("evaluation.json")).unwrap()).unwrap();
    assert!(e["error_final"]["mean_na"].as_f64().unwrap() < 0.02);
}

#[test]
fn bar_target_that_does_not_fit_exits_with_3() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), "");
    let data = simulate(t.path(), &cfg, "data");
    let rec = t.path().join("rec");
    ok(&fpmcal(&[
        "reconstruct",
        "--config",
        &cfg,
        "--dataset",
        &data,
        "--mode",
        "none",
        "--max-iterations",
        "1",
        "--out",
        rec.to_str().unwrap(),
    ]));
    // Same dataset, but evaluated against a target laid out for a far larger grid.
    let bar = SMALL.replace(
        "[simulation.object]\nkind = \"random-smooth\"\nseed = 1\ncorrelation_px = 0.75\n",
        "[simulation.object]\nkind = \"bar-target-amplitude\"\n\n[simulation.object.target]\nbackground = 0.1\nbar_level = 1.0\n\n[[simulation.object.target.groups]]\nperiod_px = 10.0\n\n[[simulation.object.target.groups.elements]]\norientation = \"vertical\"\norigin = [900.0, 900.0]\n",
    );
    let p = t.path().join("bar.toml");
    fs::write(&p, bar).unwrap();
    let out = fpmcal(&[
        "evaluate",
        "--config",
        p.to_str().unwrap(),
        "--dataset",
        &data,
        "--reconstruction",
        rec.to_str().unwrap(),
        "--out",
        t.path().join("ev").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_width_sweep_matches_the_unperturbed_calibration() {
    let t = tempfile::tempdir().unwrap();
    // Sweep and calibrate share settings, and the dataset is unperturbed.
    let extra = "\n[sweep]\n[[sweep.ranges]]\naxis = \"rotation\"\nfrom = 0.0\nto = 0.0\npoints = 1\n\n[sweep.bfcal]\nmin_prominence = 1.0\n\n[sweep.solver]\nmax_iterations = 6\n";
    let cfg = write_config(t.path(), extra);
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "rotation_deg = 4.0\nshift_na = [0.01, 0.0]\nscale = 1.05",
        "rotation_deg = 0.0\nshift_na = [0.0, 0.0]\nscale = 1.0",
    );
    fs::write(&cfg, text).unwrap();
    let sw = t.path().join("sw");
    let sw2 = t.path().join("sw2");
    ok(&fpmcal(&["sweep", "--config", &cfg, "--out", sw.to_str().unwrap(), "--plots"]));
    ok(&fpmcal(&["sweep", "--config", &cfg, "--out", sw2.to_str().unwrap()]));
    let csv = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(sw2.join("sweep.csv")).unwrap());
    assert!(sw.join("sweep_rotation.svg").exists());
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let header = rows.headers().unwrap().clone();
    let row = rows.records().next().unwrap().unwrap();
    let col = |name: &str| row[header.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(col("failed"), "false");

    let data = simulate(t.path(), &cfg, "data");
    let cal = t.path().join("cal");
    // The sweep's brightfield stage searches the whole disk; match it here.
    let text = fs::read_to_string(&cfg).unwrap() + "\n[bfcal.window]\nkind = \"brightfield-disk\"\n";
    let cfg2 = t.path().join("cal.toml");
    fs::write(&cfg2, text).unwrap();
    ok(&fpmcal(&["calibrate", "--config", cfg2.to_str().unwrap(), "--dataset", &data, "--out", cal.to_str().unwrap()]));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(cal.join("summary.json")).unwrap()).unwrap();
    let baseline = s["error_final"]["mean_na"].as_f64().unwrap();
    let swept: f64 = col("error_bf_sc").parse().unwrap();
    assert!((swept - baseline).abs() < 1e-6, "sweep {swept} vs calibrate {baseline}");
}

#[test]
fn run_file_from_the_guide_is_accepted() {
    let guide = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/experiments.md")).unwrap();
    let start = guide.find("```toml\n").expect("guide has a run file") + 8;
    let end = start + guide[start..].find("```").unwrap();
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("guide.toml");
    fs::write(&p, &guide[start..end]).unwrap();
    let out = t.path().join("data");
    ok(&fpmcal(&[
        "simulate",
        "--config",
        p.to_str().unwrap(),
        "--patch",
        "64",
        "--extent",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]));
    let run = fs::read_to_string(out.join("run.toml")).unwrap();
    assert!(run.contains("siemens-star-phase"));
}
