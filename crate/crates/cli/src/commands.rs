use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fpm_selfcal::bfcal::{self, BfCalJson, BfCalResult, BfImage};
use fpm_selfcal::dataset::{load_stack, read_fpc, save_stack};
use fpm_selfcal::experiment::{run_sweep, sweep_csv, AngleErrors, CalibrationMode, SweepRow};
use fpm_selfcal::fpm::{self, measure_resolution, save_reconstruction, AngleInit, AngleRecord, SolverConfig};
use fpm_selfcal::optics::KVector;
use fpm_selfcal::simulate::{simulate as render, ImageStack, ObjectSpec};
use fpm_selfcal::Error;
use log::{info, warn};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{plot, CliError};

fn out_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("fpmcal-out").join(command));
    fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn load_dataset(cfg: &RunConfig) -> Result<ImageStack, CliError> {
    let dir = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::usage("no dataset given (--dataset or `dataset` in the config)"))?;
    load_stack(dir).map_err(|e| CliError::usage(format!("cannot load dataset {}: {e}", dir.display())))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    write(path, serde_json::to_string_pretty(v).expect("json values serialize"))
}

fn errors_json(e: &AngleErrors) -> Value {
    json!({ "mean_na": e.mean, "median_na": e.median, "max_na": e.max, "count": e.count })
}

fn na_of(angles: &[KVector], wavelength: f64) -> Vec<[f64; 2]> {
    angles.iter().map(|k| k.to_na(wavelength)).collect()
}

/// Runs brightfield calibration; a stack without brightfield images
/// continues from the nominal angles.
fn brightfield(stack: &ImageStack, cfg: &RunConfig) -> Result<Option<BfCalResult>, CliError> {
    match bfcal::calibrate(stack, &cfg.seeded_bfcal()) {
        Ok(r) => Ok(Some(r)),
        Err(Error::NoBrightfield) => {
            warn!("no brightfield images; brightfield calibration skipped");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let dir = out_dir(cfg, "simulate")?;
    let sim = render(&cfg.seeded_simulation())?;
    save_stack(&dir, &sim.stack)?;
    cfg.save(&dir.join("run.toml"))?;
    println!("wrote {} images ({} px) to {}", sim.stack.len(), sim.stack.params.patch_pixels, dir.display());
    Ok(())
}

pub fn calibrate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let stack = load_dataset(cfg)?;
    let dir = out_dir(cfg, "calibrate")?;
    let lambda = stack.params.wavelength;
    let expected = na_of(&stack.expected, lambda);

    let t = Instant::now();
    let bf = match cfg.mode {
        CalibrationMode::None => None,
        _ => brightfield(&stack, cfg)?,
    };
    let bf_seconds = t.elapsed().as_secs_f64();
    if let Some(b) = &bf {
        b.write_json(&dir.join("bfcal.json"))?;
    }

    let t = Instant::now();
    let solved = if cfg.mode == CalibrationMode::BfSc {
        let init = bf.as_ref().map_or(AngleInit::Nominal, AngleInit::BrightField);
        let solver = SolverConfig { sc: true, ..cfg.solver.clone() };
        let (state, result) = fpm::reconstruct(&stack, init, &solver)?;
        save_reconstruction(&dir, &state, &result)?;
        Some(result)
    } else {
        None
    };
    let sc_seconds = t.elapsed().as_secs_f64();

    let bf_na: Option<Vec<[f64; 2]>> = bf.as_ref().map(|b| b.images.iter().map(|im| im.calibrated_na).collect());
    let final_na =
        solved.as_ref().map(|r| r.angles_na.clone()).or_else(|| bf_na.clone()).unwrap_or_else(|| expected.clone());
    write_calibration_table(
        &dir.join("calibration.csv"),
        cfg,
        &stack,
        bf.as_ref().map(|b| b.images.as_slice()),
        &final_na,
    )?;

    let mut summary = json!({
        "mode": cfg.mode.to_string(),
        "images": stack.len(),
        "seconds": { "brightfield": bf_seconds, "solver": sc_seconds },
    });
    if let Some(b) = &bf {
        summary["brightfield_images"] = json!(b.brightfield_count());
        summary["radius_px"] = json!(b.radius);
        summary["radius_calibrated"] = json!(b.radius_calibrated);
    }
    if let Some(r) = &solved {
        summary["iterations"] = json!(r.iterations);
        summary["converged"] = json!(r.converged);
        summary["final_cost"] = json!(r.final_cost());
    }
    if let Some(truth) = &stack.truth {
        let e0 = AngleErrors::of(&expected, truth, lambda);
        let e1 = AngleErrors::of(&final_na, truth, lambda);
        summary["error_expected"] = errors_json(&e0);
        if let Some(b) = &bf_na {
            summary["error_bf"] = errors_json(&AngleErrors::of(b, truth, lambda));
        }
        summary["error_final"] = errors_json(&e1);
        println!("mode {}: mean angle error {:.5} NA -> {:.5} NA (max {:.5})", cfg.mode, e0.mean, e1.mean, e1.max);
    } else {
        println!("mode {}: calibrated {} images", cfg.mode, stack.len());
    }
    write_json(&dir.join("summary.json"), &summary)?;
    cfg.save(&dir.join("run.toml"))
}

fn write_calibration_table(
    path: &Path,
    cfg: &RunConfig,
    stack: &ImageStack,
    bf: Option<&[BfImage]>,
    final_na: &[[f64; 2]],
) -> Result<(), CliError> {
    let lambda = stack.params.wavelength;
    let f = cfg.units.factor(lambda);
    let u = cfg.units.label();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::usage(e.to_string()))?;
    let mut header: Vec<String> = vec!["index".into(), "brightfield".into(), "found".into(), "outlier".into()];
    for name in ["expected", "bf", "final"] {
        header.push(format!("{name}_x_{u}"));
        header.push(format!("{name}_y_{u}"));
    }
    if stack.truth.is_some() {
        header.extend([format!("true_x_{u}"), format!("true_y_{u}"), "error_na".into()]);
    }
    w.write_record(&header).map_err(|e| CliError::usage(e.to_string()))?;
    for i in 0..stack.len() {
        let e = stack.expected[i].to_na(lambda);
        let im = bf.map(|b| &b[i]);
        let b = im.map_or(e, |im| im.calibrated_na);
        let mut row = vec![
            i.to_string(),
            im.is_some_and(|im| im.brightfield).to_string(),
            im.is_some_and(|im| im.found).to_string(),
            im.is_some_and(|im| im.outlier).to_string(),
        ];
        for v in [e, b, final_na[i]] {
            row.push(format!("{:.6}", v[0] * f));
            row.push(format!("{:.6}", v[1] * f));
        }
        if let Some(truth) = &stack.truth {
            let t = truth[i].to_na(lambda);
            row.push(format!("{:.6}", t[0] * f));
            row.push(format!("{:.6}", t[1] * f));
            row.push(format!("{:.6}", (final_na[i][0] - t[0]).hypot(final_na[i][1] - t[1])));
        }
        w.write_record(&row).map_err(|e| CliError::usage(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn reconstruct(cfg: &RunConfig, bfcal_path: Option<&Path>) -> Result<(), CliError> {
    cfg.validate()?;
    let stack = load_dataset(cfg)?;
    let dir = out_dir(cfg, "reconstruct")?;
    let lambda = stack.params.wavelength;
    let mut solver = SolverConfig { sc: cfg.mode == CalibrationMode::BfSc, ..cfg.solver.clone() };

    let t = Instant::now();
    let mut computed = None;
    let init = match (cfg.mode, bfcal_path) {
        (CalibrationMode::None, _) => AngleInit::Nominal,
        (_, Some(p)) => {
            let saved = BfCalJson::read(p).map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?;
            if saved.images.len() != stack.len() {
                return Err(CliError::usage(format!(
                    "{} holds {} images, the dataset {}",
                    p.display(),
                    saved.images.len(),
                    stack.len()
                )));
            }
            solver.pupil_radius = solver.pupil_radius.or(Some(saved.radius_px));
            AngleInit::Angles(saved.angles(lambda))
        }
        (_, None) => {
            computed = brightfield(&stack, cfg)?;
            computed.as_ref().map_or(AngleInit::Nominal, AngleInit::BrightField)
        }
    };
    let bf_seconds = t.elapsed().as_secs_f64();
    if let Some(b) = &computed {
        b.write_json(&dir.join("bfcal.json"))?;
    }

    let t = Instant::now();
    let (state, result) = fpm::reconstruct(&stack, init, &solver)?;
    let solver_seconds = t.elapsed().as_secs_f64();
    save_reconstruction(&dir, &state, &result)?;
    if cfg.plots {
        plot::cost(&dir.join("cost.svg"), &result.costs)?;
    }

    let mut summary = json!({
        "mode": cfg.mode.to_string(),
        "iterations": result.iterations,
        "converged": result.converged,
        "final_cost": result.final_cost(),
        "radius_px": result.radius,
        "object_pixels": state.object.nrows(),
        "seconds": { "brightfield": bf_seconds, "solver": solver_seconds },
    });
    if let Some(truth) = &stack.truth {
        summary["error_initial"] = errors_json(&AngleErrors::of(&result.initial_na, truth, lambda));
        summary["error_final"] = errors_json(&AngleErrors::of(&result.angles_na, truth, lambda));
    }
    println!(
        "mode {}: {} iterations, final cost {:.4e}{}",
        cfg.mode,
        result.iterations,
        result.final_cost(),
        if result.converged { ", converged" } else { "" }
    );
    write_json(&dir.join("summary.json"), &summary)?;
    cfg.save(&dir.join("run.toml"))
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let dir = out_dir(cfg, "sweep")?;
    let ranges = &cfg.sweep.ranges;
    if ranges.iter().all(|r| r.points == 0) {
        return Err(CliError::usage("sweep has no points"));
    }
    let total: usize = ranges.iter().map(|r| r.points).sum();
    info!("sweeping {total} points");
    let rows = run_sweep(&cfg.sweep_config(), ranges)?;
    write(&dir.join("sweep.csv"), sweep_csv(&rows, false))?;
    let mut timing = String::from("perturbation,value,seconds\n");
    for r in &rows {
        timing.push_str(&format!("{},{},{:.2}\n", r.perturbation.name(), r.value, r.seconds));
    }
    write(&dir.join("timing.csv"), timing)?;
    if cfg.plots {
        for range in ranges {
            let pts: Vec<&SweepRow> = rows.iter().filter(|r| r.perturbation == range.axis).collect();
            plot::sweep(&dir.join(format!("sweep_{}.svg", range.axis.name())), range.axis, &pts)?;
        }
    }
    cfg.save(&dir.join("run.toml"))?;
    let failed = rows.iter().filter(|r| r.failed).count();
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| !r.failed).collect();
    let worst = ok.iter().map(|r| r.error_bf_sc).fold(f64::NAN, f64::max);
    let mean = ok.iter().map(|r| r.error_bf_sc).sum::<f64>() / ok.len().max(1) as f64;
    println!("{} points, {failed} failed; bf+sc mean error {mean:.5} NA, worst point {worst:.5} NA", rows.len());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, recon: &Path) -> Result<(), CliError> {
    let stack = load_dataset(cfg)?;
    let dir = out_dir(cfg, "evaluate")?;
    let lambda = stack.params.wavelength;
    let truth =
        stack.truth.as_ref().ok_or_else(|| CliError::usage("dataset has no true angles to evaluate against"))?;
    let path = recon.join("angles.json");
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let records: Vec<AngleRecord> =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if records.len() != stack.len() {
        return Err(CliError::usage(format!("{} angles for {} images", records.len(), stack.len())));
    }
    let initial: Vec<[f64; 2]> = records.iter().map(|r| r.initial_na).collect();
    let fin: Vec<[f64; 2]> = records.iter().map(|r| r.final_na).collect();
    let e0 = AngleErrors::of(&initial, truth, lambda);
    let e1 = AngleErrors::of(&fin, truth, lambda);
    let mut summary = json!({ "error_initial": errors_json(&e0), "error_final": errors_json(&e1) });

    let mut table = String::from("index,error_initial_na,error_final_na,sc_moves\n");
    for (i, r) in records.iter().enumerate() {
        let t = truth[i].to_na(lambda);
        let d = |a: [f64; 2]| (a[0] - t[0]).hypot(a[1] - t[1]);
        table.push_str(&format!("{i},{:.6},{:.6},{}\n", d(r.initial_na), d(r.final_na), r.sc_moves));
    }
    write(&dir.join("evaluation.csv"), table)?;

    if let ObjectSpec::BarTargetAmplitude { target } = &cfg.simulation.object {
        let amp = read_fpc(&recon.join("object_amplitude.fpc"))?;
        let report = measure_resolution(&amp, target)?;
        summary["finest_resolved_px"] = json!(report.finest_px);
        summary["resolution"] = serde_json::to_value(&report).expect("report serializes");
        match report.finest_px {
            Some(p) => println!("finest resolved bar period {p:.2} px"),
            None => println!("no bar group resolved"),
        }
    }
    println!("mean angle error {:.5} NA -> {:.5} NA (max {:.5})", e0.mean, e1.mean, e1.max);
    write_json(&dir.join("evaluation.json"), &summary)?;
    cfg.save(&dir.join("run.toml"))
}
