use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CalibrationResult, ReconstructionState};
use crate::dataset::write_fpc;
use crate::error::Result;

/// One entry of `angles.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub index: usize,
    pub initial_na: [f64; 2],
    pub final_na: [f64; 2],
    pub sc_moves: usize,
}

/// Writes object and pupil amplitude/phase as FPC files, `angles.json` and `cost.csv`.
pub fn save_reconstruction(dir: &Path, state: &ReconstructionState, result: &CalibrationResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let object = state.object_field();
    write_fpc(&dir.join("object_amplitude.fpc"), &object.mapv(|z| z.norm()))?;
    write_fpc(&dir.join("object_phase.fpc"), &object.mapv(|z| z.arg()))?;
    write_fpc(&dir.join("pupil_amplitude.fpc"), &state.pupil.mapv(|z| z.norm()))?;
    write_fpc(&dir.join("pupil_phase.fpc"), &state.pupil.mapv(|z| z.arg()))?;
    let angles: Vec<AngleRecord> = (0..result.angles_na.len())
        .map(|i| AngleRecord {
            index: i,
            initial_na: result.initial_na[i],
            final_na: result.angles_na[i],
            sc_moves: result.sc_moves[i],
        })
        .collect();
    fs::write(dir.join("angles.json"), serde_json::to_string_pretty(&angles)?)?;
    let mut csv = String::from("iteration,cost,mean_moved_na\n");
    for (i, (c, m)) in state.costs.iter().zip(&state.moved_na).enumerate() {
        let _ = writeln!(csv, "{},{c:.9e},{m:.6e}", i + 1);
    }
    fs::write(dir.join("cost.csv"), csv)?;
    Ok(())
}
