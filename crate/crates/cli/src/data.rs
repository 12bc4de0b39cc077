//! Observation files: `grid.csv` (i, t, X), `jumps.csv` (t, size) and the
//! `obs.json` sidecar carrying the scheme and seed.

use std::path::Path;

use levy_scale::simulate::{JumpRecord, SimulationTruth};
use levy_scale::{LevyModel, ObservationSet, Result, SamplingScheme, ScaleError};
use serde::{Deserialize, Serialize};

use crate::output::OutputDir;

pub const GRID_FILE: &str = "grid.csv";
pub const JUMPS_FILE: &str = "jumps.csv";
pub const SIDECAR_FILE: &str = "obs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub replication: u64,
    pub x0: f64,
    pub model: LevyModel,
    pub grid_points: usize,
    pub recorded_jumps: usize,
    pub truth: Option<SimulationTruth>,
}

pub fn write_observations(out: &mut OutputDir, obs: &ObservationSet, model: &LevyModel) -> Result<()> {
    let header = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    let grid: Vec<Vec<f64>> =
        obs.grid.iter().enumerate().map(|(i, &x)| vec![i as f64, obs.scheme.time(i), x]).collect();
    out.write_csv(GRID_FILE, &header(&["i", "t", "X"]), &grid)?;
    let jumps: Vec<Vec<f64>> = obs.jumps.iter().map(|j| vec![j.t, j.size]).collect();
    out.write_csv(JUMPS_FILE, &header(&["t", "size"]), &jumps)?;
    let sidecar = Sidecar {
        scheme: obs.scheme,
        seed: obs.seed,
        replication: obs.replication,
        x0: obs.x0,
        model: model.clone(),
        grid_points: obs.grid.len(),
        recorded_jumps: obs.jumps.len(),
        truth: obs.truth.clone(),
    };
    out.write_json(SIDECAR_FILE, &sidecar)?;
    Ok(())
}

fn bad_data(path: &Path, msg: impl std::fmt::Display) -> ScaleError {
    ScaleError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {msg}", path.display())))
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(bad_data(path, format!("expected {width} columns, found {}", rec.len())));
        }
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad_data(path, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads the three observation files from `dir` and checks them against
/// each other.
pub fn read_observations(dir: &Path) -> Result<(ObservationSet, Sidecar)> {
    let side_path = dir.join(SIDECAR_FILE);
    let side: Sidecar =
        serde_json::from_slice(&std::fs::read(&side_path).map_err(|e| bad_data(&side_path, e))?)
            .map_err(|e| bad_data(&side_path, e))?;
    let grid_path = dir.join(GRID_FILE);
    let grid_rows = read_rows(&grid_path, 3)?;
    if grid_rows.len() != side.grid_points {
        return Err(bad_data(&grid_path, format!("{} rows, sidecar says {}", grid_rows.len(), side.grid_points)));
    }
    if grid_rows.iter().enumerate().any(|(i, r)| r[0] != i as f64) {
        return Err(bad_data(&grid_path, "index column is not 0, 1, 2, ..."));
    }
    let jumps_path = dir.join(JUMPS_FILE);
    let jumps: Vec<JumpRecord> =
        read_rows(&jumps_path, 2)?.into_iter().map(|r| JumpRecord { t: r[0], size: r[1] }).collect();
    if let Some(j) = jumps.iter().find(|j| !(j.size > side.scheme.eps)) {
        return Err(bad_data(&jumps_path, format!("jump of size {} not above threshold {}", j.size, side.scheme.eps)));
    }
    let obs = ObservationSet {
        scheme: side.scheme,
        seed: side.seed,
        replication: side.replication,
        x0: side.x0,
        grid: grid_rows.into_iter().map(|r| r[2]).collect(),
        jumps,
        truth: side.truth.clone(),
    };
    Ok((obs, side))
}
