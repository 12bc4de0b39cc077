//! The four subcommands.

use std::path::{Path, PathBuf};

use levy_scale::estimators::{estimate, oracle_report};
use levy_scale::mc::{mc_truth, run_mc, summarize, McRecord};
use levy_scale::oracle::{closed_form_w, laplace_invert_scale, laplace_invert_z, ClosedFormKind};
use levy_scale::simulate::simulate;
use levy_scale::{EstimationReport, McSetup, Result, ScaleApprox, ScaleError};
use serde::Serialize;

use crate::config::{Format, LoadedConfig};
use crate::data::{read_observations, write_observations};
use crate::output::{Manifest, OutputDir, Seeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Compute,
    Simulate,
    Estimate,
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Compute => "compute",
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub oracle: bool,
    /// Overrides `output.directory`.
    pub out: Option<PathBuf>,
    /// Overrides `data.directory` for `estimate`.
    pub data: Option<PathBuf>,
}

/// Runs one command and returns the files written, manifest last.
pub fn run(cmd: Command, loaded: &LoadedConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let cfg = &loaded.config;
    let root = opts.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let mut out = OutputDir::create(&root)?;
    let seeds = match cmd {
        Command::Compute => Seeds { scheme_seed: None, replications: None },
        Command::Simulate | Command::Estimate => Seeds { scheme_seed: Some(cfg.scheme()?.1), replications: None },
        Command::Mc => Seeds { scheme_seed: Some(cfg.scheme()?.1), replications: Some(cfg.mc.replications) },
    };
    let result = match cmd {
        Command::Compute => compute(loaded, opts, &mut out),
        Command::Simulate => simulate_cmd(loaded, &mut out),
        Command::Estimate => estimate_cmd(loaded, opts, &root, &mut out),
        Command::Mc => mc_cmd(loaded, &mut out),
    };
    // the manifest is written even when the command fails part-way
    out.write_manifest(&Manifest::new(cmd.name(), opts.oracle, loaded, seeds))?;
    result?;
    Ok(out.files().iter().map(|f| root.join(&f.name)).collect())
}

fn strings(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Writes a table as CSV and/or as a JSON array of records.
fn write_table<T: Serialize>(
    loaded: &LoadedConfig,
    out: &mut OutputDir,
    stem: &str,
    header: &[String],
    rows: &[Vec<f64>],
    records: &[T],
) -> Result<()> {
    if loaded.config.output.wants(Format::Csv) {
        out.write_csv(&format!("{stem}.csv"), header, rows)?;
    }
    if loaded.config.output.wants(Format::Json) {
        out.write_json(&format!("{stem}.json"), &records)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    source: &'static str,
    #[serde(rename = "K")]
    k: usize,
    sup_abs_err_w: f64,
    sup_oracle_w: f64,
    rel_sup_err_w: f64,
    sup_abs_err_z: f64,
    max_talbot_err_estimate: f64,
    flagged_points: usize,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    x: f64,
    #[serde(rename = "W_K")]
    w: f64,
    #[serde(rename = "Z_K")]
    z: f64,
    #[serde(rename = "W_oracle", skip_serializing_if = "Option::is_none")]
    w_oracle: Option<f64>,
    #[serde(rename = "Z_oracle", skip_serializing_if = "Option::is_none")]
    z_oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    err_estimate: Option<f64>,
}

fn compute(loaded: &LoadedConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<()> {
    let cfg = &loaded.config;
    let model = &cfg.model;
    let approx = ScaleApprox::for_model(model, &cfg.laguerre)?;
    out.write_json("coeffs.json", &approx.coeffs)?;
    let xs = cfg.x_grid.values();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let p = approx.point(x)?;
        rows.push(CurveRow { x, w: p.w, z: p.z, w_oracle: None, z_oracle: None, err_estimate: None });
    }
    let mut header = strings(&["x", "W_K", "Z_K"]);
    if opts.oracle {
        let kind = ClosedFormKind::of_model(model);
        let mut summary = OracleSummary {
            source: if kind.is_some() { "closed-form" } else { "talbot" },
            k: cfg.laguerre.k,
            sup_abs_err_w: 0.0,
            sup_oracle_w: 0.0,
            rel_sup_err_w: 0.0,
            sup_abs_err_z: 0.0,
            max_talbot_err_estimate: 0.0,
            flagged_points: 0,
        };
        for row in rows.iter_mut() {
            let (w, z, err) = match kind {
                Some(k) => {
                    let cf = closed_form_w(k, model, model.q, row.x)?;
                    (cf.w, cf.z, 0.0)
                }
                None if row.x > 0.0 => {
                    let w = laplace_invert_scale(model, model.q, row.x)?;
                    let z = laplace_invert_z(model, model.q, row.x)?;
                    summary.flagged_points += usize::from(w.flagged || z.flagged);
                    (w.value, z.value, w.err_estimate)
                }
                // W(0) = 1/c without diffusion, 0 with
                None => (if model.d > 0.0 { 0.0 } else { 1.0 / model.c }, 1.0, 0.0),
            };
            summary.sup_abs_err_w = summary.sup_abs_err_w.max((row.w - w).abs());
            summary.sup_oracle_w = summary.sup_oracle_w.max(w.abs());
            summary.sup_abs_err_z = summary.sup_abs_err_z.max((row.z - z).abs());
            summary.max_talbot_err_estimate = summary.max_talbot_err_estimate.max(err);
            row.w_oracle = Some(w);
            row.z_oracle = Some(z);
            row.err_estimate = Some(err);
        }
        summary.rel_sup_err_w = summary.sup_abs_err_w / summary.sup_oracle_w.max(f64::MIN_POSITIVE);
        header.extend(strings(&["W_oracle", "Z_oracle", "err_estimate"]));
        out.write_json("oracle_summary.json", &summary)?;
    }
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.x, r.w, r.z];
            if opts.oracle {
                v.extend([r.w_oracle.unwrap_or(f64::NAN), r.z_oracle.unwrap_or(f64::NAN), r.err_estimate.unwrap_or(f64::NAN)]);
            }
            v
        })
        .collect();
    write_table(loaded, out, "w_curve", &header, &table, &rows)
}

fn simulate_cmd(loaded: &LoadedConfig, out: &mut OutputDir) -> Result<()> {
    let cfg = &loaded.config;
    let (scheme, seed) = cfg.scheme()?;
    let obs = simulate(&cfg.model, &scheme, seed)?;
    write_observations(out, &obs, &cfg.model)
}

fn ci_table(report: &EstimationReport) -> (Vec<String>, Vec<Vec<f64>>) {
    let header = strings(&["x", "W_hat", "Z_hat", "W_lo", "W_hi", "Z_lo", "Z_hi", "sigma_K", "sigma_star_K"]);
    let rows = report
        .curve
        .iter()
        .map(|c| vec![c.x, c.w_hat, c.z_hat, c.w_lo, c.w_hi, c.z_lo, c.z_hi, c.sigma_k, c.sigma_star_k])
        .collect();
    (header, rows)
}

fn estimate_cmd(loaded: &LoadedConfig, opts: &RunOptions, root: &Path, out: &mut OutputDir) -> Result<()> {
    let cfg = &loaded.config;
    let xs = cfg.x_grid.values();
    let report = if opts.oracle {
        let (scheme, _) = cfg.scheme()?;
        oracle_report(&cfg.model, &scheme, &cfg.laguerre, &xs, &cfg.estimation)?
    } else {
        let dir = opts
            .data
            .clone()
            .or_else(|| cfg.data.as_ref().map(|d| d.directory.clone()))
            .unwrap_or_else(|| root.to_path_buf());
        let (obs, _) = read_observations(&dir)?;
        estimate(&obs, cfg.model.c, cfg.model.q, &cfg.laguerre, &xs, &cfg.estimation)?
    };
    out.write_json("estimation_report.json", &report)?;
    let (header, rows) = ci_table(&report);
    write_table(loaded, out, "ci_curve", &header, &rows, &report.curve)
}

fn mc_cmd(loaded: &LoadedConfig, out: &mut OutputDir) -> Result<()> {
    let cfg = &loaded.config;
    let (scheme, seed) = cfg.scheme()?;
    let setup = McSetup {
        model: cfg.model.clone(),
        scheme,
        params: cfg.laguerre,
        seed,
        replications: cfg.mc.replications,
        workers: cfg.workers()?,
        xs: cfg.x_grid.values(),
        options: cfg.estimation,
    };
    let truth = mc_truth(&setup)?;
    let run = run_mc(&setup)?;
    write_replications(loaded, out, &setup.xs, &run.records)?;
    if let Some((replication, e)) = run.failure {
        return Err(ScaleError::WorkerFailure { replication, message: e.to_string() });
    }
    let summary = summarize(&setup, &truth, &run.records)?;
    out.write_json("mc_summary.json", &summary)?;
    Ok(())
}

fn write_replications(loaded: &LoadedConfig, out: &mut OutputDir, xs: &[f64], records: &[McRecord]) -> Result<()> {
    let mut header = strings(&["replication", "total_jumps", "recorded_jumps", "D_hat", "gamma_hat", "p_hat", "v0_sq_hat"]);
    for (i, x) in xs.iter().enumerate() {
        for col in ["W_hat", "W_lo", "W_hi", "Z_hat", "Z_lo", "Z_hi"] {
            header.push(format!("{col}[{i}]@{x:?}"));
        }
    }
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut v = vec![
                r.replication as f64,
                r.total_jumps as f64,
                r.recorded_jumps as f64,
                r.d_hat,
                r.gamma_hat,
                r.p_hat,
                r.v0_sq_hat,
            ];
            for i in 0..xs.len() {
                v.extend([r.w_hat[i], r.w_lo[i], r.w_hi[i], r.z_hat[i], r.z_lo[i], r.z_hi[i]]);
            }
            v
        })
        .collect();
    write_table(loaded, out, "mc_replications", &header, &rows, records)
}
