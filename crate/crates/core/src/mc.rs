//! Monte Carlo driver: simulate, estimate and aggregate over replications.
//!
//! Replications run on a bounded rayon pool; each draws from its own stream
//! of the run seed and results are aggregated in replication order, so the
//! output does not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, ScaleError};
use crate::estimators::{estimate, gamma_asymptotic_variance, EstimationOptions, EstimationReport};
use crate::laguerre::LaguerreParams;
use crate::levy_model::{LevyModel, ThetaParams};
use crate::scale_series::{coeffs_true, p_value, ScaleApprox};
use crate::simulate::{simulate_replication, SamplingScheme};

/// Inputs of a Monte Carlo study.
#[derive(Debug, Clone)]
pub struct McSetup {
    pub model: LevyModel,
    pub scheme: SamplingScheme,
    pub params: LaguerreParams,
    pub seed: u64,
    pub replications: usize,
    pub workers: usize,
    pub xs: Vec<f64>,
    pub options: EstimationOptions,
}

/// One row of the per-replication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub replication: u64,
    pub total_jumps: usize,
    pub recorded_jumps: usize,
    #[serde(rename = "D_hat")]
    pub d_hat: f64,
    pub gamma_hat: f64,
    pub p_hat: f64,
    pub v0_sq_hat: f64,
    pub w_hat: Vec<f64>,
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    pub flags: Vec<String>,
}

impl McRecord {
    fn from_report(rep: &EstimationReport, total_jumps: usize, recorded_jumps: usize) -> Self {
        let col = |f: fn(&crate::estimators::CurveEstimate) -> f64| rep.curve.iter().map(f).collect::<Vec<_>>();
        McRecord {
            replication: rep.replication,
            total_jumps,
            recorded_jumps,
            d_hat: rep.d_hat,
            gamma_hat: rep.gamma_hat,
            p_hat: rep.p_hat,
            v0_sq_hat: rep.v0_sq_hat,
            w_hat: col(|c| c.w_hat),
            w_lo: col(|c| c.w_lo),
            w_hi: col(|c| c.w_hi),
            z_hat: col(|c| c.z_hat),
            z_lo: col(|c| c.z_lo),
            z_hi: col(|c| c.z_hi),
            flags: rep.flags.clone(),
        }
    }
}

/// Replications completed before the first failure, and that failure.
#[derive(Debug)]
pub struct McRun {
    pub records: Vec<McRecord>,
    pub failure: Option<(u64, ScaleError)>,
}

/// Estimates one replication exactly as a standalone estimation would.
pub fn run_replication(setup: &McSetup, rep: u64) -> Result<(McRecord, EstimationReport)> {
    // the estimators only read the grid on [0, d_window]
    let horizon = setup.options.d_window.min(setup.scheme.horizon);
    let obs = simulate_replication(&setup.model, &setup.scheme, setup.seed, rep, Some(horizon))?;
    let total = obs.truth.as_ref().map_or(obs.jumps.len(), |t| t.total_jumps);
    let report = estimate(&obs, setup.model.c, setup.model.q, &setup.params, &setup.xs, &setup.options)?;
    Ok((McRecord::from_report(&report, total, obs.jumps.len()), report))
}

/// Runs all replications on `setup.workers` threads.
pub fn run_mc(setup: &McSetup) -> Result<McRun> {
    if setup.replications == 0 {
        return Err(ScaleError::Config("mc.replications must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(setup.workers.max(1))
        .build()
        .map_err(|e| ScaleError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<McRecord>> = pool.install(|| {
        (0..setup.replications as u64).into_par_iter().map(|r| run_replication(setup, r).map(|(rec, _)| rec)).collect()
    });
    let mut records = Vec::with_capacity(results.len());
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => return Ok(McRun { records, failure: Some((r as u64, e)) }),
        }
    }
    Ok(McRun { records, failure: None })
}

/// Population values the study is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTruth {
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma: f64,
    pub p: f64,
    pub v0_sq: f64,
    /// `W_K` and `Z_K` at the true coefficients.
    pub w_k: Vec<f64>,
    pub z_k: Vec<f64>,
    pub expected_jumps: Option<f64>,
}

pub fn mc_truth(setup: &McSetup) -> Result<McTruth> {
    let theta = ThetaParams::of_model(&setup.model)?;
    let approx = ScaleApprox::new(&setup.model, coeffs_true(&setup.model, &setup.params)?);
    let curve = approx.curve(&setup.xs)?;
    let v0_sq = if setup.model.q > 0.0 { gamma_asymptotic_variance(&setup.model)? } else { 0.0 };
    Ok(McTruth {
        d: setup.model.d,
        gamma: theta.gamma,
        p: p_value(&setup.model, &theta)?,
        v0_sq,
        w_k: curve.iter().map(|c| c.w).collect(),
        z_k: curve.iter().map(|c| c.z).collect(),
        expected_jumps: setup.model.jumps.total_rate().map(|r| r * setup.scheme.horizon),
    })
}

/// Mean, spread and error of one scalar estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub sd: f64,
    pub rmse: f64,
}

impl ScalarSummary {
    pub fn new(values: &[f64], truth: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let rmse = (values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / n).sqrt();
        ScalarSummary { truth, mean, bias: mean - truth, se: (var / n).sqrt(), sd: var.sqrt(), rmse }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub x: f64,
    pub w_true: f64,
    pub z_true: f64,
    pub w_coverage: f64,
    pub z_coverage: f64,
    /// Binomial standard error of the coverage estimates.
    pub w_coverage_se: f64,
    pub z_coverage_se: f64,
    pub w_hat: ScalarSummary,
    /// Replications whose intervals were suppressed.
    pub suppressed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityScreen {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replications: usize,
    pub horizon: f64,
    pub confidence: f64,
    pub truth: McTruth,
    #[serde(rename = "D_hat")]
    pub d_hat: ScalarSummary,
    pub gamma_hat: ScalarSummary,
    pub p_hat: ScalarSummary,
    pub total_jumps: ScalarSummary,
    /// Sample variance of `√T(γ̂ − γ₀)`.
    pub gamma_scaled_variance: f64,
    pub coverage: Vec<CoverageRow>,
    /// Anderson–Darling screen of `√T(γ̂ − γ₀)/v̂₀` against N(0, 1).
    pub gamma_normality: Option<NormalityScreen>,
}

pub fn summarize(setup: &McSetup, truth: &McTruth, records: &[McRecord]) -> Result<McSummary> {
    if records.is_empty() {
        return Err(ScaleError::Config("no replications to summarise".into()));
    }
    let t = setup.scheme.horizon;
    let col = |f: &dyn Fn(&McRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let gamma = col(&|r| r.gamma_hat);
    let scaled: Vec<f64> = gamma.iter().map(|g| t.sqrt() * (g - truth.gamma)).collect();
    let gamma_scaled_variance = ScalarSummary::new(&scaled, 0.0).sd.powi(2);
    let coverage = setup
        .xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let usable: Vec<&McRecord> = records.iter().filter(|r| r.w_lo[i].is_finite()).collect();
            let m = usable.len() as f64;
            let frac = |hit: &dyn Fn(&McRecord) -> bool| {
                if usable.is_empty() {
                    f64::NAN
                } else {
                    usable.iter().filter(|r| hit(r)).count() as f64 / m
                }
            };
            let wc = frac(&|r| r.w_lo[i] <= truth.w_k[i] && truth.w_k[i] <= r.w_hi[i]);
            let zc = frac(&|r| r.z_lo[i] <= truth.z_k[i] && truth.z_k[i] <= r.z_hi[i]);
            CoverageRow {
                x,
                w_true: truth.w_k[i],
                z_true: truth.z_k[i],
                w_coverage: wc,
                z_coverage: zc,
                w_coverage_se: (wc * (1.0 - wc) / m).sqrt(),
                z_coverage_se: (zc * (1.0 - zc) / m).sqrt(),
                w_hat: ScalarSummary::new(&col(&|r| r.w_hat[i]), truth.w_k[i]),
                suppressed: records.len() - usable.len(),
            }
        })
        .collect();
    let standardized: Vec<f64> = records
        .iter()
        .zip(&scaled)
        .filter(|(r, _)| r.v0_sq_hat > 0.0)
        .map(|(r, s)| s / r.v0_sq_hat.sqrt())
        .collect();
    let gamma_normality = if setup.model.q > 0.0 && standardized.len() >= 8 {
        let statistic = anderson_darling_normal(&standardized);
        Some(NormalityScreen { n: standardized.len(), statistic, p_value: anderson_darling_pvalue(standardized.len(), statistic) })
    } else {
        None
    };
    Ok(McSummary {
        replications: records.len(),
        horizon: t,
        confidence: setup.options.confidence,
        truth: truth.clone(),
        d_hat: ScalarSummary::new(&col(&|r| r.d_hat), truth.d),
        gamma_hat: ScalarSummary::new(&gamma, truth.gamma),
        p_hat: ScalarSummary::new(&col(&|r| r.p_hat), truth.p),
        total_jumps: ScalarSummary::new(&col(&|r| r.total_jumps as f64), truth.expected_jumps.unwrap_or(0.0)),
        gamma_scaled_variance,
        coverage,
        gamma_normality,
    })
}

/// Anderson–Darling statistic of `sample` against the standard normal.
pub fn anderson_darling_normal(sample: &[f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut u: Vec<f64> = sample.iter().map(|&z| normal.cdf(z).clamp(1e-300, 1.0 - 1e-16)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let s: f64 = (0..n).map(|i| (2 * i + 1) as f64 * (u[i].ln() + (1.0 - u[n - 1 - i]).ln())).sum();
    -(n as f64) - s / n as f64
}

/// Limiting distribution function of the Anderson–Darling statistic
/// (Marsaglia and Marsaglia, 2004).
pub fn anderson_darling_cdf_inf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// Upper-tail probability of the statistic for sample size `n`, with the
/// finite-sample correction of the same reference.
pub fn anderson_darling_pvalue(n: usize, statistic: f64) -> f64 {
    let x = anderson_darling_cdf_inf(statistic);
    let nf = n as f64;
    let fix = if x > 0.8 {
        (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / nf
    } else {
        let c = 0.01265 + 0.1757 / nf;
        if x < c {
            let t = x / c;
            let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
            t * (0.0037 / (nf * nf) + 0.00078 / nf + 0.00006) / nf
        } else {
            let t = (x - c) / (0.8 - c);
            let t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
            t * (0.04213 + 0.01365 / nf) / nf
        }
    };
    (1.0 - (x + fix)).clamp(0.0, 1.0)
}
