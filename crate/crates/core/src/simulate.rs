//! Discretely observed paths of `X_t = x + ct + σW_t − L_t` together with the
//! jumps of `L` larger than the threshold `εₙ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScaleError};
use crate::levy_model::{exp_integral_e1, JumpMeasure, LevyModel};

/// Observation grid and jump threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub n: usize,
    pub delta: f64,
    /// `Tₙ = nΔₙ`.
    pub horizon: f64,
    pub eps: f64,
    pub a: f64,
    pub rho: f64,
    pub c_eps: f64,
}

/// `n = ⌈T^{1+a}⌉`, `Δₙ = T/n`, `εₙ = c_ε Δₙ^ρ`.
pub fn make_scheme(t: f64, a: f64, rho: f64, c_eps: f64) -> Result<SamplingScheme> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(ScaleError::InvalidScheme(format!("T must be >= 1, got {t}")));
    }
    if !(a > 0.0 && a <= 1.0) {
        return Err(ScaleError::InvalidScheme(format!("a must lie in (0, 1], got {a}")));
    }
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(ScaleError::InvalidScheme(format!("rho must lie in (0, 1/2], got {rho}")));
    }
    if !(c_eps > 0.0 && c_eps.is_finite()) {
        return Err(ScaleError::InvalidScheme(format!("c_eps must be positive, got {c_eps}")));
    }
    let raw = t.powf(1.0 + a);
    let n = if (raw - raw.round()).abs() < 1e-9 * raw { raw.round() } else { raw.ceil() };
    if n > 1e9 {
        return Err(ScaleError::InvalidScheme(format!("{n} grid points is too many")));
    }
    let n = n as usize;
    let delta = t / n as f64;
    Ok(SamplingScheme { n, delta, horizon: t, eps: c_eps * delta.powf(rho), a, rho, c_eps })
}

impl SamplingScheme {
    /// `√Tₙ ∫_0^{εₙ} (z + z²) ν(dz)`, which should vanish along the family.
    pub fn s2_quantity(&self, jumps: &JumpMeasure) -> f64 {
        self.horizon.sqrt() * (jumps.small_jump_moment(self.eps, 1) + jumps.small_jump_moment(self.eps, 2))
    }

    /// `nΔₙ²`.
    pub fn s1_quantity(&self) -> f64 {
        self.n as f64 * self.delta * self.delta
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }
}

/// A jump of `L` at time `t` with size `size > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub size: f64,
}

/// Simulation-side quantities not visible to the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    /// Standard Brownian motion at the last grid time.
    pub brownian_end: f64,
    /// All simulated jumps, recorded or not.
    pub total_jumps: usize,
    pub jump_sum: f64,
}

/// Grid values, recorded jumps and the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub replication: u64,
    pub x0: f64,
    /// `X_{iΔ}` for `i = 0..=m`, where `m = n` unless the grid was truncated.
    pub grid: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<SimulationTruth>,
}

impl ObservationSet {
    /// Time covered by the grid.
    pub fn grid_horizon(&self) -> f64 {
        (self.grid.len().saturating_sub(1)) as f64 * self.scheme.delta
    }
}

/// Random stream for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Simulates replication 0.
pub fn simulate(model: &LevyModel, scheme: &SamplingScheme, seed: u64) -> Result<ObservationSet> {
    simulate_replication(model, scheme, seed, 0, None)
}

/// Simulates one replication. With `grid_horizon = Some(h)` only the grid
/// points up to time `h` are generated; since the Gaussian increments are
/// drawn last and in time order, the result is a prefix of the full grid.
pub fn simulate_replication(
    model: &LevyModel,
    scheme: &SamplingScheme,
    seed: u64,
    rep: u64,
    grid_horizon: Option<f64>,
) -> Result<ObservationSet> {
    if scheme.n == 0 || !(scheme.delta > 0.0) || !(scheme.eps > 0.0) {
        return Err(ScaleError::InvalidScheme("scheme needs n >= 1, Δ > 0 and ε > 0".into()));
    }
    let mut rng = replication_rng(seed, rep);
    let horizon = scheme.n as f64 * scheme.delta;
    let (jumps, small_drift) = draw_jumps(&model.jumps, horizon, scheme.eps / 10.0, &mut rng)?;

    let m = match grid_horizon {
        Some(h) => ((h / scheme.delta + 1e-9).floor() as usize).min(scheme.n),
        None => scheme.n,
    };
    let sigma = model.sigma();
    let sd = scheme.delta.sqrt();
    let drift = model.c - small_drift;
    let mut grid = Vec::with_capacity(m + 1);
    grid.push(model.x0);
    let mut w = 0.0;
    let mut l = 0.0;
    let mut next_jump = 0;
    for i in 1..=m {
        let t = scheme.time(i);
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += sd * z;
        }
        while next_jump < jumps.len() && jumps[next_jump].t <= t {
            l += jumps[next_jump].size;
            next_jump += 1;
        }
        grid.push(model.x0 + drift * t + sigma * w - l);
    }
    let truth = SimulationTruth { brownian_end: w, total_jumps: jumps.len(), jump_sum: jumps.iter().map(|j| j.size).sum() };
    let recorded = jumps.into_iter().filter(|j| j.size > scheme.eps).collect();
    Ok(ObservationSet { scheme: *scheme, seed, replication: rep, x0: model.x0, grid, jumps: recorded, truth: Some(truth) })
}

/// Jumps on `(0, horizon]` in time order, plus the drift that replaces jumps
/// below `delta_sim` for infinite-activity measures.
fn draw_jumps(jumps: &JumpMeasure, horizon: f64, delta_sim: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<JumpRecord>, f64)> {
    let rate = match *jumps {
        JumpMeasure::None => return Ok((Vec::new(), 0.0)),
        JumpMeasure::CompoundPoissonExponential { rate, .. } | JumpMeasure::CompoundPoissonGamma { rate, .. } => rate,
        JumpMeasure::GammaSubordinator { shape, rate } => shape * exp_integral_e1(rate * delta_sim),
    };
    let count = poisson(rate * horizon, rng)?;
    let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_by(f64::total_cmp);
    let sizes: Vec<f64> = match *jumps {
        JumpMeasure::None => unreachable!(),
        JumpMeasure::CompoundPoissonExponential { mean, .. } => {
            let d = Exp::new(1.0 / mean).map_err(|e| ScaleError::Config(e.to_string()))?;
            (0..count).map(|_| d.sample(rng)).collect()
        }
        JumpMeasure::CompoundPoissonGamma { shape, scale, .. } => {
            let d = Gamma::new(shape, scale).map_err(|e| ScaleError::Config(e.to_string()))?;
            (0..count).map(|_| d.sample(rng)).collect()
        }
        JumpMeasure::GammaSubordinator { rate, .. } => {
            // density ∝ e^{−bz}/z on (δ, ∞): propose δ + Exp(b), accept w.p. δ/z
            let d = Exp::new(rate).map_err(|e| ScaleError::Config(e.to_string()))?;
            (0..count)
                .map(|_| loop {
                    let z = delta_sim + d.sample(rng);
                    if rng.random::<f64>() * z < delta_sim {
                        break z;
                    }
                })
                .collect()
        }
    };
    let small_drift = match *jumps {
        JumpMeasure::GammaSubordinator { shape, rate } => shape * (-(-rate * delta_sim).exp_m1()) / rate,
        _ => 0.0,
    };
    Ok((times.into_iter().zip(sizes).map(|(t, size)| JumpRecord { t, size }).collect(), small_drift))
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| ScaleError::Config(format!("poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as usize)
}
