//! Fixtures shared by the benchmarks under `benches/`.

use levy_scale::estimators::EstimationOptions;
use levy_scale::simulate::{make_scheme, simulate};
use levy_scale::{LaguerreParams, LevyModel, ObservationSet};

/// Exponential jumps at rate 1 with mean 1, `c = 1.5`, `D = 0.5`.
pub fn exp_model(q: f64) -> LevyModel {
    LevyModel::exponential(1.5, 0.5, 1.0, 1.0, q).expect("valid model")
}

/// Gamma-distributed jumps, which take the quadrature coefficient path.
pub fn gamma_model(q: f64) -> LevyModel {
    let jumps = levy_scale::JumpMeasure::CompoundPoissonGamma { rate: 1.0, shape: 2.0, scale: 0.5 };
    LevyModel::new(0.0, 1.5, 0.5, jumps, q).expect("valid model")
}

pub fn params(k: usize) -> LaguerreParams {
    LaguerreParams::new(1.0, k).expect("valid params")
}

/// One observation set on the `n = T²` scheme.
pub fn observations(t: f64, seed: u64) -> ObservationSet {
    let scheme = make_scheme(t, 1.0, 0.49, 1.0).expect("valid scheme");
    simulate(&exp_model(0.1), &scheme, seed).expect("simulation")
}

pub fn options() -> EstimationOptions {
    EstimationOptions::default()
}

pub fn x_grid(n: usize, x_max: f64) -> Vec<f64> {
    (0..n).map(|i| x_max * i as f64 / (n - 1) as f64).collect()
}
