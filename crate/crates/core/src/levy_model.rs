//! Spectrally negative Lévy model `X_t = x + c t + σ W_t − L_t` and its
//! analytic primitives.
//!
//! The jump measure `ν` of the subordinator `L` lives on `(0, ∞)`. All
//! supported families have closed forms for the Laplace-exponent term
//! `ν(e^{−θz} − 1)`, the moments `ν(z)`, `ν(z²)` and the small-jump moments
//! that the sampling-scheme checks need; quadrature is kept for cross-checks
//! and for functionals without a closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Result, ScaleError};
use crate::quad::{integrate_semi_infinite, integrate_vec_semi_infinite, QuadOptions};

/// Lévy measure of the subordinator, per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JumpMeasure {
    None,
    /// Jumps arrive at `rate`; sizes are exponential with the given `mean`.
    CompoundPoissonExponential { rate: f64, mean: f64 },
    /// Jumps arrive at `rate`; sizes are Gamma(`shape`, `scale`).
    CompoundPoissonGamma { rate: f64, shape: f64, scale: f64 },
    /// `ν(dz) = shape · z⁻¹ e^{−rate z} dz` (infinite activity).
    GammaSubordinator { shape: f64, rate: f64 },
}

impl JumpMeasure {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScaleError::Config(format!("jump parameter {name} must be positive, got {v}")))
            }
        };
        match *self {
            JumpMeasure::None => Ok(()),
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                positive("rate", rate)?;
                positive("mean", mean)
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                positive("rate", rate)?;
                positive("shape", shape)?;
                positive("scale", scale)
            }
            JumpMeasure::GammaSubordinator { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, JumpMeasure::None)
    }

    /// Exponential-family parameters `(λ, μ)` when sizes are `Exp(μ)`.
    pub fn exponential_params(&self) -> Option<(f64, f64)> {
        match *self {
            JumpMeasure::CompoundPoissonExponential { rate, mean } => Some((rate, 1.0 / mean)),
            _ => None,
        }
    }

    /// Total jump intensity `ν((0, ∞))`; `None` for infinite activity.
    pub fn total_rate(&self) -> Option<f64> {
        match *self {
            JumpMeasure::None => Some(0.0),
            JumpMeasure::CompoundPoissonExponential { rate, .. } => Some(rate),
            JumpMeasure::CompoundPoissonGamma { rate, .. } => Some(rate),
            JumpMeasure::GammaSubordinator { .. } => None,
        }
    }

    /// Density `ρ(z)` of `ν` with respect to Lebesgue measure.
    pub fn density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => rate / mean * (-z / mean).exp(),
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                rate * ((shape - 1.0) * z.ln() - z / scale - ln_gamma(shape) - shape * scale.ln()).exp()
            }
            JumpMeasure::GammaSubordinator { shape, rate } => shape * (-rate * z).exp() / z,
        }
    }

    /// Tail `ν̄(x) = ν((x, ∞))`.
    pub fn tail(&self, x: f64) -> f64 {
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                if x <= 0.0 {
                    rate
                } else {
                    rate * (-x / mean).exp()
                }
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                if x <= 0.0 {
                    rate
                } else {
                    rate * gamma_ur(shape, x / scale)
                }
            }
            JumpMeasure::GammaSubordinator { shape, rate } => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    shape * exp_integral_e1(rate * x)
                }
            }
        }
    }

    /// `ν(z)` (`power = 1`) or `ν(z²)` (`power = 2`).
    pub fn moment(&self, power: u32) -> f64 {
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                rate * mean.powi(power as i32) * factorial(power)
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                let mut m = rate;
                for j in 0..power {
                    m *= (shape + j as f64) * scale;
                }
                m
            }
            JumpMeasure::GammaSubordinator { shape, rate } => {
                shape * factorial(power - 1) / rate.powi(power as i32)
            }
        }
    }

    /// `ν(e^{−θz} − 1)` for real `θ ≥ 0`.
    pub fn laplace_term(&self, theta: f64) -> f64 {
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                let mu = 1.0 / mean;
                -rate * theta / (mu + theta)
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                rate * (-shape * (scale * theta).ln_1p()).exp_m1()
            }
            JumpMeasure::GammaSubordinator { shape, rate } => -shape * (theta / rate).ln_1p(),
        }
    }

    /// Analytic continuation of [`laplace_term`](Self::laplace_term) to
    /// complex `s` (used by the contour inversion).
    pub fn laplace_term_complex(&self, s: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            JumpMeasure::None => Complex64::new(0.0, 0.0),
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                let mu = 1.0 / mean;
                -s * rate / (s + mu)
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                ((one + s * scale).ln() * (-shape)).exp() * rate - rate
            }
            JumpMeasure::GammaSubordinator { shape, rate } => -(one + s / rate).ln() * shape,
        }
    }

    /// `ν(z e^{−θz})`, so that `d/dθ ν(e^{−θz} − 1) = −ν(z e^{−θz})`.
    pub fn z_exp_moment(&self, theta: f64) -> f64 {
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                let mu = 1.0 / mean;
                rate * mu / ((mu + theta) * (mu + theta))
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                rate * shape * scale * (-(shape + 1.0) * (scale * theta).ln_1p()).exp()
            }
            JumpMeasure::GammaSubordinator { shape, rate } => shape / (rate + theta),
        }
    }

    /// `∫_0^ε z^power ν(dz)` for `power ∈ {1, 2}`.
    pub fn small_jump_moment(&self, eps: f64, power: u32) -> f64 {
        if eps <= 0.0 {
            return 0.0;
        }
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                let p = power as f64;
                rate * mean.powi(power as i32) * factorial(power) * gamma_lr(p + 1.0, eps / mean)
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                let p = power as f64;
                let mut m = rate;
                for j in 0..power {
                    m *= (shape + j as f64) * scale;
                }
                m * gamma_lr(shape + p, eps / scale)
            }
            JumpMeasure::GammaSubordinator { shape, rate } => {
                let p = power as f64;
                shape * factorial(power - 1) / rate.powi(power as i32) * gamma_lr(p, rate * eps)
            }
        }
    }

    /// `T_γ(y) = ∫_y^∞ e^{−γ(z−y)} ν(dz)`, the discounted tail.
    pub fn discounted_tail(&self, gamma: f64, y: f64) -> f64 {
        let y = y.max(0.0);
        match *self {
            JumpMeasure::None => 0.0,
            JumpMeasure::CompoundPoissonExponential { rate, mean } => {
                let mu = 1.0 / mean;
                rate * mu / (mu + gamma) * (-mu * y).exp()
            }
            JumpMeasure::CompoundPoissonGamma { rate, shape, scale } => {
                let s = 1.0 + gamma * scale;
                rate * (gamma * y - shape * s.ln()).exp() * gamma_ur(shape, s * y / scale)
            }
            JumpMeasure::GammaSubordinator { shape, rate } => {
                if y == 0.0 {
                    f64::INFINITY
                } else {
                    shape * (gamma * y).exp() * exp_integral_e1((rate + gamma) * y)
                }
            }
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Exponential integral `E₁(x) = ∫_x^∞ e^{−t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // modified Lentz on the continued fraction for e^{x} E₁(x)
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// `(c, D = σ²/2, ν, q)` plus the initial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct LevyModel {
    pub x0: f64,
    pub c: f64,
    pub d: f64,
    pub jumps: JumpMeasure,
    pub q: f64,
}

/// JSON face of [`LevyModel`]: exactly one of `sigma` and `D` is given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub x0: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default)]
    pub q: f64,
    pub jumps: JumpMeasure,
}

impl TryFrom<ModelSpec> for LevyModel {
    type Error = ScaleError;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        let d = match (spec.sigma, spec.d) {
            (Some(s), None) => s * s / 2.0,
            (None, Some(d)) => d,
            (None, None) => 0.0,
            (Some(_), Some(_)) => {
                return Err(ScaleError::Config("give either sigma or D, not both".into()));
            }
        };
        LevyModel::new(spec.x0, spec.c, d, spec.jumps, spec.q)
    }
}

impl From<LevyModel> for ModelSpec {
    fn from(m: LevyModel) -> Self {
        ModelSpec { x0: m.x0, c: m.c, sigma: None, d: Some(m.d), q: m.q, jumps: m.jumps }
    }
}

impl LevyModel {
    pub fn new(x0: f64, c: f64, d: f64, jumps: JumpMeasure, q: f64) -> Result<Self> {
        if !(d.is_finite() && d >= 0.0) {
            return Err(ScaleError::Config(format!("D must be >= 0, got {d}")));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(ScaleError::Config(format!("q must be >= 0, got {q}")));
        }
        if !c.is_finite() || !x0.is_finite() {
            return Err(ScaleError::Config("c and x0 must be finite".into()));
        }
        jumps.validate()?;
        Ok(LevyModel { x0, c, d, jumps, q })
    }

    /// Brownian motion with drift.
    pub fn brownian(c: f64, d: f64, q: f64) -> Result<Self> {
        LevyModel::new(0.0, c, d, JumpMeasure::None, q)
    }

    /// Exponential jumps with rate `λ` and size parameter `μ` (mean `1/μ`).
    pub fn exponential(c: f64, d: f64, lambda: f64, mu: f64, q: f64) -> Result<Self> {
        LevyModel::new(0.0, c, d, JumpMeasure::CompoundPoissonExponential { rate: lambda, mean: 1.0 / mu }, q)
    }

    pub fn sigma(&self) -> f64 {
        (2.0 * self.d).sqrt()
    }

    /// Same model with a different discount rate.
    pub fn with_q(&self, q: f64) -> Self {
        LevyModel { q, ..self.clone() }
    }

    /// Fails unless the net profit condition holds.
    pub fn require_npc(&self) -> Result<()> {
        let npc = check_npc(self);
        if npc.holds {
            Ok(())
        } else {
            Err(ScaleError::Domain(format!("net profit condition fails: c - ν(z) = {}", npc.margin)))
        }
    }
}

/// `θ = (D, γ)` with `γ = Φ(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub d: f64,
    pub gamma: f64,
}

impl ThetaParams {
    pub fn new(d: f64, gamma: f64) -> Self {
        ThetaParams { d, gamma }
    }

    /// `β = c/D + γ` for `D > 0`, `γ` otherwise.
    pub fn beta(&self, c: f64) -> f64 {
        if self.d > 0.0 {
            c / self.d + self.gamma
        } else {
            self.gamma
        }
    }

    /// True parameters of a model.
    pub fn of_model(model: &LevyModel) -> Result<Self> {
        Ok(ThetaParams { d: model.d, gamma: lundberg_exponent(model, model.q)? })
    }
}

/// Outcome of the net-profit check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetProfit {
    pub holds: bool,
    pub margin: f64,
}

pub fn check_npc(model: &LevyModel) -> NetProfit {
    let margin = model.c - model.jumps.moment(1);
    NetProfit { holds: margin > 0.0, margin }
}

/// `ψ(θ) = cθ + Dθ² + ν(e^{−θz} − 1)`.
pub fn laplace_exponent(model: &LevyModel, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(ScaleError::Domain(format!("laplace exponent needs θ >= 0, got {theta}")));
    }
    Ok(model.c * theta + model.d * theta * theta + model.jumps.laplace_term(theta))
}

/// `ψ(θ)` with the jump term integrated numerically; the cross-check route
/// for the closed forms.
pub fn laplace_exponent_quadrature(model: &LevyModel, theta: f64) -> Result<f64> {
    let jumps = &model.jumps;
    let term = if jumps.is_none() {
        0.0
    } else {
        integrate_semi_infinite(|z| (-theta * z).exp_m1() * jumps.density(z), 0.0, QuadOptions::tight())
            .strict("laplace exponent quadrature")?
    };
    Ok(model.c * theta + model.d * theta * theta + term)
}

/// `ψ(s) − q` at complex `s`.
pub fn laplace_exponent_complex(model: &LevyModel, s: Complex64) -> Complex64 {
    s * model.c + s * s * model.d + model.jumps.laplace_term_complex(s)
}

/// `ψ′(θ) = c + 2Dθ − ν(z e^{−θz})`; at `θ = 0` this is the NPC margin.
pub fn laplace_exponent_deriv(model: &LevyModel, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(ScaleError::Domain(format!("laplace exponent needs θ >= 0, got {theta}")));
    }
    Ok(model.c + 2.0 * model.d * theta - model.jumps.z_exp_moment(theta))
}

/// Root finder bracket settings.
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub theta_max: f64,
    pub bisection_width: f64,
    pub newton_steps: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions { theta_max: 50.0, bisection_width: 1e-8, newton_steps: 5 }
    }
}

/// Lundberg exponent `Φ(q) = sup{θ ≥ 0 : ψ(θ) = q}`.
pub fn lundberg_exponent(model: &LevyModel, q: f64) -> Result<f64> {
    lundberg_exponent_with(model, q, RootOptions::default())
}

pub fn lundberg_exponent_with(model: &LevyModel, q: f64, opts: RootOptions) -> Result<f64> {
    model.require_npc()?;
    if !(q >= 0.0) {
        return Err(ScaleError::Domain(format!("q must be >= 0, got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let psi = |t: f64| model.c * t + model.d * t * t + model.jumps.laplace_term(t);
    let mut hi = opts.theta_max;
    let mut doublings = 0;
    while psi(hi) <= q {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 || !hi.is_finite() {
            return Err(ScaleError::NumericalFailure {
                context: "lundberg exponent bracket".into(),
                residual: q - psi(hi / 2.0),
            });
        }
    }
    let mut lo = 0.0;
    let bisect = |lo: &mut f64, hi: &mut f64, width: f64| {
        while *hi - *lo > width {
            let mid = 0.5 * (*lo + *hi);
            if mid <= *lo || mid >= *hi {
                break;
            }
            if psi(mid) > q {
                *hi = mid;
            } else {
                *lo = mid;
            }
        }
    };
    bisect(&mut lo, &mut hi, opts.bisection_width);
    let tol = 1e-12 * q.max(1.0);
    let mut root = 0.5 * (lo + hi);
    for _ in 0..opts.newton_steps {
        let r = psi(root) - q;
        if r.abs() <= tol {
            break;
        }
        let slope = model.c + 2.0 * model.d * root - model.jumps.z_exp_moment(root);
        let next = root - r / slope;
        if !(next > lo && next < hi) {
            break;
        }
        root = next;
    }
    if (psi(root) - q).abs() > tol {
        bisect(&mut lo, &mut hi, 0.0);
        root = if (psi(lo) - q).abs() < (psi(hi) - q).abs() { lo } else { hi };
    }
    let residual = (psi(root) - q).abs();
    if residual > tol {
        return Err(ScaleError::NumericalFailure { context: "lundberg exponent".into(), residual });
    }
    Ok(root)
}

/// `ν(H)` for a vector-valued `H`, by adaptive quadrature against the
/// density (relative tolerance 1e−10).
pub fn nu_functional_exact<H>(model: &LevyModel, dim: usize, mut h: H) -> Result<Vec<f64>>
where
    H: FnMut(f64, &mut [f64]),
{
    if model.jumps.is_none() {
        return Ok(vec![0.0; dim]);
    }
    let jumps = &model.jumps;
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-10, max_intervals: 20_000 };
    integrate_vec_semi_infinite(
        |z, out| {
            h(z, out);
            let w = jumps.density(z);
            for o in out.iter_mut() {
                *o *= w;
            }
        },
        0.0,
        dim,
        opts,
    )
    .strict("ν-functional quadrature")
}
