//! Ground truth for the scale functions: contour inversion of
//! `1/(ψ(θ) − q)`, the compound-geometric ladder distribution on a grid, and
//! exact special cases.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScaleError};
use crate::levy_model::{laplace_exponent_complex, laplace_exponent_deriv, lundberg_exponent, LevyModel, ThetaParams};
use crate::scale_series::{ftilde_q, p_value};

/// Default number of Talbot nodes. Beyond about 40 nodes the `e^{rt}` factor
/// amplifies double-precision rounding faster than the discretisation error
/// decays.
pub const TALBOT_NODES: usize = 32;

/// An inverted value with its node-halving error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub value: f64,
    pub err_estimate: f64,
    /// Set when the estimate exceeds the requested tolerance.
    pub flagged: bool,
}

/// `W^{(q)}(x)` by fixed-Talbot inversion with the default node count and a
/// flag tolerance of `1e−6` relative.
pub fn laplace_invert_scale(model: &LevyModel, q: f64, x: f64) -> Result<Inversion> {
    laplace_invert_scale_with(model, q, x, TALBOT_NODES, 1e-6)
}

pub fn laplace_invert_scale_with(model: &LevyModel, q: f64, x: f64, nodes: usize, tol: f64) -> Result<Inversion> {
    if !(x > 0.0) {
        return Err(ScaleError::Domain(format!("inversion needs x > 0, got {x}")));
    }
    let shift = lundberg_exponent(model, q)?;
    let transform = |s: Complex64| 1.0 / (laplace_exponent_complex(model, s + shift) - q);
    let full = fixed_talbot(&transform, x, nodes);
    let half = fixed_talbot(&transform, x, (nodes / 2).max(4));
    let scale = (shift * x).exp();
    let value = scale * full;
    let err_estimate = scale * (full - half).abs();
    Ok(Inversion { value, err_estimate, flagged: err_estimate > tol * value.abs().max(1e-300) })
}

/// `Z^{(q)}(x)` by inverting `ψ(θ)/(θ(ψ(θ) − q))` on the same shifted contour.
pub fn laplace_invert_z(model: &LevyModel, q: f64, x: f64) -> Result<Inversion> {
    if x <= 0.0 {
        return Ok(Inversion { value: 1.0, err_estimate: 0.0, flagged: false });
    }
    let shift = lundberg_exponent(model, q)?;
    let transform = |s: Complex64| {
        let th = s + shift;
        let psi = laplace_exponent_complex(model, th);
        psi / (th * (psi - q))
    };
    let full = fixed_talbot(&transform, x, TALBOT_NODES);
    let half = fixed_talbot(&transform, x, TALBOT_NODES / 2);
    let scale = (shift * x).exp();
    let value = scale * full;
    let err_estimate = scale * (full - half).abs();
    Ok(Inversion { value, err_estimate, flagged: err_estimate > 1e-6 * value.abs() })
}

/// Fixed-Talbot rule for `f(t)` from its transform `F`.
pub fn fixed_talbot<F: Fn(Complex64) -> Complex64>(transform: &F, t: f64, m: usize) -> f64 {
    let mf = m as f64;
    let r = 2.0 * mf / (5.0 * t);
    let mut sum = 0.5 * (transform(Complex64::new(r, 0.0)) * (r * t).exp()).re;
    for k in 1..m {
        let th = k as f64 * PI / mf;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(r * th * cot, r * th);
        let sigma = th + (th * cot - 1.0) * cot;
        let term = (s * t).exp() * transform(s) * Complex64::new(1.0, sigma);
        sum += term.re;
    }
    r / mf * sum
}

/// Euler-summation (Abate–Whitt) inversion, kept as an independent check of
/// the Talbot rule.
pub fn euler_invert_scale(model: &LevyModel, q: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(ScaleError::Domain(format!("inversion needs x > 0, got {x}")));
    }
    let shift = lundberg_exponent(model, q)?;
    let transform = |s: Complex64| 1.0 / (laplace_exponent_complex(model, s + shift) - q);
    Ok((shift * x).exp() * euler_inversion(&transform, x))
}

/// Abate–Whitt Euler algorithm, `A = 18.4`, 15 terms plus 11-term binomial
/// averaging.
pub fn euler_inversion<F: Fn(Complex64) -> Complex64>(transform: &F, t: f64) -> f64 {
    const A: f64 = 18.4;
    const N: usize = 15;
    const M: usize = 11;
    let u = (A / 2.0).exp() / t;
    let x = A / (2.0 * t);
    let h = PI / t;
    let mut partial = Vec::with_capacity(N + M + 1);
    let mut sum = 0.5 * transform(Complex64::new(x, 0.0)).re;
    partial.push(sum);
    for k in 1..=(N + M) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * transform(Complex64::new(x, k as f64 * h)).re;
        partial.push(sum);
    }
    let mut binom = 1.0;
    let mut avg = 0.0;
    for j in 0..=M {
        if j > 0 {
            binom *= (M - j + 1) as f64 / j as f64;
        }
        avg += binom * partial[N + j];
    }
    u * avg / 2f64.powi(M as i32)
}

/// Special cases with an explicit scale function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormKind {
    BrownianDrift,
    CramerLundbergExponential,
}

impl ClosedFormKind {
    /// The kind matching a model, if any.
    pub fn of_model(model: &LevyModel) -> Option<Self> {
        if model.jumps.is_none() && model.d > 0.0 {
            Some(ClosedFormKind::BrownianDrift)
        } else if model.d == 0.0 && model.jumps.exponential_params().is_some() {
            Some(ClosedFormKind::CramerLundbergExponential)
        } else {
            None
        }
    }
}

/// Exact `W^{(q)}(x)` and `Z^{(q)}(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub w: f64,
    pub z: f64,
}

/// Brownian motion with drift: `W = (e^{γx} − e^{−βx})/(D(β+γ))`.
/// Exponential jumps without diffusion: with roots `θ₁ = Φ(q) ≥ 0 ≥ θ₂` of
/// `cθ² + (cμ − λ − q)θ − qμ`, `W = [(μ+θ₁)e^{θ₁x} − (μ+θ₂)e^{θ₂x}]/(c(θ₁−θ₂))`.
pub fn closed_form_w(kind: ClosedFormKind, model: &LevyModel, q: f64, x: f64) -> Result<ClosedForm> {
    if ClosedFormKind::of_model(model) != Some(kind) {
        return Err(ScaleError::Domain(format!("model does not match closed form {kind:?}")));
    }
    let x = x.max(0.0);
    let int_exp = |r: f64| if r.abs() < 1e-12 { x } else { (r * x).exp_m1() / r };
    match kind {
        ClosedFormKind::BrownianDrift => {
            let d = model.d;
            let gamma = lundberg_exponent(model, q)?;
            let beta = model.c / d + gamma;
            let den = d * (beta + gamma);
            let w = ((gamma * x).exp() - (-beta * x).exp()) / den;
            let z = 1.0 + q * (int_exp(gamma) - int_exp(-beta)) / den;
            Ok(ClosedForm { w, z })
        }
        ClosedFormKind::CramerLundbergExponential => {
            let (lambda, mu) = model.jumps.exponential_params().expect("checked above");
            model.require_npc()?;
            let c = model.c;
            let b = c * mu - lambda - q;
            let disc = (b * b + 4.0 * c * q * mu).sqrt();
            let t1 = if b > 0.0 { 2.0 * q * mu / (b + disc) } else { (disc - b) / (2.0 * c) };
            let t2 = if b > 0.0 { -(b + disc) / (2.0 * c) } else { -2.0 * q * mu / (disc - b) };
            let den = c * (t1 - t2);
            let w = ((mu + t1) * (t1 * x).exp() - (mu + t2) * (t2 * x).exp()) / den;
            let z = 1.0 + q * ((mu + t1) * int_exp(t1) - (mu + t2) * int_exp(t2)) / den;
            Ok(ClosedForm { w, z })
        }
    }
}

/// Ruin probability `1 − ψ′(0+) W^{(0)}(x)` of the exponential-jump model
/// without diffusion: `(λ/(cμ)) e^{−(μ − λ/c) x}`.
pub fn cramer_lundberg_ruin(model: &LevyModel, x: f64) -> Result<f64> {
    let (lambda, mu) = model
        .jumps
        .exponential_params()
        .filter(|_| model.d == 0.0)
        .ok_or_else(|| ScaleError::Domain("ruin closed form needs exponential jumps and D = 0".into()))?;
    model.require_npc()?;
    let c = model.c;
    Ok(lambda / (c * mu) * (-(mu - lambda / c) * x).exp())
}

/// Exact `W^{(q)}` when a closed form exists, Talbot inversion otherwise.
pub fn oracle_w(model: &LevyModel, q: f64, x: f64) -> Result<f64> {
    match ClosedFormKind::of_model(model) {
        Some(kind) => Ok(closed_form_w(kind, model, q, x)?.w),
        None if x <= 0.0 => Ok(if model.d > 0.0 { 0.0 } else { laplace_invert_scale(model, q, 1e-9)?.value }),
        None => Ok(laplace_invert_scale(model, q, x)?.value),
    }
}

/// Compound-geometric distribution `G = Σ (1−p) p^k F^{*k}` on a grid:
/// an atom `1 − p` at zero plus a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDistribution {
    pub h: f64,
    pub x_max: f64,
    pub p: f64,
    pub atom: f64,
    /// `Ḡ(x_i) = G((x_i, ∞))`.
    pub gbar: Vec<f64>,
    /// Density of the continuous part.
    pub density: Vec<f64>,
    /// Atom plus trapezoid mass of the density.
    pub mass: f64,
}

impl GridDistribution {
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Linear interpolation of `Ḡ`; zero beyond the grid.
    pub fn gbar_at(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.gbar[0];
        }
        let pos = x / self.h;
        let i = pos.floor() as usize;
        if i + 1 >= self.gbar.len() {
            return if i + 1 == self.gbar.len() { self.gbar[i] } else { 0.0 };
        }
        let w = pos - i as f64;
        (1.0 - w) * self.gbar[i] + w * self.gbar[i + 1]
    }
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

/// Solves the defective renewal equation `Ḡ = pF̄ + p f * Ḡ` by marching a
/// trapezoid discretisation of the convolution. `f` is the ladder density
/// sampled at `x_i = i h`.
pub fn compound_geometric_grid(f: &[f64], p: f64, h: f64) -> Result<GridDistribution> {
    if !(0.0..1.0).contains(&p) {
        return Err(ScaleError::Domain(format!("compound-geometric parameter p = {p} outside [0, 1)")));
    }
    if f.len() < 2 || !(h > 0.0) {
        return Err(ScaleError::Domain("grid needs at least two points and h > 0".into()));
    }
    let n = f.len();
    let mut fbar = vec![1.0; n];
    for i in 1..n {
        fbar[i] = fbar[i - 1] - 0.5 * h * (f[i - 1] + f[i]);
    }
    let denom = 1.0 - 0.5 * p * h * f[0];
    let mut gbar = vec![0.0; n];
    let mut g = vec![0.0; n];
    gbar[0] = p;
    g[0] = p * (1.0 - p) * f[0];
    for i in 1..n {
        let mut cg = 0.5 * f[i] * gbar[0];
        let mut cd = 0.5 * f[i] * g[0];
        for j in 1..i {
            cg += f[j] * gbar[i - j];
            cd += f[j] * g[i - j];
        }
        gbar[i] = (p * fbar[i] + p * h * cg) / denom;
        g[i] = (p * (1.0 - p) * f[i] + p * h * cd) / denom;
    }
    let atom = 1.0 - p;
    let mass = atom + trapezoid(&g, h);
    let deficit = (1.0 - mass).abs();
    if deficit > 1e-4 {
        return Err(ScaleError::GridTooCoarse { deficit });
    }
    Ok(GridDistribution { h, x_max: (n - 1) as f64 * h, p, atom, gbar, density: g, mass })
}

/// Cross-check of [`compound_geometric_grid`] by summing the geometric
/// series of trapezoid convolution powers until `p^k < 1e−12`.
pub fn compound_geometric_series(f: &[f64], p: f64, h: f64) -> Vec<f64> {
    let n = f.len();
    let mut gbar = vec![0.0; n];
    if p == 0.0 {
        return gbar;
    }
    let mut power = f.to_vec();
    let mut weight = (1.0 - p) * p;
    while weight > 1e-12 * (1.0 - p) {
        // Ḡ(x_i) += (1−p) p^k (1 − F^{*k}(x_i))
        let mut cdf = 0.0;
        for i in 0..n {
            if i > 0 {
                cdf += 0.5 * h * (power[i - 1] + power[i]);
            }
            gbar[i] += weight * (1.0 - cdf);
        }
        let mut next = vec![0.0; n];
        for i in 1..n {
            let mut s = 0.5 * (f[0] * power[i] + f[i] * power[0]);
            for j in 1..i {
                s += f[j] * power[i - j];
            }
            next[i] = h * s;
        }
        power = next;
        weight *= p;
    }
    gbar
}

/// Grid settings for the ladder-distribution oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub x_max: f64,
    /// Step as a fraction of `x_max`.
    pub rel_step: f64,
    /// `f_q` tail mass allowed beyond `x_max`.
    pub tail_tol: f64,
    /// Target `|mass − 1|`.
    pub mass_tol: f64,
    pub max_points: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { x_max: 10.0, rel_step: 1e-3, tail_tol: 1e-6, mass_tol: 1e-6, max_points: 100_001 }
    }
}

/// `G_q` of a model: samples `f_q = f̃_q/p`, doubles `x_max` until the tail
/// of `f_q` is below `tail_tol`, then halves `h` until the mass is within
/// `mass_tol` (or the point budget runs out).
pub fn ladder_grid(model: &LevyModel, opts: GridOptions) -> Result<GridDistribution> {
    let theta = ThetaParams::of_model(model)?;
    let p = p_value(model, &theta)?;
    let mut x_max = opts.x_max;
    if p == 0.0 {
        let n = (1.0 / opts.rel_step).round() as usize + 1;
        let h = x_max / (n - 1) as f64;
        return Ok(GridDistribution { h, x_max, p, atom: 1.0, gbar: vec![0.0; n], density: vec![0.0; n], mass: 1.0 });
    }
    let fq = |x: f64| ftilde_q(model, &theta, x).map(|v| v / p);
    loop {
        let tail = crate::quad::integrate_semi_infinite(|u| fq(x_max + u).unwrap_or(0.0), 0.0, Default::default()).value;
        if tail <= opts.tail_tol || x_max > 1e4 {
            break;
        }
        x_max *= 2.0;
    }
    let mut h = opts.rel_step * opts.x_max;
    loop {
        let n = (x_max / h).round() as usize + 1;
        let mut f: Vec<f64> = (0..n).map(|i| fq(i as f64 * h)).collect::<Result<_>>()?;
        // remove the quadrature defect of the sampled density so that the
        // mass check measures the renewal discretisation alone
        let tf = trapezoid(&f, h);
        f.iter_mut().for_each(|v| *v /= tf);
        let grid = compound_geometric_grid(&f, p, h);
        let truncated = grid.as_ref().map_or(true, |g| g.gbar[n - 1] > 0.5 * opts.mass_tol);
        let (nx, nh) = if truncated { (2.0 * x_max, h) } else { (x_max, 0.5 * h) };
        let exhausted = (nx / nh).round() as usize + 1 > opts.max_points;
        match grid {
            Ok(g) if (g.mass - 1.0).abs() <= opts.mass_tol || exhausted => return Ok(g),
            Err(e) if exhausted => return Err(e),
            _ => {
                x_max = nx;
                h = nh;
            }
        }
    }
}

/// Ruin probability `1 − ψ′(0+) W^{(0)}(x)` from the closed form when
/// available, else from `Ḡ` on the ladder grid (at `q = 0`).
pub fn ruin_probability(model: &LevyModel, x: f64) -> Result<f64> {
    let m0 = model.with_q(0.0);
    if let Ok(v) = cramer_lundberg_ruin(&m0, x) {
        return Ok(v);
    }
    if m0.jumps.is_none() {
        return Ok(0.0);
    }
    let _ = laplace_exponent_deriv(&m0, 0.0)?;
    Ok(ladder_grid(&m0, GridOptions::default())?.gbar_at(x))
}
