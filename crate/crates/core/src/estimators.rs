//! Estimation of the diffusion coefficient, the Lundberg exponent, the
//! expansion coefficients and the scale functions from an [`ObservationSet`],
//! with plug-in asymptotic covariances and pointwise confidence intervals.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, ScaleError};
use crate::laguerre::LaguerreParams;
use crate::levy_model::{laplace_exponent_deriv, nu_functional_exact, LevyModel, ThetaParams};
use crate::scale_series::{
    build_bstar, coeffs_dgamma, coeffs_true, h_functionals_generic, CoefficientSet, ScaleApprox,
};
use crate::dual::Dual;
use crate::simulate::{ObservationSet, SamplingScheme};

/// Tuning of the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationOptions {
    /// Window `[0, T_est]` of the realised-variance estimator of `D`.
    #[serde(default = "default_window")]
    pub d_window: f64,
    /// Nominal coverage of the pointwise intervals.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_window() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions { d_window: default_window(), confidence: default_confidence() }
    }
}

/// Realised-variance estimate of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEstimate {
    pub raw: f64,
    /// `max(raw, 0)`, the value used in plug-in formulas.
    pub clamped: f64,
    pub negative: bool,
}

/// `D̂ = (2T)⁻¹ [Σ_{iΔ ≤ T} (X_{iΔ} − X_{(i−1)Δ})² − Σ_{s ≤ T} (ΔL_s)²]` over
/// the window `[0, T]`, with the second sum over recorded jumps.
pub fn estimate_d(obs: &ObservationSet, window: f64) -> Result<DEstimate> {
    let delta = obs.scheme.delta;
    if !(window > 0.0) {
        return Err(ScaleError::Config(format!("D window must be positive, got {window}")));
    }
    let m = (window / delta + 1e-9).floor() as usize;
    if m == 0 || m + 1 > obs.grid.len() {
        return Err(ScaleError::Domain(format!(
            "D window {window} needs {} grid points, data has {}",
            m + 1,
            obs.grid.len()
        )));
    }
    let rv: f64 = obs.grid[..=m].windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    let end = m as f64 * delta;
    let jumps: f64 = obs.jumps.iter().filter(|j| j.t <= end).map(|j| j.size * j.size).sum();
    let raw = (rv - jumps) / (2.0 * window);
    Ok(DEstimate { raw, clamped: raw.max(0.0), negative: raw < 0.0 })
}

/// `ν̂(H) = Tₙ⁻¹ Σ H(ΔL)` over the recorded jumps, for vector-valued `H`.
pub fn nu_hat<H>(obs: &ObservationSet, dim: usize, mut h: H) -> Vec<f64>
where
    H: FnMut(f64, &mut [f64]),
{
    let mut acc = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    for j in &obs.jumps {
        h(j.size, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    let t = obs.scheme.horizon;
    acc.iter_mut().for_each(|a| *a /= t);
    acc
}

/// Scalar version of [`nu_hat`].
pub fn nu_hat_scalar<F: Fn(f64) -> f64>(obs: &ObservationSet, f: F) -> f64 {
    obs.jumps.iter().map(|j| f(j.size)).sum::<f64>() / obs.scheme.horizon
}

/// M-estimate of the Lundberg exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    /// `|ψ̂(γ̂) − q|²`.
    pub objective: f64,
    /// Set when no root was bracketed and a boundary/minimiser was returned.
    pub boundary: bool,
}

/// Empirical Laplace exponent `ψ̂(r) = cr + D̂r² + ν̂(e^{−rz} − 1)`.
pub fn psi_hat(obs: &ObservationSet, c: f64, d_hat: f64, r: f64) -> f64 {
    c * r + d_hat * r * r + nu_hat_scalar(obs, |z| (-r * z).exp_m1())
}

/// `ψ̂′(r) = c + 2D̂r − ν̂(z e^{−rz})`.
pub fn psi_hat_deriv(obs: &ObservationSet, c: f64, d_hat: f64, r: f64) -> f64 {
    c + 2.0 * d_hat * r - nu_hat_scalar(obs, |z| z * (-r * z).exp())
}

/// Solves `ψ̂(r) = q` on `[0, r_max]`; `q = 0` gives exactly 0.
pub fn estimate_gamma(obs: &ObservationSet, q: f64, d_hat: f64, c: f64) -> GammaEstimate {
    if q <= 0.0 {
        return GammaEstimate { value: 0.0, objective: 0.0, boundary: false };
    }
    let d = d_hat.max(0.0);
    let f = |r: f64| psi_hat(obs, c, d, r) - q;
    let brownian = if d > 0.0 { 4.0 * q / (c + (c * c + 8.0 * d * q).sqrt()) } else { 2.0 * q / c.max(f64::MIN_POSITIVE) };
    let mut r_max = 10.0 * brownian.max(1e-8);
    let mut doublings = 0;
    while f(r_max) <= 0.0 && doublings < 60 {
        r_max *= 2.0;
        doublings += 1;
    }
    if f(r_max) > 0.0 {
        // ψ̂(0) − q = −q < 0, so [0, r_max] brackets the root; ψ̂ is convex so
        // the crossing is unique
        let (mut lo, mut hi) = (0.0, r_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let value = if f(lo).abs() < f(hi).abs() { lo } else { hi };
        let r = f(value);
        return GammaEstimate { value, objective: r * r, boundary: false };
    }
    // no sign change: minimise the squared objective by golden section
    let g = |r: f64| f(r) * f(r);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, r_max);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while b - a > 1e-12 * b.max(1.0) {
        if g1 < g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - phi * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + phi * (b - a);
            g2 = g(x2);
        }
    }
    let value = 0.5 * (a + b);
    GammaEstimate { value, objective: g(value), boundary: true }
}

/// Plug-in coefficient estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub d: DEstimate,
    pub gamma: GammaEstimate,
    pub coeffs: CoefficientSet,
}

/// `θ̂ = (max(D̂, 0), γ̂)`, then `p̂`, `â^f`, `â^F` as `ν̂` of the kernels at
/// `θ̂` and `â^G` from the triangular system.
pub fn estimate_coeffs(obs: &ObservationSet, q: f64, c: f64, params: &LaguerreParams, d_window: f64) -> Result<CoefficientEstimate> {
    params.validate()?;
    let d = estimate_d(obs, d_window)?;
    let gamma = estimate_gamma(obs, q, d.clamped, c);
    let theta = ThetaParams::new(d.clamped, gamma.value);
    let coeffs = coeffs_from_jumps(obs, c, &theta, params)?;
    Ok(CoefficientEstimate { d, gamma, coeffs })
}

/// Coefficients from the recorded jumps at a given `θ`.
pub fn coeffs_from_jumps(obs: &ObservationSet, c: f64, theta: &ThetaParams, params: &LaguerreParams) -> Result<CoefficientSet> {
    let n = params.len();
    let v = nu_hat(obs, 2 * n + 1, |z, out| {
        h_functionals_generic(c, theta.d, theta.gamma, params, z).write_flat(out);
    });
    let p = v[2 * n];
    if !(p < 1.0) {
        return Err(ScaleError::DegenerateEstimate { what: "p_hat".into(), value: p });
    }
    CoefficientSet::from_parts(p, v[..n].to_vec(), v[n..2 * n].to_vec(), *params, *theta)
}

/// `(Ŵ_K(x), Ẑ_K(x))` from plug-in coefficients.
pub fn estimate_w(approx: &ScaleApprox, x: f64) -> Result<(f64, f64)> {
    let p = approx.point(x)?;
    Ok((p.w, p.z))
}

/// Asymptotic variance `v₀² = ν(k_γ²)/ψ′(γ)²` of `√T(γ̂ − γ₀)`, using
/// `ν(k_γ²) = ν(k_{2γ}) − 2ν(k_γ)`.
pub fn gamma_asymptotic_variance(model: &LevyModel) -> Result<f64> {
    let theta = ThetaParams::of_model(model)?;
    let g = theta.gamma;
    let nk2 = model.jumps.laplace_term(2.0 * g) - 2.0 * model.jumps.laplace_term(g);
    let slope = laplace_exponent_deriv(model, g)?;
    Ok(nk2 / (slope * slope))
}

/// Point of the estimated curve with its interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub x: f64,
    pub w_hat: f64,
    pub z_hat: f64,
    pub sigma_k: f64,
    pub sigma_star_k: f64,
    /// Asymptotic covariance of `(Ŵ, Ẑ)`, row-major 2×2.
    pub joint: [f64; 4],
    pub w_lo: f64,
    pub w_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

/// Everything the estimation pipeline produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub oracle: bool,
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub replication: u64,
    pub c: f64,
    pub q: f64,
    #[serde(rename = "D_hat")]
    pub d_hat: f64,
    #[serde(rename = "D_hat_clamped")]
    pub d_hat_clamped: f64,
    pub gamma_hat: f64,
    pub gamma_objective: f64,
    pub p_hat: f64,
    pub a_f_hat: Vec<f64>,
    #[serde(rename = "a_F_hat")]
    pub a_big_f_hat: Vec<f64>,
    #[serde(rename = "a_G_hat")]
    pub a_g_hat: Vec<f64>,
    pub params: LaguerreParams,
    /// `ψ̂′(γ̂)`.
    pub psi_deriv_hat: f64,
    /// Plug-in `v₀²`, the last diagonal entry of `Σ̂`.
    pub v0_sq_hat: f64,
    #[serde(rename = "Sigma_hat")]
    pub sigma_hat: Vec<Vec<f64>>,
    #[serde(rename = "Gamma_hat")]
    pub gamma_matrix: Vec<Vec<f64>>,
    #[serde(rename = "B_hat")]
    pub b_hat: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
    pub confidence: f64,
    pub curve: Vec<CurveEstimate>,
    pub flags: Vec<String>,
}

impl EstimationReport {
    pub fn approx(&self) -> ScaleApprox {
        let coeffs = CoefficientSet {
            p: self.p_hat,
            a_f: self.a_f_hat.clone(),
            a_big_f: self.a_big_f_hat.clone(),
            a_g: self.a_g_hat.clone(),
            params: self.params,
            theta: ThetaParams::new(self.d_hat_clamped, self.gamma_hat),
        };
        ScaleApprox { c: self.c, q: self.q, coeffs }
    }

    pub fn cis_suppressed(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_NON_PSD)
    }
}

pub const FLAG_NEGATIVE_D: &str = "negative-D-hat";
pub const FLAG_GAMMA_BOUNDARY: &str = "gamma-hat-boundary";
pub const FLAG_NON_PSD: &str = "sigma-hat-not-psd";

/// Runs the whole pipeline on one observation set.
pub fn estimate(
    obs: &ObservationSet,
    c: f64,
    q: f64,
    params: &LaguerreParams,
    xs: &[f64],
    opts: &EstimationOptions,
) -> Result<EstimationReport> {
    let est = estimate_coeffs(obs, q, c, params, opts.d_window)?;
    let theta = est.coeffs.theta;
    let approx = ScaleApprox { c, q, coeffs: est.coeffs };
    let psi_deriv = psi_hat_deriv(obs, c, theta.d, theta.gamma);
    let n = params.len();
    let dim = 2 * n + 2;

    let mut flat = vec![0.0; 2 * n + 1];
    let mut sigma = vec![0.0; dim * dim];
    let mut dgamma = vec![0.0; 2 * n + 1];
    let mut h = vec![0.0; dim];
    for j in &obs.jumps {
        let hv = h_functionals_generic(c, theta.d, Dual::var(theta.gamma), params, j.size);
        let mut dual_flat = vec![Dual::new(0.0, 0.0); 2 * n + 1];
        hv.write_flat(&mut dual_flat);
        for (i, v) in dual_flat.iter().enumerate() {
            flat[i] = v.v;
            dgamma[i] += v.d;
        }
        h[..2 * n + 1].copy_from_slice(&flat);
        h[dim - 1] = if q > 0.0 { -(-theta.gamma * j.size).exp_m1() / psi_deriv } else { 0.0 };
        for a in 0..dim {
            for b in a..dim {
                sigma[a * dim + b] += h[a] * h[b];
            }
        }
    }
    let t = obs.scheme.horizon;
    for a in 0..dim {
        for b in a..dim {
            let v = sigma[a * dim + b] / t;
            sigma[a * dim + b] = v;
            sigma[b * dim + a] = v;
        }
    }
    dgamma.iter_mut().for_each(|v| *v /= t);

    let mut flags = Vec::new();
    if est.d.negative {
        flags.push(FLAG_NEGATIVE_D.to_string());
    }
    if est.gamma.boundary {
        flags.push(FLAG_GAMMA_BOUNDARY.to_string());
    }
    assemble_report(
        approx,
        Assembly {
            oracle: false,
            scheme: obs.scheme,
            seed: obs.seed,
            replication: obs.replication,
            d_raw: est.d.raw,
            gamma_objective: est.gamma.objective,
            psi_deriv,
            sigma,
            dgamma,
            horizon: t,
            flags,
        },
        xs,
        opts,
    )
}

/// Population counterpart of [`estimate`]: true `θ₀`, true coefficients and
/// `Σ = ν(H̃H̃ᵀ)` by quadrature. Intervals use the horizon of `scheme`.
pub fn oracle_report(
    model: &LevyModel,
    scheme: &SamplingScheme,
    params: &LaguerreParams,
    xs: &[f64],
    opts: &EstimationOptions,
) -> Result<EstimationReport> {
    let coeffs = coeffs_true(model, params)?;
    let theta = coeffs.theta;
    let (c, q) = (model.c, model.q);
    let psi_deriv = laplace_exponent_deriv(model, theta.gamma)?;
    let n = params.len();
    let dim = 2 * n + 2;
    let sigma = nu_functional_exact(model, dim * dim, |z, out| {
        let mut h = vec![0.0; dim];
        h_functionals_generic(c, theta.d, theta.gamma, params, z).write_flat(&mut h[..2 * n + 1]);
        h[dim - 1] = if q > 0.0 { -(-theta.gamma * z).exp_m1() / psi_deriv } else { 0.0 };
        for a in 0..dim {
            for b in 0..dim {
                out[a * dim + b] = h[a] * h[b];
            }
        }
    })?;
    let dgamma = coeffs_dgamma(model, &theta, params)?;
    let approx = ScaleApprox::new(model, coeffs);
    assemble_report(
        approx,
        Assembly {
            oracle: true,
            scheme: *scheme,
            seed: 0,
            replication: 0,
            d_raw: theta.d,
            gamma_objective: 0.0,
            psi_deriv,
            sigma,
            dgamma,
            horizon: scheme.horizon,
            flags: Vec::new(),
        },
        xs,
        opts,
    )
}

struct Assembly {
    oracle: bool,
    scheme: SamplingScheme,
    seed: u64,
    replication: u64,
    d_raw: f64,
    gamma_objective: f64,
    psi_deriv: f64,
    /// Row-major `dim × dim`.
    sigma: Vec<f64>,
    /// `ν(∂_γ H)` in `(a^f, a^F, p)` order.
    dgamma: Vec<f64>,
    horizon: f64,
    flags: Vec<String>,
}

fn assemble_report(approx: ScaleApprox, asm: Assembly, xs: &[f64], opts: &EstimationOptions) -> Result<EstimationReport> {
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return Err(ScaleError::Config(format!("confidence must lie in (0, 1), got {}", opts.confidence)));
    }
    let cs = &approx.coeffs;
    let params = cs.params;
    let n = params.len();
    let dim = 2 * n + 2;
    let mut flags = asm.flags;

    // Γ = I with last column (ν(∂_γ H), 1)
    let mut gamma_m = vec![vec![0.0; dim]; dim];
    for (i, row) in gamma_m.iter_mut().enumerate() {
        row[i] = 1.0;
        if i < dim - 1 {
            row[dim - 1] = asm.dgamma[i];
        }
    }

    let min_eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &asm.sigma)).eigenvalues.min();
    let psd = min_eig >= -1e-10;
    if !psd {
        flags.push(FLAG_NON_PSD.to_string());
    }

    let bstar = build_bstar(&cs.a_g, params.alpha);
    let b_hat: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut row: Vec<f64> = (0..n).map(|m| bstar.get(k, m)).collect();
            row.extend((0..n).map(|m| if m == k { -1.0 } else { 0.0 }));
            row
        })
        .collect();

    let z_crit = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + opts.confidence / 2.0);
    let q = approx.q;
    let quad = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for a in 0..dim {
            if u[a] == 0.0 {
                continue;
            }
            let row = &asm.sigma[a * dim..(a + 1) * dim];
            s += u[a] * row.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        }
        s
    };
    let times_gamma = |g: &[f64]| -> Vec<f64> {
        let mut out = g.to_vec();
        out[dim - 1] = g[dim - 1] + g[..dim - 1].iter().zip(&asm.dgamma).map(|(a, b)| a * b).sum::<f64>();
        out
    };
    let mut curve = Vec::with_capacity(xs.len());
    for &x in xs {
        let pt = approx.point(x)?;
        let (gw, gz) = approx.gradients(x)?;
        let cw = times_gamma(&gw);
        let cz: Vec<f64> = times_gamma(&gz).iter().map(|v| q * v).collect();
        let sw = quad(&cw, &cw).max(0.0);
        let sz = quad(&cz, &cz).max(0.0);
        let cross = quad(&cw, &cz);
        let (hw, hz) = if psd {
            (z_crit * (sw / asm.horizon).sqrt(), z_crit * (sz / asm.horizon).sqrt())
        } else {
            (f64::NAN, f64::NAN)
        };
        curve.push(CurveEstimate {
            x,
            w_hat: pt.w,
            z_hat: pt.z,
            sigma_k: sw,
            sigma_star_k: sz,
            joint: [sw, cross, cross, sz],
            w_lo: pt.w - hw,
            w_hi: pt.w + hw,
            z_lo: pt.z - hz,
            z_hi: pt.z + hz,
        });
    }

    let sigma_hat: Vec<Vec<f64>> = (0..dim).map(|a| asm.sigma[a * dim..(a + 1) * dim].to_vec()).collect();
    Ok(EstimationReport {
        oracle: asm.oracle,
        scheme: asm.scheme,
        seed: asm.seed,
        replication: asm.replication,
        c: approx.c,
        q,
        d_hat: asm.d_raw,
        d_hat_clamped: cs.theta.d,
        gamma_hat: cs.theta.gamma,
        gamma_objective: asm.gamma_objective,
        p_hat: cs.p,
        a_f_hat: cs.a_f.clone(),
        a_big_f_hat: cs.a_big_f.clone(),
        a_g_hat: cs.a_g.clone(),
        params,
        psi_deriv_hat: asm.psi_deriv,
        v0_sq_hat: asm.sigma[dim * dim - 1],
        sigma_hat,
        gamma_matrix: gamma_m,
        b_hat,
        min_eigenvalue: min_eig,
        confidence: opts.confidence,
        curve,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{lundberg_exponent, JumpMeasure};
    use crate::scale_series::{h_functionals, p_value};
    use crate::simulate::{make_scheme, simulate, simulate_replication, JumpRecord};

    fn obs_from(grid: Vec<f64>, jumps: Vec<JumpRecord>, delta: f64, horizon: f64) -> ObservationSet {
        let scheme = SamplingScheme { n: grid.len() - 1, delta, horizon, eps: 0.1, a: 1.0, rho: 0.49, c_eps: 1.0 };
        ObservationSet { scheme, seed: 0, replication: 0, x0: grid[0], grid, jumps, truth: None }
    }

    #[test]
    fn d_hat_definition() {
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let obs = obs_from(grid, vec![], 0.01, 2.0);
        assert!((estimate_d(&obs, 1.0).unwrap().raw - 0.005).abs() < 1e-15);
        // a single recorded jump with a flat grid otherwise
        let mut grid = vec![0.0; 101];
        for g in grid.iter_mut().skip(51) {
            *g = -2.0;
        }
        let obs = obs_from(grid, vec![JumpRecord { t: 0.505, size: 2.0 }], 0.01, 1.0);
        assert!(estimate_d(&obs, 1.0).unwrap().raw.abs() < 1e-15);
        assert!(estimate_d(&obs, 2.0).is_err());
        // scaling the path scales D̂ quadratically
        let m = LevyModel::exponential(1.5, 0.5, 1.0, 1.0, 0.0).unwrap();
        let o = simulate(&m, &make_scheme(10.0, 1.0, 0.49, 1.0).unwrap(), 3).unwrap();
        let mut scaled = o.clone();
        scaled.grid.iter_mut().for_each(|x| *x *= 3.0);
        scaled.jumps.iter_mut().for_each(|j| j.size *= 3.0);
        let (a, b) = (estimate_d(&o, 1.0).unwrap().raw, estimate_d(&scaled, 1.0).unwrap().raw);
        assert!((b - 9.0 * a).abs() < 1e-12 * b.abs());
    }

    #[test]
    fn d_hat_is_unbiased_for_brownian_motion() {
        let m = LevyModel::brownian(0.0, 0.5, 0.0).unwrap();
        let s = make_scheme(1000.0, 0.0001, 0.49, 1.0).unwrap();
        let s = SamplingScheme { n: 1000, delta: 1e-3, horizon: 1.0, ..s };
        let vals: Vec<f64> = (0..500).map(|r| estimate_d(&simulate_replication(&m, &s, 2, r, None).unwrap(), 1.0).unwrap().raw).collect();
        let mean = vals.iter().sum::<f64>() / 500.0;
        let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 499.0).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sd / 500f64.sqrt(), "{mean}");
    }

    #[test]
    fn nu_hat_examples() {
        let obs = obs_from(vec![0.0; 11], vec![], 0.1, 1.0);
        assert_eq!(nu_hat_scalar(&obs, |z| z * z), 0.0);
        let obs = obs_from(vec![0.0; 11], vec![JumpRecord { t: 0.3, size: 2.0 }], 0.1, 1.0);
        assert_eq!(nu_hat_scalar(&obs, |z| z * z), 4.0);
        assert_eq!(nu_hat(&obs, 2, |z, o| {
            o[0] = z;
            o[1] = 1.0;
        }), vec![2.0, 1.0]);
    }

    #[test]
    fn gamma_hat_cases() {
        let obs = obs_from(vec![0.0; 11], vec![JumpRecord { t: 0.3, size: 2.0 }], 0.1, 1.0);
        assert_eq!(estimate_gamma(&obs, 0.0, 0.5, 1.5).value, 0.0);
        let empty = obs_from(vec![0.0; 11], vec![], 0.1, 1.0);
        let g = estimate_gamma(&empty, 0.7, 0.4, 1.2);
        let bm = LevyModel::brownian(1.2, 0.4, 0.7).unwrap();
        assert!((g.value - lundberg_exponent(&bm, 0.7).unwrap()).abs() < 1e-8);
        assert!(!g.boundary && g.objective < 1e-10);
    }

    #[test]
    fn coefficient_estimates_single_atom() {
        let params = LaguerreParams::new(1.0, 5).unwrap();
        let mut grid: Vec<f64> = (0..=100).map(|i| 1.5 * i as f64 * 0.01).collect();
        for g in grid.iter_mut().skip(40) {
            *g -= 0.8;
        }
        let obs = obs_from(grid, vec![JumpRecord { t: 0.395, size: 0.8 }], 0.01, 1.0);
        let est = estimate_coeffs(&obs, 0.2, 1.5, &params, 1.0).unwrap();
        let m = LevyModel::new(0.0, 1.5, est.coeffs.theta.d, JumpMeasure::None, 0.2).unwrap();
        let h = h_functionals(&m, &est.coeffs.theta, &params, 0.8);
        assert_eq!(est.coeffs.p, h.hp);
        let none = obs_from(vec![0.0; 11], vec![], 0.1, 1.0);
        let est = estimate_coeffs(&none, 0.2, 1.5, &params, 1.0).unwrap();
        assert_eq!(est.coeffs.p, 0.0);
        assert!(est.coeffs.a_g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_jump_data_gives_brownian_curves_and_zero_covariance() {
        let m = LevyModel::brownian(1.0, 0.5, 0.1).unwrap();
        let s = make_scheme(20.0, 1.0, 0.49, 1.0).unwrap();
        let obs = simulate(&m, &s, 4).unwrap();
        let params = LaguerreParams::new(1.0, 8).unwrap();
        let r = estimate(&obs, 1.0, 0.1, &params, &[0.5, 2.0], &EstimationOptions::default()).unwrap();
        assert_eq!(r.p_hat, 0.0);
        assert!(r.sigma_hat.iter().flatten().all(|&v| v == 0.0));
        let (d, g) = (r.d_hat_clamped, r.gamma_hat);
        let beta = 1.0 / d + g;
        for pt in &r.curve {
            let exact = ((g * pt.x).exp() - (-beta * pt.x).exp()) / (d * (beta + g));
            assert!((pt.w_hat - exact).abs() < 1e-12);
            assert_eq!(pt.w_lo, pt.w_hi);
        }
        for (i, row) in r.gamma_matrix.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i == j {
                    assert_eq!(*v, 1.0);
                } else if j + 1 != row.len() {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_sigma_matches_plug_in_functionals() {
        let m = LevyModel::exponential(1.5, 0.5, 1.0, 1.0, 0.1).unwrap();
        let params = LaguerreParams::new(1.0, 4).unwrap();
        let s = make_scheme(400.0, 1.0, 0.49, 1.0).unwrap();
        let rep = oracle_report(&m, &s, &params, &[1.0, 3.0], &EstimationOptions::default()).unwrap();
        let v0 = gamma_asymptotic_variance(&m).unwrap();
        assert!((rep.v0_sq_hat - v0).abs() < 1e-8 * v0);
        let theta = ThetaParams::of_model(&m).unwrap();
        assert!((rep.p_hat - p_value(&m, &theta).unwrap()).abs() < 1e-14);
        assert!(rep.min_eigenvalue >= -1e-10);
        let dim = 2 * params.len() + 2;
        for a in 0..dim {
            for b in 0..dim {
                assert_eq!(rep.sigma_hat[a][b], rep.sigma_hat[b][a]);
            }
        }
        for pt in &rep.curve {
            assert!(pt.w_lo < pt.w_hat && pt.w_hat < pt.w_hi);
            assert!(pt.joint[1] * pt.joint[1] <= pt.joint[0] * pt.joint[3] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn estimates_are_close_to_truth_on_long_samples() {
        let m = LevyModel::exponential(1.5, 0.5, 1.0, 1.0, 0.1).unwrap();
        let s = make_scheme(400.0, 1.0, 0.49, 1.0).unwrap();
        let obs = simulate_replication(&m, &s, 8, 0, Some(1.0)).unwrap();
        let params = LaguerreParams::new(1.0, 10).unwrap();
        let r = estimate(&obs, m.c, m.q, &params, &[1.0], &EstimationOptions::default()).unwrap();
        let theta = ThetaParams::of_model(&m).unwrap();
        assert!((r.gamma_hat - theta.gamma).abs() < 0.05);
        assert!((r.p_hat - p_value(&m, &theta).unwrap()).abs() < 0.1);
        assert!((r.d_hat - 0.5).abs() < 0.25);
        assert!(r.min_eigenvalue >= -1e-10);
    }
}
