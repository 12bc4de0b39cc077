//! Laguerre-type expansion of the scale functions `W^{(q)}` and `Z^{(q)}`.
//!
//! The ladder-height density enters as `f̃_q = p f_q`, with mass `p` and
//! Laguerre coefficients `a^f`, `a^F` of `p f_q` and `p F̄_q`. Each of these is a
//! linear functional `ν(H)` of the jump measure; the kernels `H` are evaluated
//! in closed form through the convolutions `Ψ_{α,k}`. The coefficients
//! `a^G` of the compound-geometric tail solve the lower-triangular Toeplitz
//! system `A^f a^G = a^F`, and
//!
//! ```text
//! W_K(x) = P(x) − Q(x)·a^G,     Z_K(x) = 1 + q (P*(x) − Q*(x)·a^G).
//! ```

use serde::{Deserialize, Serialize};

use crate::dual::{exp_ratio, Dual, Real};
use crate::error::{Result, ScaleError};
use crate::laguerre::{laguerre_fns_upto, partial_sum, psi_all, LaguerreParams};
use crate::levy_model::{nu_functional_exact, JumpMeasure, LevyModel, ThetaParams};
use crate::quad::{integrate, integrate_semi_infinite, QuadOptions};

/// Below this the Lundberg exponent is treated as exactly zero.
pub const GAMMA_ZERO: f64 = 1e-10;

/// Coefficients of the expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub p: f64,
    pub a_f: Vec<f64>,
    #[serde(rename = "a_F")]
    pub a_big_f: Vec<f64>,
    #[serde(rename = "a_G")]
    pub a_g: Vec<f64>,
    pub params: LaguerreParams,
    pub theta: ThetaParams,
}

impl CoefficientSet {
    /// Assemble from `p`, `a^f`, `a^F`, solving for `a^G`.
    pub fn from_parts(p: f64, a_f: Vec<f64>, a_big_f: Vec<f64>, params: LaguerreParams, theta: ThetaParams) -> Result<Self> {
        if !(p < 1.0) {
            return Err(ScaleError::Domain(format!("mass p = {p} must be < 1")));
        }
        let a = build_af(&a_f, params.alpha);
        let a_g = solve_ag(&a, &a_big_f)?;
        Ok(CoefficientSet { p, a_f, a_big_f, a_g, params, theta })
    }

    /// All-zero coefficients (no jumps).
    pub fn zero(params: LaguerreParams, theta: ThetaParams) -> Self {
        let n = params.len();
        CoefficientSet { p: 0.0, a_f: vec![0.0; n], a_big_f: vec![0.0; n], a_g: vec![0.0; n], params, theta }
    }

    /// Parameter vector `(a^f, a^F, p, γ)` in the estimator ordering.
    pub fn theta_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.params.len() + 2);
        v.extend_from_slice(&self.a_f);
        v.extend_from_slice(&self.a_big_f);
        v.push(self.p);
        v.push(self.theta.gamma);
        v
    }
}

/// Kernels `H_p`, `H^f_{α,k}`, `H^F_{α,k}` at one jump size.
#[derive(Debug, Clone, PartialEq)]
pub struct HValues<T> {
    pub hp: T,
    pub hf: Vec<T>,
    pub h_big_f: Vec<T>,
}

impl<T: Real> HValues<T> {
    /// Flatten as `(H^f, H^F, H_p)`.
    pub fn write_flat(&self, out: &mut [T]) {
        let n = self.hf.len();
        out[..n].copy_from_slice(&self.hf);
        out[n..2 * n].copy_from_slice(&self.h_big_f);
        out[2 * n] = self.hp;
    }
}

/// Evaluates the kernels at jump size `z` with `(D, γ)` and drift `c`.
///
/// With `J_k(z) = ∫_0^z e^{−γ(z−y)} ∫_y^∞ e^{−β(x−y)} φ_k(x) dx dy` and
/// `N_k(z) = ∫_0^z e^{−γ(z−y)} ∫_0^y φ_k(x) dx dy`:
/// for `D > 0`, `H^f_k = J_k/D` and `H^F_k = (J_k + N_k)/(Dβ)`;
/// for `D = 0`, `H^f_k = Ψ_k(z; −γ)/c` and `H^F_k = N_k/c`.
/// Both `J` and `N` satisfy first-order recurrences in `k` driven by
/// `Ψ_k(z; −γ)`.
pub fn h_functionals_generic<T: Real>(c: f64, d: f64, gamma: T, params: &LaguerreParams, z: f64) -> HValues<T> {
    let n = params.len();
    let alpha = params.alpha;
    let norm = params.norm();
    let psi = psi_all(params, z, -gamma);
    let e1 = exp_ratio(gamma, z);

    let mut nk = Vec::with_capacity(n);
    nk.push((e1 - psi[0] / norm) * (norm / alpha));
    for k in 1..n {
        let prev = nk[k - 1];
        nk.push(-prev + (psi[k - 1] - psi[k]) / alpha);
    }

    if d > 0.0 {
        let beta = gamma + c / d;
        let bp = beta + alpha;
        let bm = beta - alpha;
        let mut jk = Vec::with_capacity(n);
        jk.push(psi[0] / bp);
        for k in 1..n {
            let prev = jk[k - 1];
            jk.push((bm * prev + psi[k] - psi[k - 1]) / bp);
        }
        let db = beta * d;
        HValues {
            hp: e1 / db,
            hf: jk.iter().map(|&j| j / d).collect(),
            h_big_f: jk.iter().zip(&nk).map(|(&j, &m)| (j + m) / db).collect(),
        }
    } else {
        HValues {
            hp: e1 / c,
            hf: psi.iter().map(|&v| v / c).collect(),
            h_big_f: nk.iter().map(|&v| v / c).collect(),
        }
    }
}

/// [`h_functionals_generic`] for a model and parameter pair.
pub fn h_functionals(model: &LevyModel, theta: &ThetaParams, params: &LaguerreParams, z: f64) -> HValues<f64> {
    h_functionals_generic(model.c, theta.d, theta.gamma, params, z)
}

/// `∂_γ` of the kernels, by forward differentiation.
pub fn h_functionals_dgamma(model: &LevyModel, theta: &ThetaParams, params: &LaguerreParams, z: f64) -> HValues<f64> {
    let h = h_functionals_generic(model.c, theta.d, Dual::var(theta.gamma), params, z);
    HValues { hp: h.hp.d, hf: h.hf.iter().map(|v| v.d).collect(), h_big_f: h.h_big_f.iter().map(|v| v.d).collect() }
}

/// Cross-check of the kernels by nested adaptive quadrature of their
/// defining integrals. Slow; meant for tests.
pub fn h_functionals_nested(model: &LevyModel, theta: &ThetaParams, params: &LaguerreParams, z: f64) -> Result<HValues<f64>> {
    let (c, d, gamma) = (model.c, theta.d, theta.gamma);
    let n = params.len();
    let alpha = params.alpha;
    let opts = QuadOptions::tight();
    let phi = |k: usize, x: f64| laguerre_fns_upto(alpha, k, x)[k];
    let mut hf = Vec::with_capacity(n);
    let mut h_big_f = Vec::with_capacity(n);
    let outer = |g: &dyn Fn(f64) -> f64| integrate(|y| (-gamma * (z - y)).exp() * g(y), 0.0, z, opts).strict("nested outer");
    for k in 0..n {
        let running = |y: f64| integrate(|x| phi(k, x), 0.0, y, opts).value;
        if d > 0.0 {
            let beta = c / d + gamma;
            let tail = |y: f64| integrate_semi_infinite(|u| (-beta * u).exp() * phi(k, y + u), 0.0, opts).value;
            let j = outer(&tail)?;
            let m = outer(&running)?;
            hf.push(j / d);
            h_big_f.push((j + m) / (d * beta));
        } else {
            hf.push(outer(&|y| phi(k, y))? / c);
            h_big_f.push(outer(&running)? / c);
        }
    }
    let e1 = outer(&|_| 1.0)?;
    let hp = if d > 0.0 { e1 / (d * (c / d + gamma)) } else { e1 / c };
    Ok(HValues { hp, hf, h_big_f })
}

/// `ν(e1_γ)` with `e1_γ(z) = (1 − e^{−γz})/γ`.
fn nu_e1(jumps: &JumpMeasure, gamma: f64) -> f64 {
    if gamma < GAMMA_ZERO {
        jumps.moment(1)
    } else {
        -jumps.laplace_term(gamma) / gamma
    }
}

/// Mass `p = ν(H_p)` of `f̃_q`.
pub fn p_value(model: &LevyModel, theta: &ThetaParams) -> Result<f64> {
    model.require_npc()?;
    let m = nu_e1(&model.jumps, theta.gamma);
    let p = if theta.d > 0.0 { m / (theta.d * theta.beta(model.c)) } else { m / model.c };
    if !(p < 1.0) {
        return Err(ScaleError::Domain(format!("mass p = {p} must be < 1")));
    }
    Ok(p)
}

/// `f̃_q(x) = p f_q(x)`.
///
/// `D = 0`: `c⁻¹ T_γ(x)`; `D > 0`: `D⁻¹ ∫_0^x e^{−β(x−y)} T_γ(y) dy`, with
/// `T_γ(y) = ∫_y^∞ e^{−γ(z−y)} ν(dz)`.
pub fn ftilde_q(model: &LevyModel, theta: &ThetaParams, x: f64) -> Result<f64> {
    let jumps = &model.jumps;
    let gamma = theta.gamma;
    if jumps.is_none() {
        return Ok(0.0);
    }
    if theta.d == 0.0 {
        return Ok(jumps.discounted_tail(gamma, x) / model.c);
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let beta = theta.beta(model.c);
    if let Some((lambda, mu)) = jumps.exponential_params() {
        return Ok(lambda * mu / (theta.d * (mu + gamma)) * (-mu * x).exp() * exp_ratio(beta - mu, x));
    }
    let v = integrate(|y| (-beta * (x - y)).exp() * jumps.discounted_tail(gamma, y), 0.0, x, QuadOptions::tight())
        .strict("f̃_q quadrature")?;
    Ok(v / theta.d)
}

/// How `ν(H)` is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientMethod {
    /// Closed form when the jump family has one, quadrature otherwise.
    #[default]
    Auto,
    /// Always integrate the kernels against the density numerically.
    Quadrature,
}

/// True coefficients `(p, a^f, a^F, a^G)` of a model.
pub fn coeffs_true(model: &LevyModel, params: &LaguerreParams) -> Result<CoefficientSet> {
    coeffs_true_with(model, params, CoefficientMethod::Auto)
}

pub fn coeffs_true_with(model: &LevyModel, params: &LaguerreParams, method: CoefficientMethod) -> Result<CoefficientSet> {
    params.validate()?;
    let theta = ThetaParams::of_model(model)?;
    coeffs_at(model, &theta, params, method)
}

/// Coefficients at an arbitrary `θ` (the true jump measure is still used).
pub fn coeffs_at(model: &LevyModel, theta: &ThetaParams, params: &LaguerreParams, method: CoefficientMethod) -> Result<CoefficientSet> {
    if model.jumps.is_none() {
        return Ok(CoefficientSet::zero(*params, *theta));
    }
    let (p, a_f, a_big_f) = match (method, model.jumps.exponential_params()) {
        (CoefficientMethod::Auto, Some((lambda, mu))) => {
            let (p, f, big) = exponential_coeffs(model.c, theta.d, lambda, mu, theta.gamma, params);
            (p, f, big)
        }
        _ => {
            let n = params.len();
            let v = nu_functional_exact(model, 2 * n + 1, |z, out| {
                h_functionals(model, theta, params, z).write_flat(out);
            })?;
            (v[2 * n], v[..n].to_vec(), v[n..2 * n].to_vec())
        }
    };
    CoefficientSet::from_parts(p, a_f, a_big_f, *params, *theta)
}

/// `ν(∂_γ H)` for the true measure, in the `(a^f, a^F, p)` ordering.
pub fn coeffs_dgamma(model: &LevyModel, theta: &ThetaParams, params: &LaguerreParams) -> Result<Vec<f64>> {
    let n = params.len();
    if model.jumps.is_none() {
        return Ok(vec![0.0; 2 * n + 1]);
    }
    if let Some((lambda, mu)) = model.jumps.exponential_params() {
        let (p, f, big) = exponential_coeffs(model.c, theta.d, lambda, mu, Dual::var(theta.gamma), params);
        let mut v: Vec<f64> = f.iter().chain(&big).map(|x| x.d).collect();
        v.push(p.d);
        return Ok(v);
    }
    nu_functional_exact(model, 2 * n + 1, |z, out| {
        h_functionals_dgamma(model, theta, params, z).write_flat(out);
    })
}

/// Closed-form coefficients for exponential jumps, `ν(dz) = λμ e^{−μz} dz`.
///
/// Each `ν(H) = λμ 𝓛[H](μ)`, and the Laplace transforms of the kernels are
/// rational in the transforms `Φ_k(s) = √(2α)(s−α)^k/(s+α)^{k+1}` of the
/// basis. The divided difference `(Φ_k(μ) − Φ_k(β))/(β − μ)` is expanded
/// algebraically so that `β ≈ μ` costs no precision.
pub fn exponential_coeffs<T: Real>(c: f64, d: f64, lambda: f64, mu: f64, gamma: T, params: &LaguerreParams) -> (T, Vec<T>, Vec<T>) {
    let n = params.len();
    let alpha = params.alpha;
    let norm = params.norm();
    let mg = gamma + mu;
    let r_mu = (mu - alpha) / (mu + alpha);
    let phi_mu: Vec<f64> = (0..n).map(|k| norm * r_mu.powi(k as i32) / (mu + alpha)).collect();
    if d > 0.0 {
        let beta = gamma + c / d;
        let r_beta = (beta - alpha) / (beta + alpha);
        let pre = (beta + alpha) * (mu + alpha);
        let mut a_f = Vec::with_capacity(n);
        let mut a_big_f = Vec::with_capacity(n);
        // S_k = Σ_{j<k} r_μ^j r_β^{k−1−j}
        let mut s = T::cst(0.0);
        let mut rb_k = T::cst(1.0);
        let mut rm_k = 1.0;
        for k in 0..n {
            let dd = (rb_k - s * (2.0 * alpha / (mu + alpha))) * norm / pre;
            let lj = dd / mg;
            let ln = T::cst(phi_mu[k] / mu) / mg;
            a_f.push(lj * (lambda * mu / d));
            a_big_f.push((ln + lj) * (lambda * mu / d) / beta);
            s = r_beta * s + rm_k;
            rb_k = rb_k * r_beta;
            rm_k *= r_mu;
        }
        let p = T::cst(lambda / d) / (beta * mg);
        (p, a_f, a_big_f)
    } else {
        let a_f = phi_mu.iter().map(|&v| T::cst(lambda * mu * v / c) / mg).collect();
        let a_big_f = phi_mu.iter().map(|&v| T::cst(lambda * v / c) / mg).collect();
        let p = T::cst(lambda / c) / mg;
        (p, a_f, a_big_f)
    }
}

/// Lower-triangular `(K+1)×(K+1)` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    pub n: usize,
    pub data: Vec<f64>,
}

impl LowerTriangular {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        LowerTriangular { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..=i).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    /// Solves `Lᵀ y = v` by back substitution.
    pub fn solve_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let diag = self.get(i, i);
            if diag.abs() < 1e-10 {
                return Err(ScaleError::IllConditioned { index: i, diag });
            }
            let s: f64 = ((i + 1)..n).map(|j| self.get(j, i) * y[j]).sum();
            y[i] = (v[i] - s) / diag;
        }
        Ok(y)
    }
}

/// Toeplitz pattern shared by `A^f` and the Jacobian block: entry `(k, l)`,
/// `l ≤ k`, is `−(a_{k−l} − a_{k−l−1})/√(2α)` with `a_{−1} = 0`.
fn toeplitz_pattern(a: &[f64], alpha: f64) -> LowerTriangular {
    let n = a.len();
    let norm = (2.0 * alpha).sqrt();
    let mut m = LowerTriangular { n, data: vec![0.0; n * n] };
    for k in 0..n {
        for l in 0..=k {
            let j = k - l;
            let prev = if j == 0 { 0.0 } else { a[j - 1] };
            m.data[k * n + l] = -(a[j] - prev) / norm;
        }
    }
    m
}

/// `A^f_K`: unit diagonal plus the Toeplitz pattern of `a^f`.
pub fn build_af(a_f: &[f64], alpha: f64) -> LowerTriangular {
    let mut m = toeplitz_pattern(a_f, alpha);
    for i in 0..m.n {
        m.data[i * m.n + i] += 1.0;
    }
    m
}

/// `∂(A^f a^G)/∂a^f` at fixed `a^G`: the Toeplitz pattern of `a^G`.
pub fn build_bstar(a_g: &[f64], alpha: f64) -> LowerTriangular {
    toeplitz_pattern(a_g, alpha)
}

/// Forward substitution for `A a^G = a^F`.
pub fn solve_ag(a: &LowerTriangular, a_big_f: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    let mut x = vec![0.0; n];
    for i in 0..n {
        let diag = a.get(i, i);
        if diag.abs() < 1e-10 {
            return Err(ScaleError::IllConditioned { index: i, diag });
        }
        let s: f64 = (0..i).map(|j| a.get(i, j) * x[j]).sum();
        x[i] = (a_big_f[i] - s) / diag;
    }
    let scale = a_big_f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = a.mul_vec(&x).iter().zip(a_big_f).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
    if residual > 1e-12 * scale {
        return Err(ScaleError::NumericalFailure { context: "triangular solve for a^G".into(), residual });
    }
    Ok(x)
}

/// `Ḡ_{q,K}(x) = Σ a^G_k φ_k(x)`.
pub fn gbar_partial_sum(coeffs: &CoefficientSet, x: f64) -> f64 {
    partial_sum(&coeffs.a_g, &coeffs.params, x)
}

/// `P`, `Q_k`, `P*`, `Q*_k` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTerms<T> {
    pub p: T,
    pub q: Vec<T>,
    pub p_star: T,
    pub q_star: Vec<T>,
}

/// Evaluates the building blocks of `W_K` and `Z_K` at `x`.
///
/// With `den = D(1−p)(β+γ)` (`D > 0`) or `c(1−p)` (`D = 0`):
/// `P = (e^{γx} − e^{−βx})/den`, `Q_k = (γΨ_k(x;γ) + βΨ_k(x;−β))/den`,
/// `P* = ∫_0^x P`, `Q*_k = (Ψ_k(x;γ) − Ψ_k(x;−β))/den`; for `D = 0`,
/// `P = e^{γx}/den`, `Q_k = (φ_k(x) + γΨ_k(x;γ))/den`, `Q*_k = Ψ_k(x;γ)/den`.
pub fn series_terms<T: Real>(params: &LaguerreParams, x: f64, p: f64, gamma: T, d: f64, c: f64) -> Result<SeriesTerms<T>> {
    if !(p < 1.0) {
        return Err(ScaleError::Domain(format!("mass p = {p} must be < 1")));
    }
    if x < 0.0 {
        return Err(ScaleError::Domain(format!("x must be >= 0, got {x}")));
    }
    let psi_g = psi_all(params, x, gamma);
    let egx = (gamma * x).exp();
    let int_egx = exp_ratio(-gamma, x);
    if d > 0.0 {
        let beta = gamma + c / d;
        let den = (beta + gamma) * (d * (1.0 - p));
        let psi_b = psi_all(params, x, -beta);
        let p_term = (egx - (-beta * x).exp()) / den;
        let p_star = (int_egx - exp_ratio(beta, x)) / den;
        let q = psi_g.iter().zip(&psi_b).map(|(&g, &b)| (gamma * g + beta * b) / den).collect();
        let q_star = psi_g.iter().zip(&psi_b).map(|(&g, &b)| (g - b) / den).collect();
        Ok(SeriesTerms { p: p_term, q, p_star, q_star })
    } else {
        if !(c > 0.0) {
            return Err(ScaleError::Domain(format!("bounded-variation case needs c > 0, got {c}")));
        }
        let den = c * (1.0 - p);
        let phi = laguerre_fns_upto(params.alpha, params.k, x);
        let q = psi_g.iter().zip(&phi).map(|(&g, &f)| (gamma * g + f) / den).collect();
        let q_star = psi_g.iter().map(|&g| g / den).collect();
        Ok(SeriesTerms { p: egx / den, q, p_star: int_egx / den, q_star })
    }
}

/// `P(x; p, γ, D)`.
pub fn eval_p(params: &LaguerreParams, x: f64, p: f64, gamma: f64, d: f64, c: f64) -> Result<f64> {
    Ok(series_terms(&params.with_k(0), x, p, gamma, d, c)?.p)
}

/// `Q_{α,k}(x; p, γ, D)`.
pub fn eval_q(params: &LaguerreParams, x: f64, k: usize, p: f64, gamma: f64, d: f64, c: f64) -> Result<f64> {
    Ok(series_terms(&params.with_k(k), x, p, gamma, d, c)?.q[k])
}

/// `P*(x; p, γ, D) = ∫_0^x P`.
pub fn eval_pstar(params: &LaguerreParams, x: f64, p: f64, gamma: f64, d: f64, c: f64) -> Result<f64> {
    Ok(series_terms(&params.with_k(0), x, p, gamma, d, c)?.p_star)
}

/// `Q*_{α,k}(x; p, γ, D) = ∫_0^x Q_{α,k}`.
pub fn eval_qstar(params: &LaguerreParams, x: f64, k: usize, p: f64, gamma: f64, d: f64, c: f64) -> Result<f64> {
    Ok(series_terms(&params.with_k(k), x, p, gamma, d, c)?.q_star[k])
}

fn dot<T: Real>(a: &[T], b: &[f64]) -> T {
    a.iter().zip(b).fold(T::cst(0.0), |s, (&u, &v)| s + u * v)
}

/// `W_K` and `Z_K` for a drift `c`, discount `q` and a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleApprox {
    pub c: f64,
    pub q: f64,
    pub coeffs: CoefficientSet,
}

/// `(x, W_K(x), Z_K(x))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub w: f64,
    pub z: f64,
}

impl ScaleApprox {
    pub fn new(model: &LevyModel, coeffs: CoefficientSet) -> Self {
        ScaleApprox { c: model.c, q: model.q, coeffs }
    }

    /// Expansion with the true coefficients of `model`.
    pub fn for_model(model: &LevyModel, params: &LaguerreParams) -> Result<Self> {
        Ok(ScaleApprox::new(model, coeffs_true(model, params)?))
    }

    fn terms<T: Real>(&self, x: f64, gamma: T) -> Result<SeriesTerms<T>> {
        let cs = &self.coeffs;
        series_terms(&cs.params, x, cs.p, gamma, cs.theta.d, self.c)
    }

    pub fn w(&self, x: f64) -> Result<f64> {
        let t = self.terms(x, self.coeffs.theta.gamma)?;
        Ok(t.p - dot(&t.q, &self.coeffs.a_g))
    }

    pub fn z(&self, x: f64) -> Result<f64> {
        let t = self.terms(x, self.coeffs.theta.gamma)?;
        Ok(1.0 + self.q * (t.p_star - dot(&t.q_star, &self.coeffs.a_g)))
    }

    pub fn point(&self, x: f64) -> Result<CurvePoint> {
        let t = self.terms(x, self.coeffs.theta.gamma)?;
        let a = &self.coeffs.a_g;
        Ok(CurvePoint { x, w: t.p - dot(&t.q, a), z: 1.0 + self.q * (t.p_star - dot(&t.q_star, a)) })
    }

    pub fn curve(&self, xs: &[f64]) -> Result<Vec<CurvePoint>> {
        xs.iter().map(|&x| self.point(x)).collect()
    }

    /// Gradients of `W_K(x)` and of `(Z_K(x) − 1)/q` with respect to
    /// `(a^f, a^F, p, γ)`, with `a^G` following `a^f`, `a^F` through the
    /// triangular system.
    pub fn gradients(&self, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let cs = &self.coeffs;
        let t = self.terms(x, Dual::var(cs.theta.gamma))?;
        let a = build_af(&cs.a_f, cs.params.alpha);
        let bstar = build_bstar(&cs.a_g, cs.params.alpha);
        let one_minus_p = 1.0 - cs.p;
        let grad = |p_term: Dual, q: &[Dual]| -> Result<Vec<f64>> {
            let qv: Vec<f64> = q.iter().map(|v| v.v).collect();
            // W = P − Q·a^G, δa^G = A⁻¹(δa^F − B* δa^f)
            let v = a.solve_transpose(&qv)?;
            let n = qv.len();
            let mut g = Vec::with_capacity(2 * n + 2);
            for m in 0..n {
                let s: f64 = (m..n).map(|k| v[k] * bstar.get(k, m)).sum();
                g.push(s);
            }
            g.extend(v.iter().map(|x| -x));
            let val = p_term - dot(q, &cs.a_g);
            g.push(val.v / one_minus_p);
            g.push(val.d);
            Ok(g)
        };
        Ok((grad(t.p, &t.q)?, grad(t.p_star, &t.q_star)?))
    }
}

/// `W_K` at `x` for a model, with true coefficients.
pub fn eval_wk(approx: &ScaleApprox, x: f64) -> Result<f64> {
    approx.w(x)
}

/// `Z_K` at `x`.
pub fn eval_zk(approx: &ScaleApprox, x: f64) -> Result<f64> {
    approx.z(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laguerre::{laguerre_fn, project_grid_all};

    fn exp_model(d: f64, q: f64) -> LevyModel {
        LevyModel::exponential(1.5, d, 1.0, 1.0, q).unwrap()
    }

    #[test]
    fn kernels_match_nested_quadrature() {
        let params = LaguerreParams::new(1.0, 6).unwrap();
        for (d, q) in [(0.5, 0.1), (0.0, 0.1), (0.5, 0.0), (0.0, 0.0)] {
            let m = exp_model(d, q);
            let theta = ThetaParams::of_model(&m).unwrap();
            for z in [0.0, 0.4, 2.3, 7.0] {
                let a = h_functionals(&m, &theta, &params, z);
                let b = h_functionals_nested(&m, &theta, &params, z).unwrap();
                assert!((a.hp - b.hp).abs() < 1e-10);
                for k in 0..=6 {
                    assert!((a.hf[k] - b.hf[k]).abs() < 1e-9, "D={d} z={z} k={k}: {} {}", a.hf[k], b.hf[k]);
                    assert!((a.h_big_f[k] - b.h_big_f[k]).abs() < 1e-9, "D={d} z={z} k={k}: {} {}", a.h_big_f[k], b.h_big_f[k]);
                }
                if z == 0.0 {
                    assert_eq!(a.hp, 0.0);
                    assert!(a.hf.iter().chain(&a.h_big_f).all(|v| v.abs() < 1e-15));
                }
                for k in 0..=6 {
                    assert!(a.hf[k].abs() <= params.norm() * a.hp + 1e-14);
                }
            }
        }
    }

    #[test]
    fn hp_closed_form() {
        let m = exp_model(0.5, 0.1);
        let theta = ThetaParams::new(0.5, 0.3);
        let params = LaguerreParams::new(1.0, 2).unwrap();
        let z = 1.7;
        let beta = 1.5 / 0.5 + 0.3;
        let expected = (1.0 - (-0.3 * z).exp()) / (beta * 0.5 * 0.3);
        assert!((h_functionals(&m, &theta, &params, z).hp - expected).abs() < 1e-14);
    }

    #[test]
    fn closed_form_coefficients_match_quadrature() {
        let params = LaguerreParams::new(1.0, 30).unwrap();
        for (d, q) in [(0.5, 0.1), (0.0, 0.1), (0.5, 0.0), (0.0, 0.0), (2.0, 0.3)] {
            let m = exp_model(d, q);
            let a = coeffs_true_with(&m, &params, CoefficientMethod::Auto).unwrap();
            let b = coeffs_true_with(&m, &params, CoefficientMethod::Quadrature).unwrap();
            assert!((a.p - b.p).abs() < 1e-10);
            for k in 0..=30 {
                assert!((a.a_f[k] - b.a_f[k]).abs() < 1e-9, "D={d} q={q} k={k}");
                assert!((a.a_big_f[k] - b.a_big_f[k]).abs() < 1e-9, "D={d} q={q} k={k}");
            }
            let theta = ThetaParams::of_model(&m).unwrap();
            let closed = coeffs_dgamma(&m, &theta, &params).unwrap();
            let n = params.len();
            let numeric = nu_functional_exact(&m, 2 * n + 1, |z, out| {
                h_functionals_dgamma(&m, &theta, &params, z).write_flat(out);
            })
            .unwrap();
            for (u, v) in closed.iter().zip(&numeric) {
                assert!((u - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mass_and_identity_for_p() {
        let m = LevyModel::exponential(1.5, 0.0, 1.0, 1.0, 0.0).unwrap();
        let theta = ThetaParams::of_model(&m).unwrap();
        assert!((p_value(&m, &theta).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for (d, q) in [(0.5, 0.1), (0.0, 0.3), (1.0, 2.0)] {
            let m = exp_model(d, q);
            let theta = ThetaParams::of_model(&m).unwrap();
            let p = p_value(&m, &theta).unwrap();
            let identity = 1.0 - q / (theta.gamma * (m.c + d * theta.gamma));
            assert!((p - identity).abs() < 1e-10 && p > 0.0 && p < 1.0);
            let mass = integrate_semi_infinite(|x| ftilde_q(&m, &theta, x).unwrap(), 0.0, QuadOptions::tight()).value;
            assert!((mass - p).abs() < 1e-9);
        }
        let bm = LevyModel::brownian(1.0, 0.5, 0.1).unwrap();
        assert_eq!(p_value(&bm, &ThetaParams::of_model(&bm).unwrap()).unwrap(), 0.0);
        let bad = LevyModel::exponential(1.0, 0.0, 2.0, 1.0, 0.0).unwrap();
        assert!(matches!(p_value(&bad, &ThetaParams::new(0.0, 0.0)), Err(ScaleError::Domain(_))));
    }

    #[test]
    fn ftilde_matches_double_integral() {
        let m = exp_model(0.5, 0.1);
        let theta = ThetaParams::of_model(&m).unwrap();
        let beta = theta.beta(m.c);
        let x = 1.0;
        let inner = |y: f64| integrate_semi_infinite(|u| (-theta.gamma * u).exp() * (-(y + u)).exp(), 0.0, QuadOptions::tight()).value;
        let outer = integrate(|y| (-beta * (x - y)).exp() * inner(y), 0.0, x, QuadOptions::tight()).value / 0.5;
        assert!((ftilde_q(&m, &theta, x).unwrap() - outer).abs() < 1e-8);
        let bound = m.jumps.moment(1) / 0.5;
        for x in [0.0, 0.1, 1.0, 5.0, 30.0] {
            let v = ftilde_q(&m, &theta, x).unwrap();
            assert!((0.0..=bound).contains(&v));
        }
        let g = LevyModel::new(0.0, 3.0, 0.4, JumpMeasure::GammaSubordinator { shape: 1.0, rate: 2.0 }, 0.2).unwrap();
        let th = ThetaParams::of_model(&g).unwrap();
        let p = p_value(&g, &th).unwrap();
        let mass = integrate_semi_infinite(|x| ftilde_q(&g, &th, x).unwrap(), 0.0, QuadOptions::default()).value;
        assert!((mass - p).abs() < 1e-7, "{mass} {p}");
    }

    #[test]
    fn coefficients_match_grid_projection() {
        let params = LaguerreParams::new(1.0, 20).unwrap();
        for d in [0.5, 0.0] {
            let m = exp_model(d, 0.1);
            let cs = coeffs_true(&m, &params).unwrap();
            let h = 2e-3;
            let n = 30_000;
            let f: Vec<f64> = (0..=n).map(|i| ftilde_q(&m, &cs.theta, i as f64 * h).unwrap()).collect();
            // p F̄_q(x) = ∫_x^∞ f̃_q by a reversed cumulative trapezoid plus the analytic tail
            let mut big = vec![0.0; n + 1];
            for i in (0..n).rev() {
                big[i] = big[i + 1] + 0.5 * h * (f[i] + f[i + 1]);
            }
            let pf = project_grid_all(&f, h, &params);
            let pbig = project_grid_all(&big, h, &params);
            for k in 0..=20 {
                assert!((pf.values[k] - cs.a_f[k]).abs() < 1e-6, "D={d} k={k}");
                assert!((pbig.values[k] - cs.a_big_f[k]).abs() < 1e-6, "D={d} k={k}");
            }
        }
    }

    #[test]
    fn triangular_system() {
        let a = build_af(&[0.0; 4], 1.0);
        assert_eq!(a, LowerTriangular::identity(4));
        let (u, v) = (0.3, 0.1);
        let a = build_af(&[u, v], 2.0);
        let s = 2.0;
        assert_eq!(a.get(0, 0), 1.0 - u / s);
        assert_eq!(a.get(1, 1), 1.0 - u / s);
        assert_eq!(a.get(1, 0), -(v - u) / s);
        assert_eq!(a.get(0, 1), 0.0);
        let b = [0.2, -0.4];
        assert_eq!(solve_ag(&LowerTriangular::identity(2), &b).unwrap(), b.to_vec());
        assert_eq!(solve_ag(&a, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let singular = build_af(&[2f64.sqrt(), 0.0], 1.0);
        assert!(matches!(solve_ag(&singular, &[1.0, 1.0]), Err(ScaleError::IllConditioned { index: 0, .. })));
    }

    #[test]
    fn no_jumps_gives_brownian_closed_form() {
        let m = LevyModel::brownian(1.2, 0.7, 0.4).unwrap();
        let params = LaguerreParams::new(1.0, 10).unwrap();
        let ap = ScaleApprox::for_model(&m, &params).unwrap();
        let g = ap.coeffs.theta.gamma;
        let beta = g + 1.2 / 0.7;
        for x in [0.0, 0.5, 3.0, 8.0] {
            let exact = ((g * x).exp() - (-beta * x).exp()) / (0.7 * (beta + g));
            assert!((ap.w(x).unwrap() - exact).abs() < 1e-13 * (1.0 + exact));
        }
        assert_eq!(ap.w(0.0).unwrap(), 0.0);
        assert_eq!(ap.z(0.0).unwrap(), 1.0);
    }

    #[test]
    fn q_terms_match_kernel_quadrature() {
        let params = LaguerreParams::new(1.0, 8).unwrap();
        let (p, g, d, c) = (0.3, 0.2, 0.5, 1.5);
        let beta = c / d + g;
        let x = 3.0;
        let t = series_terms(&params, x, p, g, d, c).unwrap();
        let den = d * (1.0 - p) * (beta + g);
        for k in 0..=8 {
            let kernel = integrate(
                |z| (g * (g * (x - z)).exp() + beta * (-beta * (x - z)).exp()) * laguerre_fn(&params, k, z),
                0.0,
                x,
                QuadOptions::tight(),
            )
            .value
                / den;
            assert!((t.q[k] - kernel).abs() < 1e-9);
            assert!((eval_q(&params, x, k, p, g, d, c).unwrap() - t.q[k]).abs() < 1e-15);
            let qs = integrate(|y| eval_q(&params, y, k, p, g, d, c).unwrap(), 0.0, x, QuadOptions::default()).value;
            assert!((t.q_star[k] - qs).abs() < 1e-8);
        }
        assert_eq!(eval_p(&params, 0.0, p, g, d, c).unwrap(), 0.0);
        let ps = integrate(|y| eval_p(&params, y, p, g, d, c).unwrap(), 0.0, x, QuadOptions::default()).value;
        assert!((eval_pstar(&params, x, p, g, d, c).unwrap() - ps).abs() < 1e-10);
        // bounded variation and the γ = 0 limit
        let t0 = series_terms(&params, x, p, 0.0, 0.0, c).unwrap();
        assert!((t0.p_star - x / (c * (1.0 - p))).abs() < 1e-14);
        for k in 0..=8 {
            let qs = integrate(|y| eval_q(&params, y, k, p, 0.0, 0.0, c).unwrap(), 0.0, x, QuadOptions::default()).value;
            assert!((t0.q_star[k] - qs).abs() < 1e-9);
        }
        assert!(matches!(eval_p(&params, 1.0, 1.0, g, d, c), Err(ScaleError::Domain(_))));
    }

    #[test]
    fn z_matches_integrated_w() {
        let params = LaguerreParams::new(1.0, 20).unwrap();
        for d in [0.5, 0.0] {
            let m = exp_model(d, 0.1);
            let ap = ScaleApprox::for_model(&m, &params).unwrap();
            for x in [1.0, 4.0, 10.0] {
                let int = integrate(|y| ap.w(y).unwrap(), 0.0, x, QuadOptions::default()).value;
                assert!((ap.z(x).unwrap() - (1.0 + 0.1 * int)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let params = LaguerreParams::new(1.0, 6).unwrap();
        let m = exp_model(0.5, 0.1);
        let ap = ScaleApprox::for_model(&m, &params).unwrap();
        let x = 2.5;
        let (gw, gz) = ap.gradients(x).unwrap();
        let base = ap.coeffs.theta_vector();
        let n = params.len();
        let eval = |v: &[f64]| {
            let theta = ThetaParams::new(0.5, v[2 * n + 1]);
            let cs = CoefficientSet::from_parts(v[2 * n], v[..n].to_vec(), v[n..2 * n].to_vec(), params, theta).unwrap();
            let a = ScaleApprox { c: m.c, q: m.q, coeffs: cs };
            (a.w(x).unwrap(), (a.z(x).unwrap() - 1.0) / m.q)
        };
        let h = 1e-6;
        for i in 0..base.len() {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[i] += h;
            dn[i] -= h;
            let (wu, zu) = eval(&up);
            let (wd, zd) = eval(&dn);
            assert!((gw[i] - (wu - wd) / (2.0 * h)).abs() < 1e-6, "W component {i}");
            assert!((gz[i] - (zu - zd) / (2.0 * h)).abs() < 1e-6, "Z component {i}");
        }
    }
}
