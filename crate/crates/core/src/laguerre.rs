//! Laguerre polynomials, the orthonormal Laguerre functions
//! `φ_{α,k}(x) = √(2α) L_k(2αx) e^{−αx}` on `L²(0, ∞)`, the exponential
//! convolutions `Ψ_{α,k}(x; b) = ∫_0^x e^{b(x−z)} φ_{α,k}(z) dz` and grid
//! projections.

use serde::{Deserialize, Serialize};

use crate::dual::{exp_ratio, expm1_ratio, Real};
use crate::error::{Result, ScaleError};

/// Scale `α` and truncation order `K` of the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaguerreParams {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

impl Default for LaguerreParams {
    fn default() -> Self {
        LaguerreParams { alpha: 1.0, k: 20 }
    }
}

impl LaguerreParams {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        let p = LaguerreParams { alpha, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ScaleError::Config(format!("laguerre alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// `√(2α)`, the sup-norm bound of every basis function.
    pub fn norm(&self) -> f64 {
        (2.0 * self.alpha).sqrt()
    }

    pub fn len(&self) -> usize {
        self.k + 1
    }

    pub fn with_k(&self, k: usize) -> Self {
        LaguerreParams { k, ..*self }
    }
}

/// `L_k(x)` by the three-term recurrence.
pub fn laguerre_poly(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 - x) * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `φ_{α,k}(x)`.
pub fn laguerre_fn(params: &LaguerreParams, k: usize, x: f64) -> f64 {
    laguerre_fns_upto(params.alpha, k, x)[k]
}

/// `φ_{α,0}(x), …, φ_{α,K}(x)`.
pub fn laguerre_fns(params: &LaguerreParams, x: f64) -> Vec<f64> {
    laguerre_fns_upto(params.alpha, params.k, x)
}

/// The recurrence is run on `e^{−u/2} L_k(u)` directly so that neither factor
/// overflows for large arguments.
pub(crate) fn laguerre_fns_upto(alpha: f64, n: usize, x: f64) -> Vec<f64> {
    let u = 2.0 * alpha * x;
    let scale = (2.0 * alpha).sqrt();
    let mut out = Vec::with_capacity(n + 1);
    let e = (-0.5 * u).exp();
    let (mut prev, mut cur) = (e, (1.0 - u) * e);
    out.push(scale * prev);
    if n == 0 {
        return out;
    }
    out.push(scale * cur);
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 - u) * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
        out.push(scale * cur);
    }
    out
}

/// Point evaluation of the whole basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEvaluation {
    pub x: f64,
    pub values: Vec<f64>,
}

impl BasisEvaluation {
    pub fn new(params: &LaguerreParams, x: f64) -> Self {
        BasisEvaluation { x, values: laguerre_fns(params, x) }
    }
}

/// `Ψ_{α,k}(x; b)` for a single `k`.
pub fn psi_integral(params: &LaguerreParams, k: usize, x: f64, b: f64) -> f64 {
    psi_all(&params.with_k(k), x, b)[k]
}

/// `Ψ_{α,k}(x; b)` for `k = 0..=K`.
///
/// Uses the order recurrence
/// `(b+α) Ψ_k + φ_k = (b−α) Ψ_{k−1} + φ_{k−1}`,
/// which follows from `(s+α) Φ_k(s) = (s−α) Φ_{k−1}(s)` for the Laplace
/// transforms of the basis. Its growth factor is `r = (b−α)/(b+α)`; for
/// `b ≥ 0` (|r| ≤ 1) the recurrence runs upward from the closed-form `Ψ_0`,
/// otherwise downward from a zero seed far enough above `K` for the seed
/// error to decay below rounding. The downward form divides by `b − α` only,
/// so `b = −α` needs no special case.
pub fn psi_all<T: Real>(params: &LaguerreParams, x: f64, b: T) -> Vec<T> {
    let alpha = params.alpha;
    let kmax = params.k;
    let bv = b.value();
    let growth = ((bv - alpha) / (bv + alpha)).abs();
    let forward = bv >= 0.0 || (growth.is_finite() && growth.powi(kmax as i32) <= 1e3);
    if forward {
        let phi = laguerre_fns_upto(alpha, kmax, x);
        let bp = b + alpha;
        let bm = b - alpha;
        let mut out = Vec::with_capacity(kmax + 1);
        out.push(psi0(alpha, x, b));
        for k in 1..=kmax {
            let prev = out[k - 1];
            out.push((bm * prev + (phi[k - 1] - phi[k])) / bp);
        }
        out
    } else {
        let extra = if growth.is_finite() { (36.9 / growth.ln()).ceil() as usize + 2 } else { 1 };
        let top = kmax + extra;
        let phi = laguerre_fns_upto(alpha, top, x);
        let bp = b + alpha;
        let bm = b - alpha;
        let mut cur = T::cst(0.0);
        let mut out = vec![T::cst(0.0); kmax + 1];
        for k in (1..=top).rev() {
            cur = (bp * cur + (phi[k] - phi[k - 1])) / bm;
            if k - 1 <= kmax {
                out[k - 1] = cur;
            }
        }
        out
    }
}

/// `Ψ_{α,0}(x; b) = √(2α) e^{bx} (1 − e^{−(b+α)x})/(b+α)`.
fn psi0<T: Real>(alpha: f64, x: f64, b: T) -> T {
    let s = b + alpha;
    let scale = (2.0 * alpha).sqrt();
    if s.value() >= 0.0 {
        (b * x).exp() * exp_ratio(s, x) * scale
    } else {
        expm1_ratio(s * x) * ((-alpha * x).exp() * x * scale)
    }
}

/// `Σ_k coeffs[k] φ_{α,k}(x)`.
pub fn partial_sum(coeffs: &[f64], params: &LaguerreParams, x: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let phi = laguerre_fns_upto(params.alpha, coeffs.len() - 1, x);
    coeffs.iter().zip(&phi).map(|(a, p)| a * p).sum()
}

/// Projection `⟨f, φ_{α,k}⟩` of a gridded function with a tail estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub value: f64,
    /// `√(2α) · ∫_{x_max}^∞ |f|`, extrapolating the decay of the last samples.
    pub tail_bound: f64,
}

/// Composite Simpson projection of `f` sampled at `x_i = i·h`, `i = 0..n`.
pub fn project_grid(f: &[f64], h: f64, params: &LaguerreParams, k: usize) -> Projection {
    let all = project_grid_all(f, h, &params.with_k(k));
    Projection { value: all.values[k], tail_bound: all.tail_bound }
}

/// All projections `k = 0..=K` in one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub values: Vec<f64>,
    pub tail_bound: f64,
}

pub fn project_grid_all(f: &[f64], h: f64, params: &LaguerreParams) -> Projections {
    let n = f.len();
    let mut values = vec![0.0; params.len()];
    if n < 2 {
        return Projections { values, tail_bound: 0.0 };
    }
    let weights = simpson_weights(n, h);
    for (i, (&fi, &wi)) in f.iter().zip(&weights).enumerate() {
        if fi == 0.0 {
            continue;
        }
        let phi = laguerre_fns_upto(params.alpha, params.k, i as f64 * h);
        for (v, p) in values.iter_mut().zip(&phi) {
            *v += wi * fi * p;
        }
    }
    Projections { values, tail_bound: params.norm() * tail_estimate(f, h) }
}

/// Simpson weights on an even number of intervals; an odd count closes with
/// a trapezoid panel.
pub(crate) fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    for i in (0..even).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if even < intervals {
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    w
}

fn tail_estimate(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    let last = f[n - 1].abs();
    if last == 0.0 {
        return 0.0;
    }
    let m = (n / 10).max(1);
    let earlier = f[n - 1 - m].abs();
    if earlier > last {
        let rate = (earlier / last).ln() / (m as f64 * h);
        last / rate
    } else {
        last * (n - 1) as f64 * h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::Dual;
    use crate::quad::{integrate, CompositeRule, QuadOptions};

    fn binomial_sum(k: usize, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut binom = 1.0;
        let mut pow_fact = 1.0;
        for j in 0..=k {
            if j > 0 {
                binom *= (k - j + 1) as f64 / j as f64;
                pow_fact *= -x / j as f64;
            }
            sum += binom * pow_fact;
        }
        sum
    }

    #[test]
    fn polynomial_values() {
        assert_eq!(laguerre_poly(0, 17.0), 1.0);
        assert!((laguerre_poly(2, 2.0) + 1.0).abs() < 1e-15);
        assert!((laguerre_poly(10, 3.7) - binomial_sum(10, 3.7)).abs() < 1e-10);
    }

    #[test]
    fn functions_at_origin_and_bound() {
        let p = LaguerreParams::new(0.5, 30).unwrap();
        for v in laguerre_fns(&p, 0.0) {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let p = LaguerreParams::new(2.0, 64).unwrap();
        for x in [0.01, 1.0, 7.3, 50.0, 400.0, 2000.0] {
            for v in laguerre_fns(&p, x) {
                assert!(v.abs() <= 2.0 * (1.0 + 1e-12) && v.is_finite());
            }
        }
        assert!((laguerre_fn(&p, 7, 0.9) - 2.0 * laguerre_poly(7, 3.6) * (-1.8f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn orthonormality() {
        let alpha = 1.3;
        let p = LaguerreParams::new(alpha, 20).unwrap();
        let rule = CompositeRule::new(0.0, 60.0 / alpha, 120, 16);
        let mut gram = vec![vec![0.0; 21]; 21];
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let phi = laguerre_fns(&p, x);
            for j in 0..=20 {
                for k in 0..=20 {
                    gram[j][k] += w * phi[j] * phi[k];
                }
            }
        }
        for j in 0..=20 {
            for k in 0..=20 {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((gram[j][k] - target).abs() < 1e-8, "({j},{k}) {}", gram[j][k]);
            }
        }
    }

    fn psi_quadrature(p: &LaguerreParams, k: usize, x: f64, b: f64) -> f64 {
        integrate(|z| (b * (x - z)).exp() * laguerre_fn(p, k, z), 0.0, x, QuadOptions::tight()).value
    }

    #[test]
    fn psi_matches_quadrature() {
        let p = LaguerreParams::new(1.0, 5).unwrap();
        let v = psi_integral(&p, 5, 2.0, -0.3);
        assert!((v - psi_quadrature(&p, 5, 2.0, -0.3)).abs() < 1e-9);
        for alpha in [0.5, 1.0, 2.0] {
            let p = LaguerreParams::new(alpha, 40).unwrap();
            for b in [-5.0, -alpha - 1e-9, -alpha, -0.9 * alpha, -0.05, 0.0, 0.07, 1.4] {
                for x in [0.0, 0.3, 2.5, 9.0] {
                    let all = psi_all(&p, x, b);
                    for k in [0, 1, 7, 23, 40] {
                        let q = psi_quadrature(&p, k, x, b);
                        let scale = 1.0 + q.abs();
                        assert!((all[k] - q).abs() < 1e-9 * scale, "α={alpha} b={b} x={x} k={k}: {} vs {q}", all[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn psi_zero_closed_form() {
        let p = LaguerreParams::new(1.5, 3).unwrap();
        let (x, b) = (1.7, 0.4);
        let cf = p.norm() * ((b * x).exp() - (-1.5 * x).exp()) / (b + 1.5);
        assert!((psi_integral(&p, 0, x, b) - cf).abs() < 1e-14);
        assert_eq!(psi_all(&p, 0.0, -0.7), vec![0.0; 4]);
    }

    #[test]
    fn psi_satisfies_its_ode() {
        let p = LaguerreParams::new(1.0, 12).unwrap();
        let h = 1e-5;
        for b in [-2.0, -0.4, 0.3] {
            for x in [0.5, 3.0] {
                let up = psi_all(&p, x + h, b);
                let dn = psi_all(&p, x - h, b);
                let mid = psi_all(&p, x, b);
                let phi = laguerre_fns(&p, x);
                for k in 0..=12 {
                    let d = (up[k] - dn[k]) / (2.0 * h);
                    assert!((d - (b * mid[k] + phi[k])).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn psi_dual_derivative() {
        let p = LaguerreParams::new(1.0, 15).unwrap();
        for b in [-1.3, -0.2, 0.4] {
            let d = psi_all(&p, 2.2, Dual::var(b));
            let h = 1e-6;
            let up = psi_all(&p, 2.2, b + h);
            let dn = psi_all(&p, 2.2, b - h);
            for k in 0..=15 {
                assert!((d[k].v - psi_all(&p, 2.2, b)[k]).abs() < 1e-13, "b={b} k={k} {} {}", d[k].v, psi_all(&p, 2.2, b)[k]);
                assert!((d[k].d - (up[k] - dn[k]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn partial_sums_and_projection() {
        let p = LaguerreParams::new(1.0, 20).unwrap();
        let mut e3 = vec![0.0; 21];
        e3[3] = 1.0;
        assert_eq!(partial_sum(&e3, &p, 1.1), laguerre_fn(&p, 3, 1.1));
        assert_eq!(partial_sum(&[0.0; 21], &p, 1.1), 0.0);

        let h = 1e-3;
        let xs: Vec<f64> = (0..=60_000).map(|i| i as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|&x| (-x).exp()).collect();
        let proj = project_grid_all(&f, h, &p);
        assert!((proj.values[0] - 2f64.sqrt() / 2.0).abs() < 1e-10);
        let err = (0..=1000)
            .map(|i| {
                let x = i as f64 * 0.01;
                (partial_sum(&proj.values, &p, x) - (-x).exp()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");

        let phi3: Vec<f64> = xs.iter().map(|&x| laguerre_fn(&p, 3, x)).collect();
        let proj = project_grid_all(&phi3, h, &p);
        for (k, v) in proj.values.iter().enumerate() {
            let target = if k == 3 { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-6);
        }
        assert_eq!(project_grid(&vec![0.0; 100], 0.1, &p, 4).value, 0.0);
    }
}
