//! Adaptive Gauss–Kronrod quadrature (21-point rule) for scalar and vector
//! integrands, plus fixed Gauss–Legendre rules for composite panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Result, ScaleError};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_067_952_260,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights at XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and subdivision budget.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-8, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn tight() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-11, max_intervals: 5000 }
    }
}

/// Value and error estimate of an integral.
#[derive(Debug, Clone)]
pub struct QuadResult<V> {
    pub value: V,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F>(f: &mut F, a: f64, b: f64, dim: usize) -> (Vec<f64>, f64)
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    let mut buf2 = vec![0.0; dim];

    f(center, &mut buf);
    for i in 0..dim {
        kron[i] = WGK[10] * buf[i];
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        f(center - dx, &mut buf);
        f(center + dx, &mut buf2);
        for i in 0..dim {
            let s = buf[i] + buf2[i];
            kron[i] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..dim {
        kron[i] *= half;
        gauss[i] *= half;
        err = err.max((kron[i] - gauss[i]).abs());
    }
    (kron, err)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Integrates a vector-valued `f` over `[a, b]`; `f(x, out)` writes `dim`
/// components. Error control is in the max-norm.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, dim: usize, opts: QuadOptions) -> QuadResult<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    if a == b {
        return QuadResult { value: vec![0.0; dim], error: 0.0, intervals: 0, converged: true };
    }
    let (v, e) = gk21(&mut f, a, b, dim);
    let mut total = v.clone();
    let mut total_err = e;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut intervals = 1;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * norm_inf(&total));
        if total_err <= tol {
            break;
        }
        if intervals >= opts.max_intervals {
            let value = heap.iter().fold(vec![0.0; dim], |mut acc, s| {
                acc.iter_mut().zip(&s.value).for_each(|(x, y)| *x += y);
                acc
            });
            return QuadResult { value, error: total_err, intervals, converged: false };
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in floating point
            heap.push(worst);
            let value = heap.iter().fold(vec![0.0; dim], |mut acc, s| {
                acc.iter_mut().zip(&s.value).for_each(|(x, y)| *x += y);
                acc
            });
            return QuadResult { value, error: total_err, intervals, converged: false };
        }
        let (vl, el) = gk21(&mut f, worst.a, mid, dim);
        let (vr, er) = gk21(&mut f, mid, worst.b, dim);
        for i in 0..dim {
            total[i] += vl[i] + vr[i] - worst.value[i];
        }
        total_err += el + er - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: vl, error: el });
        heap.push(Segment { a: mid, b: worst.b, value: vr, error: er });
        intervals += 1;
    }
    // re-sum to shed accumulated update error
    let value = heap.iter().fold(vec![0.0; dim], |mut acc, s| {
        acc.iter_mut().zip(&s.value).for_each(|(x, y)| *x += y);
        acc
    });
    let error = heap.iter().map(|s| s.error).sum();
    QuadResult { value, error, intervals, converged: true }
}

/// Scalar adaptive integral over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> QuadResult<f64>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out| out[0] = f(x), a, b, 1, opts);
    QuadResult { value: r.value[0], error: r.error, intervals: r.intervals, converged: r.converged }
}

/// Vector integral over `[a, ∞)` through `x = a + t / (1 - t)`.
pub fn integrate_vec_semi_infinite<F>(mut f: F, a: f64, dim: usize, opts: QuadOptions) -> QuadResult<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    integrate_vec(
        |t, out| {
            let s = 1.0 - t;
            let x = a + t / s;
            f(x, out);
            let jac = 1.0 / (s * s);
            for o in out.iter_mut() {
                // integrands decay; a non-finite product at t → 1 carries no mass
                let v = *o * jac;
                *o = if v.is_finite() { v } else { 0.0 };
            }
        },
        0.0,
        1.0,
        dim,
        opts,
    )
}

/// Scalar integral over `[a, ∞)`.
pub fn integrate_semi_infinite<F>(mut f: F, a: f64, opts: QuadOptions) -> QuadResult<f64>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec_semi_infinite(|x, out| out[0] = f(x), a, 1, opts);
    QuadResult { value: r.value[0], error: r.error, intervals: r.intervals, converged: r.converged }
}

impl<V> QuadResult<V> {
    /// Converts a non-converged result into [`ScaleError::NumericalFailure`].
    pub fn strict(self, context: &str) -> Result<V> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(ScaleError::NumericalFailure { context: context.to_string(), residual: self.error })
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule: `panels` equal panels on `[a, b]`, `order`
/// nodes each.
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        CompositeRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
