//! Quadrature primitives shared by the response, storage, retrieval and
//! transducer modules.
//!
//! * [`adaptive`]: globally adaptive 21-point Gauss-Kronrod on complex
//!   integrands, with user breakpoints.
//! * [`pole_integral`] / [`pole_integral_fn`] / [`pole_integral_linear`]:
//!   integrals of the form `∫ g(x) / (κ + iσ(x − x0)) dx` where `κ` may be
//!   many orders of magnitude below the scale of `g`. The pole part is
//!   removed analytically to second order.
//! * [`GaussPanels`]: composite Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
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
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-7,
            abs: 1e-14,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn with_rel(rel: f64) -> Self {
        Tolerance {
            rel,
            ..Self::default()
        }
    }
}

/// Integral value together with its error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: C64,
    pub error: f64,
}

fn gk21<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = C64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let err = ((kron - gauss) * h).norm();
    (kron * h, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Breakpoints strictly inside `(a, b)` seed the initial partition.
pub fn adaptive<F: Fn(f64) -> C64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(Estimate {
            value: C64::new(0.0, 0.0),
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = gk21(&f, w[0], w[1]);
        total += v;
        err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(Error::numeric("non-finite integrand", f64::INFINITY));
        }
        if err <= tol.abs.max(tol.rel * total.norm()) {
            return Ok(Estimate {
                value: total * sign,
                error: err,
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::numeric(
                format!("adaptive quadrature did not converge on [{lo}, {hi}]"),
                err,
            ));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::numeric(
                "interval underflow in adaptive quadrature",
                err,
            ));
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// `ln(1 + w)` with a short series near zero.
fn ln_1p(w: C64) -> C64 {
    if w.norm() < 1e-4 {
        w - w * w / 2.0 + w * w * w / 3.0
    } else {
        (C64::new(1.0, 0.0) + w).ln()
    }
}

/// `∫_{ya}^{yb} dy / (κ + iσy)` for `κ > 0`.
pub fn pole_log(kappa: f64, sigma: f64, ya: f64, yb: f64) -> C64 {
    let za = C64::new(kappa, sigma * ya);
    let w = C64::new(0.0, sigma * (yb - ya)) / za;
    C64::new(0.0, -sigma) * ln_1p(w)
}

/// `∫_{ya}^{yb} (p + q·y) / (κ + iσy) dy`.
fn linear_over_pole(p: C64, q: C64, kappa: f64, sigma: f64, ya: f64, yb: f64) -> C64 {
    let l0 = pole_log(kappa, sigma, ya, yb);
    p * l0 + q * C64::new(0.0, -sigma) * ((yb - ya) - kappa * l0)
}

/// Exact `∫ g(x) / (κ + iσ(x − x0)) dx` for piecewise-linear `g` sampled at
/// ascending abscissae `xs`.
pub fn pole_integral_linear(xs: &[f64], gs: &[C64], x0: f64, kappa: f64, sigma: f64) -> C64 {
    debug_assert_eq!(xs.len(), gs.len());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..xs.len().saturating_sub(1) {
        let (xa, xb) = (xs[i], xs[i + 1]);
        if xb <= xa {
            continue;
        }
        let beta = (gs[i + 1] - gs[i]) / (xb - xa);
        let p = gs[i] + beta * (x0 - xa);
        acc += linear_over_pole(p, beta, kappa, sigma, xa - x0, xb - x0);
    }
    acc
}

/// `∫_a^b g(x) / (κ + iσ(x − x0)) dx` for a smooth callable `g`.
///
/// When `x0` lies inside `[a, b]` the constant and linear Taylor terms of `g`
/// at `x0` are integrated in closed form and only the bounded remainder goes
/// to [`adaptive`].
#[allow(clippy::too_many_arguments)]
pub fn pole_integral_fn<G: Fn(f64) -> C64>(
    g: G,
    a: f64,
    b: f64,
    x0: f64,
    kappa: f64,
    sigma: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    let mut br: Vec<f64> = breaks.to_vec();
    if x0 > a && x0 < b {
        let span = b - a;
        let h = (1e-4 * span)
            .min(0.25 * (x0 - a))
            .min(0.25 * (b - x0))
            .max(1e-9 * span);
        let g0 = g(x0);
        let g1 = (g(x0 + h) - g(x0 - h)) / (2.0 * h);
        let head = linear_over_pole(g0, g1, kappa, sigma, a - x0, b - x0);
        br.push(x0);
        let rest = adaptive(
            |x| {
                let y = x - x0;
                (g(x) - g0 - g1 * y) / C64::new(kappa, sigma * y)
            },
            a,
            b,
            &br,
            Tolerance {
                abs: tol.abs.max(tol.rel * head.norm()),
                ..tol
            },
        )?;
        Ok(Estimate {
            value: head + rest.value,
            error: rest.error,
        })
    } else {
        adaptive(|x| g(x) / C64::new(kappa, sigma * (x - x0)), a, b, &br, tol)
    }
}

/// Trapezoid-based second-order pole subtraction on a uniform sample grid.
///
/// Computes `∫ g(x) / (κ + iσ(x − x0)) dx` over `[xs[0], xs[n-1]]` from
/// samples `gs`, with `g(x0)` and `g'(x0)` obtained by cubic interpolation.
/// Accurate when `g` is resolved by the grid even if `κ` is not.
pub fn pole_integral(xs: &[f64], gs: &[C64], x0: f64, kappa: f64, sigma: f64) -> C64 {
    let n = xs.len();
    if n < 2 {
        return C64::new(0.0, 0.0);
    }
    let (a, b) = (xs[0], xs[n - 1]);
    let (g0, g1) = if x0 >= a && x0 <= b {
        interp_with_slope(xs, gs, x0)
    } else {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    };
    let head = linear_over_pole(g0, g1, kappa, sigma, a - x0, b - x0);
    let mut acc = C64::new(0.0, 0.0);
    let mut prev = None;
    for i in 0..n {
        let y = xs[i] - x0;
        let r = (gs[i] - g0 - g1 * y) / C64::new(kappa, sigma * y);
        if let Some((xp, rp)) = prev {
            acc += (r + rp) * (0.5 * (xs[i] - xp));
        }
        prev = Some((xs[i], r));
    }
    head + acc
}

/// Cubic (Catmull-Rom style four-point Lagrange) interpolation of value and
/// slope of uniformly or non-uniformly sampled complex data.
pub fn interp_with_slope(xs: &[f64], gs: &[C64], x: f64) -> (C64, C64) {
    let n = xs.len();
    if n == 1 {
        return (gs[0], C64::new(0.0, 0.0));
    }
    let i = match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    if n < 4 {
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        let s = (gs[i + 1] - gs[i]) / (xs[i + 1] - xs[i]);
        return (gs[i] + (gs[i + 1] - gs[i]) * t, s);
    }
    let lo = i.saturating_sub(1).min(n - 4);
    let px = &xs[lo..lo + 4];
    let py = &gs[lo..lo + 4];
    let mut val = C64::new(0.0, 0.0);
    let mut der = C64::new(0.0, 0.0);
    for j in 0..4 {
        let mut l = 1.0;
        let mut dl = 0.0;
        for m in 0..4 {
            if m == j {
                continue;
            }
            let den = px[j] - px[m];
            let mut prod = 1.0 / den;
            for q in 0..4 {
                if q != j && q != m {
                    prod *= (x - px[q]) / (px[j] - px[q]);
                }
            }
            dl += prod;
            l *= (x - px[m]) / den;
        }
        val += py[j] * l;
        der += py[j] * dl;
    }
    (val, der)
}

/// Cubic interpolation of complex samples; zero outside the sampled range.
pub fn interp(xs: &[f64], gs: &[C64], x: f64) -> C64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return C64::new(0.0, 0.0);
    }
    interp_with_slope(xs, gs, x).0
}

/// Trapezoid rule over samples with arbitrary spacing.
pub fn trapezoid<T>(xs: &[f64], ys: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let mut acc = T::default();
    for i in 1..xs.len().min(ys.len()) {
        acc = acc + (ys[i] + ys[i - 1]) * (0.5 * (xs[i] - xs[i - 1]));
    }
    acc
}

/// Composite Gauss-Legendre rule over `[a, b]`.
#[derive(Debug, Clone)]
pub struct GaussPanels {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussPanels {
    pub fn new(a: f64, b: f64, panels: usize, order: usize) -> Self {
        let panels = panels.max(1);
        let order = NonZeroUsize::new(order.max(1)).expect("nonzero");
        let rule = gauss_quad::GaussLegendre::new(order);
        let pairs = rule.as_node_weight_pairs();
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * pairs.len());
        let mut weights = Vec::with_capacity(panels * pairs.len());
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for &(x, w) in pairs {
                nodes.push(lo + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        GaussPanels { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> C64>(&self, f: F) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }
}

/// `(1 − e^{−x}) / x`, continuous through `x = 0`.
pub fn phi1(x: C64) -> C64 {
    if x.norm() < 1e-3 {
        C64::new(1.0, 0.0) - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        (C64::new(1.0, 0.0) - (-x).exp()) / x
    }
}

/// Gauss-Hermite nodes and weights for weight `e^{−x²}`, ascending.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_quad::GaussHermite::new(NonZeroUsize::new(n.max(1)).expect("nonzero"));
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
