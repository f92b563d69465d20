//! Globally adaptive Gauss–Kronrod (10/21) quadrature with compensated
//! accumulation.
//!
//! Every integrand in this crate is smooth on panels but lives on several
//! scales at once (bubble core, bump annulus, cutoff ring). Callers hand in
//! breakpoints at those scales; the driver then bisects whichever subinterval
//! currently carries the largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Tabulated beyond f64 precision.
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
    0.123_491_976_262_065_851_077_208_093_269_403,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Weights of the embedded 10-point Gauss rule (nodes `XGK[1]`, `XGK[3]`, ...).
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// How the acceptance threshold of an integral is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorScale {
    /// `error <= max(abs_tol, rel_tol * |value|)`
    Value,
    /// `error <= max(abs_tol, rel_tol * integral of |f|)`; for integrands
    /// whose value may cancel to zero.
    Mass,
}

/// Tolerances for one adaptive integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
    pub scale: ErrorScale,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 0.0, max_intervals: 20_000, scale: ErrorScale::Value }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn mass_relative(mut self) -> Self {
        self.scale = ErrorScale::Mass;
        self
    }
}

/// Result of an accepted integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// Integral of `|f|`, useful to judge cancellation.
    pub mass: f64,
    pub evaluations: usize,
}

/// Neumaier (improved Kahan) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of a sequence.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    mass: f64,
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

/// One 21-point Kronrod evaluation with the QUADPACK error heuristic.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resabs = resk.abs();
    let mut resg = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = half.abs();
    let value = resk * half;
    resabs *= hl;
    resasc *= hl;
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Piece { a, b, value, error, mass: resabs }
}

fn threshold(spec: &QuadratureSpec, value: f64, mass: f64) -> f64 {
    let reference = match spec.scale {
        ErrorScale::Value => value.abs(),
        ErrorScale::Mass => mass,
    };
    spec.abs_tol.max(spec.rel_tol * reference)
}

/// Integrate `f` over `[breaks[0], breaks[last]]`, starting from the panels
/// delimited by `breaks`. Breakpoints are sorted and deduplicated first.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], spec: &QuadratureSpec) -> Result<Estimate> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(Estimate { value: 0.0, error: 0.0, mass: 0.0, evaluations: 0 });
    }
    let mut heap = BinaryHeap::new();
    let mut finished: Vec<Piece> = Vec::new();
    let mut evaluations = 0usize;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut mass = 0.0;
    for w in pts.windows(2) {
        let p = kronrod21(&f, w[0], w[1]);
        evaluations += 21;
        value += p.value;
        error += p.error;
        mass += p.mass;
        heap.push(p);
    }
    let mut intervals = heap.len();
    while error > threshold(spec, value, mass) {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        // Interval can no longer be split in floating point.
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 4.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
            finished.push(worst);
            if heap.is_empty() {
                break;
            }
            continue;
        }
        if intervals >= spec.max_intervals {
            heap.push(worst);
            break;
        }
        let l = kronrod21(&f, worst.a, mid);
        let r = kronrod21(&f, mid, worst.b);
        evaluations += 42;
        intervals += 1;
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        mass += l.mass + r.mass - worst.mass;
        heap.push(l);
        heap.push(r);
    }
    let all: Vec<Piece> = heap.into_iter().chain(finished).collect();
    let value = neumaier_sum(all.iter().map(|p| p.value));
    let error = neumaier_sum(all.iter().map(|p| p.error));
    let mass = neumaier_sum(all.iter().map(|p| p.mass));
    if !value.is_finite() {
        return Err(Error::Quadrature { value, error, intervals });
    }
    if error > threshold(spec, value, mass) {
        return Err(Error::Quadrature { value, error, intervals });
    }
    Ok(Estimate { value, error, mass, evaluations })
}

/// Integrate `f` over `[a, ∞)` through the substitution `x = a + u/(1-u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - u;
        let v = f(a + u / om) / (om * om);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    // Panels cluster towards u = 1, where decay scales pile up.
    let breaks = [0.0, 0.5, 0.75, 0.875, 0.9375, 0.96875, 0.984375, 1.0];
    integrate(g, &breaks, spec)
}

/// Geometric breakpoints `lo, 2 lo, 4 lo, ...` up to `hi`, together with
/// `0` and `hi`.
pub fn dyadic_breaks(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    if lo > 0.0 && hi > lo {
        let mut x = lo;
        while x < hi {
            out.push(x);
            x *= 2.0;
        }
    }
    out.push(hi);
    out
}

/// Nested integral `∫ dr ∫_0^π dφ g(r, φ)`, the inner integral computed for
/// each outer node with a mass-relative tolerance ten times tighter than the
/// outer one, floored by the outer absolute tolerance per unit length.
/// `inner_breaks(r)` supplies the angular panels.
pub fn integrate_nested<G, B>(g: G, outer_breaks: &[f64], inner_breaks: B, spec: &QuadratureSpec) -> Result<Estimate>
where
    G: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let failure = std::cell::Cell::new(None);
    let inner_spec = QuadratureSpec { rel_tol: 0.1 * spec.rel_tol, abs_tol: 0.0, scale: ErrorScale::Mass, ..*spec };
    let inner = |r: f64, s: &QuadratureSpec| match integrate(|phi| g(r, phi), &inner_breaks(r), s) {
        Ok(e) => e,
        Err(err) => {
            let first = failure.take();
            failure.set(first.or(Some(err)));
            Estimate { value: 0.0, error: 0.0, mass: 0.0, evaluations: 0 }
        }
    };
    let outer_spec = match spec.scale {
        ErrorScale::Value => *spec,
        ErrorScale::Mass => {
            // The outer integrand may cancel after the inner integral, so its
            // scale is taken from the total mass of |g| found by a coarse pass.
            let coarse = QuadratureSpec { rel_tol: 1e-4, abs_tol: 0.0, scale: ErrorScale::Value, ..*spec };
            let inner_coarse = QuadratureSpec { rel_tol: 1e-5, ..inner_spec };
            let mass = integrate(|r| inner(r, &inner_coarse).mass, outer_breaks, &coarse)?.value;
            QuadratureSpec { abs_tol: spec.abs_tol.max(spec.rel_tol * mass), scale: ErrorScale::Value, ..*spec }
        }
    };
    // Inner errors only need to be small against the outer tolerance spread
    // over the outer range; this stops negligible slices from chasing a
    // relative target.
    let span = outer_breaks.iter().copied().fold(f64::NEG_INFINITY, f64::max) - outer_breaks.iter().copied().fold(f64::INFINITY, f64::min);
    let inner_spec = if span > 0.0 && span.is_finite() {
        QuadratureSpec { abs_tol: 0.01 * outer_spec.abs_tol / span, ..inner_spec }
    } else {
        inner_spec
    };
    let est = integrate(|r| inner(r, &inner_spec).value, outer_breaks, &outer_spec)?;
    match failure.into_inner() {
        Some(err) => Err(err),
        None => Ok(est),
    }
}
