//! The energy functional `J`, the scalar product `⟨·,·⟩_h`, the reduced
//! energy `I_k(t, p) = J(u₀ + W)` with its `I₁, I₂, I₃` decomposition, the
//! residual of the ansatz and the check of the reduced-energy expansion.
//!
//! Integrals around a bubble use the stereographic chart of its center `y`,
//! in which `dv_g = (1 + s²/4)^{-n} dx`. By conformal covariance of the
//! conformal Laplacian, `∫(|∇W|² + c_n S_g W²) dv_g = ∫_{R^n} |∇(χU)|² dx`,
//! so the leading bubble energy is a flat radial integral. Coefficient
//! perturbations enter only through their deviations from the unperturbed
//! values, which keeps the `O(ε)` part of the energy free of cancellation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialField;
use crate::model::{sphere_area, Branch, ModelConfig};
use crate::profiles::{chart_angle, BubbleParams, BubbleProfile, CoefficientValues, LocalCoefficients};
use crate::quadrature::{dyadic_breaks, integrate, integrate_nested, integrate_to_infinity, QuadratureSpec};
use crate::reduced::ReducedEnergySpec;

/// `(1 + x)^p` minus its Taylor polynomial of degree `order` at `x = 0`.
pub fn pow_excess(x: f64, p: f64, order: usize) -> f64 {
    if x.abs() < 0.25 {
        let mut c = 1.0;
        for k in 1..=order {
            c *= (p - (k as f64 - 1.0)) / k as f64;
        }
        let mut term = c * x.powi(order as i32);
        let mut sum = 0.0;
        for k in order + 1..400 {
            term *= (p - (k as f64 - 1.0)) / k as f64 * x;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    let mut poly = 1.0;
    let mut c = 1.0;
    let mut xp = 1.0;
    for k in 1..=order {
        c *= (p - (k as f64 - 1.0)) / k as f64;
        xp *= x;
        poly += c * xp;
    }
    (p * x.ln_1p()).exp() - poly
}

/// Coefficients sampled at the nodes of a grid, for a bump centred at the
/// pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSamples {
    pub h: Vec<f64>,
    pub f: Vec<f64>,
    pub pi_sq: Vec<f64>,
}

impl CoefficientSamples {
    pub fn from_local(lc: &LocalCoefficients, thetas: &[f64]) -> Self {
        let vals: Vec<CoefficientValues> = thetas.iter().map(|&t| lc.at_radius(2.0 * (0.5 * t).tan())).collect();
        Self { h: vals.iter().map(|c| c.h).collect(), f: vals.iter().map(|c| c.f).collect(), pi_sq: vals.iter().map(|c| c.pi_sq).collect() }
    }

    /// The unperturbed coefficients.
    pub fn base(cfg: &ModelConfig, len: usize) -> Self {
        let (h, pi_sq) = match &cfg.n6 {
            Some(d) if cfg.dims.n == 6 => (d.h0(), d.a0),
            _ => (cfg.base.cn_sg, cfg.base.pi_zero_sq),
        };
        Self { h: vec![h; len], f: vec![1.0; len], pi_sq: vec![pi_sq; len] }
    }
}

/// `⟨u, v⟩_h = ∫(⟨∇u, ∇v⟩ + h u v) dv_g` on a grid.
pub fn inner_h(u: &RadialField, v: &RadialField, coeffs: &CoefficientSamples) -> Result<f64> {
    if !u.compatible(v) || coeffs.h.len() != u.values.len() {
        return Err(Error::IncompatibleGrids);
    }
    let mass = crate::quadrature::neumaier_sum(
        u.values.iter().zip(&v.values).zip(&u.grid.volumes).zip(&coeffs.h).map(|(((a, b), w), h)| h * a * b * w),
    );
    Ok(u.dot_gradient(v)? + mass)
}

/// `J(u)` on a grid, with `(u⁺)^{2*}` in the focusing term and `η_ε(u)` in
/// the negative power.
pub fn energy_j(cfg: &ModelConfig, u: &RadialField, coeffs: &CoefficientSamples) -> Result<f64> {
    if coeffs.h.len() != u.values.len() {
        return Err(Error::IncompatibleGrids);
    }
    let ts = cfg.dims.two_star;
    let eps = cfg.base.epsilon_trunc;
    let mut terms = Vec::with_capacity(u.values.len());
    for (i, &x) in u.values.iter().enumerate() {
        let eta = crate::model::eta_truncate(eps, x)?;
        let d = 0.5 * coeffs.h[i] * x * x - coeffs.f[i] * x.max(0.0).powf(ts) / ts + coeffs.pi_sq[i] * eta.powf(-ts) / ts;
        terms.push(d * u.grid.volumes[i]);
    }
    Ok(0.5 * u.dot_gradient(u)? + crate::quadrature::neumaier_sum(terms))
}

/// Geometry of one bubble together with the coefficients around it.
#[derive(Clone, Debug)]
struct Setup {
    n: u32,
    nf: f64,
    ts: f64,
    cn_sg: f64,
    u0: f64,
    /// Degree of the Taylor polynomial removed from the focusing term.
    order: usize,
    lc: LocalCoefficients,
    base: CoefficientValues,
    prof: BubbleProfile,
    /// Geodesic angle from the bubble center to the bump center.
    theta0: f64,
    omega_nm1: f64,
    omega_nm2: f64,
    spec: QuadratureSpec,
    eps_trunc: f64,
}

impl Setup {
    fn new(cfg: &ModelConfig, bp: &BubbleParams) -> Result<Self> {
        let lc = LocalCoefficients::unchecked(cfg, bp.epsilon, bp.mu)?;
        let base = lc.base();
        let order = if lc.quadratic_shift() != 0.0 { 2 } else { 1 };
        Ok(Self {
            n: cfg.dims.n,
            nf: cfg.dims.nf(),
            ts: cfg.dims.two_star,
            cn_sg: cfg.base.cn_sg,
            u0: lc.u0(),
            order,
            base,
            prof: bp.profile(cfg.dims.n),
            theta0: chart_angle(bp.mu * bp.p_norm()),
            lc,
            omega_nm1: cfg.dims.omega_n_minus_1,
            omega_nm2: sphere_area(cfg.dims.n - 2),
            spec: cfg.quadrature,
            eps_trunc: cfg.base.epsilon_trunc,
        })
    }

    fn radial(&self) -> bool {
        self.theta0 == 0.0
    }

    /// `dv_g / (ω_{n-1} ds)` in the chart of the bubble center.
    fn density(&self, s: f64) -> f64 {
        s.powf(self.nf - 1.0) * (1.0 + 0.25 * s * s).powf(-self.nf)
    }

    /// `(u₀+W)^{2*} - u₀^{2*} - ...` to the configured Taylor order.
    fn focusing_excess(&self, w: f64, order: usize) -> f64 {
        self.u0.powf(self.ts) * pow_excess(w / self.u0, self.ts, order)
    }

    /// `(u₀+W)^{2*} - W^{2*} - u₀^{2*} - 2* u₀^{2*-1} W`.
    fn interaction(&self, w: f64) -> f64 {
        let (u0, ts) = (self.u0, self.ts);
        if w > u0 {
            w.powf(ts) * pow_excess(u0 / w, ts, 1) + ts * u0 * w.powf(ts - 1.0) - u0.powf(ts) - ts * u0.powf(ts - 1.0) * w
        } else {
            u0.powf(ts) * pow_excess(w / u0, ts, 1) - w.powf(ts)
        }
    }

    fn negative_excess(&self, w: f64) -> f64 {
        self.u0.powf(-self.ts) * pow_excess(w / self.u0, -self.ts, 1)
    }

    /// Chart distance from the bump center at bubble-chart polar position
    /// `(s, φ)`, `φ` measured from the direction of the bump center.
    fn sigma(&self, s: f64, phi: f64) -> f64 {
        if self.radial() {
            return s;
        }
        let th = chart_angle(s);
        let t0 = self.theta0;
        let (sp, cp) = phi.sin_cos();
        let a = -2.0 * (0.5 * (th + t0)).sin() * (0.5 * (th - t0)).sin();
        let b = th.sin() * cp - t0.sin();
        let c = th.sin() * sp;
        let chord2 = a * a + b * b + c * c;
        (chord2 / (1.0 - 0.25 * chord2).max(f64::MIN_POSITIVE)).sqrt()
    }

    /// Angle `φ` at which `σ(s, φ) = target`, clamped to `[0, π]`.
    fn phi_at(&self, s: f64, target: f64) -> f64 {
        let th = chart_angle(s);
        let tt = chart_angle(target);
        let t0 = self.theta0;
        let c = (tt.cos() - th.cos() * t0.cos()) / (th.sin() * t0.sin());
        c.clamp(-1.0, 1.0).acos()
    }

    fn bubble_breaks(&self) -> Vec<f64> {
        let d = self.prof.delta;
        let r = self.prof.r;
        let mut b = dyadic_breaks(0.125 * d, 2.0 * r);
        b.extend([d.sqrt(), r, 2.0 * r]);
        b.retain(|&x| x <= 2.0 * r);
        b
    }

    /// Outer breakpoints for integrals supported where the coefficients are
    /// perturbed.
    fn bump_breaks(&self) -> Vec<f64> {
        let feats = self.lc.feature_radii();
        let smax_angle = chart_angle(self.lc.support_radius()) + self.theta0;
        let smax = if smax_angle >= PI { f64::INFINITY } else { 2.0 * (0.5 * smax_angle).tan() };
        let hi = smax.min(2.0 * self.prof.r);
        let mut b = self.bubble_breaks();
        for f in feats {
            let ang = chart_angle(f);
            for a in [ang + self.theta0, (ang - self.theta0).abs()] {
                if a < PI {
                    b.push(2.0 * (0.5 * a).tan());
                }
            }
        }
        if !self.radial() {
            b.push(2.0 * (0.5 * self.theta0).tan());
        }
        b.push(hi);
        b.retain(|&x| x <= hi);
        b
    }

    fn inner_bump_breaks(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        let sup = self.lc.support_radius();
        let phi_max = self.phi_at(s, sup);
        for f in self.lc.feature_radii() {
            let p = self.phi_at(s, f);
            if p > 0.0 && p < phi_max {
                out.push(p);
            }
        }
        out.push(0.5 * phi_max);
        out.push(phi_max);
        out
    }

    /// `∫ g(s, σ, cos φ) dv_g` over the perturbation support, where the
    /// integrand vanishes outside of it.
    fn bump_integral<G: Fn(f64, f64, f64) -> f64 + Sync>(&self, g: G, spec: &QuadratureSpec) -> Result<f64> {
        let breaks = self.bump_breaks();
        if self.radial() {
            let est = integrate(|s| g(s, s, 1.0) * self.density(s), &breaks, spec)?;
            return Ok(self.omega_nm1 * est.value);
        }
        let h = |s: f64, phi: f64| {
            let (sp, cp) = phi.sin_cos();
            g(s, self.sigma(s, phi), cp) * self.density(s) * sp.powf(self.nf - 2.0)
        };
        let est = integrate_nested(h, &breaks, |s| self.inner_bump_breaks(s), spec)?;
        Ok(self.omega_nm2 * est.value)
    }

    fn base_spec(&self) -> QuadratureSpec {
        QuadratureSpec { rel_tol: self.spec.rel_tol.min(1e-12), ..self.spec }
    }

    fn bump_spec(&self) -> QuadratureSpec {
        QuadratureSpec { rel_tol: self.spec.rel_tol.max(1e-11), ..self.spec }.mass_relative()
    }
}

/// Terms of the reduced energy `I_k(t, p) = J(u₀ + W)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub j_base: f64,
    /// `J(u₀) + I₁ + I₂ - I₃`.
    pub j_total: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    /// `J(u₀ + W) - J(u₀) - K_n^{-n}/n`, assembled without cancellation
    /// between the `O(1)` and `O(ε)` parts.
    pub excess: f64,
    /// Conservative absolute error bound on `excess`.
    pub excess_error: f64,
    /// `‖R‖²` in `L^{2n/(n+2)}`.
    pub resid_norm_sq: f64,
    /// Size of the remainder class `δ^{(n+2)/2} + α_{n,k} + ε² + (δ/r)^{n-2}`
    /// with unit constants.
    pub alpha_bound: f64,
    /// Whether `f > 0` and `π² > 0` hold for these coefficients.
    pub admissible: bool,
}

/// `J(u₀)` for the perturbed coefficients, radially about the bump center.
fn j_base(st: &Setup) -> Result<f64> {
    let u0 = st.u0;
    let ts = st.ts;
    let density = |c: &CoefficientValues| 0.5 * c.h * u0 * u0 - c.f * u0.powf(ts) / ts + c.pi_sq * u0.powf(-ts) / ts;
    let reference = density(&st.base);
    let g = |s: f64| {
        let c = st.lc.at_radius(s);
        let d = 0.5 * c.h_excess * u0 * u0 - c.f_excess * u0.powf(ts) / ts + c.pi_sq_excess * u0.powf(-ts) / ts;
        d * st.density(s)
    };
    let mut breaks = vec![0.0];
    breaks.extend(st.lc.feature_radii());
    let pert = integrate(g, &breaks, &st.bump_spec())?;
    Ok(reference * sphere_area(st.n) + st.omega_nm1 * pert.value)
}

pub fn reduced_energy_ik(cfg: &ModelConfig, bp: &BubbleParams) -> Result<EnergyBreakdown> {
    let st = Setup::new(cfg, bp)?;
    let spec = st.base_spec();
    let bspec = st.bump_spec();
    let breaks = st.bubble_breaks();
    let w = st.omega_nm1;
    let prof = st.prof;
    let radial = |g: &(dyn Fn(f64) -> f64 + Sync)| integrate(g, &breaks, &spec);
    let gflat = radial(&|s: f64| {
        let d = prof.chi_u(s).1;
        d * d * s.powf(st.nf - 1.0)
    })?;
    let w2 = radial(&|s: f64| prof.w(s).powi(2) * st.density(s))?;
    let gp_full = radial(&|s: f64| st.focusing_excess(prof.w(s), 1) * st.density(s))?;
    let gm = radial(&|s: f64| st.negative_excess(prof.w(s)) * st.density(s))?;
    let p_h = st.bump_integral(
        |s, sigma, _| {
            let c = st.lc.at_radius(sigma);
            c.h_excess * prof.w(s).powi(2)
        },
        &bspec,
    )?;
    let p_f = st.bump_integral(
        |s, sigma, _| {
            let c = st.lc.at_radius(sigma);
            c.f_excess * st.focusing_excess(prof.w(s), 1)
        },
        &bspec,
    )?;
    let p_pi = st.bump_integral(
        |s, sigma, _| {
            let c = st.lc.at_radius(sigma);
            c.pi_sq_excess * st.negative_excess(prof.w(s))
        },
        &bspec,
    )?;
    let g_flat = 0.5 * w * gflat.value;
    let ts = st.ts;
    let pi_b = st.base.pi_sq;
    let h_shift = st.base.h - st.cn_sg;
    let i1 = g_flat + 0.5 * h_shift * w * w2.value + 0.5 * p_h;
    let i2 = (pi_b * w * gm.value + p_pi) / ts;
    let i3 = (w * gp_full.value + p_f) / ts;
    // The bubble self-energy ½∫|∇(χU)|² - (f(y)/2*)∫(χU)^{2*} equals its
    // full-space value plus a tail beyond s = r, and ∫W^{2*} dv_g equals
    // ∫(χU)^{2*} dx, so the O(1) parts of J cancel analytically.
    let fc_ex = st.lc.at_radius(bp.mu * bp.p_norm()).f_excess;
    let fc = 1.0 + fc_ex;
    let e_f = cfg.dims.k_n_pow / st.nf * (-(0.5 * (st.nf - 2.0)) * fc_ex.ln_1p()).exp_m1();
    let r = prof.r;
    let tail_in = integrate(
        |s| {
            let c = prof.chi(s);
            let (u, du) = prof.flat(s);
            let grad = (c.v * c.v - 1.0) * du * du + 2.0 * c.v * c.d1 * u * du + c.d1 * c.d1 * u * u;
            (0.5 * grad - fc / ts * (c.v.powf(ts) - 1.0) * u.powf(ts)) * s.powf(st.nf - 1.0)
        },
        &[r, 1.25 * r, 1.5 * r, 1.75 * r, 2.0 * r],
        &spec.mass_relative(),
    )?;
    let tail_out = integrate_to_infinity(
        |s| {
            let (u, du) = prof.flat(s);
            (-0.5 * du * du + fc / ts * u.powf(ts)) * s.powf(st.nf - 1.0)
        },
        2.0 * r,
        &spec.mass_relative(),
    )?;
    let m_plus = radial(&|s: f64| prof.chi_u(s).0.powf(ts) * s.powf(st.nf - 1.0))?;
    let x_int = if st.order == 2 { None } else { Some(radial(&|s: f64| st.interaction(prof.w(s)) * st.density(s))?) };
    let x_val = x_int.map_or(0.0, |e| e.value);
    let excess =
        e_f + w * (tail_in.value + tail_out.value) + fc_ex / ts * w * m_plus.value - w * x_val / ts + pi_b * w * gm.value / ts + 0.5 * p_h
            - p_f / ts
            + p_pi / ts;
    let excess_error = w
        * (tail_in.error + tail_out.error + fc_ex.abs() / ts * m_plus.error + x_int.map_or(0.0, |e| e.error) / ts + pi_b * gm.error / ts)
        + bspec.rel_tol * (p_h.abs() + p_f.abs() + p_pi.abs())
        + 4.0 * f64::EPSILON * (e_f.abs() + w * x_val.abs() / ts + pi_b * w * gm.value / ts);
    let jb = j_base(&st)?;
    let resid_norm_sq = residual_norm_sq(&st)?;
    let d = bp.delta;
    let alpha = match cfg.branch() {
        Branch::Lcf | Branch::N6 => 0.0,
        Branch::N10 => bp.mu.powi(8) * d.ln().abs().powf(1.2),
        Branch::N11Plus => d.powi(8),
    };
    Ok(EnergyBreakdown {
        j_base: jb,
        j_total: jb + i1 + i2 - i3,
        i1,
        i2,
        i3,
        excess,
        excess_error,
        resid_norm_sq,
        alpha_bound: d.powf(0.5 * (st.nf + 2.0)) + alpha + bp.epsilon.powi(2) + (d / bp.r).powf(st.nf - 2.0),
        admissible: st.lc.admissible(),
    })
}

/// `J(u₀ + W)` integrated directly over the sphere, without the
/// decomposition used by [`reduced_energy_ik`].
pub fn energy_j_direct(cfg: &ModelConfig, bp: &BubbleParams) -> Result<f64> {
    let st = Setup::new(cfg, bp)?;
    let ts = st.ts;
    let prof = st.prof;
    let spec = st.base_spec();
    let density = |th: f64, c: &CoefficientValues| {
        let s = 2.0 * (0.5 * th).tan();
        let (wv, dw) = prof.w_jet(s);
        let grad = dw * (1.0 + 0.25 * s * s);
        let u = st.u0 + wv;
        let eta = u.max(st.eps_trunc);
        0.5 * grad * grad + 0.5 * c.h * u * u - c.f * u.max(0.0).powf(ts) / ts + c.pi_sq * eta.powf(-ts) / ts
    };
    let mut breaks: Vec<f64> = st.bump_breaks().into_iter().chain(st.bubble_breaks()).map(chart_angle).collect();
    breaks.push(PI);
    let sn = |th: f64| th.sin().max(0.0).powf(st.nf - 1.0);
    if st.radial() {
        let est = integrate(|th| density(th, &st.lc.at_radius(2.0 * (0.5 * th).tan())) * sn(th), &breaks, &spec)?;
        return Ok(st.omega_nm1 * est.value);
    }
    let g = |th: f64, phi: f64| {
        let s = 2.0 * (0.5 * th).tan();
        let c = st.lc.at_radius(st.sigma(s, phi));
        density(th, &c) * sn(th) * phi.sin().powf(st.nf - 2.0)
    };
    let inner = |th: f64| {
        let s = 2.0 * (0.5 * th).tan();
        let mut b = st.inner_bump_breaks(s);
        b.push(PI);
        b
    };
    let est = integrate_nested(g, &breaks, inner, &spec)?;
    Ok(st.omega_nm2 * est.value)
}

/// Pointwise residual `R = (Δ + h)(u₀ + W) - f(u₀ + W)^{2*-1} - π²(u₀ + W)^{-2*-1}`.
#[derive(Clone, Debug)]
pub struct Residual {
    st: Setup,
    bp: BubbleParams,
}

impl Residual {
    pub fn new(cfg: &ModelConfig, bp: &BubbleParams) -> Result<Self> {
        let st = Setup::new(cfg, bp)?;
        if st.u0 <= st.eps_trunc {
            return Err(Error::TruncationActive { value: st.u0, level: st.eps_trunc });
        }
        Ok(Self { st, bp: bp.clone() })
    }

    /// At chart distance `s` from the bubble center and `σ` from the bump
    /// center.
    pub fn at(&self, s: f64, sigma: f64) -> f64 {
        residual_at(&self.st, s, sigma)
    }

    /// At a point of the sphere.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.at(self.bp.y_chart.distance(x), self.bp.xi_chart.distance(x))
    }

    /// `‖R‖²` in `L^{2n/(n+2)}`.
    pub fn norm_sq(&self) -> Result<f64> {
        residual_norm_sq(&self.st)
    }
}

fn residual_at(st: &Setup, s: f64, sigma: f64) -> f64 {
    let prof = &st.prof;
    if s >= 2.0 * prof.r {
        return 0.0;
    }
    let c = st.lc.at_radius(sigma);
    let ts = st.ts;
    let pw = ts - 1.0;
    let u0 = st.u0;
    let w = prof.w(s);
    let lam = prof.lambda(s);
    let (chi, rest) = prof.flat_laplacian_terms(s);
    let u = prof.flat(s).0;
    // Λ^{2*-1} χ f(y) U^{2*-1} against f W^{2*-1}: where χ = 1 only the
    // difference of the coefficients survives.
    let top =
        if chi == 1.0 { (prof.f_center - c.f) * w.powf(pw) } else { lam.powf(pw) * chi * prof.f_center * u.powf(pw) - c.f * w.powf(pw) };
    let conformal = top + lam.powf(pw) * rest;
    // (u₀+W)^{2*-1} - W^{2*-1} - u₀^{2*-1}, each branch free of cancellation.
    let cross = if w > u0 {
        w.powf(pw) * (pw * (u0 / w).ln_1p()).exp_m1() - u0.powf(pw)
    } else {
        u0.powf(pw) * (pw * (w / u0).ln_1p()).exp_m1() - w.powf(pw)
    };
    // With 2* = 3 the cross term is 2u₀W, which the base shift of h absorbs.
    let linear = if st.order == 2 { c.h_excess * w } else { (c.h - st.cn_sg) * w - c.f * cross };
    let x = w / u0;
    let neg = c.pi_sq * u0.powf(-ts - 1.0) * ((-(ts + 1.0) * x.ln_1p()).exp_m1());
    conformal + linear - neg
}

fn residual_norm_sq(st: &Setup) -> Result<f64> {
    let q = 2.0 * st.nf / (st.nf + 2.0);
    let spec = st.bump_spec();
    let breaks = {
        let mut b = st.bubble_breaks();
        b.extend(st.bump_breaks());
        b
    };
    let total = if st.radial() {
        st.omega_nm1 * integrate(|s| residual_at(st, s, s).abs().powf(q) * st.density(s), &breaks, &spec)?.value
    } else {
        let g = |s: f64, phi: f64| residual_at(st, s, st.sigma(s, phi)).abs().powf(q) * st.density(s) * phi.sin().powf(st.nf - 2.0);
        let inner = |s: f64| {
            let mut b = st.inner_bump_breaks(s);
            b.push(PI);
            b
        };
        st.omega_nm2 * integrate_nested(g, &breaks, inner, &spec)?.value
    };
    Ok(total.powf(2.0 / q))
}

/// Gram matrix of the kernel elements in `⟨·,·⟩_h`, with the Euclidean
/// model norms `‖∇V_i‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub matrix: Vec<Vec<f64>>,
    /// `‖∇V_0‖²` and `‖∇V_i‖²` (`i >= 1`, all equal).
    pub model_norms: [f64; 2],
    pub delta_over_r: f64,
}

impl GramReport {
    /// Largest deviations from `δ_ij ‖∇V_i‖²` relative to `‖∇V_i‖²`, split
    /// into diagonal and off-diagonal entries.
    pub fn deviations(&self) -> (f64, f64) {
        let m = self.matrix.len();
        let norm = |i: usize| if i == 0 { self.model_norms[0] } else { self.model_norms[1] };
        let mut diag = 0.0f64;
        let mut off = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let scale = norm(i).min(norm(j));
                if i == j {
                    diag = diag.max((self.matrix[i][i] - norm(i)).abs() / norm(i));
                } else {
                    off = off.max(self.matrix[i][j].abs() / scale);
                }
            }
        }
        (diag, off)
    }
}

/// `‖∇V_0‖²` and `‖∇V_i‖²` on `R^n` for `V_0 = (a|x|² - 1)(1 + a|x|²)^{-n/2}`
/// and `V_i = f x_i (1 + a|x|²)^{-n/2}`.
pub fn model_kernel_norms(cfg: &ModelConfig, f_center: f64) -> Result<[f64; 2]> {
    let nf = cfg.dims.nf();
    let a = f_center / (nf * (nf - 2.0));
    let spec = QuadratureSpec::with_rel_tol(1e-12);
    let w = cfg.dims.omega_n_minus_1;
    let knee = 1.0 / a.sqrt();
    let v0 = |s: f64| {
        let q = 1.0 + a * s * s;
        let d = -nf * a * s * q.powf(-0.5 * nf - 1.0) * (a * s * s - 1.0) + 2.0 * a * s * q.powf(-0.5 * nf);
        d * d * s.powf(nf - 1.0)
    };
    let vi = |s: f64| {
        let q = 1.0 + a * s * s;
        let g = f_center * q.powf(-0.5 * nf);
        let dg = -nf * a * s * f_center * q.powf(-0.5 * nf - 1.0);
        s.powf(nf - 1.0) * ((s * s * dg * dg + 2.0 * s * g * dg) / nf + g * g)
    };
    let whole = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        let head = integrate(f, &dyadic_breaks(0.125 * knee, 16.0 * knee), &spec)?;
        let tail = integrate_to_infinity(f, 16.0 * knee, &spec)?;
        Ok(w * (head.value + tail.value))
    };
    Ok([whole(&v0)?, whole(&vi)?])
}

pub fn gram_matrix(cfg: &ModelConfig, bp: &BubbleParams) -> Result<GramReport> {
    let st = Setup::new(cfg, bp)?;
    let prof = st.prof;
    let nf = st.nf;
    let d = prof.delta;
    let a = prof.a;
    let spec = st.base_spec();
    let breaks = st.bubble_breaks();
    let w = st.omega_nm1;
    // Z_i / Λ in the flat chart: ζ₀(s) and ζ_i = g(s) z_i.
    let zeta0 = |s: f64| {
        let c = prof.chi(s);
        let q = d * d + a * s * s;
        let sc = d.powf(0.5 * (nf - 2.0));
        let v = sc * q.powf(-0.5 * nf) * (a * s * s - d * d);
        let dv = sc * (-nf * a * s * q.powf(-0.5 * nf - 1.0) * (a * s * s - d * d) + 2.0 * a * s * q.powf(-0.5 * nf));
        (c.v * v, c.d1 * v + c.v * dv)
    };
    let gi = |s: f64| {
        let c = prof.chi(s);
        let q = d * d + a * s * s;
        let sc = prof.f_center * d.powf(0.5 * nf);
        let v = sc * q.powf(-0.5 * nf);
        let dv = -nf * a * s * sc * q.powf(-0.5 * nf - 1.0);
        (c.v * v, c.d1 * v + c.v * dv)
    };
    let z00 = w * integrate(|s| zeta0(s).1.powi(2) * s.powf(nf - 1.0), &breaks, &spec)?.value;
    let z11 = w * integrate(
        |s| {
            let (g, dg) = gi(s);
            s.powf(nf - 1.0) * ((s * s * dg * dg + 2.0 * s * g * dg) / nf + g * g)
        },
        &breaks,
        &spec,
    )?
    .value;
    let h_shift = st.base.h - st.cn_sg;
    let bspec = st.bump_spec();
    let pert = |f: &(dyn Fn(f64, f64, f64) -> f64 + Sync)| -> Result<f64> {
        st.bump_integral(|s, sigma, cp| st.lc.at_radius(sigma).h_excess * f(s, sigma, cp), &bspec)
    };
    let shift = |f: &(dyn Fn(f64) -> f64 + Sync)| -> Result<f64> { Ok(w * integrate(|s| f(s) * st.density(s), &breaks, &spec)?.value) };
    let q0 = |s: f64| prof.z0(s);
    let qi = |s: f64| prof.zi_factor(s);
    let m00 = z00 + h_shift * shift(&|s| q0(s).powi(2))? + pert(&|s, _, _| q0(s).powi(2))?;
    let shift_ii = h_shift * shift(&|s| (qi(s) * s).powi(2) / nf)?;
    let n = st.n as usize;
    let mut matrix = vec![vec![0.0; n + 1]; n + 1];
    matrix[0][0] = m00;
    if st.radial() {
        let p = pert(&|s, _, _| (qi(s) * s).powi(2) / nf)?;
        for (i, row) in matrix.iter_mut().enumerate().skip(1) {
            row[i] = z11 + shift_ii + p;
        }
    } else {
        // z_1 = -s cos φ along the axis towards the bump center.
        let along = pert(&|s, _, cp| (qi(s) * s * cp).powi(2))?;
        let perp = pert(&|s, _, cp| (qi(s) * s).powi(2) * (1.0 - cp * cp) / (nf - 1.0))?;
        let cross = pert(&|s, _, cp| -q0(s) * qi(s) * s * cp)?;
        matrix[1][1] = z11 + shift_ii + along;
        for (i, row) in matrix.iter_mut().enumerate().skip(2) {
            row[i] = z11 + shift_ii + perp;
        }
        matrix[0][1] = cross;
        matrix[1][0] = cross;
    }
    Ok(GramReport { matrix, model_norms: model_kernel_norms(cfg, prof.f_center)?, delta_over_r: d / prof.r })
}

/// One rung of an expansion ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub epsilon: f64,
    pub mu: f64,
    pub t: f64,
    pub p: Vec<f64>,
    pub branch: String,
    /// `(I_k - J(u₀) - K_n^{-n}/n) / ε`.
    pub measured: f64,
    pub predicted: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub dt_measured: Option<f64>,
    pub dt_predicted: f64,
    pub dp_measured: Option<f64>,
    pub dp_predicted: f64,
    /// Quadrature error bound on `measured`.
    pub measured_error: f64,
    /// The quadrature error is not small against the gap.
    pub precision_limited: bool,
    pub breakdown: EnergyBreakdown,
}

/// `(I_k(t, p) - J(u₀) - K_n^{-n}/n)` normalized by `ε` (`ε³` for `n = 6`),
/// and its error bound.
pub fn measured_reduced(cfg: &ModelConfig, epsilon: f64, t: f64, p: &[f64]) -> Result<(f64, f64, EnergyBreakdown)> {
    let entry = cfg.entry_for_epsilon(epsilon)?;
    let bp = BubbleParams::new(cfg, &entry, t, p.to_vec())?;
    let br = reduced_energy_ik(cfg, &bp)?;
    let norm = if cfg.dims.n == 6 { epsilon.powi(3) } else { epsilon };
    Ok((br.excess / norm, br.excess_error / norm, br))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    /// Finite-difference checks of `∂_t` and `∂_{p_1}`.
    pub derivatives: bool,
    /// Relative step in `t`; absolute step in `p_1`.
    pub step: f64,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self { derivatives: true, step: 1e-2 }
    }
}

fn richardson(f: &dyn Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    let (a, b, c, d) = (f(x + h)?, f(x - h)?, f(x + 2.0 * h)?, f(x - 2.0 * h)?);
    Ok((8.0 * (a - b) - (c - d)) / (12.0 * h))
}

pub fn expansion_check(cfg: &ModelConfig, t: f64, p: &[f64], ladder: &[f64], opts: ExpansionOptions) -> Result<Vec<ExpansionReport>> {
    if cfg.dims.n == 6 {
        return Err(Error::InvalidParameter { name: "n", reason: "the n = 6 map is fitted by the n6 pipeline".into() });
    }
    if ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter { name: "ladder", reason: "must be strictly decreasing".into() });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter { name: "t", reason: format!("must be positive, got {t}") });
    }
    if p.len() != cfg.dims.n as usize || p[1..].iter().any(|&v| v != 0.0) {
        return Err(Error::OffAxisOffset);
    }
    let spec = ReducedEnergySpec::from_config(cfg);
    let hd = spec.derivatives(t, p)?;
    let predicted = hd.value;
    let rungs = crate::par::map(ladder, |&eps| -> Result<ExpansionReport> {
        let (measured, measured_error, breakdown) = measured_reduced(cfg, eps, t, p)?;
        let (dt_measured, dp_measured) = if opts.derivatives {
            let ft = |tt: f64| measured_reduced(cfg, eps, tt, p).map(|v| v.0);
            let dt = richardson(&ft, t, opts.step * t)?;
            let hp = opts.step.min(0.25 * (1.0 - p[0].abs())).max(1e-4);
            let fp = |q: f64| {
                let mut pp = p.to_vec();
                pp[0] = q;
                measured_reduced(cfg, eps, t, &pp).map(|v| v.0)
            };
            let dp = if p[0].abs() + 2.0 * hp <= 1.0 { Some(richardson(&fp, p[0], hp)?) } else { None };
            (Some(dt), dp)
        } else {
            (None, None)
        };
        let entry = cfg.entry_for_epsilon(eps)?;
        let gap = (measured - predicted).abs();
        Ok(ExpansionReport {
            epsilon: eps,
            mu: entry.mu,
            t,
            p: p.to_vec(),
            branch: cfg.branch().label().to_string(),
            measured,
            predicted,
            gap,
            rel_gap: gap / predicted.abs(),
            dt_measured,
            dt_predicted: hd.gradient[0],
            dp_measured,
            dp_predicted: hd.gradient[1],
            measured_error,
            precision_limited: measured_error > 1e-2 * gap.max(1e-3 * predicted.abs()),
            breakdown,
        })
    });
    rungs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pow_excess_branches_agree() {
        for &p in &[2.8, -2.8, 3.0, -3.0] {
            for order in [1usize, 2] {
                let x = 0.249_999_999;
                let y = 0.250_000_001;
                let a = pow_excess(x, p, order);
                let b = pow_excess(y, p, order);
                assert_relative_eq!(a, b, max_relative = 1e-7);
            }
        }
        assert_relative_eq!(pow_excess(1e-3, 3.0, 2), 1e-9, max_relative = 1e-14);
        assert_relative_eq!(pow_excess(2.0, 3.0, 1), 27.0 - 1.0 - 6.0, max_relative = 1e-15);
    }
}
