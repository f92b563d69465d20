//! The limit reduced energy `H(t, p)`, its derivatives, the closed-form scale
//! `t₀`, the cutoff-corrected critical scale `t_M` and its certification.
//!
//! For `n >= 7` the bump term is evaluated in the variable `x = p + t y`:
//! `-(1/2*) ∫ Ψ(x) F(t, |x - p|²) dx` with `F(t, u) = t^n (t² + a u)^{-n}`
//! and `a = f(ξ₀)/(n(n-2))`. Since `Ψ` is supported in a fixed ball this form
//! has compact support in `x` for every `(t, p)`, and all derivatives fall on
//! the explicit kernel `F`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::model::{Branch, DimensionConstants, ModelConfig};
use crate::profiles::{BumpSpec, Cutoff};
use crate::quadrature::{dyadic_breaks, integrate, integrate_nested, integrate_to_infinity, Estimate, QuadratureSpec};
use crate::roots::{brent, sign_changes};

/// Normalization of the bubble-interaction term `m t^{(n-2)/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassConvention {
    /// `m = α_n ω_{n-1}`: what the energy expansion actually produces.
    WithSphereArea,
    /// `m = α_n`, without the sphere area.
    BareAlpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedEnergySpec {
    pub dims: DimensionConstants,
    pub branch: Branch,
    pub f_xi0: f64,
    pub weyl_sq: f64,
    /// `a₀(ξ₀)` for the six-dimensional branch.
    pub a0: f64,
    /// Fitted `C₀` (six-dimensional branch).
    pub c0: Option<f64>,
    /// Fitted coefficient `A` of `-A H(p) t²` (six-dimensional branch).
    pub quad_coeff: Option<f64>,
    pub bump: BumpSpec,
    pub quadrature: QuadratureSpec,
    pub mass_convention: MassConvention,
}

impl ReducedEnergySpec {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            dims: cfg.dims.clone(),
            branch: cfg.branch(),
            f_xi0: 1.0,
            weyl_sq: cfg.weyl_sq(),
            a0: cfg.n6.as_ref().map_or(0.0, |d| d.a0),
            c0: None,
            quad_coeff: None,
            bump: cfg.bump,
            quadrature: QuadratureSpec { rel_tol: cfg.quadrature.rel_tol.min(1e-11), ..cfg.quadrature },
            mass_convention: MassConvention::WithSphereArea,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_xi0 > 0.0) {
            return Err(Error::InvalidParameter { name: "f_xi0", reason: "must be positive".into() });
        }
        if !(self.weyl_sq >= 0.0) {
            return Err(Error::InvalidParameter { name: "weyl_sq", reason: "must be nonnegative".into() });
        }
        let consistent = match self.branch {
            Branch::N6 => self.dims.n == 6,
            Branch::N10 => self.dims.n == 10,
            Branch::N11Plus => self.dims.n >= 11,
            Branch::Lcf => self.dims.n >= 7,
        };
        if !consistent {
            return Err(Error::InvalidParameter {
                name: "branch",
                reason: format!("branch {} does not apply in dimension {}", self.branch.label(), self.dims.n),
            });
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.dims.nf()
    }

    /// `a = f(ξ₀)/(n(n-2))`.
    pub fn a(&self) -> f64 {
        self.f_xi0 * self.dims.bubble_c()
    }

    /// Coefficient `K_n^{-n} n(n-2)²/(24(n-4)(n-6))` of the Weyl term.
    pub fn weyl_coefficient(&self) -> f64 {
        let n = self.nf();
        self.dims.k_n_pow * n * (n - 2.0).powi(2) / (24.0 * (n - 4.0) * (n - 6.0))
    }

    /// `(m, e)` such that the non-bump part of `H` is `-m t^e`.
    pub fn mass_term(&self) -> (f64, f64) {
        let alpha = match self.mass_convention {
            MassConvention::WithSphereArea => self.dims.mass_coefficient(),
            MassConvention::BareAlpha => self.dims.alpha_n,
        };
        match self.branch {
            Branch::Lcf => (alpha, 0.5 * (self.nf() - 2.0)),
            Branch::N10 => (alpha + self.weyl_coefficient() * self.weyl_sq, 4.0),
            Branch::N11Plus => (self.weyl_coefficient() * self.weyl_sq, 4.0),
            Branch::N6 => (0.0, 3.0),
        }
    }
}

/// `A_n = ∫ |y|² (1 + a|y|²)^{-n} dy` in closed Beta form.
pub fn a_n_closed(dims: &DimensionConstants, f_xi0: f64) -> f64 {
    let n = dims.nf();
    let c = f_xi0 * dims.bubble_c();
    dims.omega_n_minus_1 * c.powf(-0.5 * (n + 2.0)) * beta(0.5 * n + 1.0, 0.5 * n - 1.0) / 2.0
}

/// `A_n` by adaptive radial quadrature.
pub fn a_n_quadrature(dims: &DimensionConstants, f_xi0: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    let n = dims.nf();
    let c = f_xi0 * dims.bubble_c();
    let g = |r: f64| r.powf(n + 1.0) * (1.0 + c * r * r).powf(-n);
    let knee = 1.0 / c.sqrt();
    let head = integrate(g, &dyadic_breaks(0.125 * knee, 8.0 * knee), spec)?;
    let tail = integrate_to_infinity(g, 8.0 * knee, spec)?;
    Ok(Estimate {
        value: dims.omega_n_minus_1 * (head.value + tail.value),
        error: dims.omega_n_minus_1 * (head.error + tail.error),
        mass: dims.omega_n_minus_1 * (head.mass + tail.mass),
        evaluations: head.evaluations + tail.evaluations,
    })
}

/// Values of the kernel `F(t, u) = t^n (t² + a u)^{-n}` and its derivatives.
#[derive(Clone, Copy, Debug)]
struct KernelJet {
    f: f64,
    ft: f64,
    fu: f64,
    fuu: f64,
    ftu: f64,
    ftt: f64,
}

fn kernel_jet(n: f64, a: f64, t: f64, u: f64) -> KernelJet {
    let t2 = t * t;
    let d = t2 + a * u;
    let f = (t2 / d).powf(0.5 * n) * d.powf(-0.5 * n);
    let au = a * u;
    let ft = f * n * (au - t2) / (t * d);
    let fu = -f * n * a / d;
    let fuu = f * n * (n + 1.0) * a * a / (d * d);
    let ftu = -f * n * a * (n * au - (n + 2.0) * t2) / (t * d * d);
    let ftt = f * n * ((n - 1.0) * d * (au - t2) - 2.0 * (n + 1.0) * t2 * (au - t2) - 2.0 * t2 * d) / (t2 * d * d);
    KernelJet { f, ft, fu, fuu, ftu, ftt }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Moment {
    Value,
    Dt,
    Dtt,
    /// Derivative along `e = p/|p|`.
    Dp,
    Dtp,
    DppAlong,
    DppPerp,
}

/// Value, gradient and Hessian of `H` in the coordinates `(t, p_1, ..., p_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

fn n6_profile_jet(rho: f64) -> (f64, f64, f64) {
    let s = rho * rho;
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let om = 1.0 - s;
    let v = (1.0 - 1.0 / om).exp();
    let g1 = -1.0 / (om * om);
    let g2 = -2.0 / (om * om * om);
    let d1 = v * g1 * 2.0 * rho;
    let d2 = v * ((g1 * 2.0 * rho).powi(2) + g2 * 4.0 * s + 2.0 * g1);
    (v, d1, d2)
}

impl ReducedEnergySpec {
    fn rho_breaks(&self, t: f64, pn: f64) -> Vec<f64> {
        let rmax = self.bump.psi_support();
        let width = t / self.a().sqrt();
        let mut b = vec![0.0, self.bump.m.sqrt(), rmax];
        for f in [0.5, 0.75, 0.9] {
            b.push(f * self.bump.m.sqrt());
        }
        for k in [-4.0, -1.0, -0.25, 0.0, 0.25, 1.0, 4.0] {
            b.push(pn + k * width);
        }
        b.retain(|x| (0.0..=rmax).contains(x));
        b
    }

    fn bump_moment(&self, m: Moment, t: f64, pn: f64) -> Result<f64> {
        let n = self.nf();
        let a = self.a();
        let w = self.dims.omega_n_minus_1;
        let psi = |rho: f64| self.bump.psi_radial(rho).0;
        let pre = -1.0 / self.dims.two_star;
        let spec = self.quadrature.mass_relative();
        if pn == 0.0 && matches!(m, Moment::Dp | Moment::Dtp) {
            return Ok(0.0);
        }
        let radial = pn == 0.0 && matches!(m, Moment::Value | Moment::Dt | Moment::Dtt | Moment::DppAlong | Moment::DppPerp);
        if radial {
            let g = |rho: f64| {
                let u = rho * rho;
                let k = kernel_jet(n, a, t, u);
                let core = match m {
                    Moment::Value => k.f,
                    Moment::Dt => k.ft,
                    Moment::Dtt => k.ftt,
                    _ => 4.0 * k.fuu * u / n + 2.0 * k.fu,
                };
                psi(rho) * core * rho.powf(n - 1.0)
            };
            let est = integrate(g, &self.rho_breaks(t, pn), &spec)?;
            return Ok(pre * w * est.value);
        }
        let wa = crate::model::sphere_area(self.dims.n - 2);
        let g = |rho: f64, phi: f64| {
            let (sp, cp) = phi.sin_cos();
            let u = (rho * rho + pn * pn - 2.0 * rho * pn * cp).max(0.0);
            let xe = rho * cp - pn;
            let k = kernel_jet(n, a, t, u);
            let core = match m {
                Moment::Value => k.f,
                Moment::Dt => k.ft,
                Moment::Dtt => k.ftt,
                Moment::Dp => -2.0 * k.fu * xe,
                Moment::Dtp => -2.0 * k.ftu * xe,
                Moment::DppAlong => 4.0 * k.fuu * xe * xe + 2.0 * k.fu,
                Moment::DppPerp => 4.0 * k.fuu * rho * rho * sp * sp / (n - 1.0) + 2.0 * k.fu,
            };
            psi(rho) * core * rho.powf(n - 1.0) * sp.powf(n - 2.0)
        };
        let width = t / a.sqrt();
        let inner = |rho: f64| {
            let scale = width / (rho * pn).max(1e-300).sqrt();
            if scale < 0.5 {
                dyadic_breaks(0.25 * scale, std::f64::consts::PI)
            } else {
                vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI]
            }
        };
        let est = integrate_nested(g, &self.rho_breaks(t, pn), inner, &spec)?;
        Ok(pre * wa * est.value)
    }

    fn check_args(&self, t: f64, p: &[f64]) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter { name: "t", reason: format!("must be positive, got {t}") });
        }
        if p.len() != self.dims.n as usize {
            return Err(Error::InvalidParameter { name: "p", reason: format!("expected {} components", self.dims.n) });
        }
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pn > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter { name: "p", reason: format!("|p| = {pn} exceeds 1") });
        }
        Ok(pn)
    }

    fn n6_coefficients(&self) -> Result<(f64, f64)> {
        match (self.quad_coeff, self.c0) {
            (Some(a), Some(c0)) => Ok((a, c0 * self.a0)),
            _ => Err(Error::InvalidParameter { name: "c0", reason: "the n = 6 limit energy needs fitted coefficients".into() }),
        }
    }

    /// `H(t, p)`.
    pub fn h_eval(&self, t: f64, p: &[f64]) -> Result<f64> {
        let pn = self.check_args(t, p)?;
        if self.branch == Branch::N6 {
            let (a, b) = self.n6_coefficients()?;
            return Ok(-a * n6_profile_jet(pn).0 * t * t + b * t.powi(3));
        }
        let (m, e) = self.mass_term();
        Ok(self.bump_moment(Moment::Value, t, pn)? - m * t.powf(e))
    }

    /// `∂_t H(t, 0)` through the one-dimensional radial reduction.
    pub fn dt_h_radial(&self, t: f64) -> Result<f64> {
        if self.branch == Branch::N6 {
            let (a, b) = self.n6_coefficients()?;
            return Ok(-2.0 * a * t + 3.0 * b * t * t);
        }
        let (m, e) = self.mass_term();
        Ok(self.bump_moment(Moment::Dt, t, 0.0)? - m * e * t.powf(e - 1.0))
    }

    /// `∂_t H(t, 0)` in the form that keeps `β` and `β'` under the integral
    /// in the variable `y`; an independent route to [`Self::dt_h_radial`].
    pub fn dt_h_cutoff_form(&self, t: f64) -> Result<f64> {
        if self.branch == Branch::N6 {
            return self.dt_h_radial(t);
        }
        let n = self.nf();
        let a = self.a();
        let w = self.dims.omega_n_minus_1;
        let ts = self.dims.two_star;
        let spec = self.quadrature.mass_relative();
        let knee = 1.0 / a.sqrt();
        let end = self.bump.psi_support() / t;
        let mut br = dyadic_breaks(0.125 * knee.min(end), end);
        br.push(self.bump.m.sqrt() / t);
        let weight = |y: f64| (1.0 + a * y * y).powf(-n) * y.powf(n - 1.0);
        let plateau = integrate(|y| y * y * self.bump.cutoff_eval(Cutoff::Beta, t * t * y * y) * weight(y), &br, &spec)?;
        let edge = integrate(
            |y| y.powi(4) * self.bump.cutoff_jet(Cutoff::Beta, t * t * y * y).d1 * weight(y),
            &[self.bump.m.sqrt() / t, end],
            &spec,
        )?;
        let (m, e) = self.mass_term();
        Ok((2.0 / ts) * t * w * plateau.value + (2.0 / ts) * t.powi(3) * w * edge.value - m * e * t.powf(e - 1.0))
    }

    /// Value, gradient and Hessian at `(t, p)`.
    pub fn derivatives(&self, t: f64, p: &[f64]) -> Result<HDerivatives> {
        let pn = self.check_args(t, p)?;
        let dim = self.dims.n as usize;
        let e_dir: Vec<f64> = if pn > 0.0 {
            p.iter().map(|v| v / pn).collect()
        } else {
            let mut e = vec![0.0; dim];
            e[0] = 1.0;
            e
        };
        let (value, dt, dtt, dp, dtp, along, perp) = if self.branch == Branch::N6 {
            let (a, b) = self.n6_coefficients()?;
            let (hv, h1, h2) = n6_profile_jet(pn);
            let perp = if pn > 0.0 { h1 / pn } else { h2 };
            (
                -a * hv * t * t + b * t.powi(3),
                -2.0 * a * hv * t + 3.0 * b * t * t,
                -2.0 * a * hv + 6.0 * b * t,
                -a * t * t * h1,
                -2.0 * a * t * h1,
                -a * t * t * h2,
                -a * t * t * perp,
            )
        } else {
            let moments = [Moment::Value, Moment::Dt, Moment::Dtt, Moment::Dp, Moment::Dtp, Moment::DppAlong, Moment::DppPerp];
            let vals: Vec<f64> = crate::par::map(&moments, |&m| self.bump_moment(m, t, pn)).into_iter().collect::<Result<_>>()?;
            let (m, e) = self.mass_term();
            (
                vals[0] - m * t.powf(e),
                vals[1] - m * e * t.powf(e - 1.0),
                vals[2] - m * e * (e - 1.0) * t.powf(e - 2.0),
                vals[3],
                vals[4],
                vals[5],
                vals[6],
            )
        };
        let mut gradient = vec![dt];
        gradient.extend(e_dir.iter().map(|v| dp * v));
        let mut hessian = vec![vec![0.0; dim + 1]; dim + 1];
        hessian[0][0] = dtt;
        for i in 0..dim {
            hessian[0][i + 1] = dtp * e_dir[i];
            hessian[i + 1][0] = dtp * e_dir[i];
            for j in 0..dim {
                let eij = e_dir[i] * e_dir[j];
                let id = if i == j { 1.0 } else { 0.0 };
                hessian[i + 1][j + 1] = along * eij + perp * (id - eij);
            }
        }
        Ok(HDerivatives { value, gradient, hessian })
    }

    pub fn h_grad(&self, t: f64, p: &[f64]) -> Result<Vec<f64>> {
        Ok(self.derivatives(t, p)?.gradient)
    }
}

/// Closed-form critical scale `t₀`.
pub fn t0_closed_form(spec: &ReducedEnergySpec) -> Result<f64> {
    if spec.branch == Branch::N6 {
        let (a, b) = spec.n6_coefficients()?;
        return Ok(2.0 * a / (3.0 * b));
    }
    let (m, e) = spec.mass_term();
    if !(m > 0.0) {
        return Err(Error::InvalidParameter { name: "weyl_sq", reason: "no interaction term, H has no critical scale".into() });
    }
    if (e - 2.0).abs() < 1e-12 {
        return Err(Error::InvalidParameter { name: "branch", reason: "exponent 2 gives no isolated critical scale".into() });
    }
    let lhs = 2.0 / spec.dims.two_star * a_n_closed(&spec.dims, spec.f_xi0);
    Ok((lhs / (e * m)).powf(1.0 / (e - 2.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinCheck {
    /// Starting points `(t, p_1)`.
    pub starts: Vec<[f64; 2]>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl BasinCheck {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub t_m: f64,
    pub t0: f64,
    /// `(t_M - t₀)/t₀`.
    pub drift: f64,
    pub bracket: [f64; 2],
    pub plateau: f64,
    pub rel_tol: f64,
    /// `|∂_t H(t_M, 0)|` relative to the size of its two competing terms.
    pub grad_scaled: f64,
    pub hess_tt: f64,
    pub hess_pp: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub negative: usize,
    pub positive: usize,
    pub nondegenerate: bool,
    pub basin: BasinCheck,
}

impl CriticalPoint {
    /// One negative (the `t` direction) and `n` positive eigenvalues.
    pub fn saddle_certified(&self, n: u32) -> bool {
        self.nondegenerate && self.negative == 1 && self.positive == n as usize && self.basin.all_converged()
    }
}

fn symmetric_eigenvalues(h: &[Vec<f64>]) -> Vec<f64> {
    let d = h.len();
    let m = DMatrix::from_fn(d, d, |i, j| 0.5 * (h[i][j] + h[j][i]));
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn newton_basin(spec: &ReducedEnergySpec, t_m: f64) -> Result<BasinCheck> {
    let dim = spec.dims.n as usize;
    let starts = vec![[1.1 * t_m, 0.0], [0.9 * t_m, 0.0], [t_m, 0.1], [t_m, -0.1], [1.05 * t_m, 0.05]];
    let runs = crate::par::map(&starts, |s| -> Result<(bool, usize)> {
        let (mut t, mut q) = (s[0], s[1]);
        for it in 1..=40 {
            let mut p = vec![0.0; dim];
            p[0] = q;
            let d = spec.derivatives(t, &p)?;
            let (g0, g1) = (d.gradient[0], d.gradient[1]);
            let (a, b, c) = (d.hessian[0][0], d.hessian[0][1], d.hessian[1][1]);
            let det = a * c - b * b;
            let dt = -(c * g0 - b * g1) / det;
            let dq = -(a * g1 - b * g0) / det;
            t += dt;
            q += dq;
            if !(t > 0.0) || q.abs() > 1.0 {
                return Ok((false, it));
            }
            if dt.abs() < 1e-10 * t_m && dq.abs() < 1e-10 {
                return Ok(((t - t_m).abs() < 1e-8 * t_m && q.abs() < 1e-8, it));
            }
        }
        Ok((false, 40))
    });
    let runs: Vec<(bool, usize)> = runs.into_iter().collect::<Result<_>>()?;
    Ok(BasinCheck { converged: runs.iter().map(|r| r.0).collect(), iterations: runs.iter().map(|r| r.1).collect(), starts })
}

/// Root `t_M` of `∂_t H(·, 0)` nearest to `t₀`, with its Hessian certificate.
pub fn find_critical(spec: &ReducedEnergySpec) -> Result<CriticalPoint> {
    spec.validate()?;
    let t0 = t0_closed_form(spec)?;
    let grid: Vec<f64> = (0..=80).map(|i| t0 * 10f64.powf(-2.0 + 3.0 * f64::from(i) / 80.0)).collect();
    let vals: Vec<f64> = crate::par::map(&grid, |&t| spec.dt_h_radial(t)).into_iter().collect::<Result<_>>()?;
    let idx = sign_changes(&vals)
        .into_iter()
        .min_by(|&i, &j| {
            let di = (grid[i] * grid[i + 1]).sqrt().ln() - t0.ln();
            let dj = (grid[j] * grid[j + 1]).sqrt().ln() - t0.ln();
            di.abs().total_cmp(&dj.abs())
        })
        .ok_or(Error::NoBracket { what: "dH/dt(., 0)", lo: grid[0], hi: grid[80] })?;
    let bracket = [grid[idx], grid[idx + 1]];
    let t_m = brent(|t| spec.dt_h_radial(t), bracket[0], bracket[1], 1e-14 * t0, 200)?;
    let mut p0 = vec![0.0; spec.dims.n as usize];
    let d = spec.derivatives(t_m, &p0)?;
    p0.clear();
    let (m, e) = spec.mass_term();
    let grad_scale = if spec.branch == Branch::N6 {
        let (a, b) = spec.n6_coefficients()?;
        2.0 * a * t_m + 3.0 * b * t_m * t_m
    } else {
        spec.bump_moment(Moment::Dt, t_m, 0.0)?.abs() + m * e * t_m.powf(e - 1.0)
    };
    let eigenvalues = symmetric_eigenvalues(&d.hessian);
    let scale = eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let nondegenerate = eigenvalues.iter().all(|v| v.abs() > 1e-8 * scale);
    let negative = eigenvalues.iter().filter(|&&v| v < 0.0).count();
    let pp = d.hessian[1..].iter().map(|row| row[1..].to_vec()).collect::<Vec<_>>();
    let basin = newton_basin(spec, t_m)?;
    Ok(CriticalPoint {
        t_m,
        t0,
        drift: (t_m - t0) / t0,
        bracket,
        plateau: spec.bump.m,
        rel_tol: spec.quadrature.rel_tol,
        grad_scaled: d.gradient.iter().map(|g| g * g).sum::<f64>().sqrt() / grad_scale,
        hess_tt: d.hessian[0][0],
        hess_pp: symmetric_eigenvalues(&pp),
        negative,
        positive: eigenvalues.len() - negative,
        eigenvalues,
        hessian: d.hessian,
        nondegenerate,
        basin,
    })
}

/// Least-squares fit of the six-dimensional reduced map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N6Fit {
    /// Coefficient `A` of `-A t²`.
    pub quad_coeff: f64,
    pub c0: f64,
    /// `2A/(3 a₀ C₀)`; equals `10/(3 a₀ C₀)` when `A = 5`.
    pub t0: f64,
    /// `‖model - data‖₂ / ‖data‖₂`.
    pub fit_residual: f64,
    /// Minimizer of the measured map (grid search with parabolic refinement).
    pub grid_minimizer: f64,
    /// `|t0 - grid_minimizer| / grid_minimizer`.
    pub minimizer_gap: f64,
}

/// Fit `-A t² + C₀ a₀ t³` to measured reduced energies.
pub fn reduced_n6_fit(a0: f64, ts: &[f64], measured: &[f64]) -> Result<N6Fit> {
    if ts.len() != measured.len() || ts.len() < 3 {
        return Err(Error::InvalidParameter { name: "measured", reason: "need at least three (t, value) pairs".into() });
    }
    // Columns -t² and t³ (the latter absorbs a₀).
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &y) in ts.iter().zip(measured) {
        let (x1, x2) = (-t * t, t.powi(3));
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        r1 += x1 * y;
        r2 += x2 * y;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (r1 * s22 - r2 * s12) / det;
    let b = (s11 * r2 - s12 * r1) / det;
    let c0 = b / a0;
    if !(c0 > 0.0) {
        return Err(Error::NonPositiveC0(c0));
    }
    let resid: f64 = ts.iter().zip(measured).map(|(&t, &y)| (-a * t * t + b * t.powi(3) - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = measured.iter().map(|y| y * y).sum::<f64>().sqrt();
    let i = (1..ts.len() - 1)
        .min_by(|&i, &j| measured[i].total_cmp(&measured[j]))
        .ok_or(Error::InvalidParameter { name: "measured", reason: "no interior point".into() })?;
    let (x0, x1, x2) = (ts[i - 1], ts[i], ts[i + 1]);
    let (y0, y1, y2) = (measured[i - 1], measured[i], measured[i + 1]);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    let grid_minimizer = if den != 0.0 { x1 - 0.5 * num / den } else { x1 };
    let t0 = 2.0 * a / (3.0 * b);
    Ok(N6Fit {
        quad_coeff: a,
        c0,
        t0,
        fit_residual: resid / norm,
        grid_minimizer,
        minimizer_gap: (t0 - grid_minimizer).abs() / grid_minimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use approx::assert_relative_eq;

    fn spec7(m: f64) -> ReducedEnergySpec {
        let mut cfg = ModelConfig::new(7, Geometry::ConformallyFlat).unwrap();
        cfg.bump = BumpSpec::with_plateau(m);
        ReducedEnergySpec::from_config(&cfg)
    }

    #[test]
    fn kernel_jet_matches_differences() {
        let (n, a, t, u) = (7.0, 1.0 / 35.0, 0.4, 3.0);
        let k = kernel_jet(n, a, t, u);
        let h = 1e-3;
        let d = |g: &dyn Fn(f64) -> f64, x: f64| (8.0 * (g(x + h) - g(x - h)) - (g(x + 2.0 * h) - g(x - 2.0 * h))) / (12.0 * h);
        let ft = d(&|s| kernel_jet(n, a, s, u).f, t);
        let fu = d(&|s| kernel_jet(n, a, t, s).f, u);
        let ftt = d(&|s| kernel_jet(n, a, s, u).ft, t);
        let fuu = d(&|s| kernel_jet(n, a, t, s).fu, u);
        let ftu = d(&|s| kernel_jet(n, a, t, s).ft, u);
        assert_relative_eq!(k.ft, ft, max_relative = 1e-8);
        assert_relative_eq!(k.fu, fu, max_relative = 1e-8);
        assert_relative_eq!(k.ftt, ftt, max_relative = 1e-7);
        assert_relative_eq!(k.fuu, fuu, max_relative = 1e-7);
        assert_relative_eq!(k.ftu, ftu, max_relative = 1e-7);
    }

    #[test]
    fn two_routes_to_dt_agree() {
        let s = spec7(20.0);
        for &t in &[0.2, 0.30746, 0.5] {
            let a = s.dt_h_radial(t).unwrap();
            let b = s.dt_h_cutoff_form(t).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-6);
        }
    }

    #[test]
    fn n6_fit_recovers_polynomial() {
        let ts: Vec<f64> = (1..=9).map(|i| 0.002 * f64::from(i)).collect();
        let ys: Vec<f64> = ts.iter().map(|t| -3.0e4 * t * t + 7.0 * 4.0e5 * t.powi(3)).collect();
        let fit = reduced_n6_fit(7.0, &ts, &ys).unwrap();
        assert_relative_eq!(fit.quad_coeff, 3.0e4, max_relative = 1e-10);
        assert_relative_eq!(fit.c0, 4.0e5, max_relative = 1e-10);
        assert!(fit.fit_residual < 1e-12);
        assert!(fit.minimizer_gap < 0.02);
    }

    #[test]
    fn negative_c0_is_rejected() {
        let ts = [0.1, 0.2, 0.3, 0.4];
        let ys: Vec<f64> = ts.iter().map(|&t: &f64| -t * t - t.powi(3)).collect();
        assert!(matches!(reduced_n6_fit(7.0, &ts, &ys), Err(Error::NonPositiveC0(_))));
    }
}
