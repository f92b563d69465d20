//! Radial finite-volume discretization of the truncated equation
//! `Δ_g u + h u = f (u⁺)^{2*-1} + π² η_ε(u)^{-2*-1}` on `S^n`, damped and
//! deflated Newton solves, linearization spectra, the projected correction
//! `(φ, λ₀)` and the family of peaked solutions.
//!
//! Every unknown sits at a node of a [`Grid`]. The stiffness matrix `S` has
//! the face weights as couplings, so `S` is symmetric, its rows sum to zero
//! and `V⁻¹S` approximates `-u'' - (n-1) cot θ u'` with `V` the cell volumes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{CoefficientSamples, Residual};
use crate::error::{Error, Result};
use crate::grid::{Grading, Grid, RadialField};
use crate::model::ModelConfig;
use crate::profiles::{BubbleParams, BubbleProfile, LocalCoefficients};
use crate::reduced::{find_critical, ReducedEnergySpec};
use crate::roots::{brent, sign_changes};
use crate::tridiag::{SymTridiag, TridiagLu};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedOperator {
    pub grid: Arc<Grid>,
    /// Symmetric stiffness matrix `S`.
    pub stiffness: SymTridiag,
    pub coeffs: CoefficientSamples,
    pub two_star: f64,
    pub epsilon_trunc: f64,
}

impl DiscretizedOperator {
    /// `V⁻¹ S u`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.apply(u).iter().zip(&self.grid.volumes).map(|(s, v)| s / v).collect()
    }

    fn eta(&self, u: f64) -> f64 {
        u.max(self.epsilon_trunc)
    }

    /// `F(u) = S u + V (h u - f (u⁺)^{2*-1} - π² η(u)^{-2*-1})` and the
    /// pointwise scale used to normalize it.
    pub fn residual(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let su = self.stiffness.apply(u);
        let ts = self.two_star;
        let c = &self.coeffs;
        let m = u.len();
        let mut r = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for i in 0..m {
            let v = self.grid.volumes[i];
            let (hu, fu, pu) = (c.h[i] * u[i], c.f[i] * u[i].max(0.0).powf(ts - 1.0), c.pi_sq[i] * self.eta(u[i]).powf(-ts - 1.0));
            r.push(su[i] + v * (hu - fu - pu));
            let mut lap = self.stiffness.d[i].abs() * u[i].abs();
            if i > 0 {
                lap += self.stiffness.e[i - 1].abs() * u[i - 1].abs();
            }
            if i + 1 < m {
                lap += self.stiffness.e[i].abs() * u[i + 1].abs();
            }
            scale.push(lap / v + hu.abs() + fu.abs() + pu.abs());
        }
        (r, scale)
    }

    /// `max_i |F_i / V_i| / scale_i`.
    pub fn residual_sup(&self, u: &[f64]) -> f64 {
        let (r, s) = self.residual(u);
        r.iter().zip(&s).zip(&self.grid.volumes).fold(0.0f64, |a, ((r, s), v)| a.max((r / v).abs() / s))
    }

    /// Potential of the linearization, `h - (2*-1) f u^{2*-2} + (2*+1) π² u^{-2*-2}`
    /// (the last term only where the truncation is inactive).
    pub fn potential(&self, u: &[f64]) -> Vec<f64> {
        let ts = self.two_star;
        let c = &self.coeffs;
        u.iter()
            .enumerate()
            .map(|(i, &x)| {
                let foc = if x > 0.0 { (ts - 1.0) * c.f[i] * x.powf(ts - 2.0) } else { 0.0 };
                let neg = if x > self.epsilon_trunc { (ts + 1.0) * c.pi_sq[i] * x.powf(-ts - 2.0) } else { 0.0 };
                c.h[i] - foc + neg
            })
            .collect()
    }

    /// Jacobian `S + V diag(potential)`.
    pub fn jacobian(&self, u: &[f64]) -> SymTridiag {
        let q = self.potential(u);
        let d = self.stiffness.d.iter().zip(&q).zip(&self.grid.volumes).map(|((s, q), v)| s + v * q).collect();
        SymTridiag { d, e: self.stiffness.e.clone() }
    }

    /// `V^{-1/2} J V^{-1/2}`, whose spectrum is that of `J` in the volume
    /// inner product.
    pub fn symmetric_linearization(&self, u: &[f64]) -> SymTridiag {
        let j = self.jacobian(u);
        let v = &self.grid.volumes;
        let d = j.d.iter().zip(v).map(|(d, v)| d / v).collect();
        let e = j.e.iter().enumerate().map(|(i, e)| e / (v[i] * v[i + 1]).sqrt()).collect();
        SymTridiag { d, e }
    }

    /// `∫(|∇u|² + u²) dv_g`.
    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        let su = self.stiffness.apply(u);
        let g: f64 = su.iter().zip(u).map(|(a, b)| a * b).sum();
        let l2: f64 = u.iter().zip(&self.grid.volumes).map(|(a, v)| a * a * v).sum();
        (g + l2).sqrt()
    }

    /// Factorization of the Jacobian in the volume-balanced form
    /// `V^{-1/2} J V^{-1/2}`. Near the pole the cell volumes span dozens of
    /// orders of magnitude, so factoring `J` itself loses the pole rows.
    pub fn factor_jacobian(&self, u: &[f64]) -> Result<ScaledLu> {
        let lu = self.symmetric_linearization(u).factor()?;
        let scale = self.grid.volumes.iter().map(|v| v.sqrt().recip()).collect();
        Ok(ScaledLu { lu, scale })
    }

    fn l2_dist_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.grid.volumes).map(|((x, y), v)| (x - y).powi(2) * v).sum()
    }
}

/// Solver for `J x = y` through the balanced matrix.
pub struct ScaledLu {
    lu: TridiagLu,
    scale: Vec<f64>,
}

impl ScaledLu {
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = y.iter().zip(&self.scale).map(|(y, s)| y * s).collect();
        self.lu.solve(&z).iter().zip(&self.scale).map(|(x, s)| x * s).collect()
    }
}

/// Operator for a grid; `resolve` is the smallest scale that must carry at
/// least 12 nodes.
pub fn assemble_operator(cfg: &ModelConfig, grid: Arc<Grid>, coeffs: CoefficientSamples, resolve: f64) -> Result<DiscretizedOperator> {
    grid.check_resolves(resolve)?;
    if coeffs.h.len() != grid.len() || coeffs.f.len() != grid.len() || coeffs.pi_sq.len() != grid.len() {
        return Err(Error::IncompatibleGrids);
    }
    let m = grid.len();
    let mut d = vec![0.0; m];
    let mut e = vec![0.0; m - 1];
    for (i, &w) in grid.face_weights.iter().enumerate() {
        d[i] += w;
        d[i + 1] += w;
        e[i] = -w;
    }
    Ok(DiscretizedOperator {
        stiffness: SymTridiag::new(d, e)?,
        grid,
        coeffs,
        two_star: cfg.dims.two_star,
        epsilon_trunc: cfg.base.epsilon_trunc,
    })
}

/// Graded grid resolving `δ` and the coefficients for a bump at the pole.
pub fn operator_for(cfg: &ModelConfig, epsilon: f64, delta: f64, cells: usize) -> Result<DiscretizedOperator> {
    let entry = cfg.entry_for_epsilon(epsilon)?;
    let grid = Arc::new(Grid::graded(cfg.dims.n, &Grading::for_scale(delta, cells)?)?);
    let lc = LocalCoefficients::new(cfg, entry.epsilon, entry.mu)?;
    let coeffs = CoefficientSamples::from_local(&lc, &grid.nodes);
    assemble_operator(cfg, grid, coeffs, delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Target for [`DiscretizedOperator::residual_sup`].
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 80, armijo: 1e-4, min_step: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: RadialField,
    pub resid_sup: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub morse_index: usize,
    /// Scaled `λ₀` at the solution when bubble coordinates were supplied.
    pub lambda0: Option<f64>,
    pub iterations: usize,
    /// Nodes where the truncation `η_ε` was active at the end.
    pub eta_active: usize,
}

fn merit(r: &[f64], v: &[f64]) -> f64 {
    r.iter().zip(v).map(|(r, v)| r * r / v).sum()
}

/// Gradient of `log M` for the deflation factor `M = Π_j (1/‖u - u_j‖² + 1)`.
fn deflation(op: &DiscretizedOperator, u: &[f64], roots: &[Vec<f64>]) -> Vec<f64> {
    let v = &op.grid.volumes;
    let mut g = vec![0.0; u.len()];
    for root in roots {
        let d2 = op.l2_dist_sq(u, root);
        let m = 1.0 / d2 + 1.0;
        let c = -2.0 / (d2 * d2) / m;
        for i in 0..u.len() {
            g[i] += c * v[i] * (u[i] - root[i]);
        }
    }
    g
}

fn deflation_factor(op: &DiscretizedOperator, u: &[f64], roots: &[Vec<f64>]) -> f64 {
    roots.iter().map(|r| 1.0 / op.l2_dist_sq(u, r) + 1.0).product()
}

fn newton_core(op: &DiscretizedOperator, initial: &[f64], roots: &[Vec<f64>], opts: &NewtonOptions) -> Result<(Vec<f64>, usize)> {
    if initial.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter { name: "initial", reason: "must be strictly positive".into() });
    }
    let v = &op.grid.volumes;
    let mut u = initial.to_vec();
    let mut res = op.residual(&u).0;
    for it in 0..opts.max_iter {
        if op.residual_sup(&u) < opts.tol {
            return Ok((u, it));
        }
        let lu = op.factor_jacobian(&u)?;
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let mut d = lu.solve(&neg);
        if !roots.is_empty() {
            let g = deflation(op, &u, roots);
            let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let tau = 1.0 / (1.0 - gd);
            d.iter_mut().for_each(|x| *x *= tau);
        }
        let phi0 = merit(&res, v) * deflation_factor(op, &u, roots).powi(2);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if trial.iter().all(|&x| x > 0.0) {
                let r = op.residual(&trial).0;
                let phi = merit(&r, v) * deflation_factor(op, &trial, roots).powi(2);
                if phi.is_finite() && phi <= (1.0 - 2.0 * opts.armijo * step) * phi0 {
                    u = trial;
                    res = r;
                    break;
                }
            }
            step *= 0.5;
            if step < opts.min_step {
                return Err(Error::NewtonFailed { iterations: it, residual: op.residual_sup(&u), last: Box::new(u) });
            }
        }
    }
    let r = op.residual_sup(&u);
    if r < opts.tol {
        return Ok((u, opts.max_iter));
    }
    Err(Error::NewtonFailed { iterations: opts.max_iter, residual: r, last: Box::new(u) })
}

/// Kernel direction `b = (S + V h) Z₀` of a bubble at the pole.
fn kernel_row(op: &DiscretizedOperator, prof: &BubbleProfile) -> (Vec<f64>, Vec<f64>) {
    let z0: Vec<f64> = op.grid.nodes.iter().map(|&t| prof.z0(2.0 * (0.5 * t).tan())).collect();
    let sz = op.stiffness.apply(&z0);
    let b = sz.iter().zip(&z0).zip(op.grid.volumes.iter().zip(&op.coeffs.h)).map(|((s, z), (v, h))| s + v * h * z).collect();
    (z0, b)
}

fn finish(op: &DiscretizedOperator, u: Vec<f64>, iterations: usize, bubble: Option<&BubbleProfile>) -> Result<SolveResult> {
    let resid_sup = op.residual_sup(&u);
    let morse_index = op.symmetric_linearization(&u).count_below(0.0);
    let lambda0 = match bubble {
        Some(prof) => {
            let (res, scale) = op.residual(&u);
            let (_, b) = kernel_row(op, prof);
            let v = &op.grid.volumes;
            let num: f64 = b.iter().zip(&res).zip(v).map(|((b, r), v)| b * r / v).sum();
            let den: f64 = b.iter().zip(v).map(|(b, v)| b * b / v).sum();
            let bmax = b.iter().zip(v).fold(0.0f64, |a, (b, v)| a.max((b / v).abs()));
            let smax = scale.iter().fold(0.0f64, |a, s| a.max(*s));
            Some((num / den).abs() * bmax / smax)
        }
        None => None,
    };
    let field = RadialField::new(op.grid.clone(), u)?;
    Ok(SolveResult {
        u_min: field.min(),
        u_max: field.max(),
        eta_active: field.values.iter().filter(|&&x| x < op.epsilon_trunc).count(),
        u: field,
        resid_sup,
        morse_index,
        lambda0,
        iterations,
    })
}

pub fn newton_solve(op: &DiscretizedOperator, initial: &RadialField, opts: &NewtonOptions) -> Result<SolveResult> {
    if !Arc::ptr_eq(&initial.grid, &op.grid) && *initial.grid != *op.grid {
        return Err(Error::IncompatibleGrids);
    }
    let (u, it) = newton_core(op, &initial.values, &[], opts)?;
    finish(op, u, it, None)
}

/// Newton solve that also reports `λ₀` for the bubble `prof`.
pub fn newton_solve_bubble(
    op: &DiscretizedOperator,
    initial: &RadialField,
    prof: &BubbleProfile,
    opts: &NewtonOptions,
) -> Result<SolveResult> {
    let (u, it) = newton_core(op, &initial.values, &[], opts)?;
    finish(op, u, it, Some(prof))
}

/// Distinct solutions reached from `seeds`, each search deflating all roots
/// found before it. Every seed is retried until it stops producing new
/// roots or `per_seed` roots came from it.
pub fn deflated_search(op: &DiscretizedOperator, seeds: &[RadialField], per_seed: usize, opts: &NewtonOptions) -> Result<Vec<SolveResult>> {
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for seed in seeds {
        for _ in 0..per_seed {
            let Ok((u, it)) = newton_core(op, &seed.values, &roots, opts) else { break };
            let distinct = roots.iter().all(|r| relative_l2(op, &u, r) > 1e-2);
            if !distinct {
                break;
            }
            roots.push(u.clone());
            out.push(finish(op, u, it, None)?);
        }
    }
    Ok(out)
}

fn relative_l2(op: &DiscretizedOperator, a: &[f64], b: &[f64]) -> f64 {
    let zero = vec![0.0; a.len()];
    op.l2_dist_sq(a, b).sqrt() / op.l2_dist_sq(a, &zero).sqrt().max(op.l2_dist_sq(b, &zero).sqrt())
}

/// Lowest `m` eigenvalues of the linearization at `u` in the volume inner
/// product.
///
/// Bisection on the balanced matrix brackets each eigenvalue; its absolute
/// accuracy is limited by the large entries at the pole cells. Each value is
/// then refined by inverse iteration and a Rayleigh quotient evaluated in
/// difference form, which is accurate relative to the eigenvalue itself.
pub fn linearization_spectrum(op: &DiscretizedOperator, u: &RadialField, m: usize, rel_tol: f64) -> Result<Vec<f64>> {
    let a = op.symmetric_linearization(&u.values);
    let q = op.potential(&u.values);
    let v = &op.grid.volumes;
    let rayleigh = |x: &[f64]| {
        let y: Vec<f64> = x.iter().zip(v).map(|(x, v)| x / v.sqrt()).collect();
        let grad: f64 = op.grid.face_weights.iter().enumerate().map(|(i, w)| w * (y[i + 1] - y[i]).powi(2)).sum();
        let pot: f64 = y.iter().zip(&q).zip(v).map(|((y, q), v)| q * v * y * y).sum();
        let mass: f64 = y.iter().zip(v).map(|(y, v)| v * y * y).sum();
        (grad + pot) / mass
    };
    let mut out = Vec::new();
    for j in 0..m.min(a.len()) {
        let lam = a.eigenvalue(j, rel_tol)?;
        let below = if j > 0 { a.eigenvalue(j - 1, rel_tol)? } else { f64::NEG_INFINITY };
        let above = if j + 1 < a.len() { a.eigenvalue(j + 1, rel_tol)? } else { f64::INFINITY };
        let shift = lam + 1e-9 * (lam.abs() + 1.0);
        let mut shifted = a.clone();
        shifted.d.iter_mut().for_each(|d| *d -= shift);
        let lu = shifted.factor()?;
        let mut x = vec![1.0; a.len()];
        for _ in 0..4 {
            x = lu.solve(&x);
            let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
            x.iter_mut().for_each(|t| *t /= norm);
        }
        let rq = rayleigh(&x);
        // Keep the bisection value if the iteration drifted to a neighbour.
        let gap = (lam - below).min(above - lam);
        out.push(if (rq - lam).abs() < 0.25 * gap { rq } else { lam });
    }
    Ok(out)
}

/// Base field `u₀` plus the bubble of `prof` at the pole.
pub fn ansatz(op: &DiscretizedOperator, u0: f64, prof: &BubbleProfile) -> RadialField {
    RadialField::from_fn(op.grid.clone(), |t| u0 + prof.w(2.0 * (0.5 * t).tan()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPoint {
    pub t: f64,
    pub lambda0: f64,
    pub phi_h1: f64,
    /// `‖R‖` in `L^{2n/(n+2)}` for the ansatz at this `t`.
    pub resid_norm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    pub points: Vec<CorrectionPoint>,
    pub zero_crossing: Option<f64>,
    pub bracket: Option<[f64; 2]>,
    /// `max ‖φ‖_{H¹} / ‖R‖`.
    pub phi_constant: f64,
}

/// Bordered Newton for `F(u₀ + W + φ) = λ₀ b`, `bᵀφ = 0`.
fn correction_at(
    cfg: &ModelConfig,
    op: &DiscretizedOperator,
    epsilon: f64,
    t: f64,
    opts: &NewtonOptions,
) -> Result<(f64, Vec<f64>, usize)> {
    let entry = cfg.entry_for_epsilon(epsilon)?;
    let bp = BubbleParams::new(cfg, &entry, t, vec![0.0; cfg.dims.n as usize])?;
    let prof = bp.profile(cfg.dims.n);
    let base = ansatz(op, cfg.base.u0, &prof).values;
    let (_, b) = kernel_row(op, &prof);
    let mut phi = vec![0.0; base.len()];
    let mut lam = 0.0;
    let v = &op.grid.volumes;
    let bnorm = b.iter().zip(v).map(|(b, v)| b * b / v).sum::<f64>().sqrt();
    for it in 0..opts.max_iter {
        let u: Vec<f64> = base.iter().zip(&phi).map(|(a, p)| a + p).collect();
        let (mut r, scale) = op.residual(&u);
        r.iter_mut().zip(&b).for_each(|(r, b)| *r -= lam * b);
        let sup = r.iter().zip(&scale).zip(v).fold(0.0f64, |a, ((r, s), v)| a.max((r / v).abs() / s));
        let cons: f64 = b.iter().zip(&phi).map(|(b, p)| b * p).sum();
        if sup < opts.tol && cons.abs() <= 1e-12 * bnorm * op.h1_norm(&phi).max(1e-300) {
            return Ok((lam, phi, it));
        }
        let lu = op.factor_jacobian(&u)?;
        let x1 = lu.solve(&r.iter().map(|x| -x).collect::<Vec<_>>());
        let x2 = lu.solve(&b);
        let bx2: f64 = b.iter().zip(&x2).map(|(a, c)| a * c).sum();
        let bx1: f64 = b.iter().zip(&x1).map(|(a, c)| a * c).sum();
        let scale_b: f64 = b.iter().zip(v).map(|(b, v)| b * b / v).sum();
        if !(bx2.abs() > 1e-14 * scale_b) {
            return Err(Error::SingularBordered { condition: bx2.abs() / scale_b });
        }
        let dl = (-cons - bx1) / bx2;
        let mut step = 1.0;
        let dphi: Vec<f64> = x1.iter().zip(&x2).map(|(a, c)| a + dl * c).collect();
        // Keep u positive.
        while u.iter().zip(&dphi).any(|(a, d)| a + step * d <= 0.0) {
            step *= 0.5;
            if step < opts.min_step {
                return Err(Error::NewtonFailed { iterations: it, residual: sup, last: Box::new(u) });
            }
        }
        phi.iter_mut().zip(&dphi).for_each(|(p, d)| *p += step * d);
        lam += step * dl;
    }
    Err(Error::NewtonFailed { iterations: opts.max_iter, residual: f64::NAN, last: Box::new(phi) })
}

pub fn projected_correction(
    cfg: &ModelConfig,
    op: &DiscretizedOperator,
    epsilon: f64,
    t_grid: &[f64],
    opts: &NewtonOptions,
) -> Result<ReductionResult> {
    let runs = crate::par::map(t_grid, |&t| -> Result<CorrectionPoint> {
        let (lambda0, phi, iterations) = correction_at(cfg, op, epsilon, t, opts)?;
        let entry = cfg.entry_for_epsilon(epsilon)?;
        let bp = BubbleParams::new(cfg, &entry, t, vec![0.0; cfg.dims.n as usize])?;
        let resid_norm = Residual::new(cfg, &bp)?.norm_sq()?.sqrt();
        Ok(CorrectionPoint { t, lambda0, phi_h1: op.h1_norm(&phi), resid_norm, iterations })
    });
    let points: Vec<CorrectionPoint> = runs.into_iter().collect::<Result<_>>()?;
    let lams: Vec<f64> = points.iter().map(|p| p.lambda0).collect();
    let (zero_crossing, bracket) = match sign_changes(&lams).first() {
        Some(&i) => {
            let (a, b) = (t_grid[i], t_grid[i + 1]);
            let root = brent(|t| correction_at(cfg, op, epsilon, t, opts).map(|r| r.0), a, b, 1e-8 * b, 100)?;
            (Some(root), Some([a, b]))
        }
        None => (None, None),
    };
    let phi_constant = points.iter().fold(0.0f64, |a, p| a.max(p.phi_h1 / p.resid_norm));
    Ok(ReductionResult { points, zero_crossing, bracket, phi_constant })
}

/// Linear interpolation of `u` onto another grid, constant beyond the end
/// nodes.
pub fn resample(u: &RadialField, grid: Arc<Grid>) -> RadialField {
    let xs = &u.grid.nodes;
    let ys = &u.values;
    RadialField::from_fn(grid, |t| {
        let j = xs.partition_point(|&x| x < t);
        if j == 0 {
            ys[0]
        } else if j == xs.len() {
            ys[xs.len() - 1]
        } else {
            let w = (t - xs[j - 1]) / (xs[j] - xs[j - 1]);
            ys[j - 1] * (1.0 - w) + ys[j] * w
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakedSolution {
    pub solution: SolveResult,
    /// Scale at which `λ₀` vanishes.
    pub t: f64,
    pub bracket: [f64; 2],
}

/// Peaked solution of the radial problem seeded at `u₀ + W(t_seed)`: the
/// scale is moved to a root of `λ₀(t)` found by geometric stepping away from
/// `t_seed`, then `u₀ + W(t) + φ(t)` is polished by Newton.
///
/// Plain Newton from the ansatz tends to stall because the dilation mode of
/// the bubble is nearly in the kernel of the linearization.
pub fn peaked_solve(
    cfg: &ModelConfig,
    op: &DiscretizedOperator,
    epsilon: f64,
    t_seed: f64,
    opts: &NewtonOptions,
) -> Result<PeakedSolution> {
    let lam = |t: f64| correction_at(cfg, op, epsilon, t, opts).map(|r| r.0);
    let ratio = 2f64.powf(0.125);
    let l0 = lam(t_seed)?;
    let mut bracket = None;
    let (mut lo, mut hi) = (t_seed, t_seed);
    let (mut llo, mut lhi) = (l0, l0);
    for _ in 0..24 {
        let (a, b) = (lo / ratio, hi * ratio);
        let (la, lb) = (lam(a)?, lam(b)?);
        if la * llo <= 0.0 {
            bracket = Some([a, lo]);
            break;
        }
        if lb * lhi <= 0.0 {
            bracket = Some([hi, b]);
            break;
        }
        (lo, hi, llo, lhi) = (a, b, la, lb);
    }
    let bracket = bracket.ok_or(Error::NoBracket { what: "lambda0 zero", lo, hi })?;
    let t = brent(lam, bracket[0], bracket[1], 1e-10 * bracket[1], 200)?;
    let (_, phi, _) = correction_at(cfg, op, epsilon, t, opts)?;
    let entry = cfg.entry_for_epsilon(epsilon)?;
    let prof = BubbleParams::new(cfg, &entry, t, vec![0.0; cfg.dims.n as usize])?.profile(cfg.dims.n);
    let u: Vec<f64> = ansatz(op, cfg.base.u0, &prof).values.iter().zip(&phi).map(|(a, p)| a + p).collect();
    let (u, iterations) = newton_core(op, &u, &[], opts)?;
    Ok(PeakedSolution { solution: finish(op, u, iterations, Some(&prof))?, t, bracket })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub epsilon: f64,
    pub mu: f64,
    pub t_seed: f64,
    pub delta: f64,
    pub solution: Option<SolveResult>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub members: Vec<FamilyMember>,
    /// Relative `L²` distances on the finest grid, `[i][j]`.
    pub distances: Vec<Vec<f64>>,
    pub sup_ratios: Vec<f64>,
    pub all_converged: bool,
    pub pairwise_distinct: bool,
    pub sup_increasing: bool,
    pub above_truncation: bool,
}

/// One peaked solution per `ε`, seeded at `u₀ + W(t_M, 0)`.
pub fn family_construct(cfg: &ModelConfig, eps_list: &[f64], cells: usize, opts: &NewtonOptions) -> Result<FamilyReport> {
    let cp = find_critical(&ReducedEnergySpec::from_config(cfg))?;
    let t_seed = cp.t_m;
    let members = crate::par::map(eps_list, |&eps| -> Result<(FamilyMember, Option<Arc<Grid>>)> {
        let entry = cfg.entry_for_epsilon(eps)?;
        let bp = BubbleParams::new(cfg, &entry, t_seed, vec![0.0; cfg.dims.n as usize])?;
        let op = operator_for(cfg, eps, bp.delta / 3.0, cells)?;
        let (solution, failure) = match peaked_solve(cfg, &op, eps, t_seed, opts) {
            Ok(s) => (Some(s.solution), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Ok((FamilyMember { epsilon: eps, mu: entry.mu, t_seed, delta: bp.delta, solution, failure }, Some(op.grid.clone())))
    });
    let members: Vec<(FamilyMember, Option<Arc<Grid>>)> = members.into_iter().collect::<Result<_>>()?;
    let finest = members.iter().filter_map(|m| m.1.clone()).min_by(|a, b| a.faces[1].total_cmp(&b.faces[1]));
    let members: Vec<FamilyMember> = members.into_iter().map(|m| m.0).collect();
    let k = members.len();
    let mut distances = vec![vec![0.0; k]; k];
    if let Some(grid) = finest {
        let fields: Vec<Option<RadialField>> = members.iter().map(|m| m.solution.as_ref().map(|s| resample(&s.u, grid.clone()))).collect();
        for i in 0..k {
            for j in 0..k {
                distances[i][j] = match (&fields[i], &fields[j]) {
                    (Some(a), Some(b)) => a.relative_distance(b)?,
                    _ => f64::NAN,
                };
            }
        }
    }
    let sups: Vec<f64> = members.iter().map(|m| m.solution.as_ref().map_or(f64::NAN, |s| s.u_max)).collect();
    let sup_ratios: Vec<f64> = sups.windows(2).map(|w| w[1] / w[0]).collect();
    let all_converged = members.iter().all(|m| m.solution.is_some());
    let pairwise_distinct = (0..k).all(|i| (0..k).all(|j| i == j || distances[i][j] > 1e-2));
    let decreasing = eps_list.windows(2).all(|w| w[1] < w[0]);
    Ok(FamilyReport {
        sup_increasing: all_converged && decreasing && sup_ratios.iter().all(|&r| r >= 2.0),
        above_truncation: members.iter().all(|m| m.solution.as_ref().is_some_and(|s| s.u_min >= cfg.base.epsilon_trunc)),
        members,
        distances,
        sup_ratios,
        all_converged,
        pairwise_distinct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;

    fn base_op(cells: usize) -> (ModelConfig, DiscretizedOperator) {
        let cfg = ModelConfig::new(7, Geometry::ConformallyFlat).unwrap();
        let grid = Arc::new(Grid::graded(7, &Grading::for_scale(1e-2, cells).unwrap()).unwrap());
        let coeffs = CoefficientSamples::base(&cfg, grid.len());
        let op = assemble_operator(&cfg, grid, coeffs, 1e-2).unwrap();
        (cfg, op)
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let (_, op) = base_op(400);
        let one = vec![1.0; op.grid.len()];
        let su = op.stiffness.apply(&one);
        assert!(su.iter().zip(&op.stiffness.d).all(|(s, d)| s.abs() <= 4.0 * f64::EPSILON * d));
    }

    #[test]
    fn base_solution_converges_immediately() {
        let (_, op) = base_op(400);
        let u = RadialField::constant(op.grid.clone(), 1.0);
        let s = newton_solve(&op, &u, &NewtonOptions::default()).unwrap();
        assert!(s.iterations <= 2 && s.resid_sup < 1e-12);
        assert_eq!(s.morse_index, 0);
    }

    #[test]
    fn stable_base_spectrum() {
        let (_, op) = base_op(400);
        let u = RadialField::constant(op.grid.clone(), 1.0);
        let ev = linearization_spectrum(&op, &u, 2, 1e-14).unwrap();
        // Zonal harmonics of degree l shift the constant potential by l(l + 6).
        assert!((ev[0] - 36.4).abs() < 1e-12 * 36.4, "{ev:?}");
        assert!((ev[1] - 43.4).abs() < 1e-3 * 43.4, "{ev:?}");
    }
}
