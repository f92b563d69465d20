//! Bump profiles, physical coefficients, the bubble ansatz and its kernel
//! elements, all in the normalized stereographic chart of `S^n`.
//!
//! The chart centered at `c` sends `z ∈ R^n` to
//! `((1 - |z|²/4) c + Σ z_i e_i) / (1 + |z|²/4)`. The round metric pulls back
//! to `(1 + |z|²/4)^{-2} |dz|²`, so `Λ_c = (1 + |z|²/4)^{(n-2)/2}` flattens it
//! exactly and the conformal Laplacian satisfies
//! `(Δ_g + c_n S_g)(Λ U) = Λ^{2*-1} Δ_flat U`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ScheduleEntry};

/// Value with first and second derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

fn phi_jet(x: f64) -> Jet {
    if x <= 0.0 {
        return Jet::default();
    }
    let v = (-1.0 / x).exp();
    let x2 = x * x;
    Jet { v, d1: v / x2, d2: v * (1.0 - 2.0 * x) / (x2 * x2) }
}

/// `C^∞` step: 1 for `x <= 0`, 0 for `x >= 1`, monotone in between.
pub fn smooth_step(x: f64) -> Jet {
    if x <= 0.0 {
        return Jet { v: 1.0, d1: 0.0, d2: 0.0 };
    }
    if x >= 1.0 {
        return Jet::default();
    }
    let pa = phi_jet(1.0 - x);
    let pb = phi_jet(x);
    let a = pa.v;
    let b = pb.v;
    let da = -pa.d1;
    let db = pb.d1;
    let dda = pa.d2;
    let ddb = pb.d2;
    let s = a + b;
    let num = da * b - a * db;
    let dnum = dda * b - a * ddb;
    let v = a / s;
    let d1 = num / (s * s);
    let d2 = (dnum * s - 2.0 * num * (da + db)) / (s * s * s);
    Jet { v, d1, d2 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// `φ(1-x)/(φ(1-x)+φ(x))` with `φ(x) = e^{-1/x}`.
    SmoothStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cutoff {
    /// Plateau `[-M, M]`, support `[-M-1, M+1]`.
    Beta,
    /// Plateau `[-1, 1]`, support `[-2, 2]`.
    Chi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub m: f64,
    pub transition: Transition,
}

impl Default for BumpSpec {
    fn default() -> Self {
        Self { m: 20.0, transition: Transition::SmoothStep }
    }
}

impl BumpSpec {
    pub fn with_plateau(m: f64) -> Self {
        Self { m, ..Self::default() }
    }

    /// Value and `s`-derivatives of the cutoff.
    pub fn cutoff_jet(&self, which: Cutoff, s: f64) -> Jet {
        let plateau = match which {
            Cutoff::Beta => self.m,
            Cutoff::Chi => 1.0,
        };
        let j = match self.transition {
            Transition::SmoothStep => smooth_step(s.abs() - plateau),
        };
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        Jet { v: j.v, d1: sign * j.d1, d2: j.d2 }
    }

    pub fn cutoff_eval(&self, which: Cutoff, s: f64) -> f64 {
        self.cutoff_jet(which, s).v
    }

    /// Radial profile `Ψ(ρ) = -ρ² β(ρ²)` and its derivative.
    pub fn psi_radial(&self, rho: f64) -> (f64, f64) {
        let s = rho * rho;
        let b = self.cutoff_jet(Cutoff::Beta, s);
        (-s * b.v, -2.0 * rho * (b.v + s * b.d1))
    }

    pub fn psi_eval(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().map(|v| v * v).sum();
        -s * self.cutoff_eval(Cutoff::Beta, s)
    }

    /// Radius of the support of `Ψ`.
    pub fn psi_support(&self) -> f64 {
        (self.m + 1.0).sqrt()
    }
}

/// Compactly supported profile of the six-dimensional branch with a strict
/// maximum `1` at the origin: `exp(1 - 1/(1-ρ²))` on the unit ball.
pub fn n6_profile(rho: f64) -> f64 {
    let s = rho * rho;
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s)).exp()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Point of `S^n ⊂ R^{n+1}`.
pub type SpherePoint = Vec<f64>;

/// Normalized stereographic chart: a center and an orthonormal tangent frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub center: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

impl Chart {
    /// Chart at `ξ₀ = e_{n+1}` with frame `e_1, ..., e_n`.
    pub fn pole(n: usize) -> Self {
        let mut center = vec![0.0; n + 1];
        center[n] = 1.0;
        let frame = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n + 1];
                e[i] = 1.0;
                e
            })
            .collect();
        Self { center, frame }
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    pub fn exp(&self, z: &[f64]) -> SpherePoint {
        let q = 0.25 * dot(z, z);
        let mut x: Vec<f64> = self.center.iter().map(|c| (1.0 - q) * c).collect();
        for (zi, e) in z.iter().zip(&self.frame) {
            for (xj, ej) in x.iter_mut().zip(e) {
                *xj += zi * ej;
            }
        }
        x.iter_mut().for_each(|v| *v /= 1.0 + q);
        x
    }

    pub fn log(&self, x: &[f64]) -> Vec<f64> {
        let denom = 1.0 + dot(x, &self.center);
        self.frame.iter().map(|e| 2.0 * dot(x, e) / denom).collect()
    }

    /// Chart distance `|log(x)| = 2 tan(θ/2)`, computed from the chord.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let chord2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        (4.0 * chord2 / (4.0 - chord2)).sqrt()
    }

    /// Conformal factor `Λ(x) = (2/(1 + ⟨x, c⟩))^{(n-2)/2}`.
    pub fn lambda(&self, x: &[f64]) -> f64 {
        let n = self.dim() as f64;
        let s = self.distance(x);
        (1.0 + 0.25 * s * s).powf(0.5 * (n - 2.0))
    }

    /// Jacobian `∂x/∂z_j` of the chart map (columns in `R^{n+1}`).
    pub fn jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let q = 0.25 * dot(z, z);
        let d = 1.0 + q;
        let mut base: Vec<f64> = self.center.iter().map(|c| (1.0 - q) * c).collect();
        for (zi, e) in z.iter().zip(&self.frame) {
            for (bj, ej) in base.iter_mut().zip(e) {
                *bj += zi * ej;
            }
        }
        (0..self.dim())
            .map(|j| {
                let zj = z[j];
                (0..self.center.len()).map(|a| (self.frame[j][a] - 0.5 * zj * self.center[a]) / d - base[a] * 0.5 * zj / (d * d)).collect()
            })
            .collect()
    }

    /// Chart centered at `exp(z)`, frame parallel-transported along the
    /// geodesic from the current center.
    pub fn transported(&self, z: &[f64]) -> Chart {
        let norm = dot(z, z).sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        let angle = 2.0 * (0.5 * norm).atan();
        let (sa, ca) = angle.sin_cos();
        let mut v = vec![0.0; self.center.len()];
        for (zi, e) in z.iter().zip(&self.frame) {
            for (vj, ej) in v.iter_mut().zip(e) {
                *vj += zi / norm * ej;
            }
        }
        let c = &self.center;
        let rotate = |w: &[f64]| -> Vec<f64> {
            let wc = dot(w, c);
            let wv = dot(w, &v);
            w.iter()
                .enumerate()
                .map(|(a, wa)| wa - wc * c[a] - wv * v[a] + wc * (ca * c[a] + sa * v[a]) + wv * (ca * v[a] - sa * c[a]))
                .collect()
        };
        Chart { center: rotate(c), frame: self.frame.iter().map(|e| rotate(e)).collect() }
    }
}

/// `(h, f, π²)` at one point, together with their deviations from the
/// unperturbed values computed without cancellation. The reference for `h`
/// is `c_n S_g` for `n >= 7` and `c_6 S_g + 2u₀` for `n = 6`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientValues {
    pub h: f64,
    pub f: f64,
    pub pi_sq: f64,
    pub h_excess: f64,
    pub f_excess: f64,
    pub pi_sq_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Perturbation {
    ScalarField { cn: f64, cn_sg: f64, pi0_sq: f64 },
    SixDim { cn_sg: f64, h0: f64, a0: f64, u0: f64 },
}

/// Coefficients around one bump center, as functions of the chart radius
/// `σ` measured from that center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCoefficients {
    kind: Perturbation,
    pub epsilon: f64,
    pub mu: f64,
    pub bump: BumpSpec,
}

impl LocalCoefficients {
    pub fn new(cfg: &ModelConfig, epsilon: f64, mu: f64) -> Result<Self> {
        let kind = match &cfg.n6 {
            Some(d) if cfg.dims.n == 6 => Perturbation::SixDim { cn_sg: cfg.base.cn_sg, h0: d.h0(), a0: d.a0, u0: d.u0 },
            None if cfg.dims.n == 6 => return Err(Error::InvalidParameter { name: "a0", reason: "the n = 6 branch needs a0".into() }),
            _ => Perturbation::ScalarField { cn: cfg.dims.c_n, cn_sg: cfg.base.cn_sg, pi0_sq: cfg.base.pi_zero_sq },
        };
        let lc = Self { kind, epsilon, mu, bump: cfg.bump };
        lc.check_positive()?;
        Ok(lc)
    }

    /// Same as [`LocalCoefficients::new`] without the positivity check. The
    /// energy expansion is an algebraic statement that does not need
    /// `π² > 0`; callers record [`LocalCoefficients::admissible`] instead.
    pub fn unchecked(cfg: &ModelConfig, epsilon: f64, mu: f64) -> Result<Self> {
        match Self::new(cfg, epsilon, mu) {
            Err(Error::NonPositiveCoefficient { .. }) => {}
            other => return other,
        }
        let kind = match &cfg.n6 {
            Some(d) if cfg.dims.n == 6 => Perturbation::SixDim { cn_sg: cfg.base.cn_sg, h0: d.h0(), a0: d.a0, u0: d.u0 },
            _ => Perturbation::ScalarField { cn: cfg.dims.c_n, cn_sg: cfg.base.cn_sg, pi0_sq: cfg.base.pi_zero_sq },
        };
        Ok(Self { kind, epsilon, mu, bump: cfg.bump })
    }

    /// Whether `f > 0` and `π² > 0` everywhere.
    pub fn admissible(&self) -> bool {
        self.check_positive().is_ok()
    }

    pub fn from_entry(cfg: &ModelConfig, entry: &ScheduleEntry) -> Result<Self> {
        Self::new(cfg, entry.epsilon, entry.mu)
    }

    /// Chart radius beyond which the coefficients are unperturbed.
    pub fn support_radius(&self) -> f64 {
        match self.kind {
            Perturbation::ScalarField { .. } => self.mu * self.bump.psi_support(),
            Perturbation::SixDim { .. } => self.mu,
        }
    }

    /// Radii where the coefficients change character (useful quadrature
    /// breakpoints).
    pub fn feature_radii(&self) -> Vec<f64> {
        match self.kind {
            Perturbation::ScalarField { .. } => {
                vec![self.mu * self.bump.m.sqrt(), self.mu * self.bump.psi_support()]
            }
            Perturbation::SixDim { .. } => vec![0.5 * self.mu, 0.9 * self.mu, self.mu],
        }
    }

    pub fn psi0(&self, sigma: f64) -> f64 {
        if !(sigma < self.support_radius()) {
            return 0.0;
        }
        match self.kind {
            Perturbation::ScalarField { .. } => self.epsilon * self.bump.psi_radial(sigma / self.mu).0,
            Perturbation::SixDim { .. } => 0.0,
        }
    }

    /// `|∇Ψ₀|_g` at chart radius `σ`.
    pub fn grad_psi0(&self, sigma: f64) -> f64 {
        if !(sigma < self.support_radius()) {
            return 0.0;
        }
        match self.kind {
            Perturbation::ScalarField { .. } => {
                let d = self.bump.psi_radial(sigma / self.mu).1;
                self.epsilon / self.mu * d.abs() * (1.0 + 0.25 * sigma * sigma)
            }
            Perturbation::SixDim { .. } => 0.0,
        }
    }

    pub fn at_radius(&self, sigma: f64) -> CoefficientValues {
        let sigma = if sigma >= self.support_radius() { f64::INFINITY } else { sigma };
        match self.kind {
            Perturbation::ScalarField { cn, cn_sg, pi0_sq } => {
                let psi = self.psi0(sigma);
                let g = self.grad_psi0(sigma);
                let cg = cn * g * g;
                CoefficientValues {
                    h: cn_sg - cg,
                    f: 1.0 + psi,
                    pi_sq: pi0_sq - cg - psi,
                    h_excess: -cg,
                    f_excess: psi,
                    pi_sq_excess: -cg - psi,
                }
            }
            Perturbation::SixDim { h0, a0, u0, .. } => {
                let b = self.epsilon * n6_profile(sigma / self.mu);
                let db = b * u0.powi(5);
                CoefficientValues { h: h0 - b, f: 1.0, pi_sq: a0 - db, h_excess: -b, f_excess: 0.0, pi_sq_excess: -db }
            }
        }
    }

    /// Unperturbed values.
    pub fn base(&self) -> CoefficientValues {
        self.at_radius(f64::INFINITY)
    }

    pub fn u0(&self) -> f64 {
        match self.kind {
            Perturbation::ScalarField { .. } => 1.0,
            Perturbation::SixDim { u0, .. } => u0,
        }
    }

    /// `c_n S_g`.
    pub fn cn_sg(&self) -> f64 {
        match self.kind {
            Perturbation::ScalarField { cn_sg, .. } | Perturbation::SixDim { cn_sg, .. } => cn_sg,
        }
    }

    /// Coefficient `q` of the quadratic part of the focusing nonlinearity that
    /// `h_excess` already accounts for (`3u₀` when `2* = 3`, else 0).
    pub fn quadratic_shift(&self) -> f64 {
        match self.kind {
            Perturbation::ScalarField { .. } => 0.0,
            Perturbation::SixDim { u0, .. } => 3.0 * u0,
        }
    }

    fn check_positive(&self) -> Result<()> {
        let rmax = self.support_radius();
        for i in 0..=4000 {
            let sigma = rmax * f64::from(i) / 4000.0;
            let c = self.at_radius(sigma);
            if !(c.f > 0.0) {
                return Err(Error::NonPositiveCoefficient { which: "f", value: c.f, radius: sigma });
            }
            if !(c.pi_sq > 0.0) {
                return Err(Error::NonPositiveCoefficient { which: "pi^2", value: c.pi_sq, radius: sigma });
            }
        }
        Ok(())
    }
}

/// Global coefficient field with the bumps of a finite window of indices.
#[derive(Clone, Debug)]
pub struct BumpWindow {
    pub bumps: Vec<(u32, Chart, LocalCoefficients)>,
    base: CoefficientValues,
}

/// Geodesic angle of a chart radius.
pub fn chart_angle(s: f64) -> f64 {
    2.0 * (0.5 * s).atan()
}

impl BumpWindow {
    pub fn new(cfg: &ModelConfig, ks: std::ops::RangeInclusive<u32>) -> Result<Self> {
        let n = cfg.dims.n as usize;
        let pole = Chart::pole(n);
        let mut bumps = Vec::new();
        for k in ks {
            let e = cfg.schedule.at(cfg.dims.n, k)?;
            let lc = LocalCoefficients::from_entry(cfg, &e)?;
            bumps.push((k, pole.transported(&e.xi), lc));
        }
        // All centers sit on one meridian through ξ₀, so angular separations
        // are differences of polar angles.
        let theta: Vec<f64> = bumps.iter().map(|(_, c, _)| pole.distance(&c.center)).map(chart_angle).collect();
        let rho: Vec<f64> = bumps.iter().map(|(_, _, l)| chart_angle(l.support_radius())).collect();
        for i in 0..bumps.len() {
            if theta[i] <= rho[i] {
                return Err(Error::OverlappingSupports { a: 0, b: bumps[i].0 });
            }
            for j in i + 1..bumps.len() {
                if (theta[i] - theta[j]).abs() <= rho[i] + rho[j] {
                    return Err(Error::OverlappingSupports { a: bumps[i].0, b: bumps[j].0 });
                }
            }
        }
        let base = bumps.first().map(|(_, _, l)| l.at_radius(f64::INFINITY)).unwrap_or(CoefficientValues {
            h: cfg.base.cn_sg,
            f: 1.0,
            pi_sq: cfg.base.pi_zero_sq,
            h_excess: 0.0,
            f_excess: 0.0,
            pi_sq_excess: 0.0,
        });
        Ok(Self { bumps, base })
    }

    fn active(&self, x: &[f64]) -> Option<(f64, &LocalCoefficients)> {
        self.bumps.iter().find_map(|(_, chart, lc)| {
            let s = chart.distance(x);
            (s < lc.support_radius()).then_some((s, lc))
        })
    }

    /// `Ψ₀(x)`; at most one bump contributes.
    pub fn psi0_eval(&self, x: &[f64]) -> f64 {
        self.active(x).map_or(0.0, |(s, lc)| lc.psi0(s))
    }

    pub fn coefficients_at(&self, x: &[f64]) -> CoefficientValues {
        self.active(x).map_or(self.base, |(s, lc)| lc.at_radius(s))
    }
}

/// Coordinates of one bubble ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub k: u32,
    pub t: f64,
    pub p: Vec<f64>,
    pub epsilon: f64,
    pub mu: f64,
    pub r: f64,
    pub delta: f64,
    /// `f(y_k)`.
    pub f_center: f64,
    /// Chart of the bump center `ξ_k`.
    pub xi_chart: Chart,
    /// Chart of the bubble center `y_k = exp_{ξ_k}(μ p)`.
    pub y_chart: Chart,
}

impl BubbleParams {
    pub fn new(cfg: &ModelConfig, entry: &ScheduleEntry, t: f64, p: Vec<f64>) -> Result<Self> {
        let n = cfg.dims.n as usize;
        if !(t > 0.0) {
            return Err(Error::InvalidParameter { name: "t", reason: format!("must be positive, got {t}") });
        }
        if p.len() != n {
            return Err(Error::InvalidParameter { name: "p", reason: format!("expected {n} components") });
        }
        let pn = dot(&p, &p).sqrt();
        if pn > 1.0 {
            return Err(Error::InvalidParameter { name: "p", reason: format!("|p| = {pn} exceeds 1") });
        }
        let lc = LocalCoefficients::unchecked(cfg, entry.epsilon, entry.mu)?;
        let xi_chart = Chart::pole(n).transported(&entry.xi);
        let z: Vec<f64> = p.iter().map(|v| entry.mu * v).collect();
        let y_chart = xi_chart.transported(&z);
        Ok(Self {
            k: entry.k,
            t,
            epsilon: entry.epsilon,
            mu: entry.mu,
            r: entry.r,
            delta: entry.delta_unit * t,
            f_center: lc.at_radius(entry.mu * pn).f,
            p,
            xi_chart,
            y_chart,
        })
    }

    pub fn p_norm(&self) -> f64 {
        dot(&self.p, &self.p).sqrt()
    }

    pub fn profile(&self, n: u32) -> BubbleProfile {
        BubbleProfile::new(n, self.delta, self.r, self.f_center)
    }
}

/// The bubble and its kernel elements as functions of the chart distance
/// `s` from the bubble center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleProfile {
    pub n: u32,
    pub delta: f64,
    pub r: f64,
    pub f_center: f64,
    /// `f(y)/(n(n-2))`.
    pub a: f64,
}

impl BubbleProfile {
    pub fn new(n: u32, delta: f64, r: f64, f_center: f64) -> Self {
        let nf = f64::from(n);
        Self { n, delta, r, f_center, a: f_center / (nf * (nf - 2.0)) }
    }

    fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    /// Flat profile `U = δ^{(n-2)/2}(δ² + a s²)^{1-n/2}` and `dU/ds`.
    pub fn flat(&self, s: f64) -> (f64, f64) {
        let n = self.nf();
        let d = self.delta;
        let q = d * d + self.a * s * s;
        let scale = d.powf(0.5 * (n - 2.0));
        let u = scale * q.powf(1.0 - 0.5 * n);
        let du = -(n - 2.0) * self.a * s * scale * q.powf(-0.5 * n);
        (u, du)
    }

    /// `Λ(s) = (1 + s²/4)^{(n-2)/2}`.
    pub fn lambda(&self, s: f64) -> f64 {
        (1.0 + 0.25 * s * s).powf(0.5 * (self.nf() - 2.0))
    }

    /// `χ(s/r)` as a jet in `s`.
    pub fn chi(&self, s: f64) -> Jet {
        let j = smooth_step(s / self.r - 1.0);
        Jet { v: j.v, d1: j.d1 / self.r, d2: j.d2 / (self.r * self.r) }
    }

    /// Bubble `W = Λ χ U`.
    pub fn w(&self, s: f64) -> f64 {
        if s >= 2.0 * self.r {
            return 0.0;
        }
        self.lambda(s) * self.chi(s).v * self.flat(s).0
    }

    /// `W` and `dW/ds`.
    pub fn w_jet(&self, s: f64) -> (f64, f64) {
        if s >= 2.0 * self.r {
            return (0.0, 0.0);
        }
        let n = self.nf();
        let lam = self.lambda(s);
        let dlam = lam * (n - 2.0) * 0.25 * s / (1.0 + 0.25 * s * s);
        let c = self.chi(s);
        let (u, du) = self.flat(s);
        (lam * c.v * u, dlam * c.v * u + lam * c.d1 * u + lam * c.v * du)
    }

    /// `χ U` and its radial derivative in the flat chart.
    pub fn chi_u(&self, s: f64) -> (f64, f64) {
        let c = self.chi(s);
        let (u, du) = self.flat(s);
        (c.v * u, c.d1 * u + c.v * du)
    }

    /// `Z₀ = Λ χ δ^{(n-2)/2}(δ² + a s²)^{-n/2}(a s² - δ²)`.
    pub fn z0(&self, s: f64) -> f64 {
        if s >= 2.0 * self.r {
            return 0.0;
        }
        let n = self.nf();
        let d = self.delta;
        let q = d * d + self.a * s * s;
        self.lambda(s) * self.chi(s).v * d.powf(0.5 * (n - 2.0)) * q.powf(-0.5 * n) * (self.a * s * s - d * d)
    }

    /// Radial factor `q(s)` of `Z_i = q(s) z_i`.
    pub fn zi_factor(&self, s: f64) -> f64 {
        if s >= 2.0 * self.r {
            return 0.0;
        }
        let n = self.nf();
        let d = self.delta;
        let q = d * d + self.a * s * s;
        self.lambda(s) * self.chi(s).v * d.powf(0.5 * n) * q.powf(-0.5 * n) * self.f_center
    }

    /// `Δ_flat(χ U)` written as `χ f(y) U^{2*-1} + U Δχ - 2 χ' U'`.
    pub fn flat_laplacian_terms(&self, s: f64) -> (f64, f64) {
        let n = self.nf();
        let c = self.chi(s);
        let (u, du) = self.flat(s);
        let lap_chi = if s > 0.0 { -(c.d2 + (n - 1.0) / s * c.d1) } else { 0.0 };
        (c.v, u * lap_chi - 2.0 * c.d1 * du)
    }
}

/// Evaluation of the bubble at a sphere point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BubbleValue {
    pub value: f64,
    /// Derivative along the chart radius from the bubble center.
    pub radial_derivative: Option<f64>,
}

pub fn bubble_eval(n: u32, bp: &BubbleParams, x: &[f64], with_gradient: bool) -> BubbleValue {
    let prof = bp.profile(n);
    let s = bp.y_chart.distance(x);
    if with_gradient {
        let (w, dw) = prof.w_jet(s);
        BubbleValue { value: w, radial_derivative: Some(dw) }
    } else {
        BubbleValue { value: prof.w(s), radial_derivative: None }
    }
}

/// Kernel element `Z_i` at a sphere point.
pub fn kernel_eval(n: u32, bp: &BubbleParams, i: usize, x: &[f64]) -> Result<f64> {
    let nn = n as usize;
    if i > nn {
        return Err(Error::KernelIndex { index: i, n: nn });
    }
    let prof = bp.profile(n);
    if i == 0 {
        return Ok(prof.z0(bp.y_chart.distance(x)));
    }
    let z = bp.y_chart.log(x);
    let s = dot(&z, &z).sqrt();
    Ok(prof.zi_factor(s) * z[i - 1])
}

/// Euclidean model `V_i` on `R^n`.
pub fn model_kernel(n: u32, f_center: f64, i: usize, x: &[f64]) -> Result<f64> {
    let nn = n as usize;
    if i > nn {
        return Err(Error::KernelIndex { index: i, n: nn });
    }
    let nf = f64::from(n);
    let a = f_center / (nf * (nf - 2.0));
    let r2 = dot(x, x);
    let base = (1.0 + a * r2).powf(-0.5 * nf);
    Ok(if i == 0 { (a * r2 - 1.0) * base } else { f_center * x[i - 1] * base })
}

/// Rows `(θ, W, Z₀, h, f, π²)` along a meridian through a bubble at the bump
/// center (`p = 0`).
pub fn profile_table(cfg: &ModelConfig, bp: &BubbleParams, thetas: &[f64]) -> Result<Vec<[f64; 6]>> {
    let lc = LocalCoefficients::unchecked(cfg, bp.epsilon, bp.mu)?;
    let prof = bp.profile(cfg.dims.n);
    Ok(thetas
        .iter()
        .map(|&th| {
            let s = 2.0 * (0.5 * th).tan();
            let c = lc.at_radius(s);
            [th, prof.w(s), prof.z0(s), c.h, c.f, c.pi_sq]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Geometry;
    use approx::assert_relative_eq;

    #[test]
    fn smooth_step_derivatives_match_differences() {
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let j = smooth_step(x);
            let fd1 = (smooth_step(x + h).v - smooth_step(x - h).v) / (2.0 * h);
            let fd2 = (smooth_step(x + h).d1 - smooth_step(x - h).d1) / (2.0 * h);
            assert_relative_eq!(j.d1, fd1, max_relative = 1e-6);
            assert_relative_eq!(j.d2, fd2, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn smooth_step_symmetry() {
        for &x in &[0.05, 0.2, 0.45] {
            assert_relative_eq!(smooth_step(x).v + smooth_step(1.0 - x).v, 1.0, max_relative = 1e-15);
        }
        assert_eq!(smooth_step(0.5).v, 0.5);
    }

    #[test]
    fn psi_derivative() {
        let b = BumpSpec::with_plateau(3.0);
        for &r in &[0.5, 1.8, 1.9, 1.95, 1.99] {
            let h = 1e-6;
            let fd = (b.psi_radial(r + h).0 - b.psi_radial(r - h).0) / (2.0 * h);
            assert_relative_eq!(b.psi_radial(r).1, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn chart_round_trip() {
        let c = Chart::pole(5).transported(&[0.3, -0.1, 0.0, 0.2, 0.05]);
        let z = [0.4, 0.1, -0.7, 0.2, 0.0];
        let back = c.log(&c.exp(&z));
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let x = c.exp(&z);
        let norm: f64 = x.iter().map(|v| v * v).sum();
        assert_relative_eq!(norm, 1.0, max_relative = 1e-15);
        assert_relative_eq!(c.distance(&x), dot(&z, &z).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn transported_frame_is_orthonormal() {
        let c = Chart::pole(4).transported(&[0.3, 0.7, -0.2, 0.1]);
        for i in 0..4 {
            assert!(dot(&c.frame[i], &c.center).abs() < 1e-15);
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&c.frame[i], &c.frame[j]) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn base_coefficients_outside_support() {
        let cfg = ModelConfig::new(7, Geometry::ConformallyFlat).unwrap();
        let lc = LocalCoefficients::new(&cfg, 1e-6, 0.01).unwrap();
        let c = lc.at_radius(1.0);
        assert_eq!((c.h, c.f, c.pi_sq), (8.75, 1.0, 7.75));
    }

    #[test]
    fn kernel_index_out_of_range() {
        assert!(model_kernel(7, 1.0, 8, &[0.0; 7]).is_err());
        assert_eq!(model_kernel(7, 1.0, 0, &[0.0; 7]).unwrap(), -1.0);
    }
}
