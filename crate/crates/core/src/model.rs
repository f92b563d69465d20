//! Dimensional constants, the base solution on the unit sphere, and the
//! perturbation schedules `k ↦ (ε_k, μ_k, r_k, ξ_k)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::profiles::BumpSpec;
use crate::quadrature::QuadratureSpec;

/// Area of the unit sphere `S^m ⊂ R^{m+1}`.
pub fn sphere_area(m: u32) -> f64 {
    let h = 0.5 * f64::from(m + 1);
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionConstants {
    pub n: u32,
    /// Critical exponent `2n/(n-2)`.
    pub two_star: f64,
    /// `(n-2)/(4(n-1))`.
    pub c_n: f64,
    /// Area of the unit `S^n`.
    pub omega_n: f64,
    /// Area of the unit `S^{n-1}`.
    pub omega_n_minus_1: f64,
    /// Sharp Sobolev constant.
    pub k_n: f64,
    /// `K_n^{-n} = (n(n-2)/4)^{n/2} ω_n`, the energy scale of one bubble.
    pub k_n_pow: f64,
    /// `(n-2)^{n/2} n^{(n-2)/2}`.
    pub alpha_n: f64,
}

impl DimensionConstants {
    pub fn new(n: u32) -> Result<Self> {
        if n < 6 {
            return Err(Error::UnsupportedDimension(n));
        }
        let nf = f64::from(n);
        let omega_n = sphere_area(n);
        let k_n = (4.0 / (nf * (nf - 2.0) * omega_n.powf(2.0 / nf))).sqrt();
        Ok(Self {
            n,
            two_star: 2.0 * nf / (nf - 2.0),
            c_n: (nf - 2.0) / (4.0 * (nf - 1.0)),
            omega_n,
            omega_n_minus_1: sphere_area(n - 1),
            k_n,
            k_n_pow: (nf * (nf - 2.0) / 4.0).powf(nf / 2.0) * omega_n,
            alpha_n: (nf - 2.0).powf(nf / 2.0) * nf.powf((nf - 2.0) / 2.0),
        })
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    /// `2*` as a reduced fraction `(numerator, denominator)`.
    pub fn two_star_fraction(&self) -> (u64, u64) {
        let num = 2 * u64::from(self.n);
        let den = u64::from(self.n) - 2;
        let g = gcd(num, den);
        (num / g, den / g)
    }

    /// `c = 1/(n(n-2))`, the coefficient of `f(y)|x|^2` in the bubble.
    pub fn bubble_c(&self) -> f64 {
        1.0 / (self.nf() * (self.nf() - 2.0))
    }

    /// Mass coefficient of the bubble interaction term, `α_n ω_{n-1}`.
    pub fn mass_coefficient(&self) -> f64 {
        self.alpha_n * self.omega_n_minus_1
    }
}

/// Unperturbed data of the equation on the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseData {
    /// `c_n S_g = n(n-2)/4` on the unit sphere.
    pub cn_sg: f64,
    /// `π₀² = c_n S_g - 1`.
    pub pi_zero_sq: f64,
    /// Truncation level of `η_ε`.
    pub epsilon_trunc: f64,
    /// Constant base solution.
    pub u0: f64,
}

impl BaseData {
    pub fn unit_sphere(dims: &DimensionConstants) -> Self {
        let nf = dims.nf();
        let cn_sg = nf * (nf - 2.0) / 4.0;
        Self { cn_sg, pi_zero_sq: cn_sg - 1.0, epsilon_trunc: 0.1, u0: 1.0 }
    }

    /// Residual of the base equation at `u0 ≡ 1`: `c_n S_g - 1 - π₀²`.
    pub fn base_residual(&self) -> f64 {
        self.cn_sg - 1.0 - self.pi_zero_sq
    }
}

/// Data of the six-dimensional branch: `Δu + h u = u² + a u^{-4}` with
/// `h₀ = c_6 S_g + 2u₀` and `a₀ = 6u₀⁵ + u₀⁶` on the unit `S^6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N6Data {
    pub a0: f64,
    pub u0: f64,
}

impl N6Data {
    /// Solve `c_6 S_g u + u² = a₀ u^{-4}` (i.e. `6u⁵ + u⁶ = a₀`) for the
    /// constant positive solution.
    pub fn from_a0(a0: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::InvalidParameter { name: "a0", reason: format!("must be positive, got {a0}") });
        }
        let g = |u: f64| 6.0 * u.powi(5) + u.powi(6) - a0;
        let (mut lo, mut hi) = (0.0, 1.0);
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self { a0, u0: 0.5 * (lo + hi) })
    }

    pub fn h0(&self) -> f64 {
        6.0 + 2.0 * self.u0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Locally conformally flat (the round sphere itself).
    ConformallyFlat,
    /// Parameterized Weyl norm `|W(ξ₀)|²_g`; the sphere has none, so this only
    /// enters the limit reduced energy.
    Weyl { weyl_sq: f64 },
}

/// Which limit reduced energy applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Lcf,
    N10,
    N11Plus,
    N6,
}

impl Branch {
    pub fn select(n: u32, geometry: Geometry) -> Self {
        match (n, geometry) {
            (6, _) => Branch::N6,
            (_, Geometry::ConformallyFlat) => Branch::Lcf,
            (7..=9, Geometry::Weyl { .. }) => Branch::Lcf,
            (10, Geometry::Weyl { .. }) => Branch::N10,
            (_, Geometry::Weyl { .. }) => Branch::N11Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Lcf => "lcf",
            Branch::N10 => "non-lcf(n=10)",
            Branch::N11Plus => "non-lcf(n>=11)",
            Branch::N6 => "n6",
        }
    }

    /// Exponent of `ε` in `μ = ε^e`.
    pub fn mu_exponent(self, n: u32) -> f64 {
        match self {
            Branch::Lcf | Branch::N6 => 2.0 / (f64::from(n) - 2.0),
            Branch::N10 | Branch::N11Plus => 0.25,
        }
    }
}

/// A sequence `k ↦ value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    /// `coeff · k^{-exponent}`
    Power {
        coeff: f64,
        exponent: f64,
    },
    /// `coeff · ratio^k`
    Geometric {
        coeff: f64,
        ratio: f64,
    },
    Constant(f64),
    /// `ε_k^{exponent}`
    EpsPower {
        exponent: f64,
    },
    /// `r_k^{exponent}`
    RPower {
        exponent: f64,
    },
}

impl Rule {
    fn base(&self, k: u32) -> Option<f64> {
        let kf = f64::from(k);
        match *self {
            Rule::Power { coeff, exponent } => Some(coeff * kf.powf(-exponent)),
            Rule::Geometric { coeff, ratio } => Some(coeff * ratio.powf(kf)),
            Rule::Constant(v) => Some(v),
            Rule::EpsPower { .. } | Rule::RPower { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleMode {
    /// `μ_k` tied to `ε_k` by the geometric branch.
    BranchTied,
    /// `ε, μ, r` chosen independently.
    FreeParameter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub k0: u32,
    pub eps: Rule,
    pub mu: Rule,
    pub r: Rule,
    /// Bubble scale unit for the six-dimensional branch; `None` means `δ_k = μ_k`.
    pub delta: Option<Rule>,
    pub mode: ScheduleMode,
}

/// One entry of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub k: u32,
    pub epsilon: f64,
    pub mu: f64,
    pub r: f64,
    /// Unit of the bubble scale: `δ_k(t) = delta_unit · t`.
    pub delta_unit: f64,
    /// Chart position of `ξ_k` in the chart of `ξ₀`.
    pub xi: Vec<f64>,
}

impl Schedule {
    /// The example sequence `ε_k = k^{-4(n-2)}`, `r_k = k^{-7/3}` with `μ_k`
    /// on the branch rule.
    pub fn power_sequence(n: u32, geometry: Geometry, k0: u32) -> Self {
        let branch = Branch::select(n, geometry);
        let nf = f64::from(n);
        let delta = (n == 6).then_some(Rule::EpsPower { exponent: 1.0 });
        Self {
            k0,
            eps: Rule::Power { coeff: 1.0, exponent: 4.0 * (nf - 2.0) },
            mu: Rule::EpsPower { exponent: branch.mu_exponent(n) },
            r: Rule::Power { coeff: 1.0, exponent: 7.0 / 3.0 },
            delta,
            mode: ScheduleMode::BranchTied,
        }
    }

    /// Geometric ladder `ε = 2^{-k}`, `μ = ε^{e}`, fixed `r`.
    pub fn dyadic_ladder(n: u32, geometry: Geometry, k0: u32, r: f64) -> Self {
        let branch = Branch::select(n, geometry);
        Self {
            k0,
            eps: Rule::Geometric { coeff: 1.0, ratio: 0.5 },
            mu: Rule::EpsPower { exponent: branch.mu_exponent(n) },
            r: Rule::Constant(r),
            delta: (n == 6).then_some(Rule::EpsPower { exponent: 1.0 }),
            mode: ScheduleMode::FreeParameter,
        }
    }

    pub fn at(&self, n: u32, k: u32) -> Result<ScheduleEntry> {
        if k < self.k0 {
            return Err(Error::IndexBelowStart { k, k0: self.k0 });
        }
        let eps =
            self.eps.base(k).ok_or(Error::InvalidParameter { name: "eps", reason: "the ε rule cannot refer to itself or to r".into() })?;
        let r = match self.r {
            Rule::EpsPower { exponent } => eps.powf(exponent),
            Rule::RPower { .. } => return Err(Error::InvalidParameter { name: "r", reason: "the r rule cannot refer to itself".into() }),
            rule => rule.base(k).unwrap_or(f64::NAN),
        };
        let resolve = |rule: Rule| match rule {
            Rule::EpsPower { exponent } => eps.powf(exponent),
            Rule::RPower { exponent } => r.powf(exponent),
            rule => rule.base(k).unwrap_or(f64::NAN),
        };
        let mu = resolve(self.mu);
        let delta_unit = self.delta.map_or(mu, resolve);
        let mut xi = vec![0.0; n as usize];
        xi[0] = 1.0 / f64::from(k);
        Ok(ScheduleEntry { k, epsilon: eps, mu, r, delta_unit, xi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub checks: Vec<Check>,
}

impl ValidityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Finite-range checks of the schedule relations on `k0..=kmax`.
pub fn validate_schedule(s: &Schedule, n: u32, geometry: Geometry, kmax: u32) -> Result<ValidityReport> {
    if kmax <= s.k0 {
        return Err(Error::InvalidParameter { name: "kmax", reason: format!("must exceed k0 = {}", s.k0) });
    }
    let entries: Vec<ScheduleEntry> = (s.k0..=kmax).map(|k| s.at(n, k)).collect::<Result<_>>()?;
    let col = |f: fn(&ScheduleEntry) -> f64| entries.iter().map(f).collect::<Vec<f64>>();
    let eps = col(|e| e.epsilon);
    let mu = col(|e| e.mu);
    let r = col(|e| e.r);
    let mut rep = ValidityReport { checks: Vec::new() };
    for (name, xs) in [("epsilon", &eps), ("mu", &mu), ("r", &r)] {
        let pos = xs.iter().all(|&x| x > 0.0 && x.is_finite());
        rep.push(
            &format!("{name} positive and strictly decreasing"),
            pos && strictly_decreasing(xs),
            format!("first {:e}, last {:e}", xs[0], xs[xs.len() - 1]),
        );
    }
    let rk2: Vec<f64> = entries.iter().map(|e| e.r * f64::from(e.k).powi(2)).collect();
    rep.push("r_k k^2 decreasing", strictly_decreasing(&rk2), format!("first {:e}, last {:e}", rk2[0], rk2[rk2.len() - 1]));
    let mu_r3: Vec<f64> = entries.iter().map(|e| e.mu / e.r.powi(3)).collect();
    rep.push("mu_k / r_k^3 decreasing", strictly_decreasing(&mu_r3), format!("first {:e}, last {:e}", mu_r3[0], mu_r3[mu_r3.len() - 1]));
    if n == 6 {
        let d_mu: Vec<f64> = entries.iter().map(|e| e.delta_unit / e.mu).collect();
        rep.push("delta_k / mu_k decreasing", strictly_decreasing(&d_mu), format!("last {:e}", d_mu[d_mu.len() - 1]));
        let mu_r2: Vec<f64> = entries.iter().map(|e| e.mu / e.r.powi(2)).collect();
        rep.push("mu_k / r_k^2 decreasing", strictly_decreasing(&mu_r2), format!("last {:e}", mu_r2[mu_r2.len() - 1]));
    }
    if s.mode == ScheduleMode::BranchTied {
        let e = Branch::select(n, geometry).mu_exponent(n);
        let ok = entries.iter().all(|x| ((x.mu - x.epsilon.powf(e)) / x.mu).abs() < 1e-12);
        rep.push("mu_k follows the geometric branch", ok, format!("mu = eps^{e}"));
    }
    Ok(rep)
}

/// `η_ε(u) = max(ε, u)`.
pub fn eta_truncate(eps: f64, u: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "epsilon_trunc", reason: format!("must be positive, got {eps}") });
    }
    Ok(if u >= eps { u } else { eps })
}

/// Everything the downstream modules need to know about one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dims: DimensionConstants,
    pub base: BaseData,
    pub geometry: Geometry,
    pub bump: BumpSpec,
    pub schedule: Schedule,
    pub quadrature: QuadratureSpec,
    pub n6: Option<N6Data>,
}

impl ModelConfig {
    /// Defaults for dimension `n` (`n = 6` additionally needs [`N6Data`]).
    pub fn new(n: u32, geometry: Geometry) -> Result<Self> {
        let dims = DimensionConstants::new(n)?;
        let base = BaseData::unit_sphere(&dims);
        Ok(Self {
            base,
            geometry,
            bump: BumpSpec::default(),
            schedule: Schedule::dyadic_ladder(n, geometry, 1, 3.0),
            quadrature: QuadratureSpec::default(),
            n6: None,
            dims,
        })
    }

    pub fn n6(a0: f64) -> Result<Self> {
        let mut cfg = Self::new(6, Geometry::ConformallyFlat)?;
        let data = N6Data::from_a0(a0)?;
        cfg.base.u0 = data.u0;
        cfg.n6 = Some(data);
        Ok(cfg)
    }

    pub fn branch(&self) -> Branch {
        Branch::select(self.dims.n, self.geometry)
    }

    /// Entry for an explicit `ε` in free-parameter mode: `μ` from the branch
    /// rule, `r` from the first schedule entry, bump centred at `ξ_{k0}`.
    pub fn entry_for_epsilon(&self, epsilon: f64) -> Result<ScheduleEntry> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter { name: "epsilon", reason: format!("must lie in (0, 1), got {epsilon}") });
        }
        let first = self.schedule.at(self.dims.n, self.schedule.k0)?;
        let mu = epsilon.powf(self.branch().mu_exponent(self.dims.n));
        let delta_unit = if self.dims.n == 6 { epsilon } else { mu };
        Ok(ScheduleEntry { k: first.k, epsilon, mu, r: first.r, delta_unit, xi: first.xi })
    }

    pub fn weyl_sq(&self) -> f64 {
        match self.geometry {
            Geometry::ConformallyFlat => 0.0,
            Geometry::Weyl { weyl_sq } => weyl_sq,
        }
    }
}
