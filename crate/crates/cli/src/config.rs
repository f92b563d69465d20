//! Flat `key = value` run configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank lines
//! are ignored; keys may appear at most once. Lists are comma separated.
//! Integer ranges are written `a..b` (inclusive).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use elnum::model::{validate_schedule, Geometry, ModelConfig, Schedule};
use elnum::profiles::BumpSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// `ε = 2^{-k}` ladders with the branch rule for `μ` and fixed `r`.
    Ladder,
    /// `ε_k = k^{-4(n-2)}`, `r_k = k^{-7/3}`.
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: u32,
    /// `None` for the conformally flat sphere.
    pub weyl_sq: Option<f64>,
    /// Six-dimensional data; mandatory when `n = 6`.
    pub a0: Option<f64>,
    /// Plateau radius of the bump profile.
    pub plateau: f64,
    pub schedule: ScheduleKind,
    pub k0: u32,
    /// Cutoff radius in ladder mode.
    pub r: f64,
    /// Indices used by the power schedule.
    pub k_range: (u32, u32),
    pub eps_ladder: Vec<f64>,
    pub family_eps: Vec<f64>,
    /// `ε` of single solves and spectra.
    pub eps: f64,
    pub t: f64,
    pub p: f64,
    /// Scales of the six-dimensional reduced map.
    pub t_grid: Vec<f64>,
    pub tol_quad: f64,
    pub tol_newton: f64,
    pub cells: usize,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "n",
    "weyl_sq",
    "a0",
    "plateau",
    "schedule",
    "k0",
    "r",
    "k_range",
    "eps_ladder",
    "family_eps",
    "eps",
    "t",
    "p",
    "t_grid",
    "tol_quad",
    "tol_newton",
    "cells",
    "out",
];

fn dyadic(js: impl Iterator<Item = i32>) -> Vec<f64> {
    js.map(|j| 2f64.powi(-j)).collect()
}

impl RunConfig {
    pub fn defaults(n: u32) -> Self {
        Self {
            n,
            weyl_sq: None,
            a0: None,
            plateau: 20.0,
            schedule: ScheduleKind::Ladder,
            k0: 1,
            r: 3.0,
            k_range: (2, 6),
            eps_ladder: if n == 6 { dyadic(16..=20) } else { dyadic(6..=12) },
            family_eps: dyadic([18, 21, 24].into_iter()),
            eps: 2f64.powi(-24),
            t: 1.0,
            p: 0.0,
            t_grid: (0..25).map(|i| 0.002 * 1.25f64.powi(i)).collect(),
            tol_quad: 1e-10,
            tol_newton: 1e-9,
            cells: 4000,
            out: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) {
                bail!("line {}: unknown key `{k}`", i + 1);
            }
            if pairs.iter().any(|p| p.1 == k) {
                bail!("line {}: duplicate key `{k}`", i + 1);
            }
            pairs.push((i + 1, k, v));
        }
        let (nline, _, nval) = pairs.iter().find(|p| p.1 == "n").ok_or_else(|| anyhow!("missing mandatory key `n`"))?;
        let n: u32 = nval.parse().map_err(|e| anyhow!("line {nline}: invalid value for `n`: {e}"))?;
        let mut cfg = Self::defaults(n);
        for (line, k, v) in &pairs {
            cfg.set(k, v).with_context(|| format!("line {line}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Assign one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> { v.trim().parse::<f64>().map_err(|e| anyhow!("invalid number `{v}` for `{key}`: {e}")) };
        let int = |v: &str| -> Result<u64> { v.trim().parse::<u64>().map_err(|e| anyhow!("invalid integer `{v}` for `{key}`: {e}")) };
        let list = |v: &str| -> Result<Vec<f64>> { v.split(',').map(num).collect() };
        match key {
            "n" => {
                let n = u32::try_from(int(value)?)?;
                if n != self.n {
                    let keep = self.clone();
                    *self = Self { n, ..Self::defaults(n) };
                    self.out = keep.out;
                }
            }
            "weyl_sq" => self.weyl_sq = Some(num(value)?),
            "a0" => self.a0 = Some(num(value)?),
            "plateau" | "M" => self.plateau = num(value)?,
            "schedule" => {
                self.schedule = match value {
                    "ladder" => ScheduleKind::Ladder,
                    "power" => ScheduleKind::Power,
                    _ => bail!("invalid schedule `{value}` (expected `ladder` or `power`)"),
                }
            }
            "k0" => self.k0 = u32::try_from(int(value)?)?,
            "r" => self.r = num(value)?,
            "k_range" => {
                let (a, b) = value.split_once("..").ok_or_else(|| anyhow!("invalid range `{value}` (expected `a..b`)"))?;
                self.k_range = (u32::try_from(int(a)?)?, u32::try_from(int(b)?)?);
            }
            "eps_ladder" => self.eps_ladder = list(value)?,
            "family_eps" => self.family_eps = list(value)?,
            "eps" => self.eps = num(value)?,
            "t" => self.t = num(value)?,
            "p" => self.p = num(value)?,
            "t_grid" => self.t_grid = list(value)?,
            "tol_quad" => self.tol_quad = num(value)?,
            "tol_newton" => self.tol_newton = num(value)?,
            "cells" => self.cells = usize::try_from(int(value)?)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 6 && self.a0.is_none() {
            bail!("n = 6 requires key `a0`");
        }
        if self.n != 6 && self.a0.is_some() {
            bail!("key `a0` belongs to the n = 6 branch, but n = {}", self.n);
        }
        if self.n == 6 && self.weyl_sq.is_some() {
            bail!("the n = 6 branch takes no `weyl_sq`");
        }
        if self.k_range.1 <= self.k_range.0 {
            bail!("k_range must be increasing");
        }
        for (name, v) in [("tol_quad", self.tol_quad), ("tol_newton", self.tol_newton), ("plateau", self.plateau), ("r", self.r)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("`{name}` must be positive and finite");
            }
        }
        let model = self.model()?;
        if self.schedule == ScheduleKind::Power {
            let rep = validate_schedule(&model.schedule, self.n, model.geometry, self.k_range.1)?;
            if let Some(c) = rep.checks.iter().find(|c| !c.passed) {
                bail!("schedule check failed: {} ({})", c.name, c.detail);
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.weyl_sq.map_or(Geometry::ConformallyFlat, |weyl_sq| Geometry::Weyl { weyl_sq })
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let mut m = match self.a0 {
            Some(a0) if self.n == 6 => ModelConfig::n6(a0)?,
            _ => ModelConfig::new(self.n, self.geometry())?,
        };
        m.bump = BumpSpec::with_plateau(self.plateau);
        m.quadrature.rel_tol = self.tol_quad;
        m.schedule = match self.schedule {
            ScheduleKind::Ladder => Schedule::dyadic_ladder(self.n, m.geometry, self.k0, self.r),
            ScheduleKind::Power => Schedule::power_sequence(self.n, m.geometry, self.k0),
        };
        Ok(m)
    }

    /// `ε` values of the family: the explicit list in ladder mode, `ε_k` over
    /// `k_range` in power mode.
    pub fn family_epsilons(&self) -> Result<Vec<f64>> {
        match self.schedule {
            ScheduleKind::Ladder => Ok(self.family_eps.clone()),
            ScheduleKind::Power => {
                let m = self.model()?;
                (self.k_range.0..=self.k_range.1).map(|k| Ok(m.schedule.at(self.n, k)?.epsilon)).collect()
            }
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let l = |xs: &[f64]| xs.iter().map(|&x| f(x)).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        if let Some(w) = self.weyl_sq {
            let _ = writeln!(s, "weyl_sq = {}", f(w));
        }
        if let Some(a) = self.a0 {
            let _ = writeln!(s, "a0 = {}", f(a));
        }
        let sched = match self.schedule {
            ScheduleKind::Ladder => "ladder",
            ScheduleKind::Power => "power",
        };
        let _ = writeln!(s, "plateau = {}", f(self.plateau));
        let _ = writeln!(s, "schedule = {sched}");
        let _ = writeln!(s, "k0 = {}", self.k0);
        let _ = writeln!(s, "r = {}", f(self.r));
        let _ = writeln!(s, "k_range = {}..{}", self.k_range.0, self.k_range.1);
        let _ = writeln!(s, "eps_ladder = {}", l(&self.eps_ladder));
        let _ = writeln!(s, "family_eps = {}", l(&self.family_eps));
        let _ = writeln!(s, "eps = {}", f(self.eps));
        let _ = writeln!(s, "t = {}", f(self.t));
        let _ = writeln!(s, "p = {}", f(self.p));
        let _ = writeln!(s, "t_grid = {}", l(&self.t_grid));
        let _ = writeln!(s, "tol_quad = {}", f(self.tol_quad));
        let _ = writeln!(s, "tol_newton = {}", f(self.tol_newton));
        let _ = writeln!(s, "cells = {}", self.cells);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = RunConfig::parse("n = 7\n").unwrap();
        assert_eq!(c.plateau, 20.0);
        assert_eq!(c.schedule, ScheduleKind::Ladder);
        assert_eq!(c.eps_ladder.len(), 7);
    }

    #[test]
    fn n6_without_a0_names_the_key() {
        let err = RunConfig::parse("n = 6\n").unwrap_err();
        assert!(format!("{err:#}").contains("a0"));
    }

    #[test]
    fn malformed_number_reports_the_line() {
        let err = RunConfig::parse("n = 7\n# comment\nplateau = 2x0\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
    }

    #[test]
    fn missing_dimension_is_an_error() {
        let err = RunConfig::parse("plateau = 10\n").unwrap_err();
        assert!(format!("{err:#}").contains("`n`"));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(RunConfig::parse("n = 7\nfoo = 1\n").is_err());
        assert!(RunConfig::parse("n = 7\nt = 1\nt = 2\n").is_err());
    }

    #[test]
    fn a0_outside_n6_is_rejected() {
        assert!(RunConfig::parse("n = 7\na0 = 7\n").is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let mut c = RunConfig::parse("n = 6\na0 = 7\n").unwrap();
        c.t = 0.1 + 0.2;
        c.weyl_sq = None;
        c.schedule = ScheduleKind::Power;
        c.k_range = (3, 9);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let d = RunConfig::parse("n = 9\nweyl_sq = 0.3\n").unwrap();
        assert_eq!(RunConfig::parse(&d.to_text()).unwrap(), d);
    }
}
