//! Subcommand pipelines. Each returns an envelope whose checks decide the
//! exit status.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use elnum::energy::{expansion_check, measured_reduced, CoefficientSamples, ExpansionOptions};
use elnum::grid::{Grading, Grid, RadialField};
use elnum::model::ModelConfig;
use elnum::profiles::{profile_table, BubbleParams};
use elnum::reduced::{find_critical, reduced_n6_fit, ReducedEnergySpec};
use elnum::solver::{
    assemble_operator, family_construct, linearization_spectrum, newton_solve, operator_for, peaked_solve, projected_correction,
    NewtonOptions,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::{Check, ReportEnvelope, Table};

pub const COMMANDS: &[&str] = &["expansion", "reduced", "solve", "family", "spectrum", "n6"];

/// Relative gap below which the last expansion rung counts as converged.
const EXPANSION_FINAL_GAP: f64 = 0.02;
/// Largest `|t_M - t₀|/t₀` accepted by `reduced`.
const CRITICAL_DRIFT: f64 = 5e-3;

fn newton(cfg: &RunConfig) -> NewtonOptions {
    NewtonOptions { tol: cfg.tol_newton, ..Default::default() }
}

fn require_radial_solver(model: &ModelConfig) -> Result<()> {
    if model.dims.n == 6 {
        bail!("the radial solver covers n >= 7; use the n6 command for the six-dimensional branch");
    }
    Ok(())
}

fn t_m(model: &ModelConfig) -> Result<f64> {
    Ok(find_critical(&ReducedEnergySpec::from_config(model)).context("locating t_M")?.t_m)
}

pub fn run_command(name: &str, cfg: &RunConfig) -> Result<ReportEnvelope> {
    let model = cfg.model()?;
    let (checks, payload, table) = match name {
        "expansion" => expansion(cfg, &model)?,
        "reduced" => reduced(&model)?,
        "solve" => solve(cfg, &model)?,
        "family" => family(cfg, &model)?,
        "spectrum" => spectrum(cfg, &model)?,
        "n6" => n6(cfg, &model)?,
        _ => bail!("unknown command `{name}`"),
    };
    Ok(ReportEnvelope::new(name, cfg, checks, payload, table))
}

type Outcome = (Vec<Check>, serde_json::Value, Table);

fn expansion(cfg: &RunConfig, model: &ModelConfig) -> Result<Outcome> {
    let mut p = vec![0.0; cfg.n as usize];
    p[0] = cfg.p;
    let rungs = expansion_check(model, cfg.t, &p, &cfg.eps_ladder, ExpansionOptions::default()).context("expansion ladder")?;
    let mut table = Table::new(&[
        "epsilon",
        "mu",
        "measured",
        "predicted",
        "gap",
        "rel_gap",
        "dt_measured",
        "dt_predicted",
        "i1_over_eps",
        "i2_over_eps",
        "i3_over_eps",
        "resid_sq_over_eps",
    ]);
    for r in &rungs {
        let b = &r.breakdown;
        table.push(vec![
            r.epsilon,
            r.mu,
            r.measured,
            r.predicted,
            r.gap,
            r.rel_gap,
            r.dt_measured.unwrap_or(f64::NAN),
            r.dt_predicted,
            b.i1 / r.epsilon,
            b.i2 / r.epsilon,
            b.i3 / r.epsilon,
            b.resid_norm_sq / r.epsilon,
        ]);
    }
    let inversions = rungs.windows(2).filter(|w| w[1].gap >= w[0].gap).count();
    let last = rungs.last().map_or(f64::NAN, |r| r.rel_gap);
    let checks = vec![
        Check::new("gap decreases (one inversion allowed)", inversions <= 1, format!("{inversions} inversions")),
        Check::new(
            "final relative gap",
            last < EXPANSION_FINAL_GAP,
            format!("{:.3}% (limit {}%)", 100.0 * last, 100.0 * EXPANSION_FINAL_GAP),
        ),
    ];
    Ok((checks, serde_json::to_value(&rungs)?, table))
}

fn reduced(model: &ModelConfig) -> Result<Outcome> {
    let spec = ReducedEnergySpec::from_config(model);
    let cp = find_critical(&spec).context("critical point of H")?;
    let mut table = Table::new(&["t", "h", "dt_h"]);
    for i in 0..=60 {
        let t = cp.t_m * 10f64.powf(-1.0 + f64::from(i) / 30.0);
        let p = vec![0.0; model.dims.n as usize];
        table.push(vec![t, spec.h_eval(t, &p)?, spec.dt_h_radial(t)?]);
    }
    let checks = vec![
        Check::new(
            "critical scale near closed form",
            cp.drift.abs() < CRITICAL_DRIFT,
            format!("t_M {:.10}, t0 {:.10}, drift {:.3}%", cp.t_m, cp.t0, 100.0 * cp.drift),
        ),
        Check::new(
            "Hessian signature (1 negative, n positive)",
            cp.saddle_certified(model.dims.n),
            format!("{} negative, {} positive, basin converged {}", cp.negative, cp.positive, cp.basin.all_converged()),
        ),
    ];
    Ok((checks, serde_json::to_value(&cp)?, table))
}

fn solve(cfg: &RunConfig, model: &ModelConfig) -> Result<Outcome> {
    require_radial_solver(model)?;
    let tm = t_m(model)?;
    let bp = BubbleParams::new(model, &model.entry_for_epsilon(cfg.eps)?, tm, vec![0.0; cfg.n as usize])?;
    let op = operator_for(model, cfg.eps, bp.delta / 3.0, cfg.cells)?;
    let sol = peaked_solve(model, &op, cfg.eps, tm, &newton(cfg)).context("peaked solve")?;
    let s = &sol.solution;
    // Profile dump of the bubble at the converged scale next to the solution.
    let bp_sol = BubbleParams::new(model, &model.entry_for_epsilon(cfg.eps)?, sol.t, vec![0.0; cfg.n as usize])?;
    let rows = profile_table(model, &bp_sol, &s.u.grid.nodes)?;
    let mut table = Table::new(&["theta", "u", "W", "Z0", "h", "f", "pi_sq"]);
    for (row, u) in rows.iter().zip(&s.u.values) {
        table.push(vec![row[0], *u, row[1], row[2], row[3], row[4], row[5]]);
    }
    let lambda0 = s.lambda0.unwrap_or(f64::NAN);
    let ts: Vec<f64> = (0..9).map(|i| tm * 2f64.powf((f64::from(i) - 4.0) / 4.0)).collect();
    let red = projected_correction(model, &op, cfg.eps, &ts, &newton(cfg)).context("lambda0 curve")?;
    let crossing = red.zero_crossing.map_or(f64::NAN, |z| (z - tm).abs() / tm);
    let checks = vec![
        Check::new("lambda0 zero within 10% of t_M", crossing < 0.1, format!("{:?} vs {tm:.10}", red.zero_crossing)),
        Check::new("residual below tolerance", s.resid_sup < cfg.tol_newton, format!("{:.3e}", s.resid_sup)),
        Check::new("min u above truncation", s.u_min >= model.base.epsilon_trunc, format!("{:.6}", s.u_min)),
        Check::new("lambda0 vanishes", lambda0.abs() < 1e-8, format!("{lambda0:.3e}")),
    ];
    let payload = json!({
        "epsilon": cfg.eps, "t_seed": tm, "t": sol.t, "bracket": sol.bracket, "delta": bp.delta,
        "u_max": s.u_max, "u_min": s.u_min, "resid_sup": s.resid_sup, "morse_index": s.morse_index,
        "lambda0": s.lambda0, "iterations": s.iterations, "eta_active": s.eta_active,
        "lambda0_curve": red.points, "zero_crossing": red.zero_crossing, "phi_constant": red.phi_constant,
    });
    Ok((checks, payload, table))
}

fn family(cfg: &RunConfig, model: &ModelConfig) -> Result<Outcome> {
    require_radial_solver(model)?;
    let eps = cfg.family_epsilons()?;
    let rep = family_construct(model, &eps, cfg.cells, &newton(cfg)).context("family construction")?;
    let mut table = Table::new(&["epsilon", "delta", "u_max", "u_min", "resid_sup", "morse_index", "lambda0"]);
    let mut members = Vec::new();
    for m in &rep.members {
        let s = m.solution.as_ref();
        let get = |f: fn(&elnum::solver::SolveResult) -> f64| s.map_or(f64::NAN, f);
        let row = vec![
            m.epsilon,
            m.delta,
            get(|s| s.u_max),
            get(|s| s.u_min),
            get(|s| s.resid_sup),
            get(|s| s.morse_index as f64),
            get(|s| s.lambda0.unwrap_or(f64::NAN)),
        ];
        members.push(json!({
            "epsilon": m.epsilon, "delta": m.delta, "u_max": row[2], "u_min": row[3], "resid_sup": row[4],
            "morse_index": s.map(|s| s.morse_index), "lambda0": row[6], "failure": m.failure,
        }));
        table.push(row);
    }
    let checks = vec![
        Check::new("all members converged", rep.all_converged, format!("{} members", rep.members.len())),
        Check::new("pairwise distinct", rep.pairwise_distinct, format!("{:?}", rep.distances)),
        Check::new("sup-norms increase with ratio >= 2", rep.sup_increasing, format!("{:?}", rep.sup_ratios)),
        Check::new("min u above truncation", rep.above_truncation, String::new()),
    ];
    let payload = json!({
        "members": members, "distances": rep.distances, "sup_ratios": rep.sup_ratios,
        "distinct": rep.pairwise_distinct,
    });
    Ok((checks, payload, table))
}

fn spectrum(cfg: &RunConfig, model: &ModelConfig) -> Result<Outcome> {
    require_radial_solver(model)?;
    const M: usize = 6;
    let grid = Arc::new(Grid::graded(cfg.n, &Grading::for_scale(1e-2, cfg.cells)?)?);
    let coeffs = CoefficientSamples::base(model, grid.len());
    let op = assemble_operator(model, grid, coeffs, 1e-2)?;
    let base = linearization_spectrum(&op, &RadialField::constant(op.grid.clone(), 1.0), M, 1e-14)?;
    let ts = model.dims.two_star;
    let closed = (ts + 2.0) * model.base.pi_zero_sq - (ts - 2.0);
    let pop = operator_for(model, cfg.eps, 1e-3, cfg.cells)?;
    let s = newton_solve(&pop, &RadialField::constant(pop.grid.clone(), 1.0), &newton(cfg)).context("perturbed base solve")?;
    let pert = linearization_spectrum(&pop, &s.u, M, 1e-12)?;
    let mut table = Table::new(&["index", "unperturbed", "perturbed"]);
    for i in 0..M {
        table.push(vec![i as f64, base[i], pert[i]]);
    }
    let rel = (base[0] - closed).abs() / closed;
    let checks = vec![
        Check::new("lambda_min matches closed form", rel < 1e-6, format!("{:.12} vs {closed:.12} (rel {rel:.2e})", base[0])),
        Check::new("perturbed base stays strictly stable", pert[0] > 0.0, format!("{:.10}", pert[0])),
    ];
    let payload = json!({ "closed_form": closed, "unperturbed": base, "perturbed": pert, "epsilon": cfg.eps });
    Ok((checks, payload, table))
}

fn n6(cfg: &RunConfig, model: &ModelConfig) -> Result<Outcome> {
    let a0 = match (cfg.n, cfg.a0) {
        (6, Some(a0)) => a0,
        _ => bail!("the n6 command needs n = 6 and a0"),
    };
    let eps = *cfg.eps_ladder.last().context("empty eps_ladder")?;
    let ys = elnum::par::map(&cfg.t_grid, |&t| measured_reduced(model, eps, t, &[0.0; 6]).map(|r| r.0));
    let ys: Vec<f64> = ys.into_iter().collect::<Result<_, _>>().context("measured n = 6 map")?;
    let fit = reduced_n6_fit(a0, &cfg.t_grid, &ys)?;
    let literal = 10.0 / (3.0 * a0 * fit.c0);
    let gap = (literal - fit.grid_minimizer).abs() / fit.grid_minimizer;
    let mut table = Table::new(&["t", "measured", "fit"]);
    for (&t, &y) in cfg.t_grid.iter().zip(&ys) {
        table.push(vec![t, y, -fit.quad_coeff * t * t + fit.c0 * a0 * t.powi(3)]);
    }
    let checks = vec![
        Check::new("C0 positive", fit.c0 > 0.0, format!("{:.10e}", fit.c0)),
        Check::new("fit residual below 5%", fit.fit_residual < 0.05, format!("{:.3e}", fit.fit_residual)),
        Check::new(
            "t0 = 10/(3 a0 C0) matches the minimizer",
            gap < 0.02,
            format!("{literal:.6e} vs {:.6e} (gap {:.2}%); fitted-A t0 {:.6e}", fit.grid_minimizer, 100.0 * gap, fit.t0),
        ),
    ];
    let payload = json!({ "epsilon": eps, "fit": fit, "t0_literal": literal, "literal_gap": gap });
    Ok((checks, payload, table))
}
