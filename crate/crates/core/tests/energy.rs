use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use elnum::energy::*;
use elnum::grid::{Grading, Grid, RadialField};
use elnum::model::{Geometry, ModelConfig};
use elnum::profiles::{bubble_eval, kernel_eval, BubbleParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn cfg7() -> ModelConfig {
    ModelConfig::new(7, Geometry::ConformallyFlat).unwrap()
}

fn params(cfg: &ModelConfig, eps: f64, t: f64, p0: f64) -> BubbleParams {
    let mut p = vec![0.0; cfg.dims.n as usize];
    p[0] = p0;
    BubbleParams::new(cfg, &cfg.entry_for_epsilon(eps).unwrap(), t, p).unwrap()
}

#[test]
fn constant_field_energy_on_unit_s7() {
    let cfg = cfg7();
    let grid = Arc::new(Grid::graded(7, &Grading::for_scale(1e-2, 400).unwrap()).unwrap());
    let one = RadialField::constant(grid.clone(), 1.0);
    let coeffs = CoefficientSamples::base(&cfg, grid.len());
    let area = PI.powi(4) / 3.0;
    assert_relative_eq!(energy_j(&cfg, &one, &coeffs).unwrap(), 95.0 * PI.powi(4) / 42.0, max_relative = 1e-12);
    assert_relative_eq!(inner_h(&one, &one, &coeffs).unwrap(), 35.0 / 4.0 * area, max_relative = 1e-12);
}

#[test]
fn decomposition_matches_direct_integration() {
    let cfg = cfg7();
    let tol = 10.0 * cfg.quadrature.rel_tol;
    for (eps, t, p0) in [(2f64.powi(-10), 1.0, 0.0), (2f64.powi(-14), 0.3, 0.5), (2f64.powi(-18), 2.0, 0.9)] {
        let bp = params(&cfg, eps, t, p0);
        let br = reduced_energy_ik(&cfg, &bp).unwrap();
        let direct = energy_j_direct(&cfg, &bp).unwrap();
        assert!((br.j_total - direct).abs() <= tol * direct.abs(), "{eps} {t} {p0}: {} vs {direct}", br.j_total);
    }
}

#[test]
fn excess_agrees_with_the_assembled_energy() {
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-8), 1.0, 0.3);
    let br = reduced_energy_ik(&cfg, &bp).unwrap();
    let assembled = br.j_total - br.j_base - cfg.dims.k_n_pow / 7.0;
    assert!((br.excess - assembled).abs() < 1e-9 * br.j_total.abs());
}

#[test]
fn unperturbed_base_energy_in_the_limit() {
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-30), 1.0, 0.0);
    let br = reduced_energy_ik(&cfg, &bp).unwrap();
    assert_relative_eq!(br.j_base, 95.0 * PI.powi(4) / 42.0, max_relative = 1e-6);
}

#[test]
fn residual_vanishes_outside_the_cutoff() {
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-12), 1.0, 0.0);
    let r = Residual::new(&cfg, &bp).unwrap();
    for s in [2.0 * bp.r, 2.5 * bp.r, 10.0] {
        assert_eq!(r.at(s, s), 0.0);
    }
    assert!(r.at(0.5 * bp.r, 0.5 * bp.r) != 0.0);
}

#[test]
fn residual_at_sphere_points_matches_chart_form() {
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-12), 1.0, 0.0);
    let r = Residual::new(&cfg, &bp).unwrap();
    let x = bp.y_chart.exp(&[0.05, 0.02, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let s = bp.y_chart.distance(&x);
    assert_relative_eq!(r.eval(&x), r.at(s, s), max_relative = 1e-12);
}

#[test]
fn kernel_identity_for_the_scale_derivative() {
    let cfg = cfg7();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (eps, t) = (2f64.powi(-12), 0.8);
    let base = params(&cfg, eps, t, 0.0);
    let w_at = |tt: f64, x: &[f64]| bubble_eval(7, &params(&cfg, eps, tt, 0.0), x, false).value;
    for _ in 0..20 {
        let s: f64 = base.delta * 10f64.powf(rng.gen_range(-1.0..1.5));
        let mut z: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v *= s / norm);
        let x = base.y_chart.exp(&z);
        let h = 1e-3 * t;
        let d1 = (w_at(t + h, &x) - w_at(t - h, &x)) / (2.0 * h);
        let d2 = (w_at(t + 2.0 * h, &x) - w_at(t - 2.0 * h, &x)) / (4.0 * h);
        let dt = (4.0 * d1 - d2) / 3.0;
        let z0 = kernel_eval(7, &base, 0, &x).unwrap();
        assert!((dt - 2.5 / t * z0).abs() < 1e-7 * z0.abs(), "s = {s}: {dt} vs {}", 2.5 / t * z0);
    }
}

#[test]
fn gram_matrix_matches_flat_model() {
    let cfg = cfg7();
    for p0 in [0.0, 0.5] {
        let bp = params(&cfg, 2f64.powi(-24), 1.0, p0);
        let g = gram_matrix(&cfg, &bp).unwrap();
        assert!(g.delta_over_r <= 1e-3);
        let (diag, off) = g.deviations();
        assert!(diag < 0.02 && off < 0.01, "{diag} {off}");
    }
}

#[test]
fn expansion_check_validates_inputs() {
    let cfg = cfg7();
    let p = vec![0.0; 7];
    let opts = ExpansionOptions { derivatives: false, ..Default::default() };
    assert!(expansion_check(&cfg, 1.0, &p, &[0.01, 0.02], opts).is_err());
    assert!(expansion_check(&cfg, -1.0, &p, &[0.02, 0.01], opts).is_err());
    let mut off = p.clone();
    off[2] = 0.1;
    assert!(expansion_check(&cfg, 1.0, &off, &[0.02, 0.01], opts).is_err());
    let n6 = ModelConfig::n6(7.0).unwrap();
    assert!(expansion_check(&n6, 1.0, &[0.0; 6], &[0.02], opts).is_err());
}

#[test]
fn expansion_gap_shrinks_deep_in_the_ladder() {
    let cfg = cfg7();
    let ladder: Vec<f64> = [16, 20, 24].iter().map(|&j| 2f64.powi(-j)).collect();
    let rungs = expansion_check(&cfg, 1.0, &[0.0; 7], &ladder, ExpansionOptions::default()).unwrap();
    for w in rungs.windows(2) {
        assert!(w[1].gap < w[0].gap);
    }
    let last = rungs.last().unwrap();
    assert!(!last.precision_limited);
    let dt = last.dt_measured.unwrap();
    assert!((dt - last.dt_predicted).abs() < 0.2 * last.dt_predicted.abs());
}

#[test]
fn n6_measured_map_has_an_interior_minimum() {
    let cfg = ModelConfig::n6(7.0).unwrap();
    let ts: Vec<f64> = (0..25).map(|i| 0.002 * 1.25f64.powi(i)).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| measured_reduced(&cfg, 2f64.powi(-20), t, &[0.0; 6]).unwrap().0).collect();
    let fit = elnum::reduced::reduced_n6_fit(7.0, &ts, &ys).unwrap();
    assert!(fit.c0 > 0.0);
    assert!(fit.fit_residual < 0.05);
    assert!(fit.minimizer_gap < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pow_excess_matches_direct_evaluation(x in -0.9f64..4.0, p in prop::sample::select(vec![2.8, 3.0, -2.8, -3.0, 2.5])) {
        let direct = (1.0 + x).powf(p) - 1.0 - p * x;
        let v = pow_excess(x, p, 1);
        prop_assert!((v - direct).abs() <= 1e-12 * (1.0 + x).powf(p).abs().max(1.0));
    }

    #[test]
    fn focusing_and_negative_excess_are_nonnegative(x in 0.0f64..1e3, p in prop::sample::select(vec![2.8, -2.8, 3.0, -3.0])) {
        prop_assert!(pow_excess(x, p, 1) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn decomposition_identity_holds_across_parameters(t in 0.2f64..3.0, p0 in 0.0f64..0.9, j in 8i32..16) {
        let cfg = cfg7();
        let bp = params(&cfg, 2f64.powi(-j), t, p0);
        let br = reduced_energy_ik(&cfg, &bp).unwrap();
        let direct = energy_j_direct(&cfg, &bp).unwrap();
        prop_assert!((br.j_total - direct).abs() <= 10.0 * cfg.quadrature.rel_tol * direct.abs());
    }
}
