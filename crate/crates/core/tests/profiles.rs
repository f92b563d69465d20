use approx::assert_relative_eq;
use elnum::model::{Geometry, ModelConfig, Rule, Schedule};
use elnum::profiles::*;
use elnum::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: u32 = 7;

fn cfg7() -> ModelConfig {
    ModelConfig::new(N, Geometry::ConformallyFlat).unwrap()
}

fn power_cfg() -> ModelConfig {
    let mut cfg = cfg7();
    cfg.schedule = Schedule::power_sequence(N, Geometry::ConformallyFlat, 2);
    cfg
}

fn params(cfg: &ModelConfig, eps: f64, t: f64, p: Vec<f64>) -> BubbleParams {
    BubbleParams::new(cfg, &cfg.entry_for_epsilon(eps).unwrap(), t, p).unwrap()
}

fn unit(i: usize, len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[i] = 1.0;
    e
}

#[test]
fn beta_plateau_support_and_transition() {
    let b = BumpSpec::with_plateau(10.0);
    assert_eq!(b.cutoff_eval(Cutoff::Beta, 3.0), 1.0);
    assert_eq!(b.cutoff_eval(Cutoff::Beta, -10.0), 1.0);
    assert_eq!(b.cutoff_eval(Cutoff::Beta, 12.0), 0.0);
    assert_eq!(b.cutoff_eval(Cutoff::Beta, 11.0), 0.0);
    // φ(3/4) / (φ(3/4) + φ(1/4)) with φ(x) = e^{-1/x}.
    let expect = 1.0 / (1.0 + (-8.0_f64 / 3.0).exp());
    assert_relative_eq!(b.cutoff_eval(Cutoff::Beta, 10.25), expect, max_relative = 1e-14);
    let mid = b.cutoff_eval(Cutoff::Beta, 10.5);
    assert!(mid > 0.0 && mid < 1.0);
    assert_eq!(b.cutoff_eval(Cutoff::Chi, 0.5), 1.0);
    assert_eq!(b.cutoff_eval(Cutoff::Chi, 2.0), 0.0);
}

#[test]
fn psi_examples() {
    let b = BumpSpec::with_plateau(10.0);
    assert_eq!(b.psi_eval(&[0.0; 7]), 0.0);
    assert_eq!(b.psi_eval(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), -4.0);
    let edge = [(11.0_f64).sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert!(b.psi_eval(&edge).abs() < 1e-12);
}

#[test]
fn psi0_window_examples() {
    let cfg = power_cfg();
    let w = BumpWindow::new(&cfg, 2..=8).unwrap();
    let pole = Chart::pole(N as usize);
    assert_eq!(w.psi0_eval(&pole.center), 0.0);
    for (k, chart, lc) in &w.bumps {
        assert_eq!(w.psi0_eval(&chart.center), 0.0, "bump {k}");
        let z = [1.5, -2.0, 0.5, 0.0, 1.0, 0.0, 0.0];
        let z2: f64 = z.iter().map(|v| v * v).sum();
        assert!(z2 <= cfg.bump.m);
        let x = chart.exp(&z.map(|v| v * lc.mu));
        assert_relative_eq!(w.psi0_eval(&x), -lc.epsilon * z2, max_relative = 1e-10);
    }
}

#[test]
fn overlapping_supports_are_rejected() {
    let mut cfg = cfg7();
    cfg.schedule.eps = Rule::Geometric { coeff: 1e-8, ratio: 0.5 };
    cfg.schedule.mu = Rule::Constant(0.3);
    cfg.schedule.k0 = 2;
    assert!(matches!(BumpWindow::new(&cfg, 2..=4), Err(Error::OverlappingSupports { .. })));
}

#[test]
fn coefficients_at_centers_and_far_away() {
    let cfg = power_cfg();
    let w = BumpWindow::new(&cfg, 2..=6).unwrap();
    let base = (cfg.base.cn_sg, 1.0, cfg.base.pi_zero_sq);
    for (_, chart, _) in &w.bumps {
        let c = w.coefficients_at(&chart.center);
        assert_eq!((c.h, c.f, c.pi_sq), base);
    }
    let far = Chart::pole(N as usize).exp(&unit(1, N as usize).iter().map(|v| 3.0 * v).collect::<Vec<_>>());
    let c = w.coefficients_at(&far);
    assert_eq!((c.h, c.f, c.pi_sq), base);
}

#[test]
fn coefficient_identity_inside_bumps() {
    let mut cfg = cfg7();
    cfg.schedule.k0 = 2;
    cfg.schedule.eps = Rule::Power { coeff: 1e-4, exponent: 4.0 };
    cfg.schedule.mu = Rule::Power { coeff: 0.02, exponent: 2.0 };
    let w = BumpWindow::new(&cfg, 2..=4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (_, chart, lc) in &w.bumps {
        for _ in 0..200 {
            let dir: Vec<f64> = (0..N).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rad = rng.gen_range(0.0..1.05) * lc.support_radius();
            let z: Vec<f64> = dir.iter().map(|v| v / norm * rad).collect();
            let c = w.coefficients_at(&chart.exp(&z));
            assert!((c.h - c.f - c.pi_sq).abs() < 1e-13 * c.h, "{c:?}");
            assert!(c.f > 0.0 && c.pi_sq > 0.0);
        }
    }
}

#[test]
fn bubble_examples() {
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-20), 0.5, vec![0.0; 7]);
    let nf = f64::from(N);
    let peak = bp.delta.powf(-0.5 * (nf - 2.0));
    let y = bp.y_chart.center.clone();
    assert_relative_eq!(bubble_eval(N, &bp, &y, false).value, peak, max_relative = 1e-14);

    let d = bp.delta * (nf * (nf - 2.0) / bp.f_center).sqrt();
    let x = bp.y_chart.exp(&unit(0, 7).iter().map(|v| v * d).collect::<Vec<_>>());
    let v = bubble_eval(N, &bp, &x, true);
    let expect = 2f64.powf(1.0 - 0.5 * nf) * peak;
    assert!((v.value / expect - 1.0).abs() < 10.0 * d * d, "{} vs {expect}", v.value);
    assert!(v.radial_derivative.unwrap() < 0.0);

    let out = bp.y_chart.exp(&unit(2, 7).iter().map(|v| v * 2.0 * bp.r * 1.0001).collect::<Vec<_>>());
    assert_eq!(bubble_eval(N, &bp, &out, false).value, 0.0);
}

#[test]
fn offsets_outside_the_unit_ball_are_rejected() {
    let cfg = cfg7();
    let e = cfg.entry_for_epsilon(1e-6).unwrap();
    assert!(BubbleParams::new(&cfg, &e, 1.0, vec![0.8, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    assert!(BubbleParams::new(&cfg, &e, -1.0, vec![0.0; 7]).is_err());
    assert!(BubbleParams::new(&cfg, &e, 1.0, vec![0.0; 6]).is_err());
}

#[test]
fn kernel_examples() {
    assert_eq!(model_kernel(N, 1.0, 0, &[0.0; 7]).unwrap(), -1.0);
    assert!(matches!(model_kernel(N, 1.0, 8, &[0.0; 7]), Err(Error::KernelIndex { index: 8, n: 7 })));
    let cfg = cfg7();
    let bp = params(&cfg, 2f64.powi(-20), 0.7, vec![0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let y = bp.y_chart.center.clone();
    let peak = bp.delta.powf(-2.5);
    assert_relative_eq!(kernel_eval(N, &bp, 0, &y).unwrap(), -peak, max_relative = 1e-14);
    assert!(kernel_eval(N, &bp, 8, &y).is_err());
}

#[test]
fn scale_derivative_is_the_dilation_kernel() {
    let cfg = cfg7();
    let eps = 2f64.powi(-20);
    let t = 0.6;
    let p = vec![0.2, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0];
    let bp = params(&cfg, eps, t, p.clone());
    let w = |t: f64, x: &[f64]| bubble_eval(N, &params(&cfg, eps, t, p.clone()), x, false).value;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checked = 0;
    while checked < 20 {
        let dir: Vec<f64> = (0..N).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = bp.delta * 10f64.powf(rng.gen_range(-2.0..2.5));
        let z: Vec<f64> = dir.iter().map(|v| v / norm * s).collect();
        let x = bp.y_chart.exp(&z);
        let z0 = kernel_eval(N, &bp, 0, &x).unwrap();
        let a = bp.f_center / 35.0;
        if (a * s * s / (bp.delta * bp.delta) - 1.0).abs() < 0.05 {
            continue;
        }
        let h = 1e-3 * t;
        let central = |h: f64| (w(t + h, &x) - w(t - h, &x)) / (2.0 * h);
        let fd = (4.0 * central(0.5 * h) - central(h)) / 3.0;
        let exact = 2.5 / t * z0;
        assert!((fd - exact).abs() < 1e-7 * z0.abs(), "s/δ = {}, fd {fd}, exact {exact}", s / bp.delta);
        checked += 1;
    }
}

#[test]
fn conformal_factor_normalization() {
    let c = Chart::pole(7).transported(&[0.2, 0.1, -0.3, 0.0, 0.0, 0.05, 0.0]);
    assert_eq!(c.lambda(&c.center), 1.0);
    for i in 0..7 {
        let h = 1e-4;
        let plus = c.lambda(&c.exp(&unit(i, 7).iter().map(|v| v * h).collect::<Vec<_>>()));
        let minus = c.lambda(&c.exp(&unit(i, 7).iter().map(|v| -v * h).collect::<Vec<_>>()));
        assert!(((plus - minus) / (2.0 * h)).abs() < 1e-10);
    }
}

proptest! {
    #[test]
    fn chart_pullback_is_conformally_flat(z in prop::collection::vec(-1.5f64..1.5, 7), tilt in prop::collection::vec(-0.5f64..0.5, 7)) {
        let c = Chart::pole(7).transported(&tilt);
        let jac = c.jacobian(&z);
        let q: f64 = 1.0 + 0.25 * z.iter().map(|v| v * v).sum::<f64>();
        let lam = c.lambda(&c.exp(&z));
        prop_assert!((lam - q.powf(2.5)).abs() < 1e-13 * lam);
        let scale = lam.powf(4.0 / 5.0);
        for i in 0..7 {
            for j in 0..7 {
                let g: f64 = jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((scale * g - expect).abs() < 1e-14, "g[{}][{}] = {}", i, j, scale * g);
            }
        }
    }

    #[test]
    fn cutoffs_stay_in_the_unit_interval(m in 1.0f64..40.0, s in -60.0f64..60.0) {
        let b = BumpSpec::with_plateau(m);
        let v = b.cutoff_eval(Cutoff::Beta, s);
        prop_assert!((0.0..=1.0).contains(&v));
        if s.abs() <= m { prop_assert_eq!(v, 1.0); }
        if s.abs() >= m + 1.0 { prop_assert_eq!(v, 0.0); }
        let a = b.cutoff_eval(Cutoff::Chi, s.abs() * 0.05);
        let bb = b.cutoff_eval(Cutoff::Chi, s.abs() * 0.05 + 0.01);
        prop_assert!(bb <= a);
    }
}
