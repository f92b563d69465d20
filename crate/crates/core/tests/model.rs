use std::f64::consts::PI;

use approx::assert_relative_eq;
use elnum::model::*;
use elnum::Error;
use proptest::prelude::*;

const LCF: Geometry = Geometry::ConformallyFlat;

#[test]
fn seven_dimensional_constants() {
    let d = DimensionConstants::new(7).unwrap();
    assert_eq!(d.c_n, 5.0 / 24.0);
    assert_eq!(d.two_star, 14.0 / 5.0);
    assert_eq!(d.two_star_fraction(), (14, 5));
    // Sobolev constant from ω₇ = π⁴/3 written out by hand.
    let omega7 = PI.powi(4) / 3.0;
    let kn = (4.0_f64 / 35.0).sqrt() * omega7.powf(-1.0 / 7.0);
    assert_relative_eq!(d.omega_n, omega7, max_relative = 1e-14);
    assert_relative_eq!(d.k_n, kn, max_relative = 1e-14);
    assert!((d.k_n - 0.2056).abs() < 5e-5, "K_7 = {}", d.k_n);
    let alpha = 5.0_f64.powf(3.5) * 7.0_f64.powf(2.5);
    assert_relative_eq!(d.alpha_n, alpha, max_relative = 1e-14);
    assert!((d.alpha_n / 3.624e4 - 1.0).abs() < 1e-3);
}

#[test]
fn dimensions_below_six_are_rejected() {
    assert!(matches!(DimensionConstants::new(2), Err(Error::UnsupportedDimension(2))));
    assert!(matches!(DimensionConstants::new(5), Err(Error::UnsupportedDimension(5))));
}

#[test]
fn constants_are_in_range() {
    for n in 6..=12 {
        let d = DimensionConstants::new(n).unwrap();
        let nf = f64::from(n);
        assert_eq!(d.two_star, 2.0 * nf / (nf - 2.0));
        assert!(d.two_star > 2.0);
        assert!(d.k_n > 0.0 && d.alpha_n > 0.0);
        assert!(d.c_n > 0.0 && d.c_n < 0.25);
    }
}

#[test]
fn base_data_on_unit_spheres() {
    for n in 6..=12 {
        let d = DimensionConstants::new(n).unwrap();
        let b = BaseData::unit_sphere(&d);
        let nf = f64::from(n);
        assert_eq!(b.cn_sg, nf * (nf - 2.0) / 4.0);
        assert!(b.cn_sg > 2.0 && b.pi_zero_sq > 1.0);
        assert_eq!(b.base_residual(), 0.0);
        assert_eq!(b.u0, 1.0);
    }
    let b6 = BaseData::unit_sphere(&DimensionConstants::new(6).unwrap());
    let b7 = BaseData::unit_sphere(&DimensionConstants::new(7).unwrap());
    assert_eq!((b6.cn_sg, b7.cn_sg), (6.0, 8.75));
}

#[test]
fn example_schedule_entries() {
    let s = Schedule::power_sequence(7, LCF, 2);
    let e = s.at(7, 2).unwrap();
    assert_eq!(e.epsilon, 2.0_f64.powi(-20));
    assert_relative_eq!(e.r, 2.0_f64.powf(-7.0 / 3.0), max_relative = 1e-15);
    assert_relative_eq!(e.mu, e.epsilon.powf(0.4), max_relative = 1e-15);
    assert_eq!(e.xi[0], 0.5);
    assert!(e.xi[1..].iter().all(|&v| v == 0.0));
    assert!(matches!(s.at(7, 1), Err(Error::IndexBelowStart { k: 1, k0: 2 })));
}

#[test]
fn schedule_validity() {
    let s = Schedule::power_sequence(7, LCF, 2);
    let rep = validate_schedule(&s, 7, LCF, 50).unwrap();
    assert!(rep.passed(), "{rep:?}");

    let mut slow_r = s.clone();
    slow_r.r = Rule::Power { coeff: 1.0, exponent: 1.0 };
    let rep = validate_schedule(&slow_r, 7, LCF, 50).unwrap();
    assert!(!rep.passed());
    assert!(rep.checks.iter().any(|c| c.name.starts_with("r_k k^2") && !c.passed));

    let mut big_mu = s.clone();
    big_mu.mu = Rule::RPower { exponent: 2.0 };
    big_mu.mode = ScheduleMode::FreeParameter;
    let rep = validate_schedule(&big_mu, 7, LCF, 50).unwrap();
    assert!(rep.checks.iter().any(|c| c.name.starts_with("mu_k / r_k^3") && !c.passed));

    assert!(validate_schedule(&s, 7, LCF, 2).is_err());
}

#[test]
fn truncation_examples() {
    assert_eq!(eta_truncate(0.1, 0.05).unwrap(), 0.1);
    assert_eq!(eta_truncate(0.1, 0.5).unwrap(), 0.5);
    assert_eq!(eta_truncate(0.1, 0.1).unwrap(), 0.1);
    assert!(eta_truncate(0.0, 1.0).is_err());
    assert!(eta_truncate(-1.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn truncation_is_lipschitz_and_idempotent(eps in 1e-6f64..1.0, u in -2.0f64..2.0, v in -2.0f64..2.0) {
        let a = eta_truncate(eps, u).unwrap();
        let b = eta_truncate(eps, v).unwrap();
        prop_assert!((a - b).abs() <= (u - v).abs());
        prop_assert_eq!(eta_truncate(eps, a).unwrap(), a);
        prop_assert!(a >= eps);
        if u <= v {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn schedules_decrease(n in 6u32..=12, k0 in 2u32..6, span in 2u32..30, weyl in prop::bool::ANY) {
        let geometry = if weyl { Geometry::Weyl { weyl_sq: 1.0 } } else { LCF };
        for s in [Schedule::power_sequence(n, geometry, k0), Schedule::dyadic_ladder(n, geometry, k0, 0.5)] {
            let e: Vec<ScheduleEntry> = (k0..k0 + span).map(|k| s.at(n, k).unwrap()).collect();
            for w in e.windows(2) {
                prop_assert!(w[1].epsilon < w[0].epsilon && w[1].epsilon > 0.0);
                prop_assert!(w[1].mu < w[0].mu && w[1].mu > 0.0);
                if s.mode == ScheduleMode::BranchTied {
                    prop_assert!(w[1].r < w[0].r && w[1].r > 0.0);
                }
            }
        }
    }
}
