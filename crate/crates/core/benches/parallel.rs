//! Parallel versus sequential pipelines. The sequential variant runs the same
//! code on a one-thread pool; without the `parallel` feature both variants are
//! sequential.

use criterion::{criterion_group, criterion_main, Criterion};
use elnum::energy::measured_reduced;
use elnum::model::{Geometry, ModelConfig};
use elnum::profiles::BubbleParams;
use elnum::solver::{family_construct, operator_for, projected_correction, NewtonOptions};

fn run_both(c: &mut Criterion, name: &str, f: &(dyn Fn() + Sync)) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(f));
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
    group.bench_function("sequential", |b| b.iter(|| single.install(f)));
    group.finish();
}

fn benches(c: &mut Criterion) {
    let cfg = ModelConfig::new(7, Geometry::ConformallyFlat).expect("config");
    let t_m = elnum::reduced::find_critical(&elnum::reduced::ReducedEnergySpec::from_config(&cfg)).expect("t_M").t_m;
    let eps = 2f64.powi(-24);

    let ts: Vec<f64> = (0..16).map(|i| 0.1 * 1.2f64.powi(i)).collect();
    run_both(c, "reduced_map", &|| {
        let _ = elnum::par::map(&ts, |&t| measured_reduced(&cfg, eps, t, &[0.0; 7]).expect("measured").0);
    });

    let bp = BubbleParams::new(&cfg, &cfg.entry_for_epsilon(eps).expect("entry"), t_m, vec![0.0; 7]).expect("bubble");
    let op = operator_for(&cfg, eps, bp.delta / 3.0, 4000).expect("operator");
    let grid: Vec<f64> = (0..8).map(|i| t_m * 2f64.powf((f64::from(i) - 4.0) / 4.0)).collect();
    run_both(c, "lambda0_curve", &|| {
        projected_correction(&cfg, &op, eps, &grid, &NewtonOptions::default()).expect("correction");
    });

    let ladder: Vec<f64> = [18, 21, 24].iter().map(|&j| 2f64.powi(-j)).collect();
    run_both(c, "family", &|| {
        family_construct(&cfg, &ladder, 4000, &NewtonOptions::default()).expect("family");
    });
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
