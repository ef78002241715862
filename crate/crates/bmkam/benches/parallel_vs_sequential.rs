//! Criterion benches comparing the rayon data-parallel inner loops with the
//! sequential fallback. The two paths produce bit-identical results (order-
//! preserving maps, sequential reductions); these benches measure what the
//! parallelism buys on the three hot kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bmkam::diophantine::{
    diophantine_sample, BoxRegion, DioParams, RadialSite, ResonanceZone,
};
use bmkam::exec::ExecMode;
use bmkam::fourier::{Domain, FourierTaylor};
use bmkam::homological::{solve_homological, StepOptions};
use bmkam::singular::{ActionAngleForm, SingularPart};
use num_complex::Complex64;

fn modes() -> [ExecMode; 2] {
    [ExecMode::Sequential, ExecMode::Parallel]
}

fn mode_name(m: ExecMode) -> &'static str {
    match m {
        ExecMode::Sequential => "sequential",
        ExecMode::Parallel => "parallel",
    }
}

fn bench_diophantine_survey(c: &mut Criterion) {
    let form = ActionAngleForm::new(2, 1, vec![1.0], 1.0).unwrap();
    let g_box = BoxRegion::new(vec![0.5, 0.5], vec![1.5, 1.5]).unwrap();
    let u_map = |i: &[f64]| vec![i[0] - 1.0, i[1]];
    let dio = DioParams::new(1.5, 0.02, 20).unwrap();
    let mut group = c.benchmark_group("diophantine_survey");
    group.sample_size(20);
    for mode in modes() {
        group.bench_with_input(
            BenchmarkId::from_parameter(mode_name(mode)),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    diophantine_sample(&g_box, &form, None, &u_map, &dio, 2000, 7, mode).unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_zone_measure(c: &mut Criterion) {
    let form = ActionAngleForm::new(2, 2, vec![0.3, 1.0], 1.0).unwrap();
    let f_box = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let zone = ResonanceZone::new(vec![3, -2], 0.05, RadialSite::Off(0.8)).unwrap();
    let mut group = c.benchmark_group("zone_monte_carlo");
    group.sample_size(20);
    for mode in modes() {
        group.bench_with_input(
            BenchmarkId::from_parameter(mode_name(mode)),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    zone.monte_carlo_measure(&f_box, &form, None, 200_000, 11, mode)
                        .unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_homological_solve(c: &mut Criterion) {
    let sing = SingularPart::new(1, 1.3, vec![]).unwrap();
    let form = ActionAngleForm::paired_with(2, vec![1.0], &sing).unwrap();
    let i0 = vec![1.0, 1.0];
    let mut h = FourierTaylor::zero(2, 64, 8, i0.clone());
    h.add_term(&[0, 0], &[0, 1], Complex64::new(1.618, 0.0));
    let mut r = FourierTaylor::zero(2, 64, 8, i0.clone());
    let mut seed = 41u64;
    for _ in 0..60 {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let k1 = ((seed >> 33) % 13) as i32 - 6;
        let k2 = ((seed >> 17) % 13) as i32 - 6;
        if k1 == 0 && k2 == 0 {
            continue;
        }
        r.add_cos(&[k1, k2], &[0, 0], 1e-4 * ((seed % 100) as f64 / 100.0 + 0.1));
    }
    let dom = Domain::new(vec![0.999, 0.999], vec![1.001, 1.001], 1.0, 1e-4).unwrap();
    let mut group = c.benchmark_group("homological_solve");
    group.sample_size(20);
    for mode in modes() {
        group.bench_with_input(
            BenchmarkId::from_parameter(mode_name(mode)),
            &mode,
            |b, &mode| {
                let opts = StepOptions {
                    exec: mode,
                    ..StepOptions::default()
                };
                b.iter(|| {
                    solve_homological(&r, &h, &form, Some(&sing), 12, &dom, 1e-3, &opts).unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_diophantine_survey,
    bench_zone_measure,
    bench_homological_solve
);
criterion_main!(benches);
