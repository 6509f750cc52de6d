use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spinflip_core::bloch::{general_solution, propagate, RegimeInit};
use spinflip_core::gate::tomograms_at;
use spinflip_core::{
    bell_fidelity, build_cnot_schedule, integrate, ClosedFormSequence, CnotSpec, DecayParams, DensityMatrix,
    IntegrateOptions, Mode, Relaxation, Shape, Transition, TransitionParams,
};

fn closed_forms(c: &mut Criterion) {
    let equal = TransitionParams::new(Transition::Optical01, 1.0, 0.3, 50.0, 50.0).unwrap();
    let unequal = TransitionParams::new(Transition::Optical01, 1.0, 0.3, 80.0, 50.0).unwrap();
    c.bench_function("torrey closed form", |b| {
        b.iter(|| general_solution(black_box(&equal), &RegimeInit::ground(), black_box(3.7)))
    });
    c.bench_function("matrix exponential T1 != T2", |b| {
        b.iter(|| propagate(black_box(&unequal), &RegimeInit::ground(), black_box(3.7)))
    });
    let s = build_cnot_schedule(&CnotSpec::default()).unwrap();
    let seq = ClosedFormSequence::new(&s, Relaxation::coherent(), 0.0, Mode::Consistent, false).unwrap();
    c.bench_function("three-regime state", |b| b.iter(|| seq.state_at(black_box(6.0))));
}

fn oracle(c: &mut Criterion) {
    let rho0 = DensityMatrix::basis(0).unwrap();
    let decay = DecayParams::from_times(100.0, 100.0, 100.0).unwrap();
    let mut group = c.benchmark_group("oracle");
    for envelope in [Shape::Square, Shape::Gaussian] {
        let s = build_cnot_schedule(&CnotSpec { envelope, ..CnotSpec::default() }).unwrap();
        let opts = IntegrateOptions { stride: 10, ..IntegrateOptions::new(0.005) };
        group.bench_function(format!("full sequence {}", envelope.as_str()), |b| {
            b.iter(|| integrate(black_box(&rho0), &s, &decay, &opts).unwrap())
        });
    }
    let s = build_cnot_schedule(&CnotSpec::default()).unwrap();
    let phi0 = s.cumulative_area(s.tau2());
    let phis: Vec<f64> = (0..6).map(|k| phi0 + k as f64 * PI / 2.0).collect();
    let opts = IntegrateOptions::new(0.005);
    group.bench_function("tomograms", |b| b.iter(|| tomograms_at(&s, &decay, &opts, black_box(&phis)).unwrap()));
    group.finish();

    let rho = DensityMatrix::diagonal([0.25; 4]);
    c.bench_function("bell fidelity", |b| b.iter(|| bell_fidelity(black_box(&rho))));
}

criterion_group!(benches, closed_forms, oracle);
criterion_main!(benches);
