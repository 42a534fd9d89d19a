use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kqlab_core::asymptotics::{ambient_kernel, AmbientMetric};
use kqlab_core::families::SoftMax;
use kqlab_core::geodesics::make_geodesic;
use kqlab_core::pluripotential::{envelope, ma_energy};
use kqlab_core::radial::legendre::legendre_dual;
use kqlab_core::sections::{bergman_density, quantized_energy};
use kqlab_core::{DualGrid, Grid, GridFunction, PolarizedModel, SectionSpace, Weight};

fn setup(n: usize) -> (PolarizedModel, Weight) {
    let grid = Grid::new(-30.0, 30.0, n).unwrap();
    let model = PolarizedModel::fubini_study(grid, 2).unwrap();
    let lse = SoftMax::new(vec![(0.0, 0.0), (2.0, -2.0)], 1.0).unwrap();
    let phi0 = model.phi0().as_function().values().to_vec();
    let u: Vec<f64> = grid.nodes().zip(&phi0).map(|(s, p)| 0.5 * (lse.value(s) - p)).collect();
    let u = Weight::certified(&model, GridFunction::from_values(grid, u, 0.0, 0.0).unwrap()).unwrap();
    (model, u)
}

fn legendre(c: &mut Criterion) {
    let mut g = c.benchmark_group("legendre_dual");
    for n in [4001, 64001] {
        let (model, u) = setup(n);
        let phi = model.potential(u.function()).unwrap();
        let dual = DualGrid::new(0.0, 2.0, n).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| legendre_dual(black_box(&phi), dual).unwrap())
        });
    }
    g.finish();
}

fn energies(c: &mut Criterion) {
    let (model, u) = setup(4001);
    c.bench_function("ma_energy_4001", |b| b.iter(|| ma_energy(&model, black_box(&u)).unwrap()));
    let mut g = c.benchmark_group("quantized_energy");
    for k in [8, 64] {
        let space = SectionSpace::new(&model, k, 0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| quantized_energy(&space, black_box(u.function())).unwrap())
        });
    }
    g.finish();
    let space = SectionSpace::new(&model, 64, 0).unwrap();
    c.bench_function("bergman_density_k64", |b| {
        b.iter(|| bergman_density(&space, black_box(u.function()), true).unwrap())
    });
}

fn envelopes_and_paths(c: &mut Criterion) {
    let (model, u) = setup(4001);
    let f = GridFunction::from_fn(*model.grid(), |s| 1.2 / s.cosh() - 0.5 / (s - 3.0).cosh(), 0.0, 0.0).unwrap();
    c.bench_function("envelope_4001", |b| b.iter(|| envelope(&model, black_box(&f)).unwrap()));
    let zero = Weight::zero(&model);
    c.bench_function("geodesic_4001", |b| {
        b.iter(|| make_geodesic(&model, &zero, black_box(&u)).unwrap().evaluate(0.5).unwrap())
    });
}

fn kernels(c: &mut Criterion) {
    let metric = AmbientMetric::perturbed_fs(Grid::new(-30.0, 30.0, 4001).unwrap(), 0.05).unwrap();
    let mut g = c.benchmark_group("ambient_kernel");
    g.sample_size(20);
    for p in [32, 128] {
        g.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, &p| {
            b.iter(|| ambient_kernel(black_box(p), &metric).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, legendre, energies, envelopes_and_paths, kernels);
criterion_main!(benches);
