//! End-to-end performance of the hot paths: convolution passes, realization
//! generation, two-point statistics, the flow solve and proposal drawing.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use geogan_bench::striped_grid;
use geogan_core::convnet::{
    backward, forward_with_trace, init_params, ArchitectureSpec,
};
use geogan_core::flow::{k_field_from_facies, solve_heads, FlowModel, Well};
use geogan_core::mcmc::propose;
use geogan_core::metrics::{
    connectivity_function, label_components, two_point_probability, Direction,
};
use geogan_core::simulate::{generate, median_filter, sample_latent, PostprocessSpec};
use geogan_core::tensor::Tensor;
use geogan_core::grid::ContinuousGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv_passes(c: &mut Criterion) {
    let arch = ArchitectureSpec::generator(2, 1, vec![16, 8, 1], 5);
    let net = init_params(&arch, 1).unwrap();
    let z = Tensor::from_vec(&[1, 1, 9, 9], vec![0.3; 81]).unwrap();
    c.bench_function("generator_forward_9_to_65", |b| {
        b.iter(|| forward_with_trace(&net, black_box(&z)).unwrap())
    });

    let trace = forward_with_trace(&net, &z).unwrap();
    let ones = Tensor::filled(trace.output().shape(), 1.0).unwrap();
    c.bench_function("generator_backward_9_to_65", |b| {
        b.iter(|| backward(&net, black_box(&trace), &ones).unwrap())
    });
}

fn generation(c: &mut Criterion) {
    let arch = ArchitectureSpec::generator(2, 1, vec![16, 8, 1], 5);
    let net = init_params(&arch, 2).unwrap();
    let z = sample_latent(1, &[5, 5], 3).unwrap();
    let post = PostprocessSpec::binary().with_median(vec![3, 3]);
    c.bench_function("generate_33x33_median_threshold", |b| {
        b.iter(|| generate(&net, black_box(&z), &post).unwrap())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..129 * 129).map(|_| rng.gen_range(0.0..1.0)).collect();
    let grid = ContinuousGrid::new(&[129, 129], data).unwrap();
    c.bench_function("median_filter_129x129", |b| {
        b.iter(|| median_filter(black_box(&grid), &[3, 3]).unwrap())
    });
}

fn statistics(c: &mut Criterion) {
    let grid = striped_grid(129);
    c.bench_function("two_point_probability_129x129", |b| {
        b.iter(|| two_point_probability(black_box(&grid), 1, Direction::X, 60).unwrap())
    });
    c.bench_function("connectivity_function_129x129", |b| {
        b.iter(|| connectivity_function(black_box(&grid), 1, Direction::DXy, 60).unwrap())
    });
    c.bench_function("label_components_129x129", |b| {
        b.iter(|| label_components(black_box(&grid), 1))
    });
}

fn flow(c: &mut Criterion) {
    for n in [33usize, 125] {
        let grid = striped_grid(n);
        let k = k_field_from_facies(&grid, &[1e-4, 1e-2]).unwrap();
        let mut model = FlowModel::with_gradient(n, n, 1.0, 1.0, 1.0, k, 0.01);
        model.wells.push(Well {
            ix: n / 2,
            iy: n / 2,
            rate: -0.001,
        });
        c.bench_function(&format!("solve_heads_{n}x{n}"), |b| {
            b.iter(|| solve_heads(black_box(&model)).unwrap())
        });
    }
}

fn proposals(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let archive: Vec<Vec<f64>> = (0..250)
        .map(|_| (0..25).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let state: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    c.bench_function("propose_dim25", |b| {
        b.iter(|| propose(black_box(&state), &archive, 0.1, 1e-6, &mut rng).unwrap())
    });
}

criterion_group!(benches, conv_passes, generation, statistics, flow, proposals);
criterion_main!(benches);
