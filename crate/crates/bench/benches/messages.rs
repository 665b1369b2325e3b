use std::hint::black_box;

use consensus_core::factors::BOX_EDGE_WIDTH;
use consensus_core::{Bernoulli, FactorKind, InferenceMode, LinearRule, Message, MvGaussian, QuadratureSpec};
use criterion::{criterion_group, criterion_main, Criterion};

fn algebra(c: &mut Criterion) {
    let (a, b) = (Message::gaussian(0.3, 2.0), Message::gaussian(-1.0, 0.5));
    c.bench_function("gaussian product", |bench| bench.iter(|| black_box(&a).multiply(black_box(&b))));
    let cov = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let u = Message::MvGaussian(MvGaussian::from_mean_covariance(&nalgebra::DVector::from_vec(vec![1.0, 2.0]), &cov));
    let v = Message::MvGaussian(MvGaussian::isotropic(&[0.0, 1.0], 0.7));
    c.bench_function("2d gaussian quotient", |bench| bench.iter(|| black_box(&u).divide(black_box(&v))));
    let parts = vec![a.clone(), b.clone(), Message::gaussian(2.0, 1.0)];
    c.bench_function("moment average of 3", |bench| bench.iter(|| Message::moment_average(black_box(&parts))));
}

fn ep_updates(c: &mut Criterion) {
    let q = QuadratureSpec::default();
    let all = |kind: FactorKind, inputs: Vec<Message>| {
        move || kind.messages(&inputs, InferenceMode::Ep, LinearRule::Exact, &q)
    };
    let rotation = all(
        FactorKind::Rotation { variance: 0.01 },
        vec![
            Message::MvGaussian(MvGaussian::isotropic(&[1.2, 0.8], 0.05)),
            Message::gaussian(0.5, 0.3),
            Message::gaussian(1.5, 0.1),
        ],
    );
    c.bench_function("rotation EP messages", |bench| bench.iter(&rotation));
    let boxed = all(
        FactorKind::BoxMembership { pixel: [4.5, 6.5], edge_width: BOX_EDGE_WIDTH },
        vec![
            Message::Bernoulli(Bernoulli::from_probability(0.7)),
            Message::MvGaussian(MvGaussian::isotropic(&[5.0, 6.0], 2.0)),
            Message::gaussian(4.0, 0.5),
        ],
    );
    c.bench_function("box EP messages", |bench| bench.iter(&boxed));
    let gate = all(
        FactorKind::Gate { variance: 1e-4 },
        vec![
            Message::gaussian(0.6, 1e-6),
            Message::bernoulli(0.4),
            Message::gaussian(0.75, 0.01),
            Message::gaussian(0.25, 0.01),
        ],
    );
    c.bench_function("gate EP messages", |bench| bench.iter(&gate));
}

criterion_group!(benches, algebra, ep_updates);
criterion_main!(benches);
