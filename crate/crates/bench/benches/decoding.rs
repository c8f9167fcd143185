use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use marc_core::channel::{sample_rayleigh, SuperChannel};
use marc_core::codec::{decode, Dithers, Observation, Transmission};
use marc_core::linalg::{RMatrix, RVector};
use marc_core::rates::{DecoderKind, Scheme};
use marc_core::rng::stream_rng;
use marc_core::sim::{build_codes, SimPlan};
use marc_core::sphere::{sphere_decode, SearchConfig};
use rand::Rng;

fn closest_point(c: &mut Criterion) {
    let mut rng = stream_rng(1, 0);
    for n in [8usize, 16, 24] {
        let basis = RMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let target = RVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        c.bench_function(&format!("sphere_decode/n{n}"), |b| {
            b.iter(|| sphere_decode(black_box(&basis), black_box(&target), SearchConfig::default()))
        });
    }
}

fn destination_decoders(c: &mut Criterion) {
    let plan = SimPlan::coded_default(Scheme::Omlc);
    let mapper = build_codes(&plan).expect("codes");
    let cfg = plan.cfg.at_snr(25.0);
    let mut rng = stream_rng(2, 0);
    let real = sample_rayleigh(&cfg, &mut rng);
    let messages: Vec<Vec<i64>> = mapper
        .user_codes()
        .iter()
        .map(|code| (0..code.dim()).map(|_| rng.random_range(0..code.tau() as i64)).collect())
        .collect();
    let dithers = Dithers::sample(&mapper, &mut rng);
    let sent = Transmission::new(&mapper, &messages, &dithers).expect("encode");
    let h = SuperChannel::assemble(&real, 1, &cfg).expect("channel").h_dst;
    let y = &h * sent.stacked(true) + RVector::from_fn(h.nrows(), |_, _| rng.random_range(-0.3..0.3));
    let obs = Observation {
        y: &y,
        h: &h,
        mapper: &mapper,
        dithers: &dithers,
        with_relay: true,
        search: SearchConfig::default(),
    };
    for kind in [DecoderKind::OneStage, DecoderKind::KStage] {
        c.bench_function(&format!("destination/{kind}"), |b| b.iter(|| decode(black_box(&obs), kind)));
    }
}

criterion_group!(benches, closest_point, destination_decoders);
criterion_main!(benches);
