use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use elkc::baselines::{self, CodecKind, TensorCodec};
use elkc::encode;
use elkc::quant3::{self, ErrorContext, QuantConfig};
use elkc_bench::{sparse_gaussian, ternary};

const N: usize = 1 << 20;

fn quantize(c: &mut Criterion) {
    let t = sparse_gaussian(N, 1.0, 1);
    let mut group = c.benchmark_group("quantize3");
    group.throughput(Throughput::Elements(N as u64));
    for s in [1.0f32, 1.75] {
        let cfg = QuantConfig::new(s).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(s), &cfg, |b, &cfg| {
            b.iter(|| quant3::quantize3(black_box(&t), cfg).unwrap())
        });
    }
    group.finish();
}

fn lossless(c: &mut Criterion) {
    let mut group = c.benchmark_group("lossless");
    group.throughput(Throughput::Elements(N as u64));
    for zeros in [0.5, 0.9] {
        let values = ternary(N, zeros, 2);
        let quartic = encode::quartic_encode(&values).unwrap();
        let zre = encode::zre_encode(&quartic.bytes).unwrap();
        group.bench_with_input(BenchmarkId::new("quartic_encode", zeros), &values, |b, v| {
            b.iter(|| encode::quartic_encode(black_box(v)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("quartic_decode", zeros), &quartic, |b, q| {
            b.iter(|| encode::quartic_decode(black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("zre_encode", zeros), &quartic.bytes, |b, q| {
            b.iter(|| encode::zre_encode(black_box(q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("zre_decode", zeros), &zre, |b, z| {
            b.iter(|| encode::zre_decode(black_box(z)).unwrap())
        });
    }
    group.finish();
}

fn pipelines(c: &mut Criterion) {
    let t = sparse_gaussian(N, 1.0, 3);
    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Elements(N as u64));
    for kind in [
        CodecKind::three_lc(1.0),
        CodecKind::three_lc(1.9),
        CodecKind::EightBitInt,
        CodecKind::StochThree,
        CodecKind::MqeOneBit,
        CodecKind::TopK { fraction: 0.05 },
    ] {
        let mut codec = TensorCodec::new(kind, vec![N], 4).unwrap();
        let blob = codec.encode(&t).unwrap().unwrap();
        group.bench_function(BenchmarkId::new("compress", kind), |b| {
            b.iter(|| codec.encode(black_box(&t)).unwrap())
        });
        group.bench_function(BenchmarkId::new("decompress", kind), |b| {
            b.iter(|| elkc::decompress(black_box(&blob)).unwrap())
        });
    }
    group.finish();
}

fn error_feedback(c: &mut Criterion) {
    let t = sparse_gaussian(N, 1.0, 5);
    let mut ctx = ErrorContext::new(vec![N], QuantConfig::default()).unwrap();
    c.bench_function("topk_exact_select_5pct", |b| {
        b.iter(|| baselines::topk_sparsify(&mut ctx, black_box(&t), 0.05).unwrap())
    });
}

criterion_group!(benches, quantize, lossless, pipelines, error_feedback);
criterion_main!(benches);
