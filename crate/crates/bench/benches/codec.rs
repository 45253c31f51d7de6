use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use mgpc_core::codec::range_coder::{RangeDecoder, RangeEncoder};
use mgpc_core::codec::{compress, decompress, CodecModel, GaussianTable, Topology};
use mgpc_core::pointcloud::toy_cloud;
use mgpc_core::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn range_coder(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = GaussianTable::new(2.5, 0.3);
    let values: Vec<i64> = (0..100_000).map(|_| rng.gen_range(-6..=6)).collect();
    let mut enc = RangeEncoder::new();
    for &v in &values {
        table.encode(&mut enc, v);
    }
    let bytes = enc.finish();

    let mut g = c.benchmark_group("range_coder");
    g.throughput(Throughput::Elements(values.len() as u64));
    g.bench_function("encode", |b| {
        b.iter(|| {
            let mut enc = RangeEncoder::new();
            for &v in &values {
                table.encode(&mut enc, v);
            }
            black_box(enc.finish())
        })
    });
    g.bench_function("decode", |b| {
        b.iter(|| {
            let mut dec = RangeDecoder::new(&bytes);
            for _ in 0..values.len() {
                black_box(table.decode(&mut dec).unwrap());
            }
        })
    });
    g.bench_function("table_build", |b| b.iter(|| black_box(GaussianTable::new(black_box(7.3), 0.25))));
    g.finish();
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rand_tensor = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let x = rand_tensor(&[4096, 64]);
    let w = rand_tensor(&[5, 64, 64]);
    let bias = rand_tensor(&[64]);

    let mut g = c.benchmark_group("conv1d");
    for stride in [1usize, 2] {
        g.bench_with_input(BenchmarkId::new("forward", stride), &stride, |b, &s| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.constant(x.clone());
                let wv = tape.param(w.clone());
                let bv = tape.param(bias.clone());
                black_box(tape.conv1d(xv, wv, bv, s).unwrap());
            })
        });
        g.bench_with_input(BenchmarkId::new("forward_backward", stride), &stride, |b, &s| {
            b.iter(|| {
                let mut tape = Tape::new();
                let xv = tape.param(x.clone());
                let wv = tape.param(w.clone());
                let bv = tape.param(bias.clone());
                let y = tape.conv1d(xv, wv, bv, s).unwrap();
                let l = tape.sum(y);
                black_box(tape.backward(l).unwrap());
            })
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let cloud = toy_cloud(20_000, 3).unwrap();
    let model = CodecModel::init(Topology::TOY, 1, 0);
    let bytes = compress(&model, &cloud).unwrap().to_bytes();

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.throughput(Throughput::Elements(cloud.len() as u64));
    g.bench_function("compress_20k", |b| b.iter(|| black_box(compress(&model, &cloud).unwrap())));
    g.bench_function("decompress_20k", |b| {
        b.iter(|| black_box(decompress(&model, &bytes, cloud.positions()).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, range_coder, conv, pipeline);
criterion_main!(benches);
