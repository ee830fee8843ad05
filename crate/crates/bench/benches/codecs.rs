use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rover_esb::message::{self, Envelope};
use rover_esb::ProtocolKind;
use rover_esb_bench::{image_request, trace_request};

fn codecs(c: &mut Criterion) {
    let cases = [("trace", trace_request()), ("image-64", image_request(64))];
    for (label, req) in cases {
        let env = Envelope::Request(req);
        let mut group = c.benchmark_group(format!("codec/{label}"));
        for kind in ProtocolKind::ALL {
            let msg = message::encode(&env, kind).unwrap();
            group.throughput(Throughput::Elements(1));
            group.bench_with_input(BenchmarkId::new("encode", kind), &env, |b, env| {
                b.iter(|| message::encode(black_box(env), kind).unwrap())
            });
            group.bench_with_input(BenchmarkId::new("decode", kind), &msg, |b, msg| {
                b.iter(|| message::decode(black_box(msg), kind).unwrap())
            });
        }
        group.finish();
    }
}

criterion_group!(benches, codecs);
criterion_main!(benches);
