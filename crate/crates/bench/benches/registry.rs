use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rover_esb::{OperationSignature, ProtocolKind, Registry, ServiceDescriptor};

fn populated(services: usize, ops_each: usize) -> Registry {
    let registry = Registry::new();
    for s in 0..services {
        let ops = (0..ops_each)
            .map(|o| OperationSignature::new(format!("Op{s}x{o}"), ""))
            .collect();
        registry
            .publish(ServiceDescriptor::new(format!("Svc{s}"), ProtocolKind::Rest, "127.0.0.1:9", ops))
            .unwrap();
    }
    registry
}

fn registry(c: &mut Criterion) {
    let mut group = c.benchmark_group("registry");
    for services in [3usize, 100, 1000] {
        let registry = populated(services, 5);
        let target = format!("Op{}x3", services / 2);
        group.bench_with_input(BenchmarkId::new("lookup", services), &target, |b, op| {
            b.iter(|| registry.lookup_by_operation(black_box(op)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("list-operations", services), &registry, |b, r| {
            b.iter(|| r.list_operations())
        });
    }
    let registry = populated(100, 5);
    group.bench_function("republish", |b| {
        b.iter(|| {
            let ops = (0..5).map(|o| OperationSignature::new(format!("Op50x{o}"), "")).collect();
            registry
                .publish(ServiceDescriptor::new("Svc50", ProtocolKind::Rest, "127.0.0.1:9", ops))
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, registry);
criterion_main!(benches);
