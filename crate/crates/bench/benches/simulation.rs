use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ssnscope_bench::scan_fixture;
use ssnscope_core::imaging::{effective_transmittance, pixelwise_precision, raster_scan, EstimatorKind, HistogramSpec};
use ssnscope_core::{simulate_window, Efficiency, OpticalChain, RngStream, StreamKey};

fn window(c: &mut Criterion) {
    let chain = OpticalChain::reference_setup();
    let eta = Efficiency::new(0.8).unwrap();
    let mut w = 0u64;
    c.bench_function("simulate_window/reference", |b| {
        b.iter(|| {
            w += 1;
            let mut s = RngStream::new(1, StreamKey::new(0, 0, 0, w));
            black_box(simulate_window(&chain, eta, &mut s).unwrap())
        })
    });
}

fn spot(c: &mut Criterion) {
    let f = scan_fixture(1, 1, 2, EstimatorKind::Klyshko, false);
    c.bench_function("effective_transmittance/3um", |b| {
        b.iter(|| black_box(effective_transmittance(&f.map, &f.spot, black_box((70.0, 140.0))).unwrap()))
    });
}

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("raster_scan_32x16x4");
    for kind in [EstimatorKind::Klyshko, EstimatorKind::Differential] {
        for parallel in [false, true] {
            let f = scan_fixture(32, 16, 4, kind, parallel);
            let name = format!("{}/{}", kind.name(), if parallel { "parallel" } else { "serial" });
            group.bench_function(name, |b| {
                b.iter(|| black_box(raster_scan(&f.map, &f.spot, &f.config, &f.acquisition, 7).unwrap()))
            });
        }
    }
    group.finish();
}

fn precision(c: &mut Criterion) {
    let f = scan_fixture(26, 14, 80, EstimatorKind::Klyshko, true);
    c.bench_function("pixelwise_precision/26x14x80", |b| {
        b.iter_batched(
            || raster_scan(&f.map, &f.spot, &f.config, &f.acquisition, 3).unwrap(),
            |stack| black_box(pixelwise_precision(&stack, Efficiency::new(0.9).unwrap(), HistogramSpec::default(), None).unwrap()),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, window, spot, scan, precision);
criterion_main!(benches);
