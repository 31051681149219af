//! Sequential vs rayon execution of the data-parallel loops.
//!
//!     cargo bench -p vlfuse --bench parallel_vs_sequential
//!
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlfuse::detection_io::{bin_events_with, DetectionSource, Event, LidarPoint, LidarScan, CLASS_PERSON};
use vlfuse::evaluation::{pair_frames, pr_sweep, Grid};
use vlfuse::lidar_fusion::{fuse_bbox, FusionParams};
use vlfuse::simulator::{simulate, AgentConfig, Body, SceneConfig};
use vlfuse::{BBox, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn crowd_scene() -> SceneConfig {
    let mut cfg = SceneConfig::new(3, 10.0);
    cfg.source = DetectionSource::Event;
    for k in 0..6 {
        let x = 5.0 + k as f64 * 1.5;
        cfg.agents.push(AgentConfig {
            class_id: CLASS_PERSON,
            subject: None,
            body: Body::Cylinder {
                radius: 0.25,
                height: 1.75,
            },
            waypoints: vec![[0.0, x, -3.0 + k as f64, 0.0], [10.0, x, 3.0 - k as f64, 0.0]],
        });
    }
    cfg.detector.jitter_px = 2.0;
    cfg.detector.miss_prob = 0.1;
    cfg.detector.fp_rate = 0.5;
    cfg
}

fn bench_pr_sweep(c: &mut Criterion) {
    let sim = simulate(&crowd_scene(), Execution::default()).unwrap();
    let frames = pair_frames(&sim.reference_detections, &sim.detections, 0.025);
    let grid = Grid::standard();
    let mut g = c.benchmark_group("pr_sweep");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pr_sweep(black_box(&frames), &grid, exec))
        });
    }
    g.finish();
}

fn bench_fuse_bbox(c: &mut Criterion) {
    let cfg = crowd_scene();
    let calib = cfg.calibration().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // dense cloud ahead of the LiDAR (x forward, y left, z up)
    let points = (0..200_000)
        .map(|_| LidarPoint {
            x: rng.random_range(2.0..20.0),
            y: rng.random_range(-6.0..6.0),
            z: rng.random_range(-1.5..1.5),
            t: rng.random_range(0.0..0.1),
        })
        .collect();
    let scan = LidarScan { scan_t: 0.05, points };
    let bbox = BBox::new(200.0, 150.0, 440.0, 330.0).unwrap();
    let params = FusionParams::default();
    let mut g = c.benchmark_group("fuse_bbox");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fuse_bbox(black_box(&scan), &calib, &bbox, &params, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_bin_events(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let events: Vec<Event> = (0..1_000_000)
        .map(|_| Event {
            x: rng.random_range(0..640),
            y: rng.random_range(0..480),
            t: rng.random_range(0.0..0.05),
            p: if rng.random::<bool>() { 1 } else { -1 },
        })
        .collect();
    let mut g = c.benchmark_group("bin_events");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bin_events_with(exec, black_box(&events), 0.0, 0.05, 10, 480, 640))
        });
    }
    g.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let cfg = crowd_scene();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_pr_sweep,
    bench_fuse_bbox,
    bench_bin_events,
    bench_simulate
);
criterion_main!(benches);
