//! Acceptance suite: one test per release criterion, each printing a
//! single PASS line with its measured numbers (run with
//! `cargo test -p polarloc-cli --test acceptance -- --nocapture`).
//!
//! Budgets and thresholds are pinned here, not tuned at runtime.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use polarloc_cli::config::RunConfig;
use polarloc_cli::gradcheck;
use polarloc_core::bev::{channel_pool, BevConfig, PolarBev, PoolMode};
use polarloc_core::cloud::{rotate_point_cloud, PointCloud, Pose};
use polarloc_core::correlate::{brute_force_sweep, cross_power, correlation_1d, Metric, Reduction};
use polarloc_core::features::{
    feature_forward, Activation, FeatureMap, FeatureParams, LayerSpec,
};
use polarloc_core::learn::{train, LossConfig, TrainingTuple};
use polarloc_core::pipeline::SignaturePipeline;
use polarloc_core::retrieve::{
    evaluate_retrieval, rejection_pr_curve, KdIndex, PlaceRecord, SignatureDb,
};
use polarloc_core::spectrum::{
    fft2_per_channel, magnitude_signature, signature_distance, CropConfig, CropMode, Signature,
};
use polarloc_core::synth::{
    generate_benchmark, generate_world, simulate_scan, BenchmarkSpec, ScanSpec, World,
    YawDistribution,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_scan(world: &World, x: f64, y: f64, yaw: f64, seed_jitter: f64) -> PointCloud {
    // seed_jitter perturbs the pose bits so repeated scans draw fresh noise
    simulate_scan(
        world,
        &ScanSpec {
            pose: Pose::new(x + seed_jitter * 1e-9, y, yaw),
            beams: 120,
            rings: 32,
            range_noise_sigma_m: 0.05,
            dropout_prob: 0.1,
        },
    )
}

fn clear_positions(world: &World, n: usize, seed: u64, min_spacing: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = world.extent_m / 2.0 * 0.9;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.random_range(-half..half);
        let y = rng.random_range(-half..half);
        if world.is_clear(x, y, 1.0)
            && out
                .iter()
                .all(|&(px, py)| ((x - px).powi(2) + (y - py).powi(2)).sqrt() >= min_spacing)
        {
            out.push((x, y));
        }
    }
    out
}

/// Criterion 1: signatures of a scan and any whole-sector rotation of it
/// agree to 1e-6 relative, over 100 scans and all 120 column shifts,
/// inside 60 seconds.
#[test]
fn criterion_1_rotation_invariance() {
    let start = Instant::now();
    let world = generate_world(11, 160, 200.0);
    let pipeline = SignaturePipeline::default();
    let positions = clear_positions(&world, 100, 12, 3.0);

    let mut worst_rel: f64 = 0.0;
    for (i, &(x, y)) in positions.iter().enumerate() {
        let scan = noisy_scan(&world, x, y, 0.0, i as f64);
        let base = pipeline.signature(&scan).unwrap();
        let norm = base.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "scan {i} has an empty signature");
        for k in 0..120i64 {
            let sig = pipeline
                .signature(&rotate_point_cloud(&scan, k as f64 * 3.0))
                .unwrap();
            let rel = signature_distance(&base, &sig).unwrap() / norm;
            worst_rel = worst_rel.max(rel);
            assert!(rel < 1e-6, "scan {i}, shift {k}: relative distance {rel}");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1} s, budget 60 s");
    println!(
        "PASS criterion 1: rotation invariance — worst relative distance {worst_rel:.3e} \
         over 100 scans x 120 shifts in {elapsed:.1} s"
    );
}

/// Criterion 2: on noise-free shifted copies the argmax solver recovers
/// every shift bin exactly, and the frequency-domain correlation equals
/// the exhaustive sweep to 1e-6 relative.
#[test]
fn criterion_2_exact_yaw_recovery() {
    let world = generate_world(21, 160, 200.0);
    let pipeline = SignaturePipeline::default();
    let mut worst_rel: f64 = 0.0;
    let positions = clear_positions(&world, 3, 22, 20.0);
    for (si, &(x, y)) in positions.iter().enumerate() {
        let scan = simulate_scan(
            &world,
            &ScanSpec::noise_free(Pose::new(x, y, 0.0), 120, 32),
        );
        let g = pipeline.feature_map(&scan).unwrap();
        for k in 0..120usize {
            let gs = g.shift_columns(k as i64);
            let sweep = brute_force_sweep(&g, &gs, Metric::Inner).unwrap();
            let cp = cross_power(&fft2_per_channel(&gs), &fft2_per_channel(&g), false).unwrap();
            let corr = correlation_1d(&cp, Reduction::RingZero);

            let argmax = corr
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, k, "scan {si}: argmax bin");

            let scale = sweep.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (c, s) in corr.iter().zip(&sweep) {
                let rel = (c - s).abs() / scale;
                worst_rel = worst_rel.max(rel);
                assert!(rel < 1e-6, "scan {si}, shift {k}: correlation mismatch {rel}");
            }
        }
    }
    println!(
        "PASS criterion 2: exact yaw recovery — zero bin error over 3 scans x 120 shifts, \
         worst correlation deviation {worst_rel:.3e}"
    );
}

/// Criterion 3: expectation-mode yaw on 500 noisy revisit pairs with
/// position perturbation stays within 3 degrees mean absolute error and
/// 6 degrees standard deviation, inside 5 minutes.
#[test]
fn criterion_3_noisy_yaw_accuracy() {
    let start = Instant::now();
    let world = generate_world(31, 200, 220.0);
    let pipeline = SignaturePipeline::default();
    let positions = clear_positions(&world, 500, 32, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(33);

    let mut abs_errors = Vec::with_capacity(500);
    for &(x, y) in &positions {
        let yaw_a: f64 = rng.random_range(0.0..360.0);
        let yaw_b: f64 = rng.random_range(0.0..360.0);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let offset = 0.5 * rng.random_range(0.0f64..1.0).sqrt();
        let scan_a = noisy_scan(&world, x, y, yaw_a, 0.0);
        let scan_b = noisy_scan(
            &world,
            x + offset * angle.cos(),
            y + offset * angle.sin(),
            yaw_b,
            0.0,
        );
        // Scan B's cloud is scan A's rotated by (yaw_a - yaw_b).
        let truth = (yaw_a - yaw_b).rem_euclid(360.0);
        let sol = pipeline.yaw_between(&scan_a, &scan_b).unwrap();
        let diff = (sol.expectation.yaw_deg - truth).rem_euclid(360.0);
        abs_errors.push(diff.min(360.0 - diff));
    }
    let n = abs_errors.len() as f64;
    let mean = abs_errors.iter().sum::<f64>() / n;
    let std = (abs_errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(mean <= 3.0, "mean absolute yaw error {mean:.3} deg > 3.0");
    assert!(std <= 6.0, "yaw error std {std:.3} deg > 6.0");
    assert!(elapsed < 300.0, "took {elapsed:.1} s, budget 300 s");
    println!(
        "PASS criterion 3: noisy yaw accuracy — mean |err| {mean:.3} deg, std {std:.3} deg \
         over 500 pairs in {elapsed:.1} s"
    );
}

/// Criterion 4: synthetic retrieval quality — 200 places, 100 revisit
/// queries with arbitrary yaw including flips (recall@1 >= 0.95,
/// recall@1% = 1.0), and rejection PR AUC > 0.9 on a 50/50 mix.
#[test]
fn criterion_4_synthetic_retrieval() {
    let world = generate_world(41, 240, 220.0);
    let spec = BenchmarkSpec {
        seed: 42,
        n_db_places: 200,
        n_queries: 200, // first 100 revisits, then 100 novel places
        revisit_fraction: 0.5,
        yaw_distribution: YawDistribution::UniformWithFlips,
        ..BenchmarkSpec::default()
    };
    let bench = generate_benchmark(&world, &spec).unwrap();
    let pipeline = SignaturePipeline::default();

    let mut db = SignatureDb::new(pipeline.signature_len());
    for (i, (pose, cloud)) in bench.db.iter().enumerate() {
        db.insert(PlaceRecord {
            place_id: i as u64,
            signature: pipeline.signature(cloud).unwrap(),
            pose: *pose,
            tag: None,
        })
        .unwrap();
    }

    let signatures: Vec<Signature> = bench
        .queries
        .iter()
        .map(|q| pipeline.signature(&q.cloud).unwrap())
        .collect();

    let revisit_queries: Vec<(Signature, Pose)> = bench
        .queries
        .iter()
        .zip(&signatures)
        .filter(|(q, _)| q.association.is_some())
        .map(|(q, s)| (s.clone(), q.pose))
        .collect();
    assert_eq!(revisit_queries.len(), 100);
    let report = evaluate_retrieval(&db, &revisit_queries, 1.5, 10).unwrap();
    assert!(
        report.recall_at_1 >= 0.95,
        "recall@1 {} < 0.95",
        report.recall_at_1
    );
    assert_eq!(
        report.recall_at_1pct, 1.0,
        "recall@1% {} != 1.0",
        report.recall_at_1pct
    );

    // Unseen-place rejection over the full 50/50 mix.
    let mut samples = Vec::with_capacity(bench.queries.len());
    for (q, sig) in bench.queries.iter().zip(&signatures) {
        let top = db.query_top_k(sig, 1).unwrap();
        let (id, dist) = top.ranked[0];
        let correct = db.get(id).unwrap().pose.planar_distance(&q.pose) <= 1.5;
        samples.push((dist, q.association.is_some() && correct));
    }
    let (_, auc) = rejection_pr_curve(&samples);
    assert!(auc > 0.9, "rejection PR AUC {auc} <= 0.9");
    println!(
        "PASS criterion 4: synthetic retrieval — recall@1 {:.3}, recall@1% {:.3}, \
         rejection PR AUC {auc:.3}",
        report.recall_at_1, report.recall_at_1pct
    );
}

/// Criterion 5: every finite-difference gradient check passes at its
/// threshold, and the gradcheck command exits 0.
#[test]
fn criterion_5_gradient_integrity() {
    let results = gradcheck::run_all(&LossConfig::default(), 0);
    for r in &results {
        assert!(
            r.passed(),
            "{}: worst relative error {:.3e} >= {:.0e}",
            r.name,
            r.worst_rel_err,
            r.threshold
        );
    }
    let worst = results
        .iter()
        .map(|r| r.worst_rel_err)
        .fold(0.0f64, f64::max);

    let output = Command::new(env!("CARGO_BIN_EXE_polarloc"))
        .args(["gradcheck", "--seed", "0"])
        .output()
        .expect("spawn gradcheck");
    assert!(
        output.status.success(),
        "cmd_gradcheck exited nonzero: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    println!(
        "PASS criterion 5: gradient integrity — {} checks, worst relative error {worst:.3e}, \
         cmd_gradcheck exit 0",
        results.len()
    );
}

fn training_tuples(world: &World, n: usize) -> Vec<TrainingTuple> {
    let pipeline = SignaturePipeline::default();
    let bev_cfg = BevConfig {
        rings: 16,
        sectors: 24,
        layers: 20,
        ..BevConfig::default()
    };
    let positions = clear_positions(world, n + 2, 61, 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let bevs: Vec<PolarBev> = positions
        .iter()
        .map(|&(x, y)| {
            let scan = noisy_scan(world, x, y, 0.0, 0.0);
            let full = polarloc_core::bev::build_polar_bev(&pipeline.preprocess(&scan), &bev_cfg)
                .unwrap();
            let mut pooled = channel_pool(&full, PoolMode::Max);
            // Unit-energy grids keep signature distances on the scale of
            // the configured margins.
            let norm = pooled.cells.iter().map(|v| v * v).sum::<f64>().sqrt();
            pooled.cells.mapv_inplace(|v| v / norm);
            pooled
        })
        .collect();
    (0..n)
        .map(|i| {
            let shift = rng.random_range(1..24i64);
            TrainingTuple {
                query: bevs[i].clone(),
                positive: polarloc_core::bev::rotate_polar_bev(&bevs[i], shift),
                negatives: vec![bevs[(i + 1) % (n + 2)].clone(), bevs[(i + 2) % (n + 2)].clone()],
                true_yaw_deg: shift as f64 * 15.0,
            }
        })
        .collect()
}

/// Criterion 6: 200 joint-loss descent steps on a 20-tuple synthetic set
/// cut the total loss by at least half, reproducibly.
#[test]
fn criterion_6_training_smoke() {
    let world = generate_world(61, 160, 200.0);
    let tuples = training_tuples(&world, 20);
    let params = FeatureParams::glorot(
        1,
        &[
            LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 4,
                activation: Activation::Relu,
            },
            LayerSpec {
                kernel_h: 3,
                kernel_w: 3,
                c_out: 2,
                activation: Activation::Identity,
            },
        ],
        63,
    )
    .unwrap();
    let crop = CropConfig {
        crop_h: 8,
        crop_w: 8,
        mode: CropMode::LowPass,
    };
    let cfg = LossConfig {
        learning_rate: 2e-3,
        ..LossConfig::default()
    };
    // 20 tuples x 10 epochs = 200 descent steps.
    let run = || train(&tuples, params.clone(), (5.0, 0.0), &crop, &cfg, 10).unwrap();
    let out = run();
    let first = out.telemetry.first().unwrap().total;
    let last = out.telemetry.last().unwrap().total;
    assert!(
        last <= 0.5 * first,
        "loss fell only {first:.4} -> {last:.4} (need >= 50%)"
    );
    let again = run();
    assert_eq!(out.params, again.params, "training must replay bit-identically");
    assert_eq!(out.scale, again.scale);
    println!(
        "PASS criterion 6: training smoke — total loss {first:.4} -> {last:.4} \
         ({:.1}% reduction) over 200 steps, replay identical",
        (1.0 - last / first) * 100.0
    );
}

/// Criterion 7: oracle equivalences — kd-tree vs exact scan bit-identical
/// on 1000 queries, FFT vs direct DFT summation, convolution vs the
/// nested-loop reference.
#[test]
fn criterion_7_oracle_equivalences() {
    // Tree vs linear scan.
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let dim = 32;
    let mut db = SignatureDb::new(dim);
    for id in 0..1000u64 {
        let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0f64..4.0)).collect();
        db.insert(PlaceRecord {
            place_id: id,
            signature: Signature { values },
            pose: Pose::new(0.0, 0.0, 0.0),
            tag: None,
        })
        .unwrap();
    }
    let index = KdIndex::build(&db);
    for _ in 0..1000 {
        let probe = Signature {
            values: (0..dim).map(|_| rng.random_range(-4.0f64..4.0)).collect(),
        };
        let k = rng.random_range(1..25);
        let exact = db.query_top_k(&probe, k).unwrap();
        let tree = index.query_top_k(&db, &probe, k).unwrap();
        assert_eq!(exact, tree, "tree and scan rankings must be bit-identical");
    }

    // FFT vs direct DFT on grids up to 8x8.
    let mut worst_fft: f64 = 0.0;
    for &(h, w) in &[(4usize, 4usize), (8, 8), (5, 8), (8, 7)] {
        let mut values = ndarray::Array3::zeros((h, w, 1));
        for v in values.iter_mut() {
            *v = rng.random_range(-1.0f64..1.0);
        }
        let map = FeatureMap { values };
        let spec = fft2_per_channel(&map);
        for fr in 0..h {
            for fc in 0..w {
                let mut acc = (0.0f64, 0.0f64);
                for r in 0..h {
                    for c in 0..w {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * (fr as f64 * r as f64 / h as f64 + fc as f64 * c as f64 / w as f64);
                        acc.0 += map.values[[r, c, 0]] * phase.cos();
                        acc.1 += map.values[[r, c, 0]] * phase.sin();
                    }
                }
                let bin = spec.bins[[fr, fc, 0]];
                let diff = ((bin.re - acc.0).powi(2) + (bin.im - acc.1).powi(2)).sqrt();
                worst_fft = worst_fft.max(diff);
                assert!(diff < 1e-9, "({fr},{fc}) of {h}x{w}: diff {diff}");
            }
        }
    }

    // Convolution vs nested-loop reference.
    let mut bev = PolarBev::zeros(BevConfig {
        rings: 9,
        sectors: 14,
        layers: 2,
        ..BevConfig::default()
    });
    for v in bev.cells.iter_mut() {
        *v = rng.random_range(-1.0f64..1.0);
    }
    let params = FeatureParams::glorot(
        2,
        &[LayerSpec {
            kernel_h: 3,
            kernel_w: 3,
            c_out: 3,
            activation: Activation::Identity,
        }],
        72,
    )
    .unwrap();
    let got = feature_forward(&bev, &params).unwrap();
    let layer = &params.layers[0];
    let mut worst_conv: f64 = 0.0;
    for y in 0..9usize {
        for x in 0..14usize {
            for o in 0..3usize {
                let mut acc = layer.bias[o];
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        let sy = y as isize + dy as isize - 1;
                        if !(0..9).contains(&sy) {
                            continue;
                        }
                        let sx = (x as isize + dx as isize - 1).rem_euclid(14) as usize;
                        for i in 0..2usize {
                            acc += bev.cells[[sy as usize, sx, i]] * layer.weights[[dy, dx, i, o]];
                        }
                    }
                }
                let diff = (got.values[[y, x, o]] - acc).abs();
                worst_conv = worst_conv.max(diff);
                assert!(diff < 1e-6, "conv mismatch at ({y},{x},{o}): {diff}");
            }
        }
    }
    println!(
        "PASS criterion 7: oracle equivalences — 1000 tree queries bit-identical, \
         FFT vs DFT worst {worst_fft:.3e}, conv vs loops worst {worst_conv:.3e}"
    );
}

/// Criterion 8: signature generation plus orientation estimation stays
/// at or below 50 ms per scan at the default configuration.
#[test]
fn criterion_8_throughput() {
    let world = generate_world(81, 240, 220.0);
    let pipeline = SignaturePipeline::default();
    let positions = clear_positions(&world, 100, 82, 3.0);
    let scans: Vec<PointCloud> = positions
        .iter()
        .map(|&(x, y)| noisy_scan(&world, x, y, 0.0, 0.0))
        .collect();

    // Warm the FFT plans outside the timed region.
    let _ = pipeline.signature(&scans[0]).unwrap();

    let mut maps = Vec::with_capacity(scans.len());
    let t0 = Instant::now();
    for scan in &scans {
        let bev = pipeline.polar_bev(scan).unwrap();
        let map = pipeline.feature_map_of_bev(&bev).unwrap();
        let spectrum = fft2_per_channel(&map);
        let _sig = magnitude_signature(&spectrum, &pipeline.crop).unwrap();
        maps.push(map);
    }
    let sig_ms = t0.elapsed().as_secs_f64() * 1e3 / scans.len() as f64;

    let t1 = Instant::now();
    for pair in maps.windows(2) {
        let _ = polarloc_core::correlate::estimate_yaw(&pair[0], &pair[1], &pipeline.solver)
            .unwrap();
    }
    let yaw_ms = t1.elapsed().as_secs_f64() * 1e3 / (maps.len() - 1) as f64;
    let per_scan = sig_ms + yaw_ms;
    assert!(
        per_scan <= 50.0,
        "signature {sig_ms:.2} ms + orientation {yaw_ms:.2} ms = {per_scan:.2} ms > 50 ms"
    );
    println!(
        "PASS criterion 8: throughput — signature {sig_ms:.2} ms + orientation {yaw_ms:.2} ms \
         = {per_scan:.2} ms per scan (budget 50 ms)"
    );
}

/// Criterion 9: rerunning each CLI command with the same config and seed
/// produces byte-identical non-timing outputs.
#[test]
fn criterion_9_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_polarloc");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg_path = root.join("run.cfg");
    std::fs::write(
        &cfg_path,
        "world_landmarks=120\nworld_extent_m=150\nsynth_db_places=10\nsynth_queries=6\nseed=5\n",
    )
    .unwrap();
    let cfg = ["--config", cfg_path.to_str().unwrap()];

    let run = |args: &[&str]| -> (Vec<u8>, bool) {
        let out = Command::new(bin).args(args).output().expect("spawn");
        (out.stdout, out.status.success())
    };
    let path = |p: &Path, s: &str| -> String { p.join(s).to_str().unwrap().to_string() };

    // synth twice into separate directories.
    for sub in ["a", "b"] {
        let (_, ok) = run(&["synth", "--out", &path(root, sub), "--seed", "5", cfg[0], cfg[1]]);
        assert!(ok, "synth failed");
    }
    let manifest_a = std::fs::read(root.join("a/manifest.csv")).unwrap();
    let manifest_b = std::fs::read(root.join("b/manifest.csv")).unwrap();
    assert_eq!(manifest_a, manifest_b, "synth manifests differ");
    for entry in std::fs::read_dir(root.join("a/scans")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(root.join("a/scans").join(&name)).unwrap();
        let b = std::fs::read(root.join("b/scans").join(&name)).unwrap();
        assert_eq!(a, b, "scan {name:?} differs");
    }

    // build-db twice.
    let manifest = path(root, "a/manifest.csv");
    for db in ["da.dsig", "db.dsig"] {
        let (_, ok) = run(&["build-db", "--manifest", &manifest, "--db", &path(root, db), cfg[0], cfg[1]]);
        assert!(ok, "build-db failed");
    }
    let da = std::fs::read(root.join("da.dsig")).unwrap();
    let dbb = std::fs::read(root.join("db.dsig")).unwrap();
    assert_eq!(da, dbb, "database files differ");
    assert!(!da.is_empty());

    // query twice (with yaw), compare stdout.
    let scan = path(root, "a/scans/query_0000.xyz");
    let dbp = path(root, "da.dsig");
    let q = [
        "query", "--db", &dbp, "--scan", &scan, "--k", "5", "--with-yaw",
        "--manifest", &manifest, cfg[0], cfg[1],
    ];
    let (q1, ok1) = run(&q);
    let (q2, ok2) = run(&q);
    assert!(ok1 && ok2, "query failed");
    assert_eq!(q1, q2, "query stdout differs");
    assert!(!q1.is_empty());

    // eval twice, compare all four output files.
    for out in ["e1.csv", "e2.csv"] {
        let (_, ok) = run(&[
            "eval", "--db", &dbp, "--manifest", &manifest, "--out", &path(root, out),
            "--k", "5", cfg[0], cfg[1],
        ]);
        assert!(ok, "eval failed");
    }
    for suffix in ["", "_curve", "_pr", "_distances"] {
        let a = std::fs::read(root.join(format!("e1{suffix}.csv"))).unwrap();
        let b = std::fs::read(root.join(format!("e2{suffix}.csv"))).unwrap();
        assert_eq!(a, b, "eval output e*{suffix}.csv differs");
    }

    // gradcheck twice, compare stdout.
    let (g1, ok1) = run(&["gradcheck", "--seed", "9", cfg[0], cfg[1]]);
    let (g2, ok2) = run(&["gradcheck", "--seed", "9", cfg[0], cfg[1]]);
    assert!(ok1 && ok2, "gradcheck failed");
    assert_eq!(g1, g2, "gradcheck stdout differs");

    println!(
        "PASS criterion 9: CLI determinism — synth, build-db, query, eval, gradcheck \
         reruns byte-identical"
    );
}

/// The config keys the acceptance runs rely on must match the documented
/// defaults.
#[test]
fn acceptance_config_defaults_are_pinned() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.rings, 40);
    assert_eq!(cfg.sectors, 120);
    assert_eq!(cfg.layers, 20);
    assert_eq!(cfg.signature_dim, 1024);
    assert_eq!(cfg.alpha1, 0.5);
    assert_eq!(cfg.alpha2, 0.2);
    assert_eq!(cfg.learning_rate, 1e-5);
    assert_eq!(cfg.success_radius_m, 1.5);
    let pipeline = cfg.pipeline().unwrap();
    assert_eq!(pipeline.signature_len(), 1024);
}
