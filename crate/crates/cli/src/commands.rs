//! The six subcommands. Every primary output carries the effective
//! configuration as `#` comment lines, so reruns are attributable and
//! byte-comparable (timing goes to stderr or is its own command).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};

use polarloc_core::cloud::{load_point_cloud, save_point_cloud_binary, CloudFormat};
use polarloc_core::retrieve::{
    evaluate_retrieval, rejection_pr_curve, KdIndex, PlaceRecord, SignatureDb,
};
use polarloc_core::spectrum::Signature;
use polarloc_core::synth::generate_world;

use crate::config::RunConfig;
use crate::gradcheck;
use crate::manifest::{read_manifest, write_manifest, ManifestRow, Role};

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn cloud_format_for(path: &Path) -> CloudFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CloudFormat::XyzCsv,
        _ => CloudFormat::XyzBinary,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.csv"))
}

/// Order-preserving parallel map over at most `threads` workers.
fn parallel_map<T, U, F>(items: &[T], threads: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let threads = threads
        .max(1)
        .min(items.len().max(1))
        .min(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) * 4);
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut out: Vec<Option<U>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    std::thread::scope(|scope| {
        for (chunk_in, chunk_out) in items.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (slot, item) in chunk_out.iter_mut().zip(chunk_in) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|v| v.expect("worker filled slot")).collect()
}

pub fn effective_threads(flag: usize) -> usize {
    if flag > 0 {
        flag
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    }
}

/// Generate a world plus benchmark and write scans and the manifest.
pub fn cmd_synth(config: &RunConfig, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let seed = seed.unwrap_or(config.seed);
    let world = generate_world(seed, config.world_landmarks, config.world_extent_m);
    let bench = polarloc_core::synth::generate_benchmark(&world, &config.benchmark_spec(seed))?;

    let scans_dir = out_dir.join("scans");
    std::fs::create_dir_all(&scans_dir)
        .with_context(|| format!("cannot create {}", scans_dir.display()))?;

    let mut rows = Vec::new();
    for (i, (pose, cloud)) in bench.db.iter().enumerate() {
        let rel = format!("scans/db_{i:04}.xyz");
        save_point_cloud_binary(cloud, &out_dir.join(&rel))?;
        rows.push(ManifestRow {
            role: Role::Db,
            path: rel,
            pose: *pose,
            associated_db_id: None,
        });
    }
    for (i, q) in bench.queries.iter().enumerate() {
        let rel = format!("scans/query_{i:04}.xyz");
        save_point_cloud_binary(&q.cloud, &out_dir.join(&rel))?;
        rows.push(ManifestRow {
            role: Role::Query,
            path: rel,
            pose: q.pose,
            associated_db_id: q.association.map(|a| a as i64),
        });
    }
    let provenance = format!("{}# synth_seed={seed}\n", config.echo_lines());
    write_manifest(&out_dir.join("manifest.csv"), &provenance, &rows)?;
    println!(
        "wrote {} db scans, {} queries to {}",
        bench.db.len(),
        bench.queries.len(),
        out_dir.display()
    );
    Ok(())
}

fn mean_median(ms: &mut [f64]) -> (f64, f64) {
    if ms.is_empty() {
        return (0.0, 0.0);
    }
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (mean, ms[ms.len() / 2])
}

/// Build the signature database from the manifest's db rows. Place ids
/// are the db-row ordinals, starting at 0.
pub fn cmd_build_db(
    config: &RunConfig,
    manifest_path: &Path,
    db_out: &Path,
    threads: usize,
) -> Result<()> {
    let pipeline = config.pipeline()?;
    let rows = read_manifest(manifest_path)?;
    let db_rows: Vec<&ManifestRow> = rows.iter().filter(|r| r.role == Role::Db).collect();

    struct ScanOutcome {
        signature: polarloc_core::Result<Signature>,
        preprocess_ms: f64,
        signature_ms: f64,
    }
    let outcomes = parallel_map(&db_rows, effective_threads(threads), |row| {
        let t0 = Instant::now();
        let loaded = load_point_cloud(&row.resolve(manifest_path), cloud_format_for(Path::new(&row.path)));
        let cloud = match loaded {
            Ok(c) => pipeline.preprocess(&c),
            Err(e) => {
                return ScanOutcome {
                    signature: Err(e),
                    preprocess_ms: 0.0,
                    signature_ms: 0.0,
                }
            }
        };
        let t1 = Instant::now();
        let bev = polarloc_core::bev::build_polar_bev(&cloud, &pipeline.bev);
        let signature = bev.and_then(|b| {
            let map = pipeline.feature_map_of_bev(&b)?;
            polarloc_core::spectrum::magnitude_signature(
                &polarloc_core::spectrum::fft2_per_channel(&map),
                &pipeline.crop,
            )
        });
        let t2 = Instant::now();
        ScanOutcome {
            signature,
            preprocess_ms: (t1 - t0).as_secs_f64() * 1e3,
            signature_ms: (t2 - t1).as_secs_f64() * 1e3,
        }
    });

    let mut db = SignatureDb::new(pipeline.signature_len());
    let mut pre_ms = Vec::new();
    let mut sig_ms = Vec::new();
    for (i, (row, outcome)) in db_rows.iter().zip(outcomes).enumerate() {
        let signature = outcome
            .signature
            .map_err(|e| anyhow!("scan {} ({}): {e}", i, row.path))?;
        eprintln!(
            "scan {i}: preprocess {:.3} ms, signature {:.3} ms, total {:.3} ms",
            outcome.preprocess_ms,
            outcome.signature_ms,
            outcome.preprocess_ms + outcome.signature_ms
        );
        pre_ms.push(outcome.preprocess_ms);
        sig_ms.push(outcome.signature_ms);
        db.insert(PlaceRecord {
            place_id: i as u64,
            signature,
            pose: row.pose,
            tag: Some(row.path.clone()),
        })?;
    }
    db.save(db_out)?;
    std::fs::write(
        db_out.with_extension("config"),
        config.echo_lines(),
    )?;
    let (pre_mean, pre_med) = mean_median(&mut pre_ms);
    let (sig_mean, sig_med) = mean_median(&mut sig_ms);
    eprintln!(
        "built {} records: preprocess mean {pre_mean:.3} ms (median {pre_med:.3}), \
         signature mean {sig_mean:.3} ms (median {sig_med:.3})",
        db.len()
    );
    println!("db={} records={}", db_out.display(), db.len());
    Ok(())
}

pub const QUERY_HEADER: &str =
    "rank,place_id,distance,yaw_argmax_deg,yaw_expectation_deg,peak_sharpness";

/// Query one scan against a database; optionally estimate the relative
/// yaw against the rank-1 match (requires the manifest to locate its
/// scan file). The printed yaw rotates the matched map scan onto the
/// query heading.
pub fn cmd_query(
    config: &RunConfig,
    db_path: &Path,
    scan_path: &Path,
    k: usize,
    with_yaw: bool,
    manifest_path: Option<&Path>,
) -> Result<()> {
    let pipeline = config.pipeline()?;
    let db = SignatureDb::load(db_path)?;
    let cloud = load_point_cloud(scan_path, cloud_format_for(scan_path))?;
    let signature = pipeline.signature(&cloud)?;
    let result = db.query_top_k(&signature, k.max(1))?;

    let yaw = if with_yaw {
        let manifest_path = manifest_path
            .ok_or_else(|| anyhow!("--with-yaw needs --manifest to locate the matched scan"))?;
        let rows = read_manifest(manifest_path)?;
        let db_rows: Vec<&ManifestRow> = rows.iter().filter(|r| r.role == Role::Db).collect();
        let top_id = result.ranked[0].0 as usize;
        let row = db_rows
            .get(top_id)
            .ok_or_else(|| anyhow!("place id {top_id} is not in the manifest"))?;
        let matched = load_point_cloud(
            &row.resolve(manifest_path),
            cloud_format_for(Path::new(&row.path)),
        )?;
        Some(pipeline.yaw_between(&matched, &cloud)?)
    } else {
        None
    };

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    write!(out, "{}", config.echo_lines())?;
    writeln!(out, "{QUERY_HEADER}")?;
    for (rank, (id, dist)) in result.ranked.iter().enumerate() {
        if rank == 0 {
            if let Some(sol) = &yaw {
                writeln!(
                    out,
                    "1,{id},{dist},{},{},{}",
                    sol.argmax.yaw_deg, sol.expectation.yaw_deg, sol.expectation.peak_sharpness
                )?;
                continue;
            }
        }
        writeln!(out, "{},{id},{dist},,,", rank + 1)?;
    }
    Ok(())
}

/// Evaluate retrieval and unseen-place rejection over the manifest's
/// query rows against a built database.
pub fn cmd_eval(
    config: &RunConfig,
    db_path: &Path,
    manifest_path: &Path,
    out_path: &Path,
    radius: Option<f64>,
    k: usize,
    threads: usize,
) -> Result<()> {
    let pipeline = config.pipeline()?;
    let radius = radius.unwrap_or(config.success_radius_m);
    let db = SignatureDb::load(db_path)?;
    let rows = read_manifest(manifest_path)?;
    let query_rows: Vec<&ManifestRow> = rows.iter().filter(|r| r.role == Role::Query).collect();
    if query_rows.is_empty() {
        bail!("manifest has no query rows");
    }

    let signatures = parallel_map(&query_rows, effective_threads(threads), |row| {
        let cloud = load_point_cloud(
            &row.resolve(manifest_path),
            cloud_format_for(Path::new(&row.path)),
        )?;
        Ok::<Signature, anyhow::Error>(pipeline.signature(&cloud)?)
    });

    let mut queries = Vec::with_capacity(query_rows.len());
    for (row, sig) in query_rows.iter().zip(signatures) {
        queries.push((sig.map_err(|e| anyhow!("{}: {e}", row.path))?, row.pose));
    }
    let report = evaluate_retrieval(&db, &queries, radius, k.max(1))?;

    // Rejection sweep: a query counts as a true revisit when it has an
    // association and its best match truly lies within the radius.
    let index = KdIndex::build(&db);
    let mut samples = Vec::with_capacity(queries.len());
    for ((sig, pose), row) in queries.iter().zip(&query_rows) {
        let top = index.query_top_k(&db, sig, 1)?;
        let (id, dist) = top.ranked[0];
        let correct = db
            .get(id)
            .map(|r| r.pose.planar_distance(pose) <= radius)
            .unwrap_or(false);
        samples.push((dist, row.associated_db_id.is_some() && correct));
    }
    let (pr_points, rejection_auc) = rejection_pr_curve(&samples);

    let provenance = config.echo_lines();
    let mut report_csv = provenance.clone();
    report_csv.push_str("metric,value\n");
    report_csv.push_str(&format!("n_db,{}\n", db.len()));
    report_csv.push_str(&format!("n_queries,{}\n", queries.len()));
    report_csv.push_str(&format!("success_radius_m,{radius}\n"));
    report_csv.push_str(&format!("k,{}\n", k.max(1)));
    report_csv.push_str(&format!("recall_at_1,{}\n", report.recall_at_1));
    report_csv.push_str(&format!("recall_at_1pct,{}\n", report.recall_at_1pct));
    report_csv.push_str(&format!("auc,{}\n", report.auc));
    report_csv.push_str(&format!("rejection_auc,{rejection_auc}\n"));
    std::fs::write(out_path, &report_csv)?;

    let mut curve_csv = provenance.clone();
    curve_csv.push_str("k,recall_at_k\n");
    for (kk, r) in &report.curve {
        curve_csv.push_str(&format!("{kk},{r}\n"));
    }
    std::fs::write(sibling(out_path, "_curve"), &curve_csv)?;

    let mut pr_csv = provenance.clone();
    pr_csv.push_str("recall,precision\n");
    for (r, p) in &pr_points {
        pr_csv.push_str(&format!("{r},{p}\n"));
    }
    std::fs::write(sibling(out_path, "_pr"), &pr_csv)?;

    let mut dist_csv = provenance;
    dist_csv.push_str("query_index,nearest_distance,is_revisit\n");
    for (i, (d, row)) in report.nearest_distances.iter().zip(&query_rows).enumerate() {
        dist_csv.push_str(&format!("{i},{d},{}\n", row.associated_db_id.is_some()));
    }
    std::fs::write(sibling(out_path, "_distances"), &dist_csv)?;

    println!(
        "recall@1={} recall@1%={} auc={} rejection_auc={rejection_auc}",
        report.recall_at_1, report.recall_at_1pct, report.auc
    );
    Ok(())
}

/// Run the finite-difference suite; returns false when any check fails.
pub fn cmd_gradcheck(config: &RunConfig, seed: Option<u64>) -> Result<bool> {
    let results = gradcheck::run_all(&config.loss_config(), seed.unwrap_or(config.seed));
    print!("{}", config.echo_lines());
    println!("check,worst_rel_err,threshold,status");
    let mut all_ok = true;
    for r in &results {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!("{},{:e},{:e},{status}", r.name, r.worst_rel_err, r.threshold);
        all_ok &= r.passed();
    }
    if !all_ok {
        let worst = results
            .iter()
            .max_by(|a, b| {
                (a.worst_rel_err / a.threshold)
                    .partial_cmp(&(b.worst_rel_err / b.threshold))
                    .unwrap()
            })
            .unwrap();
        eprintln!(
            "gradcheck failed: {} worst relative error {:e} (threshold {:e})",
            worst.name, worst.worst_rel_err, worst.threshold
        );
    }
    Ok(all_ok)
}

/// Per-stage wall-clock statistics over the manifest's db scans,
/// mirroring the signature/orientation split.
pub fn cmd_bench(config: &RunConfig, manifest_path: &Path) -> Result<()> {
    let pipeline = config.pipeline()?;
    let rows = read_manifest(manifest_path)?;
    let db_rows: Vec<&ManifestRow> = rows.iter().filter(|r| r.role == Role::Db).collect();
    if db_rows.is_empty() {
        bail!("manifest has no db rows to benchmark");
    }

    let mut pre_ms = Vec::new();
    let mut sig_ms = Vec::new();
    let mut yaw_ms = Vec::new();
    let mut prev_map: Option<polarloc_core::features::FeatureMap> = None;
    for row in &db_rows {
        let t0 = Instant::now();
        let cloud = load_point_cloud(
            &row.resolve(manifest_path),
            cloud_format_for(Path::new(&row.path)),
        )?;
        let cloud = pipeline.preprocess(&cloud);
        let t1 = Instant::now();
        let bev = polarloc_core::bev::build_polar_bev(&cloud, &pipeline.bev)?;
        let map = pipeline.feature_map_of_bev(&bev)?;
        let spectrum = polarloc_core::spectrum::fft2_per_channel(&map);
        let _sig = polarloc_core::spectrum::magnitude_signature(&spectrum, &pipeline.crop)?;
        let t2 = Instant::now();
        if let Some(prev) = &prev_map {
            let _ = polarloc_core::correlate::estimate_yaw(prev, &map, &pipeline.solver)?;
            yaw_ms.push(t2.elapsed().as_secs_f64() * 1e3);
        }
        pre_ms.push((t1 - t0).as_secs_f64() * 1e3);
        sig_ms.push((t2 - t1).as_secs_f64() * 1e3);
        prev_map = Some(map);
    }
    let (pre_mean, pre_med) = mean_median(&mut pre_ms);
    let (sig_mean, sig_med) = mean_median(&mut sig_ms);
    let (yaw_mean, yaw_med) = mean_median(&mut yaw_ms);
    println!("stage,mean_ms,median_ms");
    println!("preprocess,{pre_mean:.4},{pre_med:.4}");
    println!("generate_signature,{sig_mean:.4},{sig_med:.4}");
    println!("estimate_orientation,{yaw_mean:.4},{yaw_med:.4}");
    println!(
        "total,{:.4},{:.4}",
        pre_mean + sig_mean + yaw_mean,
        pre_med + sig_med + yaw_med
    );
    Ok(())
}
