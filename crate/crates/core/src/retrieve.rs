//! The place database: signature storage, nearest-neighbour queries,
//! retrieval metrics and unseen-place rejection.
//!
//! Two query backends are mandatory and must agree exactly: a linear
//! scan (the reference) and a kd-tree. Distance ties break by ascending
//! place id in both. The tree prunes a subtree only when its best
//! possible distance is strictly worse than the current k-th candidate,
//! so rankings are bit-identical to the scan.

use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::cloud::Pose;
use crate::error::{Error, Result};
use crate::spectrum::Signature;

/// One stored place.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceRecord {
    pub place_id: u64,
    pub signature: Signature,
    pub pose: Pose,
    /// In-memory annotation (e.g. source scan path); not persisted.
    pub tag: Option<String>,
}

/// Ranked query answer: `(place_id, distance)` with non-decreasing
/// distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub ranked: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaceVerdict {
    Known,
    Unseen,
}

/// Append-only signature database with poses.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureDb {
    dim: usize,
    records: Vec<PlaceRecord>,
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

impl SignatureDb {
    pub fn new(signature_len: usize) -> Self {
        Self {
            dim: signature_len,
            records: Vec::new(),
        }
    }

    pub fn signature_len(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PlaceRecord] {
        &self.records
    }

    pub fn get(&self, place_id: u64) -> Option<&PlaceRecord> {
        self.records.iter().find(|r| r.place_id == place_id)
    }

    pub fn insert(&mut self, record: PlaceRecord) -> Result<()> {
        if record.signature.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                got: record.signature.len(),
            });
        }
        if self.records.iter().any(|r| r.place_id == record.place_id) {
            return Err(Error::DuplicateId(record.place_id));
        }
        self.records.push(record);
        Ok(())
    }

    /// Exact linear-scan top-k by Euclidean distance, ties by place id.
    pub fn query_top_k(&self, sig: &Signature, k: usize) -> Result<RetrievalResult> {
        if self.records.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if sig.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                got: sig.len(),
            });
        }
        let mut scored: Vec<(f64, u64)> = self
            .records
            .iter()
            .map(|r| (sq_distance(&sig.values, &r.signature.values), r.place_id))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        scored.truncate(k);
        Ok(RetrievalResult {
            ranked: scored.into_iter().map(|(d, id)| (id, d.sqrt())).collect(),
        })
    }

    /// Persist as a `DSIG` file: header, then per record the place id,
    /// pose and float32 signature payload.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"DSIG");
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            buf.extend_from_slice(&r.place_id.to_le_bytes());
            buf.extend_from_slice(&r.pose.x_m.to_le_bytes());
            buf.extend_from_slice(&r.pose.y_m.to_le_bytes());
            buf.extend_from_slice(&r.pose.yaw_deg.to_le_bytes());
            for v in &r.signature.values {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[0..4] != b"DSIG" {
            return Err(Error::Format("missing DSIG header".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let record_size = 8 + 24 + 4 * dim;
        if bytes.len() != 12 + count * record_size {
            return Err(Error::Format(format!(
                "DSIG payload size {} does not match {count} records of {record_size} bytes",
                bytes.len() - 12
            )));
        }
        let mut db = SignatureDb::new(dim);
        let mut pos = 12usize;
        for _ in 0..count {
            let place_id = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            let x = f64::from_le_bytes(bytes[pos + 8..pos + 16].try_into().unwrap());
            let y = f64::from_le_bytes(bytes[pos + 16..pos + 24].try_into().unwrap());
            let yaw = f64::from_le_bytes(bytes[pos + 24..pos + 32].try_into().unwrap());
            pos += 32;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as f64);
                pos += 4;
            }
            db.insert(PlaceRecord {
                place_id,
                signature: Signature { values },
                pose: Pose::new(x, y, yaw),
                tag: None,
            })?;
        }
        Ok(db)
    }
}

enum KdNode {
    Leaf {
        points: Vec<usize>,
    },
    Split {
        dim: usize,
        value: f64,
        left: Box<KdNode>,
        right: Box<KdNode>,
    },
}

/// Space-partitioning index over a database snapshot. Must be rebuilt
/// after inserts.
pub struct KdIndex {
    root: KdNode,
    size: usize,
}

const LEAF_SIZE: usize = 16;

impl KdIndex {
    pub fn build(db: &SignatureDb) -> Self {
        let mut indices: Vec<usize> = (0..db.len()).collect();
        let root = Self::build_node(db, &mut indices);
        Self {
            root,
            size: db.len(),
        }
    }

    fn build_node(db: &SignatureDb, indices: &mut [usize]) -> KdNode {
        if indices.len() <= LEAF_SIZE {
            return KdNode::Leaf {
                points: indices.to_vec(),
            };
        }
        // Split on the dimension with the widest spread in this subset.
        let dim_count = db.signature_len();
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for d in 0..dim_count {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in indices.iter() {
                let v = db.records[i].signature.values[d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                best_dim = d;
            }
        }
        if best_spread <= 0.0 {
            // All points identical along every dimension.
            return KdNode::Leaf {
                points: indices.to_vec(),
            };
        }
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            let va = db.records[a].signature.values[best_dim];
            let vb = db.records[b].signature.values[best_dim];
            va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
        });
        let split_value = db.records[indices[mid]].signature.values[best_dim];
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        KdNode::Split {
            dim: best_dim,
            value: split_value,
            left: Box::new(Self::build_node(db, left_idx)),
            right: Box::new(Self::build_node(db, right_idx)),
        }
    }

    /// Tree-backed top-k; returns exactly what the linear scan returns.
    pub fn query_top_k(&self, db: &SignatureDb, sig: &Signature, k: usize) -> Result<RetrievalResult> {
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if self.size != db.len() {
            return Err(Error::InvalidConfig(
                "kd-index is stale: rebuild after inserts".into(),
            ));
        }
        if sig.len() != db.signature_len() {
            return Err(Error::LengthMismatch {
                expected: db.signature_len(),
                got: sig.len(),
            });
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
        Self::search(&self.root, db, &sig.values, k, &mut heap);
        let mut out: Vec<(f64, u64)> = heap.into_iter().map(|c| (c.sq_dist, c.id)).collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        Ok(RetrievalResult {
            ranked: out.into_iter().map(|(d, id)| (id, d.sqrt())).collect(),
        })
    }

    fn search(
        node: &KdNode,
        db: &SignatureDb,
        query: &[f64],
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match node {
            KdNode::Leaf { points } => {
                for &i in points {
                    let r = &db.records[i];
                    let cand = Candidate {
                        sq_dist: sq_distance(query, &r.signature.values),
                        id: r.place_id,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(worst) = heap.peek() {
                        if cand < *worst {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                Self::search(near, db, query, k, heap);
                // Visit the far side unless it provably cannot improve the
                // worst kept candidate (strict comparison keeps tie handling
                // identical to the scan).
                let plane_sq = diff * diff;
                let must_visit = heap.len() < k
                    || heap.peek().map(|w| plane_sq <= w.sq_dist).unwrap_or(true);
                if must_visit {
                    Self::search(far, db, query, k, heap);
                }
            }
        }
    }
}

/// Max-heap entry ordered by (distance, id); the heap root is the
/// current worst candidate.
#[derive(PartialEq)]
struct Candidate {
    sq_dist: f64,
    id: u64,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sq_dist
            .partial_cmp(&other.sq_dist)
            .unwrap()
            .then(self.id.cmp(&other.id))
    }
}

/// Retrieval quality over a query set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recall_at_1: f64,
    pub recall_at_1pct: f64,
    /// Area under the recall@k curve, normalized to [0, 1].
    pub auc: f64,
    /// `(k, recall@k)` points for `k = 1..=k_max`.
    pub curve: Vec<(usize, f64)>,
    /// Rank-1 distance per query, in query order.
    pub nearest_distances: Vec<f64>,
}

/// Success counting over ranked retrievals: a query succeeds at depth k
/// if any of its top-k places lies within `success_radius_m` of the true
/// position. `recall@1%` uses `ceil(database_size / 100)` candidates.
pub fn evaluate_retrieval(
    db: &SignatureDb,
    queries: &[(Signature, Pose)],
    success_radius_m: f64,
    k: usize,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::InvalidConfig("empty query set".into()));
    }
    let k_curve = k.clamp(1, db.len());
    let k_one_pct = db.len().div_ceil(100).max(1);
    let k_max = k_curve.max(k_one_pct);

    let mut hits_at = vec![0usize; k_max];
    let mut hits_one_pct = 0usize;
    let mut nearest = Vec::with_capacity(queries.len());
    for (sig, true_pose) in queries {
        let result = db.query_top_k(sig, k_max)?;
        nearest.push(result.ranked[0].1);
        let mut first_hit: Option<usize> = None;
        for (rank, (id, _)) in result.ranked.iter().enumerate() {
            let pose = &db.get(*id).expect("ranked ids exist").pose;
            if pose.planar_distance(true_pose) <= success_radius_m {
                first_hit = Some(rank);
                break;
            }
        }
        if let Some(rank) = first_hit {
            for slot in hits_at.iter_mut().skip(rank) {
                *slot += 1;
            }
            if rank < k_one_pct {
                hits_one_pct += 1;
            }
        }
    }
    let n = queries.len() as f64;
    let curve: Vec<(usize, f64)> = (0..k_curve)
        .map(|kk| (kk + 1, hits_at[kk] as f64 / n))
        .collect();
    let auc = if k_curve == 1 {
        curve[0].1
    } else {
        let mut area = 0.0;
        for w in curve.windows(2) {
            area += (w[0].1 + w[1].1) / 2.0;
        }
        area / (k_curve - 1) as f64
    };
    Ok(EvalReport {
        recall_at_1: curve[0].1,
        recall_at_1pct: hits_one_pct as f64 / n,
        auc,
        curve,
        nearest_distances: nearest,
    })
}

/// Declare a query unseen when its best match is farther than the
/// threshold. An empty result carries no evidence of a known place.
pub fn unseen_place_score(result: &RetrievalResult, threshold: f64) -> PlaceVerdict {
    match result.ranked.first() {
        Some(&(_, dist)) if dist <= threshold => PlaceVerdict::Known,
        _ => PlaceVerdict::Unseen,
    }
}

/// Precision-recall curve of revisit detection when sweeping the
/// rank-1 distance threshold. Input: `(rank1_distance, is_revisit)` per
/// query, where `is_revisit` means the query truly revisits a database
/// place and its rank-1 match is correct. Returns `(recall, precision)`
/// points and the trapezoidal area under them.
pub fn rejection_pr_curve(samples: &[(f64, bool)]) -> (Vec<(f64, f64)>, f64) {
    let positives = samples.iter().filter(|(_, l)| *l).count();
    if positives == 0 || samples.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mut thresholds: Vec<f64> = samples.iter().map(|(d, _)| *d).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for &(d, label) in samples {
            if d <= t {
                if label {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        points.push((recall, precision));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    points.dedup_by(|a, b| {
        if a.0 == b.0 {
            // Keep the best precision at equal recall.
            b.1 = b.1.max(a.1);
            true
        } else {
            false
        }
    });

    let mut auc = 0.0;
    let mut prev = (0.0, points.first().map(|p| p.1).unwrap_or(1.0));
    for &(r, p) in &points {
        auc += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    (points, auc)
}
