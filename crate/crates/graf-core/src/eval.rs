//! Classification metrics, k-means clustering, and clustering agreement.

use serde::Serialize;

use rand::Rng;

use crate::error::{GrafError, Result};
use crate::parallel::par_map_indexed;
use crate::rng::{derive, rng_from, stage};

/// Per-class precision/recall/F1 with support.
#[derive(Debug, Clone, Serialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Classification metrics over one prediction vector.
///
/// Macro F1 is the unweighted mean of per-class F1; weighted F1 weights each
/// class by its support. A class absent from both truth and prediction
/// contributes an F1 of 0 to the macro mean.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassStats>,
    pub total: usize,
}

pub fn classification_metrics(truth: &[u32], pred: &[u32], classes: usize) -> Result<MetricReport> {
    if truth.len() != pred.len() {
        return Err(GrafError::Evaluation(format!(
            "{} labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(GrafError::Evaluation("no samples to score".into()));
    }
    for &v in truth.iter().chain(pred.iter()) {
        if v as usize >= classes {
            return Err(GrafError::Evaluation(format!(
                "label {v} out of {classes} classes"
            )));
        }
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t as usize] += 1;
            correct += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut macro_f1 = 0.0;
    let mut weighted_f1 = 0.0;
    for c in 0..classes {
        let support = tp[c] + fn_[c];
        let precision = if tp[c] + fp[c] > 0 {
            tp[c] as f64 / (tp[c] + fp[c]) as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp[c] as f64 / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        macro_f1 += f1;
        weighted_f1 += f1 * support as f64;
        per_class.push(ClassStats {
            precision,
            recall,
            f1,
            support,
        });
    }
    macro_f1 /= classes as f64;
    weighted_f1 /= truth.len() as f64;
    Ok(MetricReport {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1,
        weighted_f1,
        per_class,
        total: truth.len(),
    })
}

/// Macro F1 alone, for per-epoch validation monitoring.
pub fn macro_f1(truth: &[u32], pred: &[u32], classes: usize) -> Result<f64> {
    Ok(classification_metrics(truth, pred, classes)?.macro_f1)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn wcss(data: &[f64], dim: usize, centers: &[f64], assign: &[u32]) -> f64 {
    assign
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            squared_distance(
                &data[i * dim..(i + 1) * dim],
                &centers[c as usize * dim..(c as usize + 1) * dim],
            )
        })
        .sum()
}

fn kmeans_once(data: &[f64], n: usize, dim: usize, k: usize, seed: u64) -> (Vec<u32>, f64) {
    let mut rng = rng_from(seed);

    // k-means++ seeding.
    let mut centers = vec![0.0; k * dim];
    let first = rng.random_range(0..n);
    centers[..dim].copy_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(&data[i * dim..(i + 1) * dim], &centers[..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers[c * dim..(c + 1) * dim].copy_from_slice(&data[pick * dim..(pick + 1) * dim]);
        for (i, d) in dist.iter_mut().enumerate() {
            let nd = squared_distance(
                &data[i * dim..(i + 1) * dim],
                &centers[c * dim..(c + 1) * dim],
            );
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign = vec![0u32; n];
    for _round in 0..300 {
        // Assignment step; ties go to the lowest cluster id.
        for (i, a) in assign.iter_mut().enumerate() {
            let row = &data[i * dim..(i + 1) * dim];
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = squared_distance(row, &centers[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c as u32;
                }
            }
            *a = best;
        }
        // Update step.
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a as usize] += 1;
            let row = &data[i * dim..(i + 1) * dim];
            for (s, &v) in sums[a as usize * dim..(a as usize + 1) * dim]
                .iter_mut()
                .zip(row)
            {
                *s += v;
            }
        }
        // An emptied cluster is reseeded on the point farthest from its center.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(
                            &data[a * dim..(a + 1) * dim],
                            &centers[assign[a] as usize * dim..(assign[a] as usize + 1) * dim],
                        );
                        let db = squared_distance(
                            &data[b * dim..(b + 1) * dim],
                            &centers[assign[b] as usize * dim..(assign[b] as usize + 1) * dim],
                        );
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                sums[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
                counts[c] = 1;
            }
        }
        let mut shift = 0.0;
        for c in 0..k {
            for d in 0..dim {
                let new = sums[c * dim + d] / counts[c] as f64;
                shift += (new - centers[c * dim + d]).abs();
                centers[c * dim + d] = new;
            }
        }
        if shift < 1e-6 {
            break;
        }
    }
    // Final assignment against the converged centers.
    for (i, a) in assign.iter_mut().enumerate() {
        let row = &data[i * dim..(i + 1) * dim];
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = squared_distance(row, &centers[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c as u32;
            }
        }
        *a = best;
    }
    let score = wcss(data, dim, &centers, &assign);
    (assign, score)
}

/// Lloyd k-means from k-means++ seeding, best of `restarts` inits by
/// within-cluster sum of squares. Deterministic in the seed.
pub fn kmeans(
    data: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Vec<u32>> {
    if n == 0 || dim == 0 || data.len() != n * dim {
        return Err(GrafError::Evaluation(format!(
            "embedding buffer of {} values is not {n}x{dim}",
            data.len()
        )));
    }
    if k == 0 || k > n {
        return Err(GrafError::Evaluation(format!("k = {k} outside 1..={n}")));
    }
    let restarts = restarts.max(1);
    let runs = par_map_indexed(restarts, |r| {
        kmeans_once(data, n, dim, k, derive(seed, &[stage::KMEANS, r as u64]))
    });
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ai, a), (bi, b)| a.1.partial_cmp(&b.1).unwrap().then(ai.cmp(bi)))
        .map(|(_, run)| run.0)
        .unwrap();
    Ok(best)
}

fn contingency(a: &[u32], b: &[u32]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
    let ka = a.iter().copied().max().unwrap_or(0) as usize + 1;
    let kb = b.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    let mut ra = vec![0usize; ka];
    let mut rb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1;
        ra[x as usize] += 1;
        rb[y as usize] += 1;
    }
    (table, ra, rb)
}

fn comb2(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        n as f64 * (n as f64 - 1.0) / 2.0
    }
}

/// Adjusted Rand Index via the pair-counting contingency formula.
pub fn ari(labels: &[u32], assignments: &[u32]) -> Result<f64> {
    if labels.len() != assignments.len() {
        return Err(GrafError::Evaluation(format!(
            "{} labels vs {} assignments",
            labels.len(),
            assignments.len()
        )));
    }
    if labels.is_empty() {
        return Err(GrafError::Evaluation("no samples".into()));
    }
    let (table, ra, rb) = contingency(labels, assignments);
    let index: f64 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = ra.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = rb.iter().map(|&c| comb2(c)).sum();
    let all = comb2(labels.len());
    let expected = sum_a * sum_b / all;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, normalized by the arithmetic mean of the
/// two entropies, natural log throughout.
pub fn nmi(labels: &[u32], assignments: &[u32]) -> Result<f64> {
    if labels.len() != assignments.len() {
        return Err(GrafError::Evaluation(format!(
            "{} labels vs {} assignments",
            labels.len(),
            assignments.len()
        )));
    }
    if labels.is_empty() {
        return Err(GrafError::Evaluation("no samples".into()));
    }
    let n = labels.len() as f64;
    let (table, ra, rb) = contingency(labels, assignments);
    let h_a = entropy(&ra, n);
    let h_b = entropy(&rb, n);
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p * n / (ra[i] as f64 * rb[j] as f64 / n)).ln();
            }
        }
    }
    let denom = 0.5 * (h_a + h_b);
    if denom <= 0.0 {
        // Both partitions constant: identical up to relabeling.
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Cluster assignments plus agreement with the labels.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub assignments: Vec<u32>,
    pub ari: f64,
    pub nmi: f64,
}

pub fn cluster_report(
    labels: &[u32],
    embeddings: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterReport> {
    let assignments = kmeans(embeddings, n, dim, k, seed, restarts)?;
    Ok(ClusterReport {
        ari: ari(labels, &assignments)?,
        nmi: nmi(labels, &assignments)?,
        assignments,
    })
}
