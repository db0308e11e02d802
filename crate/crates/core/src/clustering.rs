//! Grouping classes with k-means so each LLM call sees similar classes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{normalize, TextEmbeddings};
use crate::error::{Error, Result};
use crate::scoring::render_prompt;
use crate::types::{ClassLabel, Descriptor, DescriptorSet, PromptStyle};

pub const MAX_ROUNDS: usize = 100;

/// A partition of the class set into non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Vec<ClassLabel>>,
    pub k: usize,
}

/// Where class representatives come from.
pub enum Representatives<'a> {
    /// Embedding of each class's bare template prompt.
    Bare(&'a [ClassLabel]),
    /// Normalized mean of each class's descriptor prompt embeddings.
    Descriptors(&'a DescriptorSet),
}

pub fn class_representatives(
    source: Representatives<'_>,
    emb: &TextEmbeddings,
    style: PromptStyle,
) -> Result<BTreeMap<ClassLabel, Vec<f32>>> {
    match source {
        Representatives::Bare(classes) => classes
            .iter()
            .map(|c| {
                let v = emb.get(&render_prompt(c, &Descriptor::bare(), style))?;
                Ok((c.clone(), v.to_vec()))
            })
            .collect(),
        Representatives::Descriptors(ds) => ds
            .iter()
            .map(|(c, descs)| {
                let dim = emb.dimension().unwrap_or(0);
                let mut sum = vec![0.0f64; dim];
                for d in descs {
                    let v = emb.get(&render_prompt(c, d, style))?;
                    for (s, &x) in sum.iter_mut().zip(v) {
                        *s += f64::from(x);
                    }
                }
                let mut mean: Vec<f32> = sum
                    .iter()
                    .map(|s| (s / descs.len() as f64) as f32)
                    .collect();
                if !normalize(&mut mean) {
                    return Err(Error::Data(format!(
                        "descriptor embeddings of {c} average to zero"
                    )));
                }
                Ok((c.clone(), mean))
            })
            .collect(),
    }
}

/// Number of groups giving roughly `target` classes each, rounded half up.
pub fn default_k(n_classes: usize, target: usize) -> usize {
    assert!(target > 0, "target cluster size must be positive");
    ((2 * n_classes + target) / (2 * target)).max(1)
}

/// Outcome of one k-means run, with the objective after every Lloyd round.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub assignment: ClusterAssignment,
    pub objective_trace: Vec<f64>,
}

pub fn kmeans(
    points: &BTreeMap<ClassLabel, Vec<f32>>,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    kmeans_traced(points, k, seed).map(|r| r.assignment)
}

/// Lloyd's algorithm with k-means++ seeding on squared Euclidean distance.
///
/// Points are visited in class-name order. Assignment ties go to the lowest
/// centroid index. A cluster left empty receives the point farthest from its
/// centroid within the currently largest cluster.
pub fn kmeans_traced(
    points: &BTreeMap<ClassLabel, Vec<f32>>,
    k: usize,
    seed: u64,
) -> Result<KMeansRun> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot form {k} clusters from {n} classes")));
    }
    let labels: Vec<&ClassLabel> = points.keys().collect();
    let data: Vec<Vec<f64>> = points
        .values()
        .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        .collect();
    let dim = data[0].len();
    if data.iter().any(|p| p.len() != dim) {
        return Err(Error::Data("class representatives differ in dimension".into()));
    }

    let mut centroids = seed_plus_plus(&data, k, seed);
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut assign = vec![0usize; n];
    for _ in 0..MAX_ROUNDS {
        for (i, p) in data.iter().enumerate() {
            assign[i] = nearest(p, &centroids).0;
        }
        repair_empty(&data, &centroids, &mut assign, k);
        if previous.as_ref() == Some(&assign) {
            break;
        }
        centroids = means(&data, &assign, k, dim);
        trace.push(objective(&data, &assign, &centroids));
        previous = Some(assign.clone());
    }

    let mut clusters: Vec<Vec<ClassLabel>> = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        clusters[c].push(labels[i].clone());
    }
    Ok(KMeansRun {
        assignment: ClusterAssignment { clusters, k },
        objective_trace: trace,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(data: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..data.len())];
    let mut d2: Vec<f64> = data.iter().map(|p| sq_dist(p, &data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // All remaining points coincide with a center.
            (0..data.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].clone()).collect()
}

fn repair_empty(data: &[Vec<f64>], centroids: &[Vec<f64>], assign: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assign.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // Largest cluster, lowest index on ties.
        let largest = (0..k).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
        let mut far = None;
        for (i, p) in data.iter().enumerate() {
            if assign[i] != largest {
                continue;
            }
            let d = sq_dist(p, &centroids[largest]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let (idx, _) = far.expect("largest cluster is non-empty");
        assign[idx] = empty;
    }
}

fn means(data: &[Vec<f64>], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in data.iter().zip(assign) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for x in s.iter_mut() {
                *x /= n as f64;
            }
        }
    }
    sums
}

fn objective(data: &[Vec<f64>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    data.iter()
        .zip(assign)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}
