use crate::error::{Error, Result};
use crate::rng;

pub const MAX_ITERATIONS: usize = 300;
pub const RESTARTS: u64 = 10;

/// Partition of agents into `k` clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares of the final partition.
    pub wcss: f64,
}

impl ClusterModel {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties broken by the lowest cluster id.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn wcss(points: &[Vec<f64>], assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, &centers[c]))
        .sum()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "k-means needs 1 <= K < N, got K = {k}, N = {n}"
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points differ in dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point".into()));
    }
    Ok(())
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center (uniform when all distances vanish).
pub fn kmeans_plus_plus<R: rand::Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

/// Result of Lloyd iterations from a fixed initialization.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// WCSS after every assignment + update round.
    pub history: Vec<f64>,
}

/// Lloyd iterations until the assignment is a fixpoint or `max_iterations`.
///
/// A cluster left empty by an assignment step is re-seeded at the point
/// farthest from its own center (lowest index on ties); the next assignment
/// step then moves that point over.
pub fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iterations: usize) -> LloydRun {
    let k = centers.len();
    let dim = points[0].len();
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_iterations {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        let fixpoint = next == assignments;
        assignments = next;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        history.push(wcss(points, &assignments, &centers));
        if fixpoint {
            break;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = (0, -1.0);
                for (i, p) in points.iter().enumerate() {
                    let d = sq_dist(p, &centers[assignments[i]]);
                    if d > far.1 {
                        far = (i, d);
                    }
                }
                centers[c] = points[far.0].clone();
            }
        }
    }
    LloydRun {
        assignments,
        centers,
        history,
    }
}

/// Best of [`RESTARTS`] k-means++ initialized Lloyd runs by WCSS.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::Config("k-means over an empty point set".into()));
    }
    validate(points, k)?;
    let mut best: Option<ClusterModel> = None;
    for restart in 0..RESTARTS {
        let mut rng = rng::stream(seed, rng::STREAM_KMEANS, restart);
        let init = kmeans_plus_plus(points, k, &mut rng);
        let run = lloyd(points, init, MAX_ITERATIONS);
        let score = *run.history.last().unwrap();
        if best.as_ref().is_none_or(|b| score < b.wcss) {
            best = Some(ClusterModel {
                k,
                assignments: run.assignments,
                centers: run.centers,
                wcss: score,
            });
        }
    }
    Ok(best.unwrap())
}
