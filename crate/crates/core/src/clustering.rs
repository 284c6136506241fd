//! Lloyd k-means, k-means++ seeding, and nearest-distinct-point extraction.
//!
//! VAPAL and `LDS_vec` cluster perturbation representations with plain
//! k-means from random-point initialization and then query the example
//! nearest to each center; BADGE uses the k-means++ seed points themselves.
//! Everything is seeded and deterministic, with distance ties broken by
//! lowest index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::sq_dist;

/// Default Lloyd iteration cap; convergence is a fixpoint on assignments.
pub const DEFAULT_KMEANS_MAX_ITERS: usize = 100;

/// Converged clustering: `assignments[i]` is the center index of point `i`,
/// and every point is assigned to its nearest center in the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned center.
    pub inertia: f64,
    /// Number of assignment passes executed.
    pub iterations_run: usize,
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::TooManyClusters { k, points: points.len() });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidConfig("points must share one dimension".into()));
    }
    Ok(dim)
}

/// Nearest center for each point; ties go to the lowest center index.
fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            inertia += best_d;
            best
        })
        .collect();
    (assignments, inertia)
}

/// Lloyd k-means from seeded random-point initialization.
///
/// Runs until the assignment fixpoint or `max_iters` assignment passes,
/// whichever comes first. Empty clusters are repaired by promoting the
/// point farthest from its center (from a cluster with at least two
/// members) to a singleton center.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_with_trace(points, k, max_iters, seed).map(|(result, _)| result)
}

/// [`kmeans`] plus the per-pass inertia trace (non-increasing by Lloyd's
/// argument; the tests assert it).
pub fn kmeans_with_trace(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(ClusterResult, Vec<f64>)> {
    let dim = validate(points, k)?;
    if max_iters == 0 {
        return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = sample_distinct_indices(points.len(), k, &mut rng);
    let mut centers: Vec<Vec<f64>> = init.into_iter().map(|i| points[i].clone()).collect();

    let (mut assignments, mut inertia) = assign_all(points, &centers);
    let mut trace = vec![inertia];
    let mut iterations = 1;
    while iterations < max_iters {
        // update step: means of assigned points
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // repair: each empty cluster takes the farthest point of a cluster
        // that can spare one
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut donor: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                if counts[assignments[i]] < 2 {
                    continue;
                }
                let d = sq_dist(p, &centers[assignments[i]]);
                if donor.map_or(true, |(_, best)| d > best) {
                    donor = Some((i, d));
                }
            }
            let (i, _) = donor.expect("k <= points guarantees a donor cluster");
            counts[assignments[i]] -= 1;
            counts[c] += 1;
            assignments[i] = c;
            centers[c] = points[i].clone();
        }

        let (new_assignments, new_inertia) = assign_all(points, &centers);
        iterations += 1;
        trace.push(new_inertia);
        let converged = new_assignments == assignments;
        assignments = new_assignments;
        inertia = new_inertia;
        if converged {
            break;
        }
    }
    Ok((ClusterResult { centers, assignments, inertia, iterations_run: iterations }, trace))
}

/// `k` distinct indices in `0..n`, in random order.
fn sample_distinct_indices(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// k-means++ seeding: first seed uniform, each subsequent seed sampled with
/// probability proportional to the squared distance to the nearest chosen
/// seed. Returns the chosen point indices in selection order.
///
/// When every remaining point coincides with a chosen seed (zero total
/// mass), the lowest-index unchosen point is taken, so duplicate-heavy
/// inputs still yield `k` distinct indices.
pub fn kmeans_pp_seeds(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    validate(points, k)?;
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().enumerate().filter(|(i, _)| !taken[*i]).map(|(_, d)| d).sum();
        let next = if total > 0.0 {
            let t = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if taken[i] || d <= 0.0 {
                    continue;
                }
                cum += d;
                if cum >= t {
                    pick = Some(i);
                    break;
                }
            }
            // floating-point shortfall: fall back to the last eligible point
            pick.unwrap_or_else(|| {
                d2.iter().enumerate().rposition(|(i, &d)| !taken[i] && d > 0.0).unwrap()
            })
        } else {
            (0..n).find(|&i| !taken[i]).expect("k <= points")
        };
        chosen.push(next);
        taken[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(&points[i], &points[next]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

/// For each center, in order, the nearest point not yet taken; distance
/// ties go to the lowest point index. The result has one distinct point
/// index per center.
pub fn nearest_distinct(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Result<Vec<usize>> {
    if centers.len() > points.len() {
        return Err(Error::TooManyClusters { k: centers.len(), points: points.len() });
    }
    let mut taken = vec![false; points.len()];
    let mut selected = Vec::with_capacity(centers.len());
    for center in centers {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = sq_dist(p, center);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("centers <= points guarantees a free point");
        taken[i] = true;
        selected.push(i);
    }
    Ok(selected)
}
