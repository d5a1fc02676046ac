//! k-medoids with squared Euclidean distance.
//!
//! Initialization is a seeded D²-weighted pick (k-means++ style) followed by
//! PAM swap refinement. Swaps are evaluated with nearest/second-nearest
//! caches so a full pass over all candidates costs O(N²) instead of
//! O(k·N²), and the first improving swap is applied immediately.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Input, TrainingSet};
use crate::error::{Error, Result};

const MAX_PASSES: usize = 100;

fn sq_dist(a: &Input, b: &Input) -> f64 {
    (a - b).norm_squared()
}

/// Indices of `k` medoids of `points`, sorted ascending. Deterministic for a
/// given seed.
pub fn kmedoids(points: &[Input], k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={n}")));
    }
    if k == n {
        return Ok((0..n).collect());
    }

    let mut medoids = initial_medoids(points, k, seed);
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut cache = Assignment::new(points, &medoids);

    for _ in 0..MAX_PASSES {
        let mut swapped = false;
        for candidate in 0..n {
            if is_medoid[candidate] {
                continue;
            }
            if let Some(slot) = cache.best_swap(points, &medoids, candidate) {
                is_medoid[medoids[slot]] = false;
                is_medoid[candidate] = true;
                medoids[slot] = candidate;
                cache = Assignment::new(points, &medoids);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }

    medoids.sort_unstable();
    Ok(medoids)
}

fn initial_medoids(points: &[Input], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[medoids[0]])).collect();
    while medoids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            // Rounding can leave the target past the end.
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            (0..n).find(|i| !medoids.contains(i)).expect("k < n")
        };
        medoids.push(next);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, &points[next]));
        }
    }
    medoids
}

struct Assignment {
    nearest: Vec<usize>,
    d_nearest: Vec<f64>,
    d_second: Vec<f64>,
    removal_loss: Vec<f64>,
}

impl Assignment {
    fn new(points: &[Input], medoids: &[usize]) -> Self {
        let n = points.len();
        let mut nearest = vec![0; n];
        let mut d_nearest = vec![f64::INFINITY; n];
        let mut d_second = vec![f64::INFINITY; n];
        for (i, p) in points.iter().enumerate() {
            for (slot, &m) in medoids.iter().enumerate() {
                let d = sq_dist(p, &points[m]);
                if d < d_nearest[i] {
                    d_second[i] = d_nearest[i];
                    d_nearest[i] = d;
                    nearest[i] = slot;
                } else if d < d_second[i] {
                    d_second[i] = d;
                }
            }
        }
        let mut removal_loss = vec![0.0; medoids.len()];
        for i in 0..n {
            removal_loss[nearest[i]] += d_second[i] - d_nearest[i];
        }
        Self {
            nearest,
            d_nearest,
            d_second,
            removal_loss,
        }
    }

    /// Medoid slot whose replacement by `candidate` lowers the total
    /// deviation the most, if any swap improves it.
    fn best_swap(&self, points: &[Input], medoids: &[usize], candidate: usize) -> Option<usize> {
        let mut delta = self.removal_loss.clone();
        let mut shared = 0.0;
        let c = &points[candidate];
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, c);
            let slot = self.nearest[i];
            if d < self.d_nearest[i] {
                shared += d - self.d_nearest[i];
                delta[slot] += self.d_nearest[i] - self.d_second[i];
            } else if d < self.d_second[i] {
                delta[slot] += d - self.d_second[i];
            }
        }
        let (slot, best) = delta
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(s, v)| (s, *v))?;
        let gain = best + shared;
        // Relative tolerance keeps rounding noise from cycling swaps.
        let scale: f64 = self.d_nearest.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        (gain < -1e-12 * scale && medoids[slot] != candidate).then_some(slot)
    }
}

/// Subsample a training set to `k` representative rows. Rows with identical
/// inputs are collapsed to their first occurrence before clustering.
pub fn kmedoids_subsample(set: &TrainingSet, k: usize, seed: u64) -> Result<TrainingSet> {
    set.validate()?;
    if k > set.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot select {k} medoids from {} rows",
            set.len()
        )));
    }
    let mut unique: Vec<usize> = Vec::with_capacity(set.len());
    for r in 0..set.len() {
        if !unique.iter().any(|&u| set.inputs[u] == set.inputs[r]) {
            unique.push(r);
        }
    }
    if k > unique.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot select {k} medoids from {} distinct inputs",
            unique.len()
        )));
    }
    let points: Vec<Input> = unique.iter().map(|&r| set.input(r)).collect();
    let chosen = kmedoids(&points, k, seed)?;
    let rows: Vec<usize> = chosen.iter().map(|&i| unique[i]).collect();
    Ok(set.select(&rows))
}
