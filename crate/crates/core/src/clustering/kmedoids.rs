//! PAM: greedy BUILD, then SWAP passes that apply the single best
//! medoid/non-medoid exchange until none lowers the total distance.
//!
//! The swap scan evaluates all `k` removals for a candidate in one sweep over
//! the points using cached nearest and second-nearest medoid distances, so a
//! full pass costs O(n^2) instead of O(k n^2). It selects the same best swap
//! as the textbook loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Centers, Clustering, DistanceMatrix, Dissimilarity};
use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::DenseMatrix;

const MAX_SWAP_PASSES: usize = 10_000;

/// k-medoids over Euclidean distances between the rows of `points`.
pub fn kmedoids(points: &DenseMatrix, k: usize, seed: u64) -> Result<Clustering> {
    check_k(points.rows(), k)?;
    pam(&DistanceMatrix::euclidean(points), k, seed)
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("k-medoids on zero points".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} points")));
    }
    Ok(())
}

/// Seeded tie-break rank per point; lower rank wins exact ties.
fn tie_ranks(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rank = vec![0; n];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r;
    }
    rank
}

pub fn pam<D: Dissimilarity>(d: &D, k: usize, seed: u64) -> Result<Clustering> {
    let n = d.len();
    check_k(n, k)?;
    let rank = tie_ranks(n, seed);

    let mut medoids = build(d, k, &rank);
    let mut state = Nearest::compute(d, &medoids);
    let mut history = vec![state.cost()];

    for _ in 0..MAX_SWAP_PASSES {
        let Some((slot, candidate, delta)) = best_swap(d, &medoids, &state, &rank) else {
            break;
        };
        let cost = state.cost();
        if delta >= -1e-12 * (1.0 + cost.abs()) {
            break;
        }
        medoids[slot] = candidate;
        state = Nearest::compute(d, &medoids);
        history.push(state.cost());
    }

    let cost = state.cost();
    Ok(Clustering {
        k,
        assignment: state.near,
        centers: Centers::Medoids(medoids),
        cost,
        history,
    })
}

fn build<D: Dissimilarity>(d: &D, k: usize, rank: &[usize]) -> Vec<usize> {
    let n = d.len();
    let mut is_medoid = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut medoids = Vec::with_capacity(k);
    for step in 0..k {
        // score to minimize: total distance for the first medoid, negative gain after
        let scores: Vec<f64> = exec::map_range(n, |c| {
            if is_medoid[c] {
                return f64::INFINITY;
            }
            if step == 0 {
                (0..n).map(|o| d.dist(o, c)).sum()
            } else {
                -(0..n).map(|o| (nearest[o] - d.dist(o, c)).max(0.0)).sum::<f64>()
            }
        });
        let best = (0..n)
            .filter(|&c| !is_medoid[c])
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(rank[a].cmp(&rank[b])))
            .expect("k <= n leaves a candidate");
        is_medoid[best] = true;
        medoids.push(best);
        for (o, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(d.dist(o, best));
        }
    }
    medoids
}

struct Nearest {
    near: Vec<usize>,
    d_near: Vec<f64>,
    d_second: Vec<f64>,
}

impl Nearest {
    fn compute<D: Dissimilarity>(d: &D, medoids: &[usize]) -> Self {
        let n = d.len();
        let mut slot_of = vec![usize::MAX; n];
        for (s, &m) in medoids.iter().enumerate() {
            slot_of[m] = s;
        }
        let rows: Vec<(usize, f64, f64)> = exec::map_range(n, |o| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (s, &m) in medoids.iter().enumerate() {
                let dm = d.dist(o, m);
                if dm < best.1 {
                    second = best.1;
                    best = (s, dm);
                } else if dm < second {
                    second = dm;
                }
            }
            // a medoid always belongs to its own cluster, even among duplicates
            if slot_of[o] != usize::MAX && best.0 != slot_of[o] {
                second = best.1;
                best = (slot_of[o], 0.0);
            }
            (best.0, best.1, second)
        });
        Self {
            near: rows.iter().map(|r| r.0).collect(),
            d_near: rows.iter().map(|r| r.1).collect(),
            d_second: rows.iter().map(|r| r.2).collect(),
        }
    }

    fn cost(&self) -> f64 {
        self.d_near.iter().sum()
    }
}

/// Most negative `(slot, candidate, cost change)` over all swaps.
fn best_swap<D: Dissimilarity>(
    d: &D,
    medoids: &[usize],
    state: &Nearest,
    rank: &[usize],
) -> Option<(usize, usize, f64)> {
    let n = d.len();
    let k = medoids.len();
    let mut is_medoid = vec![false; n];
    for &m in medoids {
        is_medoid[m] = true;
    }
    let per_candidate: Vec<Option<(usize, f64)>> = exec::map_range(n, |c| {
        if is_medoid[c] {
            return None;
        }
        let mut shared = 0.0;
        let mut removal = vec![0.0; k];
        for o in 0..n {
            let doc = d.dist(o, c);
            let dn = state.d_near[o];
            let base = (doc - dn).min(0.0);
            shared += base;
            removal[state.near[o]] += (doc.min(state.d_second[o]) - dn) - base;
        }
        let (slot, delta) = removal
            .iter()
            .enumerate()
            .map(|(s, r)| (s, shared + r))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        Some((slot, delta))
    });
    per_candidate
        .into_iter()
        .enumerate()
        .filter_map(|(c, best)| best.map(|(s, delta)| (s, c, delta)))
        .min_by(|a, b| a.2.total_cmp(&b.2).then(rank[a.1].cmp(&rank[b.1])))
}
