//! One-dimensional K-means and the queue-layout fit built on it.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Relative floor added before taking logs of the WCSS curve.
const LOG_FLOOR: f64 = 1e-9;

/// Queue count and WRS cut-offs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueLayout {
    pub k: usize,
    pub centroids: Vec<f64>,
    /// `k - 1` ascending upper bounds; the last queue is unbounded.
    pub boundaries: Vec<f64>,
    /// WCSS for K = 1, 2, ... as evaluated during the fit.
    pub wcss_curve: Vec<f64>,
}

impl QueueLayout {
    pub fn single() -> Self {
        QueueLayout { k: 1, centroids: Vec::new(), boundaries: Vec::new(), wcss_curve: Vec::new() }
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Self {
        QueueLayout { k: boundaries.len() + 1, centroids: Vec::new(), boundaries, wcss_curve: Vec::new() }
    }

    /// Smallest queue whose bound is at least `wrs`; a value on a bound goes
    /// to the lower queue.
    pub fn queue_for(&self, wrs: f64) -> usize {
        self.boundaries.iter().position(|&b| wrs <= b).unwrap_or(self.boundaries.len())
    }

    /// Upper WRS bound of queue `q`, or `None` for the last queue.
    pub fn upper_bound(&self, q: usize) -> Option<f64> {
        self.boundaries.get(q).copied()
    }
}

/// Optimal K-means on sorted data. Returns ascending centroids and WCSS.
pub fn kmeans_sorted(sorted: &[f64], k: usize) -> (Vec<f64>, f64) {
    kmeans_path(sorted, k).pop().unwrap_or((Vec::new(), 0.0))
}

/// Best fits for every K from 1 to `k_max` (capped at the sample count).
///
/// In one dimension every optimal cluster is a contiguous run of the sorted
/// data, so the global optimum comes from a dynamic program over cut points.
/// The optimal last cut never moves left as the prefix grows, which lets each
/// layer be solved by divide and conquer in O(n log n).
pub fn kmeans_path(sorted: &[f64], k_max: usize) -> Vec<(Vec<f64>, f64)> {
    let n = sorted.len();
    let mut path = Vec::new();
    if n == 0 {
        return path;
    }
    let seg = Segments::new(sorted);
    let mut cost: Vec<f64> = (0..=n).map(|b| seg.cost(0, b)).collect();
    let mut cuts: Vec<Vec<usize>> = Vec::new();
    for k in 1..=k_max.min(n) {
        if k > 1 {
            let mut next = alloc::vec![f64::INFINITY; n + 1];
            let mut cut = alloc::vec![0; n + 1];
            layer(&seg, &cost, k, (k, n), (k - 1, n - 1), &mut next, &mut cut);
            cost = next;
            cuts.push(cut);
        }
        // Walk the cuts back from the full range.
        let mut bounds = alloc::vec![n];
        let mut b = n;
        for cut in cuts.iter().rev() {
            b = cut[b];
            bounds.push(b);
        }
        bounds.push(0);
        bounds.reverse();
        let mut centroids = Vec::with_capacity(k);
        let mut wcss = 0.0;
        for w in bounds.windows(2) {
            let part = &sorted[w[0]..w[1]];
            let c = part.iter().sum::<f64>() / part.len() as f64;
            wcss += part.iter().map(|&x| (x - c) * (x - c)).sum::<f64>();
            centroids.push(c);
        }
        path.push((centroids, wcss));
    }
    path
}

/// Prefix sums for O(1) within-segment sum of squares. Values are shifted by
/// the median first to limit cancellation.
struct Segments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Segments {
    fn new(sorted: &[f64]) -> Self {
        let shift = sorted[sorted.len() / 2];
        let mut sum = alloc::vec![0.0; sorted.len() + 1];
        let mut sq = alloc::vec![0.0; sorted.len() + 1];
        for (i, &x) in sorted.iter().enumerate() {
            let d = x - shift;
            sum[i + 1] = sum[i] + d;
            sq[i + 1] = sq[i] + d * d;
        }
        Segments { sum, sq }
    }

    /// WCSS of `sorted[a..b]` as one cluster.
    fn cost(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let s = self.sum[b] - self.sum[a];
        (self.sq[b] - self.sq[a] - s * s / (b - a) as f64).max(0.0)
    }
}

/// Fill `next[b]` for `b` in `bs` with the best split of `sorted[..b]` into
/// `k` clusters, searching the last cut within `cs`.
fn layer(
    seg: &Segments,
    prev: &[f64],
    k: usize,
    bs: (usize, usize),
    cs: (usize, usize),
    next: &mut [f64],
    cut: &mut [usize],
) {
    if bs.0 > bs.1 {
        return;
    }
    let b = (bs.0 + bs.1) / 2;
    let mut best = (f64::INFINITY, cs.0);
    for a in cs.0.max(k - 1)..=cs.1.min(b - 1) {
        let c = prev[a] + seg.cost(a, b);
        if c < best.0 {
            best = (c, a);
        }
    }
    next[b] = best.0;
    cut[b] = best.1;
    if b > bs.0 {
        layer(seg, prev, k, (bs.0, b - 1), (cs.0, best.1), next, cut);
    }
    layer(seg, prev, k, (b + 1, bs.1), (best.1, cs.1), next, cut);
}

/// Choose the queue count from 1..=`k_max` and derive midpoint cut-offs.
///
/// The raw WCSS always falls as K grows, so K is picked at the sharpest bend
/// of the log-WCSS curve: the K with the largest second difference, provided
/// the bend is at least `min_bend` (natural-log units); otherwise K = 1.
pub fn fit_layout(samples: &[f64], k_max: usize, min_bend: f64) -> QueueLayout {
    let k_max = k_max.max(1);
    if samples.len() < k_max || k_max == 1 {
        return QueueLayout::single();
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return QueueLayout::single();
    }

    let mut fits = kmeans_path(&sorted, k_max + 1);
    while fits.len() < k_max + 1 {
        // Fewer points than clusters: every point is its own centroid.
        fits.push((sorted.clone(), 0.0));
    }
    let wcss_curve: Vec<f64> = fits.iter().map(|f| f.1).collect();
    let base = wcss_curve[0];
    let log_curve: Vec<f64> = wcss_curve.iter().map(|&w| libm::log(w / base + LOG_FLOOR)).collect();

    let mut best_k = 1;
    let mut best_bend = min_bend;
    for k in 2..=k_max {
        let bend = log_curve[k - 2] - 2.0 * log_curve[k - 1] + log_curve[k];
        if bend >= best_bend {
            best_bend = bend;
            best_k = k;
        }
    }
    if best_k == 1 {
        return QueueLayout { wcss_curve: wcss_curve[..k_max].to_vec(), ..QueueLayout::single() };
    }
    let mut centroids = fits[best_k - 1].0.clone();
    centroids.dedup();
    let boundaries = centroids.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    QueueLayout { k: centroids.len(), centroids, boundaries, wcss_curve: wcss_curve[..k_max].to_vec() }
}
