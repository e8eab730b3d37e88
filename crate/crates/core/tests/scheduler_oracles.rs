use lorasim_core::scheduler::kmeans::{fit_layout, kmeans_sorted};
use lorasim_core::scheduler::SchedulerConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Optimal 1-D k-means by dynamic programming over contiguous runs of the
/// sorted data. Returns (WCSS, cluster means).
fn exact_kmeans(sorted: &[f64], k: usize) -> (f64, Vec<f64>) {
    let n = sorted.len();
    let mut pre = vec![0.0; n + 1];
    let mut pre2 = vec![0.0; n + 1];
    for (i, &x) in sorted.iter().enumerate() {
        pre[i + 1] = pre[i] + x;
        pre2[i + 1] = pre2[i] + x * x;
    }
    let cost = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s = pre[b] - pre[a];
        (pre2[b] - pre2[a] - s * s / m).max(0.0)
    };
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut cut = vec![vec![0usize; n + 1]; k + 1];
    best[0][0] = 0.0;
    for j in 1..=k {
        for b in j..=n {
            for a in (j - 1)..b {
                let c = best[j - 1][a] + cost(a, b);
                if c < best[j][b] {
                    best[j][b] = c;
                    cut[j][b] = a;
                }
            }
        }
    }
    let mut means = Vec::new();
    let mut b = n;
    for j in (1..=k).rev() {
        let a = cut[j][b];
        means.push((pre[b] - pre[a]) / (b - a) as f64);
        b = a;
    }
    means.reverse();
    (best[k][n], means)
}

fn blobs(centers: &[f64], per: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut v: Vec<f64> = centers.iter().flat_map(|&c| (0..per).map(|_| c).collect::<Vec<_>>()).collect();
    for x in &mut v {
        *x += noise.sample(&mut rng);
    }
    v
}

#[test]
fn bimodal_fixture_matches_oracle() {
    let mut v = vec![0.1; 50];
    v.extend(vec![0.9; 50]);
    let cfg = SchedulerConfig::default();
    let layout = fit_layout(&v, cfg.max_queues, cfg.elbow_min_bend);
    let (_, means) = exact_kmeans(&v, 2);
    assert_eq!(layout.k, 2);
    assert!((layout.boundaries[0] - (means[0] + means[1]) / 2.0).abs() < 1e-12);
    assert!((layout.boundaries[0] - 0.5).abs() <= 0.02);
}

#[test]
fn trimodal_fixture_matches_oracle() {
    let mut v = blobs(&[0.1, 0.5, 0.9], 60, 0.02, 7);
    let cfg = SchedulerConfig::default();
    let layout = fit_layout(&v, cfg.max_queues, cfg.elbow_min_bend);
    v.sort_by(f64::total_cmp);
    let (_, means) = exact_kmeans(&v, 3);
    assert_eq!(layout.k, 3);
    for (b, w) in layout.boundaries.iter().zip(means.windows(2)) {
        assert!((b - (w[0] + w[1]) / 2.0).abs() < 1e-9);
    }
    assert!((layout.boundaries[0] - 0.3).abs() < 0.05 && (layout.boundaries[1] - 0.7).abs() < 0.05);
}

#[test]
fn heavy_tail_is_not_forced_into_max_queues() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..2_000).map(|_| rng.random::<f64>().powi(6)).collect();
    let layout = fit_layout(&v, 4, 0.3);
    assert!(layout.k < 4, "k = {}", layout.k);
}

proptest! {
    #[test]
    fn fit_is_the_exact_optimum(
        centers in prop::collection::vec(0.0f64..1.0, 1..5),
        per in 1usize..15,
        sigma in 0.0f64..0.1,
        seed in any::<u64>(),
        k in 1usize..6,
    ) {
        let mut v = blobs(&centers, per, sigma, seed);
        v.sort_by(f64::total_cmp);
        prop_assume!(k <= v.len());
        let (oracle, means) = exact_kmeans(&v, k);
        let (centroids, wcss) = kmeans_sorted(&v, k);
        prop_assert!((wcss - oracle).abs() <= 1e-9 * oracle + 1e-12, "fit {wcss} vs exact {oracle}");
        prop_assert_eq!(centroids.len(), means.len());
    }
}
