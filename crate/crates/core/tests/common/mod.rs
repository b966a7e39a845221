#![allow(dead_code)]

use meterfill::clustering::{kmeans_fit_labeled, ClusterFit};
use meterfill::features::{ratio_vector, ProfileVector};
use meterfill::synthetic::{archetype_cohort, SyntheticUser};

pub const FIXTURE_SEED: u64 = 2024;
pub const HOLDOUT_SEED: u64 = 2025;
pub const NOISE_SIGMA: f64 = 0.1;
pub const PER_ARCHETYPE: usize = 20;

pub fn fixture() -> Vec<SyntheticUser> {
    archetype_cohort(PER_ARCHETYPE, NOISE_SIGMA, FIXTURE_SEED)
}

pub fn profiles(users: &[SyntheticUser]) -> Vec<ProfileVector> {
    users.iter().map(|u| ratio_vector(&u.usages).unwrap()).collect()
}

pub fn fitted_fixture() -> (Vec<SyntheticUser>, ClusterFit) {
    let users = fixture();
    let fit = kmeans_fit_labeled(&profiles(&users), 5, 42, 10).unwrap();
    (users, fit)
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(a.len());
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Minimum within-cluster sum of squares over every partition of the points
/// into exactly `k` non-empty groups.
pub fn brute_force_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    // restricted-growth strings enumerate each partition once
    fn walk(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], best: &mut f64) {
        let n = points.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            if used == k {
                *best = best.min(sse(points, labels, k));
            }
            return;
        }
        for l in 0..=used.min(k - 1) {
            labels[i] = l;
            walk(i + 1, used.max(l + 1), k, labels, points, best);
        }
    }
    walk(0, 0, k, &mut labels, points, &mut best);
    best
}

fn sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        let mean: Vec<f64> = (0..dim)
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    total
}
