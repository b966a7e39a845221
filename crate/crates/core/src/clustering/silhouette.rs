use std::collections::BTreeMap;

use super::{euclidean, ClusterError};

/// Mean silhouette over all points. Members of singleton clusters score 0, as
/// do points with `a = b = 0`.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, ClusterError> {
    if points.len() != labels.len() {
        return Err(ClusterError::LengthMismatch(points.len(), labels.len()));
    }
    if points.len() < 2 {
        return Err(ClusterError::NoPoints);
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }

    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = labels[i];
        if sizes[&own] == 1 {
            continue;
        }
        let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, q) in points.iter().enumerate() {
            if i != j {
                *sums.entry(labels[j]).or_default() += euclidean(p, q);
            }
        }
        let a = sums[&own] / (sizes[&own] - 1) as f64;
        let b = sums
            .iter()
            .filter(|(&l, _)| l != own)
            .map(|(l, s)| s / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}
