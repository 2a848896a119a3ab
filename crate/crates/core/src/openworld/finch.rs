//! First-neighbour (FINCH) hierarchical clustering.
//!
//! Level 0 links every point to its nearest neighbour and takes connected
//! components. Each further level repeats this on the cluster means. The
//! hierarchy stops when a level would merge everything into a single
//! cluster; that level is only kept when it is the first one.

use super::evm::euclidean;
use crate::error::{Error, Result};

/// Cluster labels for every input point at one hierarchy level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub label: usize,
    pub members: Vec<usize>,
}

/// Index of each point's nearest other point; ties go to the lowest index.
fn first_neighbours(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (j, p) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = euclidean(&points[i], p);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Components of the first-neighbour graph, numbered by lowest member.
fn components(points: &[Vec<f64>]) -> (Vec<usize>, usize) {
    let nn = first_neighbours(points);
    let mut parent: Vec<usize> = (0..points.len()).collect();
    for (i, &j) in nn.iter().enumerate() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut ids = vec![usize::MAX; points.len()];
    let mut labels = Vec::with_capacity(points.len());
    let mut next = 0;
    for i in 0..points.len() {
        let root = find(&mut parent, i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        labels.push(ids[root]);
    }
    (labels, next)
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// Build the partition hierarchy, finest level first.
pub fn finch_cluster(features: &[Vec<f64>]) -> Result<Vec<Partition>> {
    if features.len() < 2 {
        return Err(Error::invalid("clustering needs at least two samples"));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let (labels, k) = components(features);
    let mut levels = vec![Partition {
        labels,
        num_clusters: k,
    }];
    loop {
        let last = levels.last().expect("nonempty");
        if last.num_clusters < 2 {
            break;
        }
        let centers = means(features, &last.labels, last.num_clusters);
        let (merge, k) = components(&centers);
        if k == last.num_clusters || k < 2 {
            break;
        }
        let labels = last.labels.iter().map(|&l| merge[l]).collect();
        levels.push(Partition {
            labels,
            num_clusters: k,
        });
    }
    Ok(levels)
}

/// Take the level with the fewest clusters and drop clusters smaller than
/// `min_samples`.
pub fn select_partition(hierarchy: &[Partition], min_samples: usize) -> Vec<Cluster> {
    let Some(level) = hierarchy.iter().min_by_key(|p| p.num_clusters) else {
        return Vec::new();
    };
    let mut clusters: Vec<Cluster> = (0..level.num_clusters)
        .map(|label| Cluster {
            label,
            members: Vec::new(),
        })
        .collect();
    for (i, &l) in level.labels.iter().enumerate() {
        clusters[l].members.push(i);
    }
    clusters.retain(|c| c.members.len() >= min_samples.max(1));
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn blob(center: &[f64], n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| center.iter().map(|c| c + noise.sample(rng)).collect())
            .collect()
    }

    /// Connected components of the graph joining points closer than `eps`.
    fn threshold_components(points: &[Vec<f64>], eps: f64) -> Vec<usize> {
        let n = points.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            label[s] = next;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if label[j] == usize::MAX && euclidean(&points[i], &points[j]) < eps {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    #[test]
    fn two_points_form_one_cluster() {
        let h = finch_cluster(&[vec![0.0], vec![5.0]]).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].labels, vec![0, 0]);
        assert!(finch_cluster(&[vec![0.0]]).is_err());
    }

    #[test]
    fn separated_blobs_match_distance_components() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut pts = blob(&[0.0, 0.0], 50, &mut rng);
        pts.extend(blob(&[40.0, 0.0], 50, &mut rng));
        let oracle = threshold_components(&pts, 15.0);
        assert_eq!(oracle.iter().max(), Some(&1));
        let h = finch_cluster(&pts).unwrap();
        let last = h.last().unwrap();
        assert_eq!(last.num_clusters, 2);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(oracle[i] == oracle[j], last.labels[i] == last.labels[j]);
            }
        }
    }

    #[test]
    fn first_level_links_shared_neighbours() {
        // 1 and 2 both have 0 as nearest neighbour; 3 and 4 are mutual.
        let pts = vec![vec![0.0], vec![1.0], vec![-1.5], vec![20.0], vec![21.0]];
        let h = finch_cluster(&pts).unwrap();
        assert_eq!(h[0].labels, vec![0, 0, 0, 1, 1]);
        assert_eq!(h[0].num_clusters, 2);
    }

    #[test]
    fn selection_filters_small_clusters() {
        let p = Partition {
            labels: [vec![0; 50], vec![1; 3]].concat(),
            num_clusters: 2,
        };
        let kept = select_partition(&[p], 10);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].members.len(), 50);
        assert!(select_partition(&[], 10).is_empty());
    }

    proptest! {
        #[test]
        fn hierarchy_is_nested(
            pts in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 2), 2..60)
        ) {
            let h = finch_cluster(&pts).unwrap();
            for w in h.windows(2) {
                prop_assert!(w[1].num_clusters < w[0].num_clusters);
                let mut up = vec![usize::MAX; w[0].num_clusters];
                for (a, b) in w[0].labels.iter().zip(&w[1].labels) {
                    prop_assert!(up[*a] == usize::MAX || up[*a] == *b);
                    up[*a] = *b;
                }
            }
        }
    }
}
