//! Spectral clustering of retrieved CAS structures. Groups near-duplicate
//! retrievals so the realizer sees a small set of representative structures
//! instead of k_c mostly-identical neighbors.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cas::{token_distance, CasStructure};

#[derive(Debug, Clone)]
pub struct Clustering {
    /// Cluster membership per input index.
    pub assignments: Vec<usize>,
    /// Medoid input index for each cluster.
    pub medoids: Vec<usize>,
}

impl Clustering {
    pub fn representatives<'a>(&self, items: &'a [CasStructure]) -> Vec<&'a CasStructure> {
        self.medoids.iter().map(|&i| &items[i]).collect()
    }
}

/// Symmetric pairwise token distances.
fn distance_matrix(items: &[CasStructure]) -> DMatrix<f64> {
    let n = items.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = token_distance(&items[i], &items[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Farthest-first k-means in the spectral embedding. Deterministic: the
/// first center is row 0, each next center is the row farthest from its
/// nearest chosen center (ties to the lower index).
fn kmeans(rows: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = rows.nrows();
    let dim = rows.ncols();
    let sq = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let row = |i: usize| -> Vec<f64> { rows.row(i).iter().cloned().collect() };

    let mut centers: Vec<Vec<f64>> = vec![row(0)];
    while centers.len() < k {
        let mut best = 0;
        let mut best_d = -1.0;
        for i in 0..n {
            let r = row(i);
            let d = centers
                .iter()
                .map(|c| sq(&r, c))
                .fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        centers.push(row(best));
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let r = row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq(&r, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(rows.row(i).iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

/// Cluster structures by spectral partitioning of the affinity graph
/// A = 1 - token_distance. With k >= n every item gets its own cluster.
pub fn spectral_cluster(items: &[CasStructure], k: usize) -> Clustering {
    let n = items.len();
    if n == 0 {
        return Clustering {
            assignments: vec![],
            medoids: vec![],
        };
    }
    let k = k.max(1);
    if k >= n {
        return Clustering {
            assignments: (0..n).collect(),
            medoids: (0..n).collect(),
        };
    }

    let dist = distance_matrix(items);
    let mut affinity = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                affinity[(i, j)] = 1.0 - dist[(i, j)];
            }
        }
    }
    // normalized Laplacian: I - D^{-1/2} A D^{-1/2}
    let degrees: Vec<f64> = (0..n).map(|i| affinity.row(i).sum()).collect();
    let mut lap = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if degrees[i] > 0.0 && degrees[j] > 0.0 {
                lap[(i, j)] -= affinity[(i, j)] / (degrees[i] * degrees[j]).sqrt();
            }
        }
    }
    let eig = SymmetricEigen::new(lap);
    // rows of the k eigenvectors with smallest eigenvalues, row-normalized
    let mut order: Vec<usize> = (0..n).collect();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    order.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).unwrap());
    let mut embed = DMatrix::zeros(n, k);
    for (col, &ei) in order.iter().take(k).enumerate() {
        for i in 0..n {
            embed[(i, col)] = eig.eigenvectors[(i, ei)];
        }
    }
    for i in 0..n {
        let norm: f64 = embed.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for col in 0..k {
                embed[(i, col)] /= norm;
            }
        }
    }

    let raw = kmeans(&embed, k);
    // relabel clusters by first appearance and drop empty ones
    let mut relabel: Vec<Option<usize>> = vec![None; k];
    let mut next = 0usize;
    let mut assignments = vec![0usize; n];
    for i in 0..n {
        let lbl = *relabel[raw[i]].get_or_insert_with(|| {
            let v = next;
            next += 1;
            v
        });
        assignments[i] = lbl;
    }

    let mut medoids = Vec::with_capacity(next);
    for c in 0..next {
        let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
        let medoid = *members
            .iter()
            .min_by(|&&a, &&b| {
                let da: f64 = members.iter().map(|&m| dist[(a, m)]).sum();
                let db: f64 = members.iter().map(|&m| dist[(b, m)]).sum();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        medoids.push(medoid);
    }
    Clustering {
        assignments,
        medoids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cas::parse_cas;

    fn s(text: &str) -> CasStructure {
        parse_cas(text).unwrap()
    }

    #[test]
    fn two_obvious_groups_separate() {
        let items = vec![
            s("Turn(direction=Left)"),
            s("Turn(direction=Right)"),
            s("Turn(direction=Back)"),
            s("Travel(distance=3, until=sofa)"),
            s("Travel(distance=4, until=sofa)"),
            s("Travel(distance=3, until=lamp)"),
        ];
        let c = spectral_cluster(&items, 2);
        assert_eq!(c.assignments.len(), 6);
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_eq!(c.assignments[0], c.assignments[2]);
        assert_eq!(c.assignments[3], c.assignments[4]);
        assert_eq!(c.assignments[3], c.assignments[5]);
        assert_ne!(c.assignments[0], c.assignments[3]);
        assert_eq!(c.medoids.len(), 2);
    }

    #[test]
    fn k_at_least_n_gives_singletons() {
        let items = vec![s("Turn(direction=Left)"), s("Turn(direction=Right)")];
        let c = spectral_cluster(&items, 5);
        assert_eq!(c.assignments, vec![0, 1]);
        assert_eq!(c.medoids, vec![0, 1]);
    }

    #[test]
    fn identical_items_one_cluster_each_k() {
        let items: Vec<CasStructure> = (0..5).map(|_| s("Turn(direction=Left)")).collect();
        let c = spectral_cluster(&items, 2);
        // all zero-distance: medoids must still point at valid members
        for &m in &c.medoids {
            assert!(m < 5);
        }
        assert_eq!(c.assignments.len(), 5);
    }

    #[test]
    fn empty_input() {
        let c = spectral_cluster(&[], 3);
        assert!(c.assignments.is_empty());
        assert!(c.medoids.is_empty());
    }

    #[test]
    fn medoid_minimizes_intra_cluster_distance() {
        let items = vec![
            s("Travel(distance=3)"),
            s("Travel(distance=3, until=sofa)"),
            s("Travel(distance=3, until=sofa, past=lamp)"),
        ];
        let c = spectral_cluster(&items, 1);
        assert_eq!(c.medoids.len(), 1);
        let m = c.medoids[0];
        let total = |a: usize| -> f64 {
            (0..3).map(|b| token_distance(&items[a], &items[b])).sum()
        };
        for i in 0..3 {
            assert!(total(m) <= total(i) + 1e-12);
        }
    }
}
