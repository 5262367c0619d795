//! Day-by-day distances between activations, Ward clustering and cluster transitions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hclust::{self, Linkage, Merge};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub distance: DMatrix<f64>,
    /// Cluster of each day, numbered by first appearance.
    pub labels: Vec<usize>,
    pub merge_tree: Vec<Merge>,
    pub change_points: Vec<usize>,
}

/// Euclidean distance between the activation columns of every pair of days.
pub fn activation_distance(h: &DMatrix<f64>) -> DMatrix<f64> {
    let t = h.ncols();
    let mut d = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in i + 1..t {
            let v = (h.column(i) - h.column(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

pub fn ward_cluster(distance: &DMatrix<f64>, k: usize) -> Result<ClusterSummary> {
    let t = distance.nrows();
    if k == 0 || k > t {
        return Err(Error::Parameter(format!("k = {k} outside 1..={t}")));
    }
    let merge_tree = hclust::agglomerate(distance, Linkage::Ward)?;
    let labels = hclust::cut_tree(&merge_tree, t, k)?;
    Ok(ClusterSummary {
        distance: distance.clone(),
        change_points: transitions(&labels),
        labels,
        merge_tree,
    })
}

/// Days whose label differs from the previous day.
pub fn transitions(labels: &[usize]) -> Vec<usize> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let h = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
        let d = activation_distance(&h);
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert!((0..3).all(|i| d[(i, i)] == 0.0));
    }

    #[test]
    fn transitions_examples() {
        assert!(transitions(&[2, 2, 2]).is_empty());
        assert_eq!(transitions(&[0, 0, 1, 1, 0]), vec![2, 4]);
        assert_eq!(transitions(&[0, 1, 0, 1]), vec![1, 2, 3]);
        assert!(transitions(&[5]).is_empty());
    }

    #[test]
    fn trivial_cuts() {
        let h = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 3.0, 7.0]);
        let d = activation_distance(&h);
        let all = ward_cluster(&d, 4).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3]);
        assert_eq!(all.merge_tree.len(), 3);
        let one = ward_cluster(&d, 1).unwrap();
        assert_eq!(one.labels, vec![0; 4]);
        assert!(one.change_points.is_empty());
        assert!(matches!(ward_cluster(&d, 0), Err(Error::Parameter(_))));
        assert!(matches!(ward_cluster(&d, 5), Err(Error::Parameter(_))));
    }
}
