//! Agglomerative hierarchical clustering on a precomputed dissimilarity matrix.
//!
//! Straightforward `O(n³)` Lance–Williams implementation; the matrices here
//! are day-by-day (tens to a few hundred rows), so clarity wins over speed.
//! Cluster ids follow the usual convention: leaves are `0..n`, the cluster
//! created by merge `i` is `n + i`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    /// Unweighted average of pairwise dissimilarities (UPGMA).
    Average,
    /// Ward's minimum-variance criterion; input is read as Euclidean distances.
    Ward,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            _ => Err(Error::Parameter(format!("unknown linkage `{s}`"))),
        }
    }
}

/// One agglomeration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Dissimilarity between `a` and `b` when merged. For Ward this is the
    /// square root of the Lance–Williams updated squared distance.
    pub height: f64,
    /// Number of leaves in the new cluster.
    pub size: usize,
}

pub(crate) fn validate_dissimilarity(d: &DMatrix<f64>) -> Result<()> {
    if !d.is_square() {
        return Err(Error::Parameter("dissimilarity matrix must be square".into()));
    }
    let n = d.nrows();
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(Error::Parameter(format!("nonzero diagonal at {i}")));
        }
        for j in i + 1..n {
            let (a, b) = (d[(i, j)], d[(j, i)]);
            if !a.is_finite() || a < 0.0 {
                return Err(Error::Parameter(format!("invalid dissimilarity at ({i}, {j})")));
            }
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::Parameter(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Builds the full merge sequence (`n − 1` merges). Ties go to the pair of
/// lowest slot indices, where each cluster lives in the slot of its
/// lowest-indexed leaf.
pub fn agglomerate(dist: &DMatrix<f64>, linkage: Linkage) -> Result<Vec<Merge>> {
    validate_dissimilarity(dist)?;
    let n = dist.nrows();
    let mut d = match linkage {
        Linkage::Average => dist.clone(),
        Linkage::Ward => dist.map(|v| v * v),
    };
    let mut active = vec![true; n];
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if best.is_none_or(|(_, _, v)| d[(i, j)] < v) {
                    best = Some((i, j, d[(i, j)]));
                }
            }
        }
        let (i, j, dij) = best.expect("at least two active clusters");
        let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let updated = match linkage {
                Linkage::Average => (ni * d[(i, k)] + nj * d[(j, k)]) / (ni + nj),
                Linkage::Ward => {
                    let nk = sizes[k] as f64;
                    ((ni + nk) * d[(i, k)] + (nj + nk) * d[(j, k)] - nk * dij) / (ni + nj + nk)
                }
            };
            d[(i, k)] = updated;
            d[(k, i)] = updated;
        }
        let height = match linkage {
            Linkage::Average => dij,
            Linkage::Ward => dij.max(0.0).sqrt(),
        };
        merges.push(Merge {
            a: ids[i].min(ids[j]),
            b: ids[i].max(ids[j]),
            height,
            size: sizes[i] + sizes[j],
        });
        active[j] = false;
        sizes[i] += sizes[j];
        ids[i] = n + step;
    }
    Ok(merges)
}

fn members(merges: &[Merge], n: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for m in merges {
        let mut joined = out[m.a].clone();
        joined.extend_from_slice(&out[m.b]);
        out.push(joined);
    }
    out
}

/// Labels from stopping after `n − k` merges. Labels are numbered in order of
/// first appearance, so day 0 is always in cluster 0.
pub fn cut_tree(merges: &[Merge], n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("cluster count {k} outside 1..={n}")));
    }
    if merges.len() + 1 != n {
        return Err(Error::Parameter(format!(
            "{} merges do not form a tree over {n} leaves",
            merges.len()
        )));
    }
    let groups = members(&merges[..n - k], n);
    let mut root: Vec<usize> = (0..n).collect();
    for c in 0..n - k {
        for &leaf in &groups[n + c] {
            root[leaf] = n + c;
        }
    }
    let mut seen: Vec<(usize, usize)> = Vec::new();
    let labels = root
        .iter()
        .map(|r| match seen.iter().find(|(id, _)| id == r) {
            Some(&(_, label)) => label,
            None => {
                seen.push((*r, seen.len()));
                seen.len() - 1
            }
        })
        .collect();
    Ok(labels)
}

/// Height of the first merge joining each pair of leaves.
pub fn cophenetic_distances(merges: &[Merge], n: usize) -> DMatrix<f64> {
    let groups = members(merges, n);
    let mut c = DMatrix::zeros(n, n);
    for m in merges {
        for &i in &groups[m.a] {
            for &j in &groups[m.b] {
                c[(i, j)] = m.height;
                c[(j, i)] = m.height;
            }
        }
    }
    c
}
