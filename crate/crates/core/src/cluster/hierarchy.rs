use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_distance, relabel_by_first_appearance};
use crate::composition::VariationMatrix;
use crate::error::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    /// Divisive analysis; heights are cluster diameters.
    Divisive,
    /// Ward's criterion on squared dissimilarities.
    Ward,
}

/// One merge. Node ids below `n` are leaves; merge `m` creates node `n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Binary tree stored as `n - 1` merges in non-decreasing height order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    labels: Vec<String>,
    merges: Vec<Merge>,
    linkage: Linkage,
}

impl Dendrogram {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn linkage(&self) -> Linkage {
        self.linkage
    }

    pub fn leaves(&self) -> usize {
        self.labels.len()
    }

    /// Cluster ids `1..=k` for each leaf, numbered by first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let n = self.leaves();
        if k == 0 || k > n {
            return Err(ClusterError::InvalidK { k, n });
        }
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().take(n - k).enumerate() {
            let (a, b) = (find(&mut parent, merge.left), find(&mut parent, merge.right));
            parent[a] = n + m;
            parent[b] = n + m;
        }
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        Ok(relabel_by_first_appearance(&roots))
    }

    /// Leaf sets of every internal node, for topology comparisons.
    pub fn clusters(&self) -> BTreeSet<BTreeSet<usize>> {
        let n = self.leaves();
        let mut members: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for m in &self.merges {
            let joined: BTreeSet<usize> = members[m.left].union(&members[m.right]).copied().collect();
            members.push(joined);
        }
        members.split_off(n).into_iter().collect()
    }

    /// Leaves in drawing order (left subtree first).
    pub fn leaf_order(&self) -> Vec<usize> {
        let n = self.leaves();
        if n == 1 {
            return vec![0];
        }
        let mut out = Vec::with_capacity(n);
        let mut stack = vec![2 * n - 2];
        while let Some(node) = stack.pop() {
            if node < n {
                out.push(node);
            } else {
                let m = &self.merges[node - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }
}

/// Divisive analysis: the cluster with the largest diameter is split by
/// starting a splinter group at its member with the largest mean
/// dissimilarity, then moving over members that are on average closer to the
/// splinter group than to the rest.
pub fn divisive_hierarchical(dist: &DMatrix<f64>, labels: Vec<String>) -> Result<Dendrogram, ClusterError> {
    check_distance(dist)?;
    let n = dist.nrows();
    if n == 0 || labels.len() != n {
        return Err(ClusterError::LengthMismatch(labels.len(), n));
    }
    let diameter = |s: &[usize]| {
        let mut d: f64 = 0.0;
        for (a, &i) in s.iter().enumerate() {
            for &j in &s[a + 1..] {
                d = d.max(dist[(i, j)]);
            }
        }
        d
    };
    let mean_to = |i: usize, group: &[usize]| {
        let others: Vec<f64> = group.iter().filter(|&&j| j != i).map(|&j| dist[(i, j)]).collect();
        others.iter().sum::<f64>() / others.len() as f64
    };

    let mut open: Vec<Vec<usize>> = vec![(0..n).collect()];
    // (height, parent set, left child, right child)
    let mut splits: Vec<(f64, Vec<usize>, Vec<usize>, Vec<usize>)> = Vec::new();
    while let Some(pos) = open
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() > 1)
        .map(|(p, s)| (p, diameter(s)))
        .fold(None::<(usize, f64)>, |best, c| match best {
            Some(b) if b.1 >= c.1 => Some(b),
            _ => Some(c),
        })
    {
        let (p, height) = pos;
        let set = open.swap_remove(p);
        let start = *set
            .iter()
            .max_by(|&&a, &&b| mean_to(a, &set).total_cmp(&mean_to(b, &set)).then(b.cmp(&a)))
            .unwrap();
        let mut splinter = vec![start];
        let mut rest: Vec<usize> = set.iter().copied().filter(|&i| i != start).collect();
        while rest.len() > 1 {
            let mut best: Option<(usize, f64)> = None;
            for (pos, &i) in rest.iter().enumerate() {
                let diff = mean_to(i, &rest) - mean_to(i, &splinter);
                if diff > 0.0 && best.is_none_or(|b| diff > b.1) {
                    best = Some((pos, diff));
                }
            }
            let Some((pos, _)) = best else { break };
            splinter.push(rest.remove(pos));
        }
        splinter.sort_unstable();
        // the part holding the smallest index is drawn on the left
        let (left, right) = if rest[0] < splinter[0] { (rest, splinter) } else { (splinter, rest) };
        splits.push((height, set, left.clone(), right.clone()));
        open.push(left);
        open.push(right);
    }

    // replay splits bottom-up as merges
    let mut node_of: BTreeMap<Vec<usize>, usize> = (0..n).map(|i| (vec![i], i)).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (height, set, left, right) in splits.into_iter().rev() {
        merges.push(Merge {
            left: node_of[&left],
            right: node_of[&right],
            height,
            size: set.len(),
        });
        node_of.insert(set, n + merges.len() - 1);
    }
    Ok(Dendrogram {
        labels,
        merges,
        linkage: Linkage::Divisive,
    })
}

/// Agglomerative Ward linkage with the Lance-Williams update. `d2` holds
/// squared dissimilarities; merge heights are reported on that scale.
pub fn ward_linkage(d2: &DMatrix<f64>, labels: Vec<String>) -> Result<Dendrogram, ClusterError> {
    check_distance(d2)?;
    let n = d2.nrows();
    if n == 0 || labels.len() != n {
        return Err(ClusterError::LengthMismatch(labels.len(), n));
    }
    let mut d = d2.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut last = 0.0_f64;
    for m in 0..n.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[(i, j)] < best.2 {
                    best = (i, j, d[(i, j)]);
                }
            }
        }
        let (i, j, dij) = best;
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let (ni, nj, nk) = (size[i] as f64, size[j] as f64, size[k] as f64);
            let v = ((ni + nk) * d[(k, i)] + (nj + nk) * d[(k, j)] - nk * dij) / (ni + nj + nk);
            d[(i, k)] = v;
            d[(k, i)] = v;
        }
        // Ward is monotone; this only absorbs rounding in the update
        last = last.max(dij);
        let (a, b) = if node[i] < node[j] { (node[i], node[j]) } else { (node[j], node[i]) };
        merges.push(Merge {
            left: a,
            right: b,
            height: last,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = n + m;
    }
    Ok(Dendrogram {
        labels,
        merges,
        linkage: Linkage::Ward,
    })
}

/// Ward clustering of the components, with variation-matrix entries taken as
/// squared dissimilarities (they are variances; no square root is applied).
pub fn qmode_ward(varmat: &VariationMatrix) -> Result<Dendrogram, ClusterError> {
    ward_linkage(varmat.values(), varmat.labels().to_vec())
}
