//! Gradient-boosted regression trees with squared loss.
//!
//! Histogram-based: each feature is quantized into at most `n_bins`
//! quantile bins once per fit, and split search scans bin statistics. The
//! procedure is fully deterministic (greedy splits, no subsampling), so a
//! refit on identical data reproduces identical predictions.

use super::BaseRegressor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub n_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_trees: 150, max_depth: 4, learning_rate: 0.1, min_samples_leaf: 20, n_bins: 64 }
    }
}

#[derive(Debug, Clone)]
struct Node {
    feature: usize,
    threshold: f64,
    left: usize,
    right: usize,
    /// Leaf prediction, already scaled by the learning rate.
    value: f64,
    is_leaf: bool,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            let node = &self.nodes[at];
            if node.is_leaf {
                return node.value;
            }
            at = if x[node.feature] <= node.threshold { node.left } else { node.right };
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbtRegressor {
    params: GbtParams,
    base_score: f64,
    trees: Vec<Tree>,
}

impl GbtRegressor {
    pub fn new(params: GbtParams) -> Self {
        Self { params, base_score: 0.0, trees: Vec::new() }
    }
}

impl BaseRegressor for GbtRegressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Validation("gbt needs matching non-empty x and y".into()));
        }
        if self.params.n_trees == 0 || self.params.max_depth == 0 || self.params.n_bins < 2 {
            return Err(Error::Validation("gbt parameters out of range".into()));
        }
        let n = x.len();
        let d = x[0].len();

        let cuts = quantile_cuts(x, d, self.params.n_bins);
        let binned = bin_rows(x, &cuts);

        self.base_score = y.iter().sum::<f64>() / n as f64;
        let mut residual: Vec<f64> = y.iter().map(|v| v - self.base_score).collect();
        self.trees.clear();

        let mut indices: Vec<u32> = (0..n as u32).collect();
        let mut scratch = vec![0u32; n];
        for _ in 0..self.params.n_trees {
            let mut builder = TreeBuilder {
                params: &self.params,
                cuts: &cuts,
                binned: &binned,
                d,
                residual: &residual,
                nodes: Vec::new(),
            };
            let mut leaf_updates: Vec<(usize, usize, f64)> = Vec::new();
            builder.grow(&mut indices, &mut scratch, 0, n, 1, &mut leaf_updates);
            let tree = Tree { nodes: builder.nodes };
            for &(start, end, value) in &leaf_updates {
                for &i in &indices[start..end] {
                    residual[i as usize] -= value;
                }
            }
            self.trees.push(tree);
        }
        Ok(())
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        assert!(!self.trees.is_empty(), "gbt predict before fit");
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Strictly increasing quantile cut points per feature; `bin(x)` is the
/// first cut index `c` with `cuts[c] >= x`, so the split `bin <= b` is the
/// raw-space predicate `x <= cuts[b]`.
fn quantile_cuts(x: &[Vec<f64>], d: usize, n_bins: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut cuts = Vec::with_capacity(d);
    let mut column = vec![0.0f64; n];
    for f in 0..d {
        for (i, row) in x.iter().enumerate() {
            column[i] = row[f];
        }
        column.sort_by(f64::total_cmp);
        let mut feature_cuts = Vec::new();
        for q in 1..n_bins {
            let idx = (q * n / n_bins).min(n - 1);
            let v = column[idx];
            if feature_cuts.last().map_or(true, |last| v > *last) {
                feature_cuts.push(v);
            }
        }
        // Drop a terminal cut equal to the maximum: it cannot separate.
        if feature_cuts.last() == Some(&column[n - 1]) && feature_cuts.len() > 1 {
            feature_cuts.pop();
        }
        cuts.push(feature_cuts);
    }
    cuts
}

fn bin_rows(x: &[Vec<f64>], cuts: &[Vec<f64>]) -> Vec<u8> {
    let d = cuts.len();
    let mut binned = vec![0u8; x.len() * d];
    for (i, row) in x.iter().enumerate() {
        for (f, feature_cuts) in cuts.iter().enumerate() {
            let v = row[f];
            let bin = feature_cuts.partition_point(|c| *c < v);
            binned[i * d + f] = bin as u8;
        }
    }
    binned
}

struct TreeBuilder<'a> {
    params: &'a GbtParams,
    cuts: &'a [Vec<f64>],
    binned: &'a [u8],
    d: usize,
    residual: &'a [f64],
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Grow the subtree over `indices[start..end]`, partitioning the index
    /// slice in place. Records `(start, end, value)` per leaf so the caller
    /// can update residuals without re-walking the tree.
    fn grow(
        &mut self,
        indices: &mut [u32],
        scratch: &mut [u32],
        start: usize,
        end: usize,
        depth: usize,
        leaf_updates: &mut Vec<(usize, usize, f64)>,
    ) -> usize {
        let rows = &indices[start..end];
        let count = rows.len();
        let total: f64 = rows.iter().map(|&i| self.residual[i as usize]).sum();

        let make_leaf = |nodes: &mut Vec<Node>, leaf_updates: &mut Vec<(usize, usize, f64)>| {
            let value = if count == 0 {
                0.0
            } else {
                self.params.learning_rate * total / count as f64
            };
            leaf_updates.push((start, end, value));
            nodes.push(Node {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
                value,
                is_leaf: true,
            });
            nodes.len() - 1
        };

        if depth > self.params.max_depth || count < 2 * self.params.min_samples_leaf {
            return make_leaf(&mut self.nodes, leaf_updates);
        }

        let split = self.best_split(rows, count as f64, total);
        let Some((feature, bin, _gain)) = split else {
            return make_leaf(&mut self.nodes, leaf_updates);
        };

        // Stable partition by the winning predicate, via the scratch buffer.
        let mut left_n = 0;
        let mut right_n = 0;
        for pos in start..end {
            let i = indices[pos];
            if self.binned[i as usize * self.d + feature] <= bin {
                scratch[start + left_n] = i;
                left_n += 1;
            } else {
                scratch[end - 1 - right_n] = i;
                right_n += 1;
            }
        }
        indices[start..start + left_n].copy_from_slice(&scratch[start..start + left_n]);
        for r in 0..right_n {
            // Right side was written back-to-front; restore scan order.
            indices[start + left_n + r] = scratch[end - 1 - r];
        }

        let threshold = self.cuts[feature][bin as usize];
        let node_at = self.nodes.len();
        self.nodes.push(Node {
            feature,
            threshold,
            left: 0,
            right: 0,
            value: 0.0,
            is_leaf: false,
        });
        let left = self.grow(indices, scratch, start, start + left_n, depth + 1, leaf_updates);
        let right = self.grow(indices, scratch, start + left_n, end, depth + 1, leaf_updates);
        self.nodes[node_at].left = left;
        self.nodes[node_at].right = right;
        node_at
    }

    /// Best `(feature, bin, gain)` by variance reduction over histogram
    /// statistics; ties resolve to the lowest feature then lowest bin.
    fn best_split(&self, rows: &[u32], total_count: f64, total_sum: f64) -> Option<(usize, u8, f64)> {
        let parent_score = total_sum * total_sum / total_count;
        let min_leaf = self.params.min_samples_leaf as f64;
        let mut best: Option<(usize, u8, f64)> = None;

        let mut counts = [0.0f64; 256];
        let mut sums = [0.0f64; 256];
        for (feature, feature_cuts) in self.cuts.iter().enumerate() {
            let n_cuts = feature_cuts.len();
            if n_cuts == 0 {
                continue;
            }
            let n_bins = n_cuts + 1;
            counts[..n_bins].fill(0.0);
            sums[..n_bins].fill(0.0);
            for &i in rows {
                let bin = self.binned[i as usize * self.d + feature] as usize;
                counts[bin] += 1.0;
                sums[bin] += self.residual[i as usize];
            }
            let mut left_count = 0.0;
            let mut left_sum = 0.0;
            for bin in 0..n_cuts {
                left_count += counts[bin];
                left_sum += sums[bin];
                let right_count = total_count - left_count;
                if left_count < min_leaf || right_count < min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let gain = left_sum * left_sum / left_count + right_sum * right_sum / right_count
                    - parent_score;
                if gain > 1e-12 && best.map_or(true, |(_, _, b)| gain > b) {
                    best = Some((feature, bin as u8, gain));
                }
            }
        }
        best
    }
}
