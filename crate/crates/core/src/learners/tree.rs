//! Histogram-based CART regression trees and squared-error boosting.
//!
//! Each kept column is discretized once into at most `MAX_BINS` ordered bins.
//! Columns with few distinct values get one bin per value, so splits are
//! exact for them. A split on bin boundary `b` sends `x <= threshold[b]` left.

use crate::data::{Dataset, Subset};

const MAX_BINS: usize = 256;
const MIN_GAIN: f64 = 1e-12;

pub(crate) struct BinnedColumns {
    cols: Vec<usize>,
    codes: Vec<Vec<u16>>,
    thresholds: Vec<Vec<f64>>,
}

impl BinnedColumns {
    pub(crate) fn new(data: &Dataset, keep: &Subset) -> Self {
        let cols = keep.indices().to_vec();
        let mut codes = Vec::with_capacity(cols.len());
        let mut thresholds = Vec::with_capacity(cols.len());
        for &c in &cols {
            let column = data.column(c);
            let thr = bin_thresholds(&column);
            codes.push(column.iter().map(|&x| thr.partition_point(|&t| t < x) as u16).collect());
            thresholds.push(thr);
        }
        Self {
            cols,
            codes,
            thresholds,
        }
    }
}

fn bin_thresholds(column: &[f64]) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniques = sorted.clone();
    uniques.dedup();
    if uniques.len() <= MAX_BINS {
        return uniques.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let max = *uniques.last().unwrap();
    let mut cuts: Vec<f64> = (1..MAX_BINS).map(|b| sorted[b * n / MAX_BINS]).collect();
    cuts.dedup();
    cuts.retain(|&t| t < max);
    cuts
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        col: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree. `gains` accumulates the squared-error reduction
/// of every split, per original column index.
#[derive(Debug, Clone)]
pub struct TreeModel {
    nodes: Vec<Node>,
    gains: Vec<(usize, f64)>,
}

struct Grower<'a> {
    binned: &'a BinnedColumns,
    targets: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

struct Candidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let total: f64 = rows.iter().map(|&i| self.targets[i]).sum();
        let count = rows.len() as f64;
        let parent = total * total / count;
        let mut best: Option<Candidate> = None;
        for (a, codes) in self.binned.codes.iter().enumerate() {
            let bins = self.binned.thresholds[a].len() + 1;
            if bins < 2 {
                continue;
            }
            let mut sums = vec![0.0; bins];
            let mut counts = vec![0usize; bins];
            for &i in rows {
                let b = codes[i] as usize;
                sums[b] += self.targets[i];
                counts[b] += 1;
            }
            let (mut left_sum, mut left_n) = (0.0, 0usize);
            for b in 0..bins - 1 {
                left_sum += sums[b];
                left_n += counts[b];
                let right_n = rows.len() - left_n;
                if left_n < self.min_leaf {
                    continue;
                }
                if right_n < self.min_leaf {
                    break;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(Candidate {
                        feature: a,
                        bin: b,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Grows the subtree for `rows`, writing each row's leaf value into `fitted`.
    fn grow(&mut self, rows: Vec<usize>, depth: usize, fitted: &mut [f64]) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.targets[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let split = if depth < self.max_depth && rows.len() >= 2 * self.min_leaf {
            self.best_split(&rows)
        } else {
            None
        };
        let Some(split) = split else {
            for &i in &rows {
                fitted[i] = mean;
            }
            return id;
        };
        self.gains[split.feature] += split.gain;
        let codes = &self.binned.codes[split.feature];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| codes[i] as usize <= split.bin);
        let left = self.grow(left_rows, depth + 1, fitted);
        let right = self.grow(right_rows, depth + 1, fitted);
        self.nodes[id] = Node::Split {
            col: self.binned.cols[split.feature],
            threshold: self.binned.thresholds[split.feature][split.bin],
            left,
            right,
        };
        id
    }
}

fn grow_tree(
    binned: &BinnedColumns,
    targets: &[f64],
    max_depth: usize,
    min_leaf: usize,
    fitted: &mut [f64],
) -> TreeModel {
    let mut grower = Grower {
        binned,
        targets,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
        gains: vec![0.0; binned.cols.len()],
    };
    grower.grow((0..targets.len()).collect(), 0, fitted);
    let gains = binned.cols.iter().cloned().zip(grower.gains).collect();
    TreeModel {
        nodes: grower.nodes,
        gains,
    }
}

impl TreeModel {
    pub fn fit(data: &Dataset, keep: &Subset, max_depth: usize, min_leaf: usize) -> Self {
        let binned = BinnedColumns::new(data, keep);
        let mut fitted = vec![0.0; data.n()];
        grow_tree(&binned, data.y(), max_depth, min_leaf, &mut fitted)
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    col,
                    threshold,
                    left,
                    right,
                } => at = if row[*col] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// Total split gain per original column index.
    pub fn feature_gains(&self) -> &[(usize, f64)] {
        &self.gains
    }
}

/// `base + shrinkage * sum_t tree_t(x)`, trees fitted to successive residuals.
#[derive(Debug, Clone)]
pub struct BoostedModel {
    base: f64,
    shrinkage: f64,
    trees: Vec<TreeModel>,
}

impl BoostedModel {
    pub fn fit(data: &Dataset, keep: &Subset, rounds: usize, shrinkage: f64, depth: usize, min_leaf: usize) -> Self {
        let binned = BinnedColumns::new(data, keep);
        let y = data.y();
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut current = vec![base; n];
        let mut residual = vec![0.0; n];
        let mut fitted = vec![0.0; n];
        let mut trees = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            for i in 0..n {
                residual[i] = y[i] - current[i];
            }
            let tree = grow_tree(&binned, &residual, depth, min_leaf, &mut fitted);
            if tree.nodes.len() == 1 {
                // no split improves the fit any more
                break;
            }
            for i in 0..n {
                current[i] += shrinkage * fitted[i];
            }
            trees.push(tree);
        }
        Self { base, shrinkage, trees }
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base + self.shrinkage * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }
}
