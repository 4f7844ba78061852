//! CART regression trees.
//!
//! Fitting works on per-feature sorted row lists that are partitioned stably
//! at each split, so a node costs O(rows · features) after the initial sort.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForestError;

/// Relative tolerance under which two split scores count as tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Internal { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { prediction: f64, count: usize },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Internal { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// The leaf `x` is routed to.
    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Internal { feature, threshold, left, right } = node {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal { feature, left, right, .. } => {
                Some((*feature).max(left.max_feature().unwrap_or(0)).max(right.max_feature().unwrap_or(0)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    /// Features evaluated per node; `None` evaluates all of them.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { mtry: None, min_leaf: 1, max_depth: None }
    }
}

impl TreeParams {
    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.min_leaf == 0 {
            return Err(ForestError::InvalidHyperparams("min_leaf must be at least 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_features {
                return Err(ForestError::InvalidHyperparams(format!("mtry {m} not in 1..={n_features}")));
            }
        }
        Ok(())
    }
}

/// Column-major copy of a training matrix, sorted once per feature.
pub struct Presorted {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    /// `values` is row-major with `n_features` columns.
    pub fn new(values: &[f64], n_features: usize) -> Self {
        let n_rows = values.len().checked_div(n_features).unwrap_or(0);
        let columns: Vec<Vec<f64>> =
            (0..n_features).map(|j| (0..n_rows).map(|i| values[i * n_features + j]).collect()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { n_rows, columns, order }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child variance `Σ n_child · Var(y_child)` after the split.
    pub child_sse: f64,
}

/// Midpoint threshold that still routes `lo` left and `hi` right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Whether `candidate` beats `best` once near-equal scores count as ties.
/// Scores are maximised.
fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_EPSILON * best.abs().max(1.0)
}

struct Builder<'a, R: ?Sized> {
    data: &'a Presorted,
    y: &'a [f64],
    params: TreeParams,
    mtry: usize,
    rng: &'a mut R,
    /// Per-feature row lists; every node is the same range in each list.
    lists: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    feature_pool: Vec<usize>,
    importance: Vec<f64>,
}

/// Fits one tree. `counts[i]` is how many times row `i` appears in the
/// training sample (all ones without bootstrap). Returns the tree and the
/// total SSE reduction attributed to each feature.
pub fn fit_tree_weighted<R: Rng + ?Sized>(
    data: &Presorted,
    y: &[f64],
    counts: &[u32],
    params: &TreeParams,
    rng: &mut R,
) -> Result<(TreeNode, Vec<f64>), ForestError> {
    let p = data.n_features();
    params.validate(p.max(1))?;
    if y.len() != data.n_rows() || counts.len() != data.n_rows() {
        return Err(ForestError::LengthMismatch { rows: data.n_rows(), targets: y.len() });
    }
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    let lists = data
        .order
        .iter()
        .map(|ord| {
            let mut l = Vec::with_capacity(total);
            for &r in ord {
                for _ in 0..counts[r as usize] {
                    l.push(r);
                }
            }
            l
        })
        .collect();
    let mut b = Builder {
        data,
        y,
        params: *params,
        mtry: params.mtry.unwrap_or(p),
        rng,
        lists,
        goes_left: vec![false; data.n_rows()],
        scratch: Vec::with_capacity(total),
        feature_pool: (0..p).collect(),
        importance: vec![0.0; p],
    };
    let root = b.grow(0, total, 0);
    Ok((root, b.importance))
}

/// Fits a tree on every row of a row-major matrix.
pub fn fit_tree<R: Rng + ?Sized>(
    values: &[f64],
    n_features: usize,
    y: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeNode, ForestError> {
    let data = Presorted::new(values, n_features);
    if data.n_rows() == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    let counts = vec![1; data.n_rows()];
    fit_tree_weighted(&data, y, &counts, params, rng).map(|(t, _)| t)
}

/// Best split of one feature over `rows` (sorted by that feature), or `None`
/// if no threshold leaves `min_leaf` rows on each side. The score is
/// `S_L²/n_L + S_R²/n_R` on targets centred at `mean`; larger is better.
fn best_threshold(col: &[f64], y: &[f64], rows: &[u32], mean: f64, min_leaf: usize) -> Option<(f64, f64)> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r as usize] - mean).sum();
    let mut sum_left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        sum_left += y[rows[i] as usize] - mean;
        let n_left = i + 1;
        if n_left < min_leaf {
            continue;
        }
        if n - n_left < min_leaf {
            break;
        }
        let (lo, hi) = (col[rows[i] as usize], col[rows[i + 1] as usize]);
        if lo == hi {
            continue;
        }
        let sum_right = total - sum_left;
        let score = sum_left * sum_left / n_left as f64 + sum_right * sum_right / (n - n_left) as f64;
        if best.is_none_or(|(s, _)| improves(score, s)) {
            best = Some((score, midpoint(lo, hi)));
        }
    }
    best
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn grow(&mut self, start: usize, end: usize, depth: usize) -> TreeNode {
        let n = end - start;
        let rows = &self.lists[0][start..end];
        let mean = rows.iter().map(|&r| self.y[r as usize]).sum::<f64>() / n as f64;
        let (ymin, ymax) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(self.y[r as usize]), hi.max(self.y[r as usize]))
        });
        let stop = self.params.max_depth.is_some_and(|d| depth >= d) || n < 2 * self.params.min_leaf || ymin == ymax;
        if stop {
            return TreeNode::Leaf { prediction: mean, count: n };
        }

        let Some(split) = self.choose_split(start, end, mean) else {
            return TreeNode::Leaf { prediction: mean, count: n };
        };
        let sse: f64 = self.lists[0][start..end].iter().map(|&r| (self.y[r as usize] - mean).powi(2)).sum();
        self.importance[split.feature] += (sse - split.child_sse).max(0.0);

        let n_left = self.partition(start, end, split);
        let left = self.grow(start, start + n_left, depth + 1);
        let right = self.grow(start + n_left, end, depth + 1);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Draws features in random order until `mtry` non-constant ones are
    /// found, then scans them in index order so ties go to the lowest
    /// feature and, within it, the lowest threshold.
    fn choose_split(&mut self, start: usize, end: usize, mean: f64) -> Option<Split> {
        let p = self.feature_pool.len();
        let mut chosen = Vec::with_capacity(self.mtry);
        if self.mtry >= p {
            chosen.extend((0..p).filter(|&f| !self.constant(f, start, end)));
        } else {
            self.feature_pool.shuffle(self.rng);
            for k in 0..p {
                let f = self.feature_pool[k];
                if !self.constant(f, start, end) {
                    chosen.push(f);
                    if chosen.len() == self.mtry {
                        break;
                    }
                }
            }
            chosen.sort_unstable();
        }

        let mut best: Option<(f64, usize, f64)> = None;
        for f in chosen {
            let rows = &self.lists[f][start..end];
            if let Some((score, thr)) = best_threshold(&self.data.columns[f], self.y, rows, mean, self.params.min_leaf)
            {
                if best.is_none_or(|(s, _, _)| improves(score, s)) {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(score, feature, threshold)| {
            let sse: f64 = self.lists[0][start..end].iter().map(|&r| (self.y[r as usize] - mean).powi(2)).sum();
            Split { feature, threshold, child_sse: (sse - score).max(0.0) }
        })
    }

    fn constant(&self, f: usize, start: usize, end: usize) -> bool {
        let col = &self.data.columns[f];
        let l = &self.lists[f];
        col[l[start] as usize] == col[l[end - 1] as usize]
    }

    /// Stable partition of every feature list; returns the left size.
    fn partition(&mut self, start: usize, end: usize, split: Split) -> usize {
        let col = &self.data.columns[split.feature];
        for &r in &self.lists[split.feature][start..end] {
            self.goes_left[r as usize] = col[r as usize] <= split.threshold;
        }
        let mut n_left = 0;
        for list in &mut self.lists {
            self.scratch.clear();
            let mut w = start;
            for i in start..end {
                let r = list[i];
                if self.goes_left[r as usize] {
                    list[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            n_left = w - start;
            list[w..end].copy_from_slice(&self.scratch);
        }
        n_left
    }
}
