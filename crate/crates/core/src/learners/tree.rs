//! Depth-limited CART trees with exact greedy splits.
//!
//! Used in two modes: weighted-Gini classification trees (AdaBoost stages) and
//! squared-error regression trees (gradient boosting). Splits are `x <= t` go
//! left, with thresholds at midpoints between consecutive distinct values.
//!
//! Split search runs on per-feature presorted lists of the rows whose value is
//! nonzero; the rows at zero are handled as one implicit block. TF-IDF
//! columns are mostly zero, so a node costs `O(features + nonzeros in node)`
//! instead of `O(features x rows)`.

use crate::features::Matrix;
use crate::label::{Label, ProbDist, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafValue {
    Dist(ProbDist),
    Scalar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafValue),
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> &LeafValue {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf(v) => return v,
            }
        }
    }

    pub fn predict_dist(&self, x: &[f64]) -> ProbDist {
        match self.leaf(x) {
            LeafValue::Dist(d) => *d,
            LeafValue::Scalar(_) => panic!("regression tree queried for a class distribution"),
        }
    }

    pub fn predict_scalar(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            LeafValue::Scalar(v) => *v,
            LeafValue::Dist(_) => panic!("classification tree queried for a scalar"),
        }
    }

    /// Depth of the deepest leaf (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
                Node::Leaf(_) => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Per-feature lists of rows with a nonzero value, ascending by `(value, row)`.
/// Stored flat: feature `f` owns `rows[offsets[f]..offsets[f + 1]]`, with
/// the matching values alongside.
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    offsets: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl ColumnIndex {
    pub fn new(x: &Matrix) -> Self {
        let d = x.n_cols();
        let mut per: Vec<Vec<u32>> = vec![Vec::new(); d];
        for (i, row) in x.rows().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    per[f].push(i as u32);
                }
            }
        }
        let mut offsets = Vec::with_capacity(d + 1);
        let mut rows = Vec::new();
        offsets.push(0);
        for (f, mut list) in per.into_iter().enumerate() {
            list.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            rows.extend(list);
            offsets.push(rows.len());
        }
        let values = (0..d)
            .flat_map(|f| rows[offsets[f]..offsets[f + 1]].iter().map(move |&r| (r, f)))
            .map(|(r, f)| x.get(r as usize, f))
            .collect();
        Self { offsets, rows, values }
    }
}

/// Split statistics for one tree mode.
pub(crate) trait Criterion {
    type Stats: Copy + Default;

    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn merge(&self, a: &Self::Stats, b: &Self::Stats, sign: f64) -> Self::Stats;
    fn count(&self, stats: &Self::Stats) -> usize;
    /// Node score; the gain of a split is `score(L) + score(R) - score(parent)`.
    fn score(&self, stats: &Self::Stats) -> f64;
    fn is_pure(&self, stats: &Self::Stats) -> bool;
    fn leaf(&self, rows: &[usize], stats: &Self::Stats) -> LeafValue;
}

/// Weighted Gini impurity; leaves hold the weighted class distribution.
pub(crate) struct Gini<'a> {
    pub y: &'a [Label],
    pub weights: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassStats {
    w: [f64; N_CLASSES],
    n: usize,
}

impl Criterion for Gini<'_> {
    type Stats = ClassStats;

    fn add(&self, s: &mut ClassStats, row: usize) {
        s.w[self.y[row].index()] += self.weights[row];
        s.n += 1;
    }

    fn merge(&self, a: &ClassStats, b: &ClassStats, sign: f64) -> ClassStats {
        let mut w = a.w;
        for (x, y) in w.iter_mut().zip(b.w) {
            *x += sign * y;
        }
        let n = if sign > 0.0 { a.n + b.n } else { a.n - b.n };
        ClassStats { w, n }
    }

    fn count(&self, s: &ClassStats) -> usize {
        s.n
    }

    fn score(&self, s: &ClassStats) -> f64 {
        let total: f64 = s.w.iter().sum();
        if total <= 0.0 {
            0.0
        } else {
            s.w.iter().map(|w| w * w).sum::<f64>() / total
        }
    }

    fn is_pure(&self, s: &ClassStats) -> bool {
        s.w.iter().filter(|&&w| w > 0.0).count() <= 1
    }

    fn leaf(&self, _rows: &[usize], s: &ClassStats) -> LeafValue {
        LeafValue::Dist(ProbDist::from_scores(s.w.map(|w| w.max(0.0))))
    }
}

/// Squared error on per-row targets; the leaf value comes from a callback.
pub(crate) struct SquaredError<'a, F: Fn(&[usize]) -> f64> {
    pub target: &'a [f64],
    pub leaf_value: F,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SumStats {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl<F: Fn(&[usize]) -> f64> Criterion for SquaredError<'_, F> {
    type Stats = SumStats;

    fn add(&self, s: &mut SumStats, row: usize) {
        let t = self.target[row];
        s.sum += t;
        s.sum_sq += t * t;
        s.n += 1;
    }

    fn merge(&self, a: &SumStats, b: &SumStats, sign: f64) -> SumStats {
        SumStats {
            sum: a.sum + sign * b.sum,
            sum_sq: a.sum_sq + sign * b.sum_sq,
            n: if sign > 0.0 { a.n + b.n } else { a.n - b.n },
        }
    }

    fn count(&self, s: &SumStats) -> usize {
        s.n
    }

    fn score(&self, s: &SumStats) -> f64 {
        if s.n == 0 {
            0.0
        } else {
            s.sum * s.sum / s.n as f64
        }
    }

    fn is_pure(&self, s: &SumStats) -> bool {
        if s.n == 0 {
            return true;
        }
        let mean = s.sum / s.n as f64;
        s.sum_sq / s.n as f64 - mean * mean <= 1e-15 * (1.0 + mean * mean)
    }

    fn leaf(&self, rows: &[usize], _s: &SumStats) -> LeafValue {
        LeafValue::Scalar((self.leaf_value)(rows))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Presorted nonzero entries of the rows in one node, per feature.
struct NodeColumns {
    offsets: Vec<usize>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

pub(crate) struct TreeBuilder<'a, C: Criterion> {
    x: &'a Matrix,
    index: &'a ColumnIndex,
    criterion: C,
    params: TreeParams,
    goes_left: Vec<bool>,
    nodes: Vec<Node>,
}

impl<'a, C: Criterion> TreeBuilder<'a, C> {
    pub fn new(x: &'a Matrix, index: &'a ColumnIndex, criterion: C, params: TreeParams) -> Self {
        Self {
            x,
            index,
            criterion,
            params: TreeParams {
                max_depth: params.max_depth,
                min_leaf: params.min_leaf.max(1),
            },
            goes_left: vec![false; x.n_rows()],
            nodes: Vec::new(),
        }
    }

    /// Grows a tree over `rows` (indices into the matrix; repeats allowed only
    /// if the column index was built for the same repeated rows).
    pub fn build(mut self, rows: Vec<usize>) -> DecisionTree {
        let d = self.x.n_cols();
        let mut in_node = vec![false; self.x.n_rows()];
        for &r in &rows {
            in_node[r] = true;
        }
        let idx = self.index;
        let mut cols = NodeColumns {
            offsets: Vec::with_capacity(d + 1),
            rows: Vec::with_capacity(idx.rows.len()),
            values: Vec::with_capacity(idx.rows.len()),
        };
        cols.offsets.push(0);
        for f in 0..d {
            let span = idx.offsets[f]..idx.offsets[f + 1];
            for (&r, &v) in idx.rows[span.clone()].iter().zip(&idx.values[span]) {
                if in_node[r as usize] {
                    cols.rows.push(r);
                    cols.values.push(v);
                }
            }
            cols.offsets.push(cols.rows.len());
        }
        self.grow(rows, cols, 0);
        DecisionTree {
            nodes: self.nodes,
            max_depth: self.params.max_depth,
        }
    }

    fn grow(&mut self, rows: Vec<usize>, cols: NodeColumns, depth: usize) -> usize {
        let mut total = C::Stats::default();
        for &r in &rows {
            self.criterion.add(&mut total, r);
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(LeafValue::Scalar(0.0)));

        let splittable = depth < self.params.max_depth
            && rows.len() >= 2 * self.params.min_leaf
            && !self.criterion.is_pure(&total);
        let best = if splittable {
            self.best_split(&rows, &cols, &total)
        } else {
            None
        };
        let Some(best) = best else {
            self.nodes[id] = Node::Leaf(self.criterion.leaf(&rows, &total));
            return id;
        };

        for &r in &rows {
            self.goes_left[r] = self.x.get(r, best.feature) <= best.threshold;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.goes_left[r]);
        let d = self.x.n_cols();
        let empty = |cap: usize| NodeColumns {
            offsets: Vec::with_capacity(d + 1),
            rows: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
        };
        let mut lc = empty(cols.rows.len());
        let mut rc = empty(cols.rows.len());
        lc.offsets.push(0);
        rc.offsets.push(0);
        for f in 0..d {
            let span = cols.offsets[f]..cols.offsets[f + 1];
            for (&r, &v) in cols.rows[span.clone()].iter().zip(&cols.values[span]) {
                let side = if self.goes_left[r as usize] { &mut lc } else { &mut rc };
                side.rows.push(r);
                side.values.push(v);
            }
            lc.offsets.push(lc.rows.len());
            rc.offsets.push(rc.rows.len());
        }
        drop(cols);
        let left = self.grow(left_rows, lc, depth + 1);
        let right = self.grow(right_rows, rc, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], cols: &NodeColumns, total: &C::Stats) -> Option<BestSplit> {
        let n = rows.len();
        let parent = self.criterion.score(total);
        let min_gain = 1e-12 * parent.abs().max(1.0);
        let min_leaf = self.params.min_leaf;
        let mut best: Option<BestSplit> = None;

        for f in 0..self.x.n_cols() {
            let span = cols.offsets[f]..cols.offsets[f + 1];
            let list = &cols.rows[span.clone()];
            let vals = &cols.values[span];
            let zero_count = n - list.len();
            if list.is_empty() {
                continue;
            }
            let zeros = if zero_count == 0 {
                C::Stats::default()
            } else {
                let mut nonzero = C::Stats::default();
                for &r in list {
                    self.criterion.add(&mut nonzero, r as usize);
                }
                self.criterion.merge(total, &nonzero, -1.0)
            };
            let first_positive = vals.partition_point(|&v| v < 0.0);

            let mut left = C::Stats::default();
            let mut prev: Option<f64> = None;
            let consider = |left: &C::Stats, prev: Option<f64>, next: f64, best: &mut Option<BestSplit>| {
                let Some(pv) = prev else { return };
                if next <= pv {
                    return;
                }
                let nl = self.criterion.count(left);
                if nl < min_leaf || n - nl < min_leaf {
                    return;
                }
                let right = self.criterion.merge(total, left, -1.0);
                let gain = self.criterion.score(left) + self.criterion.score(&right) - parent;
                if gain > min_gain && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (pv + next);
                    if threshold >= next {
                        threshold = pv;
                    }
                    *best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            };

            for (&r, &v) in list[..first_positive].iter().zip(&vals[..first_positive]) {
                consider(&left, prev, v, &mut best);
                self.criterion.add(&mut left, r as usize);
                prev = Some(v);
            }
            if zero_count > 0 {
                consider(&left, prev, 0.0, &mut best);
                left = self.criterion.merge(&left, &zeros, 1.0);
                prev = Some(0.0);
            }
            for (&r, &v) in list[first_positive..].iter().zip(&vals[first_positive..]) {
                consider(&left, prev, v, &mut best);
                self.criterion.add(&mut left, r as usize);
                prev = Some(v);
            }
        }
        best
    }
}

/// Weighted classification tree.
pub fn fit_classification_tree(
    x: &Matrix,
    index: &ColumnIndex,
    y: &[Label],
    weights: &[f64],
    params: TreeParams,
) -> DecisionTree {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    TreeBuilder::new(x, index, Gini { y, weights }, params).build(rows)
}

/// Regression tree on `target` with leaf values from `leaf_value(rows)`.
pub fn fit_regression_tree(
    x: &Matrix,
    index: &ColumnIndex,
    target: &[f64],
    params: TreeParams,
    leaf_value: impl Fn(&[usize]) -> f64,
) -> DecisionTree {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    TreeBuilder::new(x, index, SquaredError { target, leaf_value }, params).build(rows)
}
