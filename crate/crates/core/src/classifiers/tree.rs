//! Weighted CART trees grown from presorted feature orders.

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Matrix;

/// Feature values closer than this are treated as equal when splitting.
const FEATURE_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Gini impurity on 0/1 targets.
    Gini,
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Row indices sorted by each feature, computed once and reused by many trees.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.n_cols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..x.n_rows()).collect();
                idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

/// Weighted mean of `y` over the leaf rows.
pub fn weighted_mean(y: &[f64], w: &[f64], rows: &[usize]) -> f64 {
    let (s, t) = rows
        .iter()
        .fold((0.0, 0.0), |(s, t), &i| (s + w[i] * y[i], t + w[i]));
    s / t
}

struct Stats {
    w: f64,
    s: f64,
    q: f64,
}

impl Stats {
    fn of(y: &[f64], w: &[f64], rows: &[usize]) -> Self {
        rows.iter().fold(Stats { w: 0.0, s: 0.0, q: 0.0 }, |a, &i| Stats {
            w: a.w + w[i],
            s: a.s + w[i] * y[i],
            q: a.q + w[i] * y[i] * y[i],
        })
    }

    fn impurity(&self, c: Criterion) -> f64 {
        let m = self.s / self.w;
        match c {
            Criterion::Gini => 2.0 * m * (1.0 - m),
            Criterion::Mse => self.q / self.w - m * m,
        }
    }
}

/// Larger is better; differs from the weighted child impurity by a constant.
fn proxy(c: Criterion, wl: f64, sl: f64, wr: f64, sr: f64) -> f64 {
    match c {
        Criterion::Gini => (sl * sl + (wl - sl) * (wl - sl)) / wl + (sr * sr + (wr - sr) * (wr - sr)) / wr,
        Criterion::Mse => sl * sl / wl + sr * sr / wr,
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    w: &'a [f64],
    params: &'a TreeParams,
    leaf_value: &'a dyn Fn(&[usize]) -> f64,
    idx: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    buf: Vec<usize>,
    features: Vec<usize>,
    nodes: Vec<Node>,
}

struct Best {
    proxy: f64,
    feature: usize,
    pos: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn find_split(&self, start: usize, end: usize, total: &Stats) -> Option<Best> {
        let n = end - start;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<Best> = None;
        for &f in &self.features {
            let seg = &self.idx[f][start..end];
            if self.x.get(seg[n - 1], f) <= self.x.get(seg[0], f) + FEATURE_THRESHOLD {
                continue;
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..n - 1 {
                let i = seg[k];
                wl += self.w[i];
                sl += self.w[i] * self.y[i];
                let (xv, xn) = (self.x.get(i, f), self.x.get(seg[k + 1], f));
                if xn <= xv + FEATURE_THRESHOLD {
                    continue;
                }
                if k + 1 < min_leaf || n - k - 1 < min_leaf {
                    continue;
                }
                let (wr, sr) = (total.w - wl, total.s - sl);
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let p = proxy(self.params.criterion, wl, sl, wr, sr);
                if best.as_ref().is_none_or(|b| p > b.proxy) {
                    let mut threshold = xv / 2.0 + xn / 2.0;
                    if threshold == xn || !threshold.is_finite() {
                        threshold = xv;
                    }
                    best = Some(Best {
                        proxy: p,
                        feature: f,
                        pos: k + 1,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn leaf(&mut self, start: usize, end: usize) -> usize {
        let value = (self.leaf_value)(&self.idx[0][start..end]);
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let n = end - start;
        let total = Stats::of(self.y, self.w, &self.idx[0][start..end]);
        let stop = n < self.params.min_samples_split.max(2)
            || n < 2 * self.params.min_samples_leaf.max(1)
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || total.impurity(self.params.criterion) <= f64::EPSILON;
        if stop {
            return self.leaf(start, end);
        }
        let Some(best) = self.find_split(start, end, &total) else {
            return self.leaf(start, end);
        };
        let mid = start + best.pos;
        for &i in &self.idx[best.feature][start..mid] {
            self.goes_left[i] = true;
        }
        for f in 0..self.idx.len() {
            if f == best.feature {
                continue;
            }
            self.buf.clear();
            let seg = &mut self.idx[f][start..end];
            let mut l = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i] {
                    seg[l] = i;
                    l += 1;
                } else {
                    self.buf.push(i);
                }
            }
            seg[l..].copy_from_slice(&self.buf);
        }
        for &i in &self.idx[best.feature][start..mid] {
            self.goes_left[i] = false;
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }
}

/// Grows one tree on the rows with positive weight.
///
/// With `rng`, features are scanned in a shuffled order at every node, which
/// only matters for breaking exact ties between features.
pub fn fit_tree(
    x: &Matrix,
    presorted: &Presorted,
    y: &[f64],
    w: &[f64],
    params: &TreeParams,
    mut rng: Option<&mut dyn RngCore>,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> Tree {
    let idx: Vec<Vec<usize>> = presorted
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&i| w[i] > 0.0).collect())
        .collect();
    let n = idx.first().map_or(0, Vec::len);
    let mut b = Builder {
        x,
        y,
        w,
        params,
        leaf_value,
        idx,
        goes_left: vec![false; x.n_rows()],
        buf: Vec::with_capacity(n),
        features: (0..x.n_cols()).collect(),
        nodes: Vec::new(),
    };
    if let Some(r) = rng.as_deref_mut() {
        b.features.shuffle(r);
    }
    b.build(0, n, 0);
    Tree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grow(x: &Matrix, y: &[f64], w: &[f64], params: &TreeParams) -> Tree {
        let ps = Presorted::new(x);
        fit_tree(x, &ps, y, w, params, None, &|rows| weighted_mean(y, w, rows))
    }

    fn full(criterion: Criterion) -> TreeParams {
        TreeParams {
            criterion,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }

    #[test]
    fn separable_data_gives_one_split() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [0.0, 0.0, 1.0, 1.0];
        let t = grow(&x, &y, &[1.0; 4], &full(Criterion::Gini));
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.predict_row(&[1.4]), 0.0);
        assert_eq!(t.predict_row(&[1.6]), 1.0);
    }

    #[test]
    fn grows_to_purity_and_fits_training_rows() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![((i * 37) % 50) as f64, ((i * 11) % 7) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..50).map(|i| ((i * 13) % 3 == 0) as u8 as f64).collect();
        let t = grow(&x, &y, &[1.0; 50], &full(Criterion::Gini));
        for (r, &v) in x.rows().zip(&y) {
            assert_eq!(t.predict_row(r), v);
        }
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0.0, 1.0, 1.0];
        let t = grow(&x, &y, &[1.0, 0.0, 2.0], &full(Criterion::Gini));
        assert_eq!(t.predict_row(&[0.9]), 0.0);
        assert_eq!(t.predict_row(&[1.1]), 1.0);
    }

    #[test]
    fn regression_depth_limit() {
        let x = Matrix::from_rows(&(0..16).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let p = TreeParams {
            max_depth: Some(2),
            ..full(Criterion::Mse)
        };
        let t = grow(&x, &y, &[1.0; 16], &p);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_leaves(), 4);
    }
}
