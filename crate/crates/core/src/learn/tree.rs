//! CART trees over dense `f64` feature rows.
//!
//! Every feature column is ranked once into its sorted distinct values, and
//! split search at a node builds a per-value histogram of the rows reaching
//! it. Thresholds are the distinct training values themselves: a row goes
//! left when its value is `<=` the threshold.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fitted tree. Leaves carry a class label or a regression value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node<T> {
    Leaf {
        value: T,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node<T>>,
        right: Box<Node<T>>,
    },
}

impl<T> Node<T> {
    pub fn predict(&self, x: &[f64]) -> &T {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn map<U>(self, f: &impl Fn(T) -> U) -> Node<U> {
        match self {
            Node::Leaf { value } => Node::Leaf { value: f(value) },
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => Node::Split {
                feature,
                threshold,
                left: Box::new(left.map(f)),
                right: Box::new(right.map(f)),
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Features used by any split, in no particular order.
    pub fn split_features(&self, out: &mut Vec<usize>) {
        if let Node::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            out.push(*feature);
            left.split_features(out);
            right.split_features(out);
        }
    }
}

/// Gini impurity of a class-count vector.
pub fn gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

/// Feature columns ranked into distinct values.
pub(crate) struct Ranked {
    /// `codes[f][row]` is the index of the row's value in `values[f]`.
    codes: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
}

impl Ranked {
    pub(crate) fn new(rows: &[Vec<f64>], n_features: usize) -> Self {
        let mut codes = Vec::with_capacity(n_features);
        let mut values = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut distinct: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let col = rows
                .iter()
                .map(|r| {
                    distinct
                        .binary_search_by(|v| v.total_cmp(&r[f]))
                        .expect("value is present") as u32
                })
                .collect();
            codes.push(col);
            values.push(distinct);
        }
        Self { codes, values }
    }

    fn n_features(&self) -> usize {
        self.codes.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: f64,
    /// Features tried at each node; `None` tries them all.
    pub max_features: Option<usize>,
}

/// What the tree is fitted to.
pub(crate) enum Target<'a> {
    Classes { y: &'a [usize], n_classes: usize },
    Values { y: &'a [f64] },
}

struct Best {
    feature: usize,
    code: u32,
    score: f64,
}

/// Grows one tree over the rows with non-zero `weights`.
pub(crate) fn grow<R: Rng>(
    ranked: &Ranked,
    target: &Target<'_>,
    weights: &[f64],
    params: GrowParams,
    rng: &mut R,
) -> Node<LeafStat> {
    let rows: Vec<u32> = (0..weights.len() as u32)
        .filter(|&i| weights[i as usize] > 0.0)
        .collect();
    let mut g = Grower {
        ranked,
        target,
        weights,
        params,
        rng,
    };
    g.node(rows, 0)
}

/// Raw leaf contents before conversion to a label or value.
#[derive(Debug, Clone)]
pub(crate) enum LeafStat {
    Class(usize),
    Value(f64),
}

struct Grower<'a, R> {
    ranked: &'a Ranked,
    target: &'a Target<'a>,
    weights: &'a [f64],
    params: GrowParams,
    rng: &'a mut R,
}

impl<R: Rng> Grower<'_, R> {
    fn node(&mut self, rows: Vec<u32>, depth: usize) -> Node<LeafStat> {
        let leaf = self.leaf(&rows);
        let total: f64 = rows.iter().map(|&i| self.weights[i as usize]).sum();
        if depth >= self.params.max_depth
            || total < 2.0 * self.params.min_leaf
            || self.is_pure(&rows)
        {
            return Node::Leaf { value: leaf };
        }
        let Some(best) = self.best_split(&rows) else {
            return Node::Leaf { value: leaf };
        };
        let codes = &self.ranked.codes[best.feature];
        let (l, r): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&i| codes[i as usize] <= best.code);
        Node::Split {
            feature: best.feature,
            threshold: self.ranked.values[best.feature][best.code as usize],
            left: Box::new(self.node(l, depth + 1)),
            right: Box::new(self.node(r, depth + 1)),
        }
    }

    fn leaf(&self, rows: &[u32]) -> LeafStat {
        match self.target {
            Target::Classes { y, n_classes } => {
                let mut counts = vec![0.0; *n_classes];
                for &i in rows {
                    counts[y[i as usize]] += self.weights[i as usize];
                }
                // First maximum, so ties go to the smallest class index.
                let mut best = 0;
                for (k, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = k;
                    }
                }
                LeafStat::Class(best)
            }
            Target::Values { y } => {
                let (mut sw, mut swy) = (0.0, 0.0);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &i in rows {
                    let (w, v) = (self.weights[i as usize], y[i as usize]);
                    sw += w;
                    swy += w * v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                LeafStat::Value((swy / sw).clamp(lo, hi))
            }
        }
    }

    fn is_pure(&self, rows: &[u32]) -> bool {
        match self.target {
            Target::Classes { y, .. } => {
                let first = y[rows[0] as usize];
                rows.iter().all(|&i| y[i as usize] == first)
            }
            Target::Values { y } => {
                let first = y[rows[0] as usize];
                rows.iter().all(|&i| y[i as usize] == first)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.ranked.n_features();
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = index::sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, rows: &[u32]) -> Option<Best> {
        let features = self.candidate_features();
        let mut best: Option<Best> = None;
        for f in features {
            let found = match self.target {
                Target::Classes { y, n_classes } => self.split_classes(rows, f, y, *n_classes),
                Target::Values { y } => self.split_values(rows, f, y),
            };
            if let Some(cand) = found {
                if best.as_ref().is_none_or(|b| cand.score > b.score) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    /// Maximises `sum(left²)/n_left + sum(right²)/n_right` over class
    /// counts, which minimises weighted Gini impurity.
    fn split_classes(&self, rows: &[u32], f: usize, y: &[usize], k: usize) -> Option<Best> {
        let codes = &self.ranked.codes[f];
        let n_values = self.ranked.values[f].len();
        if n_values < 2 {
            return None;
        }
        let mut hist = vec![0.0; n_values * k];
        let mut per_value = vec![0.0; n_values];
        let mut totals = vec![0.0; k];
        for &i in rows {
            let (c, w) = (codes[i as usize] as usize, self.weights[i as usize]);
            hist[c * k + y[i as usize]] += w;
            per_value[c] += w;
            totals[y[i as usize]] += w;
        }
        let n: f64 = totals.iter().sum();
        let parent = totals.iter().map(|t| t * t).sum::<f64>() / n;

        let mut left = vec![0.0; k];
        let (mut nl, mut sq_l) = (0.0, 0.0);
        let mut sq_r: f64 = totals.iter().map(|t| t * t).sum();
        let mut best: Option<Best> = None;
        for c in 0..n_values - 1 {
            if per_value[c] == 0.0 {
                continue;
            }
            for j in 0..k {
                let w = hist[c * k + j];
                if w != 0.0 {
                    let (l0, r0) = (left[j], totals[j] - left[j]);
                    sq_l += (l0 + w) * (l0 + w) - l0 * l0;
                    sq_r += (r0 - w) * (r0 - w) - r0 * r0;
                    left[j] += w;
                }
            }
            nl += per_value[c];
            let nr = n - nl;
            if nl < self.params.min_leaf || nr < self.params.min_leaf {
                continue;
            }
            let gain = sq_l / nl + sq_r / nr - parent;
            if gain > 1e-12 * n && best.as_ref().is_none_or(|b| gain > b.score) {
                best = Some(Best {
                    feature: f,
                    code: c as u32,
                    score: gain,
                });
            }
        }
        best
    }

    /// Variance reduction: maximises `S_l²/W_l + S_r²/W_r`.
    fn split_values(&self, rows: &[u32], f: usize, y: &[f64]) -> Option<Best> {
        let codes = &self.ranked.codes[f];
        let n_values = self.ranked.values[f].len();
        if n_values < 2 {
            return None;
        }
        let mut sw = vec![0.0; n_values];
        let mut swy = vec![0.0; n_values];
        for &i in rows {
            let (c, w) = (codes[i as usize] as usize, self.weights[i as usize]);
            sw[c] += w;
            swy[c] += w * y[i as usize];
        }
        let n: f64 = sw.iter().sum();
        let s: f64 = swy.iter().sum();
        let parent = s * s / n;
        let sq: f64 = rows
            .iter()
            .map(|&i| self.weights[i as usize] * y[i as usize] * y[i as usize])
            .sum();
        let tol = 1e-12 * sq.max(1e-300);

        let (mut nl, mut sl) = (0.0, 0.0);
        let mut best: Option<Best> = None;
        for c in 0..n_values - 1 {
            if sw[c] == 0.0 {
                continue;
            }
            nl += sw[c];
            sl += swy[c];
            let nr = n - nl;
            if nl < self.params.min_leaf || nr < self.params.min_leaf {
                continue;
            }
            let sr = s - sl;
            let gain = sl * sl / nl + sr * sr / nr - parent;
            if gain > tol && best.as_ref().is_none_or(|b| gain > b.score) {
                best = Some(Best {
                    feature: f,
                    code: c as u32,
                    score: gain,
                });
            }
        }
        best
    }
}
