//! CART regression trees (squared-error splits).

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
}

impl RegressionTree {
    /// Fit on every row, trying every feature at each split.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], max_depth: Option<usize>, min_leaf: usize) -> Self {
        let rows: Vec<usize> = (0..y.len()).collect();
        Self::fit_rows::<rand_chacha::ChaCha8Rng>(x, y, rows, max_depth, min_leaf, None)
    }

    /// Fit on `rows` (repeats allowed). With `features = Some((m, rng))`
    /// each split considers `m` features drawn without replacement.
    pub(crate) fn fit_rows<R: Rng>(
        x: ArrayView2<'_, f64>,
        y: &[f64],
        rows: Vec<usize>,
        max_depth: Option<usize>,
        min_leaf: usize,
        mut features: Option<(usize, &mut R)>,
    ) -> Self {
        let min_leaf = min_leaf.max(1);
        let p = x.ncols();
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![Pending { node: 0, rows, depth: 0 }];
        let mut order: Vec<usize> = Vec::new();
        while let Some(Pending { node, rows, depth }) = stack.pop() {
            let n = rows.len() as f64;
            let sum: f64 = rows.iter().map(|&i| y[i]).sum();
            let mean = sum / n;
            nodes[node] = Node::Leaf(mean);
            let depth_ok = max_depth.is_none_or(|d| depth < d);
            if !depth_ok || rows.len() < 2 * min_leaf {
                continue;
            }
            let sse: f64 = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum();
            if sse <= 1e-24 * n * (1.0 + mean * mean) {
                continue;
            }
            let candidates: Vec<usize> = match features.as_mut() {
                Some((m, rng)) if *m < p => {
                    let mut c = sample(&mut **rng, p, *m).into_vec();
                    c.sort_unstable();
                    c
                }
                _ => (0..p).collect(),
            };

            let base = sum * sum / n;
            let mut best: Option<(f64, usize, f64)> = None;
            for &f in &candidates {
                order.clear();
                order.extend_from_slice(&rows);
                order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
                let mut left = 0.0;
                for k in 0..order.len() - 1 {
                    left += y[order[k]];
                    let n_left = k + 1;
                    let n_right = order.len() - n_left;
                    if n_left < min_leaf || n_right < min_leaf {
                        continue;
                    }
                    let (lo, hi) = (x[[order[k], f]], x[[order[k + 1], f]]);
                    if lo == hi {
                        continue;
                    }
                    let right = sum - left;
                    let gain = left * left / n_left as f64 + right * right / n_right as f64 - base;
                    if best.is_none_or(|(g, _, _)| gain > g) {
                        best = Some((gain, f, lo + (hi - lo) / 2.0));
                    }
                }
            }
            let Some((gain, feature, threshold)) = best else { continue };
            if gain <= 1e-12 * sse {
                continue;
            }
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, feature]] <= threshold);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[node] = Node::Split { feature, threshold, left, right };
            stack.push(Pending { node: right, rows: r_rows, depth: depth + 1 });
            stack.push(Pending { node: left, rows: l_rows, depth: depth + 1 });
        }
        Self { nodes }
    }

    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(|j| r[j])).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}
