//! Random forest of CART trees (Gini impurity, bootstrap rows, `sqrt(d)`
//! candidate features per split).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    Leaf {
        prob: T,
    },
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn predict(&self, row: &[T]) -> T {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { prob } => return *prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ForestParams<T> {
    pub trees: Vec<Tree<T>>,
}

impl<T: Scalar> ForestParams<T> {
    pub fn predict(&self, row: &[T]) -> T {
        let sum = self.trees.iter().fold(T::zero(), |a, t| a + t.predict(row));
        sum / T::from_usize(self.trees.len()).unwrap()
    }
}

struct Builder<'a, T> {
    x: &'a [Vec<T>],
    y: &'a [bool],
    max_depth: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node<T>>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl<T: Scalar> Builder<'_, T> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        self.nodes.push(Node::Leaf {
            prob: T::from_usize(pos).unwrap() / T::from_usize(idx.len()).unwrap(),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        if depth >= self.max_depth || n < 2 || pos == 0 || pos == n {
            return self.leaf(idx);
        }
        let parent = gini(pos, n);
        let dim = self.x[0].len();
        let features = sample(&mut self.rng, dim, self.mtry.min(dim));

        let mut best: Option<(f64, usize, T)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in features.iter() {
            order.sort_by(|&a, &b| {
                self.x[a][f]
                    .partial_cmp(&self.x[b][f])
                    .expect("finite features")
            });
            let mut left_pos = 0;
            for k in 1..n {
                if self.y[order[k - 1]] {
                    left_pos += 1;
                }
                let lo = self.x[order[k - 1]][f];
                let hi = self.x[order[k]][f];
                if !(lo < hi) {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(pos - left_pos, n - k))
                    / n as f64;
                if best.map_or(true, |(b, _, _)| impurity < b) {
                    best = Some((impurity, f, (lo + hi) / T::lit(2.0)));
                }
            }
        }
        let Some((impurity, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        if !(impurity < parent - 1e-12) {
            return self.leaf(idx);
        }

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { prob: T::zero() });
        let mut split = 0;
        for k in 0..n {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

pub(crate) fn fit<T: Scalar>(
    x: &[Vec<T>],
    y: &[bool],
    trees: usize,
    max_depth: usize,
    seed: u64,
) -> ForestParams<T> {
    let dim = x[0].len();
    let mtry = ((dim as f64).sqrt().floor() as usize).max(1);
    let trees = (0..trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            let mut idx: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
            let mut b = Builder {
                x,
                y,
                max_depth,
                mtry,
                rng,
                nodes: Vec::new(),
            };
            b.grow(&mut idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    ForestParams { trees }
}
