use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ClassWeights, ForestParams};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    /// Class-weighted sample mass reaching the leaf.
    Leaf { pos: T, neg: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
    /// Unnormalized weighted impurity decrease per feature.
    importance: Vec<T>,
}

impl<T: Scalar> Tree<T> {
    fn leaf(&self, row: &[T]) -> (T, T) {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { pos, neg } => return (*pos, *neg),
            }
        }
    }

    /// Weighted positive fraction of the leaf `row` falls in.
    pub fn positive_probability(&self, row: &[T]) -> T {
        let (pos, neg) = self.leaf(row);
        pos / (pos + neg)
    }

    pub fn predict_row(&self, row: &[T]) -> bool {
        self.positive_probability(row) > T::lit(0.5)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_single_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
    pub n_features: usize,
}

impl<T: Scalar> Forest<T> {
    /// Mean over trees of the weighted positive leaf fraction.
    pub fn positive_probability(&self, row: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.positive_probability(row)).sum();
        sum / T::from_count(self.trees.len())
    }

    /// Soft vote; an exact tie goes to the negative class.
    pub fn predict_row(&self, row: &[T]) -> bool {
        self.positive_probability(row) > T::lit(0.5)
    }

    /// Mean decrease in weighted Gini impurity, normalized to sum to one.
    pub fn feature_importances(&self) -> Vec<T> {
        let mut total = vec![T::zero(); self.n_features];
        for t in &self.trees {
            let s: T = t.importance.iter().copied().sum();
            if s > T::zero() {
                for (acc, &v) in total.iter_mut().zip(&t.importance) {
                    *acc += v / s;
                }
            }
        }
        let s: T = total.iter().copied().sum();
        if s > T::zero() {
            total.iter_mut().for_each(|v| *v /= s);
        }
        total
    }
}

pub(super) fn fit_forest<T: Scalar>(
    x: &Matrix<T>,
    y: &[bool],
    weights: &ClassWeights,
    params: &ForestParams,
    seed: u64,
) -> Forest<T> {
    let d = x.cols();
    let columns: Vec<Vec<T>> = (0..d).map(|j| x.column(j)).collect();
    let mtry = params
        .max_features
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
        .clamp(1, d.max(1));
    let class_w = [T::lit(weights.w_neg), T::lit(weights.w_pos)];
    let builder = TreeBuilder {
        columns: &columns,
        y,
        class_w,
        mtry,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            builder.build(&mut rng)
        })
        .collect();
    Forest { trees, n_features: d }
}

struct TreeBuilder<'a, T> {
    columns: &'a [Vec<T>],
    y: &'a [bool],
    class_w: [T; 2],
    mtry: usize,
}

struct Candidate<T> {
    feature: usize,
    threshold: T,
    gain: T,
}

impl<T: Scalar> TreeBuilder<'_, T> {
    fn build(&self, rng: &mut ChaCha8Rng) -> Tree<T> {
        let n = self.y.len();
        let d = self.columns.len();
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.gen_range(0..n)] += 1;
        }
        // per-sample weight = bootstrap multiplicity × class weight
        let sw: Vec<T> = counts
            .iter()
            .zip(self.y)
            .map(|(&c, &l)| T::from_count(c as usize) * self.class_w[l as usize])
            .collect();
        let root: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();

        let mut nodes = Vec::new();
        let mut importance = vec![T::zero(); d];
        let mut features: Vec<usize> = (0..d).collect();
        let mut order: Vec<(T, usize)> = Vec::new();
        // (node slot, samples)
        let mut stack = vec![(0usize, root)];
        nodes.push(Node::Leaf {
            pos: T::zero(),
            neg: T::zero(),
        });
        while let Some((slot, samples)) = stack.pop() {
            let (pos, neg) = self.masses(&samples, &sw);
            nodes[slot] = Node::Leaf { pos, neg };
            if samples.len() <= 1 || pos == T::zero() || neg == T::zero() {
                continue;
            }
            features.shuffle(rng);
            let mut best: Option<Candidate<T>> = None;
            let mut tried = 0;
            for &f in &features {
                if tried >= self.mtry && best.is_some() {
                    break;
                }
                match self.best_split(f, &samples, &sw, pos, neg, &mut order) {
                    SplitSearch::Constant => continue,
                    SplitSearch::Found(c) => {
                        tried += 1;
                        if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                            best = Some(c);
                        }
                    }
                }
            }
            let Some(split) = best else { continue };
            let (left, right): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .partition(|&&i| self.columns[split.feature][i] <= split.threshold);
            importance[split.feature] += split.gain;
            let l = nodes.len();
            nodes.push(Node::Leaf {
                pos: T::zero(),
                neg: T::zero(),
            });
            nodes.push(Node::Leaf {
                pos: T::zero(),
                neg: T::zero(),
            });
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: l + 1,
            };
            stack.push((l + 1, right));
            stack.push((l, left));
        }
        Tree { nodes, importance }
    }

    fn masses(&self, samples: &[usize], sw: &[T]) -> (T, T) {
        let mut pos = T::zero();
        let mut neg = T::zero();
        for &i in samples {
            if self.y[i] {
                pos += sw[i];
            } else {
                neg += sw[i];
            }
        }
        (pos, neg)
    }

    /// Best threshold on `feature` by weighted Gini decrease W·G − W_L·G_L − W_R·G_R.
    fn best_split(
        &self,
        feature: usize,
        samples: &[usize],
        sw: &[T],
        pos: T,
        neg: T,
        order: &mut Vec<(T, usize)>,
    ) -> SplitSearch<T> {
        let col = &self.columns[feature];
        order.clear();
        order.extend(samples.iter().map(|&i| (col[i], i)));
        order.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if order.first().map(|f| f.0) == order.last().map(|l| l.0) {
            return SplitSearch::Constant;
        }
        let parent = weighted_gini(pos, neg);
        let mut lp = T::zero();
        let mut ln = T::zero();
        let mut best: Option<Candidate<T>> = None;
        for k in 0..order.len() - 1 {
            let (v, i) = order[k];
            if self.y[i] {
                lp += sw[i];
            } else {
                ln += sw[i];
            }
            let next = order[k + 1].0;
            if next <= v {
                continue;
            }
            let gain = parent - weighted_gini(lp, ln) - weighted_gini(pos - lp, neg - ln);
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                let mut threshold = v + (next - v) / T::lit(2.0);
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        match best {
            Some(c) => SplitSearch::Found(c),
            None => SplitSearch::Constant,
        }
    }
}

enum SplitSearch<T> {
    Constant,
    Found(Candidate<T>),
}

/// W·(1 − p² − q²) for a node of weighted class masses (pos, neg).
fn weighted_gini<T: Scalar>(pos: T, neg: T) -> T {
    let w = pos + neg;
    if w <= T::zero() {
        return T::zero();
    }
    w - (pos * pos + neg * neg) / w
}
