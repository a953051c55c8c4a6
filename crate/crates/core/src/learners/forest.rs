//! Random forest regression with variance-reduction splits.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, LearnError};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub ntree: usize,
    /// Candidate features per split; `None` means `max(1, p / 3)`.
    pub mtry: Option<usize>,
    /// Fraction of rows drawn for each tree.
    pub bag_fraction: f64,
    /// Minimum number of training rows in every leaf.
    pub min_node_size: usize,
    /// Draw rows with replacement instead of subsampling.
    pub replace: bool,
    pub rng_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            ntree: 500,
            mtry: None,
            bag_fraction: 0.5,
            min_node_size: 5,
            replace: false,
            rng_seed: 0,
        }
    }
}

/// The `p / 3` rule for regression forests.
pub fn default_mtry(n_features: usize) -> usize {
    (n_features / 3).max(1)
}

impl ForestParams {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or_else(|| default_mtry(n_features))
    }

    pub fn validate(&self, n_features: usize) -> Result<(), LearnError> {
        if self.ntree == 0 {
            return Err(LearnError::InvalidParams("ntree must be at least 1".into()));
        }
        let mtry = self.resolved_mtry(n_features);
        if n_features > 0 && !(1..=n_features).contains(&mtry) {
            return Err(LearnError::InvalidParams(format!(
                "mtry {mtry} outside [1, {n_features}]"
            )));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(LearnError::InvalidParams(format!(
                "bag_fraction {} outside (0, 1]",
                self.bag_fraction
            )));
        }
        if self.min_node_size == 0 {
            return Err(LearnError::InvalidParams("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        size: usize,
    },
}

/// Binary regression tree stored as a flat node list; node 0 is the root.
/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
                Node::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, size } => Some((*value, *size)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Mean decrease in impurity per feature: the squared-error reduction of
    /// every split on the feature, divided by the tree's sample size and
    /// averaged over trees.
    pub importance: Vec<f64>,
    pub column_names: Vec<String>,
    /// RMSE of out-of-bag predictions, when any row was out of bag.
    pub oob_rmse: Option<f64>,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Grown {
    tree: Tree,
    importance: Vec<f64>,
    in_bag: Vec<bool>,
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_node: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    order: Vec<usize>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let value = rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            size: rows.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let p = self.cols.len();
        let mut candidates = index::sample(&mut self.rng, p, self.mtry).into_vec();
        candidates.sort_unstable();

        let mut best: Option<BestSplit> = None;
        for &f in &candidates {
            let col = &self.cols[f];
            self.order.clear();
            self.order.extend_from_slice(rows);
            self.order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[self.order[k]];
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.min_node {
                    continue;
                }
                if n_right < self.min_node {
                    break;
                }
                let (lo, hi) = (col[self.order[k]], col[self.order[k + 1]]);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - parent;
                if best.as_ref().map_or(true, |b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        let scale = rows.iter().map(|&i| self.y[i] * self.y[i]).sum::<f64>();
        best.filter(|b| b.gain > 1e-12 * scale.max(f64::MIN_POSITIVE))
    }

    fn grow(&mut self, rows: &mut [usize]) -> usize {
        if rows.len() < 2 * self.min_node {
            return self.leaf(rows);
        }
        let Some(split) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        self.importance[split.feature] += split.gain;
        let col = &self.cols[split.feature];
        let mut cut = 0;
        for k in 0..rows.len() {
            if col[rows[k]] <= split.threshold {
                rows.swap(k, cut);
                cut += 1;
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, size: 0 });
        let (l, r) = rows.split_at_mut(cut);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

fn grow_tree(cols: &[Vec<f64>], y: &[f64], p: &ForestParams, mtry: usize, t: usize) -> Grown {
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    rng.set_stream(t as u64);
    let k = ((p.bag_fraction * n as f64).round() as usize).clamp(1, n);
    let mut rows: Vec<usize> = if p.replace {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    } else {
        let mut s = index::sample(&mut rng, n, k).into_vec();
        s.sort_unstable();
        s
    };
    let mut in_bag = vec![false; n];
    rows.iter().for_each(|&i| in_bag[i] = true);

    let mut b = Builder {
        cols,
        y,
        mtry,
        min_node: p.min_node_size,
        rng,
        nodes: Vec::new(),
        importance: vec![0.0; cols.len()],
        order: Vec::with_capacity(k),
    };
    b.grow(&mut rows);
    let mut importance = b.importance;
    importance.iter_mut().for_each(|v| *v /= k as f64);
    Grown {
        tree: Tree { nodes: b.nodes },
        importance,
        in_bag,
    }
}

fn single_leaf(m: &FeatureMatrix) -> ForestModel {
    let n = m.n_rows();
    let value = m.target.iter().sum::<f64>() / n as f64;
    ForestModel {
        trees: vec![Tree {
            nodes: vec![Node::Leaf { value, size: n }],
        }],
        importance: vec![0.0; m.n_features()],
        column_names: m.column_names.clone(),
        oob_rmse: None,
    }
}

/// Grows every tree, or returns `None` when the data only supports a single
/// leaf.
fn grow_all(m: &FeatureMatrix, p: &ForestParams) -> Result<Option<Vec<Grown>>, LearnError> {
    let n = m.n_rows();
    let nf = m.n_features();
    p.validate(nf)?;
    if n == 0 || (n < p.min_node_size && n > 1) {
        return Err(LearnError::TooFewRows {
            needed: p.min_node_size,
            got: n,
        });
    }
    check_finite(m)?;
    if n == 1 || nf == 0 {
        return Ok(None);
    }
    let cols: Vec<Vec<f64>> = (0..nf).map(|j| m.column(j)).collect();
    let mtry = p.resolved_mtry(nf);
    Ok(Some(
        (0..p.ntree)
            .into_par_iter()
            .map(|t| grow_tree(&cols, &m.target, p, mtry, t))
            .collect(),
    ))
}

fn assemble(m: &FeatureMatrix, p: &ForestParams, grown: &[Grown]) -> ForestModel {
    let n = m.n_rows();
    let mut importance = vec![0.0; m.n_features()];
    let (mut oob_sum, mut oob_count) = (vec![0.0; n], vec![0usize; n]);
    for g in grown {
        importance.iter_mut().zip(&g.importance).for_each(|(a, b)| *a += b);
        for i in (0..n).filter(|&i| !g.in_bag[i]) {
            oob_sum[i] += g.tree.predict_row(&m.rows[i]);
            oob_count[i] += 1;
        }
    }
    importance.iter_mut().for_each(|v| *v /= p.ntree as f64);
    let (sq, cnt) = (0..n)
        .filter(|&i| oob_count[i] > 0)
        .fold((0.0, 0usize), |(s, c), i| {
            (s + (m.target[i] - oob_sum[i] / oob_count[i] as f64).powi(2), c + 1)
        });
    ForestModel {
        trees: grown.iter().map(|g| g.tree.clone()).collect(),
        importance,
        column_names: m.column_names.clone(),
        oob_rmse: (cnt > 0).then(|| (sq / cnt as f64).sqrt()),
    }
}

pub fn fit_forest(m: &FeatureMatrix, p: &ForestParams) -> Result<ForestModel, LearnError> {
    Ok(match grow_all(m, p)? {
        Some(grown) => assemble(m, p, &grown),
        None => single_leaf(m),
    })
}

/// Fits a forest and also returns out-of-bag permutation importance: per
/// tree, the increase in out-of-bag MSE after shuffling one feature among
/// the out-of-bag rows, averaged over trees.
pub fn fit_forest_with_permutation_importance(
    m: &FeatureMatrix,
    p: &ForestParams,
) -> Result<(ForestModel, Vec<f64>), LearnError> {
    let Some(grown) = grow_all(m, p)? else {
        return Ok((single_leaf(m), vec![0.0; m.n_features()]));
    };
    let nf = m.n_features();
    let per_tree: Vec<Vec<f64>> = grown
        .par_iter()
        .enumerate()
        .map(|(t, g)| {
            let oob: Vec<usize> = (0..m.n_rows()).filter(|&i| !g.in_bag[i]).collect();
            if oob.is_empty() {
                return vec![0.0; nf];
            }
            let mse = |rows: &mut dyn Iterator<Item = (Vec<f64>, f64)>| {
                rows.map(|(x, y)| (g.tree.predict_row(&x) - y).powi(2)).sum::<f64>()
                    / oob.len() as f64
            };
            let base = mse(&mut oob.iter().map(|&i| (m.rows[i].clone(), m.target[i])));
            let mut rng = ChaCha8Rng::seed_from_u64(!p.rng_seed);
            rng.set_stream(t as u64);
            (0..nf)
                .map(|j| {
                    let mut shuffled: Vec<f64> = oob.iter().map(|&i| m.rows[i][j]).collect();
                    shuffled.shuffle(&mut rng);
                    let permuted = mse(&mut oob.iter().zip(&shuffled).map(|(&i, &v)| {
                        let mut x = m.rows[i].clone();
                        x[j] = v;
                        (x, m.target[i])
                    }));
                    permuted - base
                })
                .collect()
        })
        .collect();
    let importance = (0..nf)
        .map(|j| per_tree.iter().map(|v| v[j]).sum::<f64>() / grown.len() as f64)
        .collect();
    Ok((assemble(m, p, &grown), importance))
}
