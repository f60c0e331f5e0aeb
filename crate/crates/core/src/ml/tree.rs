//! CART decision trees (Gini impurity, grown to purity) and bootstrap-bagged
//! random forests with per-split feature subsampling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{FeatureMatrix, ForestParams};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        prob: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

/// A fitted binary classification tree. Leaves store the weighted positive
/// fraction of their training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Probability estimate: the leaf's weighted positive fraction.
    pub fn predict_prob(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { prob } => return *prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Split count on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn serialize_into(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&(self.nodes.len() as u32).to_le_bytes());
        for node in &self.nodes {
            match node {
                Node::Leaf { prob } => {
                    buf.push(0);
                    buf.extend_from_slice(&prob.to_le_bytes());
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    buf.push(1);
                    buf.extend_from_slice(&(*feature as u32).to_le_bytes());
                    buf.extend_from_slice(&threshold.to_le_bytes());
                    buf.extend_from_slice(&left.to_le_bytes());
                    buf.extend_from_slice(&right.to_le_bytes());
                }
            }
        }
    }

    pub(crate) fn deserialize_from(buf: &[u8], cursor: &mut usize) -> Result<Self> {
        let take = |cursor: &mut usize, len: usize| -> Result<&[u8]> {
            if buf.len() < *cursor + len {
                return Err(Error::parameter("truncated tree payload"));
            }
            let s = &buf[*cursor..*cursor + len];
            *cursor += len;
            Ok(s)
        };
        let count = u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()) as usize;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let tag = take(cursor, 1)?[0];
            match tag {
                0 => nodes.push(Node::Leaf {
                    prob: f64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()),
                }),
                1 => {
                    let feature = u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()) as usize;
                    let threshold = f64::from_le_bytes(take(cursor, 8)?.try_into().unwrap());
                    let left = u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap());
                    let right = u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap());
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    });
                }
                other => {
                    return Err(Error::parameter(format!("unknown node tag {}", other)))
                }
            }
        }
        Ok(DecisionTree { nodes })
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    w: &'a [f64],
    nodes: Vec<Node>,
    m_try: usize,
    rng: Option<ChaCha8Rng>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<'a> Builder<'a> {
    fn gini(w_pos: f64, w_tot: f64) -> f64 {
        if w_tot <= 0.0 {
            return 0.0;
        }
        let p = w_pos / w_tot;
        2.0 * p * (1.0 - p)
    }

    /// Best weighted-Gini split of `idx` among `features`; boundaries sit
    /// between distinct values so both children are nonempty.
    fn scan(&self, idx: &[usize], features: &[usize]) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = Vec::with_capacity(idx.len());
        for &f in features {
            order.clear();
            order.extend_from_slice(idx);
            order.sort_unstable_by(|a, b| self.x.get(*a, f).total_cmp(&self.x.get(*b, f)));
            let w_tot: f64 = order.iter().map(|&i| self.w[i]).sum();
            let w_pos_tot: f64 = order
                .iter()
                .filter(|&&i| self.y[i])
                .map(|&i| self.w[i])
                .sum();
            let mut wl = 0.0;
            let mut wl_pos = 0.0;
            for k in 0..order.len() - 1 {
                let i = order[k];
                wl += self.w[i];
                if self.y[i] {
                    wl_pos += self.w[i];
                }
                let v = self.x.get(i, f);
                let v_next = self.x.get(order[k + 1], f);
                if v_next <= v {
                    continue;
                }
                let wr = w_tot - wl;
                let impurity =
                    wl * Self::gini(wl_pos, wl) + wr * Self::gini(w_pos_tot - wl_pos, wr);
                let better = match &best {
                    None => true,
                    Some(b) => impurity < b.impurity,
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: 0.5 * (v + v_next),
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>) -> u32 {
        let w_tot: f64 = idx.iter().map(|&i| self.w[i]).sum();
        let w_pos: f64 = idx.iter().filter(|&&i| self.y[i]).map(|&i| self.w[i]).sum();
        let prob = if w_tot > 0.0 { w_pos / w_tot } else { 0.0 };

        let pure = idx.iter().all(|&i| self.y[i]) || idx.iter().all(|&i| !self.y[i]);
        if pure || idx.len() < 2 {
            self.nodes.push(Node::Leaf { prob });
            return (self.nodes.len() - 1) as u32;
        }

        let f_total = self.x.cols();
        let candidates: Vec<usize> = if self.m_try >= f_total {
            (0..f_total).collect()
        } else {
            // partial Fisher-Yates draw of m_try distinct features
            let rng = self.rng.as_mut().expect("feature subsampling needs an rng");
            let mut pool: Vec<usize> = (0..f_total).collect();
            for k in 0..self.m_try {
                let j = rng.random_range(k..f_total);
                pool.swap(k, j);
            }
            pool.truncate(self.m_try);
            pool
        };

        let mut split = self.scan(&idx, &candidates);
        if split.is_none() && self.m_try < f_total {
            // the random subset had no distinct values; fall back to a full
            // scan so consistent data still grows to purity
            let all: Vec<usize> = (0..f_total).collect();
            split = self.scan(&idx, &all);
        }
        let Some(split) = split else {
            self.nodes.push(Node::Leaf { prob });
            return (self.nodes.len() - 1) as u32;
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x.get(i, split.feature) <= split.threshold);

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { prob }); // placeholder
        let left = self.build(left_idx);
        let right = self.build(right_idx);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at as u32
    }
}

/// Fit a plain CART tree on all features.
pub(crate) fn fit_tree(x: &FeatureMatrix, y: &[bool], w: &[f64]) -> DecisionTree {
    let mut builder = Builder {
        x,
        y,
        w,
        nodes: Vec::new(),
        m_try: x.cols(),
        rng: None,
    };
    builder.build((0..x.rows()).collect());
    DecisionTree {
        nodes: builder.nodes,
    }
}

/// Bootstrap-bagged trees; per-class probability is the fraction of trees
/// voting positive (a tree votes positive when its leaf probability is at
/// least 0.5).
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    pub fn predict_prob(&self, row: &[f64]) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.predict_prob(row) >= 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    pub(crate) fn serialize_into(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        for t in &self.trees {
            t.serialize_into(buf);
        }
    }

    pub(crate) fn deserialize_from(buf: &[u8], cursor: &mut usize) -> Result<Self> {
        if buf.len() < *cursor + 4 {
            return Err(Error::parameter("truncated forest payload"));
        }
        let count =
            u32::from_le_bytes(buf[*cursor..*cursor + 4].try_into().unwrap()) as usize;
        *cursor += 4;
        let mut trees = Vec::with_capacity(count);
        for _ in 0..count {
            trees.push(DecisionTree::deserialize_from(buf, cursor)?);
        }
        Ok(Forest { trees })
    }
}

pub(crate) fn fit_forest(
    x: &FeatureMatrix,
    y: &[bool],
    w: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Forest {
    let n = x.rows();
    let f = x.cols();
    let m_try = params
        .m_try
        .unwrap_or_else(|| ((f as f64).sqrt().round() as usize).max(1))
        .min(f);
    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tree", t as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = Builder {
                x,
                y,
                w,
                nodes: Vec::new(),
                m_try,
                rng: Some(rng),
            };
            builder.build(idx);
            DecisionTree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Forest { trees }
}

// ===========================================================================
// Tests
// ===========================================================================
