//! CART regression trees and their leaf-box representation.
//!
//! A point goes to the left child iff `x[feature] < threshold`, so every leaf
//! covers a half-open box `[lower, upper)` and the leaves of a tree partition
//! `ℝ^p` exactly.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{complement, Dataset};
use crate::seed;
use crate::{Error, Result};

/// Sentinel for "no bounding split" in [`BoundTerm`].
const UNBOUNDED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `max(1, ⌊p/3⌋)`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 5,
            mtry: None,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }
}

/// One leaf: the box `[lower, upper)` and the leaf mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constant: f64,
}

impl LeafRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| lo <= v && v < hi)
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: usize,
    },
}

/// A finite side of a leaf box along one feature, as indices of the split
/// nodes supplying the lower and upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BoundTerm {
    pub lower: u32,
    pub upper: u32,
}

impl BoundTerm {
    pub fn lower(self) -> Option<usize> {
        (self.lower != UNBOUNDED).then_some(self.lower as usize)
    }

    pub fn upper(self) -> Option<usize> {
        (self.upper != UNBOUNDED).then_some(self.upper as usize)
    }
}

/// A fitted regression tree.
///
/// Besides the node array and the leaf boxes, the tree keeps, per leaf, the
/// list of split nodes that bound it. Smoothing evaluates one kernel CDF per
/// split node and assembles every leaf probability from those.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    n_features: usize,
    nodes: Vec<Node>,
    leaves: Vec<LeafRegion>,
    in_bag: Vec<usize>,
    oob: Vec<usize>,
    terms: Vec<BoundTerm>,
    term_offsets: Vec<usize>,
}

impl FittedTree {
    /// Reassembles a tree from its parts, checking that the nodes and leaf
    /// boxes describe the same partition.
    pub fn from_parts(
        n_features: usize,
        nodes: Vec<Node>,
        leaves: Vec<LeafRegion>,
        in_bag: Vec<usize>,
        oob: Vec<usize>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::Malformed(m));
        if nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut leaf_seen = vec![false; leaves.len()];
        for node in &nodes {
            match *node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features || !threshold.is_finite() {
                        return bad(format!("bad split on feature {feature} at {threshold}"));
                    }
                    if left >= nodes.len() || right >= nodes.len() {
                        return bad("split child index out of range".into());
                    }
                }
                Node::Leaf { leaf } => match leaf_seen.get_mut(leaf) {
                    Some(seen) if !*seen => *seen = true,
                    _ => return bad(format!("leaf index {leaf} missing or repeated")),
                },
            }
        }
        if leaf_seen.iter().any(|s| !s) {
            return bad("leaf not referenced by any node".into());
        }
        for leaf in &leaves {
            if leaf.dims() != n_features || leaf.upper.len() != n_features {
                return bad("leaf box dimension mismatch".into());
            }
            if !leaf.constant.is_finite() {
                return bad("non-finite leaf constant".into());
            }
        }
        let (terms, term_offsets, derived) = compile_bounds(n_features, &nodes, leaves.len())
            .ok_or_else(|| Error::Malformed("node graph is not a tree".into()))?;
        for (leaf, (lo, hi)) in leaves.iter().zip(&derived) {
            if leaf.lower != *lo || leaf.upper != *hi {
                return bad("leaf box disagrees with split nodes".into());
            }
        }
        Ok(Self {
            n_features,
            nodes,
            leaves,
            in_bag,
            oob,
            terms,
            term_offsets,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[LeafRegion] {
        &self.leaves
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Rows the tree was fitted on, with bootstrap repetitions.
    pub fn in_bag(&self) -> &[usize] {
        &self.in_bag
    }

    /// Rows of the training dataset not used by this tree, sorted.
    pub fn oob(&self) -> &[usize] {
        &self.oob
    }

    /// Index of the leaf reached by following the splits.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    /// The unsmoothed prediction: the constant of the leaf containing `x`.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.leaves[self.leaf_index(x)].constant
    }

    /// Same as [`predict_raw`](Self::predict_raw), by scanning leaf boxes.
    pub fn predict_by_membership(&self, x: &[f64]) -> Option<f64> {
        self.leaves
            .iter()
            .find(|l| l.contains(x))
            .map(|l| l.constant)
    }

    /// The leaf boxes with their constants.
    pub fn extract_leaf_regions(&self) -> Vec<LeafRegion> {
        self.leaves.clone()
    }

    pub(crate) fn leaf_terms(&self, leaf: usize) -> &[BoundTerm] {
        &self.terms[self.term_offsets[leaf]..self.term_offsets[leaf + 1]]
    }

    /// The tree with every threshold moved by `offset[feature]`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => Node::Split {
                    feature,
                    threshold: threshold + offset[feature],
                    left,
                    right,
                },
                leaf => leaf,
            })
            .collect();
        let leaves = self
            .leaves
            .iter()
            .map(|l| LeafRegion {
                lower: l.lower.iter().zip(offset).map(|(a, d)| a + d).collect(),
                upper: l.upper.iter().zip(offset).map(|(a, d)| a + d).collect(),
                constant: l.constant,
            })
            .collect();
        Self {
            nodes,
            leaves,
            ..self.clone()
        }
    }
}

type Boxes = Vec<(Vec<f64>, Vec<f64>)>;
/// Bound terms, lower corner and upper corner of one leaf.
type LeafBounds = (Vec<BoundTerm>, Vec<f64>, Vec<f64>);

/// Walks the node graph from the root and derives, per leaf, its box and the
/// flattened list of bounding split nodes. Returns `None` if the graph is not
/// a tree rooted at node 0 covering every node exactly once.
fn compile_bounds(
    p: usize,
    nodes: &[Node],
    n_leaves: usize,
) -> Option<(Vec<BoundTerm>, Vec<usize>, Boxes)> {
    let mut per_leaf: Vec<Option<LeafBounds>> = vec![None; n_leaves];
    let mut visited = vec![false; nodes.len()];
    let mut stack = vec![(
        0usize,
        vec![UNBOUNDED; p],
        vec![UNBOUNDED; p],
        vec![f64::NEG_INFINITY; p],
        vec![f64::INFINITY; p],
    )];
    while let Some((i, lo_src, hi_src, lo, hi)) = stack.pop() {
        if std::mem::replace(visited.get_mut(i)?, true) {
            return None;
        }
        match nodes[i] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if !(lo[feature] < threshold && threshold < hi[feature]) {
                    return None;
                }
                let (mut l_hi_src, mut l_hi) = (hi_src.clone(), hi.clone());
                l_hi_src[feature] = i as u32;
                l_hi[feature] = threshold;
                let (mut r_lo_src, mut r_lo) = (lo_src.clone(), lo.clone());
                r_lo_src[feature] = i as u32;
                r_lo[feature] = threshold;
                stack.push((right, r_lo_src, hi_src, r_lo, hi));
                stack.push((left, lo_src, l_hi_src, lo, l_hi));
            }
            Node::Leaf { leaf } => {
                let terms = lo_src
                    .iter()
                    .zip(&hi_src)
                    .filter(|(&l, &u)| l != UNBOUNDED || u != UNBOUNDED)
                    .map(|(&lower, &upper)| BoundTerm { lower, upper })
                    .collect();
                *per_leaf.get_mut(leaf)? = Some((terms, lo, hi));
            }
        }
    }
    if visited.iter().any(|v| !v) {
        return None;
    }
    let mut terms = Vec::new();
    let mut offsets = vec![0];
    let mut boxes = Vec::with_capacity(n_leaves);
    for entry in per_leaf {
        let (t, lo, hi) = entry?;
        terms.extend(t);
        offsets.push(terms.len());
        boxes.push((lo, hi));
    }
    Some((terms, offsets, boxes))
}

/// Fits a CART regression tree on `rows` (a multiset of row indices).
///
/// Splits minimise the within-node sum of squared errors over `mtry` randomly
/// chosen features; the threshold is the midpoint between the two adjacent
/// distinct sorted values. Ties go to the lowest feature index, then the lowest
/// threshold. A node whose best split does not reduce the error becomes a
/// leaf. Rows of `dataset` absent from `rows` are recorded as out-of-bag.
pub fn fit_tree(dataset: &Dataset, rows: &[usize], params: &TreeParams) -> Result<FittedTree> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a tree on zero rows".into(),
        ));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument(
            "min_samples_leaf must be >= 1".into(),
        ));
    }
    let p = dataset.n_features();
    let mtry = params.resolved_mtry(p);
    if mtry == 0 || mtry > p {
        return Err(Error::InvalidArgument(format!(
            "mtry must be in 1..={p}, got {mtry}"
        )));
    }
    if let Some(&bad) = rows.iter().find(|&&i| i >= dataset.n_rows()) {
        return Err(Error::InvalidArgument(format!(
            "row index {bad} out of range"
        )));
    }

    let mut builder = Builder {
        data: dataset,
        params,
        mtry,
        rng: seed::rng(params.seed),
        nodes: Vec::new(),
        leaves: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    let mut work = rows.to_vec();
    let lower = vec![f64::NEG_INFINITY; p];
    let upper = vec![f64::INFINITY; p];
    builder.grow(&mut work, 0, lower, upper);

    let Builder { nodes, leaves, .. } = builder;
    let oob = complement(dataset.n_rows(), rows);
    let (terms, term_offsets, _) =
        compile_bounds(p, &nodes, leaves.len()).expect("grown nodes form a tree");
    Ok(FittedTree {
        n_features: p,
        nodes,
        leaves,
        in_bag: rows.to_vec(),
        oob,
        terms,
        term_offsets,
    })
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a TreeParams,
    mtry: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
    leaves: Vec<LeafRegion>,
    scratch: Vec<(f64, f64)>,
}

impl Builder<'_> {
    fn grow(
        &mut self,
        rows: &mut [usize],
        depth: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: usize::MAX });

        let split = if self.params.max_depth.is_some_and(|d| depth >= d) {
            None
        } else {
            self.best_split(rows)
        };

        match split {
            None => {
                let mean =
                    rows.iter().map(|&i| self.data.target(i)).sum::<f64>() / rows.len() as f64;
                self.nodes[id] = Node::Leaf {
                    leaf: self.leaves.len(),
                };
                self.leaves.push(LeafRegion {
                    lower,
                    upper,
                    constant: mean,
                });
            }
            Some(s) => {
                let data = self.data;
                // Stable partition keeps the recursion deterministic.
                let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&i| data.value(i, s.feature) < s.threshold);
                let mut l_upper = upper.clone();
                l_upper[s.feature] = s.threshold;
                let mut r_lower = lower.clone();
                r_lower[s.feature] = s.threshold;
                let l = self.grow(&mut left, depth + 1, lower, l_upper);
                let r = self.grow(&mut right, depth + 1, r_lower, upper);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Split> {
        let m = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        if m < 2 * min_leaf.max(1) || m < 2 {
            return None;
        }
        let first = self.data.target(rows[0]);
        if rows.iter().all(|&i| self.data.target(i) == first) {
            return None;
        }
        let mean = rows.iter().map(|&i| self.data.target(i)).sum::<f64>() / m as f64;
        let node_sse: f64 = rows
            .iter()
            .map(|&i| (self.data.target(i) - mean).powi(2))
            .sum();

        let p = self.data.n_features();
        let mut features = index::sample(&mut self.rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<Split> = None;
        for f in features {
            self.scratch.clear();
            self.scratch.extend(
                rows.iter()
                    .map(|&i| (self.data.value(i, f), self.data.target(i) - mean)),
            );
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = self.scratch.iter().map(|v| v.1).sum();
            let mut left_sum = 0.0;
            for i in 1..m {
                left_sum += self.scratch[i - 1].1;
                if i < min_leaf || m - i < min_leaf {
                    continue;
                }
                let (a, b) = (self.scratch[i - 1].0, self.scratch[i].0);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction for centred targets.
                let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (m - i) as f64
                    - total * total / m as f64;
                if best.is_none_or(|s| gain > s.gain) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold <= a {
                        threshold = b;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|s| s.gain > 1e-12 * node_sse && node_sse > 0.0)
    }
}
