//! Complete `B`-ary search trees with verifier rewards on the leaves.
//!
//! Nodes are addressed implicitly by `(height, index)`; only the leaf rewards
//! are stored. Child `a` of `(h, i)` is `(h + 1, i * B + a)`.

mod countdown;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;

use crate::error::{invalid, Error, Result};

pub use countdown::build_countdown;

/// Reward of an optimal leaf under the three-level reward scheme.
pub const ACCURACY_REWARD: f64 = 1.0;
/// Reward of a well-formed but wrong leaf.
pub const FORMAT_REWARD: f64 = 0.1;
/// Reward of a malformed leaf.
pub const INCORRECT_REWARD: f64 = 0.0;
/// Sub-optimality gap of the three-level scheme (1.0 - 0.1).
pub const SCHEME_GAP: f64 = ACCURACY_REWARD - FORMAT_REWARD;

/// Largest number of leaves a tree may have.
pub const MAX_LEAVES: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub height: usize,
    pub index: usize,
}

impl NodeRef {
    pub const ROOT: NodeRef = NodeRef { height: 0, index: 0 };

    pub fn new(height: usize, index: usize) -> Self {
        NodeRef { height, index }
    }

    /// Child `action` for branching factor `branching`, without range checks.
    pub fn child(self, branching: usize, action: usize) -> NodeRef {
        NodeRef { height: self.height + 1, index: self.index * branching + action }
    }

    pub fn parent(self, branching: usize) -> Option<NodeRef> {
        if self.height == 0 {
            None
        } else {
            Some(NodeRef { height: self.height - 1, index: self.index / branching })
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(h={}, i={})", self.height, self.index)
    }
}

/// Reconstructible description of a tree, one line of plain text.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeSpec {
    Adversarial { branching: usize, height: usize, optimal_leaves: usize, format_fraction: f64, seed: u64 },
    Countdown { numbers: Vec<i64>, target: i64 },
}

impl TreeSpec {
    pub fn build(&self) -> Result<SearchTree> {
        match self {
            TreeSpec::Adversarial { branching, height, optimal_leaves, format_fraction, seed } => {
                build_adversarial(*branching, *height, *optimal_leaves, *format_fraction, *seed)
            }
            TreeSpec::Countdown { numbers, target } => build_countdown(numbers, *target),
        }
    }

    pub fn flavor(&self) -> &'static str {
        match self {
            TreeSpec::Adversarial { .. } => "adversarial",
            TreeSpec::Countdown { .. } => "countdown",
        }
    }
}

impl fmt::Display for TreeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeSpec::Adversarial { branching, height, optimal_leaves, format_fraction, seed } => write!(
                f,
                "flavor=adversarial B={branching} H={height} K={optimal_leaves} format_fraction={format_fraction} seed={seed}"
            ),
            TreeSpec::Countdown { numbers, target } => {
                let nums: Vec<String> = numbers.iter().map(|n| n.to_string()).collect();
                write!(f, "flavor=countdown numbers={} target={target}", nums.join(","))
            }
        }
    }
}

impl FromStr for TreeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut flavor = None;
        let mut fields = std::collections::HashMap::new();
        for token in s.split_whitespace() {
            let (k, v) =
                token.split_once('=').ok_or_else(|| invalid(format!("tree record token without '=': {token}")))?;
            if k == "flavor" {
                flavor = Some(v.to_string());
            } else if fields.insert(k.to_string(), v.to_string()).is_some() {
                return Err(invalid(format!("duplicate tree record field {k}")));
            }
        }
        fn take<T: FromStr>(fields: &mut std::collections::HashMap<String, String>, key: &str) -> Result<T> {
            let raw = fields.remove(key).ok_or_else(|| invalid(format!("tree record missing {key}")))?;
            raw.parse().map_err(|_| invalid(format!("tree record field {key} has bad value {raw}")))
        }
        let spec = match flavor.as_deref() {
            Some("adversarial") => TreeSpec::Adversarial {
                branching: take(&mut fields, "B")?,
                height: take(&mut fields, "H")?,
                optimal_leaves: take(&mut fields, "K")?,
                format_fraction: take(&mut fields, "format_fraction")?,
                seed: take(&mut fields, "seed")?,
            },
            Some("countdown") => {
                let raw: String = take(&mut fields, "numbers")?;
                let numbers = raw
                    .split(',')
                    .map(|n| n.trim().parse::<i64>().map_err(|_| invalid(format!("bad countdown number {n}"))))
                    .collect::<Result<Vec<_>>>()?;
                TreeSpec::Countdown { numbers, target: take(&mut fields, "target")? }
            }
            Some(other) => return Err(invalid(format!("unknown tree flavor {other}"))),
            None => return Err(invalid("tree record missing flavor")),
        };
        if let Some(k) = fields.keys().next() {
            return Err(invalid(format!("unknown tree record field {k}")));
        }
        Ok(spec)
    }
}

/// Immutable complete `B`-ary tree of height `H`.
#[derive(Debug, Clone)]
pub struct SearchTree {
    branching: usize,
    height: usize,
    leaf_rewards: Vec<f64>,
    optimal_reward: f64,
    gap: f64,
    spec: Option<TreeSpec>,
}

impl SearchTree {
    /// Tree with explicit leaf rewards. With `gap = None` the gap is measured
    /// from the rewards (or [`SCHEME_GAP`] when every leaf is optimal).
    pub fn from_rewards(branching: usize, height: usize, leaf_rewards: Vec<f64>, gap: Option<f64>) -> Result<Self> {
        let leaves = leaf_count(branching, height)?;
        if leaf_rewards.len() != leaves {
            return Err(invalid(format!("expected {leaves} leaf rewards, got {}", leaf_rewards.len())));
        }
        if let Some(r) = leaf_rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid(format!("leaf reward {r} outside [0, 1]")));
        }
        let optimal_reward = leaf_rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let runner_up = leaf_rewards
            .iter()
            .copied()
            .filter(|&r| r < optimal_reward)
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
        let gap = match (gap, runner_up) {
            (Some(g), Some(second)) => {
                if second > optimal_reward - g + 1e-12 {
                    return Err(invalid(format!(
                        "gap {g} violated: suboptimal reward {second} vs optimal {optimal_reward}"
                    )));
                }
                g
            }
            (Some(g), None) => g,
            (None, Some(second)) => optimal_reward - second,
            (None, None) => SCHEME_GAP,
        };
        if gap.is_nan() || gap <= 0.0 {
            return Err(invalid(format!("gap must be positive, got {gap}")));
        }
        Ok(SearchTree { branching, height, leaf_rewards, optimal_reward, gap, spec: None })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn optimal_reward(&self) -> f64 {
        self.optimal_reward
    }

    /// Sub-optimality gap Δ.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn spec(&self) -> Option<&TreeSpec> {
        self.spec.as_ref()
    }

    pub fn leaf_rewards(&self) -> &[f64] {
        &self.leaf_rewards
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_rewards.len()
    }

    /// Nodes at `height`, i.e. `B^height`.
    pub fn width(&self, height: usize) -> usize {
        self.branching.pow(height as u32)
    }

    pub fn node_count(&self) -> usize {
        self.offset(self.height + 1)
    }

    pub fn internal_count(&self) -> usize {
        self.offset(self.height)
    }

    /// Number of nodes above `height`: `(B^height - 1) / (B - 1)`.
    fn offset(&self, height: usize) -> usize {
        (self.width(height) - 1) / (self.branching - 1)
    }

    /// Breadth-first position of a node.
    pub fn dense_index(&self, s: NodeRef) -> usize {
        self.offset(s.height) + s.index
    }

    /// Inverse of [`SearchTree::dense_index`].
    pub fn node_at(&self, dense: usize) -> NodeRef {
        let mut height = 0;
        while self.offset(height + 1) <= dense {
            height += 1;
        }
        NodeRef::new(height, dense - self.offset(height))
    }

    pub fn is_leaf(&self, s: NodeRef) -> bool {
        s.height == self.height
    }

    pub fn contains(&self, s: NodeRef) -> bool {
        s.height <= self.height && s.index < self.width(s.height)
    }

    /// Internal nodes at one height, in index order.
    pub fn nodes_at(&self, height: usize) -> impl Iterator<Item = NodeRef> {
        (0..self.width(height)).map(move |i| NodeRef::new(height, i))
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        (0..self.height).flat_map(move |h| self.nodes_at(h))
    }

    pub fn transition(&self, s: NodeRef, action: usize) -> Result<NodeRef> {
        if !self.contains(s) {
            return Err(invalid(format!("node {s} is not in the tree")));
        }
        if self.is_leaf(s) {
            return Err(invalid(format!("transition from leaf {s}")));
        }
        if action >= self.branching {
            return Err(invalid(format!("action {action} out of range for B={}", self.branching)));
        }
        Ok(s.child(self.branching, action))
    }

    pub fn reward(&self, leaf: NodeRef) -> Result<f64> {
        if !self.is_leaf(leaf) || !self.contains(leaf) {
            return Err(invalid(format!("reward requested at non-leaf {leaf}")));
        }
        Ok(self.leaf_rewards[leaf.index])
    }

    pub fn is_optimal_leaf(&self, index: usize) -> bool {
        self.leaf_rewards[index] == self.optimal_reward
    }

    pub fn optimal_leaf_count(&self) -> usize {
        self.leaf_rewards.iter().filter(|&&r| r == self.optimal_reward).count()
    }

    /// Optimal deterministic action at every internal node (dense order),
    /// by backward induction with ties broken towards the lowest action.
    pub fn optimal_actions(&self) -> Vec<usize> {
        let b = self.branching;
        let mut actions = vec![0; self.internal_count()];
        let mut below = self.leaf_rewards.clone();
        for h in (0..self.height).rev() {
            let width = self.width(h);
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                let children = &below[i * b..(i + 1) * b];
                let mut best = 0;
                for (a, &v) in children.iter().enumerate() {
                    if v > children[best] {
                        best = a;
                    }
                }
                actions[self.offset(h) + i] = best;
                values.push(children[best]);
            }
            below = values;
        }
        actions
    }

    pub fn optimal_path(&self) -> OptimalPath {
        let actions_all = self.optimal_actions();
        let mut nodes = vec![NodeRef::ROOT];
        let mut actions = Vec::with_capacity(self.height);
        let mut s = NodeRef::ROOT;
        for _ in 0..self.height {
            let a = actions_all[self.dense_index(s)];
            actions.push(a);
            s = s.child(self.branching, a);
            nodes.push(s);
        }
        OptimalPath { nodes, actions }
    }
}

/// Root-to-leaf path of the optimal deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimalPath {
    pub nodes: Vec<NodeRef>,
    pub actions: Vec<usize>,
}

impl OptimalPath {
    pub fn leaf(&self) -> NodeRef {
        *self.nodes.last().expect("path always holds the root")
    }
}

fn leaf_count(branching: usize, height: usize) -> Result<usize> {
    if branching < 2 {
        return Err(invalid(format!("branching factor must be >= 2, got {branching}")));
    }
    if height < 1 {
        return Err(invalid(format!("height must be >= 1, got {height}")));
    }
    u32::try_from(height)
        .ok()
        .and_then(|h| branching.checked_pow(h))
        .filter(|&n| n <= MAX_LEAVES)
        .ok_or_else(|| invalid(format!("tree with B={branching}, H={height} exceeds {MAX_LEAVES} leaves")))
}

/// Random hard instance: `optimal_leaves` leaves drawn uniformly get the
/// accuracy reward, a `format_fraction` share of the rest gets the format
/// reward and everything else gets nothing.
pub fn build_adversarial(
    branching: usize,
    height: usize,
    optimal_leaves: usize,
    format_fraction: f64,
    seed: u64,
) -> Result<SearchTree> {
    let leaves = leaf_count(branching, height)?;
    if optimal_leaves < 1 || optimal_leaves > leaves {
        return Err(invalid(format!("K must be in [1, {leaves}], got {optimal_leaves}")));
    }
    if !(0.0..=1.0).contains(&format_fraction) {
        return Err(invalid(format!("format_fraction must be in [0, 1], got {format_fraction}")));
    }
    let mut rng = crate::seeded_rng(seed, 0);
    let mut rewards = vec![INCORRECT_REWARD; leaves];
    let rest = leaves - optimal_leaves;
    let formatted = (format_fraction * rest as f64).floor() as usize;
    // One draw orders the targets first and then the format leaves.
    let picks = sample(&mut rng, leaves, optimal_leaves + formatted);
    for (n, leaf) in picks.into_iter().enumerate() {
        rewards[leaf] = if n < optimal_leaves { ACCURACY_REWARD } else { FORMAT_REWARD };
    }
    let mut tree = SearchTree::from_rewards(branching, height, rewards, Some(SCHEME_GAP))?;
    tree.spec = Some(TreeSpec::Adversarial { branching, height, optimal_leaves, format_fraction, seed });
    Ok(tree)
}

pub(crate) fn with_spec(mut tree: SearchTree, spec: TreeSpec) -> SearchTree {
    tree.spec = Some(spec);
    tree
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversarial_counts() {
        let t = build_adversarial(2, 3, 1, 0.5, 7).unwrap();
        let count = |r: f64| t.leaf_rewards().iter().filter(|&&x| x == r).count();
        assert_eq!(t.leaf_count(), 8);
        assert_eq!((count(1.0), count(0.1), count(0.0)), (1, 3, 4));
        assert_eq!(t.gap(), 0.9);

        let t = build_adversarial(3, 2, 1, 1.0, 3).unwrap();
        let count = |r: f64| t.leaf_rewards().iter().filter(|&&x| x == r).count();
        assert_eq!((count(1.0), count(0.1), count(0.0)), (1, 8, 0));

        let t = build_adversarial(2, 1, 2, 0.0, 0).unwrap();
        assert!(t.leaf_rewards().iter().all(|&r| r == 1.0));
    }

    #[test]
    fn adversarial_rejects_bad_parameters() {
        assert!(matches!(build_adversarial(2, 3, 9, 0.5, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_adversarial(1, 3, 1, 0.5, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_adversarial(2, 0, 1, 0.5, 0), Err(Error::InvalidParameter(_))));
        assert!(build_adversarial(2, 3, 0, 0.5, 0).is_err());
    }

    #[test]
    fn transitions() {
        let t2 = build_adversarial(2, 3, 1, 0.5, 0).unwrap();
        assert_eq!(t2.transition(NodeRef::new(0, 0), 1).unwrap(), NodeRef::new(1, 1));
        assert_eq!(t2.transition(NodeRef::new(1, 1), 0).unwrap(), NodeRef::new(2, 2));
        let t3 = build_adversarial(3, 2, 1, 0.5, 0).unwrap();
        assert_eq!(t3.transition(NodeRef::new(1, 2), 2).unwrap(), NodeRef::new(2, 8));
        assert!(t3.transition(NodeRef::new(2, 0), 0).is_err());
        assert!(t3.transition(NodeRef::new(0, 0), 3).is_err());
    }

    #[test]
    fn reward_levels() {
        let t = build_adversarial(2, 3, 1, 0.5, 7).unwrap();
        let path = t.optimal_path();
        assert_eq!(t.reward(path.leaf()).unwrap(), 1.0);
        let format_leaf = t.leaf_rewards().iter().position(|&r| r == 0.1).unwrap();
        assert_eq!(t.reward(NodeRef::new(3, format_leaf)).unwrap(), 0.1);
        let bad_leaf = t.leaf_rewards().iter().position(|&r| r == 0.0).unwrap();
        assert_eq!(t.reward(NodeRef::new(3, bad_leaf)).unwrap(), 0.0);
        assert!(t.reward(NodeRef::new(1, 0)).is_err());
    }

    #[test]
    fn optimal_path_small_cases() {
        let t = SearchTree::from_rewards(2, 1, vec![0.1, 1.0], None).unwrap();
        assert_eq!(t.optimal_path().actions, vec![1]);
        let t = SearchTree::from_rewards(2, 1, vec![1.0, 1.0], None).unwrap();
        assert_eq!(t.optimal_path().actions, vec![0]);
    }

    #[test]
    fn dense_index_roundtrip() {
        let t = build_adversarial(3, 3, 1, 0.5, 1).unwrap();
        for d in 0..t.node_count() {
            assert_eq!(t.dense_index(t.node_at(d)), d);
        }
    }

    #[test]
    fn spec_record_roundtrip() {
        let spec = TreeSpec::Adversarial { branching: 2, height: 4, optimal_leaves: 1, format_fraction: 0.5, seed: 11 };
        let line = spec.to_string();
        assert_eq!(line, "flavor=adversarial B=2 H=4 K=1 format_fraction=0.5 seed=11");
        assert_eq!(line.parse::<TreeSpec>().unwrap(), spec);
        let a = spec.build().unwrap();
        let b = line.parse::<TreeSpec>().unwrap().build().unwrap();
        assert_eq!(a.leaf_rewards(), b.leaf_rewards());

        let cd = TreeSpec::Countdown { numbers: vec![3, 5, 7, 13], target: 24 };
        assert_eq!(cd.to_string().parse::<TreeSpec>().unwrap(), cd);
        assert!("flavor=adversarial B=2".parse::<TreeSpec>().is_err());
        assert!("flavor=maze B=2".parse::<TreeSpec>().is_err());
    }
}
