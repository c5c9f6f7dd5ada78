//! Tabular softmax policies over a [`SearchTree`].
//!
//! Logits are stored densely, `B` per internal node in breadth-first order.
//! Deterministic policies use saturated finite logits rather than infinities.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::tree::{NodeRef, SearchTree};

/// Logit magnitude used to represent deterministic choices.
pub const SATURATED_LOGIT: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    branching: usize,
    height: usize,
    logits: Vec<f64>,
}

impl Policy {
    /// All-zero logits: the uniform policy.
    pub fn uniform(tree: &SearchTree) -> Self {
        Policy {
            branching: tree.branching(),
            height: tree.height(),
            logits: vec![0.0; tree.internal_count() * tree.branching()],
        }
    }

    pub fn from_logits(tree: &SearchTree, logits: Vec<f64>) -> Result<Self> {
        let expected = tree.internal_count() * tree.branching();
        if logits.len() != expected {
            return Err(invalid(format!("expected {expected} logits, got {}", logits.len())));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(invalid("logits must be finite"));
        }
        Ok(Policy { branching: tree.branching(), height: tree.height(), logits })
    }

    /// Policy that picks `actions[dense]` at every internal node with
    /// probability `1 - O(e^-60)`.
    pub fn deterministic(tree: &SearchTree, actions: &[usize]) -> Result<Self> {
        if actions.len() != tree.internal_count() {
            return Err(invalid("one action per internal node required"));
        }
        let b = tree.branching();
        let mut logits = vec![-SATURATED_LOGIT; actions.len() * b];
        for (node, &a) in actions.iter().enumerate() {
            if a >= b {
                return Err(invalid(format!("action {a} out of range")));
            }
            logits[node * b + a] = SATURATED_LOGIT;
        }
        Ok(Policy { branching: b, height: tree.height(), logits })
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn raw_logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn matches(&self, tree: &SearchTree) -> bool {
        self.branching == tree.branching() && self.height == tree.height()
    }

    fn slot(&self, s: NodeRef) -> Result<usize> {
        if s.height >= self.height {
            return Err(invalid(format!("node {s} is a leaf and has no action distribution")));
        }
        let width = self.branching.pow(s.height as u32);
        if s.index >= width {
            return Err(invalid(format!("node {s} is not in the tree")));
        }
        let offset = (width - 1) / (self.branching - 1);
        Ok((offset + s.index) * self.branching)
    }

    pub fn logits(&self, s: NodeRef) -> Result<&[f64]> {
        let k = self.slot(s)?;
        Ok(&self.logits[k..k + self.branching])
    }

    pub fn set_logits(&mut self, s: NodeRef, values: &[f64]) -> Result<()> {
        if values.len() != self.branching {
            return Err(invalid("logit vector length must equal B"));
        }
        let k = self.slot(s)?;
        self.logits[k..k + self.branching].copy_from_slice(values);
        Ok(())
    }

    pub fn action_probs(&self, s: NodeRef) -> Result<Vec<f64>> {
        Ok(softmax(self.logits(s)?))
    }

    pub fn log_probs(&self, s: NodeRef) -> Result<Vec<f64>> {
        Ok(log_softmax(self.logits(s)?))
    }

    /// `max |θ(s, a)|`.
    pub fn max_abs_logit(&self) -> f64 {
        self.logits.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// One line per internal node: dense index followed by its `B` logits.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        for (node, chunk) in self.logits.chunks(self.branching).enumerate() {
            write!(out, "{node}").unwrap();
            for x in chunk {
                write!(out, " {x:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_snapshot(tree: &SearchTree, text: &str) -> Result<Self> {
        let b = tree.branching();
        let mut logits = vec![f64::NAN; tree.internal_count() * b];
        let mut rows = 0;
        for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |m: &str| invalid(format!("snapshot line {}: {m}", lineno + 1));
            let mut fields = line.split_whitespace();
            let node: usize = fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| bad("missing node index"))?;
            if node >= tree.internal_count() {
                return Err(bad("node index out of range"));
            }
            let row: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad logit"))?;
            if row.len() != b {
                return Err(bad("wrong number of logits"));
            }
            logits[node * b..(node + 1) * b].copy_from_slice(&row);
            rows += 1;
        }
        if rows != tree.internal_count() {
            return Err(invalid(format!(
                "snapshot has {rows} rows, tree has {} internal nodes",
                tree.internal_count()
            )));
        }
        Policy::from_logits(tree, logits)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// `KL(p || q)` in nats. Zero entries of `p` contribute nothing.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid(format!("KL of vectors with lengths {} and {}", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::Domain(format!("KL support violation at index {i}: p={pi}, q={qi}")));
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total.max(0.0))
}

/// `KL(softmax(x) || softmax(y))`, evaluated in log space.
pub fn kl_logits(x: &[f64], y: &[f64]) -> f64 {
    let lx = log_softmax(x);
    let ly = log_softmax(y);
    lx.iter().zip(&ly).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

/// `KL(one_hot(a) || softmax(y)) = -log softmax(y)[a]`.
pub fn kl_one_hot(action: usize, y: &[f64]) -> f64 {
    -log_softmax(y)[action]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_height: usize,
    /// `(node, action)` pairs from `start_height` to `H - 1`.
    pub steps: Vec<(NodeRef, usize)>,
    pub terminal_leaf: NodeRef,
    pub terminal_reward: f64,
}

pub fn sample_trajectory<R: rand::Rng + ?Sized>(
    policy: &Policy,
    tree: &SearchTree,
    start: NodeRef,
    rng: &mut R,
) -> Result<Trajectory> {
    if !tree.contains(start) || !policy.matches(tree) {
        return Err(invalid(format!("cannot roll out from {start}")));
    }
    let mut steps = Vec::with_capacity(tree.height() - start.height);
    let mut s = start;
    while !tree.is_leaf(s) {
        let a = sample_index(&policy.action_probs(s)?, rng);
        steps.push((s, a));
        s = s.child(tree.branching(), a);
    }
    Ok(Trajectory { start_height: start.height, steps, terminal_leaf: s, terminal_reward: tree.reward(s)? })
}

/// Cheap rollout returning only the terminal leaf.
pub(crate) fn rollout_leaf<R: rand::Rng + ?Sized>(
    policy: &Policy,
    tree: &SearchTree,
    start: NodeRef,
    rng: &mut R,
) -> NodeRef {
    let b = tree.branching();
    let mut s = start;
    let mut probs = vec![0.0; b];
    while s.height < tree.height() {
        let logits = policy.logits(s).expect("rollout stays inside the tree");
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (p, x) in probs.iter_mut().zip(logits) {
            *p = (x - max).exp();
            total += *p;
        }
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut a = b - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                a = i;
                break;
            }
        }
        s = s.child(b, a);
    }
    s
}

/// Expected value of `leaf_value` under `policy` from every node of the
/// subtree rooted at `root`, bottom-up. Returns the value at `root`.
fn subtree_value(policy: &Policy, tree: &SearchTree, root: NodeRef, leaf_value: impl Fn(usize) -> f64) -> f64 {
    let b = tree.branching();
    let span = tree.width(tree.height() - root.height);
    let first_leaf = root.index * span;
    let mut level: Vec<f64> = (first_leaf..first_leaf + span).map(&leaf_value).collect();
    for h in (root.height..tree.height()).rev() {
        let width = level.len() / b;
        let first = root.index * tree.width(h - root.height);
        let mut next = Vec::with_capacity(width);
        for i in 0..width {
            let probs = policy.action_probs(NodeRef::new(h, first + i)).expect("internal node");
            next.push(probs.iter().zip(&level[i * b..(i + 1) * b]).map(|(p, v)| p * v).sum());
        }
        level = next;
    }
    level[0]
}

/// `V^π(s)` by exact backward induction.
pub fn exact_value(policy: &Policy, tree: &SearchTree, s: NodeRef) -> Result<f64> {
    if !tree.contains(s) || !policy.matches(tree) {
        return Err(invalid(format!("node {s} is not in the tree")));
    }
    Ok(subtree_value(policy, tree, s, |i| tree.leaf_rewards()[i]))
}

/// `Q^π(s, a) = V^π(T(s, a))`.
pub fn exact_q(policy: &Policy, tree: &SearchTree, s: NodeRef, action: usize) -> Result<f64> {
    let child = tree.transition(s, action)?;
    exact_value(policy, tree, child)
}

/// Values of every node in dense order.
pub fn value_table(policy: &Policy, tree: &SearchTree) -> Vec<f64> {
    let b = tree.branching();
    let mut values = vec![0.0; tree.node_count()];
    let leaf_base = tree.internal_count();
    values[leaf_base..].copy_from_slice(tree.leaf_rewards());
    for h in (0..tree.height()).rev() {
        for s in tree.nodes_at(h) {
            let child0 = tree.dense_index(s.child(b, 0));
            let probs = policy.action_probs(s).expect("internal node");
            values[tree.dense_index(s)] = probs.iter().enumerate().map(|(a, p)| p * values[child0 + a]).sum();
        }
    }
    values
}

/// `μ^π(s)`: probability of reaching `s` from the root.
pub fn reach_prob(policy: &Policy, tree: &SearchTree, s: NodeRef) -> Result<f64> {
    if !tree.contains(s) || !policy.matches(tree) {
        return Err(invalid(format!("node {s} is not in the tree")));
    }
    let b = tree.branching();
    let mut mu = 1.0;
    let mut node = s;
    while let Some(parent) = node.parent(b) {
        mu *= policy.action_probs(parent)?[node.index % b];
        node = parent;
    }
    Ok(mu)
}

/// Reach probabilities of every node in dense order.
pub fn reach_table(policy: &Policy, tree: &SearchTree) -> Vec<f64> {
    let b = tree.branching();
    let mut mu = vec![0.0; tree.node_count()];
    mu[0] = 1.0;
    for s in tree.internal_nodes() {
        let here = mu[tree.dense_index(s)];
        let child0 = tree.dense_index(s.child(b, 0));
        for (a, p) in policy.action_probs(s).expect("internal node").into_iter().enumerate() {
            mu[child0 + a] = here * p;
        }
    }
    mu
}

/// Probability that one root rollout ends on an optimal-reward leaf.
pub fn exact_pass_at_1(policy: &Policy, tree: &SearchTree) -> f64 {
    subtree_value(policy, tree, NodeRef::ROOT, |i| if tree.is_optimal_leaf(i) { 1.0 } else { 0.0 })
}

/// Running count of leaf visits, with multiplicity and distinct.
#[derive(Debug, Clone, Default)]
pub struct LeafCounter {
    total: u64,
    distinct: u64,
    seen: Vec<bool>,
}

impl LeafCounter {
    pub fn new(tree: &SearchTree) -> Self {
        LeafCounter { total: 0, distinct: 0, seen: vec![false; tree.leaf_count()] }
    }

    pub fn record(&mut self, leaf: NodeRef) {
        self.total += 1;
        if let Some(flag) = self.seen.get_mut(leaf.index) {
            if !*flag {
                *flag = true;
                self.distinct += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> u64 {
        self.distinct
    }
}

/// Mean terminal reward of `n` root rollouts; each rollout is a leaf visit.
pub fn mc_value<R: rand::Rng + ?Sized>(
    policy: &Policy,
    tree: &SearchTree,
    n: usize,
    rng: &mut R,
    counter: &mut LeafCounter,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("mc_value needs at least one sample"));
    }
    if !policy.matches(tree) {
        return Err(invalid("policy shape does not match tree"));
    }
    let mut total = 0.0;
    for _ in 0..n {
        let leaf = rollout_leaf(policy, tree, NodeRef::ROOT, rng);
        counter.record(leaf);
        total += tree.leaf_rewards()[leaf.index];
    }
    Ok(total / n as f64)
}
