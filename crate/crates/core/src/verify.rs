//! Property suites behind `uft verify`.
//!
//! Each property returns `Err(counterexample)` on the first violation it
//! finds. The fast level covers the structural and estimator invariants; the
//! full level adds the convergence-analysis checks and the
//! distributional tests that need millions of draws.

use std::f64::consts::PI;

use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::hint::{cosine_fraction, sample_binomial, sample_two_point, HintSchedule};
use crate::policy::{
    exact_pass_at_1, exact_q, exact_value, kl_div, kl_one_hot, mc_value, reach_table, sample_trajectory, softmax,
    value_table, LeafCounter, Policy,
};
use crate::trainer::{
    default_selection_samples, group_q_estimate, train, train_with, trajectory_update_logits, Preset, TrainConfig,
};
use crate::tree::{build_adversarial, NodeRef, SearchTree, ACCURACY_REWARD, FORMAT_REWARD, INCORRECT_REWARD};
use crate::{seeded_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

pub type Check = std::result::Result<(), String>;

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub outcome: Check,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

type Property = (&'static str, fn() -> Check);

const FAST: &[Property] = &[
    ("tree: node counts and parent/child inverse", tree_structure),
    ("policy: softmax normalization and shift invariance", softmax_invariants),
    ("policy: Bellman consistency", bellman_consistency),
    ("policy: reach-probability conservation", reach_conservation),
    ("policy: exact pass@1 matches rollouts", pass1_matches_rollouts),
    ("hint: cosine fraction monotone with exact endpoints", cosine_schedule),
    ("hint: two-point sampler has exact mean", two_point_mean),
    ("hint: binomial sampler mean", binomial_mean),
    ("hint: uniform sampler frequencies", uniform_frequencies),
    ("trainer: advantages centered, off-trajectory untouched", advantage_centering),
    ("trainer: updates keep distributions normalized", updates_normalized),
    ("trainer: zero schedule is update-identical to rft", zero_matches_rft),
    ("trainer: full schedule updates only the hint prefix", full_touches_prefix_only),
    ("trainer: exploration-only hints never update the prefix", r3_leaves_prefix),
    ("trainer: leaf accounting audit", leaf_accounting),
];

const FULL: &[Property] = &[
    ("analysis: regret decomposition", regret_decomposition),
    ("analysis: closed-form update equals simplex grid argmin", grid_argmin),
    ("analysis: one-step update bound", one_step_bound),
    ("analysis: KL bound against the reference", kl_reference_bound),
    ("analysis: per-node telescoping bound over a run", telescoping_bound),
    ("estimator: group Q unbiased at the start node", group_q_unbiased),
    ("estimator: value estimate concentration", mc_concentration),
    ("hint: binomial pmf chi-square", binomial_chi_square),
];

pub fn properties(level: Level) -> Vec<Property> {
    let mut all = FAST.to_vec();
    if level == Level::Full {
        all.extend_from_slice(FULL);
    }
    all
}

pub fn run_suite(level: Level) -> Vec<PropertyResult> {
    properties(level).into_iter().map(|(name, check)| PropertyResult { name, outcome: check() }).collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lift<T>(r: crate::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Tree with leaf rewards drawn from the three-level scheme.
pub fn random_tree(branching: usize, height: usize, rng: &mut Rng) -> SearchTree {
    let levels = [ACCURACY_REWARD, FORMAT_REWARD, INCORRECT_REWARD];
    let n = branching.pow(height as u32);
    let rewards = (0..n).map(|_| levels[rng.gen_range(0..3)]).collect();
    SearchTree::from_rewards(branching, height, rewards, None).expect("valid random tree")
}

/// Policy with logits uniform in `[-scale, scale]`.
pub fn random_policy(tree: &SearchTree, scale: f64, rng: &mut Rng) -> Policy {
    let logits = (0..tree.internal_count() * tree.branching()).map(|_| rng.gen_range(-scale..=scale)).collect();
    Policy::from_logits(tree, logits).expect("shape matches")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn one_hot(b: usize, a: usize) -> Vec<f64> {
    (0..b).map(|i| if i == a { 1.0 } else { 0.0 }).collect()
}

fn tree_structure() -> Check {
    for b in 2..=4 {
        for h in 1..=6 {
            let t = lift(SearchTree::from_rewards(b, h, vec![0.0; b.pow(h as u32)], None))?;
            let nodes: usize = (0..=h).map(|k| b.pow(k as u32)).sum();
            ensure(t.node_count() == nodes, || format!("B={b} H={h}: node_count {} != {nodes}", t.node_count()))?;
            for s in t.internal_nodes() {
                for a in 0..b {
                    let c = lift(t.transition(s, a))?;
                    ensure(c.parent(b) == Some(s), || format!("parent(T({s}, {a})) != {s}"))?;
                }
            }
        }
    }
    Ok(())
}

fn softmax_invariants() -> Check {
    let mut rng = seeded_rng(101, 0);
    for _ in 0..2000 {
        let b = rng.gen_range(2..=8);
        let x: Vec<f64> = (0..b).map(|_| rng.gen_range(-40.0..40.0)).collect();
        let c = rng.gen_range(-100.0..100.0);
        let p = softmax(&x);
        let q = softmax(&x.iter().map(|v| v + c).collect::<Vec<_>>());
        let sum: f64 = p.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || format!("logits {x:?}: sum {sum}"))?;
        let shift = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(shift <= 1e-12, || format!("logits {x:?} shifted by {c}: max diff {shift}"))?;
    }
    Ok(())
}

fn bellman_consistency() -> Check {
    let mut rng = seeded_rng(102, 0);
    for _ in 0..50 {
        let (b, h) = (rng.gen_range(2..=3), rng.gen_range(1..=4));
        let tree = random_tree(b, h, &mut rng);
        let pi = random_policy(&tree, 3.0, &mut rng);
        for s in tree.internal_nodes() {
            let v = lift(exact_value(&pi, &tree, s))?;
            let q: Vec<f64> =
                (0..b).map(|a| exact_q(&pi, &tree, s, a)).collect::<crate::Result<_>>().map_err(|e| e.to_string())?;
            let pv = dot(&lift(pi.action_probs(s))?, &q);
            ensure((v - pv).abs() <= 1e-12, || format!("B={b} H={h} node {s}: V={v} but <pi,Q>={pv}"))?;
        }
    }
    Ok(())
}

fn reach_conservation() -> Check {
    let mut rng = seeded_rng(103, 0);
    for _ in 0..50 {
        let (b, h) = (rng.gen_range(2..=3), rng.gen_range(1..=4));
        let tree = random_tree(b, h, &mut rng);
        let pi = random_policy(&tree, 3.0, &mut rng);
        let mu = reach_table(&pi, &tree);
        for k in 0..=h {
            let mass: f64 = tree.nodes_at(k).map(|s| mu[tree.dense_index(s)]).sum();
            ensure((mass - 1.0).abs() <= 1e-12, || format!("B={b} H={h}: reach mass {mass} at height {k}"))?;
        }
        for s in tree.internal_nodes() {
            let probs = lift(pi.action_probs(s))?;
            for (a, p) in probs.iter().enumerate() {
                let child = lift(tree.transition(s, a))?;
                let lhs = mu[tree.dense_index(child)];
                let rhs = mu[tree.dense_index(s)] * p;
                ensure((lhs - rhs).abs() <= 1e-12, || format!("mu({child}) = {lhs} != mu({s}) pi = {rhs}"))?;
            }
        }
    }
    Ok(())
}

fn pass1_matches_rollouts() -> Check {
    let mut rng = seeded_rng(104, 0);
    let tree = lift(build_adversarial(2, 4, 2, 0.5, 5))?;
    let pi = random_policy(&tree, 1.5, &mut rng);
    let exact = exact_pass_at_1(&pi, &tree);
    let n = 100_000;
    let mut hits = 0usize;
    for _ in 0..n {
        let traj = lift(sample_trajectory(&pi, &tree, NodeRef::ROOT, &mut rng))?;
        if tree.is_optimal_leaf(traj.terminal_leaf.index) {
            hits += 1;
        }
    }
    let rate = hits as f64 / n as f64;
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    ensure((rate - exact).abs() <= 4.0 * se, || format!("exact {exact}, empirical {rate}, se {se}"))
}

/// Checks that `fraction(t, T_hint, p_low, p_high)` is nonincreasing on
/// `[0, T_hint)` with `p_high`-side start and exact `p_low` at `T_hint - 1`.
/// The counterexample names the offending `(t, p)`.
pub fn check_cosine_monotone<F>(fraction: F) -> Check
where
    F: Fn(usize, usize, f64, f64) -> f64,
{
    let cases = [(0.05, 0.95, 300), (0.0, 1.0, 10), (0.3, 0.3, 7), (0.2, 0.9, 1), (0.0, 0.5, 2)];
    for (lo, hi, steps) in cases {
        let mut prev = f64::INFINITY;
        for t in 0..steps {
            let p = fraction(t, steps, lo, hi);
            ensure(p <= prev + 1e-15, || {
                format!("(t={t}, p={p}) rises above {prev} (p_low={lo}, p_high={hi}, T_hint={steps})")
            })?;
            ensure((lo - 1e-15..=hi + 1e-15).contains(&p), || format!("(t={t}, p={p}) outside [{lo}, {hi}]"))?;
            prev = p;
        }
        let last = fraction(steps - 1, steps, lo, hi);
        ensure((last - lo).abs() <= 1e-12, || format!("(t={}, p={last}) misses p_low={lo}", steps - 1))?;
    }
    Ok(())
}

fn cosine_schedule() -> Check {
    check_cosine_monotone(|t, n, lo, hi| cosine_fraction(t, n, lo, hi).unwrap_or(f64::NAN))?;
    let s = HintSchedule::CosineBinomial { p_low: 0.05, p_high: 0.95, hint_steps: 300 };
    let mut rng = seeded_rng(105, 0);
    for t in [300, 301, 1000] {
        ensure(s.sample_length(t, 8, &mut rng) == 0, || format!("(t={t}) hint after T_hint"))?;
    }
    Ok(())
}

fn two_point_mean() -> Check {
    // Exact expectation of the two-point law.
    for length in 0..=12usize {
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let m = p * length as f64;
            let n = m.floor();
            let expected = if n as usize >= length { n } else { n * (n + 1.0 - m) + (n + 1.0) * (m - n) };
            ensure((expected - m).abs() <= 1e-12, || format!("L={length} p={p}: E[l]={expected} != {m}"))?;
        }
    }
    let mut rng = seeded_rng(106, 0);
    let (length, p, n) = (7, 0.37, 100_000);
    let mean = (0..n).map(|_| sample_two_point(length, p, &mut rng) as f64).sum::<f64>() / n as f64;
    let m = p * length as f64;
    let var = (m - m.floor()) * (1.0 - (m - m.floor()));
    let se = (var / n as f64).sqrt();
    ensure((mean - m).abs() <= 4.0 * se, || format!("two-point L={length} p={p}: mean {mean} vs {m}"))
}

fn binomial_mean() -> Check {
    let mut rng = seeded_rng(107, 0);
    let (length, p, n) = (5, 0.4, 100_000);
    let mean = (0..n).map(|_| sample_binomial(length, p, &mut rng) as f64).sum::<f64>() / n as f64;
    let se = (length as f64 * p * (1.0 - p) / n as f64).sqrt();
    ensure((mean - 2.0).abs() <= 4.0 * se, || format!("binomial L=5 p=0.4: mean {mean}, se {se}"))?;
    for l in 0..=10 {
        ensure(sample_binomial(l, 0.0, &mut rng) == 0 && sample_binomial(l, 1.0, &mut rng) == l, || {
            format!("degenerate binomial at L={l}")
        })?;
    }
    Ok(())
}

fn uniform_frequencies() -> Check {
    let mut rng = seeded_rng(108, 0);
    let (length, n) = (6usize, 100_000usize);
    let mut counts = vec![0usize; length + 1];
    for t in 0..n {
        counts[HintSchedule::Uniform.sample_length(t, length, &mut rng)] += 1;
    }
    let p = 1.0 / (length + 1) as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for (l, c) in counts.iter().enumerate() {
        let f = *c as f64 / n as f64;
        ensure((f - p).abs() <= 4.0 * se, || format!("uniform l={l}: frequency {f} vs {p}"))?;
    }
    Ok(())
}

fn advantage_centering() -> Check {
    let tree = lift(build_adversarial(3, 3, 1, 0.5, 9))?;
    let cfg = TrainConfig::preset(Preset::R3, &tree, 60, 4);
    let mut failure = None;
    lift(train_with(&cfg, &tree, |report, before, after| {
        if failure.is_some() {
            return;
        }
        for e in &report.estimates {
            let c = dot(&before.action_probs(e.node).unwrap(), &e.advantage);
            if c.abs() > 1e-12 {
                failure = Some(format!("t={} node {}: <pi, A> = {c}", report.t, e.node));
                return;
            }
        }
        for s in tree.internal_nodes() {
            let on_traj = report.estimates.iter().any(|e| e.node == s);
            if !on_traj && before.logits(s).unwrap() != after.logits(s).unwrap() {
                failure = Some(format!("t={} node {s} moved without being on the trajectory", report.t));
                return;
            }
        }
    }))?;
    failure.map_or(Ok(()), Err)
}

fn updates_normalized() -> Check {
    let tree = lift(build_adversarial(2, 3, 1, 0.5, 2))?;
    for preset in [Preset::UftPractical, Preset::Sft, Preset::Rft] {
        let cfg = TrainConfig::preset(preset, &tree, 200, 8);
        let mut failure = None;
        lift(train_with(&cfg, &tree, |report, _, after| {
            for s in tree.internal_nodes() {
                let sum: f64 = after.action_probs(s).unwrap().iter().sum();
                if failure.is_none() && (sum - 1.0).abs() > 1e-12 {
                    failure = Some(format!("{preset} t={} node {s}: mass {sum}", report.t));
                }
            }
        }))?;
        if let Some(f) = failure {
            return Err(f);
        }
    }
    Ok(())
}

fn zero_matches_rft() -> Check {
    let tree = lift(build_adversarial(2, 4, 1, 0.5, 3))?;
    let rft = TrainConfig::preset(Preset::Rft, &tree, 100, 21);
    let mut zeroed = TrainConfig::preset(Preset::UftPractical, &tree, 100, 21);
    zeroed.schedule = HintSchedule::CosineBinomial { p_low: 0.0, p_high: 0.0, hint_steps: 300 };
    let a = lift(train(&rft, &tree))?;
    let b = lift(train(&zeroed, &tree))?;
    ensure(a.policy == b.policy, || "final policies differ".into())?;
    for (x, y) in a.metrics.records.iter().zip(&b.metrics.records) {
        ensure(x == y, || format!("step {} differs: {x:?} vs {y:?}", x.t))?;
    }
    Ok(())
}

fn full_touches_prefix_only() -> Check {
    let tree = lift(build_adversarial(2, 3, 1, 0.5, 4))?;
    let path = tree.optimal_path();
    let cfg = TrainConfig::preset(Preset::Sft, &tree, 50, 1);
    let mut failure = None;
    lift(train_with(&cfg, &tree, |report, before, after| {
        for s in tree.internal_nodes() {
            let on_prefix = path.nodes[..tree.height()].contains(&s);
            if !on_prefix && failure.is_none() && before.logits(s).unwrap() != after.logits(s).unwrap() {
                failure = Some(format!("t={} off-prefix node {s} updated", report.t));
            }
        }
    }))?;
    failure.map_or(Ok(()), Err)
}

fn r3_leaves_prefix() -> Check {
    let tree = lift(build_adversarial(2, 4, 1, 0.5, 6))?;
    let path = tree.optimal_path();
    let cfg = TrainConfig::preset(Preset::R3, &tree, 100, 2);
    let mut failure = None;
    lift(train_with(&cfg, &tree, |report, before, after| {
        let start = path.nodes[report.hint_length];
        if failure.is_none() && report.trajectory.steps.first().is_some_and(|(s, _)| *s != start) {
            failure = Some(format!("t={} trajectory does not start at the hinted node {start}", report.t));
        }
        for &s in &path.nodes[..report.hint_length] {
            if failure.is_none() && before.logits(s).unwrap() != after.logits(s).unwrap() {
                failure = Some(format!("t={} prefix node {s} updated", report.t));
            }
        }
    }))?;
    failure.map_or(Ok(()), Err)
}

fn leaf_accounting() -> Check {
    let tree = lift(build_adversarial(2, 3, 1, 0.5, 7))?;
    for preset in [Preset::UftTheory, Preset::UftPractical] {
        let cfg = TrainConfig::preset(preset, &tree, 40, 3);
        let out = lift(train(&cfg, &tree))?;
        let m = &out.metrics;
        let per_step: u64 = m.records.iter().map(|r| r.leaves_step).sum();
        ensure(per_step == m.leaves_total, || {
            format!("{preset}: per-step sum {per_step} != total {}", m.leaves_total)
        })?;
        let mut prev = (0, 0);
        for r in &m.records {
            ensure(r.leaves_total >= prev.0 && r.leaves_distinct >= prev.1, || {
                format!("{preset}: counters decreased at t={}", r.t)
            })?;
            ensure(r.leaves_distinct <= r.leaves_total, || format!("{preset}: distinct > total at t={}", r.t))?;
            prev = (r.leaves_total, r.leaves_distinct);
        }
    }
    Ok(())
}

fn regret_decomposition() -> Check {
    let mut rng = seeded_rng(201, 0);
    for instance in 0..20 {
        let (b, h) = (rng.gen_range(2..=3), rng.gen_range(1..=4));
        let tree = random_tree(b, h, &mut rng);
        let comparator = random_policy(&tree, 2.0, &mut rng);
        let iterates: Vec<Policy> = (0..5).map(|_| random_policy(&tree, 2.0, &mut rng)).collect();
        let v_cmp = lift(exact_value(&comparator, &tree, NodeRef::ROOT))?;
        let mu = reach_table(&comparator, &tree);
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for pi in &iterates {
            lhs += v_cmp - lift(exact_value(pi, &tree, NodeRef::ROOT))?;
            let v = value_table(pi, &tree);
            for s in tree.internal_nodes() {
                let q: Vec<f64> = (0..b).map(|a| v[tree.dense_index(s.child(b, a))]).collect();
                let diff: Vec<f64> = lift(comparator.action_probs(s))?
                    .iter()
                    .zip(lift(pi.action_probs(s))?)
                    .map(|(x, y)| x - y)
                    .collect();
                rhs += mu[tree.dense_index(s)] * dot(&q, &diff);
            }
        }
        ensure((lhs - rhs).abs() <= 1e-9, || format!("instance {instance} (B={b}, H={h}): {lhs} vs {rhs}"))?;
    }
    Ok(())
}

/// Regularized objective minimized by the trajectory-node update.
fn proximal_objective(pi: &[f64], adv: &[f64], reference: &[f64], old: &[f64], eta: f64, beta: f64) -> f64 {
    let kl = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
    };
    -dot(adv, pi) + beta * kl(pi, reference) + kl(pi, old) / eta
}

fn grid_argmin() -> Check {
    let mut rng = seeded_rng(202, 0);
    for instance in 0..100 {
        let theta: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta_ref: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let adv: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta = rng.gen_range(0.05..2.0);
        let beta = rng.gen_range(0.0..1.0);
        let closed = softmax(&trajectory_update_logits(&theta, &adv, &theta_ref, eta, beta));
        let (old, reference) = (softmax(&theta), softmax(&theta_ref));
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let x = k as f64 * 1e-4;
            let f = proximal_objective(&[x, 1.0 - x], &adv, &reference, &old, eta, beta);
            if f < best.0 {
                best = (f, x);
            }
        }
        let err = (closed[0] - best.1).abs();
        ensure(err <= 2e-4, || format!("instance {instance}: closed form {:?}, grid argmin x={}", closed, best.1))?;
    }
    Ok(())
}

fn one_step_bound() -> Check {
    let mut rng = seeded_rng(203, 0);
    for instance in 0..1000 {
        let b = rng.gen_range(2..=6);
        let theta: Vec<f64> = (0..b).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let theta_ref: Vec<f64> = (0..b).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let adv: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eta = rng.gen_range(0.01..2.0);
        let beta = rng.gen_range(0.0..1.0);
        let star = rng.gen_range(0..b);
        let new = trajectory_update_logits(&theta, &adv, &theta_ref, eta, beta);
        let (p_old, p_new) = (softmax(&theta), softmax(&new));
        let lhs = eta * (adv[star] - dot(&adv, &p_new));
        let rhs = kl_one_hot(star, &theta) - kl_one_hot(star, &new) - lift(kl_div(&p_new, &p_old))?
            + eta * beta * kl_one_hot(star, &theta_ref);
        ensure(lhs <= rhs + 1e-9, || {
            format!("instance {instance} (B={b}, a*={star}, eta={eta}, beta={beta}): {lhs} > {rhs}")
        })?;
    }
    Ok(())
}

fn kl_reference_bound() -> Check {
    let mut rng = seeded_rng(204, 0);
    for instance in 0..10_000 {
        let b = rng.gen_range(2..=8);
        let radius = rng.gen_range(0.0..=3.0);
        let theta_ref: Vec<f64> = (0..b).map(|_| rng.gen_range(-radius..=radius)).collect();
        let norm = theta_ref.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let bound = (b as f64).ln() + 2.0 * norm;
        for a in 0..b {
            let kl = kl_one_hot(a, &theta_ref);
            ensure(kl <= bound, || {
                format!("instance {instance}: KL(e_{a} || pi_ref) = {kl} > {bound} for {theta_ref:?}")
            })?;
        }
    }
    Ok(())
}

fn telescoping_bound() -> Check {
    for seed in 0..10u64 {
        for h in 1..=2 {
            let tree = lift(build_adversarial(2, h, 1, 0.5, seed))?;
            let steps = 200;
            let cfg = TrainConfig::preset(Preset::UftTheory, &tree, steps, seed);
            let actions = tree.optimal_actions();
            let internal: Vec<NodeRef> = tree.internal_nodes().collect();
            let mut sums = vec![0.0; internal.len()];
            lift(train_with(&cfg, &tree, |report, before, _| {
                for (k, &s) in internal.iter().enumerate() {
                    let adv = report.advantage_at(s, 2);
                    let star = one_hot(2, actions[tree.dense_index(s)]);
                    let probs = before.action_probs(s).unwrap();
                    sums[k] += adv.iter().zip(star.iter().zip(&probs)).map(|(a, (x, y))| a * (x - y)).sum::<f64>();
                }
            }))?;
            let reference = cfg.reference_policy(&tree);
            for (k, &s) in internal.iter().enumerate() {
                let kl = kl_one_hot(actions[tree.dense_index(s)], lift(reference.logits(s))?);
                let bound = (1.0 / cfg.eta + cfg.beta * steps as f64) * kl + 2.0 * cfg.eta * steps as f64;
                ensure(sums[k] <= bound + 1e-9, || format!("seed {seed} H={h} node {s}: {} > {bound}", sums[k]))?;
            }
        }
    }
    Ok(())
}

fn group_q_unbiased() -> Check {
    let mut rng = seeded_rng(205, 0);
    let tree = SearchTree::from_rewards(2, 2, vec![1.0, 0.1, 0.0, 0.1], None).map_err(|e| e.to_string())?;
    let pi = lift(Policy::from_logits(&tree, vec![0.3, -0.4, 1.0, -1.0, -0.2, 0.5]))?;
    let mut counter = LeafCounter::new(&tree);
    let n = 100_000;
    let mut sums = [0.0f64; 2];
    let mut squares = [0.0f64; 2];
    for _ in 0..n {
        let q = lift(group_q_estimate(&pi, &tree, NodeRef::ROOT, &mut rng, &mut counter))?;
        for a in 0..2 {
            sums[a] += q[a];
            squares[a] += q[a] * q[a];
        }
    }
    for a in 0..2 {
        let mean = sums[a] / n as f64;
        let var = squares[a] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let exact = lift(exact_q(&pi, &tree, NodeRef::ROOT, a))?;
        ensure((mean - exact).abs() <= 4.0 * se, || format!("action {a}: mean {mean} vs Q {exact} (se {se})"))?;
    }
    Ok(())
}

fn mc_concentration() -> Check {
    let mut rng = seeded_rng(206, 0);
    let tree = lift(build_adversarial(2, 4, 2, 0.5, 1))?;
    let pi = random_policy(&tree, 1.0, &mut rng);
    let exact = lift(exact_value(&pi, &tree, NodeRef::ROOT))?;
    let n = default_selection_samples(500, tree.gap());
    let mut counter = LeafCounter::new(&tree);
    let reps = 1000;
    let mut inside = 0;
    for _ in 0..reps {
        if (lift(mc_value(&pi, &tree, n, &mut rng, &mut counter))? - exact).abs() <= tree.gap() / 12.0 {
            inside += 1;
        }
    }
    ensure(inside * 100 >= 85 * reps, || format!("only {inside}/{reps} estimates within gap/12"))
}

fn binomial_pmf(l: usize, p: f64, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (l - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((l - k) as i32)
}

/// Chi-square p-value of observed counts against `expected_p`, pooling
/// cells with expected count below 5 into their neighbor.
pub fn chi_square_p_value(counts: &[u64], expected_p: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pending = (0.0, 0.0);
    for (c, p) in counts.iter().zip(expected_p) {
        pending.0 += *c as f64;
        pending.1 += p * n as f64;
        if pending.1 >= 5.0 {
            cells.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.1 > 0.0 || pending.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
            }
            None => cells.push(pending),
        }
    }
    if cells.len() < 2 {
        return 1.0;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    ChiSquared::new((cells.len() - 1) as f64).map_or(0.0, |d| d.sf(stat))
}

fn binomial_chi_square() -> Check {
    let mut rng = seeded_rng(207, 0);
    for l in [1usize, 2, 5, 10] {
        for p in [0.1, 0.5, 0.9] {
            let mut counts = vec![0u64; l + 1];
            for _ in 0..1_000_000 {
                counts[sample_binomial(l, p, &mut rng)] += 1;
            }
            let pmf: Vec<f64> = (0..=l).map(|k| binomial_pmf(l, p, k)).collect();
            let pv = chi_square_p_value(&counts, &pmf);
            ensure(pv > 0.001, || format!("L={l} p={p}: chi-square p-value {pv}"))?;
        }
    }
    Ok(())
}

/// Flipped-sign cosine used to demonstrate the monotonicity check.
pub fn rising_cosine(t: usize, hint_steps: usize, p_low: f64, p_high: f64) -> f64 {
    let phase = (t + 1) as f64 / hint_steps as f64 * PI;
    p_low + 0.5 * (p_high - p_low) * (1.0 - phase.cos())
}
