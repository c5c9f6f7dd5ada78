//! Hint-guided training on a search tree.
//!
//! One step samples a hint length `l`, rolls a trajectory out from the `l`-th
//! node of the optimal path, estimates `Q` at every trajectory node with one
//! rollout per action, and applies closed-form mirror-descent updates:
//!
//! - trajectory nodes: `θ' = (θ + η Ã + η β θ_ref) / (1 + η β)`, the minimizer
//!   of `-⟨Ã, π⟩ + β KL(π ‖ π_ref) + KL(π ‖ π_old) / η`;
//! - hint nodes (when the log-likelihood term is on): `θ'(a*) = θ(a*) + η β / π_old(a*)`;
//! - every other node is left alone.
//!
//! `train` runs `T` such steps and returns either the last iterate or the
//! iterate with the best Monte-Carlo value estimate.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::hint::HintSchedule;
use crate::policy::{
    exact_pass_at_1, kl_logits, log_softmax, mc_value, rollout_leaf, sample_trajectory, LeafCounter, Policy, Trajectory,
};
use crate::tree::{NodeRef, OptimalPath, SearchTree};
use crate::{seeded_rng, Rng};

/// Floor on `π_old(a*)` in the hint-node update.
pub const MIN_HINT_PROB: f64 = 1e-12;

/// Hint-phase defaults shared by the cosine and staged presets.
pub const DEFAULT_P_LOW: f64 = 0.05;
pub const DEFAULT_P_HIGH: f64 = 0.95;
pub const DEFAULT_HINT_STEPS: usize = 300;
pub const DEFAULT_STEPS: usize = 500;
pub const DEFAULT_STAGES: usize = 5;

/// Step size shared by every preset except `uft-theory`. Small enough that
/// a leaf budget of a few hundred times the leaf count still binds.
pub const PRACTICAL_ETA: f64 = 0.01;
/// KL / log-likelihood weight of the practical presets.
pub const PRACTICAL_BETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Uniform hints, best-iterate selection, theory-compliant `η` and `β`.
    UftTheory,
    /// Cosine-annealed binomial hints with the log-likelihood term.
    UftPractical,
    /// No hints.
    Rft,
    /// Uniform hints, exploration only.
    R3,
    /// Stage-wise shrinking hints, exploration only.
    Staged,
    /// Full hints with the log-likelihood term.
    Sft,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::UftTheory, Preset::UftPractical, Preset::Rft, Preset::R3, Preset::Staged, Preset::Sft];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::UftTheory => "uft-theory",
            Preset::UftPractical => "uft-practical",
            Preset::Rft => "rft",
            Preset::R3 => "r3",
            Preset::Staged => "staged",
            Preset::Sft => "sft",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| invalid(format!("unknown preset {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Return the iterate maximizing a `samples`-rollout value estimate.
    BestIterate { samples: usize },
    /// Return the final iterate.
    LastIterate,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub preset: Preset,
    pub eta: f64,
    pub beta: f64,
    pub steps: usize,
    pub schedule: HintSchedule,
    /// Apply hint-node log-likelihood updates.
    pub hint_loglik: bool,
    pub seed: u64,
    pub selection: Selection,
    /// Reference logits; `None` means all zeros.
    pub reference: Option<Policy>,
    /// Stop before a step could push the leaf-visit count past this.
    pub leaf_budget: Option<u64>,
    /// Accept a `uft-theory` β above the convergence bound.
    pub allow_unsafe_beta: bool,
}

/// `Δ / (12 (H+1)^2 (ln B + 2 ‖θ_ref‖_∞))`.
pub fn default_beta(tree: &SearchTree, ref_logits_max: f64) -> f64 {
    let h1 = (tree.height() + 1) as f64;
    tree.gap() / (12.0 * h1 * h1 * ((tree.branching() as f64).ln() + 2.0 * ref_logits_max))
}

/// `ceil(72 ln(14 (T + 1)) / Δ^2)`.
pub fn default_selection_samples(steps: usize, gap: f64) -> usize {
    (72.0 * (14.0 * (steps as f64 + 1.0)).ln() / (gap * gap)).ceil() as usize
}

impl TrainConfig {
    /// Preset defaults for `tree`, with zero reference logits.
    pub fn preset(preset: Preset, tree: &SearchTree, steps: usize, seed: u64) -> Self {
        let cosine = HintSchedule::CosineBinomial {
            p_low: DEFAULT_P_LOW,
            p_high: DEFAULT_P_HIGH,
            hint_steps: DEFAULT_HINT_STEPS,
        };
        let (schedule, hint_loglik) = match preset {
            Preset::UftTheory => (HintSchedule::Uniform, true),
            Preset::UftPractical => (cosine, true),
            Preset::Rft => (HintSchedule::Zero, false),
            Preset::R3 => (HintSchedule::Uniform, false),
            Preset::Staged => (HintSchedule::Staged { stages: DEFAULT_STAGES, hint_steps: DEFAULT_HINT_STEPS }, false),
            Preset::Sft => (HintSchedule::Full, true),
        };
        let (eta, beta, selection) = match preset {
            Preset::UftTheory => (
                1.0 / (steps.max(1) as f64).sqrt(),
                default_beta(tree, 0.0),
                Selection::BestIterate { samples: default_selection_samples(steps, tree.gap()) },
            ),
            _ => (PRACTICAL_ETA, PRACTICAL_BETA, Selection::LastIterate),
        };
        TrainConfig {
            preset,
            eta,
            beta,
            steps,
            schedule,
            hint_loglik,
            seed,
            selection,
            reference: None,
            leaf_budget: None,
            allow_unsafe_beta: false,
        }
    }

    pub fn reference_policy(&self, tree: &SearchTree) -> Policy {
        self.reference.clone().unwrap_or_else(|| Policy::uniform(tree))
    }

    pub fn validate(&self, tree: &SearchTree) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be non-negative, got {}", self.beta)));
        }
        self.schedule.validate()?;
        if let Some(r) = &self.reference {
            if !r.matches(tree) {
                return Err(invalid("reference policy shape does not match tree"));
            }
        }
        if self.preset == Preset::UftTheory && !self.allow_unsafe_beta {
            let ref_max = self.reference.as_ref().map_or(0.0, Policy::max_abs_logit);
            let bound = default_beta(tree, ref_max);
            if self.beta > bound * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "beta {} exceeds the convergence bound {bound} for uft-theory (set allow_unsafe_beta to override)",
                    self.beta
                )));
            }
        }
        Ok(())
    }

    /// Largest number of leaf visits one step can consume.
    pub fn max_step_cost(&self, tree: &SearchTree) -> u64 {
        let selection = match self.selection {
            Selection::BestIterate { samples } => samples as u64,
            Selection::LastIterate => 0,
        };
        1 + (tree.branching() * tree.height()) as u64 + selection
    }
}

/// Estimates at one trajectory node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    pub node: NodeRef,
    pub q: Vec<f64>,
    pub advantage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: usize,
    pub hint_length: usize,
    pub trajectory: Trajectory,
    /// One entry per trajectory node, heights `l..H`.
    pub estimates: Vec<NodeEstimate>,
    pub objective: f64,
    pub leaves_explored: u64,
}

impl StepReport {
    /// `Ã(s, ·)`, zero off the trajectory.
    pub fn advantage_at(&self, s: NodeRef, branching: usize) -> Vec<f64> {
        self.estimates.iter().find(|e| e.node == s).map_or_else(|| vec![0.0; branching], |e| e.advantage.clone())
    }
}

/// One rollout from each child of `s`; entry `a` is its terminal reward.
pub fn group_q_estimate<R: rand::Rng + ?Sized>(
    policy: &Policy,
    tree: &SearchTree,
    s: NodeRef,
    rng: &mut R,
    counter: &mut LeafCounter,
) -> Result<Vec<f64>> {
    (0..tree.branching())
        .map(|a| {
            let child = tree.transition(s, a)?;
            let leaf = rollout_leaf(policy, tree, child, rng);
            counter.record(leaf);
            Ok(tree.leaf_rewards()[leaf.index])
        })
        .collect()
}

/// `Ã = Q̃ - ⟨π, Q̃⟩ 1`.
pub fn advantage_from_q(q: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if q.len() != probs.len() {
        return Err(invalid(format!("advantage of vectors with lengths {} and {}", q.len(), probs.len())));
    }
    let baseline: f64 = q.iter().zip(probs).map(|(q, p)| q * p).sum();
    Ok(q.iter().map(|q| q - baseline).collect())
}

/// Logits after the KL-proximal update at a trajectory node.
pub fn trajectory_update_logits(
    logits: &[f64],
    advantage: &[f64],
    ref_logits: &[f64],
    eta: f64,
    beta: f64,
) -> Vec<f64> {
    let scale = 1.0 + eta * beta;
    logits
        .iter()
        .zip(advantage)
        .zip(ref_logits)
        .map(|((theta, adv), reference)| (theta + eta * adv + eta * beta * reference) / scale)
        .collect()
}

/// Logits after the log-likelihood boost of the hinted action.
pub fn hint_update_logits(logits: &[f64], hinted: usize, eta: f64, beta: f64) -> Vec<f64> {
    let old = log_softmax(logits)[hinted].exp().max(MIN_HINT_PROB);
    let mut out = logits.to_vec();
    out[hinted] += eta * beta / old;
    out
}

/// Applies the trajectory-node update at `s`; returns the new distribution.
pub fn update_on_trajectory_node(
    policy: &mut Policy,
    s: NodeRef,
    advantage: &[f64],
    ref_logits: &[f64],
    eta: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let b = policy.branching();
    if advantage.len() != b || ref_logits.len() != b {
        return Err(invalid("advantage and reference vectors must have length B"));
    }
    let next = trajectory_update_logits(policy.logits(s)?, advantage, ref_logits, eta, beta);
    policy.set_logits(s, &next)?;
    policy.action_probs(s)
}

/// Applies the hint-node update at `s`; returns the new distribution.
pub fn update_on_hint_node(policy: &mut Policy, s: NodeRef, hinted: usize, eta: f64, beta: f64) -> Result<Vec<f64>> {
    if hinted >= policy.branching() {
        return Err(invalid(format!("hinted action {hinted} out of range")));
    }
    let next = hint_update_logits(policy.logits(s)?, hinted, eta, beta);
    policy.set_logits(s, &next)?;
    policy.action_probs(s)
}

/// Step objective `J`: advantage term and reference KL over the trajectory
/// plus the hint log-likelihood over `hint_prefix`.
pub fn objective_value(
    policy: &Policy,
    trajectory: &Trajectory,
    q_estimates: &[Vec<f64>],
    beta: f64,
    reference: &Policy,
    hint_prefix: &[(NodeRef, usize)],
) -> Result<f64> {
    if q_estimates.len() != trajectory.steps.len() {
        return Err(invalid("one Q estimate per trajectory node required"));
    }
    let mut total = 0.0;
    for (&(s, _), q) in trajectory.steps.iter().zip(q_estimates) {
        let probs = policy.action_probs(s)?;
        let adv = advantage_from_q(q, &probs)?;
        total += probs.iter().zip(&adv).map(|(p, a)| p * a).sum::<f64>();
        total -= beta * kl_logits(policy.logits(s)?, reference.logits(s)?);
    }
    for &(s, a) in hint_prefix {
        total += beta * policy.log_probs(s)?[a];
    }
    Ok(total)
}

/// One training step at iteration `t`.
#[allow(clippy::too_many_arguments)]
pub fn uft_step<R: rand::Rng + ?Sized>(
    policy: &mut Policy,
    tree: &SearchTree,
    path: &OptimalPath,
    t: usize,
    cfg: &TrainConfig,
    reference: &Policy,
    rng: &mut R,
    counter: &mut LeafCounter,
) -> Result<StepReport> {
    let before = counter.total();
    let hint_length = cfg.schedule.sample_length(t, tree.height(), rng);
    let trajectory = sample_trajectory(policy, tree, path.nodes[hint_length], rng)?;
    if !trajectory.steps.is_empty() {
        counter.record(trajectory.terminal_leaf);
    }

    let mut estimates = Vec::with_capacity(trajectory.steps.len());
    for &(s, _) in &trajectory.steps {
        let q = group_q_estimate(policy, tree, s, rng, counter)?;
        let advantage = advantage_from_q(&q, &policy.action_probs(s)?)?;
        estimates.push(NodeEstimate { node: s, q, advantage });
    }

    let hint_prefix: Vec<(NodeRef, usize)> =
        if cfg.hint_loglik { (0..hint_length).map(|h| (path.nodes[h], path.actions[h])).collect() } else { Vec::new() };
    let qs: Vec<Vec<f64>> = estimates.iter().map(|e| e.q.clone()).collect();
    let objective = objective_value(policy, &trajectory, &qs, cfg.beta, reference, &hint_prefix)?;

    for e in &estimates {
        update_on_trajectory_node(policy, e.node, &e.advantage, reference.logits(e.node)?, cfg.eta, cfg.beta)?;
    }
    for &(s, a) in &hint_prefix {
        update_on_hint_node(policy, s, a, cfg.eta, cfg.beta)?;
    }

    Ok(StepReport { t, hint_length, trajectory, estimates, objective, leaves_explored: counter.total() - before })
}

/// Per-step diagnostics; row `t` describes the policy after step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub hint_length: usize,
    pub pass1_exact: f64,
    /// Selection estimate of the post-step policy, when selection is on.
    pub v_tilde: Option<f64>,
    pub leaves_total: u64,
    pub leaves_distinct: u64,
    pub objective: f64,
    pub leaves_step: u64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub records: Vec<StepRecord>,
    pub initial_pass1: f64,
    pub initial_v_tilde: Option<f64>,
    /// Index `t̃*` of the returned iterate (0 = reference policy).
    pub selected: usize,
    pub final_pass1: f64,
    pub leaves_total: u64,
    pub leaves_distinct: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub metrics: RunMetrics,
}

pub fn train(cfg: &TrainConfig, tree: &SearchTree) -> Result<TrainOutcome> {
    train_with(cfg, tree, |_, _, _| {})
}

/// [`train`] with a callback receiving each report and the policies before
/// and after the step.
pub fn train_with<F>(cfg: &TrainConfig, tree: &SearchTree, mut on_step: F) -> Result<TrainOutcome>
where
    F: FnMut(&StepReport, &Policy, &Policy),
{
    cfg.validate(tree)?;
    let started = Instant::now();
    let reference = cfg.reference_policy(tree);
    let path = tree.optimal_path();
    let mut policy = reference.clone();
    let mut counter = LeafCounter::new(tree);
    let mut train_rng: Rng = seeded_rng(cfg.seed, 1);
    let mut select_rng: Rng = seeded_rng(cfg.seed, 2);

    let initial_pass1 = exact_pass_at_1(&policy, tree);
    let mut initial_v_tilde = None;
    let mut best: Option<(usize, f64, Policy)> = None;
    let mut records = Vec::with_capacity(cfg.steps.min(1 << 16));

    for t in 0..cfg.steps {
        if let Some(budget) = cfg.leaf_budget {
            if counter.total() + cfg.max_step_cost(tree) > budget {
                break;
            }
        }
        let before_total = counter.total();
        if let (0, Selection::BestIterate { samples }) = (t, cfg.selection) {
            let v = mc_value(&policy, tree, samples, &mut select_rng, &mut counter)?;
            initial_v_tilde = Some(v);
            best = Some((0, v, policy.clone()));
        }
        let previous = policy.clone();
        let report = uft_step(&mut policy, tree, &path, t, cfg, &reference, &mut train_rng, &mut counter)?;
        on_step(&report, &previous, &policy);

        let v_tilde = match cfg.selection {
            Selection::BestIterate { samples } => {
                let v = mc_value(&policy, tree, samples, &mut select_rng, &mut counter)?;
                if best.as_ref().is_none_or(|(_, bv, _)| v > *bv) {
                    best = Some((t + 1, v, policy.clone()));
                }
                Some(v)
            }
            Selection::LastIterate => None,
        };
        records.push(StepRecord {
            t,
            hint_length: report.hint_length,
            pass1_exact: exact_pass_at_1(&policy, tree),
            v_tilde,
            leaves_total: counter.total(),
            leaves_distinct: counter.distinct(),
            objective: report.objective,
            leaves_step: counter.total() - before_total,
        });
    }

    let (selected, returned) = match (cfg.selection, best) {
        (Selection::BestIterate { .. }, Some((t, _, p))) => (t, p),
        _ => (records.len(), policy),
    };
    let final_pass1 = exact_pass_at_1(&returned, tree);
    Ok(TrainOutcome {
        policy: returned,
        metrics: RunMetrics {
            records,
            initial_pass1,
            initial_v_tilde,
            selected,
            final_pass1,
            leaves_total: counter.total(),
            leaves_distinct: counter.distinct(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}
