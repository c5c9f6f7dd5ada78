//! Acceptance criteria 1-8. Each test prints one PASS/FAIL line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to see them.
//!
//! Oracles here are computed independently of the library's own exact
//! evaluators: values and reach probabilities are re-derived by brute-force
//! enumeration from the leaf rewards and the policy's action probabilities.

use rand::Rng;
use uft_sim::harness::{instance_seed, lowerbound_experiment};
use uft_sim::hint::{cosine_fraction, sample_binomial, sample_two_point, HintSchedule};
use uft_sim::policy::{mc_value, LeafCounter, Policy};
use uft_sim::trainer::{
    default_selection_samples, group_q_estimate, train, train_with, trajectory_update_logits, Preset, Selection,
    TrainConfig,
};
use uft_sim::tree::{build_adversarial, NodeRef, SearchTree};
use uft_sim::{mix_seed, seeded_rng};

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Probability of each leaf under root-started rollouts.
fn leaf_distribution(pi: &Policy, tree: &SearchTree) -> Vec<f64> {
    let (b, h) = (tree.branching(), tree.height());
    let mut mass = vec![1.0];
    for depth in 0..h {
        let mut next = vec![0.0; mass.len() * b];
        for (i, m) in mass.iter().enumerate() {
            let p = pi.action_probs(NodeRef::new(depth, i)).unwrap();
            for a in 0..b {
                next[i * b + a] = m * p[a];
            }
        }
        mass = next;
    }
    mass
}

fn oracle_pass1(pi: &Policy, tree: &SearchTree) -> f64 {
    let best = tree.leaf_rewards().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    leaf_distribution(pi, tree).iter().zip(tree.leaf_rewards()).filter(|(_, r)| **r == best).map(|(m, _)| m).sum()
}

/// `V^π(s)` by recursion over the subtree.
fn oracle_value(pi: &Policy, tree: &SearchTree, s: NodeRef) -> f64 {
    if s.height == tree.height() {
        return tree.leaf_rewards()[s.index];
    }
    let p = pi.action_probs(s).unwrap();
    (0..tree.branching())
        .map(|a| p[a] * oracle_value(pi, tree, NodeRef::new(s.height + 1, s.index * tree.branching() + a)))
        .sum()
}

fn oracle_q(pi: &Policy, tree: &SearchTree, s: NodeRef, a: usize) -> f64 {
    oracle_value(pi, tree, NodeRef::new(s.height + 1, s.index * tree.branching() + a))
}

/// Probability of reaching `s` from the root.
fn oracle_reach(pi: &Policy, tree: &SearchTree, s: NodeRef) -> f64 {
    let b = tree.branching();
    let mut prob = 1.0;
    let mut node = s;
    while node.height > 0 {
        let parent = NodeRef::new(node.height - 1, node.index / b);
        prob *= pi.action_probs(parent).unwrap()[node.index % b];
        node = parent;
    }
    prob
}

fn type7_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (slope, 1.0 - ss_res / ss_tot)
}

fn random_tree(b: usize, h: usize, rng: &mut uft_sim::Rng) -> SearchTree {
    let levels = [1.0, 0.1, 0.0];
    let rewards = (0..b.pow(h as u32)).map(|_| levels[rng.gen_range(0..3)]).collect();
    SearchTree::from_rewards(b, h, rewards, None).unwrap()
}

fn random_policy(tree: &SearchTree, scale: f64, rng: &mut uft_sim::Rng) -> Policy {
    let n = tree.internal_count() * tree.branching();
    Policy::from_logits(tree, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

#[test]
fn criterion_1_lower_bound() {
    let started = std::time::Instant::now();
    let mut ok = true;
    let mut detail = String::new();
    let (mut hs, mut log_medians) = (Vec::new(), Vec::new());
    for h in 3..=6usize {
        let summary = lowerbound_experiment(2, h, 1, 200, mix_seed(&[0, 2, h as u64])).unwrap();
        let hits: Vec<f64> = summary.first_hits.iter().map(|&x| x as f64).collect();
        let q25 = type7_quantile(&hits, 0.25);
        let median = type7_quantile(&hits, 0.5);
        assert!((q25 - summary.q25).abs() < 1e-12 && (median - summary.median).abs() < 1e-12);
        let floor = (1u64 << h) as f64 / 4.0;
        ok &= q25 >= floor;
        detail.push_str(&format!("H={h} q25={q25} (>= {floor}: {}) median={median}; ", q25 >= floor));
        hs.push(h as f64);
        log_medians.push(median.ln());
    }
    let (slope, r2) = least_squares(&hs, &log_medians);
    let ratio = slope / 2f64.ln();
    let fit_ok = (0.7..=1.3).contains(&ratio) && r2 >= 0.95;
    let secs = started.elapsed().as_secs_f64();
    detail.push_str(&format!("exp slope = {ratio:.3} ln2, r2 = {r2:.4}; {secs:.1}s"));
    report(1, "lower-bound reproduction", ok && fit_ok && secs <= 60.0, &detail);
}

#[test]
fn criterion_2_convergence() {
    let started = std::time::Instant::now();
    let steps = 2000;
    let mut ok = true;
    let mut detail = String::new();
    for h in 2..=4usize {
        let mut good = 0;
        let mut worst_ratio: f64 = 0.0;
        for seed in 0..10u64 {
            let tree = build_adversarial(2, h, 1, 0.5, instance_seed(seed, 2, h, 1)).unwrap();
            let cfg = TrainConfig::preset(Preset::UftTheory, &tree, steps, mix_seed(&[seed, 1]));
            let n = default_selection_samples(steps, 0.9);
            assert_eq!(cfg.selection, Selection::BestIterate { samples: n });
            assert!((cfg.eta - 1.0 / (steps as f64).sqrt()).abs() < 1e-15);
            let beta_formula = 0.9 / (12.0 * ((h + 1) * (h + 1)) as f64 * 2f64.ln());
            assert!((cfg.beta - beta_formula).abs() < 1e-15);
            let out = train(&cfg, &tree).unwrap();
            let pass1 = oracle_pass1(&out.policy, &tree);
            if pass1 >= 0.5 {
                good += 1;
            }
            let bound = ((2 * h + n) * steps) as u64;
            worst_ratio = worst_ratio.max(out.metrics.leaves_total as f64 / bound as f64);
            ok &= out.metrics.leaves_total <= bound;
        }
        ok &= good >= 8;
        detail.push_str(&format!("H={h}: {good}/10 with pass@1>=0.5, max leaves/(BH+N)T = {worst_ratio:.4}; "));
    }
    let secs = started.elapsed().as_secs_f64();
    detail.push_str(&format!("T={steps}, {secs:.1}s"));
    report(2, "uft-theory convergence", ok && secs <= 600.0, &detail);
}

#[test]
fn criterion_3_separation() {
    let started = std::time::Instant::now();
    let budget = 20_000;
    let mut medians = Vec::new();
    let mut budget_ok = true;
    for preset in [Preset::UftPractical, Preset::Rft] {
        let mut finals = Vec::new();
        for seed in 0..10u64 {
            let tree = build_adversarial(2, 6, 1, 0.5, instance_seed(seed, 2, 6, 1)).unwrap();
            let mut cfg = TrainConfig::preset(preset, &tree, usize::MAX, mix_seed(&[seed, 1]));
            cfg.leaf_budget = Some(budget);
            let out = train(&cfg, &tree).unwrap();
            budget_ok &= out.metrics.leaves_total <= budget;
            finals.push(oracle_pass1(&out.policy, &tree));
        }
        medians.push(type7_quantile(&finals, 0.5));
    }
    let gap = medians[0] - medians[1];
    let secs = started.elapsed().as_secs_f64();
    let detail = format!(
        "median pass@1 uft-practical {:.4}, rft {:.4}, gap {gap:.4} (need >= 0.3); budget respected: {budget_ok}; {secs:.1}s",
        medians[0], medians[1]
    );
    report(3, "separation at equal leaf budget", gap >= 0.3 && budget_ok && secs <= 600.0, &detail);
}

#[test]
fn criterion_4_regret_decomposition() {
    let mut rng = seeded_rng(4004, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (b, h) = (rng.gen_range(2..=3), rng.gen_range(1..=4));
        let tree = random_tree(b, h, &mut rng);
        let pi = random_policy(&tree, 2.0, &mut rng);
        let iterates: Vec<Policy> = (0..5).map(|_| random_policy(&tree, 2.0, &mut rng)).collect();
        let v = oracle_value(&pi, &tree, NodeRef::ROOT);
        let lhs: f64 = iterates.iter().map(|p| v - oracle_value(p, &tree, NodeRef::ROOT)).sum();
        let mut rhs = 0.0;
        for depth in 0..h {
            for i in 0..b.pow(depth as u32) {
                let s = NodeRef::new(depth, i);
                let mu = oracle_reach(&pi, &tree, s);
                let target = pi.action_probs(s).unwrap();
                for p in &iterates {
                    let cur = p.action_probs(s).unwrap();
                    rhs += mu * (0..b).map(|a| oracle_q(p, &tree, s, a) * (target[a] - cur[a])).sum::<f64>();
                }
            }
        }
        worst = worst.max((lhs - rhs).abs());
    }
    report(4, "regret decomposition", worst <= 1e-9, &format!("max |lhs - rhs| = {worst:.3e} over 20 instances"));
}

#[test]
fn criterion_5_update_rule() {
    let mut rng = seeded_rng(5005, 0);
    let kl = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
    };

    let mut worst_grid: f64 = 0.0;
    for _ in 0..100 {
        let theta: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta_ref: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let adv: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (eta, beta) = (rng.gen_range(0.05..2.0), rng.gen_range(0.0..1.0));
        let (old, reference) = (softmax(&theta), softmax(&theta_ref));
        let objective =
            |pi: &[f64]| -(adv[0] * pi[0] + adv[1] * pi[1]) + beta * kl(pi, &reference) + kl(pi, &old) / eta;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let x = k as f64 * 1e-4;
            let f = objective(&[x, 1.0 - x]);
            if f < best.0 {
                best = (f, x);
            }
        }
        let closed = softmax(&trajectory_update_logits(&theta, &adv, &theta_ref, eta, beta));
        worst_grid = worst_grid.max((closed[0] - best.1).abs()).max((closed[1] - (1.0 - best.1)).abs());
    }

    let mut worst_slack = f64::INFINITY;
    for _ in 0..1000 {
        let b = rng.gen_range(2..=6);
        let theta: Vec<f64> = (0..b).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let theta_ref: Vec<f64> = (0..b).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let adv: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (eta, beta) = (rng.gen_range(0.01..2.0), rng.gen_range(0.0..1.0));
        let star = rng.gen_range(0..b);
        let (old, reference) = (softmax(&theta), softmax(&theta_ref));
        let new = softmax(&trajectory_update_logits(&theta, &adv, &theta_ref, eta, beta));
        let lhs = eta * (adv[star] - adv.iter().zip(&new).map(|(a, p)| a * p).sum::<f64>());
        let rhs = -old[star].ln() + new[star].ln() - kl(&new, &old) - eta * beta * reference[star].ln();
        worst_slack = worst_slack.min(rhs - lhs);
    }
    let ok = worst_grid <= 2e-4 && worst_slack >= -1e-9;
    report(
        5,
        "update-rule equivalence",
        ok,
        &format!("max grid deviation {worst_grid:.2e} (<= 2e-4); min one-step slack {worst_slack:.3e} (>= -1e-9)"),
    );
}

#[test]
fn criterion_6_kl_bound() {
    let mut rng = seeded_rng(6006, 0);
    let mut violations = 0;
    for _ in 0..10_000 {
        let b = rng.gen_range(2..=8);
        let radius = rng.gen_range(0.0..=3.0);
        let theta_ref: Vec<f64> = (0..b).map(|_| rng.gen_range(-radius..=radius)).collect();
        let norm = theta_ref.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let reference = softmax(&theta_ref);
        let a = rng.gen_range(0..b);
        let kl = -reference[a].ln();
        assert!((kl - uft_sim::policy::kl_one_hot(a, &theta_ref)).abs() < 1e-12);
        if kl > (b as f64).ln() + 2.0 * norm {
            violations += 1;
        }
    }
    report(6, "KL bound", violations == 0, &format!("{violations} violations in 10^4 instances"));
}

#[test]
fn criterion_7_estimators() {
    let mut rng = seeded_rng(7007, 0);
    let tree = SearchTree::from_rewards(2, 2, vec![1.0, 0.1, 0.0, 0.1], None).unwrap();
    let pi = Policy::from_logits(&tree, vec![0.3, -0.4, 1.0, -1.0, -0.2, 0.5]).unwrap();
    let mut counter = LeafCounter::new(&tree);
    let reps = 100_000;
    let mut sum = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    for _ in 0..reps {
        let q = group_q_estimate(&pi, &tree, NodeRef::ROOT, &mut rng, &mut counter).unwrap();
        for a in 0..2 {
            sum[a] += q[a];
            sq[a] += q[a] * q[a];
        }
    }
    let mut z_max: f64 = 0.0;
    for a in 0..2 {
        let mean = sum[a] / reps as f64;
        let se = ((sq[a] / reps as f64 - mean * mean) / reps as f64).sqrt();
        z_max = z_max.max((mean - oracle_q(&pi, &tree, NodeRef::ROOT, a)).abs() / se);
    }
    assert_eq!(counter.total(), 2 * reps as u64);

    let tree = build_adversarial(2, 4, 2, 0.5, 77).unwrap();
    let pi = random_policy(&tree, 1.0, &mut rng);
    let exact = oracle_value(&pi, &tree, NodeRef::ROOT);
    let n = default_selection_samples(500, 0.9);
    assert_eq!(n, 788);
    let mut counter = LeafCounter::new(&tree);
    let mut inside = 0;
    for _ in 0..1000 {
        if (mc_value(&pi, &tree, n, &mut rng, &mut counter).unwrap() - exact).abs() <= 0.075 {
            inside += 1;
        }
    }
    let ok = z_max <= 4.0 && inside >= 850;
    report(
        7,
        "estimator laws",
        ok,
        &format!("group Q max |z| = {z_max:.2} (<= 4); |V~ - V| <= 0.075 in {inside}/1000 (>= 850)"),
    );
}

#[test]
fn criterion_8_scheduler_laws() {
    let mut failures = Vec::new();
    for (lo, hi, steps) in [(0.05, 0.95, 300), (0.0, 1.0, 17), (0.2, 0.2, 5)] {
        let mut prev = f64::INFINITY;
        for t in 0..steps {
            let p = cosine_fraction(t, steps, lo, hi).unwrap();
            if p > prev {
                failures.push(format!("cosine rises at t={t}"));
            }
            prev = p;
        }
        if cosine_fraction(steps - 1, steps, lo, hi).unwrap() != lo {
            failures.push(format!("endpoint misses p_low={lo}"));
        }
    }

    let mut rng = seeded_rng(8008, 0);
    let draws = 100_000;
    for (length, p) in [(5usize, 0.4), (8, 0.1), (3, 0.9)] {
        let mean = (0..draws).map(|_| sample_binomial(length, p, &mut rng) as f64).sum::<f64>() / draws as f64;
        let se = (length as f64 * p * (1.0 - p) / draws as f64).sqrt();
        if (mean - p * length as f64).abs() > 4.0 * se {
            failures.push(format!("binomial L={length} p={p} mean {mean}"));
        }
        let mean = (0..draws).map(|_| sample_two_point(length, p, &mut rng) as f64).sum::<f64>() / draws as f64;
        let m = p * length as f64;
        let frac = m - m.floor();
        let se = (frac * (1.0 - frac) / draws as f64).sqrt();
        if (mean - m).abs() > 4.0 * se.max(1e-12) {
            failures.push(format!("two-point L={length} p={p} mean {mean}"));
        }
    }
    let length = 6;
    let mut counts = vec![0usize; length + 1];
    for t in 0..draws {
        counts[HintSchedule::Uniform.sample_length(t, length, &mut rng)] += 1;
    }
    let p = 1.0 / (length + 1) as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    for (l, c) in counts.iter().enumerate() {
        if (*c as f64 / draws as f64 - p).abs() > 4.0 * se {
            failures.push(format!("uniform frequency of l={l}"));
        }
    }

    let tree = build_adversarial(2, 5, 1, 0.5, 88).unwrap();
    let rft = TrainConfig::preset(Preset::Rft, &tree, 300, 5);
    let mut zero = TrainConfig::preset(Preset::UftPractical, &tree, 300, 5);
    zero.schedule = HintSchedule::Zero;
    let mut rft_steps = Vec::new();
    let a = train_with(&rft, &tree, |_, _, after| rft_steps.push(after.clone())).unwrap();
    let mut zero_steps = Vec::new();
    let b = train_with(&zero, &tree, |_, _, after| zero_steps.push(after.clone())).unwrap();
    if rft_steps != zero_steps || a.metrics.records != b.metrics.records {
        failures.push("zero schedule diverges from rft".into());
    }

    let path = tree.optimal_path();
    let sft = TrainConfig::preset(Preset::Sft, &tree, 300, 5);
    let mut off_prefix_moves = 0;
    train_with(&sft, &tree, |_, before, after| {
        for depth in 0..tree.height() {
            for i in 0..(1usize << depth) {
                let s = NodeRef::new(depth, i);
                if !path.nodes.contains(&s) && before.logits(s).unwrap() != after.logits(s).unwrap() {
                    off_prefix_moves += 1;
                }
            }
        }
    })
    .unwrap();
    if off_prefix_moves > 0 {
        failures.push(format!("full schedule moved {off_prefix_moves} off-prefix nodes"));
    }
    let detail =
        if failures.is_empty() { "all scheduler and degeneration laws hold".to_string() } else { failures.join("; ") };
    report(8, "scheduler laws", failures.is_empty(), &detail);
}
