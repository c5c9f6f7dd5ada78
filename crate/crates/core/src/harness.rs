//! Sample-complexity experiments.
//!
//! Two notions of "leaves explored" are used. Training curves count leaf
//! visits with multiplicity, which is what a trainer pays for. The lower-bound
//! experiment counts distinct leaves queried before the first optimal one,
//! which is what any exploration strategy must pay on a uniformly random
//! instance.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::stats::{linear_fit, median, quantile, LinearFit};
use crate::trainer::{train, Preset, TrainConfig};
use crate::tree::{build_adversarial, NodeRef, SearchTree};
use crate::{mix_seed, seeded_rng};

pub use crate::trainer::{RunMetrics, StepRecord};

/// Environment variable bounding the sweep worker pool.
pub const WORKERS_ENV: &str = "UFT_WORKERS";

/// Format-reward share used for sweep instances.
pub const SWEEP_FORMAT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: String,
    pub branching: usize,
    pub height: usize,
    pub optimal_leaves: usize,
    pub seed: u64,
    /// Leaf visits at the first iterate whose exact pass@1 reached the
    /// threshold; `None` if it never did.
    pub leaves_to_threshold: Option<u64>,
    pub final_pass1: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn reached(&self) -> bool {
        self.error.is_none() && self.leaves_to_threshold.is_some()
    }
}

/// Trains and reports when exact pass@1 first reached `threshold`.
pub fn leaves_to_threshold(cfg: &TrainConfig, tree: &SearchTree, threshold: f64) -> Result<SweepRow> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let outcome = train(cfg, tree)?;
    let m = &outcome.metrics;
    let leaves = if m.initial_pass1 >= threshold {
        Some(0)
    } else {
        m.records.iter().find(|r| r.pass1_exact >= threshold).map(|r| r.leaves_total)
    };
    Ok(SweepRow {
        algorithm: cfg.preset.name().to_string(),
        branching: tree.branching(),
        height: tree.height(),
        optimal_leaves: tree.optimal_leaf_count(),
        seed: cfg.seed,
        leaves_to_threshold: leaves,
        final_pass1: m.final_pass1,
        error: None,
    })
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub presets: Vec<Preset>,
    pub branchings: Vec<usize>,
    pub heights: Vec<usize>,
    pub optimal_leaves: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub threshold: f64,
}

impl SweepPlan {
    pub fn cell_count(&self) -> usize {
        self.presets.len() * self.branchings.len() * self.heights.len() * self.seeds
    }
}

/// Seed of the instance shared by every algorithm in one sweep cell.
pub fn instance_seed(row_seed: u64, branching: usize, height: usize, optimal_leaves: usize) -> u64 {
    mix_seed(&[row_seed, branching as u64, height as u64, optimal_leaves as u64])
}

/// Runs the full cross product in parallel. `configure` builds the training
/// configuration for `(preset, tree, row seed)`. Rows come back in
/// preset-major, then `B`, `H`, seed order; failures become error rows.
pub fn sweep<F>(plan: &SweepPlan, configure: F) -> Result<Vec<SweepRow>>
where
    F: Fn(Preset, &SearchTree, u64) -> Result<TrainConfig> + Sync,
{
    if plan.cell_count() == 0 {
        return Err(invalid("sweep grid is empty"));
    }
    let mut cells = Vec::with_capacity(plan.cell_count());
    for &preset in &plan.presets {
        for &b in &plan.branchings {
            for &h in &plan.heights {
                for s in 0..plan.seeds as u64 {
                    cells.push((preset, b, h, plan.base_seed + s));
                }
            }
        }
    }
    let run_cell = |&(preset, b, h, seed): &(Preset, usize, usize, u64)| -> SweepRow {
        let result = build_adversarial(
            b,
            h,
            plan.optimal_leaves,
            SWEEP_FORMAT_FRACTION,
            instance_seed(seed, b, h, plan.optimal_leaves),
        )
        .and_then(|tree| {
            let cfg = configure(preset, &tree, seed)?;
            leaves_to_threshold(&cfg, &tree, plan.threshold)
        });
        match result {
            Ok(row) => SweepRow { seed, ..row },
            Err(e) => SweepRow {
                algorithm: preset.name().to_string(),
                branching: b,
                height: h,
                optimal_leaves: plan.optimal_leaves,
                seed,
                leaves_to_threshold: None,
                final_pass1: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    };
    let pool = worker_pool()?;
    Ok(pool.install(|| cells.par_iter().map(run_cell).collect()))
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let n: usize =
            raw.parse().map_err(|_| invalid(format!("{WORKERS_ENV} must be a positive integer, got {raw}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundSummary {
    pub branching: usize,
    pub height: usize,
    pub optimal_leaves: usize,
    /// Distinct leaves queried up to and including the first optimal one.
    pub first_hits: Vec<u64>,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub mean: f64,
}

/// Query-model simulation: each trial draws a random instance with `K`
/// optimal leaves and queries leaves uniformly without replacement until an
/// optimal reward comes back.
pub fn lowerbound_experiment(
    branching: usize,
    height: usize,
    optimal_leaves: usize,
    trials: usize,
    seed: u64,
) -> Result<LowerBoundSummary> {
    if trials == 0 {
        return Err(invalid("lower-bound experiment needs at least one trial"));
    }
    let mut rng = seeded_rng(seed, 3);
    let mut first_hits = Vec::with_capacity(trials);
    for trial in 0..trials {
        let tree = build_adversarial(branching, height, optimal_leaves, 0.0, mix_seed(&[seed, trial as u64]))?;
        let mut order: Vec<usize> = (0..tree.leaf_count()).collect();
        order.shuffle(&mut rng);
        let mut hit = None;
        for (n, &leaf) in order.iter().enumerate() {
            if tree.reward(NodeRef::new(height, leaf))? == tree.optimal_reward() {
                hit = Some(n as u64 + 1);
                break;
            }
        }
        first_hits.push(hit.expect("every instance has an optimal leaf"));
    }
    let as_f64: Vec<f64> = first_hits.iter().map(|&x| x as f64).collect();
    Ok(LowerBoundSummary {
        branching,
        height,
        optimal_leaves,
        q25: quantile(&as_f64, 0.25)?,
        median: median(&as_f64)?,
        q75: quantile(&as_f64, 0.75)?,
        mean: as_f64.iter().sum::<f64>() / trials as f64,
        first_hits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingModel {
    /// `log leaves ≈ slope · H + c`.
    ExponentialInHeight,
    /// `log leaves ≈ slope · log H + c`.
    PolynomialInHeight,
}

impl fmt::Display for ScalingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingModel::ExponentialInHeight => "exp-in-H",
            ScalingModel::PolynomialInHeight => "poly-in-H",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    /// `(H, median leaves)` points that entered the fits.
    pub points: Vec<(usize, f64)>,
    pub exponential: LinearFit,
    pub polynomial: LinearFit,
}

impl ScalingFit {
    /// The model with the larger `r²`.
    pub fn preferred(&self) -> ScalingModel {
        if self.exponential.r_squared >= self.polynomial.r_squared {
            ScalingModel::ExponentialInHeight
        } else {
            ScalingModel::PolynomialInHeight
        }
    }
}

/// Fits both scaling models to `(H, value)` points.
pub fn fit_points(points: &[(usize, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("scaling fit needs >= 3 heights, got {}", points.len())));
    }
    if let Some((h, v)) = points.iter().find(|(h, v)| *h == 0 || *v <= 0.0) {
        return Err(Error::InsufficientData(format!("cannot take logs of point H={h}, value={v}")));
    }
    let hs: Vec<f64> = points.iter().map(|(h, _)| *h as f64).collect();
    let log_hs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let log_vs: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    Ok(ScalingFit {
        points: points.to_vec(),
        exponential: linear_fit(&hs, &log_vs)?,
        polynomial: linear_fit(&log_hs, &log_vs)?,
    })
}

/// Median leaves-to-threshold per height for one algorithm (and optionally
/// one branching factor), fitted against both models. Rows that never
/// reached the threshold or failed are skipped.
pub fn fit_scaling(rows: &[SweepRow], algorithm: &str, branching: Option<usize>) -> Result<ScalingFit> {
    let selected: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm && r.reached() && branching.is_none_or(|b| r.branching == b))
        .collect();
    let mut bs: Vec<usize> = selected.iter().map(|r| r.branching).collect();
    bs.dedup();
    bs.sort_unstable();
    bs.dedup();
    if bs.len() > 1 {
        return Err(invalid(format!("rows mix branching factors {bs:?}; fit one at a time")));
    }
    let mut by_height: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in selected {
        by_height.entry(r.height).or_default().push(r.leaves_to_threshold.unwrap() as f64);
    }
    let points = by_height.into_iter().map(|(h, v)| Ok((h, median(&v)?))).collect::<Result<Vec<_>>>()?;
    fit_points(&points)
}
