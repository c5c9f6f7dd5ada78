//! Plain `key = value` experiment configuration.
//!
//! Sections (`[experiment]`, `[tree]`, `[train]`, `[sweep]`, `[lowerbound]`)
//! are optional; a key placed under a section must belong to it. `#` starts a
//! comment line. Every resolved configuration can be printed back with
//! [`ExperimentConfig::to_config_text`] and re-parsed to the same value.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::SweepPlan;
use crate::hint::HintSchedule;
use crate::trainer::{
    Preset, Selection, TrainConfig, DEFAULT_HINT_STEPS, DEFAULT_P_HIGH, DEFAULT_P_LOW, DEFAULT_STAGES, DEFAULT_STEPS,
};
use crate::tree::{SearchTree, TreeSpec};

/// First line of a configuration echo embedded in CSV output.
pub const ECHO_MARKER: &str = "# resolved config";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Sweep,
    Lowerbound,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Lowerbound => "lowerbound",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "run" => Ok(Command::Run),
            "sweep" => Ok(Command::Sweep),
            "lowerbound" => Ok(Command::Lowerbound),
            _ => Err(format!("unknown command {s}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Adversarial,
    Countdown,
}

impl Flavor {
    fn name(&self) -> &'static str {
        match self {
            Flavor::Adversarial => "adversarial",
            Flavor::Countdown => "countdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub preset: Preset,
    /// Algorithms compared by `sweep`.
    pub algorithms: Vec<Preset>,
    pub seed: u64,
    pub seeds: usize,
    pub output: PathBuf,

    pub flavor: Flavor,
    pub branching: usize,
    pub height: usize,
    pub optimal_leaves: usize,
    pub format_fraction: f64,
    /// Instance seed; follows `seed` when unset.
    pub tree_seed: Option<u64>,
    pub numbers: Vec<i64>,
    pub target: i64,

    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub steps: usize,
    pub hint_steps: usize,
    pub p_low: f64,
    pub p_high: f64,
    /// Best-iterate selection samples.
    pub selection_samples: Option<usize>,
    pub stages: usize,
    pub leaf_budget: Option<u64>,
    pub allow_unsafe_beta: bool,
    pub snapshot_every: Option<usize>,

    pub branchings: Vec<usize>,
    pub heights: Vec<usize>,
    pub threshold: f64,

    pub trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Run,
            preset: Preset::UftPractical,
            algorithms: vec![Preset::Rft, Preset::UftPractical],
            seed: 0,
            seeds: 10,
            output: PathBuf::from("./out/"),
            flavor: Flavor::Adversarial,
            branching: 2,
            height: 4,
            optimal_leaves: 1,
            format_fraction: 0.5,
            tree_seed: None,
            numbers: vec![3, 5, 7, 13],
            target: 24,
            eta: None,
            beta: None,
            steps: DEFAULT_STEPS,
            hint_steps: DEFAULT_HINT_STEPS,
            p_low: DEFAULT_P_LOW,
            p_high: DEFAULT_P_HIGH,
            selection_samples: None,
            stages: DEFAULT_STAGES,
            leaf_budget: None,
            allow_unsafe_beta: false,
            snapshot_every: None,
            branchings: vec![2, 3],
            heights: vec![2, 3, 4, 5, 6],
            threshold: 0.5,
            trials: 200,
        }
    }
}

const SECTIONS: [&str; 5] = ["experiment", "tree", "train", "sweep", "lowerbound"];

fn section_of(key: &str) -> Option<&'static str> {
    Some(match key {
        "command" | "preset" | "algorithms" | "seed" | "seeds" | "output" => "experiment",
        "flavor" | "B" | "H" | "K" | "format_fraction" | "tree_seed" | "numbers" | "target" => "tree",
        "eta" | "beta" | "T" | "T_hint" | "p_low" | "p_high" | "N" | "stages" | "leaf_budget" | "allow_unsafe_beta"
        | "snapshot_every" => "train",
        "B_values" | "H_values" | "threshold" => "sweep",
        "trials" => "lowerbound",
        _ => return None,
    })
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config { line, message: message.into() }
}

fn scalar<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| config_err(line, format!("{key}: cannot parse '{raw}'")))
}

fn list<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<Vec<T>> {
    let items = raw.split(',').map(|v| scalar(key, v.trim(), line)).collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(config_err(line, format!("{key}: empty list")));
    }
    Ok(items)
}

fn optional<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<Option<T>> {
    if raw == "auto" || raw == "none" {
        Ok(None)
    } else {
        scalar(key, raw, line).map(Some)
    }
}

/// Parses configuration text and fills in defaults. For `run`, the
/// preset-dependent `eta`, `beta` and `N` are resolved against the tree.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_as(text, None)
}

/// [`parse_config`] with the command taken from the caller instead of the
/// text, as the CLI verb does.
pub fn parse_config_as(text: &str, command: Option<Command>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    let mut section: Option<String> = None;
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw_line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(config_err(line, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| config_err(line, format!("expected 'key = value', got '{content}'")))?;
        let home = section_of(key).ok_or_else(|| config_err(line, format!("unknown key '{key}'")))?;
        if let Some(s) = &section {
            if s != home {
                return Err(config_err(line, format!("key '{key}' belongs in [{home}], not [{s}]")));
            }
        }
        if lines_of.insert(key.to_string(), line).is_some() {
            return Err(config_err(line, format!("duplicate key '{key}'")));
        }
        apply(&mut cfg, key, value, line)?;
    }

    if let Some(c) = command {
        cfg.command = c;
    }
    let line_of = |k: &str| lines_of.get(k).copied().unwrap_or(0);
    if cfg.p_low > cfg.p_high {
        return Err(config_err(line_of("p_high").max(line_of("p_low")), "p_low ≤ p_high violated"));
    }
    if !(0.0..=1.0).contains(&cfg.p_low) || !(0.0..=1.0).contains(&cfg.p_high) {
        return Err(config_err(line_of("p_low").max(line_of("p_high")), "p_low and p_high must lie in [0, 1]"));
    }
    if cfg.hint_steps == 0 {
        return Err(config_err(line_of("T_hint"), "T_hint must be positive"));
    }
    if cfg.stages == 0 {
        return Err(config_err(line_of("stages"), "stages must be positive"));
    }
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(config_err(line_of("threshold"), "threshold must lie in (0, 1)"));
    }
    if cfg.seeds == 0 {
        return Err(config_err(line_of("seeds"), "seeds must be positive"));
    }
    if cfg.trials == 0 {
        return Err(config_err(line_of("trials"), "trials must be positive"));
    }
    if cfg.snapshot_every == Some(0) {
        return Err(config_err(line_of("snapshot_every"), "snapshot_every must be positive"));
    }
    if cfg.command == Command::Run {
        let tree = cfg.build_tree().map_err(|e| config_err(line_of("flavor").max(line_of("H")), e.to_string()))?;
        cfg.resolve_defaults(&tree);
        cfg.train_config(cfg.preset, &tree, cfg.seed)
            .map_err(|e| config_err(line_of("beta").max(line_of("eta")), e.to_string()))?;
    }
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str, line: usize) -> Result<()> {
    match key {
        "command" => cfg.command = v.parse().map_err(|e: String| config_err(line, e))?,
        "preset" => cfg.preset = v.parse().map_err(|e: Error| config_err(line, e.to_string()))?,
        "algorithms" => {
            cfg.algorithms = v
                .split(',')
                .map(|p| p.trim().parse::<Preset>().map_err(|e| config_err(line, e.to_string())))
                .collect::<Result<_>>()?
        }
        "seed" => cfg.seed = scalar(key, v, line)?,
        "seeds" => cfg.seeds = scalar(key, v, line)?,
        "output" => cfg.output = PathBuf::from(v),
        "flavor" => {
            cfg.flavor = match v {
                "adversarial" => Flavor::Adversarial,
                "countdown" => Flavor::Countdown,
                _ => return Err(config_err(line, format!("unknown flavor '{v}'"))),
            }
        }
        "B" => cfg.branching = scalar(key, v, line)?,
        "H" => cfg.height = scalar(key, v, line)?,
        "K" => cfg.optimal_leaves = scalar(key, v, line)?,
        "format_fraction" => cfg.format_fraction = scalar(key, v, line)?,
        "tree_seed" => cfg.tree_seed = optional(key, v, line)?,
        "numbers" => cfg.numbers = list(key, v, line)?,
        "target" => cfg.target = scalar(key, v, line)?,
        "eta" => cfg.eta = optional(key, v, line)?,
        "beta" => cfg.beta = optional(key, v, line)?,
        "T" => cfg.steps = scalar(key, v, line)?,
        "T_hint" => cfg.hint_steps = scalar(key, v, line)?,
        "p_low" => cfg.p_low = scalar(key, v, line)?,
        "p_high" => cfg.p_high = scalar(key, v, line)?,
        "N" => cfg.selection_samples = optional(key, v, line)?,
        "stages" => cfg.stages = scalar(key, v, line)?,
        "leaf_budget" => cfg.leaf_budget = optional(key, v, line)?,
        "allow_unsafe_beta" => cfg.allow_unsafe_beta = scalar(key, v, line)?,
        "snapshot_every" => cfg.snapshot_every = optional(key, v, line)?,
        "B_values" => cfg.branchings = list(key, v, line)?,
        "H_values" => cfg.heights = list(key, v, line)?,
        "threshold" => cfg.threshold = scalar(key, v, line)?,
        "trials" => cfg.trials = scalar(key, v, line)?,
        _ => return Err(config_err(line, format!("unknown key '{key}'"))),
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn tree_spec(&self) -> TreeSpec {
        match self.flavor {
            Flavor::Adversarial => TreeSpec::Adversarial {
                branching: self.branching,
                height: self.height,
                optimal_leaves: self.optimal_leaves,
                format_fraction: self.format_fraction,
                seed: self.tree_seed.unwrap_or(self.seed),
            },
            Flavor::Countdown => TreeSpec::Countdown { numbers: self.numbers.clone(), target: self.target },
        }
    }

    pub fn build_tree(&self) -> Result<SearchTree> {
        self.tree_spec().build()
    }

    /// Fills `eta`, `beta` and `N` with the preset defaults for `tree`.
    pub fn resolve_defaults(&mut self, tree: &SearchTree) {
        let base = TrainConfig::preset(self.preset, tree, self.steps, self.seed);
        self.eta.get_or_insert(base.eta);
        self.beta.get_or_insert(base.beta);
        if let Selection::BestIterate { samples } = base.selection {
            self.selection_samples.get_or_insert(samples);
        }
    }

    pub fn schedule_for(&self, preset: Preset) -> HintSchedule {
        match preset {
            Preset::UftTheory | Preset::R3 => HintSchedule::Uniform,
            Preset::UftPractical => {
                HintSchedule::CosineBinomial { p_low: self.p_low, p_high: self.p_high, hint_steps: self.hint_steps }
            }
            Preset::Rft => HintSchedule::Zero,
            Preset::Staged => HintSchedule::Staged { stages: self.stages, hint_steps: self.hint_steps },
            Preset::Sft => HintSchedule::Full,
        }
    }

    /// Training configuration for `preset` on `tree` with overrides applied.
    pub fn train_config(&self, preset: Preset, tree: &SearchTree, seed: u64) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::preset(preset, tree, self.steps, seed);
        cfg.schedule = self.schedule_for(preset);
        if let Some(eta) = self.eta {
            cfg.eta = eta;
        }
        if let Some(beta) = self.beta {
            cfg.beta = beta;
        }
        if let (Selection::BestIterate { .. }, Some(n)) = (cfg.selection, self.selection_samples) {
            cfg.selection = Selection::BestIterate { samples: n };
        }
        cfg.leaf_budget = self.leaf_budget;
        cfg.allow_unsafe_beta = self.allow_unsafe_beta;
        cfg.validate(tree)?;
        Ok(cfg)
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        SweepPlan {
            presets: self.algorithms.clone(),
            branchings: self.branchings.clone(),
            heights: self.heights.clone(),
            optimal_leaves: self.optimal_leaves,
            seeds: self.seeds,
            base_seed: self.seed,
            threshold: self.threshold,
        }
    }

    /// Canonical text form; parsing it yields an equal configuration.
    pub fn to_config_text(&self) -> String {
        fn opt<T: fmt::Debug>(v: &Option<T>) -> String {
            v.as_ref().map_or("auto".to_string(), |x| format!("{x:?}"))
        }
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        let sections: [(&str, Vec<(&str, String)>); 5] = [
            (
                "experiment",
                vec![
                    ("command", self.command.to_string()),
                    ("preset", self.preset.to_string()),
                    ("algorithms", join(&self.algorithms)),
                    ("seed", self.seed.to_string()),
                    ("seeds", self.seeds.to_string()),
                    ("output", self.output.display().to_string()),
                ],
            ),
            (
                "tree",
                vec![
                    ("flavor", self.flavor.name().to_string()),
                    ("B", self.branching.to_string()),
                    ("H", self.height.to_string()),
                    ("K", self.optimal_leaves.to_string()),
                    ("format_fraction", format!("{:?}", self.format_fraction)),
                    ("tree_seed", opt(&self.tree_seed)),
                    ("numbers", join(&self.numbers)),
                    ("target", self.target.to_string()),
                ],
            ),
            (
                "train",
                vec![
                    ("eta", opt(&self.eta)),
                    ("beta", opt(&self.beta)),
                    ("T", self.steps.to_string()),
                    ("T_hint", self.hint_steps.to_string()),
                    ("p_low", format!("{:?}", self.p_low)),
                    ("p_high", format!("{:?}", self.p_high)),
                    ("N", opt(&self.selection_samples)),
                    ("stages", self.stages.to_string()),
                    ("leaf_budget", opt(&self.leaf_budget)),
                    ("allow_unsafe_beta", self.allow_unsafe_beta.to_string()),
                    ("snapshot_every", opt(&self.snapshot_every)),
                ],
            ),
            (
                "sweep",
                vec![
                    ("B_values", join(&self.branchings)),
                    ("H_values", join(&self.heights)),
                    ("threshold", format!("{:?}", self.threshold)),
                ],
            ),
            ("lowerbound", vec![("trials", self.trials.to_string())]),
        ];
        let mut s = String::new();
        for (name, entries) in sections {
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// The configuration as `# `-prefixed comment lines, led by [`ECHO_MARKER`].
    pub fn echo(&self) -> String {
        let mut s = format!("{ECHO_MARKER}\n");
        for line in self.to_config_text().lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

/// Reads configuration from either plain config text or a CSV file whose
/// leading comment block is a configuration echo.
pub fn parse_config_or_echo(text: &str, command: Option<Command>) -> Result<ExperimentConfig> {
    if !text.starts_with(ECHO_MARKER) {
        return parse_config_as(text, command);
    }
    let body: String = text.lines().skip(1).map_while(|l| l.strip_prefix("# ")).flat_map(|l| [l, "\n"]).collect();
    parse_config_as(&body, command)
}
