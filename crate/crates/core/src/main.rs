use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use uft_sim::config::{parse_config_or_echo, Command as ConfigCommand, ExperimentConfig};
use uft_sim::harness::{fit_scaling, lowerbound_experiment, sweep};
use uft_sim::output::{
    lowerbound_summary_table, sweep_summary_table, write_lowerbound_csv, write_run_csv, write_sweep_csv,
};
use uft_sim::trainer::train_with;
use uft_sim::verify::{run_suite, Level};

#[derive(Parser)]
#[command(name = "uft", about = "Search-tree simulator for hint-guided fine-tuning")]
struct Cli {
    /// Override the seed given in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one preset on one tree and write the per-step CSV.
    Run { config: PathBuf },
    /// Leaves-to-threshold sweep over algorithms, B, H and seeds.
    Sweep { config: PathBuf },
    /// First-hit times of uniform leaf querying on random instances.
    Lowerbound { config: PathBuf },
    /// Run the property suites.
    Verify {
        #[arg(long)]
        full: bool,
    },
}

/// Bad input, as opposed to a failed experiment.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn load(path: &Path, seed: Option<u64>, command: ConfigCommand) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg =
        parse_config_or_echo(&text, Some(command)).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn run(cfg: &ExperimentConfig) -> Result<bool> {
    let tree = cfg.build_tree().map_err(|e| UsageError(e.to_string()))?;
    let train_cfg = cfg.train_config(cfg.preset, &tree, cfg.seed).map_err(|e| UsageError(e.to_string()))?;
    let snapshots = cfg.output.join("snapshots");
    let mut snapshot_error = None;
    let outcome = train_with(&train_cfg, &tree, |report, _, after| {
        if let Some(k) = cfg.snapshot_every {
            if (report.t + 1) % k == 0 && snapshot_error.is_none() {
                let path = snapshots.join(format!("policy_t{}.txt", report.t + 1));
                let res = fs::create_dir_all(&snapshots).and_then(|_| fs::write(&path, after.to_snapshot()));
                snapshot_error = res.err();
            }
        }
    })?;
    if let Some(e) = snapshot_error {
        return Err(e).context("cannot write policy snapshot");
    }
    let path = cfg.output.join(format!("run_{}_seed{}.csv", cfg.preset, cfg.seed));
    write_run_csv(&mut create(&path)?, Some(&cfg.echo()), &outcome.metrics.records)?;
    let m = &outcome.metrics;
    println!("tree: {}", tree.spec().map_or("custom".to_string(), |s| s.to_string()));
    println!("preset: {} schedule: {} eta: {} beta: {}", cfg.preset, train_cfg.schedule, train_cfg.eta, train_cfg.beta);
    println!(
        "steps: {} selected: {} initial pass@1: {:.6} final pass@1: {:.6}",
        m.records.len(),
        m.selected,
        m.initial_pass1,
        m.final_pass1
    );
    println!(
        "leaf visits: {} distinct leaves: {} wall time: {:.2}s",
        m.leaves_total, m.leaves_distinct, m.wall_time_secs
    );
    println!("wrote {}", path.display());
    Ok(true)
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<bool> {
    let plan = cfg.sweep_plan();
    let rows = sweep(&plan, |preset, tree, seed| cfg.train_config(preset, tree, uft_sim::mix_seed(&[seed, 1])))
        .map_err(|e| UsageError(e.to_string()))?;
    let path = cfg.output.join("sweep.csv");
    write_sweep_csv(&mut create(&path)?, Some(&cfg.echo()), &rows)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "cell {} B={} H={} seed={} failed: {}",
            r.algorithm,
            r.branching,
            r.height,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    print!("{}", sweep_summary_table(&rows));
    for algo in &plan.presets {
        for &b in &plan.branchings {
            match fit_scaling(&rows, algo.name(), Some(b)) {
                Ok(fit) => println!(
                    "fit {algo} B={b}: exp slope {:.4} (r2 {:.4}), poly slope {:.4} (r2 {:.4}), preferred {}",
                    fit.exponential.slope,
                    fit.exponential.r_squared,
                    fit.polynomial.slope,
                    fit.polynomial.r_squared,
                    fit.preferred()
                ),
                Err(e) => println!("fit {algo} B={b}: {e}"),
            }
        }
    }
    println!("wrote {}", path.display());
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn run_lowerbound(cfg: &ExperimentConfig) -> Result<bool> {
    let mut summaries = Vec::new();
    for &b in &cfg.branchings {
        for &h in &cfg.heights {
            let seed = uft_sim::mix_seed(&[cfg.seed, b as u64, h as u64]);
            summaries.push(
                lowerbound_experiment(b, h, cfg.optimal_leaves, cfg.trials, seed)
                    .map_err(|e| UsageError(e.to_string()))?,
            );
        }
    }
    let path = cfg.output.join("lowerbound.csv");
    write_lowerbound_csv(&mut create(&path)?, Some(&cfg.echo()), &summaries)?;
    print!("{}", lowerbound_summary_table(&summaries));
    println!("wrote {}", path.display());
    Ok(true)
}

fn verify(full: bool) -> bool {
    let level = if full { Level::Full } else { Level::Fast };
    let mut ok = true;
    for r in run_suite(level) {
        match &r.outcome {
            Ok(()) => println!("PASS {}", r.name),
            Err(c) => {
                println!("FAIL {}", r.name);
                if ok {
                    println!("  counterexample: {c}");
                }
                ok = false;
            }
        }
    }
    ok
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Cmd::Run { config } => load(config, cli.seed, ConfigCommand::Run).and_then(|c| run(&c)),
        Cmd::Sweep { config } => load(config, cli.seed, ConfigCommand::Sweep).and_then(|c| run_sweep(&c)),
        Cmd::Lowerbound { config } => {
            load(config, cli.seed, ConfigCommand::Lowerbound).and_then(|c| run_lowerbound(&c))
        }
        Cmd::Verify { full } => Ok(verify(*full)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
