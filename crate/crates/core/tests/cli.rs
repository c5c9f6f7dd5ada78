use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uft(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uft")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_csv_with_echo_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.cfg",
        "[experiment]\npreset = uft-theory\noutput = out\n[tree]\nB = 2\nH = 3\n[train]\nT = 40\nsnapshot_every = 20\n",
    );
    let out = uft(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_path = dir.path().join("out/run_uft-theory_seed0.csv");
    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# resolved config");
    assert!(csv.contains("# beta = 0.00676"), "{csv}");
    let header = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    assert_eq!(lines[header], "t,hint_len,pass1_exact,v_tilde,leaves_total,leaves_distinct,objective");
    assert_eq!(lines.len() - header - 1, 40);
    assert!(dir.path().join("out/snapshots/policy_t40.txt").exists());

    // Re-running from the echoed CSV reproduces the file byte for byte.
    let copy = write(dir.path(), "echo.csv", &csv);
    fs::remove_file(&csv_path).unwrap();
    let out = uft(&["run", &copy], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&csv_path).unwrap(), csv);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "preset = rft\nT = 5\nseed = 3\noutput = out\n");
    assert!(uft(&["run", &cfg, "--seed", "9"], dir.path()).status.success());
    assert!(dir.path().join("out/run_rft_seed9.csv").exists());
    assert!(!dir.path().join("out/run_rft_seed3.csv").exists());
}

#[test]
fn sweep_and_lowerbound_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sweep.cfg",
        "algorithms = rft, uft-practical\nseeds = 2\noutput = out\n[train]\nT = 50\n[sweep]\nB_values = 2\nH_values = 2, 3, 4\n[lowerbound]\ntrials = 30\n",
    );
    let out = uft(&["sweep", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "algo,B,H,K,seed,leaves_to_50,final_pass1");
    assert_eq!(rows.len(), 1 + 2 * 3 * 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("median_leaves"));

    let out = uft(&["lowerbound", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/lowerbound.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3 * 30);
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.cfg", "preset = rft\ncolour = blue\n");
    let out = uft(&["run", &bad], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let order = write(dir.path(), "order.cfg", "p_low = 0.5\np_high = 0.1\n");
    let out = uft(&["run", &order], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_low ≤ p_high violated"));

    assert_eq!(uft(&["run", "missing.cfg"], dir.path()).status.code(), Some(2));
    assert_eq!(uft(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn fast_verify_passes_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let started = std::time::Instant::now();
    let out = uft(&["verify"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(started.elapsed().as_secs() < 60);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}
