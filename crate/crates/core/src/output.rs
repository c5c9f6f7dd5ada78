//! CSV emission and the fixed-format summary tables.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::harness::{LowerBoundSummary, SweepRow};
use crate::stats::median;
use crate::trainer::StepRecord;

pub const RUN_HEADER: &str = "t,hint_len,pass1_exact,v_tilde,leaves_total,leaves_distinct,objective";
pub const SWEEP_HEADER: &str = "algo,B,H,K,seed,leaves_to_50,final_pass1";
pub const LOWERBOUND_HEADER: &str = "B,H,K,trial,first_hit";

/// Sweep cell that never crossed the threshold.
pub const NOT_REACHED: &str = "not reached";
/// Sweep cell that failed; the message goes to the log.
pub const FAILED: &str = "error";

/// `%.9g`: nine significant digits, trailing zeros dropped.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    trim_zeros(&format!("{x:.*}", (8 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_echo<W: Write>(w: &mut W, echo: Option<&str>) -> Result<()> {
    if let Some(e) = echo {
        w.write_all(e.as_bytes())?;
        if !e.is_empty() && !e.ends_with('\n') {
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_run_csv<W: Write>(w: &mut W, echo: Option<&str>, records: &[StepRecord]) -> Result<()> {
    write_echo(w, echo)?;
    writeln!(w, "{RUN_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t,
            r.hint_length,
            fmt_g9(r.pass1_exact),
            r.v_tilde.map_or(String::new(), fmt_g9),
            r.leaves_total,
            r.leaves_distinct,
            fmt_g9(r.objective)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: &mut W, echo: Option<&str>, rows: &[SweepRow]) -> Result<()> {
    write_echo(w, echo)?;
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        let leaves = match (&r.error, r.leaves_to_threshold) {
            (Some(_), _) => FAILED.to_string(),
            (None, Some(n)) => n.to_string(),
            (None, None) => NOT_REACHED.to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.algorithm,
            r.branching,
            r.height,
            r.optimal_leaves,
            r.seed,
            leaves,
            fmt_g9(r.final_pass1)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lowerbound_csv<W: Write>(w: &mut W, echo: Option<&str>, summaries: &[LowerBoundSummary]) -> Result<()> {
    write_echo(w, echo)?;
    writeln!(w, "{LOWERBOUND_HEADER}")?;
    for s in summaries {
        for (trial, hit) in s.first_hits.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", s.branching, s.height, s.optimal_leaves, trial, hit)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, message: msg.into() }
}

/// Reads rows written by [`write_sweep_csv`]; comment lines are skipped.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != SWEEP_HEADER {
                return Err(parse_err(line_no, format!("expected header '{SWEEP_HEADER}'")));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(line_no, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |i: usize| -> Result<u64> {
            f[i].parse().map_err(|_| parse_err(line_no, format!("bad integer '{}'", f[i])))
        };
        let (leaves, error) = match f[5] {
            NOT_REACHED => (None, None),
            FAILED => (None, Some(FAILED.to_string())),
            _ => (Some(num(5)?), None),
        };
        rows.push(SweepRow {
            algorithm: f[0].to_string(),
            branching: num(1)? as usize,
            height: num(2)? as usize,
            optimal_leaves: num(3)? as usize,
            seed: num(4)?,
            leaves_to_threshold: leaves,
            final_pass1: f[6].parse().map_err(|_| parse_err(line_no, format!("bad float '{}'", f[6])))?,
            error,
        });
    }
    if !seen_header {
        return Err(parse_err(0, "missing sweep header"));
    }
    Ok(rows)
}

/// Per (algorithm, B, H): reached/total, median leaves over reached seeds,
/// median final pass@1.
pub fn sweep_summary_table(rows: &[SweepRow]) -> String {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.algorithm.clone(), r.branching, r.height)).or_default().push(r);
    }
    let mut out = format!(
        "{:<14} {:>3} {:>3} {:>9} {:>14} {:>12}\n",
        "algo", "B", "H", "reached", "median_leaves", "median_pass1"
    );
    for ((algo, b, h), group) in groups {
        let reached: Vec<f64> = group
            .iter()
            .filter_map(|r| r.leaves_to_threshold.filter(|_| r.error.is_none()))
            .map(|x| x as f64)
            .collect();
        let pass: Vec<f64> = group.iter().filter(|r| r.error.is_none()).map(|r| r.final_pass1).collect();
        let med_leaves = median(&reached).map_or("-".to_string(), fmt_g9);
        let med_pass = median(&pass).map_or("-".to_string(), |m| format!("{m:.4}"));
        out.push_str(&format!(
            "{:<14} {:>3} {:>3} {:>9} {:>14} {:>12}\n",
            algo,
            b,
            h,
            format!("{}/{}", reached.len(), group.len()),
            med_leaves,
            med_pass
        ));
    }
    out
}

pub fn lowerbound_summary_table(summaries: &[LowerBoundSummary]) -> String {
    let mut out = format!(
        "{:>3} {:>3} {:>4} {:>7} {:>10} {:>10} {:>10} {:>12}\n",
        "B", "H", "K", "trials", "q25", "median", "q75", "B^H/(4K)"
    );
    for s in summaries {
        let reference = (s.branching as f64).powi(s.height as i32) / (4.0 * s.optimal_leaves as f64);
        out.push_str(&format!(
            "{:>3} {:>3} {:>4} {:>7} {:>10.2} {:>10.2} {:>10.2} {:>12.2}\n",
            s.branching,
            s.height,
            s.optimal_leaves,
            s.first_hits.len(),
            s.q25,
            s.median,
            s.q75,
            reference
        ));
    }
    out
}
