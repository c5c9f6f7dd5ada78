//! Hint-length schedules.
//!
//! A schedule maps the training step `t` and the solution length `L` to a
//! random hint length `l ∈ {0, ..., L}`. Degenerate draws (`p = 0`, `p = 1`,
//! integral two-point means) consume no randomness, so a schedule pinned at
//! `p = 0` replays exactly like [`HintSchedule::Zero`].

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HintSchedule {
    /// `l ~ Binomial(L, p(t))` with cosine-annealed `p(t)`.
    CosineBinomial { p_low: f64, p_high: f64, hint_steps: usize },
    /// Two-point law on `{floor(pL), floor(pL) + 1}` with mean `p(t) L`.
    CosineTwoPoint { p_low: f64, p_high: f64, hint_steps: usize },
    /// `l` uniform on `{0, ..., L}` at every step.
    Uniform,
    /// Hint shrinks linearly over `stages` equal-length stages, then vanishes.
    Staged { stages: usize, hint_steps: usize },
    /// Never hint.
    Zero,
    /// Always reveal the whole solution.
    Full,
}

/// Cosine-annealed hint fraction at step `t < hint_steps`.
pub fn cosine_fraction(t: usize, hint_steps: usize, p_low: f64, p_high: f64) -> Result<f64> {
    if t >= hint_steps {
        return Err(invalid(format!("cosine fraction requested at t={t} >= T_hint={hint_steps}")));
    }
    let phase = (t + 1) as f64 / hint_steps as f64 * PI;
    Ok(p_low + 0.5 * (p_high - p_low) * (1.0 + phase.cos()))
}

/// Number of heads in `trials` coin flips with bias `p`.
pub fn sample_binomial<R: Rng + ?Sized>(trials: usize, p: f64, rng: &mut R) -> usize {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        (0..trials).filter(|_| rng.gen::<f64>() < p).count()
    }
}

/// `n` with probability `n + 1 - pL`, else `n + 1`, where `n = floor(pL)`.
pub fn sample_two_point<R: Rng + ?Sized>(length: usize, p: f64, rng: &mut R) -> usize {
    let mean = (p * length as f64).clamp(0.0, length as f64);
    let low = mean.floor();
    let frac = mean - low;
    let low = low as usize;
    if frac <= 0.0 || low >= length {
        return low.min(length);
    }
    if rng.gen::<f64>() < 1.0 - frac {
        low
    } else {
        (low + 1).min(length)
    }
}

impl HintSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HintSchedule::CosineBinomial { p_low, p_high, hint_steps }
            | HintSchedule::CosineTwoPoint { p_low, p_high, hint_steps } => {
                if !(0.0..=1.0).contains(&p_low) || !(0.0..=1.0).contains(&p_high) {
                    return Err(invalid("p_low and p_high must lie in [0, 1]"));
                }
                if p_low > p_high {
                    return Err(invalid("p_low ≤ p_high violated"));
                }
                if hint_steps == 0 {
                    return Err(invalid("T_hint must be positive"));
                }
            }
            HintSchedule::Staged { stages, hint_steps } => {
                if stages == 0 || hint_steps == 0 {
                    return Err(invalid("staged schedule needs positive stage count and T_hint"));
                }
            }
            HintSchedule::Uniform | HintSchedule::Zero | HintSchedule::Full => {}
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            HintSchedule::CosineBinomial { .. } => "cosine-binomial",
            HintSchedule::CosineTwoPoint { .. } => "cosine-two-point",
            HintSchedule::Uniform => "uniform",
            HintSchedule::Staged { .. } => "staged",
            HintSchedule::Zero => "zero",
            HintSchedule::Full => "full",
        }
    }

    /// Hint fraction `p(t)` for the cosine laws; `None` for the others.
    pub fn fraction(&self, t: usize) -> Option<f64> {
        match *self {
            HintSchedule::CosineBinomial { p_low, p_high, hint_steps }
            | HintSchedule::CosineTwoPoint { p_low, p_high, hint_steps } => {
                Some(if t < hint_steps { cosine_fraction(t, hint_steps, p_low, p_high).unwrap() } else { 0.0 })
            }
            _ => None,
        }
    }

    pub fn sample_length<R: Rng + ?Sized>(&self, t: usize, length: usize, rng: &mut R) -> usize {
        match *self {
            HintSchedule::CosineBinomial { .. } => sample_binomial(length, self.fraction(t).unwrap(), rng),
            HintSchedule::CosineTwoPoint { .. } => sample_two_point(length, self.fraction(t).unwrap(), rng),
            HintSchedule::Uniform => rng.gen_range(0..=length),
            HintSchedule::Staged { stages, hint_steps } => {
                if t >= hint_steps {
                    0
                } else {
                    let stage = t * stages / hint_steps;
                    (length as f64 * (1.0 - stage as f64 / stages as f64)).round() as usize
                }
            }
            HintSchedule::Zero => 0,
            HintSchedule::Full => length,
        }
    }
}

impl fmt::Display for HintSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            HintSchedule::CosineBinomial { p_low, p_high, hint_steps }
            | HintSchedule::CosineTwoPoint { p_low, p_high, hint_steps } => {
                write!(f, "{}(p_low={p_low},p_high={p_high},T_hint={hint_steps})", self.tag())
            }
            HintSchedule::Staged { stages, hint_steps } => write!(f, "staged(stages={stages},T_hint={hint_steps})"),
            _ => f.write_str(self.tag()),
        }
    }
}
