//! Countdown game as a search tree.
//!
//! A state is the list of remaining values. Each move picks an ordered pair of
//! values and one of `+ - * /`, replacing the pair by the result. Heights with
//! fewer moves than the root are padded with no-op branches whose subtrees
//! score zero, so every internal node has exactly `B = 4 n (n - 1)` children.

use num_rational::Ratio;

use super::{with_spec, SearchTree, TreeSpec, ACCURACY_REWARD, FORMAT_REWARD, INCORRECT_REWARD};
use crate::error::{invalid, Result};

type Value = Ratio<i128>;

const MAX_MAGNITUDE: i64 = 1_000_000;

#[derive(Debug, Clone, Copy)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

const OPS: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

impl Op {
    fn apply(self, x: Value, y: Value) -> Option<Value> {
        match self {
            Op::Add => Some(x + y),
            Op::Sub => Some(x - y),
            Op::Mul => Some(x * y),
            Op::Div if *y.numer() == 0 => None,
            Op::Div => Some(x / y),
        }
    }
}

fn moves(remaining: usize) -> usize {
    remaining * remaining.saturating_sub(1) * OPS.len()
}

/// Decodes move `choice` on `values`; `None` for no-op padding and division
/// by zero.
fn play(values: &[Value], choice: usize) -> Option<Vec<Value>> {
    let m = values.len();
    if choice >= moves(m) {
        return None;
    }
    let (pair, op) = (choice / OPS.len(), OPS[choice % OPS.len()]);
    let (i, j) = (pair / (m - 1), pair % (m - 1));
    let j = if j >= i { j + 1 } else { j };
    let result = op.apply(values[i], values[j])?;
    let mut next: Vec<Value> = values.iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, v)| *v).collect();
    next.push(result);
    Some(next)
}

pub fn build_countdown(numbers: &[i64], target: i64) -> Result<SearchTree> {
    if !(2..=4).contains(&numbers.len()) {
        return Err(invalid(format!("countdown needs 2 to 4 numbers, got {}", numbers.len())));
    }
    if numbers.iter().chain(std::iter::once(&target)).any(|x| x.abs() > MAX_MAGNITUDE) {
        return Err(invalid(format!("countdown values must lie within +/-{MAX_MAGNITUDE}")));
    }
    let n = numbers.len();
    let branching = moves(n);
    let height = n - 1;
    let leaves = branching.pow(height as u32);
    let mut rewards = vec![INCORRECT_REWARD; leaves];
    let start: Vec<Value> = numbers.iter().map(|&x| Value::from_integer(x as i128)).collect();
    let target = Value::from_integer(target as i128);
    fill(&start, 0, 0, branching, height, &target, &mut rewards);
    let tree = SearchTree::from_rewards(branching, height, rewards, None)?;
    Ok(with_spec(tree, TreeSpec::Countdown { numbers: numbers.to_vec(), target: *target.numer() as i64 }))
}

// Invalid subtrees keep the INCORRECT_REWARD they were initialized with.
fn fill(values: &[Value], height: usize, index: usize, b: usize, h_max: usize, target: &Value, rewards: &mut [f64]) {
    if height == h_max {
        rewards[index] = if values[0] == *target { ACCURACY_REWARD } else { FORMAT_REWARD };
        return;
    }
    for choice in 0..b {
        if let Some(next) = play(values, choice) {
            fill(&next, height + 1, index * b + choice, b, h_max, target, rewards);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig_two_instance_is_solvable() {
        let t = build_countdown(&[3, 5, 7, 13], 24).unwrap();
        assert_eq!(t.branching(), 48);
        assert_eq!(t.height(), 3);
        assert_eq!(t.optimal_reward(), 1.0);
        assert_eq!(t.reward(t.optimal_path().leaf()).unwrap(), 1.0);
    }

    #[test]
    fn single_addition() {
        let t = build_countdown(&[1, 1], 2).unwrap();
        assert_eq!(t.optimal_reward(), 1.0);
        // 1+1 in both orders
        assert_eq!(t.optimal_leaf_count(), 2);
    }

    #[test]
    fn unreachable_target() {
        // Oracle: every ordered pair and operation on (2, 3).
        let outcomes = [
            Value::from_integer(5),
            Value::from_integer(5),
            Value::from_integer(-1),
            Value::from_integer(1),
            Value::from_integer(6),
            Value::from_integer(6),
            Value::new(2, 3),
            Value::new(3, 2),
        ];
        assert!(!outcomes.contains(&Value::from_integer(7)));
        let t = build_countdown(&[2, 3], 7).unwrap();
        assert_eq!(t.optimal_reward(), FORMAT_REWARD);
        assert!(t.leaf_rewards().iter().all(|&r| r == FORMAT_REWARD));
    }

    #[test]
    fn division_by_zero_branch_scores_zero() {
        let t = build_countdown(&[4, 0], 4).unwrap();
        // moves: (4,0)+ (4,0)- (4,0)* (4,0)/ (0,4)+ (0,4)- (0,4)* (0,4)/
        assert_eq!(t.leaf_rewards()[3], INCORRECT_REWARD);
        assert_eq!(t.leaf_rewards()[0], ACCURACY_REWARD);
        assert_eq!(t.leaf_rewards()[7], FORMAT_REWARD);
    }

    #[test]
    fn padding_leads_to_zero_leaves() {
        let t = build_countdown(&[1, 2, 3], 6).unwrap();
        assert_eq!(t.branching(), 24);
        // after one move only 8 real moves remain; choices 8..24 are padding
        for pad in 8..24 {
            assert_eq!(t.leaf_rewards()[pad], INCORRECT_REWARD);
        }
        assert_eq!(t.optimal_reward(), 1.0);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_countdown(&[], 1).is_err());
        assert!(build_countdown(&[1], 1).is_err());
        assert!(build_countdown(&[1, 2, 3, 4, 5], 1).is_err());
    }
}
