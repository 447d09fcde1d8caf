//! Permutation-invariant assignment of estimates to sources.

use crate::error::{Error, Result};

/// Largest source count solved by exhaustive search.
pub const BRUTE_FORCE_MAX: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct PitResult {
    /// `permutation[i]` is the source matched to estimate `i`.
    pub permutation: Vec<usize>,
    /// Mean of the selected costs.
    pub loss: f64,
}

fn check_square(cost: &[Vec<f64>]) -> Result<usize> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|row| row.len() != n) {
        return Err(Error::config(format!(
            "PIT needs a non-empty square cost matrix, got {} rows of lengths {:?}",
            n,
            cost.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(n)
}

fn total(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

/// Next permutation in lexicographic order; false after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Exhaustive search; the first minimum in lexicographic order wins.
pub fn brute_force_assign(cost: &[Vec<f64>]) -> Result<PitResult> {
    let n = check_square(cost)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (total(cost, &perm), perm.clone());
    while next_permutation(&mut perm) {
        let t = total(cost, &perm);
        if t < best.0 {
            best = (t, perm.clone());
        }
    }
    Ok(PitResult {
        loss: best.0 / n as f64,
        permutation: best.1,
    })
}

/// Minimum-cost assignment by the Hungarian method with potentials,
/// `O(n^3)`. Ties are not broken in any particular order.
pub fn assignment_solver(cost: &[Vec<f64>]) -> Result<PitResult> {
    let n = check_square(cost)?;
    let perm = hungarian(cost, n);
    Ok(PitResult {
        loss: total(cost, &perm) / n as f64,
        permutation: perm,
    })
}

fn hungarian(cost: &[Vec<f64>], n: usize) -> Vec<usize> {
    // 1-based rows/columns; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[row_of[j] - 1] = j - 1;
    }
    perm
}

/// Lexicographically smallest optimal assignment: fixes estimates in order,
/// taking the smallest source that still admits an optimal completion.
fn lexicographic_assign(cost: &[Vec<f64>], n: usize) -> PitResult {
    let optimum = total(cost, &hungarian(cost, n));
    let slack = 1e-12 * (1.0 + optimum.abs());
    let mut perm = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let free: Vec<usize> = (0..n).filter(|j| !perm.contains(j)).collect();
        let choice = free
            .iter()
            .copied()
            .find(|&j| {
                let rest_rows = i + 1..n;
                let rest_cols: Vec<usize> = free.iter().copied().filter(|&c| c != j).collect();
                let rest = if rest_cols.is_empty() {
                    0.0
                } else {
                    let sub: Vec<Vec<f64>> = rest_rows
                        .clone()
                        .map(|r| rest_cols.iter().map(|&c| cost[r][c]).collect())
                        .collect();
                    total(&sub, &hungarian(&sub, sub.len()))
                };
                fixed_cost + cost[i][j] + rest <= optimum + slack
            })
            .unwrap_or(free[0]);
        fixed_cost += cost[i][choice];
        perm.push(choice);
    }
    PitResult {
        loss: total(cost, &perm) / n as f64,
        permutation: perm,
    }
}

/// Minimum-mean-cost assignment: exhaustive for up to
/// [`BRUTE_FORCE_MAX`] sources, Hungarian beyond that.
pub fn pit_assign(cost: &[Vec<f64>]) -> Result<PitResult> {
    let n = check_square(cost)?;
    if n <= BRUTE_FORCE_MAX {
        brute_force_assign(cost)
    } else {
        Ok(lexicographic_assign(cost, n))
    }
}
