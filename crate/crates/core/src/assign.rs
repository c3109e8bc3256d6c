//! Rectangular linear assignment (Hungarian method with potentials).
//!
//! Two matching flavors are built on the same solver:
//! [`min_cost_matching`] maximizes the number of allowed pairs first and then
//! minimizes their summed cost, and [`max_weight_matching`] maximizes summed
//! weight where leaving an item unmatched is free.

use alloc::vec;
use alloc::vec::Vec;

/// Assigns every row of `cost` (rows <= cols) to a distinct column with
/// minimum total cost. Returns `row -> column`.
///
/// Columns are scanned in index order and only a strictly smaller reduced
/// cost replaces the current pick, so equal-cost ties resolve towards lower
/// row and column indices.
fn hungarian_rows(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let m = cols;
    debug_assert!(n <= m);
    // 1-based potentials; p[j] = row matched to column j (0 = free)
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Minimum-cost assignment for an arbitrary `rows x cols` matrix of finite
/// costs. Every item of the smaller side is assigned; the result maps each row
/// to its column, or `None` when the row is left over.
pub fn solve(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        hungarian_rows(cost, cols).into_iter().map(Some).collect()
    } else {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let col_to_row = hungarian_rows(&transposed, rows);
        let mut out = vec![None; rows];
        for (j, &i) in col_to_row.iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }
}

/// Among all matchings that use only allowed (`Some`) entries, picks one with
/// the largest number of pairs and, among those, the smallest total cost.
pub fn min_cost_matching(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let max_abs = cost.iter().flatten().flatten().fold(0.0f64, |a, &c| a.max(c.abs()));
    // any extra allowed pair outweighs every possible cost difference
    let forbidden = 1.0 + 2.0 * rows.min(cols) as f64 * max_abs;
    let dense: Vec<Vec<f64>> = cost.iter().map(|r| r.iter().map(|c| c.unwrap_or(forbidden)).collect()).collect();
    collect_allowed(cost, &solve(&dense))
}

/// Maximizes the summed weight of allowed (`Some`) pairs; every item may stay
/// unmatched at no cost. Weights are expected to be positive.
pub fn max_weight_matching(weight: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = weight.len();
    let cols = weight.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let dense: Vec<Vec<f64>> = weight.iter().map(|r| r.iter().map(|w| w.map_or(0.0, |w| -w)).collect()).collect();
    collect_allowed(weight, &solve(&dense))
}

fn collect_allowed(m: &[Vec<Option<f64>>], assignment: &[Option<usize>]) -> Vec<(usize, usize)> {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| m[i][j].is_some()).map(|j| (i, j)))
        .collect()
}
