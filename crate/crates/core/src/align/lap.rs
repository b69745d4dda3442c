//! Maximum-weight linear assignment.

use crate::error::{Error, Result};
use crate::linalg::{exact_sum, Matrix};

/// Shortest-augmenting-path Hungarian method on an `n x n` cost matrix
/// (minimization). Returns the column of each row and the dual potentials
/// `(u, v)`, which satisfy `cost[i][j] - u[i] - v[j] >= 0` with equality on
/// the returned assignment.
fn hungarian_min(cost: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internally, index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_v = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        min_v.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    (assignment, u[1..].to_vec(), v[1..].to_vec())
}

fn sub_costs(score: &Matrix, rows: std::ops::Range<usize>, cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for r in rows {
        out.extend(cols.iter().map(|&c| -score.get(r, c)));
    }
    out
}

fn assignment_value(score: &Matrix, first_row: usize, cols: &[usize], local: &[usize]) -> f64 {
    exact_sum(
        local
            .iter()
            .enumerate()
            .map(|(k, &j)| score.get(first_row + k, cols[j])),
    )
}

/// Optimal value of the assignment restricted to rows `first_row..n` and the
/// given columns.
fn best_value(score: &Matrix, first_row: usize, cols: &[usize]) -> f64 {
    let m = cols.len();
    if m == 0 {
        return 0.0;
    }
    let (assign, _, _) = hungarian_min(&sub_costs(score, first_row..score.rows, cols), m);
    assignment_value(score, first_row, cols, &assign)
}

/// Permutation `sigma` maximizing `sum_i score[i][sigma[i]]`.
///
/// Among optimal permutations the lexicographically smallest is returned
/// (up to a relative tolerance of `1e-12` on the objective): rows are fixed
/// in order, each to the smallest column that still admits an optimal
/// completion. Only columns that are tight under the current optimal duals
/// are candidates, so the common case costs one Hungarian solve per row.
pub fn solve_lap(score: &Matrix) -> Result<Vec<usize>> {
    if score.rows != score.cols {
        return Err(Error::shape(
            "assignment score",
            "square matrix",
            format!("{}x{}", score.rows, score.cols),
        ));
    }
    score.ensure_finite("assignment score")?;
    let n = score.rows;
    let scale = score.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale * n.max(1) as f64;

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        let m = remaining.len();
        let costs = sub_costs(score, i..n, &remaining);
        let (assign, u, v) = hungarian_min(&costs, m);
        let best = assignment_value(score, i, &remaining, &assign);

        let mut chosen = assign[0];
        for j in 0..assign[0] {
            let reduced = costs[j] - u[0] - v[j];
            if reduced > tol {
                continue;
            }
            let mut rest = remaining.clone();
            let col = rest.remove(j);
            let value = score.get(i, col) + best_value(score, i + 1, &rest);
            if value >= best - tol {
                chosen = j;
                break;
            }
        }
        sigma.push(remaining.remove(chosen));
    }
    Ok(sigma)
}

/// `sum_i score[i][sigma[i]]`
pub fn assignment_score(score: &Matrix, sigma: &[usize]) -> f64 {
    exact_sum(sigma.iter().enumerate().map(|(i, &j)| score.get(i, j)))
}
