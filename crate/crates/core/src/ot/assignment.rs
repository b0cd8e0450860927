//! Dense O(n³) minimum-cost assignment with dual potentials.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) struct Assignment {
    /// Column matched to each row.
    pub row_to_col: Vec<usize>,
    /// Row duals; `u[i] + v[j] ≤ cost[i][j]` with equality on matched pairs.
    pub u: Vec<f64>,
    /// Column duals.
    pub v: Vec<f64>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &Tensor<f64>) -> f64 {
        self.row_to_col
            .iter()
            .enumerate()
            .map(|(i, &j)| cost.get(i, j))
            .sum()
    }
}

/// Shortest-augmenting-path assignment (Jonker–Volgenant style) on a square
/// cost matrix. Runs in O(n³); exact up to floating-point accumulation, with
/// feasible duals maintained throughout. Indexing is 1-based internally with
/// row 0 / column 0 as staging slots.
pub(crate) fn solve_assignment(cost: &Tensor<f64>) -> Result<Assignment> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::invalid(format!(
            "assignment needs a square matrix, found {}x{}",
            n,
            cost.cols()
        )));
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // col_row[j] = row currently matched to column j (0 = unmatched).
    let mut col_row = vec![0usize; n + 1];
    // way[j] = previous column on the alternating path into j.
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        // Unwind the alternating path, flipping matched edges.
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        row_to_col[col_row[j] - 1] = j - 1;
    }
    Ok(Assignment {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    })
}
