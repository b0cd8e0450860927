//! Exact transportation LP via successive shortest augmenting paths.
//!
//! Bipartite flow network: a super-source feeding every supply atom, complete
//! supply→demand arcs carrying the ground cost, and demand atoms draining
//! into a super-sink. Node potentials keep reduced costs nonnegative so each
//! augmentation is a plain Dijkstra; with all pair arcs present the network
//! stays connected while any supply remains.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Residual capacity below which an arc is treated as saturated.
const RES_EPS: f64 = 1e-15;

/// Mass below which remaining supply counts as fully routed.
const MASS_EPS: f64 = 1e-12;

pub(crate) struct TransportSolution {
    /// Optimal coupling on the given supports (n × m).
    pub flow: Tensor<f64>,
    /// Total transport cost.
    pub value: f64,
    /// Supply-side duals; `f[i] + g[j] ≤ cost[i][j]`.
    pub f: Vec<f64>,
    /// Demand-side duals. Callers extending duals past this support
    /// recompute the demand side from `f` by c-transform, so outside of
    /// tests only `f` is consumed.
    #[cfg_attr(not(test), allow(dead_code))]
    pub g: Vec<f64>,
}

/// Solves `min Σ x_ij·cost_ij` subject to row sums = `supply`, column sums =
/// `demand`, `x ≥ 0`. All supplies and demands must be strictly positive
/// (callers filter zero-weight atoms) and balanced within 1e−9.
pub(crate) fn solve_transport(
    cost: &Tensor<f64>,
    supply: &[f64],
    demand: &[f64],
) -> Result<TransportSolution> {
    let n = supply.len();
    let m = demand.len();
    if cost.shape() != (n, m) {
        return Err(Error::invalid(format!(
            "cost matrix {}x{} does not match {n} supplies and {m} demands",
            cost.rows(),
            cost.cols()
        )));
    }
    if supply.iter().chain(demand).any(|&w| w <= 0.0 || !w.is_finite()) {
        return Err(Error::invalid("supplies and demands must be positive"));
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "unbalanced problem: supply {total_supply:e} vs demand {total_demand:e}"
        )));
    }

    // Node ids: 0 = source, 1..=n supplies, n+1..=n+m demands, n+m+1 = sink.
    let v_count = n + m + 2;
    let src = 0usize;
    let snk = n + m + 1;
    let sup_node = |i: usize| 1 + i;
    let dem_node = |j: usize| 1 + n + j;

    let mut flow = Tensor::zeros(n, m);
    let mut sent = vec![0.0f64; n];
    let mut recv = vec![0.0f64; m];
    let mut pi = vec![0.0f64; v_count];

    let mut dist = vec![f64::INFINITY; v_count];
    let mut prev = vec![usize::MAX; v_count];
    let mut done = vec![false; v_count];

    let max_rounds = 4 * (n + m) + 64;
    for _round in 0..max_rounds {
        let remaining: f64 = supply.iter().zip(&sent).map(|(a, s)| a - s).sum();
        if remaining <= MASS_EPS {
            let value = transport_value(cost, &flow);
            let f = (0..n).map(|i| -pi[sup_node(i)]).collect();
            let g = (0..m).map(|j| pi[dem_node(j)]).collect();
            return Ok(TransportSolution { flow, value, f, g });
        }

        // Dijkstra on reduced costs (dense O(V²) selection).
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..v_count {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX || u == snk {
                break;
            }
            done[u] = true;
            let relax = |v: usize, w: f64, dist: &mut [f64], prev: &mut [usize]| {
                // Clamp rounding-level negatives out of the reduced cost.
                let nd = dist[u] + w.max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == src {
                for i in 0..n {
                    if supply[i] - sent[i] > RES_EPS {
                        relax(sup_node(i), pi[src] - pi[sup_node(i)], &mut dist, &mut prev);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    let w = cost.get(i, j) + pi[u] - pi[dem_node(j)];
                    relax(dem_node(j), w, &mut dist, &mut prev);
                }
            } else if u < snk {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow.get(i, j) > RES_EPS {
                        let w = -cost.get(i, j) + pi[u] - pi[sup_node(i)];
                        relax(sup_node(i), w, &mut dist, &mut prev);
                    }
                }
                if demand[j] - recv[j] > RES_EPS {
                    relax(snk, pi[u] - pi[snk], &mut dist, &mut prev);
                }
            }
        }

        if !dist[snk].is_finite() {
            return Err(Error::SolverStalled {
                reason: format!(
                    "transport: no augmenting path with {remaining:e} supply unrouted"
                ),
            });
        }
        let d_snk = dist[snk];
        for v in 0..v_count {
            pi[v] += dist[v].min(d_snk);
        }

        // Bottleneck along the augmenting path.
        let mut delta = remaining;
        let mut v = snk;
        while v != src {
            let u = prev[v];
            delta = delta.min(residual(u, v, n, supply, demand, &sent, &recv, &flow));
            v = u;
        }

        // Apply the augmentation.
        let mut v = snk;
        while v != src {
            let u = prev[v];
            if u == src {
                sent[v - 1] += delta;
            } else if u <= n && v != snk {
                flow.set(u - 1, v - 1 - n, flow.get(u - 1, v - 1 - n) + delta);
            } else if u > n && v != snk {
                // Backward arc demand→supply cancels previously routed flow.
                let (i, j) = (v - 1, u - 1 - n);
                flow.set(i, j, flow.get(i, j) - delta);
            } else {
                recv[u - 1 - n] += delta;
            }
            v = u;
        }
    }

    Err(Error::SolverStalled {
        reason: format!("transport: augmentation budget exhausted ({max_rounds} rounds)"),
    })
}

#[allow(clippy::too_many_arguments)]
fn residual(
    u: usize,
    v: usize,
    n: usize,
    supply: &[f64],
    demand: &[f64],
    sent: &[f64],
    recv: &[f64],
    flow: &Tensor<f64>,
) -> f64 {
    let snk = n + demand.len() + 1;
    if u == 0 {
        supply[v - 1] - sent[v - 1]
    } else if v == snk {
        demand[u - 1 - n] - recv[u - 1 - n]
    } else if u <= n {
        f64::INFINITY // forward supply→demand arc is uncapacitated
    } else {
        flow.get(v - 1, u - 1 - n)
    }
}

fn transport_value(cost: &Tensor<f64>, flow: &Tensor<f64>) -> f64 {
    cost.data()
        .iter()
        .zip(flow.data())
        .map(|(c, x)| c * x)
        .sum()
}
