//! Exact Wasserstein-1 machinery on discrete measures.
//!
//! Everything here is solved to optimality, not approximated: equal-size
//! uniform instances go through a dense assignment solver, general weights
//! through a transportation LP, and 1-D instances additionally have closed
//! forms (order statistics, CDF integration, piecewise-linear potentials).
//! Every solve returns primal and dual certificates and checks them against
//! each other before handing the result back.

mod assignment;
mod checks;
mod measure;
mod oracle1d;
mod potential1d;
mod transport;

pub use checks::{
    convexity_check, convexity_gap, duality_gap, lfd_sandwich_check, SandwichReport,
    CONVEXITY_TOL, LIPSCHITZ_TOL, SANDWICH_TOL,
};
pub use measure::DiscreteMeasure;
pub use oracle1d::{w1_brute_force_uniform, w1_cdf_1d, w1_sorted_1d, BRUTE_FORCE_CAP};
pub use potential1d::{kantorovich_potential_1d, PiecewisePotential};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default cap on `n·m` for exact solves (both solvers are at least quadratic
/// in memory and cubic in time; past this point minibatch estimates are the
/// intended tool).
pub const DEFAULT_SIZE_CAP: usize = 512 * 512;

/// Slack used when validating primal/dual certificates.
pub const CERT_TOL: f64 = 1e-9;

/// Euclidean ground cost. In one dimension the absolute difference is used
/// directly so that values agree bit-for-bit with the 1-D closed forms.
pub fn ground_cost(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if x.len() == 1 {
        return (x[0] - y[0]).abs();
    }
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise ground costs, `n × m`.
pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Tensor<f64>> {
    if mu.dim() != nu.dim() {
        return Err(Error::invalid(format!(
            "measures live in R^{} and R^{}",
            mu.dim(),
            nu.dim()
        )));
    }
    let mut c = Tensor::zeros(mu.len(), nu.len());
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            c.set(i, j, ground_cost(mu.point(i), nu.point(j)));
        }
    }
    Ok(c)
}

/// Optimal coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// Nonnegative `n × m` matrix with row sums = source weights and column
    /// sums = target weights.
    pub coupling: Tensor<f64>,
    /// Total cost of the coupling (= W1 at optimality).
    pub value: f64,
}

/// Dual certificate: potentials on the two supports with
/// `f[i] + g[j] ≤ |x_i − y_j|` and `Σf·mu + Σg·nu` equal to the primal value.
/// Normalized so `f[0] = 0` (potentials are only defined up to a constant).
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl TransportPlan {
    /// Checks marginals and cost consistency against the given measures.
    pub fn validate(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        let (n, m) = (mu.len(), nu.len());
        if self.coupling.shape() != (n, m) {
            return Err(Error::invalid("coupling shape does not match supports"));
        }
        if self.coupling.data().iter().any(|&x| x < -CERT_TOL) {
            return Err(Error::invalid("coupling has negative entries"));
        }
        for i in 0..n {
            let row: f64 = self.coupling.row(i).iter().sum();
            if (row - mu.weights()[i]).abs() > CERT_TOL {
                return Err(Error::invalid(format!(
                    "row {i} marginal {row:e} != source weight {:e}",
                    mu.weights()[i]
                )));
            }
        }
        for j in 0..m {
            let col: f64 = (0..n).map(|i| self.coupling.get(i, j)).sum();
            if (col - nu.weights()[j]).abs() > CERT_TOL {
                return Err(Error::invalid(format!(
                    "column {j} marginal {col:e} != target weight {:e}",
                    nu.weights()[j]
                )));
            }
        }
        let cost = cost_matrix(mu, nu)?;
        let recomputed: f64 = cost
            .data()
            .iter()
            .zip(self.coupling.data())
            .map(|(c, x)| c * x)
            .sum();
        if (recomputed - self.value).abs() > CERT_TOL {
            return Err(Error::invalid(format!(
                "plan value {:e} != coupling cost {recomputed:e}",
                self.value
            )));
        }
        Ok(())
    }
}

impl DualPotentials {
    /// Checks feasibility on all support pairs and strong duality against the
    /// claimed primal value.
    pub fn validate(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, value: f64) -> Result<()> {
        if self.f.len() != mu.len() || self.g.len() != nu.len() {
            return Err(Error::invalid("dual lengths do not match supports"));
        }
        for (i, &fi) in self.f.iter().enumerate() {
            for (j, &gj) in self.g.iter().enumerate() {
                let c = ground_cost(mu.point(i), nu.point(j));
                if fi + gj > c + CERT_TOL {
                    return Err(Error::invalid(format!(
                        "dual infeasible at ({i},{j}): {fi:e} + {gj:e} > {c:e}"
                    )));
                }
            }
        }
        let dual: f64 = self
            .f
            .iter()
            .zip(mu.weights())
            .map(|(f, w)| f * w)
            .sum::<f64>()
            + self
                .g
                .iter()
                .zip(nu.weights())
                .map(|(g, w)| g * w)
                .sum::<f64>();
        if (dual - value).abs() > CERT_TOL {
            return Err(Error::invalid(format!(
                "strong duality violated: dual {dual:e} vs primal {value:e}"
            )));
        }
        Ok(())
    }
}

/// Exact W1 under Euclidean cost, with optimal coupling and dual potentials.
///
/// Equal-size uniform instances route to the assignment solver; anything else
/// to the transportation LP (zero-weight atoms are filtered out of the solve
/// and their potentials recovered by c-transform afterwards, preserving
/// optimality). All certificates are validated before returning. Uses the
/// default size cap; see [`w1_exact_capped`].
pub fn w1_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(f64, TransportPlan, DualPotentials)> {
    w1_exact_capped(mu, nu, DEFAULT_SIZE_CAP)
}

/// [`w1_exact`] with an explicit `n·m` cap.
pub fn w1_exact_capped(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cap: usize,
) -> Result<(f64, TransportPlan, DualPotentials)> {
    if mu.dim() != nu.dim() {
        return Err(Error::invalid(format!(
            "measures live in R^{} and R^{}",
            mu.dim(),
            nu.dim()
        )));
    }
    let (n, m) = (mu.len(), nu.len());
    if n * m > cap {
        return Err(Error::SizeCap { n, m, cap });
    }

    let (value, coupling, f, g) = if n == m && mu.is_uniform() && nu.is_uniform() {
        solve_uniform(mu, nu)?
    } else {
        solve_general(mu, nu)?
    };

    let (f, g) = normalize_duals(f, g);
    let plan = TransportPlan { coupling, value };
    let duals = DualPotentials { f, g };
    plan.validate(mu, nu)?;
    duals.validate(mu, nu, value)?;
    Ok((value, plan, duals))
}

/// `(value, coupling, f, g)` as produced by a solver backend, before the
/// duals are normalized and the certificates are checked.
type RawSolution = (f64, Tensor<f64>, Vec<f64>, Vec<f64>);

/// Equal-size uniform case: minimum-cost perfect matching. The matching duals
/// are exactly the transport duals.
fn solve_uniform(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<RawSolution> {
    let n = mu.len();
    let cost = cost_matrix(mu, nu)?;
    let a = assignment::solve_assignment(&cost)?;
    let w = 1.0 / n as f64;
    let mut coupling = Tensor::zeros(n, n);
    for (i, &j) in a.row_to_col.iter().enumerate() {
        coupling.set(i, j, w);
    }
    let value = a.total_cost(&cost) / n as f64;
    Ok((value, coupling, a.u, a.v))
}

/// General weights: filter zero-weight atoms, solve the transportation LP on
/// the positive part, then extend the duals back to the full supports with a
/// double c-transform (`g(j) = min_i c_ij − f(i)` over positive sources, then
/// `f(i) = min_j c_ij − g(j)` over all targets). The extension is feasible
/// everywhere by construction and can only tighten the dual objective, which
/// weak duality pins at the optimal value.
fn solve_general(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<RawSolution> {
    let (n, m) = (mu.len(), nu.len());
    let src: Vec<usize> = (0..n).filter(|&i| mu.weights()[i] > 0.0).collect();
    let tgt: Vec<usize> = (0..m).filter(|&j| nu.weights()[j] > 0.0).collect();
    let supply: Vec<f64> = src.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = tgt.iter().map(|&j| nu.weights()[j]).collect();

    let mut sub_cost = Tensor::zeros(src.len(), tgt.len());
    for (si, &i) in src.iter().enumerate() {
        for (tj, &j) in tgt.iter().enumerate() {
            sub_cost.set(si, tj, ground_cost(mu.point(i), nu.point(j)));
        }
    }
    let sol = transport::solve_transport(&sub_cost, &supply, &demand)?;

    let mut coupling = Tensor::zeros(n, m);
    for (si, &i) in src.iter().enumerate() {
        for (tj, &j) in tgt.iter().enumerate() {
            coupling.set(i, j, sol.flow.get(si, tj));
        }
    }

    let full_cost = cost_matrix(mu, nu)?;
    let g: Vec<f64> = (0..m)
        .map(|j| {
            src.iter()
                .enumerate()
                .map(|(si, &i)| full_cost.get(i, j) - sol.f[si])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let f: Vec<f64> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| full_cost.get(i, j) - g[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok((sol.value, coupling, f, g))
}

/// Shifts the additive gauge freedom so that `f[0] = 0`.
fn normalize_duals(mut f: Vec<f64>, mut g: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let shift = f[0];
    for v in &mut f {
        *v -= shift;
    }
    for v in &mut g {
        *v += shift;
    }
    (f, g)
}
