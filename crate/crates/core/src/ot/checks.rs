//! Numerical verifiers for duality, convexity of the W1 energy, and its
//! linear functional derivative.

use super::{ground_cost, w1_exact, DiscreteMeasure};
use crate::error::{Error, Result};

/// Slack allowed on the pairwise Lipschitz test inside [`duality_gap`].
pub const LIPSCHITZ_TOL: f64 = 1e-9;

/// Slack on the convexity inequality.
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Slack on each side of the derivative sandwich.
pub const SANDWICH_TOL: f64 = 1e-7;

/// `w1_exact(mu, nu) − (∫phi dmu − ∫phi dnu)` for a candidate potential given
/// by its values on the concatenated supports (`mu`'s points first, then
/// `nu`'s). Nonnegative for any 1-Lipschitz function, zero exactly at an
/// optimal potential.
///
/// 1-Lipschitz-ness is enforced pairwise on the supplied points; a violation
/// reports the offending pair.
pub fn duality_gap(phi: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let (n, m) = (mu.len(), nu.len());
    if phi.len() != n + m {
        return Err(Error::invalid(format!(
            "need {} potential values ({} source + {} target points), got {}",
            n + m,
            n,
            m,
            phi.len()
        )));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("potential values must be finite"));
    }
    let point = |k: usize| {
        if k < n {
            mu.point(k)
        } else {
            nu.point(k - n)
        }
    };
    for i in 0..n + m {
        for j in i + 1..n + m {
            let delta_phi = (phi[i] - phi[j]).abs();
            let distance = ground_cost(point(i), point(j));
            if delta_phi > distance + LIPSCHITZ_TOL {
                return Err(Error::LipschitzViolation {
                    i,
                    j,
                    delta_phi,
                    distance,
                });
            }
        }
    }
    let (value, _, _) = w1_exact(mu, nu)?;
    let pairing: f64 = mu
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * phi[i])
        .sum::<f64>()
        - nu
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * phi[n + j])
            .sum::<f64>();
    Ok(value - pairing)
}

/// Slack in the convexity inequality of `J(·) = W1(·, mu_d)` along the mixing
/// segment: `(1−λ)·J(mu) + λ·J(nu) − J((1−λ)mu + λnu)`. Nonnegative (up to
/// tolerance) because a mixture of optimal couplings is feasible for the
/// mixture.
pub fn convexity_gap(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_d: &DiscreteMeasure,
    lambda: f64,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid(format!(
            "mixing coefficient must lie in (0,1), got {lambda}"
        )));
    }
    let mixed = DiscreteMeasure::mix(mu, nu, lambda)?;
    let j_mix = w1_exact(&mixed, mu_d)?.0;
    let j_mu = w1_exact(mu, mu_d)?.0;
    let j_nu = w1_exact(nu, mu_d)?.0;
    Ok((1.0 - lambda) * j_mu + lambda * j_nu - j_mix)
}

/// Verifies convexity of the W1 energy along the segment from `mu` to `nu`:
/// `W1((1−λ)mu + λnu, mu_d) ≤ (1−λ)·W1(mu, mu_d) + λ·W1(nu, mu_d)`.
pub fn convexity_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_d: &DiscreteMeasure,
    lambda: f64,
) -> Result<bool> {
    Ok(convexity_gap(mu, nu, mu_d, lambda)? >= -CONVEXITY_TOL)
}

/// Two-sided bound on the difference quotient of `J(·) = W1(·, mu_d)` along
/// `mu_eps = mu + ε(nu − mu)`, produced by [`lfd_sandwich_check`].
#[derive(Debug, Clone, Copy)]
pub struct SandwichReport {
    /// `∫ phi_mu d(nu − mu)`: pairing against the potential at the base point.
    pub lower: f64,
    /// `(J(mu_eps) − J(mu)) / ε`.
    pub ratio: f64,
    /// `∫ phi_mu_eps d(nu − mu)`: pairing against the perturbed potential.
    pub upper: f64,
    /// Whether `lower ≤ ratio ≤ upper` within [`SANDWICH_TOL`] per side.
    pub holds: bool,
}

impl SandwichReport {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Checks the derivative sandwich for the W1 energy: the difference quotient
/// of `J` along the segment toward `nu` is bracketed by pairings of `nu − mu`
/// against the Kantorovich potentials at the segment's two ends.
///
/// Both potentials come from `w1_exact` duals. To read a potential at points
/// outside its own support, `mu` is carried on the concatenated support of
/// `mu` and `nu` (extra atoms at weight zero), which the solver's c-transform
/// extension covers; `mu_eps` lives on that same concatenated support by
/// construction, so both dual vectors index identically.
pub fn lfd_sandwich_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mu_d: &DiscreteMeasure,
    eps: f64,
) -> Result<SandwichReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!(
            "perturbation size must lie in (0,1), got {eps}"
        )));
    }
    let base = DiscreteMeasure::mix(mu, nu, 0.0)?; // mu on the union support
    let pert = DiscreteMeasure::mix(mu, nu, eps)?; // mu + ε(nu − mu)

    let (j_base, _, duals_base) = w1_exact(&base, mu_d)?;
    let (j_pert, _, duals_pert) = w1_exact(&pert, mu_d)?;
    let ratio = (j_pert - j_base) / eps;

    // ∫ phi d(nu − mu) on the shared support layout: mu's atoms occupy the
    // first block, nu's the second.
    let pair_diff = |phi: &[f64]| -> f64 {
        let n = mu.len();
        let nu_side: f64 = nu
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * phi[n + j])
            .sum();
        let mu_side: f64 = mu
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * phi[i])
            .sum();
        nu_side - mu_side
    };
    let lower = pair_diff(&duals_base.f);
    let upper = pair_diff(&duals_pert.f);
    let holds = lower - SANDWICH_TOL <= ratio && ratio <= upper + SANDWICH_TOL;
    Ok(SandwichReport {
        lower,
        ratio,
        upper,
        holds,
    })
}
