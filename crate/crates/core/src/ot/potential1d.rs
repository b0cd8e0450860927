//! Closed-form Kantorovich potentials in one dimension.
//!
//! Between consecutive support points the optimal potential for the distance
//! cost has slope `sign(F_nu − F_mu)`; integrating that slope from the left
//! edge of the support hull gives an explicit piecewise-linear potential and,
//! with it, an explicit steepest-descent step for particles.

use super::DiscreteMeasure;
use crate::error::{Error, Result};

/// CDF differences smaller than this count as zero when choosing slopes.
const SIGN_TOL: f64 = 1e-12;

/// Piecewise-linear function on the union of two 1-D supports, constant
/// outside the hull. Breakpoints are strictly increasing; slope `k` applies
/// on `[breakpoints[k], breakpoints[k+1])` and lies in `{−1, 0, +1}`.
#[derive(Debug, Clone)]
pub struct PiecewisePotential {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// `F_nu − F_mu` held on each open interval (right-continuous CDFs).
    cdf_gap: Vec<f64>,
}

/// Exact optimal potential for `W1(mu, nu)` in one dimension, normalized so
/// that `phi(min support) = 0`. Satisfies `∫ phi d(mu − nu) = W1(mu, nu)`.
pub fn kantorovich_potential_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<PiecewisePotential> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::invalid(format!(
            "1-D potential needs 1-D measures, found d={} and d={}",
            mu.dim(),
            nu.dim()
        )));
    }
    // Merge both supports; accumulate per-location mass for each side.
    let mut events: Vec<(f64, f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for i in 0..mu.len() {
        events.push((mu.point(i)[0], mu.weights()[i], 0.0));
    }
    for j in 0..nu.len() {
        events.push((nu.point(j)[0], 0.0, nu.weights()[j]));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut breakpoints = Vec::new();
    let mut gaps = Vec::new();
    let mut f_mu = 0.0;
    let mut f_nu = 0.0;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        while k < events.len() && events[k].0 == t {
            f_mu += events[k].1;
            f_nu += events[k].2;
            k += 1;
        }
        breakpoints.push(t);
        gaps.push(f_nu - f_mu);
    }
    gaps.pop(); // beyond the last point both CDFs are 1

    let slopes: Vec<f64> = gaps
        .iter()
        .map(|&gap| {
            if gap > SIGN_TOL {
                1.0
            } else if gap < -SIGN_TOL {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut values = vec![0.0; breakpoints.len()];
    for idx in 0..slopes.len() {
        values[idx + 1] = values[idx] + slopes[idx] * (breakpoints[idx + 1] - breakpoints[idx]);
    }
    Ok(PiecewisePotential {
        breakpoints,
        values,
        slopes,
        cdf_gap: gaps,
    })
}

impl PiecewisePotential {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interval slopes, in `{−1, 0, +1}`; `slopes()[k]` applies between
    /// breakpoints `k` and `k+1`.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `F_nu − F_mu` on each interval.
    pub fn cdf_gap(&self) -> &[f64] {
        &self.cdf_gap
    }

    /// Potential value; constant extension outside the support hull.
    pub fn eval(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0] {
            return self.values[0];
        }
        if t >= *bp.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let k = interval_of(bp, t);
        self.values[k] + self.slopes[k] * (t - bp[k])
    }

    /// Signed CDF gap governing motion at `t`: the interval value strictly
    /// between breakpoints, the average of the two adjacent intervals exactly
    /// at a breakpoint (gaps vanish outside the hull), and 0 outside.
    fn gap_at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        let last = bp.len() - 1;
        if t < bp[0] || t > bp[last] {
            return 0.0;
        }
        if let Some(k) = bp.iter().position(|&b| b == t) {
            let left = if k == 0 { 0.0 } else { self.cdf_gap[k - 1] };
            let right = if k == last { 0.0 } else { self.cdf_gap[k] };
            return 0.5 * (left + right);
        }
        self.cdf_gap[interval_of(bp, t)]
    }

    /// Slope of the potential at `t` (descent direction is its negation).
    /// At breakpoints this is the subgradient midpoint's sign.
    pub fn slope_at(&self, t: f64) -> f64 {
        let gap = self.gap_at(t);
        if gap > SIGN_TOL {
            1.0
        } else if gap < -SIGN_TOL {
            -1.0
        } else {
            0.0
        }
    }

    /// One explicit Euler step of the Wasserstein descent `y ← y − ε·phi'(y)`,
    /// truncated where the transport direction flips.
    ///
    /// A particle moving with the unit descent direction keeps reducing W1
    /// only while the CDF gap ahead of it keeps the same sign; the step
    /// therefore stops at the first breakpoint beyond which the sign differs
    /// (never past the support hull). Off-support gap-zero points absorb the
    /// particle (zero slope, no motion).
    pub fn flow_step(&self, y: f64, eps: f64) -> f64 {
        let s = self.slope_at(y);
        if s == 0.0 || eps <= 0.0 {
            return y;
        }
        let dir = -s; // descend the potential
        let stop = self.first_flip(y, s, dir);
        let dist = (stop - y).abs();
        y + dir * eps.min(dist)
    }

    /// First point at or beyond `y` (in direction `dir`) where the interval
    /// sign stops matching `s`; falls back to the hull edge.
    fn first_flip(&self, y: f64, s: f64, dir: f64) -> f64 {
        let bp = &self.breakpoints;
        let last = bp.len() - 1;
        let sign_of = |gap: f64| {
            if gap > SIGN_TOL {
                1.0
            } else if gap < -SIGN_TOL {
                -1.0
            } else {
                0.0
            }
        };
        if dir > 0.0 {
            // Interval immediately to the right of y.
            let mut k = if y < bp[0] {
                return bp[0]; // outside hull; cannot happen with s != 0
            } else if let Some(pos) = bp.iter().position(|&b| b == y) {
                pos
            } else {
                interval_of(bp, y)
            };
            while k < last && sign_of(self.cdf_gap[k]) == s {
                k += 1;
            }
            bp[k]
        } else {
            let mut k = if y > bp[last] {
                return bp[last];
            } else if let Some(pos) = bp.iter().position(|&b| b == y) {
                pos
            } else {
                interval_of(bp, y) + 1
            };
            while k > 0 && sign_of(self.cdf_gap[k - 1]) == s {
                k -= 1;
            }
            bp[k]
        }
    }

    /// Applies [`Self::flow_step`] to every coordinate in place.
    pub fn flow(&self, ys: &mut [f64], eps: f64) {
        for y in ys {
            *y = self.flow_step(*y, eps);
        }
    }

    /// `∫ phi d(mu − nu)`; equals `W1(mu, nu)` when the potential was built
    /// for the pair `(mu, nu)`.
    pub fn integral_difference(
        &self,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
    ) -> Result<f64> {
        if mu.dim() != 1 || nu.dim() != 1 {
            return Err(Error::invalid("integral_difference needs 1-D measures"));
        }
        let over = |m: &DiscreteMeasure| -> f64 {
            (0..m.len())
                .map(|i| m.weights()[i] * self.eval(m.point(i)[0]))
                .sum()
        };
        Ok(over(mu) - over(nu))
    }

    /// True when the CDF gap is bounded away from zero on every interior
    /// interval, which pins the potential (up to its constant) on the hull.
    pub fn is_unique_on_hull(&self) -> bool {
        self.cdf_gap.iter().all(|g| g.abs() > SIGN_TOL)
    }
}

/// Index `k` with `bp[k] <= t < bp[k+1]` for `t` strictly inside the hull.
fn interval_of(bp: &[f64], t: f64) -> usize {
    debug_assert!(t > bp[0] && t < *bp.last().unwrap());
    let k = bp.partition_point(|&b| b <= t);
    k - 1
}
