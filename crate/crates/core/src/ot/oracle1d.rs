//! Independent 1-D and small-instance references for the exact solvers.
//!
//! Three routes to the same number, with no shared code paths:
//! order-statistics matching for equal-size uniform samples, CDF-difference
//! integration for arbitrary weights, and exhaustive permutation search for
//! tiny instances. The LP solvers are tested against all three.

use super::{cost_matrix, DiscreteMeasure};
use crate::error::{Error, Result};

fn is_sorted(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

/// Exact W1 between uniform empirical measures on equal-size 1-D samples:
/// the mean absolute difference of order statistics `(1/m)·Σ|x_(i) − y_(i)|`.
///
/// Sorted inputs are used as-is; unsorted inputs are sorted into a local copy
/// first, so the value only depends on the sample multisets.
pub fn w1_sorted_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "sample counts differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.is_empty() {
        return Err(Error::invalid("empty samples"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let matched_mean = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64
    };
    if is_sorted(xs) && is_sorted(ys) {
        return Ok(matched_mean(xs, ys));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(matched_mean(&a, &b))
}

/// Exact W1 between arbitrary 1-D discrete measures via the closed form
/// `∫ |F_mu(t) − F_nu(t)| dt`.
///
/// Support points are stably sorted by value (ties keep source order, mu's
/// atoms before nu's), and all atoms at a shared location are applied before
/// the next interval is integrated.
pub fn w1_cdf_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::invalid(format!(
            "CDF oracle needs 1-D measures, found d={} and d={}",
            mu.dim(),
            nu.dim()
        )));
    }
    // (location, mass added to F_mu, mass added to F_nu)
    let mut events: Vec<(f64, f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for i in 0..mu.len() {
        events.push((mu.point(i)[0], mu.weights()[i], 0.0));
    }
    for j in 0..nu.len() {
        events.push((nu.point(j)[0], 0.0, nu.weights()[j]));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut f_mu = 0.0;
    let mut f_nu = 0.0;
    let mut total = 0.0;
    let mut k = 0;
    while k < events.len() {
        let t = events[k].0;
        while k < events.len() && events[k].0 == t {
            f_mu += events[k].1;
            f_nu += events[k].2;
            k += 1;
        }
        if k < events.len() {
            total += (f_mu - f_nu).abs() * (events[k].0 - t);
        }
    }
    Ok(total)
}

/// Largest instance the exhaustive permutation search accepts.
pub const BRUTE_FORCE_CAP: usize = 8;

/// Exact W1 for equal-size uniform measures by minimizing the mean matched
/// cost over all `n!` assignments (Heap's algorithm). Any dimension; `n ≤ 8`.
pub fn w1_brute_force_uniform(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::invalid(format!(
            "brute force needs equal sizes, found {} vs {}",
            mu.len(),
            nu.len()
        )));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::invalid("brute force needs uniform weights"));
    }
    let n = mu.len();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::invalid(format!(
            "brute force capped at n={BRUTE_FORCE_CAP}, got {n}"
        )));
    }
    let cost = cost_matrix(mu, nu)?;
    let total = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| cost.get(i, j))
            .sum::<f64>()
    };

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = total(&perm);
    let mut counters = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(total(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sorted_oracle_hand_instances() {
        // {0,2} vs {3,1}: sorted matching pairs (0,1) and (2,3) → (1+1)/2 = 1.
        assert_eq!(w1_sorted_1d(&[0.0, 2.0], &[3.0, 1.0]).unwrap(), 1.0);
        assert_eq!(w1_sorted_1d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(w1_sorted_1d(&[0.0], &[1.0, 2.0]).is_err());
        assert!(w1_sorted_1d(&[], &[]).is_err());
        assert!(w1_sorted_1d(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn cdf_oracle_matches_sorted_on_uniform_samples() {
        let xs = [0.3, -1.2, 4.0, 0.7, 2.2];
        let ys = [1.0, 1.0, -0.5, 3.3, 0.1];
        let mu = DiscreteMeasure::from_samples_1d(&xs).unwrap();
        let nu = DiscreteMeasure::from_samples_1d(&ys).unwrap();
        let a = w1_cdf_1d(&mu, &nu).unwrap();
        let b = w1_sorted_1d(&xs, &ys).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn cdf_oracle_weighted_hand_instance() {
        // mu = 0.75·δ0 + 0.25·δ1, nu = δ2.
        // F difference: 0.75 on [0,1), 1 on [1,2) → W1 = 0.75 + 1 = 1.75.
        let mu = DiscreteMeasure::new(
            Tensor::new(2, 1, vec![0.0, 1.0]).unwrap(),
            vec![0.75, 0.25],
        )
        .unwrap();
        let nu = DiscreteMeasure::dirac(&[2.0]).unwrap();
        assert!((w1_cdf_1d(&mu, &nu).unwrap() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn cdf_oracle_handles_shared_atoms() {
        let mu = DiscreteMeasure::from_samples_1d(&[0.0, 1.0]).unwrap();
        let nu = DiscreteMeasure::from_samples_1d(&[1.0, 2.0]).unwrap();
        // F difference: 0.5 on [0,1), 0.5 on [1,2) → 1.0.
        assert!((w1_cdf_1d(&mu, &nu).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn brute_force_agrees_with_sorted_in_1d() {
        let xs = [0.0, 2.0, -1.0, 0.4];
        let ys = [1.0, 3.0, 0.2, -2.0];
        let mu = DiscreteMeasure::from_samples_1d(&xs).unwrap();
        let nu = DiscreteMeasure::from_samples_1d(&ys).unwrap();
        let a = w1_brute_force_uniform(&mu, &nu).unwrap();
        let b = w1_sorted_1d(&xs, &ys).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn brute_force_respects_cap() {
        let pts = Tensor::zeros(9, 1);
        let m = DiscreteMeasure::uniform(pts).unwrap();
        assert!(w1_brute_force_uniform(&m, &m).is_err());
    }
}
