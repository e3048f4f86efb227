//! Normalization onto the floored simplex.
//!
//! Given floors `r` (with `r₊ < 1`) and positive weights `x`, find `δ > 0`
//! such that `Σ_i max{r_i, δ x_i} = 1`. The map `δ ↦ Σ max{r_i, δ x_i}` is
//! piecewise linear with breakpoints at `r_i / x_i`; sorting those keys and
//! scanning prefix/suffix sums locates the segment containing the root in
//! `O(m log m)`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillResult {
    pub delta: f64,
    /// `true` where the floor binds: `p_i = r_i ≥ δ x_i`.
    pub active_floor: Vec<bool>,
    pub p: Vec<f64>,
}

fn check_inputs(r: &[f64], x: &[f64]) -> Result<()> {
    if r.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: r.len(),
            found: x.len(),
        });
    }
    if r.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    for (index, &value) in r.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    for (index, &value) in x.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonpositiveWeight { index, value });
        }
    }
    let r_plus: f64 = r.iter().sum();
    if r_plus >= 1.0 {
        return Err(Error::InfeasibleFloor { r_plus });
    }
    Ok(())
}

/// Solve `Σ_i max{r_i, δ x_i} = 1` for `δ`.
pub fn waterfill(r: &[f64], x: &[f64]) -> Result<WaterfillResult> {
    check_inputs(r, x)?;
    let m = r.len();

    let key = |i: usize| if r[i] == 0.0 { 0.0 } else { r[i] / x[i] };
    let mut order: Vec<usize> = (0..m).collect();
    // stable: ties keep their original index order
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));

    // suffix[k] = Σ_{l ≥ k} r_{order[l]}, with suffix[m] = 0
    let mut suffix = vec![0.0; m + 1];
    for k in (0..m).rev() {
        suffix[k] = suffix[k + 1] + r[order[k]];
    }

    // Scan for the last sorted position k with key_k · X_k + R_{k+1} ≤ 1,
    // where X_k is the prefix sum of x. The first position always qualifies
    // because it evaluates to r₊ < 1.
    let mut prefix = 0.0;
    let mut best_prefix = x[order[0]];
    let mut best_k = 0;
    for (k, &i) in order.iter().enumerate() {
        prefix += x[i];
        if key(i) * prefix + suffix[k + 1] <= 1.0 {
            best_k = k;
            best_prefix = prefix;
        } else {
            break;
        }
    }
    let delta = (1.0 - suffix[best_k + 1]) / best_prefix;

    let p: Vec<f64> = r
        .iter()
        .zip(x)
        .map(|(&ri, &xi)| ri.max(delta * xi))
        .collect();
    let active_floor = r
        .iter()
        .zip(x)
        .map(|(&ri, &xi)| ri > 0.0 && ri >= delta * xi)
        .collect();
    Ok(WaterfillResult {
        delta,
        active_floor,
        p,
    })
}

/// Waterfill with weights given as logarithms, `x_i = exp(log_x_i)`.
///
/// The exponents are shifted by their maximum before exponentiation; the
/// returned `p` is unaffected and `delta` refers to the shifted weights.
pub fn waterfill_log(r: &[f64], log_x: &[f64]) -> Result<WaterfillResult> {
    let shift = log_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        let index = log_x.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonpositiveWeight {
            index,
            value: shift.exp(),
        });
    }
    let x: Vec<f64> = log_x.iter().map(|&l| (l - shift).exp()).collect();
    waterfill(r, &x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_floor_is_plain_normalization() {
        let x = [1.0, 2.0, 5.0];
        let res = waterfill(&[0.0; 3], &x).unwrap();
        assert!((res.delta - 1.0 / 8.0).abs() < 1e-15);
        for (p, xi) in res.p.iter().zip(x) {
            assert!((p - xi / 8.0).abs() < 1e-15);
        }
        assert!(res.active_floor.iter().all(|&a| !a));
    }

    #[test]
    fn slack_floor() {
        let res = waterfill(&[0.5, 0.0], &[1.0, 1.0]).unwrap();
        assert!((res.delta - 0.5).abs() < 1e-15);
        assert_eq!(res.p, vec![0.5, 0.5]);
    }

    #[test]
    fn binding_floor() {
        let res = waterfill(&[0.6, 0.0], &[1.0, 9.0]).unwrap();
        assert!((res.delta - 0.4 / 9.0).abs() < 1e-15);
        assert!((res.p[0] - 0.6).abs() < 1e-15);
        assert!((res.p[1] - 0.4).abs() < 1e-15);
        assert_eq!(res.active_floor, vec![true, false]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            waterfill(&[0.6, 0.5], &[1.0, 1.0]),
            Err(Error::InfeasibleFloor { .. })
        ));
        assert!(matches!(
            waterfill(&[0.1, 0.1], &[1.0, 0.0]),
            Err(Error::NonpositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            waterfill(&[0.1], &[1.0, 1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_weights_survive_overflow() {
        let res = waterfill_log(&[0.1, 0.1], &[1000.0, 1000.0]).unwrap();
        assert_eq!(res.p, vec![0.5, 0.5]);
    }
}
