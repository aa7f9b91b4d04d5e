//! Derivative-free scalar search: log grids, bisection, golden-section.

use crate::error::{Error, Result};

/// `points` logarithmically spaced values covering `[lo, hi]` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::param("grid", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if points < 2 {
        return Err(Error::param("grid", format!("need at least 2 points, got {points}")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let last = (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (a + (b - a) * i as f64 / last).exp()).collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    Ok(grid)
}

/// Indices `k` such that `values[k]` and `values[k + 1]` have strictly opposite signs.
pub fn sign_changes(values: &[f64]) -> Vec<usize> {
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] < 0.0 && w[1] > 0.0) || (w[0] > 0.0 && w[1] < 0.0))
        .map(|(k, _)| k)
        .collect()
}

/// Bisection on a bracket with `f(lo)` and `f(hi)` of opposite sign, down to
/// a relative interval width of `rel_tol`. Exact zeros end the search early.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Numerical(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..400 {
        if hi - lo <= rel_tol * hi.abs().max(lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]` down to an
/// interval width of `width`. Callers searching over ln σ² get a relative
/// tolerance in σ² for free. Returns `(argmin, min)`.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, width: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..400 {
        if hi - lo <= width {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Indices of interior local minima of `values` (plateaus count once).
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] <= values[k - 1] && values[k] < values[k + 1])
        .collect()
}
