//! State evolution σ_t² = N0 + β·Ψ(σ²_{t-1}) and its fixed points.
//!
//! Fixed points are the zero crossings of g(σ²) = N0 + β·Ψ(σ²) − σ². The
//! recursion started at σ_1² = N0 + β·Var[S] descends monotonically onto the
//! largest of them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::MseModel;
use crate::error::{Error, Result};
use crate::search::{bisect, golden_section_min, local_minima, log_grid, sign_changes};

pub const DEFAULT_MAX_ITER: usize = 256;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 2000;

/// Relative bracket width at which fixed-point bisection stops.
const ROOT_REL_TOL: f64 = 1e-12;
/// |g| below this (times the problem scale) without a sign change is a tangent root.
const TANGENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, rel_tol: DEFAULT_REL_TOL }
    }
}

/// Full trajectory of one state-evolution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrace {
    pub beta: f64,
    pub n0: f64,
    /// σ_1², σ_2², …
    pub sigma_sq_seq: Vec<f64>,
    pub converged: bool,
    pub final_sigma_sq: f64,
    pub iterations: usize,
}

fn check_system(beta: f64, n0: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
    }
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::param("n0", format!("must be non-negative and finite, got {n0}")));
    }
    Ok(())
}

/// One step of the recursion: N0 + β·Ψ(σ²).
pub fn se_step(model: &MseModel, beta: f64, n0: f64, sigma_sq: f64) -> Result<f64> {
    check_system(beta, n0)?;
    Ok(n0 + beta * model.psi(sigma_sq)?)
}

/// Iterates the recursion from σ_1² = N0 + β·Var[S] until successive values
/// differ by at most `rel_tol·max(σ², 1e-12)` or `max_iter` values exist.
pub fn run_se(model: &MseModel, beta: f64, n0: f64, config: SeConfig) -> Result<SeTrace> {
    check_system(beta, n0)?;
    if config.max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    let mut sigma_sq = n0 + beta * model.constellation().variance();
    let mut seq = vec![sigma_sq];
    let mut converged = false;
    while seq.len() < config.max_iter {
        if sigma_sq == 0.0 {
            // noiseless and already exact; Ψ(0) = 0
            converged = true;
            break;
        }
        let next = n0 + beta * model.psi_unchecked(sigma_sq);
        seq.push(next);
        let done = (next - sigma_sq).abs() <= config.rel_tol * next.max(1e-12);
        sigma_sq = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(SeTrace { beta, n0, iterations: seq.len(), final_sigma_sq: sigma_sq, sigma_sq_seq: seq, converged })
}

/// Exactly `iterations` values σ_1², …, without early stopping.
pub fn se_trajectory(model: &MseModel, beta: f64, n0: f64, iterations: usize) -> Result<Vec<f64>> {
    check_system(beta, n0)?;
    let mut sigma_sq = n0 + beta * model.constellation().variance();
    let mut seq = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        seq.push(sigma_sq);
        sigma_sq = if sigma_sq > 0.0 { n0 + beta * model.psi_unchecked(sigma_sq) } else { n0 };
    }
    Ok(seq)
}

/// g(σ², β, N0) = N0 + β·Ψ(σ²) − σ².
pub fn g_function(model: &MseModel, sigma_sq: f64, beta: f64, n0: f64) -> Result<f64> {
    check_system(beta, n0)?;
    Ok(n0 + beta * model.psi(sigma_sq)? - sigma_sq)
}

/// Log-spaced σ² search interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    /// `[1e-9·Var, 10·(N0 + β·Var)]` with 2000 points.
    pub fn default_for(variance: f64, beta: f64, n0: f64) -> Self {
        Self { lo: 1e-9 * variance, hi: 10.0 * (n0 + beta * variance), points: DEFAULT_GRID_POINTS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub sigma_sq: f64,
    /// β·Ψ'(σ²) at the root; the root attracts the recursion iff this is below one.
    pub slope: f64,
    pub stable: bool,
    /// Touches zero without crossing (tangent root at threshold parameters).
    pub marginal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub beta: f64,
    pub n0: f64,
    /// Ascending in σ².
    pub roots: Vec<FixedPoint>,
    /// Largest root, where the recursion from σ_1² settles.
    pub se_reachable: f64,
    /// Smallest root, the minimum effective noise variance.
    pub optimal: f64,
}

impl FixedPointSet {
    pub fn count(&self) -> usize {
        self.roots.len()
    }

    pub fn is_unique(&self) -> bool {
        self.roots.len() == 1
    }
}

/// Enumerates every zero crossing of g on a log grid and refines each by
/// bisection. Roots below the grid floor (N0 smaller than the floor) are
/// placed analytically at N0, where Ψ has underflowed.
pub fn find_fixed_points(model: &MseModel, beta: f64, n0: f64, grid: GridSpec) -> Result<FixedPointSet> {
    check_system(beta, n0)?;
    let variance = model.constellation().variance();
    let top = n0 + beta * variance;
    if variance == 0.0 {
        let root = FixedPoint { sigma_sq: n0, slope: 0.0, stable: true, marginal: false };
        return Ok(FixedPointSet { beta, n0, roots: vec![root], se_reachable: n0, optimal: n0 });
    }
    if grid.hi < top {
        return Err(Error::param(
            "grid",
            format!("upper end {} lies below the initialization N0 + beta*Var = {top}", grid.hi),
        ));
    }
    let sigmas = log_grid(grid.lo, grid.hi, grid.points)?;
    let g = |s: f64| n0 + beta * model.psi_unchecked(s) - s;
    let values: Vec<f64> = sigmas.par_iter().map(|&s| g(s)).collect();
    if values[values.len() - 1] >= 0.0 {
        return Err(Error::Numerical(format!(
            "g is non-negative at the upper grid end {}; no bracket for the largest fixed point",
            grid.hi
        )));
    }
    let scale = n0.max(variance);
    let mut roots: Vec<(f64, bool)> = Vec::new();

    if values[0] < 0.0 {
        // N0 lies below the grid floor
        let low = if n0 > 0.0 { n0 + beta * model.psi_unchecked(n0) } else { 0.0 };
        roots.push((low, false));
    }
    let crossings = sign_changes(&values);
    for &k in &crossings {
        roots.push((bisect(g, sigmas[k], sigmas[k + 1], ROOT_REL_TOL)?, false));
    }
    let magnitude: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    for k in local_minima(&magnitude) {
        let near_crossing = crossings.iter().any(|&c| c + 1 >= k && c <= k);
        if near_crossing || magnitude[k] > 1e-3 * scale {
            continue;
        }
        let (lo, hi) = (sigmas[k - 1].ln(), sigmas[k + 1].ln());
        let (x, gap) = golden_section_min(|t| g(t.exp()).abs(), lo, hi, 1e-12);
        if gap < TANGENT_TOL * scale {
            roots.push((x.exp(), true));
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));

    let roots: Vec<FixedPoint> = roots
        .into_iter()
        .map(|(sigma_sq, marginal)| {
            let slope = if sigma_sq > 0.0 { beta * model.dpsi_unchecked(sigma_sq) } else { 0.0 };
            FixedPoint { sigma_sq, slope, stable: slope < 1.0, marginal }
        })
        .collect();
    let (Some(first), Some(last)) = (roots.first(), roots.last()) else {
        return Err(Error::Numerical("no fixed point found on the search interval".into()));
    };
    let (optimal, se_reachable) = (first.sigma_sq, last.sigma_sq);
    Ok(FixedPointSet { beta, n0, roots, se_reachable, optimal })
}

/// [`find_fixed_points`] on the default grid.
pub fn fixed_points(model: &MseModel, beta: f64, n0: f64) -> Result<FixedPointSet> {
    check_system(beta, n0)?;
    let grid = GridSpec::default_for(model.constellation().variance(), beta, n0);
    find_fixed_points(model, beta, n0, grid)
}
