//! Posterior mean/variance denoisers and the MSE function Ψ(σ²).
//!
//! For an observation `z = s + n` with `n ~ CN(0, τ)` and `s` drawn from a
//! discrete prior, the posterior weight of point `a` is
//! `p_a · exp(-|z - a|² / τ)`. All weights are evaluated relative to the
//! largest exponent so that τ down to 1e-300 stays finite.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::{AxisFactor, Constellation};
use crate::error::{Error, Result};
use crate::quadrature::{self, GaussHermite, DEFAULT_QUAD_ORDER};

/// Weights more than e^-60 below the dominant one are dropped; they change
/// the posterior by less than 1e-26 relative.
const LOG_WEIGHT_FLOOR: f64 = -60.0;
/// Tensor nodes whose joint weight is below this are dropped.
const NODE_WEIGHT_FLOOR: f64 = 1e-24;

/// Noisy observation and the complex variance of its Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserInput {
    pub z: Complex64,
    pub tau: f64,
}

impl DenoiserInput {
    pub fn new(z: Complex64, tau: f64) -> Result<Self> {
        let input = Self { z, tau };
        input.validate()?;
        Ok(input)
    }

    fn validate(&self) -> Result<()> {
        if !self.z.re.is_finite() || !self.z.im.is_finite() {
            return Err(Error::NonFinite(format!("observation {}", self.z)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param("tau", format!("must be positive and finite, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Precomputed prior table used by the posterior computations.
#[derive(Debug, Clone)]
pub(crate) struct PriorTable {
    points: Vec<Complex64>,
    log_priors: Vec<f64>,
}

impl PriorTable {
    pub(crate) fn new(c: &Constellation) -> Self {
        let (points, log_priors) = c
            .points()
            .iter()
            .zip(c.priors())
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, p)| (*a, p.ln()))
            .unzip();
        Self { points, log_priors }
    }

    /// Posterior mean and second moment E[|S|² | z].
    #[inline]
    pub(crate) fn moments(&self, z: Complex64, inv_tau: f64) -> (Complex64, f64) {
        let mut peak = f64::NEG_INFINITY;
        for (a, lp) in self.points.iter().zip(&self.log_priors) {
            let e = lp - (z - a).norm_sqr() * inv_tau;
            if e > peak {
                peak = e;
            }
        }
        let mut norm = 0.0;
        let mut first = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (a, lp) in self.points.iter().zip(&self.log_priors) {
            let e = lp - (z - a).norm_sqr() * inv_tau - peak;
            if e < LOG_WEIGHT_FLOOR {
                continue;
            }
            let w = e.exp();
            norm += w;
            first += a * w;
            second += a.norm_sqr() * w;
        }
        (first / norm, second / norm)
    }

    #[inline]
    pub(crate) fn mean_and_variance(&self, z: Complex64, inv_tau: f64) -> (Complex64, f64) {
        let (mean, second) = self.moments(z, inv_tau);
        (mean, (second - mean.norm_sqr()).max(0.0))
    }
}

/// Real-axis counterpart of [`PriorTable`] for product alphabets.
#[derive(Debug, Clone)]
struct AxisTable {
    values: Vec<f64>,
    priors: Vec<f64>,
    log_priors: Vec<f64>,
}

impl AxisTable {
    fn new(f: &AxisFactor) -> Self {
        let keep: Vec<(f64, f64)> = f
            .values
            .iter()
            .zip(&f.priors)
            .filter(|(_, &p)| p > 0.0)
            .map(|(v, p)| (*v, *p))
            .collect();
        Self {
            values: keep.iter().map(|k| k.0).collect(),
            priors: keep.iter().map(|k| k.1).collect(),
            log_priors: keep.iter().map(|k| k.1.ln()).collect(),
        }
    }

    #[inline]
    fn mean(&self, r: f64, inv_tau: f64) -> f64 {
        let mut peak = f64::NEG_INFINITY;
        for (v, lp) in self.values.iter().zip(&self.log_priors) {
            let d = r - v;
            peak = peak.max(lp - d * d * inv_tau);
        }
        let (mut norm, mut first) = (0.0, 0.0);
        for (v, lp) in self.values.iter().zip(&self.log_priors) {
            let d = r - v;
            let e = lp - d * d * inv_tau - peak;
            if e < LOG_WEIGHT_FLOOR {
                continue;
            }
            let w = e.exp();
            norm += w;
            first += v * w;
        }
        first / norm
    }

    /// E over the axis prior and X ~ N(0, 1/2) of (F(v + σX) - v)².
    fn mse(&self, rule: &GaussHermite, sigma: f64, inv_tau: f64) -> f64 {
        if self.values.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for (v, p) in self.values.iter().zip(&self.priors) {
            let mut acc = 0.0;
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                let err = self.mean(v + sigma * x, inv_tau) - v;
                acc += w * err * err;
            }
            total += p * acc;
        }
        total
    }
}

/// F(z, τ): posterior mean of the symbol.
pub fn denoise_mean(c: &Constellation, input: DenoiserInput) -> Result<Complex64> {
    input.validate()?;
    Ok(PriorTable::new(c).moments(input.z, input.tau.recip()).0)
}

/// G(z, τ): posterior variance of the symbol, clamped at zero.
pub fn denoise_var(c: &Constellation, input: DenoiserInput) -> Result<f64> {
    input.validate()?;
    Ok(PriorTable::new(c).mean_and_variance(input.z, input.tau.recip()).1)
}

/// One sample of the MSE function and its slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub sigma_sq: f64,
    pub psi: f64,
    pub dpsi: f64,
}

#[derive(Debug, Clone)]
enum Integrator {
    /// Two independent 1-D rules, one per axis.
    Product { re: AxisTable, im: AxisTable },
    /// Full tensor rule over (Re Z, Im Z), tail nodes pruned. Symbols in
    /// one rotation orbit share a contribution, so only one representative
    /// per orbit is integrated, weighted by the orbit's prior mass.
    Tensor { nodes: Vec<(Complex64, f64)>, orbits: Vec<(Complex64, f64)> },
}

/// The MSE function Ψ(σ²) = E_{S,Z} |F(S + σZ, σ²) − S|² of one
/// constellation, evaluated by Gauss–Hermite quadrature over Z ~ CN(0, 1)
/// and an exact sum over S.
///
/// Product alphabets (square QAM, BPSK, …) are integrated axis by axis, which
/// is the same tensor rule reorganized: the posterior factors across the real
/// and imaginary parts when the noise is circularly symmetric.
#[derive(Debug, Clone)]
pub struct MseModel {
    constellation: Constellation,
    table: PriorTable,
    rule: Arc<GaussHermite>,
    integrator: Integrator,
}

impl MseModel {
    pub fn new(c: Constellation) -> Self {
        Self::with_order(c, DEFAULT_QUAD_ORDER).expect("default quadrature order is valid")
    }

    pub fn with_order(c: Constellation, order: usize) -> Result<Self> {
        let rule = quadrature::rule(order)?;
        let integrator = match c.product_form() {
            Some(pf) => Integrator::Product { re: AxisTable::new(&pf.re), im: AxisTable::new(&pf.im) },
            None => Integrator::Tensor { nodes: tensor_nodes(&rule), orbits: rotation_orbits(&c) },
        };
        Ok(Self { table: PriorTable::new(&c), constellation: c, rule, integrator })
    }

    /// Forces the full 2-D tensor rule over every symbol, with no product
    /// factorization and no symmetry reduction.
    pub fn tensor_only(c: Constellation, order: usize) -> Result<Self> {
        let rule = quadrature::rule(order)?;
        let orbits = c.points().iter().zip(c.priors()).map(|(a, p)| (*a, *p)).collect();
        let integrator = Integrator::Tensor { nodes: tensor_nodes(&rule), orbits };
        Ok(Self { table: PriorTable::new(&c), constellation: c, rule, integrator })
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    /// Ψ(σ²).
    pub fn psi(&self, sigma_sq: f64) -> Result<f64> {
        check_sigma_sq(sigma_sq)?;
        Ok(self.psi_unchecked(sigma_sq))
    }

    pub(crate) fn psi_unchecked(&self, sigma_sq: f64) -> f64 {
        let sigma = sigma_sq.sqrt();
        let inv_tau = sigma_sq.recip();
        match &self.integrator {
            Integrator::Product { re, im } => {
                re.mse(&self.rule, sigma, inv_tau) + im.mse(&self.rule, sigma, inv_tau)
            }
            Integrator::Tensor { nodes, orbits } => {
                let mut total = 0.0;
                for (a, p) in orbits {
                    if *p == 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for (zeta, w) in nodes {
                        let (mean, _) = self.table.moments(a + zeta * sigma, inv_tau);
                        acc += w * (mean - a).norm_sqr();
                    }
                    total += p * acc;
                }
                total
            }
        }
    }

    /// dΨ/dσ² by central difference with step 1e-4·σ² (at least 1e-10);
    /// falls back to a forward difference when σ² is below the step.
    pub fn dpsi(&self, sigma_sq: f64) -> Result<f64> {
        check_sigma_sq(sigma_sq)?;
        Ok(self.dpsi_unchecked(sigma_sq))
    }

    pub(crate) fn dpsi_unchecked(&self, sigma_sq: f64) -> f64 {
        let h = (1e-4 * sigma_sq).max(1e-10);
        if sigma_sq - h > 0.0 {
            (self.psi_unchecked(sigma_sq + h) - self.psi_unchecked(sigma_sq - h)) / (2.0 * h)
        } else {
            (self.psi_unchecked(sigma_sq + h) - self.psi_unchecked(sigma_sq)) / h
        }
    }

    pub fn point(&self, sigma_sq: f64) -> Result<MsePoint> {
        Ok(MsePoint { sigma_sq, psi: self.psi(sigma_sq)?, dpsi: self.dpsi(sigma_sq)? })
    }
}

fn tensor_nodes(rule: &GaussHermite) -> Vec<(Complex64, f64)> {
    let mut nodes = Vec::with_capacity(rule.order() * rule.order());
    for (x, wx) in rule.nodes().iter().zip(rule.weights()) {
        for (y, wy) in rule.nodes().iter().zip(rule.weights()) {
            let w = wx * wy;
            if w >= NODE_WEIGHT_FLOOR {
                nodes.push((Complex64::new(*x, *y), w));
            }
        }
    }
    nodes
}

/// Groups symbols into orbits of the rotations about the origin that map
/// the alphabet (with its priors) onto itself. Ψ's per-symbol term is
/// invariant under such rotations because CN(0, 1) is.
fn rotation_orbits(c: &Constellation) -> Vec<(Complex64, f64)> {
    let points = c.points();
    let priors = c.priors();
    let scale = points.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let find = |z: Complex64| points.iter().position(|b| (b - z).norm() <= tol);
    let mut rotations: Vec<Complex64> = Vec::new();
    if let Some(anchor) = points.iter().find(|a| a.norm() > tol) {
        for b in points {
            if (b.norm() - anchor.norm()).abs() > tol {
                continue;
            }
            let r = b / anchor;
            let r = r / r.norm();
            let maps = points.iter().zip(priors).all(|(a, p)| {
                find(a * r).is_some_and(|j| (priors[j] - p).abs() <= 1e-12)
            });
            if maps {
                rotations.push(r);
            }
        }
    }
    let mut assigned = vec![false; points.len()];
    let mut orbits = Vec::new();
    for i in 0..points.len() {
        if assigned[i] {
            continue;
        }
        let mut mass = 0.0;
        let mut members = vec![i];
        for r in &rotations {
            if let Some(j) = find(points[i] * r) {
                if !members.contains(&j) {
                    members.push(j);
                }
            }
        }
        for &j in &members {
            if !assigned[j] {
                assigned[j] = true;
                mass += priors[j];
            }
        }
        orbits.push((points[i], mass));
    }
    orbits
}

fn check_sigma_sq(sigma_sq: f64) -> Result<()> {
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::param("sigma_sq", format!("must be positive and finite, got {sigma_sq}")));
    }
    Ok(())
}

/// Ψ(σ²) at the default quadrature order.
pub fn mse(c: &Constellation, sigma_sq: f64) -> Result<f64> {
    MseModel::new(c.clone()).psi(sigma_sq)
}

/// dΨ/dσ² at the default quadrature order.
pub fn mse_derivative(c: &Constellation, sigma_sq: f64) -> Result<f64> {
    MseModel::new(c.clone()).dpsi(sigma_sq)
}
