//! Gauss–Hermite rules normalized as expectations over N(0, 1/2).
//!
//! The real and imaginary parts of Z ~ CN(0, 1) are independent N(0, 1/2),
//! whose density is exp(-x²)/√π, so the classical nodes are used unscaled
//! and the weights are divided by √π to sum to one.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_QUAD_ORDER: usize = 128;
pub const MAX_QUAD_ORDER: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes the `order`-point rule: nodes are the eigenvalues of the
    /// Jacobi matrix, polished by Newton steps on the Hermite functions, and
    /// weights come from the Christoffel sum. Working with Hermite functions
    /// (polynomials times e^{-x²/2}) keeps every intermediate bounded.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_QUAD_ORDER {
            return Err(Error::param(
                "quadrature order",
                format!("must be in 1..={MAX_QUAD_ORDER}, got {order}"),
            ));
        }
        let n = order;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(f64::total_cmp);

        let mut nodes: Vec<f64> = Vec::with_capacity(n);
        let mut weights: Vec<f64> = Vec::with_capacity(n);
        for (i, &guess) in guesses.iter().enumerate() {
            // symmetric rule: mirror the non-positive half
            if i >= n / 2 + n % 2 {
                let k = n - 1 - i;
                nodes.push(-nodes[k]);
                weights.push(weights[k]);
                continue;
            }
            let mut x = guess;
            for _ in 0..8 {
                let (psi_n, psi_prev, _) = hermite_functions(n, x);
                let step = psi_n / ((2.0 * n as f64).sqrt() * psi_prev);
                if !step.is_finite() {
                    break;
                }
                x -= step;
                if step.abs() <= 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            if n % 2 == 1 && i == n / 2 {
                x = 0.0;
            }
            if (x - guess).abs() > 1e-6 * guess.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "Gauss-Hermite node {i} of order {n} drifted from {guess} to {x}"
                )));
            }
            nodes.push(x);
            weights.push(hermite_functions(n, x).2);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[f(X)] for X ~ N(0, 1/2).
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal Hermite functions at `x` (polynomials times e^{-x²/2}).
/// Returns ψ_n, ψ_{n-1} and the classical Gauss weight 1/Σ_{k<n} φ_k², with
/// the Gaussian factor restored at the end so it underflows to zero
/// gracefully instead of overflowing.
fn hermite_functions(n: usize, x: f64) -> (f64, f64, f64) {
    let gauss = (-0.5 * x * x).exp();
    let (mut p1, mut p2) = (PI.powf(-0.25) * gauss, 0.0);
    let mut sum = p1 * p1;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = x * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        if j + 1 < n {
            sum += p1 * p1;
        }
    }
    (p1, p2, gauss * gauss / sum)
}

/// Shared, lazily built rule of the given order.
pub fn rule(order: usize) -> Result<Arc<GaussHermite>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("quadrature cache poisoned").get(&order) {
        return Ok(Arc::clone(r));
    }
    let built = Arc::new(GaussHermite::new(order)?);
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    Ok(Arc::clone(guard.entry(order).or_insert(built)))
}
