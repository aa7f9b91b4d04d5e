use num_complex::Complex64;
use serde::Serialize;

use super::MimoInstance;
use crate::constellation::Constellation;
use crate::denoiser::PriorTable;
use crate::error::{Error, Result};
use crate::exact_sum::{exact_sum, ExactSum};

/// Noise variance used in place of N0 = 0, relative to Var[S].
pub const N0_FLOOR_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub max_iter: usize,
    /// Stop once ‖ŝ^{t+1} − ŝ^t‖²/MT drops below this.
    pub stop_tol: f64,
    /// Keep the τ^{t+1}/(1+τ^t)·r^t correction. Turning it off gives plain
    /// iterative soft interference cancellation, useful only as a diagnostic.
    pub onsager: bool,
    /// Record z^t − s0 at this (1-based) iteration.
    pub probe: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { max_iter: 64, stop_tol: 1e-8, onsager: true, probe: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub s_hat: Vec<Complex64>,
    pub r: Vec<Complex64>,
    pub tau: f64,
    /// Matched-filter output of the last completed iteration.
    pub z: Vec<Complex64>,
    /// Completed iterations.
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub s_final: Vec<Complex64>,
    pub symbol_errors: usize,
    pub iterations_run: usize,
    /// ⟨|z^t − s0|²⟩ for t = 1, 2, …
    pub per_iter_mse: Vec<f64>,
    pub s_hat: Vec<Complex64>,
    pub tau: f64,
    /// z^t − s0 at the probed iteration, if it was reached.
    pub probe_residuals: Option<Vec<Complex64>>,
}

/// One detector bound to an instance; advances a [`DetectorState`].
pub struct Lama<'a> {
    table: PriorTable,
    inst: &'a MimoInstance,
    n0: f64,
    beta: f64,
    onsager: bool,
    mean: Complex64,
    var: f64,
}

impl<'a> Lama<'a> {
    pub fn new(c: &Constellation, inst: &'a MimoInstance, onsager: bool) -> Result<Self> {
        let (mr, mt) = (inst.h().rows(), inst.h().cols());
        if inst.s0().len() != mt || inst.y().len() != mr {
            return Err(Error::DimensionMismatch(format!(
                "H is {mr}x{mt}, s0 has {}, y has {}",
                inst.s0().len(),
                inst.y().len()
            )));
        }
        let var = c.variance();
        let n0 = inst.n0().max(N0_FLOOR_FACTOR * var);
        if n0 <= 0.0 {
            return Err(Error::param("n0", "zero noise with a zero-variance alphabet"));
        }
        Ok(Self {
            table: PriorTable::new(c),
            inst,
            n0,
            beta: mt as f64 / mr as f64,
            onsager,
            mean: c.mean(),
            var,
        })
    }

    /// Noise variance actually used, after flooring.
    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn init(&self) -> DetectorState {
        DetectorState {
            s_hat: vec![self.mean; self.inst.mt()],
            r: self.inst.y().to_vec(),
            tau: self.beta * self.var / self.n0,
            z: Vec::new(),
            t: 0,
        }
    }

    /// One pass of the four updates. Returns ‖ŝ^{t+1} − ŝ^t‖²/MT.
    pub fn step(&self, state: &mut DetectorState) -> Result<f64> {
        let h = self.inst.h();
        let mf = h.adjoint_mul_vec(&state.r)?;
        let z: Vec<Complex64> = state.s_hat.iter().zip(&mf).map(|(s, m)| s + m).collect();

        let inv_tau = 1.0 / (self.n0 * (1.0 + state.tau));
        let mut g_sum = ExactSum::new();
        let mut change = ExactSum::new();
        let mut s_next = Vec::with_capacity(z.len());
        for (zi, old) in z.iter().zip(&state.s_hat) {
            let (f, g) = self.table.mean_and_variance(*zi, inv_tau);
            g_sum.add(g);
            change.add((f - old).norm_sqr());
            s_next.push(f);
        }
        let mt = z.len() as f64;
        // A fully concentrated posterior gives ⟨G⟩ = 0 in floating point;
        // keep τ strictly positive.
        let tau_next = (self.beta / self.n0 * (g_sum.value() / mt)).max(f64::MIN_POSITIVE);

        let hs = h.mul_vec(&s_next)?;
        let gain = if self.onsager { tau_next / (1.0 + state.tau) } else { 0.0 };
        let r_next = self
            .inst
            .y()
            .iter()
            .zip(&hs)
            .zip(&state.r)
            .map(|((y, hs), r)| y - hs + r * gain)
            .collect();

        state.s_hat = s_next;
        state.r = r_next;
        state.tau = tau_next;
        state.z = z;
        state.t += 1;
        Ok(change.value() / mt)
    }
}

/// Runs the detector until the estimate settles or `max_iter` passes.
/// Decisions slice the last matched-filter output z.
pub fn lama_detect(c: &Constellation, inst: &MimoInstance, config: &DetectorConfig) -> Result<DetectionResult> {
    if config.max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    if !(config.stop_tol >= 0.0) {
        return Err(Error::param("stop_tol", format!("must be non-negative, got {}", config.stop_tol)));
    }
    let lama = Lama::new(c, inst, config.onsager)?;
    let mut state = lama.init();
    let mut per_iter_mse = Vec::new();
    let mut probe_residuals = None;
    loop {
        let delta = lama.step(&mut state)?;
        let residuals: Vec<Complex64> = state.z.iter().zip(inst.s0()).map(|(z, s)| z - s).collect();
        per_iter_mse.push(exact_sum(residuals.iter().map(|e| e.norm_sqr())) / inst.mt() as f64);
        if config.probe == Some(state.t) {
            probe_residuals = Some(residuals);
        }
        if delta < config.stop_tol || state.t >= config.max_iter {
            break;
        }
    }
    let decisions: Vec<usize> = state.z.iter().map(|z| c.slice_index(*z)).collect();
    let symbol_errors = decisions.iter().zip(inst.s0_index()).filter(|(a, b)| a != b).count();
    Ok(DetectionResult {
        s_final: decisions.iter().map(|&k| c.points()[k]).collect(),
        symbol_errors,
        iterations_run: state.t,
        per_iter_mse,
        s_hat: state.s_hat,
        tau: state.tau,
        probe_residuals,
    })
}
