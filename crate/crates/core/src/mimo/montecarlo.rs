use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{generate_trial, lama_detect, DetectorConfig};
use crate::constellation::Constellation;
use crate::denoiser::MseModel;
use crate::error::{Error, Result};
use crate::state_evolution::se_trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub errors: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerEstimate {
    pub ser: f64,
    pub trials: usize,
    pub errors: usize,
    pub symbols: usize,
    pub mean_iterations: f64,
    /// Standard error of `ser` from the spread of per-trial error rates
    /// (binomial when there is a single trial).
    pub std_err: f64,
}

/// Symbol error rate over `trials` independent instances. Trial `k` uses
/// stream `k` of `seed`, so the result does not depend on scheduling.
pub fn monte_carlo_ser(
    c: &Constellation,
    mt: usize,
    mr: usize,
    n0: f64,
    trials: usize,
    config: &DetectorConfig,
    seed: u64,
) -> Result<SerEstimate> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let inst = generate_trial(c, mt, mr, n0, seed, trial)?;
            let out = lama_detect(c, &inst, config)?;
            Ok(TrialOutcome { trial, errors: out.symbol_errors, iterations: out.iterations_run })
        })
        .collect::<Result<_>>()?;

    let errors: usize = outcomes.iter().map(|o| o.errors).sum();
    let symbols = trials * mt;
    let ser = errors as f64 / symbols as f64;
    let mean_iterations = outcomes.iter().map(|o| o.iterations as f64).sum::<f64>() / trials as f64;
    let std_err = if trials > 1 {
        let spread: f64 = outcomes.iter().map(|o| (o.errors as f64 / mt as f64 - ser).powi(2)).sum();
        (spread / (trials - 1) as f64 / trials as f64).sqrt()
    } else {
        (ser * (1.0 - ser) / symbols as f64).sqrt()
    };
    Ok(SerEstimate { ser, trials, errors, symbols, mean_iterations, std_err })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingReport {
    pub iter_probe: usize,
    /// Pooled ⟨|z − s0|²⟩ at `iter_probe`.
    pub empirical_var: f64,
    /// σ² at `iter_probe` from state evolution.
    pub se_var: f64,
    /// Largest deviation of the real/imaginary kurtosis from 3.
    pub normality_stat: f64,
    pub kurtosis_re: f64,
    pub kurtosis_im: f64,
    /// Trial-averaged ⟨|z^t − s0|²⟩ for t = 1..=iter_probe.
    pub per_iter_empirical: Vec<f64>,
    pub per_iter_se: Vec<f64>,
    pub samples: usize,
}

fn kurtosis(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let (m2, m4) = xs.fold((0.0, 0.0), |(m2, m4), x| {
        let d2 = (x - mean).powi(2);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    m4 / (m2 * m2)
}

/// Runs `trials` detections for exactly `iter_probe` iterations and compares
/// the matched-filter error z^t − s0 with the state-evolution prediction.
pub fn verify_decoupling(
    model: &MseModel,
    mt: usize,
    mr: usize,
    n0: f64,
    trials: usize,
    iter_probe: usize,
    seed: u64,
) -> Result<DecouplingReport> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    if iter_probe == 0 {
        return Err(Error::param("iter_probe", "must be at least 1"));
    }
    let c = model.constellation();
    let config = DetectorConfig { max_iter: iter_probe, stop_tol: 0.0, onsager: true, probe: Some(iter_probe) };
    let runs: Vec<(Vec<f64>, Vec<Complex64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let inst = generate_trial(c, mt, mr, n0, seed, trial)?;
            let out = lama_detect(c, &inst, &config)?;
            let res = out
                .probe_residuals
                .ok_or_else(|| Error::Numerical("probe iteration not reached".into()))?;
            Ok((out.per_iter_mse, res))
        })
        .collect::<Result<_>>()?;

    let mut per_iter_empirical = vec![0.0; iter_probe];
    for (mse, _) in &runs {
        for (acc, m) in per_iter_empirical.iter_mut().zip(mse) {
            *acc += m / trials as f64;
        }
    }
    let pooled: Vec<Complex64> = runs.into_iter().flat_map(|(_, r)| r).collect();
    let empirical_var = pooled.iter().map(|e| e.norm_sqr()).sum::<f64>() / pooled.len() as f64;
    let kurtosis_re = kurtosis(pooled.iter().map(|e| e.re));
    let kurtosis_im = kurtosis(pooled.iter().map(|e| e.im));

    let beta = mt as f64 / mr as f64;
    let per_iter_se = se_trajectory(model, beta, n0, iter_probe)?;
    Ok(DecouplingReport {
        iter_probe,
        empirical_var,
        se_var: per_iter_se[iter_probe - 1],
        normality_stat: (kurtosis_re - 3.0).abs().max((kurtosis_im - 3.0).abs()),
        kurtosis_re,
        kurtosis_im,
        per_iter_empirical,
        per_iter_se,
        samples: pooled.len(),
    })
}
