//! Recovery thresholds and optimality regimes.
//!
//! - ERT β_max = min over σ² of σ²/Ψ(σ²): below it the noiseless recursion
//!   has the origin as its only fixed point.
//! - MRT β_min = 1 / max over σ² of Ψ'(σ²): below it g is strictly
//!   decreasing, so the fixed point is unique at every noise level.
//! - For β > β_min the stationary points of g (β·Ψ'(σ²) = 1) bound the noise
//!   interval [N0_min, N0_max] in which several fixed points coexist.
//!
//! All extremizations start from one shared log-grid profile of Ψ and Ψ',
//! then refine by golden-section search (smooth extrema) or bisection
//! (root constraints).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::MseModel;
use crate::error::{Error, Result};
use crate::search::{bisect, golden_section_min, log_grid, sign_changes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub grid_points: usize,
    /// Grid spans `[lo_factor, hi_factor]·Var[S]`.
    pub lo_factor: f64,
    pub hi_factor: f64,
    /// Relative interval width for golden-section refinement.
    pub extremum_rel_tol: f64,
    /// Relative interval width for bisection of stationary points.
    pub root_rel_tol: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { grid_points: 2000, lo_factor: 1e-6, hi_factor: 1e4, extremum_rel_tol: 1e-10, root_rel_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ert {
    pub beta_max: f64,
    pub argmin_sigma_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mrt {
    pub beta_min: f64,
    /// σ⋆², where Ψ' peaks.
    pub argmax_sigma_sq: f64,
}

/// A root of β·Ψ'(σ²) = 1 and the noise level N0 = σ² − β·Ψ(σ²) at which it
/// is also a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub sigma_sq: f64,
    pub n0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalNoise {
    pub n0_min: Option<f64>,
    pub n0_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AlwaysOptimal,
    OptimalLowNoise,
    OptimalHighNoise,
    PossiblySuboptimal,
    Suboptimal,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::AlwaysOptimal => "always-optimal",
            Regime::OptimalLowNoise => "optimal-low-noise",
            Regime::OptimalHighNoise => "optimal-high-noise",
            Regime::PossiblySuboptimal => "possibly-suboptimal",
            Regime::Suboptimal => "suboptimal",
        }
    }

    /// Whether the recursion is guaranteed to reach the optimal fixed point.
    pub fn is_optimal(self) -> bool {
        matches!(self, Regime::AlwaysOptimal | Regime::OptimalLowNoise | Regime::OptimalHighNoise)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Everything the threshold analysis knows about one constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub constellation: String,
    pub beta_max: f64,
    pub beta_min: f64,
    pub argmin_sigma_sq_ert: f64,
    pub argmax_sigma_sq_mrt: f64,
    /// N0_min(β_min) = N0_max(β_min), the tangent noise level at the MRT.
    pub n0_at_beta_min: f64,
    /// N0_max(β_max).
    pub n0_max_at_beta_max: f64,
    pub beta: Option<f64>,
    pub n0_min: Option<f64>,
    pub n0_max: Option<f64>,
    pub stationary_sigmas: Vec<f64>,
    pub quad_order: usize,
    pub grid: ThresholdConfig,
    pub version: String,
}

/// Threshold computations for one constellation over a shared Ψ/Ψ' profile.
#[derive(Debug, Clone)]
pub struct ThresholdAnalyzer {
    model: MseModel,
    config: ThresholdConfig,
    sigmas: Vec<f64>,
    psi: Vec<f64>,
    dpsi: Vec<f64>,
    ert: Ert,
    mrt: Mrt,
    /// Refined local maxima of Ψ', merged into stationary-point scans so
    /// that narrow bumps above 1/β are never stepped over.
    slope_peaks: Vec<f64>,
}

impl ThresholdAnalyzer {
    pub fn new(model: MseModel) -> Result<Self> {
        Self::with_config(model, ThresholdConfig::default())
    }

    pub fn with_config(model: MseModel, config: ThresholdConfig) -> Result<Self> {
        let var = model.constellation().variance();
        if !(var > 0.0) {
            return Err(Error::param("constellation", "zero symbol variance; thresholds are undefined"));
        }
        let sigmas = log_grid(config.lo_factor * var, config.hi_factor * var, config.grid_points)?;
        let (psi, dpsi): (Vec<f64>, Vec<f64>) =
            sigmas.par_iter().map(|&s| (model.psi_unchecked(s), model.dpsi_unchecked(s))).unzip();
        let mut out = Self {
            model,
            config,
            sigmas,
            psi,
            dpsi,
            ert: Ert { beta_max: f64::NAN, argmin_sigma_sq: f64::NAN },
            mrt: Mrt { beta_min: f64::NAN, argmax_sigma_sq: f64::NAN },
            slope_peaks: Vec::new(),
        };
        out.ert = out.locate_ert()?;
        let (mrt, peaks) = out.locate_mrt()?;
        out.mrt = mrt;
        out.slope_peaks = peaks;
        Ok(out)
    }

    pub fn model(&self) -> &MseModel {
        &self.model
    }

    pub fn config(&self) -> &ThresholdConfig {
        &self.config
    }

    /// Refinement bracket in ln σ² around grid index `k`.
    fn bracket(&self, k: usize) -> (f64, f64) {
        let lo = self.sigmas[k.saturating_sub(1)].ln();
        let hi = self.sigmas[(k + 1).min(self.sigmas.len() - 1)].ln();
        (lo, hi)
    }

    fn locate_ert(&self) -> Result<Ert> {
        let ratio = |s: f64, p: f64| if p > 0.0 { s / p } else { f64::INFINITY };
        let k = (0..self.sigmas.len())
            .min_by(|&a, &b| ratio(self.sigmas[a], self.psi[a]).total_cmp(&ratio(self.sigmas[b], self.psi[b])))
            .expect("grid is non-empty");
        if !ratio(self.sigmas[k], self.psi[k]).is_finite() {
            return Err(Error::Numerical("MSE underflows on the whole grid".into()));
        }
        let (lo, hi) = self.bracket(k);
        let (t, beta_max) = golden_section_min(
            |t| {
                let s = t.exp();
                ratio(s, self.model.psi_unchecked(s))
            },
            lo,
            hi,
            self.config.extremum_rel_tol,
        );
        Ok(Ert { beta_max, argmin_sigma_sq: t.exp() })
    }

    fn locate_mrt(&self) -> Result<(Mrt, Vec<f64>)> {
        let d = &self.dpsi;
        if !d.iter().any(|&v| v > 0.0) {
            return Err(Error::Numerical("MSE slope is non-positive on the whole grid".into()));
        }
        let n = d.len();
        let mut peaks = Vec::new();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for k in 0..n {
            let left = if k > 0 { d[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < n { d[k + 1] } else { f64::NEG_INFINITY };
            if !(d[k] >= left && d[k] > right) || d[k] <= 0.0 {
                continue;
            }
            let (lo, hi) = self.bracket(k);
            let (t, neg) =
                golden_section_min(|t| -self.model.dpsi_unchecked(t.exp()), lo, hi, self.config.extremum_rel_tol);
            let (s, peak) = if -neg >= d[k] { (t.exp(), -neg) } else { (self.sigmas[k], d[k]) };
            peaks.push(s);
            if peak > best.0 {
                best = (peak, s);
            }
        }
        Ok((Mrt { beta_min: 1.0 / best.0, argmax_sigma_sq: best.1 }, peaks))
    }

    pub fn ert(&self) -> Ert {
        self.ert
    }

    pub fn mrt(&self) -> Mrt {
        self.mrt
    }

    pub fn beta_max(&self) -> f64 {
        self.ert.beta_max
    }

    pub fn beta_min(&self) -> f64 {
        self.mrt.beta_min
    }

    /// N0 at which σ⋆² is a tangent fixed point for β = β_min.
    pub fn n0_at_beta_min(&self) -> f64 {
        let s = self.mrt.argmax_sigma_sq;
        s - self.mrt.beta_min * self.model.psi_unchecked(s)
    }

    /// All roots of β·Ψ'(σ²) = 1 on the grid, ascending.
    pub fn stationary_points(&self, beta: f64) -> Result<Vec<StationaryPoint>> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
        }
        let mut scan: Vec<(f64, f64)> = self.sigmas.iter().copied().zip(self.dpsi.iter().copied()).collect();
        for &s in &self.slope_peaks {
            scan.push((s, self.model.dpsi_unchecked(s)));
        }
        scan.sort_by(|a, b| a.0.total_cmp(&b.0));
        scan.dedup_by(|a, b| a.0 == b.0);
        let h: Vec<f64> = scan.iter().map(|&(_, d)| beta * d - 1.0).collect();
        let mut out = Vec::new();
        for k in sign_changes(&h) {
            let s = bisect(
                |s| beta * self.model.dpsi_unchecked(s) - 1.0,
                scan[k].0,
                scan[k + 1].0,
                self.config.root_rel_tol,
            )?;
            out.push(StationaryPoint { sigma_sq: s, n0: s - beta * self.model.psi_unchecked(s) });
        }
        Ok(out)
    }

    /// N0_min(β) (only for β_min < β < β_max) and N0_max(β) (for β > β_min).
    pub fn critical_noise(&self, beta: f64) -> Result<CriticalNoise> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive and finite, got {beta}")));
        }
        if beta <= self.mrt.beta_min {
            return Ok(CriticalNoise::default());
        }
        let points = self.stationary_points(beta)?;
        if points.is_empty() {
            return Err(Error::Numerical(format!(
                "no stationary point of g found for beta = {beta} > beta_min; refine the grid"
            )));
        }
        let n0_max = points.iter().map(|p| p.n0).fold(f64::NEG_INFINITY, f64::max);
        let n0_min = points.iter().map(|p| p.n0).fold(f64::INFINITY, f64::min);
        Ok(CriticalNoise {
            n0_min: (beta < self.ert.beta_max).then_some(n0_min),
            n0_max: Some(n0_max),
        })
    }

    /// Optimality regime of (β, N0); the closed interval [N0_min, N0_max] is
    /// labelled possibly-suboptimal.
    pub fn classify(&self, beta: f64, n0: f64) -> Result<Regime> {
        if !(n0 >= 0.0) || !n0.is_finite() {
            return Err(Error::param("n0", format!("must be non-negative and finite, got {n0}")));
        }
        let crit = self.critical_noise(beta)?;
        if beta <= self.mrt.beta_min {
            return Ok(Regime::AlwaysOptimal);
        }
        let n0_max = crit.n0_max.expect("defined above the MRT");
        if n0 > n0_max {
            return Ok(Regime::OptimalHighNoise);
        }
        Ok(match crit.n0_min {
            Some(n0_min) if n0 < n0_min => Regime::OptimalLowNoise,
            Some(_) => Regime::PossiblySuboptimal,
            None => Regime::Suboptimal,
        })
    }

    pub fn report(&self, beta: Option<f64>) -> Result<ThresholdReport> {
        let at_max = self.critical_noise(self.ert.beta_max)?;
        let (crit, stationary) = match beta {
            Some(b) => (self.critical_noise(b)?, self.stationary_points(b)?),
            None => (CriticalNoise::default(), Vec::new()),
        };
        Ok(ThresholdReport {
            constellation: self.model.constellation().name().to_string(),
            beta_max: self.ert.beta_max,
            beta_min: self.mrt.beta_min,
            argmin_sigma_sq_ert: self.ert.argmin_sigma_sq,
            argmax_sigma_sq_mrt: self.mrt.argmax_sigma_sq,
            n0_at_beta_min: self.n0_at_beta_min(),
            n0_max_at_beta_max: at_max.n0_max.unwrap_or(f64::NAN),
            beta,
            n0_min: crit.n0_min,
            n0_max: crit.n0_max,
            stationary_sigmas: stationary.iter().map(|p| p.sigma_sq).collect(),
            quad_order: self.model.order(),
            grid: self.config,
            version: crate::VERSION.to_string(),
        })
    }
}

/// β_max and its minimizer.
pub fn compute_ert(model: &MseModel) -> Result<Ert> {
    Ok(ThresholdAnalyzer::new(model.clone())?.ert())
}

/// β_min and the σ² where Ψ' peaks.
pub fn compute_mrt(model: &MseModel) -> Result<Mrt> {
    Ok(ThresholdAnalyzer::new(model.clone())?.mrt())
}

pub fn critical_noise(model: &MseModel, beta: f64) -> Result<CriticalNoise> {
    ThresholdAnalyzer::new(model.clone())?.critical_noise(beta)
}

pub fn classify_regime(model: &MseModel, beta: f64, n0: f64) -> Result<Regime> {
    ThresholdAnalyzer::new(model.clone())?.classify(beta, n0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{Builtin, Constellation};

    fn analyzer(b: Builtin) -> ThresholdAnalyzer {
        ThresholdAnalyzer::new(MseModel::new(Constellation::builtin(b))).unwrap()
    }

    fn close(x: f64, target: f64, rel: f64) -> bool {
        (x / target - 1.0).abs() <= rel
    }

    #[test]
    fn qpsk_and_bpsk_thresholds() {
        let q = analyzer(Builtin::Qpsk);
        assert!(close(q.beta_max(), 2.0855, 0.005), "{}", q.beta_max());
        assert!(close(q.beta_min(), 1.4752, 0.005), "{}", q.beta_min());
        let b = analyzer(Builtin::Bpsk);
        assert!(close(b.beta_max(), 4.1709, 0.005), "{}", b.beta_max());
        assert!(close(b.beta_min(), 2.9505, 0.005));
        // complex noise on a real alphabet doubles both ratios
        assert!(close(b.beta_max(), 2.0 * q.beta_max(), 1e-6));
        assert!(close(b.beta_min(), 2.0 * q.beta_min(), 1e-6));
    }

    #[test]
    fn critical_noise_table_values() {
        let b = analyzer(Builtin::Bpsk);
        assert!(close(b.n0_at_beta_min(), 2.999e-1, 0.01), "{}", b.n0_at_beta_min());
        let q = analyzer(Builtin::Qpsk);
        let at_max = q.critical_noise(q.beta_max()).unwrap();
        assert!(close(at_max.n0_max.unwrap(), 1.216e-1, 0.01), "{:?}", at_max);
        assert_eq!(at_max.n0_min, None);
    }

    #[test]
    fn stationary_points_satisfy_constraint() {
        let q = analyzer(Builtin::Qpsk);
        let beta = 0.5 * (q.beta_min() + q.beta_max());
        let pts = q.stationary_points(beta).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert!((beta * q.model().dpsi(p.sigma_sq).unwrap() - 1.0).abs() < 1e-6);
        }
        let crit = q.critical_noise(beta).unwrap();
        assert!(crit.n0_min.unwrap() <= crit.n0_max.unwrap());
    }

    #[test]
    fn below_mrt_has_no_critical_noise() {
        let q = analyzer(Builtin::Qpsk);
        assert_eq!(q.critical_noise(1.0).unwrap(), CriticalNoise::default());
        assert!(q.critical_noise(0.0).is_err());
    }

    #[test]
    fn regime_examples() {
        let q = analyzer(Builtin::Qpsk);
        for n0 in [0.0, 0.01, 0.2, 5.0] {
            assert_eq!(q.classify(1.0, n0).unwrap(), Regime::AlwaysOptimal);
        }
        assert_eq!(q.classify(2.5, 0.0).unwrap(), Regime::Suboptimal);
        let n0_max = q.critical_noise(2.5).unwrap().n0_max.unwrap();
        assert_eq!(q.classify(2.5, 10.0 * n0_max).unwrap(), Regime::OptimalHighNoise);
        assert_eq!(q.classify(2.5, n0_max).unwrap(), Regime::Suboptimal);
        let mid = 0.5 * (q.beta_min() + q.beta_max());
        let crit = q.critical_noise(mid).unwrap();
        let (lo, hi) = (crit.n0_min.unwrap(), crit.n0_max.unwrap());
        assert_eq!(q.classify(mid, 0.5 * lo).unwrap(), Regime::OptimalLowNoise);
        assert_eq!(q.classify(mid, lo).unwrap(), Regime::PossiblySuboptimal);
        assert_eq!(q.classify(mid, hi).unwrap(), Regime::PossiblySuboptimal);
        assert_eq!(q.classify(mid, 2.0 * hi).unwrap(), Regime::OptimalHighNoise);
        assert!(q.classify(mid, -1.0).is_err());
    }

    #[test]
    fn degenerate_alphabet_is_rejected() {
        let one = Constellation::custom(vec![num_complex::Complex64::new(1.0, 1.0)], vec![1.0]).unwrap();
        assert!(ThresholdAnalyzer::new(MseModel::new(one)).is_err());
    }

    #[test]
    fn report_serializes() {
        let q = analyzer(Builtin::Qpsk);
        let r = q.report(Some(1.8)).unwrap();
        assert_eq!(r.constellation, "qpsk");
        assert_eq!(r.quad_order, crate::quadrature::DEFAULT_QUAD_ORDER);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["n0_max"].as_f64().unwrap() > 0.0);
        assert_eq!(json["grid"]["grid_points"], 2000);
    }
}
