//! Finite MIMO instances, the IO-LAMA detector and Monte Carlo harnesses.
//!
//! Model: `y = H·s0 + n` with `H` an `mr × mt` matrix of i.i.d. CN(0, 1/mr)
//! entries, `s0` drawn i.i.d. from the constellation prior and `n` i.i.d.
//! CN(0, n0).

mod detector;
mod montecarlo;

pub use detector::{lama_detect, DetectionResult, DetectorConfig, DetectorState, Lama, N0_FLOOR_FACTOR};
pub use montecarlo::{monte_carlo_ser, verify_decoupling, DecouplingReport, SerEstimate, TrialOutcome};

use std::path::Path;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::exact_sum::ExactComplexSum;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `H·x`. Each row sum is exact, so permuting columns of `H` together
    /// with `x` leaves the result bit-identical.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut acc = ExactComplexSum::new();
                for (h, v) in self.row(i).iter().zip(x) {
                    acc.add(h * v);
                }
                acc.value()
            })
            .collect())
    }

    /// `Hᴴ·x`, accumulated row by row so that every output entry sees its
    /// addends in the same order regardless of column order.
    pub fn adjoint_mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} rows, vector has {} entries",
                self.rows,
                x.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, h) in out.iter_mut().zip(self.row(i)) {
                *o += h.conj() * xi;
            }
        }
        Ok(out)
    }

    pub fn column_norm_sqr(&self, col: usize) -> f64 {
        (0..self.rows).map(|i| self.get(i, col).norm_sqr()).sum()
    }

    /// Column `j` of the result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.cols)?;
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self.get(i, perm[j])))
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::DimensionMismatch(format!("permutation of length {} for {n} entries", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::param("permutation", "not a permutation of 0..n"));
        }
        seen[p] = true;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MimoInstance {
    mt: usize,
    mr: usize,
    n0: f64,
    seed: u64,
    trial: u64,
    h: CMatrix,
    s0: Vec<Complex64>,
    s0_index: Vec<usize>,
    y: Vec<Complex64>,
}

fn check_dims(mt: usize, mr: usize, n0: f64) -> Result<()> {
    if mt == 0 {
        return Err(Error::param("mt", "must be at least 1"));
    }
    if mr == 0 {
        return Err(Error::param("mr", "must be at least 1"));
    }
    if !n0.is_finite() {
        return Err(Error::NonFinite(format!("n0 = {n0}")));
    }
    if n0 < 0.0 {
        return Err(Error::param("n0", format!("must be non-negative, got {n0}")));
    }
    Ok(())
}

/// RNG for one trial: the seed picks the key, the trial index the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Trial 0 of `seed`.
pub fn generate_instance(c: &Constellation, mt: usize, mr: usize, n0: f64, seed: u64) -> Result<MimoInstance> {
    generate_trial(c, mt, mr, n0, seed, 0)
}

pub fn generate_trial(c: &Constellation, mt: usize, mr: usize, n0: f64, seed: u64, trial: u64) -> Result<MimoInstance> {
    check_dims(mt, mr, n0)?;
    let mut rng = trial_rng(seed, trial);
    let h_scale = (0.5 / mr as f64).sqrt();
    let gaussian = |rng: &mut ChaCha8Rng, scale: f64| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    };
    let h = CMatrix::from_fn(mr, mt, |_, _| gaussian(&mut rng, h_scale));
    let picker = WeightedIndex::new(c.priors())
        .map_err(|e| Error::InvalidConstellation(format!("priors unusable for sampling: {e}")))?;
    let s0_index: Vec<usize> = (0..mt).map(|_| picker.sample(&mut rng)).collect();
    let s0: Vec<Complex64> = s0_index.iter().map(|&k| c.points()[k]).collect();
    let noise_scale = (0.5 * n0).sqrt();
    let clean = h.mul_vec(&s0)?;
    let y = clean
        .into_iter()
        .map(|v| {
            let n = gaussian(&mut rng, noise_scale);
            if n0 == 0.0 {
                v
            } else {
                v + n
            }
        })
        .collect();
    Ok(MimoInstance { mt, mr, n0, seed, trial, h, s0, s0_index, y })
}

impl MimoInstance {
    /// Builds an instance from explicit parts. Every `s0` entry must be a
    /// point of `c`.
    pub fn from_parts(c: &Constellation, h: CMatrix, s0: Vec<Complex64>, y: Vec<Complex64>, n0: f64) -> Result<Self> {
        let (mr, mt) = (h.rows(), h.cols());
        check_dims(mt, mr, n0)?;
        if s0.len() != mt {
            return Err(Error::DimensionMismatch(format!("H has {mt} columns, s0 has {} entries", s0.len())));
        }
        if y.len() != mr {
            return Err(Error::DimensionMismatch(format!("H has {mr} rows, y has {} entries", y.len())));
        }
        if s0.iter().chain(&y).chain(&h.data).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("instance entries".into()));
        }
        let scale = c.points().iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
        let mut s0_index = Vec::with_capacity(mt);
        for s in &s0 {
            let k = c.slice_index(*s);
            if (c.points()[k] - s).norm() > 1e-12 * scale {
                return Err(Error::param("s0", format!("{s} is not a constellation point")));
            }
            s0_index.push(k);
        }
        Ok(Self { mt, mr, n0, seed: 0, trial: 0, h, s0, s0_index, y })
    }

    pub fn mt(&self) -> usize {
        self.mt
    }

    pub fn mr(&self) -> usize {
        self.mr
    }

    pub fn beta(&self) -> f64 {
        self.mt as f64 / self.mr as f64
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn s0(&self) -> &[Complex64] {
        &self.s0
    }

    /// Index into the constellation of each transmitted symbol.
    pub fn s0_index(&self) -> &[usize] {
        &self.s0_index
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    /// Same channel use with transmit antennas relabelled: antenna `j` of the
    /// result is antenna `perm[j]` of `self`. `y` is unchanged.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let h = self.h.permute_columns(perm)?;
        Ok(Self {
            h,
            s0: perm.iter().map(|&p| self.s0[p]).collect(),
            s0_index: perm.iter().map(|&p| self.s0_index[p]).collect(),
            ..self.clone()
        })
    }
}

/// Enough to regenerate an instance bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub mt: usize,
    pub mr: usize,
    pub seed: u64,
    pub trial: u64,
    pub n0: f64,
    /// Builtin id or path of a JSON alphabet file.
    pub constellation: String,
}

impl InstanceRecord {
    pub fn regenerate(&self) -> Result<MimoInstance> {
        let c = Constellation::resolve(&self.constellation)?;
        generate_trial(&c, self.mt, self.mr, self.n0, self.seed, self.trial)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
