//! Discrete complex constellations with prior probabilities.
//!
//! Built-in alphabets are normalized to unit symbol variance. Custom
//! alphabets keep their points as given; only the priors are renormalized
//! to remove rounding in their sum.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIOR_SUM_TOL: f64 = 1e-9;

/// Identifiers of the built-in alphabets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Bpsk,
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
    #[serde(rename = "8psk")]
    Psk8,
    #[serde(rename = "16psk")]
    Psk16,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Bpsk,
        Builtin::Qpsk,
        Builtin::Qam16,
        Builtin::Qam64,
        Builtin::Psk8,
        Builtin::Psk16,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Builtin::Bpsk => "bpsk",
            Builtin::Qpsk => "qpsk",
            Builtin::Qam16 => "16qam",
            Builtin::Qam64 => "64qam",
            Builtin::Psk8 => "8psk",
            Builtin::Psk16 => "16psk",
        }
    }

    fn raw_points(self) -> Vec<Complex64> {
        match self {
            Builtin::Bpsk => psk(2),
            Builtin::Qpsk => square_qam(2),
            Builtin::Qam16 => square_qam(4),
            Builtin::Qam64 => square_qam(8),
            Builtin::Psk8 => psk(8),
            Builtin::Psk16 => psk(16),
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "");
        Builtin::ALL
            .into_iter()
            .find(|b| b.id() == key || (key == "4qam" && *b == Builtin::Qpsk))
            .ok_or_else(|| Error::UnknownConstellation(s.to_string()))
    }
}

/// Odd-integer grid {±1, ±3, …}², row-major: imaginary part outer, real part inner.
fn square_qam(side: usize) -> Vec<Complex64> {
    let level = |k: usize| 2.0 * k as f64 - (side as f64 - 1.0);
    (0..side)
        .flat_map(|row| (0..side).map(move |col| Complex64::new(level(col), level(row))))
        .collect()
}

/// Unit-circle points counterclockwise from angle zero.
fn psk(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / order as f64;
            let (s, c) = angle.sin_cos();
            // snap the exact zeros so symmetric alphabets stay symmetric
            let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
            Complex64::new(snap(c), snap(s))
        })
        .collect()
}

/// One real axis factor of a product alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisFactor {
    pub values: Vec<f64>,
    pub priors: Vec<f64>,
}

/// A constellation that factors as (real alphabet) × (imaginary alphabet)
/// with product priors. Under circularly-symmetric noise the posterior
/// factors too, which turns the 2-D MSE integral into two 1-D ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductForm {
    pub re: AxisFactor,
    pub im: AxisFactor,
}

/// Discrete complex alphabet with priors and cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    priors: Vec<f64>,
    mean: Complex64,
    energy: f64,
    variance: f64,
    product: Option<ProductForm>,
}

/// One record of the custom alphabet JSON file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub re: f64,
    pub im: f64,
    pub prior: f64,
}

impl Constellation {
    /// Built-in alphabet with uniform priors and unit variance.
    pub fn builtin(which: Builtin) -> Self {
        let raw = which.raw_points();
        let n = raw.len();
        let energy = raw.iter().map(|a| a.norm_sqr()).sum::<f64>() / n as f64;
        let gain = energy.sqrt().recip();
        let points = raw.into_iter().map(|a| a * gain).collect();
        Self::assemble(which.id().to_string(), points, vec![1.0 / n as f64; n])
    }

    /// Looks up a built-in alphabet by identifier (`bpsk`, `qpsk`, `16qam`, `64qam`, `8psk`, `16psk`).
    pub fn make_builtin(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    /// Arbitrary alphabet. Points are used as given.
    pub fn custom(points: Vec<Complex64>, priors: Vec<f64>) -> Result<Self> {
        Self::custom_named("custom", points, priors)
    }

    pub fn custom_named(name: &str, points: Vec<Complex64>, priors: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConstellation("empty point list".into()));
        }
        if points.len() != priors.len() {
            return Err(Error::InvalidConstellation(format!(
                "{} points but {} priors",
                points.len(),
                priors.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::InvalidConstellation(format!("non-finite point {p}")));
        }
        if let Some(p) = priors.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidConstellation(format!("invalid prior {p}")));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::InvalidConstellation(format!("priors sum to {total}, expected 1")));
        }
        for (i, a) in points.iter().enumerate() {
            for b in &points[..i] {
                if (a - b).norm() <= 1e-12 * a.norm().max(b.norm()).max(1e-300) || a == b {
                    return Err(Error::InvalidConstellation(format!("duplicate point {a}")));
                }
            }
        }
        let priors = priors.into_iter().map(|p| p / total).collect();
        Ok(Self::assemble(name.to_string(), points, priors))
    }

    fn assemble(name: String, points: Vec<Complex64>, priors: Vec<f64>) -> Self {
        let mean: Complex64 = points.iter().zip(&priors).map(|(a, p)| a * p).sum();
        let energy: f64 = points.iter().zip(&priors).map(|(a, p)| a.norm_sqr() * p).sum();
        let variance = (energy - mean.norm_sqr()).max(0.0);
        let product = detect_product(&points, &priors);
        Self { name, points, priors, mean, energy, variance, product }
    }

    pub fn from_records(name: &str, records: &[PointRecord]) -> Result<Self> {
        let points = records.iter().map(|r| Complex64::new(r.re, r.im)).collect();
        let priors = records.iter().map(|r| r.prior).collect();
        Self::custom_named(name, points, priors)
    }

    pub fn from_json_str(name: &str, json: &str) -> Result<Self> {
        let records: Vec<PointRecord> = serde_json::from_str(json)?;
        Self::from_records(name, &records)
    }

    /// Loads a custom alphabet file: a JSON array of `{"re", "im", "prior"}` records.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
        Self::from_json_str(name, &text)
    }

    /// Resolves a built-in identifier, falling back to a JSON file path.
    /// Anything that looks like a path is read as one, so a missing file is
    /// an IO error rather than an unknown identifier.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec.parse::<Builtin>() {
            Ok(b) => Ok(Self::builtin(b)),
            Err(err) => {
                let looks_like_path = spec.ends_with(".json") || spec.contains(std::path::MAIN_SEPARATOR) || spec.contains('/');
                if looks_like_path || Path::new(spec).is_file() {
                    Self::load_json(spec)
                } else {
                    Err(err)
                }
            }
        }
    }

    pub fn records(&self) -> Vec<PointRecord> {
        self.points
            .iter()
            .zip(&self.priors)
            .map(|(a, p)| PointRecord { re: a.re, im: a.im, prior: *p })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records()).expect("records serialize")
    }

    /// Multiplies every point by `factor`; priors are unchanged.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::param("factor", format!("must be positive and finite, got {factor}")));
        }
        if factor == 1.0 {
            return Ok(self.clone());
        }
        let points = self.points.iter().map(|a| a * factor).collect();
        Ok(Self::assemble(self.name.clone(), points, self.priors.clone()))
    }

    /// Nearest constellation point to `z`; ties go to the lowest index.
    pub fn slice(&self, z: Complex64) -> Complex64 {
        self.points[self.slice_index(z)]
    }

    pub fn slice_index(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            let d = (z - a).norm_sqr();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// E[S]
    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    /// E[|S|^2]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Var[S] = E[|S|^2] - |E[S]|^2
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn product_form(&self) -> Option<&ProductForm> {
        self.product.as_ref()
    }
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

fn detect_product(points: &[Complex64], priors: &[f64]) -> Option<ProductForm> {
    let res = distinct_sorted(points.iter().map(|a| a.re));
    let ims = distinct_sorted(points.iter().map(|a| a.im));
    if res.len() * ims.len() != points.len() {
        return None;
    }
    let pos = |axis: &[f64], v: f64| axis.binary_search_by(|x| x.total_cmp(&v)).ok();
    let mut grid = vec![None; points.len()];
    let mut re_marg = vec![0.0; res.len()];
    let mut im_marg = vec![0.0; ims.len()];
    for (a, &p) in points.iter().zip(priors) {
        let (i, j) = (pos(&res, a.re)?, pos(&ims, a.im)?);
        let cell = &mut grid[i * ims.len() + j];
        if cell.is_some() {
            return None;
        }
        *cell = Some(p);
        re_marg[i] += p;
        im_marg[j] += p;
    }
    for (i, rm) in re_marg.iter().enumerate() {
        for (j, im) in im_marg.iter().enumerate() {
            let p = grid[i * ims.len() + j]?;
            if (p - rm * im).abs() > 1e-12 {
                return None;
            }
        }
    }
    Some(ProductForm {
        re: AxisFactor { values: res, priors: re_marg },
        im: AxisFactor { values: ims, priors: im_marg },
    })
}
