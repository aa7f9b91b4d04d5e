mod common;

use common::{random_alphabet, rng};
use iolama::{denoise_mean, denoise_var, Builtin, Constellation, DenoiserInput, MseModel};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Monte Carlo estimate of E|F(S + σZ, σ²) − S|² and its standard error.
fn mc_mse(c: &Constellation, sigma_sq: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let pick = WeightedIndex::new(c.priors()).unwrap();
    let scale = (sigma_sq / 2.0).sqrt();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let s = c.points()[pick.sample(&mut r)];
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        let z = s + Complex64::new(re, im) * scale;
        let f = denoise_mean(c, DenoiserInput::new(z, sigma_sq).unwrap()).unwrap();
        let e = (f - s).norm_sqr();
        sum += e;
        sum_sq += e * e;
    }
    let n = samples as f64;
    let mean = sum / n;
    (mean, ((sum_sq / n - mean * mean) / n).sqrt())
}

#[test]
fn bpsk_mse_matches_monte_carlo() {
    let c = Constellation::builtin(Builtin::Bpsk);
    let (mc, se) = mc_mse(&c, 1.0, 10_000_000, 1);
    let psi = MseModel::new(c).psi(1.0).unwrap();
    assert!((psi - mc).abs() <= 3.0 * se, "psi {psi} vs mc {mc} ± {se}");
}

/// Judges a family of independent z-scores at a 0.1% family-wise level:
/// each |z| against a Bonferroni bound and Σz² against the χ² quantile.
fn family_ok(label: &str, zs: &[(String, f64)]) {
    let n = zs.len() as f64;
    let per_check = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - 0.0005 / n);
    let chi2 = zs.iter().map(|(_, z)| z * z).sum::<f64>();
    let chi2_max = ChiSquared::new(n).unwrap().inverse_cdf(0.999);
    let worst = zs.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    println!("{label}: worst {} z = {:.2} (bound {per_check:.2}), chi2 {chi2:.1} (bound {chi2_max:.1})", worst.0, worst.1);
    assert!(worst.1.abs() <= per_check, "{label}: {} z = {}", worst.0, worst.1);
    assert!(chi2 <= chi2_max, "{label}: chi2 {chi2}");
}

#[test]
fn builtin_mse_matches_monte_carlo() {
    let mut zs = Vec::new();
    for (k, b) in Builtin::ALL.into_iter().enumerate() {
        let c = Constellation::builtin(b);
        let model = MseModel::new(c.clone());
        for (j, s2) in [0.1, 1.0, 10.0].into_iter().enumerate() {
            let (mc, se) = mc_mse(&c, s2, 200_000, 100 + 10 * k as u64 + j as u64);
            zs.push((format!("{b} at {s2}"), (model.psi(s2).unwrap() - mc) / se));
        }
    }
    family_ok("builtins", &zs);
}

#[test]
fn custom_alphabet_mse_matches_monte_carlo() {
    let mut r = rng(21);
    let mut zs = Vec::new();
    for k in 0..4 {
        let c = random_alphabet(&mut r, 5);
        let model = MseModel::new(c.clone());
        for s2 in [0.05, 0.5] {
            let (mc, se) = mc_mse(&c, s2, 100_000, 300 + 2 * k + (s2 > 0.1) as u64);
            zs.push((format!("alphabet {k} at {s2}"), (model.psi(s2).unwrap() - mc) / se));
        }
    }
    family_ok("random alphabets", &zs);
}

#[test]
fn mse_scales_with_the_alphabet() {
    for b in Builtin::ALL {
        let c = Constellation::builtin(b);
        let scaled = c.scale(3.0).unwrap();
        let (m, ms) = (MseModel::new(c), MseModel::new(scaled));
        for s2 in [1e-3, 0.07, 0.9, 12.0] {
            let (a, big) = (m.psi(s2).unwrap(), ms.psi(9.0 * s2).unwrap());
            assert!((big - 9.0 * a).abs() <= 1e-8 * (9.0 * a).max(1e-300), "{b} at {s2}: {big} vs 9·{a}");
        }
    }
}

fn any_builtin() -> impl Strategy<Value = Builtin> {
    prop::sample::select(Builtin::ALL.to_vec())
}

proptest! {
    #[test]
    fn denoiser_scaling_covariance(b in any_builtin(), re in -3.0..3.0f64, im in -3.0..3.0f64,
                                   tau in 0.01..10.0f64, c in 0.1..5.0f64) {
        let base = Constellation::builtin(b);
        let scaled = base.scale(c).unwrap();
        let z = Complex64::new(re, im);
        let f = denoise_mean(&base, DenoiserInput::new(z, tau).unwrap()).unwrap();
        let fs = denoise_mean(&scaled, DenoiserInput::new(z * c, c * c * tau).unwrap()).unwrap();
        prop_assert!((fs - f * c).norm() <= 1e-8 * c.max(1.0));
        let g = denoise_var(&base, DenoiserInput::new(z, tau).unwrap()).unwrap();
        let gs = denoise_var(&scaled, DenoiserInput::new(z * c, c * c * tau).unwrap()).unwrap();
        prop_assert!((gs - g * c * c).abs() <= 1e-8 * (c * c).max(1.0));
    }

    #[test]
    fn posterior_mean_stays_in_the_hull(b in any_builtin(), re in -50.0..50.0f64, im in -50.0..50.0f64,
                                        tau in 1e-6..1e3f64) {
        let c = Constellation::builtin(b);
        let input = DenoiserInput::new(Complex64::new(re, im), tau).unwrap();
        let f = denoise_mean(&c, input).unwrap();
        let g = denoise_var(&c, input).unwrap();
        let reach = c.points().iter().map(|p| p.norm()).fold(0.0, f64::max);
        prop_assert!(f.norm() <= reach * (1.0 + 1e-12));
        prop_assert!(g >= 0.0);
        // variance never exceeds the largest squared distance to a point
        let spread = c.points().iter().map(|p| (p - f).norm_sqr()).fold(0.0, f64::max);
        prop_assert!(g <= spread * (1.0 + 1e-12));
    }
}
