//! Large-MIMO data detection by approximate message passing (IO-LAMA),
//! together with its state-evolution analysis and the exact-recovery and
//! optimality thresholds derived from it.
//!
//! Layers, bottom up:
//! - [`constellation`]: discrete alphabets with priors.
//! - [`denoiser`]: posterior mean/variance and the MSE function Ψ(σ²).
//! - [`state_evolution`]: the SE recursion and its fixed points.
//! - [`thresholds`]: ERT/MRT, critical noise levels, regime labels.
//! - [`mimo`]: the detector on finite random instances and Monte Carlo checks.
//! - [`cli`]: the `iolama` command-line front end.

pub mod cli;
pub mod constellation;
pub mod denoiser;
pub mod error;
pub mod exact_sum;
pub mod mimo;
pub mod quadrature;
pub mod search;
pub mod state_evolution;
pub mod thresholds;

pub use constellation::{Builtin, Constellation};
pub use denoiser::{denoise_mean, denoise_var, mse, mse_derivative, DenoiserInput, MseModel, MsePoint};
pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
