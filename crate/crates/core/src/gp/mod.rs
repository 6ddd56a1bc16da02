//! Stochastically driven, damped simple-harmonic-oscillator (SHO) Gaussian
//! processes: kernel, linear-time likelihood, HMC fitting and the G1..G15
//! featureset.

pub mod celerite;
pub mod features;
pub mod hmc;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use celerite::{gp_loglike, gp_loglike_grad, sample_gp};
pub use features::{g_features, init_model, GFeatures};
pub use hmc::{hmc_fit, HmcConfig, PosteriorSummary};

pub const MAX_COMPONENTS: usize = 5;
/// Support of w0 in Hz (converted to rad/s with 2π).
pub const W0_HZ_SUPPORT: (f64, f64) = (0.1, 12.0);
pub const Q_SUPPORT: (f64, f64) = (0.5, 100.0);

pub fn log_w0_support() -> (f64, f64) {
    ((TAU * W0_HZ_SUPPORT.0).ln(), (TAU * W0_HZ_SUPPORT.1).ln())
}

pub fn log_q_support() -> (f64, f64) {
    (Q_SUPPORT.0.ln(), Q_SUPPORT.1.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoComponent {
    pub log_s0: f64,
    pub log_q: f64,
    /// Log angular frequency, rad/s.
    pub log_w0: f64,
}

impl ShoComponent {
    pub fn new(s0: f64, q: f64, w0: f64) -> Self {
        ShoComponent {
            log_s0: s0.ln(),
            log_q: q.ln(),
            log_w0: w0.ln(),
        }
    }

    pub fn s0(&self) -> f64 {
        self.log_s0.exp()
    }

    pub fn q(&self) -> f64 {
        self.log_q.exp()
    }

    pub fn w0(&self) -> f64 {
        self.log_w0.exp()
    }

    /// Coefficients `(a, b, c, d)` of `k(τ) = e^{-cτ} (a cos dτ + b sin dτ)`.
    /// Valid for Q > 1/2; η is floored so Q = 1/2 exactly stays finite.
    pub fn celerite_coefficients(&self) -> [f64; 4] {
        let (s0, q, w0) = (self.s0(), self.q(), self.w0());
        let f = (4.0 * q * q - 1.0).max(1e-12).sqrt();
        let a = s0 * w0 * q;
        [a, a / f, 0.5 * w0 / q, 0.5 * w0 * f / q]
    }

    /// Autocovariance at lag `tau`.
    pub fn kernel(&self, tau: f64) -> f64 {
        let [a, b, c, d] = self.celerite_coefficients();
        let tau = tau.abs();
        (-c * tau).exp() * (a * (d * tau).cos() + b * (d * tau).sin())
    }

    pub fn variance(&self) -> f64 {
        self.s0() * self.w0() * self.q()
    }
}

/// `sqrt(2/π) S0 w0⁴ / ((w² - w0²)² + w0² w² / Q²)`.
pub fn sho_psd(c: &ShoComponent, w: f64) -> f64 {
    let (s0, q, w0) = (c.s0(), c.q(), c.w0());
    let w0sq = w0 * w0;
    let diff = w * w - w0sq;
    (2.0 / PI).sqrt() * s0 * w0sq * w0sq / (diff * diff + w0sq * w * w / (q * q))
}

/// Sum of 1..=5 SHO components plus white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShoModel {
    pub components: Vec<ShoComponent>,
    /// Log of the white-noise standard deviation.
    pub log_jitter: f64,
}

impl ShoModel {
    pub fn n_params(&self) -> usize {
        3 * self.components.len() + 1
    }

    /// Flattened log-parameters: per component (log_S0, log_Q, log_w0), then log_jitter.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for c in &self.components {
            p.extend([c.log_s0, c.log_q, c.log_w0]);
        }
        p.push(self.log_jitter);
        p
    }

    pub fn from_params(params: &[f64]) -> Self {
        let j = (params.len() - 1) / 3;
        let components = (0..j)
            .map(|k| ShoComponent {
                log_s0: params[3 * k],
                log_q: params[3 * k + 1],
                log_w0: params[3 * k + 2],
            })
            .collect();
        ShoModel {
            components,
            log_jitter: params[3 * j],
        }
    }

    pub fn sort_by_frequency(&mut self) {
        self.components.sort_by(|a, b| a.log_w0.total_cmp(&b.log_w0));
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() > MAX_COMPONENTS {
            return Err(Error::InvalidGpInput(format!(
                "component count {} outside 1..=5",
                self.components.len()
            )));
        }
        if !self.to_params().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGpInput("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Autocovariance of the oscillator sum at lag `tau` (jitter excluded).
    pub fn kernel(&self, tau: f64) -> f64 {
        self.components.iter().map(|c| c.kernel(tau)).sum()
    }

    pub fn jitter_variance(&self) -> f64 {
        (2.0 * self.log_jitter).exp()
    }
}
