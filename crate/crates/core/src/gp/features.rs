use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::hmc::{variance, PosteriorSummary};
use super::{log_q_support, log_w0_support, ShoComponent, ShoModel, MAX_COMPONENTS};
use crate::error::{Error, Result};
use crate::spectral::PeakSet;

pub const INIT_Q: f64 = 5.0;
pub const INIT_JITTER_FRACTION: f64 = 0.1;

/// One component per detected peak (at most five), ascending w0, Q = 5.
///
/// S0 is chosen so that `sqrt(2/π)·sho_psd(w0)` equals the periodogram's
/// one-sided variance density at the peak, `power / (2π·rate)`.
/// Jitter starts at 10% of the signal standard deviation.
pub fn init_model(peaks: &PeakSet, values: &[f64], rate: f64) -> Result<ShoModel> {
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    let (lw_lo, lw_hi) = log_w0_support();
    let (lq_lo, lq_hi) = log_q_support();
    let log_q = INIT_Q.ln().clamp(lq_lo, lq_hi);
    let mut components: Vec<ShoComponent> = peaks
        .peaks
        .iter()
        .take(MAX_COMPONENTS)
        .map(|pk| {
            let density = pk.amplitude * pk.amplitude / (TAU * rate);
            let s0 = PI * density / (2.0 * INIT_Q * INIT_Q);
            ShoComponent {
                log_s0: s0.max(1e-300).ln(),
                log_q,
                log_w0: (TAU * pk.freq).ln().clamp(lw_lo, lw_hi),
            }
        })
        .collect();
    components.sort_by(|a, b| a.log_w0.total_cmp(&b.log_w0));
    let sd = variance(values).sqrt();
    if !(sd > 0.0) {
        return Err(Error::NoPeaks);
    }
    Ok(ShoModel {
        components,
        log_jitter: (INIT_JITTER_FRACTION * sd).ln(),
    })
}

/// G1..G15: posterior-median (log S0, log Q, log w0) per component in
/// ascending-w0 order, NA for absent components. Posterior standard deviations
/// are carried alongside in `uncertainty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFeatures {
    pub values: [Option<f64>; 15],
    pub uncertainty: [Option<f64>; 15],
}

impl GFeatures {
    pub fn na() -> Self {
        GFeatures {
            values: [None; 15],
            uncertainty: [None; 15],
        }
    }
}

pub fn g_features(post: &PosteriorSummary, n_components: usize) -> GFeatures {
    let mut g = GFeatures::na();
    let n = n_components.min(post.n_components).min(MAX_COMPONENTS);
    for i in 0..3 * n {
        g.values[i] = Some(post.params[i].median);
        g.uncertainty[i] = Some(post.params[i].std);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::hmc::ParamSummary;
    use crate::spectral::Peak;

    fn peak(freq: f64, amp: f64) -> Peak {
        Peak {
            freq,
            amplitude: amp,
            band_power: amp * amp,
            fwhm: 0.02,
            bin: (freq / 0.02) as usize,
        }
    }

    #[test]
    fn init_sorts_components() {
        let ps = PeakSet {
            peaks: vec![peak(1.8, 3.0), peak(3.6, 2.0), peak(0.9, 1.0)],
        };
        let values: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let m = init_model(&ps, &values, 25.0).unwrap();
        assert_eq!(m.components.len(), 3);
        assert!(m.components.windows(2).all(|w| w[0].log_w0 < w[1].log_w0));
        assert!((m.components[1].log_w0 - (TAU * 1.8).ln()).abs() < 1e-12);
        // Density match at the peak.
        let c = m.components[1];
        let lhs = (2.0 / PI).sqrt() * crate::gp::sho_psd(&c, c.w0());
        assert!((lhs - 9.0 / (TAU * 25.0)).abs() < 1e-12);
    }

    #[test]
    fn init_without_peaks() {
        assert!(matches!(
            init_model(&PeakSet::default(), &[1.0, 2.0], 25.0),
            Err(Error::NoPeaks)
        ));
    }

    fn summary(n: usize) -> PosteriorSummary {
        PosteriorSummary {
            n_components: n,
            params: (0..3 * n + 1)
                .map(|i| ParamSummary {
                    name: format!("p{i}"),
                    median: i as f64,
                    std: 0.1,
                })
                .collect(),
            acceptance_rate: 0.8,
            divergences: 0,
            n_samples: 500,
            step_size: 0.1,
            seed: 1,
        }
    }

    #[test]
    fn g_feature_layout() {
        let g = g_features(&summary(5), 5);
        assert!(g.values.iter().all(Option::is_some));
        let g = g_features(&summary(2), 2);
        assert!(g.values[..6].iter().all(Option::is_some));
        assert!(g.values[6..].iter().all(Option::is_none));
        assert_eq!(g.values[5], Some(5.0));
    }
}
