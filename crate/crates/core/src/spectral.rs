//! Periodogram, fundamental and peak detection, and the two spectral featuresets:
//! the peak descriptors F1..F12 and the cadence-normalized harmonic vector M0..M5.
//!
//! Normalization: for a mean-removed series `x` of length `N` with DFT `X`,
//! `power[k] = c_k |X[k]|² / N` with `c_k = 1` at DC and Nyquist and `2`
//! elsewhere, so `Σ power = Σ (x - mean)²` (N times the population variance).

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::UniformSlice;

pub const MIN_PERIODOGRAM_LEN: usize = 64;
/// Fundamental search band, Hz.
pub const F0_BAND: (f64, f64) = (0.5, 3.0);
/// Peak search band, Hz.
pub const PEAK_BAND: (f64, f64) = (0.3, 6.0);
pub const MAX_PEAKS: usize = 5;
/// Peak prominence threshold relative to the fundamental peak magnitude.
pub const PROMINENCE_FRACTION: f64 = 0.05;
pub const MIN_PEAK_SEPARATION_BINS: usize = 2;
pub const MENG_COMPONENTS: usize = 6;
/// Harmonic band half-width as a fraction of f0.
pub const MENG_HALF_WIDTH: f64 = 0.15;
/// A harmonic band whose max bin is below this fraction of the f0 peak power is NA.
pub const MENG_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    /// Length of the transformed series.
    pub n: usize,
    pub rate: f64,
}

impl Periodogram {
    pub fn resolution(&self) -> f64 {
        self.rate / self.n as f64
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    fn bin_range(&self, lo_hz: f64, hi_hz: f64) -> std::ops::RangeInclusive<usize> {
        let df = self.resolution();
        let last = self.power.len() - 1;
        let lo = ((lo_hz / df) - 1e-9).ceil().max(0.0) as usize;
        let hi = (((hi_hz / df) + 1e-9).floor() as usize).min(last);
        lo..=hi
    }
}

/// One-sided periodogram of the mean-removed series; no taper.
pub fn periodogram(u: &UniformSlice) -> Result<Periodogram> {
    periodogram_of(&u.values, u.rate)
}

pub fn periodogram_of(values: &[f64], rate: f64) -> Result<Periodogram> {
    let n = values.len();
    if n < MIN_PERIODOGRAM_LEN {
        return Err(Error::SliceTooShort(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let mut power = Vec::with_capacity(half + 1);
    for (k, x) in buf.iter().take(half + 1).enumerate() {
        let c = if k == 0 || (n % 2 == 0 && k == half) { 1.0 } else { 2.0 };
        power.push(c * x.norm_sqr() / n as f64);
    }
    // Exact mean removal leaves rounding residue in the DC bin.
    power[0] = 0.0;
    let df = rate / n as f64;
    let freqs = (0..=half).map(|k| k as f64 * df).collect();
    Ok(Periodogram { freqs, power, n, rate })
}

/// Maximum-power bin in the fundamental band.
/// Bins below this fraction of the spectrum's maximum count as zero: FFT
/// rounding leaves ~1e-30 relative power in bins an on-bin tone never touches.
const ZERO_POWER_FRACTION: f64 = 1e-12;

fn fundamental_bin(p: &Periodogram) -> Option<usize> {
    let range = p.bin_range(F0_BAND.0, F0_BAND.1);
    let floor = ZERO_POWER_FRACTION * p.power.iter().copied().fold(0.0, f64::max);
    let mut best: Option<usize> = None;
    for k in range {
        if p.power[k] > floor && best.is_none_or(|b| p.power[k] > p.power[b]) {
            best = Some(k);
        }
    }
    best
}

/// Fundamental frequency: max-power bin in [0.5, 3.0] Hz refined by a 3-point
/// parabolic fit.
pub fn find_fundamental(p: &Periodogram) -> Result<f64> {
    let k = fundamental_bin(p).ok_or(Error::NoFundamental)?;
    let df = p.resolution();
    if k == 0 || k + 1 >= p.power.len() {
        return Ok(k as f64 * df);
    }
    let (a, b, c) = (p.power[k - 1], p.power[k], p.power[k + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok((k as f64 + offset) * df)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    /// Peak magnitude: square root of the peak-bin power.
    pub amplitude: f64,
    /// Power summed over the bins within one FWHM of the peak, bounded by the
    /// surrounding valleys.
    pub band_power: f64,
    pub fwhm: f64,
    pub bin: usize,
}

/// Up to five peaks ordered by descending amplitude.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Topographic prominence of bin `i` within `mag`, plus the valley bins that
/// bound it on either side.
fn prominence(mag: &[f64], i: usize) -> (f64, usize, usize) {
    let h = mag[i];
    let mut left_min = h;
    let mut left_base = i;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if mag[j] > h {
            break;
        }
        if mag[j] < left_min {
            left_min = mag[j];
            left_base = j;
        }
    }
    let mut right_min = h;
    let mut right_base = i;
    let mut j = i;
    while j + 1 < mag.len() {
        j += 1;
        if mag[j] > h {
            break;
        }
        if mag[j] < right_min {
            right_min = mag[j];
            right_base = j;
        }
    }
    (h - left_min.max(right_min), left_base, right_base)
}

/// Half-power crossing distance from bin `i` walking by `step`, in bins.
fn half_power_extent(power: &[f64], i: usize, forward: bool) -> f64 {
    let half = 0.5 * power[i];
    let mut j = i;
    loop {
        let next = if forward {
            if j + 1 >= power.len() {
                return (j - i) as f64;
            }
            j + 1
        } else {
            if j == 0 {
                return (i - j) as f64;
            }
            j - 1
        };
        if power[next] < half {
            let frac = (power[j] - half) / (power[j] - power[next]);
            let base = if forward { j - i } else { i - j };
            return base as f64 + frac;
        }
        j = next;
    }
}

/// Local maxima in [0.3, 6.0] Hz whose magnitude prominence is at least 5% of
/// the fundamental's peak magnitude, strongest five kept.
pub fn detect_peaks(p: &Periodogram, f0: f64, max_peaks: usize) -> PeakSet {
    let df = p.resolution();
    let f0_bin = fundamental_bin(p).unwrap_or_else(|| ((f0 / df).round() as usize).min(p.power.len() - 1));
    let mag: Vec<f64> = p.power.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let threshold = PROMINENCE_FRACTION * mag[f0_bin];
    if !(threshold > 0.0) {
        return PeakSet::default();
    }
    let last = p.power.len() - 1;
    let mut candidates = Vec::new();
    for i in p.bin_range(PEAK_BAND.0, PEAK_BAND.1) {
        if i == 0 || i >= last {
            continue;
        }
        if !(mag[i] > mag[i - 1] && mag[i] >= mag[i + 1]) {
            continue;
        }
        let (prom, left_base, right_base) = prominence(&mag, i);
        if prom < threshold {
            continue;
        }
        let left = half_power_extent(&p.power, i, false);
        let right = half_power_extent(&p.power, i, true);
        let fwhm = (left + right) * df;
        let reach = left.max(right).max(1.0);
        let lo = ((i as f64 - reach).ceil().max(0.0) as usize).max(left_base);
        let hi = ((i as f64 + reach).floor() as usize).min(right_base).min(last);
        let band_power = p.power[lo..=hi].iter().sum();
        candidates.push(Peak {
            freq: p.freqs[i],
            amplitude: mag[i],
            band_power,
            fwhm,
            bin: i,
        });
    }
    candidates.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude).then(a.bin.cmp(&b.bin)));
    let mut kept: Vec<Peak> = Vec::with_capacity(max_peaks);
    for c in candidates {
        if kept.len() == max_peaks {
            break;
        }
        if kept.iter().all(|k| k.bin.abs_diff(c.bin) >= MIN_PEAK_SEPARATION_BINS) {
            kept.push(c);
        }
    }
    PeakSet { peaks: kept }
}

/// F1..F4 peak frequencies (Hz), F5..F8 FWHM (Hz), F9..F12 log10 band power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftFeatures(pub [Option<f64>; 12]);

pub fn fft_features(peaks: &PeakSet) -> FftFeatures {
    let mut f = [None; 12];
    for (k, peak) in peaks.peaks.iter().take(4).enumerate() {
        f[k] = Some(peak.freq);
        f[k + 4] = Some(peak.fwhm);
        f[k + 8] = (peak.band_power > 0.0).then(|| peak.band_power.log10());
    }
    FftFeatures(f)
}

/// M0..M5: log10 of the power in harmonic bands `k·f0 ± 0.15·f0` over the
/// fundamental's peak-bin power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MengVector(pub [Option<f64>; MENG_COMPONENTS]);

pub fn meng_vector(p: &Periodogram, f0: f64) -> MengVector {
    let mut m = [None; MENG_COMPONENTS];
    let Some(k0) = fundamental_bin(p) else {
        return MengVector(m);
    };
    let ref_power = p.power[k0];
    for (idx, slot) in m.iter_mut().enumerate() {
        let centre = (idx + 1) as f64 * f0;
        let half = MENG_HALF_WIDTH * f0;
        if centre - half > p.rate / 2.0 {
            break;
        }
        let range = p.bin_range(centre - half, centre + half);
        if range.is_empty() {
            continue;
        }
        let band = &p.power[range];
        let max = band.iter().copied().fold(0.0, f64::max);
        if max < MENG_FLOOR * ref_power {
            continue;
        }
        let sum: f64 = band.iter().sum();
        *slot = Some((sum / ref_power).log10());
    }
    MengVector(m)
}
