//! Synthetic gait cohorts with known ground truth.
//!
//! Each analysis channel is a harmonic series at multiples of the cadence,
//! plus oscillator noise drawn exactly from an SHO kernel near the cadence, plus
//! white sensor noise, sampled on jittered 25 ± 5 Hz timestamps. Condition B
//! rescales a participant-specific subset of harmonic amplitudes and noise Q
//! factors.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::derive_seed;
use crate::gp::{sample_gp, ShoComponent, ShoModel};
use crate::signal::{BraceType, ChannelSeries, Condition, Direction, SessionRecording, STANDARD_GRAVITY};

pub const CADENCE_RANGE: (f64, f64) = (1.5, 2.2);
pub const N_HARMONICS: usize = 6;
/// Harmonics at or above this frequency are not generated.
pub const MAX_HARMONIC_HZ: f64 = 11.0;
pub const RATE_JITTER: (f64, f64) = (20.0, 30.0);
pub const NB_DURATION_S: f64 = 309.0;
pub const B_DURATION_S: f64 = 317.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoNoise {
    pub s0: f64,
    pub q: f64,
    /// rad/s
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionProfile {
    pub direction: Direction,
    /// Harmonic k+1 at (k+1)·cadence.
    pub harmonics: Vec<Harmonic>,
    pub noise: ShoNoise,
    pub sensor_sd: f64,
    /// Constant offset (gravity on the vertical axis).
    pub offset: f64,
}

/// A quantity condition B rescales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    /// Amplitude of harmonic k (2..=6).
    Harmonic(usize),
    NoiseQ,
}

impl Knob {
    /// The Meng feature whose band the knob rescales directly.
    pub fn meng_feature(self) -> Option<String> {
        match self {
            Knob::Harmonic(k) => Some(format!("M{}", k - 1)),
            Knob::NoiseQ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub direction: Direction,
    pub knob: Knob,
    /// Multiplier applied under condition B.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub brace_type: BraceType,
    /// Step frequency, Hz.
    pub cadence: f64,
    pub directions: Vec<DirectionProfile>,
    pub adaptation: Vec<Perturbation>,
}

impl ParticipantProfile {
    pub fn direction(&self, d: Direction) -> &DirectionProfile {
        self.directions
            .iter()
            .find(|p| p.direction == d)
            .expect("profile covers every analysis direction")
    }

    /// Channel parameters in effect under `condition`.
    pub fn adapted(&self, d: Direction, condition: Condition) -> DirectionProfile {
        let mut p = self.direction(d).clone();
        if condition == Condition::B {
            for pert in self.adaptation.iter().filter(|x| x.direction == d) {
                match pert.knob {
                    Knob::Harmonic(k) => {
                        if let Some(h) = p.harmonics.get_mut(k - 1) {
                            h.amplitude *= pert.factor;
                        }
                    }
                    Knob::NoiseQ => p.noise.q = (p.noise.q * pert.factor).max(0.6),
                }
            }
        }
        p
    }

    /// Sum of |log factor| over the perturbations touching `d`.
    pub fn perturbation_strength(&self, d: Direction) -> f64 {
        self.adaptation
            .iter()
            .filter(|p| p.direction == d)
            .map(|p| p.factor.ln().abs())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub nb_duration_s: f64,
    pub b_duration_s: f64,
    /// When false condition B equals NB in distribution.
    pub adaptation: bool,
    /// Knobs perturbed per participant, inclusive range.
    pub knobs_per_participant: (usize, usize),
    /// Range of |ln factor| for each perturbation.
    pub log_effect: (f64, f64),
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_participants: 17,
            nb_duration_s: NB_DURATION_S,
            b_duration_s: B_DURATION_S,
            adaptation: true,
            knobs_per_participant: (2, 5),
            log_effect: (0.35, 0.8),
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::Config {
                key: key.into(),
                reason: reason.into(),
            })
        };
        if self.n_participants == 0 {
            return bad("synth.n_participants", "must be at least 1");
        }
        if !(self.nb_duration_s >= 60.0) || !(self.b_duration_s >= 60.0) {
            return bad("synth.nb_duration_s", "session durations must be at least 60 s");
        }
        let (lo, hi) = self.knobs_per_participant;
        if lo == 0 || lo > hi || hi > all_knobs().len() {
            return bad("synth.knobs_per_participant", "need 1 <= min <= max <= number of knobs");
        }
        if !(self.log_effect.0 > 0.0 && self.log_effect.0 <= self.log_effect.1) {
            return bad("synth.log_effect", "need 0 < min <= max");
        }
        Ok(())
    }
}

/// Every (direction, knob) pair a brace can act on.
pub fn all_knobs() -> Vec<(Direction, Knob)> {
    Direction::ANALYSIS
        .into_iter()
        .flat_map(|d| {
            (2..=6)
                .map(Knob::Harmonic)
                .chain(std::iter::once(Knob::NoiseQ))
                .map(move |k| (d, k))
        })
        .collect()
}

/// Fundamental amplitude range per direction (m/s² or rad/s).
fn base_amplitude(d: Direction) -> (f64, f64) {
    match d {
        Direction::AccelZ => (1.2, 2.0),
        Direction::AccelY => (0.7, 1.2),
        Direction::AccelX => (0.4, 0.8),
        _ => (0.2, 0.4),
    }
}

fn direction_profile(rng: &mut ChaCha8Rng, d: Direction, cadence: f64) -> DirectionProfile {
    let (lo, hi) = base_amplitude(d);
    let a1 = rng.gen_range(lo..hi);
    let decay: f64 = rng.gen_range(0.45..0.7);
    let harmonics = (0..N_HARMONICS)
        .map(|k| Harmonic {
            amplitude: a1 * decay.powi(k as i32) * rng.gen_range(0.8..1.25),
            phase: rng.gen_range(0.0..TAU),
        })
        .collect();
    let q = rng.gen_range(2.0..6.0);
    let w0 = TAU * cadence * rng.gen_range(0.85..1.2);
    let noise_sd = a1 * rng.gen_range(0.15..0.3);
    DirectionProfile {
        direction: d,
        harmonics,
        noise: ShoNoise {
            s0: noise_sd * noise_sd / (w0 * q),
            q,
            w0,
        },
        sensor_sd: a1 * rng.gen_range(0.03..0.08),
        offset: if d == Direction::AccelZ { STANDARD_GRAVITY } else { 0.0 },
    }
}

/// A profile without brace adaptation.
pub fn generate_profile(participant_id: &str, seed: u64) -> ParticipantProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cadence = rng.gen_range(CADENCE_RANGE.0..CADENCE_RANGE.1);
    let brace_type = *[BraceType::Ankle, BraceType::Knee, BraceType::Back]
        .choose(&mut rng)
        .expect("non-empty");
    let directions = Direction::ANALYSIS
        .into_iter()
        .map(|d| direction_profile(&mut rng, d, cadence))
        .collect();
    ParticipantProfile {
        participant_id: participant_id.to_string(),
        brace_type,
        cadence,
        directions,
        adaptation: Vec::new(),
    }
}

fn sample_adaptation(rng: &mut ChaCha8Rng, cfg: &CohortConfig) -> Vec<Perturbation> {
    let mut knobs = all_knobs();
    knobs.shuffle(rng);
    let count = rng.gen_range(cfg.knobs_per_participant.0..=cfg.knobs_per_participant.1);
    let mut chosen: Vec<Perturbation> = knobs[..count]
        .iter()
        .map(|&(direction, knob)| {
            let mag = rng.gen_range(cfg.log_effect.0..=cfg.log_effect.1);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            Perturbation {
                direction,
                knob,
                factor: (sign * mag).exp(),
            }
        })
        .collect();
    chosen.sort_by(|a, b| (a.direction, a.knob).cmp(&(b.direction, b.knob)));
    chosen
}

/// Drops knobs chosen by every participant from the participant with the most
/// perturbations, so no single knob is shared cohort-wide.
fn enforce_heterogeneity(profiles: &mut [ParticipantProfile]) {
    if profiles.len() < 2 {
        return;
    }
    for (d, knob) in all_knobs() {
        let shared = profiles
            .iter()
            .all(|p| p.adaptation.iter().any(|x| x.direction == d && x.knob == knob));
        if shared {
            let idx = (0..profiles.len())
                .max_by_key(|&i| (profiles[i].adaptation.len(), std::cmp::Reverse(i)))
                .expect("non-empty");
            let target = &mut profiles[idx];
            if target.adaptation.len() > 1 {
                target.adaptation.retain(|x| !(x.direction == d && x.knob == knob));
            }
        }
    }
}

fn jittered_times(rng: &mut ChaCha8Rng, duration_s: f64) -> Vec<f64> {
    let mut times = Vec::with_capacity((duration_s * 26.0) as usize);
    let mut t = 0.0;
    while t < duration_s {
        times.push(t);
        t += 1.0 / rng.gen_range(RATE_JITTER.0..RATE_JITTER.1);
    }
    times
}

/// One walking session. Timestamps are shared across channels, as in a wide-CSV
/// recording; AccelX/Y/Z and RotY are generated, the other channels omitted.
pub fn generate_session(
    profile: &ParticipantProfile,
    condition: Condition,
    duration_s: f64,
    seed: u64,
) -> Result<SessionRecording> {
    if !(duration_s >= 60.0) {
        return Err(Error::Config {
            key: "duration_s".into(),
            reason: format!("{duration_s} < 60"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = jittered_times(&mut rng, duration_s);
    // Slow amplitude modulation; its phase advances across slices.
    let cadence = profile.cadence;
    let mod_period = rng.gen_range(60.0..120.0);
    let mod_phase = rng.gen_range(0.0..TAU);
    let gain: Vec<f64> = times
        .iter()
        .map(|t| 1.0 + 0.1 * (TAU * t / mod_period + mod_phase).sin())
        .collect();
    // e^{iθ(t)} at the cadence; harmonic k is its k-th power.
    let base: Vec<(f64, f64)> = times.iter().map(|t| (TAU * cadence * t).sin_cos()).collect();
    let n_harm = (0..N_HARMONICS)
        .take_while(|k| (k + 1) as f64 * cadence < MAX_HARMONIC_HZ)
        .count();
    let mut channels = BTreeMap::new();
    for d in Direction::ANALYSIS {
        let p = profile.adapted(d, condition);
        let model = ShoModel {
            components: vec![ShoComponent::new(p.noise.s0, p.noise.q, p.noise.w0)],
            log_jitter: p.sensor_sd.ln(),
        };
        let rot: Vec<(f64, f64)> = p.harmonics[..n_harm]
            .iter()
            .map(|h| (h.amplitude * h.phase.cos(), h.amplitude * h.phase.sin()))
            .collect();
        let mut values = sample_gp(&model, &times, &mut rng)?;
        for ((v, &(s1, c1)), g) in values.iter_mut().zip(&base).zip(&gain) {
            let (mut re, mut im) = (c1, s1);
            let mut s = 0.0;
            for &(ac, as_) in &rot {
                s += ac * re - as_ * im;
                (re, im) = (re * c1 - im * s1, re * s1 + im * c1);
            }
            *v += p.offset + g * s;
        }
        channels.insert(d, ChannelSeries::new(d, times.clone(), values));
    }
    Ok(SessionRecording {
        participant_id: profile.participant_id.clone(),
        condition,
        brace_type: Some(profile.brace_type),
        channels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub seed: u64,
    pub config: CohortConfig,
    pub profiles: Vec<ParticipantProfile>,
    /// Per participant, the seeds of the NB and B sessions.
    pub session_seeds: Vec<(u64, u64)>,
}

pub struct Cohort {
    pub manifest: CohortManifest,
    /// NB then B for each participant, in manifest order.
    pub sessions: Vec<SessionRecording>,
}

pub fn participant_id(i: usize) -> String {
    format!("P{:02}", i + 1)
}

/// Profiles and session seeds only; sessions are generated separately.
pub fn cohort_manifest(cfg: &CohortConfig, seed: u64) -> Result<CohortManifest> {
    cfg.validate()?;
    let mut profiles: Vec<ParticipantProfile> = (0..cfg.n_participants)
        .map(|i| {
            let id = participant_id(i);
            let mut p = generate_profile(&id, derive_seed(seed, &["profile", &id]));
            if cfg.adaptation {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["adaptation", &id]));
                p.adaptation = sample_adaptation(&mut rng, cfg);
            }
            p
        })
        .collect();
    enforce_heterogeneity(&mut profiles);
    let session_seeds = profiles
        .iter()
        .map(|p| {
            (
                derive_seed(seed, &["session", &p.participant_id, "NB"]),
                derive_seed(seed, &["session", &p.participant_id, "B"]),
            )
        })
        .collect();
    Ok(CohortManifest {
        seed,
        config: cfg.clone(),
        profiles,
        session_seeds,
    })
}

pub fn generate_cohort(cfg: &CohortConfig, seed: u64) -> Result<Cohort> {
    let manifest = cohort_manifest(cfg, seed)?;
    let sessions = sessions_for(&manifest)?;
    Ok(Cohort { manifest, sessions })
}

pub fn sessions_for(manifest: &CohortManifest) -> Result<Vec<SessionRecording>> {
    let cfg = &manifest.config;
    let mut sessions = Vec::with_capacity(2 * manifest.profiles.len());
    for (p, &(nb_seed, b_seed)) in manifest.profiles.iter().zip(&manifest.session_seeds) {
        sessions.push(generate_session(p, Condition::NB, cfg.nb_duration_s, nb_seed)?);
        sessions.push(generate_session(p, Condition::B, cfg.b_duration_s, b_seed)?);
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptation_only_under_brace() {
        let m = cohort_manifest(&CohortConfig::default(), 3).unwrap();
        let p = &m.profiles[0];
        assert!(!p.adaptation.is_empty());
        let pert = p.adaptation[0];
        let nb = p.adapted(pert.direction, Condition::NB);
        let b = p.adapted(pert.direction, Condition::B);
        assert_eq!(&nb, p.direction(pert.direction));
        assert_ne!(nb, b);
    }

    #[test]
    fn no_knob_shared_by_everyone() {
        let cfg = CohortConfig {
            knobs_per_participant: (20, 20),
            ..CohortConfig::default()
        };
        let m = cohort_manifest(&cfg, 1).unwrap();
        for (d, k) in all_knobs() {
            assert!(!m
                .profiles
                .iter()
                .all(|p| p.adaptation.iter().any(|x| x.direction == d && x.knob == k)));
        }
    }

    #[test]
    fn null_cohort_has_no_adaptation() {
        let cfg = CohortConfig {
            adaptation: false,
            ..CohortConfig::default()
        };
        let m = cohort_manifest(&cfg, 1).unwrap();
        assert!(m.profiles.iter().all(|p| p.adaptation.is_empty()));
    }
}
