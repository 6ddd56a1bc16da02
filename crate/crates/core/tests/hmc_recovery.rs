//! Posterior recovery on exact-kernel simulations.

use std::f64::consts::TAU;

use movseq::gp::{hmc_fit, sample_gp, HmcConfig, ShoComponent, ShoModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth() -> ShoModel {
    ShoModel {
        components: vec![ShoComponent::new(1.0, 8.0, TAU * 1.8)],
        log_jitter: 0.05f64.ln(),
    }
}

fn simulate(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = (0..1250).map(|i| i as f64 / 25.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = sample_gp(&truth(), &times, &mut rng).unwrap();
    (times, values)
}

/// Starts away from the truth: w0 off by 5%, Q and S0 by factors of two.
fn start() -> ShoModel {
    ShoModel {
        components: vec![ShoComponent::new(0.5, 4.0, TAU * 1.8 * 1.05)],
        log_jitter: 0.1f64.ln(),
    }
}

#[test]
fn recovers_frequency_for_most_seeds() {
    let true_lw = (TAU * 1.8).ln();
    let mut hits = 0;
    let t = std::time::Instant::now();
    for seed in 0..10u64 {
        let (times, values) = simulate(1000 + seed);
        let post = hmc_fit(&start(), &times, &values, &HmcConfig::default(), seed).unwrap();
        let lw = &post.params[2];
        let close = (lw.median - true_lw).abs() < 0.10;
        let covered = (lw.median - true_lw).abs() <= 2.0 * lw.std;
        println!(
            "seed {seed}: log_w0 {:.4} ± {:.4} (truth {true_lw:.4}) accept {:.2} eps {:.3}",
            lw.median, lw.std, post.acceptance_rate, post.step_size
        );
        hits += (close && covered) as usize;
    }
    println!("{hits}/10 in {:.1}s", t.elapsed().as_secs_f64());
    assert!(hits >= 8);
}

#[test]
fn identical_seed_is_bitwise_identical() {
    let (times, values) = simulate(5);
    let cfg = HmcConfig {
        steps: 200,
        warmup: 100,
        ..HmcConfig::default()
    };
    let a = hmc_fit(&start(), &times, &values, &cfg, 9).unwrap();
    let b = hmc_fit(&start(), &times, &values, &cfg, 9).unwrap();
    assert_eq!(a, b);
}
