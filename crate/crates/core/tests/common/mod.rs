//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use movseq::gp::{gp_loglike, ShoComponent, ShoModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Log-likelihood through a dense Cholesky factorization.
pub fn dense_loglike(model: &ShoModel, times: &[f64], values: &[f64]) -> Option<f64> {
    let n = times.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let mut v = model.kernel(times[i] - times[j]);
        if i == j {
            v += model.jitter_variance();
        }
        v
    });
    let chol = k.cholesky()?;
    let y = DVector::from_column_slice(values);
    let alpha = chol.solve(&y);
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Some(-0.5 * y.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * TAU.ln())
}

pub fn jittered_times(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            let cur = t;
            t += 1.0 / rng.gen_range(20.0..30.0);
            cur
        })
        .collect()
}

/// A model with 1..=max_comp components inside the prior support.
pub fn random_model(rng: &mut ChaCha8Rng, max_comp: usize) -> ShoModel {
    let j = rng.gen_range(1..=max_comp);
    let components = (0..j)
        .map(|_| ShoComponent {
            log_s0: rng.gen_range(-3.0..1.0),
            log_q: rng.gen_range(0.5f64.ln() + 0.05..100f64.ln()),
            log_w0: rng.gen_range((TAU * 0.1).ln()..(TAU * 12.0).ln()),
        })
        .collect();
    ShoModel {
        components,
        log_jitter: rng.gen_range(-3.0..0.0),
    }
}

pub fn fd_gradient(model: &ShoModel, times: &[f64], values: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    let p = model.to_params();
    (0..p.len())
        .map(|i| {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let lu = gp_loglike(&ShoModel::from_params(&up), times, values).unwrap();
            let ld = gp_loglike(&ShoModel::from_params(&dn), times, values).unwrap();
            (lu - ld) / (2.0 * h)
        })
        .collect()
}

/// |a - b| / max(|b|, 1).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Two-sided signed-rank p by enumerating all 2^n sign patterns of ranks 1..n.
pub fn enumerate_p(d: &[f64]) -> f64 {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let w: usize = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: usize = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| k + 1).sum();
        le += (s <= w) as u64;
        ge += (s >= w) as u64;
    }
    let total = (1u64 << n) as f64;
    (2.0 * (le.min(ge) as f64) / total).min(1.0)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
/// in descending order and the matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| m[y][y].total_cmp(&m[x][x]));
    let vals = idx.iter().map(|&k| m[k][k]).collect();
    let vecs = idx.iter().map(|&k| (0..n).map(|i| v[i][k]).collect()).collect();
    (vals, vecs)
}

/// Sample covariance of the columns of `rows`.
pub fn sample_cov(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..p)
        .map(|a| {
            (0..p)
                .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect()
}

/// Harmonic series at `cadence` with amplitudes `amps[k]` on harmonic k+1,
/// uniformly sampled.
pub fn harmonic_series(cadence: f64, amps: &[f64], rate: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * (TAU * (k + 1) as f64 * cadence * t + 0.3 * k as f64).cos())
                .sum()
        })
        .collect()
}
