use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size for the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRank {
    /// Pairs left after removing NA and zero differences.
    pub n: usize,
    /// Sum of the ranks of positive differences.
    pub w: f64,
    /// Two-sided.
    pub p: f64,
    pub method: Method,
}

/// Midranks (1-based) of `v`, plus the sizes of tie groups longer than one.
pub fn midranks(v: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of sign assignments giving each rank sum `0..=n(n+1)/2`, for ranks 1..n.
fn exact_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut c = vec![0.0; max + 1];
    c[0] = 1.0;
    for k in 1..=n {
        for s in (k..=max).rev() {
            c[s] += c[s - k];
        }
    }
    c
}

/// Exact two-sided p for rank sum `w` (integer) with `n` untied ranks.
pub fn exact_p(w: usize, n: usize) -> f64 {
    let c = exact_counts(n);
    let total = 2f64.powi(n as i32);
    let lower: f64 = c[..=w.min(c.len() - 1)].iter().sum::<f64>() / total;
    let upper: f64 = c[w.min(c.len())..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Wilcoxon signed-rank test on paired samples. Pairs with NA in either member
/// and zero differences are dropped; ties get midranks. Exact when n ≤ 25 with
/// no ties and no zeros, otherwise normal approximation with continuity and tie
/// corrections.
pub fn wilcoxon_paired(x: &[Option<f64>], y: &[Option<f64>]) -> Result<SignedRank> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let diffs: Vec<f64> = x.iter().zip(y).filter_map(|(a, b)| Some((*a)? - (*b)?)).collect();
    let had_zero = diffs.iter().any(|d| *d == 0.0);
    let d: Vec<f64> = diffs.into_iter().filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Err(Error::Untestable);
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N && ties.is_empty() && !had_zero {
        return Ok(SignedRank {
            n,
            w,
            p: exact_p(w as usize, n),
            method: Method::Exact,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_adj: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_adj;
    let diff = w - mean;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (diff - 0.5 * diff.signum()) / var.sqrt();
        let norm = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * norm.cdf(-z.abs())).min(1.0)
    };
    Ok(SignedRank {
        n,
        w,
        p,
        method: Method::Normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn identical_inputs_are_untestable() {
        let x = some(&[1.0, 2.0, 3.0]);
        assert!(matches!(wilcoxon_paired(&x, &x), Err(Error::Untestable)));
    }

    #[test]
    fn midranks_with_ties() {
        let (r, t) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(t, vec![2]);
    }

    #[test]
    fn all_positive_small_sample() {
        // n = 5, every difference positive: p = 2/32.
        let x = some(&[2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = some(&[1.0, 1.5, 1.0, 0.0, 1.2]);
        let r = wilcoxon_paired(&x, &y).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert_eq!(r.w, 15.0);
        assert!((r.p - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn na_pairs_removed() {
        let x = vec![Some(1.0), None, Some(3.0)];
        let y = vec![Some(0.0), Some(1.0), None];
        assert_eq!(wilcoxon_paired(&x, &y).unwrap().n, 1);
    }
}
