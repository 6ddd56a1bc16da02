mod common;

use common::{jacobi_eigen, sample_cov};
use movseq::featurize::{FeatureMatrix, FeatureVector, N_FEATURES};
use movseq::signal::{Condition, Direction};
use movseq::stats::{pca, pca_cell, standardize, Scope};
use movseq::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

fn run(rows: &[Vec<f64>]) -> movseq::stats::PcaReport {
    pca(rows, &names(rows[0].len()), "t", Direction::AccelZ, Condition::B).unwrap()
}

#[test]
fn matches_jacobi_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in [2usize, 3, 5, 8, 12] {
        let mix: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                (0..p).map(|j| (0..p).map(|k| mix[j][k] * z[k]).sum()).collect()
            })
            .collect();
        let r = run(&rows);
        let (vals, vecs) = jacobi_eigen(&sample_cov(&rows));
        for k in 0..p {
            assert!((r.eigenvalues[k] - vals[k]).abs() <= 1e-8 * vals[0]);
            let sign = r.loadings[k]
                .iter()
                .zip(&vecs[k])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .signum();
            for (a, b) in r.loadings[k].iter().zip(&vecs[k]) {
                assert!((a - sign * b).abs() < 1e-6);
            }
        }
        assert!((r.variance_explained.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        for c in &r.contributions {
            assert!((c.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }
}

#[test]
fn correlated_pair_gives_eighty_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho: f64 = 0.6;
    let raw: Vec<Vec<Option<f64>>> = (0..10_000)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            vec![Some(a), Some(rho * a + (1.0 - rho * rho).sqrt() * b)]
        })
        .collect();
    let refs: Vec<&[Option<f64>]> = raw.iter().map(|r| r.as_slice()).collect();
    let (z, _) = standardize(&refs).unwrap();
    let r = run(&z);
    assert!(
        (r.variance_explained[0] - 80.0).abs() < 2.0,
        "{}",
        r.variance_explained[0]
    );
}

#[test]
fn perfectly_correlated_pair() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let raw: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect();
    let refs: Vec<&[Option<f64>]> = raw.iter().map(|r| r.as_slice()).collect();
    let (z, _) = standardize(&refs).unwrap();
    let r = run(&z);
    assert!((r.variance_explained[0] - 100.0).abs() < 1e-9);
    assert!((r.contributions[0][0] - 50.0).abs() < 1e-9);
    // Equal contributions: the lower index wins.
    assert_eq!(r.top[0], 0);
}

#[test]
fn loadings_have_positive_leading_entry() {
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let t = i as f64;
            vec![-t, 0.1 * (t * 1.3).sin(), 0.5 * t]
        })
        .collect();
    let r = run(&rows);
    for v in &r.loadings {
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(lead > 0.0);
    }
}

#[test]
fn too_few_rows_and_zero_variance() {
    let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    assert!(matches!(
        pca(&rows, &names(2), "t", Direction::AccelX, Condition::NB),
        Err(Error::TooFewRows { .. })
    ));
    let flat = vec![vec![0.0, 0.0]; 5];
    assert!(matches!(
        pca(&flat, &names(2), "t", Direction::AccelX, Condition::NB),
        Err(Error::DegenerateCovariance)
    ));
}

#[test]
fn standardize_uses_sample_sd_and_maps_na_to_zero() {
    let raw = vec![vec![Some(1.0), None], vec![Some(3.0), Some(5.0)], vec![None, Some(5.0)]];
    let refs: Vec<&[Option<f64>]> = raw.iter().map(|r| r.as_slice()).collect();
    let (z, s) = standardize(&refs).unwrap();
    let sd = 2f64.sqrt();
    assert_eq!(s.means, vec![2.0, 5.0]);
    assert!((z[0][0] + 1.0 / sd).abs() < 1e-12 && (z[1][0] - 1.0 / sd).abs() < 1e-12);
    assert_eq!(z[2][0], 0.0);
    // Second column is constant over its non-NA entries.
    assert!(s.degenerate[1]);
    assert!(z.iter().all(|r| r[1] == 0.0));
}

#[test]
fn cell_uses_direction_columns_and_condition_subset() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<FeatureVector> = (0..20)
        .map(|i| FeatureVector {
            participant_id: if i < 10 { "P01" } else { "P02" }.into(),
            condition: if i % 2 == 0 { Condition::NB } else { Condition::B },
            values: (0..N_FEATURES).map(|_| Some(rng.gen_range(-1.0..1.0))).collect(),
        })
        .collect();
    let fm = FeatureMatrix {
        rows,
        provenance: Vec::new(),
    };
    let r = pca_cell(&fm, &Scope::Population, Direction::RotY, Condition::B).unwrap();
    assert_eq!(r.n_rows, 10);
    assert_eq!(r.feature_names.len(), 33);
    assert_eq!(r.feature_names[0], "RotY.M0");
    let ind = pca_cell(&fm, &Scope::Participant("P02".into()), Direction::AccelX, Condition::NB).unwrap();
    assert_eq!(ind.n_rows, 5);
}

#[test]
fn standardize_small_column_and_all_na() {
    let raw = vec![
        vec![Some(1.0), None],
        vec![Some(2.0), None],
        vec![Some(3.0), None],
        vec![None, None],
    ];
    let refs: Vec<&[Option<f64>]> = raw.iter().map(|r| r.as_slice()).collect();
    let (z, s) = standardize(&refs).unwrap();
    let col: Vec<f64> = z.iter().map(|r| r[0]).collect();
    assert_eq!(col, vec![-1.0, 0.0, 1.0, 0.0]);
    assert!(s.degenerate[1]);
    assert!(z.iter().all(|r| r[1] == 0.0));
}

#[test]
fn standardizing_twice_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw: Vec<Vec<Option<f64>>> = (0..50)
        .map(|_| (0..4).map(|_| Some(rng.gen_range(-3.0..7.0))).collect())
        .collect();
    let refs: Vec<&[Option<f64>]> = raw.iter().map(|r| r.as_slice()).collect();
    let (z, _) = standardize(&refs).unwrap();
    let again_raw: Vec<Vec<Option<f64>>> = z.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect();
    let again_refs: Vec<&[Option<f64>]> = again_raw.iter().map(|r| r.as_slice()).collect();
    let (z2, _) = standardize(&again_refs).unwrap();
    for (a, b) in z.iter().flatten().zip(z2.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
}
