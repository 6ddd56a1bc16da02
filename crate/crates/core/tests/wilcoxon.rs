mod common;

use common::enumerate_p;
use movseq::featurize::{FeatureMatrix, FeatureVector, N_FEATURES};
use movseq::signal::{Condition, Direction};
use movseq::stats::{pairs, run_pairwise_suite, wilcoxon_paired, Method, Scope};
use movseq::Error;
use proptest::prelude::*;

fn some(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().copied().map(Some).collect()
}

proptest! {
    #[test]
    fn exact_p_matches_sign_enumeration(
        signs in prop::collection::vec(any::<bool>(), 1..=10),
        jitter in prop::collection::vec(0.0f64..0.4, 10),
        base in prop::collection::vec(-10.0f64..10.0, 10),
    ) {
        let n = signs.len();
        let d: Vec<f64> = (0..n)
            .map(|k| {
                let m = (k + 1) as f64 + jitter[k];
                if signs[k] { m } else { -m }
            })
            .collect();
        let x: Vec<Option<f64>> = (0..n).map(|k| Some(base[k] + d[k])).collect();
        let y: Vec<Option<f64>> = (0..n).map(|k| Some(base[k])).collect();
        let diffs: Vec<f64> = (0..n).map(|k| x[k].unwrap() - y[k].unwrap()).collect();
        let r = wilcoxon_paired(&x, &y).unwrap();
        prop_assert_eq!(r.method, Method::Exact);
        prop_assert_eq!(r.p, enumerate_p(&diffs));
    }

    #[test]
    fn positive_affine_maps_leave_p_unchanged(
        x in prop::collection::vec(-5.0f64..5.0, 8..30),
        y in prop::collection::vec(-5.0f64..5.0, 30),
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        let n = x.len();
        let y = &y[..n];
        let p0 = wilcoxon_paired(&some(&x), &some(y));
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let p1 = wilcoxon_paired(&some(&xs), &some(&ys));
        if let (Ok(p0), Ok(p1)) = (p0, p1) {
            prop_assert!((p0.p - p1.p).abs() < 1e-12);
            prop_assert_eq!(p0.n, p1.n);
        }
    }
}

#[test]
fn six_positive_differences() {
    // Only the all-positive pattern reaches W = 21: p = 2/64.
    let x = some(&[2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    let y = some(&[1.0, 1.5, 1.0, 0.5, 0.0, -1.0]);
    let r = wilcoxon_paired(&x, &y).unwrap();
    assert_eq!(r.w, 21.0);
    assert_eq!(r.p, 2.0 / 64.0);
}

#[test]
fn swapping_arguments_keeps_p() {
    let x = some(&[1.2, 3.4, 0.2, 5.5, 2.2, 0.9, 4.1]);
    let y = some(&[0.7, 3.9, 0.1, 4.0, 2.5, 0.3, 3.0]);
    let a = wilcoxon_paired(&x, &y).unwrap();
    let b = wilcoxon_paired(&y, &x).unwrap();
    assert_eq!(a.p, b.p);
    assert_eq!(a.w + b.w, 28.0);
}

#[test]
fn na_pairs_and_zero_differences_are_dropped() {
    let x = vec![Some(1.0), None, Some(3.0), Some(4.0), Some(2.0)];
    let y = vec![Some(0.0), Some(1.0), None, Some(4.0), Some(0.5)];
    let r = wilcoxon_paired(&x, &y).unwrap();
    assert_eq!(r.n, 2);
    // A zero difference forces the normal approximation.
    assert_eq!(r.method, Method::Normal);
}

#[test]
fn large_samples_use_normal_approximation() {
    let x: Vec<Option<f64>> = (0..40).map(|i| Some(i as f64 * 0.37 % 5.0 + 0.5)).collect();
    let y: Vec<Option<f64>> = (0..40).map(|i| Some(i as f64 * 0.21 % 5.0)).collect();
    let r = wilcoxon_paired(&x, &y).unwrap();
    assert_eq!(r.method, Method::Normal);
    assert!(r.p > 0.0 && r.p <= 1.0);
}

#[test]
fn untestable_and_mismatched_inputs() {
    let x = some(&[1.0, 2.0]);
    assert!(matches!(wilcoxon_paired(&x, &x), Err(Error::Untestable)));
    assert!(matches!(
        wilcoxon_paired(&x, &some(&[1.0])),
        Err(Error::LengthMismatch { left: 2, right: 1 })
    ));
    assert!(matches!(wilcoxon_paired(&[None, None], &x), Err(Error::Untestable)));
}

fn row(id: &str, c: Condition, v: f64) -> FeatureVector {
    FeatureVector {
        participant_id: id.into(),
        condition: c,
        values: (0..N_FEATURES)
            .map(|j| if j == 5 { None } else { Some(v + j as f64) })
            .collect(),
    }
}

#[test]
fn suite_covers_every_column_at_both_scopes() {
    let mut rows = Vec::new();
    for (p, id) in ["P01", "P02"].iter().enumerate() {
        for i in 0..6 {
            rows.push(row(id, Condition::NB, i as f64 * 0.1 + p as f64));
        }
        for i in 0..6 {
            rows.push(row(id, Condition::B, i as f64 * 0.13 + 1.0 + p as f64));
        }
    }
    let fm = FeatureMatrix {
        rows,
        provenance: Vec::new(),
    };
    assert_eq!(pairs(&fm, &Scope::Population).unwrap().len(), 12);
    let pop = run_pairwise_suite(&fm, &Scope::Population).unwrap();
    assert_eq!(pop.len(), N_FEATURES);
    assert_eq!(pop[0].direction, Direction::AccelX);
    assert_eq!(pop[0].feature, "M0");
    assert!(pop[5].p.is_none() && !pop[5].significant);
    assert!(pop[0].significant);
    let ind = run_pairwise_suite(&fm, &Scope::Participant("P02".into())).unwrap();
    assert_eq!(ind[0].n_pairs, 6);
    assert_eq!(ind[0].p, Some(2.0 / 64.0));
}

#[test]
fn missing_condition_is_reported() {
    let fm = FeatureMatrix {
        rows: (0..4).map(|i| row("P01", Condition::NB, i as f64)).collect(),
        provenance: Vec::new(),
    };
    assert!(matches!(
        run_pairwise_suite(&fm, &Scope::Population),
        Err(Error::MissingCondition(_))
    ));
}

#[test]
fn population_of_one_equals_individual() {
    let mut rows = Vec::new();
    for i in 0..6 {
        rows.push(row("P05", Condition::NB, (i as f64 * 0.7).sin()));
        rows.push(row("P05", Condition::B, (i as f64 * 1.3).cos()));
    }
    let fm = FeatureMatrix {
        rows,
        provenance: Vec::new(),
    };
    let pop = run_pairwise_suite(&fm, &Scope::Population).unwrap();
    let ind = run_pairwise_suite(&fm, &Scope::Participant("P05".into())).unwrap();
    for (a, b) in pop.iter().zip(&ind) {
        assert_eq!((a.p, a.n_pairs, a.significant), (b.p, b.n_pairs, b.significant));
    }
}
