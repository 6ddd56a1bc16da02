//! Paired Wilcoxon testing, standardization with NA→0 and PCA, at population
//! and participant scope.

pub mod pca;
pub mod wilcoxon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{column_names, direction_columns, feature_names, FeatureMatrix, FeatureVector};
use crate::signal::{Condition, Direction};

pub use pca::{pca, PcaReport};
pub use wilcoxon::{wilcoxon_paired, Method, SignedRank};

pub const ALPHA: f64 = 0.05;
pub const POPULATION: &str = "population";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Population,
    Participant(String),
}

impl Scope {
    pub fn label(&self) -> &str {
        match self {
            Scope::Population => POPULATION,
            Scope::Participant(id) => id,
        }
    }

    pub fn rows<'a>(&self, fm: &'a FeatureMatrix) -> Vec<&'a FeatureVector> {
        match self {
            Scope::Population => fm.rows.iter().collect(),
            Scope::Participant(id) => fm.rows.iter().filter(|r| &r.participant_id == id).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub scope: String,
    pub direction: Direction,
    pub feature: String,
    pub n_pairs: usize,
    /// `None` when untestable.
    pub w: Option<f64>,
    pub p: Option<f64>,
    pub significant: bool,
}

/// NB/B pairs at `scope`: within each participant the i-th NB row (file order)
/// pairs with the i-th B row; unmatched rows are dropped. Population scope
/// concatenates participants in order of first appearance.
pub fn pairs<'a>(fm: &'a FeatureMatrix, scope: &Scope) -> Result<Vec<(&'a FeatureVector, &'a FeatureVector)>> {
    let ids = match scope {
        Scope::Population => fm.participants(),
        Scope::Participant(id) => vec![id.clone()],
    };
    let mut out = Vec::new();
    let (mut any_nb, mut any_b) = (false, false);
    for id in &ids {
        let nb: Vec<&FeatureVector> = fm
            .rows
            .iter()
            .filter(|r| &r.participant_id == id && r.condition == Condition::NB)
            .collect();
        let b: Vec<&FeatureVector> = fm
            .rows
            .iter()
            .filter(|r| &r.participant_id == id && r.condition == Condition::B)
            .collect();
        any_nb |= !nb.is_empty();
        any_b |= !b.is_empty();
        out.extend(nb.into_iter().zip(b));
    }
    if !any_nb {
        return Err(Error::MissingCondition(format!("NB at scope {}", scope.label())));
    }
    if !any_b {
        return Err(Error::MissingCondition(format!("B at scope {}", scope.label())));
    }
    Ok(out)
}

/// One NB-vs-B test per column (132 per scope), in column order.
pub fn run_pairwise_suite(fm: &FeatureMatrix, scope: &Scope) -> Result<Vec<PairedTestResult>> {
    let pairs = pairs(fm, scope)?;
    let names = column_names();
    let results = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let x: Vec<Option<f64>> = pairs.iter().map(|(nb, _)| nb.values[j]).collect();
            let y: Vec<Option<f64>> = pairs.iter().map(|(_, b)| b.values[j]).collect();
            let (direction, feature) = split_name(name);
            match wilcoxon_paired(&x, &y) {
                Ok(r) => PairedTestResult {
                    scope: scope.label().to_string(),
                    direction,
                    feature,
                    n_pairs: r.n,
                    w: Some(r.w),
                    p: Some(r.p),
                    significant: r.p < ALPHA,
                },
                Err(_) => PairedTestResult {
                    scope: scope.label().to_string(),
                    direction,
                    feature,
                    n_pairs: 0,
                    w: None,
                    p: None,
                    significant: false,
                },
            }
        })
        .collect();
    Ok(results)
}

fn split_name(name: &str) -> (Direction, String) {
    let (d, f) = name.split_once('.').expect("column names are <Direction>.<Feature>");
    (Direction::from_label(d).expect("analysis direction"), f.to_string())
}

/// Per-column location and scale over non-NA entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns with zero variance or fewer than two values; they map to zero.
    pub degenerate: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[&[Option<f64>]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                got: rows.len(),
            });
        }
        let p = rows[0].len();
        let mut means = vec![0.0; p];
        let mut sds = vec![0.0; p];
        let mut degenerate = vec![false; p];
        for j in 0..p {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            let n = vals.len() as f64;
            if vals.len() < 2 {
                degenerate[j] = true;
                means[j] = vals.first().copied().unwrap_or(0.0);
                continue;
            }
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            means[j] = m;
            sds[j] = var.sqrt();
            degenerate[j] = !(sds[j] > 1e-12 * (1.0 + m.abs()));
        }
        Ok(Standardizer { means, sds, degenerate })
    }

    /// Scales and centers, then replaces NA by 0.
    pub fn apply(&self, row: &[Option<f64>]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| match v {
                Some(x) if !self.degenerate[j] => (x - self.means[j]) / self.sds[j],
                _ => 0.0,
            })
            .collect()
    }
}

/// Standardizes every column over its non-NA entries (sample sd), then NA→0.
pub fn standardize(rows: &[&[Option<f64>]]) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    let s = Standardizer::fit(rows)?;
    Ok((rows.iter().map(|r| s.apply(r)).collect(), s))
}

/// PCA for one (scope, direction, condition) cell. Standardization runs over
/// all rows of the scope (both conditions) and the direction's 33 columns;
/// the condition subset is taken afterwards.
pub fn pca_cell(fm: &FeatureMatrix, scope: &Scope, direction: Direction, condition: Condition) -> Result<PcaReport> {
    let cols = direction_columns(direction);
    let rows = scope.rows(fm);
    let sub: Vec<&[Option<f64>]> = rows.iter().map(|r| &r.values[cols.clone()]).collect();
    let (z, _) = standardize(&sub)?;
    let picked: Vec<Vec<f64>> = rows
        .iter()
        .zip(z)
        .filter(|(r, _)| r.condition == condition)
        .map(|(_, v)| v)
        .collect();
    let names: Vec<String> = feature_names()
        .iter()
        .map(|f| format!("{}.{f}", direction.label()))
        .collect();
    pca(&picked, &names, scope.label(), direction, condition)
}
