//! Per-slice feature extraction across the four analysis directions, outlier
//! screening and the feature-matrix CSV format.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gp::{g_features, hmc_fit, init_model, GFeatures, HmcConfig, PosteriorSummary};
use crate::signal::{resample_uniform, Condition, Direction, Slice, DEFAULT_WINDOW_S, NOMINAL_RATE};
use crate::spectral::{
    detect_peaks, fft_features, find_fundamental, meng_vector, periodogram, FftFeatures, MengVector, MAX_PEAKS,
};

pub const FEATURES_PER_DIRECTION: usize = 33;
pub const N_FEATURES: usize = 4 * FEATURES_PER_DIRECTION;
pub const NA_TOKEN: &str = "NA";
pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;
pub const DEFAULT_ROW_NA_FRACTION: f64 = 0.3;
/// Scales the MAD to a standard deviation under normality.
pub const MAD_SCALE: f64 = 1.4826;

/// Feature names within one direction: M0..M5, G1..G15, F1..F12.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURES_PER_DIRECTION);
    names.extend((0..6).map(|k| format!("M{k}")));
    names.extend((1..=15).map(|k| format!("G{k}")));
    names.extend((1..=12).map(|k| format!("F{k}")));
    names
}

/// `<Direction>.<Feature>` for all 132 columns, direction-major.
pub fn column_names() -> Vec<String> {
    let feats = feature_names();
    Direction::ANALYSIS
        .iter()
        .flat_map(|d| feats.iter().map(move |f| format!("{}.{f}", d.label())))
        .collect()
}

/// Column range of one analysis direction.
pub fn direction_columns(direction: Direction) -> std::ops::Range<usize> {
    let i = Direction::ANALYSIS
        .iter()
        .position(|d| *d == direction)
        .expect("analysis direction");
    i * FEATURES_PER_DIRECTION..(i + 1) * FEATURES_PER_DIRECTION
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub participant_id: String,
    pub condition: Condition,
    pub values: Vec<Option<f64>>,
}

impl FeatureVector {
    pub fn direction(&self, d: Direction) -> &[Option<f64>] {
        &self.values[direction_columns(d)]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
    /// `key = value` pairs written as `#` comment lines.
    pub provenance: Vec<(String, String)>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.values[j]).collect()
    }

    pub fn participants(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.participant_id) {
                ids.push(r.participant_id.clone());
            }
        }
        ids
    }

    pub fn filter_participant(&self, id: &str) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.rows.iter().filter(|r| r.participant_id == id).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn na_count(&self) -> usize {
        self.rows.iter().flat_map(|r| &r.values).filter(|v| v.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeConfig {
    pub window_s: f64,
    pub rate: f64,
    pub max_peaks: usize,
    /// When false only the M and F features are computed; G stays NA.
    pub fit_gp: bool,
    pub hmc: HmcConfig,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            window_s: DEFAULT_WINDOW_S,
            rate: NOMINAL_RATE,
            max_peaks: MAX_PEAKS,
            fit_gp: true,
            hmc: HmcConfig::default(),
        }
    }
}

/// One JSON line per (slice, direction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostic {
    pub participant_id: String,
    pub condition: Condition,
    pub slice: usize,
    pub direction: Direction,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f0: Option<f64>,
    pub n_peaks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorSummary>,
}

/// Seed for one (slice, direction) fit, stable across runs and job counts.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn slice_seed(base: u64, slice: &Slice, d: Direction) -> u64 {
    derive_seed(
        base,
        &[
            &slice.participant_id,
            slice.condition.as_str(),
            &slice.index.to_string(),
            d.label(),
        ],
    )
}

/// The 33 features of one direction in M, G, F order.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFeatures {
    pub meng: MengVector,
    pub g: GFeatures,
    pub fft: FftFeatures,
}

impl DirectionFeatures {
    pub fn na() -> Self {
        DirectionFeatures {
            meng: MengVector([None; 6]),
            g: GFeatures::na(),
            fft: FftFeatures([None; 12]),
        }
    }

    pub fn to_vec(&self) -> Vec<Option<f64>> {
        let mut v = Vec::with_capacity(FEATURES_PER_DIRECTION);
        v.extend_from_slice(&self.meng.0);
        v.extend_from_slice(&self.g.values);
        v.extend_from_slice(&self.fft.0);
        v
    }
}

fn is_flat(values: &[f64]) -> bool {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    !(hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())))
}

/// Features of one direction of one slice. Never fails: every degradation
/// turns into NA entries and a status string.
pub fn featurize_direction(
    slice: &Slice,
    d: Direction,
    cfg: &FeaturizeConfig,
    seed: u64,
) -> (DirectionFeatures, FitDiagnostic) {
    let mut diag = FitDiagnostic {
        participant_id: slice.participant_id.clone(),
        condition: slice.condition,
        slice: slice.index,
        direction: d,
        seed,
        status: "ok".into(),
        f0: None,
        n_peaks: 0,
        posterior: None,
    };
    let mut out = DirectionFeatures::na();
    let Some(ch) = slice.channel(d).filter(|c| c.len() >= 2) else {
        diag.status = "missing channel".into();
        return (out, diag);
    };
    if is_flat(&ch.values) {
        diag.status = "flat channel".into();
        return (out, diag);
    }
    let spectrum = resample_uniform(slice, d, cfg.rate).and_then(|u| periodogram(&u));
    let p = match spectrum {
        Ok(p) => p,
        Err(e) => {
            diag.status = e.to_string();
            return (out, diag);
        }
    };
    let f0 = match find_fundamental(&p) {
        Ok(f0) => f0,
        Err(e) => {
            diag.status = e.to_string();
            return (out, diag);
        }
    };
    diag.f0 = Some(f0);
    let peaks = detect_peaks(&p, f0, cfg.max_peaks);
    diag.n_peaks = peaks.len();
    out.fft = fft_features(&peaks);
    out.meng = meng_vector(&p, f0);

    if !cfg.fit_gp {
        diag.status = "gp disabled".into();
        return (out, diag);
    }
    let n = ch.values.len() as f64;
    let mean = ch.values.iter().sum::<f64>() / n;
    let values: Vec<f64> = ch.values.iter().map(|v| v - mean).collect();
    let times: Vec<f64> = ch.times.iter().map(|t| t - slice.start).collect();
    let fit = init_model(&peaks, &values, p.rate).and_then(|m0| hmc_fit(&m0, &times, &values, &cfg.hmc, seed));
    match fit {
        Ok(post) => {
            out.g = g_features(&post, post.n_components);
            diag.posterior = Some(post);
        }
        Err(e) => diag.status = e.to_string(),
    }
    (out, diag)
}

/// All four directions of one slice.
pub fn featurize_slice(slice: &Slice, cfg: &FeaturizeConfig, seed: u64) -> (FeatureVector, Vec<FitDiagnostic>) {
    let mut values = Vec::with_capacity(N_FEATURES);
    let mut diags = Vec::with_capacity(4);
    for d in Direction::ANALYSIS {
        let (f, diag) = featurize_direction(slice, d, cfg, slice_seed(seed, slice, d));
        values.extend(f.to_vec());
        diags.push(diag);
    }
    (
        FeatureVector {
            participant_id: slice.participant_id.clone(),
            condition: slice.condition,
            values,
        },
        diags,
    )
}

/// Featurizes every slice with a pool of `jobs` workers over
/// (slice × direction). Output order follows `slices` regardless of `jobs`.
pub fn featurize_slices(
    slices: &[Slice],
    cfg: &FeaturizeConfig,
    seed: u64,
    jobs: usize,
) -> Result<(Vec<FeatureVector>, Vec<FitDiagnostic>)> {
    let tasks: Vec<(usize, Direction)> = (0..slices.len())
        .flat_map(|i| Direction::ANALYSIS.into_iter().map(move |d| (i, d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config {
            key: "jobs".into(),
            reason: e.to_string(),
        })?;
    let results: Vec<(DirectionFeatures, FitDiagnostic)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(i, d)| featurize_direction(&slices[i], d, cfg, slice_seed(seed, &slices[i], d)))
            .collect()
    });
    let mut rows = Vec::with_capacity(slices.len());
    let mut diags = Vec::with_capacity(results.len());
    for (slice, chunk) in slices.iter().zip(results.chunks(4)) {
        let mut values = Vec::with_capacity(N_FEATURES);
        for (f, diag) in chunk {
            values.extend(f.to_vec());
            diags.push(diag.clone());
        }
        rows.push(FeatureVector {
            participant_id: slice.participant_id.clone(),
            condition: slice.condition,
            values,
        });
    }
    Ok((rows, diags))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScreenedEntry {
    pub row: usize,
    pub column: String,
    pub value: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScreenReport {
    pub removed: Vec<ScreenedEntry>,
    /// Rows whose NA share exceeds the review threshold (kept, not dropped).
    pub flagged_rows: Vec<usize>,
    /// Columns skipped because their MAD is zero or they hold too few values.
    pub skipped_columns: Vec<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust z-score screening. Each column is re-screened until no entry exceeds
/// `threshold`, so applying the screen twice changes nothing.
pub fn screen_outliers(
    fm: &FeatureMatrix,
    threshold: f64,
    row_na_fraction: f64,
) -> Result<(FeatureMatrix, ScreenReport)> {
    if fm.n_rows() < 10 {
        return Err(Error::TooFewRows {
            needed: 10,
            got: fm.n_rows(),
        });
    }
    let names = column_names();
    let mut out = fm.clone();
    let mut report = ScreenReport::default();
    for (j, name) in names.iter().enumerate() {
        loop {
            let mut present: Vec<f64> = out.rows.iter().filter_map(|r| r.values[j]).collect();
            if present.len() < 3 {
                report.skipped_columns.push(name.clone());
                break;
            }
            present.sort_by(f64::total_cmp);
            let med = median(&present);
            let mut dev: Vec<f64> = present.iter().map(|v| (v - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let scale = MAD_SCALE * median(&dev);
            if !(scale > 0.0) {
                report.skipped_columns.push(name.clone());
                break;
            }
            let mut changed = false;
            for (i, row) in out.rows.iter_mut().enumerate() {
                if let Some(v) = row.values[j] {
                    let z = (v - med) / scale;
                    if z.abs() > threshold {
                        row.values[j] = None;
                        report.removed.push(ScreenedEntry {
                            row: i,
                            column: name.clone(),
                            value: v,
                            z,
                        });
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    for (i, row) in out.rows.iter().enumerate() {
        let na = row.values.iter().filter(|v| v.is_none()).count();
        if na as f64 > row_na_fraction * row.values.len() as f64 {
            report.flagged_rows.push(i);
        }
    }
    Ok((out, report))
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:?}"),
        None => NA_TOKEN.to_string(),
    }
}

/// Writes the matrix as CSV with its provenance as leading `# key = value` lines.
pub fn export_matrix<W: Write>(fm: &FeatureMatrix, mut out: W) -> Result<()> {
    for (k, v) in &fm.provenance {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["participant_id".to_string(), "condition".to_string()];
    header.extend(column_names());
    wtr.write_record(&header)?;
    for r in &fm.rows {
        let mut rec = vec![r.participant_id.clone(), r.condition.as_str().to_string()];
        rec.extend(r.values.iter().map(|v| fmt_value(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_matrix_string(fm: &FeatureMatrix) -> Result<String> {
    let mut buf = Vec::new();
    export_matrix(fm, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn import_matrix<R: Read>(source: R) -> Result<FeatureMatrix> {
    let mut text = String::new();
    BufReader::new(source).read_to_string(&mut text)?;
    let mut provenance = Vec::new();
    let mut body_start = 0;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
            provenance.push((k.trim().to_string(), v.trim().to_string()));
            body_start += line.len() + 1;
        } else {
            break;
        }
    }
    let body = text.get(body_start..).unwrap_or("");
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = rdr.headers()?.clone();
    let mut expected = vec!["participant_id".to_string(), "condition".to_string()];
    expected.extend(column_names());
    for (i, h) in header.iter().enumerate() {
        if expected.get(i).map(String::as_str) != Some(h) {
            return Err(Error::SchemaMismatch(if expected.contains(&h.to_string()) {
                format!("column `{h}` out of place at position {i}")
            } else {
                format!("unknown column `{h}`")
            }));
        }
    }
    if header.len() != expected.len() {
        return Err(Error::SchemaMismatch(format!(
            "missing column `{}`",
            expected[header.len()]
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = provenance.len() + i + 2;
        let condition = Condition::parse(&rec[1]).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("unknown condition `{}`", &rec[1]),
        })?;
        let values = rec
            .iter()
            .skip(2)
            .map(|s| {
                if s == NA_TOKEN {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|_| Error::MalformedRow {
                        line,
                        reason: format!("bad number `{s}`"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureVector {
            participant_id: rec[0].to_string(),
            condition,
            values,
        });
    }
    Ok(FeatureMatrix { rows, provenance })
}

/// Reads provenance lines only.
pub fn read_provenance<R: Read>(source: R) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in BufReader::new(source).lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(rest) => {
                let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => break,
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_layout() {
        let cols = column_names();
        assert_eq!(cols.len(), 132);
        assert_eq!(cols[0], "AccelX.M0");
        assert_eq!(cols[6], "AccelX.G1");
        assert_eq!(cols[21], "AccelX.F1");
        assert_eq!(cols[131], "RotY.F12");
        assert_eq!(direction_columns(Direction::RotY), 99..132);
    }

    #[test]
    fn seeds_differ_by_part() {
        let a = derive_seed(42, &["p01", "NB", "0", "AccelX"]);
        let b = derive_seed(42, &["p01", "NB", "0", "AccelY"]);
        let c = derive_seed(43, &["p01", "NB", "0", "AccelX"]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, &["p01", "NB", "0", "AccelX"]));
    }
}
