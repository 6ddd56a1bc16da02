//! The CLI commands as library functions. Each reads its inputs from, and
//! writes its outputs to, the configured output directory.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{run_protocol, TrainReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::featurize::{
    column_names, export_matrix, feature_names, featurize_slices, import_matrix, screen_outliers, FeatureMatrix,
    FitDiagnostic, ScreenReport,
};
use crate::signal::{ingest_session, slice_session, Condition, Direction, InputFormat, SessionMeta, SessionRecording};
use crate::stats::{pca_cell, run_pairwise_suite, PairedTestResult, PcaReport, Scope, ALPHA};
use crate::synth::{cohort_manifest, sessions_for, CohortManifest};

pub const COHORT_DIR: &str = "cohort";
pub const MANIFEST: &str = "manifest.json";
pub const FEATURES: &str = "features.csv";
pub const FEATURES_UNSCREENED: &str = "features_unscreened.csv";
pub const DIAGNOSTICS: &str = "diagnostics.jsonl";
pub const SCREEN_REPORT: &str = "screen_report.json";
pub const WILCOXON_JSON: &str = "wilcoxon_results.json";
pub const WILCOXON_GRID: &str = "wilcoxon_pvalues.csv";
pub const PCA_JSON: &str = "pca_reports.json";
pub const PCA_TOP: &str = "pca_top_features.csv";
pub const PCA_VARIANCE: &str = "pca_variance.csv";
pub const TRAIN_JSON: &str = "train_report.json";
pub const ACCURACY_GRID: &str = "accuracy_grid.csv";
pub const REPORT: &str = "report.md";

/// Identifies the settings an output came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    fn comment_lines(&self) -> String {
        format!("# config_hash = {}\n# seed = {}\n", self.config_hash, self.seed)
    }
}

/// JSON document wrapper carrying provenance next to the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    pub results: T,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, prov: &Provenance, results: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(
        &mut w,
        &Stamped {
            provenance: prov.clone(),
            results,
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Stamped<T>> {
    let f = File::open(path).map_err(|e| missing_input(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn missing_input(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads())
        .build()
        .map_err(|e| Error::Config {
            key: "jobs".into(),
            reason: e.to_string(),
        })
}

/// Writes one wide-CSV file plus sidecar per session and the ground-truth
/// manifest under `<out>/cohort`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<CohortManifest> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let dir = cfg.out.join(COHORT_DIR);
    fs::create_dir_all(&dir)?;
    let manifest = cohort_manifest(&cfg.synth, cfg.seed)?;
    let sessions = sessions_for(&manifest)?;
    for s in &sessions {
        let stem = format!("{}_{}", s.participant_id, s.condition);
        let mut w = create(&dir.join(format!("{stem}.csv")))?;
        crate::signal::write_wide_csv(s, &mut w)?;
        w.flush()?;
        let meta = SessionMeta {
            participant_id: s.participant_id.clone(),
            condition: s.condition,
            brace_type: s.brace_type,
            units: Default::default(),
            provenance: [
                ("config_hash".to_string(), prov.config_hash.clone()),
                ("seed".to_string(), prov.seed.to_string()),
            ]
            .into_iter()
            .collect(),
        };
        let mut w = create(&dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(&mut w, &meta)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    write_json(&dir.join(MANIFEST), &prov, &manifest)?;
    Ok(manifest)
}

/// A session file found under the configured inputs.
pub struct SourceSession {
    pub name: String,
    pub sha256: String,
    pub session: SessionRecording,
}

fn collect_csv(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| missing_input(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                collect_csv(&p, out)?;
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p);
            }
        }
    } else if path.exists() {
        out.push(path.to_path_buf());
    } else {
        return Err(missing_input(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    Ok(())
}

/// Loads every `.csv` under the inputs: wide format when a same-named `.json`
/// sidecar exists, long format otherwise.
pub fn load_sessions(paths: &[PathBuf]) -> Result<Vec<SourceSession>> {
    let mut files = Vec::new();
    for p in paths {
        collect_csv(p, &mut files)?;
    }
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let bytes = fs::read(&f).map_err(|e| missing_input(&f, e))?;
        let sidecar = f.with_extension("json");
        let session = if sidecar.exists() {
            let meta: SessionMeta = serde_json::from_slice(&fs::read(&sidecar)?)?;
            ingest_session(bytes.as_slice(), InputFormat::WideCsv, Some(&meta))
        } else {
            ingest_session(bytes.as_slice(), InputFormat::LongCsv, None)
        }
        .map_err(|e| with_file(e, &f))?;
        out.push(SourceSession {
            name: f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
            session,
        });
    }
    if out.is_empty() {
        return Err(Error::Config {
            key: "input".into(),
            reason: "no session files found".into(),
        });
    }
    Ok(out)
}

fn with_file(e: Error, f: &Path) -> Error {
    match e {
        Error::MalformedRow { line, reason } => Error::MalformedRow {
            line,
            reason: format!("{}: {reason}", f.display()),
        },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeSummary {
    pub sessions: usize,
    pub slices: usize,
    pub na_entries: usize,
    pub screen: ScreenReport,
}

/// Slices and featurizes every input session; writes the screened and
/// unscreened matrices, per-fit diagnostics and the screening report.
pub fn cmd_featurize(cfg: &RunConfig) -> Result<FeaturizeSummary> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let sources = load_sessions(&cfg.input_paths())?;
    let mut slices = Vec::new();
    for s in &sources {
        slices.extend(slice_session(&s.session, cfg.featurize.window_s)?);
    }
    let (rows, diags) = featurize_slices(&slices, &cfg.featurize, cfg.seed, cfg.threads())?;
    let mut provenance = vec![
        ("config_hash".to_string(), prov.config_hash.clone()),
        ("seed".to_string(), prov.seed.to_string()),
    ];
    for s in &sources {
        provenance.push(("source".into(), format!("{} sha256:{}", s.name, s.sha256)));
    }
    let raw = FeatureMatrix { rows, provenance };
    let (screened, report) = if cfg.screening.enabled && raw.n_rows() >= 10 {
        screen_outliers(&raw, cfg.screening.z_threshold, cfg.screening.row_na_fraction)?
    } else {
        (raw.clone(), ScreenReport::default())
    };
    let mut w = create(&cfg.out.join(FEATURES_UNSCREENED))?;
    export_matrix(&raw, &mut w)?;
    w.flush()?;
    let mut w = create(&cfg.out.join(FEATURES))?;
    export_matrix(&screened, &mut w)?;
    w.flush()?;
    write_diagnostics(&cfg.out.join(DIAGNOSTICS), &prov, &diags)?;
    write_json(&cfg.out.join(SCREEN_REPORT), &prov, &report)?;
    Ok(FeaturizeSummary {
        sessions: sources.len(),
        slices: slices.len(),
        na_entries: screened.na_count(),
        screen: report,
    })
}

fn write_diagnostics(path: &Path, prov: &Provenance, diags: &[FitDiagnostic]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, prov)?;
    w.write_all(b"\n")?;
    for d in diags {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_features(cfg: &RunConfig) -> Result<FeatureMatrix> {
    let path = cfg.out.join(FEATURES);
    let f = File::open(&path).map_err(|e| missing_input(&path, e))?;
    import_matrix(f)
}

fn scopes(cfg: &RunConfig, fm: &FeatureMatrix) -> Vec<Scope> {
    let mut s = Vec::new();
    if cfg.scope.population() {
        s.push(Scope::Population);
    }
    if cfg.scope.individual() {
        s.extend(fm.participants().into_iter().map(Scope::Participant));
    }
    s
}

fn fmt_p(p: Option<f64>) -> String {
    p.map_or_else(|| "NA".to_string(), |v| format!("{v:.6e}"))
}

/// Paired tests for every selected scope; the p-value grid has one row per
/// feature and one column per scope.
pub fn cmd_wilcoxon(cfg: &RunConfig) -> Result<Vec<Vec<PairedTestResult>>> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let fm = load_features(cfg)?;
    let scopes = scopes(cfg, &fm);
    let mut all = Vec::with_capacity(scopes.len());
    for s in &scopes {
        let res = run_pairwise_suite(&fm, s)?;
        all.push(
            res.into_iter()
                .filter(|r| cfg.directions.contains(&r.direction))
                .collect::<Vec<_>>(),
        );
    }
    let mut csv = prov.comment_lines();
    csv.push_str("feature");
    for s in &scopes {
        csv.push(',');
        csv.push_str(s.label());
    }
    csv.push('\n');
    let n_rows = all.first().map_or(0, Vec::len);
    for i in 0..n_rows {
        let r0 = &all[0][i];
        let _ = write!(csv, "{}.{}", r0.direction.label(), r0.feature);
        for res in &all {
            csv.push(',');
            csv.push_str(&fmt_p(res[i].p));
        }
        csv.push('\n');
    }
    write_text(&cfg.out.join(WILCOXON_GRID), &csv)?;
    write_json(&cfg.out.join(WILCOXON_JSON), &prov, &all)?;
    Ok(all)
}

/// PCA per (scope × direction × condition).
pub fn cmd_pca(cfg: &RunConfig) -> Result<Vec<PcaReport>> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let fm = load_features(cfg)?;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for s in scopes(cfg, &fm) {
        for &d in &cfg.directions {
            for c in [Condition::NB, Condition::B] {
                match pca_cell(&fm, &s, d, c) {
                    Ok(r) => reports.push(r),
                    Err(e @ (Error::TooFewRows { .. } | Error::DegenerateCovariance)) => {
                        skipped.push(format!("{},{},{},{}", s.label(), d.label(), c, e.kind()))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let mut top = prov.comment_lines();
    top.push_str("scope,direction,condition,pc1_top,pc1_contribution,pc2_top,pc2_contribution\n");
    let mut var = prov.comment_lines();
    var.push_str("scope,direction,condition,n_rows,pc1_pct,pc2_pct,pc12_pct\n");
    for r in &reports {
        let _ = writeln!(
            top,
            "{},{},{},{},{:.4},{},{:.4}",
            r.scope,
            r.direction.label(),
            r.condition,
            r.top_feature(0),
            r.contributions[0][r.top[0]],
            r.top_feature(1),
            r.contributions[1][r.top[1]]
        );
        let _ = writeln!(
            var,
            "{},{},{},{},{:.4},{:.4},{:.4}",
            r.scope,
            r.direction.label(),
            r.condition,
            r.n_rows,
            r.variance_explained[0],
            r.variance_explained.get(1).copied().unwrap_or(0.0),
            r.pc12_variance()
        );
    }
    for s in &skipped {
        let _ = writeln!(top, "# skipped {s}");
    }
    write_text(&cfg.out.join(PCA_TOP), &top)?;
    write_text(&cfg.out.join(PCA_VARIANCE), &var)?;
    write_json(&cfg.out.join(PCA_JSON), &prov, &reports)?;
    Ok(reports)
}

/// MLP protocol per (scope × direction), cells in parallel.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainReport>> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let fm = load_features(cfg)?;
    let mut mlp = cfg.mlp.clone();
    mlp.seed = cfg.seed;
    let scopes = scopes(cfg, &fm);
    let cells: Vec<(Scope, Direction)> = scopes
        .iter()
        .flat_map(|s| cfg.directions.iter().map(move |d| (s.clone(), *d)))
        .collect();
    let results: Vec<Result<TrainReport>> =
        pool(cfg)?.install(|| cells.par_iter().map(|(s, d)| run_protocol(&fm, s, *d, &mlp)).collect());
    let mut reports = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for ((s, d), r) in cells.iter().zip(results) {
        match r {
            Ok(r) => reports.push(r),
            Err(e @ Error::TooFewRows { .. }) => skipped.push(format!("{},{},{}", s.label(), d.label(), e.kind())),
            Err(e) => return Err(e),
        }
    }
    let mut csv = prov.comment_lines();
    csv.push_str("scope");
    for d in &cfg.directions {
        csv.push(',');
        csv.push_str(d.label());
    }
    csv.push('\n');
    for s in &scopes {
        csv.push_str(s.label());
        for d in &cfg.directions {
            let acc = reports
                .iter()
                .find(|r| r.scope == s.label() && r.direction == *d)
                .and_then(|r| r.mean_accuracy);
            csv.push(',');
            csv.push_str(&acc.map_or_else(|| "NA".to_string(), |a| format!("{a:.4}")));
        }
        csv.push('\n');
    }
    for s in &skipped {
        let _ = writeln!(csv, "# skipped {s}");
    }
    write_text(&cfg.out.join(ACCURACY_GRID), &csv)?;
    write_json(&cfg.out.join(TRAIN_JSON), &prov, &reports)?;
    Ok(reports)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Markdown summary of every stage's outputs.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let prov = Provenance::of(cfg);
    let fm = load_features(cfg)?;
    let screen: Stamped<ScreenReport> = read_json(&cfg.out.join(SCREEN_REPORT))?;
    let wil: Stamped<Vec<Vec<PairedTestResult>>> = read_json(&cfg.out.join(WILCOXON_JSON))?;
    let pcas: Stamped<Vec<PcaReport>> = read_json(&cfg.out.join(PCA_JSON))?;
    let train: Stamped<Vec<TrainReport>> = read_json(&cfg.out.join(TRAIN_JSON))?;

    let mut md = String::new();
    let _ = writeln!(md, "# Movement sequencing report\n");
    let _ = writeln!(md, "- config hash: `{}`", prov.config_hash);
    let _ = writeln!(md, "- seed: {}\n", prov.seed);

    let n_cells = fm.n_rows() * column_names().len();
    let _ = writeln!(md, "## Feature matrix\n");
    let _ = writeln!(md, "- participants: {}", fm.participants().len());
    let _ = writeln!(md, "- slices: {}", fm.n_rows());
    let _ = writeln!(
        md,
        "- NA entries: {} of {} ({})",
        fm.na_count(),
        n_cells,
        pct(fm.na_count() as f64 / n_cells.max(1) as f64)
    );
    let _ = writeln!(md, "- entries removed by screening: {}", screen.results.removed.len());
    let _ = writeln!(md, "- rows flagged for review: {}\n", screen.results.flagged_rows.len());

    let dirs = &cfg.directions;
    let header = |first: &str| {
        let mut h = format!("| {first} |");
        for d in dirs {
            let _ = write!(h, " {} |", d.label());
        }
        h.push_str("\n|---|");
        for _ in dirs {
            h.push_str("---|");
        }
        h.push('\n');
        h
    };
    let lookup = |res: &[PairedTestResult], d: Direction, f: &str| {
        res.iter().find(|r| r.direction == d && r.feature == f).cloned()
    };

    let _ = writeln!(md, "## Paired Wilcoxon tests, NB vs B (alpha = {ALPHA})\n");
    let population = wil
        .results
        .iter()
        .find(|r| r.first().is_some_and(|x| x.scope == "population"));
    let individual: Vec<&Vec<PairedTestResult>> = wil
        .results
        .iter()
        .filter(|r| r.first().is_some_and(|x| x.scope != "population"))
        .collect();
    if let Some(pop) = population {
        let n_sig = pop.iter().filter(|r| r.significant).count();
        let _ = writeln!(md, "### Population scope\n");
        let _ = writeln!(
            md,
            "Significant: {n_sig} of {} tests. Cells give p; `*` marks p < {ALPHA}.\n",
            pop.len()
        );
        md.push_str(&header("Feature"));
        for f in feature_names() {
            let _ = write!(md, "| {f} |");
            for d in dirs {
                let cell = match lookup(pop, *d, &f) {
                    Some(r) => match r.p {
                        Some(p) => format!("{p:.3e}{}", if r.significant { "*" } else { "" }),
                        None => "NA".into(),
                    },
                    None => "-".into(),
                };
                let _ = write!(md, " {cell} |");
            }
            md.push('\n');
        }
        md.push('\n');
    }
    if !individual.is_empty() {
        let n = individual.len();
        let _ = writeln!(md, "### Individual scope\n");
        let _ = writeln!(md, "Cells give the share of the {n} participants with p < {ALPHA}.\n");
        md.push_str(&header("Feature"));
        let mut best = (0usize, String::new());
        for f in feature_names() {
            let _ = write!(md, "| {f} |");
            for d in dirs {
                let k = individual
                    .iter()
                    .filter(|res| lookup(res, *d, &f).is_some_and(|r| r.significant))
                    .count();
                if k > best.0 {
                    best = (k, format!("{}.{f}", d.label()));
                }
                let _ = write!(md, " {} |", pct(k as f64 / n as f64));
            }
            md.push('\n');
        }
        md.push('\n');
        if best.0 > 0 {
            let _ = writeln!(
                md,
                "Most consistent feature: {} (significant for {} of {n} participants).\n",
                best.1, best.0
            );
        }
    }

    let _ = writeln!(md, "## PCA\n");
    let _ = writeln!(
        md,
        "Top contributing feature to PC1 / PC2 and variance explained by PC1 + PC2.\n"
    );
    let _ = writeln!(
        md,
        "| Scope | Direction | NB PC1 | NB PC2 | NB PC1+2 | B PC1 | B PC2 | B PC1+2 |"
    );
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
    let mut keys: Vec<(String, Direction)> = Vec::new();
    for r in &pcas.results {
        if !keys.contains(&(r.scope.clone(), r.direction)) {
            keys.push((r.scope.clone(), r.direction));
        }
    }
    for (scope, d) in keys {
        let _ = write!(md, "| {scope} | {} |", d.label());
        for c in [Condition::NB, Condition::B] {
            match pcas
                .results
                .iter()
                .find(|r| r.scope == scope && r.direction == d && r.condition == c)
            {
                Some(r) => {
                    let short = |i: usize| r.feature_names[i].split('.').nth(1).unwrap_or("").to_string();
                    let _ = write!(
                        md,
                        " {} | {} | {:.1}% |",
                        short(r.top[0]),
                        short(r.top[1]),
                        r.pc12_variance()
                    );
                }
                None => md.push_str(" - | - | - |"),
            }
        }
        md.push('\n');
    }
    md.push('\n');

    let _ = writeln!(md, "## MLP classification\n");
    let _ = writeln!(md, "Mean test accuracy over three resampled runs.\n");
    md.push_str(&header("Scope"));
    let mut scopes_seen: Vec<String> = Vec::new();
    for r in &train.results {
        if !scopes_seen.contains(&r.scope) {
            scopes_seen.push(r.scope.clone());
        }
    }
    for s in scopes_seen {
        let _ = write!(md, "| {s} |");
        for d in dirs {
            let acc = train
                .results
                .iter()
                .find(|r| r.scope == s && r.direction == *d)
                .and_then(|r| r.mean_accuracy);
            let _ = write!(md, " {} |", acc.map_or_else(|| "NA".into(), pct));
        }
        md.push('\n');
    }
    write_text(&cfg.out.join(REPORT), &md)?;
    Ok(md)
}

/// `synth` (unless inputs are configured), then every analysis stage.
pub fn cmd_run(cfg: &RunConfig) -> Result<String> {
    if cfg.input.is_empty() {
        cmd_synth(cfg)?;
    }
    cmd_featurize(cfg)?;
    cmd_wilcoxon(cfg)?;
    cmd_pca(cfg)?;
    cmd_train(cfg)?;
    cmd_report(cfg)
}
