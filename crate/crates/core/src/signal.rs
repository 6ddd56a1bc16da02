//! IMU session model: channels, ingestion from CSV, slicing and uniform resampling.
//!
//! Internal units are m/s² for acceleration and rad/s for rotation rate.
//! Timestamps are seconds since the session start.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, used when a sidecar declares acceleration in g.
pub const STANDARD_GRAVITY: f64 = 9.80665;
/// Nominal device rate in Hz.
pub const NOMINAL_RATE: f64 = 25.0;
/// Accepted median-rate band for a valid session.
pub const RATE_BAND: (f64, f64) = (20.0, 30.0);
/// Default slice window in seconds.
pub const DEFAULT_WINDOW_S: f64 = 50.0;
/// Minimum fraction of the nominal window/sample count a slice must hold.
pub const MIN_SLICE_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    AccelX,
    AccelY,
    AccelZ,
    RotX,
    RotY,
    RotZ,
    AttX,
    AttY,
    AttZ,
}

impl Direction {
    pub const ALL: [Direction; 9] = [
        Direction::AccelX,
        Direction::AccelY,
        Direction::AccelZ,
        Direction::RotX,
        Direction::RotY,
        Direction::RotZ,
        Direction::AttX,
        Direction::AttY,
        Direction::AttZ,
    ];

    /// The four channels that are featurized: mediolateral, anteroposterior and
    /// vertical acceleration plus mediolateral rotation.
    pub const ANALYSIS: [Direction; 4] = [Direction::AccelX, Direction::AccelY, Direction::AccelZ, Direction::RotY];

    /// File token (`accel_x`, `rot_y`, ...).
    pub fn token(self) -> &'static str {
        match self {
            Direction::AccelX => "accel_x",
            Direction::AccelY => "accel_y",
            Direction::AccelZ => "accel_z",
            Direction::RotX => "rot_x",
            Direction::RotY => "rot_y",
            Direction::RotZ => "rot_z",
            Direction::AttX => "att_x",
            Direction::AttY => "att_y",
            Direction::AttZ => "att_z",
        }
    }

    /// Feature-column prefix (`AccelX`, `RotY`, ...).
    pub fn label(self) -> &'static str {
        match self {
            Direction::AccelX => "AccelX",
            Direction::AccelY => "AccelY",
            Direction::AccelZ => "AccelZ",
            Direction::RotX => "RotX",
            Direction::RotY => "RotY",
            Direction::RotZ => "RotZ",
            Direction::AttX => "AttX",
            Direction::AttY => "AttY",
            Direction::AttZ => "AttZ",
        }
    }

    pub fn from_token(token: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.token() == token)
    }

    pub fn from_label(label: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.label() == label)
    }

    pub fn is_accel(self) -> bool {
        matches!(self, Direction::AccelX | Direction::AccelY | Direction::AccelZ)
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Direction::RotX | Direction::RotY | Direction::RotZ)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// No brace: baseline walking.
    NB,
    /// Brace: simulated pathology.
    B,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NB => "NB",
            Condition::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        match s.trim() {
            "NB" => Some(Condition::NB),
            "B" => Some(Condition::B),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BraceType {
    Ankle,
    Knee,
    Back,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub direction: Direction,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ChannelSeries {
    pub fn new(direction: Direction, times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        ChannelSeries {
            direction,
            times,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Median of successive timestamp differences; `None` with fewer than two samples.
    pub fn median_interval(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let mut dts: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        let m = dts.len();
        let (lower, &mut mid, _) = dts.select_nth_unstable_by(m / 2, f64::total_cmp);
        Some(if m % 2 == 1 {
            mid
        } else {
            let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (below + mid)
        })
    }

    pub fn median_rate(&self) -> Option<f64> {
        self.median_interval().map(|dt| 1.0 / dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecording {
    pub participant_id: String,
    pub condition: Condition,
    pub brace_type: Option<BraceType>,
    pub channels: BTreeMap<Direction, ChannelSeries>,
}

impl SessionRecording {
    pub fn channel(&self, direction: Direction) -> Option<&ChannelSeries> {
        self.channels.get(&direction)
    }

    /// All analysis channels present.
    pub fn is_featurizable(&self) -> bool {
        Direction::ANALYSIS
            .iter()
            .all(|d| self.channels.get(d).is_some_and(|c| !c.is_empty()))
    }

    /// Covered duration: last timestamp plus one median sample interval, taken
    /// as the maximum over analysis channels.
    pub fn duration(&self) -> f64 {
        self.channels
            .values()
            .filter(|c| Direction::ANALYSIS.contains(&c.direction))
            .filter_map(|c| {
                let last = *c.times.last()?;
                Some(last + c.median_interval().unwrap_or(0.0))
            })
            .fold(0.0, f64::max)
    }

    /// Checks the invariants shared by every ingestion path.
    pub fn validate(&self) -> Result<()> {
        for d in Direction::ANALYSIS {
            match self.channels.get(&d) {
                Some(c) if c.len() >= 2 => {}
                _ => return Err(Error::MissingRequiredChannel(d)),
            }
        }
        for c in self.channels.values() {
            if let Some(rate) = c.median_rate() {
                if Direction::ANALYSIS.contains(&c.direction) && !(RATE_BAND.0..=RATE_BAND.1).contains(&rate) {
                    return Err(Error::RateOutOfRange {
                        direction: c.direction,
                        rate,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sidecar metadata accompanying a wide-CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant_id: String,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brace_type: Option<BraceType>,
    #[serde(default)]
    pub units: Units,
    /// Free-form origin record (config hash, seed) carried by generated data.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub accel: AccelUnit,
    pub rot: RotUnit,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            accel: AccelUnit::Mps2,
            rot: RotUnit::Rads,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccelUnit {
    G,
    Mps2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotUnit {
    Rads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// `participant_id,condition,timestamp_s,direction,value`
    LongCsv,
    /// `timestamp_s,accel_x,...` with a JSON sidecar.
    WideCsv,
}

pub const LONG_CSV_HEADER: [&str; 5] = ["participant_id", "condition", "timestamp_s", "direction", "value"];

/// Parses a session from `source`. Wide CSV requires its sidecar metadata.
pub fn ingest_session<R: Read>(
    source: R,
    format: InputFormat,
    sidecar: Option<&SessionMeta>,
) -> Result<SessionRecording> {
    match format {
        InputFormat::LongCsv => ingest_long_csv(source),
        InputFormat::WideCsv => {
            let meta = sidecar.ok_or_else(|| Error::Config {
                key: "sidecar".into(),
                reason: "wide-CSV input requires a JSON sidecar".into(),
            })?;
            ingest_wide_csv(source, meta)
        }
    }
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("cannot parse {what} `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            line,
            reason: format!("non-finite {what}"),
        });
    }
    Ok(v)
}

struct ChannelBuilder {
    times: Vec<f64>,
    values: Vec<f64>,
}

fn push_sample(
    builders: &mut BTreeMap<Direction, ChannelBuilder>,
    direction: Direction,
    t: f64,
    v: f64,
    line: usize,
) -> Result<()> {
    let b = builders.entry(direction).or_insert(ChannelBuilder {
        times: Vec::new(),
        values: Vec::new(),
    });
    if let Some(&last) = b.times.last() {
        if t <= last {
            return Err(Error::NonMonotonicTimestamps { direction, line });
        }
    }
    b.times.push(t);
    b.values.push(v);
    Ok(())
}

fn finish_channels(builders: BTreeMap<Direction, ChannelBuilder>) -> BTreeMap<Direction, ChannelSeries> {
    let t0 = builders
        .values()
        .filter_map(|b| b.times.first().copied())
        .fold(f64::INFINITY, f64::min);
    builders
        .into_iter()
        .map(|(d, b)| {
            let times = b.times.into_iter().map(|t| t - t0).collect();
            (d, ChannelSeries::new(d, times, b.values))
        })
        .collect()
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source)
}

pub fn ingest_long_csv<R: Read>(source: R) -> Result<SessionRecording> {
    let mut rdr = csv_reader(source);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != LONG_CSV_HEADER {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", LONG_CSV_HEADER.join(",")),
        });
    }
    let mut participant: Option<String> = None;
    let mut condition: Option<Condition> = None;
    let mut builders = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 5 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 5 fields, found {}", rec.len()),
            });
        }
        let pid = &rec[0];
        match &participant {
            None => participant = Some(pid.to_string()),
            Some(p) if p != pid => {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("participant_id changes from `{p}` to `{pid}`"),
                })
            }
            _ => {}
        }
        let cond = Condition::parse(&rec[1]).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("unknown condition `{}`", &rec[1]),
        })?;
        match condition {
            None => condition = Some(cond),
            Some(c) if c != cond => {
                return Err(Error::MalformedRow {
                    line,
                    reason: "condition changes within a session".into(),
                })
            }
            _ => {}
        }
        let t = parse_f64(&rec[2], line, "timestamp")?;
        let direction = Direction::from_token(&rec[3]).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("unknown direction `{}`", &rec[3]),
        })?;
        let v = parse_f64(&rec[4], line, "value")?;
        push_sample(&mut builders, direction, t, v, line)?;
    }
    let session = SessionRecording {
        participant_id: participant.ok_or(Error::EmptySession)?,
        condition: condition.ok_or(Error::EmptySession)?,
        brace_type: None,
        channels: finish_channels(builders),
    };
    session.validate()?;
    Ok(session)
}

pub fn ingest_wide_csv<R: Read>(source: R, meta: &SessionMeta) -> Result<SessionRecording> {
    let mut rdr = csv_reader(source);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("timestamp_s") {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "first column must be `timestamp_s`".into(),
        });
    }
    let mut columns = Vec::with_capacity(header.len() - 1);
    for name in header.iter().skip(1) {
        let d = Direction::from_token(name).ok_or_else(|| Error::MalformedRow {
            line: 1,
            reason: format!("unknown column `{name}`"),
        })?;
        if columns.contains(&d) {
            return Err(Error::MalformedRow {
                line: 1,
                reason: format!("duplicate column `{name}`"),
            });
        }
        columns.push(d);
    }
    let accel_scale = match meta.units.accel {
        AccelUnit::G => STANDARD_GRAVITY,
        AccelUnit::Mps2 => 1.0,
    };
    let mut builders = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let t = parse_f64(&rec[0], line, "timestamp")?;
        for (i, &d) in columns.iter().enumerate() {
            let cell = &rec[i + 1];
            if cell.is_empty() {
                continue;
            }
            let mut v = parse_f64(cell, line, "value")?;
            if d.is_accel() {
                v *= accel_scale;
            }
            push_sample(&mut builders, d, t, v, line)?;
        }
    }
    let session = SessionRecording {
        participant_id: meta.participant_id.clone(),
        condition: meta.condition,
        brace_type: meta.brace_type,
        channels: finish_channels(builders),
    };
    session.validate()?;
    Ok(session)
}

/// Serializes a session in the wide-CSV schema (values in internal units).
pub fn write_wide_csv<W: std::io::Write>(session: &SessionRecording, out: W) -> Result<()> {
    let dirs: Vec<Direction> = session.channels.keys().copied().collect();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp_s".to_string()];
    header.extend(dirs.iter().map(|d| d.token().to_string()));
    wtr.write_record(&header)?;

    // Merge all channel timestamps; cells absent for a direction stay empty.
    let mut cursor = vec![0usize; dirs.len()];
    loop {
        let next = dirs
            .iter()
            .enumerate()
            .filter_map(|(i, d)| session.channels[d].times.get(cursor[i]).copied())
            .fold(f64::INFINITY, f64::min);
        if !next.is_finite() {
            break;
        }
        let mut row = Vec::with_capacity(dirs.len() + 1);
        row.push(format!("{next}"));
        for (i, d) in dirs.iter().enumerate() {
            let ch = &session.channels[d];
            if ch.times.get(cursor[i]) == Some(&next) {
                row.push(format!("{}", ch.values[cursor[i]]));
                cursor[i] += 1;
            } else {
                row.push(String::new());
            }
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// A window of one session; channel timestamps stay on the session clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub participant_id: String,
    pub condition: Condition,
    /// Chronological position within the session.
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub channels: BTreeMap<Direction, ChannelSeries>,
}

impl Slice {
    pub fn window(&self) -> f64 {
        self.end - self.start
    }

    pub fn channel(&self, direction: Direction) -> Option<&ChannelSeries> {
        self.channels.get(&direction)
    }
}

/// Cuts a session into consecutive non-overlapping windows. A trailing partial
/// window is kept when it spans at least 60% of `window_s`; slices where an
/// analysis channel holds fewer than 60% of the nominal sample count are dropped.
pub fn slice_session(rec: &SessionRecording, window_s: f64) -> Result<Vec<Slice>> {
    if !rec.is_featurizable() {
        let missing = Direction::ANALYSIS
            .into_iter()
            .find(|d| rec.channel(*d).is_none_or(|c| c.is_empty()))
            .unwrap_or(Direction::AccelX);
        return Err(Error::MissingRequiredChannel(missing));
    }
    let duration = rec.duration();
    let mut bounds = Vec::new();
    let full = (duration / window_s + 1e-9).floor() as usize;
    for k in 0..full {
        bounds.push((k as f64 * window_s, (k + 1) as f64 * window_s));
    }
    let tail_start = full as f64 * window_s;
    if duration - tail_start >= MIN_SLICE_FRACTION * window_s - 1e-9 && duration > tail_start {
        bounds.push((tail_start, duration));
    }

    let mut slices = Vec::with_capacity(bounds.len());
    for (start, end) in bounds {
        let nominal = (end - start) * NOMINAL_RATE;
        let mut channels = BTreeMap::new();
        let mut keep = true;
        for (d, ch) in &rec.channels {
            let lo = ch.times.partition_point(|&t| t < start);
            let hi = ch.times.partition_point(|&t| t < end);
            if Direction::ANALYSIS.contains(d) && ((hi - lo) as f64) < MIN_SLICE_FRACTION * nominal {
                keep = false;
                break;
            }
            channels.insert(
                *d,
                ChannelSeries::new(*d, ch.times[lo..hi].to_vec(), ch.values[lo..hi].to_vec()),
            );
        }
        if keep {
            slices.push(Slice {
                participant_id: rec.participant_id.clone(),
                condition: rec.condition,
                index: slices.len(),
                start,
                end,
                channels,
            });
        }
    }
    if slices.is_empty() {
        return Err(Error::EmptySession);
    }
    Ok(slices)
}

/// A channel on a uniform grid: `values[k]` sits at `start + k / rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSlice {
    pub direction: Direction,
    pub start: f64,
    pub rate: f64,
    pub values: Vec<f64>,
}

impl UniformSlice {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const KNOT_TOLERANCE: f64 = 1e-9;

/// Linear interpolation of a slice channel onto `start + k / rate`,
/// `k < floor(window * rate)`. Grid points outside the raw sample span take the
/// nearest raw value.
pub fn resample_uniform(slice: &Slice, direction: Direction, rate: f64) -> Result<UniformSlice> {
    let ch = slice
        .channel(direction)
        .ok_or(Error::TooFewSamples { needed: 2, got: 0 })?;
    if ch.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: ch.len(),
        });
    }
    let n = (slice.window() * rate + KNOT_TOLERANCE).floor() as usize;
    let values = interpolate_linear(&ch.times, &ch.values, slice.start, rate, n);
    Ok(UniformSlice {
        direction,
        start: slice.start,
        rate,
        values,
    })
}

pub(crate) fn interpolate_linear(times: &[f64], values: &[f64], start: f64, rate: f64, n: usize) -> Vec<f64> {
    let last = times.len() - 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let t = start + k as f64 / rate;
        while j < last && times[j + 1] <= t + KNOT_TOLERANCE {
            j += 1;
        }
        let v = if (t - times[j]).abs() <= KNOT_TOLERANCE {
            values[j]
        } else if t < times[0] {
            values[0]
        } else if j == last {
            values[last]
        } else {
            let w = (t - times[j]) / (times[j + 1] - times[j]);
            values[j] + w * (values[j + 1] - values[j])
        };
        out.push(v);
    }
    out
}
