//! Track files: comma-separated `time,x,y[,z...]` with a header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::Track;

/// Where and how a track is stored. Units are labels only; no conversion is
/// applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub path: PathBuf,
    pub has_header: bool,
    pub time_unit: String,
    pub length_unit: String,
}

impl TrackFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TrackFile { path: path.into(), has_header: true, time_unit: "hours".into(), length_unit: "km".into() }
    }
}

/// Names of the location columns for `dim` coordinates.
pub fn coordinate_names(dim: usize) -> Vec<String> {
    (0..dim)
        .map(|c| match c {
            0 => "x".to_string(),
            1 => "y".to_string(),
            2 => "z".to_string(),
            _ => format!("x{}", c + 1),
        })
        .collect()
}

pub fn read_track(file: &TrackFile) -> Result<Track> {
    read_track_from(File::open(&file.path)?, file.has_header)
}

/// Parse a track. The time column holds either plain numbers or ISO-8601
/// timestamps; timestamps become hours elapsed since the first row. Row
/// numbers in errors are 1-based file lines.
pub fn read_track_from<R: Read>(reader: R, has_header: bool) -> Result<Track> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut dim: Option<usize> = None;
    let mut times = Vec::new();
    let mut locations = Vec::new();
    let mut origin: Option<TimeOrigin> = None;
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if first && has_header {
            first = false;
            if rec.len() < 2 {
                return Err(Error::Parse { row, message: "header needs a time column and at least one coordinate".into() });
            }
            dim = Some(rec.len() - 1);
            continue;
        }
        first = false;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let d = *dim.get_or_insert(rec.len().saturating_sub(1));
        if d == 0 {
            return Err(Error::Parse { row, message: "row needs a time and at least one coordinate".into() });
        }
        if rec.len() != d + 1 {
            return Err(Error::Parse { row, message: format!("expected {} columns, found {}", d + 1, rec.len()) });
        }
        let t = parse_time(&rec[0], &mut origin).map_err(|message| Error::Parse { row, message })?;
        if !t.is_finite() {
            return Err(Error::Parse { row, message: format!("time '{}' is not finite", &rec[0]) });
        }
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::Parse { row, message: format!("time {t} does not increase on {prev}") });
            }
        }
        times.push(t);
        for field in rec.iter().skip(1) {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("cannot parse coordinate '{field}'") })?;
            if !x.is_finite() {
                return Err(Error::Parse { row, message: format!("coordinate '{field}' is not finite") });
            }
            locations.push(x);
        }
    }
    if times.is_empty() {
        return Err(Error::InvalidTrack("no observations".into()));
    }
    Track::new(times, locations, dim.unwrap_or(1))
}

enum TimeOrigin {
    Numeric,
    Timestamp(NaiveDateTime),
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

fn parse_time(s: &str, origin: &mut Option<TimeOrigin>) -> std::result::Result<f64, String> {
    match origin {
        None => {
            if let Ok(t) = s.parse::<f64>() {
                *origin = Some(TimeOrigin::Numeric);
                Ok(t)
            } else if let Some(ts) = parse_timestamp(s) {
                *origin = Some(TimeOrigin::Timestamp(ts));
                Ok(0.0)
            } else {
                Err(format!("cannot parse time '{s}'"))
            }
        }
        Some(TimeOrigin::Numeric) => s.parse::<f64>().map_err(|_| format!("cannot parse time '{s}' as a number")),
        Some(TimeOrigin::Timestamp(t0)) => {
            let ts = parse_timestamp(s).ok_or_else(|| format!("cannot parse timestamp '{s}'"))?;
            let secs = (ts - *t0).num_microseconds().ok_or("timestamp out of range")? as f64 * 1e-6;
            Ok(secs / 3600.0)
        }
    }
}

pub fn write_track(path: &Path, track: &Track) -> Result<()> {
    let f = File::create(path)?;
    write_track_to(f, track)
}

/// Write with a header and shortest round-tripping decimal representations,
/// so reading the file back reproduces the track exactly.
pub fn write_track_to<W: Write>(writer: W, track: &Track) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(coordinate_names(track.dim()));
    w.write_record(&header)?;
    for k in 0..track.len() {
        let mut row = vec![track.times()[k].to_string()];
        row.extend(track.point(k).iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
