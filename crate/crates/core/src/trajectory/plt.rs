//! GeoLife `.plt` reader.
//!
//! A PLT file has six header lines followed by records of the form
//! `lat,lon,0,altitude_feet,days_serial,date,time`.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::{GeoPoint, Track, TrackPoint, TrajectoryError};

const HEADER_LINES: usize = 6;
const FIELDS: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlt {
    pub track: Track,
    /// Records dropped because their timestamp did not increase.
    pub dropped: usize,
}

/// Parses one PLT stream. Timestamps become seconds since the first record.
pub fn parse_plt<R: BufRead>(reader: R, user_id: &str) -> Result<ParsedPlt, TrajectoryError> {
    let mut points: Vec<TrackPoint> = Vec::new();
    let mut origin: Option<NaiveDateTime> = None;
    let mut dropped = 0;
    let mut lines = 0;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        lines += 1;
        if idx < HEADER_LINES {
            continue;
        }
        let lineno = idx + 1;
        let record = line.trim();
        if record.is_empty() {
            continue;
        }
        let (pos, when) = parse_record(record, lineno)?;
        let origin = *origin.get_or_insert(when);
        let t = (when - origin).num_milliseconds() as f64 / 1000.0;
        if let Some(last) = points.last() {
            if t <= last.t {
                log::debug!("{user_id}: line {lineno} at t={t} does not advance past {}", last.t);
                dropped += 1;
                continue;
            }
        }
        points.push(TrackPoint { t, pos });
    }

    if lines < HEADER_LINES {
        return Err(TrajectoryError::MalformedRecord {
            line: lines,
            reason: format!("truncated header: {lines} of {HEADER_LINES} lines"),
        });
    }
    if dropped > 0 {
        log::warn!("{user_id}: dropped {dropped} non-monotonic records");
    }

    Ok(ParsedPlt {
        track: Track::new(user_id, points),
        dropped,
    })
}

fn parse_record(record: &str, line: usize) -> Result<(GeoPoint, NaiveDateTime), TrajectoryError> {
    let malformed = |reason: String| TrajectoryError::MalformedRecord { line, reason };
    let fields: Vec<&str> = record.split(',').map(str::trim).collect();
    if fields.len() != FIELDS {
        return Err(malformed(format!("expected {FIELDS} fields, found {}", fields.len())));
    }
    let lat: f64 = fields[0]
        .parse()
        .map_err(|_| malformed(format!("latitude {:?} is not a number", fields[0])))?;
    let lon: f64 = fields[1]
        .parse()
        .map_err(|_| malformed(format!("longitude {:?} is not a number", fields[1])))?;
    let pos = GeoPoint::new(lat, lon).map_err(|e| malformed(e.to_string()))?;
    let stamp = format!("{} {}", fields[5], fields[6]);
    let when = NaiveDateTime::parse_from_str(&stamp, "%Y-%m-%d %H:%M:%S%.f")
        .map_err(|e| malformed(format!("timestamp {stamp:?}: {e}")))?;
    Ok((pos, when))
}

/// Outcome of reading one file under a GeoLife root.
#[derive(Debug)]
pub struct PltFile {
    pub path: PathBuf,
    pub result: Result<ParsedPlt, TrajectoryError>,
}

/// Reads every `<root>/<user>/Trajectory/*.plt`, in sorted path order.
///
/// Each file becomes its own track with id `<user>/<file stem>`. Per-file
/// failures are returned alongside the successes rather than aborting.
pub fn load_geolife_dir(root: &Path) -> Result<Vec<PltFile>, TrajectoryError> {
    let mut users: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    users.sort();

    let mut out = Vec::new();
    for user_dir in users {
        let user = file_name(&user_dir);
        let traj = user_dir.join("Trajectory");
        let Ok(entries) = fs::read_dir(&traj) else {
            log::warn!("{}: no Trajectory directory", user_dir.display());
            continue;
        };
        let mut files: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("plt")))
            .collect();
        files.sort();
        for path in files {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let id = format!("{user}/{stem}");
            let result = fs::File::open(&path)
                .map_err(TrajectoryError::from)
                .and_then(|f| parse_plt(BufReader::new(f), &id));
            out.push(PltFile { path, result });
        }
    }
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
