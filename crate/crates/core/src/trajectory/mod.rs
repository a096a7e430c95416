//! User trajectories: GeoLife ingestion, fixed-interval resampling,
//! train/test splitting and geodesic helpers.

mod geo;
mod plt;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geo::{
    bearing_deg, destination, haversine_m, GeoPoint, LocalProjection, EARTH_RADIUS_M,
    METERS_PER_DEGREE,
};
pub use plt::{load_geolife_dir, parse_plt, ParsedPlt, PltFile};

/// Tolerance, in units of `dt`, for treating a duration as a whole number
/// of resample steps.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("track has {0} points, at least 2 required")]
    TooShort(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// Seconds since the start of the track.
    pub t: f64,
    pub pos: GeoPoint,
}

/// Timestamped positions of one user, in strictly increasing time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub user_id: String,
    pub points: Vec<TrackPoint>,
    /// Grid spacing once resampled; `None` for raw tracks.
    pub dt: Option<f64>,
}

impl Track {
    pub fn new(user_id: impl Into<String>, points: Vec<TrackPoint>) -> Self {
        Self {
            user_id: user_id.into(),
            points,
            dt: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<GeoPoint> {
        self.points.iter().map(|p| p.pos).collect()
    }

    /// Elapsed time between first and last point.
    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Resamples `track` onto the grid `0, dt, 2*dt, ...` relative to its first
/// timestamp, interpolating linearly in latitude and longitude.
///
/// The grid stops at the last original timestamp; nothing is extrapolated.
pub fn resample(track: &Track, dt: f64) -> Result<Track, TrajectoryError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajectoryError::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let pts = &track.points;
    if pts.len() < 2 {
        return Err(TrajectoryError::TooShort(pts.len()));
    }
    let t0 = pts[0].t;
    let span = pts[pts.len() - 1].t - t0;
    let steps = (span / dt + GRID_EPS).floor() as usize;

    let mut out = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        while seg + 2 < pts.len() && pts[seg + 1].t - t0 <= t {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let (ta, tb) = (a.t - t0, b.t - t0);
        let pos = if t <= ta {
            a.pos
        } else if t >= tb {
            b.pos
        } else {
            let f = (t - ta) / (tb - ta);
            GeoPoint {
                lat: a.pos.lat + (b.pos.lat - a.pos.lat) * f,
                lon: a.pos.lon + (b.pos.lon - a.pos.lon) * f,
            }
        };
        out.push(TrackPoint { t, pos });
    }

    Ok(Track {
        user_id: track.user_id.clone(),
        points: out,
        dt: Some(dt),
    })
}

/// Splits a track into its earliest `ceil(train_fraction * len)` points and
/// the remainder.
pub fn split(track: &Track, train_fraction: f64) -> Result<(Track, Track), TrajectoryError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TrajectoryError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = track.points.len();
    // 0.7 * 10 evaluates to 7.000000000000001; don't let that round up
    let cut = ((train_fraction * n as f64) - GRID_EPS).ceil().max(0.0) as usize;
    let cut = cut.min(n);
    let make = |points: &[TrackPoint]| Track {
        user_id: track.user_id.clone(),
        points: points.to_vec(),
        dt: track.dt,
    };
    Ok((make(&track.points[..cut]), make(&track.points[cut..])))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    user_id: String,
    t_s: f64,
    lat: f64,
    lon: f64,
}

/// Writes tracks as CSV with header `user_id,t_s,lat,lon`.
pub fn write_tracks_csv<W: Write>(writer: W, tracks: &[Track]) -> Result<(), TrajectoryError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["user_id", "t_s", "lat", "lon"])?;
    for track in tracks {
        for p in &track.points {
            w.serialize(CsvRow {
                user_id: track.user_id.clone(),
                t_s: p.t,
                lat: p.pos.lat,
                lon: p.pos.lon,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads tracks written by [`write_tracks_csv`], grouped by `user_id` in
/// order of first appearance.
///
/// `dt` is inferred when every consecutive timestamp pair of a track
/// differs by the same amount.
pub fn read_tracks_csv<R: Read>(reader: R) -> Result<Vec<Track>, TrajectoryError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut tracks: Vec<Track> = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        let pos = GeoPoint::new(row.lat, row.lon).map_err(|_| TrajectoryError::MalformedRecord {
            line: i + 2,
            reason: format!("coordinate out of range ({}, {})", row.lat, row.lon),
        })?;
        let point = TrackPoint { t: row.t_s, pos };
        match tracks.iter_mut().find(|t| t.user_id == row.user_id) {
            Some(t) => {
                if t.points.last().is_some_and(|last| last.t >= point.t) {
                    return Err(TrajectoryError::MalformedRecord {
                        line: i + 2,
                        reason: format!("timestamp {} does not increase for {}", point.t, row.user_id),
                    });
                }
                t.points.push(point)
            }
            None => tracks.push(Track::new(row.user_id, vec![point])),
        }
    }
    for t in &mut tracks {
        t.dt = infer_dt(&t.points);
    }
    Ok(tracks)
}

#[derive(Deserialize)]
struct PositionRow {
    lat: f64,
    lon: f64,
}

/// Reads a position list from CSV with (at least) `lat` and `lon` columns.
pub fn read_positions_csv<R: Read>(reader: R) -> Result<Vec<GeoPoint>, TrajectoryError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize::<PositionRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            GeoPoint::new(row.lat, row.lon).map_err(|_| TrajectoryError::MalformedRecord {
                line: i + 2,
                reason: format!("coordinate out of range ({}, {})", row.lat, row.lon),
            })
        })
        .collect()
}

fn infer_dt(points: &[TrackPoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let dt = points[1].t - points[0].t;
    let uniform = points
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - dt).abs() <= GRID_EPS * dt.abs().max(1.0));
    uniform.then_some(dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(t: f64, lat: f64, lon: f64) -> TrackPoint {
        TrackPoint {
            t,
            pos: GeoPoint { lat, lon },
        }
    }

    #[test]
    fn resample_midpoint() {
        let track = Track::new("u", vec![pt(0.0, 39.0, 116.0), pt(6.0, 39.006, 116.006)]);
        let r = resample(&track, 3.0).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points[1].t, 3.0);
        assert!((r.points[1].pos.lat - 39.003).abs() < 1e-12);
        assert!((r.points[1].pos.lon - 116.003).abs() < 1e-12);
        assert_eq!(r.points[2].pos, track.points[1].pos);
        assert_eq!(r.dt, Some(3.0));
    }

    #[test]
    fn resample_on_grid_is_identity() {
        let track = Track::new(
            "u",
            (0..10).map(|k| pt(3.0 * k as f64, 39.0 + 1e-4 * k as f64, 116.0)).collect(),
        );
        let r = resample(&track, 3.0).unwrap();
        assert_eq!(r.points, track.points);
    }

    #[test]
    fn fifteen_minutes_at_three_seconds() {
        // irregular raw sampling covering exactly 900 s
        let mut points = vec![pt(0.0, 39.9, 116.3)];
        let mut t: f64 = 0.0;
        let mut k = 0;
        while t < 900.0 {
            t = (t + [1.0, 2.5, 4.0, 7.0][k % 4]).min(900.0);
            k += 1;
            points.push(pt(t, 39.9 + t * 1e-6, 116.3));
        }
        let r = resample(&Track::new("u", points), 3.0).unwrap();
        let expected = (0..).map(|k| 3.0 * k as f64).take_while(|&t| t <= 900.0).count();
        assert_eq!(expected, 301);
        assert_eq!(r.points.len(), expected);
        assert!(r.points.windows(2).all(|w| w[1].t - w[0].t == 3.0));
    }

    #[test]
    fn resample_does_not_extrapolate() {
        let track = Track::new("u", vec![pt(0.0, 39.0, 116.0), pt(7.0, 39.007, 116.0)]);
        let r = resample(&track, 3.0).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points.last().unwrap().t, 6.0);
    }

    #[test]
    fn resample_errors() {
        let single = Track::new("u", vec![pt(0.0, 39.0, 116.0)]);
        assert!(matches!(resample(&single, 3.0), Err(TrajectoryError::TooShort(1))));
        let two = Track::new("u", vec![pt(0.0, 39.0, 116.0), pt(3.0, 39.0, 116.0)]);
        assert!(resample(&two, 0.0).is_err());
    }

    #[test]
    fn split_counts() {
        let mk = |n: usize| Track::new("u", (0..n).map(|k| pt(k as f64, 39.0, 116.0)).collect());
        for (n, train, test) in [(100, 75, 25), (4, 3, 1), (301, 226, 75)] {
            let (a, b) = split(&mk(n), 0.75).unwrap();
            assert_eq!((a.len(), b.len()), (train, test), "n={n}");
            assert_eq!(a.points.last().unwrap().t + 1.0, b.points[0].t);
        }
        let (a, _) = split(&mk(10), 0.7).unwrap();
        assert_eq!(a.len(), 7);
        assert!(split(&mk(10), 1.0).is_err());
        assert!(split(&mk(10), 0.0).is_err());
    }

    #[test]
    fn positions_csv() {
        let text = "id,lat,lon\nA,39.984536,116.316354\nB,39.984501,116.313659\n";
        let p = read_positions_csv(text.as_bytes()).unwrap();
        assert_eq!(p, vec![GeoPoint { lat: 39.984536, lon: 116.316354 }, GeoPoint { lat: 39.984501, lon: 116.313659 }]);
        assert!(read_positions_csv("lat,lon\n91,0\n".as_bytes()).is_err());
        assert!(read_positions_csv("lat,lon\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let tracks = vec![
            Track {
                user_id: "000".into(),
                points: vec![pt(0.0, 39.984536, 116.316354), pt(3.0, 39.1 + 1e-13, 116.2)],
                dt: Some(3.0),
            },
            Track {
                user_id: "001".into(),
                points: vec![pt(0.0, -1.0 / 3.0, 0.1 + 0.2)],
                dt: None,
            },
        ];
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &tracks).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,t_s,lat,lon\n"));
        let back = read_tracks_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tracks);
    }
}
