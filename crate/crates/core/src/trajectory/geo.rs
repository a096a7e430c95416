use serde::{Deserialize, Serialize};

use super::TrajectoryError;

/// Mean Earth radius of the spherical model, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude used by the local planar projection.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// A WGS-84 latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, rejecting coordinates outside the valid ranges.
    pub fn new(lat: f64, lon: f64) -> Result<Self, TrajectoryError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(TrajectoryError::OutOfRange { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // rounding can push h a hair above 1 for antipodal points
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection about a reference latitude.
///
/// Maps degrees to meters east/north of the origin `(0, 0)` with
/// `x = lon * 111320 * cos(lat0)` and `y = lat * 111320`. Only meaningful
/// for city-scale extents, where it is used for centroid arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(lat0: f64) -> Self {
        Self {
            cos_lat0: lat0.to_radians().cos(),
        }
    }

    /// Centered on the mean latitude of `points` (equator when empty).
    pub fn about_mean(points: &[GeoPoint]) -> Self {
        if points.is_empty() {
            return Self::new(0.0);
        }
        let lat0 = points.iter().map(|p| p.lat).sum::<f64>() / points.len() as f64;
        Self::new(lat0)
    }

    pub fn to_xy(&self, p: GeoPoint) -> [f64; 2] {
        [
            p.lon * METERS_PER_DEGREE * self.cos_lat0,
            p.lat * METERS_PER_DEGREE,
        ]
    }

    pub fn to_geo(&self, xy: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lat: xy[1] / METERS_PER_DEGREE,
            lon: xy[0] / (METERS_PER_DEGREE * self.cos_lat0),
        }
    }

    /// Squared planar distance in m².
    pub fn dist2(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let dy = (a.lat - b.lat) * METERS_PER_DEGREE;
        let dx = (a.lon - b.lon) * METERS_PER_DEGREE * self.cos_lat0;
        dx * dx + dy * dy
    }
}

/// Initial bearing from `a` to `b` in degrees, in `(-180, 180]`.
pub fn bearing_deg(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    y.atan2(x).to_degrees()
}

/// Point reached by travelling `distance_m` from `origin` along `bearing`
/// (degrees clockwise from north) on the sphere.
pub fn destination(origin: GeoPoint, bearing: f64, distance_m: f64) -> GeoPoint {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing.to_radians();
    let phi1 = origin.lat.to_radians();
    let lambda1 = origin.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint {
        lat: phi2.to_degrees(),
        lon,
    }
}
