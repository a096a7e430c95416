#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uav_reposition::trajectory::{destination, GeoPoint, Track, TrackPoint};

pub const REF_CURRENT: [GeoPoint; 3] = [
    GeoPoint { lat: 39.984536, lon: 116.316354 },
    GeoPoint { lat: 39.984501, lon: 116.313659 },
    GeoPoint { lat: 39.98492, lon: 116.314663 },
];

pub const REF_PREDICTED: [GeoPoint; 3] = [
    GeoPoint { lat: 39.986506, lon: 116.314564 },
    GeoPoint { lat: 39.988203, lon: 116.316238 },
    GeoPoint { lat: 39.988461, lon: 116.321711 },
];

/// Reference pairwise distances, meters (rows A, B, C; columns α, β, γ).
pub const REF_DISTANCES: [[f64; 3]; 3] = [[267.0, 408.0, 631.0], [236.0, 467.0, 851.0], [117.0, 389.0, 718.0]];

/// Reference scheme sums, keyed by perm (A, B, C) -> (α=0, β=1, γ=2).
pub const REF_SCHEMES: [([usize; 3], f64); 6] = [
    ([0, 1, 2], 1452.0),
    ([0, 2, 1], 1471.0),
    ([1, 0, 2], 1362.0),
    ([1, 2, 0], 1400.0),
    ([2, 0, 1], 1256.0),
    ([2, 1, 0], 1275.0),
];

pub const BEIJING: GeoPoint = GeoPoint { lat: 39.9842, lon: 116.3145 };

pub fn track_of(id: &str, dt: f64, points: &[GeoPoint]) -> Track {
    Track {
        user_id: id.to_string(),
        points: points
            .iter()
            .enumerate()
            .map(|(k, &pos)| TrackPoint { t: dt * k as f64, pos })
            .collect(),
        dt: Some(dt),
    }
}

/// Straight-line walk sampled every `dt` seconds with isotropic Gaussian
/// position noise `noise_m` (standard deviation, meters, per axis).
pub fn walker(
    origin: GeoPoint,
    heading: f64,
    speed: f64,
    dt: f64,
    samples: usize,
    noise_m: f64,
    seed: u64,
) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..samples)
        .map(|k| {
            let clean = destination(origin, heading, speed * dt * k as f64);
            if noise_m == 0.0 {
                return clean;
            }
            let north = noise_m * normal.sample(&mut rng);
            let east = noise_m * normal.sample(&mut rng);
            destination(destination(clean, 0.0, north), 90.0, east)
        })
        .collect()
}

/// Noise level giving a 40 dB signal-to-noise ratio against a straight
/// walk of `span_m` meters: the RMS of the centred displacement is
/// `span / sqrt(12)`, and 40 dB is an amplitude ratio of 100.
pub fn noise_for_40db(span_m: f64) -> f64 {
    span_m / 12f64.sqrt() / 100.0
}

/// Gaussian blob of `count` points with per-axis spread `sigma_m`.
pub fn blob(center: GeoPoint, count: usize, sigma_m: f64, seed: u64) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_m).unwrap();
    (0..count)
        .map(|_| {
            let n = normal.sample(&mut rng);
            let e = normal.sample(&mut rng);
            destination(destination(center, 0.0, n), 90.0, e)
        })
        .collect()
}
