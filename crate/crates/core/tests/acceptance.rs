//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_reposition::clustering::{kmeans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use uav_reposition::esn::{EsnModel, EsnParams};
use uav_reposition::forecast::{reservoir_sweep, TurnWeighting};
use uav_reposition::matching::{build_cost_matrix, enumerate_all, solve_min_matching, CostMatrix};
use uav_reposition::pipeline::{run, SimulationConfig};
use uav_reposition::trajectory::{destination, haversine_m, load_geolife_dir, resample, GeoPoint, Track};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let over = limit.is_some_and(|l| took > l);
    let note = match limit {
        Some(l) => format!(" [{took:.2?}, limit {l:.0?}]"),
        None => format!(" [{took:.2?}]"),
    };
    match out {
        Outcome::Pass(d) if over => Outcome::Fail(format!("{d}; over time limit{note}")),
        Outcome::Pass(d) => Outcome::Pass(d + &note),
        Outcome::Fail(d) => Outcome::Fail(d + &note),
        Outcome::Skip(d) => Outcome::Skip(d + &note),
    }
}

fn reference_distances() -> Outcome {
    let costs = build_cost_matrix(&REF_CURRENT, &REF_PREDICTED).unwrap();
    let mut misses = Vec::new();
    for (i, row) in REF_DISTANCES.iter().enumerate() {
        for (j, &reference) in row.iter().enumerate() {
            let d = costs.get(i, j);
            if (d - reference).abs() > 3.0 {
                misses.push(format!("({},{}) {d:.1} m vs {reference} m", "ABC".as_bytes()[i] as char, j));
            }
        }
    }
    verdict(misses.is_empty(), format!("{}/9 cells within 3 m; off: {}", 9 - misses.len(), misses.join(", ")))
}

fn reference_schemes() -> Outcome {
    let costs = build_cost_matrix(&REF_CURRENT, &REF_PREDICTED).unwrap();
    let best = solve_min_matching(&costs);
    let all = enumerate_all(&costs).unwrap();
    let sums_ok = REF_SCHEMES.iter().all(|(perm, reference)| {
        all.iter()
            .find(|s| s.perm == perm)
            .is_some_and(|s| (s.total_cost - reference).abs() <= 5.0)
    });
    let ok = best.perm == [2, 0, 1] && (best.total_cost - 1256.0).abs() <= 5.0 && sums_ok && all[0].perm == [2, 0, 1];
    let sums: Vec<String> = all.iter().map(|s| format!("{:?}={:.1}", s.perm, s.total_cost)).collect();
    verdict(ok, format!("best {:?} at {:.1} m; {}", best.perm, best.total_cost, sums.join(" ")))
}

fn solver_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for n in 2..=8 {
        for _ in 0..500 {
            let c = CostMatrix::new(n, (0..n * n).map(|_| rng.random_range(0.0..=1000.0)).collect()).unwrap();
            if solve_min_matching(&c).total_cost != enumerate_all(&c).unwrap()[0].total_cost {
                mismatches += 1;
            }
        }
    }
    verdict(mismatches == 0, format!("3500 matrices, {mismatches} differ from the permutation minimum"))
}

fn dense_radius(w: &DMatrix<f64>) -> f64 {
    w.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn esn_invariants() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for m in [500, 1000, 2000] {
        let model = EsnModel::new(EsnParams { reservoir_size: m, ..EsnParams::default() }).unwrap();
        let rho = dense_radius(&model.w_res().to_dense());
        ok &= (rho - 0.9).abs() <= 1e-6;
        notes.push(format!("|rho-0.9|(m={m})={:.1e}", (rho - 0.9).abs()));
    }

    let mut model = EsnModel::new(EsnParams { input_scale: 0.5, reservoir_size: 500, ..EsnParams::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut peak: f64 = 0.0;
    for _ in 0..10_000 {
        let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
        peak = model.step(&u).unwrap().amax().max(peak);
    }
    ok &= peak < 1.0;
    notes.push(format!("max|x|={peak:.6}"));

    let mut a = EsnModel::new(EsnParams { reservoir_size: 500, ..EsnParams::default() }).unwrap();
    let mut b = a.clone();
    a.set_state(DVector::from_fn(500, |_, _| rng.random_range(-1.0..=1.0))).unwrap();
    b.set_state(DVector::from_fn(500, |_, _| rng.random_range(-1.0..=1.0))).unwrap();
    let start = (a.state() - b.state()).norm();
    for _ in 0..500 {
        let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0));
        a.step(&u).unwrap();
        b.step(&u).unwrap();
    }
    let ratio = (a.state() - b.state()).norm() / start;
    ok &= ratio < 1e-6;
    notes.push(format!("contraction ratio={ratio:.3e}"));
    verdict(ok, notes.join(", "))
}

fn ridge_correctness() -> Outcome {
    let params = EsnParams {
        reservoir_size: 5,
        input_scale: 0.5,
        ridge_lambda: 0.0,
        washout: 0,
        seed: 8,
        ..EsnParams::default()
    };
    let mut model = EsnModel::new(params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inputs: Vec<DVector<f64>> = (0..50).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0))).collect();
    let targets: Vec<DVector<f64>> = (0..50).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..=1.0))).collect();
    let mut states = DMatrix::zeros(5, 50);
    for (k, u) in inputs.iter().enumerate() {
        states.set_column(k, model.step(u).unwrap());
    }
    let ys = DMatrix::from_columns(&targets);

    // Normal equations X Xᵀ wᵀ = X yᵀ by Gauss-Jordan elimination.
    let a = &states * states.transpose();
    let b = &states * ys.transpose();
    let mut aug: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| a[(i, j)]).chain((0..2).map(|r| b[(i, r)])).collect()).collect();
    for c in 0..5 {
        let p = (c..5).max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs())).unwrap();
        aug.swap(c, p);
        let pivot = aug[c][c];
        aug[c].iter_mut().for_each(|v| *v /= pivot);
        for i in (0..5).filter(|&i| i != c) {
            let f = aug[i][c];
            let row = aug[c].clone();
            aug[i].iter_mut().zip(row).for_each(|(v, r)| *v -= f * r);
        }
    }
    let expected = DMatrix::from_fn(2, 5, |r, i| aug[i][5 + r]);

    model.train_readout(&inputs, &targets).unwrap();
    let diff = (model.w_out() - expected).amax();
    verdict(diff <= 1e-8, format!("max entry difference {diff:.3e}"))
}

/// Least-squares line through the history, extended past its end.
fn linear_extrapolation(history: &[GeoPoint], horizon: usize) -> Vec<GeoPoint> {
    let n = history.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let fit = |coord: fn(&GeoPoint) -> f64| {
        let mean = history.iter().map(coord).sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (k, p) in history.iter().enumerate() {
            sxy += (k as f64 - tm) * (coord(p) - mean);
            sxx += (k as f64 - tm).powi(2);
        }
        (mean, sxy / sxx)
    };
    let (lat0, lat1) = fit(|p| p.lat);
    let (lon0, lon1) = fit(|p| p.lon);
    (1..=horizon)
        .map(|h| {
            let t = n - 1.0 + h as f64 - tm;
            GeoPoint { lat: lat0 + lat1 * t, lon: lon0 + lon1 * t }
        })
        .collect()
}

fn forecast_protocol() -> Outcome {
    let config = SimulationConfig {
        num_ues: 8,
        num_uavs: 2,
        lambda_s: 3.0,
        tau_s: 900.0,
        period_s: 300.0,
        ..SimulationConfig::default()
    };
    let (h, f) = (config.history_steps(), config.horizon_steps());
    let speed = 1.2;
    let noise = noise_for_40db(speed * config.tau_s);
    let tracks: Vec<Track> = (0..8)
        .map(|u| {
            let pts = walker(BEIJING, 45.0 * u as f64 + 10.0, speed, 3.0, h + f + 1, noise, 100 + u as u64);
            track_of(&format!("w{u}"), 3.0, &pts)
        })
        .collect();
    let records = run(&config, &tracks).unwrap();
    let r = &records[0];
    let lengths_ok = f == 100 && r.forecasts.iter().all(|u| u.forecast.predicted.len() == 100);
    let esn = r.per_ue_error_m.iter().sum::<f64>() / 8.0;
    let worst = r.per_ue_error_m.iter().cloned().fold(0.0, f64::max);

    let baseline = tracks
        .iter()
        .map(|t| {
            let history: Vec<GeoPoint> = t.points[..=h].iter().map(|p| p.pos).collect();
            let pred = linear_extrapolation(&history, f);
            pred.iter().zip(&t.points[h + 1..]).map(|(p, q)| haversine_m(*p, q.pos)).sum::<f64>() / f as f64
        })
        .sum::<f64>()
        / 8.0;
    verdict(
        lengths_ok && esn < 50.0 && baseline < 20.0,
        format!(
            "{} points per UE; ESN mean error {esn:.1} m (worst UE {worst:.1} m), linear baseline {baseline:.1} m, noise sigma {noise:.2} m",
            r.forecasts[0].forecast.predicted.len()
        ),
    )
}

fn rmse_scale() -> Outcome {
    let Some(root) = std::env::var_os("GEOLIFE_ROOT").map(PathBuf::from) else {
        return Outcome::Skip("no GeoLife data available; set GEOLIFE_ROOT to a GeoLife Data directory".into());
    };
    let files = match load_geolife_dir(&root) {
        Ok(f) => f,
        Err(e) => return Outcome::Fail(format!("cannot read {}: {e}", root.display())),
    };
    let (h, f) = (300, 100);
    let track = files
        .into_iter()
        .filter_map(|p| p.result.ok())
        .filter_map(|p| resample(&p.track, 3.0).ok())
        .find(|t| reservoir_sweep(t, &[], &EsnParams::default(), h, f, &TurnWeighting::default()).is_ok());
    let Some(track) = track else {
        return Outcome::Skip(format!("no track under {} is long enough", root.display()));
    };
    let rows = reservoir_sweep(
        &track,
        &[500, 1000, 2000, 3000, 5000],
        &EsnParams::default(),
        h,
        f,
        &TurnWeighting::default(),
    )
    .unwrap();
    let values: Vec<String> = rows.iter().map(|r| format!("{}:{:.4}", r.size, r.rmse_weighted)).collect();
    let ok = rows.iter().all(|r| r.rmse_weighted < 0.030);
    let detail = format!("track {}: {}", track.user_id, values.join(" "));
    if ok {
        Outcome::Pass(detail)
    } else {
        // soft criterion: reported, not counted as a failure
        Outcome::Skip(format!("FLAGGED, RMSE above 0.030 for some size; {detail}"))
    }
}

fn pipeline_determinism() -> Outcome {
    let config = SimulationConfig::default();
    let (h, f) = (config.history_steps(), config.horizon_steps());
    let tracks: Vec<Track> = (0..30)
        .map(|u| {
            let origin = destination(BEIJING, 120.0 * (u % 3) as f64, 1500.0);
            let start = destination(origin, 53.0 * u as f64, 25.0 * (u / 3) as f64);
            let pts = walker(start, 17.0 * u as f64, 0.6 + 0.05 * u as f64, 3.0, h + 3 * f + 1, 2.0, u as u64);
            track_of(&format!("u{u}"), 3.0, &pts)
        })
        .collect();
    let first = run(&config, &tracks).unwrap();
    let second = run(&config, &tracks).unwrap();
    let a = serde_json::to_vec(&first).unwrap();
    let b = serde_json::to_vec(&second).unwrap();
    verdict(
        first.len() == 3 && a == b,
        format!("{} epochs, {} bytes, identical: {}", first.len(), a.len(), a == b),
    )
}

fn kmeans_recovery() -> Outcome {
    let mut worst: f64 = 1.0;
    for seed in 0..20u64 {
        let other = destination(BEIJING, 73.0 * seed as f64, 2000.0);
        let mut points = blob(BEIJING, 200, 30.0, 2 * seed);
        points.extend(blob(other, 200, 30.0, 2 * seed + 1));
        let r = kmeans(&points, 2, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let agree = (0..400).filter(|&i| (r.assignment[i] == r.assignment[0]) == (i < 200)).count();
        worst = worst.min(agree as f64 / 400.0);
    }
    verdict(worst >= 0.99, format!("worst label agreement over 20 seeds: {:.2}%", 100.0 * worst))
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() -> ExitCode {
    let ms = Duration::from_millis;
    let criteria: [Criterion; 9] = [
        ("1 pairwise distance table", Some(ms(1)), reference_distances),
        ("2 scheme enumeration and optimum", Some(ms(1)), reference_schemes),
        ("3 solver optimality", Some(ms(30_000)), solver_optimality),
        ("4 reservoir invariants", None, esn_invariants),
        ("5 ridge readout", None, ridge_correctness),
        ("6 forecast protocol", None, forecast_protocol),
        ("7 RMSE across reservoir sizes", None, rmse_scale),
        ("8 pipeline determinism", Some(ms(120_000)), pipeline_determinism),
        ("9 k-means recovery", None, kmeans_recovery),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        match timed(limit, check) {
            Outcome::Pass(d) => println!("PASS  criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP  criterion {name}: {d}"),
        }
    }
    println!("acceptance: {failed} of 9 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
