use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use uav_reposition::clustering::{kmeans, write_assignment_csv, write_centroids_csv, DEFAULT_MAX_ITER, DEFAULT_TOL};
use uav_reposition::esn::{EsnError, EsnModel};
use uav_reposition::forecast::{
    forecast_with, reservoir_sweep, score_forecast, write_sweep_csv, TurnWeighting, TRAIN_FRACTION,
};
use uav_reposition::matching::{
    build_cost_matrix, enumerate_all, solve_min_matching, CostMatrix, MatchingError, MatchingScheme, MAX_ENUMERATE,
};
use uav_reposition::pipeline::{self, PipelineError, SimulationConfig};
use uav_reposition::placement::{self, place_all};
use uav_reposition::trajectory::{
    load_geolife_dir, read_positions_csv, read_tracks_csv, resample, split, write_tracks_csv, GeoPoint, Track,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_UNREADABLE_ROOT: u8 = 2;
const EXIT_MALFORMED_MATRIX: u8 = 3;
const EXIT_TRACK_TOO_SHORT: u8 = 4;

/// Predictive UAV base station repositioning.
#[derive(Parser)]
#[command(name = "uavrep", version, about)]
struct Cli {
    /// Simulation config (JSON); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a GeoLife directory, resample every track and write a track CSV.
    Ingest {
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resampling interval, seconds.
        #[arg(long, default_value_t = 3.0)]
        dt: f64,
    },
    /// Fit a user's model on the training part of their track and save it.
    Train {
        #[command(flatten)]
        track: TrackArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast one user's next period from a history window.
    Forecast {
        #[command(flatten)]
        track: TrackArgs,
        /// Saved model whose reservoir is reused (the readout is refitted).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sample index of "now"; defaults to the end of the training part.
        #[arg(long)]
        at: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster users' positions at one sample index.
    Cluster {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        centroids: Option<PathBuf>,
    },
    /// Cluster users and place one UAV-BS per cluster.
    Place {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum-distance matching of current onto predicted positions.
    Match {
        #[command(flatten)]
        input: MatchInput,
        /// Also list every scheme, cheapest first.
        #[arg(long)]
        enumerate: bool,
        /// Write the result as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// List every matching scheme, cheapest first.
    Enumerate {
        #[command(flatten)]
        input: MatchInput,
        #[arg(long)]
        json: bool,
    },
    /// Run the repositioning loop over a track CSV.
    Simulate {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score forecasts of one track across reservoir sizes.
    Sweep {
        #[command(flatten)]
        track: TrackArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [500, 1000, 2000, 3000, 5000])]
        sizes: Vec<usize>,
        /// History window, seconds.
        #[arg(long, default_value_t = 900.0)]
        history: f64,
        /// Forecast horizon, seconds.
        #[arg(long, default_value_t = 300.0)]
        horizon: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrackArgs {
    /// Track CSV (`user_id,t_s,lat,lon`).
    #[arg(long)]
    track: PathBuf,
    /// User to use; the first in the file by default.
    #[arg(long)]
    user: Option<String>,
}

#[derive(Args)]
struct FleetArgs {
    #[arg(long)]
    tracks: PathBuf,
    /// Sample index of the positions to use.
    #[arg(long, default_value_t = 0)]
    at: usize,
    /// Number of clusters; the config's `n` by default.
    #[arg(short = 'n', long)]
    clusters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true)]
struct MatchInput {
    /// Cost matrix file: `n` on the first line, then `n` rows of `n` costs.
    #[arg(long, conflicts_with_all = ["current", "predicted"])]
    costs: Option<PathBuf>,
    /// Current positions CSV with `lat,lon` columns.
    #[arg(long, requires = "predicted")]
    current: Option<PathBuf>,
    /// Predicted positions CSV with `lat,lon` columns.
    #[arg(long, requires = "current")]
    predicted: Option<PathBuf>,
}

/// An error with the process exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: EXIT_FAILURE,
            error: e.into(),
        }
    }
}

trait ExitStatus<T> {
    fn exit_code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitStatus<T> for Result<T, E> {
    fn exit_code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn esn_failure(e: EsnError) -> Failure {
    let code = match e {
        EsnError::SeriesTooShort { .. } | EsnError::InsufficientData { .. } => EXIT_TRACK_TOO_SHORT,
        _ => EXIT_FAILURE,
    };
    Failure { code, error: e.into() }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::TrackExhausted { .. } => Failure {
            code: EXIT_TRACK_TOO_SHORT,
            error: e.into(),
        },
        PipelineError::Esn(e) => esn_failure(e),
        e => e.into(),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SimulationConfig> {
    let Some(path) = path else {
        return Ok(SimulationConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_tracks(path: &Path) -> anyhow::Result<Vec<Track>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_tracks_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn pick_track(args: &TrackArgs) -> anyhow::Result<Track> {
    let tracks = load_tracks(&args.track)?;
    let track = match &args.user {
        Some(u) => tracks.into_iter().find(|t| &t.user_id == u),
        None => tracks.into_iter().next(),
    };
    track.ok_or_else(|| anyhow!("no matching track in {}", args.track.display()))
}

fn grid_dt(track: &Track) -> anyhow::Result<f64> {
    track
        .dt
        .ok_or_else(|| anyhow!("track {} is not on a uniform time grid; run ingest first", track.user_id))
}

fn steps(seconds: f64, dt: f64, what: &str) -> anyhow::Result<usize> {
    let q = seconds / dt;
    if q < 1.0 || (q - q.round()).abs() > 1e-9 * q {
        bail!("{what} of {seconds} s is not a positive multiple of the {dt} s sampling interval");
    }
    Ok(q.round() as usize)
}

fn history_window(track: &Track, cursor: usize, hist: usize) -> Result<Vec<GeoPoint>, Failure> {
    if cursor >= track.len() || cursor < hist {
        return Err(esn_failure(EsnError::SeriesTooShort {
            available: track.len(),
            needed: hist + 1,
        }));
    }
    Ok(track.points[cursor - hist..=cursor].iter().map(|p| p.pos).collect())
}

fn ingest(root: &Path, out: &Path, dt: f64) -> Result<(), Failure> {
    let files = load_geolife_dir(root)
        .with_context(|| format!("cannot read {}", root.display()))
        .exit_code(EXIT_UNREADABLE_ROOT)?;
    if files.is_empty() {
        log::warn!("no PLT files under {}", root.display());
    }
    let mut tracks = Vec::new();
    for file in files {
        match file.result {
            Ok(parsed) => match resample(&parsed.track, dt) {
                Ok(track) => {
                    println!("{}\t{} points\t{} dropped", track.user_id, track.len(), parsed.dropped);
                    tracks.push(track);
                }
                Err(e) => log::warn!("{}: skipped: {e}", file.path.display()),
            },
            Err(e) => log::warn!("{}: skipped: {e}", file.path.display()),
        }
    }
    let w = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_tracks_csv(BufWriter::new(w), &tracks)?;
    log::info!("wrote {} tracks to {}", tracks.len(), out.display());
    Ok(())
}

fn train(config: &SimulationConfig, args: &TrackArgs, out: &Path) -> Result<(), Failure> {
    let track = pick_track(args)?;
    let dt = grid_dt(&track)?;
    let hist = steps(config.tau_s, dt, "history")?;
    let (past, _) = split(&track, TRAIN_FRACTION)?;
    let history = history_window(&past, past.len().saturating_sub(1), hist)?;
    let mut model = EsnModel::new(config.esn).map_err(esn_failure)?;
    forecast_with(&mut model, &history, 0).map_err(esn_failure)?;
    fs::write(out, model.to_json().map_err(esn_failure)?).with_context(|| format!("writing {}", out.display()))?;
    log::info!("trained {} on {} samples", track.user_id, history.len());
    Ok(())
}

fn forecast(
    config: &SimulationConfig,
    args: &TrackArgs,
    model: Option<&Path>,
    at: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let track = pick_track(args)?;
    let dt = grid_dt(&track)?;
    let (hist, horizon) = (steps(config.tau_s, dt, "history")?, steps(config.period_s, dt, "period")?);
    let cursor = at.unwrap_or_else(|| (TRAIN_FRACTION * track.len() as f64 - 1e-9).ceil() as usize - 1);
    let history = history_window(&track, cursor, hist)?;
    let mut model = match model {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EsnModel::from_json(&text).map_err(esn_failure)?
        }
        None => EsnModel::new(config.esn).map_err(esn_failure)?,
    };
    let f = forecast_with(&mut model, &history, horizon).map_err(esn_failure)?;

    let t0 = track.points[cursor].t;
    let mut w = output(out)?;
    writeln!(w, "step,t_s,lat,lon")?;
    for (k, p) in f.predicted.iter().enumerate() {
        writeln!(w, "{},{},{},{}", k + 1, t0 + dt * (k + 1) as f64, p.lat, p.lon)?;
    }
    w.flush()?;

    if cursor + horizon < track.len() {
        let truth = Track {
            points: track.points[cursor + 1..=cursor + horizon].to_vec(),
            ..track.clone()
        };
        let s = score_forecast(&f, &truth, &TurnWeighting::default()).map_err(esn_failure)?;
        log::info!("rmse {:.5}, mean error {:.1} m", s.rmse_weighted, s.mean_error_m);
    }
    Ok(())
}

fn fleet_positions(args: &FleetArgs) -> anyhow::Result<(Vec<String>, Vec<GeoPoint>)> {
    let tracks = load_tracks(&args.tracks)?;
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for t in tracks {
        match t.points.get(args.at) {
            Some(p) => {
                points.push(p.pos);
                ids.push(t.user_id);
            }
            None => log::warn!("{} has no sample {}; left out", t.user_id, args.at),
        }
    }
    Ok((ids, points))
}

fn cluster(
    config: &SimulationConfig,
    args: &FleetArgs,
    out: Option<&Path>,
    centroids: Option<&Path>,
) -> Result<(), Failure> {
    let (ids, points) = fleet_positions(args)?;
    let n = args.clusters.unwrap_or(config.num_uavs);
    let result = kmeans(&points, n, args.seed.unwrap_or(config.kmeans_seed), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    write_assignment_csv(output(out)?, &ids, &result)?;
    if let Some(path) = centroids {
        write_centroids_csv(output(Some(path))?, &result)?;
    }
    log::info!("inertia {:.1} m² after {} passes", result.inertia, result.inertia_trace.len());
    Ok(())
}

fn place(config: &SimulationConfig, args: &FleetArgs, out: Option<&Path>) -> Result<(), Failure> {
    let (_, points) = fleet_positions(args)?;
    let n = args.clusters.unwrap_or(config.num_uavs);
    let clusters = kmeans(&points, n, args.seed.unwrap_or(config.kmeans_seed), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let fleet = place_all(&clusters, &points, &config.placement)?;
    placement::write_positions_csv(output(out)?, &fleet)?;
    Ok(())
}

fn read_costs(input: &MatchInput) -> Result<CostMatrix, Failure> {
    if let Some(path) = &input.costs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return CostMatrix::parse_csv(&text)
            .with_context(|| format!("in {}", path.display()))
            .exit_code(EXIT_MALFORMED_MATRIX);
    }
    let read = |p: &PathBuf| -> Result<Vec<GeoPoint>, Failure> {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        read_positions_csv(f)
            .with_context(|| format!("in {}", p.display()))
            .exit_code(EXIT_MALFORMED_MATRIX)
    };
    let (Some(cur), Some(pred)) = (&input.current, &input.predicted) else {
        return Err(anyhow!("give --costs, or both --current and --predicted").into());
    };
    build_cost_matrix(&read(cur)?, &read(pred)?).exit_code(EXIT_MALFORMED_MATRIX)
}

fn print_scheme(w: &mut dyn Write, costs: &CostMatrix, s: &MatchingScheme) -> io::Result<()> {
    let legs: Vec<String> = s
        .perm
        .iter()
        .enumerate()
        .map(|(i, &j)| format!("{i}->{j} ({} m)", costs.get(i, j).round()))
        .collect();
    writeln!(w, "{}\ttotal {} m ({} m)", legs.join(", "), s.total_cost, s.total_cost.round())
}

fn enumeration(costs: &CostMatrix) -> Result<Vec<MatchingScheme>, Failure> {
    enumerate_all(costs).map_err(|e| match e {
        MatchingError::TooLarge(n) => anyhow!("refusing to enumerate {n}! schemes; the limit is n = {MAX_ENUMERATE}").into(),
        e => e.into(),
    })
}

fn match_cmd(input: &MatchInput, list: bool, json: bool) -> Result<(), Failure> {
    let costs = read_costs(input)?;
    let all = if list { Some(enumeration(&costs)?) } else { None };
    let best = solve_min_matching(&costs);
    let mut out = io::stdout().lock();
    if json {
        let doc = serde_json::json!({ "n": costs.n(), "best": best, "schemes": all });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        return Ok(());
    }
    print_scheme(&mut out, &costs, &best)?;
    if let Some(all) = all {
        writeln!(out)?;
        for s in &all {
            print_scheme(&mut out, &costs, s)?;
        }
    }
    Ok(())
}

fn enumerate_cmd(input: &MatchInput, json: bool) -> Result<(), Failure> {
    let costs = read_costs(input)?;
    let all = enumeration(&costs)?;
    let mut out = io::stdout().lock();
    if json {
        let doc = serde_json::json!({ "n": costs.n(), "schemes": all });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        for s in &all {
            print_scheme(&mut out, &costs, s)?;
        }
    }
    Ok(())
}

fn simulate(config: &SimulationConfig, tracks_path: &Path, out_dir: &Path) -> Result<(), Failure> {
    let mut tracks = load_tracks(tracks_path)?;
    if tracks.len() < config.num_ues {
        return Err(anyhow!("config asks for N = {} users, {} has {}", config.num_ues, tracks_path.display(), tracks.len()).into());
    }
    tracks.truncate(config.num_ues);
    let records = pipeline::run(config, &tracks).map_err(pipeline_failure)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let create = |name: &str| -> anyhow::Result<BufWriter<File>> {
        let p = out_dir.join(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    };
    let mut w = create("records.json")?;
    serde_json::to_writer_pretty(&mut w, &records)?;
    w.flush()?;
    pipeline::write_positions_csv(create("positions.csv")?, &records)?;
    pipeline::write_costs_csv(create("costs.csv")?, &records)?;
    pipeline::write_matchings_csv(create("matchings.csv")?, &records)?;
    pipeline::write_rmse_csv(create("rmse.csv")?, &records)?;
    println!("{} epochs written to {}", records.len(), out_dir.display());
    Ok(())
}

fn sweep(
    config: &SimulationConfig,
    args: &TrackArgs,
    sizes: &[usize],
    history: f64,
    horizon: f64,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let track = pick_track(args)?;
    let dt = grid_dt(&track)?;
    let (h, f) = (steps(history, dt, "history")?, steps(horizon, dt, "horizon")?);
    let mut params = config.esn;
    if let Some(seed) = seed {
        params.seed = seed;
    }
    let rows = reservoir_sweep(&track, sizes, &params, h, f, &TurnWeighting::default()).map_err(esn_failure)?;
    write_sweep_csv(output(out)?, &rows)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest { root, out, dt } => ingest(root, out, *dt),
        Command::Train { track, out } => train(&config, track, out),
        Command::Forecast { track, model, at, out } => forecast(&config, track, model.as_deref(), *at, out.as_deref()),
        Command::Cluster { fleet, out, centroids } => cluster(&config, fleet, out.as_deref(), centroids.as_deref()),
        Command::Place { fleet, out } => place(&config, fleet, out.as_deref()),
        Command::Match { input, enumerate, json } => match_cmd(input, *enumerate, *json),
        Command::Enumerate { input, json } => enumerate_cmd(input, *json),
        Command::Simulate { tracks, out_dir } => simulate(&config, tracks, out_dir),
        Command::Sweep {
            track,
            sizes,
            history,
            horizon,
            seed,
            out,
        } => sweep(&config, track, sizes, *history, *horizon, *seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
