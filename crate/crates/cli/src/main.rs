use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pathrec_core::config::Config;
use pathrec_core::data::{load_trajectory_records, write_pois_csv, write_trajectories_csv};
use pathrec_core::metrics::evaluate;
use pathrec_core::synth::{generate, SynthConfig};
use pathrec_core::{load_pois, load_trajectories, train_model, Error, Model, PoiId, TrainOptions, TravelMode};
use pathrec_service::api::{recommend, ApiError, RecommendRequest, RecommendResponse};
use pathrec_service::{json, AppState};

#[derive(Parser)]
#[command(name = "pathrec", version, about = "Train and query a travel-route recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from POI and trajectory CSVs.
    Train(TrainArgs),
    /// Print the top-k routes for one query.
    Recommend(RecommendArgs),
    /// Run the HTTP/JSON service.
    Serve(ServeArgs),
    /// Score top-1 routes against held-out trajectories.
    Eval(EvalArgs),
    /// Write a synthetic fixture with a planted preference.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// `key = value` config file. PATHREC_CONFIG takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Config, Failure> {
        Ok(Config::resolve(self.config.as_deref())?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    pois: Option<PathBuf>,
    #[arg(long)]
    trajs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Loss weight of the ranker.
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Additive smoothing of the transition counts.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    start: PoiId,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value = "walking")]
    mode: TravelMode,
    #[arg(long, default_value_t = pathrec_service::api::DEFAULT_K)]
    k: usize,
    /// Emit the service's response document (default).
    #[arg(long, conflicts_with = "table")]
    json: bool,
    /// Emit a plain-text table.
    #[arg(long)]
    table: bool,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Held-out trajectory CSV.
    #[arg(long)]
    trajs: PathBuf,
    #[arg(long, default_value = "walking")]
    mode: TravelMode,
    /// Comma-separated α values; reports each and the best by pairs-F1.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Vec<f64>,
    /// Include the per-trajectory rows.
    #[arg(long)]
    per_query: bool,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    pois: usize,
    #[arg(long)]
    trajs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// A failure with its exit code: 1 for bad input, 2 for internal errors.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. } | Error::EnumerationTooLarge { .. } | Error::EmissionCap { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Self {
            code: if e.is_user_error() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::user(format!("{}: {e}", path.display()))
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn required(flag: &str, value: Option<PathBuf>) -> Result<PathBuf, Failure> {
    value.ok_or_else(|| Failure::user(format!("--{flag} is required (or set `{flag}` in the config file)")))
}

fn print_line<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = json::to_string(value).map_err(internal)?;
    emit(|out| writeln!(out, "{text}"))
}

/// Writes to stdout, treating a closed pipe (`| head`) as success.
fn emit(f: impl FnOnce(&mut BufWriter<io::StdoutLock<'static>>) -> io::Result<()>) -> Result<(), Failure> {
    let mut out = BufWriter::new(io::stdout().lock());
    match f(&mut out).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(internal(e)),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    model: &'a Path,
    model_version: &'a str,
    objective: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
    pairs: usize,
    pois: usize,
    trajectories: usize,
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let cfg = args.config.load()?;
    let pois_path = required("pois", args.pois.or(cfg.pois))?;
    let trajs_path = required("trajs", args.trajs.or(cfg.trajs))?;
    let dataset = load_trajectories(&trajs_path, load_pois(&pois_path)?)?;

    let mut options = TrainOptions {
        alpha: args.alpha.unwrap_or(cfg.alpha),
        smoothing: args.kappa.unwrap_or(cfg.kappa),
        neighbourhood_radius_km: cfg.neighbourhood_radius_km,
        mode_speeds: cfg.mode_speeds,
        ..TrainOptions::default()
    };
    if let Some(c) = args.c {
        options.ranker.c = c;
    }
    options.ranker.seed = args.seed;

    let (model, _) = train_model(&dataset, &options)?;
    model.save(&args.out)?;
    let t = &model.file().training;
    print_line(&TrainSummary {
        model: &args.out,
        model_version: model.version(),
        objective: t.objective,
        gradient_norm: t.gradient_norm,
        iterations: t.iterations,
        converged: t.converged,
        pairs: t.pairs,
        pois: model.pois().len(),
        trajectories: dataset.trajectories().len(),
    })
}

fn load_model(flag: Option<PathBuf>, cfg: &Config) -> Result<Model, Failure> {
    Ok(Model::load(required("model", flag.or_else(|| cfg.model.clone()))?)?)
}

fn write_table(out: &mut impl Write, resp: &RecommendResponse) -> io::Result<()> {
    writeln!(out, "{:>4}  {:>8}  {:>12}  {:>9}  {:>7}  route", "rank", "display", "total", "km", "hours")?;
    for r in &resp.routes {
        let ids: Vec<String> = r.pois.iter().map(|p| p.id.to_string()).collect();
        writeln!(
            out,
            "{:>4}  {:>8.2}  {:>12.6}  {:>9.3}  {:>7.3}  {}",
            r.rank,
            r.display_total,
            r.total,
            r.distance_km,
            r.travel_time_h,
            ids.join(" > ")
        )?;
    }
    if resp.truncated {
        writeln!(out, "(only {} routes exist)", resp.routes.len())?;
    }
    Ok(())
}

fn recommend_cmd(args: RecommendArgs) -> Result<(), Failure> {
    let cfg = args.config.load()?;
    let model = load_model(args.model, &cfg)?;
    let request = RecommendRequest {
        start_poi: args.start,
        length: args.length,
        mode: args.mode,
        k: args.k,
    };
    let resp = recommend(&model, &request)?;
    if args.table {
        emit(|out| write_table(out, &resp))
    } else {
        print_line(&resp)
    }
}

fn serve_cmd(args: ServeArgs) -> Result<(), Failure> {
    let cfg = args.config.load()?;
    let path = required("model", args.model.or(cfg.model))?;
    let state = AppState::from_path(&path)?;
    let port = args.port.unwrap_or(cfg.port);
    let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), port))
            .await
            .map_err(|e| Failure::user(format!("cannot bind {}:{port}: {e}", args.host)))?;
        let addr = listener.local_addr().map_err(internal)?;
        eprintln!("serving {} on http://{addr}", path.display());
        pathrec_service::serve(listener, state).await.map_err(internal)
    })
}

#[derive(Serialize)]
struct GridPoint {
    alpha: f64,
    evaluated: usize,
    skipped: usize,
    mean_points_f1: f64,
    mean_pairs_f1: f64,
}

#[derive(Serialize)]
struct GridReport {
    grid: Vec<GridPoint>,
    best_alpha: f64,
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let cfg = args.config.load()?;
    let model = load_model(args.model, &cfg)?;
    let heldout = load_trajectory_records(&args.trajs)?;

    if args.alpha_grid.is_empty() {
        let mut report = evaluate(&model, &heldout, args.mode)?;
        if !args.per_query {
            report.queries.clear();
        }
        return print_line(&report);
    }

    let mut grid = Vec::with_capacity(args.alpha_grid.len());
    for &alpha in &args.alpha_grid {
        let r = evaluate(&model.with_alpha(alpha)?, &heldout, args.mode)?;
        grid.push(GridPoint {
            alpha,
            evaluated: r.evaluated,
            skipped: r.skipped,
            mean_points_f1: r.mean_points_f1,
            mean_pairs_f1: r.mean_pairs_f1,
        });
    }
    // first maximum wins, so ties go to the earlier grid value
    let best = grid
        .iter()
        .fold(&grid[0], |best, g| if g.mean_pairs_f1 > best.mean_pairs_f1 { g } else { best });
    print_line(&GridReport {
        best_alpha: best.alpha,
        grid,
    })
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    out_dir: &'a Path,
    pois: usize,
    trajectories: usize,
    planted_top: PoiId,
    recovery_queries: usize,
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let data = generate(&SynthConfig::new(args.pois, args.trajs, args.seed))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_failure(&args.out_dir, e))?;
    let create = |name: &str| {
        let path = args.out_dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| io_failure(&path, e))
    };
    write_pois_csv(create("pois.csv")?, &data.pois)?;
    write_trajectories_csv(create("trajs.csv")?, &data.trajectories)?;
    let mut truth = create("ground_truth.json")?;
    let text = json::to_string(&data.truth).map_err(internal)?;
    writeln!(truth, "{text}")
        .and_then(|_| truth.flush())
        .map_err(|e| io_failure(&args.out_dir.join("ground_truth.json"), e))?;
    print_line(&SynthSummary {
        out_dir: &args.out_dir,
        pois: data.pois.len(),
        trajectories: data.trajectories.len(),
        planted_top: data.truth.planted_top,
        recovery_queries: data.truth.recovery_queries.len(),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("pathrec: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
