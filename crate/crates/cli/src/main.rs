//! Single command-line entry point wiring files through the pipeline:
//! track detections, aggregate analytics, evaluate, and forecast demand.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Every
//! subcommand is deterministic with respect to its inputs, flags, and seed.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use storetrack_core::analytics::{
    accumulate_heatmap, count_line_crossings, unique_visitors, CountingLine,
};
use storetrack_core::forecasting::{one_step_eval, predict, train, ModelKind, TrainConfig, TrainedModel};
use storetrack_core::io::{
    parse_cmc_file, parse_detections, parse_forecast_csv, parse_ground_truth, parse_sales_csv,
    parse_tracks, write_forecast_csv, write_tracks, SalesRecord,
};
use storetrack_core::metrics::{forecast_metrics, improvement_rate, map_suite, mota, MetricsReport};
use storetrack_core::tracker::{run_sequence, TrackerConfig, TrackerVariant};

#[derive(Parser)]
#[command(
    name = "storetrack",
    version,
    about = "Retail footfall tracking, analytics, and demand forecasting over plain text formats"
)]
struct Cli {
    /// Seed for every pseudo-random choice (weight init, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Link per-frame detections into identity tracks.
    Track(TrackArgs),
    /// Aggregate track files into retail insights.
    #[command(subcommand)]
    Analytics(AnalyticsCommand),
    /// Evaluate detections, tracks, or forecasts against references.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train and apply demand-forecasting models.
    #[command(subcommand)]
    Forecast(ForecastCommand),
    /// Train linear, LSTM, and GRU on one series and print a comparison table.
    CompareModels(CompareArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Detections file: frame,id,left,top,width,height,score[,x,y,z]
    #[arg(long)]
    detections: PathBuf,
    /// Tracker variant: botsort or bytetrack.
    #[arg(long)]
    tracker: Option<TrackerVariant>,
    /// Optional per-frame camera motion file: frame,a11,a12,a21,a22,tx,ty
    #[arg(long)]
    cmc: Option<PathBuf>,
    /// Tracker configuration JSON; absent fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output track file.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the run report JSON; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyticsCommand {
    /// Accumulate an occupancy heat map from track foot-points.
    Heatmap(HeatmapArgs),
    /// Count directed crossings of a line.
    Count(CountArgs),
    /// Count visitors, either by unique ids or by line crossings.
    Visitors(VisitorsArgs),
}

#[derive(Args)]
struct HeatmapArgs {
    /// Track file to aggregate.
    #[arg(long)]
    tracks: PathBuf,
    /// Grid size as COLSxROWS, e.g. 10x10.
    #[arg(long)]
    grid: String,
    /// Frame size in pixels as WIDTHxHEIGHT, e.g. 1920x1080.
    #[arg(long)]
    frame: String,
    /// Output file; .pgm writes a P2 image, anything else a CSV matrix.
    #[arg(long)]
    out: PathBuf,
    /// Write the normalized (sum = 1) CSV variant instead of raw counts.
    #[arg(long)]
    normalized: bool,
}

#[derive(Args)]
struct CountArgs {
    /// Track file to scan.
    #[arg(long)]
    tracks: PathBuf,
    /// Counting line as x1,y1,x2,y2.
    #[arg(long)]
    line: String,
    /// Label recorded in the report.
    #[arg(long, default_value = "line")]
    label: String,
    /// Where to write the report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VisitorsArgs {
    /// Track file to scan.
    #[arg(long)]
    tracks: PathBuf,
    /// Counting mode: unique (distinct track ids) or line (positive crossings).
    #[arg(long, default_value = "unique")]
    mode: String,
    /// Counting line as x1,y1,x2,y2; required for --mode line.
    #[arg(long)]
    line: Option<String>,
    /// Where to write the JSON result; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Precision/recall/AP of detections against annotated boxes.
    Detection(EvalDetectionArgs),
    /// Multi-object tracking accuracy of a track file.
    Tracking(EvalTrackingArgs),
    /// Error metrics of a forecast against actual sales.
    Forecast(EvalForecastArgs),
}

#[derive(Args)]
struct EvalDetectionArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Where to write the report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTrackingArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// IoU threshold for box correspondence.
    #[arg(long, default_value_t = 0.5)]
    iou_thr: f64,
    /// Where to write the report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalForecastArgs {
    /// Predicted series: date,store,item,predicted_sales (or sales).
    #[arg(long)]
    pred: PathBuf,
    /// Actual series in the same schema.
    #[arg(long)]
    actual: PathBuf,
    /// Where to write the report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ForecastCommand {
    /// Fit a model on one (store, item) series.
    Train(ForecastTrainArgs),
    /// Roll a trained model forward past the end of a series.
    Predict(ForecastPredictArgs),
}

#[derive(Args, Clone)]
struct TrainOverrides {
    /// Training configuration JSON; absent fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sliding-window length in days.
    #[arg(long)]
    window: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden state width of the recurrent models.
    #[arg(long)]
    hidden: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Days held out as the chronological validation tail.
    #[arg(long)]
    val_days: Option<usize>,
}

#[derive(Args)]
struct ForecastTrainArgs {
    /// Sales CSV with header date,store,item,sales.
    #[arg(long)]
    sales: PathBuf,
    /// Model kind: linear, lstm, or gru.
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    store: u32,
    #[arg(long)]
    item: u32,
    /// Where to write the trained model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Optional loss history CSV: epoch,train_loss,val_loss.
    #[arg(long)]
    loss_history: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct ForecastPredictArgs {
    /// Trained model JSON produced by `forecast train`.
    #[arg(long)]
    model: PathBuf,
    /// Sales CSV providing the history to roll forward from.
    #[arg(long)]
    sales: PathBuf,
    /// Days to forecast past the end of the series.
    #[arg(long)]
    horizon: usize,
    /// Output CSV: date,store,item,predicted_sales.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Sales CSV with header date,store,item,sales.
    #[arg(long)]
    sales: PathBuf,
    #[arg(long)]
    store: u32,
    #[arg(long)]
    item: u32,
    #[command(flatten)]
    overrides: TrainOverrides,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(context: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", context.display()))
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::data(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::data(path, e))
}

fn emit(out: &Option<PathBuf>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn parse_pair<T: std::str::FromStr>(text: &str, what: &str) -> Result<(T, T), CliError> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() == 2 {
        if let (Ok(a), Ok(b)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok((a, b));
        }
    }
    Err(CliError::Usage(format!("{what} must look like AxB, got `{text}`")))
}

fn parse_line_flag(text: &str) -> Result<CountingLine, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let coords: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).collect();
    if parts.len() != 4 || coords.len() != 4 {
        return Err(CliError::Usage(format!("--line must be x1,y1,x2,y2, got `{text}`")));
    }
    CountingLine::new((coords[0], coords[1]), (coords[2], coords[3]), "line")
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn load_tracker_config(args: &TrackArgs) -> Result<TrackerConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| CliError::data(path, format!("bad tracker config: {e}")))?,
        None => TrackerConfig::default(),
    };
    if let Some(variant) = args.tracker {
        config.variant = variant;
    }
    Ok(config)
}

fn load_train_config(overrides: &TrainOverrides, seed: Option<u64>) -> Result<TrainConfig, CliError> {
    let mut config = match &overrides.config {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| CliError::data(path, format!("bad training config: {e}")))?,
        None => TrainConfig::default(),
    };
    if let Some(window) = overrides.window {
        config.window_length = window;
    }
    if let Some(epochs) = overrides.epochs {
        config.epochs = epochs;
    }
    if let Some(hidden) = overrides.hidden {
        config.hidden_size = hidden;
    }
    if let Some(lr) = overrides.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(val_days) = overrides.val_days {
        config.val_days = val_days;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn select_series(records: &[SalesRecord], store: u32, item: u32, path: &Path) -> Result<Vec<SalesRecord>, CliError> {
    let series: Vec<SalesRecord> =
        records.iter().copied().filter(|r| r.store == store && r.item == item).collect();
    if series.is_empty() {
        return Err(CliError::data(
            path,
            format!("no rows for store {store}, item {item}"),
        ));
    }
    Ok(series)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn run_track(args: &TrackArgs) -> Result<(), CliError> {
    let config = load_tracker_config(args)?;
    let detections =
        parse_detections(&read_file(&args.detections)?).map_err(|e| CliError::data(&args.detections, e))?;
    let cmc = match &args.cmc {
        Some(path) => Some(parse_cmc_file(&read_file(path)?).map_err(|e| CliError::data(path, e))?),
        None => None,
    };
    let (records, report) =
        run_sequence(&detections, &config, cmc.as_ref()).map_err(|e| CliError::data(&args.detections, e))?;
    let text = write_tracks(&records).map_err(|e| CliError::data(&args.out, e))?;
    write_file(&args.out, &text)?;
    emit(&args.report, &to_json(&report))
}

fn run_heatmap(args: &HeatmapArgs) -> Result<(), CliError> {
    let (cols, rows) = parse_pair::<usize>(&args.grid, "--grid")?;
    let (width, height) = parse_pair::<f64>(&args.frame, "--frame")?;
    if cols == 0 || rows == 0 || width <= 0.0 || height <= 0.0 {
        return Err(CliError::Usage("grid and frame dimensions must be positive".into()));
    }
    let records = parse_tracks(&read_file(&args.tracks)?).map_err(|e| CliError::data(&args.tracks, e))?;
    let map = accumulate_heatmap(&records, (cols, rows), (width, height));

    let is_pgm = args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let contents = if is_pgm {
        if args.normalized {
            return Err(CliError::Usage("--normalized applies to CSV output only".into()));
        }
        map.to_pgm()
    } else if args.normalized {
        let values = map.normalized().map_err(|e| CliError::data(&args.tracks, e))?;
        let mut out = String::new();
        for row in 0..rows {
            let cells: Vec<String> =
                (0..cols).map(|c| values[row * cols + c].to_string()).collect();
            writeln!(out, "{}", cells.join(",")).expect("string write");
        }
        out
    } else {
        map.to_csv()
    };
    write_file(&args.out, &contents)
}

fn run_count(args: &CountArgs) -> Result<(), CliError> {
    let mut line = parse_line_flag(&args.line)?;
    line.label = args.label.clone();
    let records = parse_tracks(&read_file(&args.tracks)?).map_err(|e| CliError::data(&args.tracks, e))?;
    let report = count_line_crossings(&records, &line).map_err(|e| CliError::data(&args.tracks, e))?;
    emit(&args.out, &report.to_json())
}

fn run_visitors(args: &VisitorsArgs) -> Result<(), CliError> {
    let records = parse_tracks(&read_file(&args.tracks)?).map_err(|e| CliError::data(&args.tracks, e))?;
    let visitors = match args.mode.as_str() {
        "unique" => unique_visitors(&records) as u64,
        "line" => {
            let text = args
                .line
                .as_ref()
                .ok_or_else(|| CliError::Usage("--mode line requires --line".into()))?;
            let line = parse_line_flag(text)?;
            let report =
                count_line_crossings(&records, &line).map_err(|e| CliError::data(&args.tracks, e))?;
            report.positive
        }
        other => {
            return Err(CliError::Usage(format!("--mode must be unique or line, got `{other}`")))
        }
    };
    emit(
        &args.out,
        &format!("{{\n  \"mode\": \"{}\",\n  \"visitors\": {visitors}\n}}", args.mode),
    )
}

fn run_eval_detection(args: &EvalDetectionArgs) -> Result<(), CliError> {
    let dets =
        parse_detections(&read_file(&args.detections)?).map_err(|e| CliError::data(&args.detections, e))?;
    let gts = parse_ground_truth(&read_file(&args.ground_truth)?)
        .map_err(|e| CliError::data(&args.ground_truth, e))?;
    let report = map_suite(&dets, &gts).map_err(|e| CliError::data(&args.ground_truth, e))?;
    emit(&args.out, &to_json(&report))
}

fn run_eval_tracking(args: &EvalTrackingArgs) -> Result<(), CliError> {
    if !(0.0 < args.iou_thr && args.iou_thr <= 1.0) {
        return Err(CliError::Usage(format!("--iou-thr must be in (0, 1], got {}", args.iou_thr)));
    }
    let tracks = parse_tracks(&read_file(&args.tracks)?).map_err(|e| CliError::data(&args.tracks, e))?;
    let gts = parse_ground_truth(&read_file(&args.ground_truth)?)
        .map_err(|e| CliError::data(&args.ground_truth, e))?;
    let report =
        mota(&gts, &tracks, args.iou_thr).map_err(|e| CliError::data(&args.ground_truth, e))?;
    emit(&args.out, &to_json(&report))
}

fn run_eval_forecast(args: &EvalForecastArgs) -> Result<(), CliError> {
    let pred = parse_forecast_csv(&read_file(&args.pred)?).map_err(|e| CliError::data(&args.pred, e))?;
    let actual =
        parse_forecast_csv(&read_file(&args.actual)?).map_err(|e| CliError::data(&args.actual, e))?;

    let key = |p: &storetrack_core::io::ForecastPoint| (p.date, p.store, p.item);
    let mut pred_map: BTreeMap<_, f64> = pred.iter().map(|p| (key(p), p.predicted_sales)).collect();
    let mut predicted = Vec::with_capacity(actual.len());
    let mut actuals = Vec::with_capacity(actual.len());
    let mut sorted_actual = actual.clone();
    sorted_actual.sort_by_key(|p| key(p));
    for a in &sorted_actual {
        match pred_map.remove(&key(a)) {
            Some(p) => {
                predicted.push(p);
                actuals.push(a.predicted_sales);
            }
            None => {
                return Err(CliError::data(
                    &args.pred,
                    format!("missing prediction for {},{},{}", a.date, a.store, a.item),
                ))
            }
        }
    }
    if let Some(((date, store, item), _)) = pred_map.into_iter().next() {
        return Err(CliError::data(
            &args.actual,
            format!("prediction {date},{store},{item} has no actual row"),
        ));
    }
    let report = forecast_metrics(&predicted, &actuals).map_err(|e| CliError::data(&args.pred, e))?;
    emit(&args.out, &to_json(&report))
}

fn run_forecast_train(args: &ForecastTrainArgs, seed: Option<u64>) -> Result<(), CliError> {
    let config = load_train_config(&args.overrides, seed)?;
    let records = parse_sales_csv(&read_file(&args.sales)?).map_err(|e| CliError::data(&args.sales, e))?;
    let series = select_series(&records, args.store, args.item, &args.sales)?;
    let (model, history) =
        train(&series, args.model, &config).map_err(|e| CliError::data(&args.sales, e))?;
    write_file(&args.out, &model.to_json())?;
    if let Some(path) = &args.loss_history {
        write_file(path, &history.to_csv())?;
    }
    println!(
        "trained {} on store {} item {}: final train loss {:.6}, val loss {:.6}",
        args.model,
        args.store,
        args.item,
        history.train_loss.last().copied().unwrap_or(f64::NAN),
        history.val_loss.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

fn run_forecast_predict(args: &ForecastPredictArgs) -> Result<(), CliError> {
    let model = TrainedModel::from_json(&read_file(&args.model)?)
        .map_err(|e| CliError::data(&args.model, e))?;
    let records = parse_sales_csv(&read_file(&args.sales)?).map_err(|e| CliError::data(&args.sales, e))?;
    let series = select_series(&records, model.store, model.item, &args.sales)?;
    let points =
        predict(&model, &series, args.horizon).map_err(|e| CliError::data(&args.sales, e))?;
    write_file(&args.out, &write_forecast_csv(&points))
}

fn run_compare_models(args: &CompareArgs, seed: Option<u64>) -> Result<(), CliError> {
    let config = load_train_config(&args.overrides, seed)?;
    let records = parse_sales_csv(&read_file(&args.sales)?).map_err(|e| CliError::data(&args.sales, e))?;
    let series = select_series(&records, args.store, args.item, &args.sales)?;

    let kinds = [ModelKind::Linear, ModelKind::Lstm, ModelKind::Gru];
    let mut reports: Vec<MetricsReport> = Vec::new();
    for kind in kinds {
        let (model, _) = train(&series, kind, &config).map_err(|e| CliError::data(&args.sales, e))?;
        let (predicted, actual) = one_step_eval(&model, &series, config.val_days)
            .map_err(|e| CliError::data(&args.sales, e))?;
        reports.push(forecast_metrics(&predicted, &actual).map_err(|e| CliError::data(&args.sales, e))?);
    }

    println!(
        "validation metrics on the final {} days of store {} item {}:",
        config.val_days, args.store, args.item
    );
    println!("{:<10} {:>12} {:>12} {:>12}", "metric", "linear", "lstm", "gru");
    let rows: [(&str, Vec<f64>); 5] = [
        ("rmse", reports.iter().map(|r| r.rmse).collect()),
        ("r2-score", reports.iter().map(|r| r.r2).collect()),
        ("mape", reports.iter().map(|r| r.mape).collect()),
        ("mae", reports.iter().map(|r| r.mae).collect()),
        ("mse", reports.iter().map(|r| r.mse).collect()),
    ];
    for (name, values) in &rows {
        println!(
            "{:<10} {:>12.3} {:>12.3} {:>12.3}",
            name, values[0], values[1], values[2]
        );
    }
    let gru = &reports[2];
    for (baseline, name) in [(&reports[0], "linear"), (&reports[1], "lstm")] {
        let r2 = improvement_rate(baseline.r2, gru.r2).map_err(|e| CliError::Data(e.to_string()))?;
        let mape =
            improvement_rate(baseline.mape, gru.mape).map_err(|e| CliError::Data(e.to_string()))?;
        println!("gru improvement over {name}: r2-score {r2:.3}%, mape {mape:.3}%");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Track(args) => run_track(args),
        Command::Analytics(AnalyticsCommand::Heatmap(args)) => run_heatmap(args),
        Command::Analytics(AnalyticsCommand::Count(args)) => run_count(args),
        Command::Analytics(AnalyticsCommand::Visitors(args)) => run_visitors(args),
        Command::Eval(EvalCommand::Detection(args)) => run_eval_detection(args),
        Command::Eval(EvalCommand::Tracking(args)) => run_eval_tracking(args),
        Command::Eval(EvalCommand::Forecast(args)) => run_eval_forecast(args),
        Command::Forecast(ForecastCommand::Train(args)) => run_forecast_train(args, cli.seed),
        Command::Forecast(ForecastCommand::Predict(args)) => run_forecast_predict(args),
        Command::CompareModels(args) => run_compare_models(args, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
