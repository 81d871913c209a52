use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use wifi_fabmap::dataset::{export_records, write_ujiindoorloc, NOT_DETECTED};
use wifi_fabmap::eval::export_matches;
use wifi_fabmap::inference::match_scan;
use wifi_fabmap::model::write_atomic;
use wifi_fabmap::pipeline::TrainConfig;
use wifi_fabmap::synth::{generate, SynthSpec};
use wifi_fabmap::tune::GridSpec;
use wifi_fabmap::{load_ujiindoorloc, ApRegistry, Dataset, DetectorModel, ModelFile, PlaceDatabase, Prepared, WifiScan};

#[derive(Parser)]
#[command(name = "wifi-fabmap", version, about = "WiFi fingerprint place recognition")]
struct Cli {
    /// Worker threads for tuning and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model from a training CSV.
    Train(TrainArgs),
    /// Grid-search the detector parameters and write the score surface.
    Tune(TuneArgs),
    /// Score a model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Match a single scan against a model; prints the top matches as CSV.
    Predict(PredictArgs),
    /// Write a synthetic training/test pair in UJIIndoorLoc layout.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    train_csv: PathBuf,
    /// RSSI bin width in dB.
    #[arg(long, default_value_t = 10, value_parser = PossibleValuesParser::new(["5", "10"]).map(|s| s.parse::<u32>().unwrap()))]
    bin_width: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.4916)]
    pzge: f64,
    #[arg(long, default_value_t = 0.0055)]
    pzgne: f64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the cluster split as `record_index,cluster_id,partition`.
    #[arg(long)]
    split_csv: Option<PathBuf>,
    /// Also write the debug export of the training records.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: Common,
    /// Evaluate only this PzGe (requires --pzgne).
    #[arg(long, requires = "pzgne")]
    pzge: Option<f64>,
    /// Evaluate only this PzGne (requires --pzge).
    #[arg(long, requires = "pzge")]
    pzgne: Option<f64>,
    /// Surface CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test_csv: PathBuf,
    /// Report JSON to write; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-query match CSV.
    #[arg(long)]
    matches: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Inline scan, `bssid=rssi` pairs separated by commas or semicolons.
    #[arg(long, conflicts_with = "scan_csv", allow_hyphen_values = true)]
    scan: Option<String>,
    /// Single-row UJIIndoorLoc CSV holding the scan.
    #[arg(long)]
    scan_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn load(path: &Path) -> Result<Dataset> {
    load_ujiindoorloc(path).with_context(|| format!("loading {}", path.display()))
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> wifi_fabmap::Result<()>) -> Result<()> {
    write_atomic(path, body).with_context(|| format!("writing {}", path.display()))
}

fn prepare(common: &Common) -> Result<Prepared> {
    let dataset = load(&common.train_csv)?;
    let config = TrainConfig::new(f64::from(common.bin_width), common.seed)?;
    Ok(Prepared::new(dataset, config)?)
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Re-indexes `dataset` against the model registry, warning about networks
/// the model has never seen.
fn align(dataset: &Dataset, registry: &ApRegistry) -> Result<Dataset> {
    let (aligned, unknown) = dataset.remap(registry)?;
    if !unknown.is_empty() {
        warn!("ignoring {} network(s) unknown to the model: {}", unknown.len(), unknown.join(", "));
    }
    Ok(aligned)
}

fn train(args: TrainArgs) -> Result<()> {
    let prepared = prepare(&args.common)?;
    let detector = DetectorModel::new(args.pzge, args.pzgne)?;
    let db = prepared.database(detector)?;
    let c = &prepared.config;
    let model = ModelFile::from_database(&db, c.seed, c.alpha, c.cluster.eps, c.cluster.min_pts);
    model.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.split_csv {
        write_file(path, |w| prepared.split.write_csv(w))?;
    }
    if let Some(path) = &args.export {
        write_file(path, |w| export_records(&prepared.dataset, w))?;
    }
    println!("records: {}", prepared.dataset.len());
    println!("clusters: {}", prepared.assignment.count);
    println!("entries: {}", db.len());
    println!(
        "tree: {} features, {} edges, {} roots, total MI {:.6} nats",
        prepared.tree.n_features(),
        prepared.tree.n_features() - prepared.tree.roots.len(),
        prepared.tree.roots.len(),
        prepared.tree_weight
    );
    println!("model: {}", args.out.display());
    Ok(())
}

fn tune(args: TuneArgs) -> Result<()> {
    let grid = match (args.pzge, args.pzgne) {
        (Some(pzge), Some(pzgne)) => GridSpec::single(pzge, pzgne),
        _ => GridSpec::default(),
    };
    grid.validate()?;
    let prepared = prepare(&args.common)?;
    let result = prepared.tune(&grid)?;
    write_file(&args.out, |w| result.write_surface_csv(w))?;
    println!("grid points: {}", result.surface.len());
    println!(
        "best: pzge={} pzgne={} score={:.6}",
        result.best.pzge, result.best.pzgne, result.best.score
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let db: PlaceDatabase = model.into_database()?;
    let test = align(&load(&args.test_csv)?, db.registry())?;
    let (predictions, report) = wifi_fabmap::eval::evaluate(&db, &test)?;
    let json = report.to_json()?;
    match &args.out {
        Some(path) => write_file(path, |w| {
            writeln!(w, "{json}").map_err(|e| wifi_fabmap::Error::io(path, e))
        })?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.matches {
        let truths: Vec<_> = test.records.iter().map(|r| r.truth).collect();
        write_file(path, |w| export_matches(&predictions, &truths, w))?;
    }
    info!("{} of {} queries correct", report.n_correct, report.n_total);
    Ok(())
}

fn parse_inline_scan(text: &str, registry: &ApRegistry) -> Result<WifiScan> {
    let mut readings = Vec::new();
    for pair in text.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
        let (id, rssi) = pair
            .split_once('=')
            .with_context(|| format!("expected bssid=rssi, got {pair:?}"))?;
        let rssi: f64 = rssi
            .trim()
            .parse()
            .with_context(|| format!("bad RSSI in {pair:?}"))?;
        match registry.index_of(id.trim()) {
            Some(_) if rssi == NOT_DETECTED => {}
            Some(i) => readings.push((i, rssi)),
            None => warn!("ignoring network {:?}: not in the model registry", id.trim()),
        }
    }
    Ok(WifiScan::new(readings, registry.len())?)
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let db: PlaceDatabase = model.into_database()?;
    let scan = match (&args.scan, &args.scan_csv) {
        (Some(text), None) => parse_inline_scan(text, db.registry())?,
        (None, Some(path)) => {
            let ds = align(&load(path)?, db.registry())?;
            if ds.len() != 1 {
                bail!("{} holds {} rows; expected exactly one", path.display(), ds.len());
            }
            ds.records.into_iter().next().map(|r| r.scan).unwrap_or_default()
        }
        _ => bail!("give the scan with --scan or --scan-csv"),
    };
    let result = match_scan(&scan, &db)?;
    println!("query_index,entry_index,posterior,pred_building,pred_floor,pred_lon,pred_lat");
    for &(entry, p) in result.ranked.iter().take(args.top) {
        let l = &db.entries()[entry].label;
        println!(
            "0,{entry},{p},{},{},{},{}",
            l.building_id, l.floor, l.longitude, l.latitude
        );
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let (train, test) = generate(&SynthSpec {
        seed: args.seed,
        ..SynthSpec::default()
    })?;
    write_file(&args.train_out, |w| write_ujiindoorloc(&train, w))?;
    write_file(&args.test_out, |w| write_ujiindoorloc(&test, w))?;
    println!("train: {} records, test: {} records", train.len(), test.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
