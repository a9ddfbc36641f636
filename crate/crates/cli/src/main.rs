use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rsvp_cli::config::RunConfig;
use rsvp_cli::run::{load_datasets, read_report, write_atomic};
use rsvp_cli::{StageError, REPORT_FILE, RESULTS_FILE};
use rsvp_core::synth::{synth_rsvp, ErpInstance, SynthConfig};

#[derive(Parser)]
#[command(name = "rsvp", version, about = "Single-trial RSVP EEG classification pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording (`--config` is a generator config).
    Synth(Common),
    /// Preprocess the configured data into epoch files.
    Preprocess(Common),
    /// Search, train and evaluate every configured pipeline.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the table of an existing run and rewrite its results.csv.
    Report {
        /// Directory holding report.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn io_err(stage: &str) -> impl Fn(std::io::Error) -> StageError + '_ {
    move |e| StageError::new(stage, e.into())
}

fn run_config(common: &Common) -> Result<RunConfig, StageError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(serde::Serialize)]
struct GroundTruthFile<'a> {
    seed: u64,
    rate: f64,
    config: &'a SynthConfig,
    instances: &'a [ErpInstance],
}

fn synth(common: &Common) -> Result<(), StageError> {
    let mut cfg: SynthConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err("config"))?;
            serde_json::from_str(&text).map_err(|e| StageError::new("config", e.into()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let (rec, truth) = synth_rsvp(&cfg).map_err(StageError::at("synth"))?;
    fs::create_dir_all(&common.out).map_err(io_err("output"))?;
    let path = common.out.join("recording.json");
    rsvp_core::io::write_recording(&rec, &path).map_err(StageError::at("output"))?;
    let gt = GroundTruthFile {
        seed: cfg.seed,
        rate: cfg.rate,
        config: &cfg,
        instances: &truth.instances,
    };
    let json = serde_json::to_vec_pretty(&gt).map_err(|e| StageError::new("output", e.into()))?;
    write_atomic(&common.out.join("ground_truth.json"), &json).map_err(io_err("output"))?;
    println!("{} channels × {} samples at {} Hz → {}", rec.n_channels(), rec.len(), rec.rate, path.display());
    Ok(())
}

fn preprocess(common: &Common) -> Result<(), StageError> {
    let cfg = run_config(common)?;
    let seed = cfg.master_seed()?;
    fs::create_dir_all(&common.out).map_err(io_err("output"))?;
    let datasets = load_datasets(&cfg, seed)?;
    let mut summaries = serde_json::Map::new();
    for d in &datasets {
        let path = common.out.join(format!("{}.epochs", d.name));
        rsvp_core::io::write_epochs(&d.epochs, &path).map_err(StageError::at("output"))?;
        println!(
            "{}: {} epochs ({} targets, {} rejected) → {}",
            d.name,
            d.summary.epochs,
            d.summary.targets,
            d.summary.rejected_targets + d.summary.rejected_standards,
            path.display()
        );
        summaries.insert(
            d.name.clone(),
            serde_json::to_value(&d.summary).map_err(|e| StageError::new("output", e.into()))?,
        );
    }
    let json = serde_json::to_vec_pretty(&summaries).map_err(|e| StageError::new("output", e.into()))?;
    write_atomic(&common.out.join("preprocess.json"), &json).map_err(io_err("output"))?;
    Ok(())
}

fn run(common: &Common, threads: Option<usize>) -> Result<(), StageError> {
    let cfg = run_config(common)?;
    let go = || -> Result<(), StageError> {
        let report = rsvp_cli::run(&cfg, &common.out)?;
        print!("{}", report.table());
        info!("wrote {}", common.out.join(REPORT_FILE).display());
        Ok(())
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| StageError::new("config", rsvp_core::Error::Parameter(e.to_string())))?
            .install(go),
        None => go(),
    }
}

fn report(out: &Path) -> Result<(), StageError> {
    let report = read_report(&out.join(REPORT_FILE))?;
    write_atomic(&out.join(RESULTS_FILE), report.results_csv().as_bytes()).map_err(io_err("report"))?;
    print!("{}", report.table());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Preprocess(c) => preprocess(c),
        Command::Run { common, threads } => run(common, *threads),
        Command::Report { out } => report(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
