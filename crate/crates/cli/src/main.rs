use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use oran_dsa::config::ScenarioConfig;
use oran_dsa::control::{serve_xapp, TcpTransport};
use oran_dsa::metrics::SlotRecord;
use oran_dsa::rng::{derive_seed, Stream};
use oran_dsa::sim::{
    evaluate_forecaster, load_traffic, run_scenario, run_with_xapp, Remote, RunSummary, SweepAxis,
};
use oran_dsa::traffic::{ingest_csv, SAMPLES_PER_DAY};
use oran_dsa::Error;

/// O-RAN rApp/xApp dynamic spectrum allocation simulator.
#[derive(Parser)]
#[command(name = "oran-dsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Dotted config override, e.g. `--set fairness_scheme=rr`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write summary.json and slots.csv.
    Run {
        /// Scenario JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the full-length run (96 episodes of 900 slots).
        #[arg(long)]
        full_scale: bool,
        /// Reach the xApp over TCP instead of running it in-process.
        #[arg(long, value_name = "HOST:PORT")]
        xapp_endpoint: Option<String>,
    },
    /// Run one scenario per value of a parameter and write sweep.csv.
    Sweep {
        /// Scenario JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// numerology, demand, coloring-scheme, fairness-scheme or ue-count.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Score the configured forecaster on the last day of traffic.
    Predict {
        /// Scenario JSON; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `timestamp,ru_id,load` CSV; without it the scenario's synthetic
        /// traffic is used.
        #[arg(long, conflicts_with = "synth")]
        traffic: Option<PathBuf>,
        /// Use the scenario's synthetic traffic (the default).
        #[arg(long)]
        synth: bool,
        /// Samples held out for testing.
        #[arg(long, default_value_t = SAMPLES_PER_DAY)]
        test_len: usize,
    },
    /// Serve the xApp over TCP. Prints the bound address on stdout.
    Xapp {
        /// Address to bind; port 0 picks a free one.
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        /// Exit after the first session.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Transport(_) => Failure::Io(msg),
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidGrid(_)
            | Error::Policy(_)
            | Error::Traffic(_)
            | Error::Csv { .. }
            | Error::InsufficientHistory { .. } => Failure::Config(msg),
            _ => Failure::Other(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Io(m) | Failure::Other(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run {
            config,
            full_scale,
            xapp_endpoint,
        } => {
            let base = if *full_scale {
                ScenarioConfig::full_scale()
            } else {
                ScenarioConfig::default()
            };
            let cfg = resolve(cli, config.as_deref(), base)?;
            cmd_run(&cfg, &cli.out, xapp_endpoint.as_deref())
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = resolve(cli, config.as_deref(), ScenarioConfig::default())?;
            cmd_sweep(&cfg, axis, values, &cli.out)
        }
        Command::Predict {
            config,
            traffic,
            synth: _,
            test_len,
        } => {
            let cfg = resolve(cli, config.as_deref(), ScenarioConfig::default())?;
            cmd_predict(&cfg, traffic.as_deref(), *test_len, &cli.out)
        }
        Command::Xapp { listen, once } => cmd_xapp(listen, *once),
    }
}

/// Config file (or `base`), then `--set` overrides, then `--seed`.
fn resolve(cli: &Cli, path: Option<&Path>, base: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    let cfg = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => base,
    };
    let mut sets = cli.sets.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    Ok(cfg.with_overrides(&sets)?)
}

fn cmd_run(cfg: &ScenarioConfig, out: &Path, endpoint: Option<&str>) -> Result<(), Failure> {
    let (summary, records) = match endpoint {
        None => run_scenario(cfg)?,
        Some(addr) => {
            let mut link = Remote::new(TcpTransport::connect(addr)?);
            run_with_xapp(cfg, &mut link)?
        }
    };
    fs::create_dir_all(out)?;
    write_summary(&out.join("summary.json"), cfg, &summary)?;
    write_slots(&out.join("slots.csv"), &records)?;
    println!(
        "success_rate={:.2}% jfi={:.2}% ues={} slots={}",
        summary.success_rate_pct, summary.jfi_pct, summary.ue_count, summary.slot_count
    );
    Ok(())
}

fn write_summary(path: &Path, cfg: &ScenarioConfig, summary: &RunSummary) -> Result<(), Failure> {
    let doc = json!({
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "summary": serde_json::to_value(summary).expect("summary serializes"),
    });
    write_json(path, &doc)
}

fn write_json(path: &Path, doc: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).expect("JSON value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_slots(path: &Path, records: &[SlotRecord]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["episode", "slot", "ue", "ru", "prb", "rate_bps", "satisfied", "preempted"])?;
    for r in records {
        for u in &r.ues {
            w.write_record([
                r.episode.to_string(),
                r.slot.to_string(),
                u.ue.to_string(),
                u.ru.to_string(),
                u.prb.map(|p| p.to_string()).unwrap_or_default(),
                u.rate_bps.to_string(),
                u8::from(u.satisfied).to_string(),
                u8::from(u.preempted).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(base: &ScenarioConfig, axis: &str, values: &[String], out: &Path) -> Result<(), Failure> {
    let axis: SweepAxis = axis.parse()?;
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Config("sweep needs at least one value".into()));
    }
    let points = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut cfg = axis.apply(base, v)?;
            cfg.seed = derive_seed(base.seed, Stream::Sweep, &[i as u64]);
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let results = points
        .par_iter()
        .map(run_scenario)
        .collect::<Result<Vec<_>, Error>>()?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["axis", "axis_value", "success_rate_pct", "jfi_pct"])?;
    for (v, (summary, _)) in values.iter().zip(&results) {
        w.write_record([
            axis.token().to_string(),
            v.to_string(),
            summary.success_rate_pct.to_string(),
            summary.jfi_pct.to_string(),
        ])?;
        println!(
            "{}={v}: success_rate={:.2}% jfi={:.2}%",
            axis.token(),
            summary.success_rate_pct,
            summary.jfi_pct
        );
    }
    w.flush()?;
    Ok(())
}

fn cmd_predict(
    cfg: &ScenarioConfig,
    traffic: Option<&Path>,
    test_len: usize,
    out: &Path,
) -> Result<(), Failure> {
    let series = match traffic {
        Some(p) => ingest_csv(p, &[])?,
        None => load_traffic(cfg)?,
    };
    let ev = evaluate_forecaster(&series, &cfg.forecaster, test_len, cfg.grid, cfg.headroom)?;
    fs::create_dir_all(out)?;

    let mut w = csv::Writer::from_path(out.join("forecast.csv"))?;
    w.write_record(["timestamp", "ru_id", "actual", "predicted"])?;
    for p in &ev.points {
        w.write_record([
            p.timestamp.clone(),
            p.ru_id.to_string(),
            p.actual.to_string(),
            p.predicted.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("decisions.csv"))?;
    w.write_record([
        "timestamp",
        "actual_total",
        "predicted_total",
        "worst_case_predicted",
        "numerology",
    ])?;
    for d in &ev.decisions {
        w.write_record([
            d.timestamp.clone(),
            d.actual_total.to_string(),
            d.predicted_total.to_string(),
            d.worst_case_predicted.to_string(),
            d.numerology.to_string(),
        ])?;
    }
    w.flush()?;

    write_json(
        &out.join("predict.json"),
        &json!({
            "forecaster": serde_json::to_value(&cfg.forecaster).expect("serializes"),
            "test_len": ev.test_len,
            "mse_normalized": ev.mse_normalized,
            "mse_normalized_per_ru": ev.mse_normalized_per_ru,
        }),
    )?;
    println!("normalized MSE {:.6} over {} samples", ev.mse_normalized, ev.test_len);
    Ok(())
}

fn cmd_xapp(listen: &str, once: bool) -> Result<(), Failure> {
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    {
        let mut stdout = io::stdout().lock();
        writeln!(stdout, "{addr}")?;
        stdout.flush()?;
    }
    log::info!("xApp listening on {addr}");
    loop {
        let mut transport = TcpTransport::accept(&listener)?;
        match serve_xapp(&mut transport) {
            Ok(()) => log::info!("session closed"),
            Err(e) if once => return Err(e.into()),
            Err(e) => log::warn!("session aborted: {e}"),
        }
        if once {
            return Ok(());
        }
    }
}
