use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use vhosim::harness::{
    emit_csv, load_scenario, metadata, run_experiment_full, standard_applications, sweep, write_csv, Application,
    ScenarioConfig, STANDARD_SPEEDS,
};
use vhosim::{HandoverScheme, MetricsRecord};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scheme {
    Hard,
    Soft,
}

impl From<Scheme> for HandoverScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Hard => HandoverScheme::Hard,
            Scheme::Soft => HandoverScheme::Soft,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum App {
    Video,
    Voip,
}

/// Simulate Mobile IPv6 vertical handover between a home and a foreign
/// wireless network and write per-run metrics as CSV.
#[derive(Debug, Parser)]
#[command(name = "vhosim", version)]
struct Args {
    /// Scenario file. Without one the standard scenario is used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    app: Option<App>,
    /// Video stream rate or VoIP codec rate, bits/second.
    #[arg(long, value_name = "BPS")]
    rate: Option<f64>,
    /// Mobile node speed, meters/second.
    #[arg(long, value_name = "MPS")]
    speed: Option<f64>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// CSV output. A `<PATH>.meta` sidecar is written next to it. Defaults
    /// to stdout without metadata.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Run the speed x scheme x application grid. --scheme, --app and --speed
    /// narrow it to one value each.
    #[arg(long)]
    sweep: bool,
    /// Write the event log of a single run.
    #[arg(long, value_name = "PATH", conflicts_with = "sweep")]
    event_log: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

fn apply_app(cfg: &mut ScenarioConfig, app: Option<App>, rate: Option<f64>) {
    match app {
        Some(App::Video) if !matches!(cfg.app, Application::Video { .. }) => cfg.app = Application::video(0.5e6),
        Some(App::Voip) if !matches!(cfg.app, Application::Voip(_)) => cfg.app = Application::Voip(Default::default()),
        _ => {}
    }
    if let Some(r) = rate {
        match &mut cfg.app {
            Application::Video { rate_bps, .. } => *rate_bps = r,
            Application::Voip(v) => v.codec_rate = r,
        }
    }
}

fn base_config(args: &Args) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => load_scenario(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ScenarioConfig::standard(),
    };
    if let Some(s) = args.scheme {
        let scheme = s.into();
        if scheme != cfg.scheme {
            cfg.interfaces = None;
        }
        cfg.scheme = scheme;
    }
    if let Some(speed) = args.speed {
        cfg.mobility.speed = speed;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    apply_app(&mut cfg, args.app, args.rate);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn write_records(records: &[MetricsRecord], cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            emit_csv(records, path).map_err(|e| Failure::Run(e.to_string()))?;
            let mut meta = path.as_os_str().to_owned();
            meta.push(".meta");
            std::fs::write(&meta, metadata(cfg))
                .map_err(|e| Failure::Run(format!("cannot write {}: {e}", Path::new(&meta).display())))
        }
        None => {
            let stdout = io::stdout();
            write_csv(records, stdout.lock()).map_err(|e| Failure::Run(e.to_string()))
        }
    }
}

fn single(args: &Args, cfg: &ScenarioConfig) -> Result<(), Failure> {
    let out = run_experiment_full(cfg).map_err(|e| Failure::Run(e.to_string()))?;
    if let Some(path) = &args.event_log {
        std::fs::write(path, out.log.render())
            .map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
    }
    write_records(std::slice::from_ref(&out.record), cfg, args.out.as_deref())
}

fn grid(args: &Args, cfg: &ScenarioConfig) -> Result<(), Failure> {
    let speeds = match args.speed {
        Some(s) => vec![s],
        None => STANDARD_SPEEDS.to_vec(),
    };
    let schemes = match args.scheme {
        Some(s) => vec![s.into()],
        None => vec![HandoverScheme::Hard, HandoverScheme::Soft],
    };
    let apps = if args.app.is_some() || args.rate.is_some() || args.config.is_some() {
        vec![cfg.app]
    } else {
        standard_applications()
    };
    let outcome = sweep(cfg, &speeds, &schemes, &apps);
    write_records(&outcome.records, cfg, args.out.as_deref())?;
    if outcome.failures.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{} of {} runs failed", outcome.failures.len(), speeds.len() * schemes.len() * apps.len());
    for f in &outcome.failures {
        msg.push_str(&format!(
            "\n{} {} @{} m/s: {}",
            f.scheme,
            f.application.kind(),
            f.speed,
            f.error
        ));
    }
    Err(Failure::Run(msg))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = base_config(&args).and_then(|cfg| if args.sweep { grid(&args, &cfg) } else { single(&args, &cfg) });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(io::stderr(), "vhosim: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            let _ = writeln!(io::stderr(), "vhosim: {msg}");
            ExitCode::FAILURE
        }
    }
}
