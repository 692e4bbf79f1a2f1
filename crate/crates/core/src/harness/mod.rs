//! Scenario construction, experiment runs and sweeps, metrics export.

pub mod checks;
pub mod config;
pub mod log;
pub mod metrics;
mod world;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::engine::SimTime;
use crate::llc::HandoverScheme;
use crate::packet::IPV6_HEADER_BITS;
use crate::traffic::{compute_mos, packet_loss_rate, FlowId, FlowKind, FlowStats, MOS_MODEL};

pub use checks::Violation;
pub use config::{load_scenario, parse_scenario, Application, ConfigError, ScenarioConfig, SimDuration};
pub use log::{EventLog, LogRecord};
pub use metrics::{emit_csv, parse_csv, read_csv, write_csv, CsvError, MetricsRecord, CSV_COLUMNS};
pub use world::{Counters, DropRecord, CN_NODE, FORWARD, FR_NODE, HA_NODE, REVERSE};

/// Lines of event log attached to an invariant failure.
pub const DIAGNOSTIC_TAIL: usize = 40;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} invariant violation(s); first: {}\n--- event log tail ---\n{tail}", .violations.len(), .violations[0])]
    Invariant { violations: Vec<Violation>, tail: String },
    #[error("expected {expected} handovers, got {got}\n--- event log tail ---\n{tail}")]
    HandoverCount { expected: u32, got: u32, tail: String },
    #[error("no application traffic was sent")]
    NoTraffic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub flow: FlowId,
    pub stats: FlowStats,
    pub in_flight: u64,
    /// Sequence numbers the sink never saw.
    pub unseen: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub counters: Counters,
    pub flows: Vec<FlowReport>,
    pub drops: Vec<DropRecord>,
    pub logged_handovers: u32,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: MetricsRecord,
    pub log: EventLog,
    pub report: RunReport,
    pub wall: Duration,
}

/// Upper bound on the delay from the home agent to the mobile node in the
/// foreign network for the largest data packet.
fn tunnel_slack(cfg: &ScenarioConfig) -> f64 {
    let payload = match cfg.app {
        Application::Video { packet_bits, .. } => packet_bits,
        Application::Voip(v) => v.payload_bits(),
    };
    let bits = (payload + 2 * IPV6_HEADER_BITS + 34 * 8) as f64;
    let w = &cfg.wired;
    w.ha_latency + w.fr_latency + w.ap_latency + 3.0 * bits / w.bitrate_bps + bits / cfg.radio.bitrate_bps
}

/// Runs one scenario and collects everything, including violations, without
/// failing on them.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let fin = world::World::new(cfg.clone()).run();
    let end = SimTime::from_secs(cfg.resolved_sim_time());

    let mut violations = checks::counter_violations(&fin.counters);
    violations.extend(checks::log_checks(cfg.scheme, &fin.log, &fin.drops, end, tunnel_slack(cfg)));

    let mut flows = Vec::new();
    let mut all = FlowStats::default();
    for (i, (stats, in_flight, unseen)) in fin.flows.into_iter().enumerate() {
        let flow = FlowId(i as u32);
        let accounted = stats.received + stats.late + stats.lost_in_network + in_flight;
        if stats.sent != accounted {
            violations.push(Violation {
                check: "conservation",
                time: None,
                detail: format!(
                    "{flow}: sent {} != received {} + late {} + lost {} + in-flight {in_flight}",
                    stats.sent, stats.received, stats.late, stats.lost_in_network
                ),
            });
        }
        if unseen != stats.lost_in_network + in_flight {
            violations.push(Violation {
                check: "seq_gap",
                time: None,
                detail: format!(
                    "{flow}: {unseen} sequence numbers never delivered, counters say {} lost + {in_flight} in flight",
                    stats.lost_in_network
                ),
            });
        }
        all.merge(&stats);
        flows.push(FlowReport {
            flow,
            stats,
            in_flight,
            unseen,
        });
    }

    let logged = checks::logged_handovers(&fin.log);
    if logged != fin.handover_count {
        violations.push(Violation {
            check: "handover_count_log",
            time: None,
            detail: format!("controller counted {}, log shows {logged}", fin.handover_count),
        });
    }

    let loss_rate = packet_loss_rate(&all).map_err(|_| HarnessError::NoTraffic)?;
    let mos = match cfg.app.kind() {
        FlowKind::Voip => Some(compute_mos(&all).map_err(|_| HarnessError::NoTraffic)?.mos),
        FlowKind::Video => None,
    };
    let record = MetricsRecord {
        scheme: cfg.scheme,
        application: cfg.app.kind(),
        rate: cfg.app.rate_bps(),
        speed: cfg.mobility.speed,
        seed: cfg.seed,
        sim_time: cfg.resolved_sim_time(),
        handover_count: fin.handover_count,
        sent: all.sent,
        received: all.received,
        late: all.late,
        lost: all.lost_in_network,
        in_flight: flows.iter().map(|f| f.in_flight).sum(),
        loss_rate,
        mos,
        mean_delay: fin.mean_delay,
        handover_gaps: fin.gaps,
    };
    Ok(RunOutput {
        record,
        log: fin.log,
        report: RunReport {
            counters: fin.counters,
            flows,
            drops: fin.drops,
            logged_handovers: logged,
            violations,
        },
        wall: started.elapsed(),
    })
}

/// Runs one scenario and fails on any invariant violation or, when the
/// config expects one, a handover count mismatch.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<MetricsRecord, HarnessError> {
    run_experiment_full(cfg).map(|out| out.record)
}

/// [`run_experiment`] returning the log and report as well.
pub fn run_experiment_full(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    let out = simulate(cfg)?;
    if !out.report.violations.is_empty() {
        return Err(HarnessError::Invariant {
            violations: out.report.violations,
            tail: out.log.tail(DIAGNOSTIC_TAIL),
        });
    }
    if let Some(expected) = cfg.expected_handovers {
        if out.record.handover_count != expected {
            return Err(HarnessError::HandoverCount {
                expected,
                got: out.record.handover_count,
                tail: out.log.tail(DIAGNOSTIC_TAIL),
            });
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct SweepFailure {
    pub scheme: HandoverScheme,
    pub application: Application,
    pub speed: f64,
    pub error: HarnessError,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<SweepFailure>,
}

/// Runs the cross product sequentially, application-major then scheme then
/// speed. A failing run is recorded and the sweep continues.
pub fn sweep(
    base: &ScenarioConfig,
    speeds: &[f64],
    schemes: &[HandoverScheme],
    apps: &[Application],
) -> SweepOutcome {
    let mut out = SweepOutcome::default();
    for app in apps {
        for &scheme in schemes {
            for &speed in speeds {
                let mut cfg = base.clone().with_scheme(scheme).with_speed(speed).with_app(*app);
                // The interface list follows the scheme unless pinned.
                if base.interfaces.is_some() && base.scheme != scheme {
                    cfg.interfaces = None;
                }
                match run_experiment(&cfg) {
                    Ok(r) => out.records.push(r),
                    Err(error) => out.failures.push(SweepFailure {
                        scheme,
                        application: *app,
                        speed,
                        error,
                    }),
                }
            }
        }
    }
    out
}

/// The three applications of the standard experiment grid.
pub fn standard_applications() -> Vec<Application> {
    vec![
        Application::video(0.5e6),
        Application::video(2.0e6),
        Application::Voip(Default::default()),
    ]
}

pub const STANDARD_SPEEDS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 10.0];

/// Self-describing metadata for a results file: defaults in force, MOS
/// model, geometry.
pub fn metadata(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let r = cfg.radio.coverage_radius(cfg.home_ap.tx_power_dbm);
    let _ = writeln!(s, "generator = \"vhosim {}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "mos_model = \"{MOS_MODEL}\"");
    let _ = writeln!(s, "loss_rate = \"(sent - received) / sent over both flow directions; late VoIP packets are not received\"");
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "sim_time = \"{}\"", match cfg.sim_time {
        SimDuration::Auto => format!("auto ({} m / speed)", config::AUTO_PATH_METERS),
        SimDuration::Fixed(t) => t.to_string(),
    });
    let _ = writeln!(s, "app.start = {}", cfg.app_start);
    for ap in cfg.aps() {
        let _ = writeln!(
            s,
            "{}.position = [{}, {}]\n{}.channel = {}\n{}.tx_power = {}\n{}.prefix = \"{}\"\n{}.beacon_offset = {}",
            ap.name, ap.position.x, ap.position.y, ap.name, ap.channel, ap.name, ap.tx_power_dbm,
            ap.name, ap.prefix, ap.name, ap.beacon_offset
        );
    }
    let _ = writeln!(s, "radio.coverage_radius = {r}");
    let m = &cfg.mobility;
    let _ = writeln!(
        s,
        "mobility.path = \"tractor ({}, {}) -> ({}, {}), {} rows, pass {} m\"",
        m.x1, m.y1, m.x2, m.y2, m.row_count, m.pass_length()
    );
    let _ = writeln!(s, "radio.frequency = {}\nradio.sensitivity = {}\nradio.bitrate = {}", cfg.radio.frequency_hz, cfg.radio.sensitivity_dbm, cfg.radio.bitrate_bps);
    let _ = writeln!(s, "radio.beacon_interval = {}\nradio.miss_threshold = {}", cfg.home_ap.beacon_interval, cfg.miss_threshold);
    let _ = writeln!(s, "ipv6.dad_duration = {}\nipv6.ra_interval = {}", cfg.ipv6.dad_duration, cfg.ipv6.ra_interval);
    let _ = writeln!(
        s,
        "mipv6.binding_lifetime = {}\nmipv6.bu_retransmit = {}\nmipv6.bu_max_attempts = {}",
        cfg.mip.binding_lifetime, cfg.mip.retransmit_interval, cfg.mip.max_attempts
    );
    let w = &cfg.wired;
    let _ = writeln!(
        s,
        "wired.cn_latency = {}\nwired.ha_latency = {}\nwired.fr_latency = {}\nwired.ap_latency = {}\nwired.bitrate = {}",
        w.cn_latency, w.ha_latency, w.fr_latency, w.ap_latency, w.bitrate_bps
    );
    if let Application::Voip(v) = cfg.app {
        let _ = writeln!(
            s,
            "voip.packetization_interval = {}\nvoip.playout_delay = {}\nvoip.spurt_mean = {}\nvoip.silence_mean = {}\nvoip.codec_rate = {}",
            v.packetization_interval, v.playout_delay, v.spurt_mean, v.silence_mean, v.codec_rate
        );
    }
    s
}
