//! Deterministic discrete-event simulator of vertical handover for
//! multi-interface Mobile IPv6 nodes.
//!
//! The crate models a mobile node moving between a home and a foreign
//! wireless network while a correspondent streams video or VoIP to it. A
//! link-layer handover controller ([`llc`]) either breaks the old link before
//! making the new one (hard handover, one interface) or keeps the old link
//! until the new interface holds a global care-of address (soft handover,
//! two interfaces). The [`harness`] builds the standard two-network scenario,
//! runs sweeps and exports per-run metrics.

pub mod engine;
pub mod harness;
pub mod ipv6;
pub mod llc;
pub mod mipv6;
pub mod packet;
pub mod radio;
pub mod traffic;

pub use engine::{EventHandle, IfaceId, NodeId, RngStream, Scheduler, SimTime, StreamId};
pub use harness::{
    emit_csv, load_scenario, read_csv, run_experiment, simulate, sweep, Application, MetricsRecord, RunOutput,
    ScenarioConfig,
};
pub use ipv6::{Ipv6Address, Prefix};
pub use llc::HandoverScheme;
pub use traffic::{FlowKind, FlowStats, MosReport};
