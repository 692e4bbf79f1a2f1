//! The simulated world: one mobile node (MN), two access points, the home
//! agent (HA, also the home router), a foreign router (FR) and the
//! correspondent node (CN), with the HA, FR and CN hanging off a core
//! router.
//!
//! Two application flows run for the whole session: flow 0 from the CN to the
//! MN's home address, flow 1 from the MN to the CN.

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::{EventHandle, IfaceId, Module, NodeId, RngStream, Scheduler, SimTime, StreamId, Target};
use crate::ipv6::{Ipv6Address, Ipv6Host, RouterAdvertisement, SlaacOutcome};
use crate::llc::{HandoverController, LinkState, LlcAction, NetworkAttributes, Permission};
use crate::mipv6::{
    mn_decap, mn_send_via_tunnel, seq_newer, BindingStatus, BindingUpdate, HomeAgent, Intercept, MipError,
    MobileNodeMip,
};
use crate::packet::{Body, Packet};
use crate::radio::{deliver_frame, in_range, Delivery, DropReason, Frame, FrameKind, LinkId, Position, Tuning};
use crate::traffic::{AppPacket, Classification, FlowId, FlowKind, FlowStats, Sink, Spurt, VideoSource, VoipSource};

use super::config::{Application, ScenarioConfig, MN_NODE};
use super::log::EventLog;

const MAC_HEADER_BITS: u64 = 34 * 8;
const BEACON_BITS: u64 = 100 * 8;
const MGMT_BITS: u64 = 34 * 8;
const RS_BITS: u64 = MAC_HEADER_BITS + (40 + 16) * 8;
const RA_BITS: u64 = MAC_HEADER_BITS + (40 + 64) * 8;
const NOISE_FLOOR_DBM: f64 = -95.0;

pub const HA_NODE: NodeId = NodeId(1);
pub const FR_NODE: NodeId = NodeId(2);
pub const CN_NODE: NodeId = NodeId(3);

pub const FORWARD: FlowId = FlowId(0);
pub const REVERSE: FlowId = FlowId(1);

fn ap_node(ap: usize) -> NodeId {
    NodeId(10 + ap as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hop {
    Ha,
    Fr,
    Cn,
    Ap(usize),
}

#[derive(Debug, Clone)]
enum Air {
    Beacon,
    AssocReq,
    AssocResp,
    Disassoc,
    Rs,
    Ra(RouterAdvertisement),
    Data(Packet),
}

impl Air {
    fn kind(&self) -> FrameKind {
        match self {
            Air::Beacon => FrameKind::Beacon,
            Air::AssocReq => FrameKind::AssocRequest,
            Air::AssocResp => FrameKind::AssocResponse,
            Air::Disassoc => FrameKind::Disassoc,
            Air::Rs | Air::Ra(_) | Air::Data(_) => FrameKind::Data,
        }
    }

    fn size_bits(&self) -> u64 {
        match self {
            Air::Beacon => BEACON_BITS,
            Air::AssocReq | Air::AssocResp | Air::Disassoc => MGMT_BITS,
            Air::Rs => RS_BITS,
            Air::Ra(_) => RA_BITS,
            Air::Data(p) => MAC_HEADER_BITS + p.size_bits(),
        }
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Beacon { ap: usize, k: u64 },
    AtStation { iface: IfaceId, ap: usize, msg: Air },
    AtAp { ap: usize, iface: IfaceId, msg: Air },
    Watchdog { iface: IfaceId, ap: usize },
    RaTick { ap: usize },
    RaReply { ap: usize, iface: IfaceId },
    DadDone { iface: IfaceId, addr: Ipv6Address },
    BuRetransmit,
    BindingRefresh,
    Wired { to: Hop, pkt: Packet },
    VideoSend { flow: usize, k: u64 },
    VoipSend { flow: usize, spurt: Spurt, k: u64 },
}

impl Ev {
    fn app_packet(&self) -> Option<&AppPacket> {
        match self {
            Ev::AtStation { msg: Air::Data(p), .. } | Ev::AtAp { msg: Air::Data(p), .. } | Ev::Wired { pkt: p, .. } => {
                p.app()
            }
            _ => None,
        }
    }
}

struct ApRt {
    cfg: crate::radio::ApConfig,
    stations: BTreeSet<IfaceId>,
    router: Hop,
    router_addr: Ipv6Address,
}

enum Source {
    Video(VideoSource),
    Voip(VoipSource),
}

struct Flow {
    sink: Sink,
    next_seq: u64,
    source: Source,
}

/// Runtime invariant counters. Every `*_violations` field must end at zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Counters {
    pub role_checks: u64,
    pub role_exclusivity_violations: u64,
    pub serving_not_associated: u64,
    pub topology_checks: u64,
    pub topology_violations: u64,
    pub binding_freshness_checks: u64,
    pub binding_freshness_violations: u64,
    pub bu_seq_violations: u64,
    pub cn_packets_from_mn: u64,
    pub cn_packets_reverse_tunnelled: u64,
    pub reverse_source_violations: u64,
    pub home_address_mismatch: u64,
    pub events_executed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropRecord {
    pub time: SimTime,
    pub flow: FlowId,
    pub seq: u64,
    pub reason: &'static str,
}

/// Raw state handed to the harness after the run.
pub(crate) struct Finished {
    pub log: EventLog,
    pub counters: Counters,
    pub flows: Vec<(FlowStats, u64, u64)>,
    pub drops: Vec<DropRecord>,
    pub handover_count: u32,
    pub gaps: Vec<f64>,
    pub mean_delay: f64,
}

pub(crate) struct World {
    cfg: ScenarioConfig,
    end: SimTime,
    sched: Scheduler<Ev>,
    log: EventLog,
    aps: Vec<ApRt>,
    llc: HandoverController,
    host: Ipv6Host,
    mip: MobileNodeMip,
    iface_ap: Vec<Option<usize>>,
    watchdogs: BTreeMap<(IfaceId, usize), EventHandle>,
    dad: Vec<Option<EventHandle>>,
    bu_timer: Option<EventHandle>,
    refresh_timer: Option<EventHandle>,
    ha: HomeAgent,
    ha_last_seq: Option<u16>,
    cn: Ipv6Address,
    hoa: Ipv6Address,
    flows: Vec<Flow>,
    counters: Counters,
    drops: Vec<DropRecord>,
    gaps: Vec<f64>,
}

impl World {
    pub(crate) fn new(cfg: ScenarioConfig) -> Self {
        let filters = cfg.interface_filters().expect("validated config");
        let n_ifaces = filters.len() as u32;
        let beacon_interval = cfg.home_ap.beacon_interval.max(cfg.foreign_ap.beacon_interval);
        let start = SimTime::from_secs(cfg.app_start);
        let mk_flow = |stream: StreamId| {
            let source = match cfg.app {
                Application::Video { rate_bps, packet_bits } => {
                    Source::Video(VideoSource::new(rate_bps, packet_bits, start).expect("validated"))
                }
                Application::Voip(v) => {
                    Source::Voip(VoipSource::new(v, RngStream::new(cfg.seed, stream), start).expect("validated"))
                }
            };
            let playout = match cfg.app {
                Application::Voip(v) => v.playout_delay,
                Application::Video { .. } => 0.0,
            };
            Flow {
                sink: Sink::new(cfg.app.kind(), playout),
                next_seq: 0,
                source,
            }
        };
        let flows = vec![mk_flow(StreamId::VoipForward), mk_flow(StreamId::VoipReverse)];
        let aps = vec![
            ApRt {
                cfg: cfg.home_ap.clone(),
                stations: BTreeSet::new(),
                router: Hop::Ha,
                router_addr: cfg.home_agent_address(),
            },
            ApRt {
                cfg: cfg.foreign_ap.clone(),
                stations: BTreeSet::new(),
                router: Hop::Fr,
                router_addr: cfg.foreign_router_address(),
            },
        ];
        World {
            end: SimTime::from_secs(cfg.resolved_sim_time()),
            sched: Scheduler::new(),
            log: EventLog::default(),
            aps,
            llc: HandoverController::new(cfg.scheme, filters, beacon_interval),
            host: Ipv6Host::new(MN_NODE, n_ifaces),
            mip: MobileNodeMip::new(cfg.mip),
            iface_ap: vec![None; n_ifaces as usize],
            watchdogs: BTreeMap::new(),
            dad: vec![None; n_ifaces as usize],
            bu_timer: None,
            refresh_timer: None,
            ha: HomeAgent::new(cfg.home_agent_address()),
            ha_last_seq: None,
            cn: cfg.cn_address,
            hoa: cfg.expected_home_address(),
            flows,
            counters: Counters::default(),
            drops: Vec::new(),
            gaps: Vec::new(),
            cfg,
        }
    }

    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn at(&mut self, t: SimTime, node: NodeId, module: Module, ev: Ev) -> EventHandle {
        self.sched
            .schedule(t, Target::new(node, module), ev)
            .expect("events are never scheduled in the past")
    }

    fn after(&mut self, delay: f64, node: NodeId, module: Module, ev: Ev) -> EventHandle {
        self.sched.schedule_in(delay, Target::new(node, module), ev)
    }

    fn note(&mut self, node: NodeId, module: Module, event: &'static str, fields: Vec<(&'static str, String)>) {
        let t = self.now();
        self.log.push(t, node, module, event, fields);
    }

    fn mn_position(&self) -> Position {
        self.cfg.mobility.position(self.now())
    }

    fn tuning(&self, iface: IfaceId) -> Tuning {
        match self.llc.link_state(iface) {
            LinkState::Idle => Tuning::Scanning,
            LinkState::Permitted(ap) | LinkState::Associated(ap) => {
                let idx = self.ap_index(ap);
                Tuning::Channel(self.aps[idx].cfg.channel)
            }
        }
    }

    fn ap_index(&self, ap: crate::radio::ApId) -> usize {
        self.aps
            .iter()
            .position(|a| a.cfg.ap_id == ap)
            .expect("known access point")
    }

    pub(crate) fn run(mut self) -> Finished {
        for ap in 0..self.aps.len() {
            let t = self.aps[ap].cfg.beacon_time(0);
            self.at(t, ap_node(ap), Module::Radio, Ev::Beacon { ap, k: 0 });
            let ra_at = SimTime::from_secs(self.aps[ap].cfg.beacon_offset);
            self.at(ra_at, ap_node(ap), Module::Ipv6, Ev::RaTick { ap });
        }
        for flow in 0..self.flows.len() {
            self.start_flow(flow);
        }
        let end = self.end;
        while let Some(ev) = self.sched.pop_due(end) {
            self.handle(ev.payload);
        }
        self.finish()
    }

    fn finish(mut self) -> Finished {
        self.counters.events_executed = self.sched.executed();
        let mut in_flight = vec![0u64; self.flows.len()];
        for ev in self.sched.pending_events() {
            if let Some(app) = ev.payload.app_packet() {
                in_flight[app.flow_id.0 as usize] += 1;
            }
        }
        let end = self.end;
        for (i, flow) in self.flows.iter().enumerate() {
            let s = &flow.sink.stats;
            let kind = flow.sink.kind;
            self.log.push(
                end,
                if i == 0 { MN_NODE } else { CN_NODE },
                Module::App,
                "flow_summary",
                vec![
                    ("flow", FlowId(i as u32).to_string()),
                    ("kind", kind.to_string()),
                    ("sent", s.sent.to_string()),
                    ("received", s.received.to_string()),
                    ("late", s.late.to_string()),
                    ("lost", s.lost_in_network.to_string()),
                    ("in_flight", in_flight[i].to_string()),
                ],
            );
        }
        let mut all = FlowStats::default();
        let flows = self
            .flows
            .iter()
            .zip(&in_flight)
            .map(|(f, &inf)| {
                all.merge(&f.sink.stats);
                let unseen = (0..f.sink.stats.sent).filter(|&q| !f.sink.has_seen(q)).count() as u64;
                (f.sink.stats.clone(), inf, unseen)
            })
            .collect();
        Finished {
            handover_count: self.llc.handover_count(),
            mean_delay: all.mean_delay(),
            log: self.log,
            counters: self.counters,
            flows,
            drops: self.drops,
            gaps: self.gaps,
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Beacon { ap, k } => self.on_beacon_tx(ap, k),
            Ev::AtStation { iface, ap, msg } => self.on_station_rx(iface, ap, msg),
            Ev::AtAp { ap, iface, msg } => self.on_ap_rx(ap, iface, msg),
            Ev::Watchdog { iface, ap } => self.on_watchdog(iface, ap),
            Ev::RaTick { ap } => self.on_ra_tick(ap),
            Ev::RaReply { ap, iface } => {
                if self.aps[ap].stations.contains(&iface) {
                    let ra = self.router_advertisement(ap);
                    self.ap_send(ap, iface, Air::Ra(ra));
                }
            }
            Ev::DadDone { iface, addr } => self.on_dad_done(iface, addr),
            Ev::BuRetransmit => self.on_bu_retransmit(),
            Ev::BindingRefresh => self.on_binding_refresh(),
            Ev::Wired { to, pkt } => self.on_wired(to, pkt),
            Ev::VideoSend { flow, k } => self.on_video_send(flow, k),
            Ev::VoipSend { flow, spurt, k } => self.on_voip_send(flow, spurt, k),
        }
    }

    // ---- radio -------------------------------------------------------------

    fn on_beacon_tx(&mut self, ap: usize, k: u64) {
        let pos = self.mn_position();
        let cfg = &self.aps[ap].cfg;
        let reachable = in_range(&pos, cfg, &self.cfg.radio);
        let frame = Frame {
            src: LinkId::Ap(cfg.ap_id),
            dst: LinkId::Station { node: MN_NODE.0, iface: u32::MAX },
            channel: cfg.channel,
            size_bits: BEACON_BITS,
            kind: FrameKind::Beacon,
            payload: (),
        };
        let now = self.now();
        for i in 0..self.iface_ap.len() {
            let iface = IfaceId(i as u32);
            if let Delivery::Arrival(t) = deliver_frame(&frame, now, self.cfg.radio.bitrate_bps, self.tuning(iface), reachable) {
                self.at(t, MN_NODE, Module::Radio, Ev::AtStation { iface, ap, msg: Air::Beacon });
            }
        }
        let next = self.aps[ap].cfg.beacon_time(k + 1);
        if next <= self.end {
            self.at(next, ap_node(ap), Module::Radio, Ev::Beacon { ap, k: k + 1 });
        }
    }

    /// Station to access point.
    fn station_send(&mut self, iface: IfaceId, ap: usize, msg: Air) {
        let pos = self.mn_position();
        let cfg = &self.aps[ap].cfg;
        let frame = Frame {
            src: LinkId::Station { node: MN_NODE.0, iface: iface.0 },
            dst: LinkId::Ap(cfg.ap_id),
            channel: cfg.channel,
            size_bits: msg.size_bits(),
            kind: msg.kind(),
            payload: (),
        };
        let reachable = in_range(&pos, cfg, &self.cfg.radio);
        let ap_tuning = Tuning::Channel(cfg.channel);
        match deliver_frame(&frame, self.now(), self.cfg.radio.bitrate_bps, ap_tuning, reachable) {
            Delivery::Arrival(t) => {
                self.at(t, ap_node(ap), Module::Radio, Ev::AtAp { ap, iface, msg });
            }
            Delivery::Dropped(reason) => self.air_drop(msg, reason),
        }
    }

    /// Access point to station.
    fn ap_send(&mut self, ap: usize, iface: IfaceId, msg: Air) {
        let pos = self.mn_position();
        let cfg = &self.aps[ap].cfg;
        let frame = Frame {
            src: LinkId::Ap(cfg.ap_id),
            dst: LinkId::Station { node: MN_NODE.0, iface: iface.0 },
            channel: cfg.channel,
            size_bits: msg.size_bits(),
            kind: msg.kind(),
            payload: (),
        };
        let reachable = in_range(&pos, cfg, &self.cfg.radio);
        match deliver_frame(&frame, self.now(), self.cfg.radio.bitrate_bps, self.tuning(iface), reachable) {
            Delivery::Arrival(t) => {
                self.at(t, MN_NODE, Module::Radio, Ev::AtStation { iface, ap, msg });
            }
            Delivery::Dropped(reason) => self.air_drop(msg, reason),
        }
    }

    fn air_drop(&mut self, msg: Air, reason: DropReason) {
        if let Air::Data(pkt) = msg {
            let why = match reason {
                DropReason::OutOfRange => "out_of_range",
                DropReason::ChannelMismatch => "channel_mismatch",
            };
            self.drop_packet(&pkt, why);
        }
    }

    fn drop_packet(&mut self, pkt: &Packet, reason: &'static str) {
        let now = self.now();
        match pkt.app() {
            Some(app) => {
                let (flow, seq) = (app.flow_id, app.seq);
                self.flows[flow.0 as usize].sink.stats.lost_in_network += 1;
                self.drops.push(DropRecord { time: now, flow, seq, reason });
                self.note(
                    MN_NODE,
                    Module::App,
                    "drop",
                    vec![("flow", flow.to_string()), ("seq", seq.to_string()), ("reason", reason.into())],
                );
            }
            None => {
                let what = match &pkt.innermost().body {
                    Body::BindingUpdate(_) => "binding_update",
                    Body::BindingAck(_) => "binding_ack",
                    _ => "other",
                };
                self.note(
                    MN_NODE,
                    Module::Ipv6,
                    "drop",
                    vec![("what", what.into()), ("reason", reason.into())],
                );
            }
        }
    }

    fn arm_watchdog(&mut self, iface: IfaceId, ap: usize) {
        if let Some(h) = self.watchdogs.remove(&(iface, ap)) {
            self.sched.cancel(h);
        }
        let wait = (self.cfg.miss_threshold as f64 + 0.5) * self.aps[ap].cfg.beacon_interval;
        let h = self.after(wait, MN_NODE, Module::Llc, Ev::Watchdog { iface, ap });
        self.watchdogs.insert((iface, ap), h);
    }

    fn on_station_rx(&mut self, iface: IfaceId, ap: usize, msg: Air) {
        let ap_id = self.aps[ap].cfg.ap_id;
        let channel = self.aps[ap].cfg.channel;
        let tuned = match self.tuning(iface) {
            Tuning::Channel(c) => c == channel,
            Tuning::Scanning => matches!(msg, Air::Beacon),
            Tuning::Off => false,
        };
        if !tuned {
            self.air_drop(msg, DropReason::ChannelMismatch);
            return;
        }
        match msg {
            Air::Beacon => {
                if !self.llc.allows(iface, ap_id) {
                    return;
                }
                self.arm_watchdog(iface, ap);
                let pos = self.mn_position();
                let rss = self.aps[ap].cfg.rx_power_at(&pos, &self.cfg.radio);
                let attrs = NetworkAttributes {
                    iface_id: iface,
                    ap_id,
                    assigned_address: None,
                    rss_dbm: rss,
                    snr_db: rss - NOISE_FLOOR_DBM,
                    cost_of_service: 0.0,
                    speed_limit: f64::INFINITY,
                    credit: f64::INFINITY,
                    expected_bitrate: self.cfg.radio.bitrate_bps,
                    last_update: self.now(),
                };
                let actions = self.llc.on_beacon(iface, attrs);
                self.apply(actions);
            }
            Air::AssocResp => {
                if self.llc.link_state(iface) == LinkState::Permitted(ap_id) {
                    match self.llc.on_association_confirmed(iface, ap_id) {
                        Ok(actions) => {
                            self.iface_ap[iface.0 as usize] = Some(ap);
                            self.note(MN_NODE, Module::Llc, "associated", vec![("iface", iface.to_string()), ("ap", ap_id.to_string())]);
                            self.apply(actions);
                        }
                        Err(e) => self.note(MN_NODE, Module::Llc, "assoc_error", vec![("error", e.to_string())]),
                    }
                }
            }
            Air::Ra(ra) => {
                if self.llc.link_state(iface) != LinkState::Associated(ap_id) {
                    return;
                }
                self.on_ra(iface, ra);
            }
            Air::Data(pkt) => {
                if self.llc.link_state(iface) != LinkState::Associated(ap_id) {
                    self.drop_packet(&pkt, "not_associated");
                    return;
                }
                self.mn_receive(pkt);
            }
            Air::AssocReq | Air::Disassoc | Air::Rs => {}
        }
    }

    fn on_ap_rx(&mut self, ap: usize, iface: IfaceId, msg: Air) {
        match msg {
            Air::AssocReq => {
                self.aps[ap].stations.insert(iface);
                self.ap_send(ap, iface, Air::AssocResp);
            }
            Air::Disassoc => {
                self.aps[ap].stations.remove(&iface);
            }
            Air::Rs => {
                // The router answers after a round trip over the AP-router link.
                let rtt = 2.0 * self.cfg.wired.ap_latency;
                self.after(rtt, ap_node(ap), Module::Ipv6, Ev::RaReply { ap, iface });
            }
            Air::Data(pkt) => {
                self.counters.topology_checks += 1;
                if pkt.src.prefix != self.aps[ap].cfg.prefix {
                    self.counters.topology_violations += 1;
                    self.note(
                        ap_node(ap),
                        Module::Ipv6,
                        "topology_violation",
                        vec![("src", pkt.src.to_string()), ("network", self.aps[ap].cfg.prefix.to_string())],
                    );
                }
                let router = self.aps[ap].router;
                let delay = self.cfg.wired.ap_latency + pkt.size_bits() as f64 / self.cfg.wired.bitrate_bps;
                self.after(delay, ap_node(ap), Module::Wired, Ev::Wired { to: router, pkt });
            }
            Air::Beacon | Air::AssocResp | Air::Ra(_) => {}
        }
    }

    fn router_advertisement(&self, ap: usize) -> RouterAdvertisement {
        RouterAdvertisement {
            prefix: self.aps[ap].cfg.prefix,
            router: self.aps[ap].router_addr,
            is_home_agent: self.aps[ap].router == Hop::Ha,
            interval: self.cfg.ipv6.ra_interval,
        }
    }

    fn on_ra_tick(&mut self, ap: usize) {
        let ra = self.router_advertisement(ap);
        let stations: Vec<IfaceId> = self.aps[ap].stations.iter().copied().collect();
        for iface in stations {
            self.ap_send(ap, iface, Air::Ra(ra));
        }
        let next = self.now() + self.cfg.ipv6.ra_interval;
        if next <= self.end {
            self.at(next, ap_node(ap), Module::Ipv6, Ev::RaTick { ap });
        }
    }

    // ---- link control ------------------------------------------------------

    fn on_watchdog(&mut self, iface: IfaceId, ap: usize) {
        self.watchdogs.remove(&(iface, ap));
        let ap_id = self.aps[ap].cfg.ap_id;
        self.note(MN_NODE, Module::Llc, "beacon_loss", vec![("iface", iface.to_string()), ("ap", ap_id.to_string())]);
        let now = self.now();
        let actions = self.llc.on_beacon_loss(iface, ap_id, now);
        self.apply(actions);
    }

    fn check_roles(&mut self) {
        self.counters.role_checks += 1;
        let roles = self.llc.roles();
        if !roles.is_exclusive() {
            self.counters.role_exclusivity_violations += 1;
        }
        if let Some(s) = self.llc.serving_interface() {
            if !matches!(self.llc.link_state(s), LinkState::Associated(_)) {
                self.counters.serving_not_associated += 1;
            }
        }
    }

    fn apply(&mut self, actions: Vec<LlcAction>) {
        for action in actions {
            self.apply_one(action);
        }
        self.check_roles();
    }

    fn apply_one(&mut self, action: LlcAction) {
        let now = self.now();
        match action {
            LlcAction::RequestAssociation { iface, ap } => {
                self.note(MN_NODE, Module::Llc, "candidate", vec![("iface", iface.to_string()), ("ap", ap.to_string())]);
                match self.llc.request_association(iface, now) {
                    Permission::Permit => {
                        self.note(MN_NODE, Module::Llc, "permit", vec![("iface", iface.to_string()), ("ap", ap.to_string())]);
                        let idx = self.ap_index(ap);
                        self.station_send(iface, idx, Air::AssocReq);
                    }
                    Permission::Deny(reason) => {
                        self.note(
                            MN_NODE,
                            Module::Llc,
                            "deny",
                            vec![("iface", iface.to_string()), ("reason", format!("{reason:?}").to_lowercase())],
                        );
                    }
                }
            }
            LlcAction::ConfigureNetwork { iface } => {
                if let Some(ap) = self.iface_ap[iface.0 as usize] {
                    self.station_send(iface, ap, Air::Rs);
                }
            }
            LlcAction::Disassociate { iface } => self.disassociate(iface),
            LlcAction::CleanupRoutes { prev, serving } => {
                let removed = self.host.update_routes_after_handover(prev, serving);
                let dangling = self.host.routes().entries().iter().any(|r| r.out_iface == prev);
                self.note(
                    MN_NODE,
                    Module::Ipv6,
                    "routes_cleanup",
                    vec![
                        ("prev", prev.to_string()),
                        ("removed", removed.to_string()),
                        ("dangling", dangling.to_string()),
                    ],
                );
            }
            LlcAction::Promoted { iface, handover, gap } => {
                let addr = self
                    .host
                    .iface(iface)
                    .ok()
                    .and_then(|r| r.care_of_address())
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| "-".into());
                if handover {
                    self.gaps.push(gap);
                }
                self.note(
                    MN_NODE,
                    Module::Llc,
                    "promote",
                    vec![
                        ("iface", iface.to_string()),
                        ("addr", addr),
                        ("handover", handover.to_string()),
                        ("gap", gap.to_string()),
                    ],
                );
            }
            LlcAction::ServingLost { iface } => {
                self.note(MN_NODE, Module::Llc, "serving_lost", vec![("iface", iface.to_string())]);
            }
            LlcAction::SendBindingUpdate { serving } => self.send_binding_update(serving),
            LlcAction::Ignored { iface, reason } => {
                self.note(MN_NODE, Module::Llc, "ignored", vec![("iface", iface.to_string()), ("reason", reason.replace(' ', "_"))]);
            }
        }
    }

    fn disassociate(&mut self, iface: IfaceId) {
        let Some(ap) = self.iface_ap[iface.0 as usize].take() else {
            // Permission granted but association never completed.
            self.note(MN_NODE, Module::Llc, "assoc_abort", vec![("iface", iface.to_string())]);
            return;
        };
        let ap_id = self.aps[ap].cfg.ap_id;
        // The frame leaves on the old channel; the tuning has already moved.
        let pos = self.mn_position();
        let reachable = in_range(&pos, &self.aps[ap].cfg, &self.cfg.radio);
        if reachable {
            let t = self.now() + MGMT_BITS as f64 / self.cfg.radio.bitrate_bps;
            self.at(t, ap_node(ap), Module::Radio, Ev::AtAp { ap, iface, msg: Air::Disassoc });
        }
        if let Some(h) = self.dad[iface.0 as usize].take() {
            self.sched.cancel(h);
        }
        for addr in self.host.link_down(iface) {
            self.note(MN_NODE, Module::Ipv6, "dad_aborted", vec![("iface", iface.to_string()), ("addr", addr.to_string())]);
        }
        self.note(MN_NODE, Module::Llc, "disassociated", vec![("iface", iface.to_string()), ("ap", ap_id.to_string())]);
    }

    // ---- IPv6 --------------------------------------------------------------

    fn on_ra(&mut self, iface: IfaceId, ra: RouterAdvertisement) {
        let out = match self.host.on_router_advertisement(iface, &ra) {
            Ok(o) => o,
            Err(_) => return,
        };
        if out.home_learned {
            let (_, home) = self.host.home_info().expect("just learned");
            if home.home_address != self.hoa {
                self.counters.home_address_mismatch += 1;
            }
            self.note(
                MN_NODE,
                Module::Ipv6,
                "ra_home_learned",
                vec![("iface", iface.to_string()), ("hoa", home.home_address.to_string()), ("ha", home.home_agent.to_string())],
            );
        }
        let Some(prefix) = out.configure else {
            return;
        };
        if let Ok(SlaacOutcome::Tentative(addr)) = self.host.slaac_configure(iface, prefix) {
            self.note(MN_NODE, Module::Ipv6, "slaac", vec![("iface", iface.to_string()), ("addr", addr.to_string())]);
            let now = self.now();
            if let Ok(due) = self.host.start_dad(iface, addr, now, self.cfg.ipv6.dad_duration) {
                self.note(MN_NODE, Module::Ipv6, "dad_start", vec![("iface", iface.to_string()), ("addr", addr.to_string())]);
                let h = self.at(due, MN_NODE, Module::Ipv6, Ev::DadDone { iface, addr });
                if let Some(old) = self.dad[iface.0 as usize].replace(h) {
                    self.sched.cancel(old);
                }
            }
        }
    }

    fn on_dad_done(&mut self, iface: IfaceId, addr: Ipv6Address) {
        self.dad[iface.0 as usize] = None;
        if !self.host.complete_dad(iface, addr) {
            return;
        }
        self.note(MN_NODE, Module::Ipv6, "dad_complete", vec![("iface", iface.to_string()), ("addr", addr.to_string())]);
        let now = self.now();
        let actions = self.llc.on_address_global(iface, addr, now);
        self.apply(actions);
    }

    /// Transmits a datagram from the MN over `iface`.
    fn mn_transmit(&mut self, iface: IfaceId, pkt: Packet) {
        let Some(ap) = self.iface_ap[iface.0 as usize] else {
            self.drop_packet(&pkt, "link_down");
            return;
        };
        if !matches!(self.llc.link_state(iface), LinkState::Associated(_)) {
            self.drop_packet(&pkt, "link_down");
            return;
        }
        self.station_send(iface, ap, Air::Data(pkt));
    }

    fn mn_receive(&mut self, pkt: Packet) {
        let home = self.host.home_info().map(|(_, h)| h);
        let inner = if matches!(pkt.body, Body::Encapsulated(_)) {
            let Some(home) = home else {
                self.drop_packet(&pkt, "no_home_info");
                return;
            };
            let host = &self.host;
            match mn_decap(pkt.clone(), home.home_agent, |a| host.owns(a)) {
                Ok(inner) => inner,
                Err(e) => {
                    let why = match e {
                        MipError::StaleCareOf(_) => "stale_coa",
                        MipError::NotFromHomeAgent(_) => "not_from_ha",
                        _ => "bad_tunnel",
                    };
                    self.drop_packet(&pkt, why);
                    return;
                }
            }
        } else {
            pkt
        };
        let for_me = self.host.owns(inner.dst) || home.is_some_and(|h| h.home_address == inner.dst);
        if !for_me {
            self.drop_packet(&inner, "not_for_me");
            return;
        }
        match &inner.body {
            Body::App(app) => {
                let app = *app;
                self.sink_receive(&app);
            }
            Body::BindingAck(ba) => {
                let ba = *ba;
                self.on_binding_ack(ba);
            }
            _ => {}
        }
    }

    // ---- MIPv6, mobile node side ---------------------------------------------

    fn send_binding_update(&mut self, serving: IfaceId) {
        let Some((_, home)) = self.host.home_info() else {
            return;
        };
        let Some(addr) = self.host.iface(serving).ok().and_then(|r| r.care_of_address()) else {
            return;
        };
        match self.mip.binding_update_for(&home, addr) {
            Some(bu) => {
                self.transmit_bu(bu, "bu_tx");
                self.arm_bu_timer();
            }
            None => {
                if let Some(h) = self.bu_timer.take() {
                    self.sched.cancel(h);
                }
            }
        }
    }

    fn transmit_bu(&mut self, bu: BindingUpdate, event: &'static str) {
        let attempt = self.mip.pending().map_or(1, |p| p.attempts);
        self.note(
            MN_NODE,
            Module::Mipv6,
            event,
            vec![
                ("seq", bu.seq.to_string()),
                ("hoa", bu.hoa.to_string()),
                ("coa", bu.coa.to_string()),
                ("lifetime", bu.lifetime.to_string()),
                ("attempt", attempt.to_string()),
            ],
        );
        let Some(serving) = self.llc.serving_interface() else {
            return;
        };
        let pkt = Packet::new(bu.coa, self.ha.address, Body::BindingUpdate(bu));
        self.mn_transmit(serving, pkt);
    }

    fn arm_bu_timer(&mut self) {
        if let Some(h) = self.bu_timer.take() {
            self.sched.cancel(h);
        }
        let h = self.after(self.cfg.mip.retransmit_interval, MN_NODE, Module::Mipv6, Ev::BuRetransmit);
        self.bu_timer = Some(h);
    }

    fn on_bu_retransmit(&mut self) {
        self.bu_timer = None;
        let had = self.mip.pending().copied();
        match self.mip.on_retransmit_timer() {
            Some(bu) => {
                self.transmit_bu(bu, "bu_retx");
                self.arm_bu_timer();
            }
            None => {
                if let Some(p) = had {
                    self.note(MN_NODE, Module::Mipv6, "bu_give_up", vec![("seq", p.bu.seq.to_string())]);
                }
            }
        }
    }

    fn on_binding_refresh(&mut self) {
        self.refresh_timer = None;
        let Some((_, home)) = self.host.home_info() else {
            return;
        };
        if let Some(bu) = self.mip.refresh(&home) {
            self.transmit_bu(bu, "bu_tx");
            self.arm_bu_timer();
        }
    }

    fn on_binding_ack(&mut self, ba: crate::mipv6::BindingAck) {
        if !self.mip.on_binding_ack(&ba) {
            self.note(MN_NODE, Module::Mipv6, "ba_ignored", vec![("seq", ba.seq.to_string())]);
            return;
        }
        if let Some(h) = self.bu_timer.take() {
            self.sched.cancel(h);
        }
        let registered = self.mip.registered_coa();
        self.note(
            MN_NODE,
            Module::Mipv6,
            "ba_rx",
            vec![
                ("seq", ba.seq.to_string()),
                ("coa", registered.map_or_else(|| "home".into(), |a| a.to_string())),
            ],
        );

        // Binding freshness: the HA now maps the HoA to the serving address.
        self.counters.binding_freshness_checks += 1;
        let now = self.now();
        let serving_addr = self
            .llc
            .serving_interface()
            .and_then(|s| self.host.iface(s).ok())
            .and_then(|r| r.care_of_address());
        let cached = self.ha.cache.lookup(ba.hoa, now).map(|e| e.coa);
        let fresh = match registered {
            Some(coa) => cached == Some(coa) && serving_addr == Some(coa),
            None => cached.is_none() && serving_addr.is_some_and(|a| Some(a.prefix) == self.host.home_info().map(|(_, h)| h.prefix)),
        };
        if !fresh {
            self.counters.binding_freshness_violations += 1;
            self.note(MN_NODE, Module::Mipv6, "stale_binding", vec![("seq", ba.seq.to_string())]);
        }

        if let Some(h) = self.refresh_timer.take() {
            self.sched.cancel(h);
        }
        if registered.is_some() {
            let h = self.after(self.cfg.mip.binding_lifetime / 2.0, MN_NODE, Module::Mipv6, Ev::BindingRefresh);
            self.refresh_timer = Some(h);
        }
    }

    // ---- wired side ----------------------------------------------------------

    fn hop_latency(&self, hop: Hop) -> f64 {
        match hop {
            Hop::Ha => self.cfg.wired.ha_latency,
            Hop::Fr => self.cfg.wired.fr_latency,
            Hop::Cn => self.cfg.wired.cn_latency,
            Hop::Ap(_) => self.cfg.wired.ap_latency,
        }
    }

    fn hop_node(hop: Hop) -> NodeId {
        match hop {
            Hop::Ha => HA_NODE,
            Hop::Fr => FR_NODE,
            Hop::Cn => CN_NODE,
            Hop::Ap(i) => ap_node(i),
        }
    }

    /// Forwards `pkt` from a wired node toward its destination.
    fn forward(&mut self, from: Hop, pkt: Packet) {
        let dst = pkt.dst;
        let to = if dst.prefix == self.cfg.home_ap.prefix {
            Hop::Ha
        } else if dst.prefix == self.cfg.foreign_ap.prefix {
            Hop::Fr
        } else if dst == self.cn {
            Hop::Cn
        } else {
            self.drop_packet(&pkt, "unroutable");
            return;
        };
        let ser = pkt.size_bits() as f64 / self.cfg.wired.bitrate_bps;
        let (to, delay) = if to == from {
            // On-link for this router: down to its access point.
            let ap = if from == Hop::Ha { 0 } else { 1 };
            (Hop::Ap(ap), self.cfg.wired.ap_latency + ser)
        } else {
            (to, self.hop_latency(from) + self.hop_latency(to) + 2.0 * ser)
        };
        self.after(delay, Self::hop_node(from), Module::Wired, Ev::Wired { to, pkt });
    }

    fn on_wired(&mut self, at: Hop, pkt: Packet) {
        match at {
            Hop::Ap(ap) => self.ap_downlink(ap, pkt),
            Hop::Fr => self.forward(Hop::Fr, pkt),
            Hop::Cn => self.cn_receive(pkt),
            Hop::Ha => self.ha_receive(pkt),
        }
    }

    fn ap_downlink(&mut self, ap: usize, pkt: Packet) {
        let dst = pkt.dst;
        let station = self.aps[ap].stations.iter().copied().find(|s| {
            self.host
                .iface(*s)
                .is_ok_and(|r| r.global_addresses().any(|a| a == dst))
        });
        match station {
            Some(iface) => self.ap_send(ap, iface, Air::Data(pkt)),
            None => self.drop_packet(&pkt, "no_neighbor"),
        }
    }

    fn ha_receive(&mut self, pkt: Packet) {
        let now = self.now();
        if pkt.dst == self.ha.address {
            match &pkt.body {
                Body::BindingUpdate(bu) => {
                    let bu = *bu;
                    let ba = self.ha.process_bu(&bu, now);
                    let accepted = ba.status == BindingStatus::Accepted;
                    if accepted {
                        match self.ha_last_seq {
                            Some(last) if bu.seq != last && !seq_newer(bu.seq, last) => {
                                self.counters.bu_seq_violations += 1;
                            }
                            _ => {}
                        }
                        self.ha_last_seq = Some(bu.seq);
                    }
                    self.note(
                        HA_NODE,
                        Module::Mipv6,
                        "bu_rx",
                        vec![
                            ("seq", bu.seq.to_string()),
                            ("coa", bu.coa.to_string()),
                            ("status", format!("{:?}", ba.status).to_lowercase()),
                        ],
                    );
                    let reply = Packet::new(self.ha.address, pkt.src, Body::BindingAck(ba));
                    self.note(HA_NODE, Module::Mipv6, "ba_tx", vec![("seq", ba.seq.to_string()), ("dst", pkt.src.to_string())]);
                    self.ha_route(reply);
                }
                Body::Encapsulated(_) => match self.ha.decapsulate_reverse(pkt.clone(), now) {
                    Ok(inner) => {
                        if inner.app().is_some() {
                            self.counters.cn_packets_reverse_tunnelled += 1;
                        }
                        self.forward(Hop::Ha, inner);
                    }
                    Err(_) => self.drop_packet(&pkt, "reverse_tunnel_rejected"),
                },
                _ => {}
            }
            return;
        }
        self.ha_route(pkt);
    }

    /// Home-agent forwarding: intercepts traffic for bound home addresses.
    fn ha_route(&mut self, pkt: Packet) {
        if pkt.dst.prefix == self.ha.home_prefix {
            let now = self.now();
            match self.ha.intercept(pkt, now) {
                Intercept::Tunnel(t) => self.forward(Hop::Ha, t),
                Intercept::Native(p) => self.forward(Hop::Ha, p),
            }
        } else {
            self.forward(Hop::Ha, pkt);
        }
    }

    fn cn_receive(&mut self, pkt: Packet) {
        let Body::App(app) = &pkt.body else {
            return;
        };
        let app = *app;
        if app.flow_id == REVERSE {
            self.counters.cn_packets_from_mn += 1;
            if pkt.src != self.hoa {
                self.counters.reverse_source_violations += 1;
                self.note(CN_NODE, Module::App, "bad_source", vec![("src", pkt.src.to_string()), ("seq", app.seq.to_string())]);
            }
        }
        self.sink_receive(&app);
    }

    // ---- applications --------------------------------------------------------

    fn start_flow(&mut self, flow: usize) {
        let end = self.end;
        match &mut self.flows[flow].source {
            Source::Video(v) => {
                let t = v.send_time(0);
                if t < end {
                    self.at(t, Self::sender(flow), Module::App, Ev::VideoSend { flow, k: 0 });
                }
            }
            Source::Voip(_) => self.next_spurt(flow),
        }
    }

    fn sender(flow: usize) -> NodeId {
        if flow == FORWARD.0 as usize {
            CN_NODE
        } else {
            MN_NODE
        }
    }

    fn next_spurt(&mut self, flow: usize) {
        let end = self.end;
        let Source::Voip(src) = &mut self.flows[flow].source else {
            return;
        };
        loop {
            let spurt = src.next_spurt();
            if spurt.start >= end {
                return;
            }
            if spurt.packets > 0 {
                self.at(spurt.start, Self::sender(flow), Module::App, Ev::VoipSend { flow, spurt, k: 0 });
                return;
            }
        }
    }

    fn on_video_send(&mut self, flow: usize, k: u64) {
        let Source::Video(v) = self.flows[flow].source else {
            return;
        };
        self.emit(flow, v.packet_bits, 0);
        let next = v.send_time(k + 1);
        if next < self.end {
            self.at(next, Self::sender(flow), Module::App, Ev::VideoSend { flow, k: k + 1 });
        }
    }

    fn on_voip_send(&mut self, flow: usize, spurt: Spurt, k: u64) {
        let Source::Voip(src) = &self.flows[flow].source else {
            return;
        };
        let cfg = *src.config();
        self.emit(flow, cfg.payload_bits(), spurt.index);
        if k + 1 < spurt.packets {
            let t = spurt.packet_time(k + 1, cfg.packetization_interval);
            if t < self.end {
                self.at(t, Self::sender(flow), Module::App, Ev::VoipSend { flow, spurt, k: k + 1 });
            }
        } else {
            self.next_spurt(flow);
        }
    }

    fn emit(&mut self, flow: usize, payload_bits: u64, spurt: u32) {
        let f = &mut self.flows[flow];
        let app = AppPacket {
            flow_id: FlowId(flow as u32),
            seq: f.next_seq,
            payload_bits,
            sent_at: self.sched.now(),
            spurt,
        };
        f.next_seq += 1;
        f.sink.stats.sent += 1;
        if flow == FORWARD.0 as usize {
            let pkt = Packet::new(self.cn, self.hoa, Body::App(app));
            self.forward(Hop::Cn, pkt);
        } else {
            self.mn_send_app(app);
        }
    }

    fn mn_send_app(&mut self, app: AppPacket) {
        let pkt_native = || Packet::new(self.hoa, self.cn, Body::App(app));
        let Some((_, home)) = self.host.home_info() else {
            self.drop_packet(&pkt_native(), "no_home_info");
            return;
        };
        let out = match self.host.route_lookup(self.cn) {
            Ok((_, out)) => out,
            Err(_) => {
                self.drop_packet(&pkt_native(), "unroutable");
                return;
            }
        };
        let Some(rec) = self.host.iface(out).ok() else {
            return;
        };
        let (Some(coa), Some(on_link)) = (rec.care_of_address(), rec.on_link_prefix) else {
            self.drop_packet(&pkt_native(), "no_source_address");
            return;
        };
        let pkt = mn_send_via_tunnel(app, &home, coa, self.cn);
        if pkt.src.prefix != on_link {
            self.counters.topology_violations += 1;
        }
        self.mn_transmit(out, pkt);
    }

    fn sink_receive(&mut self, app: &AppPacket) {
        let now = self.now();
        let flow = app.flow_id.0 as usize;
        let kind = self.flows[flow].sink.kind;
        let class = self.flows[flow].sink.on_receive(app, now);
        match class {
            Classification::Received => {}
            Classification::Late => {
                if kind == FlowKind::Voip {
                    self.note(
                        Self::receiver(flow),
                        Module::App,
                        "late",
                        vec![("flow", app.flow_id.to_string()), ("seq", app.seq.to_string()), ("delay", (now - app.sent_at).to_string())],
                    );
                }
            }
            Classification::Duplicate => {
                self.note(Self::receiver(flow), Module::App, "duplicate", vec![("flow", app.flow_id.to_string()), ("seq", app.seq.to_string())]);
            }
        }
    }

    fn receiver(flow: usize) -> NodeId {
        if flow == FORWARD.0 as usize {
            MN_NODE
        } else {
            CN_NODE
        }
    }
}
