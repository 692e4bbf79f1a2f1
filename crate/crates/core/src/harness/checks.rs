//! Assertions over a finished run: event-log properties and the runtime
//! counters collected by the world.

use std::collections::BTreeMap;
use std::fmt;

use crate::engine::SimTime;
use crate::llc::HandoverScheme;

use super::log::EventLog;
use super::world::{Counters, DropRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    pub time: Option<SimTime>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.time {
            Some(t) => write!(f, "{} at {}: {}", self.check, t, self.detail),
            None => write!(f, "{}: {}", self.check, self.detail),
        }
    }
}

fn violation(check: &'static str, time: Option<SimTime>, detail: impl Into<String>) -> Violation {
    Violation {
        check,
        time,
        detail: detail.into(),
    }
}

/// Soft scheme: once first attached, the node always has an associated
/// interface. A zero count that is restored at the same instant is not an
/// interval.
pub fn make_before_break(log: &EventLog, end: SimTime) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut count = 0i64;
    let mut attached = false;
    let mut zero_since: Option<SimTime> = None;
    for r in log.records() {
        match r.event {
            "associated" => {
                if let Some(t0) = zero_since.take() {
                    if r.time > t0 {
                        out.push(violation(
                            "make_before_break",
                            Some(t0),
                            format!("no associated interface until {}", r.time),
                        ));
                    }
                }
                count += 1;
                attached = true;
            }
            "disassociated" => {
                count -= 1;
                if attached && count == 0 {
                    zero_since = Some(r.time);
                }
            }
            _ => {}
        }
    }
    if let Some(t0) = zero_since {
        if end > t0 {
            out.push(violation("make_before_break", Some(t0), "no associated interface at end of run"));
        }
    }
    out
}

/// Binding updates leave only from global addresses, and promotions only
/// follow DAD completion on the promoted interface.
pub fn dad_gating(log: &EventLog) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut global_since: BTreeMap<String, SimTime> = BTreeMap::new();
    let mut iface_dad: BTreeMap<String, SimTime> = BTreeMap::new();
    for r in log.records() {
        match r.event {
            "dad_complete" => {
                if let (Some(addr), Some(iface)) = (r.field("addr"), r.field("iface")) {
                    global_since.insert(addr.to_string(), r.time);
                    iface_dad.insert(iface.to_string(), r.time);
                }
            }
            "disassociated" => {
                if let Some(iface) = r.field("iface") {
                    iface_dad.remove(iface);
                }
            }
            "bu_tx" | "bu_retx" => {
                let coa = r.field("coa").unwrap_or("");
                match global_since.get(coa) {
                    Some(t) if *t <= r.time => {}
                    _ => out.push(violation(
                        "dad_gating",
                        Some(r.time),
                        format!("binding update from {coa} before its DAD completed"),
                    )),
                }
            }
            "promote" => {
                let iface = r.field("iface").unwrap_or("");
                match iface_dad.get(iface) {
                    Some(t) if *t <= r.time => {}
                    _ => out.push(violation(
                        "dad_gating",
                        Some(r.time),
                        format!("promotion of {iface} before DAD completed"),
                    )),
                }
            }
            _ => {}
        }
    }
    out
}

/// Soft scheme: the interface released at a handover is released no earlier
/// than the new interface's address went global.
pub fn disassociation_ordering(log: &EventLog) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last_global: BTreeMap<String, SimTime> = BTreeMap::new();
    let mut promoted: Option<(String, SimTime)> = None;
    for r in log.records() {
        match r.event {
            "dad_complete" => {
                if let Some(iface) = r.field("iface") {
                    last_global.insert(iface.to_string(), r.time);
                }
            }
            "promote" if r.field("handover") == Some("true") => {
                promoted = r.field("iface").map(|i| (i.to_string(), r.time));
            }
            "disassociated" => {
                if let Some((new_iface, _)) = promoted.take() {
                    if r.field("iface") == Some(new_iface.as_str()) {
                        continue;
                    }
                    match last_global.get(&new_iface) {
                        Some(t) if *t <= r.time => {}
                        _ => out.push(violation(
                            "disassociation_ordering",
                            Some(r.time),
                            format!("released before {new_iface} went global"),
                        )),
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Handover promotions in the log.
pub fn logged_handovers(log: &EventLog) -> u32 {
    log.events("promote")
        .filter(|r| r.field("handover") == Some("true"))
        .count() as u32
}

/// Soft scheme: every application packet loss happens between a handover
/// promotion and the binding acknowledgement that follows it (plus `slack`
/// for packets the home agent had already tunnelled to the old address).
pub fn loss_localization(log: &EventLog, drops: &[DropRecord], end: SimTime, slack: f64) -> Vec<Violation> {
    let mut windows: Vec<(SimTime, SimTime)> = Vec::new();
    let mut open: Option<SimTime> = None;
    for r in log.records() {
        match r.event {
            "promote" if r.field("handover") == Some("true") => {
                if let Some(start) = open.replace(r.time) {
                    windows.push((start, r.time));
                }
            }
            "ba_rx" => {
                if let Some(start) = open.take() {
                    windows.push((start, r.time + slack));
                }
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        windows.push((start, end));
    }
    drops
        .iter()
        .filter(|d| !windows.iter().any(|(a, b)| d.time >= *a && d.time <= *b))
        .map(|d| {
            violation(
                "loss_localization",
                Some(d.time),
                format!("{} seq {} lost outside any handover window ({})", d.flow, d.seq, d.reason),
            )
        })
        .collect()
}

/// Runtime counters that must be zero.
pub fn counter_violations(c: &Counters) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |name: &'static str, n: u64| {
        if n > 0 {
            out.push(violation(name, None, format!("{n} occurrence(s)")));
        }
    };
    check("role_exclusivity", c.role_exclusivity_violations);
    check("serving_not_associated", c.serving_not_associated);
    check("topological_source", c.topology_violations);
    check("binding_freshness", c.binding_freshness_violations);
    check("bu_sequence_monotonicity", c.bu_seq_violations);
    check("reverse_tunnel_source", c.reverse_source_violations);
    check("home_address", c.home_address_mismatch);
    out
}

/// Every check that applies to `scheme`.
pub fn log_checks(
    scheme: HandoverScheme,
    log: &EventLog,
    drops: &[DropRecord],
    end: SimTime,
    slack: f64,
) -> Vec<Violation> {
    let mut out = dad_gating(log);
    if scheme == HandoverScheme::Soft {
        out.extend(make_before_break(log, end));
        out.extend(disassociation_ordering(log));
        out.extend(loss_localization(log, drops, end, slack));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Module, NodeId};
    use crate::traffic::FlowId;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn push(log: &mut EventLog, time: f64, event: &'static str, fields: &[(&'static str, &str)]) {
        log.push(
            t(time),
            NodeId(0),
            Module::Llc,
            event,
            fields.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        );
    }

    #[test]
    fn gap_between_links_is_flagged() {
        let mut log = EventLog::default();
        push(&mut log, 1.0, "associated", &[("iface", "if0")]);
        push(&mut log, 5.0, "disassociated", &[("iface", "if0")]);
        push(&mut log, 6.0, "associated", &[("iface", "if1")]);
        let v = make_before_break(&log, t(10.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].time, Some(t(5.0)));
    }

    #[test]
    fn overlapping_links_pass() {
        let mut log = EventLog::default();
        push(&mut log, 1.0, "associated", &[("iface", "if0")]);
        push(&mut log, 4.0, "associated", &[("iface", "if1")]);
        push(&mut log, 5.0, "disassociated", &[("iface", "if0")]);
        assert!(make_before_break(&log, t(10.0)).is_empty());
    }

    #[test]
    fn early_binding_update_is_flagged() {
        let mut log = EventLog::default();
        push(&mut log, 1.0, "bu_tx", &[("coa", "2001:db8:2::1")]);
        push(&mut log, 2.0, "dad_complete", &[("iface", "if1"), ("addr", "2001:db8:2::1")]);
        push(&mut log, 2.0, "promote", &[("iface", "if1"), ("handover", "true")]);
        push(&mut log, 2.0, "bu_tx", &[("coa", "2001:db8:2::1")]);
        let v = dad_gating(&log);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].time, Some(t(1.0)));
    }

    #[test]
    fn promotion_without_dad_is_flagged() {
        let mut log = EventLog::default();
        push(&mut log, 2.0, "promote", &[("iface", "if1"), ("handover", "true")]);
        assert_eq!(dad_gating(&log).len(), 1);
    }

    #[test]
    fn loss_outside_windows() {
        let mut log = EventLog::default();
        push(&mut log, 10.0, "promote", &[("iface", "if1"), ("handover", "true")]);
        push(&mut log, 10.01, "ba_rx", &[("seq", "1")]);
        let drop = |time: f64| DropRecord {
            time: t(time),
            flow: FlowId(0),
            seq: 1,
            reason: "no_neighbor",
        };
        let drops = [drop(10.005), drop(10.0105), drop(3.0)];
        let v = loss_localization(&log, &drops, t(100.0), 0.001);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].time, Some(t(3.0)));
    }
}
