//! Link-layer handover controller.
//!
//! The controller owns no data path. Interfaces ask it for permission before
//! associating, it keeps serving/previous/candidate records refreshed from
//! beacons, and in soft mode it releases the serving interface only after the
//! candidate holds a global address (make-before-break). Every call returns
//! the [`LlcAction`]s the node must carry out; the controller itself never
//! touches radios, routes or packets.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::engine::{IfaceId, SimTime};
use crate::ipv6::Ipv6Address;
use crate::radio::ApId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandoverScheme {
    /// Break-before-make on a single interface.
    Hard,
    /// Make-before-break across several interfaces.
    Soft,
}

impl fmt::Display for HandoverScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HandoverScheme::Hard => "hard",
            HandoverScheme::Soft => "soft",
        })
    }
}

impl std::str::FromStr for HandoverScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(HandoverScheme::Hard),
            "soft" => Ok(HandoverScheme::Soft),
            other => Err(format!("unknown handover scheme `{other}` (expected hard|soft)")),
        }
    }
}

/// Per-interface view of a network. `credit`, `cost_of_service`,
/// `speed_limit` and `expected_bitrate` are carried for decision hooks and
/// never interpreted here.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkAttributes {
    pub iface_id: IfaceId,
    pub ap_id: ApId,
    pub assigned_address: Option<Ipv6Address>,
    pub rss_dbm: f64,
    pub snr_db: f64,
    pub cost_of_service: f64,
    pub speed_limit: f64,
    pub credit: f64,
    pub expected_bitrate: f64,
    pub last_update: SimTime,
}

impl NetworkAttributes {
    fn same_network(&self, iface: IfaceId, ap: ApId) -> bool {
        self.iface_id == iface && self.ap_id == ap
    }

    fn refresh_from(&mut self, beacon: &NetworkAttributes) {
        self.rss_dbm = beacon.rss_dbm;
        self.snr_db = beacon.snr_db;
        self.cost_of_service = beacon.cost_of_service;
        self.speed_limit = beacon.speed_limit;
        self.credit = beacon.credit;
        self.expected_bitrate = beacon.expected_bitrate;
        self.last_update = beacon.last_update;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Serving,
    Previous,
    Candidate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleTable {
    pub serving: Option<NetworkAttributes>,
    pub previous: Option<NetworkAttributes>,
    pub candidate: Option<NetworkAttributes>,
}

impl RoleTable {
    pub fn roles_of(&self, iface: IfaceId) -> Vec<Role> {
        [
            (Role::Serving, &self.serving),
            (Role::Previous, &self.previous),
            (Role::Candidate, &self.candidate),
        ]
        .into_iter()
        .filter(|(_, r)| r.as_ref().is_some_and(|a| a.iface_id == iface))
        .map(|(role, _)| role)
        .collect()
    }

    /// True when no interface holds more than one role.
    pub fn is_exclusive(&self) -> bool {
        let ids: Vec<IfaceId> = [&self.serving, &self.previous, &self.candidate]
            .into_iter()
            .flatten()
            .map(|a| a.iface_id)
            .collect();
        ids.iter()
            .enumerate()
            .all(|(i, a)| ids[i + 1..].iter().all(|b| a != b))
    }
}

/// Which access points an interface may associate with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApFilter {
    Any,
    Only(Vec<ApId>),
}

impl ApFilter {
    pub fn allows(&self, ap: ApId) -> bool {
        match self {
            ApFilter::Any => true,
            ApFilter::Only(list) => list.contains(&ap),
        }
    }
}

/// `decide(serving, candidate)` returns true to switch to the candidate.
pub type DecisionHook = Box<dyn Fn(&NetworkAttributes, &NetworkAttributes) -> bool>;

/// Switch whenever a fresh non-serving network shows up.
pub fn always_switch() -> DecisionHook {
    Box::new(|_, _| true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    NoCandidate,
    Stale,
    Declined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permission {
    Permit,
    Deny(DenyReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LlcAction {
    /// The interface management entity should ask for permission to
    /// associate with `ap`.
    RequestAssociation { iface: IfaceId, ap: ApId },
    /// Association completed; start network-layer configuration.
    ConfigureNetwork { iface: IfaceId },
    Disassociate { iface: IfaceId },
    /// Purge routes through `prev` and move home information to `serving`.
    CleanupRoutes { prev: IfaceId, serving: Option<IfaceId> },
    /// `iface` is now serving. `handover` is false for the very first attach;
    /// `gap` is the time spent without any serving interface.
    Promoted { iface: IfaceId, handover: bool, gap: f64 },
    ServingLost { iface: IfaceId },
    SendBindingUpdate { serving: IfaceId },
    Ignored { iface: IfaceId, reason: &'static str },
}

#[derive(Debug, Error, PartialEq)]
pub enum LlcError {
    #[error("association confirmed on {iface} without a permit")]
    NotPermitted { iface: IfaceId },
    #[error("unknown interface {0}")]
    UnknownInterface(IfaceId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Idle,
    Permitted(ApId),
    Associated(ApId),
}

#[derive(Debug, Clone)]
struct Heard {
    /// Set when the network (re)appears; consumed when it becomes candidate.
    eligible: bool,
}

pub struct HandoverController {
    scheme: HandoverScheme,
    filters: Vec<ApFilter>,
    links: Vec<LinkState>,
    roles: RoleTable,
    heard: BTreeMap<(IfaceId, ApId), Heard>,
    beacon_interval: f64,
    decide: DecisionHook,
    ever_attached: bool,
    serving_lost_at: Option<SimTime>,
    handovers: u32,
}

impl fmt::Debug for HandoverController {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HandoverController")
            .field("scheme", &self.scheme)
            .field("links", &self.links)
            .field("roles", &self.roles)
            .field("handovers", &self.handovers)
            .finish_non_exhaustive()
    }
}

/// A candidate is fresh while its last beacon is younger than this many
/// beacon intervals.
pub const FRESHNESS_INTERVALS: f64 = 3.0;

impl HandoverController {
    pub fn new(scheme: HandoverScheme, filters: Vec<ApFilter>, beacon_interval: f64) -> Self {
        Self::with_decision(scheme, filters, beacon_interval, always_switch())
    }

    pub fn with_decision(
        scheme: HandoverScheme,
        filters: Vec<ApFilter>,
        beacon_interval: f64,
        decide: DecisionHook,
    ) -> Self {
        let links = vec![LinkState::Idle; filters.len()];
        HandoverController {
            scheme,
            filters,
            links,
            roles: RoleTable::default(),
            heard: BTreeMap::new(),
            beacon_interval,
            decide,
            ever_attached: false,
            serving_lost_at: None,
            handovers: 0,
        }
    }

    pub fn scheme(&self) -> HandoverScheme {
        self.scheme
    }

    pub fn roles(&self) -> &RoleTable {
        &self.roles
    }

    pub fn link_state(&self, iface: IfaceId) -> LinkState {
        self.links
            .get(iface.0 as usize)
            .copied()
            .unwrap_or(LinkState::Idle)
    }

    pub fn handover_count(&self) -> u32 {
        self.handovers
    }

    pub fn serving_interface(&self) -> Option<IfaceId> {
        self.roles.serving.as_ref().map(|s| s.iface_id)
    }

    pub fn allows(&self, iface: IfaceId, ap: ApId) -> bool {
        self.filters
            .get(iface.0 as usize)
            .is_some_and(|f| f.allows(ap))
    }

    fn link_mut(&mut self, iface: IfaceId) -> &mut LinkState {
        &mut self.links[iface.0 as usize]
    }

    /// Beacon (with the attributes it advertises) heard on `iface`.
    pub fn on_beacon(&mut self, iface: IfaceId, beacon: NetworkAttributes) -> Vec<LlcAction> {
        let ap = beacon.ap_id;
        if !self.allows(iface, ap) {
            return Vec::new();
        }
        let heard = self
            .heard
            .entry((iface, ap))
            .or_insert(Heard { eligible: true });
        let eligible = heard.eligible;

        let mut active = false;
        for rec in [&mut self.roles.serving, &mut self.roles.candidate]
            .into_iter()
            .flatten()
        {
            if rec.same_network(iface, ap) {
                rec.refresh_from(&beacon);
                active = true;
            }
        }
        if let Some(prev) = self.roles.previous.as_mut().filter(|p| p.same_network(iface, ap)) {
            prev.refresh_from(&beacon);
        }
        if active {
            return Vec::new();
        }

        let idle = self.link_state(iface) == LinkState::Idle;
        if !idle || !eligible || self.roles.candidate.is_some() {
            return Vec::new();
        }
        if self.roles.serving.as_ref().is_some_and(|s| s.iface_id == iface) {
            return Vec::new();
        }
        if self.roles.previous.as_ref().is_some_and(|p| p.iface_id == iface) {
            self.roles.previous = None;
        }
        if let Some(h) = self.heard.get_mut(&(iface, ap)) {
            h.eligible = false;
        }
        let mut cand = beacon;
        cand.iface_id = iface;
        cand.assigned_address = None;
        self.roles.candidate = Some(cand);
        vec![LlcAction::RequestAssociation { iface, ap }]
    }

    pub fn request_association(&mut self, iface: IfaceId, now: SimTime) -> Permission {
        let Some(cand) = self.roles.candidate.as_ref().filter(|c| c.iface_id == iface) else {
            return Permission::Deny(DenyReason::NoCandidate);
        };
        if now - cand.last_update >= FRESHNESS_INTERVALS * self.beacon_interval {
            self.roles.candidate = None;
            return Permission::Deny(DenyReason::Stale);
        }
        let permit = match &self.roles.serving {
            None => true,
            Some(serving) => (self.decide)(serving, cand),
        };
        if permit {
            let ap = cand.ap_id;
            *self.link_mut(iface) = LinkState::Permitted(ap);
            Permission::Permit
        } else {
            self.roles.candidate = None;
            Permission::Deny(DenyReason::Declined)
        }
    }

    pub fn on_association_confirmed(&mut self, iface: IfaceId, ap: ApId) -> Result<Vec<LlcAction>, LlcError> {
        if iface.0 as usize >= self.links.len() {
            return Err(LlcError::UnknownInterface(iface));
        }
        match self.link_state(iface) {
            LinkState::Associated(a) if a == ap => Ok(Vec::new()),
            LinkState::Permitted(a) if a == ap => {
                *self.link_mut(iface) = LinkState::Associated(ap);
                Ok(vec![LlcAction::ConfigureNetwork { iface }])
            }
            _ => Err(LlcError::NotPermitted { iface }),
        }
    }

    /// The candidate's address finished DAD. This is the switching point.
    pub fn on_address_global(&mut self, iface: IfaceId, address: Ipv6Address, now: SimTime) -> Vec<LlcAction> {
        let is_candidate = self.roles.candidate.as_ref().is_some_and(|c| {
            c.iface_id == iface && self.link_state(iface) == LinkState::Associated(c.ap_id)
        });
        if !is_candidate {
            return vec![LlcAction::Ignored {
                iface,
                reason: "address-global for an interface that is not a candidate",
            }];
        }
        let mut cand = self.roles.candidate.take().expect("checked");
        cand.assigned_address = Some(address);

        let mut actions = Vec::new();
        let mut gap = 0.0;
        match self.roles.serving.take() {
            Some(old) => {
                let old_iface = old.iface_id;
                *self.link_mut(old_iface) = LinkState::Idle;
                self.roles.previous = Some(old);
                actions.push(LlcAction::Disassociate { iface: old_iface });
                actions.push(LlcAction::CleanupRoutes {
                    prev: old_iface,
                    serving: Some(iface),
                });
            }
            None => {
                if let Some(lost) = self.serving_lost_at.take() {
                    gap = now - lost;
                }
                if let Some(prev) = self.roles.previous.as_ref().filter(|p| p.iface_id != iface) {
                    actions.push(LlcAction::CleanupRoutes {
                        prev: prev.iface_id,
                        serving: Some(iface),
                    });
                }
            }
        }
        self.roles.serving = Some(cand);
        let handover = self.ever_attached;
        self.ever_attached = true;
        if handover {
            self.handovers += 1;
        }
        actions.insert(0, LlcAction::Promoted { iface, handover, gap });
        actions.push(LlcAction::SendBindingUpdate { serving: iface });
        actions
    }

    /// `ap` has not been heard on `iface` for the miss threshold.
    pub fn on_beacon_loss(&mut self, iface: IfaceId, ap: ApId, now: SimTime) -> Vec<LlcAction> {
        self.heard.remove(&(iface, ap));
        let mut actions = Vec::new();
        if self.roles.serving.as_ref().is_some_and(|s| s.same_network(iface, ap)) {
            let old = self.roles.serving.take().expect("checked");
            *self.link_mut(iface) = LinkState::Idle;
            self.roles.previous = Some(old);
            self.serving_lost_at = Some(now);
            actions.push(LlcAction::ServingLost { iface });
            actions.push(LlcAction::Disassociate { iface });
            actions.push(LlcAction::CleanupRoutes { prev: iface, serving: None });
        } else if self.roles.previous.as_ref().is_some_and(|p| p.same_network(iface, ap)) {
            self.roles.previous = None;
        } else if self.roles.candidate.as_ref().is_some_and(|c| c.same_network(iface, ap)) {
            self.roles.candidate = None;
            if self.link_state(iface) != LinkState::Idle {
                *self.link_mut(iface) = LinkState::Idle;
                actions.push(LlcAction::Disassociate { iface });
            }
        }
        actions
    }

    /// Associated interfaces, in index order.
    pub fn associated(&self) -> impl Iterator<Item = IfaceId> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LinkState::Associated(_)))
            .map(|(i, _)| IfaceId(i as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipv6::Prefix;

    const HOME_AP: ApId = ApId(1);
    const FOREIGN_AP: ApId = ApId(2);
    const IF0: IfaceId = IfaceId(0);
    const IF1: IfaceId = IfaceId(1);

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn beacon(iface: IfaceId, ap: ApId, at: f64) -> NetworkAttributes {
        NetworkAttributes {
            iface_id: iface,
            ap_id: ap,
            assigned_address: None,
            rss_dbm: -60.0,
            snr_db: 30.0,
            cost_of_service: 0.0,
            speed_limit: 30.0,
            credit: 0.0,
            expected_bitrate: 2e6,
            last_update: t(at),
        }
    }

    fn soft() -> HandoverController {
        HandoverController::new(
            HandoverScheme::Soft,
            vec![ApFilter::Only(vec![HOME_AP]), ApFilter::Only(vec![FOREIGN_AP])],
            0.1,
        )
    }

    fn hard() -> HandoverController {
        HandoverController::new(HandoverScheme::Hard, vec![ApFilter::Any], 0.1)
    }

    fn addr(n: u64) -> Ipv6Address {
        Prefix(n).address(n)
    }

    /// Drives `iface` from first beacon to serving.
    fn attach(c: &mut HandoverController, iface: IfaceId, ap: ApId, at: f64) -> Vec<LlcAction> {
        let acts = c.on_beacon(iface, beacon(iface, ap, at));
        assert_eq!(acts, vec![LlcAction::RequestAssociation { iface, ap }]);
        assert_eq!(c.request_association(iface, t(at)), Permission::Permit);
        c.on_association_confirmed(iface, ap).unwrap();
        c.on_address_global(iface, addr(ap.0 as u64), t(at + 1.0))
    }

    #[test]
    fn first_beacon_makes_candidate() {
        let mut c = soft();
        let acts = c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 1.0));
        assert_eq!(acts, vec![LlcAction::RequestAssociation { iface: IF1, ap: FOREIGN_AP }]);
        assert_eq!(c.roles().candidate.as_ref().unwrap().iface_id, IF1);
    }

    #[test]
    fn filter_blocks_foreign_ap_on_home_iface() {
        let mut c = soft();
        assert!(c.on_beacon(IF0, beacon(IF0, FOREIGN_AP, 1.0)).is_empty());
        assert!(c.roles().candidate.is_none());
    }

    #[test]
    fn initial_attach_sets_serving_without_handover() {
        let mut c = soft();
        assert_eq!(c.serving_interface(), None);
        let acts = attach(&mut c, IF0, HOME_AP, 0.0);
        assert_eq!(acts[0], LlcAction::Promoted { iface: IF0, handover: false, gap: 0.0 });
        assert!(!acts.iter().any(|a| matches!(a, LlcAction::Disassociate { .. })));
        assert_eq!(c.serving_interface(), Some(IF0));
        assert!(c.roles().previous.is_none());
        assert_eq!(c.handover_count(), 0);
    }

    #[test]
    fn serving_beacon_refreshes_only() {
        let mut c = soft();
        attach(&mut c, IF0, HOME_AP, 0.0);
        let mut b = beacon(IF0, HOME_AP, 2.0);
        b.rss_dbm = -70.0;
        assert!(c.on_beacon(IF0, b).is_empty());
        let s = c.roles().serving.as_ref().unwrap();
        assert_eq!(s.rss_dbm, -70.0);
        assert_eq!(s.last_update, t(2.0));
        assert_eq!(s.assigned_address, Some(addr(1)));
    }

    #[test]
    fn soft_handover_is_make_before_break() {
        let mut c = soft();
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 10.0));
        assert_eq!(c.request_association(IF1, t(10.0)), Permission::Permit);
        let acts = c.on_association_confirmed(IF1, FOREIGN_AP).unwrap();
        assert_eq!(acts, vec![LlcAction::ConfigureNetwork { iface: IF1 }]);
        // Mid-handover the old interface still serves.
        assert_eq!(c.serving_interface(), Some(IF0));
        assert_eq!(c.associated().collect::<Vec<_>>(), vec![IF0, IF1]);

        let acts = c.on_address_global(IF1, addr(2), t(11.0));
        assert_eq!(
            acts,
            vec![
                LlcAction::Promoted { iface: IF1, handover: true, gap: 0.0 },
                LlcAction::Disassociate { iface: IF0 },
                LlcAction::CleanupRoutes { prev: IF0, serving: Some(IF1) },
                LlcAction::SendBindingUpdate { serving: IF1 },
            ]
        );
        assert_eq!(c.serving_interface(), Some(IF1));
        assert_eq!(c.roles().previous.as_ref().unwrap().iface_id, IF0);
        assert!(c.roles().is_exclusive());
        assert_eq!(c.handover_count(), 1);
    }

    #[test]
    fn third_network_is_deferred_while_candidate_busy() {
        let mut c = HandoverController::new(
            HandoverScheme::Soft,
            vec![ApFilter::Any, ApFilter::Any, ApFilter::Any],
            0.1,
        );
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 5.0));
        let acts = c.on_beacon(IfaceId(2), beacon(IfaceId(2), ApId(3), 5.05));
        assert!(acts.is_empty());
        assert_eq!(c.roles().candidate.as_ref().unwrap().iface_id, IF1);
    }

    #[test]
    fn stale_candidate_is_denied() {
        let mut c = soft();
        c.on_beacon(IF0, beacon(IF0, HOME_AP, 0.0));
        assert_eq!(c.request_association(IF0, t(0.35)), Permission::Deny(DenyReason::Stale));
        assert!(c.roles().candidate.is_none());
    }

    #[test]
    fn decision_hook_can_decline() {
        let mut c = HandoverController::with_decision(
            HandoverScheme::Soft,
            vec![ApFilter::Any, ApFilter::Any],
            0.1,
            Box::new(|serving, cand| cand.rss_dbm > serving.rss_dbm + 5.0),
        );
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 3.0));
        assert_eq!(c.request_association(IF1, t(3.0)), Permission::Deny(DenyReason::Declined));
        assert_eq!(c.link_state(IF1), LinkState::Idle);
    }

    #[test]
    fn confirmation_without_permit_is_a_violation() {
        let mut c = soft();
        assert_eq!(
            c.on_association_confirmed(IF1, FOREIGN_AP),
            Err(LlcError::NotPermitted { iface: IF1 })
        );
    }

    #[test]
    fn duplicate_confirmation_is_a_no_op() {
        let mut c = soft();
        c.on_beacon(IF0, beacon(IF0, HOME_AP, 0.0));
        c.request_association(IF0, t(0.0));
        assert_eq!(c.on_association_confirmed(IF0, HOME_AP).unwrap().len(), 1);
        assert!(c.on_association_confirmed(IF0, HOME_AP).unwrap().is_empty());
    }

    #[test]
    fn address_global_for_non_candidate_is_ignored() {
        let mut c = soft();
        let acts = c.on_address_global(IF1, addr(2), t(1.0));
        assert!(matches!(acts[..], [LlcAction::Ignored { iface: IF1, .. }]));
        assert_eq!(c.serving_interface(), None);
    }

    #[test]
    fn hard_beacon_loss_detaches_then_reattaches() {
        let mut c = hard();
        attach(&mut c, IF0, HOME_AP, 0.0);
        // Associated to home: foreign beacons are not heard on the home channel.
        let acts = c.on_beacon_loss(IF0, HOME_AP, t(20.0));
        assert_eq!(
            acts,
            vec![
                LlcAction::ServingLost { iface: IF0 },
                LlcAction::Disassociate { iface: IF0 },
                LlcAction::CleanupRoutes { prev: IF0, serving: None },
            ]
        );
        assert_eq!(c.serving_interface(), None);
        assert_eq!(c.associated().count(), 0);

        c.on_beacon(IF0, beacon(IF0, FOREIGN_AP, 20.05));
        assert!(c.roles().previous.is_none(), "same iface cannot be previous and candidate");
        c.request_association(IF0, t(20.05));
        c.on_association_confirmed(IF0, FOREIGN_AP).unwrap();
        let acts = c.on_address_global(IF0, addr(2), t(21.5));
        match acts[0] {
            LlcAction::Promoted { iface, handover, gap } => {
                assert_eq!(iface, IF0);
                assert!(handover);
                assert!((gap - 1.5).abs() < 1e-9);
            }
            ref other => panic!("unexpected {other:?}"),
        }
        assert!(!acts.iter().any(|a| matches!(a, LlcAction::CleanupRoutes { .. })));
        assert_eq!(c.handover_count(), 1);
    }

    #[test]
    fn loss_on_previous_is_a_no_op() {
        let mut c = soft();
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 10.0));
        c.request_association(IF1, t(10.0));
        c.on_association_confirmed(IF1, FOREIGN_AP).unwrap();
        c.on_address_global(IF1, addr(2), t(11.0));
        assert!(c.on_beacon_loss(IF0, HOME_AP, t(15.0)).is_empty());
        assert!(c.roles().previous.is_none());
        assert_eq!(c.serving_interface(), Some(IF1));
    }

    #[test]
    fn soft_serving_loss_during_dad_records_gap() {
        let mut c = soft();
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 10.0));
        c.request_association(IF1, t(10.0));
        c.on_association_confirmed(IF1, FOREIGN_AP).unwrap();
        // DAD on IF1 would finish at 11.0; home is lost at 10.4.
        let acts = c.on_beacon_loss(IF0, HOME_AP, t(10.4));
        assert!(acts.contains(&LlcAction::ServingLost { iface: IF0 }));
        assert_eq!(c.serving_interface(), None);
        assert_eq!(c.roles().candidate.as_ref().unwrap().iface_id, IF1);
        let acts = c.on_address_global(IF1, addr(2), t(11.0));
        match acts[0] {
            LlcAction::Promoted { gap, handover, .. } => {
                assert!(handover);
                assert!((gap - 0.6).abs() < 1e-9, "gap equals remaining DAD time");
            }
            ref other => panic!("unexpected {other:?}"),
        }
        assert!(acts.contains(&LlcAction::CleanupRoutes { prev: IF0, serving: Some(IF1) }));
    }

    #[test]
    fn left_network_must_disappear_before_reuse() {
        let mut c = soft();
        attach(&mut c, IF0, HOME_AP, 0.0);
        c.on_beacon(IF1, beacon(IF1, FOREIGN_AP, 10.0));
        c.request_association(IF1, t(10.0));
        c.on_association_confirmed(IF1, FOREIGN_AP).unwrap();
        c.on_address_global(IF1, addr(2), t(11.0));
        // Still hearing home in the overlap: no ping-pong request.
        assert!(c.on_beacon(IF0, beacon(IF0, HOME_AP, 11.1)).is_empty());
        c.on_beacon_loss(IF0, HOME_AP, t(20.0));
        let acts = c.on_beacon(IF0, beacon(IF0, HOME_AP, 60.0));
        assert_eq!(acts, vec![LlcAction::RequestAssociation { iface: IF0, ap: HOME_AP }]);
    }
}
