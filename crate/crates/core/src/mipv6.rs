//! Mobile IPv6: the home agent's binding cache, binding update and
//! acknowledgement handling on both ends, home-agent interception and the
//! bidirectional IPv6-in-IPv6 tunnel.
//!
//! Traffic always triangulates through the home agent. When the mobile node
//! originates traffic while away, the inner datagram carries the home
//! address as its source so that the correspondent replies via the home
//! network.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::SimTime;
use crate::ipv6::{HomeInfo, Ipv6Address, Prefix};
use crate::packet::{Body, Packet};
use crate::traffic::AppPacket;

/// RFC 1982 serial comparison on 16-bit sequence numbers.
pub fn seq_newer(a: u16, b: u16) -> bool {
    (a.wrapping_sub(b) as i16) > 0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingUpdate {
    pub hoa: Ipv6Address,
    pub coa: Ipv6Address,
    pub seq: u16,
    /// Seconds; zero deregisters.
    pub lifetime: f64,
}

impl BindingUpdate {
    pub fn is_deregistration(&self) -> bool {
        self.lifetime == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingStatus {
    Accepted,
    RejectedStale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingAck {
    pub hoa: Ipv6Address,
    pub seq: u16,
    pub status: BindingStatus,
    pub lifetime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingCacheEntry {
    pub hoa: Ipv6Address,
    pub coa: Ipv6Address,
    pub seq: u16,
    pub lifetime: f64,
    pub created_at: SimTime,
}

impl BindingCacheEntry {
    pub fn expires_at(&self) -> f64 {
        self.created_at.as_secs() + self.lifetime
    }
}

/// Home-agent binding cache. The last accepted sequence number per home
/// address outlives deregistration so that replays stay rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingCache {
    entries: BTreeMap<Ipv6Address, BindingCacheEntry>,
    last_seq: BTreeMap<Ipv6Address, u16>,
}

impl BindingCache {
    pub fn purge_expired(&mut self, now: SimTime) {
        self.entries.retain(|_, e| e.expires_at() > now.as_secs());
    }

    pub fn lookup(&mut self, hoa: Ipv6Address, now: SimTime) -> Option<BindingCacheEntry> {
        self.purge_expired(now);
        self.entries.get(&hoa).copied()
    }

    /// Current entries without expiry processing.
    pub fn entries(&self) -> impl Iterator<Item = &BindingCacheEntry> {
        self.entries.values()
    }

    pub fn process(&mut self, bu: &BindingUpdate, now: SimTime) -> BindingAck {
        self.purge_expired(now);
        let ack = |status| BindingAck {
            hoa: bu.hoa,
            seq: bu.seq,
            status,
            lifetime: bu.lifetime,
        };
        if let Some(&last) = self.last_seq.get(&bu.hoa) {
            if !seq_newer(bu.seq, last) {
                // A retransmission of the update already applied is re-acked.
                let current = self.entries.get(&bu.hoa);
                let duplicate = bu.seq == last
                    && match current {
                        Some(e) => !bu.is_deregistration() && e.coa == bu.coa,
                        None => bu.is_deregistration(),
                    };
                return ack(if duplicate {
                    BindingStatus::Accepted
                } else {
                    BindingStatus::RejectedStale
                });
            }
        }
        self.last_seq.insert(bu.hoa, bu.seq);
        if bu.is_deregistration() {
            self.entries.remove(&bu.hoa);
        } else {
            self.entries.insert(
                bu.hoa,
                BindingCacheEntry {
                    hoa: bu.hoa,
                    coa: bu.coa,
                    seq: bu.seq,
                    lifetime: bu.lifetime,
                    created_at: now,
                },
            );
        }
        ack(BindingStatus::Accepted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunnelHeader {
    pub outer_src: Ipv6Address,
    pub outer_dst: Ipv6Address,
}

#[derive(Debug, Error, PartialEq)]
pub enum MipError {
    #[error("packet carries no encapsulated datagram")]
    NotTunneled,
    #[error("tunnel endpoint {0} is not a current address of this node")]
    StaleCareOf(Ipv6Address),
    #[error("tunnel source {0} is not the home agent")]
    NotFromHomeAgent(Ipv6Address),
    #[error("reverse-tunnelled packet from {coa} does not match the binding of {hoa}")]
    NoMatchingBinding { hoa: Ipv6Address, coa: Ipv6Address },
}

pub fn encapsulate(header: TunnelHeader, inner: Packet) -> Packet {
    Packet::new(header.outer_src, header.outer_dst, Body::Encapsulated(Box::new(inner)))
}

pub fn decapsulate(pkt: Packet) -> Result<(TunnelHeader, Packet), MipError> {
    match pkt.body {
        Body::Encapsulated(inner) => Ok((
            TunnelHeader {
                outer_src: pkt.src,
                outer_dst: pkt.dst,
            },
            *inner,
        )),
        _ => Err(MipError::NotTunneled),
    }
}

/// What the home agent does with a datagram addressed into the home prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum Intercept {
    /// Bound: tunnelled to the care-of address.
    Tunnel(Packet),
    /// Not bound: deliver on the home link.
    Native(Packet),
}

#[derive(Debug, Clone)]
pub struct HomeAgent {
    pub address: Ipv6Address,
    pub home_prefix: Prefix,
    pub cache: BindingCache,
}

impl HomeAgent {
    pub fn new(address: Ipv6Address) -> Self {
        HomeAgent {
            address,
            home_prefix: address.prefix,
            cache: BindingCache::default(),
        }
    }

    pub fn process_bu(&mut self, bu: &BindingUpdate, now: SimTime) -> BindingAck {
        self.cache.process(bu, now)
    }

    pub fn intercept(&mut self, pkt: Packet, now: SimTime) -> Intercept {
        match self.cache.lookup(pkt.dst, now) {
            Some(entry) => Intercept::Tunnel(encapsulate(
                TunnelHeader {
                    outer_src: self.address,
                    outer_dst: entry.coa,
                },
                pkt,
            )),
            None => Intercept::Native(pkt),
        }
    }

    /// Terminates the reverse tunnel; the outer source must be the
    /// registered care-of address of the inner source.
    pub fn decapsulate_reverse(&mut self, pkt: Packet, now: SimTime) -> Result<Packet, MipError> {
        let (hdr, inner) = decapsulate(pkt)?;
        match self.cache.lookup(inner.src, now) {
            Some(e) if e.coa == hdr.outer_src => Ok(inner),
            _ => Err(MipError::NoMatchingBinding {
                hoa: inner.src,
                coa: hdr.outer_src,
            }),
        }
    }
}

/// Builds the datagram for an application packet leaving the mobile node.
/// Away from home it is reverse-tunnelled with the home address as the inner
/// source; at home it goes out natively.
pub fn mn_send_via_tunnel(app: AppPacket, home: &HomeInfo, coa: Ipv6Address, cn: Ipv6Address) -> Packet {
    let inner = Packet::new(home.home_address, cn, Body::App(app));
    if coa.prefix == home.prefix {
        inner
    } else {
        encapsulate(
            TunnelHeader {
                outer_src: coa,
                outer_dst: home.home_agent,
            },
            inner,
        )
    }
}

/// Unwraps a forward-tunnelled datagram at the mobile node.
pub fn mn_decap(
    pkt: Packet,
    home_agent: Ipv6Address,
    owns: impl Fn(Ipv6Address) -> bool,
) -> Result<Packet, MipError> {
    let (hdr, inner) = decapsulate(pkt)?;
    if !owns(hdr.outer_dst) {
        return Err(MipError::StaleCareOf(hdr.outer_dst));
    }
    if hdr.outer_src != home_agent {
        return Err(MipError::NotFromHomeAgent(hdr.outer_src));
    }
    Ok(inner)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MipParams {
    pub binding_lifetime: f64,
    pub retransmit_interval: f64,
    pub max_attempts: u32,
}

impl Default for MipParams {
    fn default() -> Self {
        MipParams {
            binding_lifetime: 420.0,
            retransmit_interval: 1.0,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingUpdate {
    pub bu: BindingUpdate,
    pub attempts: u32,
}

/// Mobile-node side of binding management.
#[derive(Debug, Clone, Default)]
pub struct MobileNodeMip {
    pub params: MipParams,
    last_seq: u16,
    pending: Option<PendingUpdate>,
    /// Care-of address acknowledged by the home agent; None while at home.
    registered: Option<Ipv6Address>,
}

impl MobileNodeMip {
    pub fn new(params: MipParams) -> Self {
        MobileNodeMip {
            params,
            ..Default::default()
        }
    }

    pub fn registered_coa(&self) -> Option<Ipv6Address> {
        self.registered
    }

    pub fn pending(&self) -> Option<&PendingUpdate> {
        self.pending.as_ref()
    }

    /// Builds the update for a newly serving address, or None when at home
    /// with nothing registered. The caller transmits it.
    pub fn binding_update_for(&mut self, home: &HomeInfo, serving: Ipv6Address) -> Option<BindingUpdate> {
        let at_home = serving.prefix == home.prefix;
        let was_away = self.registered.is_some()
            || self.pending.is_some_and(|p| !p.bu.is_deregistration());
        if at_home && !was_away {
            self.pending = None;
            return None;
        }
        self.last_seq = self.last_seq.wrapping_add(1);
        let bu = BindingUpdate {
            hoa: home.home_address,
            coa: if at_home { home.home_address } else { serving },
            seq: self.last_seq,
            lifetime: if at_home { 0.0 } else { self.params.binding_lifetime },
        };
        self.pending = Some(PendingUpdate { bu, attempts: 1 });
        Some(bu)
    }

    /// Retransmission timer fired: the same update again, while attempts
    /// remain.
    pub fn on_retransmit_timer(&mut self) -> Option<BindingUpdate> {
        let max = self.params.max_attempts;
        let p = self.pending.as_mut()?;
        if p.attempts >= max {
            self.pending = None;
            return None;
        }
        p.attempts += 1;
        Some(p.bu)
    }

    /// Returns true if the ack completes the pending update.
    pub fn on_binding_ack(&mut self, ba: &BindingAck) -> bool {
        let Some(p) = self.pending else {
            return false;
        };
        if ba.seq != p.bu.seq || ba.status != BindingStatus::Accepted {
            return false;
        }
        self.registered = (!p.bu.is_deregistration()).then_some(p.bu.coa);
        self.pending = None;
        true
    }

    /// Refresh at half-life of the registered binding.
    pub fn refresh(&mut self, home: &HomeInfo) -> Option<BindingUpdate> {
        let coa = self.registered?;
        if self.pending.is_some() {
            return None;
        }
        self.binding_update_for(home, coa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ipv6::AddressScope;
    use crate::traffic::FlowId;

    const HOME: Prefix = Prefix(0x2001_0db8_0001_0000);
    const FOREIGN: Prefix = Prefix(0x2001_0db8_0002_0000);

    fn hoa() -> Ipv6Address {
        HOME.address(0xaa)
    }

    fn ha() -> Ipv6Address {
        HOME.address(1)
    }

    fn cn() -> Ipv6Address {
        Prefix(0x2001_0db8_00ff_0000).address(0x10)
    }

    fn home() -> HomeInfo {
        HomeInfo {
            prefix: HOME,
            home_agent: ha(),
            home_address: hoa(),
            home_address_scope: AddressScope::Global,
        }
    }

    fn bu(coa: Ipv6Address, seq: u16, lifetime: f64) -> BindingUpdate {
        BindingUpdate {
            hoa: hoa(),
            coa,
            seq,
            lifetime,
        }
    }

    fn app(seq: u64) -> AppPacket {
        AppPacket {
            flow_id: FlowId(0),
            seq,
            payload_bits: 1280,
            sent_at: SimTime::ZERO,
            spurt: 0,
        }
    }

    #[test]
    fn fresh_bu_creates_binding() {
        let mut c = BindingCache::default();
        let ba = c.process(&bu(FOREIGN.address(5), 1, 420.0), SimTime::ZERO);
        assert_eq!(ba.status, BindingStatus::Accepted);
        assert_eq!(ba.seq, 1);
        assert_eq!(c.lookup(hoa(), SimTime::ZERO).unwrap().coa, FOREIGN.address(5));
    }

    #[test]
    fn stale_seq_is_rejected() {
        let mut c = BindingCache::default();
        c.process(&bu(FOREIGN.address(5), 2, 420.0), SimTime::ZERO);
        let ba = c.process(&bu(FOREIGN.address(6), 1, 420.0), SimTime::ZERO);
        assert_eq!(ba.status, BindingStatus::RejectedStale);
        assert_eq!(c.lookup(hoa(), SimTime::ZERO).unwrap().coa, FOREIGN.address(5));
    }

    #[test]
    fn deregistration_removes_entry() {
        let mut ha_node = HomeAgent::new(ha());
        ha_node.process_bu(&bu(FOREIGN.address(5), 1, 420.0), SimTime::ZERO);
        ha_node.process_bu(&bu(hoa(), 2, 0.0), SimTime::ZERO);
        let pkt = Packet::new(cn(), hoa(), Body::App(app(0)));
        assert_eq!(
            ha_node.intercept(pkt.clone(), SimTime::ZERO),
            Intercept::Native(pkt)
        );
    }

    #[test]
    fn expired_binding_is_purged() {
        let mut c = BindingCache::default();
        c.process(&bu(FOREIGN.address(5), 1, 10.0), SimTime::ZERO);
        assert!(c.lookup(hoa(), SimTime::from_secs(9.9)).is_some());
        assert!(c.lookup(hoa(), SimTime::from_secs(10.0)).is_none());
    }

    #[test]
    fn serial_comparison_wraps() {
        assert!(seq_newer(1, 0));
        assert!(seq_newer(0, u16::MAX));
        assert!(!seq_newer(5, 5));
        assert!(!seq_newer(4, 5));
    }

    #[test]
    fn intercept_tunnels_to_coa() {
        let mut h = HomeAgent::new(ha());
        h.process_bu(&bu(FOREIGN.address(5), 1, 420.0), SimTime::ZERO);
        let pkt = Packet::new(cn(), hoa(), Body::App(app(3)));
        let Intercept::Tunnel(t) = h.intercept(pkt.clone(), SimTime::ZERO) else {
            panic!("expected tunnel");
        };
        assert_eq!(t.src, ha());
        assert_eq!(t.dst, FOREIGN.address(5));
        let inner = mn_decap(t, ha(), |a| a == FOREIGN.address(5)).unwrap();
        assert_eq!(inner, pkt);
    }

    #[test]
    fn decap_rejects_stale_coa_and_plain_packets() {
        let pkt = encapsulate(
            TunnelHeader {
                outer_src: ha(),
                outer_dst: FOREIGN.address(5),
            },
            Packet::new(cn(), hoa(), Body::App(app(0))),
        );
        assert_eq!(
            mn_decap(pkt, ha(), |a| a == FOREIGN.address(6)),
            Err(MipError::StaleCareOf(FOREIGN.address(5)))
        );
        let plain = Packet::new(cn(), hoa(), Body::App(app(0)));
        assert_eq!(mn_decap(plain, ha(), |_| true), Err(MipError::NotTunneled));
    }

    #[test]
    fn reverse_tunnel_uses_home_address_inside() {
        let coa = FOREIGN.address(5);
        let pkt = mn_send_via_tunnel(app(1), &home(), coa, cn());
        assert_eq!(pkt.src, coa);
        assert_eq!(pkt.dst, ha());
        let mut h = HomeAgent::new(ha());
        h.process_bu(&bu(coa, 1, 420.0), SimTime::ZERO);
        let inner = h.decapsulate_reverse(pkt, SimTime::ZERO).unwrap();
        assert_eq!(inner.src, hoa());
        assert_eq!(inner.dst, cn());
    }

    #[test]
    fn at_home_sends_natively() {
        let pkt = mn_send_via_tunnel(app(1), &home(), hoa(), cn());
        assert_eq!(pkt.src, hoa());
        assert!(matches!(pkt.body, Body::App(_)));
    }

    #[test]
    fn reverse_tunnel_from_unbound_coa_is_refused() {
        let pkt = mn_send_via_tunnel(app(1), &home(), FOREIGN.address(9), cn());
        let mut h = HomeAgent::new(ha());
        assert!(matches!(
            h.decapsulate_reverse(pkt, SimTime::ZERO),
            Err(MipError::NoMatchingBinding { .. })
        ));
    }

    #[test]
    fn mn_registration_cycle() {
        let mut mn = MobileNodeMip::new(MipParams::default());
        // Initial attach at home: nothing to register.
        assert_eq!(mn.binding_update_for(&home(), hoa()), None);
        let first = mn.binding_update_for(&home(), FOREIGN.address(5)).unwrap();
        assert_eq!((first.seq, first.coa, first.lifetime), (1, FOREIGN.address(5), 420.0));
        let mut h = HomeAgent::new(ha());
        let ba = h.process_bu(&first, SimTime::ZERO);
        assert!(mn.on_binding_ack(&ba));
        assert_eq!(mn.registered_coa(), Some(FOREIGN.address(5)));
        // Back home: deregistration.
        let dereg = mn.binding_update_for(&home(), hoa()).unwrap();
        assert!(dereg.is_deregistration());
        assert_eq!(dereg.seq, 2);
        assert!(mn.on_binding_ack(&h.process_bu(&dereg, SimTime::ZERO)));
        assert_eq!(mn.registered_coa(), None);
    }

    #[test]
    fn retransmission_reuses_seq_and_gives_up() {
        let mut mn = MobileNodeMip::new(MipParams::default());
        let bu1 = mn.binding_update_for(&home(), FOREIGN.address(5)).unwrap();
        assert_eq!(mn.on_retransmit_timer(), Some(bu1));
        assert_eq!(mn.on_retransmit_timer(), Some(bu1));
        assert_eq!(mn.on_retransmit_timer(), None);
        assert!(mn.pending().is_none());
    }

    #[test]
    fn retransmitted_duplicate_is_reacked() {
        let mut c = BindingCache::default();
        let b = bu(FOREIGN.address(5), 1, 420.0);
        c.process(&b, SimTime::ZERO);
        assert_eq!(c.process(&b, SimTime::from_secs(1.0)).status, BindingStatus::Accepted);
    }

    #[test]
    fn roundtrip_identity_on_sample() {
        let p = Packet::new(cn(), hoa(), Body::App(app(42)));
        let hdr = TunnelHeader {
            outer_src: ha(),
            outer_dst: FOREIGN.address(1),
        };
        let (h2, back) = decapsulate(encapsulate(hdr, p.clone())).unwrap();
        assert_eq!(h2, hdr);
        assert_eq!(back, p);
    }
}
