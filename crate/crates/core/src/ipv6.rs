//! Minimal IPv6 host plane: addresses, router advertisement processing,
//! stateless autoconfiguration with duplicate address detection, and the
//! per-node routing table including post-handover cleanup.

use std::fmt;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::engine::{IfaceId, NodeId, SimTime};

/// Upper 64 bits of an IPv6 address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix(pub u64);

impl Prefix {
    pub fn address(self, iid: u64) -> Ipv6Address {
        Ipv6Address { prefix: self, iid }
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/64", self.address(0))
    }
}

impl std::str::FromStr for Prefix {
    type Err = std::net::AddrParseError;

    /// Accepts `2001:db8:1::` or `2001:db8:1::/64`; the low 64 bits are
    /// ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_suffix("/64").unwrap_or(s);
        let addr: Ipv6Addr = s.parse()?;
        Ok(Prefix((u128::from(addr) >> 64) as u64))
    }
}

/// 128-bit IPv6 unicast address split into a 64-bit prefix and a 64-bit
/// interface identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ipv6Address {
    pub prefix: Prefix,
    pub iid: u64,
}

impl Ipv6Address {
    pub fn to_std(self) -> Ipv6Addr {
        Ipv6Addr::from(((self.prefix.0 as u128) << 64) | self.iid as u128)
    }
}

impl From<Ipv6Addr> for Ipv6Address {
    fn from(a: Ipv6Addr) -> Self {
        let bits = u128::from(a);
        Ipv6Address {
            prefix: Prefix((bits >> 64) as u64),
            iid: bits as u64,
        }
    }
}

impl fmt::Display for Ipv6Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_std().fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressScope {
    Tentative,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfiguredAddress {
    pub address: Ipv6Address,
    pub scope: AddressScope,
    /// Completion time of the running DAD, if any.
    pub dad_due: Option<SimTime>,
}

/// Interface identifier for `(node, iface)`: a splitmix64 mix of the pair,
/// stable for the whole run and distinct across interfaces.
pub fn interface_iid(node: NodeId, iface: IfaceId) -> u64 {
    let mut z = ((node.0 as u64) << 32 | iface.0 as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Home network knowledge learned from the home agent's advertisement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomeInfo {
    pub prefix: Prefix,
    pub home_agent: Ipv6Address,
    pub home_address: Ipv6Address,
    pub home_address_scope: AddressScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRecord {
    pub iface_id: IfaceId,
    pub iid: u64,
    pub addresses: Vec<ConfiguredAddress>,
    pub on_link_prefix: Option<Prefix>,
    pub default_router: Option<Ipv6Address>,
    pub home: Option<HomeInfo>,
}

impl InterfaceRecord {
    pub fn new(node: NodeId, iface_id: IfaceId) -> Self {
        InterfaceRecord {
            iface_id,
            iid: interface_iid(node, iface_id),
            addresses: Vec::new(),
            on_link_prefix: None,
            default_router: None,
            home: None,
        }
    }

    pub fn global_addresses(&self) -> impl Iterator<Item = Ipv6Address> + '_ {
        self.addresses
            .iter()
            .filter(|a| a.scope == AddressScope::Global)
            .map(|a| a.address)
    }

    /// Global address on the current on-link prefix.
    pub fn care_of_address(&self) -> Option<Ipv6Address> {
        let prefix = self.on_link_prefix?;
        self.global_addresses().find(|a| a.prefix == prefix)
    }

    fn find_mut(&mut self, addr: Ipv6Address) -> Option<&mut ConfiguredAddress> {
        self.addresses.iter_mut().find(|a| a.address == addr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Prefix(Prefix),
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextHop {
    OnLink,
    Router(Ipv6Address),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteEntry {
    pub destination: Destination,
    pub next_hop: NextHop,
    pub out_iface: IfaceId,
}

/// Ordered route list. Lookups prefer a prefix match over the default
/// route; among equal matches the earliest-installed entry wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTable {
    entries: Vec<RouteEntry>,
}

impl RoutingTable {
    pub fn entries(&self) -> &[RouteEntry] {
        &self.entries
    }

    /// Installs `entry` unless an identical one exists. Returns true if added.
    pub fn add(&mut self, entry: RouteEntry) -> bool {
        if self.entries.contains(&entry) {
            return false;
        }
        self.entries.push(entry);
        true
    }

    pub fn remove_iface(&mut self, iface: IfaceId) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| e.out_iface != iface);
        before - self.entries.len()
    }

    pub fn lookup(&self, dst: Ipv6Address) -> Result<(NextHop, IfaceId), Ipv6Error> {
        let specific = self
            .entries
            .iter()
            .find(|e| e.destination == Destination::Prefix(dst.prefix));
        let entry = specific.or_else(|| {
            self.entries
                .iter()
                .find(|e| e.destination == Destination::Default)
        });
        entry
            .map(|e| (e.next_hop, e.out_iface))
            .ok_or(Ipv6Error::Unroutable(dst))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouterAdvertisement {
    pub prefix: Prefix,
    pub router: Ipv6Address,
    pub is_home_agent: bool,
    pub interval: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum Ipv6Error {
    #[error("no route to {0}")]
    Unroutable(Ipv6Address),
    #[error("unknown interface {0}")]
    UnknownInterface(IfaceId),
    #[error("address {addr} on {iface} is not tentative")]
    NotTentative { iface: IfaceId, addr: Ipv6Address },
    #[error("address {addr} is not configured on {iface}")]
    NoSuchAddress { iface: IfaceId, addr: Ipv6Address },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RaOutcome {
    pub home_learned: bool,
    pub routes_added: usize,
    /// Prefix that still needs autoconfiguration on this interface.
    pub configure: Option<Prefix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaacOutcome {
    /// Newly added tentative address; DAD must be started.
    Tentative(Ipv6Address),
    /// Already configured (tentative with DAD running, or global).
    Existing(Ipv6Address),
}

impl SlaacOutcome {
    pub fn address(self) -> Ipv6Address {
        match self {
            SlaacOutcome::Tentative(a) | SlaacOutcome::Existing(a) => a,
        }
    }
}

/// IPv6 state of one node: interface records plus the routing table.
#[derive(Debug, Clone)]
pub struct Ipv6Host {
    pub node: NodeId,
    interfaces: Vec<InterfaceRecord>,
    routes: RoutingTable,
}

impl Ipv6Host {
    pub fn new(node: NodeId, iface_count: u32) -> Self {
        Ipv6Host {
            node,
            interfaces: (0..iface_count)
                .map(|i| InterfaceRecord::new(node, IfaceId(i)))
                .collect(),
            routes: RoutingTable::default(),
        }
    }

    pub fn interfaces(&self) -> &[InterfaceRecord] {
        &self.interfaces
    }

    pub fn iface(&self, iface: IfaceId) -> Result<&InterfaceRecord, Ipv6Error> {
        self.interfaces
            .get(iface.0 as usize)
            .ok_or(Ipv6Error::UnknownInterface(iface))
    }

    fn iface_mut(&mut self, iface: IfaceId) -> Result<&mut InterfaceRecord, Ipv6Error> {
        self.interfaces
            .get_mut(iface.0 as usize)
            .ok_or(Ipv6Error::UnknownInterface(iface))
    }

    pub fn routes(&self) -> &RoutingTable {
        &self.routes
    }

    /// Home information, wherever it is currently stored.
    pub fn home_info(&self) -> Option<(IfaceId, HomeInfo)> {
        self.interfaces
            .iter()
            .find_map(|r| r.home.map(|h| (r.iface_id, h)))
    }

    /// Processes an RA received on `iface`. The caller discards RAs on
    /// interfaces that are not associated at the link layer.
    ///
    /// The first advertisement flagged as coming from the home agent makes
    /// this node "at home": the home prefix, home agent address and a
    /// tentative home address are recorded on the receiving interface.
    pub fn on_router_advertisement(
        &mut self,
        iface: IfaceId,
        ra: &RouterAdvertisement,
    ) -> Result<RaOutcome, Ipv6Error> {
        let knows_home = self.home_info().is_some();
        let rec = self.iface_mut(iface)?;
        rec.on_link_prefix = Some(ra.prefix);
        rec.default_router = Some(ra.router);
        let mut out = RaOutcome::default();
        if ra.is_home_agent && !knows_home {
            rec.home = Some(HomeInfo {
                prefix: ra.prefix,
                home_agent: ra.router,
                home_address: ra.prefix.address(rec.iid),
                home_address_scope: AddressScope::Tentative,
            });
            out.home_learned = true;
        }
        if !rec.addresses.iter().any(|a| a.address.prefix == ra.prefix) {
            out.configure = Some(ra.prefix);
        }
        let on_link = RouteEntry {
            destination: Destination::Prefix(ra.prefix),
            next_hop: NextHop::OnLink,
            out_iface: iface,
        };
        let default = RouteEntry {
            destination: Destination::Default,
            next_hop: NextHop::Router(ra.router),
            out_iface: iface,
        };
        out.routes_added = self.routes.add(on_link) as usize + self.routes.add(default) as usize;
        Ok(out)
    }

    /// Forms `prefix:iid(iface)`. A new address starts tentative.
    pub fn slaac_configure(&mut self, iface: IfaceId, prefix: Prefix) -> Result<SlaacOutcome, Ipv6Error> {
        let rec = self.iface_mut(iface)?;
        let addr = prefix.address(rec.iid);
        if rec.find_mut(addr).is_some() {
            return Ok(SlaacOutcome::Existing(addr));
        }
        rec.addresses.push(ConfiguredAddress {
            address: addr,
            scope: AddressScope::Tentative,
            dad_due: None,
        });
        Ok(SlaacOutcome::Tentative(addr))
    }

    /// Marks DAD as running on a tentative address; returns its completion
    /// time `now + duration`.
    pub fn start_dad(
        &mut self,
        iface: IfaceId,
        addr: Ipv6Address,
        now: SimTime,
        duration: f64,
    ) -> Result<SimTime, Ipv6Error> {
        let rec = self.iface_mut(iface)?;
        let entry = rec
            .find_mut(addr)
            .ok_or(Ipv6Error::NoSuchAddress { iface, addr })?;
        if entry.scope != AddressScope::Tentative {
            return Err(Ipv6Error::NotTentative { iface, addr });
        }
        let due = now + duration;
        entry.dad_due = Some(due);
        Ok(due)
    }

    /// Completes DAD: the address becomes global. Returns false when the
    /// DAD was cancelled in the meantime (address gone or not tentative).
    pub fn complete_dad(&mut self, iface: IfaceId, addr: Ipv6Address) -> bool {
        let Ok(rec) = self.iface_mut(iface) else {
            return false;
        };
        let is_home = rec.home.is_some_and(|h| h.home_address == addr);
        let done = match rec.find_mut(addr) {
            Some(entry) if entry.scope == AddressScope::Tentative && entry.dad_due.is_some() => {
                entry.scope = AddressScope::Global;
                entry.dad_due = None;
                true
            }
            _ => false,
        };
        if done && is_home {
            if let Some(h) = rec.home.as_mut() {
                h.home_address_scope = AddressScope::Global;
            }
        }
        done
    }

    /// Link-layer disassociation: drops every address on the interface
    /// (cancelling any DAD in progress) and the on-link information.
    /// Returns the addresses whose DAD was aborted.
    pub fn link_down(&mut self, iface: IfaceId) -> Vec<Ipv6Address> {
        let Ok(rec) = self.iface_mut(iface) else {
            return Vec::new();
        };
        let aborted = rec
            .addresses
            .iter()
            .filter(|a| a.scope == AddressScope::Tentative)
            .map(|a| a.address)
            .collect();
        rec.addresses.clear();
        rec.on_link_prefix = None;
        rec.default_router = None;
        aborted
    }

    /// Removes every route through `prev_iface` and its non-home addresses,
    /// and moves the home information to `serving` if given. Returns the
    /// number of routes removed.
    pub fn update_routes_after_handover(&mut self, prev_iface: IfaceId, serving: Option<IfaceId>) -> usize {
        let removed = self.routes.remove_iface(prev_iface);
        let Ok(rec) = self.iface_mut(prev_iface) else {
            return removed;
        };
        let home_addr = rec.home.map(|h| h.home_address);
        rec.addresses.retain(|a| Some(a.address) == home_addr);
        if let Some(to) = serving.filter(|s| *s != prev_iface) {
            if let Some(home) = rec.home.take() {
                if let Ok(dst) = self.iface_mut(to) {
                    dst.home = Some(home);
                }
            }
        }
        removed
    }

    pub fn route_lookup(&self, dst: Ipv6Address) -> Result<(NextHop, IfaceId), Ipv6Error> {
        self.routes.lookup(dst)
    }

    /// True if `addr` is a global address of any interface.
    pub fn owns(&self, addr: Ipv6Address) -> bool {
        self.interfaces
            .iter()
            .any(|r| r.global_addresses().any(|a| a == addr))
    }
}
