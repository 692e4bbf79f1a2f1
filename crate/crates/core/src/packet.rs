//! Network-layer packet representation shared by the IPv6, MIPv6 and
//! traffic modules.

use crate::ipv6::Ipv6Address;
use crate::mipv6::{BindingAck, BindingUpdate};
use crate::traffic::AppPacket;

/// Fixed IPv6 header, bits.
pub const IPV6_HEADER_BITS: u64 = 40 * 8;
/// Binding update mobility header plus home address option, bits.
pub const BINDING_UPDATE_BITS: u64 = 48 * 8;
/// Binding acknowledgement mobility header, bits.
pub const BINDING_ACK_BITS: u64 = 32 * 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    App(AppPacket),
    BindingUpdate(BindingUpdate),
    BindingAck(BindingAck),
    /// IPv6-in-IPv6: the whole inner datagram.
    Encapsulated(Box<Packet>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src: Ipv6Address,
    pub dst: Ipv6Address,
    pub body: Body,
}

impl Packet {
    pub fn new(src: Ipv6Address, dst: Ipv6Address, body: Body) -> Self {
        Packet { src, dst, body }
    }

    pub fn size_bits(&self) -> u64 {
        IPV6_HEADER_BITS
            + match &self.body {
                Body::App(app) => app.payload_bits,
                Body::BindingUpdate(_) => BINDING_UPDATE_BITS,
                Body::BindingAck(_) => BINDING_ACK_BITS,
                Body::Encapsulated(inner) => inner.size_bits(),
            }
    }

    /// The application payload, looking through any tunnel layers.
    pub fn app(&self) -> Option<&AppPacket> {
        match &self.body {
            Body::App(app) => Some(app),
            Body::Encapsulated(inner) => inner.app(),
            _ => None,
        }
    }

    /// Innermost datagram.
    pub fn innermost(&self) -> &Packet {
        match &self.body {
            Body::Encapsulated(inner) => inner.innermost(),
            _ => self,
        }
    }
}
