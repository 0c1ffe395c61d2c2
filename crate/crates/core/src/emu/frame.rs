use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;
use crate::registry::NodeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Raw,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Tcp, Protocol::Udp, Protocol::Icmp, Protocol::Raw];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
            Protocol::Icmp => "ICMP",
            Protocol::Raw => "RAW",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TCP" => Ok(Protocol::Tcp),
            "UDP" => Ok(Protocol::Udp),
            "ICMP" => Ok(Protocol::Icmp),
            "RAW" => Ok(Protocol::Raw),
            _ => Err(format!("unknown protocol `{s}`")),
        }
    }
}

/// What the medium does with a frame once it is delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum FrameTag {
    #[default]
    Plain,
    Flow(u64),
    EchoRequest {
        ping: u64,
        seq: u32,
    },
    EchoReply {
        ping: u64,
        seq: u32,
    },
}

/// A wireless data-plane frame. `frame_id` and `send_time` are stamped by the
/// medium on transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_id: u64,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub protocol: Protocol,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub port: u16,
    pub payload: Vec<u8>,
    pub send_time: u64,
    pub(crate) tag: FrameTag,
}

impl Frame {
    pub fn unicast(src: &NodeRecord, dst: &NodeRecord, protocol: Protocol, port: u16, payload: Vec<u8>) -> Self {
        Self {
            frame_id: 0,
            src_mac: src.wireless_mac,
            dst_mac: dst.wireless_mac,
            protocol,
            src_ip: src.wireless_ip,
            dst_ip: dst.wireless_ip,
            port,
            payload,
            send_time: 0,
            tag: FrameTag::Plain,
        }
    }

    pub fn broadcast(src: &NodeRecord, protocol: Protocol, port: u16, payload: Vec<u8>) -> Self {
        Self {
            dst_mac: MacAddr::BROADCAST,
            dst_ip: Ipv4Addr::BROADCAST,
            ..Self::unicast(src, src, protocol, port, payload)
        }
    }

    pub(crate) fn tagged(mut self, tag: FrameTag) -> Self {
        self.tag = tag;
        self
    }
}
