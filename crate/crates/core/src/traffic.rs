//! Constant-rate unidirectional flows between two nodes.

use serde::{Deserialize, Serialize};

use crate::emu::Protocol;

pub const DEFAULT_PAYLOAD_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrafficError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid flow: {0}")]
    InvalidSpec(String),
    #[error("unknown flow {0}")]
    UnknownFlow(u64),
}

fn default_payload_len() -> usize {
    DEFAULT_PAYLOAD_LEN
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub src: String,
    pub dst: String,
    pub protocol: Protocol,
    #[serde(default)]
    pub port: u16,
    /// Virtual milliseconds between consecutive packets.
    pub delay_ms: u64,
    #[serde(default = "default_payload_len")]
    pub payload_len: usize,
    /// `None` sends until stopped.
    #[serde(default)]
    pub count: Option<u64>,
}

impl FlowSpec {
    pub fn new(src: &str, dst: &str, protocol: Protocol, port: u16, delay_ms: u64, count: Option<u64>) -> Self {
        Self {
            src: src.to_string(),
            dst: dst.to_string(),
            protocol,
            port,
            delay_ms,
            payload_len: DEFAULT_PAYLOAD_LEN,
            count,
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let invalid = |m: &str| Err(TrafficError::InvalidSpec(m.to_string()));
        if self.src == self.dst {
            return invalid("source and destination must differ");
        }
        if self.protocol == Protocol::Raw {
            return invalid("flows carry TCP, UDP or ICMP");
        }
        if self.protocol == Protocol::Icmp && self.port != 0 {
            return invalid("ICMP flows use port 0");
        }
        if self.delay_ms == 0 {
            return invalid("delay must be at least 1 ms");
        }
        if self.count == Some(0) {
            return invalid("count must be at least 1");
        }
        Ok(())
    }
}

/// Per-flow delivery accounting. Frames still in the air are
/// `sent - received - dropped_filter - dropped_adversary`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStats {
    pub sent: u64,
    pub received: u64,
    pub dropped_filter: u64,
    pub dropped_adversary: u64,
    pub first_send_us: Option<u64>,
    pub last_send_us: Option<u64>,
}

impl FlowStats {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.received - self.dropped_filter - self.dropped_adversary
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(FlowSpec::new("sai", "pritu", Protocol::Udp, 9000, 100, Some(10)).validate().is_ok());
        assert!(FlowSpec::new("sai", "sai", Protocol::Udp, 9000, 100, None).validate().is_err());
        assert!(FlowSpec::new("sai", "pritu", Protocol::Icmp, 7, 100, None).validate().is_err());
        assert!(FlowSpec::new("sai", "pritu", Protocol::Tcp, 80, 0, None).validate().is_err());
        assert!(FlowSpec::new("sai", "pritu", Protocol::Raw, 0, 10, None).validate().is_err());
        assert!(FlowSpec::new("sai", "pritu", Protocol::Tcp, 80, 10, Some(0)).validate().is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: FlowSpec =
            serde_json::from_str(r#"{"src":"sai","dst":"pritu","protocol":"ICMP","delay_ms":1000}"#).unwrap();
        assert_eq!(spec.port, 0);
        assert_eq!(spec.payload_len, 64);
        assert_eq!(spec.count, None);
        assert!(serde_json::from_str::<FlowSpec>(r#"{"src":"a","dst":"b","protocol":"UDP","delay_ms":1,"rate":3}"#)
            .is_err());
    }
}
