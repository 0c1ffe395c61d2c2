//! The set of nodes the testbed controls.
//!
//! A node's position in the registry is its row/column index in every
//! adjacency matrix, ruleset list and medium node table. Indices only change
//! on `remove_node`, which shifts later nodes down by one.

use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;

/// Registry size above which mutations still succeed but emit a warning.
pub const SOFT_LIMIT: usize = 150;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("address {address} of `{name}` is already used by `{owner}`")]
    DuplicateAddress { name: String, address: String, owner: String },
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Identity of one testbed member.
///
/// The wired pair is the control plane; the wireless pair is the emulated
/// data plane whose frames are filtered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub name: String,
    pub wired_ip: Ipv4Addr,
    pub wired_mac: MacAddr,
    pub wireless_ip: Ipv4Addr,
    pub wireless_mac: MacAddr,
}

impl NodeRecord {
    /// Parses and validates the five textual fields of a record.
    pub fn parse(
        name: &str,
        wired_ip: &str,
        wired_mac: &str,
        wireless_ip: &str,
        wireless_mac: &str,
    ) -> Result<Self, RegistryError> {
        let ip = |s: &str| {
            s.parse::<Ipv4Addr>().map_err(|_| RegistryError::InvalidFormat(format!("invalid IPv4 address `{s}`")))
        };
        let mac = |s: &str| s.parse::<MacAddr>().map_err(|e| RegistryError::InvalidFormat(e.to_string()));
        let record = NodeRecord {
            name: name.to_string(),
            wired_ip: ip(wired_ip)?,
            wired_mac: mac(wired_mac)?,
            wireless_ip: ip(wireless_ip)?,
            wireless_mac: mac(wireless_mac)?,
        };
        record.validate()?;
        Ok(record)
    }

    /// Checks the record on its own, without reference to a registry.
    pub fn validate(&self) -> Result<(), RegistryError> {
        if !is_valid_name(&self.name) {
            return Err(RegistryError::InvalidFormat(format!(
                "node name `{}` must match [A-Za-z0-9_-]{{1,32}}",
                self.name
            )));
        }
        if self.wired_mac == self.wireless_mac {
            return Err(RegistryError::DuplicateAddress {
                name: self.name.clone(),
                address: self.wireless_mac.to_string(),
                owner: self.name.clone(),
            });
        }
        if self.wired_ip == self.wireless_ip {
            return Err(RegistryError::DuplicateAddress {
                name: self.name.clone(),
                address: self.wireless_ip.to_string(),
                owner: self.name.clone(),
            });
        }
        Ok(())
    }

    fn addresses(&self) -> [String; 4] {
        [
            self.wired_ip.to_string(),
            self.wired_mac.to_string(),
            self.wireless_ip.to_string(),
            self.wireless_mac.to_string(),
        ]
    }
}

pub fn is_valid_name(name: &str) -> bool {
    (1..=32).contains(&name.len()) && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Registry {
    nodes: Vec<NodeRecord>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn get(&self, index: usize) -> Option<&NodeRecord> {
        self.nodes.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&NodeRecord> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn index_of_wireless_mac(&self, mac: MacAddr) -> Option<usize> {
        self.nodes.iter().position(|n| n.wireless_mac == mac)
    }

    pub fn names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    pub fn over_soft_limit(&self) -> bool {
        self.nodes.len() > SOFT_LIMIT
    }

    /// Appends a node and returns its index (the previous count).
    pub fn add_node(&mut self, record: NodeRecord) -> Result<usize, RegistryError> {
        record.validate()?;
        if self.index_of(&record.name).is_some() {
            return Err(RegistryError::DuplicateName(record.name));
        }
        let wanted = record.addresses();
        for existing in &self.nodes {
            let taken = existing.addresses();
            if let Some(address) = wanted.iter().find(|a| taken.contains(a)) {
                return Err(RegistryError::DuplicateAddress {
                    name: record.name.clone(),
                    address: address.clone(),
                    owner: existing.name.clone(),
                });
            }
        }
        self.nodes.push(record);
        if self.over_soft_limit() {
            log::warn!("soft limit {SOFT_LIMIT} exceeded: {} nodes registered", self.nodes.len());
        }
        Ok(self.nodes.len() - 1)
    }

    /// Removes a node by name and returns the updated count.
    pub fn remove_node(&mut self, name: &str) -> Result<usize, RegistryError> {
        let index = self.index_of(name).ok_or_else(|| RegistryError::UnknownNode(name.to_string()))?;
        self.nodes.remove(index);
        Ok(self.nodes.len())
    }

    /// Parses the line-oriented registry file.
    pub fn load(text: &str) -> Result<Self, RegistryError> {
        let mut registry = Registry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [name, wired_ip, wired_mac, wireless_ip, wireless_mac] = fields[..] else {
                return Err(RegistryError::Parse {
                    line: i + 1,
                    message: format!("expected 5 fields, found {}", fields.len()),
                });
            };
            let record =
                NodeRecord::parse(name, wired_ip, wired_mac, wireless_ip, wireless_mac).map_err(|e| match e {
                    RegistryError::InvalidFormat(message) => RegistryError::Parse { line: i + 1, message },
                    other => other,
                })?;
            registry.add_node(record)?;
        }
        Ok(registry)
    }

    /// Canonical serialization: registry order, single spaces, trailing newline.
    pub fn save(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "{} {} {} {} {}", n.name, n.wired_ip, n.wired_mac, n.wireless_ip, n.wireless_mac);
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn node(i: u8, name: &str) -> NodeRecord {
        NodeRecord::parse(
            name,
            &format!("10.0.0.{i}"),
            &format!("aa:00:00:00:00:{i:02x}"),
            &format!("192.168.1.{i}"),
            &format!("bb:00:00:00:00:{i:02x}"),
        )
        .unwrap()
    }

    #[test]
    fn first_insertion_gets_index_zero() {
        let mut r = Registry::new();
        assert_eq!(r.add_node(node(1, "sai")).unwrap(), 0);
        assert_eq!(r.add_node(node(2, "pritu")).unwrap(), 1);
    }

    #[test]
    fn duplicate_wireless_mac_rejected() {
        let mut r = Registry::new();
        r.add_node(node(1, "sai")).unwrap();
        let mut dup = node(2, "pritu");
        dup.wireless_mac = node(1, "x").wireless_mac;
        assert!(matches!(
            r.add_node(dup),
            Err(RegistryError::DuplicateAddress { owner, .. }) if owner == "sai"
        ));
    }

    #[test]
    fn duplicate_name_and_self_collision() {
        let mut r = Registry::new();
        r.add_node(node(1, "sai")).unwrap();
        assert_eq!(r.add_node(node(2, "sai")), Err(RegistryError::DuplicateName("sai".into())));
        let mut same = node(3, "nitin");
        same.wired_mac = same.wireless_mac;
        assert!(matches!(r.add_node(same), Err(RegistryError::DuplicateAddress { .. })));
    }

    #[test]
    fn invalid_fields() {
        assert!(matches!(
            NodeRecord::parse("sai", "10.0.0.256", "aa:00:00:00:00:01", "192.168.1.1", "bb:00:00:00:00:01"),
            Err(RegistryError::InvalidFormat(_))
        ));
        assert!(matches!(
            NodeRecord::parse("sai", "10.0.0.01", "aa:00:00:00:00:01", "192.168.1.1", "bb:00:00:00:00:01"),
            Err(RegistryError::InvalidFormat(_))
        ));
        assert!(matches!(
            NodeRecord::parse("bad name", "10.0.0.1", "aa:00:00:00:00:01", "192.168.1.1", "bb:00:00:00:00:01"),
            Err(RegistryError::InvalidFormat(_))
        ));
        assert!(!is_valid_name(&"x".repeat(33)));
        assert!(is_valid_name("node_7-b"));
    }

    #[test]
    fn soft_limit_is_a_warning_not_an_error() {
        let mut r = Registry::new();
        for i in 0..151u32 {
            let rec = NodeRecord::parse(
                &format!("n{i}"),
                &format!("10.0.{}.{}", i / 256, i % 256),
                &format!("aa:00:00:00:{:02x}:{:02x}", i / 256, i % 256),
                &format!("10.1.{}.{}", i / 256, i % 256),
                &format!("bb:00:00:00:{:02x}:{:02x}", i / 256, i % 256),
            )
            .unwrap();
            assert!(!r.over_soft_limit());
            assert_eq!(r.add_node(rec).unwrap(), i as usize);
        }
        assert!(r.over_soft_limit());
    }

    #[test]
    fn remove_shifts_indices() {
        let mut r = Registry::new();
        for (i, n) in ["sai", "pritu", "nitin"].iter().enumerate() {
            r.add_node(node(i as u8 + 1, n)).unwrap();
        }
        assert_eq!(r.remove_node("sai").unwrap(), 2);
        assert_eq!(r.index_of("nitin"), Some(1));
        assert_eq!(r.remove_node("ghost"), Err(RegistryError::UnknownNode("ghost".into())));
    }

    #[test]
    fn load_file() {
        assert_eq!(Registry::load("").unwrap(), Registry::new());
        let text = "# lab bench\n\
                    sai 10.0.0.1 AA:00:00:00:00:01 192.168.1.1 bb:00:00:00:00:01\n\
                    \n\
                    pritu   10.0.0.2 aa:00:00:00:00:02 192.168.1.2 bb:00:00:00:00:02\n\
                    nitin 10.0.0.3 aa:00:00:00:00:03 192.168.1.3 bb:00:00:00:00:03\n";
        let r = Registry::load(text).unwrap();
        assert_eq!(r.names(), ["sai", "pritu", "nitin"]);
        let canonical = r.save();
        assert!(canonical.starts_with("sai 10.0.0.1 aa:00:00:00:00:01 "));
        assert_eq!(Registry::load(&canonical).unwrap(), r);
        assert_eq!(Registry::load(&canonical).unwrap().save(), canonical);
    }

    #[test]
    fn load_reports_line_numbers() {
        let text = "sai 10.0.0.1 aa:00:00:00:00:01 192.168.1.1 bb:00:00:00:00:01\n\
                    pritu 10.0.0.2 aa:00:00:00:00:02 192.168.1.2\n";
        assert!(matches!(Registry::load(text), Err(RegistryError::Parse { line: 2, .. })));
        let text = "\n\nsai 10.0.0.1 zz:00:00:00:00:01 192.168.1.1 bb:00:00:00:00:01\n";
        assert!(matches!(Registry::load(text), Err(RegistryError::Parse { line: 3, .. })));
    }
}
