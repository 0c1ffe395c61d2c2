//! Compiles topologies into per-node MAC ingress filters and renders them as
//! iptables scripts for real nodes.
//!
//! Each node accepts wireless frames only from its neighbors' source MACs and
//! drops every other wireless frame. The wired control interface is always
//! accepted so a bad topology cannot cut the controller off from a node.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;
use crate::registry::Registry;
use crate::topology::{Topology, TopologyError};

/// Interface carrying the control plane on every node.
pub const WIRED_IFNAME: &str = "eth0";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("topology has {topology} nodes but the registry has {registry}")]
    DimensionMismatch { topology: usize, registry: usize },
    #[error("topology {seq} is not an accepted topology; use force to apply it anyway")]
    RejectedTopology { seq: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "mac")]
pub enum FilterRule {
    AcceptSourceMac(MacAddr),
    DropAllWireless,
}

/// Ordered ingress filter of one node. Accept rules come first, followed by a
/// single terminal drop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ruleset {
    pub owner: String,
    pub rules: Vec<FilterRule>,
    pub topology_seq: u32,
}

impl Ruleset {
    /// First matching rule wins; a ruleset without a terminal drop accepts by
    /// default.
    pub fn accepts(&self, src: MacAddr) -> bool {
        for rule in &self.rules {
            match *rule {
                FilterRule::AcceptSourceMac(mac) if mac == src => return true,
                FilterRule::AcceptSourceMac(_) => {}
                FilterRule::DropAllWireless => return false,
            }
        }
        true
    }

    pub fn accepted_macs(&self) -> impl Iterator<Item = MacAddr> + '_ {
        self.rules.iter().filter_map(|r| match r {
            FilterRule::AcceptSourceMac(mac) => Some(*mac),
            FilterRule::DropAllWireless => None,
        })
    }
}

/// One ruleset per registry node, in index order. Topologies that are not
/// accepted compile only with `force`.
pub fn compile(topology: &Topology, registry: &Registry, force: bool) -> Result<Vec<Ruleset>, RuleError> {
    let m = &topology.adjacency;
    if m.len() != registry.len() {
        return Err(RuleError::DimensionMismatch { topology: m.len(), registry: registry.len() });
    }
    m.validate()?;
    if !topology.is_accepted() && !force {
        return Err(RuleError::RejectedTopology { seq: topology.seq });
    }
    let nodes = registry.nodes();
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(i, owner)| {
            let mut rules: Vec<FilterRule> =
                m.neighbors(i).map(|j| FilterRule::AcceptSourceMac(nodes[j].wireless_mac)).collect();
            rules.push(FilterRule::DropAllWireless);
            Ruleset { owner: owner.name.clone(), rules, topology_seq: topology.seq }
        })
        .collect())
}

/// Renders a ruleset as a shell script. The script flushes INPUT first, so
/// applying it twice leaves the same state.
pub fn emit_script(ruleset: &Ruleset, wireless_ifname: &str) -> String {
    let mut out = String::new();
    out.push_str("iptables -F INPUT\n");
    let _ = writeln!(out, "iptables -A INPUT -i {WIRED_IFNAME} -j ACCEPT");
    for rule in &ruleset.rules {
        match rule {
            FilterRule::AcceptSourceMac(mac) => {
                let _ = writeln!(out, "iptables -A INPUT -i {wireless_ifname} -m mac --mac-source {mac} -j ACCEPT");
            }
            FilterRule::DropAllWireless => {
                let _ = writeln!(out, "iptables -A INPUT -i {wireless_ifname} -j DROP");
            }
        }
    }
    out
}

/// Inverse of [`emit_script`]. Returns the recovered ruleset and the wireless
/// interface name found in the script.
pub fn parse_script(text: &str, owner: &str, topology_seq: u32) -> Result<(Ruleset, String), RuleError> {
    let err = |line: usize, message: String| RuleError::Script { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let expect = |got: Option<(usize, &str)>, want: &str| match got {
        Some((_, l)) if l == want => Ok(()),
        Some((n, l)) => Err(err(n, format!("expected `{want}`, found `{l}`"))),
        None => Err(err(0, format!("missing `{want}`"))),
    };
    expect(lines.next(), "iptables -F INPUT")?;
    expect(lines.next(), &format!("iptables -A INPUT -i {WIRED_IFNAME} -j ACCEPT"))?;
    let mut rules = Vec::new();
    let mut ifname: Option<String> = None;
    for (n, line) in lines {
        if rules.last() == Some(&FilterRule::DropAllWireless) {
            return Err(err(n, "rule after terminal DROP".into()));
        }
        let words: Vec<&str> = line.split(' ').collect();
        let (iface, rule) = match words[..] {
            ["iptables", "-A", "INPUT", "-i", iface, "-m", "mac", "--mac-source", mac, "-j", "ACCEPT"] => {
                let mac = mac.parse::<MacAddr>().map_err(|e| err(n, e.to_string()))?;
                (iface, FilterRule::AcceptSourceMac(mac))
            }
            ["iptables", "-A", "INPUT", "-i", iface, "-j", "DROP"] => (iface, FilterRule::DropAllWireless),
            _ => return Err(err(n, format!("unrecognised rule `{line}`"))),
        };
        match &ifname {
            Some(known) if known != iface => return Err(err(n, format!("interface `{iface}` differs from `{known}`"))),
            Some(_) => {}
            None => ifname = Some(iface.to_string()),
        }
        rules.push(rule);
    }
    if rules.last() != Some(&FilterRule::DropAllWireless) {
        return Err(err(text.lines().count(), "script does not end with a wireless DROP".into()));
    }
    Ok((Ruleset { owner: owner.to_string(), rules, topology_seq }, ifname.unwrap_or_default()))
}

/// Ordered pairs `(i, j)` where `i` accepts `j`'s MAC but `j` does not accept
/// `i`'s. Rulesets are matched to registry nodes by owner name.
pub fn symmetric_check(rulesets: &[Ruleset], registry: &Registry) -> Vec<(String, String)> {
    let ruleset_of = |name: &str| rulesets.iter().find(|r| r.owner == name);
    let mut violations = Vec::new();
    for rs in rulesets {
        let Some(me) = registry.by_name(&rs.owner) else { continue };
        for mac in rs.accepted_macs() {
            let Some(peer) = registry.index_of_wireless_mac(mac).and_then(|j| registry.get(j)) else {
                continue;
            };
            let reciprocal = ruleset_of(&peer.name).is_some_and(|p| p.accepts(me.wireless_mac));
            if !reciprocal {
                violations.push((me.name.clone(), peer.name.clone()));
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::tests::node;
    use crate::topology::{AdjacencyMatrix, Status};

    fn trio() -> Registry {
        let mut r = Registry::new();
        for (i, n) in ["sai", "pritu", "nitin"].iter().enumerate() {
            r.add_node(node(i as u8 + 1, n)).unwrap();
        }
        r
    }

    fn accepted(m: AdjacencyMatrix) -> Topology {
        Topology { adjacency: m, status: Some(Status::Accepted100), seq: 0 }
    }

    #[test]
    fn single_edge_fixture() {
        let reg = trio();
        let mac = |i: usize| reg.get(i).unwrap().wireless_mac;
        let t =
            Topology { adjacency: AdjacencyMatrix::from_edges(3, &[(0, 1)]), status: Some(Status::Rejected99), seq: 2 };
        assert_eq!(compile(&t, &reg, false), Err(RuleError::RejectedTopology { seq: 2 }));
        let rs = compile(&t, &reg, true).unwrap();
        assert_eq!(rs[0].rules, vec![FilterRule::AcceptSourceMac(mac(1)), FilterRule::DropAllWireless]);
        assert_eq!(rs[1].rules, vec![FilterRule::AcceptSourceMac(mac(0)), FilterRule::DropAllWireless]);
        assert_eq!(rs[2].rules, vec![FilterRule::DropAllWireless]);
        assert_eq!(rs[2].owner, "nitin");
        assert!(rs.iter().all(|r| r.topology_seq == 2));
    }

    #[test]
    fn single_node_and_complete_graph() {
        let mut one = Registry::new();
        one.add_node(node(1, "solo")).unwrap();
        let rs = compile(&accepted(AdjacencyMatrix::zeros(1)), &one, false).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].rules, vec![FilterRule::DropAllWireless]);

        let reg = trio();
        let rs = compile(&accepted(AdjacencyMatrix::complete(3)), &reg, false).unwrap();
        let mac = |i: usize| FilterRule::AcceptSourceMac(reg.get(i).unwrap().wireless_mac);
        assert_eq!(rs[0].rules, vec![mac(1), mac(2), FilterRule::DropAllWireless]);
        assert_eq!(rs[1].rules, vec![mac(0), mac(2), FilterRule::DropAllWireless]);
        assert_eq!(rs[2].rules, vec![mac(0), mac(1), FilterRule::DropAllWireless]);
        assert!(symmetric_check(&rs, &reg).is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let reg = trio();
        assert_eq!(
            compile(&accepted(AdjacencyMatrix::zeros(2)), &reg, false),
            Err(RuleError::DimensionMismatch { topology: 2, registry: 3 })
        );
    }

    #[test]
    fn script_line_count_and_round_trip() {
        let owner_mac: MacAddr = "02:00:00:00:ff:ff".parse().unwrap();
        let mut rules: Vec<FilterRule> =
            (0..149u16).map(|i| FilterRule::AcceptSourceMac(MacAddr([2, 0, 0, 0, (i >> 8) as u8, i as u8]))).collect();
        rules.push(FilterRule::DropAllWireless);
        let rs = Ruleset { owner: "hub".into(), rules, topology_seq: 7 };
        assert!(!rs.accepted_macs().any(|m| m == owner_mac));
        let script = emit_script(&rs, "wlan0");
        assert_eq!(script.lines().count(), 152);
        assert!(script.lines().nth(2).unwrap().ends_with("--mac-source 02:00:00:00:00:00 -j ACCEPT"));
        let (back, ifname) = parse_script(&script, "hub", 7).unwrap();
        assert_eq!(back, rs);
        assert_eq!(ifname, "wlan0");
    }

    #[test]
    fn parse_script_rejects_garbage() {
        assert!(parse_script("", "x", 0).is_err());
        let no_drop = "iptables -F INPUT\niptables -A INPUT -i eth0 -j ACCEPT\n";
        assert!(parse_script(no_drop, "x", 0).is_err());
        let after_drop = format!("{no_drop}iptables -A INPUT -i ath0 -j DROP\niptables -A INPUT -i ath0 -j DROP\n");
        assert!(parse_script(&after_drop, "x", 0).is_err());
    }

    #[test]
    fn asymmetric_rulesets_reported() {
        let reg = trio();
        let mac = |i: usize| reg.get(i).unwrap().wireless_mac;
        let rs = vec![
            Ruleset {
                owner: "sai".into(),
                rules: vec![FilterRule::AcceptSourceMac(mac(1)), FilterRule::DropAllWireless],
                topology_seq: 0,
            },
            Ruleset { owner: "pritu".into(), rules: vec![FilterRule::DropAllWireless], topology_seq: 0 },
            Ruleset { owner: "nitin".into(), rules: vec![FilterRule::DropAllWireless], topology_seq: 0 },
        ];
        assert_eq!(symmetric_check(&rs, &reg), vec![("sai".to_string(), "pritu".to_string())]);
        assert!(symmetric_check(&[], &Registry::new()).is_empty());
    }
}
