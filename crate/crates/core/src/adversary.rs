//! Malicious actions: protocol-scoped traffic blocking, the periodic loss
//! attack and raw hex frame injection.
//!
//! Attacks never touch a node's ruleset. They are installed in the medium as
//! overlays that are consulted before the ruleset.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::MacAddr;
use crate::emu::Protocol;
use crate::registry::is_valid_name;

const US_PER_S: u64 = 1_000_000;

/// Smallest frame accepted for injection: destination MAC, source MAC and
/// ethertype.
pub const MIN_FRAME_LEN: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdversaryError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("attack `{0}` already exists")]
    DuplicateAttack(String),
    #[error("unknown attack `{0}`")]
    UnknownAttack(String),
    #[error("bad hex: {0}")]
    BadHex(String),
    #[error("frame of {0} bytes is shorter than the {MIN_FRAME_LEN}-byte header")]
    FrameTooShort(usize),
    #[error("invalid attack: {0}")]
    Invalid(String),
    #[error("attack list line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttackProtocol {
    Tcp,
    Udp,
    Icmp,
    All,
}

impl AttackProtocol {
    pub fn matches(self, protocol: Protocol) -> bool {
        match self {
            AttackProtocol::All => true,
            AttackProtocol::Tcp => protocol == Protocol::Tcp,
            AttackProtocol::Udp => protocol == Protocol::Udp,
            AttackProtocol::Icmp => protocol == Protocol::Icmp,
        }
    }
}

impl fmt::Display for AttackProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackProtocol::Tcp => "TCP",
            AttackProtocol::Udp => "UDP",
            AttackProtocol::Icmp => "ICMP",
            AttackProtocol::All => "ALL",
        })
    }
}

impl FromStr for AttackProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TCP" => Ok(AttackProtocol::Tcp),
            "UDP" => Ok(AttackProtocol::Udp),
            "ICMP" => Ok(AttackProtocol::Icmp),
            "ALL" => Ok(AttackProtocol::All),
            _ => Err(format!("unknown protocol `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    BlockIncoming,
    BlockOutgoing,
    BlockBoth,
    PeriodicLoss,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BlockIncoming" => Ok(AttackKind::BlockIncoming),
            "BlockOutgoing" => Ok(AttackKind::BlockOutgoing),
            "BlockBoth" => Ok(AttackKind::BlockBoth),
            "PeriodicLoss" => Ok(AttackKind::PeriodicLoss),
            _ => Err(format!("unknown attack kind `{s}`")),
        }
    }
}

fn default_loss_s() -> u32 {
    5
}
fn default_normal_s() -> u32 {
    35
}
fn default_cycles() -> u32 {
    10
}

/// A named attack. The periodic-loss defaults give 5 s of loss followed by
/// 35 s of normal operation, repeated 10 times (400 s in total).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub name: String,
    pub target: String,
    pub protocol: AttackProtocol,
    pub kind: AttackKind,
    #[serde(default = "default_loss_s")]
    pub loss_dur_s: u32,
    #[serde(default = "default_normal_s")]
    pub normal_dur_s: u32,
    #[serde(default = "default_cycles")]
    pub cycles: u32,
}

impl AttackSpec {
    pub fn new(name: &str, target: &str, protocol: AttackProtocol, kind: AttackKind) -> Self {
        Self {
            name: name.to_string(),
            target: target.to_string(),
            protocol,
            kind,
            loss_dur_s: default_loss_s(),
            normal_dur_s: default_normal_s(),
            cycles: default_cycles(),
        }
    }

    pub fn validate(&self) -> Result<(), AdversaryError> {
        if !is_valid_name(&self.name) {
            return Err(AdversaryError::Invalid(format!("bad attack name `{}`", self.name)));
        }
        if self.kind == AttackKind::PeriodicLoss && (self.loss_dur_s == 0 || self.cycles == 0) {
            return Err(AdversaryError::Invalid("periodic loss needs a nonzero loss duration and cycle count".into()));
        }
        Ok(())
    }

    /// Total lifetime of a periodic-loss attack; `None` for blocking attacks,
    /// which last until stopped.
    pub fn lifetime_us(&self) -> Option<u64> {
        (self.kind == AttackKind::PeriodicLoss)
            .then(|| u64::from(self.cycles) * u64::from(self.loss_dur_s + self.normal_dur_s) * US_PER_S)
    }

    pub fn effect(&self, launched_at: u64) -> Effect {
        match self.kind {
            AttackKind::BlockIncoming => Effect::Block { incoming: true, outgoing: false },
            AttackKind::BlockOutgoing => Effect::Block { incoming: false, outgoing: true },
            AttackKind::BlockBoth => Effect::Block { incoming: true, outgoing: true },
            AttackKind::PeriodicLoss => Effect::PeriodicLoss {
                start: launched_at,
                loss_us: u64::from(self.loss_dur_s) * US_PER_S,
                period_us: u64::from(self.loss_dur_s + self.normal_dur_s) * US_PER_S,
                cycles: u64::from(self.cycles),
            },
        }
    }
}

/// Whether time `rel_us` after launch falls inside a loss window
/// `[k·period, k·period + loss)` for some `k < cycles`.
pub fn in_loss_window(rel_us: u64, loss_us: u64, period_us: u64, cycles: u64) -> bool {
    period_us > 0 && rel_us / period_us < cycles && rel_us % period_us < loss_us
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Block {
        incoming: bool,
        outgoing: bool,
    },
    /// Drops in both directions while a frame's send time is in a window.
    PeriodicLoss {
        start: u64,
        loss_us: u64,
        period_us: u64,
        cycles: u64,
    },
}

/// One installed attack effect on a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlay {
    pub attack_id: u64,
    pub attack_name: String,
    pub protocol: AttackProtocol,
    pub effect: Effect,
}

impl Overlay {
    pub fn drops(&self, protocol: Protocol, direction: Direction, send_time: u64) -> bool {
        if !self.protocol.matches(protocol) {
            return false;
        }
        match self.effect {
            Effect::Block { incoming, outgoing } => match direction {
                Direction::Incoming => incoming,
                Direction::Outgoing => outgoing,
            },
            Effect::PeriodicLoss { start, loss_us, period_us, cycles } => {
                send_time.checked_sub(start).is_some_and(|rel| in_loss_window(rel, loss_us, period_us, cycles))
            }
        }
    }
}

/// A one-shot raw frame, written as hex, sent with the wireless identity of
/// a registered node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    pub hex: String,
    pub as_node: String,
}

impl InjectionSpec {
    pub fn decode(&self) -> Result<Vec<u8>, AdversaryError> {
        let digits: String = self.hex.chars().filter(|c| !c.is_whitespace()).collect();
        if !digits.len().is_multiple_of(2) {
            return Err(AdversaryError::BadHex(format!("odd number of digits ({})", digits.len())));
        }
        let bytes = hex::decode(&digits).map_err(|e| AdversaryError::BadHex(e.to_string()))?;
        if bytes.len() < MIN_FRAME_LEN {
            return Err(AdversaryError::FrameTooShort(bytes.len()));
        }
        Ok(bytes)
    }

    /// Destination MAC carried in the first six bytes of the frame.
    pub fn destination(bytes: &[u8]) -> MacAddr {
        let mut mac = [0u8; 6];
        mac.copy_from_slice(&bytes[..6]);
        MacAddr(mac)
    }
}

/// Saved attacks, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackBook {
    attacks: Vec<AttackSpec>,
}

impl AttackBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn save(&mut self, spec: AttackSpec) -> Result<(), AdversaryError> {
        spec.validate()?;
        if self.get(&spec.name).is_some() {
            return Err(AdversaryError::DuplicateAttack(spec.name));
        }
        self.attacks.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AttackSpec> {
        self.attacks.iter().find(|a| a.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.attacks.iter().map(|a| a.name.clone()).collect()
    }

    pub fn specs(&self) -> &[AttackSpec] {
        &self.attacks
    }

    /// `name target protocol kind [loss_s normal_s cycles]`, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.attacks {
            let _ = write!(out, "{} {} {} {}", a.name, a.target, a.protocol, a.kind);
            if a.kind == AttackKind::PeriodicLoss {
                let _ = write!(out, " {} {} {}", a.loss_dur_s, a.normal_dur_s, a.cycles);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AdversaryError> {
        let mut book = AttackBook::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| AdversaryError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (head, timing) = match fields.len() {
                4 => (&fields[..4], None),
                7 => (&fields[..4], Some(&fields[4..])),
                n => return Err(parse_err(format!("expected 4 or 7 fields, found {n}"))),
            };
            let mut spec = AttackSpec::new(
                head[0],
                head[1],
                head[2].parse().map_err(parse_err)?,
                head[3].parse().map_err(parse_err)?,
            );
            if let Some(t) = timing {
                let num = |s: &str| s.parse::<u32>().map_err(|_| parse_err(format!("bad number `{s}`")));
                spec.loss_dur_s = num(t[0])?;
                spec.normal_dur_s = num(t[1])?;
                spec.cycles = num(t[2])?;
            }
            book.save(spec).map_err(|e| match e {
                AdversaryError::Invalid(message) => parse_err(message),
                other => other,
            })?;
        }
        Ok(book)
    }
}
