use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraceKind {
    Tx,
    Rx,
    DropFilter,
    DropAdversary,
    Ignored,
    Apply,
    AttackOn,
    AttackOff,
    ExecStart,
    ExecEnd,
    Warning,
    Error,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Tx => "TX",
            TraceKind::Rx => "RX",
            TraceKind::DropFilter => "DROP_FILTER",
            TraceKind::DropAdversary => "DROP_ADVERSARY",
            TraceKind::Ignored => "IGNORED",
            TraceKind::Apply => "APPLY",
            TraceKind::AttackOn => "ATTACK_ON",
            TraceKind::AttackOff => "ATTACK_OFF",
            TraceKind::ExecStart => "EXEC_START",
            TraceKind::ExecEnd => "EXEC_END",
            TraceKind::Warning => "WARNING",
            TraceKind::Error => "ERROR",
        }
    }

    /// Events that change testbed state rather than report traffic.
    pub fn is_mutation(self) -> bool {
        matches!(self, TraceKind::Tx | TraceKind::Apply | TraceKind::AttackOn | TraceKind::AttackOff)
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the event trace: `<virtual_us> <KIND> <fields…>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub virtual_us: u64,
    pub kind: TraceKind,
    /// Space-separated `key=value` fields.
    pub fields: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.virtual_us, self.kind)?;
        if !self.fields.is_empty() {
            write!(f, " {}", self.fields)?;
        }
        Ok(())
    }
}

/// Append-only event log.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, virtual_us: u64, kind: TraceKind, fields: String) {
        self.events.push(TraceEvent { virtual_us, kind, fields });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn since(&self, index: usize) -> &[TraceEvent] {
        &self.events[index.min(self.events.len())..]
    }

    pub fn of_kind(&self, kind: TraceKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// The whole log as text, one event per line.
    pub fn render(&self) -> String {
        render(&self.events)
    }
}

pub fn render(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}
