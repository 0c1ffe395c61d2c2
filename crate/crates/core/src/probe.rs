//! Ping-style connectivity checks and the remote command vocabulary of the
//! simulated backend.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_PING_COUNT: u32 = 3;
pub const DEFAULT_PING_TIMEOUT_MS: u64 = 1_000;
/// Virtual spacing between echo requests.
pub const PING_INTERVAL_US: u64 = 1_000_000;

/// Shell convention for "command not found".
pub const EXIT_NOT_FOUND: i32 = 127;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub seq: u32,
    pub sent_us: u64,
    /// Virtual time the echo reply reached the source within the timeout.
    pub reply_us: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub src: String,
    pub dst: String,
    pub transmitted: u32,
    pub received: u32,
    pub loss_pct: u32,
    pub outcomes: Vec<ProbeOutcome>,
}

/// Integer loss percentage, rounded half up.
pub fn loss_pct(transmitted: u32, received: u32) -> u32 {
    if transmitted == 0 {
        return 0;
    }
    let lost = u64::from(transmitted - received.min(transmitted));
    let t = u64::from(transmitted);
    ((200 * lost + t) / (2 * t)) as u32
}

impl ProbeReport {
    pub fn from_outcomes(src: &str, dst: &str, outcomes: Vec<ProbeOutcome>) -> Self {
        let transmitted = outcomes.len() as u32;
        let received = outcomes.iter().filter(|o| o.reply_us.is_some()).count() as u32;
        Self {
            src: src.to_string(),
            dst: dst.to_string(),
            transmitted,
            received,
            loss_pct: loss_pct(transmitted, received),
            outcomes,
        }
    }

    pub fn summary_line(&self) -> String {
        format!("{} packets transmitted, {} received, {}% packet loss", self.transmitted, self.received, self.loss_pct)
    }

    /// ping-like rendering; the last line is always [`Self::summary_line`].
    pub fn to_text(&self) -> String {
        let mut out = format!("PING {} -> {}: {} echo requests\n", self.src, self.dst, self.transmitted);
        for o in &self.outcomes {
            match o.reply_us {
                Some(at) => {
                    let _ = writeln!(out, "reply from {}: seq={} time={}us", self.dst, o.seq, at - o.sent_us);
                }
                None => {
                    let _ = writeln!(out, "no reply from {}: seq={}", self.dst, o.seq);
                }
            }
        }
        let _ = writeln!(out, "--- {} ping statistics ---", self.dst);
        out.push_str(&self.summary_line());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutput {
    pub exit_code: i32,
    pub output: String,
}

/// Commands understood by the simulated backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Builtin {
    Echo(String),
    /// The node's active ruleset rendered as its iptables script.
    RulesetDump,
    /// The node's per-protocol frame counters as JSON.
    CountersDump,
    /// Holds the exclusivity lock for a wall-clock duration.
    Sleep(Duration),
}

impl Builtin {
    pub fn parse(command: &str) -> Result<Self, ExecOutput> {
        let command = command.trim();
        let (verb, rest) = command.split_once(char::is_whitespace).unwrap_or((command, ""));
        let rest = rest.trim();
        match verb {
            "echo" => Ok(Builtin::Echo(rest.to_string())),
            "ruleset-dump" if rest.is_empty() => Ok(Builtin::RulesetDump),
            "counters-dump" if rest.is_empty() => Ok(Builtin::CountersDump),
            "sleep" => rest
                .parse::<u64>()
                .map(|ms| Builtin::Sleep(Duration::from_millis(ms)))
                .map_err(|_| ExecOutput { exit_code: 2, output: format!("sleep: invalid duration `{rest}`\n") }),
            _ => Err(ExecOutput { exit_code: EXIT_NOT_FOUND, output: format!("{verb}: command not found\n") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_percentages() {
        assert_eq!(loss_pct(3, 3), 0);
        assert_eq!(loss_pct(3, 0), 100);
        assert_eq!(loss_pct(3, 2), 33);
        assert_eq!(loss_pct(3, 1), 67);
        assert_eq!(loss_pct(8, 7), 13);
    }

    #[test]
    fn summary_is_last_line() {
        let outcomes = (0..3)
            .map(|seq| ProbeOutcome { seq, sent_us: u64::from(seq) * PING_INTERVAL_US, reply_us: None })
            .collect();
        let report = ProbeReport::from_outcomes("sai", "nitin", outcomes);
        assert_eq!(report.loss_pct, 100);
        assert_eq!(report.to_text().lines().last().unwrap(), "3 packets transmitted, 0 received, 100% packet loss");
    }

    #[test]
    fn builtin_table() {
        assert_eq!(Builtin::parse("echo hi there"), Ok(Builtin::Echo("hi there".into())));
        assert_eq!(Builtin::parse("ruleset-dump"), Ok(Builtin::RulesetDump));
        assert_eq!(Builtin::parse(" counters-dump "), Ok(Builtin::CountersDump));
        assert_eq!(Builtin::parse("sleep 250"), Ok(Builtin::Sleep(Duration::from_millis(250))));
        assert_eq!(Builtin::parse("reboot").unwrap_err().exit_code, EXIT_NOT_FOUND);
        assert_eq!(Builtin::parse("sleep soon").unwrap_err().exit_code, 2);
    }
}
