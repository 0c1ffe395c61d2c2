//! Named, seeded series of topologies and their text file format.
//!
//! Topology `seq` of a scenario is generated with seed `params.seed + seq`,
//! so any single topology can be regenerated without its predecessors.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::registry::is_valid_name;
use crate::topology::{self, AdjacencyMatrix, GenParams, Status, Topology, TopologyError};

pub const DEFAULT_INTERVAL_S: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("topology {seq}: {source}")]
    GenerationExhausted { seq: u32, source: TopologyError },
    #[error("topology {seq} out of range (scenario has {len})")]
    OutOfRange { seq: u32, len: usize },
    #[error("scenario `{0}` is stale: the registry changed since it was built")]
    Stale(String),
    #[error("scenario file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("scenario file line {line}: {message}")]
    DimensionMismatch { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub params: GenParams,
    pub topologies: Vec<Topology>,
    pub interval_s: u64,
    /// Sequence numbers of topologies entered by hand rather than generated.
    pub manual: BTreeSet<u32>,
    pub current: Option<u32>,
    pub stale: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub nodes: usize,
    pub topologies: usize,
    pub density: u8,
    pub maxdeg: usize,
    pub seed: u64,
    pub interval_s: u64,
    pub current: Option<u32>,
    pub stale: bool,
    pub statuses: Vec<u8>,
}

impl Scenario {
    /// Generates `count` accepted topologies.
    pub fn build(name: &str, params: GenParams, count: u32) -> Result<Self, ScenarioError> {
        if !is_valid_name(name) {
            return Err(ScenarioError::Invalid(format!("bad scenario name `{name}`")));
        }
        if count == 0 {
            return Err(ScenarioError::Invalid("a scenario needs at least one topology".into()));
        }
        params.check_feasible()?;
        let topologies = (0..count).map(|seq| Self::generate_one(&params, seq)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            name: name.to_string(),
            params,
            topologies,
            interval_s: DEFAULT_INTERVAL_S,
            manual: BTreeSet::new(),
            current: None,
            stale: false,
        })
    }

    fn generate_one(params: &GenParams, seq: u32) -> Result<Topology, ScenarioError> {
        let seeded = GenParams { seed: params.seed.wrapping_add(u64::from(seq)), ..params.clone() };
        match topology::generate(&seeded) {
            Ok(g) => Ok(Topology { seq, ..g.topology }),
            Err(e @ TopologyError::GenerationExhausted { .. }) => {
                Err(ScenarioError::GenerationExhausted { seq, source: e })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Regenerates topology `seq` from the stored parameters.
    pub fn regenerate(&self, seq: u32) -> Result<Topology, ScenarioError> {
        self.check_seq(seq)?;
        Self::generate_one(&self.params, seq)
    }

    pub fn check_seq(&self, seq: u32) -> Result<(), ScenarioError> {
        if (seq as usize) < self.topologies.len() {
            Ok(())
        } else {
            Err(ScenarioError::OutOfRange { seq, len: self.topologies.len() })
        }
    }

    pub fn topology(&self, seq: u32) -> Result<&Topology, ScenarioError> {
        self.check_seq(seq)?;
        Ok(&self.topologies[seq as usize])
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            name: self.name.clone(),
            nodes: self.params.n,
            topologies: self.topologies.len(),
            density: self.params.density,
            maxdeg: self.params.max_degree,
            seed: self.params.seed,
            interval_s: self.interval_s,
            current: self.current,
            stale: self.stale,
            statuses: self.topologies.iter().map(|t| t.status.map_or(0, Status::code)).collect(),
        }
    }

    pub fn save(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "scenario {}", self.name);
        let _ = writeln!(
            out,
            "nodes {} topologies {} density {} maxdeg {} seed {} interval {}",
            p.n,
            self.topologies.len(),
            p.density,
            p.max_degree,
            p.seed,
            self.interval_s
        );
        for (i, t) in self.topologies.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let status = t.status.unwrap_or(Status::Rejected99).code();
            let manual = if self.manual.contains(&t.seq) { " manual" } else { "" };
            let _ = writeln!(out, "topology {} status {status}{manual}", t.seq);
            out.push_str(&t.adjacency.to_string());
        }
        out
    }

    /// Parses a scenario file. Every matrix is re-classified against the
    /// header's degree bound; the stored status is not trusted.
    pub fn load(text: &str) -> Result<Self, ScenarioError> {
        let lines: Vec<&str> = text.lines().collect();
        let parse = |line: usize, message: String| ScenarioError::Parse { line, message };
        let mut cursor = 0usize;
        let next_nonblank = |cursor: &mut usize| -> Option<(usize, &str)> {
            while *cursor < lines.len() {
                let l = lines[*cursor].trim();
                *cursor += 1;
                if !l.is_empty() {
                    return Some((*cursor, l));
                }
            }
            None
        };

        let (ln, head) = next_nonblank(&mut cursor).ok_or_else(|| parse(1, "empty scenario file".into()))?;
        let name = head
            .strip_prefix("scenario ")
            .map(str::trim)
            .filter(|n| is_valid_name(n))
            .ok_or_else(|| parse(ln, format!("expected `scenario <name>`, found `{head}`")))?
            .to_string();

        let (ln, header) = next_nonblank(&mut cursor).ok_or_else(|| parse(ln + 1, "missing parameter line".into()))?;
        let words: Vec<&str> = header.split_whitespace().collect();
        let keys = ["nodes", "topologies", "density", "maxdeg", "seed", "interval"];
        if words.len() != 12 || words.iter().step_by(2).zip(keys).any(|(w, k)| *w != k) {
            return Err(parse(
                ln,
                "expected `nodes <n> topologies <T> density <p> maxdeg <D> seed <u64> interval <s>`".into(),
            ));
        }
        let num = |i: usize| words[i].parse::<u64>().map_err(|_| parse(ln, format!("bad number `{}`", words[i])));
        let n = num(1)? as usize;
        let count = num(3)? as usize;
        let density = u8::try_from(num(5)?).map_err(|_| parse(ln, "density out of range".into()))?;
        let params = GenParams::new(n, density, num(7)? as usize, num(9)?);
        let interval_s = num(11)?;
        if params.density > 100 {
            return Err(parse(ln, "density out of range".into()));
        }

        let mut topologies = Vec::with_capacity(count);
        let mut manual = BTreeSet::new();
        while let Some((ln, head)) = next_nonblank(&mut cursor) {
            let w: Vec<&str> = head.split_whitespace().collect();
            let (seq, tail) = match w[..] {
                ["topology", seq, "status", code, ref rest @ ..] => {
                    let seq = seq.parse::<u32>().map_err(|_| parse(ln, format!("bad topology number `{seq}`")))?;
                    if Status::from_code(code.parse().unwrap_or(0)).is_none() {
                        return Err(parse(ln, format!("status must be 99 or 100, found `{code}`")));
                    }
                    (seq, rest)
                }
                _ => return Err(parse(ln, format!("expected `topology <seq> status <code>`, found `{head}`"))),
            };
            match tail {
                [] => {}
                ["manual"] => {
                    manual.insert(seq);
                }
                _ => return Err(parse(ln, format!("unexpected `{}`", tail.join(" ")))),
            }
            if seq as usize != topologies.len() {
                return Err(parse(ln, format!("expected topology {}, found {seq}", topologies.len())));
            }
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let (rl, row) = next_nonblank(&mut cursor).ok_or_else(|| ScenarioError::DimensionMismatch {
                    line: lines.len(),
                    message: format!("topology {seq} has fewer than {n} rows"),
                })?;
                let cells = row
                    .split_whitespace()
                    .map(|c| match c {
                        "0" => Ok(0u8),
                        "1" => Ok(1u8),
                        _ => Err(parse(rl, format!("matrix entry `{c}` is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<u8>, _>>()?;
                if cells.len() != n {
                    return Err(parse(rl, format!("row has {} entries, expected {n}", cells.len())));
                }
                rows.push(cells);
            }
            let adjacency = AdjacencyMatrix::from_rows(&rows)?;
            let verdict = topology::verdict(&adjacency, params.max_degree).map_err(|e| parse(ln, e.to_string()))?;
            topologies.push(Topology { adjacency, status: Some(verdict.status()), seq });
        }
        if topologies.len() != count {
            return Err(ScenarioError::DimensionMismatch {
                line: 2,
                message: format!("header declares {count} topologies, file has {}", topologies.len()),
            });
        }
        if count == 0 {
            return Err(ScenarioError::Invalid("a scenario needs at least one topology".into()));
        }
        Ok(Self { name, params, topologies, interval_s, manual, current: None, stale: false })
    }
}
