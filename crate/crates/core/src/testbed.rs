//! The testbed as one mutable object: registry, medium, scenarios, saved
//! attacks, scenario playback and the remote-exec lock.
//!
//! Every mutating method checks the exec lock first and fails with
//! [`TestbedError::Busy`] while a command is running on a node. Callers are
//! expected to serialize access (the control service owns a `Testbed` on a
//! single thread).

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::time::Duration;

use serde::Serialize;

use crate::adversary::{AdversaryError, AttackBook, AttackSpec, InjectionSpec};
use crate::backend::{BackendError, RemoteBackend};
use crate::emu::{ActiveAttack, EmuError, Fate, Frame, Medium, Step, Trace, TraceKind, VirtualTime};
use crate::probe::{Builtin, ExecOutput, ProbeReport};
use crate::registry::{NodeRecord, Registry, RegistryError, SOFT_LIMIT};
use crate::rules::{self, RuleError};
use crate::scenario::{Scenario, ScenarioError, ScenarioSummary};
use crate::topology::{to_dot, AdjacencyMatrix, GenParams, Topology, TopologyError};
use crate::traffic::{FlowSpec, FlowStats, TrafficError};

pub const DEFAULT_WIRELESS_IFNAME: &str = "ath0";

#[derive(Debug, Clone)]
pub enum Backend {
    Simulated,
    Remote(RemoteBackend),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Simulated => "simulated",
            Backend::Remote(_) => "remote",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestbedConfig {
    pub backend: Backend,
    pub link_latency_us: u64,
    pub wireless_ifname: String,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Simulated,
            link_latency_us: crate::emu::DEFAULT_LINK_LATENCY_US,
            wireless_ifname: DEFAULT_WIRELESS_IFNAME.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("testbed busy: `{command}` is running on {node}")]
    Busy { node: String, command: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("node `{0}` is part of the applied topology")]
    NodeInUse(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Emu(#[from] EmuError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("scenario `{0}` is already playing")]
    AlreadyPlaying(String),
    #[error("no scenario is playing")]
    NotPlaying,
    #[error("no command is running")]
    NotExecuting,
    #[error("no topology has been applied")]
    NoTopology,
    #[error("command exited with status {exit_code}")]
    CommandFailed { exit_code: i32, output: String },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl TestbedError {
    /// Short machine-readable name of the error.
    pub fn kind(&self) -> &'static str {
        use TestbedError as E;
        match self {
            E::Busy { .. } => "Busy",
            E::Registry(e) => match e {
                RegistryError::DuplicateName(_) => "DuplicateName",
                RegistryError::DuplicateAddress { .. } => "DuplicateAddress",
                RegistryError::InvalidFormat(_) => "InvalidFormat",
                RegistryError::UnknownNode(_) => "UnknownNode",
                RegistryError::Parse { .. } => "ParseError",
            },
            E::NodeInUse(_) => "NodeInUse",
            E::UnknownScenario(_) => "UnknownScenario",
            E::Scenario(e) => match e {
                ScenarioError::Invalid(_) => "InvalidSpec",
                ScenarioError::Topology(e) => topology_kind(e),
                ScenarioError::GenerationExhausted { .. } => "GenerationExhausted",
                ScenarioError::OutOfRange { .. } => "OutOfRange",
                ScenarioError::Stale(_) => "StaleScenario",
                ScenarioError::Parse { .. } => "ParseError",
                ScenarioError::DimensionMismatch { .. } => "DimensionMismatch",
            },
            E::Topology(e) => topology_kind(e),
            E::Rules(e) => match e {
                RuleError::DimensionMismatch { .. } => "DimensionMismatch",
                RuleError::RejectedTopology { .. } => "RejectedTopology",
                RuleError::Topology(e) => topology_kind(e),
                RuleError::Script { .. } => "ParseError",
            },
            E::Emu(e) => match e {
                EmuError::UnknownNode(_) => "UnknownNode",
                EmuError::MacSpoof { .. } => "MacSpoof",
                EmuError::DimensionMismatch { .. } | EmuError::OwnerMismatch { .. } => "DimensionMismatch",
                EmuError::ClockRewind { .. } => "ClockRewind",
            },
            E::Adversary(e) => match e {
                AdversaryError::UnknownNode(_) => "UnknownNode",
                AdversaryError::DuplicateAttack(_) => "DuplicateAttack",
                AdversaryError::UnknownAttack(_) => "UnknownAttack",
                AdversaryError::BadHex(_) => "BadHex",
                AdversaryError::FrameTooShort(_) => "FrameTooShort",
                AdversaryError::Invalid(_) => "InvalidSpec",
                AdversaryError::Parse { .. } => "ParseError",
            },
            E::Traffic(e) => match e {
                TrafficError::UnknownNode(_) => "UnknownNode",
                TrafficError::InvalidSpec(_) => "InvalidSpec",
                TrafficError::UnknownFlow(_) => "UnknownFlow",
            },
            E::AlreadyPlaying(_) => "AlreadyPlaying",
            E::NotPlaying => "NotPlaying",
            E::NotExecuting => "NotExecuting",
            E::NoTopology => "NoTopology",
            E::CommandFailed { .. } => "CommandFailed",
            E::Invalid(_) => "MalformedRequest",
            E::Backend(_) => "BackendError",
        }
    }

    /// HTTP status used by the control API.
    pub fn http_status(&self) -> u16 {
        match self.kind() {
            "Busy" | "DuplicateName" | "DuplicateAddress" | "NodeInUse" | "StaleScenario" | "DuplicateAttack"
            | "AlreadyPlaying" | "RejectedTopology" => 409,
            "UnknownNode" | "UnknownScenario" | "UnknownAttack" | "UnknownFlow" | "NotPlaying" | "NotExecuting"
            | "NoTopology" => 404,
            "GenerationExhausted" | "Infeasible" | "CommandFailed" => 422,
            "BackendError" => 502,
            _ => 400,
        }
    }
}

fn topology_kind(e: &TopologyError) -> &'static str {
    match e {
        TopologyError::MalformedMatrix(_) => "MalformedMatrix",
        TopologyError::Infeasible(_) => "Infeasible",
        TopologyError::GenerationExhausted { .. } => "GenerationExhausted",
    }
}

pub type Result<T, E = TestbedError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Serialize)]
pub struct AppliedTopology {
    pub scenario: String,
    pub seq: u32,
    pub at_us: VirtualTime,
    /// Number of registry nodes the scenario's matrix covers.
    #[serde(skip)]
    pub nodes: usize,
    #[serde(skip)]
    base: AdjacencyMatrix,
    /// The scenario topology widened to the whole registry.
    #[serde(skip)]
    pub topology: Topology,
    #[serde(skip)]
    pub names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct PlayStep {
    pub at_us: VirtualTime,
    pub seq: u32,
}

#[derive(Debug)]
struct Playback {
    scenario: String,
    /// Pending steps keyed by timer token.
    pending: BTreeMap<u64, u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaybackStatus {
    pub scenario: String,
    pub remaining: Vec<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Delivery {
    pub frame_id: u64,
    pub delivered_to: Vec<String>,
    pub outcomes: BTreeMap<String, Fate>,
}

#[derive(Debug, Clone)]
struct ExecLock {
    node: String,
    command: String,
}

#[derive(Debug)]
enum ExecWork {
    Done(ExecOutput),
    Sleep(Duration),
    Remote { backend: RemoteBackend, ip: Ipv4Addr },
}

/// A running command. The testbed stays locked until the ticket's output is
/// handed back through [`Testbed::end_exec`].
#[derive(Debug)]
pub struct ExecTicket {
    pub node: String,
    pub command: String,
    work: ExecWork,
}

impl ExecTicket {
    /// Performs the blocking part of the command. Needs no access to the
    /// testbed, so it can run on another thread.
    pub fn run(self) -> ExecOutput {
        match self.work {
            ExecWork::Done(out) => out,
            ExecWork::Sleep(d) => {
                std::thread::sleep(d);
                ExecOutput { exit_code: 0, output: String::new() }
            }
            ExecWork::Remote { backend, ip } => backend
                .exec(ip, &self.command)
                .unwrap_or_else(|e| ExecOutput { exit_code: 255, output: format!("{e}\n") }),
        }
    }
}

#[derive(Debug)]
pub struct Testbed {
    registry: Registry,
    medium: Medium,
    scenarios: BTreeMap<String, Scenario>,
    attack_book: AttackBook,
    applied: Option<AppliedTopology>,
    playback: Option<Playback>,
    exec: Option<ExecLock>,
    backend: Backend,
    wireless_ifname: String,
    next_token: u64,
}

impl Default for Testbed {
    fn default() -> Self {
        Self::new(TestbedConfig::default())
    }
}

impl Testbed {
    pub fn new(config: TestbedConfig) -> Self {
        Self {
            registry: Registry::new(),
            medium: Medium::new(config.link_latency_us),
            scenarios: BTreeMap::new(),
            attack_book: AttackBook::new(),
            applied: None,
            playback: None,
            exec: None,
            backend: config.backend,
            wireless_ifname: config.wireless_ifname,
            next_token: 1,
        }
    }

    /// A testbed whose nodes are those of `registry`, in order.
    pub fn with_registry(config: TestbedConfig, registry: Registry) -> Self {
        let mut tb = Self::new(config);
        tb.medium = Medium::with_nodes(tb.medium.link_latency_us(), registry.nodes());
        tb.registry = registry;
        tb
    }

    fn ensure_idle(&self) -> Result<()> {
        match &self.exec {
            Some(l) => Err(TestbedError::Busy { node: l.node.clone(), command: l.command.clone() }),
            None => Ok(()),
        }
    }

    // --- read access ---

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn trace(&self) -> &Trace {
        self.medium.trace()
    }

    pub fn now(&self) -> VirtualTime {
        self.medium.now()
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn wireless_ifname(&self) -> &str {
        &self.wireless_ifname
    }

    pub fn is_busy(&self) -> bool {
        self.exec.is_some()
    }

    pub fn applied(&self) -> Option<&AppliedTopology> {
        self.applied.as_ref()
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios.get(name).ok_or_else(|| TestbedError::UnknownScenario(name.to_string()))
    }

    pub fn scenarios(&self) -> Vec<ScenarioSummary> {
        self.scenarios.values().map(Scenario::summary).collect()
    }

    pub fn attack_book(&self) -> &AttackBook {
        &self.attack_book
    }

    pub fn active_attacks(&self) -> Vec<ActiveAttack> {
        self.medium.attacks().cloned().collect()
    }

    pub fn playback(&self) -> Option<PlaybackStatus> {
        self.playback
            .as_ref()
            .map(|p| PlaybackStatus { scenario: p.scenario.clone(), remaining: p.pending.values().copied().collect() })
    }

    /// DOT rendering of the topology currently enforced.
    pub fn current_dot(&self) -> Option<String> {
        let a = self.applied.as_ref()?;
        to_dot(&a.topology, &a.names).ok()
    }

    /// DOT rendering of a stored scenario topology, using the first `n`
    /// registry names.
    pub fn scenario_dot(&self, name: &str, seq: u32) -> Result<String> {
        let sc = self.scenario(name)?;
        let t = sc.topology(seq)?;
        let names = self.registry.names();
        if names.len() < t.len() {
            return Err(RuleError::DimensionMismatch { topology: t.len(), registry: names.len() }.into());
        }
        Ok(to_dot(t, &names[..t.len()])?)
    }

    // --- registry ---

    pub fn add_node(&mut self, record: NodeRecord) -> Result<usize> {
        self.ensure_idle()?;
        let index = self.registry.add_node(record.clone())?;
        self.medium.add_node(record);
        self.mark_stale();
        if self.registry.over_soft_limit() {
            self.medium
                .log(TraceKind::Warning, format!("soft limit {SOFT_LIMIT} exceeded nodes={}", self.registry.len()));
        }
        Ok(index)
    }

    pub fn remove_node(&mut self, name: &str) -> Result<usize> {
        self.ensure_idle()?;
        let index = self.registry.index_of(name).ok_or_else(|| RegistryError::UnknownNode(name.to_string()))?;
        if self.applied.as_ref().is_some_and(|a| index < a.nodes) {
            return Err(TestbedError::NodeInUse(name.to_string()));
        }
        let count = self.registry.remove_node(name)?;
        self.medium.remove_node(index);
        if let Some(a) = &mut self.applied {
            // The node lay outside the scenario's matrix; keep the view in
            // step with the registry.
            a.topology.adjacency = a.base.embed(count);
            a.names = self.registry.names();
        }
        self.mark_stale();
        Ok(count)
    }

    fn mark_stale(&mut self) {
        for sc in self.scenarios.values_mut() {
            sc.stale = true;
        }
    }

    // --- scenarios ---

    /// Builds and stores a scenario, replacing any idle one of the same name.
    pub fn build_scenario(&mut self, name: &str, params: GenParams, count: u32) -> Result<ScenarioSummary> {
        self.ensure_idle()?;
        if params.n > self.registry.len() {
            return Err(TestbedError::Invalid(format!(
                "scenario needs {} nodes, registry has {}",
                params.n,
                self.registry.len()
            )));
        }
        self.check_replaceable(name)?;
        let sc = Scenario::build(name, params, count)?;
        let summary = sc.summary();
        self.scenarios.insert(name.to_string(), sc);
        Ok(summary)
    }

    /// Stores a scenario parsed from its file form.
    pub fn load_scenario(&mut self, text: &str) -> Result<ScenarioSummary> {
        self.ensure_idle()?;
        let sc = Scenario::load(text)?;
        if sc.params.n > self.registry.len() {
            return Err(TestbedError::Invalid(format!(
                "scenario needs {} nodes, registry has {}",
                sc.params.n,
                self.registry.len()
            )));
        }
        self.check_replaceable(&sc.name)?;
        let summary = sc.summary();
        self.scenarios.insert(sc.name.clone(), sc);
        Ok(summary)
    }

    fn check_replaceable(&self, name: &str) -> Result<()> {
        match &self.playback {
            Some(p) if p.scenario == name => Err(TestbedError::AlreadyPlaying(name.to_string())),
            _ => Ok(()),
        }
    }

    /// Sets the seconds between automatic applications.
    pub fn set_interval(&mut self, name: &str, interval_s: u64) -> Result<ScenarioSummary> {
        self.ensure_idle()?;
        self.check_replaceable(name)?;
        if interval_s == 0 {
            return Err(TestbedError::Invalid("interval must be at least one second".into()));
        }
        let sc = self.scenarios.get_mut(name).ok_or_else(|| TestbedError::UnknownScenario(name.to_string()))?;
        sc.interval_s = interval_s;
        Ok(sc.summary())
    }

    pub fn save_scenario(&self, name: &str) -> Result<String> {
        Ok(self.scenario(name)?.save())
    }

    /// Compiles topology `seq` of scenario `name` and enforces it on every
    /// node. A scenario over fewer nodes than the registry leaves the extra
    /// nodes isolated.
    pub fn apply_topology(&mut self, name: &str, seq: u32, force: bool) -> Result<VirtualTime> {
        self.ensure_idle()?;
        self.apply_inner(name, seq, force)
    }

    fn apply_inner(&mut self, name: &str, seq: u32, force: bool) -> Result<VirtualTime> {
        let sc = self.scenario(name)?;
        if sc.stale {
            return Err(ScenarioError::Stale(name.to_string()).into());
        }
        let stored = sc.topology(seq)?;
        let nodes = stored.len();
        let total = self.registry.len();
        if nodes > total {
            return Err(RuleError::DimensionMismatch { topology: nodes, registry: total }.into());
        }
        let stored_adjacency = stored.adjacency.clone();
        let topology = Topology { adjacency: stored.adjacency.embed(total), ..stored.clone() };
        let rulesets = rules::compile(&topology, &self.registry, force)?;
        if let Backend::Remote(remote) = &self.backend {
            for (record, rs) in self.registry.nodes().iter().zip(&rulesets) {
                remote.push_script(record.wired_ip, &rules::emit_script(rs, &self.wireless_ifname))?;
            }
        }
        let at = self.medium.apply_rulesets(rulesets, &format!("scenario={name} seq={seq}"))?;
        for (n, sc) in self.scenarios.iter_mut() {
            sc.current = (n == name).then_some(seq);
        }
        self.applied = Some(AppliedTopology {
            scenario: name.to_string(),
            seq,
            at_us: at,
            nodes,
            base: stored_adjacency,
            topology,
            names: self.registry.names(),
        });
        Ok(at)
    }

    /// Applies `from` now and schedules `from+1..=to` one interval apart.
    pub fn play(&mut self, name: &str, from: u32, to: u32) -> Result<Vec<PlayStep>> {
        self.ensure_idle()?;
        if let Some(p) = &self.playback {
            return Err(TestbedError::AlreadyPlaying(p.scenario.clone()));
        }
        let sc = self.scenario(name)?;
        sc.check_seq(to)?;
        if from > to {
            return Err(ScenarioError::OutOfRange { seq: from, len: to as usize + 1 }.into());
        }
        for seq in from..=to {
            let t = sc.topology(seq)?;
            if !t.is_accepted() {
                return Err(RuleError::RejectedTopology { seq }.into());
            }
        }
        let interval_us = sc.interval_s * 1_000_000;
        let t0 = self.now();
        self.apply_inner(name, from, false)?;
        let mut steps = vec![PlayStep { at_us: t0, seq: from }];
        let mut pending = BTreeMap::new();
        for seq in from + 1..=to {
            let at = t0 + u64::from(seq - from) * interval_us;
            let token = self.next_token;
            self.next_token += 1;
            self.medium.schedule_external(at, token);
            pending.insert(token, seq);
            steps.push(PlayStep { at_us: at, seq });
        }
        if !pending.is_empty() {
            self.playback = Some(Playback { scenario: name.to_string(), pending });
        }
        Ok(steps)
    }

    /// Cancels the remaining steps of the running playback and returns their
    /// sequence numbers. With `name`, only that scenario's playback is
    /// stopped.
    pub fn stop_play(&mut self, name: Option<&str>) -> Result<Vec<u32>> {
        self.ensure_idle()?;
        if self.playback.as_ref().is_none_or(|p| name.is_some_and(|n| n != p.scenario)) {
            return Err(TestbedError::NotPlaying);
        }
        let p = self.playback.take().ok_or(TestbedError::NotPlaying)?;
        for token in p.pending.keys() {
            self.medium.cancel_external(*token);
        }
        Ok(p.pending.into_values().collect())
    }

    fn on_timer(&mut self, token: u64) {
        let Some(p) = &mut self.playback else { return };
        let Some(seq) = p.pending.remove(&token) else { return };
        let name = p.scenario.clone();
        let done = p.pending.is_empty();
        if done {
            self.playback = None;
        }
        if let Err(e) = self.apply_inner(&name, seq, false) {
            self.medium.log(TraceKind::Error, format!("playback scenario={name} seq={seq} stopped: {e}"));
            if let Some(p) = self.playback.take() {
                for token in p.pending.keys() {
                    self.medium.cancel_external(*token);
                }
            }
        }
    }

    // --- clock ---

    /// Advances the virtual clock by `delta_us`.
    pub fn tick(&mut self, delta_us: u64) -> Result<VirtualTime> {
        let until = self.now() + delta_us;
        self.advance_to(until)?;
        Ok(until)
    }

    pub fn advance_to(&mut self, until: VirtualTime) -> Result<usize> {
        self.ensure_idle()?;
        self.run_until(until)
    }

    fn run_until(&mut self, until: VirtualTime) -> Result<usize> {
        self.medium.check_advance(until)?;
        let mut processed = 0;
        while let Some(step) = self.medium.step(until) {
            processed += 1;
            if let Step::External(token) = step {
                self.on_timer(token);
            }
        }
        self.medium.finish_advance(until);
        Ok(processed)
    }

    fn settle(&mut self, frame_id: u64) -> Result<Delivery> {
        let until = self.now() + self.medium.link_latency_us();
        self.run_until(until)?;
        let outcomes: BTreeMap<String, Fate> =
            self.medium.take_fate(frame_id).unwrap_or_default().into_iter().collect();
        let delivered_to =
            self.registry.names().into_iter().filter(|n| outcomes.get(n) == Some(&Fate::Received)).collect();
        Ok(Delivery { frame_id, delivered_to, outcomes })
    }

    // --- traffic and probes ---

    /// Sends one frame and waits one link latency for its fate.
    pub fn transmit(&mut self, src: &str, frame: Frame) -> Result<Delivery> {
        self.ensure_idle()?;
        let id = self.medium.transmit(src, frame)?;
        self.settle(id)
    }

    pub fn start_flow(&mut self, spec: FlowSpec) -> Result<u64> {
        self.ensure_idle()?;
        Ok(self.medium.start_flow(spec)?)
    }

    pub fn stop_flow(&mut self, id: u64) -> Result<FlowStats> {
        self.ensure_idle()?;
        Ok(self.medium.stop_flow(id)?)
    }

    pub fn flow_stats(&self, id: u64) -> Result<FlowStats> {
        Ok(self.medium.flow_stats(id)?)
    }

    pub fn flows(&self) -> Vec<(u64, FlowSpec, FlowStats)> {
        self.medium.flows().map(|(id, s, st)| (id, s.clone(), st.clone())).collect()
    }

    /// Runs a ping to completion; the clock ends at the last probe's deadline.
    pub fn ping(&mut self, src: &str, dst: &str, count: u32, timeout_ms: u64) -> Result<ProbeReport> {
        self.ensure_idle()?;
        if count == 0 {
            return Err(TestbedError::Invalid("ping count must be at least 1".into()));
        }
        if src == dst {
            return Err(TestbedError::Invalid("ping source and destination are the same node".into()));
        }
        let id = self.medium.start_ping(src, dst, count, timeout_ms)?;
        let deadline = self.now() + u64::from(count - 1) * crate::probe::PING_INTERVAL_US + timeout_ms * 1_000;
        self.run_until(deadline)?;
        self.medium.finish_ping(id).ok_or_else(|| TestbedError::Invalid("ping ended early: a node was removed".into()))
    }

    // --- adversary ---

    pub fn launch_attack(&mut self, spec: AttackSpec) -> Result<u64> {
        self.ensure_idle()?;
        Ok(self.medium.launch_attack(spec)?)
    }

    pub fn stop_attack(&mut self, id: u64) -> Result<VirtualTime> {
        self.ensure_idle()?;
        Ok(self.medium.stop_attack(id)?)
    }

    pub fn save_attack(&mut self, spec: AttackSpec) -> Result<()> {
        self.ensure_idle()?;
        spec.validate()?;
        Ok(self.attack_book.save(spec)?)
    }

    pub fn replay_attack(&mut self, name: &str) -> Result<u64> {
        self.ensure_idle()?;
        let spec =
            self.attack_book.get(name).cloned().ok_or_else(|| AdversaryError::UnknownAttack(name.to_string()))?;
        Ok(self.medium.launch_attack(spec)?)
    }

    /// Replaces the saved attack list.
    pub fn load_attack_book(&mut self, book: AttackBook) -> Result<()> {
        self.ensure_idle()?;
        self.attack_book = book;
        Ok(())
    }

    pub fn inject(&mut self, spec: &InjectionSpec) -> Result<Delivery> {
        self.ensure_idle()?;
        let bytes = spec.decode()?;
        if self.registry.index_of(&spec.as_node).is_none() {
            return Err(AdversaryError::UnknownNode(spec.as_node.clone()).into());
        }
        let dst = InjectionSpec::destination(&bytes);
        let id = self.medium.inject(&spec.as_node, bytes, dst)?;
        self.settle(id)
    }

    // --- remote execution ---

    /// Takes the exec lock and prepares `command` for `node`. Simulated
    /// builtins are evaluated here, against the state at lock time.
    pub fn begin_exec(&mut self, node: &str, command: &str) -> Result<ExecTicket> {
        self.ensure_idle()?;
        let record = self.registry.by_name(node).ok_or_else(|| RegistryError::UnknownNode(node.to_string()))?;
        let work = match &self.backend {
            Backend::Remote(remote) => ExecWork::Remote { backend: remote.clone(), ip: record.wired_ip },
            Backend::Simulated => self.simulated_exec(node, command),
        };
        self.exec = Some(ExecLock { node: node.to_string(), command: command.to_string() });
        self.medium.log(TraceKind::ExecStart, format!("node={node} cmd={command}"));
        Ok(ExecTicket { node: node.to_string(), command: command.to_string(), work })
    }

    fn simulated_exec(&self, node: &str, command: &str) -> ExecWork {
        let state = self.medium.node(node);
        match Builtin::parse(command) {
            Err(out) => ExecWork::Done(out),
            Ok(Builtin::Sleep(d)) => ExecWork::Sleep(d),
            Ok(Builtin::Echo(text)) => ExecWork::Done(ExecOutput { exit_code: 0, output: format!("{text}\n") }),
            Ok(Builtin::RulesetDump) => ExecWork::Done(ExecOutput {
                exit_code: 0,
                output: state
                    .and_then(|s| s.ruleset.as_ref())
                    .map(|rs| rules::emit_script(rs, &self.wireless_ifname))
                    .unwrap_or_default(),
            }),
            Ok(Builtin::CountersDump) => ExecWork::Done(ExecOutput {
                exit_code: 0,
                output: state
                    .map(|s| serde_json::to_string(&s.counters).expect("counters serialize") + "\n")
                    .unwrap_or_default(),
            }),
        }
    }

    /// Releases the exec lock. A non-zero exit status is reported as
    /// [`TestbedError::CommandFailed`].
    pub fn end_exec(&mut self, output: ExecOutput) -> Result<ExecOutput> {
        let lock = self.exec.take().ok_or(TestbedError::NotExecuting)?;
        self.medium.log(TraceKind::ExecEnd, format!("node={} exit={}", lock.node, output.exit_code));
        if output.exit_code != 0 {
            return Err(TestbedError::CommandFailed { exit_code: output.exit_code, output: output.output });
        }
        Ok(output)
    }

    /// Runs a command to completion on the calling thread.
    pub fn remote_exec(&mut self, node: &str, command: &str) -> Result<ExecOutput> {
        let ticket = self.begin_exec(node, command)?;
        let output = ticket.run();
        self.end_exec(output)
    }
}
