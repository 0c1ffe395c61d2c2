//! Control API: the command vocabulary, its dispatcher, the single-writer
//! service that owns the testbed, and the HTTP front end.

mod http;
mod service;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adversary::{AttackSpec, InjectionSpec};
use crate::emu::{Frame, Protocol};
use crate::probe::{DEFAULT_PING_COUNT, DEFAULT_PING_TIMEOUT_MS};
use crate::registry::NodeRecord;
use crate::testbed::{Result, Testbed, TestbedError};
use crate::topology::{GenParams, DEFAULT_MAX_ATTEMPTS};
use crate::traffic::FlowSpec;

pub use http::{router, serve, spawn, RunningServer, ServeConfig, ServeError, TickPolicy};
pub use service::{Command, EventRecord, Service, EVENT_BUFFER};

/// Parameters of `POST /scenarios` when building from generator settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRequest {
    pub name: String,
    pub nodes: usize,
    pub topologies: u32,
    pub density: u8,
    pub maxdeg: usize,
    pub seed: u64,
    #[serde(default)]
    pub interval: Option<u64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitRequest {
    pub src: String,
    /// Destination node name, or `*` for broadcast.
    pub dst: String,
    pub protocol: Protocol,
    #[serde(default)]
    pub port: u16,
    #[serde(default)]
    pub payload_hex: String,
}

/// Every operation the control service accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case", deny_unknown_fields)]
pub enum Verb {
    Health,
    ListNodes,
    AddNode {
        node: NodeRecord,
    },
    RemoveNode {
        name: String,
    },
    BuildScenario {
        build: BuildRequest,
    },
    LoadScenario {
        file: String,
    },
    ListScenarios,
    GetScenario {
        name: String,
    },
    ScenarioFile {
        name: String,
    },
    ScenarioDot {
        name: String,
        seq: u32,
    },
    Apply {
        name: String,
        seq: u32,
        #[serde(default)]
        force: bool,
    },
    Play {
        name: String,
        from: u32,
        to: u32,
    },
    StopPlay {
        #[serde(default)]
        name: Option<String>,
    },
    CurrentDot,
    LaunchAttack {
        attack: AttackSpec,
    },
    ListAttacks,
    StopAttack {
        id: u64,
    },
    SaveAttack {
        attack: AttackSpec,
    },
    ReplayAttack {
        name: String,
    },
    Inject {
        injection: InjectionSpec,
    },
    StartFlow {
        flow: FlowSpec,
    },
    ListFlows,
    FlowStats {
        id: u64,
    },
    StopFlow {
        id: u64,
    },
    Ping {
        src: String,
        dst: String,
        count: Option<u32>,
        timeout_ms: Option<u64>,
    },
    Transmit {
        frame: TransmitRequest,
    },
    Exec {
        node: String,
        command: String,
    },
    Tick {
        us: u64,
    },
    AdvanceTo {
        us: u64,
    },
    Trace,
}

impl Verb {
    /// Whether the verb changes testbed state.
    pub fn is_mutation(&self) -> bool {
        !matches!(
            self,
            Verb::Health
                | Verb::ListNodes
                | Verb::ListScenarios
                | Verb::GetScenario { .. }
                | Verb::ScenarioFile { .. }
                | Verb::ScenarioDot { .. }
                | Verb::CurrentDot
                | Verb::ListAttacks
                | Verb::ListFlows
                | Verb::FlowStats { .. }
                | Verb::Trace
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Json(Value),
    Text(String),
}

impl Reply {
    pub fn json(value: impl Serialize) -> Self {
        Reply::Json(serde_json::to_value(value).expect("reply serializes"))
    }
}

/// Runs one command against the testbed.
pub fn dispatch(tb: &mut Testbed, verb: Verb) -> Result<Reply> {
    Ok(match verb {
        Verb::Health => Reply::Json(json!({
            "status": "ok",
            "backend": tb.backend().name(),
            "virtual_us": tb.now(),
            "nodes": tb.registry().len(),
            "busy": tb.is_busy(),
        })),
        Verb::ListNodes => Reply::json(
            tb.medium()
                .nodes()
                .iter()
                .enumerate()
                .map(|(index, n)| {
                    let mut v = serde_json::to_value(&n.record).expect("record serializes");
                    v["index"] = json!(index);
                    v["counters"] = json!(n.counters);
                    v
                })
                .collect::<Vec<_>>(),
        ),
        Verb::AddNode { node } => Reply::Json(json!({ "index": tb.add_node(node)? })),
        Verb::RemoveNode { name } => Reply::Json(json!({ "count": tb.remove_node(&name)? })),
        Verb::BuildScenario { build } => {
            let mut params = GenParams::new(build.nodes, build.density, build.maxdeg, build.seed);
            params.max_attempts = build.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS);
            let summary = tb.build_scenario(&build.name, params, build.topologies)?;
            match build.interval {
                Some(s) => Reply::json(tb.set_interval(&build.name, s)?),
                None => Reply::json(summary),
            }
        }
        Verb::LoadScenario { file } => Reply::json(tb.load_scenario(&file)?),
        Verb::ListScenarios => Reply::json(tb.scenarios()),
        Verb::GetScenario { name } => {
            let sc = tb.scenario(&name)?;
            let mut v = serde_json::to_value(sc.summary()).expect("summary serializes");
            v["matrices"] = sc
                .topologies
                .iter()
                .map(|t| t.adjacency.rows().map(<[u8]>::to_vec).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .into();
            v["manual"] = json!(sc.manual);
            Reply::Json(v)
        }
        Verb::ScenarioFile { name } => Reply::Text(tb.save_scenario(&name)?),
        Verb::ScenarioDot { name, seq } => Reply::Text(tb.scenario_dot(&name, seq)?),
        Verb::Apply { name, seq, force } => {
            let at = tb.apply_topology(&name, seq, force)?;
            Reply::Json(json!({ "scenario": name, "seq": seq, "applied_at_us": at }))
        }
        Verb::Play { name, from, to } => Reply::Json(json!({ "scenario": name, "steps": tb.play(&name, from, to)? })),
        Verb::StopPlay { name } => Reply::Json(json!({ "cancelled": tb.stop_play(name.as_deref())? })),
        Verb::CurrentDot => Reply::Text(tb.current_dot().ok_or(TestbedError::NoTopology)?),
        Verb::LaunchAttack { attack } => Reply::Json(json!({ "id": tb.launch_attack(attack)? })),
        Verb::ListAttacks => Reply::Json(json!({
            "active": tb.active_attacks(),
            "saved": tb.attack_book().specs(),
        })),
        Verb::StopAttack { id } => Reply::Json(json!({ "id": id, "stopped_at_us": tb.stop_attack(id)? })),
        Verb::SaveAttack { attack } => {
            let name = attack.name.clone();
            tb.save_attack(attack)?;
            Reply::Json(json!({ "saved": name }))
        }
        Verb::ReplayAttack { name } => Reply::Json(json!({ "id": tb.replay_attack(&name)? })),
        Verb::Inject { injection } => Reply::json(tb.inject(&injection)?),
        Verb::StartFlow { flow } => Reply::Json(json!({ "id": tb.start_flow(flow)? })),
        Verb::ListFlows => Reply::json(
            tb.flows()
                .into_iter()
                .map(|(id, spec, stats)| json!({ "id": id, "spec": spec, "stats": stats }))
                .collect::<Vec<_>>(),
        ),
        Verb::FlowStats { id } => Reply::json(tb.flow_stats(id)?),
        Verb::StopFlow { id } => Reply::json(tb.stop_flow(id)?),
        Verb::Ping { src, dst, count, timeout_ms } => {
            let report = tb.ping(
                &src,
                &dst,
                count.unwrap_or(DEFAULT_PING_COUNT),
                timeout_ms.unwrap_or(DEFAULT_PING_TIMEOUT_MS),
            )?;
            let mut v = serde_json::to_value(&report).expect("report serializes");
            v["summary"] = json!(report.summary_line());
            v["text"] = json!(report.to_text());
            Reply::Json(v)
        }
        Verb::Transmit { frame } => {
            let frame_value = build_frame(tb, &frame)?;
            Reply::json(tb.transmit(&frame.src, frame_value)?)
        }
        Verb::Exec { node, command } => Reply::json(tb.remote_exec(&node, &command)?),
        Verb::Tick { us } => {
            let until = tb.now() + us;
            let processed = tb.advance_to(until)?;
            Reply::Json(json!({ "virtual_us": until, "processed": processed }))
        }
        Verb::AdvanceTo { us } => {
            let processed = tb.advance_to(us)?;
            Reply::Json(json!({ "virtual_us": us, "processed": processed }))
        }
        Verb::Trace => Reply::Text(tb.trace().render()),
    })
}

fn build_frame(tb: &Testbed, req: &TransmitRequest) -> Result<Frame> {
    let reg = tb.registry();
    let src = reg.by_name(&req.src).ok_or_else(|| crate::registry::RegistryError::UnknownNode(req.src.clone()))?;
    let payload = hex::decode(req.payload_hex.split_whitespace().collect::<String>())
        .map_err(|e| TestbedError::Invalid(format!("payload_hex: {e}")))?;
    if req.dst == "*" {
        return Ok(Frame::broadcast(src, req.protocol, req.port, payload));
    }
    let dst = reg.by_name(&req.dst).ok_or_else(|| crate::registry::RegistryError::UnknownNode(req.dst.clone()))?;
    Ok(Frame::unicast(src, dst, req.protocol, req.port, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::tests::node;

    fn json(tb: &mut Testbed, verb: Verb) -> Value {
        match dispatch(tb, verb).unwrap() {
            Reply::Json(v) => v,
            Reply::Text(t) => panic!("expected JSON, got {t}"),
        }
    }

    #[test]
    fn verbs_parse_from_json() {
        let v: Verb = serde_json::from_str(r#"{"verb":"apply","name":"s","seq":4}"#).unwrap();
        assert_eq!(v, Verb::Apply { name: "s".into(), seq: 4, force: false });
        assert!(serde_json::from_str::<Verb>(r#"{"verb":"apply","name":"s","seq":4,"forse":true}"#).is_err());
        assert!(!Verb::Trace.is_mutation());
        assert!(Verb::StopPlay { name: None }.is_mutation());
    }

    #[test]
    fn build_apply_and_ping_through_dispatch() {
        let mut tb = Testbed::default();
        for (i, n) in ["sai", "pritu", "nitin"].iter().enumerate() {
            json(&mut tb, Verb::AddNode { node: node(i as u8 + 1, n) });
        }
        let build = BuildRequest {
            name: "s".into(),
            nodes: 3,
            topologies: 2,
            density: 50,
            maxdeg: 2,
            seed: 1,
            interval: Some(10),
            max_attempts: None,
        };
        let summary = json(&mut tb, Verb::BuildScenario { build });
        assert_eq!(summary["interval_s"], 10);
        assert_eq!(summary["statuses"], json!([100, 100]));
        json(&mut tb, Verb::Apply { name: "s".into(), seq: 1, force: false });
        let Reply::Text(dot) = dispatch(&mut tb, Verb::CurrentDot).unwrap() else { panic!() };
        assert!(dot.starts_with("graph topo_1 {\n"));
        let report =
            json(&mut tb, Verb::Ping { src: "sai".into(), dst: "pritu".into(), count: None, timeout_ms: None });
        assert_eq!(report["transmitted"], 3);
        assert!(report["text"].as_str().unwrap().ends_with(report["summary"].as_str().unwrap()));
        let nodes = json(&mut tb, Verb::ListNodes);
        assert_eq!(nodes[2]["name"], "nitin");
        assert_eq!(nodes[2]["index"], 2);
    }

    #[test]
    fn transmit_broadcast() {
        let mut tb = Testbed::default();
        for (i, n) in ["a", "b"].iter().enumerate() {
            tb.add_node(node(i as u8 + 1, n)).unwrap();
        }
        let frame = TransmitRequest {
            src: "a".into(),
            dst: "*".into(),
            protocol: Protocol::Udp,
            port: 7,
            payload_hex: "00ff".into(),
        };
        let d = json(&mut tb, Verb::Transmit { frame });
        assert_eq!(d["delivered_to"], json!(["b"]));
        let err = dispatch(&mut tb, Verb::CurrentDot).unwrap_err();
        assert_eq!(err.http_status(), 404);
    }
}
