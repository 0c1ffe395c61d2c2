//! `manet`: run the control service or a node agent, talk to a running
//! service, or work with scenario files offline.

use std::io::{self, BufRead, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use manet_core::adversary::{AttackKind, AttackProtocol, AttackSpec};
use manet_core::api::{ServeConfig, TickPolicy};
use manet_core::backend::{self, AgentConfig, RemoteBackend, DEFAULT_AGENT_PORT};
use manet_core::emu::Protocol;
use manet_core::registry::NodeRecord;
use manet_core::rules;
use manet_core::scenario::Scenario;
use manet_core::testbed::{Backend, TestbedConfig, DEFAULT_WIRELESS_IFNAME};
use manet_core::topology::{to_dot, GenParams, Topology, DEFAULT_MAX_ATTEMPTS};
use manet_core::traffic::DEFAULT_PAYLOAD_LEN;
use manet_core::Registry;

const DEFAULT_SERVER: &str = "http://127.0.0.1:7070";

#[derive(Parser)]
#[command(name = "manet", version, about = "MANET emulation testbed")]
struct Cli {
    /// Control service base URL.
    #[arg(long, global = true, env = "MANET_SERVER", default_value = DEFAULT_SERVER)]
    server: String,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the control service.
    Serve(ServeArgs),
    /// Run the node-side agent that receives rulesets and commands.
    Agent(AgentArgs),
    /// Generate a scenario file without a service.
    Gen(GenArgs),
    /// Print one topology of a scenario file as DOT.
    Dot(OfflineTopology),
    /// Print the iptables script one node gets for a scenario topology.
    Script(ScriptArgs),

    /// GET /health
    Health,
    /// Node registry
    #[command(subcommand)]
    Nodes(NodesCmd),
    /// Scenarios and topology control
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// GET /topology/current.dot
    Topology,
    /// Adversary attacks
    #[command(subcommand)]
    Attack(AttackCmd),
    /// POST /inject
    Inject {
        #[arg(long)]
        as_node: String,
        #[arg(long)]
        hex: String,
    },
    /// Traffic flows
    #[command(subcommand)]
    Flow(FlowCmd),
    /// POST /probe/ping
    Ping {
        src: String,
        dst: String,
        #[arg(long)]
        count: Option<u32>,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// POST /transmit
    Transmit {
        src: String,
        /// Destination node, or `*` for broadcast.
        dst: String,
        #[arg(long)]
        protocol: Protocol,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value = "")]
        payload_hex: String,
    },
    /// POST /exec
    Exec {
        node: String,
        #[arg(required = true, trailing_var_arg = true, allow_hyphen_values = true)]
        command: Vec<String>,
    },
    /// POST /tick
    Tick {
        #[arg(long, default_value_t = 0)]
        us: u64,
        #[arg(long, default_value_t = 0)]
        seconds: u64,
    },
    /// GET /trace
    Trace,
    /// GET /events
    Events {
        #[arg(long, default_value_t = 0)]
        from: usize,
        /// Print the events so far and exit.
        #[arg(long)]
        no_follow: bool,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: SocketAddr,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    attacks: Option<PathBuf>,
    /// simulated or remote
    #[arg(long, default_value = "simulated")]
    backend: String,
    #[arg(long, default_value_t = DEFAULT_AGENT_PORT)]
    agent_port: u16,
    #[arg(long, default_value = "realtime")]
    tick: TickPolicy,
    #[arg(long, default_value = DEFAULT_WIRELESS_IFNAME)]
    ifname: String,
    #[arg(long, default_value_t = manet_core::emu::DEFAULT_LINK_LATENCY_US)]
    latency_us: u64,
}

#[derive(Args)]
struct AgentArgs {
    #[arg(long, default_value_t = SocketAddr::from((Ipv4Addr::UNSPECIFIED, DEFAULT_AGENT_PORT)))]
    listen: SocketAddr,
    #[arg(long, default_value = "/tmp/manet-rules.sh")]
    script_path: PathBuf,
    /// Execute received scripts instead of only storing them.
    #[arg(long)]
    apply: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "scenario")]
    name: String,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 1)]
    topologies: u32,
    #[arg(long)]
    density: u8,
    #[arg(long)]
    maxdeg: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
}

#[derive(Args)]
struct OfflineTopology {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long, default_value_t = 0)]
    seq: u32,
}

#[derive(Args)]
struct ScriptArgs {
    #[command(flatten)]
    topology: OfflineTopology,
    #[arg(long)]
    node: String,
    #[arg(long, default_value = DEFAULT_WIRELESS_IFNAME)]
    ifname: String,
    /// Compile even if the topology is rejected.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum NodesCmd {
    /// GET /nodes
    List,
    /// POST /nodes
    Add { name: String, wired_ip: String, wired_mac: String, wireless_ip: String, wireless_mac: String },
    /// DELETE /nodes
    Remove { name: String },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// POST /scenarios (generate)
    Build {
        #[arg(long)]
        name: String,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        topologies: u32,
        #[arg(long)]
        density: u8,
        #[arg(long)]
        maxdeg: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        interval: Option<u64>,
        #[arg(long)]
        max_attempts: Option<u32>,
    },
    /// POST /scenarios (from a scenario file)
    Load { file: PathBuf },
    /// GET /scenarios
    List,
    /// GET /scenarios/{name}
    Show { name: String },
    /// GET /scenarios/{name}/file
    File { name: String },
    /// GET /scenarios/{name}/topology/{seq}
    Dot { name: String, seq: u32 },
    /// POST /scenarios/{name}/apply/{seq}
    Apply {
        name: String,
        seq: u32,
        #[arg(long)]
        force: bool,
    },
    /// POST /scenarios/{name}/play
    Play {
        name: String,
        #[arg(long)]
        from: u32,
        #[arg(long)]
        to: u32,
    },
    /// DELETE /scenarios/{name}/play
    Stop { name: String },
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    name: String,
    #[arg(long)]
    target: String,
    /// TCP, UDP, ICMP or ALL
    #[arg(long)]
    protocol: AttackProtocol,
    /// BlockIncoming, BlockOutgoing, BlockBoth or PeriodicLoss
    #[arg(long)]
    kind: AttackKind,
    #[arg(long)]
    loss_s: Option<u32>,
    #[arg(long)]
    normal_s: Option<u32>,
    #[arg(long)]
    cycles: Option<u32>,
}

impl AttackArgs {
    fn spec(&self) -> AttackSpec {
        let mut spec = AttackSpec::new(&self.name, &self.target, self.protocol, self.kind);
        spec.loss_dur_s = self.loss_s.unwrap_or(spec.loss_dur_s);
        spec.normal_dur_s = self.normal_s.unwrap_or(spec.normal_dur_s);
        spec.cycles = self.cycles.unwrap_or(spec.cycles);
        spec
    }
}

#[derive(Subcommand)]
enum AttackCmd {
    /// POST /attacks
    Launch(AttackArgs),
    /// GET /attacks
    List,
    /// DELETE /attacks
    Stop { id: u64 },
    /// POST /attacks/saved
    Save(AttackArgs),
    /// POST /attacks/replay/{name}
    Replay { name: String },
}

#[derive(Subcommand)]
enum FlowCmd {
    /// POST /flows
    Start {
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long)]
        protocol: Protocol,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long)]
        delay_ms: u64,
        #[arg(long, default_value_t = DEFAULT_PAYLOAD_LEN)]
        payload_len: usize,
        #[arg(long)]
        count: Option<u64>,
    },
    /// GET /flows
    List,
    /// GET /flows/{id}
    Stats { id: u64 },
    /// DELETE /flows
    Stop { id: u64 },
}

enum Method {
    Get,
    Post,
    Delete,
}

struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    fn new(base: &str) -> Result<Self, String> {
        let http = reqwest::blocking::Client::builder().timeout(None).build().map_err(|e| e.to_string())?;
        Ok(Self { base: base.trim_end_matches('/').to_string(), http })
    }

    fn send(&self, method: Method, path: &str, body: Option<Value>) -> Result<reqwest::blocking::Response, String> {
        let url = format!("{}{path}", self.base);
        let req = match method {
            Method::Get => self.http.get(&url),
            Method::Post => self.http.post(&url),
            Method::Delete => self.http.delete(&url),
        };
        let req = match body {
            Some(b) => req.json(&b),
            None => req,
        };
        req.send().map_err(|e| format!("{url}: {e}"))
    }

    /// Prints the response body exactly as received.
    fn print(&self, method: Method, path: &str, body: Option<Value>) -> Result<ExitCode, String> {
        let resp = self.send(method, path, body)?;
        let ok = resp.status().is_success();
        let bytes = resp.bytes().map_err(|e| e.to_string())?;
        io::stdout().write_all(&bytes).map_err(|e| e.to_string())?;
        Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("manet: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn offline_topology(args: &OfflineTopology) -> Result<(Registry, Topology), String> {
    let registry = Registry::load(&read(&args.registry)?).map_err(|e| e.to_string())?;
    let scenario = Scenario::load(&read(&args.scenario)?).map_err(|e| e.to_string())?;
    let t = scenario.topology(args.seq).map_err(|e| e.to_string())?;
    if t.len() > registry.len() {
        return Err(format!("topology has {} nodes, registry only {}", t.len(), registry.len()));
    }
    let widened = Topology { adjacency: t.adjacency.embed(registry.len()), ..t.clone() };
    Ok((registry, widened))
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let client = || Client::new(&cli.server);
    let enc = |s: &str| s.replace('%', "%25").replace('/', "%2F").replace(' ', "%20");
    match &cli.command {
        Cmd::Serve(a) => {
            let backend = match a.backend.as_str() {
                "simulated" => Backend::Simulated,
                "remote" => Backend::Remote(RemoteBackend { port: a.agent_port, ..RemoteBackend::default() }),
                other => return Err(format!("unknown backend `{other}` (expected simulated or remote)")),
            };
            let config = ServeConfig {
                listen: a.listen,
                registry_path: a.registry.clone(),
                attacks_path: a.attacks.clone(),
                testbed: TestbedConfig { backend, link_latency_us: a.latency_us, wireless_ifname: a.ifname.clone() },
                tick: a.tick,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(manet_core::api::serve(config)).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Agent(a) => {
            let listener = TcpListener::bind(a.listen).map_err(|e| format!("{}: {e}", a.listen))?;
            log::info!("agent listening on {}", a.listen);
            let config = AgentConfig { script_path: a.script_path.clone(), apply: a.apply };
            backend::run_agent(listener, &config).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gen(a) => {
            let mut params = GenParams::new(a.nodes, a.density, a.maxdeg, a.seed);
            params.max_attempts = a.max_attempts;
            let mut sc = Scenario::build(&a.name, params, a.topologies).map_err(|e| e.to_string())?;
            if let Some(i) = a.interval {
                sc.interval_s = i;
            }
            print!("{}", sc.save());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Dot(a) => {
            let (registry, t) = offline_topology(a)?;
            print!("{}", to_dot(&t, &registry.names()).map_err(|e| e.to_string())?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Script(a) => {
            let (registry, t) = offline_topology(&a.topology)?;
            let index = registry.index_of(&a.node).ok_or_else(|| format!("unknown node `{}`", a.node))?;
            let rulesets = rules::compile(&t, &registry, a.force).map_err(|e| e.to_string())?;
            print!("{}", rules::emit_script(&rulesets[index], &a.ifname));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Health => client()?.print(Method::Get, "/health", None),
        Cmd::Nodes(c) => {
            let cl = client()?;
            match c {
                NodesCmd::List => cl.print(Method::Get, "/nodes", None),
                NodesCmd::Add { name, wired_ip, wired_mac, wireless_ip, wireless_mac } => {
                    let rec = NodeRecord::parse(name, wired_ip, wired_mac, wireless_ip, wireless_mac)
                        .map_err(|e| e.to_string())?;
                    cl.print(Method::Post, "/nodes", Some(json!(rec)))
                }
                NodesCmd::Remove { name } => cl.print(Method::Delete, "/nodes", Some(json!({ "name": name }))),
            }
        }
        Cmd::Scenario(c) => {
            let cl = client()?;
            match c {
                ScenarioCmd::Build { name, nodes, topologies, density, maxdeg, seed, interval, max_attempts } => {
                    let mut body = json!({
                        "name": name, "nodes": nodes, "topologies": topologies,
                        "density": density, "maxdeg": maxdeg, "seed": seed,
                    });
                    if let Some(i) = interval {
                        body["interval"] = json!(i);
                    }
                    if let Some(m) = max_attempts {
                        body["max_attempts"] = json!(m);
                    }
                    cl.print(Method::Post, "/scenarios", Some(body))
                }
                ScenarioCmd::Load { file } => {
                    cl.print(Method::Post, "/scenarios", Some(json!({ "file": read(file)? })))
                }
                ScenarioCmd::List => cl.print(Method::Get, "/scenarios", None),
                ScenarioCmd::Show { name } => cl.print(Method::Get, &format!("/scenarios/{}", enc(name)), None),
                ScenarioCmd::File { name } => cl.print(Method::Get, &format!("/scenarios/{}/file", enc(name)), None),
                ScenarioCmd::Dot { name, seq } => {
                    cl.print(Method::Get, &format!("/scenarios/{}/topology/{seq}", enc(name)), None)
                }
                ScenarioCmd::Apply { name, seq, force } => {
                    let q = if *force { "?force=true" } else { "" };
                    cl.print(Method::Post, &format!("/scenarios/{}/apply/{seq}{q}", enc(name)), None)
                }
                ScenarioCmd::Play { name, from, to } => cl.print(
                    Method::Post,
                    &format!("/scenarios/{}/play", enc(name)),
                    Some(json!({ "from": from, "to": to })),
                ),
                ScenarioCmd::Stop { name } => cl.print(Method::Delete, &format!("/scenarios/{}/play", enc(name)), None),
            }
        }
        Cmd::Topology => client()?.print(Method::Get, "/topology/current.dot", None),
        Cmd::Attack(c) => {
            let cl = client()?;
            match c {
                AttackCmd::Launch(a) => cl.print(Method::Post, "/attacks", Some(json!(a.spec()))),
                AttackCmd::List => cl.print(Method::Get, "/attacks", None),
                AttackCmd::Stop { id } => cl.print(Method::Delete, "/attacks", Some(json!({ "id": id }))),
                AttackCmd::Save(a) => cl.print(Method::Post, "/attacks/saved", Some(json!(a.spec()))),
                AttackCmd::Replay { name } => cl.print(Method::Post, &format!("/attacks/replay/{}", enc(name)), None),
            }
        }
        Cmd::Inject { as_node, hex } => {
            client()?.print(Method::Post, "/inject", Some(json!({ "hex": hex, "as_node": as_node })))
        }
        Cmd::Flow(c) => {
            let cl = client()?;
            match c {
                FlowCmd::Start { src, dst, protocol, port, delay_ms, payload_len, count } => cl.print(
                    Method::Post,
                    "/flows",
                    Some(json!({
                        "src": src, "dst": dst, "protocol": protocol, "port": port,
                        "delay_ms": delay_ms, "payload_len": payload_len, "count": count,
                    })),
                ),
                FlowCmd::List => cl.print(Method::Get, "/flows", None),
                FlowCmd::Stats { id } => cl.print(Method::Get, &format!("/flows/{id}"), None),
                FlowCmd::Stop { id } => cl.print(Method::Delete, "/flows", Some(json!({ "id": id }))),
            }
        }
        Cmd::Ping { src, dst, count, timeout_ms } => {
            let mut body = json!({ "src": src, "dst": dst });
            if let Some(c) = count {
                body["count"] = json!(c);
            }
            if let Some(t) = timeout_ms {
                body["timeout_ms"] = json!(t);
            }
            client()?.print(Method::Post, "/probe/ping", Some(body))
        }
        Cmd::Transmit { src, dst, protocol, port, payload_hex } => client()?.print(
            Method::Post,
            "/transmit",
            Some(json!({ "src": src, "dst": dst, "protocol": protocol, "port": port, "payload_hex": payload_hex })),
        ),
        Cmd::Exec { node, command } => {
            client()?.print(Method::Post, "/exec", Some(json!({ "node": node, "command": command.join(" ") })))
        }
        Cmd::Tick { us, seconds } => {
            client()?.print(Method::Post, "/tick", Some(json!({ "us": us, "seconds": seconds })))
        }
        Cmd::Trace => client()?.print(Method::Get, "/trace", None),
        Cmd::Events { from, no_follow } => {
            let path = format!("/events?from={from}&follow={}", !no_follow);
            let resp = client()?.send(Method::Get, &path, None)?;
            let ok = resp.status().is_success();
            let mut out = io::stdout().lock();
            for line in io::BufReader::new(resp).lines() {
                let line = line.map_err(|e| e.to_string())?;
                writeln!(out, "{line}").map_err(|e| e.to_string())?;
                out.flush().map_err(|e| e.to_string())?;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
