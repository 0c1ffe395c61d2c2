//! Control channel to real testbed nodes over their wired interface.
//!
//! Each member node runs an agent listening on TCP. The controller sends one
//! request per connection:
//!
//! ```text
//! SCRIPT <len>\n<len bytes of shell script>
//! EXEC <len>\n<len bytes of command line>
//! ```
//!
//! and the agent answers `ACK <exit_code> <len>\n<len bytes of output>`, or
//! `ERR <len>\n<message>` when the request itself is malformed.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use crate::probe::ExecOutput;

pub const DEFAULT_AGENT_PORT: u16 = 7117;
const MAX_BODY: usize = 16 << 20;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("node {addr}: {source}")]
    Io { addr: SocketAddr, source: io::Error },
    #[error("node {addr}: protocol error: {message}")]
    Protocol { addr: SocketAddr, message: String },
    #[error("node {addr} rejected the script (exit {exit_code}): {output}")]
    ScriptFailed { addr: SocketAddr, exit_code: i32, output: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    Script,
    Exec,
}

impl Verb {
    fn as_str(self) -> &'static str {
        match self {
            Verb::Script => "SCRIPT",
            Verb::Exec => "EXEC",
        }
    }
}

/// Client side of the control channel.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    pub port: u16,
    pub timeout: Duration,
}

impl Default for RemoteBackend {
    fn default() -> Self {
        Self { port: DEFAULT_AGENT_PORT, timeout: Duration::from_secs(10) }
    }
}

impl RemoteBackend {
    pub fn addr(&self, wired_ip: Ipv4Addr) -> SocketAddr {
        SocketAddr::from((wired_ip, self.port))
    }

    /// Uploads and runs a ruleset script on a node.
    pub fn push_script(&self, wired_ip: Ipv4Addr, script: &str) -> Result<(), BackendError> {
        let addr = self.addr(wired_ip);
        let out = self.request(addr, Verb::Script, script)?;
        if out.exit_code != 0 {
            return Err(BackendError::ScriptFailed { addr, exit_code: out.exit_code, output: out.output });
        }
        Ok(())
    }

    pub fn exec(&self, wired_ip: Ipv4Addr, command: &str) -> Result<ExecOutput, BackendError> {
        self.request(self.addr(wired_ip), Verb::Exec, command)
    }

    fn request(&self, addr: SocketAddr, verb: Verb, body: &str) -> Result<ExecOutput, BackendError> {
        let io_err = |source| BackendError::Io { addr, source };
        let mut stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(io_err)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(io_err)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(io_err)?;
        write!(stream, "{} {}\n{}", verb.as_str(), body.len(), body).map_err(io_err)?;
        stream.flush().map_err(io_err)?;
        let mut reader = BufReader::new(stream);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(io_err)?;
        let proto = |message: String| BackendError::Protocol { addr, message };
        let words: Vec<&str> = header.split_whitespace().collect();
        match words[..] {
            ["ACK", code, len] => {
                let exit_code = code.parse().map_err(|_| proto(format!("bad exit code `{code}`")))?;
                let body = read_body(&mut reader, len).map_err(|e| proto(e.to_string()))?;
                Ok(ExecOutput { exit_code, output: body })
            }
            ["ERR", len] => {
                let body = read_body(&mut reader, len).map_err(|e| proto(e.to_string()))?;
                Err(proto(body))
            }
            _ => Err(proto(format!("unexpected reply `{}`", header.trim_end()))),
        }
    }
}

fn read_body(reader: &mut impl Read, len: &str) -> io::Result<String> {
    let len: usize =
        len.parse().map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("bad length `{len}`")))?;
    if len > MAX_BODY {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("body of {len} bytes too large")));
    }
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Node-side agent settings.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Where received ruleset scripts are written.
    pub script_path: PathBuf,
    /// Run received scripts with `sh`; otherwise only store them.
    pub apply: bool,
}

/// Serves control requests until the listener fails.
pub fn run_agent(listener: TcpListener, config: &AgentConfig) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        if let Err(e) = handle_agent_request(stream, config) {
            log::warn!("agent request failed: {e}");
        }
    }
    Ok(())
}

pub fn handle_agent_request(stream: TcpStream, config: &AgentConfig) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let words: Vec<&str> = header.split_whitespace().collect();
    let reply = match words[..] {
        [verb @ ("SCRIPT" | "EXEC"), len] => match read_body(&mut reader, len) {
            Ok(body) if verb == "SCRIPT" => Ok(store_script(&body, config)),
            Ok(body) => Ok(run_shell(&body)),
            Err(e) => Err(e.to_string()),
        },
        _ => Err(format!("unknown request `{}`", header.trim_end())),
    };
    match reply {
        Ok(out) => write!(writer, "ACK {} {}\n{}", out.exit_code, out.output.len(), out.output)?,
        Err(msg) => write!(writer, "ERR {}\n{}", msg.len(), msg)?,
    }
    writer.flush()
}

fn store_script(script: &str, config: &AgentConfig) -> ExecOutput {
    if let Err(e) = std::fs::write(&config.script_path, script) {
        return ExecOutput { exit_code: 1, output: format!("cannot write {}: {e}\n", config.script_path.display()) };
    }
    if !config.apply {
        return ExecOutput { exit_code: 0, output: String::new() };
    }
    run_command(Command::new("sh").arg(&config.script_path))
}

fn run_shell(command: &str) -> ExecOutput {
    run_command(Command::new("sh").arg("-c").arg(command))
}

fn run_command(cmd: &mut Command) -> ExecOutput {
    match cmd.output() {
        Ok(out) => {
            let mut output = String::from_utf8_lossy(&out.stdout).into_owned();
            output.push_str(&String::from_utf8_lossy(&out.stderr));
            ExecOutput { exit_code: out.status.code().unwrap_or(-1), output }
        }
        Err(e) => ExecOutput { exit_code: 127, output: format!("{e}\n") },
    }
}
