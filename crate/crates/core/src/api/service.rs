//! Single-writer command queue around a [`Testbed`].
//!
//! One thread owns the testbed and executes requests strictly in arrival
//! order. After each request, trace events it produced are published on a
//! broadcast channel in trace order.

use std::sync::mpsc;
use std::thread;
use std::time::SystemTime;

use serde::Serialize;
use tokio::sync::{broadcast, oneshot};

use super::{dispatch, Reply, Verb};
use crate::emu::TraceKind;
use crate::probe::ExecOutput;
use crate::testbed::{ExecTicket, Result, Testbed, TestbedError};

/// Capacity of the live event channel. A subscriber that falls further
/// behind than this is disconnected.
pub const EVENT_BUFFER: usize = 4096;

/// One trace line as published on the event stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventRecord {
    /// Position in the trace, starting at 0.
    pub index: usize,
    pub virtual_us: u64,
    pub kind: TraceKind,
    pub fields: String,
}

/// A request as executed by the queue.
#[derive(Debug, Clone)]
pub struct Command {
    pub id: u64,
    pub verb: Verb,
    pub issued_at: SystemTime,
}

/// Called after every successful mutating command.
pub type CommitHook = Box<dyn FnMut(&Command, &Testbed) + Send>;

enum Request {
    Dispatch { verb: Verb, issued_at: SystemTime, reply: oneshot::Sender<Result<Reply>> },
    BeginExec { node: String, command: String, reply: oneshot::Sender<Result<ExecTicket>> },
    EndExec { output: ExecOutput, reply: oneshot::Sender<Result<ExecOutput>> },
    History { from: usize, reply: oneshot::Sender<Vec<EventRecord>> },
}

#[derive(Clone)]
pub struct Service {
    tx: mpsc::Sender<Request>,
    events: broadcast::Sender<EventRecord>,
}

fn stopped() -> TestbedError {
    TestbedError::Invalid("control service stopped".into())
}

impl Service {
    /// Moves `testbed` onto its own thread.
    pub fn start(testbed: Testbed, hook: Option<CommitHook>) -> Self {
        let (tx, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let publisher = events.clone();
        thread::Builder::new()
            .name("testbed".into())
            .spawn(move || run(testbed, rx, publisher, hook))
            .expect("spawn testbed thread");
        Self { tx, events }
    }

    async fn request<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Request,
    ) -> std::result::Result<T, TestbedError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).map_err(|_| stopped())?;
        rx.await.map_err(|_| stopped())
    }

    /// Executes one command. `Exec` runs its blocking part off the queue so
    /// other requests are answered (with `Busy`) meanwhile.
    pub async fn call(&self, verb: Verb) -> Result<Reply> {
        if let Verb::Exec { node, command } = verb {
            return self.exec(node, command).await.map(Reply::json);
        }
        let issued_at = SystemTime::now();
        self.request(|reply| Request::Dispatch { verb, issued_at, reply }).await?
    }

    /// Blocking variant of [`Service::call`] for callers outside a runtime.
    /// Must not be used for `Exec`.
    pub fn call_blocking(&self, verb: Verb) -> Result<Reply> {
        let (reply, rx) = oneshot::channel();
        let issued_at = SystemTime::now();
        self.tx.send(Request::Dispatch { verb, issued_at, reply }).map_err(|_| stopped())?;
        rx.blocking_recv().map_err(|_| stopped())?
    }

    /// Runs a command on a node while holding the exclusivity lock. The lock
    /// is released even if the caller goes away mid-command.
    pub async fn exec(&self, node: String, command: String) -> Result<ExecOutput> {
        let svc = self.clone();
        let task = tokio::spawn(async move {
            let ticket = svc.request(|reply| Request::BeginExec { node, command, reply }).await??;
            let output = tokio::task::spawn_blocking(move || ticket.run())
                .await
                .unwrap_or_else(|e| ExecOutput { exit_code: -1, output: format!("{e}\n") });
            svc.request(|reply| Request::EndExec { output, reply }).await?
        });
        task.await.map_err(|e| TestbedError::Invalid(format!("exec task failed: {e}")))?
    }

    pub fn subscribe(&self) -> broadcast::Receiver<EventRecord> {
        self.events.subscribe()
    }

    /// Trace events from `from` up to the present.
    pub async fn history(&self, from: usize) -> Result<Vec<EventRecord>> {
        self.request(|reply| Request::History { from, reply }).await
    }
}

fn record(index: usize, e: &crate::emu::TraceEvent) -> EventRecord {
    EventRecord { index, virtual_us: e.virtual_us, kind: e.kind, fields: e.fields.clone() }
}

fn run(
    mut tb: Testbed,
    rx: mpsc::Receiver<Request>,
    events: broadcast::Sender<EventRecord>,
    mut hook: Option<CommitHook>,
) {
    let mut next_id = 1u64;
    let mut published = tb.trace().len();
    while let Ok(req) = rx.recv() {
        match req {
            Request::Dispatch { verb, issued_at, reply } => {
                let command = Command { id: next_id, verb, issued_at };
                next_id += 1;
                log::debug!("command {} {:?}", command.id, command.verb);
                let mutation = command.verb.is_mutation();
                let result = dispatch(&mut tb, command.verb.clone());
                if let (true, Ok(_), Some(h)) = (mutation, &result, hook.as_mut()) {
                    h(&command, &tb);
                }
                let _ = reply.send(result);
            }
            Request::BeginExec { node, command, reply } => {
                let _ = reply.send(tb.begin_exec(&node, &command));
            }
            Request::EndExec { output, reply } => {
                let _ = reply.send(tb.end_exec(output));
            }
            Request::History { from, reply } => {
                let start = from.min(tb.trace().len());
                let out = tb.trace().since(start).iter().enumerate().map(|(i, e)| record(start + i, e)).collect();
                let _ = reply.send(out);
            }
        }
        let trace = tb.trace();
        for (i, e) in trace.since(published).iter().enumerate() {
            // No subscribers is fine.
            let _ = events.send(record(published + i, e));
        }
        published = trace.len();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::tests::node;

    #[tokio::test]
    async fn exec_makes_concurrent_commands_busy() {
        let mut tb = Testbed::default();
        tb.add_node(node(1, "a")).unwrap();
        tb.add_node(node(2, "b")).unwrap();
        let svc = Service::start(tb, None);
        let mut events = svc.subscribe();
        let runner = svc.clone();
        let exec = tokio::spawn(async move { runner.exec("a".into(), "sleep 300".into()).await });
        // Wait for the lock to be taken.
        let start = events.recv().await.unwrap();
        assert_eq!(start.kind, TraceKind::ExecStart);
        let err = svc.call(Verb::Tick { us: 5 }).await.unwrap_err();
        assert_eq!(err.kind(), "Busy");
        assert!(matches!(svc.call(Verb::Health).await.unwrap(), Reply::Json(v) if v["busy"] == true));
        assert_eq!(exec.await.unwrap().unwrap().exit_code, 0);
        assert_eq!(events.recv().await.unwrap().kind, TraceKind::ExecEnd);
        svc.call(Verb::Tick { us: 5 }).await.unwrap();
        let history = svc.history(1).await.unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(history[0].index, 1);
    }
}
