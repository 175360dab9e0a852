//! Session service: newline-delimited JSON over TCP.
//!
//! Every connection is an observer. On connect it receives a `snapshot`
//! message followed by the live event tail. The first connection to send a
//! `control` message becomes the operator; control messages from any other
//! connection are rejected until the operator disconnects.
//!
//! Outbound messages are queued per observer. When a queue is full the oldest
//! `emg_frame` message is dropped; no other kind is ever dropped.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};

use crate::classifier::KnnModel;
use crate::session::{
    encode_event, write_log, EndReason, EventBody, LogHeader, Protocol, SessionConfig, SessionError,
    SessionEvent, SessionLog, SessionRunner, SessionStatus, SessionView, WIRE_VERSION,
};
use crate::signal::SampleStream;

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const MAX_LINE_BYTES: usize = 1 << 20;

const POLL: Duration = Duration::from_millis(20);

/// Where served events come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// A live pipeline over a recorded or synthetic signal.
    Live {
        samples: SampleStream,
        model: Arc<KnnModel>,
        config: SessionConfig,
        protocol: Protocol,
    },
    /// Re-emits a recorded log.
    Replay(SessionLog),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Session seconds per wall-clock second; `None` runs as fast as possible.
    pub speed: Option<f64>,
    pub queue_capacity: usize,
    /// Start the session without waiting for an operator.
    pub autostart: bool,
    /// Where to write the log of each live session when it ends.
    pub record: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 0)),
            speed: Some(1.0),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            autostart: false,
            record: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlAction {
    Start,
    Pause,
    Abort,
    SelectProtocol(Protocol),
}

/// Structured error reply. `code` is stable; `message` is for humans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WireError {
    pub code: &'static str,
    pub message: String,
}

impl WireError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Parses one inbound line.
pub fn parse_inbound(line: &[u8]) -> Result<ControlAction, WireError> {
    let text = std::str::from_utf8(line).map_err(|e| WireError::new("invalid_utf8", e.to_string()))?;
    let value: Value =
        serde_json::from_str(text).map_err(|e| WireError::new("malformed_json", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| WireError::new("malformed_message", "message must be a JSON object"))?;
    match obj.get("v") {
        Some(v) if v.as_u64() == Some(WIRE_VERSION) => {}
        Some(v) => return Err(WireError::new("unsupported_version", format!("unsupported wire version {v}"))),
        None => return Err(WireError::new("malformed_message", "missing wire version `v`")),
    }
    match obj.get("type").and_then(Value::as_str) {
        Some("control") => {}
        Some(other) => return Err(WireError::new("unknown_type", format!("unknown message type `{other}`"))),
        None => return Err(WireError::new("malformed_message", "missing message `type`")),
    }
    match obj.get("action").and_then(Value::as_str) {
        Some("start") => Ok(ControlAction::Start),
        Some("pause") => Ok(ControlAction::Pause),
        Some("abort") => Ok(ControlAction::Abort),
        Some("select_protocol") => {
            let p = obj
                .get("protocol")
                .ok_or_else(|| WireError::new("invalid_protocol", "select_protocol needs a `protocol`"))?;
            let protocol: Protocol = serde_json::from_value(p.clone())
                .map_err(|e| WireError::new("invalid_protocol", e.to_string()))?;
            protocol
                .validate()
                .map_err(|e| WireError::new("invalid_protocol", e.to_string()))?;
            Ok(ControlAction::SelectProtocol(protocol))
        }
        Some(other) => Err(WireError::new("unknown_action", format!("unknown action `{other}`"))),
        None => Err(WireError::new("malformed_message", "missing control `action`")),
    }
}

#[derive(Debug)]
struct Outbound {
    droppable: bool,
    line: String,
}

#[derive(Debug, Default)]
struct QueueState {
    items: VecDeque<Outbound>,
    closed: bool,
}

/// Per-observer outbound queue.
#[derive(Debug)]
pub struct ObserverQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
    dropped: AtomicU64,
}

impl ObserverQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            state: Mutex::new(QueueState::default()),
            ready: Condvar::new(),
            dropped: AtomicU64::new(0),
        }
    }

    /// Enqueues a line. A full queue first sheds its oldest droppable entry,
    /// then the new entry itself if it is droppable; other entries are always
    /// kept.
    pub fn push(&self, line: String, droppable: bool) {
        let mut st = lock(&self.state);
        if st.closed {
            return;
        }
        if st.items.len() >= self.capacity {
            if let Some(i) = st.items.iter().position(|o| o.droppable) {
                st.items.remove(i);
                self.dropped.fetch_add(1, Ordering::Relaxed);
            } else if droppable {
                self.dropped.fetch_add(1, Ordering::Relaxed);
                return;
            }
        }
        st.items.push_back(Outbound { droppable, line });
        self.ready.notify_one();
    }

    /// Waits up to `timeout` for a line. `Err(())` once closed and drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Result<Option<String>, ()> {
        let mut st = lock(&self.state);
        if st.items.is_empty() && !st.closed {
            st = self
                .ready
                .wait_timeout(st, timeout)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        match st.items.pop_front() {
            Some(o) => Ok(Some(o.line)),
            None if st.closed => Err(()),
            None => Ok(None),
        }
    }

    pub fn len(&self) -> usize {
        lock(&self.state).items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn close(&self) {
        lock(&self.state).closed = true;
        self.ready.notify_all();
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn envelope(t_s: f64, kind: &str, mut fields: Value) -> String {
    let obj = fields.as_object_mut().expect("object payload");
    obj.insert("v".into(), WIRE_VERSION.into());
    obj.insert("t_s".into(), t_s.into());
    obj.insert("type".into(), kind.into());
    fields.to_string()
}

#[derive(Debug)]
struct Observer {
    id: u64,
    queue: Arc<ObserverQueue>,
}

#[derive(Debug)]
struct HubState {
    view: SessionView,
    protocol: Option<Protocol>,
    observers: Vec<Observer>,
    operator: Option<u64>,
}

/// Shared state between the engine and the connections.
#[derive(Debug)]
struct Hub {
    state: Mutex<HubState>,
    capacity: usize,
}

impl Hub {
    fn snapshot_line(st: &HubState) -> String {
        envelope(
            st.view.t_s,
            "snapshot",
            json!({ "state": st.view, "protocol": st.protocol }),
        )
    }

    /// Registers an observer; its first message is the snapshot.
    fn join(&self, id: u64) -> Arc<ObserverQueue> {
        let queue = Arc::new(ObserverQueue::new(self.capacity));
        let mut st = lock(&self.state);
        queue.push(Self::snapshot_line(&st), false);
        st.observers.push(Observer {
            id,
            queue: queue.clone(),
        });
        queue
    }

    fn leave(&self, id: u64) {
        let mut st = lock(&self.state);
        st.observers.retain(|o| o.id != id);
        if st.operator == Some(id) {
            st.operator = None;
        }
    }

    fn publish(&self, e: &SessionEvent) {
        let line = encode_event(e);
        let droppable = matches!(e.body, EventBody::EmgFrame { .. });
        let mut st = lock(&self.state);
        st.view.apply(e);
        for o in &st.observers {
            o.queue.push(line.clone(), droppable);
        }
    }

    /// Replaces the view (e.g. on pause or a new session) and broadcasts the
    /// new snapshot.
    fn reset(&self, f: impl FnOnce(&mut HubState)) {
        let mut st = lock(&self.state);
        f(&mut st);
        let line = Self::snapshot_line(&st);
        for o in &st.observers {
            o.queue.push(line.clone(), false);
        }
    }

    fn claim_operator(&self, id: u64) -> bool {
        let mut st = lock(&self.state);
        match st.operator {
            Some(op) => op == id,
            None => {
                st.operator = Some(id);
                true
            }
        }
    }

    fn t_s(&self) -> f64 {
        lock(&self.state).view.t_s
    }

    fn close_all(&self) {
        let st = lock(&self.state);
        for o in &st.observers {
            o.queue.close();
        }
    }
}

enum EngineCmd {
    Control(ControlAction, Sender<Result<(), WireError>>),
}

/// Running service. Dropping the handle shuts it down.
#[derive(Debug)]
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    hub: Arc<Hub>,
    threads: Vec<JoinHandle<()>>,
    engine_done: Arc<AtomicBool>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Current session state as an observer would see it.
    pub fn view(&self) -> SessionView {
        lock(&self.hub.state).view.clone()
    }

    /// True once the engine thread has exited (only on shutdown).
    pub fn is_stopped(&self) -> bool {
        self.engine_done.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.hub.close_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

/// Binds, spawns the engine and accept threads, and returns immediately.
pub fn serve(cfg: ServiceConfig, source: Source) -> io::Result<ServiceHandle> {
    if let Source::Live { model, config, protocol, .. } = &source {
        SessionRunner::new(protocol.clone(), model.clone(), config.clone())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    }
    let listener = TcpListener::bind(cfg.bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let protocol = match &source {
        Source::Live { protocol, .. } => protocol.clone(),
        Source::Replay(log) => log.header.protocol.clone(),
    };
    let hub = Arc::new(Hub {
        state: Mutex::new(HubState {
            view: SessionView::default(),
            protocol: Some(protocol),
            observers: Vec::new(),
            operator: None,
        }),
        capacity: cfg.queue_capacity,
    });
    let stop = Arc::new(AtomicBool::new(false));
    let engine_done = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let engine = {
        let hub = hub.clone();
        let stop = stop.clone();
        let done = engine_done.clone();
        let cfg = cfg.clone();
        thread::Builder::new().name("session-engine".into()).spawn(move || {
            Engine::new(hub, source, cfg).run(rx, &stop);
            done.store(true, Ordering::SeqCst);
        })?
    };
    let acceptor = {
        let hub = hub.clone();
        let stop = stop.clone();
        thread::Builder::new()
            .name("session-accept".into())
            .spawn(move || accept_loop(listener, hub, tx, stop))?
    };
    Ok(ServiceHandle {
        addr,
        stop,
        hub,
        threads: vec![engine, acceptor],
        engine_done,
    })
}

fn accept_loop(listener: TcpListener, hub: Arc<Hub>, tx: Sender<EngineCmd>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    let mut conns: Vec<(TcpStream, JoinHandle<()>, JoinHandle<()>)> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::debug!("observer {next_id} connected from {peer}");
                match spawn_connection(next_id, stream, &hub, &tx, &stop) {
                    Ok(c) => conns.push(c),
                    Err(e) => log::warn!("connection setup failed: {e}"),
                }
                next_id += 1;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        conns.retain(|(_, r, w)| !(r.is_finished() && w.is_finished()));
    }
    for (s, r, w) in conns {
        let _ = s.shutdown(Shutdown::Both);
        let _ = r.join();
        let _ = w.join();
    }
}

fn spawn_connection(
    id: u64,
    stream: TcpStream,
    hub: &Arc<Hub>,
    tx: &Sender<EngineCmd>,
    stop: &Arc<AtomicBool>,
) -> io::Result<(TcpStream, JoinHandle<()>, JoinHandle<()>)> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL * 5))?;
    let queue = hub.join(id);
    let write_half = stream.try_clone()?;
    let read_half = stream.try_clone()?;

    let writer = {
        let queue = queue.clone();
        let stop = stop.clone();
        thread::spawn(move || writer_loop(write_half, &queue, &stop))
    };
    let reader = {
        let hub = hub.clone();
        let tx = tx.clone();
        let stop = stop.clone();
        thread::spawn(move || {
            reader_loop(id, read_half, &hub, &queue, &tx, &stop);
            hub.leave(id);
            queue.close();
        })
    };
    Ok((stream, reader, writer))
}

fn writer_loop(stream: TcpStream, queue: &ObserverQueue, stop: &AtomicBool) {
    let mut w = BufWriter::new(stream);
    loop {
        match queue.pop_timeout(POLL) {
            Ok(Some(line)) => {
                if w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).is_err() {
                    break;
                }
                if queue.is_empty() && w.flush().is_err() {
                    break;
                }
            }
            Ok(None) => {
                if stop.load(Ordering::SeqCst) || w.flush().is_err() {
                    break;
                }
            }
            Err(()) => break,
        }
    }
    let _ = w.flush();
    let _ = w.get_ref().shutdown(Shutdown::Write);
}

fn reader_loop(
    id: u64,
    stream: TcpStream,
    hub: &Hub,
    queue: &ObserverQueue,
    tx: &Sender<EngineCmd>,
    stop: &AtomicBool,
) {
    let mut r = BufReader::new(stream);
    let mut line = Vec::new();
    let mut overflow = false;
    let reply_err = |e: WireError| {
        queue.push(envelope(hub.t_s(), "error", json!(e)), false);
    };
    while !stop.load(Ordering::SeqCst) {
        let buf = match r.fill_buf() {
            Ok([]) => break,
            Ok(b) => b,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => break,
        };
        let (chunk, complete) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..i], Some(i + 1)),
            None => (buf, None),
        };
        if !overflow {
            if line.len() + chunk.len() > MAX_LINE_BYTES {
                overflow = true;
                line.clear();
            } else {
                line.extend_from_slice(chunk);
            }
        }
        let consumed = complete.unwrap_or(buf.len());
        r.consume(consumed);
        if complete.is_none() {
            continue;
        }
        if overflow {
            reply_err(WireError::new(
                "line_too_long",
                format!("messages are limited to {MAX_LINE_BYTES} bytes"),
            ));
            overflow = false;
            continue;
        }
        let msg = std::mem::take(&mut line);
        let trimmed = msg.trim_ascii();
        if trimmed.is_empty() {
            continue;
        }
        match parse_inbound(trimmed) {
            Err(e) => reply_err(e),
            Ok(action) => {
                if !hub.claim_operator(id) {
                    reply_err(WireError::new(
                        "operator_conflict",
                        "another connection is the operator",
                    ));
                    continue;
                }
                let name = action_name(&action);
                let (rtx, rrx) = mpsc::channel();
                if tx.send(EngineCmd::Control(action, rtx)).is_err() {
                    reply_err(WireError::new("unavailable", "session engine has stopped"));
                    continue;
                }
                match rrx.recv() {
                    Ok(Ok(())) => queue.push(envelope(hub.t_s(), "ack", json!({ "action": name })), false),
                    Ok(Err(e)) => reply_err(e),
                    Err(_) => reply_err(WireError::new("unavailable", "session engine has stopped")),
                }
            }
        }
    }
}

fn action_name(a: &ControlAction) -> &'static str {
    match a {
        ControlAction::Start => "start",
        ControlAction::Pause => "pause",
        ControlAction::Abort => "abort",
        ControlAction::SelectProtocol(_) => "select_protocol",
    }
}

enum Run {
    Live {
        runner: SessionRunner,
        cursor: usize,
        events: Vec<SessionEvent>,
    },
    Replay {
        cursor: usize,
        last: Option<(u64, f64)>,
    },
}

/// Single control loop: owns the session and paces it against the wall clock.
struct Engine {
    hub: Arc<Hub>,
    source: Source,
    cfg: ServiceConfig,
    run: Option<Run>,
    replay_events: Vec<SessionEvent>,
    status: SessionStatus,
    /// Session seconds elapsed before the current running stretch.
    banked_s: f64,
    resumed_at: Option<Instant>,
}

impl Engine {
    fn new(hub: Arc<Hub>, source: Source, cfg: ServiceConfig) -> Self {
        let replay_events = match &source {
            Source::Replay(log) => crate::session::replay(log),
            Source::Live { .. } => Vec::new(),
        };
        Self {
            hub,
            source,
            cfg,
            run: None,
            replay_events,
            status: SessionStatus::Idle,
            banked_s: 0.0,
            resumed_at: None,
        }
    }

    fn run(mut self, rx: Receiver<EngineCmd>, stop: &AtomicBool) {
        if self.cfg.autostart {
            if let Err(e) = self.control(ControlAction::Start) {
                log::warn!("autostart failed: {}", e.message);
            }
        }
        while !stop.load(Ordering::SeqCst) {
            let wait = if self.status == SessionStatus::Running && self.cfg.speed.is_none() {
                Duration::ZERO
            } else if self.status == SessionStatus::Running {
                Duration::from_millis(2)
            } else {
                POLL
            };
            match rx.recv_timeout(wait) {
                Ok(EngineCmd::Control(action, reply)) => {
                    let _ = reply.send(self.control(action));
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    if self.status != SessionStatus::Running {
                        thread::sleep(POLL);
                    }
                }
            }
            if self.status == SessionStatus::Running {
                self.advance();
            }
        }
    }

    fn clock_s(&self) -> f64 {
        match (self.cfg.speed, self.resumed_at) {
            (None, _) => f64::INFINITY,
            (Some(speed), Some(at)) => self.banked_s + at.elapsed().as_secs_f64() * speed,
            (Some(_), None) => self.banked_s,
        }
    }

    fn control(&mut self, action: ControlAction) -> Result<(), WireError> {
        match action {
            ControlAction::Start => match self.status {
                SessionStatus::Running => Err(WireError::new("invalid_state", "session already running")),
                SessionStatus::Paused => {
                    self.status = SessionStatus::Running;
                    self.resumed_at = Some(Instant::now());
                    self.hub.reset(|st| st.view.status = SessionStatus::Running);
                    Ok(())
                }
                SessionStatus::Idle | SessionStatus::Ended => self.begin(),
            },
            ControlAction::Pause => {
                if self.status != SessionStatus::Running {
                    return Err(WireError::new("invalid_state", "session is not running"));
                }
                self.banked_s = self.clock_s().min(f64::MAX);
                self.resumed_at = None;
                self.status = SessionStatus::Paused;
                self.hub.reset(|st| st.view.status = SessionStatus::Paused);
                Ok(())
            }
            ControlAction::Abort => {
                if !matches!(self.status, SessionStatus::Running | SessionStatus::Paused) {
                    return Err(WireError::new("invalid_state", "no session in progress"));
                }
                self.abort();
                Ok(())
            }
            ControlAction::SelectProtocol(p) => {
                if matches!(self.status, SessionStatus::Running | SessionStatus::Paused) {
                    return Err(WireError::new("invalid_state", "cannot change protocol during a session"));
                }
                let Source::Live { model, config, protocol, .. } = &mut self.source else {
                    return Err(WireError::new("invalid_state", "a replay cannot change protocol"));
                };
                SessionRunner::new(p.clone(), model.clone(), config.clone())
                    .map_err(|e| WireError::new("invalid_protocol", e.to_string()))?;
                *protocol = p.clone();
                self.run = None;
                self.status = SessionStatus::Idle;
                self.hub.reset(|st| {
                    st.view = SessionView::default();
                    st.protocol = Some(p);
                });
                Ok(())
            }
        }
    }

    fn begin(&mut self) -> Result<(), WireError> {
        let run = match &self.source {
            Source::Live {
                model,
                config,
                protocol,
                ..
            } => Run::Live {
                runner: SessionRunner::new(protocol.clone(), model.clone(), config.clone())
                    .map_err(|e| WireError::new("invalid_protocol", e.to_string()))?,
                cursor: 0,
                events: Vec::new(),
            },
            Source::Replay(_) => Run::Replay { cursor: 0, last: None },
        };
        self.run = Some(run);
        self.banked_s = 0.0;
        self.resumed_at = Some(Instant::now());
        self.status = SessionStatus::Running;
        self.hub.reset(|st| {
            st.view = SessionView {
                status: SessionStatus::Running,
                ..SessionView::default()
            }
        });
        if let Some(Run::Live { runner, events, .. }) = &mut self.run {
            let started = runner.start();
            for e in &started {
                self.hub.publish(e);
            }
            events.extend(started);
        }
        Ok(())
    }

    fn advance(&mut self) {
        let due = self.clock_s();
        // Bounded batches keep the control channel responsive in fast mode.
        let budget = if self.cfg.speed.is_none() { 2000 } else { usize::MAX };
        let finished = match (&mut self.run, &self.source) {
            (Some(Run::Live { runner, cursor, events }), Source::Live { samples, .. }) => {
                let s = samples.samples();
                let rate = samples.sample_rate_hz();
                let t0 = s.first().map_or(0.0, |x| x.t);
                let mut n = 0;
                while *cursor < s.len() && s[*cursor].t - t0 <= due && n < budget && !runner.is_finished() {
                    let out = runner.push_sample(s[*cursor], rate);
                    for e in &out {
                        self.hub.publish(e);
                    }
                    events.extend(out);
                    *cursor += 1;
                    n += 1;
                }
                if *cursor >= s.len() && !runner.is_finished() {
                    let out = runner.end_of_source();
                    for e in &out {
                        self.hub.publish(e);
                    }
                    events.extend(out);
                }
                runner.is_finished()
            }
            (Some(Run::Replay { cursor, last }), Source::Replay(_)) => {
                let events = &self.replay_events;
                let mut n = 0;
                while *cursor < events.len() && events[*cursor].t_s <= due && n < budget {
                    let e = &events[*cursor];
                    self.hub.publish(e);
                    *last = Some((e.seq, e.t_s));
                    *cursor += 1;
                    n += 1;
                }
                *cursor >= events.len()
            }
            _ => false,
        };
        if finished {
            self.end();
        }
    }

    fn abort(&mut self) {
        match &mut self.run {
            Some(Run::Live { runner, events, .. }) => {
                let out = runner.abort(Some("operator abort".into()));
                for e in &out {
                    self.hub.publish(e);
                }
                events.extend(out);
            }
            Some(Run::Replay { last, .. }) => {
                let (seq, t_s) = last.map_or((0, 0.0), |(s, t)| (s + 1, t));
                self.hub.publish(&SessionEvent {
                    seq,
                    t_s,
                    body: EventBody::SessionEnd {
                        reason: EndReason::Abort,
                        detail: Some("operator abort".into()),
                    },
                });
            }
            None => {}
        }
        self.end();
    }

    fn end(&mut self) {
        self.status = SessionStatus::Ended;
        self.resumed_at = None;
        if let (Some(Run::Live { events, .. }), Some(path)) = (&self.run, &self.cfg.record) {
            if let Source::Live {
                model,
                config,
                protocol,
                ..
            } = &self.source
            {
                let log = SessionLog {
                    header: LogHeader::new(model, protocol, config),
                    events: events.clone(),
                };
                if let Err(e) = write_log_file(&log, path) {
                    log::error!("writing session log to {}: {e}", path.display());
                }
            }
        }
    }
}

fn write_log_file(log: &SessionLog, path: &PathBuf) -> Result<(), SessionError> {
    write_log(log, BufWriter::new(File::create(path)?))
}
