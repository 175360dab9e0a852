use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use rehab_core::classifier::fit;
use rehab_core::corpus::{protocol_corpus, DEFAULT_SAMPLE_RATE_HZ};
use rehab_core::service::{serve, ServiceConfig, Source};
use rehab_core::session::{run_session, scripted_source, Protocol, SessionConfig};
use rehab_core::signal::{rectify, SegmentationConfig, SynthConfig};

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Self {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
        }
    }

    fn recv(&mut self) -> Value {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).expect("message before timeout");
        assert!(n > 0, "connection closed");
        serde_json::from_str(&line).unwrap()
    }

    fn recv_until(&mut self, pred: impl Fn(&Value) -> bool) -> Vec<Value> {
        let mut out = Vec::new();
        loop {
            let v = self.recv();
            let done = pred(&v);
            out.push(v);
            if done {
                return out;
            }
        }
    }

    fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).unwrap();
    }

    fn control(&mut self, action: &str) {
        let msg = json!({"v": 1, "t_s": 0.0, "type": "control", "action": action});
        self.send_raw(format!("{msg}\n").as_bytes());
    }
}

fn is_type(v: &Value, t: &str) -> bool {
    v["type"] == t
}

fn live_source(reps: u32) -> (Source, Protocol, SessionConfig, rehab_core::signal::SampleStream) {
    let model = Arc::new(fit(protocol_corpus(42).unwrap().train, 5, false).unwrap());
    let protocol = Protocol::alternating(reps, 10.0);
    let samples = scripted_source(&protocol, DEFAULT_SAMPLE_RATE_HZ, 1, &SynthConfig::default()).stream;
    let config = SessionConfig::new(SegmentationConfig::calibrate(&rectify(&samples)).unwrap());
    let source = Source::Live {
        samples: samples.clone(),
        model,
        config: config.clone(),
        protocol: protocol.clone(),
    };
    (source, protocol, config, samples)
}

#[test]
fn join_receives_snapshot_then_tail() {
    let (source, ..) = live_source(1);
    let cfg = ServiceConfig {
        speed: Some(20.0),
        autostart: true,
        ..ServiceConfig::default()
    };
    let handle = serve(cfg, source).unwrap();
    thread::sleep(Duration::from_millis(300));

    let mut c = Client::connect(handle.local_addr());
    let snap = c.recv();
    assert!(is_type(&snap, "snapshot"));
    assert_eq!(snap["v"], 1);
    assert!(snap["t_s"].is_number());
    assert_eq!(snap["state"]["status"], "running");
    let last = snap["state"]["last_seq"].as_u64().expect("events before join");

    let tail = c.recv_until(|v| is_type(v, "session_end"));
    let seqs: Vec<u64> = tail.iter().filter_map(|v| v["seq"].as_u64()).collect();
    assert_eq!(seqs[0], last + 1);
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    assert_eq!(tail.last().unwrap()["reason"], "completed");
    handle.shutdown();
}

#[test]
fn second_operator_is_rejected() {
    let (source, ..) = live_source(1);
    let handle = serve(ServiceConfig::default(), source).unwrap();
    let mut op = Client::connect(handle.local_addr());
    let mut other = Client::connect(handle.local_addr());
    assert!(is_type(&op.recv(), "snapshot"));
    assert!(is_type(&other.recv(), "snapshot"));

    op.control("start");
    let got = op.recv_until(|v| is_type(v, "ack"));
    assert_eq!(got.last().unwrap()["action"], "start");

    other.control("abort");
    let err = other.recv_until(|v| is_type(v, "error"));
    assert_eq!(err.last().unwrap()["code"], "operator_conflict");
    assert_eq!(handle.view().status, rehab_core::session::SessionStatus::Running);

    // Once the operator leaves, the role is free again.
    drop(op);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        other.control("pause");
        let reply = other.recv_until(|v| is_type(v, "error") || is_type(v, "ack"));
        if is_type(reply.last().unwrap(), "ack") {
            break;
        }
        assert!(Instant::now() < deadline, "operator role never released");
        thread::sleep(Duration::from_millis(50));
    }
    handle.shutdown();
}

#[test]
fn abort_is_broadcast_to_all_observers() {
    let (source, ..) = live_source(3);
    let handle = serve(ServiceConfig::default(), source).unwrap();
    let mut op = Client::connect(handle.local_addr());
    let mut watchers: Vec<Client> = (0..3).map(|_| Client::connect(handle.local_addr())).collect();
    op.recv();
    for w in &mut watchers {
        w.recv();
    }
    op.control("start");
    op.recv_until(|v| is_type(v, "instruction_shown"));
    op.control("abort");
    for c in watchers.iter_mut().chain(std::iter::once(&mut op)) {
        let end = c.recv_until(|v| is_type(v, "session_end"));
        assert_eq!(end.last().unwrap()["reason"], "abort");
    }
    assert_eq!(handle.view().end_reason, Some(rehab_core::session::EndReason::Abort));
    handle.shutdown();
}

#[test]
fn fuzzed_input_gets_structured_errors() {
    let (source, ..) = live_source(1);
    let handle = serve(ServiceConfig::default(), source).unwrap();
    let mut c = Client::connect(handle.local_addr());
    assert!(is_type(&c.recv(), "snapshot"));

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..300 {
        let len = rng.random_range(1..200);
        let mut line: Vec<u8> = (0..len).map(|_| rng.random::<u8>()).filter(|&b| b != b'\n').collect();
        if line.trim_ascii().is_empty() {
            line.push(b'#');
        }
        if i % 10 == 0 {
            line = br#"{"v":1,"type":"control","action":"select_protocol","protocol":{"steps":[]}}"#.to_vec();
        }
        line.push(b'\n');
        c.send_raw(&line);
        let reply = c.recv();
        assert!(is_type(&reply, "error"), "{reply}");
        assert_eq!(reply["v"], 1);
        assert!(reply["t_s"].is_number());
        assert!(reply["code"].is_string());
    }

    // An oversized line is answered too.
    let mut big = vec![b'x'; rehab_core::service::MAX_LINE_BYTES + 10];
    big.push(b'\n');
    c.send_raw(&big);
    assert_eq!(c.recv()["code"], "line_too_long");

    c.control("start");
    let got = c.recv_until(|v| is_type(v, "ack"));
    assert_eq!(got.last().unwrap()["action"], "start");
    handle.shutdown();
}

#[test]
fn slow_consumer_loses_only_emg_frames() {
    let (source, protocol, config, samples) = live_source(1);
    let reference = run_session(
        &protocol,
        samples.samples().iter().copied(),
        samples.sample_rate_hz(),
        Arc::new(fit(protocol_corpus(42).unwrap().train, 5, false).unwrap()),
        &config,
    )
    .unwrap();
    let expected: Vec<u64> = reference
        .events
        .iter()
        .filter(|e| e.body.kind() != "emg_frame")
        .map(|e| e.seq)
        .collect();

    let cfg = ServiceConfig {
        speed: None,
        queue_capacity: 16,
        ..ServiceConfig::default()
    };
    let handle = serve(cfg, source).unwrap();
    let mut slow = Client::connect(handle.local_addr());
    let mut op = Client::connect(handle.local_addr());
    op.recv();
    op.control("start");
    op.recv_until(|v| is_type(v, "session_end"));

    thread::sleep(Duration::from_millis(200));
    let msgs = slow.recv_until(|v| is_type(v, "session_end"));
    let got: Vec<u64> = msgs
        .iter()
        .filter(|v| v["seq"].is_u64() && !is_type(v, "emg_frame"))
        .map(|v| v["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(got, expected);
    let frames = msgs.iter().filter(|v| is_type(v, "emg_frame")).count();
    let total_frames = reference.events.len() - expected.len();
    assert!(frames < total_frames, "expected some frames to be dropped");
    handle.shutdown();
}

#[test]
fn replay_source_streams_log() {
    let (_, protocol, config, samples) = live_source(1);
    let model = Arc::new(fit(protocol_corpus(42).unwrap().train, 5, false).unwrap());
    let log = run_session(&protocol, samples.samples().iter().copied(), 1000.0, model, &config).unwrap();
    let n = log.events.len();
    let cfg = ServiceConfig {
        speed: None,
        ..ServiceConfig::default()
    };
    let handle = serve(cfg, Source::Replay(log.clone())).unwrap();
    let mut c = Client::connect(handle.local_addr());
    assert!(is_type(&c.recv(), "snapshot"));
    c.control("start");
    let msgs = c.recv_until(|v| is_type(v, "session_end"));
    let events: Vec<&Value> = msgs.iter().filter(|v| v["seq"].is_u64()).collect();
    assert_eq!(events.len(), n);
    for (got, want) in events.iter().zip(&log.events) {
        assert_eq!(got["seq"].as_u64(), Some(want.seq));
        assert_eq!(got["type"], want.body.kind());
    }
    handle.shutdown();
}

#[test]
fn binds_ephemeral_port_and_shuts_down() {
    let (source, ..) = live_source(1);
    let handle = serve(ServiceConfig::default(), source).unwrap();
    let addr = handle.local_addr();
    assert_ne!(addr.port(), 0);
    let started = Instant::now();
    handle.shutdown();
    assert!(started.elapsed() < Duration::from_secs(5));
    assert!(TcpStream::connect_timeout(&addr, Duration::from_millis(200)).is_err());
}
