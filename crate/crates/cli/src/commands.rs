use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde_json::json;

use rehab_core::actuator::{self, ActuatorSpec};
use rehab_core::classifier::{self, KnnModel, LabeledSample};
use rehab_core::corpus::{labeled_samples, protocol_corpus};
use rehab_core::features::WaveformMode;
use rehab_core::service::{self, ServiceConfig, Source};
use rehab_core::session::{
    encode_event, read_log, replay_paced, run_session, scripted_source, write_log, Protocol,
    SessionConfig, SessionError, SessionLog, SessionStatus, SessionView, DEFAULT_REPETITIONS,
    DEFAULT_TIMEOUT_S,
};
use rehab_core::signal::{
    ingest_csv, rectify, synth_gesture_stream, SampleStream, SegmentationConfig, SignalError,
    SynthConfig,
};

use crate::{
    EvalArgs, Failure, GenArgs, LabeledPath, ReplayArgs, RunArgs, ServeArgs, SessionSourceArgs,
    SimulateArgs, TrainArgs, WithCode, EXIT_ACTUATOR, EXIT_DATA, EXIT_IO, EXIT_MODEL,
    EXIT_SERVICE, EXIT_SESSION,
};

type CliResult<T = ()> = Result<T, Failure>;

fn signal_failure(e: SignalError, path: &Path) -> Failure {
    let code = match e {
        SignalError::Io(_) => EXIT_IO,
        _ => EXIT_DATA,
    };
    Failure {
        code,
        error: anyhow::Error::new(e).context(format!("reading {}", path.display())),
    }
}

fn session_failure(e: SessionError) -> Failure {
    let code = match e {
        SessionError::Io(_) => EXIT_IO,
        SessionError::CorruptLog { .. } | SessionError::Protocol(_) => EXIT_DATA,
        SessionError::Signal(_) | SessionError::Control(_) => EXIT_SESSION,
    };
    Failure {
        code,
        error: e.into(),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .code(EXIT_IO)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .code(EXIT_IO)
}

fn load_model(path: &Path) -> CliResult<KnnModel> {
    KnnModel::from_json(&read_text(path)?)
        .with_context(|| format!("loading model {}", path.display()))
        .code(EXIT_MODEL)
}

fn load_samples(data: &[LabeledPath]) -> CliResult<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for d in data {
        let stream = ingest_csv(&d.path).map_err(|e| signal_failure(e, &d.path))?;
        let found = labeled_samples(&stream, d.label, None, WaveformMode::Amplitude)
            .map_err(|e| signal_failure(e, &d.path))?;
        log::info!("{}: {} {} windows", d.path.display(), found.len(), d.label);
        out.extend(found);
    }
    Ok(out)
}

pub fn generate(a: GenArgs) -> CliResult {
    if a.count == 0 {
        return Err(anyhow!("--count must be at least 1")).code(EXIT_DATA);
    }
    if !(a.rate.is_finite() && a.rate > 0.0) {
        return Err(anyhow!("--rate must be positive")).code(EXIT_DATA);
    }
    let stream = synth_gesture_stream(a.kind, a.count, a.rate, a.seed);
    let mut w = create(&a.out)?;
    stream.write_csv(&mut w).map_err(|e| signal_failure(e, &a.out))?;
    w.flush().code(EXIT_IO)
}

pub fn train(a: TrainArgs) -> CliResult {
    let samples = load_samples(&a.data)?;
    let model = classifier::fit(samples, a.k, a.scaler).code(EXIT_MODEL)?;
    let json = model.to_json().code(EXIT_MODEL)?;
    fs::write(&a.out, json + "\n")
        .with_context(|| format!("writing {}", a.out.display()))
        .code(EXIT_IO)?;
    println!(
        "trained k={} on {} windows -> {}",
        model.k(),
        model.samples().len(),
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let validation = load_samples(&a.data)?;
    let ks = if a.k_sweep.is_empty() {
        vec![model.k()]
    } else {
        a.k_sweep.clone()
    };
    let reports = classifier::k_sweep(&model, &validation, &ks).code(EXIT_MODEL)?;
    print!("{}", classifier::format_table(&reports));
    if let Some(path) = &a.json {
        let json = serde_json::to_string_pretty(&reports).code(EXIT_DATA)?;
        fs::write(path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_IO)?;
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let spec = match &a.spec {
        Some(path) => ActuatorSpec::from_json(&read_text(path)?).code(EXIT_ACTUATOR)?,
        None => ActuatorSpec::default_for(a.version, a.segments.unwrap_or(a.version.default_segments()))
            .code(EXIT_ACTUATOR)?,
    };
    let state = actuator::state(&spec, a.pressure).code(EXIT_ACTUATOR)?;

    let mut csv = String::from("x_mm,y_mm\n");
    for p in &state.points {
        csv.push_str(&format!("{},{}\n", p.x_mm, p.y_mm));
    }
    match &a.out {
        Some(path) => fs::write(path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_IO)?,
        None => io::stdout().write_all(csv.as_bytes()).code(EXIT_IO)?,
    }
    if let Some(path) = &a.fixture {
        let fixture = json!({ "spec": spec, "pressure_kpa": a.pressure, "state": state });
        let text = serde_json::to_string_pretty(&fixture).code(EXIT_DATA)?;
        fs::write(path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_IO)?;
    }
    Ok(())
}

struct SessionInputs {
    protocol: Protocol,
    model: Arc<KnnModel>,
    stream: SampleStream,
    config: SessionConfig,
}

fn session_inputs(a: &SessionSourceArgs) -> CliResult<SessionInputs> {
    let protocol = match &a.protocol {
        Some(path) => Protocol::from_json(&read_text(path)?).map_err(session_failure)?,
        None => Protocol::alternating(DEFAULT_REPETITIONS, DEFAULT_TIMEOUT_S),
    };
    let model = match &a.model {
        Some(path) => load_model(path)?,
        None => {
            let corpus = protocol_corpus(a.seed).code(EXIT_DATA)?;
            classifier::fit(corpus.train, 5, false).code(EXIT_MODEL)?
        }
    };
    let (stream, seed) = match &a.source {
        Some(path) => (ingest_csv(path).map_err(|e| signal_failure(e, path))?, None),
        None => {
            if !(a.rate.is_finite() && a.rate > 0.0) {
                return Err(anyhow!("--rate must be positive")).code(EXIT_DATA);
            }
            let synth = scripted_source(&protocol, a.rate, a.seed, &SynthConfig::default());
            (synth.stream, Some(a.seed))
        }
    };
    let segmentation = SegmentationConfig::calibrate(&rectify(&stream)).code(EXIT_DATA)?;
    let mut config = SessionConfig::new(segmentation);
    config.seed = seed;
    Ok(SessionInputs {
        protocol,
        model: Arc::new(model),
        stream,
        config,
    })
}

fn print_summary(view: &SessionView) {
    let t = &view.tally;
    let reason = view
        .end_reason
        .map(|r| serde_json::to_value(r).unwrap_or_default())
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_else(|| "none".into());
    println!(
        "steps={} success={} mismatch={} timeout={} end={}",
        t.total(),
        t.success,
        t.mismatch,
        t.timeout,
        reason
    );
}

pub fn run(a: RunArgs) -> CliResult {
    let s = session_inputs(&a.source)?;
    let log = run_session(
        &s.protocol,
        s.stream.samples().iter().copied(),
        s.stream.sample_rate_hz(),
        s.model,
        &s.config,
    )
    .map_err(session_failure)?;
    write_log(&log, create(&a.log)?).map_err(session_failure)?;
    print_summary(&SessionView::from_events(&log.events));
    Ok(())
}

fn load_log(path: &Path) -> CliResult<SessionLog> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .code(EXIT_IO)?;
    read_log(BufReader::new(file)).map_err(session_failure)
}

pub fn serve(a: ServeArgs) -> CliResult {
    let bind: SocketAddr = (a.host.as_str(), a.port)
        .to_socket_addrs()
        .code(EXIT_SERVICE)?
        .next()
        .ok_or_else(|| anyhow!("cannot resolve {}", a.host))
        .code(EXIT_SERVICE)?;
    if !a.fast && !(a.speed.is_finite() && a.speed > 0.0) {
        return Err(anyhow!("--speed must be positive")).code(EXIT_DATA);
    }
    let source = match &a.replay {
        Some(path) => Source::Replay(load_log(path)?),
        None => {
            let s = session_inputs(&a.source)?;
            Source::Live {
                samples: s.stream,
                model: s.model,
                config: s.config,
                protocol: s.protocol,
            }
        }
    };
    let cfg = ServiceConfig {
        bind,
        speed: (!a.fast).then_some(a.speed),
        autostart: a.autostart,
        record: a.record.clone(),
        ..ServiceConfig::default()
    };
    let handle = service::serve(cfg, source)
        .context("starting service")
        .code(EXIT_SERVICE)?;
    println!("listening on {}", handle.local_addr());
    io::stdout().flush().code(EXIT_IO)?;
    loop {
        thread::sleep(Duration::from_millis(100));
        let view = handle.view();
        if a.once && view.status == SessionStatus::Ended {
            // Give observers a moment to drain the final messages.
            thread::sleep(Duration::from_millis(500));
            print_summary(&view);
            handle.shutdown();
            return Ok(());
        }
    }
}

pub fn replay(a: ReplayArgs) -> CliResult {
    let log = load_log(&a.log)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut failed = None;
    replay_paced(&log, a.fast, |e| {
        if failed.is_none() {
            if let Err(err) = writeln!(out, "{}", encode_event(e)) {
                failed = Some(err);
            }
        }
    });
    if let Some(err) = failed {
        if err.kind() != io::ErrorKind::BrokenPipe {
            return Err(err).code(EXIT_IO);
        }
    }
    out.flush().or_else(|e| if e.kind() == io::ErrorKind::BrokenPipe { Ok(()) } else { Err(e) }).code(EXIT_IO)
}
