//! The routing service: one ingestion front-end feeding a bounded queue,
//! N stateless classification workers, and a single routing stage that
//! owns the sinks. Every state transition is serialized through one
//! mutex-guarded appender, so the event log is the source of truth and a
//! crash at any instant loses at most one torn line.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};
use serde::Serialize;
use triage_core::envelope::{self, EnvelopeError};
use triage_core::model::{ClassifyError, TrainedModel};

use crate::config::{ConfigError, RouterConfig};
use crate::log::{replay, truncate_to, EventKind, EventLog, EventPayload, LogError, LogEvent};
use crate::record::{now_ts, TicketRecord, TicketState, TransitionError};
use crate::sink::{SinkError, SinkLine, SinkWriter};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load model: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error("event log replay failed: {0}")]
    Replay(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("payload must include a subject or a body")]
    EmptyPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted(String),
    /// The id was already persisted; the stored record is untouched.
    Duplicate(String),
    /// Bounded queue at capacity; nothing was persisted.
    RejectedFull,
}

/// Pure classification step: depends only on the record and the model, so
/// any worker produces the identical result.
///
/// Returns the updated record; the input must be in `received` state.
pub fn worker_step(
    record: &TicketRecord,
    model: &TrainedModel,
    fingerprint: &str,
    ts: f64,
) -> Result<TicketRecord, TransitionError> {
    if record.state != TicketState::Received {
        return Err(TransitionError {
            ticket_id: record.ticket_id.clone(),
            from: record.state,
            to: TicketState::Classified,
        });
    }
    let mut updated = record.clone();
    let text = format!("{} {}", record.subject, record.body);
    match model.classify_text(&text) {
        Ok((label, confidence)) => {
            updated.mark_classified(label, confidence, fingerprint, ts)?;
        }
        Err(ClassifyError::EmptyAfterClean) => {
            updated.mark_failed("empty-after-clean", ts)?;
        }
        Err(e) => {
            updated.mark_failed(&format!("classification-error: {e}"), ts)?;
        }
    }
    Ok(updated)
}

// Fault injection for crash-recovery tests, armed via the environment:
// TRIAGE_CRASH_POINT="<name>:<n>" makes the n-th occurrence of that point
// fire. Unset in production, this is a single atomic load.
#[derive(Debug)]
struct CrashPoints {
    point: Option<(String, u64)>,
    counter: AtomicU64,
}

impl CrashPoints {
    fn from_env() -> Self {
        let point = std::env::var("TRIAGE_CRASH_POINT").ok().and_then(|raw| {
            let (name, n) = raw.split_once(':')?;
            Some((name.to_string(), n.parse::<u64>().ok()?))
        });
        CrashPoints {
            point,
            counter: AtomicU64::new(0),
        }
    }

    /// True exactly when this call is the configured occurrence.
    fn fire(&self, name: &str) -> bool {
        match &self.point {
            Some((point, n)) if point == name => {
                self.counter.fetch_add(1, Ordering::SeqCst) + 1 == *n
            }
            _ => false,
        }
    }
}

struct SharedState {
    records: HashMap<String, TicketRecord>,
    log: EventLog,
    accepted_total: u64,
    state_counts: [u64; 4],
}

fn state_index(state: TicketState) -> usize {
    match state {
        TicketState::Received => 0,
        TicketState::Classified => 1,
        TicketState::Routed => 2,
        TicketState::Failed => 3,
    }
}

impl SharedState {
    // The log is the source of truth: persist the event, then mirror the
    // transition in memory. A service that cannot write its own log must
    // stop rather than diverge from it.
    fn append_or_die(&mut self, event: &LogEvent) {
        if let Err(e) = self.log.append(event) {
            eprintln!("fatal: cannot append to event log: {e}");
            std::process::abort();
        }
    }

    fn commit(&mut self, updated: TicketRecord, event: &LogEvent) {
        self.append_or_die(event);
        let new_state = updated.state;
        let old = self
            .records
            .insert(updated.ticket_id.clone(), updated)
            .expect("transition on a known record");
        self.state_counts[state_index(old.state)] -= 1;
        self.state_counts[state_index(new_state)] += 1;
    }
}

struct ServiceInner {
    model: TrainedModel,
    fingerprint: String,
    config: RouterConfig,
    state: Mutex<SharedState>,
    classify_depth: Receiver<String>,
    route_depth: Receiver<String>,
    per_worker: Vec<AtomicU64>,
    started: Instant,
    crash: CrashPoints,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsSnapshot {
    pub model_fingerprint: String,
    pub uptime_seconds: f64,
    pub queue_depth: usize,
    pub route_backlog: usize,
    pub accepted_total: u64,
    pub received: u64,
    pub classified: u64,
    pub routed: u64,
    pub failed: u64,
    pub per_worker_processed: Vec<u64>,
}

#[derive(Debug, Default)]
pub struct RecoveryReport {
    pub replayed_events: usize,
    /// Tickets found in `received` state and re-enqueued for classification.
    pub requeued: usize,
    /// Tickets found in `classified` state and re-sent to the routing stage.
    pub rerouted: usize,
    pub warnings: Vec<String>,
}

pub struct RouterService {
    inner: Arc<ServiceInner>,
    classify_tx: Sender<String>,
    handles: Vec<JoinHandle<()>>,
}

fn apply_event(
    records: &mut HashMap<String, TicketRecord>,
    event: &LogEvent,
) -> Result<(), String> {
    let id = &event.ticket_id;
    match (&event.event, &event.payload) {
        (EventKind::Received, EventPayload::Received { subject, body }) => {
            if records.contains_key(id) {
                return Err(format!("duplicate received event for {id}"));
            }
            records.insert(
                id.clone(),
                TicketRecord::received(id.clone(), subject.clone(), body.clone(), event.ts),
            );
            Ok(())
        }
        (
            EventKind::Classified,
            EventPayload::Classified {
                label,
                confidence,
                model_fingerprint,
            },
        ) => records
            .get_mut(id)
            .ok_or_else(|| format!("classified event for unknown {id}"))?
            .mark_classified(*label, *confidence, model_fingerprint, event.ts)
            .map_err(|e| e.to_string()),
        (EventKind::Routed, EventPayload::Routed {}) => records
            .get_mut(id)
            .ok_or_else(|| format!("routed event for unknown {id}"))?
            .mark_routed(event.ts)
            .map_err(|e| e.to_string()),
        (EventKind::Failed, EventPayload::Failed { reason }) => records
            .get_mut(id)
            .ok_or_else(|| format!("failed event for unknown {id}"))?
            .mark_failed(reason, event.ts)
            .map_err(|e| e.to_string()),
        _ => Err(format!("payload does not match event kind for {id}")),
    }
}

impl RouterService {
    /// Load the model named in the config, recover persisted state, and
    /// start the worker pool and routing stage.
    pub fn start(config: RouterConfig) -> Result<(Self, RecoveryReport), ServiceError> {
        let loaded = envelope::load(&config.model_path)?;
        Self::start_with_model(loaded.model, loaded.fingerprint, config)
    }

    pub fn start_with_model(
        model: TrainedModel,
        fingerprint: String,
        config: RouterConfig,
    ) -> Result<(Self, RecoveryReport), ServiceError> {
        config.validate()?;
        let mut report = RecoveryReport::default();

        let events_path = config.events_path();
        let replayed = replay(&events_path)?;
        report.replayed_events = replayed.events.len();
        if let Some(warning) = replayed.warning {
            report.warnings.push(warning);
            truncate_to(&events_path, replayed.valid_len)?;
        }

        let mut records = HashMap::new();
        let mut received_order = Vec::new();
        let mut accepted_total = 0u64;
        for (i, event) in replayed.events.iter().enumerate() {
            apply_event(&mut records, event)
                .map_err(|m| ServiceError::Replay(format!("event {i}: {m}")))?;
            if event.event == EventKind::Received {
                received_order.push(event.ticket_id.clone());
                accepted_total += 1;
            }
        }

        let (sinks, sink_warnings) = SinkWriter::open(&config.sinks_dir())?;
        report.warnings.extend(sink_warnings);
        let log = EventLog::open_append(&events_path)?;

        let mut state_counts = [0u64; 4];
        for record in records.values() {
            state_counts[state_index(record.state)] += 1;
        }

        let (classify_tx, classify_rx) = bounded::<String>(config.queue_capacity);
        let (route_tx, route_rx) = bounded::<String>(config.queue_capacity);

        let inner = Arc::new(ServiceInner {
            model,
            fingerprint,
            per_worker: (0..config.worker_count).map(|_| AtomicU64::new(0)).collect(),
            config,
            state: Mutex::new(SharedState {
                records,
                log,
                accepted_total,
                state_counts,
            }),
            classify_depth: classify_rx.clone(),
            route_depth: route_rx.clone(),
            started: Instant::now(),
            crash: CrashPoints::from_env(),
        });

        let mut handles = Vec::new();
        {
            let inner = Arc::clone(&inner);
            handles.push(std::thread::spawn(move || {
                router_loop(inner, route_rx, sinks)
            }));
        }
        for worker_idx in 0..inner.config.worker_count {
            let inner = Arc::clone(&inner);
            let rx = classify_rx.clone();
            let tx = route_tx.clone();
            handles.push(std::thread::spawn(move || {
                worker_loop(inner, worker_idx, rx, tx)
            }));
        }

        // Re-enter interrupted work, oldest first. Workers are already
        // consuming, so a backlog larger than the queue drains through.
        let pending: Vec<(String, TicketState)> = {
            let state = inner.state.lock().unwrap();
            received_order
                .iter()
                .filter_map(|id| {
                    let record = &state.records[id];
                    match record.state {
                        TicketState::Received => Some((id.clone(), TicketState::Received)),
                        TicketState::Classified => Some((id.clone(), TicketState::Classified)),
                        _ => None,
                    }
                })
                .collect()
        };
        for (id, state) in pending {
            match state {
                TicketState::Received => {
                    report.requeued += 1;
                    classify_tx.send(id).expect("workers are running");
                }
                TicketState::Classified => {
                    report.rerouted += 1;
                    route_tx.send(id).expect("routing stage is running");
                }
                _ => unreachable!(),
            }
        }
        drop(route_tx);

        Ok((
            RouterService {
                inner,
                classify_tx,
                handles,
            },
            report,
        ))
    }

    /// Accept a ticket. Duplicate ids and a full queue are outcomes, not
    /// errors; a payload with neither subject nor body is rejected.
    pub fn submit(
        &self,
        ticket_id: Option<String>,
        subject: &str,
        body: &str,
    ) -> Result<SubmitOutcome, SubmitError> {
        if subject.trim().is_empty() && body.trim().is_empty() {
            return Err(SubmitError::EmptyPayload);
        }
        let id = match ticket_id {
            Some(id) if !id.trim().is_empty() => id,
            // Generated ids are v4 UUIDs; collisions are not a practical
            // concern within one deployment.
            _ => uuid::Uuid::new_v4().to_string(),
        };
        let mut state = self.inner.state.lock().unwrap();
        if state.records.contains_key(&id) {
            return Ok(SubmitOutcome::Duplicate(id));
        }
        if self.classify_tx.is_full() {
            return Ok(SubmitOutcome::RejectedFull);
        }
        let ts = now_ts();
        let event = LogEvent {
            ts,
            ticket_id: id.clone(),
            event: EventKind::Received,
            payload: EventPayload::Received {
                subject: subject.to_string(),
                body: body.to_string(),
            },
        };
        state.append_or_die(&event);
        if self.inner.crash.fire("after_received") {
            std::process::abort();
        }
        state.records.insert(
            id.clone(),
            TicketRecord::received(id.clone(), subject.to_string(), body.to_string(), ts),
        );
        state.state_counts[state_index(TicketState::Received)] += 1;
        state.accepted_total += 1;
        // Still under the submission lock, and only workers consume, so
        // the queue cannot have refilled since the is_full check.
        self.classify_tx
            .try_send(id.clone())
            .expect("capacity was checked under the submission lock");
        Ok(SubmitOutcome::Accepted(id))
    }

    pub fn lookup(&self, ticket_id: &str) -> Option<TicketRecord> {
        self.inner.state.lock().unwrap().records.get(ticket_id).cloned()
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let state = self.inner.state.lock().unwrap();
        MetricsSnapshot {
            model_fingerprint: self.inner.fingerprint.clone(),
            uptime_seconds: self.inner.started.elapsed().as_secs_f64(),
            queue_depth: self.inner.classify_depth.len(),
            route_backlog: self.inner.route_depth.len(),
            accepted_total: state.accepted_total,
            received: state.state_counts[0],
            classified: state.state_counts[1],
            routed: state.state_counts[2],
            failed: state.state_counts[3],
            per_worker_processed: self
                .inner
                .per_worker
                .iter()
                .map(|c| c.load(Ordering::Relaxed))
                .collect(),
        }
    }

    pub fn fingerprint(&self) -> &str {
        &self.inner.fingerprint
    }

    pub fn config(&self) -> &RouterConfig {
        &self.inner.config
    }

    /// Block until no ticket is left in a live state, or the timeout
    /// passes. Returns whether the service went idle.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let snap = self.snapshot();
            if snap.received == 0
                && snap.classified == 0
                && snap.queue_depth == 0
                && snap.route_backlog == 0
            {
                return true;
            }
            if Instant::now() > deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    /// Stop accepting work, drain both queues, and join every thread.
    pub fn shutdown(self) {
        let RouterService {
            inner: _inner,
            classify_tx,
            handles,
        } = self;
        drop(classify_tx);
        for handle in handles {
            let _ = handle.join();
        }
    }
}

fn worker_loop(
    inner: Arc<ServiceInner>,
    worker_idx: usize,
    classify_rx: Receiver<String>,
    route_tx: Sender<String>,
) {
    if inner.config.worker_startup_delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(inner.config.worker_startup_delay_ms));
    }
    while let Ok(id) = classify_rx.recv() {
        let Some(record) = inner.state.lock().unwrap().records.get(&id).cloned() else {
            continue;
        };
        let ts = now_ts();
        let Ok(updated) = worker_step(&record, &inner.model, &inner.fingerprint, ts) else {
            // Not in received state: already handled (e.g. replayed twice).
            continue;
        };
        let event = match updated.state {
            TicketState::Classified => LogEvent {
                ts,
                ticket_id: id.clone(),
                event: EventKind::Classified,
                payload: EventPayload::Classified {
                    label: updated.label.expect("classified record has a label"),
                    confidence: updated.confidence.expect("classified record has confidence"),
                    model_fingerprint: inner.fingerprint.clone(),
                },
            },
            TicketState::Failed => LogEvent {
                ts,
                ticket_id: id.clone(),
                event: EventKind::Failed,
                payload: EventPayload::Failed {
                    reason: updated
                        .failure_reason
                        .clone()
                        .expect("failed record has a reason"),
                },
            },
            other => unreachable!("worker_step cannot produce {other:?}"),
        };
        let classified = updated.state == TicketState::Classified;
        inner.state.lock().unwrap().commit(updated, &event);
        inner.per_worker[worker_idx].fetch_add(1, Ordering::Relaxed);
        if classified && route_tx.send(id).is_err() {
            return;
        }
    }
}

fn router_loop(inner: Arc<ServiceInner>, route_rx: Receiver<String>, mut sinks: SinkWriter) {
    // Built lazily inside this thread; reqwest's blocking client may not
    // be constructed on an async runtime thread.
    let mut webhook_client: Option<reqwest::blocking::Client> = None;
    while let Ok(id) = route_rx.recv() {
        let Some(record) = inner.state.lock().unwrap().records.get(&id).cloned() else {
            continue;
        };
        if record.state != TicketState::Classified {
            continue;
        }
        let label = record.label.expect("classified record has a label");
        let confidence = record.confidence.expect("classified record has confidence");
        let ts = now_ts();
        let line = SinkLine {
            ticket_id: id.clone(),
            label,
            confidence,
            ts,
        };

        // Webhook first: a ticket that fails delivery must end `failed`
        // with no sink line, keeping "exactly one sink or failed" true.
        // After a crash between webhook and sink the delivery repeats:
        // webhooks are at-least-once, sinks exactly-once.
        if let Some(url) = &inner.config.webhooks[label.index()] {
            let client = webhook_client.get_or_insert_with(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(5))
                    .build()
                    .expect("webhook client")
            });
            if let Err(reason) = post_with_retry(client, url, &line) {
                fail_record(&inner, record, &reason, ts);
                continue;
            }
        }

        if inner.crash.fire("sink_partial") {
            sinks.arm_tear_on_next_write();
        }
        match sinks.append(&line) {
            Ok(_appended) => {
                if inner.crash.fire("after_sink") {
                    std::process::abort();
                }
                let mut updated = record;
                updated.mark_routed(ts).expect("classified record routes");
                let event = LogEvent {
                    ts,
                    ticket_id: id,
                    event: EventKind::Routed,
                    payload: EventPayload::Routed {},
                };
                inner.state.lock().unwrap().commit(updated, &event);
            }
            Err(e) => {
                fail_record(&inner, record, &format!("sink-error: {e}"), ts);
            }
        }
    }
}

fn fail_record(inner: &Arc<ServiceInner>, record: TicketRecord, reason: &str, ts: f64) {
    let mut updated = record;
    updated
        .mark_failed(reason, ts)
        .expect("live record can fail");
    let event = LogEvent {
        ts,
        ticket_id: updated.ticket_id.clone(),
        event: EventKind::Failed,
        payload: EventPayload::Failed {
            reason: reason.to_string(),
        },
    };
    inner.state.lock().unwrap().commit(updated, &event);
}

// Three attempts with exponential backoff (50ms, then 100ms).
fn post_with_retry(
    client: &reqwest::blocking::Client,
    url: &str,
    line: &SinkLine,
) -> Result<(), String> {
    let mut delay = Duration::from_millis(50);
    for attempt in 0..3 {
        match client.post(url).json(line).send() {
            Ok(response) if response.status().is_success() => return Ok(()),
            _ if attempt < 2 => {
                std::thread::sleep(delay);
                delay *= 2;
            }
            _ => break,
        }
    }
    Err("webhook-unreachable".to_string())
}
