//! The replay driver: normalizes each sample, streams it to one or more
//! agents as paced touch events, waits for the committed text, and scores
//! it against the ground truth.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::agent::scaled;
use crate::dataset::{ReplicaError, SamplePool, TestReplica};
use crate::metrics::{count_records, render_table, AccuracyReport, MergeableCounter, Percent, ReplicaRow};
use crate::trajectory::{normalize_size, to_touch_events, TouchEvent, TrajectoryError};
use crate::wire::{self, Message, SessionState, WireError, PROTOCOL_VERSION};

/// t2 must exceed this; IMEs typically need longer than this to commit.
pub const MIN_T2_MS: u32 = 300;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Replica(#[from] ReplicaError),
    #[error("sample {sample_id} ({label}): {source}")]
    Sample {
        sample_id: u32,
        label: String,
        source: TrajectoryError,
    },
    #[error("could not connect to agent {addr}: {reason}")]
    ConnectFailed { addr: String, reason: String },
    #[error("report I/O: {0}")]
    Io(#[from] io::Error),
    #[error("report parse: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub t1_ms: u32,
    pub t2_ms: u32,
    pub normalization_target: u32,
    pub time_scale: f64,
    pub agents: Vec<String>,
    /// Floor on the scaled t2 wait, so tiny time scales don't starve a
    /// loopback round trip.
    pub min_result_wait: Duration,
    pub connect_timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            t1_ms: 6,
            t2_ms: 500,
            normalization_target: 180,
            time_scale: 1.0,
            agents: vec![format!("127.0.0.1:{}", wire::DEFAULT_PORT)],
            min_result_wait: Duration::from_millis(100),
            connect_timeout: Duration::from_secs(5),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidConfig(m.to_owned()));
        if self.t1_ms == 0 {
            return bad("t1 must be at least 1 ms");
        }
        if self.t2_ms <= MIN_T2_MS {
            return bad("t2 must exceed 300 ms");
        }
        if self.normalization_target == 0 || self.normalization_target > i16::MAX as u32 {
            return bad("normalization target must be in 1..=32767");
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return bad("time scale must be a positive number");
        }
        if self.agents.is_empty() {
            return bad("at least one agent address is required");
        }
        Ok(())
    }

    pub fn touch_gap(&self) -> Duration {
        scaled(self.t1_ms, self.time_scale)
    }

    pub fn result_wait(&self) -> Duration {
        scaled(self.t2_ms, self.time_scale).max(self.min_result_wait)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Incorrect { text: String },
    NoResult { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecognitionRecord {
    /// Position in the replica.
    pub sample_index: u32,
    pub ground_truth: String,
    pub outcome: Outcome,
    pub latency_ms: Option<u32>,
}

/// What came back for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation<'a> {
    Text(&'a str),
    Timeout,
}

/// Scores recognized text against the ground truth after NFC
/// normalization of both.
pub fn classify_result(ground_truth: &str, observed: Observation<'_>) -> Outcome {
    match observed {
        Observation::Timeout => Outcome::NoResult {
            reason: "timeout".to_owned(),
        },
        Observation::Text(text) => {
            if ground_truth.nfc().eq(text.nfc()) {
                Outcome::Correct
            } else {
                Outcome::Incorrect { text: text.to_owned() }
            }
        }
    }
}

/// Per-agent driver statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentStats {
    pub addr: String,
    pub samples_sent: usize,
    pub touches_sent: usize,
    /// Smallest wall-clock gap observed between consecutive Touch sends
    /// within a sample.
    pub min_touch_gap: Option<Duration>,
    pub aborted: Option<String>,
}

struct Prepared {
    position: u32,
    ground_truth: String,
    events: Vec<TouchEvent>,
}

/// Normalizes and encodes every replica entry, in replica order.
fn prepare(
    cfg: &SessionConfig,
    replica: &TestReplica,
    pools: &[SamplePool],
) -> Result<Vec<Prepared>, OrchestratorError> {
    replica
        .resolve(pools)?
        .into_iter()
        .enumerate()
        .map(|(position, sample)| {
            let normalized =
                normalize_size(sample, cfg.normalization_target).map_err(|source| OrchestratorError::Sample {
                    sample_id: sample.id,
                    label: sample.label().to_owned(),
                    source,
                })?;
            Ok(Prepared {
                position: position as u32,
                ground_truth: sample.label().to_owned(),
                events: to_touch_events(&normalized, cfg.t1_ms),
            })
        })
        .collect()
}

fn connect(addr: &str, timeout: Duration) -> Result<TcpStream, OrchestratorError> {
    let fail = |reason: String| OrchestratorError::ConnectFailed {
        addr: addr.to_owned(),
        reason,
    };
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(|e| fail(e.to_string()))?.collect();
    let mut last = String::from("no addresses resolved");
    for a in addrs {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => {
                s.set_nodelay(true).map_err(|e| fail(e.to_string()))?;
                return Ok(s);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(fail(last))
}

/// One agent connection after the handshake.
struct Link {
    addr: String,
    writer: BufWriter<TcpStream>,
    inbox: Receiver<Result<Message, String>>,
    stream: TcpStream,
    state: SessionState,
}

impl Link {
    fn open(addr: &str, cfg: &SessionConfig) -> Result<Self, OrchestratorError> {
        let stream = connect(addr, cfg.connect_timeout)?;
        let fail = |reason: String| OrchestratorError::ConnectFailed {
            addr: addr.to_owned(),
            reason,
        };
        let reader = stream.try_clone().map_err(|e| fail(e.to_string()))?;
        let (tx, inbox) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let msg = wire::read_message(&mut reader).map_err(|e| match e {
                    WireError::Closed => "agent closed the connection".to_owned(),
                    other => format!("agent connection lost: {other}"),
                });
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        let mut link = Link {
            addr: addr.to_owned(),
            writer: BufWriter::new(stream.try_clone().map_err(|e| fail(e.to_string()))?),
            inbox,
            stream,
            state: SessionState::new(),
        };
        link.send(&Message::Hello {
            version: PROTOCOL_VERSION,
        })
        .map_err(fail)?;
        match link.inbox.recv_timeout(cfg.connect_timeout) {
            Ok(Ok(msg)) => {
                link.accept(&msg).map_err(fail)?;
                match msg {
                    Message::HelloAck { .. } => Ok(link),
                    other => Err(fail(format!("handshake refused: {other:?}"))),
                }
            }
            Ok(Err(e)) => Err(fail(e)),
            Err(_) => Err(fail("no HelloAck".to_owned())),
        }
    }

    fn send(&mut self, msg: &Message) -> Result<(), String> {
        self.state.advance(msg).map_err(|v| v.to_string())?;
        wire::write_message(&mut self.writer, msg).map_err(|e| format!("send failed: {e}"))
    }

    fn accept(&mut self, msg: &Message) -> Result<(), String> {
        self.state.advance(msg).map_err(|v| v.to_string())
    }

    fn close(mut self) {
        let _ = self.send(&Message::Bye);
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Waits for the answer to the sample just ended: `Some((text, latency))`,
/// or `None` on timeout.
fn await_result(link: &mut Link, wait: Duration) -> Result<Option<(String, u32)>, String> {
    match link.inbox.recv_timeout(wait) {
        Ok(Ok(msg)) => {
            link.accept(&msg)?;
            match msg {
                Message::Result { latency_ms, text } => Ok(Some((text, latency_ms))),
                Message::AgentError { code, detail } => Err(format!("agent error {code}: {detail}")),
                other => Err(format!("unexpected {}", other.name())),
            }
        }
        Ok(Err(e)) => Err(e),
        Err(RecvTimeoutError::Timeout) => Ok(None),
        Err(RecvTimeoutError::Disconnected) => Err("agent reader stopped".to_owned()),
    }
}

/// Discards a Result that arrived after its sample timed out.
fn drain_late(link: &mut Link) -> Result<(), String> {
    loop {
        match link.inbox.try_recv() {
            Ok(Ok(msg)) => link.accept(&msg)?,
            Ok(Err(e)) => return Err(e),
            Err(_) => return Ok(()),
        }
    }
}

enum SampleError {
    /// The sample got no answer but the link is usable.
    Answer(String),
    /// The link is unusable.
    Fatal(String),
}

fn drive_sample(
    link: &mut Link,
    cfg: &SessionConfig,
    p: &Prepared,
    stats: &mut AgentStats,
) -> Result<RecognitionRecord, SampleError> {
    drain_late(link).map_err(SampleError::Fatal)?;
    link.send(&Message::SampleBegin {
        sample_index: p.position,
    })
    .map_err(SampleError::Fatal)?;
    let gap = cfg.touch_gap();
    let mut last_touch: Option<Instant> = None;
    for ev in &p.events {
        if let Some(prev) = last_touch {
            let due = prev + gap;
            let mut now = Instant::now();
            while now < due {
                thread::sleep(due - now);
                now = Instant::now();
            }
            let observed = now - prev;
            stats.min_touch_gap = Some(stats.min_touch_gap.map_or(observed, |g| g.min(observed)));
        }
        last_touch = Some(Instant::now());
        link.send(&Message::Touch(*ev)).map_err(SampleError::Fatal)?;
        stats.touches_sent += 1;
    }
    link.send(&Message::SampleEnd).map_err(SampleError::Fatal)?;
    stats.samples_sent += 1;

    let (outcome, latency_ms) = match await_result(link, cfg.result_wait()) {
        Ok(Some((text, latency))) => (
            classify_result(&p.ground_truth, Observation::Text(&text)),
            Some(latency),
        ),
        Ok(None) => (classify_result(&p.ground_truth, Observation::Timeout), None),
        Err(reason) if reason.starts_with("agent error") => return Err(SampleError::Answer(reason)),
        Err(reason) => return Err(SampleError::Fatal(reason)),
    };
    Ok(RecognitionRecord {
        sample_index: p.position,
        ground_truth: p.ground_truth.clone(),
        outcome,
        latency_ms,
    })
}

fn no_result(p: &Prepared, reason: String) -> RecognitionRecord {
    RecognitionRecord {
        sample_index: p.position,
        ground_truth: p.ground_truth.clone(),
        outcome: Outcome::NoResult { reason },
        latency_ms: None,
    }
}

fn drive_partition(mut link: Link, cfg: &SessionConfig, work: &[&Prepared]) -> (Vec<RecognitionRecord>, AgentStats) {
    let mut stats = AgentStats {
        addr: link.addr.clone(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(work.len());
    let mut iter = work.iter();
    for p in iter.by_ref() {
        match drive_sample(&mut link, cfg, p, &mut stats) {
            Ok(r) => records.push(r),
            Err(SampleError::Answer(reason)) => records.push(no_result(p, reason)),
            Err(SampleError::Fatal(reason)) => {
                records.push(no_result(p, reason.clone()));
                stats.aborted = Some(reason);
                break;
            }
        }
    }
    if let Some(reason) = stats.aborted.clone() {
        records.extend(iter.map(|p| no_result(p, format!("not sent: {reason}"))));
        let _ = link.stream.shutdown(std::net::Shutdown::Both);
    } else {
        link.close();
    }
    (records, stats)
}

/// Runs every sample of `replica` through the configured agents.
///
/// Samples are dealt round-robin by replica position; records come back in
/// replica order. Losing an agent marks the rest of its share `NoResult`.
pub fn run_session(
    cfg: &SessionConfig,
    replica: &TestReplica,
    pools: &[SamplePool],
) -> Result<Vec<RecognitionRecord>, OrchestratorError> {
    run_session_with_stats(cfg, replica, pools).map(|(records, _)| records)
}

pub fn run_session_with_stats(
    cfg: &SessionConfig,
    replica: &TestReplica,
    pools: &[SamplePool],
) -> Result<(Vec<RecognitionRecord>, Vec<AgentStats>), OrchestratorError> {
    cfg.validate()?;
    let prepared = prepare(cfg, replica, pools)?;
    let links = cfg
        .agents
        .iter()
        .map(|a| Link::open(a, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let n = links.len();

    let results: Vec<(Vec<RecognitionRecord>, AgentStats)> = thread::scope(|scope| {
        let handles: Vec<_> = links
            .into_iter()
            .enumerate()
            .map(|(k, link)| {
                let work: Vec<&Prepared> = prepared.iter().skip(k).step_by(n).collect();
                scope.spawn(move || drive_partition(link, cfg, &work))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("session driver panicked"))
            .collect()
    });

    let mut merged = RecordMerger::new(prepared.len());
    let mut stats = Vec::with_capacity(n);
    for (records, s) in results {
        merged.extend(records);
        stats.push(s);
    }
    Ok((merged.finish(), stats))
}

/// Collects records completed in any order and yields them by position.
#[derive(Debug, Default)]
pub struct RecordMerger {
    slots: BTreeMap<u32, RecognitionRecord>,
    expected: usize,
}

impl RecordMerger {
    pub fn new(expected: usize) -> Self {
        Self {
            slots: BTreeMap::new(),
            expected,
        }
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = RecognitionRecord>) {
        for r in records {
            self.slots.insert(r.sample_index, r);
        }
    }

    pub fn finish(self) -> Vec<RecognitionRecord> {
        debug_assert_eq!(self.slots.len(), self.expected);
        self.slots.into_values().collect()
    }
}

/// Identifies what a report describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub system: String,
    pub set_name: String,
    pub replica_index: u32,
}

impl ReportMeta {
    pub fn for_replica(system: &str, replica: &TestReplica) -> Self {
        Self {
            system: system.to_owned(),
            set_name: replica.set_name.clone(),
            replica_index: replica.replica_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub system: String,
    pub set_name: String,
    pub replica_index: u32,
    pub correct: u64,
    pub incorrect: u64,
    pub no_result: u64,
    /// `null` for an empty run.
    pub accuracy_percent: Option<Percent>,
}

impl ReportSummary {
    pub fn new(meta: &ReportMeta, counts: MergeableCounter) -> Self {
        Self {
            system: meta.system.clone(),
            set_name: meta.set_name.clone(),
            replica_index: meta.replica_index,
            correct: counts.correct,
            incorrect: counts.incorrect,
            no_result: counts.no_result,
            accuracy_percent: counts.accuracy(),
        }
    }

    pub fn counts(&self) -> MergeableCounter {
        MergeableCounter {
            correct: self.correct,
            incorrect: self.incorrect,
            no_result: self.no_result,
        }
    }
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLine {
    pub sample_index: u32,
    pub ground_truth: String,
    pub outcome: String,
    pub recognized_text: Option<String>,
    pub latency_ms: Option<u32>,
    pub reason: Option<String>,
}

impl From<&RecognitionRecord> for RecordLine {
    fn from(r: &RecognitionRecord) -> Self {
        let (outcome, recognized_text, reason) = match &r.outcome {
            Outcome::Correct => ("correct", Some(r.ground_truth.clone()), None),
            Outcome::Incorrect { text } => ("incorrect", Some(text.clone()), None),
            Outcome::NoResult { reason } => ("no_result", None, Some(reason.clone())),
        };
        Self {
            sample_index: r.sample_index,
            ground_truth: r.ground_truth.clone(),
            outcome: outcome.to_owned(),
            recognized_text,
            latency_ms: r.latency_ms,
            reason,
        }
    }
}

impl RecordLine {
    pub fn into_record(self) -> Result<RecognitionRecord, String> {
        let outcome = match self.outcome.as_str() {
            "correct" => Outcome::Correct,
            "incorrect" => Outcome::Incorrect {
                text: self.recognized_text.unwrap_or_default(),
            },
            "no_result" => Outcome::NoResult {
                reason: self.reason.unwrap_or_default(),
            },
            other => return Err(format!("unknown outcome {other:?}")),
        };
        Ok(RecognitionRecord {
            sample_index: self.sample_index,
            ground_truth: self.ground_truth,
            outcome,
            latency_ms: self.latency_ms,
        })
    }
}

pub fn records_to_jsonl(records: &[RecognitionRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(&RecordLine::from(r)).expect("record serializes") + "\n")
        .collect()
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<RecognitionRecord>, OrchestratorError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let line: RecordLine = serde_json::from_str(l)?;
            line.into_record()
                .map_err(|e| OrchestratorError::Json(serde::de::Error::custom(e)))
        })
        .collect()
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.txt";

/// Writes `records.jsonl`, `summary.json` and `table.txt` into `dir`.
/// Output depends only on the arguments.
pub fn write_report(
    dir: &Path,
    records: &[RecognitionRecord],
    meta: &ReportMeta,
) -> Result<ReportSummary, OrchestratorError> {
    fs::create_dir_all(dir)?;
    let summary = ReportSummary::new(meta, count_records(records));
    fs::write(dir.join(RECORDS_FILE), records_to_jsonl(records))?;
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(dir.join(TABLE_FILE), render_summaries(std::slice::from_ref(&summary)))?;
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<ReportSummary, OrchestratorError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Per-system replica counts within one set.
type SetColumns = Vec<(String, BTreeMap<u32, MergeableCounter>)>;

/// Groups summaries into per-set tables. Systems keep first-seen order;
/// repeated (system, set, replica) summaries are merged by counts.
pub fn merge_summaries(summaries: &[ReportSummary]) -> Vec<(String, Vec<AccuracyReport>)> {
    let mut sets: Vec<(String, SetColumns)> = Vec::new();
    for s in summaries {
        let set = match sets.iter_mut().position(|(name, _)| *name == s.set_name) {
            Some(i) => &mut sets[i].1,
            None => {
                sets.push((s.set_name.clone(), Vec::new()));
                &mut sets.last_mut().expect("just pushed").1
            }
        };
        let system = match set.iter_mut().position(|(name, _)| *name == s.system) {
            Some(i) => &mut set[i].1,
            None => {
                set.push((s.system.clone(), BTreeMap::new()));
                &mut set.last_mut().expect("just pushed").1
            }
        };
        let slot = system.entry(s.replica_index).or_default();
        *slot = slot.merge(s.counts());
    }
    sets.into_iter()
        .map(|(set_name, systems)| {
            let reports = systems
                .into_iter()
                .map(|(system, rows)| AccuracyReport {
                    system,
                    set_name: set_name.clone(),
                    rows: rows.into_iter().map(|(i, c)| ReplicaRow::from_counts(i, c)).collect(),
                })
                .collect();
            (set_name, reports)
        })
        .collect()
}

pub fn render_summaries(summaries: &[ReportSummary]) -> String {
    merge_summaries(summaries)
        .iter()
        .map(|(set, reports)| render_table(set, reports))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Default report directory for a replica.
pub fn report_dir(root: &Path, meta: &ReportMeta) -> PathBuf {
    root.join(format!("{}_{}_{}", meta.system, meta.set_name, meta.replica_index))
}
