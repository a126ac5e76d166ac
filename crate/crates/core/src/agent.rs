//! Simulated device agent.
//!
//! The agent rebuilds strokes from the replayed touch events, thins them the
//! way a touch controller would, hands them to a [`Recognizer`], and watches
//! a text buffer: a `Result` goes back to the orchestrator only when the
//! committed text changed the buffer length.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::json;

use crate::recognizer::Recognizer;
use crate::trajectory::{from_touch_events, resample_stroke, ResampleConfig, Stroke, TouchEvent, TrajectoryError};
use crate::wire::{self, error_code, Message, SessionState, WireError, PROTOCOL_VERSION};

/// The on-screen text box the IME commits into.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextBuffer {
    content: String,
    history: Vec<usize>,
}

impl TextBuffer {
    pub fn clear(&mut self) {
        self.content.clear();
        self.history.clear();
    }

    /// Appends committed text and reports whether the length changed.
    pub fn commit(&mut self, text: &str) -> bool {
        let before = self.len();
        self.content.push_str(text);
        let after = self.len();
        self.history.push(after);
        after != before
    }

    pub fn content(&self) -> &str {
        &self.content
    }

    /// Length in codepoints.
    pub fn len(&self) -> usize {
        self.content.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }

    /// Buffer length after each commit since the last clear.
    pub fn history(&self) -> &[usize] {
        &self.history
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub resample: ResampleConfig,
    /// Multiplies every real sleep; nominal timestamps are unaffected.
    pub time_scale: f64,
    /// Simulated delay before the IME commits its answer.
    pub commit_delay_ms: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            resample: ResampleConfig::default(),
            time_scale: 1.0,
            commit_delay_ms: 0,
        }
    }
}

/// Applies the touch-screen model to a replayed event stream: rebuild the
/// strokes, then thin each one by time and then by distance.
pub fn simulate_screen(events: &[TouchEvent], resample: &ResampleConfig) -> Result<Vec<Stroke>, TrajectoryError> {
    let strokes = from_touch_events(events)?;
    if resample.is_identity() {
        return Ok(strokes);
    }
    Ok(strokes.iter().map(|s| resample_stroke(s, resample)).collect())
}

pub struct DeviceAgent<R> {
    config: AgentConfig,
    recognizer: R,
    buffer: TextBuffer,
    log: Option<Box<dyn Write + Send>>,
}

impl<R: Recognizer> DeviceAgent<R> {
    pub fn new(config: AgentConfig, recognizer: R) -> Self {
        Self {
            config,
            recognizer,
            buffer: TextBuffer::default(),
            log: None,
        }
    }

    /// Writes one JSON line per handled sample.
    pub fn with_log(mut self, log: Box<dyn Write + Send>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn buffer(&self) -> &TextBuffer {
        &self.buffer
    }

    pub fn begin_sample(&mut self) {
        self.buffer.clear();
    }

    /// Runs one finished sample through the screen model and recognizer.
    ///
    /// Returns the message to send back, or `None` when the monitor saw no
    /// change in the text buffer.
    pub fn handle_sample(&mut self, sample_index: u32, events: &[TouchEvent]) -> Option<Message> {
        let started = Instant::now();
        let strokes = match simulate_screen(events, &self.config.resample) {
            Ok(s) => s,
            Err(e) => {
                let detail = e.to_string();
                self.log_sample(sample_index, events, None, None, Some(&detail));
                return Some(Message::AgentError {
                    code: error_code::MALFORMED_STREAM,
                    detail,
                });
            }
        };
        let text = self.recognizer.recognize(sample_index, &strokes);
        if self.config.commit_delay_ms > 0 {
            thread::sleep(scaled(self.config.commit_delay_ms, self.config.time_scale));
        }
        let changed = self.buffer.commit(&text);
        let latency_ms = started.elapsed().as_millis().min(u128::from(u32::MAX)) as u32;
        let points: usize = strokes.iter().map(Stroke::len).sum();
        if changed {
            self.log_sample(sample_index, events, Some(points), Some(&text), None);
            Some(Message::Result {
                latency_ms,
                text: self.buffer.content().to_owned(),
            })
        } else {
            self.log_sample(sample_index, events, Some(points), None, None);
            None
        }
    }

    fn log_sample(
        &mut self,
        sample_index: u32,
        events: &[TouchEvent],
        points: Option<usize>,
        result: Option<&str>,
        error: Option<&str>,
    ) {
        let Some(log) = self.log.as_mut() else {
            return;
        };
        let events: Vec<_> = events
            .iter()
            .map(|e| [i64::from(e.kind.code()), i64::from(e.x), i64::from(e.y), i64::from(e.t)])
            .collect();
        let line = json!({
            "sample_index": sample_index,
            "events": events,
            "points_seen": points,
            "result": result,
            "error": error,
        });
        // Logging is best effort.
        let _ = writeln!(log, "{line}").and_then(|_| log.flush());
    }

    /// Serves one orchestrator connection until Bye, EOF, or a fault.
    pub fn serve_connection(&mut self, stream: TcpStream) -> Result<(), WireError> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        let mut state = SessionState::new();
        let mut events = Vec::new();
        let mut current = 0u32;

        let mut send = |state: &mut SessionState, msg: Message| -> Result<(), WireError> {
            // The agent never produces a message its own state machine rejects.
            state.advance(&msg).expect("agent-generated message is valid");
            wire::write_message(&mut writer, &msg)
        };

        loop {
            let msg = match wire::read_message(&mut reader) {
                Ok(m) => m,
                Err(WireError::Closed) => return Ok(()),
                Err(e) => return Err(e),
            };
            if let Err(violation) = state.advance(&msg) {
                let reply = Message::AgentError {
                    code: error_code::PROTOCOL_VIOLATION,
                    detail: violation.to_string(),
                };
                // Best effort; the session is over either way.
                let _ = wire::write_message(&mut BufWriter::new(reader.get_ref()), &reply);
                return Ok(());
            }
            match msg {
                Message::Hello { version } if version == PROTOCOL_VERSION => {
                    send(
                        &mut state,
                        Message::HelloAck {
                            version: PROTOCOL_VERSION,
                        },
                    )?;
                }
                Message::Hello { version } => {
                    let detail = format!("unsupported protocol version {version}, expected {PROTOCOL_VERSION}");
                    send(
                        &mut state,
                        Message::AgentError {
                            code: error_code::VERSION_MISMATCH,
                            detail,
                        },
                    )?;
                    return Ok(());
                }
                Message::SampleBegin { sample_index } => {
                    self.begin_sample();
                    events.clear();
                    current = sample_index;
                }
                Message::Touch(ev) => events.push(ev),
                Message::SampleEnd => {
                    if let Some(reply) = self.handle_sample(current, &events) {
                        send(&mut state, reply)?;
                    }
                }
                Message::Bye => return Ok(()),
                // Rejected by the state machine above.
                Message::HelloAck { .. } | Message::Result { .. } | Message::AgentError { .. } => unreachable!(),
            }
        }
    }
}

pub(crate) fn scaled(ms: u32, scale: f64) -> Duration {
    Duration::from_secs_f64(f64::from(ms) / 1000.0 * scale.max(0.0))
}

/// Handle for stopping a running agent abruptly.
#[derive(Clone, Debug)]
pub struct AgentControl {
    killed: Arc<AtomicBool>,
    current: Arc<Mutex<Option<TcpStream>>>,
    addr: SocketAddr,
}

impl AgentControl {
    /// Drops the active connection mid-session and stops accepting new ones,
    /// like a phone being unplugged.
    pub fn kill(&self) {
        self.killed.store(true, Ordering::SeqCst);
        if let Some(stream) = self.current.lock().expect("agent control lock").take() {
            let _ = stream.shutdown(Shutdown::Both);
        }
        // Wake a blocked accept().
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
    }

    pub fn is_killed(&self) -> bool {
        self.killed.load(Ordering::SeqCst)
    }
}

pub struct AgentServer {
    listener: TcpListener,
    control: AgentControl,
}

impl AgentServer {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        Ok(Self {
            listener,
            control: AgentControl {
                killed: Arc::new(AtomicBool::new(false)),
                current: Arc::new(Mutex::new(None)),
                addr,
            },
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.control.addr
    }

    pub fn control(&self) -> AgentControl {
        self.control.clone()
    }

    /// Serves sessions one at a time until killed. `max_sessions` bounds the
    /// number of connections served.
    pub fn serve<R: Recognizer>(self, agent: &mut DeviceAgent<R>, max_sessions: Option<usize>) -> io::Result<()> {
        let mut served = 0;
        while max_sessions.is_none_or(|m| served < m) {
            let (stream, _) = self.listener.accept()?;
            if self.control.is_killed() {
                break;
            }
            *self.control.current.lock().expect("agent control lock") = Some(stream.try_clone()?);
            // A dropped or misbehaving peer only ends its own session.
            let _ = agent.serve_connection(stream);
            self.control.current.lock().expect("agent control lock").take();
            served += 1;
            if self.control.is_killed() {
                break;
            }
        }
        Ok(())
    }
}

/// An agent serving on a background thread.
pub struct AgentHandle {
    pub addr: SocketAddr,
    pub control: AgentControl,
    join: JoinHandle<io::Result<()>>,
}

impl AgentHandle {
    pub fn kill(self) {
        self.control.kill();
        let _ = self.join.join();
    }

    pub fn join(self) -> io::Result<()> {
        self.join
            .join()
            .unwrap_or_else(|_| Err(io::Error::other("agent thread panicked")))
    }
}

/// Starts an agent on `addr` (use port 0 for an ephemeral port).
pub fn spawn_agent<R: Recognizer + 'static>(
    addr: impl ToSocketAddrs,
    config: AgentConfig,
    recognizer: R,
    max_sessions: Option<usize>,
) -> io::Result<AgentHandle> {
    let server = AgentServer::bind(addr)?;
    let addr = server.local_addr();
    let control = server.control();
    let join = thread::spawn(move || {
        let mut agent = DeviceAgent::new(config, recognizer);
        server.serve(&mut agent, max_sessions)
    });
    Ok(AgentHandle { addr, control, join })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognizer::{ConstantRecognizer, OracleRecognizer};
    use crate::trajectory::{resample_time, to_touch_events, Point, Sample, TouchKind};
    use std::collections::HashMap;
    use std::sync::Mutex;

    /// Records the strokes it was given and answers a fixed text.
    struct Capture(Arc<Mutex<Vec<Vec<Stroke>>>>, String);

    impl Recognizer for Capture {
        fn recognize(&self, _: u32, strokes: &[Stroke]) -> String {
            self.0.lock().unwrap().push(strokes.to_vec());
            self.1.clone()
        }
    }

    fn sample() -> Sample {
        let a = Stroke::from_coords(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]).unwrap();
        let b = Stroke::from_coords(&[(5, 5), (5, 6), (5, 7), (5, 8)]).unwrap();
        Sample::new(0, "永", vec![a, b]).unwrap()
    }

    #[test]
    fn text_buffer_monitoring() {
        let mut b = TextBuffer::default();
        assert!(!b.commit(""));
        assert!(b.commit("永"));
        assert!(b.commit("ab"));
        assert_eq!(b.history(), &[0, 1, 3]);
        b.clear();
        assert!(b.is_empty() && b.history().is_empty());
    }

    #[test]
    fn oracle_answers_ground_truth() {
        let oracle = OracleRecognizer::new(HashMap::from([(4, "永".to_owned())]));
        let mut agent = DeviceAgent::new(AgentConfig::default(), oracle);
        agent.begin_sample();
        let reply = agent.handle_sample(4, &to_touch_events(&sample(), 6));
        assert!(matches!(reply, Some(Message::Result { ref text, .. }) if text == "永"));
    }

    #[test]
    fn empty_output_is_silent() {
        let mut agent = DeviceAgent::new(AgentConfig::default(), ConstantRecognizer(String::new()));
        agent.begin_sample();
        assert_eq!(agent.handle_sample(0, &to_touch_events(&sample(), 6)), None);
    }

    #[test]
    fn malformed_stream_reports_code_two() {
        let mut agent = DeviceAgent::new(AgentConfig::default(), ConstantRecognizer("x".into()));
        let reply = agent.handle_sample(0, &[TouchEvent::new(TouchKind::Move, 0, 0, 0)]);
        assert!(matches!(reply, Some(Message::AgentError { code: 2, .. })));
    }

    #[test]
    fn time_thinning_matches_direct_resampler() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let config = AgentConfig {
            resample: ResampleConfig {
                time_threshold_ms: 12,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut agent = DeviceAgent::new(config, Capture(seen.clone(), "x".into()));
        let s = sample();
        let events = to_touch_events(&s, 6);
        agent.handle_sample(0, &events);
        let got = seen.lock().unwrap().pop().unwrap();

        // Expected: retime the original points on the 6 ms cadence and thin.
        let mut t = 0;
        for (orig, got) in s.strokes().iter().zip(&got) {
            let timed: Vec<Point> = orig
                .points()
                .iter()
                .map(|p| {
                    let q = Point::new(p.x, p.y, t);
                    t += 6;
                    q
                })
                .collect();
            assert_eq!(got.points(), resample_time(&timed, 12).as_slice());
        }
        assert_eq!(got.iter().map(Stroke::len).collect::<Vec<_>>(), vec![3, 3]);
    }

    #[test]
    fn replay_is_reproducible() {
        let s = sample();
        let events = to_touch_events(&s, 6);
        let config = AgentConfig {
            resample: ResampleConfig {
                time_threshold_ms: 12,
                distance_threshold: 1.5,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = || {
            let seen = Arc::new(Mutex::new(Vec::new()));
            let mut agent = DeviceAgent::new(config, Capture(seen.clone(), "q".into()));
            let reply = agent.handle_sample(9, &events);
            let strokes = seen.lock().unwrap().clone();
            (
                reply.map(|m| match m {
                    Message::Result { text, .. } => text,
                    other => panic!("{other:?}"),
                }),
                strokes,
            )
        };
        assert_eq!(run(), run());
    }
}
