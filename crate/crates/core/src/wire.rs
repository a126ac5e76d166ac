//! Framed binary protocol between the orchestrator and a device agent.
//!
//! Every frame is a big-endian `u32` payload length (not counting itself),
//! followed by a one-byte message tag and a fixed-layout body. Strings are a
//! `u16` length followed by UTF-8 bytes. See `PROTOCOL.md` for byte layouts.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::trajectory::{TouchEvent, TouchKind};

pub const PROTOCOL_VERSION: u8 = 1;
pub const DEFAULT_PORT: u16 = 7431;
/// Largest accepted payload (tag + body).
pub const MAX_PAYLOAD: usize = 1 << 20;

const TAG_HELLO: u8 = 1;
const TAG_HELLO_ACK: u8 = 2;
const TAG_SAMPLE_BEGIN: u8 = 3;
const TAG_TOUCH: u8 = 4;
const TAG_SAMPLE_END: u8 = 5;
const TAG_RESULT: u8 = 6;
const TAG_AGENT_ERROR: u8 = 7;
const TAG_BYE: u8 = 8;

/// Agent error codes carried in [`Message::AgentError`].
pub mod error_code {
    pub const VERSION_MISMATCH: u16 = 1;
    pub const MALFORMED_STREAM: u16 = 2;
    pub const PROTOCOL_VIOLATION: u16 = 3;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { version: u8 },
    HelloAck { version: u8 },
    SampleBegin { sample_index: u32 },
    Touch(TouchEvent),
    SampleEnd,
    Result { latency_ms: u32, text: String },
    AgentError { code: u16, detail: String },
    Bye,
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => TAG_HELLO,
            Message::HelloAck { .. } => TAG_HELLO_ACK,
            Message::SampleBegin { .. } => TAG_SAMPLE_BEGIN,
            Message::Touch(_) => TAG_TOUCH,
            Message::SampleEnd => TAG_SAMPLE_END,
            Message::Result { .. } => TAG_RESULT,
            Message::AgentError { .. } => TAG_AGENT_ERROR,
            Message::Bye => TAG_BYE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::HelloAck { .. } => "HelloAck",
            Message::SampleBegin { .. } => "SampleBegin",
            Message::Touch(_) => "Touch",
            Message::SampleEnd => "SampleEnd",
            Message::Result { .. } => "Result",
            Message::AgentError { .. } => "AgentError",
            Message::Bye => "Bye",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("text field is {0} bytes, limit 65535")]
    TextTooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("need {needed} bytes to complete the frame")]
    NeedMoreBytes { needed: usize },
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("tag {tag} declares {declared} payload bytes but its body needs {expected}")]
    BodyLengthMismatch { tag: u8, declared: usize, expected: usize },
    #[error("string field is not valid UTF-8")]
    InvalidUtf8,
    #[error("unknown touch kind {0}")]
    InvalidTouchKind(u8),
    #[error("payload of {0} bytes exceeds the 1 MiB cap")]
    FrameTooLarge(usize),
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), EncodeError> {
    let len = u16::try_from(s.len()).map_err(|_| EncodeError::TextTooLong(s.len()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut out = vec![0, 0, 0, 0, msg.tag()];
    match msg {
        Message::Hello { version } | Message::HelloAck { version } => out.push(*version),
        Message::SampleBegin { sample_index } => out.extend_from_slice(&sample_index.to_be_bytes()),
        Message::Touch(ev) => {
            out.push(ev.kind.code());
            out.extend_from_slice(&ev.x.to_be_bytes());
            out.extend_from_slice(&ev.y.to_be_bytes());
            out.extend_from_slice(&ev.t.to_be_bytes());
        }
        Message::SampleEnd | Message::Bye => {}
        Message::Result { latency_ms, text } => {
            out.extend_from_slice(&latency_ms.to_be_bytes());
            put_str(&mut out, text)?;
        }
        Message::AgentError { code, detail } => {
            out.extend_from_slice(&code.to_be_bytes());
            put_str(&mut out, detail)?;
        }
    }
    let payload = (out.len() - 4) as u32;
    out[..4].copy_from_slice(&payload.to_be_bytes());
    Ok(out)
}

/// Parses a payload (tag + body) whose length is already known.
fn decode_payload(payload: &[u8]) -> Result<Message, DecodeError> {
    let Some((&tag, body)) = payload.split_first() else {
        return Err(DecodeError::BodyLengthMismatch {
            tag: 0,
            declared: 0,
            expected: 1,
        });
    };
    let exact = |expected: usize| {
        if body.len() == expected {
            Ok(())
        } else {
            Err(DecodeError::BodyLengthMismatch {
                tag,
                declared: payload.len(),
                expected: expected + 1,
            })
        }
    };
    // Fixed prefix, then a u16-prefixed string filling the rest exactly.
    let with_str = |fixed: usize| -> Result<String, DecodeError> {
        let mismatch = |expected| DecodeError::BodyLengthMismatch {
            tag,
            declared: payload.len(),
            expected,
        };
        if body.len() < fixed + 2 {
            return Err(mismatch(fixed + 3));
        }
        let len = u16::from_be_bytes([body[fixed], body[fixed + 1]]) as usize;
        if body.len() != fixed + 2 + len {
            return Err(mismatch(fixed + 3 + len));
        }
        String::from_utf8(body[fixed + 2..].to_vec()).map_err(|_| DecodeError::InvalidUtf8)
    };
    let u32_at = |i: usize| u32::from_be_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]);
    let i16_at = |i: usize| i16::from_be_bytes([body[i], body[i + 1]]);
    match tag {
        TAG_HELLO => exact(1).map(|_| Message::Hello { version: body[0] }),
        TAG_HELLO_ACK => exact(1).map(|_| Message::HelloAck { version: body[0] }),
        TAG_SAMPLE_BEGIN => exact(4).map(|_| Message::SampleBegin {
            sample_index: u32_at(0),
        }),
        TAG_TOUCH => {
            exact(9)?;
            let kind = TouchKind::from_code(body[0]).ok_or(DecodeError::InvalidTouchKind(body[0]))?;
            Ok(Message::Touch(TouchEvent::new(kind, i16_at(1), i16_at(3), u32_at(5))))
        }
        TAG_SAMPLE_END => exact(0).map(|_| Message::SampleEnd),
        TAG_BYE => exact(0).map(|_| Message::Bye),
        TAG_RESULT => {
            let text = with_str(4)?;
            Ok(Message::Result {
                latency_ms: u32_at(0),
                text,
            })
        }
        TAG_AGENT_ERROR => {
            let detail = with_str(2)?;
            Ok(Message::AgentError {
                code: u16::from_be_bytes([body[0], body[1]]),
                detail,
            })
        }
        other => Err(DecodeError::UnknownTag(other)),
    }
}

/// Checks a frame header and returns the payload length it declares.
fn payload_len(header: [u8; 4]) -> Result<usize, DecodeError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_PAYLOAD {
        return Err(DecodeError::FrameTooLarge(len));
    }
    Ok(len)
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// how many bytes it occupied. Total over arbitrary input.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::NeedMoreBytes { needed: 5 });
    }
    let len = payload_len([bytes[0], bytes[1], bytes[2], bytes[3]])?;
    if len == 0 {
        return decode_payload(&[]).map(|m| (m, 4));
    }
    let total = 4 + len;
    if bytes.len() < total {
        return Err(DecodeError::NeedMoreBytes { needed: total });
    }
    decode_payload(&bytes[4..total]).map(|m| (m, total))
}

/// Incremental decoder for a byte stream split at arbitrary points.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, `Ok(None)` if more bytes are needed.
    pub fn next_message(&mut self) -> Result<Option<Message>, DecodeError> {
        match decode_frame(&self.buf) {
            Ok((msg, used)) => {
                self.buf.drain(..used);
                Ok(Some(msg))
            }
            Err(DecodeError::NeedMoreBytes { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("peer closed the connection")]
    Closed,
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Reads exactly one frame. A clean EOF before the first header byte is
/// reported as [`WireError::Closed`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut header = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = payload_len(header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(decode_payload(&payload)?)
}

/// Session phase as seen by an observer of the merged message trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Nothing exchanged yet; a Hello must come first.
    Connecting,
    /// Hello sent, awaiting HelloAck.
    Greeting,
    /// Between samples.
    Idle,
    InSample(u32),
    /// SampleEnd sent; at most one Result or AgentError may follow.
    AwaitingResult(u32),
    /// Result delivered for this sample.
    Answered(u32),
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol violation: {message} not allowed while {phase}")]
pub struct ProtocolViolation {
    pub phase: String,
    pub message: &'static str,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Connecting => f.write_str("connecting"),
            Phase::Greeting => f.write_str("awaiting HelloAck"),
            Phase::Idle => f.write_str("idle"),
            Phase::InSample(i) => write!(f, "inside sample {i}"),
            Phase::AwaitingResult(i) => write!(f, "awaiting result for sample {i}"),
            Phase::Answered(i) => write!(f, "sample {i} already answered"),
            Phase::Closed => f.write_str("closed"),
        }
    }
}

/// The session state machine:
/// `Hello → HelloAck → (SampleBegin → Touch* → SampleEnd → [Result | AgentError])* → Bye`.
///
/// A missing Result (the orchestrator timed out) is allowed: the next
/// SampleBegin or Bye may follow SampleEnd directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    phase: Phase,
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            phase: Phase::Connecting,
        }
    }
}

impl SessionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn advance(&mut self, msg: &Message) -> Result<(), ProtocolViolation> {
        use Phase::*;
        let next = match (self.phase, msg) {
            (Connecting, Message::Hello { .. }) => Some(Greeting),
            (Greeting, Message::HelloAck { .. }) => Some(Idle),
            // Version refusal.
            (Greeting, Message::AgentError { .. }) => Some(Closed),
            (Idle | AwaitingResult(_) | Answered(_), Message::SampleBegin { sample_index }) => {
                Some(InSample(*sample_index))
            }
            (InSample(i), Message::Touch(_)) => Some(InSample(i)),
            (InSample(i), Message::SampleEnd) => Some(AwaitingResult(i)),
            (AwaitingResult(i), Message::Result { .. } | Message::AgentError { .. }) => Some(Answered(i)),
            (Idle | AwaitingResult(_) | Answered(_), Message::Bye) => Some(Closed),
            _ => None,
        };
        match next {
            Some(phase) => {
                self.phase = phase;
                Ok(())
            }
            None => Err(ProtocolViolation {
                phase: self.phase.to_string(),
                message: msg.name(),
            }),
        }
    }
}

/// Checks whether `next` may follow the already-accepted `history`.
pub fn validate_sequence(history: &[Message], next: &Message) -> Result<(), ProtocolViolation> {
    let mut state = SessionState::new();
    for msg in history {
        state.advance(msg)?;
    }
    state.advance(next)
}
