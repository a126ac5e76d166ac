//! Replay harness for measuring the recognition accuracy of handwriting
//! input methods.
//!
//! An orchestrator replays labeled handwriting samples as paced touch events
//! to a device agent over a framed TCP protocol. The agent models the touch
//! screen, runs a recognizer, and reports what the input method committed;
//! the orchestrator scores each answer and aggregates accuracy per test set.

pub mod agent;
pub mod dataset;
pub mod metrics;
pub mod orchestrator;
pub mod recognizer;
pub mod rng;
pub mod synth;
pub mod trajectory;
pub mod wire;

pub use agent::{spawn_agent, AgentConfig, AgentControl, AgentHandle, AgentServer, DeviceAgent, TextBuffer};
pub use dataset::{
    build_replicas, filter_by_charset, load_charset, parse_hws, write_hws, Charset, SamplePool, TestReplica,
};
pub use metrics::{aggregate_replicas, AccuracyReport, MergeableCounter, Percent};
pub use orchestrator::{classify_result, run_session, write_report, Outcome, RecognitionRecord, SessionConfig};
pub use recognizer::{dtw_distance, nn_classify, train_templates, NearestNeighbor, Recognizer, TemplateStore};
pub use trajectory::{
    from_touch_events, normalize_size, to_touch_events, Point, ResampleConfig, Sample, Stroke, TouchEvent, TouchKind,
};
