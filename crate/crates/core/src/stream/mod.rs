//! Stream emulation: a task script defines a sliding window over ingested points,
//! each closed window is served as JSON, and new points are scored by a model.

pub mod engine;
pub mod httpout;
pub mod point;
pub mod score;
pub mod service;
pub mod task;

pub use engine::{Ack, Clock, StreamEngine, WindowBatch};
pub use httpout::{httpout_json, parse_httpout, HttpOutPayload};
pub use point::{format_line, parse_line, points_from_frame, DataPoint};
pub use score::{score_stream, AnomalyAlert, StreamScorer};
pub use service::{Response, StreamService};
pub use task::{define_task, Span, StreamTaskSpec};
