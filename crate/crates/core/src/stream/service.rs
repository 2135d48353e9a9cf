//! Transport-free HTTP handling for a stream task.

use serde_json::json;

use super::engine::{StreamEngine, WindowBatch};
use super::httpout::{httpout_json, EMPTY_SERIES};
use super::point::DataPoint;
use super::score::{AnomalyAlert, StreamScorer};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Response {
    fn json(status: u16, body: String) -> Self {
        Response {
            status,
            content_type: "application/json",
            body,
        }
    }

    fn error(status: u16, message: impl std::fmt::Display) -> Self {
        Response::json(status, json!({ "error": message.to_string() }).to_string())
    }
}

/// An engine plus an optional scorer; alerts accumulate in arrival order.
#[derive(Debug)]
pub struct StreamService<T> {
    pub engine: StreamEngine,
    scorer: Option<StreamScorer<T>>,
    alerts: Vec<AnomalyAlert>,
}

impl<T: Scalar> StreamService<T> {
    pub fn new(engine: StreamEngine, scorer: Option<StreamScorer<T>>) -> Self {
        StreamService {
            engine,
            scorer,
            alerts: Vec::new(),
        }
    }

    pub fn alerts(&self) -> &[AnomalyAlert] {
        &self.alerts
    }

    pub fn latest_json(&self) -> Option<String> {
        let task = self.engine.task();
        self.engine
            .latest_batch()
            .map(|b| httpout_json(&task.measurement, self.engine.schema(), &b.points))
    }

    /// Scores batches emitted since the last call.
    fn process(&mut self, on_batch: &mut dyn FnMut(&WindowBatch)) -> Result<()> {
        for batch in self.engine.take_emitted() {
            on_batch(&batch);
            if let Some(scorer) = self.scorer.as_mut() {
                self.alerts.extend(scorer.score_batch(&batch)?);
            }
        }
        Ok(())
    }

    pub fn ingest_body(&mut self, body: &str) -> Result<usize> {
        let acks = self.engine.ingest_lines(body);
        // Windows closed by the lines accepted before a failure still get scored.
        self.process(&mut |_| {})?;
        Ok(acks?.len())
    }

    /// Feeds points under the virtual clock, then closes the final window.
    pub fn replay(
        &mut self,
        points: impl IntoIterator<Item = DataPoint>,
        mut on_batch: impl FnMut(&WindowBatch),
    ) -> Result<()> {
        for p in points {
            self.engine.ingest_point(p)?;
            self.process(&mut on_batch)?;
        }
        self.finish(on_batch)
    }

    pub fn finish(&mut self, mut on_batch: impl FnMut(&WindowBatch)) -> Result<()> {
        self.engine.flush()?;
        self.process(&mut on_batch)
    }

    /// Handles `POST /write?db=<name>`, `GET <out_path>` and `GET /alerts`.
    pub fn route(&mut self, method: &str, url: &str, body: &str) -> Response {
        let (path, query) = url.split_once('?').unwrap_or((url, ""));
        let out_path = self.engine.task().out_path.clone();
        match (method, path) {
            ("POST", "/write") => {
                let db = query
                    .split('&')
                    .filter_map(|kv| kv.split_once('='))
                    .find(|(k, _)| *k == "db")
                    .map(|(_, v)| v);
                if db.map_or(true, str::is_empty) {
                    return Response::error(400, "missing db parameter");
                }
                match self.ingest_body(body) {
                    Ok(_) => Response {
                        status: 204,
                        content_type: "text/plain",
                        body: String::new(),
                    },
                    Err(e) => Response::error(400, e),
                }
            }
            ("GET", p) if p == out_path => match self.latest_json() {
                Some(body) => Response::json(200, body),
                None => Response::json(404, EMPTY_SERIES.to_string()),
            },
            ("GET", "/alerts") => Response::json(200, serde_json::to_string(&self.alerts).expect("alerts serialize")),
            (_, "/write") | (_, "/alerts") => Response::error(405, "method not allowed"),
            (_, p) if p == out_path => Response::error(405, "method not allowed"),
            _ => Response::error(404, format!("no route for {path}")),
        }
    }
}
