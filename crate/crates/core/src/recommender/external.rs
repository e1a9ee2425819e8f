//! External proposal channel. The request carries the canvas size, the
//! retrieved exemplar layouts and an instruction string; the response body
//! is a layout in the canonical JSON form.

use std::error::Error as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::clamp_to_canvas;
use crate::layout::{Canvas, Layout};
use crate::retrieval::CorpusEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub canvas: Canvas,
    pub examples: Vec<Layout>,
    pub instructions: String,
}

pub fn default_instructions() -> String {
    [
        "You place design elements on a background canvas.",
        "1. Study the example layouts, which come from canvases similar to this one.",
        "2. Choose how many elements to place and the type of each: text, logo or underlay.",
        "3. Give every element a bounding box [x, y, w, h] in normalized canvas units, \
         (x, y) being the top-left corner. Keep content elements apart, align their edges \
         and keep underlays behind the content they support.",
        "Reply with one JSON object: {\"canvas\": {\"width\", \"height\"}, \
         \"elements\": [{\"id\", \"type\", \"bbox\", \"asset\"}]}.",
    ]
    .join("\n")
}

pub fn build_request(canvas: Canvas, retrieved: &[&CorpusEntry]) -> ProposalRequest {
    ProposalRequest {
        canvas,
        examples: retrieved.iter().map(|e| e.layout.clone()).collect(),
        instructions: default_instructions(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("transport failure: {0}")]
    Io(String),
}

/// Sends a JSON body and returns the JSON reply body.
pub trait Transport: Send + Sync {
    fn post_json(&self, body: &str) -> Result<String, TransportError>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub endpoint: String,
    pub timeout: Duration,
}

impl HttpTransport {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpTransport {
            endpoint: endpoint.into(),
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    let mut source = t.source();
    while let Some(err) = source {
        if let Some(io) = err.downcast_ref::<std::io::Error>() {
            if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                return true;
            }
        }
        source = err.source();
    }
    t.to_string().contains("timed out")
}

impl Transport for HttpTransport {
    fn post_json(&self, body: &str) -> Result<String, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let resp = agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json; charset=utf-8")
            .send_string(body)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => TransportError::Status(code),
                ureq::Error::Transport(t) if is_timeout(&t) => TransportError::Timeout,
                ureq::Error::Transport(t) => TransportError::Io(t.to_string()),
            })?;
        resp.into_string().map_err(|e| {
            if matches!(e.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) {
                TransportError::Timeout
            } else {
                TransportError::Io(e.to_string())
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    Timeout,
    Transport,
    MalformedResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub reason: FallbackReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalOutcome {
    pub layout: Layout,
    pub fallback: Option<FallbackRecord>,
}

fn parse_response(canvas: Canvas, body: &str) -> Result<Layout, String> {
    let mut layout: Layout = serde_json::from_str(body).map_err(|e| e.to_string())?;
    layout.canvas = canvas;
    for e in &mut layout.elements {
        if !e.bbox.is_finite() || !e.bbox.has_positive_size() {
            return Err(format!("element {:?} has an unusable bbox", e.id));
        }
        e.bbox = clamp_to_canvas(&e.bbox);
    }
    let hard: Vec<String> = layout
        .validate()
        .into_iter()
        .filter(|v| !v.is_warning())
        .map(|v| v.to_string())
        .collect();
    if !hard.is_empty() {
        return Err(hard.join("; "));
    }
    Ok(layout)
}

/// Asks the external proposer for a layout. Any transport or parsing
/// failure is recorded and answered with `fallback()` instead.
pub fn external_propose(
    req: &ProposalRequest,
    transport: &dyn Transport,
    fallback: impl FnOnce() -> Layout,
) -> ProposalOutcome {
    let body = serde_json::to_string(req).expect("request serializes");
    let failure = match transport.post_json(&body) {
        Ok(reply) => match parse_response(req.canvas, &reply) {
            Ok(layout) => {
                return ProposalOutcome {
                    layout,
                    fallback: None,
                }
            }
            Err(detail) => FallbackRecord {
                reason: FallbackReason::MalformedResponse,
                detail,
            },
        },
        Err(TransportError::Timeout) => FallbackRecord {
            reason: FallbackReason::Timeout,
            detail: TransportError::Timeout.to_string(),
        },
        Err(e) => FallbackRecord {
            reason: FallbackReason::Transport,
            detail: e.to_string(),
        },
    };
    ProposalOutcome {
        layout: fallback(),
        fallback: Some(failure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::layout::{Element, ElementType};

    struct Canned(Result<String, TransportError>);

    impl Transport for Canned {
        fn post_json(&self, body: &str) -> Result<String, TransportError> {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            assert!(v["instructions"].is_string());
            assert!(v["examples"].is_array());
            self.0.clone()
        }
    }

    fn request() -> ProposalRequest {
        ProposalRequest {
            canvas: Canvas { width: 300, height: 400 },
            examples: vec![Layout::new(300, 400)],
            instructions: default_instructions(),
        }
    }

    fn fallback_layout() -> Layout {
        Layout::new(300, 400).with_element(Element::new("f", ElementType::Text, BBox::new(0.1, 0.1, 0.2, 0.1)))
    }

    #[test]
    fn well_formed_response_is_used() {
        let body = r#"{"canvas":{"width":300,"height":400},"elements":[
            {"id":"a","type":"text","bbox":[0.9,0.1,0.2,0.1],"asset":null}]}"#;
        let out = external_propose(&request(), &Canned(Ok(body.into())), fallback_layout);
        assert_eq!(out.fallback, None);
        // clamped back onto the canvas
        assert!((out.layout.elements[0].bbox.x - 0.8).abs() < 1e-12);
        assert!(out.layout.is_valid());
    }

    #[test]
    fn negative_width_falls_back() {
        let body = r#"{"canvas":{"width":300,"height":400},"elements":[
            {"id":"a","type":"text","bbox":[0.1,0.1,-0.1,0.1]}]}"#;
        let out = external_propose(&request(), &Canned(Ok(body.into())), fallback_layout);
        assert_eq!(out.fallback.unwrap().reason, FallbackReason::MalformedResponse);
        assert_eq!(out.layout, fallback_layout());
    }

    #[test]
    fn duplicate_ids_and_garbage_fall_back() {
        let dup = r#"{"canvas":{"width":1,"height":1},"elements":[
            {"id":"a","type":"text","bbox":[0.1,0.1,0.1,0.1]},
            {"id":"a","type":"logo","bbox":[0.5,0.5,0.1,0.1]}]}"#;
        let out = external_propose(&request(), &Canned(Ok(dup.into())), fallback_layout);
        assert_eq!(out.fallback.unwrap().reason, FallbackReason::MalformedResponse);
        let out = external_propose(&request(), &Canned(Ok("not json".into())), fallback_layout);
        assert_eq!(out.fallback.unwrap().reason, FallbackReason::MalformedResponse);
    }

    #[test]
    fn transport_failures_fall_back() {
        let out = external_propose(&request(), &Canned(Err(TransportError::Timeout)), fallback_layout);
        assert_eq!(out.fallback.unwrap().reason, FallbackReason::Timeout);
        let out = external_propose(&request(), &Canned(Err(TransportError::Status(500))), fallback_layout);
        assert_eq!(out.fallback.unwrap().reason, FallbackReason::Transport);
    }
}
