//! Layout proposals: copy the best exemplar, then place boxes by
//! minimizing the layout cost. An external proposer can stand in for the
//! first step, with the local engine as fallback.

mod cost;
mod external;
mod search;

pub use cost::{cost, CostBreakdown, CostWeights};
pub use external::{
    build_request, default_instructions, external_propose, FallbackReason, FallbackRecord,
    HttpTransport, ProposalOutcome, ProposalRequest, Transport, TransportError,
};
pub use search::{local_search, SearchBudget, MAX_SCALE, MIN_SCALE};

use thiserror::Error;

use crate::layout::{Canvas, Layout, Violation};
use crate::retrieval::CorpusEntry;

#[derive(Debug, Error, PartialEq)]
pub enum RecommenderError {
    #[error("invalid layout: {0:?}")]
    InvalidLayout(Vec<Violation>),
    #[error("no exemplars were retrieved")]
    EmptyRetrieval,
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("invalid search budget: {0}")]
    InvalidBudget(String),
}

/// Copies the top-ranked exemplar onto the target canvas. Normalized boxes
/// carry over unchanged, ids are reassigned and underlays move to the front.
pub fn propose_initial(
    canvas_w: u32,
    canvas_h: u32,
    retrieved: &[&CorpusEntry],
) -> Result<Layout, RecommenderError> {
    let top = retrieved.first().ok_or(RecommenderError::EmptyRetrieval)?;
    Ok(copy_exemplar(canvas_w, canvas_h, &top.layout))
}

pub fn copy_exemplar(canvas_w: u32, canvas_h: u32, exemplar: &Layout) -> Layout {
    let (under, content): (Vec<_>, Vec<_>) = exemplar
        .elements
        .iter()
        .partition(|e| e.kind.is_underlay());
    let elements = under
        .into_iter()
        .chain(content)
        .enumerate()
        .map(|(i, e)| {
            let mut e = e.clone();
            e.id = format!("e{i}");
            e
        })
        .collect();
    Layout {
        canvas: Canvas {
            width: canvas_w,
            height: canvas_h,
        },
        elements,
    }
}
