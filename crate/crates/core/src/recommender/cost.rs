use serde::{Deserialize, Serialize};

use crate::geometry::{area, intersection_area, BBox};
use crate::layout::{Layout, ProtectedRegion};
use crate::metrics::{alignment_of_boxes, pairwise_overlap_ratio};

use super::RecommenderError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha_overlap: f64,
    pub alpha_alignment: f64,
    pub alpha_margins: f64,
    /// Minimum spacing between content elements and to the canvas edge.
    pub margin: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha_overlap: 1.0,
            alpha_alignment: 0.5,
            alpha_margins: 0.5,
            margin: 0.02,
        }
    }
}

impl CostWeights {
    pub fn new(alpha_overlap: f64, alpha_alignment: f64, alpha_margins: f64, margin: f64) -> Self {
        CostWeights {
            alpha_overlap,
            alpha_alignment,
            alpha_margins,
            margin,
        }
    }

    pub fn validate(&self) -> Result<(), RecommenderError> {
        let alphas = [self.alpha_overlap, self.alpha_alignment, self.alpha_margins];
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) || alphas.iter().all(|a| *a == 0.0) {
            return Err(RecommenderError::InvalidWeights(
                "alphas must be non-negative with at least one positive".into(),
            ));
        }
        if !(0.0..=0.25).contains(&self.margin) {
            return Err(RecommenderError::InvalidWeights("margin must lie in [0, 0.25]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c_overlap: f64,
    pub c_alignment: f64,
    pub c_margins: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn weighted(w: &CostWeights, c_overlap: f64, c_alignment: f64, c_margins: f64) -> Self {
        CostBreakdown {
            c_overlap,
            c_alignment,
            c_margins,
            total: w.alpha_overlap * c_overlap
                + w.alpha_alignment * c_alignment
                + w.alpha_margins * c_margins,
        }
    }
}

/// Cost over raw boxes; `content[i]` is false for underlays.
pub(crate) fn cost_of_boxes(
    boxes: &[BBox],
    content: &[bool],
    w: &CostWeights,
    omega: Option<&ProtectedRegion>,
) -> CostBreakdown {
    let content_boxes: Vec<BBox> = boxes
        .iter()
        .zip(content)
        .filter(|(_, &c)| c)
        .map(|(b, _)| *b)
        .collect();
    let c_overlap = pairwise_overlap_ratio(&content_boxes);
    let c_alignment = alignment_of_boxes(boxes);

    let m = w.margin;
    let mut c_margins = 0.0;
    for i in 0..content_boxes.len() {
        for j in i + 1..content_boxes.len() {
            // overlapping pairs count as zero gap
            let gap = content_boxes[i].gap(&content_boxes[j]).max(0.0);
            c_margins += (m - gap).max(0.0);
        }
    }
    for b in boxes {
        for dist in [b.x, b.y, 1.0 - b.right(), 1.0 - b.bottom()] {
            c_margins += (m - dist).max(0.0);
        }
    }
    if let Some(o) = omega {
        let oa = area(&o.region);
        if oa > 0.0 {
            c_margins += boxes
                .iter()
                .map(|b| intersection_area(b, &o.region))
                .sum::<f64>()
                / oa;
        }
    }
    CostBreakdown::weighted(w, c_overlap, c_alignment, c_margins)
}

pub(crate) fn content_mask(l: &Layout) -> Vec<bool> {
    l.elements.iter().map(|e| !e.kind.is_underlay()).collect()
}

/// Weighted overlap, alignment and margin-violation cost of a layout.
pub fn cost(
    l: &Layout,
    w: &CostWeights,
    omega: Option<&ProtectedRegion>,
) -> Result<CostBreakdown, RecommenderError> {
    if !l.is_valid() {
        return Err(RecommenderError::InvalidLayout(l.validate()));
    }
    let boxes: Vec<BBox> = l.boxes().copied().collect();
    Ok(cost_of_boxes(&boxes, &content_mask(l), w, omega))
}
