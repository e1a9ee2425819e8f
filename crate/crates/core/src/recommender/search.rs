//! Greedy first-improvement local search over box placements.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{intersection_area, Axis, BBox};
use crate::layout::{Layout, ProtectedRegion};

use super::cost::{content_mask, cost_of_boxes, CostWeights};
use super::RecommenderError;

/// Resized boxes stay within this factor of their starting size on each
/// side, so the search cannot shrink elements away to dodge overlap.
pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 2.0;

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Upper bound on candidate moves evaluated.
    pub max_moves: usize,
    pub rng_seed: u64,
    /// Displacement magnitudes, largest first.
    pub step_sizes: Vec<f64>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_moves: 5000,
            rng_seed: 0,
            step_sizes: vec![0.08, 0.04, 0.02, 0.01, 0.005],
        }
    }
}

impl SearchBudget {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), RecommenderError> {
        if self.max_moves == 0 {
            return Err(RecommenderError::InvalidBudget("max_moves must be positive".into()));
        }
        if self.step_sizes.is_empty() {
            return Err(RecommenderError::InvalidBudget("step_sizes is empty".into()));
        }
        if self.step_sizes.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.step_sizes.windows(2).any(|p| p[1] > p[0])
        {
            return Err(RecommenderError::InvalidBudget(
                "step_sizes must be positive and descending".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Translate { elem: usize, dx: f64, dy: f64 },
    Resize { elem: usize, dw: f64, dh: f64 },
    Snap { elem: usize, target: usize, axis: Axis },
}

impl Move {
    fn elem(&self) -> usize {
        match *self {
            Move::Translate { elem, .. } | Move::Resize { elem, .. } | Move::Snap { elem, .. } => {
                elem
            }
        }
    }

    fn apply(&self, boxes: &[BBox]) -> BBox {
        match *self {
            Move::Translate { elem, dx, dy } => boxes[elem].translated(dx, dy),
            Move::Resize { elem, dw, dh } => {
                let b = boxes[elem];
                BBox::new(b.x, b.y, b.w + dw, b.h + dh)
            }
            Move::Snap { elem, target, axis } => {
                let d = boxes[target].axis(axis) - boxes[elem].axis(axis);
                if axis.is_horizontal() {
                    boxes[elem].translated(d, 0.0)
                } else {
                    boxes[elem].translated(0.0, d)
                }
            }
        }
    }
}

fn moves_for_step(n: usize, step: f64) -> Vec<Move> {
    let mut moves = Vec::with_capacity(n * (8 + 6 * n.saturating_sub(1)));
    for elem in 0..n {
        for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            moves.push(Move::Translate { elem, dx, dy });
            moves.push(Move::Resize { elem, dw: dx, dh: dy });
        }
        for target in (0..n).filter(|&t| t != elem) {
            for axis in Axis::ALL {
                moves.push(Move::Snap { elem, target, axis });
            }
        }
    }
    moves
}

/// Improves `l0` by greedy first-improvement moves: translate or resize one
/// box by one step, or snap one box onto another box's axis. A move is
/// kept only if it strictly lowers the total cost, keeps every box on the
/// canvas and, with `omega`, does not start a new intersection with it.
/// Step sizes are tried largest first; a pass without improvement moves to
/// the next step, and a barren pass at the smallest step ends the search.
pub fn local_search(
    l0: &Layout,
    w: &CostWeights,
    budget: &SearchBudget,
    omega: Option<&ProtectedRegion>,
) -> Result<Layout, RecommenderError> {
    if !l0.is_valid() {
        return Err(RecommenderError::InvalidLayout(l0.validate()));
    }
    w.validate()?;
    budget.validate()?;

    let content = content_mask(l0);
    let initial: Vec<BBox> = l0.boxes().copied().collect();
    let mut boxes = initial.clone();
    let mut current = cost_of_boxes(&boxes, &content, w, omega).total;
    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    let mut evaluated = 0usize;

    'steps: for &step in &budget.step_sizes {
        loop {
            let mut moves = moves_for_step(boxes.len(), step);
            moves.shuffle(&mut rng);
            let mut improved = false;
            for mv in moves {
                if evaluated >= budget.max_moves {
                    break 'steps;
                }
                let i = mv.elem();
                let candidate = mv.apply(&boxes);
                if candidate == boxes[i] || !candidate.is_valid() {
                    continue;
                }
                let base = initial[i];
                if candidate.w < base.w * MIN_SCALE
                    || candidate.w > base.w * MAX_SCALE
                    || candidate.h < base.h * MIN_SCALE
                    || candidate.h > base.h * MAX_SCALE
                {
                    continue;
                }
                if let Some(o) = omega {
                    if intersection_area(&boxes[i], &o.region) == 0.0
                        && intersection_area(&candidate, &o.region) > 0.0
                    {
                        continue;
                    }
                }
                evaluated += 1;
                let previous = std::mem::replace(&mut boxes[i], candidate);
                let c = cost_of_boxes(&boxes, &content, w, omega).total;
                if c < current - IMPROVEMENT_EPS {
                    current = c;
                    improved = true;
                } else {
                    boxes[i] = previous;
                }
            }
            if !improved {
                break;
            }
        }
    }

    let mut out = l0.clone();
    for (e, b) in out.elements.iter_mut().zip(boxes) {
        e.bbox = b;
    }
    Ok(out)
}
