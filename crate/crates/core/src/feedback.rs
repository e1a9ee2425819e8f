//! Corrective feedback for rejected layouts and the refine step that
//! applies it.
//!
//! Rules, in priority order, with at most one delta per element:
//! 1. boxes intersecting the protected region leave it by the shortest
//!    axis-aligned translation;
//! 2. when spacing (γ2) failed, the worst-overlapping content pair is
//!    separated by moving the later-rendered box along its minimal
//!    translation vector, among exits that raise γ2;
//! 3. when visibility (γ3) failed, the most-occluded box is separated from
//!    its largest occluder the same way.
//!
//! Color problems (γ1) have no geometric fix; a rejected layout that yields
//! no delta gets an empty plan marked uncorrectable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{clamp_to_canvas, intersection_area, BBox};
use crate::grader::{gamma2, occluded_fractions, Decision, GraderReport, Occlusion};
use crate::layout::{Layout, ProtectedRegion};
use crate::recommender::{local_search, CostWeights, RecommenderError, SearchBudget};

/// Extra push past the touching position so that separated boxes share no
/// area after floating-point round trips.
const SEPARATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaReason {
    ResolveOverlap,
    SnapAlign,
    ExitProtectedRegion,
    ClampCanvas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub element_id: String,
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
    pub reason: DeltaReason,
}

impl Delta {
    pub fn apply(&self, b: &BBox) -> BBox {
        clamp_to_canvas(&BBox::new(b.x + self.dx, b.y + self.dy, b.w + self.dw, b.h + self.dh))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackPlan {
    pub deltas: Vec<Delta>,
    /// Set when a rejected layout has no geometric correction.
    pub uncorrectable: bool,
}

impl FeedbackPlan {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeedbackError {
    #[error("plan refers to unknown element {0:?}")]
    UnknownElement(String),
    #[error(transparent)]
    Recommender(#[from] RecommenderError),
}

/// Translations of `mover` that clear `obstacle`, in the order left, right,
/// up, down.
fn exits(mover: &BBox, obstacle: &BBox) -> [(f64, f64); 4] {
    [
        (obstacle.x - mover.right() - SEPARATION, 0.0),
        (obstacle.right() - mover.x + SEPARATION, 0.0),
        (0.0, obstacle.y - mover.bottom() - SEPARATION),
        (0.0, obstacle.bottom() - mover.y + SEPARATION),
    ]
}

/// Shortest translation (after canvas clamping) that leaves `mover`
/// disjoint from `obstacle` and outside `omega`.
fn minimal_exit(
    mover: &BBox,
    obstacle: &BBox,
    omega: Option<&ProtectedRegion>,
    reason: DeltaReason,
    id: &str,
    admissible: &dyn Fn(&BBox) -> bool,
) -> Option<Delta> {
    exits(mover, obstacle)
        .into_iter()
        .filter_map(|(dx, dy)| {
            let moved = clamp_to_canvas(&mover.translated(dx, dy));
            let delta = Delta {
                element_id: id.to_string(),
                dx: moved.x - mover.x,
                dy: moved.y - mover.y,
                dw: 0.0,
                dh: 0.0,
                reason,
            };
            let applied = delta.apply(mover);
            let clear = intersection_area(&applied, obstacle) == 0.0
                && omega.map_or(true, |o| intersection_area(&applied, &o.region) == 0.0)
                && admissible(&applied);
            clear.then_some(delta)
        })
        .min_by(|a, b| (a.dx.abs() + a.dy.abs()).total_cmp(&(b.dx.abs() + b.dy.abs())))
}

fn gamma2_with(l: &Layout, i: usize, b: &BBox) -> f64 {
    let mut moved = l.clone();
    moved.elements[i].bbox = *b;
    gamma2(&moved)
}

/// Separates the pair (earlier, later), preferring to move the later box.
/// With `raise_gamma2`, only exits that strictly raise γ2 qualify.
fn separate(
    l: &Layout,
    earlier: usize,
    later: usize,
    taken: &[bool],
    omega: Option<&ProtectedRegion>,
    raise_gamma2: bool,
) -> Option<(usize, Delta)> {
    let before = gamma2(l);
    [(later, earlier), (earlier, later)]
        .into_iter()
        .filter(|&(m, _)| !taken[m])
        .find_map(|(m, o)| {
            let e = &l.elements[m];
            let admissible = |b: &BBox| !raise_gamma2 || gamma2_with(l, m, b) > before;
            minimal_exit(
                &e.bbox,
                &l.elements[o].bbox,
                omega,
                DeltaReason::ResolveOverlap,
                &e.id,
                &admissible,
            )
            .map(|d| (m, d))
        })
}

pub fn feedback(
    l: &Layout,
    report: &GraderReport,
    omega: Option<&ProtectedRegion>,
) -> FeedbackPlan {
    feedback_with(l, report, omega, &Occlusion::default())
}

pub fn feedback_with(
    l: &Layout,
    report: &GraderReport,
    omega: Option<&ProtectedRegion>,
    occlusion: &Occlusion,
) -> FeedbackPlan {
    if report.decision == Decision::Accept {
        return FeedbackPlan::default();
    }
    let n = l.len();
    let mut taken = vec![false; n];
    let mut deltas = Vec::new();

    if let Some(o) = omega {
        for (i, e) in l.elements.iter().enumerate() {
            if intersection_area(&e.bbox, &o.region) > 0.0 {
                if let Some(d) = minimal_exit(
                    &e.bbox,
                    &o.region,
                    omega,
                    DeltaReason::ExitProtectedRegion,
                    &e.id,
                    &|_| true,
                ) {
                    taken[i] = true;
                    deltas.push(d);
                }
            }
        }
    }

    if !report.passes[1] {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&l.elements[i], &l.elements[j]);
                if a.kind.is_underlay() || b.kind.is_underlay() {
                    continue;
                }
                let ov = intersection_area(&a.bbox, &b.bbox);
                if ov > 0.0 {
                    pairs.push((ov, i, j));
                }
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        if let Some((m, d)) = pairs
            .iter()
            .find_map(|&(_, i, j)| separate(l, i, j, &taken, omega, true))
        {
            taken[m] = true;
            deltas.push(d);
        }
    }

    if !report.passes[2] {
        let fractions = occluded_fractions(l, occlusion.grid);
        let mut occluded: Vec<(f64, usize)> = fractions
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > occlusion.threshold)
            .map(|(j, &f)| (f, j))
            .collect();
        occluded.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let found = occluded.iter().find_map(|&(_, j)| {
            let target = &l.elements[j].bbox;
            let mut occluders: Vec<(f64, usize)> = (j + 1..n)
                .filter(|&k| !l.elements[k].kind.is_underlay())
                .map(|k| (intersection_area(target, &l.elements[k].bbox), k))
                .filter(|(ov, _)| *ov > 0.0)
                .collect();
            occluders.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            occluders
                .iter()
                .find_map(|&(_, k)| separate(l, j, k, &taken, omega, false))
        });
        if let Some((m, d)) = found {
            taken[m] = true;
            deltas.push(d);
        }
    }

    FeedbackPlan {
        uncorrectable: deltas.is_empty(),
        deltas,
    }
}

/// Applies the plan, then polishes with one local search that keeps the
/// protected region clear. A polish that would lower γ2 below the
/// plan-applied layout is discarded.
pub fn refine(
    l: &Layout,
    plan: &FeedbackPlan,
    w: &CostWeights,
    budget: &SearchBudget,
    omega: Option<&ProtectedRegion>,
) -> Result<Layout, FeedbackError> {
    let mut next = l.clone();
    for d in &plan.deltas {
        let i = next
            .index_of(&d.element_id)
            .ok_or_else(|| FeedbackError::UnknownElement(d.element_id.clone()))?;
        next.elements[i].bbox = d.apply(&next.elements[i].bbox);
    }
    let polished = local_search(&next, w, budget, omega)?;
    Ok(if gamma2(&polished) >= gamma2(&next) { polished } else { next })
}
