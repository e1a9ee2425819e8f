//! Corpus-level layout quality metrics: overlay (Ove), alignment (Ali) and
//! loose/strict underlay effectiveness (Und_l, Und_s).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{area, contains, intersection_area, Axis, BBox};
use crate::layout::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ove: f64,
    pub ali: f64,
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricMeans {
    pub ove: f64,
    pub ali: f64,
    pub und_l: Option<f64>,
    pub und_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub count: usize,
    pub means: MetricMeans,
    pub layouts: BTreeMap<String, MetricReport>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("layout id {0:?} appears more than once")]
    DuplicateLayoutId(String),
}

/// Sum of pairwise intersections divided by the summed areas. Zero for
/// fewer than two boxes.
pub(crate) fn pairwise_overlap_ratio(boxes: &[BBox]) -> f64 {
    if boxes.len() < 2 {
        return 0.0;
    }
    let total: f64 = boxes.iter().map(area).sum();
    let mut overlap = 0.0;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            overlap += intersection_area(&boxes[i], &boxes[j]);
        }
    }
    if total > 0.0 {
        overlap / total
    } else {
        0.0
    }
}

fn content_boxes(l: &Layout) -> Vec<BBox> {
    l.elements
        .iter()
        .filter(|e| !e.kind.is_underlay())
        .map(|e| e.bbox)
        .collect()
}

fn underlay_boxes(l: &Layout) -> Vec<BBox> {
    l.elements
        .iter()
        .filter(|e| e.kind.is_underlay())
        .map(|e| e.bbox)
        .collect()
}

/// Overlap ratio among non-underlay elements.
pub fn overlay(l: &Layout) -> f64 {
    pairwise_overlap_ratio(&content_boxes(l)).clamp(0.0, 1.0)
}

/// Nearest deviation of `b` to any of `others` over the six axes.
pub(crate) fn nearest_axis_deviation<'a>(b: &BBox, others: impl Iterator<Item = &'a BBox>) -> f64 {
    let mut best = f64::INFINITY;
    for o in others {
        for axis in Axis::ALL {
            best = best.min((b.axis(axis) - o.axis(axis)).abs());
        }
    }
    best
}

pub(crate) fn alignment_of_boxes(boxes: &[BBox]) -> f64 {
    if boxes.len() < 2 {
        return 0.0;
    }
    let sum: f64 = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let others = boxes
                .iter()
                .enumerate()
                .filter(move |&(j, _)| j != i)
                .map(|(_, o)| o);
            nearest_axis_deviation(b, others)
        })
        .sum();
    sum / boxes.len() as f64
}

/// Mean over elements of the smallest deviation to any other element on
/// any of the six alignment axes.
pub fn alignment(l: &Layout) -> f64 {
    let boxes: Vec<BBox> = l.boxes().copied().collect();
    alignment_of_boxes(&boxes)
}

pub fn underlay_loose(l: &Layout) -> Option<f64> {
    let underlays = underlay_boxes(l);
    if underlays.is_empty() {
        return None;
    }
    let content = content_boxes(l);
    let sum: f64 = underlays
        .iter()
        .map(|u| {
            content
                .iter()
                .map(|e| (intersection_area(u, e) / area(e)).min(1.0))
                .fold(0.0, f64::max)
        })
        .sum();
    Some(sum / underlays.len() as f64)
}

pub fn underlay_strict(l: &Layout) -> Option<f64> {
    let underlays = underlay_boxes(l);
    if underlays.is_empty() {
        return None;
    }
    let content = content_boxes(l);
    let hits = underlays
        .iter()
        .filter(|u| content.iter().any(|e| contains(u, e)))
        .count();
    Some(hits as f64 / underlays.len() as f64)
}

pub fn evaluate(l: &Layout) -> MetricReport {
    MetricReport {
        ove: overlay(l),
        ali: alignment(l),
        und_l: underlay_loose(l),
        und_s: underlay_strict(l),
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-layout reports plus arithmetic means. Underlay means only cover
/// layouts that contain an underlay. Sums run in layout-id order.
pub fn evaluate_corpus(layouts: &[(String, Layout)]) -> Result<CorpusReport, MetricsError> {
    if layouts.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut per = BTreeMap::new();
    for (id, l) in layouts {
        if per.insert(id.clone(), evaluate(l)).is_some() {
            return Err(MetricsError::DuplicateLayoutId(id.clone()));
        }
    }
    Ok(summarize(per))
}

pub(crate) fn summarize(per: BTreeMap<String, MetricReport>) -> CorpusReport {
    let n = per.len() as f64;
    let means = MetricMeans {
        ove: per.values().map(|r| r.ove).sum::<f64>() / n,
        ali: per.values().map(|r| r.ali).sum::<f64>() / n,
        und_l: mean_defined(per.values().map(|r| r.und_l)),
        und_s: mean_defined(per.values().map(|r| r.und_s)),
    };
    CorpusReport {
        count: per.len(),
        means,
        layouts: per,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Element, ElementType};

    fn layout(items: &[(ElementType, [f64; 4])]) -> Layout {
        let mut l = Layout::new(100, 100);
        for (i, (k, b)) in items.iter().enumerate() {
            l.elements.push(Element::new(format!("e{i}"), *k, BBox::from(*b)));
        }
        l
    }

    use ElementType::{Logo, Text, Underlay};

    #[test]
    fn overlay_examples() {
        assert_eq!(
            overlay(&layout(&[(Text, [0.0, 0.0, 0.2, 0.2]), (Text, [0.5, 0.5, 0.2, 0.2])])),
            0.0
        );
        let same = layout(&[(Text, [0.1, 0.1, 0.2, 0.2]), (Text, [0.1, 0.1, 0.2, 0.2])]);
        assert!((overlay(&same) - 0.5).abs() < 1e-12);
        let mixed = layout(&[
            (Underlay, [0.0, 0.0, 1.0, 1.0]),
            (Text, [0.0, 0.0, 0.6, 0.6]),
            (Text, [0.3, 0.3, 0.6, 0.6]),
        ]);
        assert!((overlay(&mixed) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(alignment(&layout(&[(Text, [0.1, 0.1, 0.2, 0.1])])), 0.0);
        let left = layout(&[(Text, [0.1, 0.1, 0.2, 0.1]), (Logo, [0.1, 0.6, 0.4, 0.2])]);
        assert_eq!(alignment(&left), 0.0);
        let l = layout(&[(Text, [0.10, 0.1, 0.2, 0.1]), (Text, [0.13, 0.5, 0.3, 0.1])]);
        assert!((alignment(&l) - 0.03).abs() < 1e-12);
    }

    #[test]
    fn underlay_examples() {
        let covered = layout(&[(Underlay, [0.0, 0.0, 1.0, 1.0]), (Text, [0.1, 0.1, 0.2, 0.2])]);
        assert_eq!(underlay_loose(&covered), Some(1.0));
        assert_eq!(underlay_strict(&covered), Some(1.0));

        let none = layout(&[(Text, [0.1, 0.1, 0.2, 0.2])]);
        assert_eq!(underlay_loose(&none), None);
        assert_eq!(underlay_strict(&none), None);

        let half = layout(&[(Underlay, [0.0, 0.0, 0.5, 1.0]), (Text, [0.25, 0.0, 0.5, 0.5])]);
        assert!((underlay_loose(&half).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(underlay_strict(&half), Some(0.0));

        let two = layout(&[
            (Underlay, [0.0, 0.0, 0.4, 0.4]),
            (Underlay, [0.6, 0.6, 0.3, 0.3]),
            (Logo, [0.1, 0.1, 0.1, 0.1]),
        ]);
        assert_eq!(underlay_strict(&two), Some(0.5));

        let lonely = layout(&[(Underlay, [0.0, 0.0, 0.4, 0.4])]);
        assert_eq!(underlay_loose(&lonely), Some(0.0));
    }

    #[test]
    fn corpus_aggregation() {
        assert_eq!(evaluate_corpus(&[]), Err(MetricsError::EmptyCorpus));
        let a = layout(&[(Underlay, [0.0, 0.0, 1.0, 1.0]), (Text, [0.1, 0.1, 0.2, 0.2])]);
        let b = layout(&[(Text, [0.1, 0.1, 0.2, 0.2]), (Text, [0.1, 0.1, 0.2, 0.2])]);
        let one = evaluate_corpus(&[("a".into(), a.clone())]).unwrap();
        assert_eq!(one.count, 1);
        assert_eq!(one.means.ove, one.layouts["a"].ove);
        assert_eq!(one.means.und_s, Some(1.0));

        let both = evaluate_corpus(&[("b".into(), b), ("a".into(), a.clone())]).unwrap();
        assert!((both.means.ove - 0.25).abs() < 1e-12);
        // underlay means skip the underlay-free layout
        assert_eq!(both.means.und_l, Some(1.0));
        assert_eq!(
            evaluate_corpus(&[("a".into(), a.clone()), ("a".into(), a)]),
            Err(MetricsError::DuplicateLayoutId("a".into()))
        );
    }
}
