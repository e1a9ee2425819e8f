//! Accept/reject grading of a rendered layout on color cohesion (γ1),
//! spacing (γ2) and visibility (γ3).

use serde::{Deserialize, Serialize};

use crate::compositor::dominant_color;
use crate::geometry::{area, BBox};
use crate::layout::Layout;
use crate::metrics::pairwise_overlap_ratio;
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            t1: 0.5,
            t2: 0.9,
            t3: 0.8,
        }
    }
}

impl Thresholds {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Self {
        Thresholds { t1, t2, t3 }
    }

    pub fn is_valid(&self) -> bool {
        [self.t1, self.t2, self.t3]
            .iter()
            .all(|t| (0.0..=1.0).contains(t))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t1, self.t2, self.t3]
    }
}

/// Occlusion test parameters: raster resolution for the occluder union and
/// the covered fraction above which a box counts as occluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub grid: usize,
    pub threshold: f64,
}

impl Default for Occlusion {
    fn default() -> Self {
        Occlusion {
            grid: 256,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraderReport {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub thresholds: Thresholds,
    pub passes: [bool; 3],
    pub decision: Decision,
}

impl GraderReport {
    pub fn gammas(&self) -> [f64; 3] {
        [self.gamma1, self.gamma2, self.gamma3]
    }

    /// Smallest `γ_k - t_k`; non-negative exactly when accepted.
    pub fn min_margin(&self) -> f64 {
        self.gammas()
            .iter()
            .zip(self.thresholds.as_array())
            .map(|(g, t)| g - t)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `exp(-σ)` where σ is the per-channel population standard deviation of
/// the elements' mean colors, averaged over R, G and B.
pub fn gamma1(l: &Layout, composite: &RasterImage) -> f64 {
    let n = l.len();
    if n <= 1 {
        return 1.0;
    }
    let colors: Vec<[f64; 3]> = l
        .elements
        .iter()
        .map(|e| dominant_color(composite, &e.bbox))
        .collect();
    let mut sigma = 0.0;
    for c in 0..3 {
        let mean = colors.iter().map(|k| k[c]).sum::<f64>() / n as f64;
        let var = colors.iter().map(|k| (k[c] - mean).powi(2)).sum::<f64>() / n as f64;
        sigma += var.sqrt();
    }
    (-(sigma / 3.0)).exp()
}

/// One minus the summed pairwise overlap over the summed areas, all element
/// types included.
pub fn gamma2(l: &Layout) -> f64 {
    if l.is_empty() {
        return 1.0;
    }
    let boxes: Vec<BBox> = l.boxes().copied().collect();
    (1.0 - pairwise_overlap_ratio(&boxes)).clamp(0.0, 1.0)
}

/// Fraction of each box covered by the union of non-underlay elements
/// rendered after it, with the union rasterized on a `grid`x`grid` mask.
pub fn occluded_fractions(l: &Layout, grid: usize) -> Vec<f64> {
    let g = grid as f64;
    let cell_range = |lo: f64, hi: f64| {
        let a = ((lo * g).floor().max(0.0) as usize).min(grid);
        let b = ((hi * g).ceil().max(0.0) as usize).min(grid);
        a..b
    };
    l.elements
        .iter()
        .enumerate()
        .map(|(j, target)| {
            let b = &target.bbox;
            let occluders: Vec<&BBox> = l.elements[j + 1..]
                .iter()
                .filter(|e| !e.kind.is_underlay())
                .map(|e| &e.bbox)
                .collect();
            if occluders.is_empty() {
                return 0.0;
            }
            let mut covered = 0.0;
            for cy in cell_range(b.y, b.bottom()) {
                let py = (cy as f64 + 0.5) / g;
                let oy = (b.bottom().min((cy + 1) as f64 / g) - b.y.max(cy as f64 / g)).max(0.0);
                for cx in cell_range(b.x, b.right()) {
                    let px = (cx as f64 + 0.5) / g;
                    let hit = occluders
                        .iter()
                        .any(|o| px >= o.x && px < o.right() && py >= o.y && py < o.bottom());
                    if hit {
                        let ox = (b.right().min((cx + 1) as f64 / g) - b.x.max(cx as f64 / g)).max(0.0);
                        covered += ox * oy;
                    }
                }
            }
            covered / area(b)
        })
        .collect()
}

pub fn gamma3_with(l: &Layout, occlusion: &Occlusion) -> f64 {
    if l.is_empty() {
        return 1.0;
    }
    let occluded = occluded_fractions(l, occlusion.grid)
        .into_iter()
        .filter(|&f| f > occlusion.threshold)
        .count();
    1.0 - occluded as f64 / l.len() as f64
}

pub fn gamma3(l: &Layout) -> f64 {
    gamma3_with(l, &Occlusion::default())
}

/// Builds the report from precomputed γ values.
pub fn decide(gammas: [f64; 3], t: &Thresholds) -> GraderReport {
    let passes = [gammas[0] >= t.t1, gammas[1] >= t.t2, gammas[2] >= t.t3];
    GraderReport {
        gamma1: gammas[0],
        gamma2: gammas[1],
        gamma3: gammas[2],
        thresholds: *t,
        passes,
        decision: if passes.iter().all(|&p| p) {
            Decision::Accept
        } else {
            Decision::Reject
        },
    }
}

pub fn grade_with(
    l: &Layout,
    composite: &RasterImage,
    t: &Thresholds,
    occlusion: &Occlusion,
) -> GraderReport {
    decide(
        [gamma1(l, composite), gamma2(l), gamma3_with(l, occlusion)],
        t,
    )
}

pub fn grade(l: &Layout, composite: &RasterImage, t: &Thresholds) -> GraderReport {
    grade_with(l, composite, t, &Occlusion::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::{composite, FsAssetResolver};
    use crate::geometry::intersection_area;
    use crate::layout::{Element, ElementType};

    fn el(id: &str, kind: ElementType, b: [f64; 4], color: &str) -> Element {
        Element::new(id, kind, BBox::from(b)).with_asset(color)
    }

    fn render(l: &Layout) -> RasterImage {
        let bg = RasterImage::filled(l.canvas.width, l.canvas.height, [128, 128, 128, 255]);
        composite(&bg, l, &FsAssetResolver::default()).unwrap()
    }

    #[test]
    fn gamma1_examples() {
        let same = Layout::new(50, 50)
            .with_element(el("a", ElementType::Text, [0.0, 0.0, 0.2, 0.2], "#123456"))
            .with_element(el("b", ElementType::Logo, [0.5, 0.5, 0.2, 0.2], "#123456"));
        assert_eq!(gamma1(&same, &render(&same)), 1.0);

        let single = Layout::new(50, 50).with_element(el("a", ElementType::Text, [0.0, 0.0, 0.2, 0.2], "#ff0000"));
        assert_eq!(gamma1(&single, &render(&single)), 1.0);

        let bw = Layout::new(50, 50)
            .with_element(el("a", ElementType::Text, [0.0, 0.0, 0.2, 0.2], "#000000"))
            .with_element(el("b", ElementType::Logo, [0.5, 0.5, 0.2, 0.2], "#ffffff"));
        // population std of {0, 1} is 0.5 on every channel
        assert!((gamma1(&bw, &render(&bw)) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((gamma1(&bw, &render(&bw)) - 0.6065306597).abs() < 1e-9);
    }

    fn raster_intersection(a: &BBox, b: &BBox, n: usize) -> f64 {
        let mut count = 0;
        for iy in 0..n {
            for ix in 0..n {
                let (cx, cy) = ((ix as f64 + 0.5) / n as f64, (iy as f64 + 0.5) / n as f64);
                let inside = |r: &BBox| cx > r.x && cx < r.right() && cy > r.y && cy < r.bottom();
                if inside(a) && inside(b) {
                    count += 1;
                }
            }
        }
        count as f64 / (n * n) as f64
    }

    #[test]
    fn gamma2_examples() {
        let disjoint = Layout::new(10, 10)
            .with_element(el("a", ElementType::Underlay, [0.0, 0.0, 0.3, 0.3], "#000000"))
            .with_element(el("b", ElementType::Text, [0.5, 0.5, 0.3, 0.3], "#000000"));
        assert_eq!(gamma2(&disjoint), 1.0);
        let same = Layout::new(10, 10)
            .with_element(el("a", ElementType::Text, [0.1, 0.1, 0.3, 0.3], "#000000"))
            .with_element(el("b", ElementType::Text, [0.1, 0.1, 0.3, 0.3], "#000000"));
        assert!((gamma2(&same) - 0.5).abs() < 1e-12);
        assert_eq!(gamma2(&Layout::new(10, 10)), 1.0);

        // grid-aligned (1/8) so the 512 raster is exact
        let boxes = [
            BBox::new(0.125, 0.125, 0.5, 0.375),
            BBox::new(0.25, 0.25, 0.5, 0.5),
            BBox::new(0.375, 0.0, 0.25, 0.625),
        ];
        let mut l = Layout::new(10, 10);
        for (i, b) in boxes.iter().enumerate() {
            l.elements.push(Element::new(format!("e{i}"), ElementType::Text, *b));
        }
        let mut overlap = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                let r = raster_intersection(&boxes[i], &boxes[j], 512);
                assert!((r - intersection_area(&boxes[i], &boxes[j])).abs() < 1e-12);
                overlap += r;
            }
        }
        let total: f64 = boxes.iter().map(area).sum();
        assert!((gamma2(&l) - (1.0 - overlap / total)).abs() < 1e-12);
    }

    #[test]
    fn gamma3_examples() {
        let clean = Layout::new(10, 10)
            .with_element(el("a", ElementType::Text, [0.0, 0.0, 0.3, 0.3], "#000000"))
            .with_element(el("b", ElementType::Text, [0.5, 0.5, 0.3, 0.3], "#000000"));
        assert_eq!(gamma3(&clean), 1.0);

        let covered = Layout::new(10, 10)
            .with_element(el("a", ElementType::Text, [0.2, 0.2, 0.1, 0.1], "#000000"))
            .with_element(el("b", ElementType::Logo, [0.1, 0.1, 0.4, 0.4], "#000000"))
            .with_element(el("c", ElementType::Text, [0.7, 0.7, 0.1, 0.1], "#000000"));
        assert!((gamma3(&covered) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);

        // 40% of the first box lies under the second
        let partial = Layout::new(10, 10)
            .with_element(el("a", ElementType::Text, [0.1, 0.1, 0.5, 0.2], "#000000"))
            .with_element(el("b", ElementType::Logo, [0.4, 0.1, 0.3, 0.2], "#000000"));
        let frac = occluded_fractions(&partial, 256)[0];
        assert!(frac < 0.5 && (frac - 0.4).abs() < 0.01, "{frac}");
        assert_eq!(gamma3(&partial), 1.0);

        // underlays never occlude
        let under = Layout::new(10, 10)
            .with_element(el("a", ElementType::Text, [0.2, 0.2, 0.1, 0.1], "#000000"))
            .with_element(el("u", ElementType::Underlay, [0.0, 0.0, 1.0, 1.0], "#000000"));
        assert_eq!(gamma3(&under), 1.0);
    }

    #[test]
    fn decisions() {
        let t = Thresholds::default();
        assert_eq!(decide([1.0, 1.0, 1.0], &t).decision, Decision::Accept);
        let edge = decide([0.9, t.t2, 1.0], &t);
        assert_eq!(edge.passes, [true, true, true]);
        assert_eq!(edge.decision, Decision::Accept);
        let r = decide([0.9, 0.4, 1.0], &Thresholds::new(0.5, 0.9, 0.8));
        assert_eq!(r.passes, [true, false, true]);
        assert_eq!(r.decision, Decision::Reject);
        assert!((r.min_margin() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn regrading_is_stable() {
        let l = Layout::new(40, 40)
            .with_element(el("a", ElementType::Text, [0.1, 0.1, 0.5, 0.2], "#ff0000"))
            .with_element(el("b", ElementType::Logo, [0.4, 0.1, 0.3, 0.2], "#00ff00"));
        let img = render(&l);
        let t = Thresholds::default();
        assert_eq!(grade(&l, &img, &t), grade(&l, &img, &t));
    }
}
