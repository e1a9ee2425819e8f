//! Seeded synthetic poster suite: exemplar corpus plus unlabeled test
//! canvases, all drawn from one template family.
//!
//! Each exemplar has a wide underlay band in the lower half with a title
//! inside it, a subtitle just above the band, and a logo in a top corner.
//! Exemplars are clean; overlap enters through [`SeededProposer`], which
//! answers proposal requests with jittered copies. Backgrounds are vertical
//! gradients with a bright disk standing in for the subject.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::ManifestEntry;
use crate::experiment::TestCanvas;
use crate::geometry::BBox;
use crate::layout::{Element, ElementType, Layout};
use crate::raster::{RasterError, RasterImage};
use crate::recommender::{copy_exemplar, ProposalRequest, Transport, TransportError};
use crate::retrieval::{build_index, CorpusEntry, EmbeddingProvider, Index, RetrievalError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSpec {
    pub seed: u64,
    pub corpus_size: usize,
    pub test_size: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            seed: 7,
            corpus_size: 30,
            test_size: 20,
            width: 240,
            height: 320,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exemplar {
    pub id: String,
    pub image: RasterImage,
    pub layout: Layout,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub exemplars: Vec<Exemplar>,
    pub tests: Vec<TestCanvas>,
}

const PALETTE: [&str; 6] = ["#1d3557", "#e63946", "#2a9d8f", "#f4a261", "#6d597a", "#264653"];

fn round_to(v: f64, q: f64) -> f64 {
    (v / q).round() * q
}

fn background(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RasterImage {
    let top: [f64; 3] = [rng.gen_range(20.0..200.0), rng.gen_range(20.0..200.0), rng.gen_range(20.0..200.0)];
    let bottom: [f64; 3] = [rng.gen_range(20.0..200.0), rng.gen_range(20.0..200.0), rng.gen_range(20.0..200.0)];
    let (cx, cy) = (rng.gen_range(0.3..0.7) * w as f64, rng.gen_range(0.2..0.4) * h as f64);
    let r = rng.gen_range(0.12..0.22) * w as f64;
    RasterImage::from_fn(w, h, |x, y| {
        let t = y as f64 / (h.max(2) - 1) as f64;
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        if dx * dx + dy * dy <= r * r {
            return [245, 240, 225, 255];
        }
        let c = |i: usize| (top[i] * (1.0 - t) + bottom[i] * t).round() as u8;
        [c(0), c(1), c(2), 255]
    })
}

fn exemplar_layout(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Layout {
    let q = 1.0 / 64.0;
    let uw = round_to(rng.gen_range(0.70..0.86), q);
    let uh = round_to(rng.gen_range(0.30..0.38), q);
    let ux = round_to(rng.gen_range(0.04..(0.96 - uw).max(0.05)), q);
    let uy = round_to(rng.gen_range(0.52..(0.96 - uh)), q);
    let under = BBox::new(ux, uy, uw, uh);

    let tw = round_to(rng.gen_range(0.30..0.40), q);
    let th = round_to(rng.gen_range(0.05..0.065), q);
    let title = BBox::new(ux + 0.05, uy + 0.06, tw, th);

    let sw = round_to(rng.gen_range(0.22..0.36), q);
    let sh = 0.04;
    let sub = BBox::new(ux + rng.gen_range(0.0..0.08), uy - sh - 0.03, sw, sh);

    let lw = 0.12;
    let lh = 0.08;
    let lx = if rng.gen_bool(0.5) { 0.05 } else { 0.95 - lw };
    let logo = BBox::new(lx, 0.05, lw, lh);

    let colors: Vec<&str> = (0..4).map(|_| PALETTE[rng.gen_range(0..PALETTE.len())]).collect();
    Layout::new(w, h)
        .with_element(Element::new("underlay", ElementType::Underlay, under).with_asset(colors[0]))
        .with_element(Element::new("title", ElementType::Text, title).with_asset(colors[1]))
        .with_element(Element::new("subtitle", ElementType::Text, sub).with_asset(colors[2]))
        .with_element(Element::new("logo", ElementType::Logo, logo).with_asset(colors[3]))
}

pub fn generate_suite(spec: &SuiteSpec) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let exemplars = (0..spec.corpus_size)
        .map(|i| {
            let image = background(&mut rng, spec.width, spec.height);
            let layout = exemplar_layout(&mut rng, spec.width, spec.height);
            Exemplar {
                id: format!("ex{i:03}"),
                image,
                layout,
            }
        })
        .collect();
    let tests = (0..spec.test_size)
        .map(|i| TestCanvas {
            id: format!("canvas{i:03}"),
            image: background(&mut rng, spec.width, spec.height),
        })
        .collect();
    Suite { exemplars, tests }
}

impl Suite {
    /// Builds an in-memory index; image paths are nominal.
    pub fn index(&self, embedder: &dyn EmbeddingProvider) -> Result<Index, RetrievalError> {
        let entries = self
            .exemplars
            .iter()
            .map(|e| {
                Ok(CorpusEntry {
                    id: e.id.clone(),
                    image: PathBuf::from(format!("{}.png", e.id)),
                    layout: e.layout.clone(),
                    embedding: embedder.embed(&e.id, &e.image)?,
                })
            })
            .collect::<Result<Vec<_>, RetrievalError>>()?;
        build_index(entries)
    }

    /// Writes images, layouts and two manifests (`corpus.json`,
    /// `test.json`) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), RasterError> {
        let io = |e: std::io::Error| RasterError::Encode {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        for sub in ["corpus", "test"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(io)?;
        }
        let mut corpus = Vec::new();
        for e in &self.exemplars {
            let image = format!("corpus/{}.png", e.id);
            let layout = format!("corpus/{}.json", e.id);
            e.image.save_png(&dir.join(&image))?;
            std::fs::write(dir.join(&layout), e.layout.to_json()).map_err(io)?;
            corpus.push(ManifestEntry {
                id: e.id.clone(),
                image: Some(image),
                layout: Some(layout),
            });
        }
        let mut tests = Vec::new();
        for t in &self.tests {
            let image = format!("test/{}.png", t.id);
            t.image.save_png(&dir.join(&image))?;
            tests.push(ManifestEntry {
                id: t.id.clone(),
                image: Some(image),
                layout: None,
            });
        }
        let cm = dir.join("corpus.json");
        let tm = dir.join("test.json");
        std::fs::write(&cm, serde_json::to_string_pretty(&corpus).expect("manifest")).map_err(io)?;
        std::fs::write(&tm, serde_json::to_string_pretty(&tests).expect("manifest")).map_err(io)?;
        Ok((cm, tm))
    }
}

/// Stand-in for an external proposer: answers each request with a copy of
/// the top example whose boxes are displaced by seeded noise, and with one
/// content box dropped partly onto another content box. The
/// noise seed mixes `seed` with a hash of the request, so equal requests
/// get equal answers regardless of call order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeededProposer {
    pub seed: u64,
    /// Largest displacement per axis, in canvas fractions.
    pub jitter: f64,
}

impl SeededProposer {
    pub fn new(seed: u64) -> Self {
        SeededProposer { seed, jitter: 0.03 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

impl Transport for SeededProposer {
    fn post_json(&self, body: &str) -> Result<String, TransportError> {
        let req: ProposalRequest =
            serde_json::from_str(body).map_err(|e| TransportError::Io(e.to_string()))?;
        let example = req
            .examples
            .first()
            .ok_or_else(|| TransportError::Status(422))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(body.as_bytes()));
        let mut layout = copy_exemplar(req.canvas.width, req.canvas.height, example);
        for e in &mut layout.elements {
            let b = e.bbox;
            let dx = rng.gen_range(-self.jitter..=self.jitter);
            let dy = rng.gen_range(-self.jitter..=self.jitter);
            e.bbox = BBox::new(
                (b.x + dx).clamp(0.0, 1.0 - b.w),
                (b.y + dy).clamp(0.0, 1.0 - b.h),
                b.w,
                b.h,
            );
        }
        let content: Vec<usize> = (0..layout.len())
            .filter(|&i| !layout.elements[i].kind.is_underlay())
            .collect();
        if content.len() >= 2 {
            let a = content[rng.gen_range(0..content.len())];
            let others: Vec<usize> = content.iter().copied().filter(|&i| i != a).collect();
            let t = layout.elements[others[rng.gen_range(0..others.len())]].bbox;
            let b = layout.elements[a].bbox;
            let x = t.x + rng.gen_range(-0.5..0.5) * b.w;
            let y = t.y + rng.gen_range(-0.5..0.5) * b.h;
            layout.elements[a].bbox =
                BBox::new(x.clamp(0.0, 1.0 - b.w), y.clamp(0.0, 1.0 - b.h), b.w, b.h);
        }
        Ok(layout.to_json())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contains, intersection_area};

    #[test]
    fn deterministic_and_valid() {
        let spec = SuiteSpec::default();
        let a = generate_suite(&spec);
        let b = generate_suite(&spec);
        assert_eq!(a.exemplars.len(), 30);
        assert_eq!(a.tests.len(), 20);
        for (x, y) in a.exemplars.iter().zip(&b.exemplars) {
            assert_eq!(x.layout, y.layout);
            assert_eq!(x.image, y.image);
            assert!(x.layout.validate().is_empty(), "{:?}", x.layout.validate());
        }
    }

    #[test]
    fn clean_exemplars_pass_the_grader() {
        use crate::compositor::{composite, FsAssetResolver};
        use crate::grader::{grade, Decision, Thresholds};
        let assets = FsAssetResolver { base_dir: ".".into() };
        for e in generate_suite(&SuiteSpec::default()).exemplars {
            let b: Vec<_> = e.layout.boxes().copied().collect();
            assert!(contains(&b[0], &b[1]));
            assert_eq!(intersection_area(&b[1], &b[2]), 0.0);
            let img = composite(&e.image, &e.layout, &assets).unwrap();
            let r = grade(&e.layout, &img, &Thresholds::default());
            assert_eq!(r.decision, Decision::Accept, "{} {:?}", e.id, r.gammas());
        }
    }

    #[test]
    fn proposer_is_deterministic_and_jitters() {
        let suite = generate_suite(&SuiteSpec::default());
        let req = ProposalRequest {
            canvas: suite.exemplars[0].layout.canvas,
            examples: vec![suite.exemplars[0].layout.clone()],
            instructions: "place".into(),
        };
        let body = serde_json::to_string(&req).unwrap();
        let p = SeededProposer::new(3);
        let a = Layout::from_json(&p.post_json(&body).unwrap()).unwrap();
        assert_eq!(a, Layout::from_json(&p.post_json(&body).unwrap()).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a.is_valid());
        assert_ne!(a.elements[1].bbox, suite.exemplars[0].layout.elements[1].bbox);
        let b: Vec<_> = a.boxes().copied().collect();
        let overlapping = (1..4).any(|i| (i + 1..4).any(|j| intersection_area(&b[i], &b[j]) > 0.0));
        assert!(overlapping);
        let other = SeededProposer::new(4).post_json(&body).unwrap();
        assert_ne!(a, Layout::from_json(&other).unwrap());
    }
}
