#![allow(dead_code)]

use std::path::PathBuf;

use layoutloop_core::raster::RasterImage;
use layoutloop_core::recommender::{Transport, TransportError};
use layoutloop_core::retrieval::{build_index, BaselineEmbedder, CorpusEntry, EmbeddingProvider, Index};
use layoutloop_core::{BBox, Element, ElementType, Layout};

pub fn el(id: &str, kind: ElementType, b: [f64; 4], color: &str) -> Element {
    Element::new(id, kind, BBox::from(b)).with_asset(color)
}

pub fn gray_canvas(w: u32, h: u32) -> RasterImage {
    RasterImage::from_fn(w, h, |x, y| {
        let v = (40 + (x * 3 + y * 5) % 60) as u8;
        [v, v, v, 255]
    })
}

pub fn index_of(layouts: &[(&str, RasterImage, Layout)]) -> Index {
    let entries = layouts
        .iter()
        .map(|(id, img, l)| CorpusEntry {
            id: id.to_string(),
            image: PathBuf::from(format!("{id}.png")),
            layout: l.clone(),
            embedding: BaselineEmbedder.embed(id, img).unwrap(),
        })
        .collect();
    build_index(entries).unwrap()
}

/// Answers every request with the same reply.
pub struct Canned(pub Result<String, TransportError>);

impl Transport for Canned {
    fn post_json(&self, _body: &str) -> Result<String, TransportError> {
        self.0.clone()
    }
}
