//! Renders a layout onto its background: each element's asset is scaled
//! into its box (nearest neighbor) and alpha-blended with the "over"
//! operator, back to front in list order.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::BBox;
use crate::layout::{Element, ElementType, Layout};
use crate::raster::RasterImage;

/// Destination rectangle in pixels plus the asset-to-box scale factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub sx: f64,
    pub sy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Asset {
    SolidFill([u8; 4]),
    Image(RasterImage),
}

impl Asset {
    /// Native size; solid fills take whatever size they are placed at.
    pub fn native_size(&self, dest: (u32, u32)) -> (u32, u32) {
        match self {
            Asset::SolidFill(_) => dest,
            Asset::Image(img) => (img.width(), img.height()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CompositeError {
    #[error("element {0:?}: asset not found")]
    MissingAsset(String),
    #[error("element {id:?}: {message}")]
    DecodeError { id: String, message: String },
    #[error("layout is invalid")]
    InvalidLayout,
}

/// Parses `#rrggbb` or `#rrggbbaa`.
pub fn parse_hex_color(s: &str) -> Option<[u8; 4]> {
    let hex = s.strip_prefix('#')?;
    if !(hex.len() == 6 || hex.len() == 8) || !hex.is_ascii() {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    let alpha = if hex.len() == 8 { byte(6)? } else { 255 };
    Some([byte(0)?, byte(2)?, byte(4)?, alpha])
}

/// Fill used when an element carries no asset.
pub fn placeholder_fill(kind: ElementType) -> [u8; 4] {
    match kind {
        ElementType::Text => [40, 40, 48, 255],
        ElementType::Logo => [200, 60, 50, 255],
        ElementType::Underlay => [245, 245, 240, 255],
    }
}

pub trait AssetResolver: Sync {
    fn resolve(&self, element: &Element) -> Result<Asset, CompositeError>;
}

/// Resolves hex colors directly and image paths relative to `base_dir`.
#[derive(Debug, Clone, Default)]
pub struct FsAssetResolver {
    pub base_dir: PathBuf,
}

impl FsAssetResolver {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        FsAssetResolver {
            base_dir: base_dir.into(),
        }
    }
}

impl AssetResolver for FsAssetResolver {
    fn resolve(&self, element: &Element) -> Result<Asset, CompositeError> {
        let Some(asset) = element.asset.as_deref() else {
            return Ok(Asset::SolidFill(placeholder_fill(element.kind)));
        };
        if asset.starts_with('#') {
            return parse_hex_color(asset)
                .map(Asset::SolidFill)
                .ok_or_else(|| CompositeError::DecodeError {
                    id: element.id.clone(),
                    message: format!("bad color {asset:?}"),
                });
        }
        let path = self.base_dir.join(Path::new(asset));
        if !path.exists() {
            return Err(CompositeError::MissingAsset(element.id.clone()));
        }
        RasterImage::load_png(&path)
            .map(Asset::Image)
            .map_err(|e| CompositeError::DecodeError {
                id: element.id.clone(),
                message: e.to_string(),
            })
    }
}

fn dest_span(origin: f64, extent: f64, size: u32) -> (u32, u32) {
    let start = ((origin * size as f64).round().max(0.0) as u32).min(size - 1);
    let len = ((extent * size as f64).round() as u32).max(1);
    (start, len.min(size - start))
}

/// Maps a normalized box onto a `canvas`-sized pixel grid.
pub fn place(asset_size: (u32, u32), bbox: &BBox, canvas: (u32, u32)) -> Placement {
    let (x, w) = dest_span(bbox.x, bbox.w, canvas.0);
    let (y, h) = dest_span(bbox.y, bbox.h, canvas.1);
    Placement {
        x,
        y,
        w,
        h,
        sx: w as f64 / asset_size.0 as f64,
        sy: h as f64 / asset_size.1 as f64,
    }
}

fn blend_channel(dst: u8, src: u8, alpha: f64) -> u8 {
    ((1.0 - alpha) * dst as f64 + alpha * src as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

fn blend_pixel(dst: [u8; 4], src: [u8; 4]) -> [u8; 4] {
    let a = src[3] as f64 / 255.0;
    [
        blend_channel(dst[0], src[0], a),
        blend_channel(dst[1], src[1], a),
        blend_channel(dst[2], src[2], a),
        dst[3].max(src[3]),
    ]
}

fn blend_with(dst: &mut RasterImage, p: &Placement, mut sample: impl FnMut(u32, u32) -> [u8; 4]) {
    let x_end = (p.x + p.w).min(dst.width());
    let y_end = (p.y + p.h).min(dst.height());
    for y in p.y..y_end {
        for x in p.x..x_end {
            let src = sample(x - p.x, y - p.y);
            let out = blend_pixel(dst.pixel(x, y), src);
            dst.set_pixel(x, y, out);
        }
    }
}

fn nearest(dest: u32, scale: f64, native: u32) -> u32 {
    (((dest as f64 + 0.5) / scale) as u32).min(native - 1)
}

fn blend_image_into(dst: &mut RasterImage, src: &RasterImage, p: &Placement) {
    blend_with(dst, p, |u, v| {
        src.pixel(nearest(u, p.sx, src.width()), nearest(v, p.sy, src.height()))
    });
}

/// Blends `src`, scaled into `placement`, over `dst`.
pub fn blend_over(dst: &RasterImage, src: &RasterImage, placement: &Placement) -> RasterImage {
    let mut out = dst.clone();
    blend_image_into(&mut out, src, placement);
    out
}

/// Sequentially blends every element over `canvas_image`, first to last.
pub fn composite(
    canvas_image: &RasterImage,
    l: &Layout,
    assets: &dyn AssetResolver,
) -> Result<RasterImage, CompositeError> {
    if !l.is_valid() {
        return Err(CompositeError::InvalidLayout);
    }
    let canvas = (canvas_image.width(), canvas_image.height());
    let mut out = canvas_image.clone();
    for e in &l.elements {
        match assets.resolve(e)? {
            Asset::SolidFill(color) => {
                let p = place((1, 1), &e.bbox, canvas);
                blend_with(&mut out, &p, |_, _| color);
            }
            Asset::Image(img) => {
                let p = place((img.width(), img.height()), &e.bbox, canvas);
                blend_image_into(&mut out, &img, &p);
            }
        }
    }
    Ok(out)
}

/// Mean RGB over the box's pixel region, each channel in [0, 1].
pub fn dominant_color(img: &RasterImage, bbox: &BBox) -> [f64; 3] {
    let p = place((1, 1), bbox, (img.width(), img.height()));
    let mut sum = [0u64; 3];
    for y in p.y..p.y + p.h {
        for x in p.x..p.x + p.w {
            let px = img.pixel(x, y);
            for c in 0..3 {
                sum[c] += px[c] as u64;
            }
        }
    }
    let n = (p.w as u64 * p.h as u64) as f64 * 255.0;
    sum.map(|s| s as f64 / n)
}
