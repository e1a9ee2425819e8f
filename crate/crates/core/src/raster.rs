use std::path::Path;

use thiserror::Error;

/// Straight-alpha RGBA8 image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BadBufferLength { expected: usize, got: usize },
    #[error("image has zero width or height")]
    Empty,
    #[error("decoding {path}: {message}")]
    Decode { path: String, message: String },
    #[error("encoding {path}: {message}")]
    Encode { path: String, message: String },
}

impl RasterImage {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize * 4;
        if data.len() != expected {
            return Err(RasterError::BadBufferLength {
                expected,
                got: data.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let data = rgba
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 4)
            .collect();
        RasterImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 4]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 4);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2], self.data[o + 3]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 4]) {
        let o = self.offset(x, y);
        self.data[o..o + 4].copy_from_slice(&px);
    }

    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let img = image::open(path).map_err(|e| RasterError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rgba = img.to_rgba8();
        let (w, h) = rgba.dimensions();
        if w == 0 || h == 0 {
            return Err(RasterError::Empty);
        }
        RasterImage::from_raw(w, h, rgba.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgba8,
            image::ImageFormat::Png,
        )
        .map_err(|e| RasterError::Encode {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_length_checked() {
        assert!(RasterImage::from_raw(2, 2, vec![0; 15]).is_err());
        assert!(RasterImage::from_raw(2, 2, vec![0; 16]).is_ok());
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = RasterImage::from_fn(5, 3, |x, y| [x as u8 * 40, y as u8 * 70, 9, 200]);
        img.save_png(&path).unwrap();
        assert_eq!(RasterImage::load_png(&path).unwrap(), img);
    }
}
