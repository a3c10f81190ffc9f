use crate::error::{Error, Result};

/// Single-channel row-major image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl EdgeMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        EdgeMap {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Values are clamped into `[0, 1]`; non-finite values are rejected.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite pixel value".into()));
        }
        let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(EdgeMap {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Stores `max(current, value)`, clamped to `[0, 1]`.
    pub fn splat_max(&mut self, x: usize, y: usize, value: f64) {
        let p = &mut self.pixels[y * self.width + x];
        *p = p.max(value.clamp(0.0, 1.0));
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.pixels.iter().filter(|&&v| v > threshold).count()
    }

    pub fn same_shape(&self, other: &EdgeMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}
