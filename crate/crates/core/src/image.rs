//! Real-valued images and bilinear sampling.
//!
//! Samples are stored row-major with interleaved channels. Integer pixel
//! coordinates address sample centers; continuous coordinates are
//! zero-based, so `(0, 0)` is the center of the top-left pixel.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample at index {i}")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image from a per-pixel function `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image::new(width, height, 1, data)
    }

    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Samples of channel `c` in row-major order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Halves both dimensions with a 2x2 box filter.
    pub fn downsample2(&self) -> Result<Image> {
        if self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(Error::IndivisibleDims {
                width: self.width,
                height: self.height,
                exponent: 1,
            });
        }
        let (w, h, c) = (self.width / 2, self.height / 2, self.channels);
        let mut data = Vec::with_capacity(w * h * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let s = self.get(2 * x, 2 * y, ch)
                        + self.get(2 * x + 1, 2 * y, ch)
                        + self.get(2 * x, 2 * y + 1, ch)
                        + self.get(2 * x + 1, 2 * y + 1, ch);
                    data.push(0.25 * s);
                }
            }
        }
        Image::new(w, h, c, data)
    }
}

/// Exact at both ends and for `a == b`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        b
    } else {
        a + (b - a) * t
    }
}

/// Bilinear interpolation cell for a continuous coordinate.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Cell {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    fx: f64,
    fy: f64,
}

impl Cell {
    /// `None` unless `0 <= x <= w-1` and `0 <= y <= h-1`.
    #[inline]
    pub(crate) fn locate(x: f64, y: f64, width: usize, height: usize) -> Option<Cell> {
        let (wm, hm) = ((width - 1) as f64, (height - 1) as f64);
        if !(x >= 0.0 && x <= wm && y >= 0.0 && y <= hm) {
            return None;
        }
        let (mut x0, mut y0) = (x.floor() as usize, y.floor() as usize);
        // The right/bottom edge belongs to the last full cell.
        if x0 + 1 >= width && width > 1 {
            x0 = width - 2;
        }
        if y0 + 1 >= height && height > 1 {
            y0 = height - 2;
        }
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Some(Cell {
            x0,
            y0,
            x1,
            y1,
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        })
    }

    #[inline]
    fn corners(&self, img: &Image, c: usize) -> (f64, f64, f64, f64) {
        (
            img.get(self.x0, self.y0, c),
            img.get(self.x1, self.y0, c),
            img.get(self.x0, self.y1, c),
            img.get(self.x1, self.y1, c),
        )
    }

    #[inline]
    pub(crate) fn value(&self, img: &Image, c: usize) -> f64 {
        let (a, b, d, e) = self.corners(img, c);
        let top = lerp(a, b, self.fx);
        let bottom = lerp(d, e, self.fx);
        lerp(top, bottom, self.fy)
    }

    /// Value and its analytic derivatives `(d/dx, d/dy)`.
    #[inline]
    pub(crate) fn value_and_gradient(&self, img: &Image, c: usize) -> (f64, f64, f64) {
        let (a, b, d, e) = self.corners(img, c);
        let top = lerp(a, b, self.fx);
        let bottom = lerp(d, e, self.fx);
        let value = lerp(top, bottom, self.fy);
        let gx = (b - a) * (1.0 - self.fy) + (e - d) * self.fy;
        let gy = bottom - top;
        // Degenerate single-pixel axes carry no gradient.
        let gx = if self.x0 == self.x1 { 0.0 } else { gx };
        let gy = if self.y0 == self.y1 { 0.0 } else { gy };
        (value, gx, gy)
    }
}

/// Bilinear sample of channel `c` at `(x, y)`; `None` outside the image.
pub fn bilinear_sample(img: &Image, x: f64, y: f64, c: usize) -> Option<f64> {
    Cell::locate(x, y, img.width, img.height).map(|cell| cell.value(img, c))
}

/// Bilinear sample with its analytic spatial gradient, `(value, d/dx, d/dy)`.
pub fn bilinear_sample_with_gradient(img: &Image, x: f64, y: f64, c: usize) -> Option<(f64, f64, f64)> {
    Cell::locate(x, y, img.width, img.height).map(|cell| cell.value_and_gradient(img, c))
}
