//! Raster data model: single-channel planes and RGB images of normalized
//! intensities.

use crate::error::{Error, Result};
use crate::par;

/// A single-channel raster of real intensities, stored row-major.
///
/// Intensities are nominally in `[0, 1]`, but intermediate planes (signed
/// gradients, linear coefficients) may leave that range. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Plane with every pixel equal to `value`.
    ///
    /// Panics if either dimension is zero or `value` is not finite.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "zero-sized plane");
        assert!(value.is_finite(), "non-finite fill value");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a plane by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> f64 + Sync + Send,
    ) -> Self {
        let mut out = Self::filled(width, height, 0.0);
        out.fill_rows(|y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = f(x, y);
            }
        });
        out.debug_check_finite();
        out
    }

    /// Internal constructor for planes whose values are finite by construction.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        let out = Self {
            width,
            height,
            data,
        };
        out.debug_check_finite();
        out
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with replicate padding for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub(crate) fn fill_rows(&mut self, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
        let width = self.width;
        par::fill_rows(&mut self.data, width, f);
    }

    /// Pixel-wise map.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let mut out = Self::filled(self.width, self.height, 0.0);
        out.fill_rows(|y, row| {
            for (o, &v) in row.iter_mut().zip(self.row(y)) {
                *o = f(v);
            }
        });
        out.debug_check_finite();
        out
    }

    /// Pixel-wise combination of two aligned planes.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        self.assert_same_dims(other);
        let mut out = Self::filled(self.width, self.height, 0.0);
        out.fill_rows(|y, row| {
            for ((o, &a), &b) in row.iter_mut().zip(self.row(y)).zip(other.row(y)) {
                *o = f(a, b);
            }
        });
        out.debug_check_finite();
        out
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::SizeMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    #[track_caller]
    pub(crate) fn assert_same_dims(&self, other: &Self) {
        assert!(
            self.same_dims(other),
            "plane size mismatch: {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
    }

    /// Global mean, summed in row-major order.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Population variance over all pixels.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    fn debug_check_finite(&self) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "plane produced non-finite values"
        );
    }
}

/// Three aligned planes holding the red, green, and blue channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub r: ImagePlane,
    pub g: ImagePlane,
    pub b: ImagePlane,
}

impl ColorImage {
    pub fn new(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> Result<Self> {
        r.check_same_dims(&g)?;
        r.check_same_dims(&b)?;
        Ok(Self { r, g, b })
    }

    /// Replicates one plane into all three channels.
    pub fn from_gray(plane: ImagePlane) -> Self {
        Self {
            r: plane.clone(),
            g: plane.clone(),
            b: plane,
        }
    }

    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn channels(&self) -> [&ImagePlane; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn map_channels(&self, f: impl Fn(&ImagePlane) -> ImagePlane) -> Self {
        Self {
            r: f(&self.r),
            g: f(&self.g),
            b: f(&self.b),
        }
    }

    /// True when all three channels are identical.
    pub fn is_gray(&self) -> bool {
        self.r == self.g && self.g == self.b
    }

    /// Mean of the three channels, used as luminance by the quality metrics.
    pub fn channel_mean(&self) -> ImagePlane {
        let rg = self.r.zip_map(&self.g, |a, b| a + b);
        rg.zip_map(&self.b, |s, b| (s + b) / 3.0)
    }

    pub fn min(&self) -> f64 {
        self.channels()
            .iter()
            .map(|p| p.min())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.channels()
            .iter()
            .map(|p| p.max())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp01(&self) -> Self {
        self.map_channels(ImagePlane::clamp01)
    }
}

/// Photographic negative, `1 - x`.
pub trait Invert {
    fn invert(&self) -> Self;
}

impl Invert for ImagePlane {
    fn invert(&self) -> Self {
        self.map(|v| 1.0 - v)
    }
}

impl Invert for ColorImage {
    fn invert(&self) -> Self {
        self.map_channels(Invert::invert)
    }
}

/// Free-function form of [`Invert::invert`].
pub fn invert<T: Invert>(x: &T) -> T {
    x.invert()
}

/// Per-pixel maximum over the three channels.
pub fn max_channel(img: &ColorImage) -> ImagePlane {
    let rg = img.r.zip_map(&img.g, f64::max);
    rg.zip_map(&img.b, f64::max)
}
