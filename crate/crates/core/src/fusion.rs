//! Exposure fusion, color reattachment, linear stretch and the end-to-end
//! enhancement and dehazing entry points.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::image::{invert, ColorImage, ImagePlane};
use crate::retinex::{compose_channels, luminance_pair, ComposedChannels};

/// Spread of the well-exposedness weight around mid-gray.
pub const EXPOSEDNESS_SIGMA: f64 = 0.2;
/// Added to every weight before normalization.
pub const WEIGHT_EPS: f64 = 1e-12;
/// Below this range the stretch is undefined and the input passes through.
pub const STRETCH_MIN_RANGE: f64 = 1e-12;

/// Aligned frames and their per-pixel normalized blending weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionStack {
    frames: Vec<ImagePlane>,
    weights: Vec<ImagePlane>,
}

impl FusionStack {
    pub fn new(frames: Vec<ImagePlane>) -> Result<Self> {
        let first = frames.first().ok_or(Error::InvalidParam {
            name: "frames",
            reason: "at least one frame is required".to_owned(),
        })?;
        for f in &frames[1..] {
            first.check_same_dims(f)?;
        }
        let weights = fusion_weights(&frames);
        Ok(Self { frames, weights })
    }

    pub fn frames(&self) -> &[ImagePlane] {
        &self.frames
    }

    pub fn weights(&self) -> &[ImagePlane] {
        &self.weights
    }
}

/// 4-neighbour Laplacian with replicated borders.
pub fn laplacian(x: &ImagePlane) -> ImagePlane {
    ImagePlane::from_fn(x.width(), x.height(), |i, j| {
        let (i, j) = (i as isize, j as isize);
        x.get_clamped(i - 1, j)
            + x.get_clamped(i + 1, j)
            + x.get_clamped(i, j - 1)
            + x.get_clamped(i, j + 1)
            - 4.0 * x.get_clamped(i, j)
    })
}

/// `|laplacian| * exp(-(x - 0.5)^2 / (2 sigma^2))` per frame, normalized so
/// the weights at every pixel sum to one.
pub fn fusion_weights(frames: &[ImagePlane]) -> Vec<ImagePlane> {
    let two_s2 = 2.0 * EXPOSEDNESS_SIGMA * EXPOSEDNESS_SIGMA;
    let raw: Vec<ImagePlane> = frames
        .iter()
        .map(|f| {
            laplacian(f).zip_map(f, |c, v| {
                (c.abs() + WEIGHT_EPS) * (-(v - 0.5).powi(2) / two_s2).exp()
            })
        })
        .collect();
    let (w, h) = frames[0].dims();
    let total = ImagePlane::from_fn(w, h, |x, y| raw.iter().map(|r| r.get(x, y)).sum());
    raw.iter()
        .map(|r| r.zip_map(&total, |a, t| a / t))
        .collect()
}

/// Pyramid depth used for an image whose smaller side is `min_dim`.
pub fn pyramid_depth(min_dim: usize) -> usize {
    let log2 = usize::BITS - 1 - min_dim.max(1).leading_zeros();
    (log2 as usize).saturating_sub(1).max(1)
}

const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Blur with the 5-tap binomial kernel and keep every other sample.
pub fn reduce(x: &ImagePlane) -> ImagePlane {
    let (w, h) = x.dims();
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let rows = ImagePlane::from_fn(nw, h, |i, j| {
        let c = 2 * i as isize;
        TAPS.iter()
            .enumerate()
            .map(|(k, t)| t * x.get_clamped(c + k as isize - 2, j as isize))
            .sum()
    });
    ImagePlane::from_fn(nw, nh, |i, j| {
        let c = 2 * j as isize;
        TAPS.iter()
            .enumerate()
            .map(|(k, t)| t * rows.get_clamped(i as isize, c + k as isize - 2))
            .sum()
    })
}

/// Upsampling interpolation matching [`reduce`]: even samples take
/// `(1, 6, 1) / 8` of the coarse neighbours, odd ones the mean of two.
fn expand_1d(get: impl Fn(isize) -> f64, i: usize) -> f64 {
    let k = (i / 2) as isize;
    if i.is_multiple_of(2) {
        (get(k - 1) + 6.0 * get(k) + get(k + 1)) / 8.0
    } else {
        (get(k) + get(k + 1)) / 2.0
    }
}

/// Upsamples `x` to `width x height`.
pub fn expand(x: &ImagePlane, width: usize, height: usize) -> ImagePlane {
    let last_x = x.width() as isize - 1;
    let last_y = x.height() as isize - 1;
    let rows = ImagePlane::from_fn(width, x.height(), |i, j| {
        expand_1d(|k| x.get(k.clamp(0, last_x) as usize, j), i)
    });
    ImagePlane::from_fn(width, height, |i, j| {
        expand_1d(|k| rows.get(i, k.clamp(0, last_y) as usize), j)
    })
}

pub fn gaussian_pyramid(x: &ImagePlane, depth: usize) -> Vec<ImagePlane> {
    let mut levels = vec![x.clone()];
    for _ in 1..depth {
        let next = reduce(levels.last().unwrap());
        levels.push(next);
    }
    levels
}

/// Band-pass levels plus the coarsest Gaussian level as the last entry.
pub fn laplacian_pyramid(x: &ImagePlane, depth: usize) -> Vec<ImagePlane> {
    let g = gaussian_pyramid(x, depth);
    let mut out: Vec<ImagePlane> = g
        .windows(2)
        .map(|pair| {
            let (w, h) = pair[0].dims();
            pair[0].zip_map(&expand(&pair[1], w, h), |a, b| a - b)
        })
        .collect();
    out.push(g.last().unwrap().clone());
    out
}

pub fn collapse(pyramid: &[ImagePlane]) -> ImagePlane {
    let mut acc = pyramid.last().unwrap().clone();
    for level in pyramid.iter().rev().skip(1) {
        let (w, h) = level.dims();
        acc = expand(&acc, w, h).zip_map(level, |a, b| a + b);
    }
    acc
}

/// Pyramid blend of the stack with its weights at the given depth.
pub fn fuse_with_depth(stack: &FusionStack, depth: usize) -> ImagePlane {
    let mut blended: Option<Vec<ImagePlane>> = None;
    for (frame, weight) in stack.frames.iter().zip(&stack.weights) {
        let lap = laplacian_pyramid(frame, depth);
        let gw = gaussian_pyramid(weight, depth);
        let terms: Vec<ImagePlane> = lap
            .iter()
            .zip(&gw)
            .map(|(l, g)| l.zip_map(g, |a, b| a * b))
            .collect();
        blended = Some(match blended {
            None => terms,
            Some(acc) => acc
                .iter()
                .zip(&terms)
                .map(|(a, t)| a.zip_map(t, |x, y| x + y))
                .collect(),
        });
    }
    collapse(&blended.unwrap()).clamp01()
}

/// Multi-resolution exposure fusion, clamped to `[0, 1]`.
pub fn exposure_fusion(stack: &FusionStack) -> ImagePlane {
    let (w, h) = stack.frames[0].dims();
    fuse_with_depth(stack, pyramid_depth(w.min(h)))
}

/// Per-channel ratios that carry the original chroma onto a new luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorFactor {
    pub r: ImagePlane,
    pub g: ImagePlane,
    pub b: ImagePlane,
}

impl ColorFactor {
    /// `q^c / (L + tau)` per channel; identically one for grayscale input.
    pub fn new(original: &ColorImage, l: &ImagePlane, tau_r: f64) -> Self {
        if original.is_gray() {
            let one = ImagePlane::filled(l.width(), l.height(), 1.0);
            return Self {
                r: one.clone(),
                g: one.clone(),
                b: one,
            };
        }
        let f = |c: &ImagePlane| c.zip_map(l, |q, l| q / (l + tau_r));
        Self {
            r: f(&original.r),
            g: f(&original.g),
            b: f(&original.b),
        }
    }
}

pub fn recolor(
    fused: &ImagePlane,
    original: &ColorImage,
    l: &ImagePlane,
    tau_r: f64,
) -> ColorImage {
    let cf = ColorFactor::new(original, l, tau_r);
    let apply = |c: &ImagePlane| fused.zip_map(c, |f, c| (f * c).clamp(0.0, 1.0));
    ColorImage {
        r: apply(&cf.r),
        g: apply(&cf.g),
        b: apply(&cf.b),
    }
}

/// Stretch result; `degenerate` is set when the input range was empty and
/// the image was passed through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Stretched<T> {
    pub image: T,
    pub degenerate: bool,
}

fn stretch_range(lo: f64, hi: f64) -> Option<(f64, f64)> {
    (hi - lo >= STRETCH_MIN_RANGE).then_some((lo, hi - lo))
}

pub fn linear_stretch_plane(x: &ImagePlane) -> Stretched<ImagePlane> {
    match stretch_range(x.min(), x.max()) {
        Some((lo, span)) => Stretched {
            image: x.map(|v| (v - lo) / span),
            degenerate: false,
        },
        None => Stretched {
            image: x.clone(),
            degenerate: true,
        },
    }
}

/// `(x - min) / (max - min)` with one min and max shared by all channels.
pub fn linear_stretch(x: &ColorImage) -> Stretched<ColorImage> {
    match stretch_range(x.min(), x.max()) {
        Some((lo, span)) => Stretched {
            image: x.map_channels(|c| c.map(|v| (v - lo) / span)),
            degenerate: false,
        },
        None => Stretched {
            image: x.clone(),
            degenerate: true,
        },
    }
}

/// Every stage of one enhancement run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceStages {
    pub channels: ComposedChannels,
    pub fused: ImagePlane,
    pub recolored: ColorImage,
    pub output: Stretched<ColorImage>,
}

pub fn enhance_stages(img: &ColorImage, config: &PipelineConfig) -> Result<EnhanceStages> {
    config.validate()?;
    let channels = compose_channels(img, &config.filter, &config.correction);
    let (l, _) = luminance_pair(img);
    let stack = FusionStack::new(vec![channels.qf.clone(), channels.qr.clone(), l.clone()])?;
    let fused = exposure_fusion(&stack);
    let recolored = recolor(&fused, img, &l, config.correction.tau_r);
    let output = linear_stretch(&recolored);
    Ok(EnhanceStages {
        channels,
        fused,
        recolored,
        output,
    })
}

/// Low-light enhancement with simultaneous denoising.
pub fn enhance(img: &ColorImage, config: &PipelineConfig) -> Result<ColorImage> {
    Ok(enhance_stages(img, config)?.output.image)
}

/// Single-plane form of [`enhance`].
pub fn enhance_plane(x: &ImagePlane, config: &PipelineConfig) -> Result<ImagePlane> {
    Ok(enhance(&ColorImage::from_gray(x.clone()), config)?.r)
}

/// Haze removal: a hazy image is treated as the negative of a low-light one.
pub fn dehaze(img: &ColorImage, config: &PipelineConfig) -> Result<ColorImage> {
    Ok(invert(&enhance(&invert(img), config)?))
}
