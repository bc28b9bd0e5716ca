//! Edge-aware gradient map.
//!
//! Sobel gradients are split into weak and strong edges by how far the local
//! variance of the gradient magnitude departs from its neighbourhood average.
//! Weak edges are gated by a threshold on their mean magnitude, strong edges
//! are shrunk with a single-level Haar wavelet, and the two disjoint sets are
//! merged back into one non-negative map.

use crate::image::ImagePlane;
use crate::stats::{box_mean, local_stats};

/// Signed Sobel responses plus derived magnitude and orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: ImagePlane,
    pub gy: ImagePlane,
    pub magnitude: ImagePlane,
    /// `atan(gy / gx)` in degrees, folded into `(-90, 90]`.
    pub angle: ImagePlane,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.gx.width()
    }

    pub fn height(&self) -> usize {
        self.gx.height()
    }
}

/// Gradient direction in degrees, folded into `(-90, 90]`; a zero gradient has
/// angle 0 and a purely vertical one has angle 90.
pub fn gradient_angle(gx: f64, gy: f64) -> f64 {
    if gx == 0.0 && gy == 0.0 {
        return 0.0;
    }
    let a = gy.atan2(gx).to_degrees();
    if a > 90.0 {
        a - 180.0
    } else if a <= -90.0 {
        a + 180.0
    } else {
        a
    }
}

/// 3x3 Sobel gradients with replicate padding. `gx` grows to the right, `gy`
/// grows downwards.
pub fn compute_gradients(x: &ImagePlane) -> GradientField {
    let (w, h) = x.dims();
    let at = |cx: usize, cy: usize, dx: isize, dy: isize| {
        x.get_clamped(cx as isize + dx, cy as isize + dy)
    };
    let gx = ImagePlane::from_fn(w, h, |cx, cy| {
        (at(cx, cy, 1, -1) + 2.0 * at(cx, cy, 1, 0) + at(cx, cy, 1, 1))
            - (at(cx, cy, -1, -1) + 2.0 * at(cx, cy, -1, 0) + at(cx, cy, -1, 1))
    });
    let gy = ImagePlane::from_fn(w, h, |cx, cy| {
        (at(cx, cy, -1, 1) + 2.0 * at(cx, cy, 0, 1) + at(cx, cy, 1, 1))
            - (at(cx, cy, -1, -1) + 2.0 * at(cx, cy, 0, -1) + at(cx, cy, 1, -1))
    });
    let magnitude = gx.zip_map(&gy, |a, b| (a * a + b * b).sqrt());
    let angle = gx.zip_map(&gy, gradient_angle);
    GradientField {
        gx,
        gy,
        magnitude,
        angle,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeClassMap {
    pub labels: Vec<EdgeClass>,
    /// `|sigma / mean(sigma) - 1|` per pixel.
    pub rho: ImagePlane,
}

impl EdgeClassMap {
    pub fn label(&self, x: usize, y: usize) -> EdgeClass {
        self.labels[y * self.rho.width() + x]
    }

    pub fn count(&self, class: EdgeClass) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }
}

/// Deviation ratio `|v / m - 1|`; zero where the neighbourhood average is zero.
pub fn variance_deviation(local_var: f64, neighbourhood_mean: f64) -> f64 {
    if neighbourhood_mean > 0.0 {
        (local_var / neighbourhood_mean - 1.0).abs()
    } else {
        0.0
    }
}

/// Labels each pixel weak (`rho < threshold`) or strong, where `rho` compares
/// the local variance of the magnitude against the mean of those variances
/// over the same radius.
pub fn classify_edges(grad: &GradientField, radius: usize, threshold: f64) -> EdgeClassMap {
    let sigma = local_stats(&grad.magnitude, radius).variance;
    let sigma_mean = box_mean(&sigma, radius);
    let rho = sigma.zip_map(&sigma_mean, variance_deviation);
    let labels = rho
        .data()
        .iter()
        .map(|&r| {
            if r < threshold {
                EdgeClass::Weak
            } else {
                EdgeClass::Strong
            }
        })
        .collect();
    EdgeClassMap { labels, rho }
}

/// Merged, denoised gradient magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAwareGradient {
    pub gprime: ImagePlane,
    /// Magnitude at or below which weak-edge pixels were zeroed.
    pub weak_threshold: f64,
    /// Soft threshold applied to the Haar coefficients of strong edges.
    pub wavelet_threshold: f64,
}

impl EdgeAwareGradient {
    /// Wraps a precomputed map (e.g. an all-zero map to disable the
    /// adaptive-window pass).
    pub fn from_plane(gprime: ImagePlane) -> Self {
        Self {
            gprime,
            weak_threshold: 0.0,
            wavelet_threshold: 0.0,
        }
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.gprime.get(x, y) != 0.0
    }
}

/// Ratio of the weak-edge gate to the mean weak magnitude.
pub const WEAK_GATE: f64 = 1.0;

/// Weak pixels at or below `WEAK_GATE * mean(weak magnitudes)` are zeroed;
/// strong pixels take the Haar soft-thresholded magnitude, kept only above the weak gate.
pub fn denoise_gradients(grad: &GradientField, classes: &EdgeClassMap) -> EdgeAwareGradient {
    let mag = &grad.magnitude;
    assert_eq!(classes.labels.len(), mag.len(), "class map not aligned");

    let (sum, count) = mag
        .data()
        .iter()
        .zip(&classes.labels)
        .filter(|(_, &c)| c == EdgeClass::Weak)
        .fold((0.0, 0usize), |(s, n), (&m, _)| (s + m, n + 1));
    let weak_threshold = if count > 0 {
        WEAK_GATE * sum / count as f64
    } else {
        0.0
    };
    // relative slack so that a constant field is gated despite rounding in the mean
    let gate = weak_threshold * (1.0 + 1e-12);

    let (shrunk, wavelet_threshold) = haar::denoise(mag);

    let data = mag
        .data()
        .iter()
        .zip(shrunk.data())
        .zip(&classes.labels)
        .map(|((&m, &s), &c)| match c {
            EdgeClass::Weak if m > gate => m,
            EdgeClass::Weak => 0.0,
            // shrunk below the weak gate: indistinguishable from background texture
            EdgeClass::Strong if s > gate => s,
            EdgeClass::Strong => 0.0,
        })
        .collect();
    EdgeAwareGradient {
        gprime: ImagePlane::from_vec_unchecked(mag.width(), mag.height(), data),
        weak_threshold,
        wavelet_threshold,
    }
}

/// Gradients, classification and denoising in one call.
pub fn edge_aware_gradient(x: &ImagePlane, radius: usize, threshold: f64) -> EdgeAwareGradient {
    let grad = compute_gradients(x);
    let classes = classify_edges(&grad, radius, threshold);
    denoise_gradients(&grad, &classes)
}

pub mod haar {
    //! Single-level orthonormal 2-D Haar transform with soft thresholding.

    use crate::image::ImagePlane;

    /// Four subbands of a padded-to-even plane, each `(w+1)/2 x (h+1)/2`.
    #[derive(Debug, Clone)]
    pub struct Subbands {
        pub half_width: usize,
        pub half_height: usize,
        pub ll: Vec<f64>,
        pub hl: Vec<f64>,
        pub lh: Vec<f64>,
        pub hh: Vec<f64>,
    }

    pub fn forward(x: &ImagePlane) -> Subbands {
        let hw = x.width().div_ceil(2);
        let hh_ = x.height().div_ceil(2);
        let n = hw * hh_;
        let (mut ll, mut hl, mut lh, mut hh) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for by in 0..hh_ {
            for bx in 0..hw {
                let (x0, y0) = (2 * bx as isize, 2 * by as isize);
                let a = x.get_clamped(x0, y0);
                let b = x.get_clamped(x0 + 1, y0);
                let c = x.get_clamped(x0, y0 + 1);
                let d = x.get_clamped(x0 + 1, y0 + 1);
                let i = by * hw + bx;
                ll[i] = (a + b + c + d) / 2.0;
                hl[i] = (a - b + c - d) / 2.0;
                lh[i] = (a + b - c - d) / 2.0;
                hh[i] = (a - b - c + d) / 2.0;
            }
        }
        Subbands {
            half_width: hw,
            half_height: hh_,
            ll,
            hl,
            lh,
            hh,
        }
    }

    /// Inverse transform cropped to `width x height`.
    pub fn inverse(s: &Subbands, width: usize, height: usize) -> ImagePlane {
        let mut out = vec![0.0; width * height];
        for by in 0..s.half_height {
            for bx in 0..s.half_width {
                let i = by * s.half_width + bx;
                let (ll, hl, lh, hh) = (s.ll[i], s.hl[i], s.lh[i], s.hh[i]);
                let vals = [
                    (0, 0, (ll + hl + lh + hh) / 2.0),
                    (1, 0, (ll - hl + lh - hh) / 2.0),
                    (0, 1, (ll + hl - lh - hh) / 2.0),
                    (1, 1, (ll - hl - lh + hh) / 2.0),
                ];
                for (dx, dy, v) in vals {
                    let (x, y) = (2 * bx + dx, 2 * by + dy);
                    if x < width && y < height {
                        out[y * width + x] = v;
                    }
                }
            }
        }
        ImagePlane::from_vec_unchecked(width, height, out)
    }

    pub fn soft(v: f64, t: f64) -> f64 {
        v.signum() * (v.abs() - t).max(0.0)
    }

    pub fn median_abs(v: &[f64]) -> f64 {
        let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        a.sort_by(f64::total_cmp);
        let n = a.len();
        if n % 2 == 1 {
            a[n / 2]
        } else {
            0.5 * (a[n / 2 - 1] + a[n / 2])
        }
    }

    /// Universal threshold `sigma * sqrt(2 ln N)` with `sigma` estimated from
    /// the median absolute diagonal detail coefficient.
    pub fn universal_threshold(s: &Subbands, n: usize) -> f64 {
        let sigma = median_abs(&s.hh) / 0.6745;
        sigma * (2.0 * (n as f64).ln()).sqrt()
    }

    /// Soft-thresholds all four subbands with the universal threshold and
    /// reconstructs. Returns the result and the threshold used.
    ///
    /// The approximation band is shrunk too: a magnitude plane carries a
    /// positive noise floor that detail shrinkage alone would leave behind.
    pub fn denoise(x: &ImagePlane) -> (ImagePlane, f64) {
        let mut s = forward(x);
        let t = universal_threshold(&s, x.len());
        for band in [&mut s.ll, &mut s.hl, &mut s.lh, &mut s.hh] {
            band.iter_mut().for_each(|v| *v = soft(*v, t));
        }
        (inverse(&s, x.width(), x.height()), t)
    }
}
