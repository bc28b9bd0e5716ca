//! Oriented adaptive windows for noise suppression along edges.
//!
//! Each eligible edge pixel gets a rectangle whose normal follows the local
//! gradient and whose aspect ratio follows the balance of horizontal and
//! vertical gradient energy. The length `W` runs along the edge tangent and the
//! width `H` along the normal, so strong axis-aligned edges get long, thin
//! windows that average along the edge rather than across it. The rectangle
//! is refined from gradient sums over its own support until the aspect ratio
//! settles, then the pixel is replaced by a weighted average over it.

use crate::edge::{EdgeAwareGradient, GradientField};
use crate::image::ImagePlane;
use crate::par;

/// Stop refining once the aspect ratio moves less than this.
pub const TAU_TOLERANCE: f64 = 0.01;
/// Hard cap on refinement iterations.
pub const MAX_ITERATIONS: usize = 10;
const DENOM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveWindow {
    /// Pixel column and row.
    pub center: (usize, usize),
    /// Extent along the edge tangent, odd.
    pub length: usize,
    /// Extent along the normal, odd.
    pub width: usize,
    /// Normal direction in degrees.
    pub theta: f64,
    /// Aspect ratio driving `length = tau * r`.
    pub tau: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowedGradients {
    pub gbar_x: f64,
    pub gbar_y: f64,
    pub gtil_x: f64,
    pub gtil_y: f64,
}

/// In-window smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKernel {
    #[default]
    Gaussian,
    Median,
}

/// `|(a + 1) / (b + 1)|` with the denominator kept away from zero.
pub fn aspect_ratio(a: f64, b: f64) -> f64 {
    let mut den = b + 1.0;
    if den.abs() < DENOM_FLOOR {
        den = DENOM_FLOOR.copysign(den);
    }
    ((a + 1.0) / den).abs()
}

/// Odd `(length, width)` pairs in `[1, 5r]` whose area is within `2r` of
/// `r^2`, indexed by log aspect ratio.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    r: usize,
    shapes: Vec<(f64, usize, usize)>,
}

impl ShapeTable {
    pub fn new(r: usize) -> Self {
        assert!(r >= 1, "window coefficient must be at least 1");
        let max = if (5 * r) % 2 == 1 { 5 * r } else { 5 * r - 1 };
        let target = (r * r) as isize;
        let mut shapes = Vec::new();
        for l in (1..=max).step_by(2) {
            for w in (1..=max).step_by(2) {
                if ((l * w) as isize - target).unsigned_abs() <= 2 * r {
                    shapes.push(((l as f64 / w as f64).ln(), l, w));
                }
            }
        }
        Self { r, shapes }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn max_extent(&self) -> usize {
        self.shapes.iter().map(|s| s.1.max(s.2)).max().unwrap_or(1)
    }

    /// Quantizes the ideal window `length = tau * r`, `width = r^2 / length`
    /// to the admissible pair closest in aspect ratio.
    pub fn quantize(&self, tau: f64) -> (usize, usize) {
        let tau = tau.clamp(1e-6, 1e6);
        // length / width = tau^2
        let want = 2.0 * tau.ln();
        let r2 = (self.r * self.r) as isize;
        let mut best = (f64::INFINITY, usize::MAX, 0usize, 0usize);
        for &(la, l, w) in &self.shapes {
            let d = (la - want).abs();
            let area_err = ((l * w) as isize - r2).unsigned_abs();
            let better = d < best.0 - 1e-12
                || ((d - best.0).abs() <= 1e-12 && (area_err, l) < (best.1, best.2));
            if better {
                best = (d, area_err, l, w);
            }
        }
        (best.2, best.3)
    }
}

/// Initial window from the gradient at one pixel, or `None` when the pixel is
/// flat or its gradient is exactly vertical (`gx == 0`).
pub fn init_window(
    gx: f64,
    gy: f64,
    center: (usize, usize),
    shapes: &ShapeTable,
) -> Option<AdaptiveWindow> {
    if gx == 0.0 {
        return None;
    }
    let tau = aspect_ratio(gx, gy);
    let (length, width) = shapes.quantize(tau);
    Some(AdaptiveWindow {
        center,
        length,
        width,
        theta: (gy / gx).atan().to_degrees(),
        tau,
        iterations: 0,
    })
}

/// Unquantized initial extents `(tau * r, r^2 / (tau * r))`.
pub fn ideal_extents(tau: f64, r: usize) -> (f64, f64) {
    let l = tau * r as f64;
    (l, (r * r) as f64 / l)
}

/// Rotation and extents of one window.
struct Geometry {
    sin: f64,
    cos: f64,
    /// Half length and half width, padded by 1e-9 for the membership test.
    hu: f64,
    hv: f64,
    /// Half extents of the axis-aligned bounding box.
    ext_x: isize,
    ext_y: isize,
}

impl Geometry {
    fn of(win: &AdaptiveWindow) -> Self {
        let (sin, cos) = win.theta.to_radians().sin_cos();
        let hu = win.length as f64 / 2.0;
        let hv = win.width as f64 / 2.0;
        Self {
            sin,
            cos,
            hu: hu + 1e-9,
            hv: hv + 1e-9,
            ext_x: (hu * sin.abs() + hv * cos.abs()).floor() as isize,
            ext_y: (hu * cos.abs() + hv * sin.abs()).floor() as isize,
        }
    }

    /// Calls `f(dx, dy, u, v)` for every offset inside the rotated rectangle,
    /// where `(u, v)` are its tangent/normal coordinates.
    fn for_each_offset(&self, mut f: impl FnMut(isize, isize, f64, f64)) {
        let (s, c, hu, hv) = (self.sin, self.cos, self.hu, self.hv);
        let (lo_x, hi_x) = (-self.ext_x as f64, self.ext_x as f64);
        // Per row, each slab constraint bounds the column to an interval
        // linear in dy: centre `slope * dy`, half width `half`. Near-axis
        // directions leave the constraint to the bounding box. The padding
        // only admits extra candidates; the exact test below decides.
        const PAD: f64 = 1e-3;
        let slab = |num: f64, half: f64, k: f64| -> (f64, f64) {
            if k.abs() < 1e-6 {
                (0.0, f64::INFINITY)
            } else {
                (num / k, (half / k).abs() + PAD)
            }
        };
        let (slope_a, half_a) = slab(c, hu, s);
        let (slope_b, half_b) = slab(-s, hv, c);
        for dy in -self.ext_y..self.ext_y + 1 {
            let fy = dy as f64;
            let (ca, cb) = (fy * slope_a, fy * slope_b);
            let lo = (ca - half_a).max(cb - half_b).max(lo_x);
            let hi = (ca + half_a).min(cb + half_b).min(hi_x);
            if lo > hi {
                continue;
            }
            // truncation toward zero widened by one is a safe inclusive bound
            let x0 = lo as isize - 1;
            let x1 = hi as isize + 1;
            for dx in x0.max(-self.ext_x)..x1.min(self.ext_x) + 1 {
                let fx = dx as f64;
                let u = -fx * s + fy * c;
                let v = fx * c + fy * s;
                if u.abs() <= hu && v.abs() <= hv {
                    f(dx, dy, u, v);
                }
            }
        }
    }
}

/// Offsets `(dx, dy)` inside the rotated rectangle together with their
/// tangent/normal coordinates `(u, v)`.
pub fn window_offsets(win: &AdaptiveWindow) -> Vec<(isize, isize, f64, f64)> {
    let mut out = Vec::new();
    Geometry::of(win).for_each_offset(|dx, dy, u, v| out.push((dx, dy, u, v)));
    out
}

/// Signed and absolute gradient sums over the window, replicate-padded.
pub fn window_gradient_sums(grad: &GradientField, win: &AdaptiveWindow) -> WindowedGradients {
    let (cx, cy) = (win.center.0 as isize, win.center.1 as isize);
    let (w, h) = (grad.width() as isize, grad.height() as isize);
    let geo = Geometry::of(win);
    let (ex, ey) = (geo.ext_x, geo.ext_y);
    let mut s = WindowedGradients::default();
    let mut add = |gx: f64, gy: f64| {
        s.gbar_x += gx;
        s.gbar_y += gy;
        s.gtil_x += gx.abs();
        s.gtil_y += gy.abs();
    };
    if cx - ex >= 0 && cx + ex < w && cy - ey >= 0 && cy + ey < h {
        let (gxd, gyd) = (grad.gx.data(), grad.gy.data());
        let base = cy * w + cx;
        geo.for_each_offset(|dx, dy, _, _| {
            let i = (base + dy * w + dx) as usize;
            add(gxd[i], gyd[i]);
        });
    } else {
        geo.for_each_offset(|dx, dy, _, _| {
            add(
                grad.gx.get_clamped(cx + dx, cy + dy),
                grad.gy.get_clamped(cx + dx, cy + dy),
            );
        });
    }
    s
}

/// Normal direction from absolute sums, with the quadrant taken from the
/// signed sums (absolute sums alone cannot tell +45 from -45 degrees).
fn refined_theta(s: &WindowedGradients, previous: f64) -> f64 {
    if s.gtil_x == 0.0 && s.gtil_y == 0.0 {
        return previous;
    }
    let base = if s.gtil_x == 0.0 {
        90.0
    } else {
        (s.gtil_y / s.gtil_x).atan().to_degrees()
    };
    if s.gbar_x * s.gbar_y < 0.0 {
        -base
    } else {
        base
    }
}

/// One refinement step: new aspect from the signed sums, new direction from
/// the absolute sums.
pub fn refine_step(
    win: &AdaptiveWindow,
    grad: &GradientField,
    shapes: &ShapeTable,
) -> AdaptiveWindow {
    let s = window_gradient_sums(grad, win);
    let tau = aspect_ratio(s.gbar_x, s.gbar_y);
    let (length, width) = shapes.quantize(tau);
    AdaptiveWindow {
        center: win.center,
        length,
        width,
        theta: refined_theta(&s, win.theta),
        tau,
        iterations: win.iterations + 1,
    }
}

/// Iterates [`refine_step`] until the aspect ratio changes by less than
/// [`TAU_TOLERANCE`] or [`MAX_ITERATIONS`] steps have run.
///
/// A step depends only on the previous window, so once a window repeats the
/// sequence is periodic and never settles; the state at the iteration cap is
/// then read off the cycle instead of being recomputed.
pub fn refine_window(
    win: &AdaptiveWindow,
    grad: &GradientField,
    shapes: &ShapeTable,
) -> AdaptiveWindow {
    let mut cur = AdaptiveWindow {
        iterations: 0,
        ..*win
    };
    let mut seen: Vec<AdaptiveWindow> = Vec::with_capacity(MAX_ITERATIONS);
    for _ in 0..MAX_ITERATIONS {
        let next = refine_step(&cur, grad, shapes);
        let settled = (next.tau - cur.tau).abs() < TAU_TOLERANCE;
        cur = next;
        if settled {
            break;
        }
        if let Some(j) = seen.iter().position(|h| same_state(h, &cur)) {
            let period = seen.len() - j;
            let first = seen[j].iterations;
            let at_cap = seen[j + (MAX_ITERATIONS - first) % period];
            return AdaptiveWindow {
                iterations: MAX_ITERATIONS,
                ..at_cap
            };
        }
        seen.push(cur);
    }
    cur
}

fn same_state(a: &AdaptiveWindow, b: &AdaptiveWindow) -> bool {
    a.length == b.length
        && a.width == b.width
        && a.theta.to_bits() == b.theta.to_bits()
        && a.tau.to_bits() == b.tau.to_bits()
}

/// Refined window for every eligible pixel (non-zero edge-aware gradient and
/// non-vertical gradient), `None` elsewhere. Row-major.
pub fn adaptive_windows(
    grad: &GradientField,
    gprime: &EdgeAwareGradient,
    r: usize,
) -> Vec<Option<AdaptiveWindow>> {
    let shapes = ShapeTable::new(r);
    let (w, h) = (grad.width(), grad.height());
    let rows = par::map_range(h, |y| {
        (0..w)
            .map(|x| {
                if !gprime.is_edge(x, y) {
                    return None;
                }
                init_window(grad.gx.get(x, y), grad.gy.get(x, y), (x, y), &shapes)
                    .map(|w0| refine_window(&w0, grad, &shapes))
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

/// Pixels and Gaussian weights of one window (`sigma = extent / 2` per axis).
pub fn window_weights(win: &AdaptiveWindow, plane: &ImagePlane) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for_each_weight(win, plane, |v, w| out.push((v, w)));
    out
}

fn for_each_weight(win: &AdaptiveWindow, plane: &ImagePlane, mut f: impl FnMut(f64, f64)) {
    let su = win.length as f64 / 2.0;
    let sv = win.width as f64 / 2.0;
    let (cx, cy) = (win.center.0 as isize, win.center.1 as isize);
    Geometry::of(win).for_each_offset(|dx, dy, u, v| {
        let wgt = (-(u * u) / (2.0 * su * su) - (v * v) / (2.0 * sv * sv)).exp();
        f(plane.get_clamped(cx + dx, cy + dy), wgt);
    });
}

fn apply_kernel(win: &AdaptiveWindow, plane: &ImagePlane, kernel: WindowKernel) -> f64 {
    match kernel {
        WindowKernel::Gaussian => {
            let (mut num, mut den) = (0.0, 0.0);
            for_each_weight(win, plane, |v, w| {
                num += v * w;
                den += w;
            });
            num / den
        }
        WindowKernel::Median => {
            let mut v: Vec<f64> = window_weights(win, plane)
                .into_iter()
                .map(|s| s.0)
                .collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        }
    }
}

/// Replaces every eligible edge pixel of `x` with the kernel response over its
/// adaptive window; other pixels pass through.
pub fn oriented_filter_with(
    x: &ImagePlane,
    grad: &GradientField,
    gprime: &EdgeAwareGradient,
    r: usize,
    kernel: WindowKernel,
) -> ImagePlane {
    x.assert_same_dims(&grad.gx);
    x.assert_same_dims(&gprime.gprime);
    let shapes = ShapeTable::new(r);
    let mut out = x.clone();
    out.fill_rows(|y, row| {
        for (cx, v) in row.iter_mut().enumerate() {
            if !gprime.is_edge(cx, y) {
                continue;
            }
            if let Some(w0) = init_window(grad.gx.get(cx, y), grad.gy.get(cx, y), (cx, y), &shapes)
            {
                let win = refine_window(&w0, grad, &shapes);
                *v = apply_kernel(&win, x, kernel);
            }
        }
    });
    out
}

/// Gaussian-kernel oriented filter.
pub fn oriented_filter(
    x: &ImagePlane,
    grad: &GradientField,
    gprime: &EdgeAwareGradient,
    r: usize,
) -> ImagePlane {
    oriented_filter_with(x, grad, gprime, r, WindowKernel::Gaussian)
}
